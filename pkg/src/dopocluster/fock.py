"""Truncated-Fock-space operator algebra.

Mode layouts, elementary mode operators, canonical states, tensor
composition, partial trace, and scalar functionals (expectation, fidelity,
purity, spectral functions of Hermitian operators).

Conventions
-----------
* A mode with cutoff ``c`` keeps Fock levels ``0 .. c-1`` (dimension ``c``).
* Quadratures: ``x = (a + a†)/√2``, ``p = (a − a†)/(i√2)`` (dimensionless,
  ħ = 1), so a coherent state |α⟩ with real α peaks at ⟨x⟩ = √2·α.
* States and operators are immutable after construction: matrices are stored
  with ``writeable = False`` and may be shared freely between workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import CutoffError, LayoutError, ValidationError

__all__ = [
    "ModeLayout",
    "QOperator",
    "DensityMatrix",
    "StateVector",
    "annihilation",
    "creation",
    "number_operator",
    "position_operator",
    "momentum_operator",
    "identity_operator",
    "fock_state",
    "vacuum_state",
    "coherent_state",
    "cat_state",
    "tensor",
    "partial_trace",
    "expectation",
    "fidelity_to_pure",
    "purity",
    "hermitian_function",
    "truncation_cutoff",
    "min_eigenvalue",
    "dump_matrix",
]

# Type-level invariant tolerances.
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8
MIN_EIG_TOL = -1e-8
NORM_TOL = 1e-10


# ---------------------------------------------------------------------------
# layouts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModeLayout:
    """Ordered list of bosonic modes, each with a Fock cutoff.

    The cutoff of a mode is the number of retained Fock levels (maximum
    photon number + 1); every cutoff must be at least 2.
    """

    cutoffs: tuple[int, ...]

    def __post_init__(self):
        cutoffs = tuple(int(c) for c in self.cutoffs)
        object.__setattr__(self, "cutoffs", cutoffs)
        if not cutoffs:
            raise LayoutError("a layout needs at least one mode")
        for c in cutoffs:
            if c < 2:
                raise LayoutError(f"every mode cutoff must be >= 2, got {c}")

    @classmethod
    def of(cls, *cutoffs: int) -> "ModeLayout":
        return cls(tuple(cutoffs))

    @property
    def n_modes(self) -> int:
        return len(self.cutoffs)

    @property
    def dim(self) -> int:
        return int(np.prod(self.cutoffs))

    def check_mode(self, mode_index: int) -> int:
        if not (0 <= mode_index < self.n_modes):
            raise LayoutError(
                f"mode index {mode_index} out of range for {self.n_modes} modes"
            )
        return int(mode_index)

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return "ModeLayout" + str(tuple(self.cutoffs))


def _freeze(matrix: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(matrix, dtype=np.complex128)
    out.setflags(write=False)
    return out


def _check_dim(layout: ModeLayout, matrix: np.ndarray, what: str) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise LayoutError(f"{what} must be a square matrix, got shape {matrix.shape}")
    if matrix.shape[0] != layout.dim:
        raise LayoutError(
            f"{what} dimension {matrix.shape[0]} does not match layout dimension {layout.dim}"
        )


def _same_layout(a: ModeLayout, b: ModeLayout, what: str) -> None:
    if a.cutoffs != b.cutoffs:
        raise LayoutError(f"layout mismatch in {what}: {a.cutoffs} vs {b.cutoffs}")


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


class QOperator:
    """A complex square matrix tagged with the ModeLayout it acts on."""

    __slots__ = ("layout", "matrix")

    def __init__(self, layout: ModeLayout, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.complex128)
        _check_dim(layout, matrix, "operator")
        self.layout = layout
        self.matrix = _freeze(matrix)

    # -- algebra ------------------------------------------------------------

    def _coerce(self, other, what: str) -> np.ndarray:
        if isinstance(other, QOperator):
            _same_layout(self.layout, other.layout, what)
            return other.matrix
        raise TypeError(f"cannot combine QOperator with {type(other).__name__}")

    def __add__(self, other) -> "QOperator":
        return QOperator(self.layout, self.matrix + self._coerce(other, "+"))

    def __sub__(self, other) -> "QOperator":
        return QOperator(self.layout, self.matrix - self._coerce(other, "-"))

    def __neg__(self) -> "QOperator":
        return QOperator(self.layout, -self.matrix)

    def __mul__(self, scalar) -> "QOperator":
        return QOperator(self.layout, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "QOperator":
        return QOperator(self.layout, self.matrix / complex(scalar))

    def __matmul__(self, other) -> "QOperator":
        return QOperator(self.layout, self.matrix @ self._coerce(other, "@"))

    def dag(self) -> "QOperator":
        return QOperator(self.layout, self.matrix.conj().T)

    # -- queries ------------------------------------------------------------

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def is_hermitian(self, tol: float = HERMITICITY_TOL) -> bool:
        return self.hermiticity_defect() <= tol

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return f"QOperator(dim={self.layout.dim}, modes={self.layout.cutoffs})"


def min_eigenvalue(matrix: np.ndarray, dense_threshold: int = 4096) -> float:
    """Smallest eigenvalue of a Hermitian matrix.

    Dense up to ``dense_threshold``; Lanczos (smallest-algebraic) above that,
    with a dense fallback if the iteration fails to converge. The dense path
    is the default for every dimension this package builds: density-matrix
    spectra cluster at zero, where Lanczos needs tens of thousands of
    iterations while a direct solve takes milliseconds.
    """
    n = matrix.shape[0]
    if n <= dense_threshold:
        return float(np.linalg.eigvalsh(matrix)[0])
    from scipy.sparse.linalg import ArpackNoConvergence, eigsh

    try:
        val = eigsh(
            matrix, k=1, which="SA", return_eigenvectors=False, maxiter=5000, tol=0
        )
        return float(val[0])
    except ArpackNoConvergence:  # pragma: no cover - rare
        return float(np.linalg.eigvalsh(matrix)[0])


class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite matrix on a ModeLayout.

    Construction validates the three invariants; the tolerances can be
    relaxed by the caller (the propagator constructs its outputs with its
    record-point tolerances) and are remembered so that derived objects
    (partial traces) inherit them.
    """

    __slots__ = ("layout", "matrix", "_tols")

    def __init__(
        self,
        layout: ModeLayout,
        matrix: np.ndarray,
        *,
        herm_tol: float = HERMITICITY_TOL,
        trace_tol: float = TRACE_TOL,
        min_eig_tol: float = MIN_EIG_TOL,
        validate: bool = True,
    ):
        matrix = np.asarray(matrix, dtype=np.complex128)
        _check_dim(layout, matrix, "density matrix")
        self.layout = layout
        self.matrix = _freeze(matrix)
        self._tols = (herm_tol, trace_tol, min_eig_tol)
        if validate:
            self._validate()

    def _validate(self) -> None:
        herm_tol, trace_tol, min_eig_tol = self._tols
        defect = float(np.max(np.abs(self.matrix - self.matrix.conj().T)))
        if defect > herm_tol:
            raise ValidationError(
                f"density matrix Hermiticity defect {defect:.3e} exceeds {herm_tol:.1e}"
            )
        tr = complex(np.trace(self.matrix))
        if abs(tr - 1.0) > trace_tol:
            raise ValidationError(
                f"density matrix trace {tr:.12g} deviates from 1 by more than {trace_tol:.1e}"
            )
        lo = min_eigenvalue(self.matrix)
        if lo < min_eig_tol:
            raise ValidationError(
                f"density matrix minimum eigenvalue {lo:.3e} below {min_eig_tol:.1e}"
            )

    def expect(self, op: QOperator) -> complex:
        return expectation(self, op)

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return f"DensityMatrix(dim={self.layout.dim}, modes={self.layout.cutoffs})"


@dataclass(eq=False)
class StateVector:
    """Normalized pure state on a ModeLayout.

    ``meta`` carries construction bookkeeping (e.g. the pre-normalization
    truncation leakage of a coherent state) and takes no part in any
    numerical contract.
    """

    layout: ModeLayout
    amplitudes: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.shape[0] != self.layout.dim:
            raise LayoutError(
                f"state dimension {amps.shape[0]} does not match layout dimension {self.layout.dim}"
            )
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > NORM_TOL:
            raise ValidationError(
                f"state vector norm {norm:.12g} deviates from 1 by more than {NORM_TOL:.1e}"
            )
        amps = np.ascontiguousarray(amps)
        amps.setflags(write=False)
        self.amplitudes = amps

    def density(self) -> DensityMatrix:
        return DensityMatrix(self.layout, np.outer(self.amplitudes, self.amplitudes.conj()))

    def overlap(self, other: "StateVector") -> complex:
        _same_layout(self.layout, other.layout, "overlap")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


# ---------------------------------------------------------------------------
# elementary operators
# ---------------------------------------------------------------------------


def _single_mode_annihilation(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff, dtype=float)), k=1).astype(np.complex128)


def _embed(layout: ModeLayout, mode_index: int, local: np.ndarray) -> np.ndarray:
    mats = [
        local if m == mode_index else np.eye(c, dtype=np.complex128)
        for m, c in enumerate(layout.cutoffs)
    ]
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def annihilation(layout: ModeLayout, mode_index: int) -> QOperator:
    """Annihilation operator on the selected mode (identity elsewhere):
    ⟨n−1|a|n⟩ = √n."""
    mode_index = layout.check_mode(mode_index)
    local = _single_mode_annihilation(layout.cutoffs[mode_index])
    return QOperator(layout, _embed(layout, mode_index, local))


def creation(layout: ModeLayout, mode_index: int) -> QOperator:
    return annihilation(layout, mode_index).dag()


def number_operator(layout: ModeLayout, mode_index: int) -> QOperator:
    mode_index = layout.check_mode(mode_index)
    local = np.diag(np.arange(layout.cutoffs[mode_index], dtype=float)).astype(
        np.complex128
    )
    return QOperator(layout, _embed(layout, mode_index, local))


def position_operator(layout: ModeLayout, mode_index: int) -> QOperator:
    """x = (a + a†)/√2."""
    a = annihilation(layout, mode_index)
    return QOperator(layout, (a.matrix + a.matrix.conj().T) / math.sqrt(2.0))


def momentum_operator(layout: ModeLayout, mode_index: int) -> QOperator:
    """p = (a − a†)/(i√2)."""
    a = annihilation(layout, mode_index)
    return QOperator(layout, (a.matrix - a.matrix.conj().T) / (1j * math.sqrt(2.0)))


def identity_operator(layout: ModeLayout) -> QOperator:
    return QOperator(layout, np.eye(layout.dim, dtype=np.complex128))


# ---------------------------------------------------------------------------
# canonical states
# ---------------------------------------------------------------------------


def truncation_cutoff(amplitude: complex) -> int:
    """Smallest per-mode cutoff admitted by the truncation rule
    ``cutoff ≥ |α|² + 5|α| + 4`` (keeps the Poisson tail below ~1e−6)."""
    a = abs(amplitude)
    return int(math.ceil(a * a + 5.0 * a + 4.0))


def _check_truncation(cutoff: int, amplitude: complex) -> None:
    need = abs(amplitude) ** 2 + 5.0 * abs(amplitude) + 4.0
    if cutoff < need:
        raise CutoffError(
            f"cutoff {cutoff} too small for amplitude |α| = {abs(amplitude):.4g}: "
            f"the truncation rule requires at least {int(math.ceil(need))}"
        )


def fock_state(layout: ModeLayout, occupations: Sequence[int]) -> StateVector:
    """Basis state |n₀, n₁, …⟩."""
    occs = list(occupations)
    if len(occs) != layout.n_modes:
        raise LayoutError(
            f"{len(occs)} occupation numbers given for {layout.n_modes} modes"
        )
    index = 0
    for n, c in zip(occs, layout.cutoffs):
        if not (0 <= n < c):
            raise LayoutError(f"occupation {n} out of range for cutoff {c}")
        index = index * c + n
    amps = np.zeros(layout.dim, dtype=np.complex128)
    amps[index] = 1.0
    return StateVector(layout, amps)


def vacuum_state(layout: ModeLayout) -> StateVector:
    return fock_state(layout, [0] * layout.n_modes)


def _coherent_column(cutoff: int, amplitude: complex) -> tuple[np.ndarray, float]:
    """Truncated coherent-state column and its pre-normalization leakage."""
    n = np.arange(cutoff)
    if amplitude == 0:
        col = np.zeros(cutoff, dtype=np.complex128)
        col[0] = 1.0
        return col, 0.0
    # log-domain magnitudes to stay finite at large n
    log_mag = -abs(amplitude) ** 2 / 2.0 + n * math.log(abs(amplitude)) - 0.5 * (
        np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, cutoff, dtype=float)))))
    )
    phase = np.exp(1j * n * np.angle(amplitude))
    col = np.exp(log_mag) * phase
    norm2 = float(np.sum(np.abs(col) ** 2))
    leakage = max(0.0, 1.0 - norm2)
    return col / math.sqrt(norm2), leakage


def _embed_column(layout: ModeLayout, mode_index: int, col: np.ndarray) -> np.ndarray:
    """Tensor a single-mode column into the full layout, vacuum elsewhere."""
    parts = []
    for m, c in enumerate(layout.cutoffs):
        if m == mode_index:
            parts.append(col)
        else:
            vac = np.zeros(c, dtype=np.complex128)
            vac[0] = 1.0
            parts.append(vac)
    amps = parts[0]
    for p in parts[1:]:
        amps = np.kron(amps, p)
    return amps


def coherent_state(
    layout: ModeLayout, mode_index: int, amplitude: complex
) -> StateVector:
    """Coherent state |α⟩ on the selected mode, vacuum on every other mode.

    Precondition: the selected mode's cutoff satisfies the truncation rule
    for |α|. The pre-normalization leakage (the lost Poisson tail) is stored
    under ``meta["pre_normalization_leakage"]``.
    """
    mode_index = layout.check_mode(mode_index)
    _check_truncation(layout.cutoffs[mode_index], amplitude)
    col, leakage = _coherent_column(layout.cutoffs[mode_index], amplitude)
    state = StateVector(layout, _embed_column(layout, mode_index, col))
    state.meta["pre_normalization_leakage"] = leakage
    return state


def cat_state(
    layout: ModeLayout, mode_index: int, amplitude: complex, sign: int
) -> StateVector:
    """Normalized (|α⟩ + sign·|−α⟩) on the selected mode, vacuum elsewhere.

    The normalization uses the exact coherent overlap ⟨−α|α⟩ = e^{−2|α|²}
    (evaluated on the truncated columns, whose inner product reproduces it to
    truncation accuracy under the same precondition as coherent_state).
    """
    if sign not in (+1, -1):
        raise ValidationError(f"cat sign must be +1 or -1, got {sign!r}")
    mode_index = layout.check_mode(mode_index)
    _check_truncation(layout.cutoffs[mode_index], amplitude)
    cutoff = layout.cutoffs[mode_index]
    plus, _ = _coherent_column(cutoff, amplitude)
    minus, _ = _coherent_column(cutoff, -amplitude)
    raw = plus + sign * minus
    norm = float(np.linalg.norm(raw))
    if norm < 1e-12:
        raise ValidationError(
            "cat state normalization degenerate (amplitude too small for sign −1)"
        )
    col = raw / norm
    return StateVector(layout, _embed_column(layout, mode_index, col))


# ---------------------------------------------------------------------------
# composition and reduction
# ---------------------------------------------------------------------------


def tensor(objects: Sequence):
    """Kronecker composition of a list of same-kind objects
    (all QOperator, all StateVector, or all DensityMatrix);
    the result's layout is the concatenation of the input layouts."""
    objs = list(objects)
    if not objs:
        raise ValidationError("tensor() needs at least one object")
    kinds = {type(o) for o in objs}
    if len(kinds) != 1:
        names = sorted(t.__name__ for t in kinds)
        raise TypeError(f"tensor() requires objects of one kind, got {names}")
    layout = ModeLayout(tuple(c for o in objs for c in o.layout.cutoffs))
    first = objs[0]
    if isinstance(first, QOperator):
        out = objs[0].matrix
        for o in objs[1:]:
            out = np.kron(out, o.matrix)
        return QOperator(layout, out)
    if isinstance(first, StateVector):
        out = objs[0].amplitudes
        for o in objs[1:]:
            out = np.kron(out, o.amplitudes)
        return StateVector(layout, out)
    if isinstance(first, DensityMatrix):
        out = objs[0].matrix
        for o in objs[1:]:
            out = np.kron(out, o.matrix)
        tols = objs[0]._tols
        return DensityMatrix(
            layout, out, herm_tol=tols[0], trace_tol=tols[1], min_eig_tol=tols[2]
        )
    raise TypeError(f"tensor() cannot compose {type(first).__name__}")


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Trace out every mode not listed in ``keep``; the output mode order
    follows the order given in ``keep``."""
    keep = [rho.layout.check_mode(k) for k in keep]
    if not keep:
        raise LayoutError("partial_trace requires a nonempty keep set")
    if len(set(keep)) != len(keep):
        raise LayoutError(f"duplicate mode indices in keep set {keep}")
    dims = rho.layout.cutoffs
    n = len(dims)
    traced = [m for m in range(n) if m not in keep]
    tensor_form = rho.matrix.reshape(*dims, *dims)
    remaining = n
    for ax in sorted(traced, reverse=True):
        tensor_form = np.trace(tensor_form, axis1=ax, axis2=ax + remaining)
        remaining -= 1
    kept_sorted = sorted(keep)
    if keep != kept_sorted:
        order = [kept_sorted.index(k) for k in keep]
        tensor_form = tensor_form.transpose(*order, *[len(keep) + o for o in order])
    out_layout = ModeLayout(tuple(dims[k] for k in keep))
    out = tensor_form.reshape(out_layout.dim, out_layout.dim)
    tols = rho._tols
    return DensityMatrix(
        out_layout, out, herm_tol=tols[0], trace_tol=tols[1], min_eig_tol=tols[2]
    )


# ---------------------------------------------------------------------------
# scalar functionals
# ---------------------------------------------------------------------------


def expectation(state, op: QOperator) -> complex:
    """Tr(ρ·O) for a DensityMatrix, or ⟨ψ|O|ψ⟩ for a StateVector."""
    if isinstance(state, StateVector):
        _same_layout(state.layout, op.layout, "expectation")
        return complex(np.vdot(state.amplitudes, op.matrix @ state.amplitudes))
    if isinstance(state, DensityMatrix):
        _same_layout(state.layout, op.layout, "expectation")
        return complex(np.einsum("ij,ji->", state.matrix, op.matrix))
    raise TypeError(f"expectation() takes a DensityMatrix or StateVector, got {type(state).__name__}")


def fidelity_to_pure(rho: DensityMatrix, psi: StateVector) -> float:
    """⟨ψ|ρ|ψ⟩ for a pure target."""
    _same_layout(rho.layout, psi.layout, "fidelity_to_pure")
    val = np.vdot(psi.amplitudes, rho.matrix @ psi.amplitudes)
    return float(val.real)


def purity(rho: DensityMatrix) -> float:
    """Tr(ρ²)."""
    return float(np.sum(np.abs(rho.matrix) ** 2))


def hermitian_function(op: QOperator, f: Callable) -> QOperator:
    """Apply a real scalar function to a Hermitian operator spectrally.

    The input is symmetrized ((M + M†)/2) when its Hermiticity defect is
    below 1e−10 and rejected otherwise; the output is exactly Hermitian.
    """
    defect = op.hermiticity_defect()
    if defect > HERMITICITY_TOL:
        raise ValidationError(
            f"hermitian_function requires a Hermitian operator; defect {defect:.3e} "
            f"exceeds {HERMITICITY_TOL:.1e}"
        )
    sym = (op.matrix + op.matrix.conj().T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    try:
        fvals = np.asarray(f(vals), dtype=float)
        if fvals.shape != vals.shape:
            raise TypeError
    except TypeError:
        fvals = np.array([float(f(v)) for v in vals])
    out = (vecs * fvals) @ vecs.conj().T
    out = (out + out.conj().T) / 2.0
    return QOperator(op.layout, out)


# ---------------------------------------------------------------------------
# debugging dump
# ---------------------------------------------------------------------------


def dump_matrix(obj, path) -> None:
    """Write a matrix as plain text, one row per line, entries as
    "re im" pairs separated by tabs. Debugging aid only; not load-bearing."""
    matrix = obj.matrix if hasattr(obj, "matrix") else np.asarray(obj)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in np.atleast_2d(matrix):
            fh.write(
                "\t".join(f"{v.real:.17g} {v.imag:.17g}" for v in row) + "\n"
            )
