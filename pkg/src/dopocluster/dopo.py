"""Builders for degenerate parametric-oscillator networks.

A single oscillator is driven by a two-photon pump of strength S and damped
by two-photon loss at rate Γ_d; its bright steady manifold is spanned by the
coherent states ±α with α² = 2S/Γ_d. Networks couple neighboring
oscillators either dissipatively (collective single-photon loss) or
coherently through an exchange Hamiltonian whose energies on the ±α product
manifold realize an Ising pattern that pins the cluster-state sign
structure. A discrete-pump variant replaces the ideal two-photon drive with
a two-mode nonlinear interaction against a repeatedly refreshed pump mode.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .errors import CalibrationError, TruncationWarning, ValidationError
from .fock import (
    DensityMatrix,
    ModeLayout,
    QOperator,
    StateVector,
    _check_truncation,
    _coherent_column,
    annihilation,
    coherent_state,
    expectation,
    number_operator,
    truncation_cutoff,
    vacuum_state,
)
from .lindblad import (
    Dissipator,
    IntegratorConfig,
    LindbladModel,
    cycle_channel,
    evolve,
    stable_timestep,
)

__all__ = [
    "DopoParams",
    "steady_amplitude",
    "default_timestep",
    "chain_pairs",
    "two_photon_pump_h",
    "two_photon_loss",
    "single_photon_loss",
    "collective_loss",
    "coherent_ising_h",
    "nonlinear_pump_h",
    "ideal_cluster_state",
    "cat_plus_state",
    "pump_calibration",
    "fresh_pump_state",
    "nonlinear_window_timestep",
]


@dataclass(frozen=True)
class DopoParams:
    """Physical parameters of an oscillator chain.

    pump_strength S and two_photon_rate Γ_d set the steady amplitude
    α = i√(2S/Γ_d); ising_coupling g_c scales the coherent coupling;
    single_photon_rate Γ_s is the undesired linear loss; nonlinear_coupling
    g_nl only enters the discrete-pump variant. Rates are in units of Γ_d
    when Γ_d = 1 (the conventional normalization).
    """

    pump_strength: float = -1.0
    two_photon_rate: float = 1.0
    single_photon_rate: float = 0.0
    ising_coupling: float = 1.0
    nonlinear_coupling: float = 0.0
    n_modes: int = 2
    topology: str = "open-chain"

    def __post_init__(self):
        if self.two_photon_rate <= 0:
            raise ValidationError(
                f"two_photon_rate must be > 0, got {self.two_photon_rate}"
            )
        for name in ("single_photon_rate", "nonlinear_coupling"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.ising_coupling <= 0:
            raise ValidationError(
                f"ising_coupling must be > 0, got {self.ising_coupling}"
            )
        if int(self.n_modes) < 1:
            raise ValidationError(f"n_modes must be >= 1, got {self.n_modes}")
        object.__setattr__(self, "n_modes", int(self.n_modes))
        if self.topology != "open-chain":
            raise ValidationError(
                f"unsupported topology {self.topology!r}; only 'open-chain' is available"
            )

    @property
    def amplitude(self) -> complex:
        return steady_amplitude(self.pump_strength, self.two_photon_rate)


def steady_amplitude(pump_strength: float, two_photon_rate: float) -> complex:
    """Steady coherent amplitude i√(2S/Γ_d) (principal branch).

    Negative S (the convention used throughout) lands on the real axis:
    S = −1, Γ_d = 1 gives −√2.
    """
    if two_photon_rate <= 0:
        raise ValidationError(f"two_photon_rate must be > 0, got {two_photon_rate}")
    return 1j * complex(np.sqrt(complex(2.0 * pump_strength / two_photon_rate)))


def default_timestep(params: DopoParams) -> float:
    """Accuracy-motivated step: min(1e−2/Γ_d, 5e−2/g_c, 5e−2/|S|, 5e−2/g_nl)
    over the rates that are actually nonzero. Combine with the integrator's
    stability cap via stable_timestep."""
    candidates = [1e-2 / params.two_photon_rate]
    if params.ising_coupling > 0:
        candidates.append(5e-2 / params.ising_coupling)
    if params.pump_strength != 0:
        candidates.append(5e-2 / abs(params.pump_strength))
    if params.nonlinear_coupling > 0:
        candidates.append(5e-2 / params.nonlinear_coupling)
    return min(candidates)


def chain_pairs(n_modes: int) -> tuple:
    """Nearest-neighbor pairs of the open chain."""
    return tuple((i, i + 1) for i in range(n_modes - 1))


def _resolve_modes(layout: ModeLayout, modes) -> tuple:
    if modes is None:
        return tuple(range(layout.n_modes))
    return tuple(layout.check_mode(m) for m in modes)


def _resolve_pairs(layout: ModeLayout, pairs) -> tuple:
    if pairs is None:
        pairs = chain_pairs(layout.n_modes)
    out = []
    for i, j in pairs:
        i, j = layout.check_mode(i), layout.check_mode(j)
        if i == j:
            raise ValidationError(f"pair ({i}, {j}) couples a mode to itself")
        out.append((i, j))
    return tuple(out)


# ---------------------------------------------------------------------------
# Hamiltonians and dissipators
# ---------------------------------------------------------------------------


def two_photon_pump_h(
    layout: ModeLayout, pump_strength: float, modes: Sequence[int] | None = None
) -> QOperator:
    """Degenerate two-photon drive −iS Σ_m [(a_m†)² − a_m²].

    The matrix element between |0⟩ and |2⟩ of one mode is −iS√2.
    """
    modes = _resolve_modes(layout, modes)
    h = np.zeros((layout.dim, layout.dim), dtype=np.complex128)
    for m in modes:
        a = annihilation(layout, m).matrix
        a2 = a @ a
        h += -1j * pump_strength * (a2.conj().T - a2)
    return QOperator(layout, h)


def two_photon_loss(
    layout: ModeLayout, rate: float, modes: Sequence[int] | None = None
) -> tuple:
    """Two-photon decay channels a_m² at the given rate (empty at rate 0)."""
    if rate < 0:
        raise ValidationError(f"rate must be >= 0, got {rate}")
    if rate == 0:
        return ()
    modes = _resolve_modes(layout, modes)
    out = []
    for m in modes:
        a = annihilation(layout, m)
        out.append(Dissipator(a @ a, rate))
    return tuple(out)


def single_photon_loss(
    layout: ModeLayout, rate: float, modes: Sequence[int] | None = None
) -> tuple:
    """Linear decay channels a_m at the given rate (empty at rate 0)."""
    if rate < 0:
        raise ValidationError(f"rate must be >= 0, got {rate}")
    if rate == 0:
        return ()
    modes = _resolve_modes(layout, modes)
    return tuple(Dissipator(annihilation(layout, m), rate) for m in modes)


def collective_loss(layout: ModeLayout, rate: float, pairs=None) -> tuple:
    """Pairwise collective decay channels a_i + a_j on neighboring modes.

    The two-mode singlet (|01⟩ − |10⟩)/√2 is dark under this channel while
    the symmetric combination decays at twice the single-mode rate.
    """
    if rate < 0:
        raise ValidationError(f"rate must be >= 0, got {rate}")
    if rate == 0:
        return ()
    pairs = _resolve_pairs(layout, pairs)
    out = []
    for i, j in pairs:
        out.append(Dissipator(annihilation(layout, i) + annihilation(layout, j), rate))
    return tuple(out)


def coherent_ising_h(
    layout: ModeLayout, amplitude: complex, coupling: float, pairs=None
) -> QOperator:
    """Coherent neighbor coupling whose ±α-manifold energies follow
    (g_c/4)(s_i + s_{i+1} − s_i s_{i+1}) on each pair.

    H = (g_c/(8 a_r)) Σ_pairs [ a_i† + a_j† − (1/a_r) a_i a_j† + h.c. ]

    with a_r = |amplitude|. On the product state ⊗|s_m a_r⟩ the linear terms
    contribute (g_c/4)(s_i + s_j) and the exchange term −(g_c/4) s_i s_j, so
    the four sign patterns on a pair sit at (1, 1, 1, −3)·g_c/4: the all-down
    pattern is the unique low-energy outlier, which pins its phase relative
    to the other three during the coupled evolution.
    """
    mag = abs(amplitude)
    if mag < 1e-6:
        raise ValidationError(
            f"coupling amplitude magnitude {mag:.3g} too small (needs >= 1e-6)"
        )
    pairs = _resolve_pairs(layout, pairs)
    pref = coupling / (8.0 * mag)
    h = np.zeros((layout.dim, layout.dim), dtype=np.complex128)
    for i, j in pairs:
        ai = annihilation(layout, i).matrix
        aj = annihilation(layout, j).matrix
        term = ai.conj().T + aj.conj().T - (ai @ aj.conj().T) / mag
        h += pref * (term + term.conj().T)
    return QOperator(layout, h)


def nonlinear_pump_h(
    layout: ModeLayout, coupling: float, signal_mode: int = 0, pump_mode: int = 1
) -> QOperator:
    """Two-mode down-conversion g_nl (a² b† + a†² b) between a signal mode a
    and a pump mode b."""
    signal_mode = layout.check_mode(signal_mode)
    pump_mode = layout.check_mode(pump_mode)
    if signal_mode == pump_mode:
        raise ValidationError("signal and pump must be different modes")
    a = annihilation(layout, signal_mode).matrix
    b = annihilation(layout, pump_mode).matrix
    a2 = a @ a
    term = coupling * (a2 @ b.conj().T)
    return QOperator(layout, term + term.conj().T)


# ---------------------------------------------------------------------------
# reference states
# ---------------------------------------------------------------------------


def _sign_weight(signs: Sequence[int]) -> float:
    w = 1.0
    for s_i, s_j in zip(signs, signs[1:]):
        if s_i < 0 and s_j < 0:
            w = -w
    return w


def ideal_cluster_state(layout: ModeLayout, amplitude: complex) -> StateVector:
    """Normalized Σ_s w(s) ⊗_m |s_m α⟩ over all sign patterns s ∈ {±1}^N,
    with w(s) = Π_pairs (−1)^{[s_i<0][s_j<0]} on the open chain and α = |amplitude|.

    For two modes the four components carry signs (+, +, +, −). Requires
    |amplitude| ≥ 1e−3 (below that the component overlap matrix is singular
    to machine precision) and per-mode cutoffs obeying the truncation rule.
    """
    mag = abs(amplitude)
    if mag < 1e-3:
        raise ValueError(
            f"cluster amplitude magnitude {mag:.3g} too small (needs >= 1e-3)"
        )
    for c in layout.cutoffs:
        _check_truncation(c, mag)
    columns = {}
    for c in set(layout.cutoffs):
        plus, _ = _coherent_column(c, mag)
        minus, _ = _coherent_column(c, -mag)
        columns[c] = {+1: plus, -1: minus}
    amps = np.zeros(layout.dim, dtype=np.complex128)
    for signs in product((+1, -1), repeat=layout.n_modes):
        part = columns[layout.cutoffs[0]][signs[0]]
        for m in range(1, layout.n_modes):
            part = np.kron(part, columns[layout.cutoffs[m]][signs[m]])
        amps = amps + _sign_weight(signs) * part
    norm = float(np.linalg.norm(amps))
    if norm < 1e-12:
        raise ValueError("cluster state normalization degenerate")
    state = StateVector(layout, amps / norm)
    state.meta["amplitude"] = mag
    return state


def cat_plus_state(layout: ModeLayout, mode_index: int, amplitude: complex) -> StateVector:
    """Even cat (|α⟩ + |−α⟩)/norm on one mode with α = |amplitude|, vacuum
    elsewhere — the lossless single-oscillator steady state."""
    from .fock import cat_state

    return cat_state(layout, mode_index, abs(amplitude), +1)


# ---------------------------------------------------------------------------
# discrete-pump calibration
# ---------------------------------------------------------------------------


def nonlinear_window_timestep(model: LindbladModel, nonlinear_coupling: float) -> float:
    """Timestep for one discrete pump window.

    The window Hamiltonian is maximally stiff (purely imaginary spectrum of
    magnitude ~nonlinear_coupling × cutoff^{3/2}), and the state recorded at
    the end of every window must stay positive to the record tolerance. The
    generic accuracy rule and stability cap leave the integrator at a point
    where its truncation error shows up as spurious negative eigenvalues of
    order 1e−4, so the window rule refines the capped step by 8× (measured:
    the spurious negativity drops below 1e−7).
    """
    if nonlinear_coupling <= 0:
        raise ValidationError(
            f"nonlinear_coupling must be > 0, got {nonlinear_coupling}"
        )
    return stable_timestep(model, 5e-2 / nonlinear_coupling) / 8.0


def fresh_pump_state(cutoff: int, amplitude: complex) -> DensityMatrix:
    """The transient pump ancilla attached each cycle: a coherent state
    truncated at the (deliberately coarse) pump cutoff and renormalized.

    The strict truncation rule is intentionally not applied here — the
    renormalized truncated state is part of the protocol definition, and the
    calibration loop compensates for the clipped Poisson tail. Leakage above
    10% triggers a truncation warning.
    """
    layout = ModeLayout.of(cutoff)
    col, leakage = _coherent_column(cutoff, amplitude)
    if leakage > 0.1:
        warnings.warn(
            f"fresh pump state at cutoff {cutoff} clips {leakage:.1%} of the "
            f"coherent tail for |amplitude| = {abs(amplitude):.3g}",
            TruncationWarning,
            stacklevel=2,
        )
    state = StateVector(layout, col.copy())
    state.meta["pre_normalization_leakage"] = leakage
    return state.density()


def _steady_mean_photons(
    pump_magnitude: float,
    nonlinear_coupling: float,
    loss_rate: float,
    cycle_time: float,
    signal_cutoff: int,
    pump_cutoff: int,
    max_cycles: int,
) -> tuple[float, int]:
    """Iterate fresh-pump cycles from vacuum until the signal photon number
    settles (|Δ⟨n⟩| < 1e−3 with at least 5 cycles). Returns (⟨n⟩, cycles)."""
    signal = ModeLayout.of(signal_cutoff)
    joint = ModeLayout.of(signal_cutoff, pump_cutoff)
    h = nonlinear_pump_h(joint, nonlinear_coupling, 0, 1)
    # linear loss acts on the signal AND the transient pump during the window
    dissipators = single_photon_loss(joint, loss_rate)
    model = LindbladModel(joint, h, dissipators)
    dt = nonlinear_window_timestep(model, nonlinear_coupling)
    config = IntegratorConfig(dt=dt, record_every=10**9)
    fresh = fresh_pump_state(pump_cutoff, 1j * pump_magnitude)
    n_op = number_operator(signal, 0)
    rho = vacuum_state(signal).density()
    previous = expectation(rho, n_op).real
    for cycle in range(1, max_cycles + 1):
        rho = cycle_channel(rho, fresh, model, cycle_time, keep=(0,), config=config)
        current = expectation(rho, n_op).real
        if cycle >= 5 and abs(current - previous) < 1e-3:
            return current, cycle
        previous = current
    raise CalibrationError(
        f"photon number did not settle within {max_cycles} cycles "
        f"at pump magnitude {pump_magnitude:.6g}",
        scan=[{"pump_magnitude": pump_magnitude, "mean_photons": previous, "cycles": max_cycles}],
    )


def pump_calibration(
    target_amplitude: complex,
    nonlinear_coupling: float,
    loss_rate: float,
    cycle_time: float,
    tolerance: float = 0.02,
    max_pump: float = 4.0,
    max_cycles: int = 200,
) -> tuple[complex, float]:
    """Find the fresh-pump amplitude whose cyclic steady state carries the
    target signal photon number |target_amplitude|².

    Bisection over the pump magnitude in [0, max_pump] against the settled
    ⟨a†a⟩, stopping when |⟨n⟩ − |target|²| ≤ tolerance. Returns the pump
    amplitude on the +i axis (matching the steady-amplitude phase convention)
    and the achieved photon number. Raises a calibration error carrying the
    scan record when the bracket does not contain the target or the iteration
    does not settle.
    """
    if nonlinear_coupling <= 0:
        raise ValidationError(
            f"nonlinear_coupling must be > 0, got {nonlinear_coupling}"
        )
    if cycle_time <= 0:
        raise ValidationError(f"cycle_time must be > 0, got {cycle_time}")
    if loss_rate < 0:
        raise ValidationError(f"loss_rate must be >= 0, got {loss_rate}")
    target_n = abs(target_amplitude) ** 2
    if target_n == 0:
        return 0j, 0.0
    signal_cutoff = truncation_cutoff(target_amplitude)
    pump_cutoff = 8
    scan = []

    def settled(mag: float) -> float:
        value, cycles = _steady_mean_photons(
            mag,
            nonlinear_coupling,
            loss_rate,
            cycle_time,
            signal_cutoff,
            pump_cutoff,
            max_cycles,
        )
        scan.append({"pump_magnitude": mag, "mean_photons": value, "cycles": cycles})
        return value

    lo, hi = 0.0, float(max_pump)
    mag = achieved = None
    for _ in range(60):
        mag = 0.5 * (lo + hi)
        achieved = settled(mag)
        if abs(achieved - target_n) <= tolerance:
            break
        if achieved < target_n:
            lo = mag
        else:
            hi = mag
        if hi - lo < 1e-9:
            raise CalibrationError(
                f"bisection on [0, {max_pump:g}] collapsed at pump magnitude "
                f"{mag:.6g} with ⟨n⟩ = {achieved:.4g} vs target {target_n:.4g} "
                "(target outside the bracket or tolerance too tight)",
                scan=scan,
            )
    else:  # pragma: no cover - 60 halvings always collapse the interval first
        raise CalibrationError("bisection iteration limit reached", scan=scan)

    # Re-check at the cutoff the rule assigns to the found amplitude; the
    # floor of 8 already covers small amplitudes, so this only triggers for
    # strong pumps.
    verify_cutoff = max(8, truncation_cutoff(mag))
    if verify_cutoff != pump_cutoff:
        verified, cycles = _steady_mean_photons(
            mag,
            nonlinear_coupling,
            loss_rate,
            cycle_time,
            signal_cutoff,
            verify_cutoff,
            max_cycles,
        )
        scan.append(
            {"pump_magnitude": mag, "mean_photons": verified, "cycles": cycles}
        )
        if abs(verified - target_n) > 2.0 * tolerance:
            raise CalibrationError(
                f"calibrated pump magnitude {mag:.6g} fails verification at "
                f"cutoff {verify_cutoff}: ⟨n⟩ = {verified:.4g} vs target {target_n:.4g}",
                scan=scan,
            )
        achieved = verified
    return 1j * mag, float(achieved)
