"""Independent reference implementations used to pin test expectations.

Everything here is deliberately written from first principles with different
algorithms than the package (dense superoperator exponentials, position-grid
quadrature, closed-form overlaps) so agreement is meaningful.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln


# ---------------------------------------------------------------------------
# dense Liouvillian / exact propagation (row-major vec convention)
# ---------------------------------------------------------------------------


def liouvillian_matrix(h: np.ndarray, dissipators) -> np.ndarray:
    """Dense superoperator for dρ/dt = −i[H,ρ] + Σ r (LρL† − ½{L†L,ρ}),
    acting on row-major vec(ρ) = ρ.ravel(); vec(AρB) = (A ⊗ Bᵀ) vec(ρ)."""
    dim = h.shape[0]
    eye = np.eye(dim)
    out = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for l_op, rate in dissipators:
        ldl = l_op.conj().T @ l_op
        out += rate * (
            np.kron(l_op, l_op.conj())
            - 0.5 * np.kron(ldl, eye)
            - 0.5 * np.kron(eye, ldl.T)
        )
    return out


def expm_evolve(h: np.ndarray, dissipators, rho0: np.ndarray, t: float) -> np.ndarray:
    """Exact propagation via the matrix exponential of the superoperator."""
    dim = rho0.shape[0]
    sup = liouvillian_matrix(h, dissipators)
    return (expm(sup * t) @ rho0.ravel()).reshape(dim, dim)


def rhs_naive(h: np.ndarray, dissipators, rho: np.ndarray) -> np.ndarray:
    """Textbook right-hand side, no reuse between terms."""
    out = -1j * (h @ rho - rho @ h)
    for l_op, rate in dissipators:
        ldl = l_op.conj().T @ l_op
        out += rate * (
            l_op @ rho @ l_op.conj().T - 0.5 * (ldl @ rho + rho @ ldl)
        )
    return out


# ---------------------------------------------------------------------------
# elementary mode operators (duplicated on purpose)
# ---------------------------------------------------------------------------


def destroy(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff)), 1).astype(complex)


def coherent_column(amplitude: complex, cutoff: int) -> np.ndarray:
    """Normalized truncated coherent column (log-domain amplitudes)."""
    if amplitude == 0:
        col = np.zeros(cutoff, complex)
        col[0] = 1.0
        return col
    ns = np.arange(cutoff)
    col = np.exp(
        -abs(amplitude) ** 2 / 2
        + ns * np.log(abs(amplitude) + 0j)
        - 0.5 * gammaln(ns + 1)
    ) * np.exp(1j * ns * np.angle(amplitude))
    return col / np.linalg.norm(col)


def coherent_overlap(beta: complex, alpha: complex) -> complex:
    """⟨β|α⟩ for untruncated coherent states."""
    return complex(
        np.exp(
            -abs(alpha) ** 2 / 2
            - abs(beta) ** 2 / 2
            + np.conjugate(beta) * alpha
        )
    )


def cat_norm(amplitude: float, sign: int) -> float:
    """Normalization of |α⟩ + sign·|−α⟩."""
    return math.sqrt(2.0 * (1.0 + sign * math.exp(-2.0 * amplitude**2)))


# ---------------------------------------------------------------------------
# position-grid oracle for the two-level reduction of a single mode
# ---------------------------------------------------------------------------


def hermite_functions(nmax: int, xs: np.ndarray) -> np.ndarray:
    """φ_k(x) for k < nmax: orthonormal eigenfunctions of (a+a†)/√2."""
    out = np.zeros((nmax, len(xs)))
    out[0] = np.pi**-0.25 * np.exp(-(xs**2) / 2)
    if nmax > 1:
        out[1] = math.sqrt(2.0) * xs * out[0]
    for k in range(2, nmax):
        out[k] = (
            math.sqrt(2.0 / k) * xs * out[k - 1]
            - math.sqrt((k - 1) / k) * out[k - 2]
        )
    return out


def grid_spin_state(
    rho: np.ndarray, length: float, n_sub: int = 2048, m_range: int = 4
) -> np.ndarray:
    """2×2 reduction of a single-mode ρ by direct position-space quadrature:
    bin 2m is spin-up, bin 2m−1 spin-down, matrix elements pair displaced
    copies of the same within-bin offset."""
    n = rho.shape[0]
    xbar = (np.arange(n_sub) + 0.5) * (length / n_sub)
    dx = length / n_sub
    es = np.zeros((2, 2), complex)
    for m in range(-m_range, m_range + 1):
        x_up = xbar + length * (2 * m)
        x_dn = xbar + length * (2 * m - 1)
        phi_up = hermite_functions(n, x_up)
        phi_dn = hermite_functions(n, x_dn)
        es[0, 0] += np.einsum("kK,kx,Kx->", rho, phi_up, phi_up) * dx
        es[1, 1] += np.einsum("kK,kx,Kx->", rho, phi_dn, phi_dn) * dx
        es[0, 1] += np.einsum("kK,kx,Kx->", rho, phi_up, phi_dn) * dx
        es[1, 0] += np.einsum("kK,kx,Kx->", rho, phi_dn, phi_up) * dx
    return es


# ---------------------------------------------------------------------------
# small dense helpers
# ---------------------------------------------------------------------------


def kron_all(*mats: np.ndarray) -> np.ndarray:
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def random_density(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Full-rank random density matrix (Wishart construction)."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (g + g.conj().T)
