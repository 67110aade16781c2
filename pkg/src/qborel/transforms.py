"""q-Laplace transform of order k, inverse Fourier transform and the two
convolution products.

The ray integral is computed in log-radius: with u = e^s e^(i gamma) the
integrand w(u)/Theta(u/T) decays at least exponentially in s on both sides of
its peak, so a uniform trapezoid rule in s converges superalgebraically.  The
bracket [s_min, s_max] is found by expanding outward until the integrand falls
below 1e-16 of its running peak.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, DomainError
from .special_functions import theta_scaled

__all__ = [
    "QuadratureSpec",
    "ray_admissibility",
    "q_laplace",
    "q_laplace_operational_check",
    "inverse_fourier",
    "fourier_tail_bound",
    "convolve",
    "convolve_weighted",
    "trapezoid_weights",
]

_FLOOR = 1e-16          # relative integrand floor for bracket expansion
_TAIL_RUN = 12          # consecutive sub-floor nodes ending the expansion
_MAX_NODES = 60000


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature controls shared by the transform and assembly layers."""

    nodes_per_decade: int = 48
    r_min: float | None = None
    r_max: float | None = None
    M: float = 40.0
    m_nodes: int = 801
    delta_admissible: float = 0.5
    r1: float | None = None

    @property
    def step(self) -> float:
        return math.log(10.0) / self.nodes_per_decade

    def m_grid(self) -> np.ndarray:
        if self.m_nodes < 3 or self.m_nodes % 2 == 0:
            raise DomainError("m_nodes must be an odd integer >= 3")
        return np.linspace(-self.M, self.M, self.m_nodes)


def trapezoid_weights(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        raise DomainError("grid needs at least two nodes")
    w = np.empty_like(grid)
    w[1:-1] = 0.5 * (grid[2:] - grid[:-2])
    w[0] = 0.5 * (grid[1] - grid[0])
    w[-1] = 0.5 * (grid[-1] - grid[-2])
    return w


def ray_admissibility(T: complex, gamma: float) -> tuple[float, float]:
    """min over r >= 0 of |1 + e^(i gamma) r / T| and the minimising radius."""
    if T == 0:
        raise DomainError("T = 0 is outside every admissible domain")
    psi = gamma - cmath.phase(T)
    c = math.cos(psi)
    if c >= 0.0:
        return 1.0, 0.0
    return abs(math.sin(psi)), -c * abs(T)


def _check_T(T: complex, gamma: float, quad: QuadratureSpec):
    dist, r_bad = ray_admissibility(T, gamma)
    if dist < quad.delta_admissible:
        raise DomainError(
            f"T={T:.6g} leaves R_(gamma,Delta): |1 + e^(i gamma) r / T| = "
            f"{dist:.3e} < Delta = {quad.delta_admissible} at radius r = {r_bad:.6g}"
        )
    if quad.r1 is not None and abs(T) > quad.r1:
        raise DomainError(f"|T| = {abs(T):.6g} exceeds the admissible radius r1 = {quad.r1:.6g}")


def _inv_theta(u: np.ndarray, T: complex, q: float, k: int) -> np.ndarray:
    scaled, log_scale = theta_scaled(u / T, q, k)
    with np.errstate(under="ignore"):
        return np.exp(-log_scale) / scaled


def _integrand(w, s: np.ndarray, T: complex, gamma: float, q: float, k: int):
    u = np.exp(s + 1j * gamma)
    with np.errstate(over="ignore", invalid="ignore"):
        return w(u) * _inv_theta(u, T, q, k)


def q_laplace(w, T: complex, gamma: float, q: float, k: int,
              quad: QuadratureSpec) -> tuple[complex, float]:
    """q-Laplace transform of order k of w along direction gamma at T.

    w is a callable of the complex ray variable.  Returns (value, error
    estimate); the estimate combines a stride-2 Richardson difference with the
    relative size of the end contributions.
    """
    _check_T(T, gamma, quad)
    h = quad.step
    s_center = math.log(abs(T))
    if quad.r_min is not None and quad.r_max is not None:
        n_lo = max(1, math.ceil((s_center - math.log(quad.r_min)) / h))
        n_hi = max(1, math.ceil((math.log(quad.r_max) - s_center) / h))
        s = s_center + h * np.arange(-n_lo, n_hi + 1)
        vals = _integrand(w, s, T, gamma, q, k)
    else:
        s, vals = _expand_bracket(w, T, gamma, q, k, h, s_center)
    tw = np.full(s.size, h)
    tw[0] = tw[-1] = 0.5 * h
    pref = k / math.log(q)
    value = pref * np.sum(tw * vals)
    coarse = pref * 2 * h * np.sum(vals[::2]) if s.size > 4 else value
    peak = float(np.max(np.abs(vals)))
    edge = max(abs(vals[0]), abs(vals[-1])) / peak if peak > 0 else 0.0
    err = abs(value - coarse) / 3.0 + edge * abs(value)
    return complex(value), float(err)


def _expand_bracket(w, T, gamma, q, k, h, s_center):
    chunk = 48
    s = s_center + h * np.arange(-chunk, chunk + 1)
    vals = _integrand(w, s, T, gamma, q, k)
    for side in (-1, +1):
        while True:
            mags = np.abs(vals)
            peak = mags.max()
            run = mags[:_TAIL_RUN] if side < 0 else mags[-_TAIL_RUN:]
            if peak > 0 and np.all(run < _FLOOR * peak):
                break
            if s.size > _MAX_NODES or abs(s[0 if side < 0 else -1]) > 600.0:
                raise DivergenceError(
                    "q-Laplace integrand does not decay within the node budget; "
                    "growth envelope violated at large radius"
                )
            if side < 0:
                s_new = s[0] - h * np.arange(chunk, 0, -1)
                vals = np.concatenate([_integrand(w, s_new, T, gamma, q, k), vals])
                s = np.concatenate([s_new, s])
            else:
                s_new = s[-1] + h * np.arange(1, chunk + 1)
                vals = np.concatenate([vals, _integrand(w, s_new, T, gamma, q, k)])
                s = np.concatenate([s, s_new])
    return s, vals


def q_laplace_operational_check(w, sigma: float, j: float, T: complex,
                                gamma: float, q: float, k: int,
                                quad: QuadratureSpec) -> tuple[complex, complex]:
    """Both sides of the dilation/multiplication rule of the q-Laplace transform.

    lhs = T^sigma (L w)(q^j T); rhs = L[z^sigma q^(-sigma(sigma-1)/2k) w(q^(j-sigma/k) z)](T).
    The two sides are computed by independent quadratures.
    """
    if sigma < 0 or j < 0:
        raise DomainError("the operational rule requires sigma >= 0 and j >= 0")
    qj = q ** j
    lhs = T ** sigma * q_laplace(w, qj * T, gamma, q, k, quad)[0]
    factor = q ** (-(sigma * (sigma - 1.0)) / (2.0 * k))
    shift = q ** (j - sigma / k)

    def g(z):
        return z ** sigma * factor * w(shift * z)

    rhs = q_laplace(g, T, gamma, q, k, quad)[0]
    return lhs, rhs


def inverse_fourier(f, z: complex, m_grid, beta: float | None = None) -> complex:
    """(2 pi)^(-1/2) integral of f(m) e^(i z m) dm by trapezoid on the grid."""
    m = np.asarray(m_grid, dtype=float)
    if beta is not None and abs(z.imag) >= beta:
        raise DomainError(f"|Im z| = {abs(z.imag):.3g} >= beta = {beta}: integral diverges")
    vals = f(m) if callable(f) else np.asarray(f)
    tw = trapezoid_weights(m)
    return complex(np.sum(tw * vals * np.exp(1j * z * m)) / math.sqrt(2.0 * math.pi))


def fourier_tail_bound(env_const: float, beta: float, mu: float, M: float, z: complex) -> float:
    """Bound on the discarded |m| > M mass for |f| <= env (1+|m|)^(-mu) e^(-beta|m|)."""
    rate = beta - abs(z.imag)
    if rate <= 0:
        return math.inf
    return 2.0 * env_const * (1.0 + M) ** (-mu) * math.exp(-rate * M) / rate / math.sqrt(2 * math.pi)


def _kernel_lookup(f, m_grid: np.ndarray) -> np.ndarray:
    """Matrix F[i, j] = f(m_i - m_j), exact gather for uniform grids."""
    m = np.asarray(m_grid, dtype=float)
    diff = m[:, None] - m[None, :]
    if callable(f):
        return f(diff)
    vals = np.asarray(f)
    if vals.shape != m.shape:
        raise DomainError("kernel samples must match the m grid")
    h = m[1] - m[0]
    if not np.allclose(np.diff(m), h, rtol=0, atol=1e-12 * abs(h)):
        raise DomainError("convolution requires a uniform m grid")
    idx = np.rint((diff - m[0]) / h).astype(int)
    on_grid = np.abs(m[0] + idx * h - diff) < 1e-9 * abs(h)
    inside = (idx >= 0) & (idx < m.size) & on_grid
    out = np.zeros_like(diff, dtype=vals.dtype)
    out[inside] = vals[idx[inside]]
    # off-lattice offsets (non-symmetric grids): linear interpolation, zero outside
    if not np.all(on_grid):
        rem = ~on_grid
        out[rem] = np.interp(diff[rem], m, vals.real, left=0.0, right=0.0)
        if np.iscomplexobj(vals):
            out[rem] = out[rem] + 1j * np.interp(diff[rem], m, vals.imag, left=0.0, right=0.0)
    return out


def convolve(f, g, m_grid) -> np.ndarray:
    """(f * g)(m) = (2 pi)^(-1/2) integral f(m - m1) g(m1) dm1 on the grid."""
    m = np.asarray(m_grid, dtype=float)
    gv = np.asarray(g(m) if callable(g) else g)
    if gv.shape != m.shape:
        raise DomainError("g samples must match the m grid")
    K = _kernel_lookup(f, m)
    tw = trapezoid_weights(m)
    return (K * tw[None, :]) @ gv / math.sqrt(2.0 * math.pi)


def convolve_weighted(b, h_poly, f, g, m_grid) -> np.ndarray:
    """Weighted product b(m) * integral f(m-m1) h(i m1) g(tau, m1) dm1.

    g has shape (n_tau, n_m); b is a callable or per-m samples; h_poly is a
    coefficient array (low to high) evaluated at i m1.  With b = (2 pi)^(-1/2)
    and h = [1] this reduces to convolve applied tau-slice by tau-slice.
    """
    m = np.asarray(m_grid, dtype=float)
    gv = np.asarray(g)
    if gv.ndim != 2 or gv.shape[1] != m.size:
        raise DomainError("g must be a (tau, m) grid matching m_grid")
    bv = np.asarray(b(m) if callable(b) else b)
    hv = np.polynomial.polynomial.polyval(1j * m, np.asarray(h_poly, dtype=complex))
    K = _kernel_lookup(f, m) * (hv * trapezoid_weights(m))[None, :]
    return (gv @ K.T) * bv[None, :]
