"""Jacobi theta function of order k and the weighted norms of the Borel plane.

The theta series sum_p q^(-p(p-1)/2k) z^p converges for every z != 0 thanks to
the Gaussian decay of the coefficients.  All magnitudes are tracked in log
space so that evaluation stays finite far outside the unit disc, where the
function grows like exp((k/2) log^2|z| / log q).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "WeightParams",
    "theta",
    "theta_scaled",
    "theta_log_abs",
    "theta_zero_clearance",
    "theta_bound_margin",
    "e_norm",
    "expq_weight",
    "expq_norm",
]


@dataclass(frozen=True)
class WeightParams:
    """Parameters of the q-exponential weight on (tau, m) grids.

    delta shifts tau away from the origin (|tau + delta| >= 1 on admissible
    geometries) and rho is the disc radius the grid was built with.
    """

    k: int
    beta: float
    mu: float
    alpha: float
    rho: float
    delta: float
    q: float

    def __post_init__(self):
        if self.q <= 1.0:
            raise DomainError("weight requires q > 1")
        if self.mu <= 1.0:
            raise DomainError("weight requires mu > 1")


def _theta_window(q: float, k: int, log_abs_z: np.ndarray, tol: float):
    """Index window [p_lo, p_hi] outside of which theta terms are < tol * peak.

    The term log-magnitude f(p) = -p(p-1) ln q / (2k) + p ln|z| is a downward
    parabola peaking at p* = 1/2 + k ln|z| / ln q; a half width P with
    (ln q / 2k) P^2 > |ln tol| + margin bounds the discarded tail.
    """
    lnq = math.log(q)
    p_star = 0.5 + k * log_abs_z / lnq
    half = math.ceil(math.sqrt(2.0 * k * (abs(math.log(tol)) + 16.0) / lnq)) + 2
    p_lo = int(np.floor(np.min(p_star))) - half
    p_hi = int(np.ceil(np.max(p_star))) + half
    return p_lo, p_hi


def theta_scaled(z, q: float, k: int = 1, tol: float = 1e-12):
    """Evaluate theta as (scaled, log_scale) with theta = scaled * exp(log_scale).

    Vectorised over z.  The scaling keeps the partial sums O(1) even when the
    true value would overflow a double.
    """
    zs = np.asarray(z, dtype=complex)
    if np.any(zs == 0):
        raise DomainError("theta has an essential singularity at z = 0")
    if not np.all(np.isfinite(zs)):
        raise DomainError("theta requires finite arguments")
    scalar = zs.ndim == 0
    zs = np.atleast_1d(zs)
    log_abs = np.log(np.abs(zs))
    arg = np.angle(zs)
    lnq = math.log(q)

    p_lo, p_hi = _theta_window(q, k, log_abs, tol)
    p = np.arange(p_lo, p_hi + 1, dtype=float)
    # log-magnitude and phase of each term, per evaluation point
    logmag = (-p * (p - 1.0) * lnq / (2.0 * k))[None, :] + np.outer(log_abs, p)
    scale = logmag.max(axis=1)
    terms = np.exp(logmag - scale[:, None] + 1j * np.outer(arg, p))
    total = terms.sum(axis=1)
    if scalar:
        return complex(total[0]), float(scale[0])
    return total, scale


def theta(z, q: float, k: int = 1, tol: float = 1e-12):
    """Jacobi theta function of order k, sum over p of q^(-p(p-1)/2k) z^p."""
    scaled, log_scale = theta_scaled(z, q, k, tol)
    return scaled * np.exp(log_scale)


def theta_log_abs(z, q: float, k: int = 1, tol: float = 1e-12):
    """log |theta(z)|, finite for any z where the evaluation window suffices."""
    scaled, log_scale = theta_scaled(z, q, k, tol)
    return np.log(np.abs(scaled)) + log_scale


def theta_zero_clearance(z: complex, q: float, k: int = 1):
    """Distance data min_m |1 + z q^(m/k)| together with the minimising m.

    Only finitely many integers m can make the product small: q^(m/k)|z| must
    fall inside (0, 2), all other indices give |1 + z q^(m/k)| > 1.
    """
    az = abs(z)
    if az == 0:
        raise DomainError("clearance undefined at z = 0")
    lnq = math.log(q)
    m_hi = math.floor(k * math.log(2.0 / az) / lnq)
    m_lo = math.ceil(k * math.log(1e-3 / az) / lnq)
    best = 1.0
    best_m = None
    for m in range(min(m_lo, m_hi), m_hi + 1):
        val = abs(1.0 + z * q ** (m / k))
        if val < best:
            best = val
            best_m = m
    return best, best_m


def theta_bound_margin(z: complex, q: float, k: int, delta_clear: float,
                       tol: float = 1e-12):
    """Ratio |theta(z)| / (Delta exp((k/2) log^2|z|/log q) |z|^(1/2)).

    A positive value certifies the lower-bound shape for this z; the infimum
    over a sample of z estimates the constant C_{q,k}.  Requires the zero
    clearance |1 + z q^(m/k)| > Delta for all integers m.
    """
    if delta_clear <= 0:
        raise DomainError("Delta must be positive")
    clearance, worst_m = theta_zero_clearance(z, q, k)
    if clearance <= delta_clear:
        raise DomainError(
            f"certificate inapplicable: |1 + z q^(m/k)| = {clearance:.3e} <= "
            f"Delta at m = {worst_m}"
        )
    lnq = math.log(q)
    la = math.log(abs(z))
    log_den = math.log(delta_clear) + 0.5 * k * la * la / lnq + 0.5 * la
    return float(np.exp(theta_log_abs(z, q, k, tol) - log_den))


def e_norm(f, beta: float, mu: float, m_grid):
    """Grid estimator of the weighted sup norm sup (1+|m|)^mu e^(beta|m|) |f|."""
    m = np.asarray(m_grid, dtype=float)
    if m.size == 0:
        raise DomainError("empty m grid")
    vals = f(m) if callable(f) else np.asarray(f)
    weight = (1.0 + np.abs(m)) ** mu * np.exp(beta * np.abs(m))
    return float(np.max(weight * np.abs(vals)))


def expq_weight(tau, m_grid, params: WeightParams):
    """Weight array (1+|m|)^mu e^(beta|m|) exp(-(k/2) log^2|tau+delta|/log q - alpha log|tau+delta|).

    Broadcasts tau (any shape) against a trailing m axis.  The radial factor
    is normalised to 1 at tau = 0 (an equivalent norm): large admissible
    shifts delta would otherwise crush the whole weight by exp(-k log^2(delta)
    / 2 log q) and make update tolerances meaningless.
    """
    tau = np.asarray(tau, dtype=complex)
    m = np.asarray(m_grid, dtype=float)
    lnq = math.log(params.q)
    lt = np.log(np.abs(tau + params.delta))
    l0 = math.log(params.delta)
    tau_part = np.exp(-0.5 * params.k * (lt * lt - l0 * l0) / lnq
                      - params.alpha * (lt - l0))
    m_part = (1.0 + np.abs(m)) ** params.mu * np.exp(params.beta * np.abs(m))
    return tau_part[..., None] * m_part


def expq_norm(values, tau, m_grid, params: WeightParams):
    """Grid estimator of the Exp^q norm: sup of expq_weight * |values|.

    values has shape tau.shape + m_grid.shape.
    """
    vals = np.asarray(values)
    if vals.shape != np.shape(tau) + np.shape(m_grid):
        raise DomainError("values shape does not match (tau, m) grids")
    if vals.size == 0:
        return 0.0
    return float(np.max(expq_weight(tau, m_grid, params) * np.abs(vals)))
