"""Assembly of the logarithmic solution from the Borel-plane fixed point.

u(t, z, eps) = u_0 + u_1 log(eps t)/log q with each component the q-Laplace
transform (along the grid direction) and inverse Fourier transform of its
Borel density.  The component integrals reuse the solver ladder: the stored
principal line is log-uniform, so the radial quadrature is a plain trapezoid
over stored nodes with the theta kernel evaluated in scaled log space.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .borel_solver import BorelFunction, BorelGrid, SolverContext
from .errors import DomainError
from .geometry import admissible_r1
from .problem_model import ProblemSpec, polyval_im
from .special_functions import theta_scaled
from .transforms import ray_admissibility, trapezoid_weights

__all__ = [
    "LogSolution",
    "monodromy",
    "monodromy_components",
    "residual_borel",
    "residual_physical",
    "solution_difference",
]


def _inv_theta(u_over_T: np.ndarray, q: float, k: int) -> np.ndarray:
    scaled, log_scale = theta_scaled(u_over_T, q, k)
    with np.errstate(under="ignore", over="ignore"):
        out = np.exp(-log_scale) / scaled
    return np.where(np.isfinite(out), out, 0.0)


@dataclass
class LogSolution:
    """Evaluable pair (u_0, u_1) attached to one Borel direction."""

    spec: ProblemSpec
    grid: BorelGrid
    w0: BorelFunction
    w1: BorelFunction
    eps: complex
    Delta: float = 0.5
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def direction(self) -> float:
        return self.grid.direction

    @property
    def r1(self) -> float:
        return admissible_r1(self.spec.q, self.spec.k, self.spec.alpha)

    def _check_T(self, T: complex):
        if T == 0:
            raise DomainError("eps * t = 0 is outside the evaluation domain")
        dist, r_bad = ray_admissibility(T, self.direction)
        if dist < self.Delta:
            raise DomainError(
                f"eps*t = {T:.6g} comes within {dist:.3e} of the theta zero set "
                f"(offending radius r = {r_bad:.6g}, need Delta = {self.Delta})")
        if abs(T) > self.r1:
            raise DomainError(
                f"|eps*t| = {abs(T):.4g} exceeds the admissible radius r1 = {self.r1:.4g}")

    def _laplace_all_m(self, w: BorelFunction, T: complex) -> np.ndarray:
        """q-Laplace of w(., m) at T along the principal line, for every m."""
        grid = self.grid
        rows = grid.principal_rows()
        tau = grid.tau[rows]
        kern = _inv_theta(tau / T, self.spec.q, self.spec.k)
        h = self.spec.lnq / grid.N
        tw = np.full(tau.size, h)
        tw[0] = tw[-1] = 0.5 * h
        vals = w.values[rows]
        return (self.spec.k / self.spec.lnq) * ((tw * kern) @ vals)

    def _tail_integral(self, w: BorelFunction, T: complex, g_arc: int) -> np.ndarray:
        """q-Laplace restricted to the ray part r >= rho q^(g_arc/N).

        Far above the kernel peak the integrand chirps faster than the stored
        ladder resolves, so the tail is integrated on Gauss-Legendre panels
        sized to the local oscillation rate, with the smooth density
        interpolated along the line by a 6-point stencil.
        """
        spec, grid = self.spec, self.grid
        ln = grid.lines[0]
        rows = grid.principal_rows()
        vals = w.values[rows]
        h = spec.lnq / grid.N
        s0 = math.log(grid.radius_of_rung(g_arc))
        s_lattice_top = math.log(grid.radius_of_rung(ln.g_hi))
        a = 0.5 * spec.k / spec.lnq
        x0 = s0 - math.log(abs(T))
        length = math.sqrt(x0 * x0 + 45.0 / a) - x0
        s_end = min(s0 + length, s_lattice_top - 3.0 * h)
        if s_end <= s0:
            return np.zeros(grid.m.size, dtype=complex)
        rate = 2.0 * a * math.sqrt(x0 * x0 + 45.0 / a) + 1.0
        width = min(2.0 * math.pi / rate, 1.0 / math.sqrt(2.0 * a), s_end - s0)
        panels = max(4, math.ceil((s_end - s0) / width))
        gl_x, gl_w = np.polynomial.legendre.leggauss(8)
        edges = np.linspace(s0, s_end, panels + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        s = (mid[:, None] + half[:, None] * gl_x[None, :]).ravel()
        wq = (half[:, None] * gl_w[None, :]).ravel()
        # 6-point Lagrange interpolation of the density in log radius
        base = np.floor((s - s0) / h).astype(int) + (g_arc - ln.g_lo) - 2
        base = np.clip(base, 0, ln.size - 6)
        s_base = math.log(grid.radius_of_rung(ln.g_lo)) + base * h
        xi = (s - s_base) / h
        dens = np.zeros((s.size, grid.m.size), dtype=complex)
        offs = np.arange(6)
        for jj in range(6):
            lag = np.ones(s.size)
            for kk in range(6):
                if kk != jj:
                    lag *= (xi - kk) / (jj - kk)
            dens += lag[:, None] * vals[base + jj]
        u = np.exp(s + 1j * grid.direction)
        kern = _inv_theta(u / T, spec.q, spec.k)
        return (spec.k / spec.lnq) * ((wq * kern) @ dens)

    def component(self, j: int, t: complex, z: complex,
                  multiplier=None) -> complex:
        """u_j(t, z, eps), optionally with a polynomial of d/dz applied.

        The multiplier acts as the Fourier factor poly(i m) inside the
        m-integral.
        """
        if j not in (0, 1):
            raise DomainError("component index must be 0 or 1")
        if abs(complex(z).imag) > self.spec.beta_prime:
            raise DomainError(
                f"|Im z| = {abs(complex(z).imag):.4g} leaves the strip "
                f"beta' = {self.spec.beta_prime}")
        mkey = None if multiplier is None else tuple(np.asarray(multiplier, dtype=complex))
        key = (j, complex(t), complex(z), mkey)
        if key in self._cache:
            return self._cache[key]
        T = self.eps * complex(t)
        self._check_T(T)
        w = self.w0 if j == 0 else self.w1
        lap = self._laplace_all_m(w, T)
        m = self.grid.m
        integrand = lap * np.exp(1j * complex(z) * m)
        if multiplier is not None:
            integrand = integrand * polyval_im(multiplier, m)
        val = complex(np.sum(trapezoid_weights(m) * integrand) / math.sqrt(2 * math.pi))
        self._cache[key] = val
        return val

    def evaluate(self, t: complex, z: complex) -> complex:
        """u_0 + u_1 log(eps t)/log q with the principal branch of the log."""
        T = self.eps * complex(t)
        if abs(math.remainder(cmath.phase(T) - math.pi, 2 * math.pi)) < 1e-9:
            raise DomainError("eps * t lies on the branch cut (-inf, 0]")
        u0 = self.component(0, t, z)
        u1 = self.component(1, t, z)
        return u0 + u1 * cmath.log(T) / self.spec.lnq


def monodromy_components(u0val: complex, u1val: complex, q: float):
    """Action of the formal monodromy on the component pair:
    (u_0, u_1) -> (u_0 + (2 pi i / log q) u_1, u_1)."""
    return u0val + 2j * math.pi / math.log(q) * u1val, u1val


def monodromy(u0val: complex, u1val: complex, q: float):
    return monodromy_components(u0val, u1val, q)


def residual_borel(w0: BorelFunction, w1: BorelFunction, spec: ProblemSpec,
                   eps: complex) -> float:
    """Weighted norm of the defect of the two convolution equations,
    assembled in un-divided form Q(im) omega_j - RHS_j."""
    ctx = SolverContext(spec, w0.grid, eps)
    r0, r1 = ctx.undivided_residual(w0, w1)
    return max(r0.norm(spec), r1.norm(spec))


def _coeff_value(sym, z: complex, m: np.ndarray, eps: complex) -> complex:
    vals = sym(m, eps)
    tw = trapezoid_weights(m)
    return complex(np.sum(tw * vals * np.exp(1j * z * m)) / math.sqrt(2 * math.pi))


def _forcing_value(spec: ProblemSpec, h: int, t: complex, z: complex,
                   eps: complex, m: np.ndarray) -> complex:
    total = 0.0 + 0.0j
    T = eps * t
    for p, sym in spec.forcing.powers(h).items():
        F = _coeff_value(sym, z, m, eps)
        total += F * (spec.q ** (1.0 / spec.k)) ** (p * (p - 1) / 2.0) * T ** p
    return total


def residual_physical(sol: LogSolution, spec: ProblemSpec, points) -> float:
    """Max defect of the two split equations over (t, z) points.

    d/dz acts as the Fourier multiplier inside the component integrals;
    dilations re-evaluate the components at q^r t.  All dilated points must
    stay inside the admissible domain.
    """
    eps = sol.eps
    m = sol.grid.m
    qdk = spec.q ** (spec.dD / spec.k)
    worst = 0.0
    for (t, z) in points:
        t, z = complex(t), complex(z)
        u0 = sol.component(0, t, z)
        u1 = sol.component(1, t, z)
        lhs0 = sol.component(0, t, z, multiplier=spec.Q)
        lhs1 = sol.component(1, t, z, multiplier=spec.Q)
        rhs0 = (eps * t) ** spec.dD * (
            sol.component(0, qdk * t, z, multiplier=spec.RD)
            + (spec.dD / spec.k) * sol.component(1, qdk * t, z, multiplier=spec.RD))
        rhs1 = (eps * t) ** spec.dD * sol.component(1, qdk * t, z, multiplier=spec.RD)
        for term in spec.terms:
            c_val = _coeff_value(term.C, z, m, eps)
            qd = spec.q ** float(term.delta)
            pref = eps ** term.Delta * t ** term.d * c_val
            r0 = sol.component(0, qd * t, z, multiplier=term.R)
            r1 = sol.component(1, qd * t, z, multiplier=term.R)
            rhs0 += pref * (r0 + float(term.delta) * r1)
            rhs1 += pref * r1
        rhs0 += _forcing_value(spec, 0, t, z, eps, m)
        rhs1 += _forcing_value(spec, 1, t, z, eps, m)
        b = {jk: _coeff_value(sym, z, m, eps) for jk, sym in spec.coeffs.b.items()}
        rhs0 += b[(0, 0)] * u0 + b[(1, 0)] * u1
        rhs1 += b[(0, 1)] * u0 + b[(1, 1)] * u1
        worst = max(worst, abs(lhs0 - rhs0), abs(lhs1 - rhs1))
    return worst


def _arc_values(w: BorelFunction, g_arc: int) -> tuple[np.ndarray, np.ndarray]:
    """Ring samples at rung g_arc: (angles, values (n_angles, n_m))."""
    grid = w.grid
    angs, vals = [], []
    for i in grid.ring_line_indices():
        ln = grid.lines[i]
        if not (ln.g_lo <= g_arc <= ln.g_hi):
            raise DomainError("arc rung outside the stored ring depth")
        rows = grid.line_rows(i)
        angs.append(ln.angle)
        vals.append(w.values[rows][g_arc - ln.g_lo])
    order = np.argsort(angs)
    return np.asarray(angs)[order], np.asarray(vals)[order]


def solution_difference(sol_a: LogSolution, sol_b: LogSolution, j: int,
                        t: complex, z: complex) -> complex:
    """u_{j,b} - u_{j,a} evaluated by contour deformation.

    The two Borel densities coincide on the shared disc, so the difference is
    the pair of ray tails beyond the arc radius plus the arc integral at that
    radius.  Each piece is exponentially small in log^2|eps t|; computing them
    directly preserves relative accuracy long after a plain subtraction of the
    two evaluations would drown in cancellation noise.
    """
    if sol_a.grid.N != sol_b.grid.N or sol_a.grid.rho != sol_b.grid.rho:
        raise DomainError("solutions must share the ladder geometry")
    spec = sol_a.spec
    eps = sol_a.eps
    T = eps * complex(t)
    sol_a._check_T(T)
    sol_b._check_T(T)
    d_a, d_b = sol_a.direction, sol_b.direction
    grid = sol_a.grid
    g_arc = math.floor(grid.N * math.log(0.5) / spec.lnq)  # rung nearest rho/2

    # kernel zeros inside the wedge drive the difference and are welcome, but
    # none may sit on the arc circle itself: check the radial phase of the
    # zero lattice |T| q^(m/k) against the arc radius
    zero_dir = math.remainder(cmath.phase(-T), 2 * math.pi)
    lo, hi = min(d_a, d_b), max(d_a, d_b)
    in_wedge = any(lo <= zero_dir + 2 * math.pi * s <= hi for s in (-1, 0, 1))
    if in_wedge:
        frac = (math.log(grid.radius_of_rung(g_arc) / abs(T)) * spec.k / spec.lnq) % 1.0
        if min(frac, 1.0 - frac) < 0.1:
            raise DomainError(
                "arc radius passes within 10% of a kernel zero ring; "
                "perturb |eps t| to move the zero lattice")
    m = grid.m
    twm = trapezoid_weights(m)
    wa = sol_a.w1 if j else sol_a.w0
    wb = sol_b.w1 if j else sol_b.w0

    tail_b = sol_b._tail_integral(wb, T, g_arc)
    tail_a = sol_a._tail_integral(wa, T, g_arc)

    r_arc = grid.radius_of_rung(g_arc)
    if d_a == d_b:
        arc = np.zeros(m.size, dtype=complex)
    else:
        angs, vals = _arc_values(wa, g_arc)
        n_ang = angs.size
        # omega is a power series in tau, so only nonnegative angular
        # frequencies appear on the ring; n uniform samples pin the first n
        # coefficients
        coeffs = np.fft.fft(vals, axis=0) / n_ang
        freqs = np.arange(n_ang)
        # Gauss-Legendre panels, roughly one per kernel oscillation
        osc_freq = spec.k * abs(math.log(r_arc / abs(T))) / spec.lnq + n_ang
        panels = max(6, math.ceil(abs(d_b - d_a) * osc_freq / (2 * math.pi)) * 2)
        gl_x, gl_w = np.polynomial.legendre.leggauss(8)
        edges = np.linspace(d_a, d_b, panels + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        thetas = (mid[:, None] + half[:, None] * gl_x[None, :]).ravel()
        twt = (half[:, None] * gl_w[None, :]).ravel()
        basis = np.exp(1j * np.outer(thetas, freqs))
        ring = basis @ coeffs
        kern = _inv_theta(r_arc * np.exp(1j * thetas) / T, spec.q, spec.k)
        arc = (spec.k / spec.lnq) * 1j * ((twt * kern) @ ring)

    total = tail_b + arc - tail_a
    integrand = total * np.exp(1j * complex(z) * m)
    return complex(np.sum(twm * integrand) / math.sqrt(2 * math.pi))
