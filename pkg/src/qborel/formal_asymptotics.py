"""Formal power-series solution in eps and the asymptotic link to the
analytic one: remainder envelopes of q-Gevrey type and the q-exponential
decay of differences across covering sectors.

Series coefficients are stored as V_{j,n}: the coefficient of eps^n, held as
a t-polynomial whose coefficients are Fourier data on the m grid.  The
order-n recursion couples the new coefficients only through the eps-constant
part of the b symbols, so each order is one small convolution fixed point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .borel_solver import GridSpec, build_grid, solve_coupled, solve_triangular
from .errors import DivergenceError, DomainError, UsageError
from .geometry import GoodCovering, make_geometry
from .problem_model import ProblemSpec, polyval_im
from .solution_assembly import LogSolution, solution_difference
from .transforms import trapezoid_weights

__all__ = [
    "FormalSeries",
    "AsymptoticsReport",
    "SolutionFamily",
    "formal_coefficients",
    "formal_residual",
    "evaluate_formal",
    "gevrey_remainder_check",
    "difference_decay_fit",
]


@dataclass
class FormalSeries:
    """Truncated eps-series pair; coef[j][n] maps t-power -> m-grid data."""

    order: int
    m: np.ndarray
    coef: list[list[dict[int, np.ndarray]]]
    solve_tol: float

    def utilde(self, j: int, n: int) -> dict[int, np.ndarray]:
        """Coefficient in the u~ normalisation (series sum u~_n eps^n / n!)."""
        return {p: math.factorial(n) * arr for p, arr in self.coef[j][n].items()}


@dataclass
class AsymptoticsReport:
    eps_samples: list = field(default_factory=list)
    remainders: dict = field(default_factory=dict)   # N -> list over eps
    fit_C: float = math.nan
    fit_A: float = math.nan
    fit_residual: float = math.nan
    ratio_table: list = field(default_factory=list)  # g_N values
    ratio_monotone: bool | None = None
    decay: dict = field(default_factory=dict)        # j -> list over eps
    decay_coeffs: tuple = ()
    target_quadratic: float = math.nan
    relative_deviation: float = math.nan
    warnings: list = field(default_factory=list)


class _OrderKernels:
    """Convolution kernels per eps-order of every symbol, on one m grid."""

    def __init__(self, spec: ProblemSpec, m: np.ndarray):
        self.m = m
        diff = m[:, None] - m[None, :]
        tw = trapezoid_weights(m) / math.sqrt(2.0 * math.pi)
        self.Q_im = polyval_im(spec.Q, m)
        self.RD_im = polyval_im(spec.RD, m)
        self.term = []
        for t in spec.terms:
            R_im = polyval_im(t.R, m)
            kernels = [t.C.eps_coefficient(a)(diff) * (R_im * tw)[None, :]
                       for a in range(t.C.eps_degree + 1)]
            self.term.append(kernels)
        self.b = {}
        for jk, sym in spec.coeffs.b.items():
            if sym.is_zero():
                self.b[jk] = []
            else:
                self.b[jk] = [sym.eps_coefficient(a)(diff) * tw[None, :]
                              for a in range(sym.eps_degree + 1)]

    def bk(self, jk, a):
        ker = self.b[jk]
        return ker[a] if a < len(ker) else None


def _forcing_order(spec: ProblemSpec, h: int, n: int, m: np.ndarray) -> dict:
    out = {}
    for p, sym in spec.forcing.powers(h).items():
        a = n - p
        if 0 <= a <= sym.eps_degree:
            qfac = (spec.q ** (1.0 / spec.k)) ** (p * (p - 1) / 2.0)
            vals = sym.eps_coefficient(a)(m) * qfac
            if np.any(vals != 0):
                out[p] = out.get(p, 0) + vals
    return out


def _add(acc: dict, p: int, arr):
    if p in acc:
        acc[p] = acc[p] + arr
    else:
        acc[p] = arr.copy() if isinstance(arr, np.ndarray) else arr


def _dilate_tpoly(coeffs: dict, rate: float, q: float) -> dict:
    """t -> q^rate t on a t-polynomial: power p picks the factor q^(rate p)."""
    return {p: (q ** (rate * p)) * arr for p, arr in coeffs.items()}


def _assemble_rhs(spec, ker, V, n):
    """Right sides of the order-n recursion from all lower orders."""
    rhs = [{}, {}]
    if spec.dD <= n:
        rate = spec.dD / spec.k
        for p, arr in V[0][n - spec.dD].items():
            _add(rhs[0], p + spec.dD, (spec.q ** (rate * p)) * ker.RD_im * arr)
        for p, arr in V[1][n - spec.dD].items():
            fac = (spec.q ** (rate * p)) * ker.RD_im
            _add(rhs[0], p + spec.dD, (spec.dD / spec.k) * fac * arr)
            _add(rhs[1], p + spec.dD, fac * arr)
    for i, t in enumerate(spec.terms):
        if t.Delta > n:
            continue
        rate = float(t.delta)
        for a, K in enumerate(ker.term[i]):
            n3 = n - t.Delta - a
            if n3 < 0:
                continue
            for p, arr in V[0][n3].items():
                _add(rhs[0], p + t.d, (spec.q ** (rate * p)) * (K @ arr))
            for p, arr in V[1][n3].items():
                conv = (spec.q ** (rate * p)) * (K @ arr)
                _add(rhs[0], p + t.d, rate * conv)
                _add(rhs[1], p + t.d, conv)
    for h in (0, 1):
        for p, arr in _forcing_order(spec, h, n, ker.m).items():
            _add(rhs[h], p, arr)
    for a in range(1, n + 1):
        for (j, kk), _ in spec.coeffs.b.items():
            K = ker.bk((j, kk), a)
            if K is None:
                continue
            for p, arr in V[j][n - a].items():
                _add(rhs[kk], p, K @ arr)
    return rhs


def formal_coefficients(spec: ProblemSpec, N: int, tol: float = 1e-13,
                        m_grid=None) -> FormalSeries:
    """Solve the coefficient recursion order by order up to eps^N.

    The unknowns of order n appear on the right only through the eps-constant
    b kernels, handled by a small fixed point per t-power (convergent under
    the smallness budget).
    """
    m = GridSpec().m_grid() if m_grid is None else np.asarray(m_grid, dtype=float)
    ker = _OrderKernels(spec, m)
    B0 = {jk: ker.bk(jk, 0) for jk in spec.coeffs.b}
    V: list[list[dict[int, np.ndarray]]] = [[], []]
    for n in range(N + 1):
        rhs = _assemble_rhs(spec, ker, V, n)
        powers = sorted(set(rhs[0]) | set(rhs[1]))
        sol = [{}, {}]
        for p in powers:
            r0 = rhs[0].get(p, np.zeros(m.size, dtype=complex))
            r1 = rhs[1].get(p, np.zeros(m.size, dtype=complex))
            w0 = r0 / ker.Q_im
            w1 = r1 / ker.Q_im
            scale = max(float(np.max(np.abs(w0))), float(np.max(np.abs(w1))), 1e-30)
            for it in range(200):
                extra0 = np.zeros(m.size, dtype=complex)
                extra1 = np.zeros(m.size, dtype=complex)
                if B0[(0, 0)] is not None:
                    extra0 += B0[(0, 0)] @ w0
                if B0[(1, 0)] is not None:
                    extra0 += B0[(1, 0)] @ w1
                if B0[(0, 1)] is not None:
                    extra1 += B0[(0, 1)] @ w0
                if B0[(1, 1)] is not None:
                    extra1 += B0[(1, 1)] @ w1
                w0_next = (r0 + extra0) / ker.Q_im
                w1_next = (r1 + extra1) / ker.Q_im
                upd = max(float(np.max(np.abs(w0_next - w0))),
                          float(np.max(np.abs(w1_next - w1))))
                w0, w1 = w0_next, w1_next
                if upd < tol * scale:
                    break
            else:
                raise DivergenceError(
                    f"order-{n} coefficient iteration did not converge: "
                    "smallness condition violated")
            if np.any(w0 != 0):
                sol[0][p] = w0
            if np.any(w1 != 0):
                sol[1][p] = w1
        V[0].append(sol[0])
        V[1].append(sol[1])
    return FormalSeries(order=N, m=m, coef=V, solve_tol=tol)


def formal_residual(series: FormalSeries, spec: ProblemSpec, N: int) -> float:
    """Max defect of the order-n identities for n <= N over t-powers and m."""
    if N > series.order:
        raise UsageError("series order too low for the requested check")
    ker = _OrderKernels(spec, series.m)
    B0 = {jk: ker.bk(jk, 0) for jk in spec.coeffs.b}
    worst = 0.0
    for n in range(N + 1):
        rhs = _assemble_rhs(spec, ker, series.coef, n)
        for kk in (0, 1):
            Vn = series.coef[kk][n]
            for p in set(rhs[kk]) | set(Vn):
                want = rhs[kk].get(p, 0)
                w0 = series.coef[0][n].get(p)
                w1 = series.coef[1][n].get(p)
                if B0[(0, kk)] is not None and w0 is not None:
                    want = want + B0[(0, kk)] @ w0
                if B0[(1, kk)] is not None and w1 is not None:
                    want = want + B0[(1, kk)] @ w1
                have = ker.Q_im * Vn[p] if p in Vn else np.zeros(series.m.size)
                worst = max(worst, float(np.max(np.abs(have - want))))
    return worst


def evaluate_formal(series: FormalSeries, j: int, t: complex, z: complex,
                    eps: complex, N: int | None = None) -> complex:
    """Partial sum sum_{n<=N} V_{j,n}(t, z) eps^n via the inverse transform."""
    N = series.order if N is None else N
    if N > series.order:
        raise UsageError("series order too low")
    m = series.m
    tw = trapezoid_weights(m) * np.exp(1j * complex(z) * m) / math.sqrt(2 * math.pi)
    total = 0.0 + 0.0j
    for n in range(N + 1):
        for p, arr in series.coef[j][n].items():
            total += eps ** n * t ** p * complex(np.sum(tw * arr))
    return total


class SolutionFamily:
    """Analytic solutions indexed by covering sector, solved on demand."""

    def __init__(self, spec: ProblemSpec, covering: GoodCovering,
                 gspec: GridSpec, tol: float = 1e-12, m_grid=None,
                 use_triangular: bool | None = None):
        self.spec = spec
        self.covering = covering
        self.gspec = gspec
        self.tol = tol
        self.m_grid = m_grid
        if use_triangular is None:
            use_triangular = spec.coeffs.triangular
        self.use_triangular = use_triangular
        self._geoms = {}
        self._grids = {}
        self._sols = {}

    def _grid(self, p: int):
        p = p % self.covering.zeta
        if p not in self._grids:
            geom = make_geometry(self.spec, self.covering.d_rays[p],
                                 m_grid=self.m_grid)
            self._geoms[p] = geom
            self._grids[p] = build_grid(self.spec, geom, self.gspec)
        return self._grids[p]

    def at(self, p: int, eps: complex) -> LogSolution:
        p = p % self.covering.zeta
        key = (p, complex(eps))
        if key not in self._sols:
            grid = self._grid(p)
            if self.use_triangular:
                w0, w1, _ = solve_triangular(self.spec, eps, grid, tol=self.tol)
            else:
                w0, w1, _ = solve_coupled(self.spec, eps, grid, tol=self.tol)
            self._sols[key] = LogSolution(self.spec, grid, w0, w1, eps,
                                          Delta=self.covering.Delta)
        return self._sols[key]


def default_probes(covering: GoodCovering, n: int = 3):
    """n x n probe grid in the interior of the t sector times a real z span."""
    fracs = np.linspace(0.35, 0.8, n)
    ts = [f * covering.t_radius * np.exp(1j * covering.t_direction) for f in fracs]
    zs = np.linspace(-0.3, 0.3, n)
    return [(t, z) for t in ts for z in zs]


def gevrey_remainder_check(family: SolutionFamily, p: int,
                           series: FormalSeries, N_max: int, eps_samples,
                           probes=None, floor: float = 1e-12) -> AsymptoticsReport:
    """Remainder norms against the formal series inside one sector, with the
    q-Gevrey envelope fit and the term-ratio growth table."""
    if N_max > series.order:
        raise UsageError("series order below N_max")
    rep = AsymptoticsReport(eps_samples=list(eps_samples))
    probes = default_probes(family.covering) if probes is None else probes
    rem = {N: [] for N in range(N_max + 1)}
    for eps in eps_samples:
        sol = family.at(p, eps)
        vals = {(j, t, z): sol.component(j, t, z) for (t, z) in probes for j in (0, 1)}
        for N in range(N_max + 1):
            worst = 0.0
            for (t, z) in probes:
                for j in (0, 1):
                    part = evaluate_formal(series, j, t, z, eps, N)
                    worst = max(worst, abs(vals[(j, t, z)] - part))
            rem[N].append(worst)
    rep.remainders = rem

    xs, ys = [], []
    scale = max(rem[0]) if rem[0] else 1.0
    for N in range(N_max + 1):
        for eps, r in zip(eps_samples, rem[N]):
            if r < floor * scale:
                rep.warnings.append(f"remainder below floor at N={N}, |eps|={abs(eps):.3g}")
                continue
            y = math.log(r) - (N + 1) * math.log(abs(eps)) \
                - N * (N + 1) / (2.0 * family.spec.k) * family.spec.lnq
            xs.append([N + 1.0, 1.0])
            ys.append(y)
    if len(ys) >= 3:
        coef, res, *_ = np.linalg.lstsq(np.asarray(xs), np.asarray(ys), rcond=None)
        rep.fit_A = math.exp(coef[0])
        rep.fit_C = math.exp(coef[1])
        rep.fit_residual = float(res[0]) if len(res) else 0.0

    table = []
    for N in range(N_max):
        gs = []
        for i, eps in enumerate(eps_samples):
            r0, r1 = rem[N][i], rem[N + 1][i]
            if r0 > floor * scale and r1 > floor * scale:
                gs.append(math.log(r1 / (r0 * abs(eps))))
        if gs:
            table.append(float(np.median(gs)))
    rep.ratio_table = table
    rep.ratio_monotone = all(b > a for a, b in zip(table, table[1:])) if len(table) > 1 else None
    return rep


def difference_decay_fit(family: SolutionFamily, p: int, eps_samples,
                         probes=None, small_weight_frac: float = 0.1) -> AsymptoticsReport:
    """Fit log |u_{j,p+1} - u_{j,p}| = a log^2|eps| + b log|eps| + c on the
    overlap of consecutive sectors; a targets -k/(2 log q).

    Samples whose arc radius collides with the kernel zero lattice are nudged
    along the q^(1/k) ladder; samples whose difference underflows are dropped
    with a warning.
    """
    spec = family.spec
    rep = AsymptoticsReport()
    probes = default_probes(family.covering) if probes is None else probes
    deltas = {0: [], 1: []}
    used_eps = []
    for eps0 in eps_samples:
        eps = complex(eps0)
        for attempt in range(4):
            try:
                sol_a = family.at(p, eps)
                sol_b = family.at(p + 1, eps)
                d0 = max(abs(solution_difference(sol_a, sol_b, 0, t, z))
                         for (t, z) in probes)
                d1 = max(abs(solution_difference(sol_a, sol_b, 1, t, z))
                         for (t, z) in probes)
                break
            except DomainError:
                eps *= spec.q ** (1.0 / (4.0 * spec.k))
        else:
            rep.warnings.append(f"no admissible nudge for |eps| = {abs(eps0):.3g}")
            continue
        if max(d0, d1) <= 0.0 or not (math.isfinite(math.log(max(d0, d1)))):
            rep.warnings.append(f"difference underflows at |eps| = {abs(eps):.3g}")
            continue
        used_eps.append(eps)
        deltas[0].append(d0)
        deltas[1].append(d1)
    rep.eps_samples = used_eps
    rep.decay = deltas
    if len(used_eps) < 4:
        rep.warnings.append("too few usable samples for a quadratic fit")
        return rep
    x = np.array([math.log(abs(e)) for e in used_eps])
    y = np.array([math.log(max(a, b)) for a, b in zip(deltas[0], deltas[1])])
    w = np.ones(x.size)
    n_small = max(1, int(small_weight_frac * x.size))
    w[np.argsort(x)[:n_small]] = 2.0
    A = np.vstack([x * x, x, np.ones_like(x)]).T * w[:, None]
    coef, *_ = np.linalg.lstsq(A, y * w, rcond=None)
    rep.decay_coeffs = tuple(float(c) for c in coef)
    rep.target_quadratic = -spec.k / (2.0 * spec.lnq)
    rep.relative_deviation = abs(coef[0] - rep.target_quadratic) / abs(rep.target_quadratic)
    return rep
