"""Root loci of P_m, admissible sectors, the geometric bound constants and
good coverings of the punctured eps disc.

All constants are grid estimates: minima/suprema over declared sample grids,
with the |m| -> infinity limit of |Q/R_D| joined in through the leading
coefficients.  They certify the shape of the bounds, not rigorous enclosures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GeometryError
from .problem_model import ProblemSpec, polyval_im, validate_assumptions

__all__ = [
    "SectorGeometry",
    "GoodCovering",
    "pm_roots",
    "default_rho",
    "set_dist_to_shift",
    "default_delta",
    "make_geometry",
    "sector_root_clearance",
    "bound_constants",
    "check_assumption_d",
    "measure_c2",
    "operator_constants",
    "check_smallness",
    "ray_cone_clearance",
    "build_good_covering",
]

DEFAULT_M_GRID = np.linspace(-50.0, 50.0, 2001)
SECTOR_APERTURE = math.pi / 36.0


@dataclass
class SectorGeometry:
    """An unbounded sector S_d with the disc and shift it is paired with."""

    d: float
    aperture: float
    rho: float
    delta: float
    r_max: float = 16.0
    constants: dict = field(default_factory=dict)


def admissible_r1(q: float, k: int, alpha: float) -> float:
    """Radius q^((1/2 - alpha)/k) / 2 on which the q-Laplace image is tame."""
    return q ** ((0.5 - alpha) / k) / 2.0


def pm_roots(spec: ProblemSpec, m: float) -> np.ndarray:
    """Roots q_l(m) of tau -> P_m(tau), l = 0..dD-1 (empty for dD = 0).

    For dD = 1 the single root is the exact ratio; the general case uses the
    modulus-argument form.
    """
    rd = complex(polyval_im(spec.RD, m))
    if rd == 0:
        raise GeometryError(f"R_D(im) vanishes at m = {m}: degenerate symbol")
    if spec.dD == 0:
        return np.empty(0, dtype=complex)
    qv = complex(polyval_im(spec.Q, m))
    if spec.dD == 1:
        return np.array([qv / rd], dtype=complex)
    modulus = (abs(qv) * spec.q ** (spec.dD * (spec.dD - 1) / (2.0 * spec.k))
               / abs(rd)) ** (1.0 / spec.dD)
    base = np.angle(qv / rd) / spec.dD
    ells = np.arange(spec.dD)
    return modulus * np.exp(1j * (base + 2.0 * math.pi * ells / spec.dD))


def default_rho(spec: ProblemSpec, D1: float) -> float:
    """Disc radius just under min(1, q^((dD-1)/2k) D1^(1/dD) / 2)."""
    if spec.dD == 0:
        return 0.5
    cap = min(1.0, 0.5 * spec.q ** ((spec.dD - 1) / (2.0 * spec.k)) * D1 ** (1.0 / spec.dD))
    return 0.98 * cap


def set_dist_to_shift(d: float, aperture: float, rho: float, delta: float) -> float:
    """dist(S_d u D(0, rho), -delta) for the shift point on the negative axis."""
    p = -delta + 0.0j
    dist_disc = max(0.0, delta - rho)
    best = dist_disc
    half = aperture / 2.0
    # inside the angular span of the sector the distance is zero
    gap = abs(math.remainder(math.pi - d, 2.0 * math.pi))
    if gap <= half:
        return 0.0
    for edge in (d - half, d + half):
        u = complex(math.cos(edge), math.sin(edge))
        t = max(0.0, (p * u.conjugate()).real)
        best = min(best, abs(p - t * u))
    return best


def default_delta(d: float, aperture: float, rho: float) -> float:
    """Smallest shift with dist(S_d u D(0,rho), -delta) >= 1, by bisection."""
    lo, hi = 1e-6, 4.0
    while set_dist_to_shift(d, aperture, rho, hi) < 1.0:
        hi *= 2.0
        if hi > 1e6:
            raise GeometryError("no admissible shift: sector meets the negative axis")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if set_dist_to_shift(d, aperture, rho, mid) >= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


def sector_root_clearance(spec: ProblemSpec, d: float, aperture: float,
                          m_grid) -> tuple[float, tuple[float, int] | None]:
    """Smallest angular distance from the sector to any root ray.

    Returns (clearance beyond the half-aperture, witness (m, l) if the sector
    is hit).  Roots move along rays as m sweeps; an unbounded sector hits a
    root iff its argument falls inside the aperture.
    """
    if spec.dD == 0:
        return math.pi, None
    half = aperture / 2.0
    worst = math.inf
    witness = None
    for m in np.asarray(m_grid, dtype=float):
        roots = pm_roots(spec, m)
        for ell, r in enumerate(roots):
            gap = abs(math.remainder(np.angle(r) - d, 2.0 * math.pi)) - half
            if gap < worst:
                worst = gap
                witness = (float(m), int(ell))
    return worst, (witness if worst <= 0 else None)


def make_geometry(spec: ProblemSpec, d: float, m_grid=None,
                  aperture: float = SECTOR_APERTURE,
                  rho: float | None = None, r_max: float | None = None) -> SectorGeometry:
    """Assemble an admissible sector geometry for the direction d."""
    m_grid = DEFAULT_M_GRID if m_grid is None else np.asarray(m_grid, dtype=float)
    rep = validate_assumptions(spec, m_grid)
    if rho is None:
        rho = default_rho(spec, rep.D1)
    gap, witness = sector_root_clearance(spec, d, aperture, m_grid)
    if witness is not None:
        raise GeometryError(
            f"sector at direction {d:.4f} hits the root locus: witness m={witness[0]}, l={witness[1]}")
    delta = default_delta(d, aperture, rho)
    if r_max is None:
        r_max = 16.0 * rho
    geom = SectorGeometry(d=d, aperture=aperture, rho=rho, delta=delta, r_max=r_max)
    geom.constants["D1"] = rep.D1
    geom.constants["D2"] = rep.D2
    return geom


def _disc_grid(rho: float, n_r: int = 40, n_ang: int = 48) -> np.ndarray:
    radii = np.linspace(0.0, rho, n_r)
    angles = np.linspace(0.0, 2.0 * math.pi, n_ang, endpoint=False)
    return (radii[:, None] * np.exp(1j * angles)[None, :]).ravel()


def bound_constants(spec: ProblemSpec, geom: SectorGeometry, m_grid=None,
                    u_grid=None) -> dict:
    """Geometric constants: C_D on the disc, the sector constants D31/D32/D3
    and the dilation-weight constant D4.

    D31 is evaluated on the sector bisectrix (theta = d - arg q_l(m)), the
    sharp small-opening value; D32 uses the split radius R = 2 with the 1/2
    distance factor.  C_D is the disc-grid minimum of |P_m| / |Q(im)| and must
    sit above the lemma floor 1 - 2^(-dD).
    """
    m_grid = DEFAULT_M_GRID if m_grid is None else np.asarray(m_grid, dtype=float)
    if u_grid is None:
        u_grid = np.linspace(0.0, 2.0, 801)
    u_grid = np.asarray(u_grid, dtype=float)

    D1 = geom.constants.get("D1")
    D2 = geom.constants.get("D2")
    if D1 is None or D2 is None:
        rep = validate_assumptions(spec, m_grid)
        D1, D2 = rep.D1, rep.D2

    consts = {"D1": D1, "D2": D2}
    qi = polyval_im(spec.Q, m_grid)
    consts["inv_Q_sup"] = float(np.max(1.0 / np.abs(qi)))

    tau_disc = _disc_grid(geom.rho)
    ratios = np.abs(spec.pm(tau_disc, m_grid)) / np.abs(qi)[None, :]
    consts["C_D"] = float(ratios.min())
    consts["C_D_floor"] = 1.0 - 2.0 ** (-spec.dD) if spec.dD > 0 else consts["C_D"]

    if spec.dD == 0:
        consts["D31"] = consts["D32"] = consts["D3"] = consts["C_D"]
    else:
        c = D2 ** (1.0 / spec.dD) * spec.q ** ((spec.dD - 1) / (2.0 * spec.k))
        # bisectrix angles of the sector seen from each root ray
        thetas = []
        for m in m_grid[:: max(1, m_grid.size // 200)]:
            for r in pm_roots(spec, m):
                thetas.append(geom.d - float(np.angle(r)))
        thetas = np.asarray(sorted(set(np.round(thetas, 12))))
        u = u_grid[u_grid <= 2.0][None, :]
        num = np.abs(1.0 - u ** spec.dD * np.exp(1j * spec.dD * thetas)[:, None])
        den = (1.0 + u * c) ** spec.dD
        consts["D31"] = float((num / den).min())
        R = 2.0
        consts["D32"] = 0.5 * (R / (1.0 + c * R)) ** spec.dD
        consts["D3"] = min(consts["D31"], consts["D32"])

    lr = math.log(geom.rho + geom.delta)
    consts["D4"] = spec.k / (2.0 * spec.lnq) * (lr * lr + spec.alpha * lr)
    return consts


def check_assumption_d(spec: ProblemSpec, consts: dict) -> dict:
    """dD/k < (1/2) D1 min(C_D, D3), with the k threshold making it pass."""
    bound = 0.5 * consts["D1"] * min(consts["C_D"], consts["D3"])
    lhs = spec.dD / spec.k
    if spec.dD == 0:
        return {"pass": True, "margin": bound, "k_threshold": 1}
    k_threshold = int(math.floor(spec.dD / bound)) + 1
    return {"pass": lhs < bound, "margin": bound - lhs, "k_threshold": k_threshold}


def measure_c2(b, h_poly, mu: float, m_grid=None) -> float:
    """Convolution constant sup_m (1+|m|)^mu |b(m)| I(m) with
    I(m) = integral |h(i m1)| (1+|m-m1|)^(-mu) (1+|m1|)^(-mu) dm1.

    This is the grid evaluation of the bound the convolution estimate
    actually produces, so norm products scaled by it dominate the weighted
    convolution on grids.
    """
    m = DEFAULT_M_GRID if m_grid is None else np.asarray(m_grid, dtype=float)
    h = np.abs(np.polynomial.polynomial.polyval(1j * m, np.asarray(h_poly, dtype=complex)))
    bv = np.abs(b(m) if callable(b) else np.asarray(b))
    dm = m[1] - m[0]
    inner = (1.0 + np.abs(m[:, None] - m[None, :])) ** (-mu) * \
        ((1.0 + np.abs(m)) ** (-mu) * h)[None, :]
    integral = inner.sum(axis=1) * dm
    return float(np.max((1.0 + np.abs(m)) ** mu * bv * integral))


def operator_constants(spec: ProblemSpec, geom: SectorGeometry, consts: dict,
                       m_grid=None) -> dict:
    """Measured constants C1, C2 and the composed per-term bounds C3_l.

    C1 is the grid supremum of the exact pointwise factor of the sector part
    of the dilation operator, |Q/P_m| |tau|^d_l W(tau)/W(q^(-x) tau); C2 is
    the convolution constant of measure_c2 with b = (2 pi)^(-1/2)/|Q|.
    """
    m = DEFAULT_M_GRID if m_grid is None else np.asarray(m_grid, dtype=float)
    qi = polyval_im(spec.Q, m)
    inv_q_sup = float(np.max(1.0 / np.abs(qi)))
    lnq = spec.lnq

    def weight_log(r_shifted: np.ndarray) -> np.ndarray:
        lt = np.log(r_shifted)
        return -0.5 * spec.k * lt * lt / lnq - spec.alpha * lt

    n_oct = max(1, int(math.ceil(math.log(geom.r_max * 4096.0 / geom.rho) / lnq)))
    r = geom.rho / 8.0 * spec.q ** (np.arange(0, n_oct * 16 + 1) / 16.0)
    tau = r * np.exp(1j * geom.d)

    out = {"C2_plain": measure_c2(np.full(m.size, 1.0 / math.sqrt(2 * math.pi)),
                                  [1.0], spec.mu, m),
           "inv_Q_sup": inv_q_sup, "C1": [], "C2": [], "C3": []}
    pm_tau = spec.pm(tau, m)
    for t in spec.terms:
        x = float(t.d) / spec.k - float(t.delta)
        wr = np.exp(weight_log(np.abs(tau + geom.delta))
                    - weight_log(np.abs(spec.q ** (-x) * tau + geom.delta)))
        factor = np.abs(qi)[None, :] / np.abs(pm_tau) * (r ** t.d * wr)[:, None]
        c1 = float(factor.max())
        c2 = measure_c2(1.0 / (math.sqrt(2 * math.pi) * np.abs(qi)), t.R, spec.mu, m)
        disc_part = (1.0 / (1.0 - 2.0 ** (-spec.dD)) if spec.dD > 0 else 1.0) \
            * geom.rho ** t.d * math.exp(consts["D4"])
        out["C1"].append(c1)
        out["C2"].append(c2)
        out["C3"].append(max(disc_part, c1) * c2 * spec.coeffs.C_C)
    return out


def check_smallness(spec: ProblemSpec, consts: dict, eps0: float,
                    varsigma_b: float, C2: float, C3l) -> dict:
    """Contraction budget: the three-term sum must stay at or below 1/2."""
    if spec.dD > 0:
        t1 = (spec.dD / spec.k) / consts["D1"] * max(1.0 / consts["C_D"],
                                                     1.0 / consts["D3"])
    else:
        t1 = 0.0
    t2 = sum(eps0 ** (t.Delta - t.d) * c3 * (1.0 + float(t.delta))
             for t, c3 in zip(spec.terms, C3l))
    t3 = consts["inv_Q_sup"] * (2.0 / consts["C_D"]) * varsigma_b * C2
    lhs = t1 + t2 + t3
    return {"pass": lhs <= 0.5, "lhs": lhs, "terms": (t1, t2, t3)}


def ray_cone_clearance(d: float, arg_lo: float, arg_hi: float, n: int = 721) -> float:
    """min over arg T in [lo, hi] of min_r |1 + e^(i d) r / T|."""
    phis = np.linspace(arg_lo, arg_hi, n)
    psi = d - phis
    vals = np.where(np.cos(psi) >= 0.0, 1.0, np.abs(np.sin(psi)))
    return float(vals.min())


@dataclass
class GoodCovering:
    """Overlapping eps sectors with admissible Borel directions attached."""

    zeta: int
    directions: list[float]          # bisecting directions of the eps sectors
    aperture: float                  # common aperture, slightly over 2 pi / zeta
    radius: float                    # eps0
    d_rays: list[float]              # admissible Borel direction per sector
    t_direction: float
    t_aperture: float
    t_radius: float
    Delta: float
    r1: float

    def sector_interval(self, p: int) -> tuple[float, float]:
        c = self.directions[p % self.zeta]
        return c - self.aperture / 2.0, c + self.aperture / 2.0

    def contains(self, p: int, eps: complex) -> bool:
        if not (0.0 < abs(eps) <= self.radius):
            return False
        lo, hi = self.sector_interval(p)
        a = np.angle(eps)
        return any(lo <= a + 2 * math.pi * s <= hi for s in (-1, 0, 1))

    def eps_sample(self, p: int, radius_frac: float = 0.7) -> complex:
        return self.radius * radius_frac * np.exp(1j * self.directions[p % self.zeta])

    def overlap_sample(self, p: int, radius_frac: float = 0.7) -> complex:
        # sectors p and p+1 are centred 2 pi / zeta apart; the overlap midpoint
        # sits halfway between the two bisectors
        mid = self.directions[p % self.zeta] + math.pi / self.zeta
        return self.radius * radius_frac * np.exp(1j * mid)

    def coverage_count(self, angle: float) -> int:
        return sum(
            1 for p in range(self.zeta)
            if self.contains(p, 0.5 * self.radius * np.exp(1j * angle))
        )


def build_good_covering(zeta: int, eps0: float, spec: ProblemSpec,
                        t_radius: float, t_aperture: float = 0.1,
                        t_direction: float = 0.0, m_grid=None,
                        aperture_factor: float = 1.12,
                        sector_aperture: float = SECTOR_APERTURE,
                        Delta: float = 0.5) -> GoodCovering:
    """Choose zeta overlapping eps sectors and one admissible Borel direction
    per sector.

    The scan keeps S_(d_p) clear of the root rays, keeps the shifted distance
    condition satisfiable and keeps eps * t inside the kernel cone
    R_(d_p, Delta) for all sampled arguments.  Directions closest to the
    sector bisector win (they keep the kernel best conditioned).
    """
    if zeta < 2:
        raise ConfigError("a good covering needs zeta >= 2")
    m_grid = DEFAULT_M_GRID if m_grid is None else np.asarray(m_grid, dtype=float)
    r1 = admissible_r1(spec.q, spec.k, spec.alpha)
    if eps0 * t_radius > r1:
        raise GeometryError(
            f"eps0 * r_T = {eps0 * t_radius:.3g} exceeds r1 = {r1:.3g}")
    aperture = aperture_factor * 2.0 * math.pi / zeta
    directions = [2.0 * math.pi * p / zeta for p in range(zeta)]
    candidates = np.linspace(-math.pi, math.pi, 720, endpoint=False)

    d_rays = []
    for p, center in enumerate(directions):
        lo = center - aperture / 2.0 + t_direction - t_aperture / 2.0
        hi = center + aperture / 2.0 + t_direction + t_aperture / 2.0
        best, blocked = None, []
        order = sorted(candidates, key=lambda c: abs(math.remainder(c - center, 2 * math.pi)))
        for d in order:
            gap, witness = sector_root_clearance(spec, d, sector_aperture, m_grid)
            if witness is not None:
                blocked.append((d, f"roots at m={witness[0]}"))
                continue
            if abs(math.remainder(math.pi - d, 2 * math.pi)) < sector_aperture:
                blocked.append((d, "negative axis"))
                continue
            if ray_cone_clearance(d, lo, hi) < Delta:
                blocked.append((d, "kernel cone"))
                continue
            best = d
            break
        if best is None:
            arcs = sorted({reason for _, reason in blocked})
            raise GeometryError(
                f"no admissible direction for sector {p}: blocked by {arcs}")
        d_rays.append(float(best))

    return GoodCovering(zeta=zeta, directions=directions, aperture=aperture,
                        radius=eps0, d_rays=d_rays, t_direction=t_direction,
                        t_aperture=t_aperture, t_radius=t_radius, Delta=Delta,
                        r1=r1)
