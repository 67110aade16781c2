import math

import numpy as np
import pytest

from qborel.borel_solver import GridSpec
from qborel.errors import UsageError
from qborel.formal_asymptotics import (
    SolutionFamily,
    default_probes,
    difference_decay_fit,
    evaluate_formal,
    formal_coefficients,
    formal_residual,
    gevrey_remainder_check,
)
from qborel.geometry import build_good_covering
from qborel.problem_model import ProblemSpec, polyval_im

M_SMALL = np.linspace(-12, 12, 161)


def asymptotics_dict():
    from tests.conftest import example_problem_dict

    d = example_problem_dict()
    d["eps0"] = 0.3
    return d


@pytest.fixture(scope="module")
def asym():
    """Covering, family and formal series for the wide-eps instance."""
    spec = ProblemSpec.from_dict(asymptotics_dict())
    cov = build_good_covering(2, spec.eps0, spec, t_radius=0.08, t_aperture=0.1,
                              m_grid=np.linspace(-50, 50, 401))
    gspec = GridSpec(m_max=12.0, m_nodes=161, n_angles=16, ring_octaves=4,
                     T_min=5e-6, T_max=0.025)
    family = SolutionFamily(spec, cov, gspec, tol=1e-13)
    series = formal_coefficients(spec, 7, m_grid=M_SMALL)
    return {"spec": spec, "cov": cov, "gspec": gspec, "family": family,
            "series": series}


def test_zero_problem_gives_zero_series(problem_dict):
    problem_dict["forcing"]["f0"] = {}
    problem_dict["forcing"]["f1"] = {}
    problem_dict["coeffs"]["b00"] = None
    problem_dict["coeffs"]["b10"] = None
    problem_dict["coeffs"]["b11"] = None
    problem_dict["terms"][0]["C"] = None
    spec = ProblemSpec.from_dict(problem_dict)
    series = formal_coefficients(spec, 4, m_grid=M_SMALL)
    for j in (0, 1):
        for n in range(5):
            assert series.coef[j][n] == {}
    assert formal_residual(series, spec, 4) == 0.0


def test_order0_fourier_division_oracle(problem_dict):
    # with b and c off, order 0 must be the plain division by Q(im)
    problem_dict["coeffs"]["b00"] = None
    problem_dict["coeffs"]["b10"] = None
    problem_dict["coeffs"]["b11"] = None
    problem_dict["terms"][0]["C"] = None
    spec = ProblemSpec.from_dict(problem_dict)
    series = formal_coefficients(spec, 2, m_grid=M_SMALL)
    Q = polyval_im(spec.Q, M_SMALL)
    for j in (0, 1):
        sym = spec.forcing.powers(j).get(0)
        want = sym.eps_coefficient(0)(M_SMALL) / Q
        got = series.coef[j][0][0]
        assert np.max(np.abs(got - want)) <= 1e-10


def test_low_orders_forcing_driven_without_b(problem_dict):
    problem_dict["coeffs"]["b00"] = None
    problem_dict["coeffs"]["b10"] = None
    problem_dict["coeffs"]["b11"] = None
    spec = ProblemSpec.from_dict(problem_dict)
    series = formal_coefficients(spec, 0, m_grid=M_SMALL)
    Q = polyval_im(spec.Q, M_SMALL)
    for j in (0, 1):
        sym = spec.forcing.powers(j).get(0)
        want = sym.eps_coefficient(0)(M_SMALL) / Q
        assert np.max(np.abs(series.coef[j][0][0] - want)) <= 1e-12


def test_formal_residual_self_consistency(asym):
    res = formal_residual(asym["series"], asym["spec"], 6)
    assert res <= 1e-9


def test_formal_residual_detects_dropped_coefficient(asym):
    import copy

    series = asym["series"]
    broken = copy.deepcopy(series)
    p = sorted(broken.coef[1][2])[0]
    dropped = np.max(np.abs(broken.coef[1][2][p]))
    broken.coef[1][2][p] = np.zeros_like(broken.coef[1][2][p])
    res = formal_residual(broken, asym["spec"], 2)
    assert res > 0.1 * dropped


def test_formal_residual_requires_order(asym):
    with pytest.raises(UsageError):
        formal_residual(asym["series"], asym["spec"], asym["series"].order + 1)


def test_order0_matches_analytic_limit(asym):
    family, series = asym["family"], asym["series"]
    sol = family.at(0, 0.002 + 0.0j)
    for (t, z) in [(0.06, 0.1), (0.05, -0.2)]:
        for j in (0, 1):
            u = sol.component(j, t, z)
            v0 = evaluate_formal(series, j, t, z, 0.0, 0)
            assert abs(u - v0) <= 0.01 * abs(v0)


def test_divided_difference_recovers_low_coefficients(asym):
    # one-sided divided differences along a real-eps ray, orders <= 2
    family, series = asym["family"], asym["series"]
    t, z = 0.06, 0.1
    eps_pts = [0.012, 0.008, 0.005, 0.003]
    vals = [family.at(0, complex(e)).component(0, t, z) for e in eps_pts]
    table = {(i, i): vals[i] for i in range(len(eps_pts))}
    for width in range(1, len(eps_pts)):
        for i in range(len(eps_pts) - width):
            table[(i, i + width)] = (
                (table[(i + 1, i + width)] - table[(i, i + width - 1)])
                / (eps_pts[i + width] - eps_pts[i]))
    for n in (1, 2):
        dd = table[(0, n)]
        want = evaluate_formal(series, 0, t, z, 1.0, n) - evaluate_formal(
            series, 0, t, z, 1.0, n - 1)  # the eps^n coefficient at eps = 1
        assert abs(dd - want) <= 0.05 * abs(want), (n, dd, want)


def test_gevrey_remainders_and_ratio_trend(asym):
    eps_samples = [complex(m) for m in (0.27, 0.2, 0.15, 0.11, 0.08)]
    probes = [(0.06, 0.1), (0.05, -0.2), (0.04, 0.25)]
    rep = gevrey_remainder_check(asym["family"], 0, asym["series"], 6,
                                 eps_samples, probes=probes)
    # first-order slope: R_0 scales like |eps|
    r0 = rep.remainders[0]
    slope = (math.log(r0[0]) - math.log(r0[-1])) / (
        math.log(0.27) - math.log(0.08))
    assert 0.7 < slope < 1.3
    # envelope fit exists and the growth-ratio table is monotone up to N = 4
    assert rep.fit_A > 0 and rep.fit_C > 0
    assert len(rep.ratio_table) >= 5
    assert all(b > a for a, b in zip(rep.ratio_table[:5], rep.ratio_table[1:5]))
    assert rep.ratio_monotone


def test_gevrey_floor_capping(asym):
    eps_samples = [complex(0.05)]
    probes = [(0.06, 0.1)]
    rep = gevrey_remainder_check(asym["family"], 0, asym["series"], 7,
                                 eps_samples, probes=probes, floor=1e-9)
    assert any("below floor" in w for w in rep.warnings)


def test_difference_decay_fit_matches_theorem(asym):
    cov, family = asym["cov"], asym["family"]
    arg = np.angle(cov.overlap_sample(0))
    mags = np.exp(np.linspace(math.log(3e-3), math.log(0.27), 9))
    eps_samples = [m * np.exp(1j * arg) for m in mags]
    probes = [(0.06 * np.exp(1j * cov.t_direction), 0.1),
              (0.04 * np.exp(1j * cov.t_direction), -0.2)]
    rep = difference_decay_fit(family, 0, eps_samples, probes=probes)
    assert len(rep.eps_samples) >= 8
    span = math.log10(abs(rep.eps_samples[-1])) - math.log10(abs(rep.eps_samples[0]))
    assert span >= 1.9
    a = rep.decay_coeffs[0]
    assert a < 0
    assert rep.relative_deviation <= 0.10
    # decays span an enormous range yet stay finite and positive
    assert min(rep.decay[0]) > 0
    assert max(rep.decay[0]) / min(rep.decay[0]) > 1e100


def test_difference_decay_quiet_overlap(asym):
    # the other overlap has no Stokes ray inside the wedge: differences sit at
    # the noise floor many orders below the active overlap at equal |eps|
    cov, family = asym["cov"], asym["family"]
    arg = np.angle(cov.overlap_sample(1))
    eps = 0.11 * np.exp(1j * arg)
    sol_a = family.at(1, eps)
    sol_b = family.at(2, eps)
    from qborel.solution_assembly import solution_difference

    t = 0.05 * np.exp(1j * cov.t_direction)
    quiet = abs(solution_difference(sol_a, sol_b, 0, t, 0.1))
    active_eps = 0.11 * np.exp(1j * np.angle(cov.overlap_sample(0)))
    loud = abs(solution_difference(family.at(0, active_eps),
                                   family.at(1, active_eps), 0, t, 0.1))
    assert quiet < 1e-6 * loud


def test_series_fits_both_sectors(asym):
    # Ramis-Sibuya realised numerically: the same series is the expansion of
    # every sectorial solution
    family, series = asym["family"], asym["series"]
    for p in (0, 1):
        eps = 0.1 * np.exp(1j * family.covering.directions[p])
        sol = family.at(p, eps)
        t = 0.05 * np.exp(1j * family.covering.t_direction)
        for j in (0, 1):
            u = sol.component(j, t, 0.1)
            part = evaluate_formal(series, j, t, 0.1, eps, 3)
            assert abs(u - part) < 5e-5 * abs(u), (p, j)


def test_default_probes_inside_domain(asym):
    pts = default_probes(asym["cov"])
    assert len(pts) == 9
    for (t, z) in pts:
        assert abs(t) < asym["cov"].t_radius
        assert abs(complex(z).imag) < asym["spec"].beta_prime
