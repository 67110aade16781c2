"""Command-line pipeline: geometry checks, the Borel solve, evaluation,
residuals, formal series and asymptotic fits, all driven by one JSON config.

Exit codes: 0 success, 2 assumption/geometry failure (witness file written),
3 numerical failure, 64 usage error, 65 unparsable config.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .borel_solver import GridSpec, build_grid, contraction_estimate, solve_coupled
from .errors import ConfigError, DivergenceError, DomainError, GeometryError, UsageError
from .formal_asymptotics import (
    SolutionFamily,
    difference_decay_fit,
    formal_coefficients,
    formal_residual,
    gevrey_remainder_check,
)
from .geometry import (
    bound_constants,
    build_good_covering,
    check_assumption_d,
    check_smallness,
    make_geometry,
    operator_constants,
)
from .problem_model import ProblemSpec, validate_assumptions
from .solution_assembly import LogSolution, residual_borel, residual_physical
from .transforms import QuadratureSpec

COMMANDS = ("check-geometry", "solve", "evaluate", "residual", "formal",
            "asymptotics", "all")


@dataclass
class RunConfig:
    spec: ProblemSpec
    zeta: int
    t_radius: float
    t_aperture: float
    t_direction: float
    quad: QuadratureSpec
    gspec: GridSpec
    solve_tol: float
    max_iter: int
    formal_tol: float
    eps_solve: complex
    points: list
    N_max: int
    eps_gevrey: tuple
    eps_decay: tuple
    decay_pair: int
    seed: int
    output_dir: Path
    geometry_m_grid: np.ndarray
    raw: dict = field(repr=False, default_factory=dict)


def _complex_of(x, default=None):
    if x is None:
        return default
    if isinstance(x, (list, tuple)):
        return complex(float(x[0]), float(x[1]))
    return complex(float(x), 0.0)


def load_config(path: str | Path, output_dir: str | None = None) -> RunConfig:
    with open(path) as fh:
        raw = json.load(fh)
    try:
        spec = ProblemSpec.from_dict(raw["problem"])
        cov = raw.get("covering", {})
        q = raw.get("quadrature", {})
        quad = QuadratureSpec(
            nodes_per_decade=int(q.get("nodes_per_decade", 48)),
            r_min=q.get("r_min"), r_max=q.get("r_max"),
            M=float(q.get("M", 40.0 / spec.beta)),
            m_nodes=int(q.get("m_nodes", 241)),
            delta_admissible=float(q.get("Delta", 0.5)))
        g = raw.get("grid", {})
        gspec = GridSpec(
            m_max=quad.M, m_nodes=quad.m_nodes,
            n_angles=int(g.get("n_angles", 16)),
            ring_octaves=float(g.get("ring_octaves", 5.0)),
            T_min=g.get("T_min"), T_max=g.get("T_max"),
            density_factor=float(g.get("density_factor", 4.0)))
        tol = raw.get("tolerances", {})
        mg = raw.get("geometry_m_grid", [-50.0, 50.0, 2001])
        asym = raw.get("asymptotics", {})
        points = [(
            _complex_of(p[:2] if isinstance(p, list) and len(p) >= 4 else p[0]),
            _complex_of(p[2:4] if isinstance(p, list) and len(p) >= 4 else p[1]),
        ) for p in raw.get("points", [])]
        if "points_csv" in raw:
            base = Path(path).parent
            csv_path = Path(raw["points_csv"])
            if not csv_path.is_absolute():
                csv_path = base / csv_path
            data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
            for row in data:
                points.append((complex(row[0], row[1]), complex(row[2], row[3])))
        out = Path(output_dir if output_dir is not None
                   else raw.get("output_dir", "out"))
        return RunConfig(
            spec=spec,
            zeta=int(cov.get("zeta", 2)),
            t_radius=float(cov.get("t_radius", 0.02)),
            t_aperture=float(cov.get("t_aperture", 0.1)),
            t_direction=float(cov.get("t_direction", 0.0)),
            quad=quad, gspec=gspec,
            solve_tol=float(tol.get("solve_tol", 1e-11)),
            max_iter=int(tol.get("max_iter", 200)),
            formal_tol=float(tol.get("formal_tol", 1e-13)),
            eps_solve=_complex_of(raw.get("eps"), 0.75 * spec.eps0),
            points=points,
            N_max=int(asym.get("N_max", 6)),
            eps_gevrey=tuple(asym.get("eps_gevrey", [0.25 * spec.eps0, 0.9 * spec.eps0, 5])),
            eps_decay=tuple(asym.get("eps_decay", [0.012 * spec.eps0, 0.9 * spec.eps0, 9])),
            decay_pair=int(asym.get("pair", 0)),
            seed=int(raw.get("seed", 0)),
            output_dir=out,
            geometry_m_grid=np.linspace(float(mg[0]), float(mg[1]), int(mg[2])),
            raw=raw)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed configuration: {exc}") from exc


def _fmt(x) -> str:
    if isinstance(x, complex):
        return f"{x.real:.17g},{x.imag:.17g}"
    return f"{float(x):.17g}"


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (int, float, complex,
                                                        np.floating, np.complexfloating))
                              else str(v) for v in row) + "\n")


def write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _covering(rc: RunConfig, ctx: dict):
    if "covering" not in ctx:
        ctx["covering"] = build_good_covering(
            rc.zeta, rc.spec.eps0, rc.spec, t_radius=rc.t_radius,
            t_aperture=rc.t_aperture, t_direction=rc.t_direction,
            m_grid=rc.geometry_m_grid, Delta=rc.quad.delta_admissible)
    return ctx["covering"]


def _geometry(rc: RunConfig, ctx: dict):
    if "geom" not in ctx:
        cov = _covering(rc, ctx)
        ctx["geom"] = make_geometry(rc.spec, cov.d_rays[0], m_grid=rc.geometry_m_grid)
    return ctx["geom"]


def cmd_check_geometry(rc: RunConfig, ctx: dict) -> int:
    spec = rc.spec
    rep = validate_assumptions(spec, rc.geometry_m_grid)
    failures = [{"name": c.name, "witness": c.witness} for c in rep.failures()]
    rows = [(c.name, int(c.passed), c.witness or "", "" if c.value is None else _fmt(c.value))
            for c in rep.checks]
    consts = {}
    assump_d = {"pass": False}
    small = {"pass": False}
    try:
        geom = _geometry(rc, ctx)
        consts = bound_constants(spec, geom, rc.geometry_m_grid)
        ctx["consts"] = consts
        assump_d = check_assumption_d(spec, consts)
        ops = operator_constants(spec, geom, consts, rc.geometry_m_grid)
        ctx["ops"] = ops
        small = check_smallness(spec, consts, spec.eps0, spec.coeffs.C_B,
                                ops["C2_plain"], ops["C3"])
        rows.append(("D.condition", int(assump_d["pass"]), "",
                     _fmt(assump_d["margin"])))
        rows.append(("smallness", int(small["pass"]), "", _fmt(small["lhs"])))
        if not assump_d["pass"]:
            failures.append({"name": "D.condition",
                             "witness": f"k_threshold={assump_d['k_threshold']}"})
        if not small["pass"]:
            failures.append({"name": "smallness", "witness": f"lhs={small['lhs']:.6g}"})
    except GeometryError as exc:
        failures.append({"name": "geometry", "witness": str(exc)})

    write_csv(rc.output_dir / "assumptions.csv",
              ["check", "passed", "witness", "value"], rows)
    const_rows = sorted(consts.items())
    if assump_d:
        const_rows.append(("k_threshold", assump_d.get("k_threshold", math.nan)))
    if "ops" in ctx:
        const_rows.append(("C2_plain", ctx["ops"]["C2_plain"]))
        for i, c in enumerate(ctx["ops"]["C3"], start=1):
            const_rows.append((f"C3_{i}", c))
    write_csv(rc.output_dir / "constants.csv", ["name", "value"], const_rows)
    write_json(rc.output_dir / "geometry_report.json", {
        "passed": not failures, "failures": failures,
        "assumption_d": assump_d, "smallness": small,
        "D1": rep.D1, "D2": rep.D2,
        "arc_center": rep.arc_center, "arc_width": rep.arc_width,
    })
    if failures:
        write_json(rc.output_dir / "witness.json", {"failures": failures})
        return 2
    return 0


def _solve(rc: RunConfig, ctx: dict):
    if "solution" not in ctx:
        geom = _geometry(rc, ctx)
        grid = build_grid(rc.spec, geom, rc.gspec)
        if "consts" not in ctx or "ops" not in ctx:
            ctx["consts"] = bound_constants(rc.spec, geom, rc.geometry_m_grid)
            ctx["ops"] = operator_constants(rc.spec, geom, ctx["consts"],
                                            rc.geometry_m_grid)
        small = check_smallness(rc.spec, ctx["consts"], rc.spec.eps0,
                                rc.spec.coeffs.C_B, ctx["ops"]["C2_plain"],
                                ctx["ops"]["C3"])["pass"]
        w0, w1, report = solve_coupled(rc.spec, rc.eps_solve, grid,
                                       tol=rc.solve_tol, max_iter=rc.max_iter,
                                       smallness_ok=small)
        ctx["grid"] = grid
        ctx["solution"] = (w0, w1, report)
    return ctx["solution"]


def cmd_solve(rc: RunConfig, ctx: dict) -> int:
    w0, w1, report = _solve(rc, ctx)
    grid = ctx["grid"]
    for name, w in (("omega0", w0), ("omega1", w1)):
        rows = []
        for i, tau in enumerate(grid.tau):
            for j, m in enumerate(grid.m):
                v = w.values[i, j]
                rows.append((tau.real, tau.imag, m, v.real, v.imag))
        for j, m in enumerate(grid.m):
            v = w.center[j]
            rows.append((0.0, 0.0, m, v.real, v.imag))
        write_csv(rc.output_dir / f"{name}.csv",
                  ["re_tau", "im_tau", "m", "re_omega", "im_omega"], rows)
    w_nodes, _ = grid.weights(rc.spec)
    norm_rows = []
    for i, tau in enumerate(grid.tau):
        norm_rows.append((tau.real, tau.imag,
                          float(np.max(w_nodes[i] * np.abs(w0.values[i]))),
                          float(np.max(w_nodes[i] * np.abs(w1.values[i])))))
    write_csv(rc.output_dir / "norms.csv",
              ["re_tau", "im_tau", "weighted_omega0", "weighted_omega1"],
              norm_rows)
    contraction = contraction_estimate(rc.spec, rc.eps_solve, grid,
                                       probes=4, seed=rc.seed)
    write_json(rc.output_dir / "solve_report.json", {
        "eps": rc.eps_solve, "iterations": report.iterations,
        "final_update": report.final_update,
        "contraction_iter": report.contraction,
        "contraction_probe": contraction,
        "norms": list(report.norms), "residual": report.residual,
        "smallness_ok": report.smallness_ok, "varpi": report.varpi,
        "grid_nodes": grid.n_nodes, "ladder_density": grid.N,
    })
    return 0


def _log_solution(rc: RunConfig, ctx: dict) -> LogSolution:
    if "log_solution" not in ctx:
        w0, w1, _ = _solve(rc, ctx)
        ctx["log_solution"] = LogSolution(rc.spec, ctx["grid"], w0, w1,
                                          rc.eps_solve,
                                          Delta=rc.quad.delta_admissible)
    return ctx["log_solution"]


def cmd_evaluate(rc: RunConfig, ctx: dict) -> int:
    if not rc.points:
        raise UsageError("evaluate requires points in the configuration")
    sol = _log_solution(rc, ctx)
    rows = []
    for (t, z) in rc.points:
        u0 = sol.component(0, t, z)
        u1 = sol.component(1, t, z)
        u = sol.evaluate(t, z)
        rows.append((t.real, t.imag, z.real, z.imag,
                     u0.real, u0.imag, u1.real, u1.imag, u.real, u.imag))
    write_csv(rc.output_dir / "evaluate.csv",
              ["re_t", "im_t", "re_z", "im_z", "re_u0", "im_u0",
               "re_u1", "im_u1", "re_u", "im_u"], rows)
    return 0


def cmd_residual(rc: RunConfig, ctx: dict) -> int:
    if not rc.points:
        raise UsageError("residual requires points in the configuration")
    sol = _log_solution(rc, ctx)
    w0, w1, _ = ctx["solution"]
    borel = residual_borel(w0, w1, rc.spec, rc.eps_solve)
    rows = []
    worst = 0.0
    for (t, z) in rc.points:
        r = residual_physical(sol, rc.spec, [(t, z)])
        worst = max(worst, r)
        rows.append((t.real, t.imag, z.real, z.imag, r))
    write_csv(rc.output_dir / "residual.csv",
              ["re_t", "im_t", "re_z", "im_z", "defect"], rows)
    write_json(rc.output_dir / "residual_report.json", {
        "borel_residual": borel, "physical_residual_max": worst,
    })
    return 0


def _series(rc: RunConfig, ctx: dict):
    if "series" not in ctx:
        ctx["series"] = formal_coefficients(rc.spec, rc.N_max + 1,
                                            tol=rc.formal_tol,
                                            m_grid=rc.gspec.m_grid())
    return ctx["series"]


def cmd_formal(rc: RunConfig, ctx: dict) -> int:
    series = _series(rc, ctx)
    for n in range(series.order + 1):
        rows = []
        for j in (0, 1):
            for p in sorted(series.coef[j][n]):
                arr = series.coef[j][n][p]
                for idx, m in enumerate(series.m):
                    rows.append((j, p, m, arr[idx].real, arr[idx].imag))
        write_csv(rc.output_dir / f"formal_order_{n}.csv",
                  ["component", "t_power", "m", "re", "im"], rows)
    res = formal_residual(series, rc.spec, series.order)
    write_json(rc.output_dir / "formal_report.json", {
        "order": series.order, "residual": res, "tol": rc.formal_tol,
    })
    return 0


def cmd_asymptotics(rc: RunConfig, ctx: dict) -> int:
    cov = _covering(rc, ctx)
    series = _series(rc, ctx)
    family = SolutionFamily(rc.spec, cov, rc.gspec, tol=min(rc.solve_tol, 1e-12),
                            m_grid=rc.geometry_m_grid)
    lo, hi, n = rc.eps_gevrey
    eps_g = [complex(m) * np.exp(1j * cov.directions[0])
             for m in np.exp(np.linspace(math.log(lo), math.log(hi), int(n)))]
    grep = gevrey_remainder_check(family, 0, series, rc.N_max, eps_g)
    rows = []
    for N in sorted(grep.remainders):
        for eps, r in zip(grep.eps_samples, grep.remainders[N]):
            rows.append((N, abs(eps), r))
    write_csv(rc.output_dir / "remainders.csv", ["N", "abs_eps", "R_N"], rows)

    lo, hi, n = rc.eps_decay
    arg = np.angle(cov.overlap_sample(rc.decay_pair))
    eps_d = [complex(m * np.exp(1j * arg))
             for m in np.exp(np.linspace(math.log(lo), math.log(hi), int(n)))]
    drep = difference_decay_fit(family, rc.decay_pair, eps_d)
    rows = [(abs(e), float(np.angle(e)), d0, d1)
            for e, d0, d1 in zip(drep.eps_samples, drep.decay[0], drep.decay[1])]
    write_csv(rc.output_dir / "decay.csv",
              ["abs_eps", "arg_eps", "delta0", "delta1"], rows)
    write_json(rc.output_dir / "fits.json", {
        "gevrey": {"A": grep.fit_A, "C": grep.fit_C,
                   "fit_residual": grep.fit_residual,
                   "ratio_table": grep.ratio_table,
                   "ratio_monotone": grep.ratio_monotone,
                   "warnings": grep.warnings},
        "decay": {"coefficients": list(drep.decay_coeffs),
                  "target_quadratic": drep.target_quadratic,
                  "relative_deviation": drep.relative_deviation,
                  "samples_used": len(drep.eps_samples),
                  "warnings": drep.warnings},
    })
    return 0


def cmd_all(rc: RunConfig, ctx: dict) -> int:
    code = cmd_check_geometry(rc, ctx)
    if code != 0:
        return code
    for fn in (cmd_solve, cmd_evaluate, cmd_residual, cmd_formal, cmd_asymptotics):
        code = fn(rc, ctx)
        if code != 0:
            return code
    return 0


DISPATCH = {
    "check-geometry": cmd_check_geometry,
    "solve": cmd_solve,
    "evaluate": cmd_evaluate,
    "residual": cmd_residual,
    "formal": cmd_formal,
    "asymptotics": cmd_asymptotics,
    "all": cmd_all,
}


def run(command: str, config_path: str | Path, output_dir: str | None = None) -> int:
    """Programmatic entry point mirroring the CLI contract."""
    if command not in DISPATCH:
        print(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}",
              file=sys.stderr)
        return 64
    try:
        rc = load_config(config_path, output_dir)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 65
    rc.output_dir.mkdir(parents=True, exist_ok=True)
    write_json(rc.output_dir / "run_report.json", {
        "version": __version__, "command": command, "seed": rc.seed,
        "solve_tol": rc.solve_tol, "m_nodes": rc.gspec.m_nodes,
        "M": rc.gspec.m_max, "zeta": rc.zeta,
    })
    ctx: dict = {}
    try:
        return DISPATCH[command](rc, ctx)
    except GeometryError as exc:
        print(f"geometry failure: {exc}", file=sys.stderr)
        write_json(rc.output_dir / "witness.json", {"failures": [str(exc)]})
        return 2
    except (DomainError, DivergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 64


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qborel",
        description="Analytic and formal solutions of a singularly perturbed "
                    "q-difference-differential equation, with verification.")
    parser.add_argument("command", help=f"one of: {', '.join(COMMANDS)}")
    parser.add_argument("config", help="path to the JSON run configuration")
    parser.add_argument("--output-dir", default=None,
                        help="override the configured output directory")
    try:
        args = parser.parse_args(argv)
    except SystemExit:
        return 64
    return run(args.command, args.config, args.output_dir)


if __name__ == "__main__":
    sys.exit(main())
