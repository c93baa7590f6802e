"""Command line entry point: ``vaxmfg {solve,sweep,verify,emit-plots}``.

Output files (all CSV files carry a header row):

trajectories.csv
    t, group, p_S, p_I, p_R, u_S, u_I, u_R, alpha_S, nu, Z
summary.json
    jump times, crossing counts, epidemic metrics, iterations, residual
    history and invariant checks of a solve
sweep.csv
    one row per (grid cell, group): the axis values, then ok, converged,
    iterations, group, jump_time, crossing_count, peak_time,
    peak_proportion, min_alpha_S, cumulative_recovered,
    composite_peak_time, composite_peak_proportion, error
deviations.csv
    group, deviation, equilibrium_cost, equilibrium_se, deviated_cost,
    deviated_se, gap, combined_se, paired_se, n_paths, seed, passes
occupancy.csv
    group, t, state, empirical, se, kfp, z_score
fig*.csv
    plot series written by ``emit-plots``; see the README for columns
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, config as cfgmod, oracle
from .model import STATES, I, S, ConfigError
from .solver import fixed_point_solve

log = logging.getLogger("vaxmfg")

TRAJECTORY_COLUMNS = ["t", "group", "p_S", "p_I", "p_R", "u_S", "u_I", "u_R", "alpha_S", "nu", "Z"]
SWEEP_METRICS = [
    "jump_time", "crossing_count", "peak_time", "peak_proportion",
    "min_alpha_S", "cumulative_recovered",
]
DEFAULT_DEVIATIONS = [
    oracle.DeviationSpec("scale_alpha_S", 0.9),
    oracle.DeviationSpec("scale_alpha_S", 1.1),
    oracle.DeviationSpec("shift_jump_time", 5.0),
    oracle.DeviationSpec("shift_jump_time", -5.0),
    oracle.DeviationSpec("force_no_vaccination"),
]


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    log.info("wrote %s", path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _write_json(path: Path, obj):
    path.write_text(json.dumps(_jsonable(obj), indent=2))
    log.info("wrote %s", path)


def _sample_indices(n_points: int, every: int) -> list[int]:
    idx = list(range(0, n_points, max(every, 1)))
    if idx[-1] != n_points - 1:
        idx.append(n_points - 1)
    return idx


def trajectory_rows(sol, every: int = 1):
    t = sol.config.grid.times
    return [
        [t[i], g.name or k, *sol.p[i, k], *sol.u[i, k], sol.alpha[i, k, S], sol.nu[i, k], sol.z[i, k]]
        for i in _sample_indices(len(t), every)
        for k, g in enumerate(sol.config.groups)
    ]


def solution_summary(sol) -> dict:
    rep = analysis.detect_jumps(sol.u[:, :, S], sol.config)
    met = analysis.epidemic_metrics(sol)
    return {
        "groups": [g.name for g in sol.config.groups],
        "converged": sol.converged,
        "iterations": sol.iterations,
        "residual_history": sol.residual_history,
        "jump_times": rep.jump_times,
        "crossing_counts": rep.crossing_counts,
        "thresholds": rep.thresholds,
        "initial_above": rep.initial_above,
        "peak_time": met.peak_time,
        "peak_proportion": met.peak_proportion,
        "min_alpha_S": met.min_alpha_S,
        "cumulative_recovered": met.cumulative_recovered,
        "composite_peak_time": met.composite_peak_time,
        "composite_peak_proportion": met.composite_peak_proportion,
        "composite_cumulative_recovered": met.composite_cumulative_recovered,
        "invariants": analysis.check_invariants(sol),
    }


def sweep_rows(result: analysis.SweepResult):
    axes = list(result.axes)
    header = axes + ["ok", "converged", "iterations", "group"] + SWEEP_METRICS + [
        "composite_peak_time", "composite_peak_proportion", "error",
    ]
    rows = []
    for cell in result.cells:
        for name in result.group_names:
            rows.append(
                [cell[a] for a in axes]
                + [cell["ok"], cell.get("converged", False), cell.get("iterations", ""), name]
                + [cell.get(f"{m}[{name}]", "") for m in SWEEP_METRICS]
                + [cell.get("composite_peak_time", ""), cell.get("composite_peak_proportion", ""),
                   cell.get("error", "")]
            )
    return header, rows


def _base_config(args):
    if args.config:
        config = cfgmod.load_config(args.config)
    else:
        config = cfgmod.preset(args.preset)
    return cfgmod.apply_overrides(config, _overrides(args))


def _overrides(args) -> dict:
    return {
        "c_p": args.cp,
        "lambda_S": args.lambda_S,
        "lambda_I": args.lambda_I,
        "c_nu": args.cnu,
        "epsilon": args.epsilon,
        "damping": args.damping,
        "max_iterations": args.max_iterations,
    }


def _linspace(lo, hi, n):
    return [round(float(x), 10) for x in np.linspace(lo, hi, n)]


def cmd_solve(args) -> int:
    config = _base_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sol = fixed_point_solve(config)
    summary = solution_summary(sol)
    _write_csv(out / "trajectories.csv", TRAJECTORY_COLUMNS, trajectory_rows(sol, args.downsample))
    _write_json(out / "summary.json", summary)
    (out / "config.yaml").write_text(cfgmod.dump_config(config))
    bad = [k for k, ok in summary["invariants"].items() if not ok]
    if bad:
        _write_json(out / "diagnostics.json", {"failed": bad, "residual_history": sol.residual_history})
        log.error("solve failed checks: %s", ", ".join(bad))
        return 1
    log.info("converged in %d iterations; jump times %s", sol.iterations, sol.jump_times)
    return 0


def _parse_axis(text: str):
    name, _, values = text.partition("=")
    if not values:
        raise ConfigError(f"--axis expects NAME=v1,v2,... or NAME=lo:hi:n, got {text!r}")
    if ":" in values:
        lo, hi, n = values.split(":")
        return name, _linspace(float(lo), float(hi), int(n))
    return name, [float(v) for v in values.split(",")]


def cmd_sweep(args) -> int:
    config = _base_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.axis:
        axes = dict(_parse_axis(a) for a in args.axis)
    else:
        grid = _linspace(0.3, 0.9, args.grid_res)
        axes = {"lambda_S": grid, "lambda_I": grid}
    result = analysis.sweep(config, axes, workers=args.workers)
    header, rows = sweep_rows(result)
    _write_csv(out / "sweep.csv", header, rows)
    _write_json(out / "sweep_meta.json", {"axes": result.axes, "provenance": result.provenance,
                                          "failures": result.failures})
    if result.failures:
        log.error("%d sweep cells failed", len(result.failures))
        return 1
    return 0


def cmd_verify(args) -> int:
    config = _base_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sol = fixed_point_solve(config)
    groups = range(config.n_groups) if args.group is None else [args.group]
    reports = []
    for k in groups:
        reports += oracle.nash_gap_test(sol, k, DEFAULT_DEVIATIONS, args.n_paths, args.seed)
    cols = list(reports[0].as_dict())
    _write_csv(out / "deviations.csv", cols, [[r.as_dict()[c] for c in cols] for r in reports])
    ok = sol.converged and all(r.passes for r in reports)
    for r in reports:
        log.info("group %d %-24s gap %+.5f (2 SE %.5f) %s", r.group, r.deviation, r.gap,
                 2 * r.combined_se, "ok" if r.passes else "PROFITABLE")
    if args.occupancy_paths:
        T = config.grid.horizon
        cps = [T / 4, T / 2, 3 * T / 4, T]
        rows = []
        for k in groups:
            freq, se = oracle.empirical_occupancy(sol, k, cps, args.occupancy_paths, args.seed)
            for c, tc in enumerate(cps):
                i = int(round(tc / config.grid.dt))
                for e, name in enumerate(STATES):
                    z = (freq[c, e] - sol.p[i, k, e]) / se[c, e] if se[c, e] > 0 else 0.0
                    ok &= abs(z) <= 3.0
                    rows.append([k, tc, name, freq[c, e], se[c, e], sol.p[i, k, e], z])
        _write_csv(out / "occupancy.csv", ["group", "t", "state", "empirical", "se", "kfp", "z_score"], rows)
    return 0 if ok else 1


def emit_plot_data(out: Path, grid_res: int = 7, every: int = 10, cnu_low: float = 0.005,
                   epsilon: float | None = None, workers: int = 1) -> dict:
    """Write the CSV series behind every figure of the numerical study."""
    out.mkdir(parents=True, exist_ok=True)
    eps = {} if epsilon is None else {"epsilon": epsilon}
    t1 = cfgmod.apply_overrides(cfgmod.preset("table1"), eps)
    status = {}

    # figs 1-3: awareness levels on the single population
    sols = {cp: fixed_point_solve(cfgmod.apply_overrides(t1, {"c_p": cp})) for cp in (0.0, 0.1, 0.5)}
    _write_csv(out / "fig1_jump_times.csv", ["c_p", "jump_time", "crossing_count"],
               [[cp, s.jump_times[0], s.crossing_counts[0]] for cp, s in sols.items()])
    t = t1.grid.times
    idx = _sample_indices(len(t), every)
    _write_csv(out / "fig1_vaccination.csv", ["t"] + [f"nu[c_p={cp}]" for cp in sols],
               [[t[i]] + [s.nu[i, 0] for s in sols.values()] for i in idx])
    thr = t1.groups[0].vaccination_threshold
    _write_csv(out / "fig2_value_S.csv", ["t", "threshold"] + [f"u_S[c_p={cp}]" for cp in sols],
               [[t[i], thr] + [s.u[i, 0, S] for s in sols.values()] for i in idx])
    _write_csv(
        out / "fig3_socialization_infection.csv",
        ["t"] + [f"alpha_S[c_p={cp}]" for cp in sols] + [f"p_I[c_p={cp}]" for cp in sols],
        [[t[i]] + [s.alpha[i, 0, S] for s in sols.values()] + [s.p[i, 0, I] for s in sols.values()]
         for i in idx],
    )
    status["fig1-3"] = all(s.converged for s in sols.values())

    # fig 4 and the infection-peak companion: guideline grid
    grid = _linspace(0.3, 0.9, grid_res)
    res = analysis.sweep(t1, {"lambda_S": grid, "lambda_I": grid}, workers=workers)
    header, rows = sweep_rows(res)
    _write_csv(out / "fig4_guideline_grid.csv", header, rows)
    status["fig4"] = not res.failures

    # figs 5-6: three income groups
    t2 = cfgmod.apply_overrides(cfgmod.preset("table2"), eps)
    names = [g.name for g in t2.groups]
    for fig, variants in (
        ("fig5_policy_compare", {"baseline": {}, "lambda_I=0.6": {"lambda_I": 0.6}}),
        ("fig6_cnu_compare", {"baseline": {}, f"c_nu={cnu_low:g}": {"c_nu": cnu_low}}),
    ):
        rows = []
        ok = True
        for label, ov in variants.items():
            s = fixed_point_solve(cfgmod.apply_overrides(t2, ov))
            ok &= s.converged
            for i in idx:
                for k, name in enumerate(names):
                    rows.append([label, t[i], name, *s.p[i, k], s.alpha[i, k, S], s.nu[i, k]])
        _write_csv(out / f"{fig}.csv", ["scenario", "t", "group", "p_S", "p_I", "p_R", "alpha_S", "nu"], rows)
        status[fig[:4]] = ok
    return status


def cmd_emit_plots(args) -> int:
    status = emit_plot_data(Path(args.out_dir), args.grid_res, args.downsample, args.cnu or 0.005,
                            args.epsilon, args.workers)
    return 0 if all(status.values()) else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", help="YAML config file")
    src.add_argument("--preset", default="table1", choices=sorted(cfgmod.PRESETS))
    common.add_argument("--out-dir", default="out")
    common.add_argument("--cp", type=float, help="awareness coefficient for S and I (enables awareness)")
    common.add_argument("--lambda-S", dest="lambda_S", type=float, help="guideline for susceptibles")
    common.add_argument("--lambda-I", dest="lambda_I", type=float, help="guideline for infected")
    common.add_argument("--cnu", type=float, help="vaccination cost for every group")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--damping", type=float)
    common.add_argument("--max-iterations", type=int)
    common.add_argument("--downsample", type=int, default=1, help="keep every n-th grid row")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="vaxmfg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", parents=[common], help="solve one equilibrium")
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("sweep", parents=[common], help="grid of solves")
    p.add_argument("--grid-res", type=int, default=7)
    p.add_argument("--axis", action="append", help="NAME=v1,v2,... or NAME=lo:hi:n (repeatable)")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("verify", parents=[common], help="Monte-Carlo Nash deviation checks")
    p.add_argument("--n-paths", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--group", type=int)
    p.add_argument("--occupancy-paths", type=int, default=0,
                   help="also compare simulated state occupancy with the densities")
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("emit-plots", parents=[common], help="CSV series for every figure")
    p.add_argument("--grid-res", type=int, default=7)
    p.set_defaults(func=cmd_emit_plots, downsample=10)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        code = args.func(args)
    except (ConfigError, oracle.DeviationError) as exc:
        log.error("%s", exc)
        return 2
    log.info("done in %.1fs", time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
