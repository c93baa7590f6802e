"""Equilibrium diagnostics and parameter sweeps."""

from __future__ import annotations

import hashlib
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import I, R, S, ModelConfig, SolverSettings

log = logging.getLogger(__name__)


@dataclass
class JumpReport:
    jump_times: np.ndarray
    crossing_counts: np.ndarray
    thresholds: np.ndarray
    initial_above: np.ndarray


@dataclass
class EpidemicMetrics:
    peak_time: np.ndarray
    peak_proportion: np.ndarray
    min_alpha_S: np.ndarray
    cumulative_recovered: np.ndarray
    composite_peak_time: float
    composite_peak_proportion: float
    composite_cumulative_recovered: float


def _crossings(signal: np.ndarray, times: np.ndarray) -> tuple[float, int]:
    """Jump time and number of on/off switches of ``signal > 0``."""
    on = signal > 0
    count = int(np.count_nonzero(on[1:] != on[:-1]))
    if not on[0]:
        return 0.0, count
    off = np.flatnonzero(~on)
    if off.size == 0:
        return float(times[-1]), count
    i = off[0]
    a, b = signal[i - 1], signal[i]
    frac = a / (a - b)
    return float(times[i - 1] + frac * (times[i] - times[i - 1])), count


def detect_jumps(u_S, config: ModelConfig, times=None) -> JumpReport:
    """Locate where ``kappa * u(S)`` falls to ``c_nu`` for every group.

    ``u_S`` has shape (n+1, K). The jump time is linearly interpolated
    between the last grid point with vaccination on and the first with it
    off; groups that never vaccinate get jump time 0.
    """
    u_S = np.asarray(u_S, dtype=float)
    if u_S.ndim == 1:
        u_S = u_S[:, None]
    times = config.grid.times if times is None else np.asarray(times)
    kappa, c_nu = config.param("kappa"), config.param("c_nu")
    jt = np.zeros(u_S.shape[1])
    cc = np.zeros(u_S.shape[1], dtype=int)
    for k in range(u_S.shape[1]):
        jt[k], cc[k] = _crossings(kappa[k] * u_S[:, k] - c_nu[k], times)
    return JumpReport(
        jump_times=jt,
        crossing_counts=cc,
        thresholds=c_nu / kappa,
        initial_above=kappa * u_S[0] > c_nu,
    )


def epidemic_metrics(solution) -> EpidemicMetrics:
    """Peak infection, minimum socialization and final recovered share.

    Everything is read off the grid; argmax ties resolve to the earliest time.
    """
    t = solution.config.grid.times
    m = solution.config.masses
    p_I = solution.p[:, :, I]
    peak_idx = np.argmax(p_I, axis=0)
    composite = p_I @ m
    c_idx = int(np.argmax(composite))
    return EpidemicMetrics(
        peak_time=t[peak_idx],
        peak_proportion=p_I[peak_idx, np.arange(p_I.shape[1])],
        min_alpha_S=solution.alpha[:, :, S].min(axis=0),
        cumulative_recovered=solution.p[-1, :, R].copy(),
        composite_peak_time=float(t[c_idx]),
        composite_peak_proportion=float(composite[c_idx]),
        composite_cumulative_recovered=float(solution.p[-1, :, R] @ m),
    )


@dataclass
class SweepResult:
    axes: dict[str, list[float]]
    cells: list[dict]
    provenance: str
    group_names: list[str] = field(default_factory=list)

    def column(self, key: str) -> np.ndarray:
        """Metric reshaped onto the axis grid (first axis varies slowest)."""
        shape = tuple(len(v) for v in self.axes.values())
        return np.array([c.get(key, np.nan) for c in self.cells], dtype=float).reshape(shape)

    @property
    def failures(self) -> list[dict]:
        return [c for c in self.cells if not c["ok"]]


def summarize(solution) -> dict:
    """Flat record of jump and epidemic metrics for one solve."""
    met = epidemic_metrics(solution)
    rec = {
        "converged": bool(solution.converged),
        "iterations": int(solution.iterations),
        "final_residual": float(solution.residual_history[-1]),
        "composite_peak_time": met.composite_peak_time,
        "composite_peak_proportion": met.composite_peak_proportion,
        "composite_cumulative_recovered": met.composite_cumulative_recovered,
    }
    for k, g in enumerate(solution.config.groups):
        tag = g.name or str(k)
        rec[f"jump_time[{tag}]"] = float(solution.jump_times[k])
        rec[f"crossing_count[{tag}]"] = int(solution.crossing_counts[k])
        rec[f"peak_time[{tag}]"] = float(met.peak_time[k])
        rec[f"peak_proportion[{tag}]"] = float(met.peak_proportion[k])
        rec[f"min_alpha_S[{tag}]"] = float(met.min_alpha_S[k])
        rec[f"cumulative_recovered[{tag}]"] = float(met.cumulative_recovered[k])
    return rec


def _solve_cell(args):
    from .config import apply_overrides
    from .solver import fixed_point_solve

    base, point, settings = args
    cell = dict(point)
    try:
        sol = fixed_point_solve(apply_overrides(base, point), settings)
    except Exception as exc:  # sweep failures are recorded, not raised
        cell.update(ok=False, error=f"{type(exc).__name__}: {exc}")
        return cell
    cell.update(summarize(sol))
    failed = [name for name, ok in check_invariants(sol).items() if not ok]
    cell["ok"] = not failed
    if failed:
        cell["error"] = "failed checks: " + ", ".join(failed)
    return cell


def sweep(
    base_config: ModelConfig,
    axis_specs: Mapping[str, Sequence[float]],
    settings: SolverSettings | None = None,
    workers: int = 1,
) -> SweepResult:
    """Solve every point of the Cartesian grid spanned by ``axis_specs``.

    Axis names are those accepted by :func:`vaxmfg.config.apply_overrides`.
    Without explicit ``settings`` each cell uses its own config's solver
    settings, so a ``c_p`` axis switches awareness on. Cells are independent;
    with ``workers > 1`` they run in separate processes, which does not change
    the results.
    """
    from .config import OVERRIDABLE, dump_config

    axes = {name: [float(v) for v in values] for name, values in axis_specs.items()}
    for name in axes:
        if name not in OVERRIDABLE:
            raise KeyError(f"unknown sweep axis {name!r}; choose from {sorted(OVERRIDABLE)}")
    points = [dict(zip(axes, combo)) for combo in itertools.product(*axes.values())]
    jobs = [(base_config, pt, settings) for pt in points]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_solve_cell, jobs))
    else:
        cells = [_solve_cell(j) for j in jobs]
    digest = hashlib.sha256(dump_config(base_config).encode()).hexdigest()[:16]
    return SweepResult(
        axes=axes,
        cells=cells,
        provenance=digest,
        group_names=[g.name or str(k) for k, g in enumerate(base_config.groups)],
    )


def check_invariants(solution) -> dict[str, bool]:
    """Structural properties every accepted solution must satisfy.

    The value ordering u(S) < u(I) is checked on all grid points strictly
    before ``T - dt``; aggregate positivity only when every group is in
    contact with an initially infected group.
    """
    p, u = solution.p, solution.u
    out = {
        "converged": bool(solution.converged),
        "simplex": bool(np.max(np.abs(p.sum(axis=2) - 1.0)) <= 1e-9),
        "density_range": bool(p.min() >= 0.0 and p.max() <= 1.0),
        "terminal_value": bool(np.all(u[-1] == 0.0)),
        "recovered_value": bool(np.all(u[:, :, R] == 0.0)),
        "value_nonnegative": bool(u.min() >= 0.0),
        "controls_admissible": bool(
            solution.alpha.min() >= 0.0 and solution.alpha.max() <= 1.0
            and np.all((solution.nu == 0.0) | (solution.nu == 1.0))
        ),
        "value_ordering": bool(np.all(u[:-2, :, S] < u[:-2, :, I])),
        "at_most_one_jump": bool(np.all(np.asarray(solution.crossing_counts) <= 1)),
    }
    if not solution.config.regularity_violations():
        out["aggregate_positive"] = bool(np.all(solution.z > 0))
    return out
