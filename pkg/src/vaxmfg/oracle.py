"""Independent checks: closed-form values and a Monte-Carlo agent simulator.

The simulator draws individual continuous-time Markov chain paths in the
frozen mean-field environment of a solved equilibrium and integrates the
running cost along each path. Paths are generated by uniformization: a
Poisson clock of rate ``q_bar`` proposes events and each proposal is
accepted as a real transition with probability ``rate / q_bar``. Proposal
times and acceptance uniforms do not depend on the strategy, so arms that
share a seed use common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import I, R, S, GroupParams

KINDS = ("identity", "scale_alpha_S", "shift_jump_time", "force_no_vaccination", "constant_alpha")


class DeviationError(ValueError):
    """Deviation produces inadmissible controls."""


def closed_form_u_I(g: GroupParams, T: float, t):
    """Baseline value of an infected agent, ``(c_I / gamma) (1 - exp(-gamma (T - t)))``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > T):
        raise ValueError(f"t must lie in [0, {T}]")
    out = g.c_I / g.gamma * -np.expm1(-g.gamma * (T - t))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DeviationSpec:
    kind: str
    magnitude: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DeviationError(f"unknown deviation kind {self.kind!r}; choose from {KINDS}")

    @property
    def label(self) -> str:
        if self.kind in ("identity", "force_no_vaccination"):
            return self.kind
        return f"{self.kind}({self.magnitude:g})"


@dataclass
class CostEstimate:
    mean: float
    se: float
    n_paths: int
    seed: int
    costs: np.ndarray


@dataclass
class DeviationReport:
    group: int
    deviation: str
    equilibrium_cost: float
    equilibrium_se: float
    deviated_cost: float
    deviated_se: float
    gap: float
    combined_se: float
    paired_se: float
    n_paths: int
    seed: int

    @property
    def passes(self) -> bool:
        """No statistically significant profitable deviation (2 combined SEs)."""
        return self.gap >= -2.0 * self.combined_se

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passes"] = self.passes
        return d


def strategy_controls(solution, k: int, deviation: DeviationSpec | None = None):
    """Susceptible socialization and vaccination paths for one agent of group ``k``."""
    alpha_S = solution.alpha[:, k, S].copy()
    nu = solution.nu[:, k].copy()
    if deviation is None or deviation.kind == "identity":
        return alpha_S, nu
    kind, mag = deviation.kind, deviation.magnitude
    if kind == "scale_alpha_S":
        alpha_S = alpha_S * mag
    elif kind == "constant_alpha":
        alpha_S = np.full_like(alpha_S, mag)
    elif kind == "force_no_vaccination":
        nu = np.zeros_like(nu)
    elif kind == "shift_jump_time":
        t = solution.config.grid.times
        t1 = min(max(solution.jump_times[k] + mag, 0.0), t[-1])
        nu = (t < t1).astype(float)
    if np.any(alpha_S < 0) or np.any(alpha_S > 1):
        raise DeviationError(f"{deviation.label} drives alpha outside [0, 1]")
    return alpha_S, nu


def _environment(solution, k, alpha_S, nu):
    """Per-step transition rates and running-cost rates for one agent."""
    cfg = solution.config
    g = cfg.groups[k]
    lam = cfg.guidelines.values[:, k, :]
    aware = solution.settings.awareness_enabled
    P = solution.composite_infected if aware else np.zeros(len(alpha_S))
    r_SI = g.beta * alpha_S * solution.z[:, k]
    r_SR = g.kappa * nu
    f_S = g.c_lambda * (lam[:, S] - alpha_S) ** 2 + g.c_nu * nu + g.c_pS * P * aware
    f_I = g.c_I + g.c_pI * P * aware
    return r_SI, r_SR, f_S, np.broadcast_to(f_I, f_S.shape).astype(float)


def _bound(r_SI, r_SR, gamma):
    return float(max(np.max(r_SI + r_SR), gamma))


def _simulate(solution, k, alpha_S, nu, n_paths, seed, q_bar=None, checkpoints=()):
    """Path costs and, optionally, states at checkpoint times."""
    cfg = solution.config
    g = cfg.groups[k]
    dt, n = cfg.grid.dt, cfg.grid.n_steps
    T = cfg.grid.horizon
    r_SI, r_SR, f_S, f_I = _environment(solution, k, alpha_S, nu)
    if q_bar is None:
        q_bar = _bound(r_SI, r_SR, g.gamma)
    elif q_bar < _bound(r_SI, r_SR, g.gamma) * (1 - 1e-12):
        raise ValueError("q_bar is below the largest exit rate")
    # cumulative running cost at grid points; rates are frozen on each step
    F = np.zeros((3, n + 1))
    F[S, 1:] = np.cumsum(f_S[:-1] * dt)
    F[I, 1:] = np.cumsum(f_I[:-1] * dt)
    f = np.stack([f_S, f_I, np.zeros_like(f_S)])

    def cum(state, t):
        i = np.minimum((t / dt).astype(np.int64), n - 1)
        return F[state, i] + f[state, i] * (t - i * dt)

    rng = np.random.default_rng(seed)
    state = rng.choice(3, size=n_paths, p=cfg.initial[k])
    t = np.zeros(n_paths)
    enter = np.zeros(n_paths)
    cost = np.zeros(n_paths)
    active = state != R
    checkpoints = np.asarray(checkpoints, dtype=float)
    if np.any(checkpoints < 0) or np.any(checkpoints > T):
        raise ValueError(f"checkpoints must lie in [0, {T}]")
    # absorbed paths keep the default R
    at_cp = np.full((len(checkpoints), n_paths), R, dtype=np.int64)
    while active.any():
        # full-size draws keep path j aligned with the same numbers in every arm
        t_new = t + rng.exponential(1.0 / q_bar, size=n_paths)
        U = rng.random(n_paths) * q_bar
        for c, tc in enumerate(checkpoints):
            hit = active & (t <= tc) & (t_new > tc)
            at_cp[c, hit] = state[hit]
        done = active & (t_new >= T)
        if done.any():
            cost[done] += cum(state[done], np.full(done.sum(), T)) - cum(state[done], enter[done])
            active &= ~done
        live = np.flatnonzero(active)
        if live.size:
            tl = t_new[live]
            i = np.minimum((tl / dt).astype(np.int64), n - 1)
            st = state[live]
            u = U[live]
            to_I = (st == S) & (u < r_SI[i])
            to_R = ((st == S) & ~to_I & (u < r_SI[i] + r_SR[i])) | ((st == I) & (u < g.gamma))
            moved = to_I | to_R
            if moved.any():
                mv = live[moved]
                cost[mv] += cum(state[mv], tl[moved]) - cum(state[mv], enter[mv])
                enter[mv] = tl[moved]
                state[mv[to_I[moved]]] = I
                state[mv[to_R[moved]]] = R
                active[mv[to_R[moved]]] = False
        t = t_new
    return cost, at_cp


def _estimate(costs, seed):
    n = len(costs)
    se = float(np.std(costs, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return CostEstimate(float(np.mean(costs)), se, n, seed, costs)


def simulate_agent_cost(
    solution, group: int, strategy: DeviationSpec | None = None, n_paths: int = 10_000,
    seed: int = 0, q_bar: float | None = None,
) -> CostEstimate:
    """Monte-Carlo estimate of one agent's expected cost in the frozen environment.

    ``strategy=None`` plays the equilibrium controls.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    alpha_S, nu = strategy_controls(solution, group, strategy)
    costs, _ = _simulate(solution, group, alpha_S, nu, n_paths, seed, q_bar)
    return _estimate(costs, seed)


def nash_gap_test(solution, group: int, deviations, n_paths: int = 10_000, seed: int = 0):
    """Cost gap of each deviation against the equilibrium, on common random numbers."""
    g = solution.config.groups[group]
    arms = [strategy_controls(solution, group, None)]
    arms += [strategy_controls(solution, group, d) for d in deviations]
    q_bar = 0.0
    for a, nu in arms:
        r_SI, r_SR, _, _ = _environment(solution, group, a, nu)
        q_bar = max(q_bar, _bound(r_SI, r_SR, g.gamma))
    eq_costs, _ = _simulate(solution, group, *arms[0], n_paths, seed, q_bar)
    eq = _estimate(eq_costs, seed)
    reports = []
    for d, (a, nu) in zip(deviations, arms[1:]):
        dev_costs, _ = _simulate(solution, group, a, nu, n_paths, seed, q_bar)
        dev = _estimate(dev_costs, seed)
        diff = dev_costs - eq_costs
        paired = float(np.std(diff, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else float("nan")
        reports.append(
            DeviationReport(
                group=group,
                deviation=d.label,
                equilibrium_cost=eq.mean,
                equilibrium_se=eq.se,
                deviated_cost=dev.mean,
                deviated_se=dev.se,
                gap=dev.mean - eq.mean,
                combined_se=math.hypot(eq.se, dev.se),
                paired_se=paired,
                n_paths=n_paths,
                seed=seed,
            )
        )
    return reports


def empirical_occupancy(solution, group: int, checkpoints, n_paths: int = 100_000, seed: int = 0):
    """Fractions of equilibrium paths in each state at the checkpoint times.

    Returns ``(freq, se)`` arrays of shape (len(checkpoints), 3) where ``se``
    is the binomial standard error of each fraction.
    """
    alpha_S, nu = strategy_controls(solution, group, None)
    _, at_cp = _simulate(solution, group, alpha_S, nu, n_paths, seed, checkpoints=checkpoints)
    freq = np.stack([(at_cp == e).mean(axis=1) for e in (S, I, R)], axis=1)
    se = np.sqrt(freq * (1 - freq) / n_paths)
    return freq, se
