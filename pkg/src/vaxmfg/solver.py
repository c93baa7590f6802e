"""Forward/backward Euler sweeps and the Picard loop for the equilibrium system."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np

from .model import (
    I,
    R,
    S,
    ModelConfig,
    SolverSettings,
    compute_aggregate,
)

log = logging.getLogger(__name__)

# densities this far below zero are treated as rounding noise and clipped
NEG_TOL = 1e-12


class StepSizeError(RuntimeError):
    """Explicit Euler produced a negative density; reduce dt."""


class NumericalInstabilityError(RuntimeError):
    """Non-finite values appeared in a sweep."""


@dataclass
class EquilibriumSolution:
    config: ModelConfig
    settings: SolverSettings
    p: np.ndarray  # (n+1, K, 3)
    u: np.ndarray  # (n+1, K, 3)
    alpha: np.ndarray  # (n+1, K, 3)
    nu: np.ndarray  # (n+1, K)
    z: np.ndarray  # (n+1, K)
    iterations: int
    residual_history: list[float]
    converged: bool
    jump_times: np.ndarray = field(default=None)
    crossing_counts: np.ndarray = field(default=None)

    @property
    def times(self) -> np.ndarray:
        return self.config.grid.times

    @property
    def composite_infected(self) -> np.ndarray:
        return self.p[:, :, I] @ self.config.masses


@numba.njit(cache=True)
def _forward_kernel(p0, alpha_S, nu, z, beta, kappa, gamma, dt):
    n1, K = alpha_S.shape
    p = np.empty((n1, K, 3))
    p[0] = p0
    for i in range(n1 - 1):
        for k in range(K):
            pS = p[i, k, 0]
            pI = p[i, k, 1]
            si = dt * beta[k] * alpha_S[i, k] * z[i, k] * pS
            sr = dt * kappa[k] * nu[i, k] * pS
            ir = dt * gamma[k] * pI
            new = (pS - si - sr, pI + si - ir, p[i, k, 2] + sr + ir)
            for e in range(3):
                v = new[e]
                if v < 0.0:
                    if v < -NEG_TOL:
                        return p, i
                    v = 0.0
                elif v > 1.0:
                    if v > 1.0 + NEG_TOL:
                        return p, i
                    v = 1.0
                p[i + 1, k, e] = v
    return p, -1


@numba.njit(cache=True)
def _backward_kernel(alpha_S, nu, z, lam_S, P, beta, kappa, gamma, c_lambda, c_nu, c_I, c_pS, c_pI, dt,
                     optimize=False):
    # with optimize, alpha_S and nu are outputs: pointwise best responses to u at t_{i+1}
    n1, K = alpha_S.shape
    u = np.zeros((n1, K, 3))
    for i in range(n1 - 2, -1, -1):
        j = i + 1
        for k in range(K):
            uS = u[j, k, 0]
            uI = u[j, k, 1]
            if optimize:
                a = lam_S[j, k] + beta[k] * z[j, k] * (uS - uI) / (2.0 * c_lambda[k])
                alpha_S[j, k] = min(max(a, 0.0), 1.0)
                nu[j, k] = 1.0 if kappa[k] * uS > c_nu[k] else 0.0
            a = alpha_S[j, k]
            dev = lam_S[j, k] - a
            duS = (
                beta[k] * a * z[j, k] * (uS - uI)
                + kappa[k] * nu[j, k] * uS
                - c_lambda[k] * dev * dev
                - c_nu[k] * nu[j, k]
                - c_pS[k] * P[j]
            )
            duI = gamma[k] * uI - c_I[k] - c_pI[k] * P[j]
            u[i, k, 0] = uS - dt * duS
            u[i, k, 1] = uI - dt * duI
    return u


def solve_forward(alpha_S, nu, z, config: ModelConfig) -> np.ndarray:
    """Propagate the state densities from the initial distribution.

    The rates on ``[t_i, t_{i+1})`` are frozen at their grid values ``t_i``,
    so every step moves mass along the generator and preserves the row sums.
    """
    p, bad = _forward_kernel(
        np.ascontiguousarray(config.initial, dtype=float),
        np.ascontiguousarray(alpha_S, dtype=float),
        np.ascontiguousarray(nu, dtype=float),
        np.ascontiguousarray(z, dtype=float),
        config.param("beta"),
        config.param("kappa"),
        config.param("gamma"),
        config.grid.dt,
    )
    if bad >= 0:
        raise StepSizeError(
            f"density left [0, 1] at step {bad} (t={bad * config.grid.dt:.4g}); "
            "try a smaller dt"
        )
    return p


def solve_backward(alpha_S, nu, z, p, config: ModelConfig, awareness: bool = False) -> np.ndarray:
    """Integrate the value functions backward from the zero terminal condition.

    Controls are taken as given. With ``awareness`` the composite infected
    proportion of ``p`` enters the S and I running costs; otherwise ``p`` is
    not used.
    """
    n1, K = config.grid.n_steps + 1, config.n_groups
    if awareness:
        P = np.ascontiguousarray(p[:, :, I] @ config.masses)
        c_pS, c_pI = config.param("c_pS"), config.param("c_pI")
    else:
        P = np.zeros(n1)
        c_pS = c_pI = np.zeros(K)
    u = _backward_kernel(
        np.ascontiguousarray(alpha_S, dtype=float),
        np.ascontiguousarray(nu, dtype=float),
        np.ascontiguousarray(z, dtype=float),
        np.ascontiguousarray(config.guidelines.values[:, :, S]),
        P,
        config.param("beta"),
        config.param("kappa"),
        config.param("gamma"),
        config.param("c_lambda"),
        config.param("c_nu"),
        config.param("c_I"),
        c_pS,
        c_pI,
        config.grid.dt,
    )
    if not np.all(np.isfinite(u)):
        raise NumericalInstabilityError("value function sweep produced non-finite values")
    return u


def solve_hjb(z, P, config: ModelConfig, awareness_scale: float = 1.0):
    """Best-response values in a frozen environment.

    Unlike :func:`solve_backward`, controls are re-optimized at every step
    against the values being computed. ``P`` is the composite infected
    proportion path; the awareness coefficients are multiplied by
    ``awareness_scale``. Returns ``(u, alpha_S, nu)``.
    """
    n1, K = config.grid.n_steps + 1, config.n_groups
    alpha_S = config.guidelines.values[:, :, S].copy()
    nu = np.zeros((n1, K))
    u = _backward_kernel(
        alpha_S,
        nu,
        np.ascontiguousarray(z, dtype=float),
        np.ascontiguousarray(config.guidelines.values[:, :, S]),
        np.ascontiguousarray(P, dtype=float),
        config.param("beta"),
        config.param("kappa"),
        config.param("gamma"),
        config.param("c_lambda"),
        config.param("c_nu"),
        config.param("c_I"),
        awareness_scale * config.param("c_pS"),
        awareness_scale * config.param("c_pI"),
        config.grid.dt,
        True,
    )
    if not np.all(np.isfinite(u)):
        raise NumericalInstabilityError("value function sweep produced non-finite values")
    # the sweep sets controls on rows 1..n only
    lam_S = config.guidelines.values[0, :, S]
    alpha_S[0] = np.clip(
        lam_S + config.param("beta") * z[0] * (u[0, :, S] - u[0, :, I]) / (2.0 * config.param("c_lambda")),
        0.0, 1.0,
    )
    nu[0] = (config.param("kappa") * u[0, :, S] > config.param("c_nu")).astype(float)
    return u, alpha_S, nu


def residual_norm(prev, nxt) -> float:
    """Sup over time of the Euclidean norm across the remaining axes."""
    prev = np.asarray(prev, dtype=float)
    nxt = np.asarray(nxt, dtype=float)
    if prev.shape != nxt.shape:
        raise ValueError(f"shape mismatch {prev.shape} vs {nxt.shape}")
    d = (nxt - prev).reshape(len(prev), -1)
    return float(np.max(np.sqrt(np.sum(d * d, axis=1))))


def aggregate_path(p, config: ModelConfig) -> np.ndarray:
    """Aggregate at every grid point, with infected agents at their guideline level."""
    return compute_aggregate(
        p[:, :, I], config.guidelines.values[:, :, I], config.contact.w, config.masses
    )


def best_response(u, z, config: ModelConfig):
    """Equilibrium controls on the whole grid given values and aggregate.

    Returns ``alpha`` of shape (n+1, K, 3) and ``nu`` of shape (n+1, K).
    """
    lam = config.guidelines.values
    beta, c_lambda = config.param("beta"), config.param("c_lambda")
    kappa, c_nu = config.param("kappa"), config.param("c_nu")
    alpha = lam.copy()
    alpha[:, :, S] = np.clip(
        lam[:, :, S] + beta * z * (u[:, :, S] - u[:, :, I]) / (2.0 * c_lambda), 0.0, 1.0
    )
    nu = (kappa * u[:, :, S] > c_nu).astype(float)
    return alpha, nu


def fixed_point_solve(config: ModelConfig, settings: SolverSettings | None = None) -> EquilibriumSolution:
    """Picard iteration on (aggregate -> controls -> densities -> values).

    Starts from densities frozen at the initial distribution and zero values.
    Each sweep computes the aggregate from the current densities, best
    responses from the current values, then a forward and a backward pass
    with those controls. Stops once both the density and the value iterates
    of every group move by at most ``epsilon`` in the sup-Euclidean norm.
    """
    from .analysis import detect_jumps

    settings = settings or config.solver
    config.check_regularity()
    n1, K = config.grid.n_steps + 1, config.n_groups
    p = np.broadcast_to(config.initial, (n1, K, 3)).copy()
    u = np.zeros((n1, K, 3))
    theta = settings.damping
    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, settings.max_iterations + 1):
        z = aggregate_path(p, config)
        alpha, nu = best_response(u, z, config)
        p_new = solve_forward(alpha[:, :, S], nu, z, config)
        u_new = solve_backward(alpha[:, :, S], nu, z, p_new, config, settings.awareness_enabled)
        if theta < 1.0:
            p_new = theta * p_new + (1.0 - theta) * p
            u_new = theta * u_new + (1.0 - theta) * u
        res = max(
            max(residual_norm(p[:, k], p_new[:, k]) for k in range(K)),
            max(residual_norm(u[:, k], u_new[:, k]) for k in range(K)),
        )
        history.append(res)
        log.debug("iteration %d residual %.3e", it, res)
        p, u = p_new, u_new
        if not np.isfinite(res):
            raise NumericalInstabilityError(f"residual became non-finite at iteration {it}")
        if res <= settings.epsilon:
            converged = True
            break
    if not converged:
        log.warning("no convergence after %d iterations (last residual %.3e)", it, history[-1])

    z = aggregate_path(p, config)
    alpha, nu = best_response(u, z, config)
    jumps = detect_jumps(u[:, :, S], config)
    return EquilibriumSolution(
        config=config,
        settings=settings,
        p=p,
        u=u,
        alpha=alpha,
        nu=nu,
        z=z,
        iterations=it,
        residual_history=history,
        converged=converged,
        jump_times=jumps.jump_times,
        crossing_counts=jumps.crossing_counts,
    )
