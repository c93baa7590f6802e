"""Domain types and pointwise equilibrium formulas for the SIR vaccination game.

States are indexed ``S=0, I=1, R=2`` throughout; arrays indexed by time step
carry ``n_steps + 1`` rows so that both endpoints of ``[0, T]`` are stored.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

S, I, R = 0, 1, 2
STATES = ("S", "I", "R")


class ConfigError(ValueError):
    """Invalid model or solver configuration."""


class DomainError(ValueError):
    """Argument outside the domain of a pointwise formula."""


class ModelRegularityWarning(UserWarning):
    """Some group has no contact with an initially infected group."""


@dataclass(frozen=True)
class GroupParams:
    beta: float
    gamma: float
    kappa: float
    c_lambda: float
    c_nu: float
    c_I: float
    c_pS: float = 0.0
    c_pI: float = 0.0
    mass: float = 1.0
    name: str = ""

    def __post_init__(self):
        for attr in ("beta", "gamma", "kappa", "c_lambda", "c_nu", "c_I"):
            val = getattr(self, attr)
            if not np.isfinite(val) or val <= 0:
                raise ConfigError(f"{attr} must be strictly positive, got {val!r}")
        for attr in ("c_pS", "c_pI"):
            val = getattr(self, attr)
            if not np.isfinite(val) or val < 0:
                raise ConfigError(f"{attr} must be nonnegative, got {val!r}")
        if not 0 < self.mass <= 1:
            raise ConfigError(f"group mass must lie in (0, 1], got {self.mass!r}")

    @property
    def vaccination_threshold(self) -> float:
        """Value of u(S) above which vaccinating at full rate pays off."""
        return self.c_nu / self.kappa


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    dt: float

    def __post_init__(self):
        if not self.horizon > 0 or not self.dt > 0:
            raise ConfigError("horizon and dt must be positive")
        n = self.n_steps
        if abs(n * self.dt - self.horizon) > 1e-9:
            raise ConfigError(
                f"horizon {self.horizon} is not an integer multiple of dt {self.dt}"
            )
        if n < 2:
            raise ConfigError("time grid needs at least two steps")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True, eq=False)
class Guidelines:
    """Per-grid-point guideline levels, array of shape ``(n_steps + 1, K, 3)``."""

    values: np.ndarray

    def __post_init__(self):
        lam = np.array(self.values, dtype=float)
        if lam.ndim != 3 or lam.shape[2] != 3:
            raise ConfigError(f"guidelines must have shape (n_steps+1, K, 3), got {lam.shape}")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ConfigError("guideline values must be > 0 (full lockdown excluded)")
        if np.any(lam > 1):
            raise ConfigError("guideline values must be <= 1")
        lam.setflags(write=False)
        object.__setattr__(self, "values", lam)

    @classmethod
    def constant(cls, levels: Sequence[Sequence[float]], grid: TimeGrid) -> "Guidelines":
        """Expand per-group ``(lambda_S, lambda_I, lambda_R)`` triples over the grid."""
        levels = np.asarray(levels, dtype=float)
        if levels.ndim == 1:
            levels = levels[None, :]
        return cls(np.broadcast_to(levels, (grid.n_steps + 1,) + levels.shape).copy())

    def __eq__(self, other):
        if not isinstance(other, Guidelines):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None

    @property
    def n_groups(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class ContactMatrix:
    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ConfigError(f"contact matrix must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0) or np.any(w > 1):
            raise ConfigError("contact matrix entries must lie in [0, 1]")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def __eq__(self, other):
        if not isinstance(other, ContactMatrix):
            return NotImplemented
        return np.array_equal(self.w, other.w)

    __hash__ = None


@dataclass(frozen=True)
class SolverSettings:
    epsilon: float = 0.1
    max_iterations: int = 500
    damping: float = 1.0
    awareness_enabled: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not 0 < self.damping <= 1:
            raise ConfigError("damping must lie in (0, 1]")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ConfigError("max_iterations must be a positive integer")


@dataclass(frozen=True, eq=False)
class ModelConfig:
    groups: tuple[GroupParams, ...]
    guidelines: Guidelines
    contact: ContactMatrix
    initial: np.ndarray
    grid: TimeGrid
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        groups = tuple(self.groups)
        object.__setattr__(self, "groups", groups)
        K = len(groups)
        if K < 1:
            raise ConfigError("at least one group is required")
        masses = np.array([g.mass for g in groups])
        if abs(masses.sum() - 1.0) > 1e-12:
            raise ConfigError(f"group masses must sum to 1, got {masses.sum()!r}")
        if self.contact.w.shape != (K, K):
            raise ConfigError(f"contact matrix must be {K}x{K}, got {self.contact.w.shape}")
        if self.guidelines.values.shape != (self.grid.n_steps + 1, K, 3):
            raise ConfigError(
                "guidelines must be defined on every grid point for every group: "
                f"expected {(self.grid.n_steps + 1, K, 3)}, got {self.guidelines.values.shape}"
            )
        pi0 = np.array(self.initial, dtype=float)
        if pi0.shape != (K, 3):
            raise ConfigError(f"initial distribution must have shape ({K}, 3)")
        if np.any(pi0 < 0) or np.any(np.abs(pi0.sum(axis=1) - 1) > 1e-12):
            raise ConfigError("initial distributions must lie on the probability simplex")
        pi0.setflags(write=False)
        object.__setattr__(self, "initial", pi0)

    def __eq__(self, other):
        if not isinstance(other, ModelConfig):
            return NotImplemented
        return (
            self.groups == other.groups
            and self.guidelines == other.guidelines
            and self.contact == other.contact
            and np.array_equal(self.initial, other.initial)
            and self.grid == other.grid
            and self.solver == other.solver
        )

    __hash__ = None

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def masses(self) -> np.ndarray:
        return np.array([g.mass for g in self.groups])

    def param(self, name: str) -> np.ndarray:
        """Per-group vector of a GroupParams field."""
        return np.array([getattr(g, name) for g in self.groups], dtype=float)

    def regularity_violations(self) -> list[int]:
        """Groups with no contact to any initially infected group."""
        seeded = self.initial[:, I] > 0
        return [k for k in range(self.n_groups) if not np.any((self.contact.w[k] > 0) & seeded)]

    def check_regularity(self) -> bool:
        bad = self.regularity_violations()
        if bad:
            warnings.warn(
                f"groups {bad} have no contact with an initially infected group; "
                "the aggregate may vanish",
                ModelRegularityWarning,
                stacklevel=2,
            )
        return not bad

    def with_groups(self, **changes) -> "ModelConfig":
        """Copy with the same field changes applied to every group."""
        return replace(self, groups=tuple(replace(g, **changes) for g in self.groups))


def _check_unit(name, value):
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")


def running_cost(e: int, alpha: float, nu: float, p_I: float, g: GroupParams, lam) -> float:
    """Instantaneous cost of an agent in state ``e``.

    ``lam`` holds the guideline levels ``(lambda_S, lambda_I, lambda_R)`` at the
    current time and ``p_I`` is the composite infected proportion; the
    awareness terms vanish when ``c_pS = c_pI = 0``.
    """
    _check_unit("alpha", alpha)
    _check_unit("nu", nu)
    _check_unit("p_I", p_I)
    if e == S:
        return g.c_lambda * (lam[S] - alpha) ** 2 + g.c_nu * nu + g.c_pS * p_I
    if e == I:
        return (lam[I] - alpha) ** 2 + g.c_I + g.c_pI * p_I
    if e == R:
        return (lam[R] - alpha) ** 2
    raise DomainError(f"unknown state {e!r}")


def best_response_alpha_S(u_S, u_I, z, g: GroupParams, lambda_S):
    """Minimiser over [0, 1] of the susceptible Hamiltonian in the socialization level.

    Works elementwise on arrays. The unconstrained optimum is projected onto
    [0, 1], which is exact because the Hamiltonian is a convex quadratic.
    """
    a = lambda_S + g.beta * z * (np.asarray(u_S) - u_I) / (2.0 * g.c_lambda)
    return np.clip(a, 0.0, 1.0)


def best_response_nu(u_S, g: GroupParams):
    """Bang-bang vaccination rate; ties go to 0."""
    return (g.kappa * np.asarray(u_S) > g.c_nu).astype(float)


def compute_aggregate(p_I, guide_I, w, masses) -> np.ndarray:
    """Contact-weighted mass of socializing infected individuals seen by each group.

    ``p_I`` and ``guide_I`` have the group axis last, so both a single time
    step ``(K,)`` and whole paths ``(n, K)`` are accepted.
    """
    p_I = np.asarray(p_I, dtype=float)
    guide_I = np.asarray(guide_I, dtype=float)
    w = np.asarray(getattr(w, "w", w), dtype=float)
    masses = np.asarray(masses, dtype=float)
    K = w.shape[0]
    if p_I.shape[-1] != K or guide_I.shape[-1] != K or masses.shape != (K,):
        raise ConfigError(
            f"dimension mismatch: w is {w.shape}, p_I {p_I.shape}, "
            f"guide_I {guide_I.shape}, masses {masses.shape}"
        )
    return (guide_I * p_I * masses) @ w.T


def transition_rates(alpha, nu, z, g: GroupParams) -> tuple[float, float, float]:
    """Off-diagonal generator entries ``(S->I, S->R, I->R)``."""
    return g.beta * alpha * z, g.kappa * nu, g.gamma


def generator(alpha, nu, z, g: GroupParams) -> np.ndarray:
    """Full 3x3 rate matrix; rows sum to zero."""
    si, sr, ir = transition_rates(alpha, nu, z, g)
    return np.array([[-(si + sr), si, sr], [0.0, -ir, ir], [0.0, 0.0, 0.0]])
