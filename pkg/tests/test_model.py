import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vaxmfg.config import preset
from vaxmfg.model import (
    I,
    R,
    S,
    ConfigError,
    ContactMatrix,
    DomainError,
    GroupParams,
    Guidelines,
    ModelConfig,
    SolverSettings,
    TimeGrid,
    best_response_alpha_S,
    best_response_nu,
    compute_aggregate,
    generator,
    running_cost,
    transition_rates,
)

G1 = GroupParams(beta=0.4, gamma=1 / 7, kappa=0.005, c_lambda=1.0, c_nu=0.001, c_I=1.0)
LAM = (0.9, 0.9, 0.9)

pos = st.floats(1e-3, 10.0)
unit = st.floats(0.0, 1.0)


def group(beta=0.4, c_lambda=1.0, kappa=0.005, c_nu=0.001):
    return GroupParams(beta=beta, gamma=1 / 7, kappa=kappa, c_lambda=c_lambda, c_nu=c_nu, c_I=1.0)


# running cost

def test_running_cost_recovered_compliant_is_zero():
    assert running_cost(R, 0.9, 0.0, 0.3, G1, LAM) == 0.0


def test_running_cost_susceptible_vaccinating():
    assert running_cost(S, 0.9, 1.0, 0.0, G1, LAM) == pytest.approx(0.001, abs=1e-15)


def test_running_cost_infected_with_awareness():
    g = GroupParams(beta=0.4, gamma=1 / 7, kappa=0.005, c_lambda=1.0, c_nu=0.001, c_I=1.0, c_pI=0.5)
    assert running_cost(I, 0.9, 0.0, 0.01, g, LAM) == pytest.approx(1.005, abs=1e-12)


@pytest.mark.parametrize("kw", [dict(alpha=1.2), dict(nu=-0.1), dict(p_I=2.0)])
def test_running_cost_rejects_out_of_range(kw):
    args = dict(alpha=0.5, nu=0.0, p_I=0.0) | kw
    with pytest.raises(DomainError):
        running_cost(S, args["alpha"], args["nu"], args["p_I"], G1, LAM)


def test_running_cost_unknown_state():
    with pytest.raises(DomainError):
        running_cost(3, 0.5, 0.0, 0.0, G1, LAM)


@given(e=st.sampled_from([S, I, R]), alpha=unit, nu=unit, p=unit,
       lam=st.tuples(st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0.01, 1)),
       cp=st.floats(0, 2))
def test_running_cost_nonnegative(e, alpha, nu, p, lam, cp):
    g = GroupParams(beta=0.4, gamma=1 / 7, kappa=0.005, c_lambda=1.0, c_nu=0.001, c_I=1.0, c_pS=cp, c_pI=cp)
    assert running_cost(e, alpha, nu, p, g, lam) >= 0.0


@given(alpha=unit, nu=st.sampled_from([0.0, 1.0]), p=unit, lam=st.floats(0.01, 1))
def test_running_cost_zero_only_at_compliance(alpha, nu, p, lam):
    g = GroupParams(beta=0.4, gamma=1 / 7, kappa=0.005, c_lambda=1.0, c_nu=0.001, c_I=1.0, c_pS=0.5)
    c = running_cost(S, alpha, nu, p, g, (lam, lam, lam))
    if c == 0.0:
        assert alpha == lam and nu == 0.0 and p == 0.0


# socialization best response

@given(u=st.floats(0, 50), z=unit)
def test_alpha_equal_values_gives_guideline(u, z):
    assert best_response_alpha_S(u, u, z, G1, 0.9) == 0.9


def test_alpha_example():
    assert best_response_alpha_S(0.0, 1.0, 0.009, G1, 0.9) == pytest.approx(0.9 - 0.4 * 0.009 / 2, abs=1e-15)
    assert best_response_alpha_S(0.0, 1.0, 0.009, G1, 0.9) == pytest.approx(0.8982, abs=1e-12)


@given(uS=st.floats(0, 50), uI=st.floats(0, 50))
def test_alpha_no_pressure_gives_guideline(uS, uI):
    assert best_response_alpha_S(uS, uI, 0.0, G1, 0.7) == 0.7


def test_alpha_clamped():
    assert best_response_alpha_S(0.0, 1e4, 1.0, G1, 0.9) == 0.0
    assert best_response_alpha_S(1e4, 0.0, 1.0, G1, 0.9) == 1.0


@settings(max_examples=1000)
@given(uS=st.floats(0, 20), uI=st.floats(0, 20), z=unit, beta=pos, c_lambda=pos,
       lam=st.floats(0.01, 1.0))
def test_alpha_minimizes_hamiltonian(uS, uI, z, beta, c_lambda, lam):
    g = group(beta=beta, c_lambda=c_lambda)
    raw = lam + beta * z * (uS - uI) / (2 * c_lambda)
    a = float(best_response_alpha_S(uS, uI, z, g, lam))

    def h(x):
        return c_lambda * (lam - x) ** 2 + beta * x * z * (uI - uS)

    scale = 1e-12 * (1 + abs(h(a)))
    if 1e-4 < raw < 1 - 1e-4:
        assert h(a) <= h(a + 1e-4) + scale
        assert h(a) <= h(a - 1e-4) + scale
    # projection is the constrained minimiser on the whole interval
    for x in np.linspace(0, 1, 21):
        assert h(a) <= h(x) + scale


# vaccination best response

def test_nu_examples():
    assert best_response_nu(0.3, G1) == 1.0
    assert best_response_nu(0.0, G1) == 0.0
    g = group(kappa=0.25, c_nu=0.5)
    assert best_response_nu(2.0, g) == 0.0  # exact tie


@given(a=st.floats(0, 10), b=st.floats(0, 10), kappa=pos, c_nu=pos)
def test_nu_monotone(a, b, kappa, c_nu):
    g = group(kappa=kappa, c_nu=c_nu)
    lo, hi = sorted((a, b))
    assert best_response_nu(lo, g) <= best_response_nu(hi, g)


# aggregate

def test_aggregate_single_population():
    assert compute_aggregate([0.01], [0.9], [[1.0]], [1.0]) == pytest.approx([0.009], abs=1e-15)


def test_aggregate_zero_prevalence():
    w = np.full((3, 3), 0.925) + 0.075 * np.eye(3)
    assert np.all(compute_aggregate(np.zeros(3), np.full(3, 0.9), w, [0.3, 0.3, 0.4]) == 0.0)


def test_aggregate_three_groups():
    cfg = preset("table2")
    z = compute_aggregate(np.full(3, 0.01), np.full(3, 0.9), cfg.contact, cfg.masses)
    assert z[0] == pytest.approx(0.9 * 0.01 * (0.3224 + 0.925 * 0.3164 + 0.925 * 0.3612), abs=1e-15)
    assert z[0] == pytest.approx(0.008543, abs=5e-7)


def test_aggregate_dimension_mismatch():
    with pytest.raises(ConfigError):
        compute_aggregate(np.zeros(2), np.zeros(2), np.eye(3), np.ones(3) / 3)


arr3 = st.lists(unit, min_size=3, max_size=3).map(np.array)


@given(p=arr3, q=arr3, a=st.floats(0, 2), b=st.floats(0, 2), guide=arr3,
       w=st.lists(unit, min_size=9, max_size=9).map(lambda x: np.array(x).reshape(3, 3)))
def test_aggregate_linear_in_prevalence(p, q, a, b, guide, w):
    m = np.array([0.3, 0.3, 0.4])
    lhs = compute_aggregate(a * p + b * q, guide, w, m)
    rhs = a * compute_aggregate(p, guide, w, m) + b * compute_aggregate(q, guide, w, m)
    np.testing.assert_allclose(lhs, rhs, atol=1e-14)


@given(p=arr3, guide=arr3, bump=st.floats(0, 1), i=st.integers(0, 2), j=st.integers(0, 2),
       w=st.lists(unit, min_size=9, max_size=9).map(lambda x: np.array(x).reshape(3, 3)))
def test_aggregate_monotone_in_contact(p, guide, bump, i, j, w):
    m = np.array([0.3, 0.3, 0.4])
    w2 = w.copy()
    w2[i, j] = min(1.0, w2[i, j] + bump)
    assert np.all(compute_aggregate(p, guide, w2, m) >= compute_aggregate(p, guide, w, m))


# transition rates

def test_rates_examples():
    assert transition_rates(0.9, 0.0, 0.0, G1) == (0.0, 0.0, G1.gamma)
    si, sr, ir = transition_rates(0.9, 1.0, 0.009, G1)
    assert si == pytest.approx(0.00324, abs=1e-15)
    assert sr == 0.005
    assert ir == pytest.approx(0.142857142857, abs=1e-12)
    assert transition_rates(0.0, 1.0, 0.5, G1)[0] == 0.0


@given(alpha=unit, nu=unit, z=unit, beta=pos, kappa=pos)
def test_generator_rows_sum_to_zero(alpha, nu, z, beta, kappa):
    g = group(beta=beta, kappa=kappa)
    Q = generator(alpha, nu, z, g)
    assert np.all(Q - np.diag(np.diag(Q)) >= 0)
    for row in range(3):
        off = sum(Q[row, c] for c in range(3) if c != row)
        assert off + Q[row, row] == 0.0


# domain types

def test_group_params_validation():
    with pytest.raises(ConfigError):
        GroupParams(beta=0.0, gamma=1, kappa=1, c_lambda=1, c_nu=1, c_I=1)
    with pytest.raises(ConfigError):
        GroupParams(beta=1, gamma=1, kappa=1, c_lambda=1, c_nu=1, c_I=1, c_pS=-1)
    assert G1.vaccination_threshold == pytest.approx(0.2)


def test_time_grid():
    grid = TimeGrid(80, 0.016)
    assert grid.n_steps == 5000
    assert grid.times[-1] == pytest.approx(80.0)
    with pytest.raises(ConfigError):
        TimeGrid(1.0, 0.3)
    with pytest.raises(ConfigError):
        TimeGrid(1.0, 1.0)


def test_guidelines_validation():
    grid = TimeGrid(1.0, 0.25)
    with pytest.raises(ConfigError, match="full lockdown excluded"):
        Guidelines.constant([0.0, 0.9, 0.9], grid)
    with pytest.raises(ConfigError):
        Guidelines.constant([0.5, 1.1, 0.9], grid)
    lam = Guidelines.constant([0.5, 0.6, 0.7], grid)
    assert lam.values.shape == (5, 1, 3)
    assert not lam.values.flags.writeable


def test_solver_settings_validation():
    for kw in (dict(epsilon=0), dict(damping=0), dict(damping=1.5), dict(max_iterations=0)):
        with pytest.raises(ConfigError):
            SolverSettings(**kw)


def _cfg(**kw):
    grid = TimeGrid(1.0, 0.25)
    args = dict(
        groups=(G1,),
        guidelines=Guidelines.constant(LAM, grid),
        contact=ContactMatrix([[1.0]]),
        initial=np.array([[0.99, 0.01, 0.0]]),
        grid=grid,
    )
    args.update(kw)
    return ModelConfig(**args)


def test_model_config_validation():
    assert _cfg().n_groups == 1
    with pytest.raises(ConfigError):
        _cfg(initial=np.array([[0.9, 0.01, 0.0]]))
    with pytest.raises(ConfigError):
        _cfg(contact=ContactMatrix(np.eye(2)))
    with pytest.raises(ConfigError):
        _cfg(groups=(GroupParams(beta=0.4, gamma=1, kappa=1, c_lambda=1, c_nu=1, c_I=1, mass=0.5),))


def test_regularity_warning():
    from vaxmfg.model import ModelRegularityWarning

    cfg = _cfg(initial=np.array([[1.0, 0.0, 0.0]]))
    assert cfg.regularity_violations() == [0]
    with pytest.warns(ModelRegularityWarning):
        assert not cfg.check_regularity()
