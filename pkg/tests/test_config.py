import numpy as np
import pytest
import yaml

from vaxmfg.config import (
    PRESETS,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    dump_config,
    load_config,
    preset,
)
from vaxmfg.model import ConfigError


def test_table1_preset():
    cfg = preset("table1")
    g = cfg.groups[0]
    assert cfg.n_groups == 1
    assert cfg.grid.horizon == 80 and cfg.grid.dt == 0.016
    assert cfg.solver.epsilon == 0.1
    assert cfg.solver.damping == 1.0 and cfg.solver.max_iterations == 500
    assert (g.beta, g.kappa, g.c_lambda, g.c_I, g.c_nu) == (0.4, 0.005, 1.0, 1.0, 0.001)
    assert g.gamma == 1 / 7
    assert np.all(cfg.guidelines.values == 0.9)
    assert cfg.initial.tolist() == [[0.99, 0.01, 0.0]]


def test_table2_preset():
    cfg = preset("table2")
    assert cfg.n_groups == 3
    assert cfg.masses.tolist() == [0.3224, 0.3164, 0.3612]
    assert cfg.param("beta").tolist() == [0.40, 0.35, 0.30]
    assert cfg.param("kappa").tolist() == [0.003] * 3
    assert cfg.param("gamma").tolist() == [1 / 7] * 3
    assert cfg.param("c_nu").tolist() == [0.015, 0.013, 0.009]
    assert cfg.param("c_I").tolist() == [1.05, 1.00, 0.80]
    assert cfg.param("c_lambda").tolist() == [1.0] * 3
    assert cfg.initial[:, 1].tolist() == [0.01] * 3
    w = cfg.contact.w
    assert np.all(np.diag(w) == 1.0) and np.all(w[~np.eye(3, dtype=bool)] == 0.925)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset("table9")


def test_lockdown_rejected():
    data = yaml.safe_load(yaml.safe_dump(PRESETS["table1"]))
    data["groups"][0]["guidelines"]["S"] = 0.0
    with pytest.raises(ConfigError, match="full lockdown excluded"):
        config_from_dict(data)
    with pytest.raises(ConfigError, match="full lockdown excluded"):
        apply_overrides(preset("table1"), {"lambda_S": 0.0})


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_round_trip(tmp_path, name):
    cfg = apply_overrides(preset(name), {"c_p": 0.1, "lambda_I": 0.6})
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


def test_round_trip_time_varying_guideline(tmp_path):
    data = config_to_dict(preset("table1"))
    data["dt"] = 0.5
    data["horizon"] = 2.0
    data["groups"][0]["guidelines"]["S"] = [0.9, 0.8, 0.7, 0.6, 0.5]
    cfg = config_from_dict(data)
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    again = load_config(path)
    assert again == cfg
    assert again.guidelines.values[:, 0, 0].tolist() == [0.9, 0.8, 0.7, 0.6, 0.5]


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("horizon: 80\ndt: 0.016\ngroups: [\n  {beta: 0.4,\n")
    with pytest.raises(ConfigError, match=r"line \d+"):
        load_config(path)


@pytest.mark.parametrize(
    "mutate, match",
    [
        (lambda d: d.pop("dt"), "dt"),
        (lambda d: d["groups"][0].pop("beta"), "beta"),
        (lambda d: d["groups"][0].update(initial=[0.5, 0.2, 0.2]), "simplex"),
        (lambda d: d["groups"][0].update(kappa="fast"), "kappa"),
        (lambda d: d["solver"].update(tolerance=1), "unknown"),
        (lambda d: d["groups"][0]["guidelines"].update(I=[0.9, 0.9]), "one per grid point"),
    ],
)
def test_validation_names_the_problem(mutate, match):
    data = yaml.safe_load(yaml.safe_dump(PRESETS["table1"]))
    mutate(data)
    with pytest.raises(ConfigError, match=match):
        config_from_dict(data)


def test_overrides():
    cfg = apply_overrides(preset("table2"), {"c_p": 0.5, "c_nu": 0.002, "lambda_I": 0.6, "epsilon": None})
    assert cfg.solver.awareness_enabled
    assert cfg.param("c_pS").tolist() == cfg.param("c_pI").tolist() == [0.5] * 3
    assert cfg.param("c_nu").tolist() == [0.002] * 3
    assert np.all(cfg.guidelines.values[:, :, 1] == 0.6)
    assert np.all(cfg.guidelines.values[:, :, 0] == 0.9)
    assert cfg.solver.epsilon == 0.1
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"beta": 1.0})
