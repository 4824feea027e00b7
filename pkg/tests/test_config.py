import pytest

from partsim.config import RunConfig, apply_overrides, load_config, parse_config_text
from partsim.errors import ConfigError


def test_defaults_validate():
    cfg = RunConfig().validate()
    assert cfg.k == 256
    assert cfg.tau == 0.25
    assert cfg.top_k == 20
    assert cfg.rho == 5000.0
    assert cfg.prune_threshold == 2e-3


def test_parse_config_text():
    cfg = parse_config_text(
        """
        # training setup
        train = data/train.txt
        tau = 0.3        # inline comment
        theta_1 = 2
        admm_iters = 25
        """
    )
    assert cfg.train == "data/train.txt"
    assert cfg.tau == 0.3
    assert cfg.theta_1 == 2.0
    assert cfg.admm_iters == 25


def test_parse_rejects_unknown_key():
    with pytest.raises(ConfigError):
        parse_config_text("not_a_key = 1")


def test_parse_rejects_bad_value():
    with pytest.raises(ConfigError):
        parse_config_text("tau = huge")


def test_parse_rejects_missing_equals():
    with pytest.raises(ConfigError):
        parse_config_text("tau 0.3")


def test_load_config_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("seed = 7\nlam = 0.4\n")
    cfg = load_config(path)
    assert cfg.seed == 7
    assert cfg.lam == 0.4


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("tau = 0.5\nseed = 1\n")
    cfg = load_config(path)
    cfg = apply_overrides(cfg, {"tau": 0.2, "seed": None})
    assert cfg.tau == 0.2
    assert cfg.seed == 1


def test_validation_ranges():
    with pytest.raises(ConfigError):
        RunConfig(tau=0.0).validate()
    with pytest.raises(ConfigError):
        RunConfig(tau=1.2).validate()
    with pytest.raises(ConfigError):
        RunConfig(k=1).validate()
    with pytest.raises(ConfigError):
        RunConfig(theta_1=-1.0).validate()
    with pytest.raises(ConfigError):
        RunConfig(lam=1.0).validate()


def test_admm_config_extraction():
    cfg = RunConfig(theta_1=2.0, theta_2=0.0, eta=0.0, lam=0.0, rho=100.0)
    admm_cfg = cfg.admm()
    assert admm_cfg.theta_1 == 2.0
    assert admm_cfg.theta_2 == 0.0
    assert admm_cfg.max_iter == cfg.admm_iters
