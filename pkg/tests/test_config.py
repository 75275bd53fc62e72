import pytest

from sizestruct import config
from sizestruct.config import ConfigDSLError, ConfigError

MINIMAL = """\
model:
  gamma: "1"
  mu: "0.5"
  beta: "exp(tau)*max(0, 1 - Q)"
  w: "1"
  alpha: 0.5
  theta: 1
  m: 8
"""


def test_defaults_fill_missing_sections():
    cfg = config.loads(MINIMAL)
    assert (cfg.grid.ns, cfg.grid.ntau, cfg.grid.cfl) == (2001, 501, 0.9)
    assert (cfg.analysis.lambda_lo, cfg.analysis.lambda_hi, cfg.analysis.lambda_samples) == (-5.0, 50.0, 2000)
    assert cfg.model.theta == 1.0 and isinstance(cfg.model.theta, float)
    assert cfg.sim_grid().n == cfg.size_grid().n


@pytest.mark.parametrize("name", sorted(config.PRESETS))
def test_presets_load_and_round_trip(name):
    cfg = config.load_preset(name)
    again = config.loads(config.dumps(cfg))
    assert again == cfg
    assert again.to_dict() == cfg.to_dict()


def test_unknown_key_reports_line():
    text = MINIMAL + "grid:\n  ns: 11\n  nss: 3\n"
    with pytest.raises(ConfigError, match=r"<config>:11: unknown key\(s\) \['nss'\]"):
        config.loads(text)


def test_unknown_section():
    with pytest.raises(ConfigError, match="unknown section"):
        config.loads(MINIMAL + "extra:\n  a: 1\n")


def test_missing_model():
    with pytest.raises(ConfigError, match="model"):
        config.loads("grid:\n  ns: 11\n")


def test_dsl_error_carries_file_and_line():
    text = MINIMAL.replace('beta: "exp(tau)*max(0, 1 - Q)"', 'beta: "exp(tau)*(1 - Q"')
    with pytest.raises(ConfigDSLError, match=r"cfg.yaml:4: model.beta: unbalanced"):
        config.loads(text, "cfg.yaml")


def test_rate_variable_restriction_is_reported():
    with pytest.raises(ConfigError, match="may not depend"):
        config.loads(MINIMAL.replace('gamma: "1"', 'gamma: "1 + tau"'))


@pytest.mark.parametrize(
    "extra, message",
    [
        ("grid:\n  cfl: 1.5\n", "cfl"),
        ("grid:\n  ns: two\n", "invalid value"),
        ("grid:\n  ns: 2\n", "at least 3"),
        ("analysis:\n  lambda_lo: 5\n  lambda_hi: 1\n", "lambda_lo"),
        ("analysis:\n  p_max: -1\n", "p_max"),
        ("sim:\n  t_end: 0\n", "t_end"),
        ("sim:\n  snapshot_times: [a]\n", "list of numbers"),
    ],
)
def test_invalid_values(extra, message):
    with pytest.raises(ConfigError, match=message):
        config.loads(MINIMAL + extra)


def test_history_variables_checked():
    with pytest.raises(ConfigDSLError, match="only use s and delta"):
        config.loads(MINIMAL + 'sim:\n  history_init: "P*s"\n')


def test_alpha_out_of_range():
    with pytest.raises(ConfigError, match="alpha"):
        config.loads(MINIMAL.replace("alpha: 0.5", "alpha: 1"))


def test_invalid_yaml_and_shape():
    with pytest.raises(ConfigError, match="invalid YAML"):
        config.loads("model: [unclosed")
    with pytest.raises(ConfigError, match="mapping"):
        config.loads("- 1\n- 2\n")


def test_unknown_preset_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="unknown preset"):
        config.load_preset("nope")
    with pytest.raises(ConfigError, match="cannot read"):
        config.load(tmp_path / "missing.yaml")
