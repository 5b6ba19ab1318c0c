import math

import pytest

from htlmm.config import load_config, parse_config, preset_names, with_overrides
from htlmm.errors import ConfigError
from htlmm.fields import SeparableField

BASE = """
[pde]
dimension = 2
scheme = fd2
n = 8

[coefficients]
drift.1 = sin(x2)
drift.2 = cos(x1)
initial = random_rank1

[integrator]
method = ab2
dt = 0.01
T = 0.1
cap = 4
"""


def test_parse_base():
    cfg = parse_config(BASE)
    assert cfg.pde.n == 8 and cfg.pde.scheme == "fd2" and cfg.pde.length == pytest.approx(2 * math.pi)
    assert cfg.integrator.s == 2 and cfg.integrator.steps == 10 and cfg.integrator.cap == 4
    assert cfg.coefficients.drift[0] == SeparableField.parse("sin(x2)")
    assert cfg.coefficients.initial_kind == "random_rank1"
    assert cfg.stability is None


def test_repeated_field_keys_add_terms():
    cfg = parse_config(BASE + "\n[coefficients]\ndrift.1 = 6\n")
    assert cfg.coefficients.drift[0] == SeparableField.parse("sin(x2) + 6")


def test_cap_inf_and_comments():
    cfg = parse_config(BASE.replace("cap = 4", "cap = inf  # unbounded"))
    assert cfg.integrator.cap is None


def error_line(text):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "t.cfg")
    return exc.value.line


def test_errors_carry_line_numbers():
    assert error_line(BASE.replace("n = 8", "n = 8\nbogus = 1")) == 6
    assert error_line(BASE.replace("n = 8", "n = 8\nn = 9")) == 6
    assert error_line(BASE.replace("n = 8", "n = eight")) == 5
    assert error_line(BASE.replace("drift.2 = cos(x1)", "drift.2 = sin(x1*x2)")) == 9
    assert error_line(BASE.replace("[pde]", "[bogus]")) == 2
    assert error_line(BASE.replace("method = ab2", "method = rk4")) == 13


def test_semantic_errors():
    with pytest.raises(ConfigError):
        parse_config(BASE.replace("drift.2 = cos(x1)", "drift.3 = cos(x1)"))
    with pytest.raises(ConfigError):
        parse_config(BASE.replace("T = 0.1", "T = 0.105"))
    with pytest.raises(ConfigError):
        parse_config(BASE + "[coefficients]\ndiffusion.1.2 = 1\ndiffusion.2.1 = 2\n")
    with pytest.raises(ConfigError):
        parse_config(BASE.replace("n = 8", "n = 2"))
    with pytest.raises(ConfigError):
        parse_config("dimension = 2\n")


def test_full_overrides():
    text = BASE + "\n[full]\npde.n = 32\nintegrator.T = 1\n"
    assert parse_config(text).pde.n == 8
    cfg = parse_config(text, full=True)
    assert cfg.pde.n == 32 and cfg.integrator.T == 1.0
    with pytest.raises(ConfigError):
        parse_config(BASE + "\n[full]\nn = 3\n", full=True)


@pytest.mark.parametrize("name", ["advect2d", "fp6d", "growth2d", "cfl"])
def test_presets_load(name):
    assert name in preset_names()
    cfg = load_config(name)
    load_config(name, full=True)
    assert cfg.pde.dimension >= 1


def test_fp6d_preset_tables():
    cfg = load_config("fp6d")
    assert cfg.pde.dimension == 6 and cfg.pde.n == 31
    assert set(cfg.coefficients.drift) == set(range(6))
    g = cfg.coefficients.diffusion
    assert all((k, k) in g for k in range(6))


def test_load_config_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")
    p = tmp_path / "x.cfg"
    p.write_text(BASE)
    assert load_config(p).pde.n == 8


def test_with_overrides():
    cfg = with_overrides(parse_config(BASE), pde={"n": 4}, integrator={"cap": None})
    assert cfg.pde.n == 4 and cfg.integrator.cap is None
