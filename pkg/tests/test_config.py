import math

import pytest

from spdelab.config import SCHEMA, ConfigError, RunConfig, parse_text

BASE = "coeff.f.params = 1.0\ncoeff.g.params = 1.4142135623730951\nweight.c = 1.0\n"


def test_minimal_defaults():
    cfg = RunConfig.from_text(BASE)
    assert cfg.c == 1.0 and cfg.weighted
    assert cfg.T == 1.0 and cfg.verify_time() == 0.5
    g = cfg.grid()
    assert (g.d, g.n, g.L) == (1, 513, 8.0)
    assert not cfg.stochastic and cfg.noise(g) is None
    sc = cfg.solver_config()
    assert sc.dt == 1e-3 and sc.seed == 0


def test_comments_lists_and_inf():
    text = ("# header comment\n\n"
            "coeff.f.kind = linear   # trailing comment\n"
            "coeff.f.params = 0.05, 9.95\n"
            "coeff.g.kind = linear\n"
            "coeff.g.params = 0.1, 19.9\n"
            "coeff.g.squared = true\n"
            "weight.c = 1\n"
            "noise.h.params = inf\n")
    cfg = RunConfig.from_text(text)
    assert cfg.get("coeff.f.params") == (0.05, 9.95)
    assert cfg.get("coeff.g.squared") is True
    assert cfg.get("noise.h.params") == (math.inf,)
    assert cfg.schedule().g.square(1.0) == pytest.approx(20.0)


@pytest.mark.parametrize("text,line,key", [
    ("bogus line\n", 4, None),
    ("grid.nn = 3\n", 4, "grid.nn"),
    ("Grid.n = 3\n", 4, "Grid.n"),
    ("grid.n = 4\n", 4, "grid.n"),
    ("grid.n = abc\n", 4, "grid.n"),
    ("weight.c = 2\n", 4, "weight.c"),
    ("grid.d = \n", 4, "grid.d"),
    ("coeff.f.params = 1,,2\n", 4, "coeff.f.params"),
    ("coeff.f.kind = cubic\n", 4, "coeff.f.kind"),
    ("coeff.T = nan\n", 4, "coeff.T"),
])
def test_errors_carry_line_and_key(text, line, key):
    with pytest.raises(ConfigError) as info:
        parse_text(BASE + text)
    assert info.value.line == line
    assert info.value.key == key
    assert f"line {line}" in str(info.value)


def test_missing_weight_is_error():
    with pytest.raises(ConfigError) as info:
        parse_text("coeff.f.params = 1\ncoeff.g.params = 1\n")
    assert info.value.key == "weight.c" and info.value.line is None


def test_nonpositive_weight_rejected():
    with pytest.raises(ConfigError):
        parse_text(BASE.replace("weight.c = 1.0", "weight.c = 0"))


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_file(tmp_path / "missing.cfg")


def test_overrides():
    cfg = RunConfig.from_text(BASE)
    cfg.override("run.seed", 7)
    cfg.override("grid.n", 129)
    assert cfg.solver_config().seed == 7 and cfg.grid().n == 129
    with pytest.raises(ConfigError):
        cfg.override("grid.n", 128)
    with pytest.raises(KeyError):
        cfg.get("grid.m")


def test_seed_required_for_stochastic():
    cfg = RunConfig.from_text(BASE + "noise.modes = 4\n")
    assert cfg.stochastic
    with pytest.raises(ConfigError) as info:
        cfg.require_seed()
    assert info.value.key == "run.seed"
    cfg.override("run.seed", 3)
    assert cfg.require_seed() == 3


def test_unweighted_grid():
    cfg = RunConfig.from_text(BASE + "weight.mode = unweighted\ngrid.L = 10\n")
    g = cfg.grid(129)
    assert math.isinf(g.c) and g.L == 10 and g.n == 129


def test_schedule_and_bad_params():
    s = RunConfig.from_text(BASE).schedule()
    assert s.f(0.3) == 1.0 and s.g.square(0.3) == pytest.approx(2.0)
    # a constant kind takes exactly one parameter
    bad = RunConfig.from_text(BASE.replace("coeff.f.params = 1.0", "coeff.f.params = 1.0, 2.0"))
    with pytest.raises(ConfigError) as info:
        bad.schedule()
    assert info.value.key == "coeff.f.params"


def test_initial_state_dimension():
    cfg = RunConfig.from_text(BASE + "grid.d = 2\ninit.mean = 0.5\n")
    with pytest.raises(ConfigError):
        cfg.initial_state()


def test_shipped_configs_parse():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    files = sorted(root.glob("*.cfg"))
    assert files
    for p in files:
        RunConfig.from_file(p).schedule()


def test_schema_defaults_pass_their_checks():
    for key, spec in SCHEMA.items():
        if spec.default is not None and spec.check is not None:
            assert spec.check(spec.default), key
