from importlib import resources

import pytest

from icexp.config import dump_config, load_config, parse_config, with_overrides
from icexp.errors import ConfigError
from icexp.outcome_models import Family
from icexp.simulator import Aggregation

BUNDLED = sorted(p.name for p in resources.files("icexp.scenarios").iterdir() if p.name.endswith(".yaml"))

BASE = """\
scenario_id: t
model:
  family: poisson
design:
  statistic: sample_mean
  transform: identity
units: {m: 20, n: 2}
spaces:
  agent1: [5, 4.5]
  agent2: [4]
simulation: {reps: 1000, seed: 7}
"""


def test_bundled_scenarios_present():
    assert {"ex2a.yaml", "ex2d.yaml", "ex3e_fig1.yaml", "ex3g_fig2.yaml", "table2.yaml"} <= set(BUNDLED)


@pytest.mark.parametrize("name", BUNDLED)
def test_round_trip(scenarios, name):
    cfg = load_config(scenarios / name)
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)


def test_minimal_defaults():
    cfg = parse_config(BASE)
    assert cfg.family is Family.POISSON and cfg.blocks == 1 and cfg.aggregation is Aggregation.SUMMED
    assert cfg.k == 10 and cfg.profile is None
    assert cfg.profiles()[0].actions[0].params == (5.0,)
    spaces = cfg.action_spaces()
    assert len(spaces) == 1 and [len(s) for s in spaces[0]] == [2, 1]


def test_profile_is_one_based_in_files():
    cfg = parse_config(BASE.replace("seed: 7}", "seed: 7, profile: [2, 1]}"))
    assert cfg.profile == (1, 0)
    with pytest.raises(ConfigError) as info:
        parse_config(BASE.replace("seed: 7}", "seed: 7, profile: [3, 1]}"))
    assert info.value.line == 11


@pytest.mark.parametrize(
    "old, new, line, pattern",
    [
        ("units: {m: 20, n: 2}", "units: {n: 2}", 7, "units.m"),
        ("seed: 7", "seed: 0x1F", 11, "base-10"),
        ("seed: 7", "seed: 0o17", 11, "base-10"),
        ("seed: 7", "seed: 1_000", 11, "base-10"),
        ("family: poisson", "family: gamma", 3, "family"),
        ("agent1: [5, 4.5]", "agent1: [5, -4.5]", 9, ""),
        ("m: 20", "m: 21", 7, "multiple"),
        ("simulation:", "extra: 1\nsimulation:", 11, "unknown"),
        ("transform: identity", "transform: log", 6, "transform"),
    ],
)
def test_errors_carry_line_numbers(old, new, line, pattern):
    text = BASE.replace(old, new)
    assert text != BASE
    with pytest.raises(ConfigError) as info:
        parse_config(text, "x.yaml")
    assert info.value.line == line, str(info.value)
    assert str(info.value).startswith(f"x.yaml:{line}:")
    if pattern:
        assert pattern in str(info.value)


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(BASE + "scenario_id: again\n")


def test_missing_section():
    text = BASE.replace("model:\n  family: poisson\n", "")
    with pytest.raises(ConfigError, match="model"):
        parse_config(text)


def test_not_a_mapping():
    with pytest.raises(ConfigError):
        parse_config("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        parse_config("a: [1,\n")


def test_per_block_spaces(scenarios):
    cfg = load_config(scenarios / "table2.yaml")
    spaces = cfg.action_spaces()
    assert cfg.blocks == 2
    assert [s[0].natural.params for s in spaces] == [(5.0,), (10.0,)]
    assert [s[1].natural.params for s in spaces] == [(4.25,), (9.95,)]
    assert cfg.transform_list == ("identity", "scaled_sqrt")


def test_block_count_mismatch():
    text = BASE.replace("{m: 20, n: 2}", "{m: 40, n: 2, blocks: 2}").replace(
        "  agent1: [5, 4.5]\n  agent2: [4]\n", "  - agent1: [5]\n    agent2: [4]\n"
    )
    with pytest.raises(ConfigError):
        parse_config(text)


def test_interference_needs_gamma():
    text = BASE.replace("family: poisson", "family: poisson_interference_fig2").replace(
        "agent1: [5, 4.5]", "agent1: [[1, 2]]").replace("agent2: [4]", "agent2: [[2, 1]]").replace("m: 20", "m: 40")
    with pytest.raises(ConfigError, match="gamma"):
        parse_config(text)
    cfg = parse_config(text.replace("family: poisson_interference_fig2", "family: poisson_interference_fig2\n  gamma: 0.5"))
    assert cfg.gamma == 0.5 and cfg.k == 10


def test_overrides():
    cfg = parse_config(BASE)
    new = with_overrides(cfg, seed=9, reps=5)
    assert new.seed == 9 and new.reps == 5 and new.m == cfg.m
    assert with_overrides(cfg) == cfg
