import pytest
import yaml

from contestable.scenario import SEED_ENV, ConfigError, bundled_names, load_scenario, resolve_scenario


def _raw():
    return yaml.safe_load(resolve_scenario("running").read_text())


def test_bundled_scenarios_load():
    names = bundled_names()
    assert {"running", "transitional", "destruction", "flush_sale"} <= set(names)
    for n in names:
        assert load_scenario(n).name == n


@pytest.mark.parametrize("overrides,fragment", [
    ({"bogus": 1}, "unknown key 'bogus'"),
    ({"dao.colour": 1}, "unknown key 'colour'"),
    ({"dao.t_m": "3/2"}, "dao.t_m"),
    ({"dao.delta": {"kind": "constant", "micros": 0}}, "dao.delta"),
    ({"holders.0.tokens": 201}, "expected q=1000"),
    ({"variants.flush_sale": True}, "demand"),
    ({"events": [{"tick": 1, "kind": "party"}]}, "unknown kind 'party'"),
])
def test_config_errors(overrides, fragment):
    with pytest.raises(ConfigError) as exc:
        load_scenario("running", overrides=overrides)
    assert any(fragment in p for p in exc.value.problems)


def test_unknown_scenario():
    with pytest.raises(ConfigError):
        load_scenario("no_such_scenario")


def test_seed_precedence(monkeypatch):
    raw = _raw()
    raw.pop("seed")
    monkeypatch.delenv(SEED_ENV, raising=False)
    with pytest.raises(ConfigError) as exc:
        load_scenario(raw)
    assert "seed" in exc.value.problems[0]
    monkeypatch.setenv(SEED_ENV, "99")
    assert load_scenario(raw).seed == 99
    assert load_scenario(raw, seed=3).seed == 3
    assert load_scenario("running").seed == 7


def test_defaults():
    cfg = load_scenario({k: v for k, v in _raw().items() if k != "end"})
    assert cfg.end == "hold"
    assert cfg.variants["cap_rule"] == "market_size" and cfg.variants["r_raise"]
    assert not cfg.variants["flush_sale"]


def test_generated_holders():
    cfg = load_scenario("two_bidders")
    assert len(cfg.holders) == 19 and sum(h.tokens for h in cfg.holders) == 950
