import pytest
import yaml

from countingstars.errors import ConfigError
from countingstars.scenario import (
    from_dict,
    load_scenario,
    reference_config,
    reference_configs,
    scenario_hash,
)

from conftest import small_raw


def test_defaults(small_scenario):
    sc = small_scenario
    assert sc.constellation.total == 66
    assert sc.n_periods == 5 and sc.slices_per_period == 1
    assert sc.memory_bytes == {s: 2048 for s in ("cs", "cm", "es", "flowlidar")}


def test_seed_period():
    sc = from_dict(small_raw(horizon_s=10, seed_period_s=5))
    assert (sc.n_periods, sc.slices_per_period) == (2, 5)


def write(tmp_path, raw):
    p = tmp_path / "s.yaml"
    p.write_text(yaml.safe_dump(raw, sort_keys=False))
    return p


def test_epoch_must_divide_horizon(tmp_path):
    with pytest.raises(ConfigError) as err:
        load_scenario(write(tmp_path, small_raw(epoch_s=3, horizon_s=10)))
    assert any("horizon_s" in d and d.startswith("line ") for d in err.value.diagnostics)


def test_unknown_scheme_lists_allowed(tmp_path):
    with pytest.raises(ConfigError) as err:
        load_scenario(write(tmp_path, small_raw(schemes=["cs", "hll"])))
    (diag,) = err.value.diagnostics
    assert "hll" in diag and "cs, cm, es, flowlidar" in diag


def test_all_problems_reported():
    raw = small_raw(memory_bytes=0, prediction="oracle", bogus=1)
    raw["traffic"]["offerload"] = 2
    with pytest.raises(ConfigError) as err:
        from_dict(raw)
    text = " | ".join(err.value.diagnostics)
    for needle in ("memory_bytes", "prediction", "bogus", "offerload"):
        assert needle in text


def test_per_scheme_budgets():
    sc = from_dict(small_raw(schemes=["cs", "es"], memory_bytes={"cs": 1024, "es": 4096}))
    assert sc.memory_for("es") == 4096
    with pytest.raises(ConfigError):
        from_dict(small_raw(schemes=["cs", "es"], memory_bytes={"cs": 1024}))


def test_hash_stable_under_reordering():
    a = small_raw()
    b = dict(reversed(list(small_raw().items())))
    assert scenario_hash(a) == scenario_hash(b)
    assert scenario_hash(a) != scenario_hash(small_raw(rng_seed=4))


def test_input_not_mutated():
    raw = small_raw()
    snapshot = yaml.safe_dump(raw)
    from_dict(raw).with_overrides(rng_seed=9)
    assert yaml.safe_dump(raw) == snapshot


def test_reference_configs_validate():
    names = reference_configs()
    assert {"iridium-0.1", "iridium-0.5", "iridium-0.9", "starlink-small", "starlink"} <= set(names)
    for name in names:
        load_scenario(reference_config(name))


def test_walker_without_preset():
    sc = from_dict(small_raw(constellation={"planes": 3, "sats_per_plane": 4, "altitude_km": 1000, "inclination_deg": 60}))
    assert sc.constellation.total == 12
    with pytest.raises(ConfigError):
        from_dict(small_raw(constellation={"planes": 3}))
