import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from copselect.config import (PROFILES, ConfigError, ExperimentConfig, config_to_ini, derive_seed, echo_config,
                              load_config, parse_label)


def test_desk_preset_complete():
    cfg = load_config(profile="desk")
    assert (cfg.dimension, cfg.budget, cfg.repeats, cfg.population_size, cfg.generations, cfg.n_samples) == \
        (5, 30_000, 5, 40, 25, 5_000)


def test_full_preset():
    cfg = load_config(profile="full")
    assert (cfg.dimension, cfg.budget, cfg.repeats, cfg.population_size, cfg.generations, cfg.n_samples) == \
        (10, 200_000, 30, 100, 100, 10_000)


def test_desk_not_above_full():
    desk, full = PROFILES["desk"], PROFILES["full"]
    for name in desk.cost_fields:
        assert getattr(desk, name) <= getattr(full, name), name


def test_override_echoed(tmp_path):
    cfg = load_config(overrides={"repeats": "5"}, echo_dir=tmp_path)
    text = (tmp_path / "resolved_config.ini").read_text()
    assert "repeats = 5" in text
    assert load_config(tmp_path / "resolved_config.ini") == cfg


def test_echo_round_trip_full(tmp_path):
    cfg = load_config(profile="full", overrides={"solvers.precision": "1e-6", "bench_labels": "ackley-1lin1quad"})
    echo_config(cfg, tmp_path)
    assert load_config(tmp_path / "resolved_config.ini") == cfg


def test_layering(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[solvers]\nrepeats = 9\nbudget = 1000\n")
    cfg = load_config(path, overrides={"budget": 2000})
    assert cfg.repeats == 9 and cfg.budget == 2000 and cfg.dimension == 5


def test_unknown_key_suggests():
    with pytest.raises(ConfigError, match="budget"):
        load_config(overrides={"budgit": "10"})


def test_unknown_key_in_file(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[solvers]\nrepeets = 9\n")
    with pytest.raises(ConfigError, match="repeats"):
        load_config(path)


def test_type_mismatch():
    with pytest.raises(ConfigError, match="expected int"):
        load_config(overrides={"repeats": "many"})


def test_repeats_need_variance():
    with pytest.raises(ConfigError):
        ExperimentConfig(repeats=1)


def test_ro_source_values():
    assert load_config(overrides={"study.ro_source": "fresh"}).ro_source == "fresh"
    with pytest.raises(ConfigError, match="ro_source"):
        load_config(overrides={"ro_source": "pool"})


def test_labels():
    assert parse_label("sphere-2lin") == ("sphere", 2, 0)
    assert parse_label("Rosenbrock-1lin2quad") == ("rosenbrock", 1, 2)
    with pytest.raises(ConfigError):
        parse_label("cube-2lin")


def test_ini_lists_every_section():
    text = config_to_ini(ExperimentConfig())
    for sec in ("general", "solvers", "evolver", "features", "model", "study"):
        assert f"[{sec}]" in text


class TestSeeds:
    def test_stable(self):
        assert derive_seed(7, ["a", 1]) == derive_seed(7, ["a", 1])
        assert 0 <= derive_seed(7, "x") < 2 ** 63

    @given(st.integers(0, 2 ** 40), st.lists(st.text(max_size=5), max_size=3))
    def test_pure(self, master, path):
        assert derive_seed(master, path) == derive_seed(master, tuple(path))

    def test_known_value(self):
        import hashlib
        digest = hashlib.blake2b("3\x1fevolve".encode(), digest_size=8).digest()
        assert derive_seed(3, "evolve") == int.from_bytes(digest, "big") >> 1

    def test_no_collisions_over_a_million_paths(self):
        seen = set()
        for i, j in itertools.product(range(1000), range(1000)):
            seen.add(derive_seed(1, ("run", i, j)))
        assert len(seen) == 1_000_000
