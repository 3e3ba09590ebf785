import pytest
from hypothesis import given
from hypothesis import strategies as st

from olwannier.config import RunConfig, config_from_dict, dump_config, load_config, parse_config
from olwannier.errors import ConfigError


def test_defaults():
    cfg = parse_config("preset: sinusoidal_1d\nV0: 5\n")
    assert cfg.mesh == 32 and cfg.J == 1 and cfg.E_cutoff == 50.0 and cfg.policy == "nn"
    assert parse_config("preset: hexagonal_2d\nV0: 5\n").mesh == 15


def test_lattice_alias():
    assert parse_config("lattice: kagome_2d\nV0: 4\n").preset == "kagome_2d"


@pytest.mark.parametrize("text, key, line", [
    ("preset: hexagonal_2d\nV0: 10\ns: 0.3\n", "s", 3),
    ("preset: superlattice_1d\nV0: 10\ns: 1.0\n", "s", 3),
    ("preset: superlattice_1d\nV0: 10\n", "s", None),
    ("preset: sinusoidal_1d\nV0: -1\n", "V0", 2),
    ("preset: sinusoidal_1d\nV0: 1\nJ: 0\n", "J", 3),
    ("preset: sinusoidal_1d\nV0: 1\nmesh: 2.5\n", "mesh", 3),
    ("preset: sinusoidal_1d\nV0: 1\npolicy: far\n", "policy", 3),
    ("preset: sinusoidal_1d\nV0: 1\nbogus: 1\n", "bogus", 3),
    ("preset: square_2d\nV0: 1\n", "preset", 1),
])
def test_field_errors(text, key, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.context["field"] == key
    assert info.value.context.get("line") == line
    assert info.value.code == 2


def test_custom_potential_hermiticity_rejected():
    text = """custom:
  dimension: 1
  vectors: [[0.5]]
  coefficients:
    - {G: [1], re: 1.0, im: 1.0}
    - {G: [-1], re: 1.0, im: 1.0}
"""
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.context["field"] == "custom"
    assert info.value.context["line"] == 1


def test_custom_potential_accepted():
    text = """custom:
  dimension: 1
  vectors: [[0.5]]
  coefficients:
    - {G: [0], re: 5.0}
    - {G: [1], re: -2.5}
    - {G: [-1], re: -2.5}
"""
    cfg = parse_config(text)
    assert cfg.potential().coefficients[(1,)] == -2.5


def test_malformed_yaml_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config("preset: sinusoidal_1d\nV0: [1\n")
    assert info.value.context["line"] is not None


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_hash_ignores_output_location():
    a = config_from_dict({"preset": "sinusoidal_1d", "V0": 3.0, "out": "a", "threads": 1})
    b = config_from_dict({"preset": "sinusoidal_1d", "V0": 3.0, "out": "b", "threads": 4})
    c = config_from_dict({"preset": "sinusoidal_1d", "V0": 3.5})
    assert a.config_hash() == b.config_hash() != c.config_hash()


configs = st.one_of(
    st.builds(
        lambda V0, s, M, J, pol, seed: {"preset": "superlattice_1d", "V0": V0, "s": s, "mesh": M,
                                        "J": J, "policy": pol, "seed": seed},
        st.floats(0, 50), st.floats(0, 0.99), st.integers(4, 64), st.integers(1, 4),
        st.sampled_from(["nn", "all", "rank:2", "cells:1"]), st.integers(0, 2**32),
    ),
    st.builds(
        lambda name, V0, cut, g: {"preset": name, "V0": V0, "E_cutoff": cut, "g": g},
        st.sampled_from(["hexagonal_2d", "kagome_2d", "sinusoidal_1d"]), st.floats(0, 50),
        st.floats(1, 400), st.floats(0, 5),
    ),
)


@given(configs)
def test_round_trip(data):
    cfg = config_from_dict(data)
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert isinstance(again, RunConfig)
