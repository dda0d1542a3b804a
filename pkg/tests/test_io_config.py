import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tclheom import io
from tclheom.config import ConfigError, build_model, initial_state_index, load_json, resolve, sample_path


def test_float_format_has_twelve_significant_digits(tmp_path):
    io.write_csv(tmp_path / "x.csv", ["a", "b"], [[1.0 / 3.0, 7]], {"k": 1})
    lines = (tmp_path / "x.csv").read_text().splitlines()
    assert lines[2] == "3.33333333333e-01,7"


def test_digest_ignores_key_order():
    assert io.config_digest({"a": 1, "b": {"c": 2, "d": 3}}) == io.config_digest({"b": {"d": 3, "c": 2}, "a": 1})
    assert io.config_digest({"a": 1}) != io.config_digest({"a": 2})


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, min_value=-1e300, max_value=1e300),
                min_size=1, max_size=6))
def test_csv_round_trip_relative_precision(values):
    import tempfile
    from pathlib import Path
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "r.csv"
        io.write_csv(path, [f"c{j}" for j in range(len(values))], [values], {})
        _, data = io.read_csv(path)
    np.testing.assert_allclose(data[0], values, rtol=1e-11, atol=0)


def test_defaults_fill_and_overrides_apply():
    cfg = resolve({"model": {"type": "spin-boson"}}, {"integrator.dt": 0.01, "threads": 2,
                                                      "hierarchy.depth": None})
    assert cfg["integrator"]["dt"] == 0.01 and cfg["threads"] == 2
    assert cfg["hierarchy"]["depth"] == 12
    assert cfg["sweep"]["t_star"] == pytest.approx(2.5 * np.pi)


@pytest.mark.parametrize("raw", [
    {"expand": {"n_max": 7}},
    {"integrator": {"dt": 1.0, "t_max": 0.5}},
    {"sweep": {"reference_order": 12, "min_order": 12}},
    {"generator": {"udot": "spline"}},
    {"hierarchy": {"matsubara": -1}},
])
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        resolve(raw)


def test_model_file_is_inlined(tmp_path):
    (tmp_path / "m.json").write_text(sample_path().read_text())
    (tmp_path / "run.json").write_text(json.dumps({"model_file": "m.json", "integrator": {"t_max": 0.1}}))
    cfg = resolve(load_json(tmp_path / "run.json"), base_dir=tmp_path)
    assert cfg["integrator"]["t_max"] == 0.1
    assert cfg["integrator"]["dt"] == 0.001  # from the model file's run block
    assert build_model(cfg).dim == 7


def test_comment_keys_are_stripped():
    raw = load_json(sample_path())
    assert "_comment" not in raw


def test_matsubara_override_and_state_index():
    cfg = resolve({"model": {"type": "spin-boson", "bath": {"eta": 1, "omega_c": 1, "beta": 1}},
                   "hierarchy": {"matsubara": 3}, "initial": {"state": 2}})
    model = build_model(cfg)
    assert model.baths[0].n_matsubara == 3
    assert initial_state_index(cfg, model.dim) == 1
    cfg["initial"]["state"] = 3
    with pytest.raises(ConfigError):
        initial_state_index(cfg, model.dim)


def test_missing_bath_field():
    with pytest.raises(ConfigError, match="omega_c"):
        build_model(resolve({"model": {"type": "spin-boson", "bath": {"eta": 1, "beta": 1}}}))
