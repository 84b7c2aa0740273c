import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ouspde.fitting import DecayFit
from ouspde.io import (read_decay_fit, read_field_snapshots, read_grid_function, read_matrix,
                       read_state, read_sweep, read_trajectory, write_field_snapshots,
                       write_grid_function, write_json, write_matrix, write_state, write_sweep,
                       write_trajectory)
from ouspde.simulator import Trajectory

finite = st.floats(-1e12, 1e12, allow_nan=False, allow_subnormal=False)


@given(arrays(float, st.integers(2, 40), elements=finite))
def test_grid_function_round_trip(tmp_path_factory, f):
    p = tmp_path_factory.mktemp("io") / "f.csv"
    write_grid_function(p, f)
    assert np.array_equal(read_grid_function(p), f)
    assert p.read_text().splitlines()[0] == "x,value"


@given(arrays(float, st.integers(1, 30), elements=finite))
def test_state_round_trip(tmp_path_factory, x):
    p = tmp_path_factory.mktemp("io") / "s.csv"
    write_state(p, x)
    assert np.array_equal(read_state(p), x)


def test_matrix_round_trip(tmp_path):
    m = np.random.default_rng(0).standard_normal((5, 5))
    write_matrix(tmp_path / "m.csv", m)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "i,j,value" and lines[2].startswith("0,1,")
    assert np.array_equal(read_matrix(tmp_path / "m.csv"), m)


def test_trajectory_round_trip(tmp_path):
    S = np.random.default_rng(1).standard_normal((4, 3))
    tr = Trajectory(np.arange(4) * 0.1, S, 0.1)
    write_trajectory(tmp_path / "t.csv", tr)
    times, states = read_trajectory(tmp_path / "t.csv")
    assert np.array_equal(times, tr.times) and np.array_equal(states, S)
    with pytest.raises(ValueError):
        write_trajectory(tmp_path / "e.csv", Trajectory(np.arange(2.0), np.zeros((3, 2, 2)), 1.0))


def test_field_snapshots_round_trip(tmp_path):
    U = np.random.default_rng(2).standard_normal((3, 9))
    write_field_snapshots(tmp_path / "u.csv", [0.0, 0.5, 1.0], U)
    times, fields = read_field_snapshots(tmp_path / "u.csv")
    assert times.tolist() == [0.0, 0.5, 1.0] and np.array_equal(fields, U)


def test_sweep_round_trip(tmp_path):
    write_sweep(tmp_path / "s.csv", [0.1, 0.2], [1.5, 2.5], [0.01, 0.02])
    p, e, s = read_sweep(tmp_path / "s.csv")
    assert p.tolist() == [0.1, 0.2] and e.tolist() == [1.5, 2.5] and s.tolist() == [0.01, 0.02]


def test_wrong_header(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="expected header"):
        read_state(tmp_path / "bad.csv")


def test_json_writers(tmp_path):
    fit = DecayFit(4.1, 2.0, 0.01, True)
    write_json(tmp_path / "fit.json", fit)
    assert read_decay_fit(tmp_path / "fit.json") == fit
    write_json(tmp_path / "arr.json", {"a": np.arange(3), "b": np.float64(1.5), "c": np.bool_(True)})
    assert json.loads((tmp_path / "arr.json").read_text()) == {"a": [0, 1, 2], "b": 1.5, "c": True}
    with pytest.raises(TypeError):
        write_json(tmp_path / "x.json", {"o": object()})
