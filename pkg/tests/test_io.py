import json
import os
import stat

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stereo_ot.errors import CalibrationError, ParseError, ValidationError
from stereo_ot.evaluation import GroundTruthCorrespondence, MetricsReport
from stereo_ot.geometry import StereoRig, reduce_general_rig
from stereo_ot.io import (
    PointsTable,
    atomic_write,
    calibration_from_dict,
    fmt,
    read_calibration,
    read_cost,
    read_ground_truth,
    read_matching,
    read_metrics,
    read_pairs,
    read_plan,
    read_points,
    read_points3d,
    read_sweep_config,
    read_sweep_csv,
    rig_digest,
    write_calibration,
    write_cost,
    write_ground_truth,
    write_matching,
    write_metrics,
    write_plan,
    write_points,
    write_points3d,
    write_sweep_config,
    write_sweep_csv,
)
from stereo_ot.simulation import SweepConfig, run_sweep
from stereo_ot.transport import Matching, MatchSource

from conftest import random_rig

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=200)
@given(finite)
def test_fmt_round_trips_exactly(x):
    assert float(fmt(x)) == x


def test_points_round_trip(tmp_path, rng):
    table = PointsTable(("a", "b", "c"), ("o1", "o1", "o2"), rng.normal(size=(3, 2)) * 1e3)
    write_points(tmp_path / "p.csv", table)
    assert read_points(tmp_path / "p.csv") == table


def test_points_parse_error_location(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("# stereo-ot points v1\npoint_id,object_id,u,v\na,o,1.0,2.0\nb,o,3.0,oops\n")
    with pytest.raises(ParseError) as info:
        read_points(path)
    assert (info.value.line, info.value.column) == (4, 4)
    assert f"{path}:4:4" in str(info.value)


def test_points_rejects_duplicates_wrong_kind_and_version(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("point_id,object_id,u,v\na,o,1,2\na,o,3,4\n")
    with pytest.raises(ParseError, match="duplicate"):
        read_points(path)
    path.write_text("# stereo-ot cost v1\npoint_id,object_id,u,v\n")
    with pytest.raises(ParseError, match="points"):
        read_points(path)
    path.write_text("# stereo-ot points v9\npoint_id,object_id,u,v\n")
    with pytest.raises(ParseError, match="version"):
        read_points(path)
    path.write_text("point_id,object_id,u,v\na,o,nan,2\n")
    with pytest.raises(ParseError, match="non-finite"):
        read_points(path)


def test_calibration_round_trip(tmp_path, rng):
    rig = random_rig(rng)
    write_calibration(tmp_path / "c.json", rig)
    back = read_calibration(tmp_path / "c.json")
    assert back == rig
    assert rig_digest(back) == rig_digest(rig)


def test_calibration_general_form_is_reduced():
    expected = reduce_general_rig(np.eye(3), np.eye(3), np.eye(3), np.eye(3), np.zeros(3), np.array([1.0, 0, 0]))
    data = {
        "K_left": np.eye(3).tolist(),
        "K_right": np.eye(3).tolist(),
        "R_left": np.eye(3).tolist(),
        "t_left": [0, 0, 0],
        "R_right": np.eye(3).tolist(),
        "t_right": [1, 0, 0],
    }
    assert calibration_from_dict(data) == expected


def test_calibration_errors(tmp_path):
    good = StereoRig.rectified().as_dict()
    bad = dict(good, R=[[1, 0, 0], [0, 1, 0], [0, 0, 2]])
    with pytest.raises(CalibrationError):
        calibration_from_dict(bad)
    with pytest.raises(CalibrationError, match="t"):
        calibration_from_dict({k: v for k, v in good.items() if k != "t"})
    with pytest.raises(CalibrationError, match="schema"):
        calibration_from_dict(dict(good, schema="other"))
    path = tmp_path / "c.json"
    path.write_text('{"K_left": [1, 2,\n ]}')
    with pytest.raises(ParseError) as info:
        read_calibration(path)
    assert info.value.line == 2


def test_cost_round_trip(tmp_path, rng):
    values = rng.random((3, 4))
    write_cost(tmp_path / "c.csv", values, ["a", "b", "c"], ["w", "x", "y", "z"], {"distance": "ray"})
    v, left, right, meta = read_cost(tmp_path / "c.csv")
    assert np.array_equal(v, values)
    assert left == ["a", "b", "c"] and right == ["w", "x", "y", "z"]
    assert meta == {"distance": "ray"}


def test_plan_round_trip_and_validation(tmp_path):
    entries = [("a", "x", 0.25), ("b", "y", 0.5), ("b", "x", 0.25)]
    write_plan(tmp_path / "p.csv", entries)
    assert read_plan(tmp_path / "p.csv") == entries
    write_plan(tmp_path / "bad.csv", [("a", "x", 0.0)])
    with pytest.raises(ParseError, match="positive"):
        read_plan(tmp_path / "bad.csv")


def test_read_pairs_binarises_plans(tmp_path):
    write_plan(tmp_path / "p.csv", [("a", "x", 0.3), ("a", "y", 0.2), ("b", "y", 0.5)])
    assert sorted(read_pairs(tmp_path / "p.csv").pairs) == [("a", "x"), ("b", "y")]


def test_matching_round_trip(tmp_path):
    m = Matching((("a", "x"), ("c", "y")), MatchSource.NAIVE)
    write_matching(tmp_path / "m.csv", m, {"distance": "epi"})
    back = read_matching(tmp_path / "m.csv")
    assert back.pairs == m.pairs and back.source is MatchSource.NAIVE
    assert read_pairs(tmp_path / "m.csv").pairs == m.pairs


def test_matching_must_be_injective(tmp_path):
    (tmp_path / "m.csv").write_text("left_id,right_id\na,x\nb,x\n")
    with pytest.raises(ValidationError):
        read_matching(tmp_path / "m.csv")


def test_ground_truth_round_trip(tmp_path):
    gt = GroundTruthCorrespondence({"p1": "q1", "p2": "q2"}, {"o1": "o1"})
    write_ground_truth(tmp_path / "g.csv", gt)
    back = read_ground_truth(tmp_path / "g.csv")
    assert back.point_pairs == gt.point_pairs and back.object_pairs == gt.object_pairs
    (tmp_path / "bad.csv").write_text("kind,left_id,right_id\nline,a,b\n")
    with pytest.raises(ParseError) as info:
        read_ground_truth(tmp_path / "bad.csv")
    assert (info.value.line, info.value.column) == (2, 1)


def test_points3d_round_trip(tmp_path):
    rows = [("a", "x", 0.1, -2.0, 3.0, True), ("b", "y", 1e-17, 2.0, -3.0, False)]
    write_points3d(tmp_path / "w.csv", rows)
    assert read_points3d(tmp_path / "w.csv") == rows


def test_metrics_round_trip_and_schema(tmp_path):
    report = MetricsReport(0.25, 0.0, 1.5, matched_count=3, skipped_triangulations=1)
    write_metrics(tmp_path / "m.json", report, {"distance": "ray"}, seed=4)
    data = read_metrics(tmp_path / "m.json")
    assert data["pointwise_mismatch"] == 0.25 and data["seed"] == 4
    data["pointwise_mismatch"] = 2.0
    (tmp_path / "bad.json").write_text(json.dumps(data))
    with pytest.raises(ValidationError):
        read_metrics(tmp_path / "bad.json")


def test_sweep_config_round_trip(tmp_path):
    cfg = SweepConfig(n_scenes=7, sigmas=(0.0, 0.3), base_seed=11)
    write_sweep_config(tmp_path / "s.json", cfg)
    assert read_sweep_config(tmp_path / "s.json") == cfg
    (tmp_path / "bad.json").write_text('{"n_scenes": 2, "colour": 1}')
    with pytest.raises(ValidationError, match="colour"):
        read_sweep_config(tmp_path / "bad.json")


def test_sweep_csv_round_trip(tmp_path):
    result = run_sweep(SweepConfig(n_scenes=2, sigmas=(0.0, 0.01)))
    write_sweep_csv(tmp_path / "r.csv", result)
    back = read_sweep_csv(tmp_path / "r.csv")
    assert back == result.rows()


def test_atomic_write_replaces_and_respects_umask(tmp_path):
    path = tmp_path / "sub" / "f.txt"
    atomic_write(path, "one")
    atomic_write(path, "two")
    assert path.read_text() == "two"
    assert [p.name for p in path.parent.iterdir()] == ["f.txt"]
    umask = os.umask(0)
    os.umask(umask)
    assert stat.S_IMODE(path.stat().st_mode) == 0o666 & ~umask


def test_atomic_write_leaves_target_on_failure(tmp_path):
    path = tmp_path / "f.txt"
    path.write_text("keep")

    with pytest.raises(TypeError):
        atomic_write(path, 123)
    assert path.read_text() == "keep"
    assert [p.name for p in tmp_path.iterdir()] == ["f.txt"]
