import json
import math

import numpy as np
import pytest

import mdsbl


def test_atom_is_unit_norm():
    g = mdsbl.RadarGeometry.mimo3x3([0.0, 0.0], math.pi / 2)
    a = mdsbl.atom([3.0, 25.0], g)
    assert a.shape == (135,)
    assert np.iscomplexobj(a)
    assert abs(np.linalg.norm(a) - 1.0) < 1e-12


def test_sbl_recovers_crossing_objects():
    sc = mdsbl.crossing_scenario(20)
    ys = mdsbl.synthesize(sc, 0)
    est = mdsbl.sbl_estimate(ys, sc.sensors, 10.0, mdsbl.crossing_region())
    assert len(est["locations"]) == 2
    assert mdsbl.ospa(sc.truth(), est["locations"]) < 1.0
    assert est["converged"]


def test_sbl_multi_sensor():
    sc = mdsbl.multi_radar_scenario("single_object", 3)
    ys = mdsbl.synthesize(sc, 1)
    region = mdsbl.Rect([-30.0, 0.0], [30.0, 60.0])
    est = mdsbl.sbl_estimate(ys, sc.sensors, 11.0, region, grid=mdsbl.xy_grid(region, 2.0))
    assert len(est["noise_precisions"]) == 3
    assert mdsbl.ospa(sc.truth(), est["locations"]) < 3.0


def test_nomp_and_zero_snapshot():
    sc = mdsbl.crossing_scenario(20)
    est = mdsbl.nomp_estimate(mdsbl.synthesize(sc, 2)[0], sc.sensors[0], 10.0, mdsbl.crossing_region())
    assert len(est["locations"]) >= 2
    empty = mdsbl.sbl_estimate([np.zeros(135, complex)], sc.sensors, 10.0, mdsbl.crossing_region())
    assert empty["locations"] == []


def test_ospa_values():
    assert mdsbl.ospa([], []) == 0.0
    assert mdsbl.ospa([[0.0, 0.0]], [[3.0, 4.0]]) == pytest.approx(5.0)
    assert mdsbl.ospa([[0.0, 0.0]], []) == 10.0


def test_invalid_inputs_raise():
    sc = mdsbl.crossing_scenario(0)
    with pytest.raises(ValueError):
        mdsbl.sbl_estimate([], sc.sensors, 10.0, mdsbl.crossing_region())
    with pytest.raises(mdsbl.ConfigError):
        mdsbl.normalize_config(json.dumps({"schema_version": 1, "runs": 0}))


def test_run_experiment_is_deterministic():
    cfg = json.dumps({
        "schema_version": 1,
        "scenario": {"builtin": "crossing_tracks", "time_steps": [10]},
        "algorithms": ["sbl", "nomp"],
        "sweep": "t",
        "runs": 2,
        "seed": 5,
    })
    a = mdsbl.run_experiment(cfg, workers=1)
    b = mdsbl.run_experiment(cfg, workers=2)
    assert a == b
    assert a["rows_csv"].startswith("algorithm,")
    assert len(a["rows_csv"].strip().splitlines()) == 1 + 4
