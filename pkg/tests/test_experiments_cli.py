import json
import math
from pathlib import Path

import pytest
from pydantic import ValidationError

from qht_gof.cli import main
from qht_gof.experiments import ExperimentSpec, load_spec, preset, run_experiment, spec_hash

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL_SPEC = {
    "schema_version": 1,
    "case_id": "custom",
    "tau": {"kind": "vacuum"},
    "alternatives": [{"kind": "vacuum"}, "single_photon"],
    "eta": 0.9,
    "N": 5,
    "n": 1000,
    "runs": 100,
    "seed": 12,
}


def _write(tmp_path, spec, name="spec.json"):
    p = tmp_path / name
    p.write_text(json.dumps(spec))
    return p


def test_patterns_command(tmp_path, capsys):
    out = tmp_path / "p.csv"
    assert main(["patterns", "0", "0", "--x-min", "-1", "--x-max", "1", "--step", "0.5", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# qht-gof ") and "spec_sha256=" in lines[0]
    assert lines[1] == "x,pattern"
    rows = dict(tuple(map(float, ln.split(","))) for ln in lines[2:])
    assert rows[0.0] == pytest.approx(2 / math.pi, abs=1e-8)


def test_patterns_odd_column(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["patterns", "2", "1", "--eta", "0.9", "--x-min", "-2", "--x-max", "2", "--step", "0.25",
                 "--out", str(out)]) == 0
    vals = [float(ln.split(",")[1]) for ln in out.read_text().splitlines()[2:]]
    assert all(abs(a + b) < 1e-8 for a, b in zip(vals, vals[::-1]))


def test_patterns_bad_eta(capsys):
    assert main(["patterns", "0", "0", "--eta", "0.4"]) == 2
    assert "(1/2, 1]" in capsys.readouterr().err


def test_distance_command(capsys):
    assert main(["distance", "vacuum", "single_photon"]) == 0
    assert float(capsys.readouterr().out) == 2.0
    assert main(["distance", "coherent:3", "cat:3", "--dim", "40"]) == 0
    assert abs(float(capsys.readouterr().out) - 0.9999) < 5e-4
    assert main(["distance", "cat:3", "cat:3"]) == 0
    assert float(capsys.readouterr().out) == 0.0
    assert main(["distance", "nonsense", "vacuum"]) == 2


def test_simulate_estimate_calibrate(tmp_path, capsys):
    data = tmp_path / "d.csv"
    assert main(["simulate", "single_photon", "--n", "3000", "--eta", "0.9", "--seed", "4", "--out", str(data)]) == 0
    assert main(["estimate", str(data), "--tau", "vacuum", "--N", "5"]) == 0
    assert abs(float(capsys.readouterr().out) - 2.0) < 0.3
    assert main(["estimate", str(tmp_path / "missing.csv"), "--tau", "vacuum", "--N", "5"]) == 2
    out = tmp_path / "cal"
    assert main(["calibrate", "--tau", "vacuum", "--N", "4", "--n", "500", "--runs", "100",
                 "--seed", "3", "--out", str(out)]) == 0
    th = json.loads((out / "thresholds.json").read_text())
    assert th["nu"]["0.05"] <= th["nu"]["0.01"]
    assert (out / "calibration_replicates.csv").read_text().startswith("# qht-gof ")
    assert main(["calibrate", "--tau", "vacuum", "--N", "4", "--runs", "50"]) == 2


def test_run_outputs_and_determinism(tmp_path):
    spec = _write(tmp_path, SMALL_SPEC)
    assert main(["run", "--spec", str(spec), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--spec", str(spec), "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "summary.csv" in files and "thresholds.json" in files
    assert "replicates_1_single_photon.csv" in files
    assert "report_1_single_photon_alpha0.01.json" in files
    for name in files:
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes(), name
        if name.endswith(".json"):
            # JSON files carry the header as their first key
            first = next(iter(json.loads(a)))
            assert first == "provenance" and "spec_sha256=" in json.loads(a)[first], name
        else:
            assert "spec_sha256=" in a.decode().splitlines()[0], name
    report = json.loads((tmp_path / "a" / "report_0_vacuum_alpha0.05.json").read_text())
    for key in ["case", "state", "tau", "eta", "N", "n", "alpha", "nu", "runs", "median", "mse",
                "level_or_power", "seed"]:
        assert key in report
    assert report["runs"] == 100 and report["kind"] == "level"


@pytest.mark.parametrize("patch,field", [
    ({"runs": 0}, "runs"),
    ({"eta": 0.4}, "eta"),
    ({"alternatives": []}, "alternatives"),
    ({"tau": {"kind": "bogus"}}, "tau"),
    ({"schema_version": 2}, "schema_version"),
    ({"extra_field": 1}, "extra_field"),
])
def test_run_rejects_invalid_specs(tmp_path, capsys, patch, field):
    spec = _write(tmp_path, {**SMALL_SPEC, **patch})
    assert main(["run", "--spec", str(spec)]) == 2
    err = capsys.readouterr().err
    assert field in err
    if field == "eta":
        assert "(1/2, 1]" in err


def test_spec_model():
    s = ExperimentSpec(**SMALL_SPEC)
    assert s.alternatives[1] == {"kind": "single_photon"}
    assert spec_hash(s) == spec_hash(ExperimentSpec(**{**SMALL_SPEC, "output_dir": "elsewhere"}))
    assert spec_hash(s) != spec_hash(ExperimentSpec(**{**SMALL_SPEC, "seed": 13}))
    with pytest.raises(ValidationError):
        ExperimentSpec(**{**SMALL_SPEC, "runs": 0})
    with pytest.raises(ValueError):
        ExperimentSpec(**{**SMALL_SPEC, "alphas": [0.001]}).check_levels()


def test_presets_match_config_files():
    for path in sorted(CONFIGS.glob("case_*.json")):
        spec = load_spec(path)
        ref = preset(spec.case_id, spec.eta, spec.N, output_dir=spec.output_dir)
        assert spec == ref, path.name
    assert len(list(CONFIGS.glob("case_*.json"))) == 6


def test_run_experiment_rows(tmp_path):
    rows = run_experiment(ExperimentSpec(**SMALL_SPEC), output_dir=tmp_path)
    assert len(rows) == 4
    lev = [r for r in rows if r["kind"] == "level"]
    assert {r["alpha"] for r in lev} == {0.01, 0.05}
    pw = [r for r in rows if r["kind"] == "power"]
    assert all(r["level_or_power"] == 1.0 for r in pw)
    assert all(r["truth"] == 2.0 for r in pw)
