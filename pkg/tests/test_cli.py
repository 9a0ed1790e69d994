import json

import numpy as np
import pytest
from click.testing import CliRunner

from gaitlab import schemas
from gaitlab.cli import main
from gaitlab.config import PipelineConfig
from gaitlab.pipeline import simulate_gait, view_vectors
from gaitlab.signal import RawCapture, make_synthetic_gait


def profile_capture(joint, profile, n_strides=8, stride_s=1.2,
                    sample_rate=50.0, lead_s=0.3, noise=0.05, seed=0):
    """Tile a 20-point cycle profile into a multi-stride capture."""
    rng = np.random.default_rng(seed)
    duration = 2 * lead_s + n_strides * stride_s
    n = int(round(duration * sample_rate)) + 1
    t = np.arange(n) / sample_rate
    phase = ((t - lead_s) % stride_s) / stride_s
    closed = np.append(profile, profile[0])
    x = np.interp(phase * 20, np.arange(21), closed)
    x = x + rng.normal(0.0, noise, n)
    drift = 0.05 * np.sin(2 * np.pi * t / duration)
    angles = np.column_stack([drift, x, -drift])
    return RawCapture(joint, sample_rate, t * 1000.0, angles)


def write_captures(dirpath):
    cycles, _ = make_synthetic_gait()
    paths = []
    for joint in ("ankle", "knee", "hip"):
        raw = profile_capture(joint, cycles[joint].angles)
        path = dirpath / f"capture_{joint}.json"
        schemas.dump_json(schemas.raw_capture_to_dict(raw), path)
        paths.append(str(path))
    return paths


def write_dataset(dirpath, rng):
    cfg = PipelineConfig()
    base = {}
    for tag, kwargs in (("normal", {}),
                        ("patho", dict(stance_fraction=0.52,
                                       knee_peak_deg=70.0,
                                       hip_peak_deg=50.0,
                                       ankle_peak_deg=24.0))):
        cycles, _ = make_synthetic_gait(cfg.body, **kwargs)
        forces, _, hists, _ = simulate_gait(cycles, cfg)
        base[tag] = {j: view_vectors(j, cycles[j], forces, hists)
                     for j in cycles}
    samples = []
    for p in range(6):
        tag = "normal" if p % 2 == 0 else "patho"
        for _ in range(3):
            for joint, views in base[tag].items():
                for view, vec in views.items():
                    noisy = vec * (1 + rng.normal(0, 0.02, 20))
                    samples.append({
                        "person_id": f"p{p}", "joint": joint, "view": view,
                        "values": [float(v) for v in noisy],
                        "label": 0 if tag == "normal" else 1,
                    })
    dirpath.mkdir(parents=True, exist_ok=True)
    schemas.dump_json({"schema": schemas.SCHEMA_ID, "samples": samples},
                      dirpath / "dataset.json")


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Run the whole pipeline once; tests inspect the artifacts."""
    root = tmp_path_factory.mktemp("cli")
    runner = CliRunner()
    captures = write_captures(root)

    art = root / "art"
    res = runner.invoke(main, ["preprocess", *captures, "--out", str(art)])
    assert res.exit_code == 0, res.output

    res = runner.invoke(main, ["simulate", str(art), "--out", str(art)])
    assert res.exit_code == 0, res.output

    write_dataset(root / "data", np.random.default_rng(1))
    models = root / "models"
    res = runner.invoke(main, ["train", str(root / "data"), "--folds", "3",
                               "--epochs", "60", "--out", str(models)])
    assert res.exit_code == 0, res.output

    out = root / "report"
    res = runner.invoke(main, ["classify", str(art), "--models", str(models),
                               "--out", str(out)])
    assert res.exit_code == 0, res.output
    return root


class TestPreprocess:
    def test_artifacts_written(self, workdir):
        for joint in ("ankle", "knee", "hip"):
            cycle = schemas.load_json(workdir / "art" / f"cycle_{joint}.json")
            schemas.validate(cycle, "gait_cycle")
            feats = schemas.load_json(
                workdir / "art" / f"features_{joint}.json")
            assert feats["features"]["step_count"] >= 2

    def test_corrupt_json_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{ not json")
        res = CliRunner().invoke(main, ["preprocess", str(bad),
                                        "--out", str(tmp_path / "o")])
        assert res.exit_code == 2
        assert "error" in res.output

    def test_unusable_capture_exits_2(self, tmp_path):
        # monotone ramp: no periodic structure, hence no steps
        n = 200
        doc = {
            "schema": "gaitlab/v1", "placement_joint": "ankle",
            "sample_rate": 50.0,
            "samples": [{"t": 20.0 * i, "alpha": 0.0, "beta": float(i),
                         "gamma": 0.0} for i in range(n)],
        }
        path = tmp_path / "ramp.json"
        schemas.dump_json(doc, path)
        res = CliRunner().invoke(main, ["preprocess", str(path),
                                        "--out", str(tmp_path / "o")])
        assert res.exit_code == 2
        assert "stance onsets" in res.output or "steps" in res.output

    def test_no_partial_artifacts_on_failure(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{ not json")
        out = tmp_path / "out"
        CliRunner().invoke(main, ["preprocess", str(bad), "--out", str(out)])
        assert not out.exists()

    def test_too_short_capture_exits_2(self, tmp_path):
        doc = {
            "schema": "gaitlab/v1", "placement_joint": "ankle",
            "sample_rate": 50.0,
            "samples": [{"t": 20.0 * i, "alpha": 0.0, "beta": 1.0 * i,
                         "gamma": 0.0} for i in range(3)],
        }
        path = tmp_path / "short.json"
        schemas.dump_json(doc, path)
        res = CliRunner().invoke(main, ["preprocess", str(path),
                                        "--out", str(tmp_path / "o")])
        assert res.exit_code == 2
        assert "samples" in res.output.lower()


class TestSimulate:
    def test_all_twelve_artifacts(self, workdir):
        art = workdir / "art"
        from gaitlab.biomech import MUSCLES
        for muscle in MUSCLES:
            forces = schemas.load_json(art / f"forces_{muscle}.json")
            schemas.validate(forces, "force_trajectory")
            assert len(forces["forces"]) == 20
            train = schemas.load_json(art / f"aptrain_{muscle}.json")
            schemas.validate(train, "ap_train")

    def test_missing_cycles_exit_2(self, tmp_path):
        res = CliRunner().invoke(main, ["simulate", str(tmp_path)])
        assert res.exit_code == 2

    def test_undersized_pool_exits_3(self, workdir, tmp_path):
        # a starved quadriceps pool cannot carry the demanded forces
        cfg = tmp_path / "weak.json"
        cfg.write_text(json.dumps({
            "muscles": {"quadriceps": {"f0_min": 0.001, "f0_max": 0.02}}}))
        res = CliRunner().invoke(main, [
            "simulate", str(workdir / "art"), "--config", str(cfg),
            "--out", str(tmp_path / "o")])
        assert res.exit_code == 3
        assert "infeasible" in res.output


class TestTrainAndClassify:
    def test_model_files_and_cv_report(self, workdir):
        models = workdir / "models"
        for joint in ("ankle", "knee", "hip"):
            for view in ("angles", "forces", "stimuli"):
                doc = schemas.load_json(models / f"model_{joint}_{view}.json")
                schemas.validate(doc, "model")
                assert tuple(doc["widths"]) == (20, 160, 160, 160, 100, 80,
                                                50, 1)
        report = (models / "cv_report.csv").read_text().splitlines()
        assert report[0].startswith("joint,experiment_1")
        assert len(report) == 5  # three joints + overall + header

    def test_report_written_and_valid(self, workdir):
        doc = schemas.load_json(workdir / "report" / "report.json")
        assert doc["schema"] == "gaitlab/v1"
        assert set(doc["joints"]) == {"ankle", "knee", "hip"}
        for joint, rec in doc["joints"].items():
            v = rec["verdict"]
            assert 0.0 <= v["p_pathological"] <= 1.0
            views = v["per_view"]
            assert v["p_pathological"] == pytest.approx(
                np.mean([views[k] for k in sorted(views)]))
        assert set(doc["muscles"]) == {
            "gastrocnemius", "tibialis_anterior", "quadriceps",
            "hamstrings", "gluteus_maximus", "iliopsoas"}

    def test_missing_models_exit_4(self, workdir, tmp_path):
        res = CliRunner().invoke(main, ["classify", str(workdir / "art"),
                                        "--models", str(tmp_path)])
        assert res.exit_code == 4

    def test_non_production_architecture_exit_4(self, workdir, tmp_path):
        # a model file with the wrong layer widths must be refused
        import shutil
        models = tmp_path / "models"
        shutil.copytree(workdir / "models", models)
        doc = schemas.load_json(models / "model_ankle_angles.json")
        doc["widths"] = [20, 4, 1]
        doc["weights"] = [np.zeros((20, 4)).tolist(),
                          np.zeros((4, 1)).tolist()]
        doc["biases"] = [np.zeros(4).tolist(), np.zeros(1).tolist()]
        schemas.dump_json(doc, models / "model_ankle_angles.json")
        res = CliRunner().invoke(main, ["classify", str(workdir / "art"),
                                        "--models", str(models),
                                        "--out", str(tmp_path / "o")])
        assert res.exit_code == 4
        assert "architecture" in res.output


class TestCrossProcessDeterminism:
    def test_train_outputs_identical_across_processes(self, workdir,
                                                      tmp_path):
        # fresh interpreters per run: catches any process-salted hashing
        import subprocess
        import sys
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / run
            proc = subprocess.run(
                [sys.executable, "-m", "gaitlab.cli", "train",
                 str(workdir / "data"), "--folds", "2", "--epochs", "3",
                 "--seed", "11", "--out", str(out)],
                capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            blob = (out / "cv_report.csv").read_bytes()
            for model in sorted(out.glob("model_*.json")):
                blob += model.read_bytes()
            outputs.append(blob)
        assert outputs[0] == outputs[1]


class TestReportCommand:
    def test_csv_outputs(self, workdir, tmp_path):
        res = CliRunner().invoke(main, [
            "report", str(workdir / "report" / "report.json"),
            "--out", str(tmp_path)])
        assert res.exit_code == 0
        hist = (tmp_path / "ap_histograms.csv").read_text().splitlines()
        assert hist[0] == "muscle,bin_start_pct,ap_count"
        assert len(hist) == 1 + 6 * 20
        forces = (tmp_path / "forces.csv").read_text().splitlines()
        assert forces[0] == "muscle,time_s,force_n"
        verdicts = (tmp_path / "verdicts.csv").read_text().splitlines()
        assert len(verdicts) == 4

    def test_rejects_non_report(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text(json.dumps({"schema": "other"}))
        res = CliRunner().invoke(main, ["report", str(path)])
        assert res.exit_code == 2

    def test_rejects_other_v1_artifacts(self, workdir, tmp_path):
        # a cycle file carries the schema tag but is not a report
        res = CliRunner().invoke(main, [
            "report", str(workdir / "art" / "cycle_ankle.json"),
            "--out", str(tmp_path)])
        assert res.exit_code == 2
