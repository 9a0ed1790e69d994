"""Command-line pipeline: preprocess | simulate | classify | train | serve
| report.

Exit codes: 0 success, 2 input/validation failure, 3 infeasible
stimulation reconstruction, 4 model failure.  Every subcommand validates
its inputs before writing any output file.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import schemas
from .biomech import BiomechError
from .config import ConfigError, load_config
from .detect import (DetectError, Hyperparams, Normalization, Dataset,
                     Sample, VIEWS, WIDTHS, mlp_init, mlp_train,
                     person_cross_validate)
from .muscle import (InfeasibleTargetError, MuscleError,
                     stimulation_histogram)
from .pipeline import (JOINT_MUSCLE_PAIRS, build_report, classify_joint,
                       features_to_dict, preprocess_capture, simulate_gait,
                       view_vectors)
from .signal import GaitFeatures, SignalError, classify_phases

EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_MODEL = 4


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config(path):
    try:
        return load_config(path)
    except ConfigError as exc:
        _fail(EXIT_VALIDATION, f"bad configuration: {exc}")


def _read_json(path):
    try:
        return schemas.load_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        _fail(EXIT_VALIDATION, f"cannot read {path}: {exc}")


@click.group()
def main():
    """Gait analysis pipeline."""


@main.command()
@click.argument("captures", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              default="out")
def preprocess(captures, config_path, seed, out_dir):
    """Denoise captures and produce gait-cycle and feature files."""
    cfg = _load_config(config_path)
    if seed is not None:
        cfg.seed = seed

    staged = []
    for path in captures:
        doc = _read_json(path)
        try:
            raw = schemas.raw_capture_from_dict(doc)
            cycle, features = preprocess_capture(raw, cfg)
        except (schemas.SchemaError, SignalError) as exc:
            _fail(EXIT_VALIDATION, f"{path}: {exc}")
        staged.append((raw.placement_joint, cycle, features))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for joint, cycle, features in staged:
        schemas.dump_json(schemas.gait_cycle_to_dict(cycle),
                          out / f"cycle_{joint}.json")
        schemas.dump_json(
            {"schema": schemas.SCHEMA_ID, "joint": joint,
             "features": features_to_dict(features)},
            out / f"features_{joint}.json")
        click.echo(f"{joint}: {features.step_count} steps, "
                   f"{features.time_per_step:.3f} s per step")


def _load_cycles(cycle_dir):
    cycles = {}
    durations = {}
    for joint in ("ankle", "knee", "hip"):
        path = Path(cycle_dir) / f"cycle_{joint}.json"
        if not path.exists():
            _fail(EXIT_VALIDATION, f"missing cycle file: {path}")
        try:
            cycles[joint] = schemas.gait_cycle_from_dict(_read_json(path))
        except (schemas.SchemaError, SignalError) as exc:
            _fail(EXIT_VALIDATION, f"{path}: {exc}")
        fpath = Path(cycle_dir) / f"features_{joint}.json"
        if fpath.exists():
            doc = _read_json(fpath)
            durations[joint] = doc.get("features", {}).get("time_per_step")
    known = [d for d in durations.values() if d]
    duration = float(np.mean(known)) if known else None
    return cycles, duration


@main.command()
@click.argument("cycle_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              default="out")
def simulate(cycle_dir, config_path, seed, out_dir):
    """Compute muscle forces and reconstruct AP trains from cycle files."""
    cfg = _load_config(config_path)
    if seed is not None:
        cfg.seed = seed
    cycles, duration = _load_cycles(cycle_dir)
    try:
        forces, trains, histograms, labels = simulate_gait(
            cycles, cfg, duration_s=duration)
    except InfeasibleTargetError as exc:
        _fail(EXIT_INFEASIBLE, f"stimulation reconstruction infeasible: {exc}")
    except (BiomechError, MuscleError, SignalError) as exc:
        _fail(EXIT_VALIDATION, str(exc))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in sorted(forces):
        schemas.dump_json(schemas.force_trajectory_to_dict(forces[name]),
                          out / f"forces_{name}.json")
        schemas.dump_json(schemas.ap_train_to_dict(trains[name]),
                          out / f"aptrain_{name}.json")
        click.echo(f"{name}: peak {float(np.max(forces[name].forces)):.1f} N, "
                   f"{trains[name].total_count()} APs")


def _load_models(model_dir):
    models = {}
    for joint in JOINT_MUSCLE_PAIRS:
        for view in VIEWS:
            path = Path(model_dir) / f"model_{joint}_{view}.json"
            if not path.exists():
                _fail(EXIT_MODEL, f"missing model file: {path}")
            try:
                net, norm, mjoint, mview = schemas.model_from_dict(
                    _read_json(path))
            except (schemas.SchemaError, DetectError) as exc:
                _fail(EXIT_MODEL, f"{path}: {exc}")
            if (mjoint, mview) != (joint, view):
                _fail(EXIT_MODEL, f"{path}: labelled {mjoint}/{mview}")
            if tuple(net.widths) != WIDTHS:
                _fail(EXIT_MODEL,
                      f"{path}: architecture {net.widths} is not the "
                      f"production layout {WIDTHS}")
            models[(joint, view)] = (net, norm)
    return models


@main.command()
@click.argument("artifact_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--models", "model_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              default="out")
def classify(artifact_dir, model_dir, config_path, seed, out_dir):
    """Produce the analysis report from cycles, forces, and AP trains."""
    cfg = _load_config(config_path)
    if seed is not None:
        cfg.seed = seed
    cycles, duration = _load_cycles(artifact_dir)
    art = Path(artifact_dir)

    forces = {}
    trains = {}
    for joint, pair in JOINT_MUSCLE_PAIRS.items():
        for name in pair:
            fpath = art / f"forces_{name}.json"
            tpath = art / f"aptrain_{name}.json"
            if not fpath.exists() or not tpath.exists():
                _fail(EXIT_VALIDATION,
                      f"missing simulation artifacts for muscle {name!r}")
            try:
                forces[name] = schemas.force_trajectory_from_dict(
                    _read_json(fpath))
                trains[name] = schemas.ap_train_from_dict(_read_json(tpath))
            except (schemas.SchemaError, BiomechError, MuscleError) as exc:
                _fail(EXIT_VALIDATION, f"{name}: {exc}")

    features = {}
    for joint in cycles:
        fpath = art / f"features_{joint}.json"
        features[joint] = None
        if fpath.exists():
            doc = _read_json(fpath)
            try:
                features[joint] = GaitFeatures(**doc.get("features", {}))
            except (TypeError, SignalError) as exc:
                _fail(EXIT_VALIDATION, f"{fpath}: {exc}")

    models = _load_models(model_dir)

    cycle_ms = (duration or cfg.cycle_duration_s) * 1000.0
    histograms = {name: stimulation_histogram(train, bins=cfg.histogram_bins,
                                              cycle_ms=cycle_ms)
                  for name, train in trains.items()}
    labels = classify_phases(cycles["knee"], cycles["ankle"], cfg.body)

    verdicts = {}
    for joint in cycles:
        vectors = view_vectors(joint, cycles[joint], forces, histograms)
        try:
            verdicts[joint] = classify_joint(joint, vectors, models, cfg)
        except DetectError as exc:
            _fail(EXIT_MODEL, f"{joint}: {exc}")

    input_docs = [schemas.gait_cycle_to_dict(cycles[j]) for j in sorted(cycles)]
    input_docs += [schemas.force_trajectory_to_dict(forces[m])
                   for m in sorted(forces)]
    input_hash = schemas.content_hash(input_docs)

    report = build_report(cycles, features, forces, trains, histograms,
                          labels, verdicts, cfg, input_hash)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    schemas.dump_json(report, out / "report.json")
    for joint in sorted(verdicts):
        verdict, call = verdicts[joint]
        probs = ", ".join(f"{v}={verdict.per_view[v]:.3f}" for v in VIEWS)
        click.echo(f"{joint}: {call} (p={verdict.p_pathological:.3f}; {probs})")


@main.command()
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--folds", type=int, default=5)
@click.option("--epochs", type=int, default=200)
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              default="models")
def train(dataset_dir, config_path, seed, folds, epochs, out_dir):
    """Train per-joint, per-view networks and emit the CV report."""
    cfg = _load_config(config_path)
    if seed is not None:
        cfg.seed = seed
    path = Path(dataset_dir) / "dataset.json"
    if not path.exists():
        _fail(EXIT_VALIDATION, f"missing dataset file: {path}")
    doc = _read_json(path)
    try:
        dataset = Dataset([Sample(s["person_id"], s["joint"], s["view"],
                                  np.asarray(s["values"], dtype=float),
                                  int(s["label"]))
                           for s in doc.get("samples", [])])
    except (KeyError, TypeError, DetectError) as exc:
        _fail(EXIT_VALIDATION, f"bad dataset: {exc}")

    hyper = Hyperparams(epochs=epochs, seed=cfg.seed)
    try:
        cv = person_cross_validate(dataset, folds, hyper=hyper, seed=cfg.seed)
    except DetectError as exc:
        _fail(EXIT_MODEL, str(exc))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for joint in dataset.joints():
        for view in VIEWS:
            samples = dataset.subset(joint=joint, view=view)
            if not samples:
                continue
            x = np.stack([s.values for s in samples])
            y = np.array([s.label for s in samples], dtype=float)
            norm = Normalization.fit(x)
            net = mlp_init(seed=cfg.seed)
            try:
                mlp_train(net, norm.apply(x), y, hyper)
            except DetectError as exc:
                _fail(EXIT_MODEL, f"{joint}/{view}: {exc}")
            schemas.dump_json(schemas.model_to_dict(net, joint, view, norm),
                              out / f"model_{joint}_{view}.json")

    with open(out / "cv_report.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["joint", "experiment_1", "experiment_2",
                         "experiment_3", "average"])
        for joint, e1, e2, e3, avg in cv.rows():
            writer.writerow([joint, f"{e1:.4f}", f"{e2:.4f}", f"{e3:.4f}",
                             f"{avg:.4f}"])
        writer.writerow(["overall", "", "", "", f"{cv.overall:.4f}"])
    click.echo(f"cross-validation average accuracy: {cv.overall:.4f}")


@main.command()
@click.option("--port", type=int, default=8080)
@click.option("--static", "static_dir", type=click.Path(file_okay=False),
              default=".")
@click.option("--inbox", "inbox_dir", type=click.Path(file_okay=False),
              default="inbox")
def serve(port, static_dir, inbox_dir):
    """Serve the capture client and accept uploads at /capture."""
    from .server import serve as _serve
    _serve(port, static_dir, inbox_dir)


@main.command()
@click.argument("report_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              default="out")
def report(report_file, out_dir):
    """Emit plot-ready CSVs (force curves, AP histograms) from a report."""
    doc = _read_json(report_file)
    if doc.get("schema") != schemas.SCHEMA_ID or \
            "muscles" not in doc or "joints" not in doc:
        _fail(EXIT_VALIDATION, "not a gaitlab/v1 analysis report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "forces.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["muscle", "time_s", "force_n"])
        for muscle, rec in sorted(doc.get("muscles", {}).items()):
            dt = rec["dt"]
            for i, f in enumerate(rec["forces"]):
                writer.writerow([muscle, f"{i * dt:.6f}", f"{f:.6f}"])

    with open(out / "ap_histograms.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["muscle", "bin_start_pct", "ap_count"])
        for muscle, rec in sorted(doc.get("muscles", {}).items()):
            hist = rec["ap_histogram"]
            for i, count in enumerate(hist):
                writer.writerow([muscle, f"{100.0 * i / len(hist):.1f}", count])

    with open(out / "verdicts.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["joint", "p_pathological", "classification"])
        for joint, rec in sorted(doc.get("joints", {}).items()):
            v = rec["verdict"]
            writer.writerow([joint, f"{v['p_pathological']:.6f}",
                             v["classification"]])
    click.echo(f"wrote forces.csv, ap_histograms.csv, verdicts.csv to {out}")


if __name__ == "__main__":
    main()
