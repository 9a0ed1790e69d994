"""End-to-end orchestration of the analysis pipeline.

File-based stages with explicit intermediate artifacts so each stage is
independently runnable and testable: capture -> cycle + features ->
force trajectories + AP trains -> ensemble verdicts -> report.
"""

from __future__ import annotations

import datetime

import numpy as np

from . import __version__
from .biomech import simulate_lower_body
from .detect import VIEWS, ensemble_classify
from .muscle import reconstruct_ap_trains, stimulation_histogram
from .schemas import SCHEMA_ID, content_hash
from .signal import (CYCLE_LEN, classify_phases, denoise, extract_features,
                     segment_steps, summarize_cycle)

# The dominant muscle pair feeding each joint's force/stimulation views.
JOINT_MUSCLE_PAIRS = {
    "ankle": ("gastrocnemius", "tibialis_anterior"),
    "knee": ("quadriceps", "hamstrings"),
    "hip": ("gluteus_maximus", "iliopsoas"),
}


def preprocess_capture(raw, config):
    """Denoise, segment, and summarize one capture.

    Returns (cycle, features); raises signal errors on unusable captures.
    """
    den = denoise(raw)
    segments = segment_steps(den, axis=config.sagittal_axis)
    cycle = summarize_cycle(segments, den, axis=config.sagittal_axis)
    features = extract_features(den, segments, body=config.body,
                                axis=config.sagittal_axis)
    return cycle, features


def simulate_gait(cycles, config, duration_s=None):
    """Biomechanical forces plus reconstructed AP trains for all muscles.

    Returns (forces, trains, histograms, labels): dicts keyed by muscle
    group, plus the stance/swing labels backing the simulation.
    """
    if duration_s is None:
        duration_s = config.cycle_duration_s
    forces = simulate_lower_body(cycles, config.body, duration_s,
                                 insertions=config.insertions(),
                                 centre_amplitude=config.centre_amplitude)
    labels = classify_phases(cycles["knee"], cycles["ankle"], config.body)
    pools = config.build_muscles()
    lengths = np.ones(CYCLE_LEN)  # relative length held at rest; overridable upstream
    cycle_ms = duration_s * 1000.0
    trains = {}
    histograms = {}
    for name, traj in forces.items():
        train = reconstruct_ap_trains(pools[name], traj, lengths)
        trains[name] = train
        histograms[name] = stimulation_histogram(
            train, bins=config.histogram_bins, cycle_ms=cycle_ms)
    return forces, trains, histograms, labels


def view_vectors(joint, cycle, forces, histograms):
    """The three 20-vectors the ensemble inspects for one joint."""
    pair = JOINT_MUSCLE_PAIRS[joint]
    force_vec = np.sum([np.asarray(forces[m].forces, dtype=float)
                        for m in pair], axis=0)
    stim_vec = np.sum([np.asarray(histograms[m], dtype=float) for m in pair],
                      axis=0)
    return {
        "angles": np.asarray(cycle.angles, dtype=float),
        "forces": force_vec,
        "stimuli": stim_vec,
    }


def classify_joint(joint, vectors, models, config):
    """Run the three per-view networks for one joint and average."""
    nets = {}
    norms = {}
    for view in VIEWS:
        net, norm = models[(joint, view)]
        nets[view] = net
        norms[view] = norm
    verdict = ensemble_classify(nets, vectors, joint=joint, norms=norms)
    if verdict.inconclusive:
        call = "inconclusive"
    elif verdict.p_pathological > config.verdict_threshold:
        call = "pathological"
    else:
        call = "normal"
    return verdict, call


def features_to_dict(features):
    return {
        "min_angle": features.min_angle,
        "max_angle": features.max_angle,
        "step_count": features.step_count,
        "stance_swing_ratio": features.stance_swing_ratio,
        "speed": features.speed,
        "time_per_step": features.time_per_step,
    }


def build_report(cycles, features, forces, trains, histograms, labels,
                 verdicts, config, input_hash, timestamp=None):
    """Assemble the analysis report document.

    Deterministic except for ``generated_at``; provenance hashes cover the
    inputs and the configuration.
    """
    if timestamp is None:
        timestamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    muscles = {}
    for name in sorted(forces):
        muscles[name] = {
            "dt": float(forces[name].dt),
            "forces": [float(f) for f in forces[name].forces],
            "ap_count": trains[name].total_count(),
            "ap_histogram": [int(c) for c in histograms[name]],
        }
    joints = {}
    for joint in sorted(cycles):
        verdict, call = verdicts[joint]
        joints[joint] = {
            "cycle": [float(a) for a in cycles[joint].angles],
            "features": (features_to_dict(features[joint])
                         if features.get(joint) else None),
            "phase_labels": list(labels.labels),
            "verdict": {
                "p_pathological": verdict.p_pathological,
                "per_view": {v: verdict.per_view[v] for v in VIEWS},
                "classification": call,
            },
        }
    return {
        "schema": SCHEMA_ID,
        "version": __version__,
        "generated_at": timestamp,
        "seed": config.seed,
        "input_hash": input_hash,
        "config_hash": content_hash(config.to_dict()),
        "muscles": muscles,
        "joints": joints,
    }
