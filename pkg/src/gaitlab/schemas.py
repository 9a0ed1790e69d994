"""Versioned JSON wire formats shared across the pipeline and the capture
client.  Every artifact carries a top-level ``"schema": "gaitlab/v1"``."""

from __future__ import annotations

import hashlib
import json

import jsonschema
import numpy as np

from .biomech import ForceTrajectory
from .muscle import APTrain
from .signal import CYCLE_LEN, GaitCycle, RawCapture

SCHEMA_ID = "gaitlab/v1"


class SchemaError(ValueError):
    """A document failed validation; ``path`` points at the offending field."""

    def __init__(self, message, path=""):
        super().__init__(message)
        self.path = path


RAW_CAPTURE_SCHEMA = {
    "type": "object",
    "required": ["schema", "placement_joint", "sample_rate", "samples"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "placement_joint": {"enum": ["ankle", "knee", "hip"]},
        "sample_rate": {"type": "number", "exclusiveMinimum": 0},
        "samples": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "required": ["t", "alpha", "beta", "gamma"],
                "additionalProperties": False,
                "properties": {
                    "t": {"type": "number"},
                    "alpha": {"type": "number"},
                    "beta": {"type": "number"},
                    "gamma": {"type": "number"},
                },
            },
        },
    },
}

GAIT_CYCLE_SCHEMA = {
    "type": "object",
    "required": ["schema", "joint", "angles"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "joint": {"enum": ["ankle", "knee", "hip"]},
        "angles": {
            "type": "array",
            "minItems": CYCLE_LEN,
            "maxItems": CYCLE_LEN,
            "items": {"type": "number"},
        },
    },
}

FORCE_TRAJECTORY_SCHEMA = {
    "type": "object",
    "required": ["schema", "muscle", "dt", "forces"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "muscle": {"type": "string"},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "forces": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "number", "minimum": 0},
        },
    },
}

AP_TRAIN_SCHEMA = {
    "type": "object",
    "required": ["schema", "muscle", "trains"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "muscle": {"type": "string"},
        "trains": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["mu_rank", "times_ms"],
                "additionalProperties": False,
                "properties": {
                    "mu_rank": {"type": "integer", "minimum": 1},
                    "times_ms": {"type": "array", "items": {"type": "number"}},
                },
            },
        },
    },
}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["schema", "joint", "view", "widths", "weights", "biases",
                 "norm_mean", "norm_std", "seed"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "joint": {"enum": ["ankle", "knee", "hip"]},
        "view": {"enum": ["angles", "forces", "stimuli"]},
        "widths": {"type": "array", "items": {"type": "integer"}},
        "weights": {"type": "array"},
        "biases": {"type": "array"},
        "norm_mean": {"type": "array", "items": {"type": "number"}},
        "norm_std": {"type": "array", "items": {"type": "number"}},
        "seed": {"type": "integer"},
    },
}

_SCHEMAS = {
    "raw_capture": RAW_CAPTURE_SCHEMA,
    "gait_cycle": GAIT_CYCLE_SCHEMA,
    "force_trajectory": FORCE_TRAJECTORY_SCHEMA,
    "ap_train": AP_TRAIN_SCHEMA,
    "model": MODEL_SCHEMA,
}


def validate(doc, kind):
    """Validate a document against one of the gaitlab/v1 schemas.

    Raises SchemaError carrying the slash-joined path of the failing field.
    """
    validator = jsonschema.Draft202012Validator(_SCHEMAS[kind])
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path)
        raise SchemaError(f"{kind} invalid at '{path}': {err.message}", path=path)


def canonical_dumps(doc):
    """Deterministic serialization used for files and content hashes."""
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def content_hash(doc):
    return hashlib.sha256(canonical_dumps(doc).encode("utf-8")).hexdigest()


# -- RawCapture -------------------------------------------------------------

def raw_capture_to_dict(raw):
    return {
        "schema": SCHEMA_ID,
        "placement_joint": raw.placement_joint,
        "sample_rate": float(raw.sample_rate),
        "samples": [
            {"t": float(t), "alpha": float(a), "beta": float(b), "gamma": float(g)}
            for t, a, b, g in raw.samples
        ],
    }


def raw_capture_from_dict(doc):
    validate(doc, "raw_capture")
    rows = [(s["t"], s["alpha"], s["beta"], s["gamma"]) for s in doc["samples"]]
    try:
        return RawCapture.from_samples(doc["placement_joint"],
                                       doc["sample_rate"], rows)
    except ValueError as exc:
        raise SchemaError(f"raw_capture invalid: {exc}", path="samples") from exc


# -- GaitCycle ----------------------------------------------------------------

def gait_cycle_to_dict(cycle):
    return {
        "schema": SCHEMA_ID,
        "joint": cycle.joint,
        "angles": [float(a) for a in cycle.angles],
    }


def gait_cycle_from_dict(doc):
    validate(doc, "gait_cycle")
    return GaitCycle(doc["joint"], np.asarray(doc["angles"], dtype=float))


# -- ForceTrajectory ----------------------------------------------------------

def force_trajectory_to_dict(traj):
    return {
        "schema": SCHEMA_ID,
        "muscle": traj.muscle,
        "dt": float(traj.dt),
        "forces": [float(f) for f in traj.forces],
    }


def force_trajectory_from_dict(doc):
    validate(doc, "force_trajectory")
    return ForceTrajectory(np.asarray(doc["forces"], dtype=float),
                           float(doc["dt"]), doc["muscle"])


# -- APTrain ------------------------------------------------------------------

def ap_train_to_dict(train):
    return {
        "schema": SCHEMA_ID,
        "muscle": train.muscle,
        "trains": [
            {"mu_rank": rank + 1, "times_ms": [float(t) for t in times]}
            for rank, times in enumerate(train.times)
        ],
    }


def ap_train_from_dict(doc):
    validate(doc, "ap_train")
    entries = sorted(doc["trains"], key=lambda e: e["mu_rank"])
    return APTrain(doc["muscle"],
                   [np.asarray(e["times_ms"], dtype=float) for e in entries])


# -- trained model ------------------------------------------------------------

def model_to_dict(net, joint, view, norm):
    return {
        "schema": SCHEMA_ID,
        "joint": joint,
        "view": view,
        "widths": list(net.widths),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "norm_mean": [float(v) for v in norm.mean],
        "norm_std": [float(v) for v in norm.std],
        "seed": int(net.seed),
    }


def model_from_dict(doc):
    from .detect import Mlp, Normalization
    validate(doc, "model")
    net = Mlp(widths=tuple(doc["widths"]),
              weights=[np.asarray(w, dtype=float) for w in doc["weights"]],
              biases=[np.asarray(b, dtype=float) for b in doc["biases"]],
              seed=doc["seed"])
    norm = Normalization(mean=np.asarray(doc["norm_mean"], dtype=float),
                         std=np.asarray(doc["norm_std"], dtype=float))
    return net, norm, doc["joint"], doc["view"]


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def dump_json(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_dumps(doc))
