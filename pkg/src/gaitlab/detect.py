"""Ensemble disorder detection.

Three small feedforward networks per joint look at the raw angle cycle,
the muscular force trajectory, and the neural stimulation histogram; their
probabilities average into one verdict.  Training is plain mini-batch
gradient descent on binary cross-entropy, fully deterministic for a fixed
seed, evaluated with person-based cross-validation so no person's data
leaks between train and test.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

# Production architecture: 20 inputs, six hidden layers, logistic head.
WIDTHS = (20, 160, 160, 160, 100, 80, 50, 1)
VIEWS = ("angles", "forces", "stimuli")

NORMAL = 0
PATHOLOGICAL = 1


class DetectError(ValueError):
    """Base error for detection failures."""


class ShapeError(DetectError):
    """Input vector does not match the network's input width."""


def _logistic(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class Mlp:
    """Dense rectifier network with a logistic output unit."""

    widths: tuple
    weights: list
    biases: list
    seed: int

    def __post_init__(self):
        for w, b in zip(self.weights, self.biases):
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DetectError("network parameters must be finite")

    def forward(self, x):
        """Probability of pathological motion for one input vector."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.widths[0],):
            raise ShapeError(
                f"expected input of length {self.widths[0]}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ShapeError("input contains non-finite values")
        a = x[None, :]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = _logistic(z) if i == len(self.weights) - 1 else np.maximum(z, 0.0)
        return float(a[0, 0])

    def forward_batch(self, x):
        a = np.asarray(x, dtype=float)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = _logistic(z) if i == len(self.weights) - 1 else np.maximum(z, 0.0)
        return a[:, 0]


def mlp_init(seed, widths=WIDTHS, zero=False):
    """Deterministically initialise a network from a seed.

    Weights are uniform in +-sqrt(6 / (fan_in + fan_out)); the same seed
    reproduces the network bit for bit.  Production networks come from the
    fixed architecture; alternate widths are for hand-checkable tests.
    """
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2:
        raise DetectError("need at least an input and an output layer")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        if zero:
            weights.append(np.zeros((fan_in, fan_out)))
        else:
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(widths=widths, weights=weights, biases=biases, seed=int(seed))


def mlp_forward(net, x):
    """Forward pass producing a probability in (0, 1)."""
    return net.forward(x)


def bce_loss(p, y, eps=1e-12):
    p = np.clip(p, eps, 1.0 - eps)
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1.0 - p))))


def mlp_gradients(net, x, y):
    """Backprop gradients of the mean binary cross-entropy over a batch.

    Returns (loss, weight_grads, bias_grads) with gradients shaped like the
    parameters.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    acts = [x]
    zs = []
    a = x
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        zs.append(z)
        a = _logistic(z) if i == len(net.weights) - 1 else np.maximum(z, 0.0)
        acts.append(a)
    p = acts[-1][:, 0]
    loss = bce_loss(p, y)

    # Logistic + cross-entropy collapses to (p - y) at the output unit.
    delta = (p - y)[:, None] / n
    w_grads = [None] * len(net.weights)
    b_grads = [None] * len(net.biases)
    for i in range(len(net.weights) - 1, -1, -1):
        w_grads[i] = acts[i].T @ delta
        b_grads[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (zs[i - 1] > 0)
    return loss, w_grads, b_grads


@dataclass
class Hyperparams:
    learning_rate: float = 0.01
    batch_size: int = 16
    epochs: int = 200
    seed: int = 0


def mlp_train(net, x, y, hyper=None):
    """Mini-batch gradient descent on binary cross-entropy.

    Deterministic for a fixed seed.  Returns ``(net, loss_history)`` with
    one mean-epoch-loss entry per epoch; the input network is modified in
    place.

    Raises
    ------
    DetectError
        On an empty dataset or one containing a single class.
    """
    if hyper is None:
        hyper = Hyperparams()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) == 0:
        raise DetectError("cannot train on an empty dataset")
    if len(np.unique(y)) < 2:
        raise DetectError("training data must contain both classes")
    rng = np.random.default_rng(hyper.seed)
    history = []
    for _ in range(hyper.epochs):
        order = rng.permutation(len(x))
        losses = []
        for start in range(0, len(x), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            loss, w_grads, b_grads = mlp_gradients(net, x[idx], y[idx])
            losses.append(loss)
            for w, gw in zip(net.weights, w_grads):
                w -= hyper.learning_rate * gw
            for b, gb in zip(net.biases, b_grads):
                b -= hyper.learning_rate * gb
        history.append(float(np.mean(losses)))
    return net, history


@dataclass
class Sample:
    person_id: str
    joint: str
    view: str
    values: np.ndarray
    label: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (WIDTHS[0],):
            raise ShapeError(f"sample vectors must have length {WIDTHS[0]}")
        if self.view not in VIEWS:
            raise DetectError(f"unknown view: {self.view!r}")
        if self.label not in (NORMAL, PATHOLOGICAL):
            raise DetectError("label must be 0 (normal) or 1 (pathological)")


@dataclass
class Dataset:
    samples: list

    def __post_init__(self):
        if any(not s.person_id for s in self.samples):
            raise DetectError("every sample needs a person_id")

    def persons(self):
        return sorted({s.person_id for s in self.samples})

    def joints(self):
        return sorted({s.joint for s in self.samples})

    def subset(self, persons=None, joint=None, view=None):
        out = self.samples
        if persons is not None:
            persons = set(persons)
            out = [s for s in out if s.person_id in persons]
        if joint is not None:
            out = [s for s in out if s.joint == joint]
        if view is not None:
            out = [s for s in out if s.view == view]
        return out


@dataclass
class Normalization:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x):
        x = np.asarray(x, dtype=float)
        std = x.std(axis=0)
        return cls(mean=x.mean(axis=0), std=np.where(std > 0, std, 1.0))

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std


@dataclass
class EnsembleVerdict:
    """Averaged per-joint verdict of the three view networks."""

    joint: str
    p_pathological: float
    per_view: dict
    inconclusive: bool = field(init=False)

    def __post_init__(self):
        expected = float(np.mean(list(self.per_view.values())))
        if abs(self.p_pathological - expected) > 1e-12:
            raise DetectError("verdict must be the mean of the view probabilities")
        self.inconclusive = self.p_pathological == 0.5


def ensemble_classify(nets, vectors, joint="", norms=None):
    """Run the three view networks and average their probabilities.

    ``nets`` and ``vectors`` map view name to network / 20-vector; an
    optional ``norms`` maps view name to the Normalization fitted on the
    training fold.
    """
    per_view = {}
    for view in VIEWS:
        vec = np.asarray(vectors[view], dtype=float)
        if norms and view in norms:
            vec = norms[view].apply(vec)
        per_view[view] = nets[view].forward(vec)
    return EnsembleVerdict(joint=joint,
                           p_pathological=float(np.mean(list(per_view.values()))),
                           per_view=per_view)


def _derive_seed(seed, fold_idx, joint, view):
    """Stable per-(fold, joint, view) seed; Python's string hash is salted
    per process and would break cross-run determinism."""
    key = f"{seed}|{fold_idx}|{joint}|{view}".encode()
    return zlib.crc32(key)


def _partition_persons(persons, folds, seed):
    rng = np.random.default_rng(seed)
    order = list(persons)
    rng.shuffle(order)
    return [set(order[i::folds]) for i in range(folds)]


def _validate_folds(fold_sets, persons):
    seen = {}
    for i, fold in enumerate(fold_sets):
        for p in fold:
            if p in seen:
                raise DetectError(
                    f"person {p!r} appears in folds {seen[p]} and {i}: "
                    "person-based cross-validation forbids leakage")
            seen[p] = i
    missing = set(persons) - set(seen)
    if missing:
        raise DetectError(f"persons missing from folds: {sorted(missing)}")


@dataclass
class CvReport:
    """Per-joint accuracy of each view experiment plus their average."""

    per_joint: dict   # joint -> {"experiments": {view: acc}, "average": acc}
    overall: float
    fold_persons: list

    def rows(self):
        """Table rows: (joint, exp1, exp2, exp3, average)."""
        out = []
        for joint, rec in sorted(self.per_joint.items()):
            exps = [rec["experiments"][v] for v in VIEWS]
            out.append((joint, *exps, rec["average"]))
        return out


def person_cross_validate(dataset, folds, hyper=None, seed=0, widths=WIDTHS):
    """Evaluate the ensemble with person-held-out folds.

    ``folds`` is either a fold count (persons are partitioned with the
    seeded generator) or an explicit list of person-id sets, which is
    validated for leakage.  Every person is tested exactly once.
    """
    if hyper is None:
        hyper = Hyperparams(seed=seed)
    persons = dataset.persons()
    if isinstance(folds, int):
        if folds < 2:
            raise DetectError("need at least 2 folds")
        if len(persons) < folds:
            raise DetectError(
                f"{len(persons)} persons cannot fill {folds} folds")
        fold_sets = _partition_persons(persons, folds, seed)
    else:
        fold_sets = [set(f) for f in folds]
        _validate_folds(fold_sets, persons)

    joints = dataset.joints()
    hits = {j: {v: 0 for v in VIEWS} for j in joints}
    totals = {j: {v: 0 for v in VIEWS} for j in joints}
    for fold_idx, test_persons in enumerate(fold_sets):
        train_persons = [p for p in persons if p not in test_persons]
        for joint in joints:
            for view in VIEWS:
                train = dataset.subset(train_persons, joint, view)
                test = dataset.subset(test_persons, joint, view)
                if not train or not test:
                    continue
                x_train = np.stack([s.values for s in train])
                y_train = np.array([s.label for s in train], dtype=float)
                norm = Normalization.fit(x_train)
                net = mlp_init(seed=_derive_seed(seed, fold_idx, joint, view),
                               widths=widths)
                mlp_train(net, norm.apply(x_train), y_train, hyper)
                x_test = norm.apply(np.stack([s.values for s in test]))
                y_test = np.array([s.label for s in test])
                pred = (net.forward_batch(x_test) > 0.5).astype(int)
                hits[joint][view] += int(np.sum(pred == y_test))
                totals[joint][view] += len(test)

    per_joint = {}
    accs = []
    for joint in joints:
        exps = {}
        for view in VIEWS:
            if totals[joint][view] == 0:
                raise DetectError(f"no test samples for {joint}/{view}")
            exps[view] = hits[joint][view] / totals[joint][view]
        avg = float(np.mean(list(exps.values())))
        per_joint[joint] = {"experiments": exps, "average": avg}
        accs.append(avg)
    return CvReport(per_joint=per_joint, overall=float(np.mean(accs)),
                    fold_persons=[sorted(f) for f in fold_sets])
