"""Motion-signal preprocessing for gait analysis.

Turns raw orientation captures from a phone strapped to a lower-body joint
into a canonical 20-point gait cycle plus scalar gait features, and labels
each cycle sample as stance or swing from a planar sagittal foot-height
model.

Processing order: denoise -> segment_steps -> summarize_cycle, with
extract_features and classify_phases on the side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

JOINTS = ("ankle", "knee", "hip")
CYCLE_LEN = 20

# Hampel denoiser: centered window of 5 samples, 3 median-absolute-deviations.
HAMPEL_WINDOW = 5
HAMPEL_K = 3.0

# Strides closer than this are sub-physiological and rejected.
MIN_STRIDE_S = 0.4
# Peaks must stand out by this fraction of the signal range.
PEAK_PROMINENCE_FRACTION = 0.25

# Foot counts as on the ground while its height is within this fraction of
# the shank length above the cycle minimum (and the minimum itself is near
# the ground).
CONTACT_BAND_FRACTION = 0.02

# Which orientation axis carries the sagittal-plane joint angle.  Device
# mounting conventions vary, so this is overridable per call.
DEFAULT_SAGITTAL_AXIS = {"ankle": "beta", "knee": "beta", "hip": "beta"}
AXIS_INDEX = {"alpha": 0, "beta": 1, "gamma": 2}

STANCE = "stance"
SWING = "swing"


class SignalError(ValueError):
    """Base error for signal preprocessing failures."""


class SignalTooShortError(SignalError):
    """Capture has fewer samples than the operation needs."""


class NoStepsError(SignalError):
    """No periodic stride structure found in the capture."""


class DegenerateSegmentError(SignalError):
    """A stride segment is too short to resample."""


class CycleShapeError(SignalError):
    """Gait cycles passed together do not have matching lengths."""


class InvalidGaitError(SignalError):
    """Phase labels describe a gait with no stance or no swing."""


@dataclass
class RawCapture:
    """Timestamped 3-axis orientation samples from one device placement.

    Parameters
    ----------
    placement_joint : str
        One of ``ankle``, ``knee``, ``hip``.
    sample_rate : float
        Nominal samples per second, > 0.
    t_ms : ndarray, shape (n,)
        Strictly increasing timestamps in milliseconds.
    angles : ndarray, shape (n, 3)
        Orientation angles in degrees; columns are alpha, beta, gamma.
    """

    placement_joint: str
    sample_rate: float
    t_ms: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        if self.placement_joint not in JOINTS:
            raise SignalError(f"unknown placement joint: {self.placement_joint!r}")
        if not self.sample_rate > 0:
            raise SignalError("sample_rate must be > 0")
        self.t_ms = np.asarray(self.t_ms, dtype=float)
        self.angles = np.asarray(self.angles, dtype=float)
        if self.t_ms.ndim != 1 or len(self.t_ms) < 2:
            raise SignalError("capture needs at least 2 samples")
        if self.angles.shape != (len(self.t_ms), 3):
            raise SignalError("angles must have shape (n_samples, 3)")
        if np.any(np.diff(self.t_ms) <= 0):
            raise SignalError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(self.t_ms)) or not np.all(np.isfinite(self.angles)):
            raise SignalError("capture contains non-finite values")

    def __len__(self):
        return len(self.t_ms)

    @classmethod
    def from_samples(cls, placement_joint, sample_rate, samples):
        """Build from an ordered list of (t_ms, alpha, beta, gamma) rows."""
        arr = np.asarray(list(samples), dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise SignalError("samples must be rows of (t, alpha, beta, gamma)")
        return cls(placement_joint, float(sample_rate), arr[:, 0], arr[:, 1:])

    @property
    def samples(self):
        """Rows of (t_ms, alpha, beta, gamma), the wire-format view."""
        return np.column_stack([self.t_ms, self.angles])

    def duration_s(self):
        return float(self.t_ms[-1] - self.t_ms[0]) / 1000.0

    def axis(self, name=None):
        """Return one orientation axis; defaults to the sagittal axis."""
        if name is None:
            name = DEFAULT_SAGITTAL_AXIS[self.placement_joint]
        return self.angles[:, AXIS_INDEX[name]]

    def replace_angles(self, angles):
        return RawCapture(self.placement_joint, self.sample_rate, self.t_ms.copy(),
                          np.asarray(angles, dtype=float))


@dataclass
class GaitCycle:
    """One normalized gait cycle: 20 joint angles at 5% increments.

    Index 0 is stance onset.  Angles are degrees in the sagittal plane.
    """

    joint: str
    angles: np.ndarray

    def __post_init__(self):
        if self.joint not in JOINTS:
            raise SignalError(f"unknown joint: {self.joint!r}")
        self.angles = np.asarray(self.angles, dtype=float)
        if self.angles.shape != (CYCLE_LEN,):
            raise CycleShapeError(
                f"gait cycle must have exactly {CYCLE_LEN} angles, got {self.angles.shape}")
        if not np.all(np.isfinite(self.angles)):
            raise SignalError("gait cycle contains non-finite angles")


@dataclass
class GaitFeatures:
    """Scalar gait descriptors extracted from one capture."""

    min_angle: float
    max_angle: float
    step_count: int
    stance_swing_ratio: float
    speed: float
    time_per_step: float

    def __post_init__(self):
        if self.min_angle > self.max_angle:
            raise SignalError("min_angle must not exceed max_angle")
        if self.step_count < 1:
            raise SignalError("step_count must be >= 1")
        if not self.stance_swing_ratio > 0:
            raise InvalidGaitError("stance/swing ratio must be > 0")
        if not self.time_per_step > 0:
            raise SignalError("time_per_step must be > 0")


@dataclass
class PhaseLabels:
    """Stance/swing label per gait-cycle sample."""

    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(labels) != CYCLE_LEN:
            raise CycleShapeError(f"need exactly {CYCLE_LEN} labels")
        if any(l not in (STANCE, SWING) for l in labels):
            raise SignalError("labels must be 'stance' or 'swing'")
        self.labels = labels

    @property
    def stance_count(self):
        return sum(1 for l in self.labels if l == STANCE)

    @property
    def swing_count(self):
        return CYCLE_LEN - self.stance_count


def stance_swing_ratio(labels):
    """Stance time over swing time for one set of phase labels.

    Raises InvalidGaitError when either phase is absent, which marks the
    gait (or the capture behind it) as invalid.
    """
    stance = labels.stance_count
    swing = labels.swing_count
    if stance == 0 or swing == 0:
        raise InvalidGaitError("valid gait needs both stance and swing samples")
    return stance / swing


def _hampel_column(x, window, k):
    half = window // 2
    out = x.copy()
    n = len(x)
    for i in range(n):
        w = x[max(0, i - half): i + half + 1]
        med = np.median(w)
        mad = np.median(np.abs(w - med))
        if abs(x[i] - med) > k * mad:
            out[i] = med
    return out


def denoise(raw, window=HAMPEL_WINDOW, k=HAMPEL_K, max_passes=100):
    """Remove outlier samples with a Hampel filter, run to a fixpoint.

    Each sample deviating from its centered windowed median by more than
    ``k`` median-absolute-deviations is replaced by that median.  Passes
    repeat until nothing changes (replacing an outlier can expose a
    neighbouring one), which makes the operation idempotent; gait signals
    settle within a few passes.  All three axes are filtered
    independently; timestamps are untouched.

    Parameters
    ----------
    raw : RawCapture
    window : int
        Centered window size in samples (truncated at the edges).
    k : float
        Outlier threshold in MADs.

    Returns
    -------
    RawCapture
        New capture with the same timestamps.

    Raises
    ------
    SignalTooShortError
        If the capture has fewer samples than the window.
    """
    if len(raw) < window:
        raise SignalTooShortError(
            f"need at least {window} samples to denoise, got {len(raw)}")
    filtered = raw.angles
    for _ in range(max_passes):
        next_pass = np.column_stack(
            [_hampel_column(filtered[:, j], window, k) for j in range(3)])
        if np.array_equal(next_pass, filtered):
            break
        filtered = next_pass
    return raw.replace_angles(filtered)


def segment_steps(raw, axis=None, min_stride_s=MIN_STRIDE_S,
                  prominence_fraction=PEAK_PROMINENCE_FRACTION):
    """Split a denoised capture into one index range per stride.

    Stance onsets are detected as peaks of the sagittal joint angle; each
    stride spans one onset to the next.  Peaks closer than ``min_stride_s``
    or less prominent than ``prominence_fraction`` of the signal range are
    ignored.

    Returns
    -------
    list of (start, end) sample-index pairs, ordered and non-overlapping;
    ``end`` is the index of the next stance onset.

    Raises
    ------
    NoStepsError
        If fewer than two stance onsets are found.
    """
    x = raw.axis(axis)
    distance = max(1, int(round(min_stride_s * raw.sample_rate)))
    span = float(np.max(x) - np.min(x))
    if span <= 0:
        raise NoStepsError("signal has no periodic structure")
    peaks, _ = find_peaks(x, distance=distance,
                          prominence=prominence_fraction * span)
    if len(peaks) < 2:
        raise NoStepsError(
            f"found {len(peaks)} stance onsets; need at least 2 for one stride")
    return [(int(a), int(b)) for a, b in zip(peaks[:-1], peaks[1:])]


def _resample_segment(x, start, end, n=CYCLE_LEN):
    if end - start < 4:
        raise DegenerateSegmentError(
            f"segment [{start}, {end}) has fewer than 4 samples")
    pos = start + (end - start) * np.arange(n) / n
    return np.interp(pos, np.arange(len(x)), x)


def summarize_cycle(segments, raw, axis=None):
    """Collapse stride segments into one canonical 20-point gait cycle.

    Each segment is resampled to 20 points by linear interpolation over
    [onset, next onset); the output is the pointwise least-squares estimate
    across segments, i.e. the pointwise mean.  Index 0 is stance onset.
    """
    if not segments:
        raise NoStepsError("no segments to summarize")
    x = raw.axis(axis)
    rows = np.vstack([_resample_segment(x, s, e) for s, e in segments])
    return GaitCycle(raw.placement_joint, rows.mean(axis=0))


def foot_clearance(cycle, ankle_cycle, body):
    """Foot height above the ground at each cycle sample, in metres.

    Planar sagittal chain: the hip/knee angle (whichever ``cycle`` carries)
    lifts the ankle by folding the thigh/shank away from vertical, and the
    ankle angle pitches the foot away from flat ground contact.  Joints not
    present in the two cycles are held neutral.  Standing flat is height 0.
    """
    if len(cycle.angles) != len(ankle_cycle.angles):
        raise CycleShapeError("cycle and ankle cycle lengths differ")
    zeros = np.zeros(CYCLE_LEN)
    theta_hip = np.radians(cycle.angles) if cycle.joint == "hip" else zeros
    theta_knee = np.radians(cycle.angles) if cycle.joint == "knee" else zeros
    pitch = np.radians(ankle_cycle.angles)
    phi_thigh = theta_hip
    phi_shank = theta_hip - theta_knee
    lift = (body.thigh_length * (1.0 - np.cos(phi_thigh))
            + body.leg_length * (1.0 - np.cos(phi_shank)))
    return lift + body.foot_length * np.abs(np.sin(pitch))


def classify_phases(cycle, ankle_cycle, body,
                    band_fraction=CONTACT_BAND_FRACTION):
    """Label each cycle sample stance or swing from foot height.

    A sample is stance when the computed foot height is within
    ``band_fraction`` of the shank length of the cycle minimum; if even the
    minimum never comes near the ground the whole cycle is swing.
    """
    h = foot_clearance(cycle, ankle_cycle, body)
    band = band_fraction * body.leg_length
    h_min = float(np.min(h))
    if h_min > band:
        mask = np.zeros(CYCLE_LEN, dtype=bool)
    else:
        mask = h <= h_min + band
    return PhaseLabels(tuple(STANCE if m else SWING for m in mask))


def _default_body():
    from .biomech import BodyParams
    return BodyParams()


def extract_features(raw, segments, body=None, axis=None):
    """Compute scalar gait features from a denoised, segmented capture.

    ``body`` supplies the segment lengths behind the stance/swing split;
    defaults to the reference anthropometry.  The stance/swing ratio pools
    phase labels over all segments.
    """
    if not segments:
        raise NoStepsError("segmentation produced no steps")
    if body is None:
        body = _default_body()
    x = raw.axis(axis)
    durations = [(raw.t_ms[e] - raw.t_ms[s]) / 1000.0 for s, e in segments]

    zeros_ankle = GaitCycle("ankle", np.zeros(CYCLE_LEN))
    stance_total = 0
    swing_total = 0
    for s, e in segments:
        cyc = GaitCycle(raw.placement_joint, _resample_segment(x, s, e))
        ankle_cyc = cyc if raw.placement_joint == "ankle" else zeros_ankle
        labels = classify_phases(cyc, ankle_cyc, body)
        stance_total += labels.stance_count
        swing_total += labels.swing_count
    if stance_total == 0 or swing_total == 0:
        raise InvalidGaitError(
            "capture has no valid stance/swing alternation")

    return GaitFeatures(
        min_angle=float(np.min(x)),
        max_angle=float(np.max(x)),
        step_count=len(segments),
        stance_swing_ratio=stance_total / swing_total,
        speed=len(segments) / raw.duration_s(),
        time_per_step=float(np.mean(durations)),
    )


# ---------------------------------------------------------------------------
# Synthetic forward-kinematics generators.  These are the reference inputs
# for the phase classifier and the segmentation pipeline: the same sagittal
# chain that classify_phases evaluates is used to construct trajectories
# whose stance/swing labels are known by design.
# ---------------------------------------------------------------------------

def make_synthetic_gait(body=None, stance_fraction=0.6, knee_peak_deg=55.0,
                        hip_peak_deg=40.0, ankle_peak_deg=15.0,
                        stance_wiggle_deg=0.0, rng=None):
    """Generate per-joint gait cycles with known stance/swing labels.

    Stance samples hold every joint at its ground-contact posture (angle 0,
    plus an optional sub-threshold wiggle); swing samples lift the foot with
    a half-sine excursion at each joint large enough to clear the contact
    band.  Returns ``(cycles, labels)`` where ``cycles`` maps joint name to
    GaitCycle.
    """
    if body is None:
        body = _default_body()
    n_stance = int(round(stance_fraction * CYCLE_LEN))
    if not 1 <= n_stance <= CYCLE_LEN - 1:
        raise ValueError("stance_fraction must leave room for both phases")
    n_swing = CYCLE_LEN - n_stance

    k = np.arange(CYCLE_LEN)
    bump = np.zeros(CYCLE_LEN)
    u = (k[n_stance:] - n_stance + 1) / (n_swing + 1)
    # flattened half-sine: fast rise keeps even the edge samples of a long
    # swing phase clear of the contact band
    bump[n_stance:] = np.sqrt(np.sin(np.pi * u))

    wiggle = np.zeros(CYCLE_LEN)
    if stance_wiggle_deg:
        if rng is None:
            rng = np.random.default_rng(0)
        wiggle[:n_stance] = stance_wiggle_deg * np.sin(
            2 * np.pi * k[:n_stance] / max(n_stance, 1) + rng.uniform(0, np.pi))

    cycles = {
        "hip": GaitCycle("hip", hip_peak_deg * bump + wiggle),
        "knee": GaitCycle("knee", knee_peak_deg * bump + wiggle),
        "ankle": GaitCycle("ankle", ankle_peak_deg * bump + 0.03 * wiggle),
    }
    labels = PhaseLabels(tuple(STANCE if i < n_stance else SWING
                               for i in range(CYCLE_LEN)))

    # Margin guard: the generated trajectories must sit clearly on their
    # side of the contact band, else the labels would not be trustworthy.
    band = CONTACT_BAND_FRACTION * body.leg_length
    for joint, cyc in cycles.items():
        h = foot_clearance(cyc, cycles["ankle"] if joint == "ankle"
                           else GaitCycle("ankle", np.zeros(CYCLE_LEN)), body)
        if np.max(h[:n_stance]) > 0.5 * band or np.min(h[n_stance:]) < 1.2 * band:
            raise ValueError(
                f"synthetic gait for {joint} violates contact-band margins; "
                "reduce stance_wiggle_deg or increase the swing amplitudes")
    return cycles, labels


def make_stride_capture(joint="ankle", n_strides=10, stride_s=1.2,
                        sample_rate=50.0, amplitude_deg=30.0,
                        baseline_deg=0.0, lead_s=0.3, noise_deg=0.0,
                        spikes=(), rng=None):
    """Generate a multi-stride capture with stance onsets at angle peaks.

    The sagittal axis is a cosine with one period per stride, so each
    stance onset is a peak; ``n_strides`` full strides fit between the first
    and last peak, padded by ``lead_s`` on both sides.  ``spikes`` is an
    iterable of (sample_index, delta_deg) outliers to inject.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    duration = 2 * lead_s + n_strides * stride_s
    n = int(round(duration * sample_rate)) + 1
    t_s = np.arange(n) / sample_rate
    x = baseline_deg + amplitude_deg * np.cos(
        2 * np.pi * (t_s - lead_s) / stride_s)
    if noise_deg:
        x = x + rng.normal(0.0, noise_deg, size=n)
    for idx, delta in spikes:
        x[idx] += delta
    drift = 0.1 * np.sin(2 * np.pi * t_s / (duration * 2.0))
    angles = np.column_stack([drift, x, -drift])
    return RawCapture(joint, sample_rate, t_s * 1000.0, angles)
