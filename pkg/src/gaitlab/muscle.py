"""Agent-based voluntary muscle model.

A muscle is an active agent (a pool of motor units recruited smallest
first) plus a passive elastic agent.  Forward simulation turns per-MU
action-potential trains into a force trajectory; the inverse reconstructs
AP trains from a target force trajectory with a greedy size-principle
scheduler validated by the forward/inverse round trip.

All motor-unit time arithmetic is in milliseconds: the single-stimulus
twitch uses the elapsed time itself as the decay base, which makes the
shape unit-dependent, and milliseconds land contraction durations in the
physiological 10-100 ms range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .biomech import ForceTrajectory

MS_PER_S = 1000.0

# Minimum inter-spike interval per motor unit.
REFRACTORY_MS = 2.0

# Scheduler: fire while the projected force trails the demand by more than
# this fraction of the muscle's peak active force.
SCHED_TOLERANCE_FRACTION = 0.01

# Contributions older than this are negligible for every supported t_peak.
TWITCH_HORIZON_FACTOR = 6.0

DEFAULT_MU_COUNT = 50
DEFAULT_F0_RANGE = (0.1, 2.0)
DEFAULT_T_PEAK_MS = 40.0
DEFAULT_MAX_FORCE_FACTOR = 10.0
DEFAULT_F_P0 = 1.0


class MuscleError(ValueError):
    """Base error for muscle-model failures."""


class InfeasibleTargetError(MuscleError):
    """The requested force trajectory exceeds what the muscle can produce."""


def _single_twitch_peak(t_peak_ms):
    """Peak value of the unit-amplitude single-stimulus twitch, found
    numerically (the decay base t makes the argmax transcendental)."""
    t = np.linspace(1e-3, 4.0 * t_peak_ms, 4096)
    return float(np.max((t / t_peak_ms) * np.exp(-(t / t_peak_ms) * np.log(t))))


def _single_twitch_argmax(t_peak_ms):
    t = np.linspace(1e-3, 4.0 * t_peak_ms, 4096)
    vals = (t / t_peak_ms) * np.exp(-(t / t_peak_ms) * np.log(t))
    return float(t[np.argmax(vals)])


@dataclass
class MotorUnit:
    """One motor neuron plus the fibres it innervates."""

    f0: float            # twitch scale, N
    t_peak: float        # stimulation-to-peak interval, ms
    max_force: float     # tetanic cap, N
    size_rank: int       # 1 = smallest, recruited first

    def __post_init__(self):
        if not self.f0 > 0:
            raise MuscleError("f0 must be > 0")
        if not self.t_peak > 0:
            raise MuscleError("t_peak must be > 0")
        if self.max_force < self.f0 * _single_twitch_peak(self.t_peak):
            raise MuscleError("max_force must cover at least one full twitch")


def twitch_winter(mu, t):
    """Textbook single-twitch response: rises over t_peak, decays
    exponentially.  Zero for t <= 0."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.zeros_like(t)
    m = t > 0
    r = t[m] / mu.t_peak
    out[m] = mu.f0 * r * np.exp(-r)
    return float(out[0]) if scalar else out


def twitch_single(mu, t):
    """Refined single-twitch response with faster decay.

    Like the textbook twitch but with the elapsed time itself as decay
    base: f0 * (t/T) * t^(-t/T), evaluated as exp(-(t/T) ln t) for
    stability.  Time is in milliseconds.  Zero for t <= 0.
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.zeros_like(t)
    m = t > 0
    tm = t[m]
    r = tm / mu.t_peak
    out[m] = mu.f0 * r * np.exp(-r * np.log(tm))
    return float(out[0]) if scalar else out


def wave_summation(mu, times_ms, t):
    """Superposed twitch force at time ``t`` from all stimuli at or before
    it.  Stimuli arriving before full relaxation accumulate."""
    times_ms = np.asarray(times_ms, dtype=float)
    if times_ms.size == 0:
        return 0.0
    deltas = t - times_ms[times_ms <= t]
    if deltas.size == 0:
        return 0.0
    return float(np.sum(twitch_single(mu, deltas)))


def mu_force(mu, times_ms, t):
    """Wave summation clamped at the unit's tetanic maximum."""
    return min(wave_summation(mu, times_ms, t), mu.max_force)


def length_force_ratio(l, literal_plateau=False):
    """Active force fraction available at relative muscle length ``l``.

    Piecewise linear: zero below 0.6, rising to the plateau at 1.0-1.2,
    then descending to zero at 1.7.  The default branch set is the
    continuity-preserving reading (descent starts at 1.2);
    ``literal_plateau=True`` keeps the plateau through 1.7 and drops to
    zero beyond it.
    """
    arr = np.asarray(l, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(arr <= 0):
        raise MuscleError("relative length must be > 0")
    if literal_plateau:
        out = np.select(
            [arr < 0.6, arr <= 0.8, arr <= 1.0, arr <= 1.7],
            [0.0, 4.0 * arr - 2.4, arr, 1.0],
            default=0.0)
    else:
        out = np.select(
            [arr < 0.6, arr <= 0.8, arr <= 1.0, arr <= 1.2, arr <= 1.7],
            [0.0, 4.0 * arr - 2.4, arr, 1.0, 3.4 - 2.0 * arr],
            default=0.0)
    return float(out[0]) if scalar else out


@dataclass
class MuscleAgentModel:
    """Motor-unit pool plus passive elasticity for one muscle group."""

    name: str
    motor_units: list
    f_p0: float = DEFAULT_F_P0
    resting_length: float = 0.3   # m, metadata for length normalisation

    def __post_init__(self):
        if not self.motor_units:
            raise MuscleError("a muscle needs at least one motor unit")
        ranks = [mu.size_rank for mu in self.motor_units]
        if len(set(ranks)) != len(ranks):
            raise MuscleError("size ranks must be unique within a muscle")
        if self.f_p0 < 0:
            raise MuscleError("f_p0 must be >= 0")
        self.motor_units = sorted(self.motor_units, key=lambda m: m.size_rank)

    @classmethod
    def default(cls, name, n_units=DEFAULT_MU_COUNT, f0_range=DEFAULT_F0_RANGE,
                t_peak=DEFAULT_T_PEAK_MS, max_force_factor=DEFAULT_MAX_FORCE_FACTOR,
                f_p0=DEFAULT_F_P0):
        """Pool with geometrically graded twitch scales by size rank."""
        lo, hi = f0_range
        if n_units == 1:
            f0s = np.array([lo])
        else:
            f0s = lo * (hi / lo) ** (np.arange(n_units) / (n_units - 1))
        peak = _single_twitch_peak(t_peak)
        units = [MotorUnit(f0=float(f0), t_peak=t_peak,
                           max_force=float(max_force_factor * f0 * peak),
                           size_rank=rank + 1)
                 for rank, f0 in enumerate(f0s)]
        return cls(name=name, motor_units=units, f_p0=f_p0)

    @property
    def max_active_force(self):
        return sum(mu.max_force for mu in self.motor_units)


@dataclass
class APTrain:
    """Per-MU stimulation times (ms) within one gait cycle."""

    muscle: str
    times: list  # one sorted float array per motor unit, by size rank

    def __post_init__(self):
        cleaned = []
        for arr in self.times:
            arr = np.asarray(arr, dtype=float)
            if arr.size and np.any(np.diff(arr) < REFRACTORY_MS - 1e-9):
                raise MuscleError(
                    f"inter-spike interval below the {REFRACTORY_MS} ms bound")
            if arr.size and np.any(np.diff(arr) <= 0):
                raise MuscleError("stimulation times must be strictly increasing")
            cleaned.append(arr)
        self.times = cleaned

    def total_count(self):
        return int(sum(len(a) for a in self.times))


def active_force(muscle, train, t, l):
    """Length-scaled sum of all motor-unit forces at time ``t``."""
    ratio = length_force_ratio(l)
    if ratio == 0.0:
        return 0.0
    total = sum(mu_force(mu, times, t)
                for mu, times in zip(muscle.motor_units, train.times))
    return ratio * total


def passive_force(muscle, l):
    """Elastic force from stretching past resting length:
    max(f_p0 * e^(l-1) - 1, 0); monotone nondecreasing in ``l``."""
    return max(muscle.f_p0 * np.exp(l - 1.0) - 1.0, 0.0)


def muscle_force(muscle, train, t, l):
    """Total force: active plus passive components."""
    return active_force(muscle, train, t, l) + passive_force(muscle, l)


def forward_simulate(muscle, train, lengths, dt_ms, n=None):
    """Evaluate the muscle force at each timestep of a cycle.

    Parameters
    ----------
    muscle : MuscleAgentModel
    train : APTrain
    lengths : array-like
        Relative muscle length per timestep.
    dt_ms : float
        Milliseconds between timesteps.
    n : int, optional
        Number of timesteps; defaults to ``len(lengths)``.

    Returns
    -------
    ForceTrajectory with ``dt`` in seconds.
    """
    lengths = np.asarray(lengths, dtype=float)
    if n is None:
        n = len(lengths)
    if len(lengths) != n:
        raise MuscleError("lengths must cover every timestep")
    forces = np.array([muscle_force(muscle, train, k * dt_ms, lengths[k])
                       for k in range(n)])
    return ForceTrajectory(forces, dt_ms / MS_PER_S, muscle.name)


class _PoolState:
    """Incremental per-MU force bookkeeping used by the scheduler."""

    def __init__(self, muscle):
        self.muscle = muscle
        self.spikes = [[] for _ in muscle.motor_units]
        self.horizon = TWITCH_HORIZON_FACTOR * max(
            mu.t_peak for mu in muscle.motor_units)
        self._raw = np.zeros(len(muscle.motor_units))  # uncapped sums at t_eval

    def reset_at(self, t):
        """Recompute every unit's uncapped wave sum at evaluation time t."""
        for i, mu in enumerate(self.muscle.motor_units):
            recent = [s for s in self.spikes[i] if 0 < t - s <= self.horizon]
            self._raw[i] = (float(np.sum(twitch_single(mu, t - np.asarray(recent))))
                            if recent else 0.0)

    def unit_force(self, i):
        return min(self._raw[i], self.muscle.motor_units[i].max_force)

    def pool_force(self):
        return sum(self.unit_force(i) for i in range(len(self._raw)))

    def peek_gain(self, i, s, t_eval):
        """Capped force gain at t_eval if unit i fired at s, without firing."""
        raw_after = self._raw[i] + float(
            twitch_single(self.muscle.motor_units[i], t_eval - s))
        cap = self.muscle.motor_units[i].max_force
        return min(raw_after, cap) - min(self._raw[i], cap)

    def fire(self, i, s, t_eval):
        """Add a spike at time s and return the capped force gain at t_eval."""
        before = self.unit_force(i)
        self.spikes[i].append(s)
        self._raw[i] += float(twitch_single(self.muscle.motor_units[i],
                                            t_eval - s))
        return self.unit_force(i) - before

    def eligible(self, i, s):
        """A unit may fire at s if it respects its refractory interval.
        Spikes are scheduled in ascending time order, so only the last one
        can conflict."""
        return not self.spikes[i] or s - self.spikes[i][-1] >= REFRACTORY_MS - 1e-9


def reconstruct_ap_trains(muscle, target, lengths, slot_ms=REFRACTORY_MS,
                          tolerance_fraction=SCHED_TOLERANCE_FRACTION):
    """Reconstruct per-MU AP trains that reproduce a target force trajectory.

    Greedy size-principle scheduler: firing at a timestep triggers when the
    pool force trails the demanded active force by more than the tolerance
    band; APs then fill the window of slot times preceding the timestep
    (spaced at the refractory interval, earliest slot first) until the
    closest approach to the demand.  Motor units fire smallest rank first,
    each driven to saturation before the next recruits, so recruitment
    order follows the size principle.  The contract is the forward/inverse
    round-trip bound, not a unique train.

    Parameters
    ----------
    muscle : MuscleAgentModel
    target : ForceTrajectory
        Demanded total force per timestep (``dt`` in seconds).
    lengths : array-like
        Relative muscle length per timestep.

    Raises
    ------
    InfeasibleTargetError
        If the active demand exceeds the pool's tetanic capacity at any
        timestep, or force is demanded where the length-force ratio is 0.
    """
    forces = np.asarray(target.forces, dtype=float)
    lengths = np.asarray(lengths, dtype=float)
    n = len(forces)
    if len(lengths) != n:
        raise MuscleError("lengths must cover every timestep")
    dt_ms = target.dt * MS_PER_S

    ratios = length_force_ratio(lengths)
    required = np.maximum(forces - np.array([passive_force(muscle, l)
                                             for l in lengths]), 0.0)
    if np.any((required > 0) & (ratios == 0.0)):
        raise InfeasibleTargetError(
            "force demanded at a length where active force is impossible")
    need = np.where(required > 0, required / np.where(ratios == 0, 1.0, ratios), 0.0)
    capacity = muscle.max_active_force
    if np.any(need > capacity * (1 + 1e-9)):
        raise InfeasibleTargetError(
            f"demand {float(np.max(need)):.3f} N exceeds pool capacity "
            f"{capacity:.3f} N")

    # Slots where a twitch fired before sample time t still contributes
    # meaningfully at t: from one refractory interval up to ~0.9 t_peak.
    t_med = float(np.median([mu.t_peak for mu in muscle.motor_units]))
    max_delta = max(slot_ms, min(2.0 * dt_ms, 0.9 * t_med // slot_ms * slot_ms))
    deltas = np.arange(slot_ms, max_delta + 1e-9, slot_ms)

    tol = tolerance_fraction * capacity
    state = _PoolState(muscle)
    for k in range(n):
        if need[k] <= tol:
            continue
        t_k = k * dt_ms
        slots = [t_k - d for d in deltas[::-1] if t_k - d >= 0.0]
        state.reset_at(t_k)
        total = state.pool_force()
        if total >= need[k] - tol:
            continue  # already within the firing trigger band
        done = False
        for i, mu in enumerate(muscle.motor_units):
            for s in slots:
                if state.unit_force(i) >= mu.max_force - 1e-12:
                    break
                if not state.eligible(i, s):
                    continue
                gain = state.peek_gain(i, s, t_k)
                if gain <= 0.0:
                    continue
                # Closest approach: a further twitch must help more than
                # it overshoots.
                if need[k] - total <= gain / 2.0:
                    done = True
                    break
                total += state.fire(i, s, t_k)
            if done or total >= need[k]:
                break

    return APTrain(muscle.name,
                   [np.asarray(sorted(s), dtype=float) for s in state.spikes])


def stimulation_histogram(train, bins=20, cycle_ms=None):
    """Action-potential counts per cycle-time bin, summed over motor units.

    ``cycle_ms`` defaults to the last stimulation time rounded up to a bin
    boundary; pass it explicitly to align histograms across muscles.
    """
    all_times = np.concatenate([np.asarray(a, dtype=float) for a in train.times]) \
        if train.times else np.array([])
    if cycle_ms is None:
        top = float(all_times.max()) if all_times.size else 1.0
        width = top / bins if top > 0 else 1.0
        cycle_ms = width * bins
    counts, _ = np.histogram(all_times, bins=bins, range=(0.0, cycle_ms))
    return counts
