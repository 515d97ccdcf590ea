"""The referee: height measurement, rolling record, first mover, timing relation."""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit

from . import silk
from .errors import AttributionError, InvalidWindowError, OutOfOrderError

RECORD_WINDOW = 180.0
ONSET_THRESHOLD = 0.05
ONSET_PERSIST = 3
SIMULTANEITY = 0.1
MEASUREMENT_NOISE = 0.002


class Relation(str, enum.Enum):
    IN_STEP = "InStep"
    SMALL_LAG = "SmallLag"
    GROWING_LAG = "GrowingLag"
    SPLIT = "Split"


class FirstMover(str, enum.Enum):
    ARM_A = "ArmA"
    ARM_B = "ArmB"
    SHARED = "Shared"


@dataclass(frozen=True)
class HeightMeasurement:
    time: float
    center_height: float
    peak_height: float


def measure(state: silk.SilkState, noise_std: float, rng: np.random.Generator) -> HeightMeasurement:
    """Camera model: true center and peak heights plus independent Gaussian noise."""
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    nc, npk = rng.normal(0.0, 1.0, 2)
    return HeightMeasurement(time=state.time,
                             center_height=silk.center_height(state) + noise_std * nc,
                             peak_height=silk.peak_height(state) + noise_std * npk)


class RecordTracker:
    """Maximum measured peak over a trailing time window.

    ``floor`` is a height the record never drops below; the stage sets it a
    little above the resting sheet so that camera noise alone cannot score.
    """

    def __init__(self, window: float = RECORD_WINDOW, floor: float = -math.inf):
        self.window = window
        self.floor = floor
        # (time, height) with strictly decreasing heights: the window max is at the left
        self.samples: deque = deque()
        self.last_time = -math.inf

    @property
    def current_record(self) -> float:
        return max(self.samples[0][1], self.floor) if self.samples else self.floor

    @property
    def record_time(self) -> Optional[float]:
        return self.samples[0][0] if self.samples else None

    def evict(self, now: float) -> None:
        while self.samples and self.samples[0][0] < now - self.window:
            self.samples.popleft()

    def push(self, t: float, h: float) -> None:
        while self.samples and self.samples[-1][1] <= h:
            self.samples.pop()
        self.samples.append((t, h))
        self.last_time = t


def update_record(tracker: RecordTracker, m: HeightMeasurement):
    """Feed one measurement. Returns ``(tracker, record_broken, margin)``.

    The tracker is updated in place and returned for convenience.
    """
    if m.time < tracker.last_time:
        raise OutOfOrderError(f"measurement at t={m.time} precedes last sample t={tracker.last_time}")
    tracker.evict(m.time)
    previous = tracker.current_record
    broken = m.peak_height > previous
    margin = (m.peak_height - previous) if (broken and math.isfinite(previous)) else 0.0
    tracker.push(m.time, m.peak_height)
    return tracker, broken, margin


def lift_onset(series: Sequence, threshold: float = ONSET_THRESHOLD,
               persist: int = ONSET_PERSIST) -> Optional[float]:
    """Earliest time the edge velocity rises above ``threshold`` for ``persist`` ticks."""
    run = 0
    for i, (t, v) in enumerate(series):
        if v > threshold:
            run += 1
            if run == persist:
                return float(series[i - persist + 1][0])
        else:
            run = 0
    return None


def first_mover(onset_a: Optional[float], onset_b: Optional[float],
                simultaneity: float = SIMULTANEITY) -> FirstMover:
    if onset_a is None and onset_b is None:
        raise AttributionError("no lift onset on either arm")
    if onset_b is None:
        return FirstMover.ARM_A
    if onset_a is None:
        return FirstMover.ARM_B
    if abs(onset_a - onset_b) <= simultaneity + 1e-12:
        return FirstMover.SHARED
    return FirstMover.ARM_A if onset_a < onset_b else FirstMover.ARM_B


# --------------------------------------------------------------------------
# timing relation


@dataclass(frozen=True)
class TimingConfig:
    tick: float = 0.02
    window: float = 1.0
    max_lag: float = 0.5
    in_step_lag: float = 0.06
    in_step_r: float = 0.6
    growing_lag: float = 0.12
    split_lag: float = 0.25
    growth_step: float = 0.02
    growth_count: int = 3
    silence_rms: float = 0.01

    @property
    def window_ticks(self) -> int:
        return int(round(self.window / self.tick))

    @property
    def max_lag_ticks(self) -> int:
        return int(round(self.max_lag / self.tick))


@dataclass(frozen=True)
class TimingEstimate:
    relation: Relation
    lag: float
    correlation: float
    growth_streak: int = 0
    active: bool = True


REST_ESTIMATE = TimingEstimate(Relation.IN_STEP, 0.0, 1.0, 0, False)


@njit(cache=True)
def _overlap_xcorr(a, b, max_lag):
    """Cosine similarity of a[t] and b[t + lag] over their overlap, lag in [-max_lag, max_lag]."""
    n = a.shape[0]
    out = np.zeros(2 * max_lag + 1)
    for idx in range(2 * max_lag + 1):
        lag = idx - max_lag
        if lag >= 0:
            i0, i1 = 0, n - lag
        else:
            i0, i1 = -lag, n
        sab = 0.0
        saa = 0.0
        sbb = 0.0
        for i in range(i0, i1):
            x = a[i]
            y = b[i + lag]
            sab += x * y
            saa += x * x
            sbb += y * y
        den = math.sqrt(saa * sbb)
        out[idx] = sab / den if den > 0.0 else 0.0
    return out


def cross_correlation(va, vb, max_lag_ticks: int) -> np.ndarray:
    a = np.ascontiguousarray(va, dtype=float)
    b = np.ascontiguousarray(vb, dtype=float)
    return _overlap_xcorr(a, b, int(max_lag_ticks))


@njit(cache=True)
def _pick_lag(r, max_lag):
    """Index of the strongest |r|; ties favour small |lag|, then positive r, then lag > 0."""
    best = 0.0
    for i in range(r.shape[0]):
        if abs(r[i]) > best:
            best = abs(r[i])
    pick = -1
    for i in range(r.shape[0]):
        if abs(r[i]) < best - 1e-9:
            continue
        if pick < 0:
            pick = i
            continue
        lag, plag = i - max_lag, pick - max_lag
        key = (abs(lag), r[i] <= 0.0, lag < 0)
        pkey = (abs(plag), r[pick] <= 0.0, plag < 0)
        if key < pkey:
            pick = i
    return pick


@njit(cache=True)
def _rms(x):
    acc = 0.0
    for v in x:
        acc += v * v
    return math.sqrt(acc / x.shape[0])


def classify_timing(va, vb, prev: Optional[TimingEstimate] = None,
                    cfg: TimingConfig = TimingConfig()) -> TimingEstimate:
    """Four-way phase relation between the two arms' edge velocities.

    ``lag`` is positive when B trails A. Windows must have equal length.
    """
    a = np.asarray(va, dtype=float)
    b = np.asarray(vb, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidWindowError(f"window shapes differ: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise InvalidWindowError("window needs at least two samples")
    a = np.ascontiguousarray(a)
    b = np.ascontiguousarray(b)
    if _rms(a) < cfg.silence_rms and _rms(b) < cfg.silence_rms:
        return REST_ESTIMATE
    max_lag = min(cfg.max_lag_ticks, a.size - 1)
    r = _overlap_xcorr(a, b, max_lag)
    idx = int(_pick_lag(r, max_lag))
    lag_ticks = idx - max_lag
    lag = lag_ticks * cfg.tick
    corr = float(r[idx])
    return _label(lag, corr, prev, cfg)


def _label(lag: float, corr: float, prev: Optional[TimingEstimate], cfg: TimingConfig) -> TimingEstimate:
    eps = 1e-9
    abs_lag = abs(lag)
    streak = 0
    if prev is not None and abs_lag - abs(prev.lag) > cfg.growth_step + eps:
        streak = prev.growth_streak + 1
    if abs_lag <= cfg.in_step_lag + eps and corr >= cfg.in_step_r:
        rel = Relation.IN_STEP
    elif corr < 0 or abs_lag > cfg.split_lag + eps:
        rel = Relation.SPLIT
    elif (cfg.growing_lag + eps < abs_lag <= cfg.split_lag + eps) or streak >= cfg.growth_count:
        rel = Relation.GROWING_LAG
    else:
        rel = Relation.SMALL_LAG
    return TimingEstimate(rel, lag, corr, streak, True)
