"""Rule-based detection of the five recurring stage moments, and the legibility audit.

Detectors read only logged trace columns. Spans of one label never overlap:
each detector resumes scanning after the end of the span it just emitted.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InconsistentTraceError
from .stage import Trace, replay
from .weather import RANK, Preset

SAFE_MODES = ("Softening", "Frozen")


class Label(str, enum.Enum):
    CLEAR_ASCENT = "ClearAscent"
    SUSPENDED_NEGOTIATION = "SuspendedNegotiation"
    COMPETITIVE_WHIPLASH = "CompetitiveWhiplash"
    RECOVERY_SPIRAL = "RecoverySpiral"
    SAFETY_ECLIPSE = "SafetyEclipse"


@dataclass(frozen=True)
class EpisodeConfig:
    ascent_min: float = 3.0
    ascent_rise: float = 0.05
    negotiation_min: float = 2.0
    negotiation_trend: float = 0.02
    whiplash_stall_window: float = 1.0
    whiplash_storm_window: float = 2.0
    recovery_window: float = 10.0
    recovery_rise: float = 0.02
    trend_window: float = 0.5
    violation_min: float = 2.0


@dataclass(frozen=True)
class EpisodeSpan:
    label: Label
    start_tick: int
    end_tick: int
    evidence: Tuple[Tuple[str, object], ...]

    def __post_init__(self):
        if self.start_tick > self.end_tick:
            raise ValueError("start_tick must not exceed end_tick")
        if not self.evidence:
            raise ValueError("evidence must be non-empty")


class _View:
    """Column arrays of a trace plus the derived height trend."""

    def __init__(self, records: Sequence[dict], tick: float, cfg: EpisodeConfig):
        self.n = len(records)
        self.tick = tick
        self.time = np.array([r["time"] for r in records], dtype=float)
        self.peak = np.array([r["peak_meas"] for r in records], dtype=float)
        self.relation = [r["relation"] for r in records]
        self.active = [bool(r.get("timing_active", True)) for r in records]
        self.preset = [r["preset"] for r in records]
        self.flag = [bool(r["flag_a"]) or bool(r["flag_b"]) for r in records]
        self.softened = [r["mode_a"] in SAFE_MODES or r["mode_b"] in SAFE_MODES for r in records]
        self.trend = height_trend(self.peak, tick, cfg.trend_window)

    def ticks(self, seconds: float) -> int:
        return max(1, int(round(seconds / self.tick)))

    def start_s(self, k: int) -> float:
        return float(self.time[k] - self.tick)


def height_trend(heights: np.ndarray, tick: float, window: float) -> np.ndarray:
    """Trailing least-squares slope over ``window`` seconds (shorter at the start)."""
    n = heights.size
    w = max(2, int(round(window / tick)) + 1)
    out = np.zeros(n)
    for k in range(1, n):
        lo = max(0, k - w + 1)
        seg = heights[lo:k + 1]
        x = np.arange(seg.size) * tick
        x = x - x.mean()
        out[k] = float(np.dot(x, seg - seg.mean()) / np.dot(x, x))
    return out


def runs(mask: Sequence[bool]) -> List[Tuple[int, int]]:
    """Maximal ``(start, end)`` index runs where ``mask`` holds, inclusive."""
    out, start = [], None
    for k, m in enumerate(mask):
        if m and start is None:
            start = k
        elif not m and start is not None:
            out.append((start, k - 1))
            start = None
    if start is not None:
        out.append((start, len(mask) - 1))
    return out


def _rank(preset: str) -> int:
    # BlueHush sits below every weather band
    return RANK.get(Preset(preset), -1)


def _run_end(mask: Sequence[bool], k: int) -> int:
    while k + 1 < len(mask) and mask[k + 1]:
        k += 1
    return k


# --------------------------------------------------------------------------
# detectors


def _clear_ascent(v: _View, cfg: EpisodeConfig) -> List[EpisodeSpan]:
    mask = [r == "InStep" and p == Preset.CLEAR_SUN.value for r, p in zip(v.relation, v.preset)]
    out = []
    for a, b in runs(mask):
        if b - a + 1 < v.ticks(cfg.ascent_min):
            continue
        rise = float(v.peak[a:b + 1].max() - v.peak[a])
        if rise >= cfg.ascent_rise:
            out.append(EpisodeSpan(Label.CLEAR_ASCENT, a, b, (
                ("duration_s", (b - a + 1) * v.tick), ("rise_m", rise), ("preset", "ClearSun"))))
    return out


def _suspended_negotiation(v: _View, cfg: EpisodeConfig) -> List[EpisodeSpan]:
    mask = [r == "SmallLag" and p == Preset.LIGHT_OVERCAST.value and abs(tr) < cfg.negotiation_trend
            for r, p, tr in zip(v.relation, v.preset, v.trend)]
    out = []
    for a, b in runs(mask):
        if b - a + 1 >= v.ticks(cfg.negotiation_min):
            out.append(EpisodeSpan(Label.SUSPENDED_NEGOTIATION, a, b, (
                ("duration_s", (b - a + 1) * v.tick),
                ("max_abs_trend", float(np.abs(v.trend[a:b + 1]).max())),
                ("preset", "LightOvercast"))))
    return out


def _competitive_whiplash(v: _View, cfg: EpisodeConfig) -> List[EpisodeSpan]:
    stall = v.ticks(cfg.whiplash_stall_window)
    storm = v.ticks(cfg.whiplash_storm_window)
    storm_mask = [p == Preset.LIGHTNING_RAIN.value for p in v.preset]
    out, k = [], 0
    while k < v.n:
        if v.relation[k] != "Split":
            k += 1
            continue
        lo, hi = max(0, k - stall), min(v.n - 1, k + stall)
        dips = np.flatnonzero(v.trend[lo:hi + 1] <= 0.0)
        hit = next((m for m in range(k, min(v.n, k + storm + 1)) if storm_mask[m]), None)
        if dips.size == 0 or hit is None:
            k += 1
            continue
        end = _run_end(storm_mask, hit)
        out.append(EpisodeSpan(Label.COMPETITIVE_WHIPLASH, k, end, (
            ("split_time", float(v.time[k])), ("dip_trend", float(v.trend[lo + dips[0]])),
            ("storm_time", float(v.time[hit])))))
        k = end + 1
    return out


def _recovery_spiral(v: _View, cfg: EpisodeConfig) -> List[EpisodeSpan]:
    window = v.ticks(cfg.recovery_window)
    out, k = [], 1
    while k < v.n:
        # realignment: InStep after a non-InStep tick
        if not (v.relation[k] == "InStep" and v.active[k] and v.relation[k - 1] != "InStep"):
            k += 1
            continue
        start = None
        for m in range(k - 1, max(-1, k - 1 - window), -1):
            if v.relation[m] == "InStep":
                break
            if v.relation[m] in ("Split", "GrowingLag"):
                start = m
        if start is None:
            k += 1
            continue
        base_rank = _rank(v.preset[start])
        low = float(v.peak[start:k + 1].min())
        # the span closes once the sky has improved and the sheet has risen, both while in step
        end, improved = None, False
        for m in range(k, min(v.n, start + window + 1)):
            if v.relation[m] != "InStep":
                break
            improved = improved or _rank(v.preset[m]) > base_rank
            if improved and v.peak[m] - low >= cfg.recovery_rise:
                end = m
                break
        if end is None:
            k += 1
            continue
        rise = float(v.peak[end] - low)
        out.append(EpisodeSpan(Label.RECOVERY_SPIRAL, start, end, (
            ("misaligned", v.relation[start]), ("realigned_time", float(v.time[k])),
            ("preset_from", v.preset[start]), ("preset_to", v.preset[end]), ("rise_m", rise))))
        k = end + 1
    return out


def _safety_eclipse(v: _View, cfg: EpisodeConfig) -> List[EpisodeSpan]:
    hush = [p == Preset.BLUE_HUSH.value for p in v.preset]
    out, k = [], 0
    while k < v.n:
        if not (v.flag[k] and hush[k] and v.softened[k]):
            k += 1
            continue
        end = _run_end(hush, k)
        out.append(EpisodeSpan(Label.SAFETY_ECLIPSE, k, end, (
            ("flag_time", float(v.time[k])), ("hush_s", (end - k + 1) * v.tick))))
        k = end + 1
    return out


DETECTORS: Dict[Label, Callable] = {
    Label.CLEAR_ASCENT: _clear_ascent,
    Label.SUSPENDED_NEGOTIATION: _suspended_negotiation,
    Label.COMPETITIVE_WHIPLASH: _competitive_whiplash,
    Label.RECOVERY_SPIRAL: _recovery_spiral,
    Label.SAFETY_ECLIPSE: _safety_eclipse,
}


def detect(trace: Trace, cfg: EpisodeConfig = EpisodeConfig(), check: bool = True) -> List[EpisodeSpan]:
    """All episode spans in ``trace``, ordered by start tick.

    With ``check`` the trace must replay cleanly first; hand-built fixtures
    that carry no consistent referee columns pass ``check=False``.
    """
    if check:
        report = replay(trace)
        if not report.ok:
            raise InconsistentTraceError(report)
    if not trace.records:
        return []
    v = _View(trace.records, float(trace.header["config"]["tick"]), cfg)
    spans = [s for det in DETECTORS.values() for s in det(v, cfg)]
    return sorted(spans, key=lambda s: (s.start_tick, list(Label).index(s.label)))


# --------------------------------------------------------------------------
# alignment audit


@dataclass(frozen=True)
class Violation:
    kind: str
    start_tick: int
    end_tick: int
    start_s: float
    end_s: float


@dataclass
class AlignmentReport:
    counts: Dict[str, int]
    durations: Dict[str, float]
    violations: List[Violation] = field(default_factory=list)
    ticks: int = 0

    def text(self) -> str:
        lines = [f"ticks analysed: {self.ticks}", "", "episodes:"]
        for label in Label:
            lines.append(f"  {label.value:<22} count {self.counts.get(label.value, 0):>3}"
                         f"  total {self.durations.get(label.value, 0.0):8.2f} s")
        lines += ["", f"legibility violations: {len(self.violations)}"]
        for v in self.violations:
            lines.append(f"  {v.kind}: {v.start_s:.2f}-{v.end_s:.2f} s "
                         f"(ticks {v.start_tick}-{v.end_tick})")
        return "\n".join(lines) + "\n"


VIOLATION_RULES = {
    # clear sky while timing is verifiably split
    "clear-sky-during-split": lambda r: r["relation"] == "Split" and r["preset"] == Preset.CLEAR_SUN.value,
    # storm while the arms are verifiably in step (not merely at rest)
    "storm-during-harmony": lambda r: (r["relation"] == "InStep" and bool(r.get("timing_active", True))
                                       and r["preset"] == Preset.LIGHTNING_RAIN.value),
}


def violation_scan(trace: Trace, min_duration: float = 2.0) -> List[Violation]:
    if not trace.records:
        return []
    tick = float(trace.header["config"]["tick"])
    need = max(1, int(round(min_duration / tick)))
    out = []
    for kind, rule in VIOLATION_RULES.items():
        for a, b in runs([rule(r) for r in trace.records]):
            if b - a + 1 >= need:
                out.append(Violation(kind, a, b, float(trace.records[a]["time"] - tick),
                                     float(trace.records[b]["time"])))
    return sorted(out, key=lambda v: (v.start_tick, v.kind))


def alignment_report(spans: Sequence[EpisodeSpan], trace: Trace,
                     cfg: EpisodeConfig = EpisodeConfig()) -> AlignmentReport:
    tick = float(trace.header["config"]["tick"]) if trace.records else 0.0
    counts = {label.value: 0 for label in Label}
    durations = {label.value: 0.0 for label in Label}
    for s in spans:
        counts[s.label.value] += 1
        durations[s.label.value] += (s.end_tick - s.start_tick + 1) * tick
    return AlignmentReport(counts, durations, violation_scan(trace, cfg.violation_min), len(trace.records))


def write_episodes_csv(spans: Sequence[EpisodeSpan], trace: Trace, path) -> None:
    tick = float(trace.header["config"]["tick"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "start_s", "end_s", "duration_s"])
        for s in spans:
            start = trace.records[s.start_tick]["time"] - tick
            end = trace.records[s.end_tick]["time"]
            w.writerow([s.label.value, f"{start:.2f}", f"{end:.2f}", f"{end - start:.2f}"])
