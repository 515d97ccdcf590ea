"""The per-tick loop: physics, camera, referee, decisions, credit, weather, log.

Every control tick (default 20 ms) runs, in order:

1. advance both grippers and the silk through the physics substeps;
2. measure height and update the rolling record;
3. estimate the timing relation and the cooperation cue;
4. raise safety flags from tension/torque and step the reflex;
5. let idle arms pick a motion primitive;
6. charge motion, award records (with first-mover attribution);
7. step the weather machine and append a trace record.
"""
from __future__ import annotations

import csv
import functools
import json
import logging
import math
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np
from numba import njit

from . import arms as arms_mod
from . import silk
from .arms import ArmState, Mode, render_primitive, safety_step, torque_proxy
from .config import StageConfig, config_from_dict
from .errors import (AttributionError, IncompatibleTraceError, InconsistentTraceError,
                     NumericDivergenceError, TraceFormatError)
from .policy import Policy, Snapshot, observe
from .scoring import CreditLedger, award_record, award_shares, charge_motion, reward
from .sensing import (FirstMover, HeightMeasurement, RecordTracker, classify_timing, first_mover,
                      lift_onset, measure, update_record)
from .weather import WeatherFsm, cooperation_cue, forest_band, step_preset

log = logging.getLogger(__name__)

TRACE_FORMAT = "silkstage-trace/1"
SIDES = ("A", "B")

COLUMNS = {
    "tick": ("control tick index", "-"),
    "time": ("time at the end of the tick", "s"),
    "center_true": ("true height of the middle node", "m"),
    "peak_true": ("true maximum interior node height", "m"),
    "center_meas": ("camera estimate of center height", "m"),
    "peak_meas": ("camera estimate of peak height", "m"),
    "record": ("rolling record after this tick", "m"),
    "record_broken": ("measured peak beat the rolling record", "bool"),
    "first_mover": ("credited arm when a record broke (ArmA/ArmB/Shared)", "-"),
    "crest_time": ("time of the most recent detected wave crest", "s"),
    "lag": ("edge-velocity lag, positive when B trails A", "s"),
    "correlation": ("normalized cross-correlation at the lag", "-"),
    "relation": ("timing relation (InStep/SmallLag/GrowingLag/Split)", "-"),
    "timing_active": ("false when both arms are near-silent", "bool"),
    "growth_streak": ("consecutive estimates with growing |lag|", "-"),
    "cue": ("cooperation cue", "[0,1]"),
    "preset": ("weather preset", "-"),
    "band": ("forest altimeter band", "-"),
    "scroll": ("forest scroll position", "[0,1]"),
    "safety_active": ("safety flag raised or an arm not Active", "bool"),
}
for _s in ("a", "b"):
    COLUMNS.update({
        f"grip_y_{_s}": (f"arm {_s.upper()} gripper horizontal position", "m"),
        f"grip_z_{_s}": (f"arm {_s.upper()} gripper height", "m"),
        f"vz_{_s}": (f"arm {_s.upper()} gripper vertical velocity (edge velocity)", "m/s"),
        f"az_{_s}": (f"arm {_s.upper()} gripper vertical acceleration", "m/s^2"),
        f"path_speed_{_s}": (f"arm {_s.upper()} gripper path length this tick / tick", "m/s"),
        f"mode_{_s}": (f"arm {_s.upper()} reflex mode", "-"),
        f"primitive_{_s}": (f"arm {_s.upper()} primitive in flight [amplitude, phase, dwell]", "m, s, s"),
        f"clipped_{_s}": (f"arm {_s.upper()} stroke was clipped", "bool"),
        f"tension_{_s}": (f"tension proxy at arm {_s.upper()}", "N"),
        f"torque_{_s}": (f"torque proxy at arm {_s.upper()}", "N"),
        f"flag_{_s}": (f"safety flag raised by arm {_s.upper()}", "bool"),
        f"spend_{_s}": (f"credit spent by arm {_s.upper()} this tick", "credits"),
        f"award_{_s}": (f"credit awarded to arm {_s.upper()} this tick", "credits"),
        f"reward_{_s}": (f"training reward of arm {_s.upper()} this tick", "credits"),
        f"credit_{_s}": (f"arm {_s.upper()} cumulative credit", "credits"),
    })


@dataclass
class Trace:
    header: dict
    records: List[dict] = field(default_factory=list)
    error: Optional[dict] = None
    totals: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> list:
        return [r[name] for r in self.records]


@functools.lru_cache(maxsize=64)
def rest_state(params: silk.SilkParams, grip_a: tuple, grip_b: tuple, dt: float) -> silk.SilkState:
    return silk.init_rest(params, grip_a, grip_b, dt=dt)


@dataclass(frozen=True)
class Reference:
    """Static reference levels derived from the resting sheet."""

    rest_peak: float
    rest_center: float
    record_floor: float
    h_floor: float
    h_sky: float


def reference_levels(cfg: StageConfig) -> Reference:
    state = rest_state(cfg.silk, tuple(cfg.grip_a), tuple(cfg.grip_b), cfg.physics_dt)
    rest_peak = silk.peak_height(state)
    rest_center = silk.center_height(state)
    h_sky = max(cfg.grip_a[1], cfg.grip_b[1]) + max(cfg.limits_a.max_stroke, cfg.limits_b.max_stroke)
    return Reference(rest_peak, rest_center, rest_peak + cfg.sensing.record_floor_margin,
                     rest_center, h_sky)


def make_header(cfg: StageConfig, policy_a: str = "", policy_b: str = "") -> dict:
    ref = reference_levels(cfg)
    return {
        "type": "header",
        "format": TRACE_FORMAT,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "policy_a": policy_a,
        "policy_b": policy_b,
        "reference": ref.__dict__,
        "columns": {k: {"meaning": v[0], "unit": v[1]} for k, v in COLUMNS.items()},
    }


class OnsetWindow:
    """Fixed-length history of (time, edge velocity), pre-filled with rest."""

    def __init__(self, n: int, tick: float):
        self.t = deque(((i - n + 1) * tick - tick for i in range(n)), maxlen=n)
        self.v = deque((0.0 for _ in range(n)), maxlen=n)

    def push(self, t: float, v: float) -> None:
        self.t.append(t)
        self.v.append(v)

    def array(self) -> np.ndarray:
        return np.fromiter(self.v, float, len(self.v))

    def series(self):
        return list(zip(self.t, self.v))


def attribute(win_a: OnsetWindow, win_b: OnsetWindow, cfg: StageConfig) -> FirstMover:
    s = cfg.sensing
    oa = lift_onset(win_a.series(), s.onset_threshold, s.onset_persist)
    ob = lift_onset(win_b.series(), s.onset_threshold, s.onset_persist)
    try:
        return first_mover(oa, ob, s.simultaneity)
    except AttributionError:
        log.debug("record without a lift onset; sharing credit")
        return FirstMover.SHARED


@njit(cache=True)
def _path_length(y0, z0, grips):
    total = 0.0
    for i in range(grips.shape[0]):
        dy = grips[i, 0] - y0
        dz = grips[i, 1] - z0
        total += math.sqrt(dy * dy + dz * dz)
        y0, z0 = grips[i, 0], grips[i, 1]
    return total


def _path_speed(prev, grips: np.ndarray, tick: float) -> float:
    return _path_length(float(prev[0]), float(prev[1]), grips) / tick


def finite_difference_trend(heights, tick: float) -> float:
    """Slope between the first and last of equally spaced height samples."""
    return (heights[-1] - heights[0]) / ((len(heights) - 1) * tick)


def run_episode(cfg: StageConfig, policy_a: Policy, policy_b: Policy, record: bool = True) -> Trace:
    """Run one deterministic episode. With ``record=False`` only totals are kept."""
    header = make_header(cfg, getattr(policy_a, "name", ""), getattr(policy_b, "name", ""))
    trace = Trace(header)
    ref = reference_levels(cfg)
    tick, dt, n_sub = cfg.tick, cfg.physics_dt, cfg.physics_substeps
    sens, timing_cfg, reflex = cfg.sensing, cfg.sensing.timing, cfg.reflex
    limits = {"A": cfg.limits_a, "B": cfg.limits_b}

    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    cam_rng = np.random.default_rng(seeds[0])
    policies = {"A": policy_a, "B": policy_b}
    policy_a.reset(seed=seeds[1])
    policy_b.reset(seed=seeds[2])

    state = rest_state(cfg.silk, tuple(cfg.grip_a), tuple(cfg.grip_b), dt).copy()
    tracker = RecordTracker(sens.record_window, floor=ref.record_floor)
    arm = {"A": ArmState(tuple(cfg.grip_a)), "B": ArmState(tuple(cfg.grip_b))}
    exchanged = {s: (arm[s].grip, arm[s].grip_velocity) for s in SIDES}
    W = timing_cfg.window_ticks
    win = {s: OnsetWindow(W, tick) for s in SIDES}
    trend_n = max(1, int(round(sens.trend_window / tick)))
    heights = deque([ref.rest_peak] * (trend_n + 1), maxlen=trend_n + 1)
    crest_hist = deque(maxlen=3)
    last_crest = None
    est = None
    fsm = WeatherFsm(min_dwell=cfg.weather.min_dwell, margin=cfg.weather.margin)
    ledger = CreditLedger(record_award=cfg.scoring.record_award, motion_rate=cfg.scoring.motion_rate)
    totals = {"reward_a": 0.0, "reward_b": 0.0, "records": 0, "safety_events": 0,
              "max_peak": ref.rest_peak, "ticks": 0}
    sub = dt * np.arange(1, n_sub + 1)
    primitive = {"A": None, "B": None}
    clipped = {"A": False, "B": False}
    prev_flag = False

    for k in range(cfg.n_ticks):
        t0 = k * tick
        t1 = (k + 1) * tick
        times = t0 + sub
        grips = {}
        path_speed = {}
        for s in SIDES:
            before = arm[s].grip
            grips[s], arm[s] = arms_mod.advance(arm[s], times, reflex, t0)
            path_speed[s] = _path_speed(before, grips[s], tick)
            if arm[s].active_trajectory is None:
                primitive[s] = None
        try:
            state = silk.advance(state, cfg.silk, grips["A"], grips["B"], dt)
        except NumericDivergenceError as exc:
            trace.error = {"type": "error", "tick": k, "time": t1, "kind": "numeric-divergence",
                           "node": exc.node, "message": str(exc)}
            break
        state = silk.SilkState(state.positions, state.velocities, t1)

        meas = measure(state, sens.noise_std, cam_rng)
        _, broken, _ = update_record(tracker, meas)
        heights.append(meas.peak_height)
        trend = finite_difference_trend(heights, tick)

        # edge signals as sensed, before the reflex may zero them this tick
        sensed = {s: (arm[s].grip_velocity[1], arm[s].grip_acceleration[1]) for s in SIDES}
        for s in SIDES:
            win[s].push(t1, sensed[s][0])
        est = classify_timing(win["A"].array(), win["B"].array(), est, timing_cfg)
        cue = cooperation_cue(est, t1, cfg.weather.lag_decay)

        tension = {"A": silk.tension_proxy(state, cfg.silk, "A"), "B": silk.tension_proxy(state, cfg.silk, "B")}
        torque = {s: torque_proxy(arm[s], reflex.effective_mass, tension[s]) for s in SIDES}
        flags = {s: tension[s] > limits[s].tension_max or torque[s] > limits[s].torque_max for s in SIDES}
        any_flag = flags["A"] or flags["B"]
        for s in SIDES:
            was_active = arm[s].mode is Mode.ACTIVE
            arm[s] = safety_step(arm[s], any_flag, tick, reflex)
            if was_active and arm[s].mode is not Mode.ACTIVE:
                primitive[s] = None
        if any_flag and not prev_flag:
            totals["safety_events"] += 1
        prev_flag = any_flag

        true_peak = silk.peak_height(state)
        crest_hist.append((t1, true_peak, silk.peak_node(state)))
        c = silk.detect_crest(crest_hist, ref.rest_peak, sens.crest_noise_floor)
        if c is not None:
            last_crest = c

        if k % cfg.exchange_ticks == 0:
            exchanged = {s: (arm[s].grip, arm[s].grip_velocity) for s in SIDES}

        idle = [s for s in SIDES if arm[s].idle]
        if idle:
            snap = Snapshot(time=t1, height=meas.peak_height, height_trend=trend, arms=arm,
                            tensions=tension, exchanged=exchanged,
                            last_crest_time=None if last_crest is None else last_crest.time)
            for s in idle:
                p = policies[s].act(observe(snap, s))
                traj = render_primitive(p, limits[s], last_crest, t1, baseline=arm[s].grip)
                arm[s] = replace(arm[s], active_trajectory=traj)
                primitive[s] = p
                clipped[s] = traj.clipped

        spend = {s: cfg.scoring.motion_rate * path_speed[s] * tick for s in SIDES}
        for s in SIDES:
            ledger = charge_motion(ledger, s, path_speed[s], tick)
        award = {"A": 0.0, "B": 0.0}
        mover = None
        if broken:
            mover = attribute(win["A"], win["B"], cfg)
            award["A"], award["B"] = award_shares(mover, cfg.scoring.record_award)
            ledger = award_record(ledger, mover)
            totals["records"] += 1
        rew = {s: reward(award[s], spend[s], flags[s], cfg.scoring.safety_penalty) for s in SIDES}
        totals["reward_a"] += rew["A"]
        totals["reward_b"] += rew["B"]
        totals["max_peak"] = max(totals["max_peak"], meas.peak_height)

        safety_active = any_flag or arm["A"].mode is not Mode.ACTIVE or arm["B"].mode is not Mode.ACTIVE
        fsm = step_preset(fsm, cue, safety_active)
        band = forest_band(meas.center_height, ref.h_floor, ref.h_sky)
        totals["ticks"] += 1

        if record:
            rec = {
                "tick": k, "time": t1,
                "center_true": silk.center_height(state), "peak_true": true_peak,
                "center_meas": meas.center_height, "peak_meas": meas.peak_height,
                "record": tracker.current_record, "record_broken": bool(broken),
                "first_mover": None if mover is None else mover.value,
                "crest_time": None if last_crest is None else last_crest.time,
                "lag": est.lag, "correlation": est.correlation, "relation": est.relation.value,
                "timing_active": est.active, "growth_streak": est.growth_streak,
                "cue": cue.value, "preset": fsm.current.value,
                "band": band.value.value, "scroll": band.scroll,
                "safety_active": bool(safety_active),
            }
            for s in SIDES:
                x = s.lower()
                a = arm[s]
                p = primitive[s]
                rec.update({
                    f"grip_y_{x}": a.grip[0], f"grip_z_{x}": a.grip[1],
                    f"vz_{x}": sensed[s][0], f"az_{x}": sensed[s][1],
                    f"path_speed_{x}": path_speed[s], f"mode_{x}": a.mode.value,
                    f"primitive_{x}": None if p is None else [p.lift_amplitude, p.snap_phase, p.dwell],
                    f"clipped_{x}": bool(clipped[s]) if p is not None else False,
                    f"tension_{x}": tension[s], f"torque_{x}": torque[s], f"flag_{x}": bool(flags[s]),
                    f"spend_{x}": spend[s], f"award_{x}": award[s], f"reward_{x}": rew[s],
                    f"credit_{x}": ledger.credit(s),
                })
            trace.records.append(rec)

    totals.update(credit_a=ledger.credit_a, credit_b=ledger.credit_b,
                  spend_a=ledger.motion_cost_a, spend_b=ledger.motion_cost_b,
                  awards_a=ledger.awards_a, awards_b=ledger.awards_b)
    trace.totals = totals
    return trace



# --------------------------------------------------------------------------
# trace files


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=True)


def write_trace(trace: Trace, path) -> None:
    """Line-delimited JSON: header, one line per tick, optional error, footer.

    The footer carries the tick count so a truncated file is detectable.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps(trace.header) + "\n")
        for rec in trace.records:
            fh.write(_dumps({"type": "tick", **rec}) + "\n")
        if trace.error is not None:
            fh.write(_dumps(trace.error) + "\n")
        fh.write(_dumps({"type": "footer", "ticks": len(trace.records),
                         "error": trace.error is not None, "totals": trace.totals}) + "\n")


def read_trace(path) -> Trace:
    try:
        lines = Path(path).read_text(encoding="utf-8").split("\n")
    except OSError as exc:
        raise TraceFormatError(0, f"cannot read {path}: {exc.strerror}") from None
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise TraceFormatError(1, "empty trace file")
    objs = []
    for i, line in enumerate(lines, start=1):
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise TraceFormatError(i, f"not a JSON object ({exc.msg})") from None
        if not isinstance(obj, dict) or "type" not in obj:
            raise TraceFormatError(i, "line lacks a 'type' field")
        objs.append(obj)
    header = objs[0]
    if header["type"] != "header":
        raise TraceFormatError(1, "first line must be the header")
    if header.get("format") != TRACE_FORMAT:
        raise TraceFormatError(1, f"unsupported format {header.get('format')!r}")
    trace = Trace(header)
    footer = None
    for i, obj in enumerate(objs[1:], start=2):
        if footer is not None:
            raise TraceFormatError(i, "content after footer")
        kind = obj["type"]
        if kind == "tick":
            if trace.error is not None:
                raise TraceFormatError(i, "tick after error record")
            rec = {k: v for k, v in obj.items() if k != "type"}
            missing = [c for c in COLUMNS if c not in rec]
            if missing:
                raise TraceFormatError(i, f"missing column(s) {missing}")
            if rec["tick"] != len(trace.records):
                raise TraceFormatError(i, f"expected tick {len(trace.records)}, found {rec['tick']}")
            trace.records.append(rec)
        elif kind == "error":
            trace.error = obj
        elif kind == "footer":
            footer = obj
        else:
            raise TraceFormatError(i, f"unknown record type {kind!r}")
    if footer is None:
        raise TraceFormatError(len(lines), "trace ends without a footer (truncated?)")
    if footer.get("ticks") != len(trace.records):
        raise TraceFormatError(len(lines), f"footer announces {footer.get('ticks')} ticks, "
                                           f"file has {len(trace.records)}")
    trace.totals = footer.get("totals", {})
    return trace


SUMMARY_FIELDS = ("second", "ticks", "peak_meas_max", "center_meas_mean", "records",
                  "relation", "preset", "band", "safety_ticks", "spend_a", "spend_b",
                  "award_a", "award_b", "credit_a", "credit_b")


def summarize(trace: Trace) -> List[dict]:
    """One row per whole second of trace: maxima, sums and the majority labels."""
    if not trace.records:
        return []
    tick = trace.header["config"]["tick"]
    per = max(1, int(round(1.0 / tick)))
    rows = []
    for start in range(0, len(trace.records), per):
        chunk = trace.records[start:start + per]
        last = chunk[-1]
        rows.append({
            "second": start // per,
            "ticks": len(chunk),
            "peak_meas_max": max(r["peak_meas"] for r in chunk),
            "center_meas_mean": sum(r["center_meas"] for r in chunk) / len(chunk),
            "records": sum(bool(r["record_broken"]) for r in chunk),
            "relation": _majority(r["relation"] for r in chunk),
            "preset": _majority(r["preset"] for r in chunk),
            "band": _majority(r["band"] for r in chunk),
            "safety_ticks": sum(bool(r["safety_active"]) for r in chunk),
            "spend_a": sum(r["spend_a"] for r in chunk),
            "spend_b": sum(r["spend_b"] for r in chunk),
            "award_a": sum(r["award_a"] for r in chunk),
            "award_b": sum(r["award_b"] for r in chunk),
            "credit_a": last["credit_a"],
            "credit_b": last["credit_b"],
        })
    return rows


def _majority(values) -> str:
    # ties go to the label seen first
    counts = Counter(values)
    return max(counts, key=lambda v: counts[v])


def write_summary(trace: Trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in summarize(trace):
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})


# --------------------------------------------------------------------------
# replay


@dataclass(frozen=True)
class Mismatch:
    field: str
    tick: int
    expected: object
    found: object


@dataclass
class ReplayReport:
    ticks: int
    mismatches: List[Mismatch] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def flagged_ticks(self) -> List[int]:
        return sorted({m.tick for m in self.mismatches})


REPLAY_TOL = 1e-9


def _same(expected, found) -> bool:
    if isinstance(expected, float) or isinstance(found, float):
        if expected is None or found is None:
            return expected is found
        if math.isnan(expected) and math.isnan(found):
            return True
        return abs(expected - found) <= REPLAY_TOL * max(1.0, abs(expected))
    return expected == found


def replay(trace: Trace, cfg: Optional[StageConfig] = None) -> ReplayReport:
    """Re-derive every referee quantity from the logged raw signals.

    Raw inputs are the measured heights, gripper velocities, path speeds,
    tensions, torques and reflex modes. Everything computed from them (timing,
    cue, record, attribution, credit, flags, preset, band) is recomputed and
    compared; each disagreement is reported once per field and tick.
    """

    logged_hash = trace.header.get("config_hash")
    if cfg is None:
        cfg = config_from_dict(trace.header["config"])
    if cfg.config_hash() != logged_hash:
        raise IncompatibleTraceError(f"config hash {cfg.config_hash()[:12]} does not match "
                                     f"trace {str(logged_hash)[:12]}")
    ref = reference_levels(cfg)
    tick, sens, timing_cfg = cfg.tick, cfg.sensing, cfg.sensing.timing
    limits = {"A": cfg.limits_a, "B": cfg.limits_b}
    tracker = RecordTracker(sens.record_window, floor=ref.record_floor)
    win = {s: OnsetWindow(timing_cfg.window_ticks, tick) for s in SIDES}
    fsm = WeatherFsm(min_dwell=cfg.weather.min_dwell, margin=cfg.weather.margin)
    ledger = CreditLedger(record_award=cfg.scoring.record_award, motion_rate=cfg.scoring.motion_rate)
    est = None
    report = ReplayReport(len(trace.records))

    for k, rec in enumerate(trace.records):
        exp = {"tick": k, "time": (k + 1) * tick}
        t1 = rec["time"]
        meas = HeightMeasurement(t1, rec["center_meas"], rec["peak_meas"])
        _, broken, _ = update_record(tracker, meas)
        exp["record"] = tracker.current_record
        exp["record_broken"] = bool(broken)

        for s in SIDES:
            win[s].push(t1, rec[f"vz_{s.lower()}"])
        est = classify_timing(win["A"].array(), win["B"].array(), est, timing_cfg)
        cue = cooperation_cue(est, t1, cfg.weather.lag_decay)
        exp.update(lag=est.lag, correlation=est.correlation, relation=est.relation.value,
                   timing_active=est.active, growth_streak=est.growth_streak, cue=cue.value)

        flags = {}
        for s in SIDES:
            x = s.lower()
            flags[s] = (rec[f"tension_{x}"] > limits[s].tension_max
                        or rec[f"torque_{x}"] > limits[s].torque_max)
            exp[f"flag_{x}"] = flags[s]

        mover = attribute(win["A"], win["B"], cfg) if broken else None
        exp["first_mover"] = None if mover is None else mover.value
        award = dict(zip(SIDES, award_shares(mover, cfg.scoring.record_award))) if broken \
            else {"A": 0.0, "B": 0.0}
        for s in SIDES:
            x = s.lower()
            speed = rec[f"path_speed_{x}"]
            ledger = charge_motion(ledger, s, speed, tick)
            spend = cfg.scoring.motion_rate * speed * tick
            exp[f"spend_{x}"] = spend
            exp[f"award_{x}"] = award[s]
            exp[f"reward_{x}"] = reward(award[s], spend, flags[s], cfg.scoring.safety_penalty)
        if broken:
            ledger = award_record(ledger, mover)
        exp["credit_a"], exp["credit_b"] = ledger.credit_a, ledger.credit_b

        safety_active = (flags["A"] or flags["B"] or rec["mode_a"] != Mode.ACTIVE.value
                         or rec["mode_b"] != Mode.ACTIVE.value)
        exp["safety_active"] = safety_active
        fsm = step_preset(fsm, cue, safety_active)
        exp["preset"] = fsm.current.value
        band = forest_band(rec["center_meas"], ref.h_floor, ref.h_sky)
        exp["band"], exp["scroll"] = band.value.value, band.scroll

        for name, value in exp.items():
            if not _same(value, rec.get(name)):
                report.mismatches.append(Mismatch(name, k, value, rec.get(name)))
    return report


def verify(trace: Trace, cfg: Optional[StageConfig] = None) -> ReplayReport:
    """Replay and raise :class:`InconsistentTraceError` on any mismatch."""
    report = replay(trace, cfg)
    if not report.ok:
        raise InconsistentTraceError(report)
    return report
