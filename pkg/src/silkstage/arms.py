"""Gripper motion: jerk-limited snap trajectories and the soften/freeze reflex.

Each arm is reduced to its gripper endpoint in the vertical plane. A snap is
an S-curve (7-phase constant-jerk profile) up by the lift amplitude followed
by the mirror-image S-curve back down to the baseline.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from numba import njit

from .errors import InvalidParameterError, InvalidPrimitiveError
from .silk import CrestEvent

Vec2 = Tuple[float, float]


class Mode(str, enum.Enum):
    ACTIVE = "Active"
    SOFTENING = "Softening"
    FROZEN = "Frozen"


@dataclass(frozen=True)
class MotionPrimitive:
    lift_amplitude: float
    snap_phase: float
    dwell: float

    def validate(self) -> None:
        for name in ("lift_amplitude", "snap_phase", "dwell"):
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating)) or not math.isfinite(v):
                raise InvalidPrimitiveError(f"{name} must be finite, got {v!r}")
            if v < 0:
                raise InvalidPrimitiveError(f"{name} must be >= 0, got {v!r}")


@dataclass(frozen=True)
class ArmLimits:
    v_max: float = 1.5
    a_max: float = 10.0
    j_max: float = 100.0
    torque_max: float = 8.0
    tension_max: float = 2.0
    max_stroke: float = 0.35

    def __post_init__(self):
        for name in ("v_max", "a_max", "j_max", "torque_max", "tension_max", "max_stroke"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise InvalidParameterError(f"ArmLimits.{name} must be finite and > 0, got {v!r}")


@dataclass(frozen=True)
class ReflexConfig:
    soften_tau: float = 0.15
    recover_time: float = 5.0
    freeze_speed: float = 1e-3
    effective_mass: float = 0.5


@dataclass(frozen=True)
class GripperTrajectory:
    """Piecewise-constant-jerk vertical profile starting at ``start_time``.

    ``phases`` is a tuple of ``(duration, jerk)``. ``amplitude`` is what was
    rendered; ``requested_amplitude`` differs from it when the stroke was
    clipped.
    """

    start_time: float
    phases: Tuple[Tuple[float, float], ...]
    baseline: Vec2
    amplitude: float = 0.0
    requested_amplitude: float = 0.0
    primitive: Optional[MotionPrimitive] = None
    _knots: Tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._knots is None:
            object.__setattr__(self, "_knots", _knot_table(self.phases))

    @property
    def clipped(self) -> bool:
        return self.amplitude < self.requested_amplitude

    @property
    def duration(self) -> float:
        return self._knots[0][-1]

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration


@dataclass(frozen=True)
class ArmState:
    grip: Vec2
    grip_velocity: Vec2 = (0.0, 0.0)
    grip_acceleration: Vec2 = (0.0, 0.0)
    mode: Mode = Mode.ACTIVE
    active_trajectory: Optional[GripperTrajectory] = None
    frozen_elapsed: float = 0.0

    @property
    def idle(self) -> bool:
        return self.mode is Mode.ACTIVE and self.active_trajectory is None


# --------------------------------------------------------------------------
# S-curve construction


def _accel_shape(vp: float, a: float, j: float) -> Tuple[float, float]:
    """(jerk time, constant-accel time) to go 0 -> vp."""
    if vp * j >= a * a:
        return a / j, vp / a - a / j
    return math.sqrt(vp / j), 0.0


def scurve_phases(distance: float, v_max: float, a_max: float, j_max: float):
    """Rest-to-rest constant-jerk phases covering ``distance`` (may be negative)."""
    d = abs(distance)
    if d == 0.0:
        return []
    sgn = 1.0 if distance > 0 else -1.0
    tj, tca = _accel_shape(v_max, a_max, j_max)
    accel_time = 2 * tj + tca
    if v_max * accel_time <= d:
        vp = v_max
        cruise = (d - vp * accel_time) / vp
    else:
        cruise = 0.0
        a, j = a_max, j_max
        vp = 0.5 * a * (-a / j + math.sqrt(a * a / (j * j) + 4.0 * d / a))
        if vp * j < a * a:
            vp = (d * math.sqrt(j) / 2.0) ** (2.0 / 3.0)
        tj, tca = _accel_shape(vp, a, j)
    j = sgn * j_max
    raw = [(tj, j), (tca, 0.0), (tj, -j), (cruise, 0.0), (tj, -j), (tca, 0.0), (tj, j)]
    return [(dur, jerk) for dur, jerk in raw if dur > 0.0]


def _knot_table(phases):
    times, pos, vel, acc, jerks = [0.0], [0.0], [0.0], [0.0], []
    for dur, jerk in phases:
        p, v, a = pos[-1], vel[-1], acc[-1]
        pos.append(p + v * dur + a * dur * dur / 2.0 + jerk * dur ** 3 / 6.0)
        vel.append(v + a * dur + jerk * dur * dur / 2.0)
        acc.append(a + jerk * dur)
        times.append(times[-1] + dur)
        jerks.append(jerk)
    return (np.array(times), np.array(pos), np.array(vel), np.array(acc), np.array(jerks))


def render_primitive(p: MotionPrimitive, limits: ArmLimits, last_crest: Optional[CrestEvent],
                     now: float, baseline: Vec2 = (0.0, 0.0)) -> GripperTrajectory:
    """Turn a primitive into a snap trajectory.

    The snap starts at ``max(now + dwell, crest_time + snap_phase)``; with no
    crest the phase counts from ``now``. Strokes above ``limits.max_stroke``
    are clipped.
    """
    p.validate()
    ref = last_crest.time if last_crest is not None else now
    start = max(now + p.dwell, ref + p.snap_phase)
    amp = min(float(p.lift_amplitude), limits.max_stroke)
    up = scurve_phases(amp, limits.v_max, limits.a_max, limits.j_max)
    down = [(dur, -jerk) for dur, jerk in up]
    return GripperTrajectory(start_time=start, phases=tuple(up + down),
                             baseline=(float(baseline[0]), float(baseline[1])),
                             amplitude=amp, requested_amplitude=float(p.lift_amplitude),
                             primitive=p)


@njit(cache=True)
def _sample_kernel(times, pos, vel, acc, jerks, tau, z, vz, az):
    n_seg = jerks.shape[0]
    end = times[n_seg]
    end_z = pos[n_seg] if abs(pos[n_seg]) > 1e-12 else 0.0
    k = 0
    for i in range(tau.shape[0]):
        t = tau[i]
        if t < 0.0:
            z[i] = 0.0
            vz[i] = 0.0
            az[i] = 0.0
            continue
        # tolerance absorbs the rounding in end_time - start_time
        if t >= end - 1e-12:
            z[i] = end_z
            vz[i] = 0.0
            az[i] = 0.0
            continue
        # tau is usually ascending; restart the scan only when it is not
        if t < times[k]:
            k = 0
        while k + 1 < n_seg and times[k + 1] <= t:
            k += 1
        s = t - times[k]
        j = jerks[k]
        z[i] = pos[k] + vel[k] * s + acc[k] * s * s / 2.0 + j * s * s * s / 6.0
        vz[i] = vel[k] + acc[k] * s + j * s * s / 2.0
        az[i] = acc[k] + j * s


def sample(traj: GripperTrajectory, t):
    """Closed-form (grip, velocity, acceleration) at time(s) ``t``.

    Scalar ``t`` gives tuples of (y, z); array ``t`` gives ``(n, 2)`` arrays.
    """
    times, pos, vel, acc, jerks = traj._knots
    scalar = np.ndim(t) == 0
    tau = np.atleast_1d(np.asarray(t, dtype=float)).ravel() - traj.start_time
    n = tau.size
    by, bz = traj.baseline
    out = np.zeros((3, n, 2))
    if len(jerks):
        z, vz, az = np.empty(n), np.empty(n), np.empty(n)
        _sample_kernel(times, pos, vel, acc, jerks, tau, z, vz, az)
        out[0, :, 1] = z
        out[1, :, 1] = vz
        out[2, :, 1] = az
    out[0, :, 0] = by
    out[0, :, 1] += bz
    if scalar:
        return ((by, float(out[0, 0, 1])), (0.0, float(out[1, 0, 1])), (0.0, float(out[2, 0, 1])))
    return out[0], out[1], out[2]


def sample_jerk(traj: GripperTrajectory, t: float) -> float:
    times, _, _, _, jerks = traj._knots
    tau = t - traj.start_time
    if tau < 0 or tau >= times[-1] or not len(jerks):
        return 0.0
    return float(jerks[np.searchsorted(times, tau, side="right") - 1])


# --------------------------------------------------------------------------
# per-tick motion and reflex


def advance(arm: ArmState, times: np.ndarray, reflex: ReflexConfig = ReflexConfig(), t0: Optional[float] = None):
    """Gripper positions at each of ``times`` and the arm state at ``times[-1]``.

    ``t0`` is the time the current state refers to; it only matters while
    softening (the decay is measured from it).
    """
    times = np.asarray(times, dtype=float)
    if arm.mode is Mode.ACTIVE and arm.active_trajectory is not None:
        traj = arm.active_trajectory
        grips, vels, accs = sample(traj, times)
        done = times[-1] >= traj.end_time
        new = replace(arm, grip=(float(grips[-1, 0]), float(grips[-1, 1])),
                      grip_velocity=(float(vels[-1, 0]), float(vels[-1, 1])),
                      grip_acceleration=(float(accs[-1, 0]), float(accs[-1, 1])),
                      active_trajectory=None if done else traj)
        return grips, new
    if arm.mode is Mode.SOFTENING:
        if t0 is None:
            raise ValueError("t0 is required while softening")
        tau = reflex.soften_tau
        decay = np.exp(-(times - t0) / tau)
        p0 = np.asarray(arm.grip)
        v0 = np.asarray(arm.grip_velocity)
        grips = p0[None, :] + v0[None, :] * (tau * (1.0 - decay))[:, None]
        v = v0 * decay[-1]
        new = replace(arm, grip=(float(grips[-1, 0]), float(grips[-1, 1])),
                      grip_velocity=(float(v[0]), float(v[1])),
                      grip_acceleration=(float(-v[0] / tau), float(-v[1] / tau)))
        return grips, new
    grips = np.repeat(np.asarray(arm.grip, dtype=float)[None, :], len(times), axis=0)
    if arm.grip_velocity != (0.0, 0.0) or arm.grip_acceleration != (0.0, 0.0):
        arm = replace(arm, grip_velocity=(0.0, 0.0), grip_acceleration=(0.0, 0.0))
    return grips, arm


def torque_proxy(arm: ArmState, effective_mass: float, tension: float) -> float:
    ay, az = arm.grip_acceleration
    return effective_mass * math.hypot(ay, az) + tension


def safety_step(arm: ArmState, flag: bool, tick: float, reflex: ReflexConfig = ReflexConfig()) -> ArmState:
    """Mode transitions of the safety reflex for one control tick.

    Active -> Softening on a flag (trajectory dropped); Softening -> Frozen
    once the gripper is nearly still; Frozen -> Active after
    ``reflex.recover_time`` without a flag.
    """
    if arm.mode is Mode.ACTIVE:
        if flag:
            return replace(arm, mode=Mode.SOFTENING, active_trajectory=None)
        return arm
    if arm.mode is Mode.SOFTENING:
        if math.hypot(*arm.grip_velocity) < reflex.freeze_speed:
            return replace(arm, mode=Mode.FROZEN, grip_velocity=(0.0, 0.0),
                           grip_acceleration=(0.0, 0.0), frozen_elapsed=0.0)
        return arm
    elapsed = 0.0 if flag else arm.frozen_elapsed + tick
    if elapsed >= reflex.recover_time - 1e-12:
        return replace(arm, mode=Mode.ACTIVE, frozen_elapsed=0.0)
    return replace(arm, frozen_elapsed=elapsed)
