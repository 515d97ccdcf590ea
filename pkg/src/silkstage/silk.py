"""Mass-spring chain model of the silk sheet held between two grippers.

The sheet is a 1-D chain of point masses in the vertical (y, z) plane. The
first and last nodes are kinematic: they follow the commanded gripper
positions. Interior nodes are integrated with semi-implicit (symplectic)
Euler under Hooke springs, axial dashpots, per-node air drag and gravity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from numba import njit

from .errors import InvalidParameterError, NumericDivergenceError

DEFAULT_DT = 0.002
CREST_NOISE_FLOOR = 0.005


@dataclass(frozen=True)
class SilkParams:
    node_count: int = 33
    total_mass: float = 0.05
    stiffness: float = 40.0
    damping: float = 0.02
    segment_rest_length: float = 0.04
    gravity: float = 9.81
    air_drag: float = 0.002

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.node_count, (int, np.integer)) or self.node_count < 3:
            raise InvalidParameterError(f"node_count must be an integer >= 3, got {self.node_count!r}")
        for name in ("total_mass", "stiffness", "segment_rest_length"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise InvalidParameterError(f"{name} must be finite and > 0, got {v!r}")
        for name in ("damping", "air_drag", "gravity"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise InvalidParameterError(f"{name} must be finite and >= 0, got {v!r}")

    @property
    def node_mass(self) -> float:
        return self.total_mass / self.node_count


@dataclass(frozen=True)
class SilkState:
    """Node positions and velocities, shape ``(node_count, 2)`` as (y, z)."""

    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0

    @property
    def node_count(self) -> int:
        return self.positions.shape[0]

    def copy(self) -> "SilkState":
        return SilkState(self.positions.copy(), self.velocities.copy(), self.time)


@dataclass(frozen=True)
class CrestEvent:
    time: float
    node_index: int
    height: float


# --------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _integrate(pos, vel, force, node_mass, k, c, drag, rest, g, extra_drag,
               grips_a, grips_b, dt):
    """Advance ``len(grips_a)`` steps in place. Returns -1, or the first bad node."""
    n = pos.shape[0]
    inv_m = 1.0 / node_mass
    for s in range(grips_a.shape[0]):
        for i in range(n):
            force[i, 0] = 0.0
            force[i, 1] = 0.0
        for i in range(n - 1):
            dy = pos[i + 1, 0] - pos[i, 0]
            dz = pos[i + 1, 1] - pos[i, 1]
            length = math.sqrt(dy * dy + dz * dz)
            if length > 0.0:
                uy = dy / length
                uz = dz / length
            else:
                uy = 0.0
                uz = 0.0
            rel = (vel[i + 1, 0] - vel[i, 0]) * uy + (vel[i + 1, 1] - vel[i, 1]) * uz
            f = k * (length - rest) + c * rel
            force[i, 0] += f * uy
            force[i, 1] += f * uz
            force[i + 1, 0] -= f * uy
            force[i + 1, 1] -= f * uz
        for i in range(1, n - 1):
            fy = force[i, 0] - (drag + extra_drag) * vel[i, 0]
            fz = force[i, 1] - (drag + extra_drag) * vel[i, 1] - node_mass * g
            if not (math.isfinite(fy) and math.isfinite(fz)):
                return i
            vel[i, 0] += dt * fy * inv_m
            vel[i, 1] += dt * fz * inv_m
            pos[i, 0] += dt * vel[i, 0]
            pos[i, 1] += dt * vel[i, 1]
        vel[0, 0] = (grips_a[s, 0] - pos[0, 0]) / dt
        vel[0, 1] = (grips_a[s, 1] - pos[0, 1]) / dt
        pos[0, 0] = grips_a[s, 0]
        pos[0, 1] = grips_a[s, 1]
        vel[n - 1, 0] = (grips_b[s, 0] - pos[n - 1, 0]) / dt
        vel[n - 1, 1] = (grips_b[s, 1] - pos[n - 1, 1]) / dt
        pos[n - 1, 0] = grips_b[s, 0]
        pos[n - 1, 1] = grips_b[s, 1]
    return -1


@njit(cache=True)
def _max_interior_speed(vel):
    best = 0.0
    for i in range(1, vel.shape[0] - 1):
        s = math.sqrt(vel[i, 0] * vel[i, 0] + vel[i, 1] * vel[i, 1])
        if s > best:
            best = s
    return best


def _kernel_args(params: SilkParams):
    return (params.node_mass, float(params.stiffness), float(params.damping),
            float(params.air_drag), float(params.segment_rest_length), float(params.gravity))


def _as_grip(g) -> np.ndarray:
    arr = np.asarray(g, dtype=float).reshape(2)
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"grip position must be finite, got {g!r}")
    return arr


# --------------------------------------------------------------------------
# operations


def init_rest(params: SilkParams, grip_a, grip_b, dt: float = DEFAULT_DT,
              tol: float = 1e-5, max_steps: int = 2_000_000) -> SilkState:
    """Static equilibrium of the chain between two fixed grips.

    Nodes start evenly spaced on the straight segment between the grips and
    are relaxed with heavy extra drag until the fastest interior node moves
    slower than ``tol``.
    """
    params.validate()
    a, b = _as_grip(grip_a), _as_grip(grip_b)
    n = params.node_count
    w = np.linspace(0.0, 1.0, n)[:, None]
    pos = (1.0 - w) * a + w * b
    vel = np.zeros_like(pos)
    force = np.zeros_like(pos)
    # roughly critical for the slowest pendulum-like mode
    relax_drag = 2.0 * params.node_mass * 2.0 * math.pi * 2.0
    ga = np.repeat(a[None, :], 500, axis=0)
    gb = np.repeat(b[None, :], 500, axis=0)
    args = _kernel_args(params)
    steps = 0
    while True:
        bad = _integrate(pos, vel, force, *args, relax_drag, ga, gb, dt)
        if bad >= 0:
            raise NumericDivergenceError(bad, "relaxation diverged")
        steps += ga.shape[0]
        # boundary velocities are zero for stationary grips
        if _max_interior_speed(vel) < tol:
            break
        if steps >= max_steps:
            raise NumericDivergenceError(-1, f"relaxation did not settle in {max_steps} steps")
    vel[:] = 0.0
    return SilkState(pos, vel, 0.0)


def advance(state: SilkState, params: SilkParams, grips_a, grips_b, dt: float = DEFAULT_DT) -> SilkState:
    """Run one physics step per row of ``grips_a``/``grips_b`` (each ``(k, 2)``)."""
    if not (0.0 < dt <= 0.01):
        raise InvalidParameterError(f"dt must be in (0, 0.01], got {dt!r}")
    ga = np.ascontiguousarray(grips_a, dtype=float).reshape(-1, 2)
    gb = np.ascontiguousarray(grips_b, dtype=float).reshape(-1, 2)
    if ga.shape != gb.shape:
        raise InvalidParameterError("grip series must have equal length")
    if not (np.all(np.isfinite(ga)) and np.all(np.isfinite(gb))):
        raise InvalidParameterError("grip positions must be finite")
    pos = state.positions.copy()
    vel = state.velocities.copy()
    force = np.empty_like(pos)
    bad = _integrate(pos, vel, force, *_kernel_args(params), 0.0, ga, gb, dt)
    if bad >= 0:
        raise NumericDivergenceError(bad)
    return SilkState(pos, vel, state.time + dt * ga.shape[0])


def step(state: SilkState, params: SilkParams, grip_a, grip_b, dt: float = DEFAULT_DT) -> SilkState:
    return advance(state, params, _as_grip(grip_a)[None, :], _as_grip(grip_b)[None, :], dt)


def peak_height(state: SilkState) -> float:
    return float(state.positions[1:-1, 1].max())


def peak_node(state: SilkState) -> int:
    return int(np.argmax(state.positions[1:-1, 1])) + 1


def center_height(state: SilkState) -> float:
    return float(state.positions[state.node_count // 2, 1])


def tension_proxy(state: SilkState, params: SilkParams, side: str) -> float:
    """Spring force magnitude in the segment touching gripper ``side`` ('A' or 'B')."""
    p = state.positions
    if side == "A":
        d = p[1] - p[0]
    elif side == "B":
        d = p[-1] - p[-2]
    else:
        raise ValueError(f"side must be 'A' or 'B', got {side!r}")
    length = math.hypot(d[0], d[1])
    return abs(params.stiffness * (length - params.segment_rest_length))


def energy(state: SilkState, params: SilkParams, include_gravity: bool = True) -> float:
    """Kinetic + elastic (+ gravitational) energy of the interior nodes."""
    m = params.node_mass
    v = state.velocities[1:-1]
    kinetic = 0.5 * m * float(np.sum(v * v))
    seg = np.diff(state.positions, axis=0)
    ext = np.hypot(seg[:, 0], seg[:, 1]) - params.segment_rest_length
    elastic = 0.5 * params.stiffness * float(np.sum(ext * ext))
    total = kinetic + elastic
    if include_gravity:
        total += m * params.gravity * float(np.sum(state.positions[1:-1, 1]))
    return total


def modified_energy(state: SilkState, params: SilkParams, dt: float = DEFAULT_DT) -> float:
    """Energy plus the first-order correction conserved by semi-implicit Euler.

    Plain :func:`energy` wobbles by O(dt) from step to step even when the
    integrator dissipates; adding ``dt/2 * v . F`` (conservative forces only)
    removes that wobble, so with damping this quantity decreases every step.
    """
    p = state.positions
    seg = np.diff(p, axis=0)
    length = np.hypot(seg[:, 0], seg[:, 1])
    f = (params.stiffness * (length - params.segment_rest_length) / length)[:, None] * seg
    force = np.zeros_like(p)
    force[:-1] += f
    force[1:] -= f
    force[:, 1] -= params.node_mass * params.gravity
    v = state.velocities[1:-1]
    return energy(state, params) + 0.5 * dt * float(np.sum(v * force[1:-1]))


def detect_crest(history: Sequence, rest_level: float,
                 noise_floor: float = CREST_NOISE_FLOOR) -> Optional[CrestEvent]:
    """Crest at the middle of the three newest samples, if it is a strict local max.

    ``history`` holds ``(time, height)`` or ``(time, height, node_index)``
    tuples, oldest first.
    """
    if len(history) < 3:
        return None
    prev, mid, last = history[-3], history[-2], history[-1]
    h = mid[1]
    if h > prev[1] and h > last[1] and h > rest_level + noise_floor:
        node = int(mid[2]) if len(mid) > 2 else -1
        return CrestEvent(time=float(mid[0]), node_index=node, height=float(h))
    return None


RANDOMIZED_FIELDS = ("total_mass", "damping", "air_drag")


def randomize_params(base: SilkParams, ranges: Mapping[str, float],
                     rng: np.random.Generator) -> SilkParams:
    """Scale mass, damping and drag by independent log-uniform factors.

    A span ``s`` draws the factor from ``[1/s, s]`` uniformly in log space.
    Fields missing from ``ranges`` are treated as span 1.
    """
    for name, span in ranges.items():
        if name not in RANDOMIZED_FIELDS:
            raise InvalidParameterError(f"cannot randomize {name!r}; allowed: {RANDOMIZED_FIELDS}")
        if not span >= 1.0:
            raise InvalidParameterError(f"span for {name} must be >= 1, got {span!r}")
    changes = {}
    for name in RANDOMIZED_FIELDS:
        span = float(ranges.get(name, 1.0))
        # draw even for span 1 so the stream does not depend on which fields vary
        u = rng.uniform(-1.0, 1.0)
        if span == 1.0:
            continue
        changes[name] = getattr(base, name) * math.exp(u * math.log(span))
    return replace(base, **changes)
