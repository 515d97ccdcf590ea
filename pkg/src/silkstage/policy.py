"""Arm policies over present-tense observations.

A policy maps an :class:`Observation` to a :class:`MotionPrimitive`. Three
scripted archetypes reproduce the recurring behaviours seen on stage; the
parametric :class:`LinearPolicy` is the one the trainer tunes.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from .arms import ArmState, MotionPrimitive
from .errors import InvalidPolicyError

NO_CREST_AGE = 1e3
POLICY_FILE_VERSION = "silkstage-policy/1"

FEATURES = ("bias", "height", "height_trend", "own_z", "own_vz", "tension",
            "partner_z", "partner_vz", "crest_age")
FIELDS = ("lift_amplitude", "snap_phase", "dwell")


@dataclass(frozen=True)
class Observation:
    height: float
    height_trend: float
    own_grip: Tuple[float, float]
    own_velocity: Tuple[float, float]
    tension: float
    partner_grip: Tuple[float, float]
    partner_velocity: Tuple[float, float]
    last_crest_age: float = NO_CREST_AGE


@dataclass(frozen=True)
class Snapshot:
    """What the stage knows at one control tick, from one arm's seat.

    ``exchanged`` holds the partner pose as of the most recent exchange tick.
    """

    time: float
    height: float
    height_trend: float
    arms: dict
    tensions: dict
    exchanged: dict
    last_crest_time: Optional[float] = None


def observe(snap: Snapshot, arm: str) -> Observation:
    other = "B" if arm == "A" else "A"
    own: ArmState = snap.arms[arm]
    partner_grip, partner_vel = snap.exchanged[other]
    age = NO_CREST_AGE if snap.last_crest_time is None else snap.time - snap.last_crest_time
    return Observation(height=snap.height, height_trend=snap.height_trend,
                       own_grip=own.grip, own_velocity=own.grip_velocity,
                       tension=snap.tensions[arm], partner_grip=tuple(partner_grip),
                       partner_velocity=tuple(partner_vel), last_crest_age=age)


# --------------------------------------------------------------------------
# parametric policy


@dataclass(frozen=True)
class FeatureScales:
    height_ref: float = 1.0
    height: float = 0.3
    trend: float = 1.0
    grip_ref: float = 1.0
    grip: float = 0.3
    velocity: float = 1.5
    tension: float = 1.0
    crest_age: float = 2.0


def features(obs: Observation, s: FeatureScales = FeatureScales()) -> np.ndarray:
    return np.array([
        1.0,
        (obs.height - s.height_ref) / s.height,
        obs.height_trend / s.trend,
        (obs.own_grip[1] - s.grip_ref) / s.grip,
        obs.own_velocity[1] / s.velocity,
        obs.tension / s.tension,
        (obs.partner_grip[1] - s.grip_ref) / s.grip,
        obs.partner_velocity[1] / s.velocity,
        min(obs.last_crest_age, s.crest_age) / s.crest_age,
    ])


DEFAULT_BOUNDS = ((0.0, 0.35), (0.0, 1.2), (0.0, 1.5))


@dataclass(frozen=True)
class PolicyParams:
    """Weights of shape ``(3, len(FEATURES))``; row i drives primitive field i."""

    weights: np.ndarray
    bounds: Tuple[Tuple[float, float], ...] = DEFAULT_BOUNDS
    scales: FeatureScales = FeatureScales()

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(len(FIELDS), len(FEATURES))
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls, **kw) -> "PolicyParams":
        return cls(np.zeros((len(FIELDS), len(FEATURES))), **kw)

    @classmethod
    def from_vector(cls, vec, **kw) -> "PolicyParams":
        return cls(np.asarray(vec, dtype=float), **kw)

    @property
    def vector(self) -> np.ndarray:
        return self.weights.ravel().copy()

    def __eq__(self, other):
        if not isinstance(other, PolicyParams):
            return NotImplemented
        return (np.array_equal(self.weights, other.weights) and self.bounds == other.bounds
                and self.scales == other.scales)

    def __hash__(self):
        return hash((self.weights.tobytes(), self.bounds, self.scales))


def _squash(raw: float, lo: float, hi: float) -> float:
    # logistic; zero maps to the middle of the bounds
    if raw >= 0:
        s = 1.0 / (1.0 + math.exp(-raw))
    else:
        e = math.exp(raw)
        s = e / (1.0 + e)
    return lo + (hi - lo) * s


def act(params: PolicyParams, obs: Observation) -> MotionPrimitive:
    if not np.all(np.isfinite(params.weights)):
        raise InvalidPolicyError("policy weights must be finite")
    raw = params.weights @ features(obs, params.scales)
    vals = [_squash(float(r), lo, hi) for r, (lo, hi) in zip(raw, params.bounds)]
    return MotionPrimitive(*vals)


class Policy:
    """Base interface: ``reset`` once per episode, then ``act`` whenever idle."""

    name = "policy"

    def reset(self, seed=None) -> None:
        pass

    def act(self, obs: Observation) -> MotionPrimitive:
        raise NotImplementedError


class LinearPolicy(Policy):
    name = "linear"

    def __init__(self, params: PolicyParams):
        self.params = params

    def act(self, obs: Observation) -> MotionPrimitive:
        return act(self.params, obs)


class ConstantPolicy(Policy):
    """Always returns the same primitive. Zero amplitude gives an arm that never moves."""

    name = "constant"

    def __init__(self, primitive: MotionPrimitive = MotionPrimitive(0.0, 0.0, 0.0)):
        self.primitive = primitive

    def act(self, obs: Observation) -> MotionPrimitive:
        return self.primitive


# --------------------------------------------------------------------------
# scripted archetypes


class Kind(str, enum.Enum):
    COOPERATOR = "cooperator"
    RIVAL = "rival"
    JITTERER = "jitterer"


COOP_AMPLITUDE = 0.25
SETTLE = 0.5
PARTNER_STILL = 0.05
WAIT = MotionPrimitive(0.0, 0.0, 0.0)


def _sheet_settled(obs: Observation, settle: float) -> bool:
    return obs.last_crest_age >= settle


def _partner_still(obs: Observation) -> bool:
    return abs(obs.partner_velocity[1]) < PARTNER_STILL


class Cooperator(Policy):
    """Snap as soon as the sheet has settled and the partner is still.

    Both arms read the same crest clock, so two cooperators that are idle
    together fire on the same tick. Until then the policy returns a
    zero-amplitude primitive, which makes the stage ask again next tick.
    """

    name = Kind.COOPERATOR.value

    def __init__(self, amplitude=COOP_AMPLITUDE, settle=SETTLE):
        self.amplitude, self.settle = amplitude, settle

    def act(self, obs):
        if not (_sheet_settled(obs, self.settle) and _partner_still(obs)):
            return WAIT
        return MotionPrimitive(self.amplitude, 0.0, 0.0)


class Rival(Policy):
    """Full-stroke snaps launched a random 0.26-0.8 s after the cooperative moment."""

    name = Kind.RIVAL.value

    def __init__(self, amplitude=0.35, settle=SETTLE, offset=(0.26, 0.8), seed=None):
        self.amplitude, self.settle, self.offset = amplitude, settle, offset
        self.reset(seed)

    def reset(self, seed=None):
        self._rng = np.random.default_rng(seed)

    def act(self, obs):
        if not _sheet_settled(obs, self.settle):
            return WAIT
        return MotionPrimitive(self.amplitude, 0.0, float(self._rng.uniform(*self.offset)))


class Jitterer(Policy):
    """A cooperator that fires late by a random error shrinking geometrically per snap."""

    name = Kind.JITTERER.value

    def __init__(self, sigma0=0.3, decay=0.85, seed=None, amplitude=COOP_AMPLITUDE, settle=SETTLE):
        self.sigma0, self.decay = sigma0, decay
        self.amplitude, self.settle = amplitude, settle
        self.reset(seed)

    def reset(self, seed=None):
        self._rng = np.random.default_rng(seed)
        self._k = 0

    def act(self, obs):
        if not (_sheet_settled(obs, self.settle) and _partner_still(obs)):
            return WAIT
        err = self.sigma0 * self.decay ** self._k * abs(float(self._rng.standard_normal()))
        self._k += 1
        return MotionPrimitive(self.amplitude, 0.0, err)


def scripted(kind, seed=None) -> Policy:
    kind = Kind(kind)
    if kind is Kind.COOPERATOR:
        return Cooperator()
    if kind is Kind.RIVAL:
        return Rival(seed=seed)
    return Jitterer(seed=seed)


# --------------------------------------------------------------------------
# parameter files


def save_params(params: PolicyParams, path) -> None:
    """Header line (version + JSON metadata), then one weight per line."""
    meta = {"shape": list(params.weights.shape), "features": list(FEATURES), "fields": list(FIELDS),
            "bounds": [list(b) for b in params.bounds], "scales": params.scales.__dict__}
    lines = [f"{POLICY_FILE_VERSION} {json.dumps(meta, sort_keys=True)}"]
    lines += [repr(float(w)) for w in params.weights.ravel()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_params(path) -> PolicyParams:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith(POLICY_FILE_VERSION + " "):
        raise InvalidPolicyError(f"{path}: missing '{POLICY_FILE_VERSION}' header")
    meta = json.loads(text[0][len(POLICY_FILE_VERSION) + 1:])
    n = int(np.prod(meta["shape"]))
    body = [ln for ln in text[1:] if ln.strip()]
    if len(body) != n:
        raise InvalidPolicyError(f"{path}: expected {n} weights, found {len(body)}")
    try:
        weights = np.array([float(ln) for ln in body])
    except ValueError as exc:
        raise InvalidPolicyError(f"{path}: {exc}") from None
    return PolicyParams(weights.reshape(meta["shape"]),
                        bounds=tuple(tuple(b) for b in meta["bounds"]),
                        scales=FeatureScales(**meta["scales"]))


def policy_from_spec(spec: str) -> Policy:
    """``scripted:<kind>``, ``file:<path>`` or ``idle``."""
    if spec == "idle":
        return ConstantPolicy()
    kind, _, arg = spec.partition(":")
    if kind == "scripted":
        return scripted(arg)
    if kind == "file":
        return LinearPolicy(load_params(arg))
    raise ValueError(f"unknown policy spec {spec!r}")
