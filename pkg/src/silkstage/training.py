"""Cross-entropy search over linear policy weights, with domain randomization.

The trained arm plays seat A against a frozen partner policy in seat B. Each
candidate is scored by its summed per-tick reward, averaged over a fixed set
of randomized environments drawn once per training run. Reusing the same
environments for every generation makes candidates directly comparable, and
carrying the best-so-far weights into each population keeps the best-reward
curve monotone.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Mapping, Optional, Tuple

import numpy as np

from . import silk
from .config import StageConfig
from .errors import InvalidParameterError, TrainingFailedError
from .policy import Cooperator, LinearPolicy, Policy, PolicyParams
from .stage import run_episode
from .weather import Preset

log = logging.getLogger(__name__)

DEFAULT_RANGES = {"total_mass": 1.3, "damping": 1.5, "air_drag": 1.5}


@dataclass(frozen=True)
class CemConfig:
    population: int = 32
    elite_fraction: float = 0.25
    generations: int = 40
    init_std: float = 1.0
    episodes_per_candidate: int = 4
    seed: int = 7
    episode_duration: float = 8.0
    min_std: float = 0.05
    workers: int = 1

    def __post_init__(self):
        if self.population < 1 or self.generations < 0 or self.episodes_per_candidate < 1:
            raise InvalidParameterError("population and episodes_per_candidate must be >= 1, "
                                        "generations >= 0")
        if not 0.0 < self.elite_fraction <= 1.0:
            raise InvalidParameterError("elite_fraction must be in (0, 1]")
        if self.n_elite < 1:
            raise InvalidParameterError("population x elite_fraction must be >= 1")
        if not (self.init_std > 0 and self.min_std >= 0 and self.episode_duration > 0):
            raise InvalidParameterError("init_std and episode_duration must be positive")
        if self.workers < 1:
            raise InvalidParameterError("workers must be >= 1")

    @property
    def n_elite(self) -> int:
        return int(math.floor(self.population * self.elite_fraction + 1e-9))


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    mean_reward: float
    max_reward: float
    elite_mean: float
    best_so_far: float
    std_mean: float


@dataclass
class LearningCurve:
    rows: List[GenerationStats] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    @property
    def mean(self) -> np.ndarray:
        return np.array([r.mean_reward for r in self.rows])

    @property
    def max(self) -> np.ndarray:
        return np.array([r.max_reward for r in self.rows])

    @property
    def best(self) -> np.ndarray:
        return np.array([r.best_so_far for r in self.rows])

    def write_csv(self, path) -> None:
        names = [f for f in GenerationStats.__dataclass_fields__]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for r in self.rows:
                w.writerow([getattr(r, n) if isinstance(getattr(r, n), int) else repr(getattr(r, n))
                            for n in names])


def training_environments(env: StageConfig, ranges: Mapping[str, float], n: int,
                          seed: int, duration: float) -> List[StageConfig]:
    """``n`` randomized copies of ``env``, each with its own silk and camera seed."""
    ss = np.random.SeedSequence(seed)
    out = []
    for child in ss.spawn(n):
        rng = np.random.default_rng(child)
        params = silk.randomize_params(env.silk, ranges, rng)
        out.append(env.replace(silk=params, duration=duration,
                               seed=int(rng.integers(0, 2 ** 31 - 1))))
    return out


def episode_reward(params: PolicyParams, env: StageConfig,
                   partner: Callable[[], Policy] = Cooperator) -> float:
    """Summed reward of seat A; NaN if the episode diverged."""
    trace = run_episode(env, LinearPolicy(params), partner(), record=False)
    if trace.error is not None:
        return math.nan
    return trace.totals["reward_a"]


def _score(args) -> float:
    vec, envs, partner, template = args
    params = PolicyParams(vec, bounds=template.bounds, scales=template.scales)
    rewards = [episode_reward(params, env, partner) for env in envs]
    return float(np.mean(rewards))


def train_cem(cfg: CemConfig = CemConfig(), env: StageConfig = StageConfig(),
              ranges: Optional[Mapping[str, float]] = None,
              partner: Callable[[], Policy] = Cooperator,
              init: Optional[PolicyParams] = None) -> Tuple[PolicyParams, LearningCurve]:
    """Fit a linear policy for seat A. Deterministic given ``cfg.seed``.

    Returns the best weights seen and one :class:`LearningCurve` row per
    generation. ``partner`` must be a picklable zero-argument factory when
    ``cfg.workers > 1``.
    """
    ranges = DEFAULT_RANGES if ranges is None else ranges
    template = init if init is not None else PolicyParams.zeros()
    mean = template.vector
    curve = LearningCurve()
    if cfg.generations == 0:
        return template, curve

    envs = training_environments(env, ranges, cfg.episodes_per_candidate, cfg.seed,
                                 cfg.episode_duration)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[1])
    std = np.full(mean.size, cfg.init_std)
    best_vec, best_score = mean.copy(), -math.inf
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for gen in range(cfg.generations):
            pop = mean + std * rng.standard_normal((cfg.population, mean.size))
            # elitism: slot 0 re-enters the best weights so far (the mean in generation 0)
            pop[0] = best_vec if gen > 0 else mean
            jobs = [(v, envs, partner, template) for v in pop]
            scores = np.array(list(pool.map(_score, jobs)) if pool else [_score(j) for j in jobs])
            finite = np.isfinite(scores)
            if not finite.any():
                raise TrainingFailedError(gen)
            ranked = np.where(finite, scores, -np.inf)
            # stable sort so ties resolve by population index
            order = np.argsort(-ranked, kind="stable")
            elite = pop[order[:cfg.n_elite]]
            if ranked[order[0]] > best_score:
                best_score, best_vec = float(ranked[order[0]]), pop[order[0]].copy()
            mean = elite.mean(axis=0)
            std = np.maximum(elite.std(axis=0), cfg.min_std)
            curve.rows.append(GenerationStats(
                generation=gen, mean_reward=float(scores[finite].mean()),
                max_reward=float(ranked[order[0]]),
                elite_mean=float(ranked[order[:cfg.n_elite]].mean()),
                best_so_far=best_score, std_mean=float(std.mean())))
            log.info("generation %d: mean %.3f max %.3f best %.3f", gen,
                     curve.rows[-1].mean_reward, curve.rows[-1].max_reward, best_score)
    finally:
        if pool is not None:
            pool.shutdown()
    best = PolicyParams(best_vec, bounds=template.bounds, scales=template.scales)
    return best, curve


# --------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvaluationSummary:
    ticks: int
    peak_height: float
    records: int
    credit_a: float
    credit_b: float
    spend_a: float
    spend_b: float
    reward_a: float
    reward_b: float
    preset_occupancy: Mapping[str, float]
    safety_events: int
    diverged: bool


def evaluate(policy_a: Policy, policy_b: Policy, env: StageConfig = StageConfig(),
             seed: Optional[int] = None, duration: Optional[float] = None) -> EvaluationSummary:
    """Run one episode and aggregate its trace."""
    if duration is not None and not duration > 0:
        raise InvalidParameterError("duration must be > 0")
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if duration is not None:
        changes["duration"] = duration
    cfg = env.replace(**changes) if changes else env
    trace = run_episode(cfg, policy_a, policy_b)
    presets = trace.column("preset")
    n = len(presets)
    occupancy = {p.value: (presets.count(p.value) / n if n else 0.0) for p in Preset}
    t = trace.totals
    return EvaluationSummary(
        ticks=n, peak_height=max(trace.column("peak_meas"), default=math.nan),
        records=t["records"], credit_a=t["credit_a"], credit_b=t["credit_b"],
        spend_a=t["spend_a"], spend_b=t["spend_b"], reward_a=t["reward_a"], reward_b=t["reward_b"],
        preset_occupancy=occupancy, safety_events=t["safety_events"],
        diverged=trace.error is not None)
