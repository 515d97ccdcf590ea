"""A short cross-entropy run, then the trained arm scored on unseen environments.

The full acceptance run (population 32, 40 generations) takes about five
minutes on one core; this one uses 8 generations of 16. Training episodes are
8 s long, so the comparison uses ten fresh randomized 8 s environments beside
a cooperator.

    python3 demos/short_training.py
"""
import numpy as np

from silkstage import CemConfig, PolicyParams, StageConfig, train_cem
from silkstage.training import DEFAULT_RANGES, episode_reward, training_environments

best, curve = train_cem(CemConfig(population=16, generations=8))
for row in curve.rows:
    print(f"generation {row.generation}: mean {row.mean_reward:8.2f}  best so far {row.best_so_far:8.2f}")

# a different seed than training, so these environments were never seen
held_out = training_environments(StageConfig(), DEFAULT_RANGES, 10, seed=99, duration=8.0)
for title, params in [("untrained", PolicyParams.zeros()), ("trained", best)]:
    rewards = [episode_reward(params, env) for env in held_out]
    print(f"{title:>9}: mean reward {np.mean(rewards):6.2f} over {len(rewards)} held-out episodes")
