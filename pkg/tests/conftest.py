import functools

import pytest
from hypothesis import HealthCheck, settings

from silkstage.arms import ArmLimits
from silkstage.config import StageConfig
from silkstage.policy import scripted
from silkstage.stage import run_episode

settings.register_profile("repo", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

LOW_TENSION = 0.9


@functools.lru_cache(maxsize=None)
def simulated(kind_a: str, kind_b: str, duration: float = 60.0, seed: int = 1, low_tension: bool = False):
    """Cached scripted-pair traces shared across test modules."""
    cfg = StageConfig(duration=duration, seed=seed)
    if low_tension:
        cfg = cfg.replace(limits_a=ArmLimits(tension_max=LOW_TENSION),
                          limits_b=ArmLimits(tension_max=LOW_TENSION))
    return run_episode(cfg, scripted(kind_a), scripted(kind_b))


@pytest.fixture(scope="session")
def coop_trace():
    return simulated("cooperator", "cooperator")


@pytest.fixture(scope="session")
def rival_trace():
    return simulated("rival", "rival")


@pytest.fixture(scope="session")
def whiplash_trace():
    return simulated("rival", "rival", low_tension=True)


# criterion number -> (title, passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
