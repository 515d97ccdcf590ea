import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from silkstage.arms import ArmState, MotionPrimitive
from silkstage.config import StageConfig
from silkstage.errors import InvalidPolicyError
from silkstage.policy import (DEFAULT_BOUNDS, FEATURES, FIELDS, NO_CREST_AGE, ConstantPolicy, Cooperator,
                              Jitterer, LinearPolicy, Observation, Policy, PolicyParams, Rival, Snapshot, act,
                              load_params, observe, policy_from_spec, save_params, scripted)
from silkstage.stage import finite_difference_trend, run_episode

from conftest import simulated

floats = st.floats(-50, 50)
obs_strategy = st.builds(
    Observation, floats, floats, st.tuples(floats, floats), st.tuples(floats, floats), st.floats(0, 50),
    st.tuples(floats, floats), st.tuples(floats, floats), st.floats(0, NO_CREST_AGE))
weights = st.lists(st.floats(-20, 20), min_size=len(FIELDS) * len(FEATURES),
                   max_size=len(FIELDS) * len(FEATURES))

OBS = Observation(1.05, 0.1, (-0.6, 1.0), (0.0, 0.2), 0.3, (0.6, 1.1), (0.0, -0.1), 0.4)


def snapshot(partner_grip=(0.6, 1.0), partner_vel=(0.0, 0.0), exchanged=None):
    arms = {"A": ArmState((-0.6, 1.0)), "B": ArmState(partner_grip, grip_velocity=partner_vel)}
    if exchanged is None:
        exchanged = {s: (arms[s].grip, arms[s].grip_velocity) for s in "AB"}
    return Snapshot(2.0, 0.97, 0.0, arms, {"A": 0.3, "B": 0.3}, exchanged, 1.5)


# ---------------------------------------------------------------- observation


def test_fresh_exchange_equals_truth():
    obs = observe(snapshot((0.6, 1.2), (0.0, 0.5)), "A")
    assert obs.partner_grip == (0.6, 1.2) and obs.partner_velocity == (0.0, 0.5)
    assert obs.last_crest_age == pytest.approx(0.5)


def test_partner_move_after_exchange_is_invisible():
    snap = snapshot()
    moved = dataclasses.replace(snap, arms={"A": snap.arms["A"],
                                            "B": ArmState((0.6, 1.1), grip_velocity=(0.0, 1.2))})
    assert observe(moved, "A") == observe(snap, "A")


def test_no_crest_sentinel():
    snap = dataclasses.replace(snapshot(), last_crest_time=None)
    assert observe(snap, "B").last_crest_age == NO_CREST_AGE


def test_linear_rise_trend():
    # oracle: the exact slope of a line sampled at the control rate
    t = np.arange(11) * 0.02
    assert finite_difference_trend(list(0.9 + 0.1 * t), 0.02) == pytest.approx(0.1, abs=1e-12)


class Recorder(Policy):
    name = "recorder"

    def __init__(self, inner):
        self.inner, self.seen = inner, []

    def reset(self, seed=None):
        self.inner.reset(seed)

    def act(self, obs):
        self.seen.append(obs)
        return self.inner.act(obs)


def test_partner_fields_change_only_at_exchange_ticks():
    cfg = StageConfig(duration=6.0)
    rec_a = Recorder(ConstantPolicy())
    trace = run_episode(cfg, rec_a, Jitterer(seed=3))
    # the zero-amplitude arm is idle every tick, so it observes every tick
    assert len(rec_a.seen) == len(trace)
    every = cfg.exchange_ticks
    for k in range(1, len(trace)):
        if k % every:
            assert rec_a.seen[k].partner_grip == rec_a.seen[k - 1].partner_grip
    truth = [(r["grip_y_b"], r["grip_z_b"]) for r in trace.records]
    assert any(rec_a.seen[k].partner_grip != truth[k] for k in range(len(trace)))


# ---------------------------------------------------------------- decode


def test_zero_weights_decode_to_mid_bounds():
    p = act(PolicyParams.zeros(), OBS)
    assert (p.lift_amplitude, p.snap_phase, p.dwell) == tuple((lo + hi) / 2 for lo, hi in DEFAULT_BOUNDS)


def test_decode_deterministic():
    params = PolicyParams(np.random.default_rng(0).standard_normal((3, len(FEATURES))))
    assert act(params, OBS) == act(params, OBS)


def test_non_finite_weights_rejected():
    w = np.zeros((3, len(FEATURES)))
    w[1, 2] = np.nan
    with pytest.raises(InvalidPolicyError):
        act(PolicyParams(w), OBS)


@given(weights, obs_strategy)
def test_decoded_primitive_within_bounds(w, obs):
    p = act(PolicyParams(np.array(w)), obs)
    for value, (lo, hi) in zip((p.lift_amplitude, p.snap_phase, p.dwell), DEFAULT_BOUNDS):
        assert lo <= value <= hi


@given(weights, st.integers(0, len(FIELDS) * len(FEATURES) - 1))
def test_decode_continuous_in_each_weight(w, index):
    base = np.array(w)
    ref = act(PolicyParams(base), OBS)
    deltas = []
    for eps in (1e-2, 1e-4, 1e-6, 1e-8):
        v = base.copy()
        v[index] += eps
        p = act(PolicyParams(v), OBS)
        deltas.append(max(abs(p.lift_amplitude - ref.lift_amplitude), abs(p.snap_phase - ref.snap_phase),
                          abs(p.dwell - ref.dwell)))
    assert deltas[-1] <= 1e-6
    assert all(b <= a + 1e-15 for a, b in zip(deltas, deltas[1:]))


def test_params_are_read_only():
    params = PolicyParams.zeros()
    with pytest.raises(ValueError):
        params.weights[0, 0] = 1.0


# ---------------------------------------------------------------- files


def test_param_file_round_trip(tmp_path):
    params = PolicyParams(np.random.default_rng(5).standard_normal((3, len(FEATURES))))
    save_params(params, tmp_path / "p.txt")
    assert load_params(tmp_path / "p.txt") == params
    head = (tmp_path / "p.txt").read_text().splitlines()
    assert head[0].startswith("silkstage-policy/1 ") and len(head) == 1 + params.weights.size


def test_param_file_wrong_count(tmp_path):
    save_params(PolicyParams.zeros(), tmp_path / "p.txt")
    lines = (tmp_path / "p.txt").read_text().splitlines()
    (tmp_path / "q.txt").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(InvalidPolicyError):
        load_params(tmp_path / "q.txt")


def test_param_file_missing_header(tmp_path):
    (tmp_path / "p.txt").write_text("0.0\n")
    with pytest.raises(InvalidPolicyError):
        load_params(tmp_path / "p.txt")


def test_policy_specs(tmp_path):
    assert isinstance(policy_from_spec("scripted:rival"), Rival)
    assert isinstance(policy_from_spec("idle"), ConstantPolicy)
    save_params(PolicyParams.zeros(), tmp_path / "p.txt")
    assert isinstance(policy_from_spec(f"file:{tmp_path / 'p.txt'}"), LinearPolicy)
    with pytest.raises(ValueError):
        policy_from_spec("magic:thing")
    with pytest.raises(ValueError):
        policy_from_spec("scripted:dancer")


# ---------------------------------------------------------------- scripted archetypes


def test_cooperator_waits_for_settled_sheet():
    coop = Cooperator()
    assert coop.act(dataclasses.replace(OBS, last_crest_age=0.1)).lift_amplitude == 0.0
    still = dataclasses.replace(OBS, partner_velocity=(0.0, 0.0), last_crest_age=1.0)
    assert coop.act(still) == MotionPrimitive(0.25, 0.0, 0.0)


def test_rival_offsets_are_seeded():
    settled = dataclasses.replace(OBS, last_crest_age=1.0)
    a, b = Rival(seed=4).act(settled), Rival(seed=4).act(settled)
    assert a == b and 0.26 <= a.dwell <= 0.8


def test_jitterer_errors_shrink():
    j = Jitterer(seed=0)
    settled = dataclasses.replace(OBS, partner_velocity=(0.0, 0.0), last_crest_age=1.0)
    errs = np.array([j.act(settled).dwell for _ in range(60)])
    assert errs[-20:].mean() < errs[:20].mean()


def test_scripted_kinds():
    assert isinstance(scripted("cooperator"), Cooperator)
    assert isinstance(scripted("jitterer", seed=1), Jitterer)


def test_cooperator_pair_stays_in_step(coop_trace):
    active = [r for r in coop_trace.records if r["timing_active"]]
    assert active
    assert sum(r["relation"] == "InStep" for r in active) >= 0.8 * len(active)


def test_cooperator_vs_rival_splits():
    assert "Split" in simulated("cooperator", "rival").column("relation")


def test_jitterer_relocks():
    lag = np.abs(simulated("jitterer", "cooperator").column("lag"))
    assert lag[-500:].mean() < lag[:500].mean()


def test_params_unchanged_by_an_episode():
    params = PolicyParams(np.random.default_rng(2).standard_normal((3, len(FEATURES))))
    before = PolicyParams(params.weights.copy())
    run_episode(StageConfig(duration=5.0), LinearPolicy(params), Cooperator())
    assert params == before
