import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scooptoss import rewards as rw
from scooptoss import sim
from scooptoss.envs import Curriculum, Mode, TaskEnv, reset
from scooptoss.errors import ConfigError
from scooptoss.rewards import (RegularizationInputs, RewardWeights, ablate,
                               approach_reward, load_bonus, meta_reward,
                               regularization, scoop_toss_reward, toss_reward)

W = RewardWeights()
ZERO5 = (0.0,) * 5


def make_reg(dof_accel=ZERO5, action_delta=ZERO5, effort=ZERO5):
    return RegularizationInputs(dof_accel, np.asarray(action_delta), effort)


def test_weight_defaults_exact():
    assert (W.w1, W.w2, W.b_load) == (30.0, 4.0, 100.0)
    assert (W.w3, W.w4, W.w5, W.v_des) == (3.5, 1.0, 1.0, 0.3)
    assert W.reg_scoop == (-1e-3, -1e-4, -3e-5)
    assert W.reg_approach == (-1e-2, -3e-3, -1e-5)
    assert W.meta_bonus_unit == 100.0


def test_weight_validation():
    with pytest.raises(ConfigError):
        RewardWeights(w1=-1.0)
    with pytest.raises(ConfigError):
        RewardWeights(reg_scoop=(0.1, -1e-4, -3e-5))


# --- toss reward -------------------------------------------------------------

def test_toss_zero_height_annihilates():
    for d in (0.0, 0.3, 2.0):
        assert toss_reward(0.0, d, W) == 0.0


def test_toss_hand_values():
    assert toss_reward(0.5, 0.0, W) == pytest.approx(15.0, abs=1e-9)
    assert toss_reward(0.5, 0.25, W) == pytest.approx(5.5181916175716345,
                                                      abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(h=st.floats(0.01, 2.0), d1=st.floats(0.0, 3.0), dd=st.floats(0.01, 2.0))
def test_toss_strictly_decreasing_in_distance(h, d1, dd):
    assert toss_reward(h, d1 + dd, W) < toss_reward(h, d1, W)


@settings(max_examples=60, deadline=None)
@given(h=st.floats(0.01, 2.0), d=st.floats(0.0, 3.0))
def test_toss_linear_in_height(h, d):
    r1, r2 = toss_reward(h, d, W), toss_reward(2 * h, d, W)
    assert r2 / r1 == pytest.approx(2.0, rel=1e-12)


# --- load bonus / regularization ----------------------------------------------

def test_load_bonus_values():
    assert load_bonus(True, W) == 100.0
    assert load_bonus(False, W) == 0.0


def test_regularization_hand_values():
    assert regularization(make_reg(), W.reg_scoop) == 0.0
    assert regularization(make_reg(dof_accel=(1, 0, 0, 0, 0)),
                          W.reg_scoop) == pytest.approx(-1e-3, abs=1e-12)
    assert regularization(make_reg(action_delta=(2, 0, 0, 0, 0)),
                          W.reg_approach) == pytest.approx(-0.012, abs=1e-12)


def test_regularization_never_positive(rng):
    for _ in range(200):
        inp = make_reg(tuple(rng.normal(size=5)), rng.normal(size=5),
                       tuple(rng.normal(size=5)))
        assert regularization(inp, W.reg_scoop) <= 0.0
        assert regularization(inp, W.reg_approach) <= 0.0


# --- composed episode rewards ---------------------------------------------------

def scoop_ep():
    ep = reset(Mode.SCOOP_TOSS, Curriculum(), np.random.default_rng(0))
    ep.reg = make_reg()
    return ep


def test_scoop_toss_reward_composition():
    ep = scoop_ep()
    obj = ep.world.objects[0]
    tx, ty, tz = sim.tray_floor_center(ep.world)
    d = math.sqrt((obj.x - tx) ** 2 + (obj.y - ty) ** 2 + (obj.z - tz) ** 2)
    expected = 30.0 * obj.z * math.exp(-4.0 * d)
    assert scoop_toss_reward(ep, W) == pytest.approx(expected, abs=1e-9)
    ep.load_events = 1
    assert scoop_toss_reward(ep, W) == pytest.approx(expected + 100.0, abs=1e-9)


def test_pure_idle_reward_is_zero_regularization():
    ep = scoop_ep()
    obj = ep.world.objects[0]
    obj.x, obj.y, obj.z = 50.0, 50.0, 0.0  # kill the toss term
    assert scoop_toss_reward(ep, W) == pytest.approx(0.0, abs=1e-12)


def approach_ep(vx=0.0, yaw=0.0, target=(2.0, 0.0)):
    ep = reset(Mode.APPROACH, None, np.random.default_rng(0))
    ep.world.robot.vx = vx
    ep.world.robot.yaw = yaw
    sim.refresh_basin_state(ep.world)
    # target measured from the scoop so the direction is exact
    bx, by, _ = sim.basin_position(ep.world)
    ep.approach_target = (bx + target[0], by + target[1], 0.0)
    ep.reg = make_reg()
    return ep


def test_approach_reward_hand_values():
    # aligned at exactly v_des with perfect heading
    ep = approach_ep(vx=0.3)
    assert approach_reward(ep, W) == pytest.approx(2.05, abs=1e-9)
    # above the clip: first term saturates at w3 * v_des
    ep = approach_ep(vx=1.0)
    assert approach_reward(ep, W) == pytest.approx(2.05, abs=1e-9)
    # at rest, heading 90 degrees off
    ep = approach_ep(vx=0.0, target=(0.0, 2.0))
    assert approach_reward(ep, W) == pytest.approx(
        math.exp(-math.pi / 2), abs=1e-9)
    assert math.exp(-math.pi / 2) == pytest.approx(0.20787957635076193)


def test_approach_clip_invariance_above_vdes(rng):
    vals = []
    for v in (0.3, 0.5, 1.0, 1.5):
        vals.append(approach_reward(approach_ep(vx=v), W))
    assert all(v == pytest.approx(vals[0], abs=1e-12) for v in vals)


def test_approach_alignment_max_at_zero_error():
    best = approach_reward(approach_ep(), W)
    for ang in (0.3, -0.4, 1.0, 3.0):
        ep = approach_ep(yaw=0.0, target=(2 * math.cos(ang), 2 * math.sin(ang)))
        assert approach_reward(ep, W) <= best
    assert best == pytest.approx(1.0, abs=1e-9)  # w4 exactly at zero error


def test_approach_backward_motion_penalized():
    assert approach_reward(approach_ep(vx=-1.0), W) < \
        approach_reward(approach_ep(vx=0.0), W)


def test_approach_degenerate_distance_uses_previous_heading():
    ep = approach_ep()
    ep.last_heading_err = 0.5
    bx, by, _ = sim.basin_position(ep.world)
    ep.approach_target = (bx, by, 0.0)
    expected = 1.0 * math.exp(-abs(0.5))
    assert approach_reward(ep, W) == pytest.approx(expected, abs=1e-9)


def test_approach_yaw_error_wraps():
    # target dead ahead but yaw of 2*pi - 0.1: wrapped error is 0.1, not 6.18
    ep = approach_ep(yaw=0.0)
    ep.world.robot.yaw = -0.1
    sim.refresh_basin_state(ep.world)
    bx, by, _ = sim.basin_position(ep.world)
    ep.approach_target = (bx + 2.0, by, 0.0)
    r = approach_reward(ep, W)
    assert r == pytest.approx(math.exp(-0.1), abs=1e-6)


# --- meta reward ---------------------------------------------------------------

def meta_ep(n_loaded, load_events):
    ep = reset(Mode.META, None, np.random.default_rng(0))
    ep.reg = make_reg()
    obj = ep.world.objects[ep.target_index]
    obj.x, obj.y, obj.z = 50.0, 50.0, 0.0  # isolate the bonus
    ep.n_loaded = n_loaded
    ep.load_events = load_events
    return ep


def test_meta_bonus_scales_with_count():
    assert meta_reward(meta_ep(1, 1), W) == pytest.approx(100.0, abs=1e-9)
    assert meta_reward(meta_ep(3, 1), W) == pytest.approx(300.0, abs=1e-9)
    assert meta_reward(meta_ep(0, 0), W) == pytest.approx(0.0, abs=1e-12)
    # two entries on one step: pays 100*(k-1) + 100*k
    assert meta_reward(meta_ep(3, 2), W) == pytest.approx(500.0, abs=1e-9)


def test_meta_first_load_matches_single_object_bonus():
    assert meta_reward(meta_ep(1, 1), W) == pytest.approx(
        load_bonus(True, W), abs=1e-9)


def test_meta_trace_equals_scoop_toss_trace_with_one_object(rng):
    cur = Curriculum(radius=0.3, time_limit=20.0)
    st_env = TaskEnv(Mode.SCOOP_TOSS, seed=9, curriculum=cur)
    mt_env = TaskEnv(Mode.META, seed=9, n_objects=1)
    st_env.reset()
    mt_env.reset()
    # force identical object placement
    src, dst = st_env.ep.world.objects[0], mt_env.ep.world.objects[0]
    dst.x, dst.y, dst.z, dst.handle_yaw = src.x, src.y, src.z, src.handle_yaw
    for _ in range(200):
        a = np.asarray(rng.uniform(-1, 1, 5))
        _, r1, d1, _ = st_env.step(a)
        _, r2, d2, _ = mt_env.step(a)
        assert r2 == pytest.approx(r1, abs=1e-12)
        if d1 or d2:
            break


# --- ablations -----------------------------------------------------------------

def test_ablation_no_load_bonus():
    w = ablate(W, "NoLoadBonus")
    assert load_bonus(True, w) == 0.0


def test_ablation_no_height():
    w = ablate(W, "NoHeight")
    assert toss_reward(0.0, 0.0, w) == pytest.approx(30.0, abs=1e-9)


def test_ablation_no_expdist():
    w = ablate(W, "NoExpDist")
    assert toss_reward(0.5, 9.0, w) == pytest.approx(15.0, abs=1e-9)


def test_ablation_no_extra_bonus_flat():
    w = ablate(W, "NoExtraBonus")
    assert meta_reward(meta_ep(3, 1), w) == pytest.approx(100.0, abs=1e-9)


def test_ablation_unknown_variant():
    with pytest.raises(ConfigError):
        ablate(W, "NoGravity")
