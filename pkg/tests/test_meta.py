import numpy as np
import pytest

from scooptoss.envs import Mode, OBS_DIM, ACT_DIM, NoTargetError, TaskEnv
from scooptoss.errors import CheckpointError
from scooptoss.meta import (APPROACH_ID, SCOOP_TOSS_ID, MetaController,
                            load_controller, meta_step, select_expert)
from scooptoss.nets import PolicyNet, save_checkpoint
from scooptoss.sim import Phase


def make_ctrl(force=None, seed=0, dtype=np.float64):
    meta_net = PolicyNet(OBS_DIM, 2, kind="categorical", seed=seed, dtype=dtype)
    experts = (PolicyNet(OBS_DIM, ACT_DIM, seed=seed + 1, dtype=dtype),
               PolicyNet(OBS_DIM, ACT_DIM, seed=seed + 2, dtype=dtype))
    return MetaController(meta_net, experts, force_expert=force)


def set_logits(ctrl, w_row):
    """Zero the selector net except an output bias, pinning its logits."""
    for p in ctrl.meta_net.actor.parameters():
        p[...] = 0.0
    ctrl.meta_net.actor.biases[-1][...] = w_row


def test_select_argmax_and_tiebreak():
    ctrl = make_ctrl()
    obs = np.zeros(OBS_DIM)
    set_logits(ctrl, [np.log(0.7), np.log(0.3)])
    assert select_expert(ctrl, obs, mode="eval") == SCOOP_TOSS_ID
    set_logits(ctrl, [0.0, 0.0])  # exact tie resolves to scoop-toss
    assert select_expert(ctrl, obs, mode="eval") == SCOOP_TOSS_ID
    set_logits(ctrl, [-1.0, 2.0])
    assert select_expert(ctrl, obs, mode="eval") == APPROACH_ID


def test_logit_shift_invariance():
    ctrl = make_ctrl()
    obs = np.zeros(OBS_DIM)
    set_logits(ctrl, [0.4, -0.9])
    a = select_expert(ctrl, obs, mode="eval")
    set_logits(ctrl, [0.4 + 123.0, -0.9 + 123.0])
    assert select_expert(ctrl, obs, mode="eval") == a


def test_switch_count_tracks_changes():
    ctrl = make_ctrl()
    obs = np.zeros(OBS_DIM)
    seq = [(0.0, 1.0), (0.0, 1.0), (1.0, 0.0), (0.0, 1.0), (0.0, 1.0)]
    for row in seq:
        set_logits(ctrl, row)
        select_expert(ctrl, obs, mode="eval")
    assert ctrl.switch_count == 2  # A->S and S->A


def test_train_mode_samples_with_rng():
    ctrl = make_ctrl()
    obs = np.zeros(OBS_DIM)
    set_logits(ctrl, [0.0, 0.0])
    rng = np.random.default_rng(0)
    picks = {select_expert(ctrl, obs, mode="train", rng=rng)
             for _ in range(50)}
    assert picks == {0, 1}


def test_mismatched_layouts_rejected(tmp_path):
    meta_net = PolicyNet(OBS_DIM, 2, kind="categorical", seed=0)
    bad_expert = PolicyNet(10, ACT_DIM, seed=1)
    good = PolicyNet(OBS_DIM, ACT_DIM, seed=2)
    with pytest.raises(CheckpointError):
        MetaController(meta_net, (bad_expert, good))
    # and via the three-checkpoint loader
    mp, sp, ap = (tmp_path / n for n in ("m.bin", "s.bin", "a.bin"))
    save_checkpoint(meta_net, mp)
    save_checkpoint(bad_expert, sp)
    save_checkpoint(good, ap)
    with pytest.raises(CheckpointError):
        load_controller(mp, sp, ap)


def test_pinned_controller_reproduces_standalone_trajectory():
    ctrl = make_ctrl(force=APPROACH_ID)
    expert = ctrl.experts[APPROACH_ID]

    env_a = TaskEnv(Mode.META, seed=77, n_objects=3, meta_time_limit=4.0)
    env_b = TaskEnv(Mode.META, seed=77, n_objects=3, meta_time_limit=4.0)
    env_a.reset()
    env_b.reset()
    from scooptoss.envs import build_observation
    for _ in range(200):
        _, rec = meta_step(ctrl, env_a)
        assert rec["selection"] == APPROACH_ID
        obs_b = build_observation(env_b.ep)
        act_b = expert.mean_action(obs_b[None])[0]
        _, _, done_b, _ = env_b.step(act_b)
        ra, rb = env_a.ep.world.robot, env_b.ep.world.robot
        assert (ra.x, ra.y, ra.yaw, ra.vx, ra.vy, ra.scoop_height,
                ra.scoop_pitch) == (rb.x, rb.y, rb.yaw, rb.vx, rb.vy,
                                    rb.scoop_height, rb.scoop_pitch)
        for oa, ob in zip(env_a.ep.world.objects, env_b.ep.world.objects):
            assert (oa.x, oa.y, oa.z, oa.phase) == (ob.x, ob.y, ob.z, ob.phase)
        if rec["done"] or done_b:
            assert rec["done"] and done_b
            break


def test_meta_step_signals_episode_end_when_all_loaded():
    ctrl = make_ctrl(force=SCOOP_TOSS_ID)
    env = TaskEnv(Mode.META, seed=3, n_objects=2)
    env.reset()
    for o in env.ep.world.objects:
        o.phase = Phase.LOADED
    env.ep.n_loaded = 2
    with pytest.raises(NoTargetError):
        meta_step(ctrl, env)


def test_selection_total_every_step():
    ctrl = make_ctrl()
    env = TaskEnv(Mode.META, seed=5, n_objects=2, meta_time_limit=2.0)
    env.reset()
    selections = []
    for _ in range(100):
        _, rec = meta_step(ctrl, env)
        selections.append(rec["selection"])
        if rec["done"]:
            break
    assert all(s in (0, 1) for s in selections)
    changes = sum(1 for a, b in zip(selections, selections[1:]) if a != b)
    assert ctrl.switch_count == changes
