"""Acceptance gate: one test per criterion, each printing a verdict line.

Criteria that depend on trained artifacts read them from runs/ (produced by
scripts/train_pipeline.sh) and are skipped with a pointer when absent, so the
rest of the gate runs on a fresh checkout.
"""
import json
import math
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
from scipy import stats as sstats

from scooptoss import sim
from scooptoss.envs import (ACT_DIM, Curriculum, Mode, OBS_DIM, TaskEnv,
                            curriculum_update, reset)
from scooptoss.meta import APPROACH_ID, MetaController, meta_step
from scooptoss.nets import Mlp, PolicyNet
from scooptoss.ppo import compute_gae
from scooptoss.rewards import (RegularizationInputs, RewardWeights, ablate,
                               approach_reward, load_bonus, meta_reward,
                               regularization, scoop_toss_reward, toss_reward)
from scooptoss.sim import Phase, basin_position, integrate_ballistic
from scooptoss.sti import StiBuffer

from conftest import random_action, scripted_toss_action
from test_ppo import brute_force_returns

RUNS = Path(__file__).resolve().parent.parent / "runs"


@contextmanager
def verdict(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


def need(path: Path) -> Path:
    if not path.exists():
        pytest.skip(f"needs trained artifact {path} "
                    f"(run scripts/train_pipeline.sh)")
    return path


# =====================================================================
# reward oracles: hand-computed values at the published weights, 1e-9
# =====================================================================

def test_reward_oracles():
    w = RewardWeights()
    zero = RegularizationInputs((0,) * 5, np.zeros(5), (0,) * 5)
    cases = []
    # toss term
    cases += [(toss_reward(0.0, d, w), 0.0) for d in (0.0, 0.4, 2.0)]
    cases.append((toss_reward(0.5, 0.0, w), 15.0))
    cases.append((toss_reward(0.5, 0.25, w), 30 * 0.5 * math.exp(-1.0)))
    cases.append((toss_reward(1.0, 1.0, w), 30 * math.exp(-4.0)))
    cases.append((toss_reward(0.25, 0.5, w), 30 * 0.25 * math.exp(-2.0)))
    # load bonus
    cases.append((load_bonus(True, w), 100.0))
    cases.append((load_bonus(False, w), 0.0))
    # regularization
    cases.append((regularization(zero, w.reg_scoop), 0.0))
    cases.append((regularization(
        RegularizationInputs((1, 0, 0, 0, 0), np.zeros(5), (0,) * 5),
        w.reg_scoop), -1e-3))
    cases.append((regularization(
        RegularizationInputs((0,) * 5, np.array([2, 0, 0, 0, 0.]), (0,) * 5),
        w.reg_approach), -3e-3 * 4))
    cases.append((regularization(
        RegularizationInputs((1, 1, 1, 1, 1), np.ones(5), (1,) * 5),
        w.reg_scoop), 5 * (-1e-3 - 1e-4 - 3e-5)))
    # approach reward: velocity clip, alignment, wrap
    from test_rewards import approach_ep
    cases.append((approach_reward(approach_ep(vx=0.3), w), 2.05))
    cases.append((approach_reward(approach_ep(vx=1.0), w), 2.05))
    cases.append((approach_reward(approach_ep(vx=1.5), w), 2.05))
    cases.append((approach_reward(approach_ep(vx=0.0), w), 1.0))
    cases.append((approach_reward(approach_ep(vx=0.0, target=(0.0, 2.0)), w),
                  math.exp(-math.pi / 2)))
    cases.append((approach_reward(approach_ep(vx=-1.0), w),
                  3.5 * -1.0 + 1.0))
    # meta bonus: 100 * running count on load steps
    from test_rewards import meta_ep
    cases.append((meta_reward(meta_ep(1, 1), w), 100.0))
    cases.append((meta_reward(meta_ep(3, 1), w), 300.0))
    cases.append((meta_reward(meta_ep(0, 0), w), 0.0))
    cases.append((meta_reward(meta_ep(3, 1), ablate(w, "NoExtraBonus")), 100.0))
    # ablated toss forms
    cases.append((toss_reward(0.0, 0.0, ablate(w, "NoHeight")), 30.0))
    cases.append((toss_reward(0.5, 9.0, ablate(w, "NoExpDist")), 15.0))
    cases.append((load_bonus(True, ablate(w, "NoLoadBonus")), 0.0))

    with verdict("reward-oracles"):
        assert len(cases) >= 20
        for got, expected in cases:
            assert got == pytest.approx(expected, abs=1e-9)


# =====================================================================
# gradient check: analytic vs central differences, full-size nets
# =====================================================================

def test_gradient_check():
    rng = np.random.default_rng(2024)
    probes = 0
    worst = 0.0
    with verdict("gradient-check"):
        for trial in range(5):
            net = Mlp([OBS_DIM, 256, 128, 64, ACT_DIM],
                      np.random.default_rng(trial), out_gain=1.0)
            x = rng.normal(size=(6, OBS_DIM))
            mix = rng.normal(size=(6, ACT_DIM))

            def loss_fn():
                out, _ = net.forward(x)
                return float((mix * out).sum() + 0.5 * (out ** 2).sum())

            out, cache = net.forward(x)
            grads = net.backward(cache, mix + out)
            params = net.parameters()
            for _ in range(12):
                pi = int(rng.integers(len(params)))
                idx = int(rng.integers(params[pi].size))
                p = params[pi]
                orig = p.flat[idx]
                h = 1e-6
                p.flat[idx] = orig + h
                up = loss_fn()
                p.flat[idx] = orig - h
                down = loss_fn()
                p.flat[idx] = orig
                numeric = (up - down) / (2 * h)
                analytic = grads[pi].flat[idx]
                rel = abs(analytic - numeric) / max(abs(numeric), 1e-8)
                worst = max(worst, rel)
                probes += 1
        assert probes >= 50
        assert worst < 1e-4, f"worst relative error {worst:.2e}"
    print(f"  ({probes} probes, worst relative error {worst:.2e})")


# =====================================================================
# GAE closed forms vs a brute-force return calculator
# =====================================================================

def test_gae_oracles():
    rng = np.random.default_rng(7)
    with verdict("gae-oracles"):
        for _ in range(100):
            T = int(rng.integers(1, 11))
            r = rng.normal(size=T)
            v = rng.normal(size=T + 1)
            d = (rng.random(T) < 0.3).astype(float)
            gamma = float(rng.uniform(0.9, 1.0))
            # lambda = 0: exactly the one-step TD residual
            adv0, _ = compute_gae(r, v, d, gamma, 0.0)
            np.testing.assert_allclose(adv0, r + gamma * v[1:] * (1 - d)
                                       - v[:-1], atol=1e-12)
            # gamma = lambda = 1 and general gamma, lambda = 1: Monte Carlo
            for g in (1.0, gamma):
                adv1, ret1 = compute_gae(r, v, d, g, 1.0)
                np.testing.assert_allclose(
                    ret1, brute_force_returns(r, v, d, g), atol=1e-10)


# =====================================================================
# physics: apex oracle, carried exactness, phase legality, determinism
# =====================================================================

def test_physics_properties():
    rng = np.random.default_rng(99)
    with verdict("physics-apex"):
        for _ in range(100):
            v0 = float(rng.uniform(0.5, 5.0))
            z0 = float(rng.uniform(0.05, 1.0))
            obj = sim.ObjectState(z=z0, vz=v0, phase=Phase.BALLISTIC,
                                  max_height=z0, restitution=0.0)
            for _ in range(600):
                integrate_ballistic(obj, 0.02, 9.81)
                if obj.phase is Phase.GROUND:
                    break
            expected = z0 + v0 ** 2 / (2 * 9.81)
            assert abs(obj.max_height - expected) <= v0 * 0.02 + 9.81 * 4e-4

    with verdict("physics-carried-exact"):
        w = sim.make_world([sim.make_cube(0.3675, -0.12)])
        carried_steps = 0
        for _ in range(200):
            sim.step(w, scripted_toss_action(w))
            o = w.objects[0]
            if o.phase is Phase.CARRIED:
                bx, by, bz = basin_position(w)
                assert (o.x, o.y, o.z) == (bx, by, bz + o.radius)
                carried_steps += 1
        assert carried_steps > 0

    allowed = {(Phase.GROUND, Phase.CARRIED),
               (Phase.CARRIED, Phase.BALLISTIC),
               (Phase.BALLISTIC, Phase.GROUND),
               (Phase.BALLISTIC, Phase.LOADED)}
    with verdict("physics-phase-legality-1e6"):
        total = 0
        while total < 1_000_000:
            objs = [sim.make_cube(float(rng.uniform(-1, 1)),
                                  float(rng.uniform(-1, 1)))
                    for _ in range(4)]
            w = sim.make_world(objs, seed=int(rng.integers(1 << 31)))
            prev = [o.phase for o in objs]
            for _ in range(500):
                sim.step(w, random_action(rng))
                total += 4
                for i, o in enumerate(objs):
                    if o.phase is not prev[i]:
                        assert (prev[i], o.phase) in allowed
                        prev[i] = o.phase

    with verdict("physics-determinism-1e4"):
        actions = [random_action(rng) for _ in range(10_000)]
        snaps = []
        for _ in range(2):
            w = sim.make_world([sim.make_cube(0.3675, -0.12),
                                sim.make_cube(0.8, 0.4)], seed=3)
            for a in actions:
                sim.step(w, a)
            r = w.robot
            snaps.append((r.x, r.y, r.yaw, r.vx, r.vy, r.yaw_rate,
                          r.scoop_height, r.scoop_pitch,
                          tuple((o.x, o.y, o.z, o.vx, o.vy, o.vz, o.phase)
                                for o in w.objects),
                          tuple(w.event_log)))
        assert snaps[0] == snaps[1]


# =====================================================================
# curriculum and termination
# =====================================================================

def test_curriculum_termination_suite():
    with verdict("curriculum-promotion-rule"):
        cur = Curriculum()
        radii = [cur.radius]
        times = [cur.time_limit]
        # scripted outcomes: blocks of 10 successes promote exactly once each
        for _ in range(40):
            for _ in range(10):
                curriculum_update(cur, True)
            radii.append(cur.radius)
            times.append(cur.time_limit)
        assert radii[:4] == pytest.approx([0.05, 0.10, 0.15, 0.20])
        assert times[:4] == pytest.approx([1.0, 1.5, 2.0, 2.5])
        # 29 promotions reach the radius cap (0.05 + 29*0.05), which then holds
        assert radii[29] == pytest.approx(1.5)
        assert radii[-1] == 1.5 and cur.radius == 1.5
        # the time limit keeps growing to its own cap (38 promotions) exactly
        assert times[38] == pytest.approx(20.0)
        assert times[-1] == 20.0 and cur.time_limit == 20.0
        # failures never promote
        cur2 = Curriculum()
        for _ in range(200):
            curriculum_update(cur2, False)
        assert cur2.level == 0 and cur2.radius == 0.05

    with verdict("termination-exclusivity"):
        rng = np.random.default_rng(1)
        from scooptoss.envs import check_termination, Outcome
        for _ in range(2000):
            mode = [Mode.SCOOP_TOSS, Mode.APPROACH, Mode.META][
                int(rng.integers(3))]
            ep = reset(mode, Curriculum(), rng)
            ep.elapsed = float(rng.uniform(0, 25))
            ep.retain_timer = float(rng.uniform(0, 6))
            if ep.stage_flags:
                ep.stage_flags[0].loaded = bool(rng.random() < 0.5)
            n_out = sum(check_termination(ep) is o for o in Outcome)
            assert n_out == 1  # exactly one enum member matches


# =====================================================================
# STI: capacity, cross-wiring, uniform sampling
# =====================================================================

def test_sti_suite():
    from scooptoss.errors import ConfigError
    from scooptoss.ppo import PpoConfig, Trainer
    with verdict("sti-capacity-and-crosswiring"):
        buf = StiBuffer("approach", capacity=3)
        for _ in range(3):
            buf.add(sim.RobotState())
        with pytest.raises(ConfigError):
            buf.add(sim.RobotState())
        cfg = PpoConfig(n_env=2, horizon=4, epochs=1, minibatches=1)
        with pytest.raises(ConfigError):
            Trainer(Mode.APPROACH, cfg, seed=0, run_dir="/tmp/xw",
                    sti_buffer=buf)

    with verdict("sti-uniform-sampling-chi2"):
        buf = StiBuffer("approach")
        for i in range(100):
            buf.add(sim.RobotState(x=float(i)))
        rng = np.random.default_rng(11)
        counts = np.zeros(100)
        for _ in range(10_000):
            counts[int(buf.sample(rng).x)] += 1
        chi2 = float(((counts - 100.0) ** 2 / 100.0).sum())
        p = float(sstats.chi2.sf(chi2, df=99))
        assert p > 0.01, f"chi2 p-value {p:.4f}"
        print(f"  (chi2 p-value {p:.3f})")


# =====================================================================
# pinned controller == standalone expert, bit-exact
# =====================================================================

def test_degenerate_controller_equivalence():
    meta_net = PolicyNet(OBS_DIM, 2, kind="categorical", seed=0,
                         dtype=np.float64)
    experts = (PolicyNet(OBS_DIM, ACT_DIM, seed=1, dtype=np.float64),
               PolicyNet(OBS_DIM, ACT_DIM, seed=2, dtype=np.float64))
    ctrl = MetaController(meta_net, experts, force_expert=APPROACH_ID)
    with verdict("degenerate-controller-equivalence"):
        env_a = TaskEnv(Mode.META, seed=123, n_objects=3, meta_time_limit=6.0)
        env_b = TaskEnv(Mode.META, seed=123, n_objects=3, meta_time_limit=6.0)
        env_a.reset()
        env_b.reset()
        from scooptoss.envs import build_observation
        done = False
        while not done:
            _, rec = meta_step(ctrl, env_a)
            obs = build_observation(env_b.ep)
            act = experts[APPROACH_ID].mean_action(obs[None])[0]
            _, _, done_b, _ = env_b.step(act)
            ra, rb = env_a.ep.world.robot, env_b.ep.world.robot
            assert (ra.x, ra.y, ra.yaw, ra.vx, ra.vy, ra.yaw_rate,
                    ra.scoop_height, ra.scoop_pitch) == \
                   (rb.x, rb.y, rb.yaw, rb.vx, rb.vy, rb.yaw_rate,
                    rb.scoop_height, rb.scoop_pitch)
            for oa, ob in zip(env_a.ep.world.objects, env_b.ep.world.objects):
                assert (oa.x, oa.y, oa.z, oa.vx, oa.vy, oa.vz, oa.phase) == \
                       (ob.x, ob.y, ob.z, ob.vx, ob.vy, ob.vz, ob.phase)
            done = rec["done"]
            assert done == done_b


# =====================================================================
# trained-artifact criteria (skip with a pointer when runs/ is empty)
# =====================================================================

@pytest.mark.trained
def test_approach_training_desk_scale():
    info = json.loads(need(RUNS / "expert_approach_seed0"
                           / "run_info.json").read_text())
    with verdict("approach-training"):
        assert info["final_success"] >= 0.90, info
        assert info["wall_minutes"] <= 30.0, info
    print(f"  (success {info['final_success']:.3f} "
          f"in {info['wall_minutes']:.1f} min)")


def frontal_rear_load(report: dict) -> tuple[float, float]:
    frontal, rear = [], []
    for row in report["sectors"]:
        lo = int(row["sector"].split("-")[0])
        (rear if lo in (135, 180) else frontal).append(row["load_pct"])
    return sum(frontal) / len(frontal), sum(rear) / len(rear)


@pytest.mark.trained
def test_scoop_toss_training_desk_scale():
    report = json.loads(need(RUNS / "reports" / "angular.json").read_text())
    info = json.loads(need(RUNS / "expert_scoop_toss_seed0"
                           / "run_info.json").read_text())
    with verdict("scoop-toss-training"):
        frontal, rear = frontal_rear_load(report)
        assert frontal >= 70.0, f"frontal load {frontal:.1f}%"
        assert frontal - rear >= 15.0, \
            f"frontal {frontal:.1f}% vs rear {rear:.1f}%"
        assert info["wall_minutes"] <= 240.0, info
    print(f"  (frontal {frontal:.1f}%, rear {rear:.1f}%, "
          f"trained {info['wall_minutes']:.0f} min)")


@pytest.mark.trained
def test_reward_ablation_trend():
    report = json.loads(need(RUNS / "reports"
                             / "reward_ablation.json").read_text())
    rows = report["rows"]
    with verdict("reward-ablation-trend"):
        baseline = {r["seed"]: r["load_pct"] for r in rows
                    if r["variant"] == "Baseline"}
        assert baseline, "no baseline rows"
        for r in rows:
            if r["variant"] != "Baseline":
                assert r["load_pct"] < baseline[r["seed"]], \
                    (r["variant"], r["seed"], r["load_pct"],
                     baseline[r["seed"]])
    for r in rows:
        print(f"  {r['variant']:<12} seed {r['seed']}: "
              f"load {r['load_pct']:.0f}%")


@pytest.mark.trained
def test_meta_trend():
    report = json.loads(need(RUNS / "reports" / "multi.json").read_text())
    rows = {r["model"]: r for r in report["rows"]}
    with verdict("meta-trend"):
        base = rows["meta"]["mean_loaded"]
        only = rows["scoop_toss_only"]["mean_loaded"]
        assert base >= 1.5 * only, f"meta {base:.2f} vs only {only:.2f}"
        assert rows["no_sti"]["mean_loaded"] < base
        assert rows["no_extra_bonus"]["mean_loaded"] < base
    for name, r in rows.items():
        t = r["mean_time_per_object"]
        print(f"  {name:<16} loaded {r['mean_loaded']:.2f} "
              f"time/obj {t if t is None else round(t, 1)}")


# =====================================================================
# secondary: scripted teleop session loads an object (trained experts)
# =====================================================================

@pytest.mark.trained
def test_teleop_scripted_session_loads():
    import asyncio
    import socket as socketlib

    from scooptoss import netws
    from scooptoss.teleop import TeleopServer

    scoop = need(RUNS / "finetune_scoop_toss_seed0" / "policy_final.bin")
    approach = need(RUNS / "finetune_approach_seed0" / "policy_final.bin")
    with socketlib.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    srv = TeleopServer(scoop, approach, port=port, n_objects=4,
                       spawn_radius=2.0, seed=4, time_scale=1.0,
                       trace_path="/tmp/teleop_acceptance.jsonl")

    async def drive():
        task = asyncio.create_task(srv.serve_forever())
        await asyncio.sleep(0.3)
        ws = await netws.connect(srv.host, srv.port)
        await ws.recv_text()  # role
        loaded = 0
        deadline = asyncio.get_event_loop().time() + 90.0
        try:
            while asyncio.get_event_loop().time() < deadline:
                msg = json.loads(await asyncio.wait_for(ws.recv_text(), 10.0))
                if msg.get("type") != "state":
                    continue
                loaded = msg["n_loaded"]
                if loaded >= 1:
                    break
                rx, ry = msg["robot"]["pos"]
                targets = [o for o in msg["objects"]
                           if o["phase"] != "Loaded"]
                if not targets:
                    break
                tx, ty, _ = min(targets, key=lambda o:
                                (o["position"][0] - rx) ** 2
                                + (o["position"][1] - ry) ** 2)["position"]
                dx, dy = tx - rx, ty - ry
                dist = math.hypot(dx, dy)
                trigger = dist < 1.2
                await ws.send_text(json.dumps(
                    {"type": "joystick",
                     "dir": [dx / max(dist, 1e-6), dy / max(dist, 1e-6)],
                     "trigger": trigger}))
        finally:
            await ws.close()
            srv.stop()
            await asyncio.wait_for(task, 5.0)
        return loaded

    with verdict("teleop-scripted-session"):
        loaded = asyncio.run(drive())
        assert loaded >= 1, "no object loaded during the scripted session"
