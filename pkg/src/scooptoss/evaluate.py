"""Evaluation protocols: angular-sector stage success, object-type
generalization, multi-object collection, and the ablation comparisons.

Trials are deterministic in the evaluation seed (fixed seed, bit-identical
reports) and independent; they are stepped in lockstep pools so the policy
forward passes batch. Reports are emitted as CSV and JSON with a rendered
figure next to them.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import sim
from .envs import (EpisodeState, Mode, OBJECT_PRESETS, ObjectSpec, StageFlags,
                   TaskEnv, build_observation, classify_stage_events)
from .errors import ConfigError
from .meta import MetaController
from .nets import PolicyNet
from .sim import basin_position, make_world

SECTORS = [(0, 45), (45, 90), (90, 135), (135, 180),
           (180, 225), (225, 270), (270, 315), (315, 360)]
FRONTAL_RANGE = (-135.0, 135.0)
SPAWN_RADIUS = 1.5
TRIAL_TIME = 20.0


def _spawn_episode(spec: ObjectSpec, angle_deg: float, dist: float,
                   handle_yaw: float) -> EpisodeState:
    """One evaluation world: robot at rest, object at a polar offset from the
    scoop basin, angle measured counterclockwise from the robot's forward
    axis."""
    world = make_world()
    bx, by, _ = basin_position(world)
    a = math.radians(angle_deg)
    obj = spec.make(bx + dist * math.cos(a), by + dist * math.sin(a),
                    handle_yaw=handle_yaw)
    world.objects.append(obj)
    ep = EpisodeState(world=world, mode=Mode.SCOOP_TOSS,
                      time_limit=float("inf"))
    ep.stage_flags = [StageFlags()]
    return ep


def _run_trial_pool(policy: PolicyNet, episodes: list[EpisodeState],
                    max_time: float = TRIAL_TIME, chunk: int = 32
                    ) -> list[dict]:
    """Step all trials to completion with batched deterministic actions."""
    results: list[dict | None] = [None] * len(episodes)
    queue = list(range(len(episodes)))
    while queue:
        active = queue[:chunk]
        queue = queue[chunk:]
        obs = np.stack([build_observation(episodes[i]) for i in active])
        while active:
            acts = policy.mean_action(obs[:len(active)].astype(policy.dtype))
            retired = []
            for k, i in enumerate(active):
                ep = episodes[i]
                sim.step(ep.world, sim.ActionVector(*map(float, acts[k])))
                ep.elapsed += ep.world.dt
                ep.prev_action = np.asarray(acts[k], dtype=float)
                classify_stage_events(ep)
                fl = ep.stage_flags[0]
                if fl.loaded or ep.elapsed >= max_time:
                    obj = ep.world.objects[0]
                    results[i] = {
                        "approached": fl.approached, "scooped": fl.scooped,
                        "tossed": fl.tossed, "loaded": fl.loaded,
                        "max_height": obj.max_height,
                        "elapsed": ep.elapsed,
                    }
                    retired.append(k)
            if retired:
                keep = [k for k in range(len(active)) if k not in retired]
                active = [active[k] for k in keep]
                obs = obs[keep]
            for k, i in enumerate(active):
                build_observation(episodes[i], obs[k])
    return results  # type: ignore[return-value]


def _aggregate(trials: list[dict]) -> dict:
    n = len(trials)
    pct = lambda key: 100.0 * sum(t[key] for t in trials) / n
    heights_s = [t["max_height"] for t in trials if t["loaded"]]
    heights_f = [t["max_height"] for t in trials
                 if t["tossed"] and not t["loaded"]]
    mean = lambda xs: (sum(xs) / len(xs)) if xs else None
    return {"trials": n, "approach_pct": pct("approached"),
            "scoop_pct": pct("scooped"), "toss_pct": pct("tossed"),
            "load_pct": pct("loaded"), "height_success": mean(heights_s),
            "height_fail": mean(heights_f)}


def run_angular_eval(policy: PolicyNet, trials_per_sector: int = 100,
                     seed: int = 0, spec: ObjectSpec | None = None) -> dict:
    """Eight 45-degree sectors around the robot, objects within 1.5 m of the
    scoop; per-sector stage success rates and toss heights."""
    spec = spec or OBJECT_PRESETS["cube"]
    report = {"protocol": "angular", "seed": seed, "object": spec.name,
              "trials_per_sector": trials_per_sector, "sectors": []}
    for s_idx, (lo, hi) in enumerate(SECTORS):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(s_idx,)))
        episodes = []
        for _ in range(trials_per_sector):
            ang = float(rng.uniform(lo, hi))
            dist = SPAWN_RADIUS * math.sqrt(float(rng.random()))
            handle = float(rng.uniform(-math.pi, math.pi))
            episodes.append(_spawn_episode(spec, ang, dist, handle))
        agg = _aggregate(_run_trial_pool(policy, episodes))
        agg["sector"] = f"{lo}-{hi}"
        report["sectors"].append(agg)
    return report


def run_object_type_eval(policy: PolicyNet, specs=None, trials: int = 100,
                         seed: int = 0) -> dict:
    """Frontal-range spawns (within 135 degrees of forward) per object type."""
    if specs is None:
        specs = [OBJECT_PRESETS[k] for k in
                 ("cube", "bucket", "mug", "foam_brick", "potted_meat_can")]
    for spec in specs:
        if not isinstance(spec, ObjectSpec):
            raise ConfigError(f"not an object spec: {spec!r}")
    report = {"protocol": "objects", "seed": seed, "trials": trials,
              "objects": []}
    for o_idx, spec in enumerate(specs):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(o_idx,)))
        episodes = []
        for _ in range(trials):
            ang = float(rng.uniform(*FRONTAL_RANGE))
            dist = SPAWN_RADIUS * math.sqrt(float(rng.random()))
            handle = float(rng.uniform(-math.pi, math.pi))
            episodes.append(_spawn_episode(spec, ang, dist, handle))
        agg = _aggregate(_run_trial_pool(policy, episodes))
        agg["object"] = spec.name
        agg["mass_g"] = round(spec.mass * 1000)
        report["objects"].append(agg)
    return report


def frontal_load_pct(policy: PolicyNet, trials: int = 100, seed: int = 0
                     ) -> float:
    """Load success over the frontal range with the training cube."""
    rep = run_object_type_eval(policy, [OBJECT_PRESETS["cube"]],
                               trials=trials, seed=seed)
    return rep["objects"][0]["load_pct"]


def run_multi_eval(ctrl: MetaController, n_objects: int = 10,
                   episodes: int = 100, seed: int = 0,
                   time_limit: float = 100.0, chunk: int = 20) -> dict:
    """Multi-object collection: mean objects loaded per episode and mean
    seconds per loaded object (over episodes with at least one load)."""
    per_episode = []
    ss = np.random.SeedSequence(entropy=seed)
    env_seeds = ss.spawn(episodes)
    for start in range(0, episodes, chunk):
        batch = env_seeds[start:start + chunk]
        envs_ = [TaskEnv(Mode.META, seed=s, n_objects=n_objects,
                         meta_time_limit=time_limit) for s in batch]
        states = []
        for env in envs_:
            env.reset()
            states.append({"env": env, "done": False, "switches": 0,
                           "last_sel": -1})
        obs = np.stack([build_observation(st["env"].ep) for st in states])
        active = list(range(len(states)))
        while active:
            if ctrl.force_expert is not None:
                sel = np.full(len(active), ctrl.force_expert)
            else:
                logits = ctrl.meta_net.actor(
                    obs[:len(active)].astype(ctrl.meta_net.dtype))
                sel = np.argmax(logits, axis=1)
            acts = np.zeros((len(active), 5))
            for e, expert in enumerate(ctrl.experts):
                mask = sel == e
                if mask.any():
                    acts[mask] = expert.mean_action(
                        obs[:len(active)][mask].astype(expert.dtype))
            retired = []
            for k, i in enumerate(active):
                st = states[i]
                if st["last_sel"] >= 0 and sel[k] != st["last_sel"]:
                    st["switches"] += 1
                st["last_sel"] = int(sel[k])
                o, _, done, outcome = st["env"].step(acts[k])
                obs[k] = o
                if done:
                    ep = st["env"].ep
                    enter_times = [t for t, kind, _ in ep.world.event_log
                                   if kind == sim.TRAY_ENTER]
                    per_episode.append({
                        "loaded": ep.n_loaded,
                        "duration": ep.elapsed,
                        "last_load_time": enter_times[-1] if enter_times else None,
                        "switches": st["switches"],
                        "outcome": outcome.value,
                    })
                    retired.append(k)
            if retired:
                keep = [k for k in range(len(active)) if k not in retired]
                active = [active[k] for k in keep]
                obs = obs[keep]
    loaded = [e["loaded"] for e in per_episode]
    times = [e["last_load_time"] / e["loaded"]
             for e in per_episode if e["loaded"] > 0]
    return {"protocol": "multi", "seed": seed, "episodes": episodes,
            "n_objects": n_objects, "time_limit": time_limit,
            "mean_loaded": sum(loaded) / len(loaded),
            "mean_time_per_object": (sum(times) / len(times)) if times else None,
            "mean_switches": sum(e["switches"] for e in per_episode)
            / len(per_episode),
            "per_episode": per_episode}


# --- report files -----------------------------------------------------------

def _dash(v):
    return "-" if v is None else (f"{v:.2f}" if isinstance(v, float) else v)


def write_report(report: dict, out_csv, figure=True) -> list[Path]:
    """CSV + JSON (+ PNG) for any protocol report; returns written paths."""
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    written = []
    if report["protocol"] == "angular":
        rows = report["sectors"]
        cols = ["sector", "trials", "approach_pct", "scoop_pct", "toss_pct",
                "load_pct", "height_success", "height_fail"]
    elif report["protocol"] == "objects":
        rows = report["objects"]
        cols = ["object", "mass_g", "trials", "approach_pct", "scoop_pct",
                "toss_pct", "load_pct", "height_success", "height_fail"]
    elif report["protocol"] == "multi":
        rows = report.get("rows") or [{
            "model": report.get("model", "meta"),
            "mean_loaded": report["mean_loaded"],
            "mean_time_per_object": report["mean_time_per_object"]}]
        cols = ["model", "mean_loaded", "mean_time_per_object"]
    elif report["protocol"] == "ablation":
        rows = report["rows"]
        cols = ["variant", "seed", "trials", "approach_pct", "scoop_pct",
                "toss_pct", "load_pct"]
    else:
        raise ConfigError(f"unknown report protocol {report['protocol']!r}")
    with open(out_csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for row in rows:
            w.writerow([_dash(row.get(c)) for c in cols])
    written.append(out_csv)
    out_json = out_csv.with_suffix(".json")
    with open(out_json, "w") as f:
        json.dump(report, f, indent=1)
    written.append(out_json)
    if figure:
        from . import plots
        out_png = out_csv.with_suffix(".png")
        if report["protocol"] == "angular":
            plots.angular_sector_figure(report, out_png)
        elif report["protocol"] == "objects":
            plots.object_type_figure(report, out_png)
        elif report["protocol"] == "multi":
            plots.multi_eval_figure(rows, out_png)
        else:
            plots.ablation_figure(rows, out_png)
        written.append(out_png)
    return written
