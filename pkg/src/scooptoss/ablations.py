"""Comparative training-and-evaluation suites.

Reward ablations train the single-object expert with one reward ingredient
removed, under the identical desk budget and seed set as the baseline, then
compare frontal load success per seed. Multi-object ablations compare the
trained selector against the no-fine-tuning, flat-bonus, and
scoop-toss-only configurations.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import sti as sti_mod
from .envs import Mode
from .errors import CheckpointError
from .evaluate import run_multi_eval, run_object_type_eval, OBJECT_PRESETS
from .meta import SCOOP_TOSS_ID, MetaController, load_controller
from .nets import load_checkpoint
from .ppo import PpoConfig, Trainer
from .rewards import RewardWeights, ablate

REWARD_VARIANTS = ("Baseline", "NoHeight", "NoExpDist", "NoLoadBonus")


def _train_scoop_variant(variant: str, seed: int, out_dir: Path,
                         cfg: PpoConfig, budget_minutes: float | None,
                         iterations: int | None) -> Path:
    weights = RewardWeights()
    if variant != "Baseline":
        weights = ablate(weights, variant)
    run_dir = out_dir / f"{variant}_seed{seed}"
    final = run_dir / "policy_final.bin"
    if final.exists():
        return final
    trainer = Trainer(Mode.SCOOP_TOSS, cfg, seed=seed, run_dir=run_dir,
                      weights=weights)
    return trainer.run(iterations=iterations, max_minutes=budget_minutes,
                       quiet=True)


def run_reward_ablations(out_dir, *, seeds=(0, 1, 2),
                         cfg: PpoConfig | None = None,
                         budget_minutes: float | None = 12.0,
                         iterations: int | None = None,
                         eval_trials: int = 100, eval_seed: int = 0,
                         train: bool = True) -> dict:
    """Train (or reuse) every variant x seed, evaluate frontal cube load
    success, and emit one comparison row per (variant, seed)."""
    out_dir = Path(out_dir)
    cfg = cfg or PpoConfig()
    rows = []
    for variant in REWARD_VARIANTS:
        for seed in seeds:
            path = out_dir / f"{variant}_seed{seed}" / "policy_final.bin"
            if not path.exists():
                if not train:
                    raise CheckpointError(f"missing variant checkpoint {path}")
                path = _train_scoop_variant(variant, seed, out_dir, cfg,
                                            budget_minutes, iterations)
            policy, _ = load_checkpoint(path)
            rep = run_object_type_eval(policy, [OBJECT_PRESETS["cube"]],
                                       trials=eval_trials, seed=eval_seed)
            agg = rep["objects"][0]
            rows.append({"variant": variant, "seed": seed,
                         "trials": eval_trials,
                         "approach_pct": agg["approach_pct"],
                         "scoop_pct": agg["scoop_pct"],
                         "toss_pct": agg["toss_pct"],
                         "load_pct": agg["load_pct"]})
    return {"protocol": "ablation", "rows": rows, "seeds": list(seeds),
            "eval_trials": eval_trials, "eval_seed": eval_seed}


def run_multi_ablations(*, meta_path, scoop_path, approach_path,
                        nosti_meta_path=None, noextra_meta_path=None,
                        raw_scoop_path=None, raw_approach_path=None,
                        n_objects: int = 10, episodes: int = 100,
                        seed: int = 0, time_limit: float = 100.0) -> dict:
    """Evaluate the selector configurations on the shared protocol.

    The no-fine-tuning selector pairs with the raw (pre-fine-tune) expert
    checkpoints it was trained against.
    """
    rows = []

    def add(model: str, ctrl: MetaController):
        res = run_multi_eval(ctrl, n_objects=n_objects, episodes=episodes,
                             seed=seed, time_limit=time_limit)
        rows.append({"model": model, "mean_loaded": res["mean_loaded"],
                     "mean_time_per_object": res["mean_time_per_object"],
                     "mean_switches": res["mean_switches"]})

    ctrl = load_controller(meta_path, scoop_path, approach_path)
    add("meta", ctrl)
    if nosti_meta_path is not None:
        sp = raw_scoop_path or scoop_path
        ap = raw_approach_path or approach_path
        add("no_sti", load_controller(nosti_meta_path, sp, ap))
    if noextra_meta_path is not None:
        add("no_extra_bonus",
            load_controller(noextra_meta_path, scoop_path, approach_path))
    add("scoop_toss_only",
        MetaController(ctrl.meta_net, ctrl.experts,
                       force_expert=SCOOP_TOSS_ID))
    return {"protocol": "multi", "rows": rows, "episodes": episodes,
            "n_objects": n_objects, "seed": seed, "time_limit": time_limit}


def collect_sti_pair(scoop_path, approach_path, out_dir, *, n: int = 10000,
                     seed: int = 0) -> tuple[Path, Path]:
    """Fill and persist both experts' state buffers for cross-initialization."""
    out_dir = Path(out_dir)
    scoop_policy, _ = load_checkpoint(scoop_path)
    approach_policy, _ = load_checkpoint(approach_path)
    scoop_buf = sti_mod.collect(scoop_policy, Mode.SCOOP_TOSS, n, seed=seed)
    approach_buf = sti_mod.collect(approach_policy, Mode.APPROACH, n,
                                   seed=seed + 1)
    sp = out_dir / "sti_scoop_toss.bin"
    ap = out_dir / "sti_approach.bin"
    scoop_buf.save(sp)
    approach_buf.save(ap)
    return sp, ap
