"""Command-line entry point: training, fine-tuning, evaluation, ablations,
trace replay, and the live teleoperation server.

Every run writes its resolved configuration and seed next to its outputs, so
an artifact directory is reproducible from its own contents.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import ablations, config as cfgmod, evaluate, sti as sti_mod
from .envs import Curriculum, Mode
from .errors import CheckpointError, ConfigError, TrainingFault
from .meta import SCOOP_TOSS_ID, MetaController, load_controller
from .nets import load_checkpoint
from .ppo import PpoConfig, Trainer
from .rewards import ablate
from .sim import IntegrationFault

MODE_NAMES = {"scoop-toss": Mode.SCOOP_TOSS, "approach": Mode.APPROACH}


def _dtype(cfg):
    return np.float64 if cfg["training"]["dtype"] == "float64" else np.float32


def _resolve(args, **overrides) -> dict:
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return cfgmod.resolve(getattr(args, "config", None), overrides)


def _train_common(args, mode: Mode, *, weights=None, experts=None,
                  sti_buffer=None, init_policy=None, default_dir: str = "run",
                  curriculum=None) -> Path:
    overrides = {}
    if args.out:
        overrides["out_dir"] = args.out
    cfg = _resolve(args, **overrides)
    out_dir = Path(cfg["out_dir"] or f"runs/{default_dir}_seed{cfg['seed']}")
    cfgmod.save_resolved(cfg, out_dir)
    weights = weights if weights is not None else cfgmod.make_weights(cfg)
    trainer = Trainer(
        mode, cfgmod.make_ppo(cfg), seed=cfg["seed"], run_dir=out_dir,
        weights=weights, sim_params=cfgmod.make_sim_params(cfg),
        curriculum=curriculum if curriculum is not None else (
            cfgmod.make_curriculum(cfg) if mode is Mode.SCOOP_TOSS else None),
        sti_buffer=sti_buffer, experts=experts,
        object_spec=cfgmod.make_object_spec(cfg),
        n_objects=cfg["n_objects"], meta_time_limit=cfg["meta_time_limit"],
        dtype=_dtype(cfg), init_policy=init_policy,
        checkpoint_every=cfg["training"]["checkpoint_every"])
    tr = cfg["training"]
    iterations = args.iterations if args.iterations is not None \
        else tr["iterations"]
    minutes = args.minutes if args.minutes is not None else tr["max_minutes"]
    target = args.target_success if args.target_success is not None \
        else tr["target_success"]
    final = trainer.run(iterations=iterations, max_minutes=minutes,
                        target_success=target)
    from . import plots
    plots.training_curves(trainer.metrics_path, out_dir / "training.png")
    print(f"final checkpoint: {final}")
    return final


def cmd_train_expert(args) -> int:
    mode = MODE_NAMES[args.expert]
    weights = None
    if args.variant:
        cfg = _resolve(args)
        weights = ablate(cfgmod.make_weights(cfg), args.variant)
    _train_common(args, mode, weights=weights,
                  default_dir=f"expert_{mode.value}"
                  + (f"_{args.variant}" if args.variant else ""))
    return 0


def cmd_finetune_sti(args) -> int:
    mode = MODE_NAMES[args.expert]
    other = Mode.APPROACH if mode is Mode.SCOOP_TOSS else Mode.SCOOP_TOSS
    init_policy, _ = load_checkpoint(args.init)
    if args.buffer:
        buffer = sti_mod.StiBuffer.load(args.buffer)
    else:
        if not args.source:
            raise ConfigError("finetune-sti needs --buffer or --source "
                              "(the other expert's checkpoint)")
        source_policy, _ = load_checkpoint(args.source)
        buffer = sti_mod.collect(source_policy, other, args.collect,
                                 seed=args.seed)
    if buffer.source_tag != other.value:
        raise ConfigError(
            f"cross-initialization requires a {other.value!r} buffer, "
            f"got {buffer.source_tag!r}")
    out = Path(args.out or f"runs/finetune_{mode.value}_seed{args.seed}")
    out.mkdir(parents=True, exist_ok=True)
    buffer.save(out / f"sti_{buffer.source_tag}.bin")
    # fine-tuning runs at the full task spread, not the early curriculum
    cur = Curriculum(radius=1.5, time_limit=20.0, level=29) \
        if mode is Mode.SCOOP_TOSS else None
    args.out = str(out)
    _train_common(args, mode, sti_buffer=buffer, init_policy=init_policy,
                  default_dir=f"finetune_{mode.value}", curriculum=cur)
    return 0


def cmd_train_meta(args) -> int:
    scoop, _ = load_checkpoint(args.scoop)
    approach, _ = load_checkpoint(args.approach)
    weights = None
    if args.flat_bonus:
        cfg = _resolve(args)
        weights = ablate(cfgmod.make_weights(cfg), "NoExtraBonus")
    _train_common(args, Mode.META, experts=(scoop, approach),
                  weights=weights,
                  default_dir="meta" + ("_flat" if args.flat_bonus else ""))
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve(args)
    ev = cfg["eval"]
    seed = args.seed if args.seed is not None else ev["seed"]
    out = Path(args.out)
    if args.protocol == "angular":
        policy, _ = load_checkpoint(args.checkpoint)
        trials = args.trials or ev["trials_per_sector"]
        report = evaluate.run_angular_eval(policy, trials_per_sector=trials,
                                           seed=seed)
    elif args.protocol == "objects":
        policy, _ = load_checkpoint(args.checkpoint)
        trials = args.trials or ev["trials"]
        report = evaluate.run_object_type_eval(policy, trials=trials,
                                               seed=seed)
    elif args.protocol == "multi":
        ctrl = load_controller(args.meta, args.scoop, args.approach)
        if args.scoop_only:
            ctrl = MetaController(ctrl.meta_net, ctrl.experts,
                                  force_expert=SCOOP_TOSS_ID)
        report = evaluate.run_multi_eval(
            ctrl, n_objects=args.objects or ev["n_objects"],
            episodes=args.episodes or ev["episodes"], seed=seed,
            time_limit=ev["time_limit"])
        report["model"] = "scoop_toss_only" if args.scoop_only else "meta"
    else:  # ablation
        if args.suite == "reward":
            report = ablations.run_reward_ablations(
                args.dir, seeds=tuple(int(s) for s in args.seeds.split(",")),
                budget_minutes=args.budget_minutes,
                iterations=args.iterations,
                eval_trials=args.trials or 100, eval_seed=seed,
                train=not args.no_train)
        else:
            report = ablations.run_multi_ablations(
                meta_path=args.meta, scoop_path=args.scoop,
                approach_path=args.approach,
                nosti_meta_path=args.nosti_meta,
                noextra_meta_path=args.noextra_meta,
                raw_scoop_path=args.raw_scoop,
                raw_approach_path=args.raw_approach,
                n_objects=args.objects or ev["n_objects"],
                episodes=args.episodes or ev["episodes"], seed=seed,
                time_limit=ev["time_limit"])
    written = evaluate.write_report(report, out)
    cfgmod.save_resolved(cfg, out.parent)
    for p in written:
        print(f"wrote {p}")
    return 0


def cmd_replay(args) -> int:
    from . import traces
    header, records = traces.read_trace(args.trace)
    events = traces.render_event_log(records)
    print(f"trace: {args.trace} ({len(records)} steps, dt={header['dt']})")
    for t, kind, idx in events:
        print(f"  t={t:8.3f}  {kind:<10} object {idx}")
    if not events:
        print("  (no events)")
    if args.dump:
        import json
        with open(args.dump, "w") as f:
            f.write(json.dumps(header) + "\n")
            for rec in records:
                f.write(json.dumps(rec) + "\n")
        print(f"wrote {args.dump}")
    if args.figure:
        from . import plots
        plots.trajectory_figure(header, records, args.figure)
        print(f"wrote {args.figure}")
    return 0


def cmd_teleop(args) -> int:
    import asyncio

    from .teleop import TeleopServer
    cfg = _resolve(args)
    tcfg = dict(cfg["teleop"])
    if args.port:
        tcfg["port"] = args.port
    if args.host:
        tcfg["host"] = args.host
    server = TeleopServer(scoop_path=args.scoop, approach_path=args.approach,
                          **tcfg)
    print(f"teleop server on ws://{tcfg['host']}:{tcfg['port']}/teleop")
    try:
        asyncio.run(server.serve_forever())
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="scooptoss",
        description="Scoop-and-toss sandbox: train experts and a switching "
                    "policy, evaluate them, replay traces, and drive the "
                    "robot live over WebSocket.")
    sub = p.add_subparsers(dest="command", required=True)

    def add_train_flags(sp, seed_required=True):
        sp.add_argument("--seed", type=int, required=seed_required,
                        help="training seed (required)")
        sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--iterations", type=int)
        sp.add_argument("--minutes", type=float,
                        help="wall-clock training budget")
        sp.add_argument("--target-success", type=float,
                        help="stop at this rolling success rate")

    sp = sub.add_parser("train-expert", help="train one expert policy")
    sp.add_argument("expert", choices=sorted(MODE_NAMES))
    sp.add_argument("--variant", choices=["NoHeight", "NoExpDist",
                                          "NoLoadBonus"],
                    help="reward ablation variant")
    add_train_flags(sp)
    sp.set_defaults(func=cmd_train_expert)

    sp = sub.add_parser("finetune-sti",
                        help="fine-tune an expert from the other expert's "
                             "visited states")
    sp.add_argument("--expert", choices=sorted(MODE_NAMES), required=True)
    sp.add_argument("--init", required=True,
                    help="checkpoint of the expert being fine-tuned")
    sp.add_argument("--source", help="other expert's checkpoint to roll out")
    sp.add_argument("--buffer", help="previously collected state buffer")
    sp.add_argument("--collect", type=int, default=10000,
                    help="states to collect from --source")
    add_train_flags(sp)
    sp.set_defaults(func=cmd_finetune_sti)

    sp = sub.add_parser("train-meta", help="train the switching policy over "
                                           "two frozen experts")
    sp.add_argument("--scoop", required=True)
    sp.add_argument("--approach", required=True)
    sp.add_argument("--flat-bonus", action="store_true",
                    help="flat per-load bonus instead of the escalating one")
    add_train_flags(sp)
    sp.set_defaults(func=cmd_train_meta)

    sp = sub.add_parser("eval", help="run an evaluation protocol")
    ev = sp.add_subparsers(dest="protocol", required=True)

    def add_eval_flags(e):
        e.add_argument("--out", required=True, help="report CSV path")
        e.add_argument("--seed", type=int)
        e.add_argument("--config")
        e.set_defaults(func=cmd_eval, iterations=None)

    e = ev.add_parser("angular", help="stage success by angular sector")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--trials", type=int)
    add_eval_flags(e)
    e = ev.add_parser("objects", help="object-type generalization")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--trials", type=int)
    add_eval_flags(e)
    e = ev.add_parser("multi", help="multi-object collection")
    e.add_argument("--meta", required=True)
    e.add_argument("--scoop", required=True)
    e.add_argument("--approach", required=True)
    e.add_argument("--episodes", type=int)
    e.add_argument("--objects", type=int)
    e.add_argument("--scoop-only", action="store_true")
    add_eval_flags(e)
    e = ev.add_parser("ablation", help="comparison suites")
    e.add_argument("--suite", choices=["reward", "multi"], required=True)
    e.add_argument("--dir", help="variant checkpoint directory (reward suite)")
    e.add_argument("--seeds", default="0,1,2")
    e.add_argument("--budget-minutes", type=float, default=12.0)
    e.add_argument("--iterations", type=int)
    e.add_argument("--no-train", action="store_true",
                   help="fail instead of training missing variants")
    e.add_argument("--trials", type=int)
    e.add_argument("--episodes", type=int)
    e.add_argument("--objects", type=int)
    e.add_argument("--meta")
    e.add_argument("--scoop")
    e.add_argument("--approach")
    e.add_argument("--nosti-meta")
    e.add_argument("--noextra-meta")
    e.add_argument("--raw-scoop")
    e.add_argument("--raw-approach")
    add_eval_flags(e)

    sp = sub.add_parser("replay", help="re-render a dumped trace")
    sp.add_argument("trace")
    sp.add_argument("--figure", help="write a top-down trajectory PNG")
    sp.add_argument("--dump", help="re-write the records (round-trip)")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("teleop", help="live teleoperation")
    tsub = sp.add_subparsers(dest="teleop_cmd", required=True)
    t = tsub.add_parser("serve")
    t.add_argument("--port", type=int)
    t.add_argument("--host")
    t.add_argument("--scoop", required=True)
    t.add_argument("--approach", required=True)
    t.add_argument("--config")
    t.set_defaults(func=cmd_teleop, seed=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, TrainingFault,
            IntegrationFault, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
