"""Execution-time composition: a categorical selector over two frozen experts.

Every control step the selector emits an expert id (eval: argmax with ties to
the scoop-toss index; train: sampled) and the chosen expert's deterministic
action drives the environment. Both the selector and the selected expert see
the identical observation.
"""
from __future__ import annotations

import numpy as np

from .envs import NoTargetError, TaskEnv, build_observation
from .errors import CheckpointError
from .nets import PolicyNet, load_checkpoint, log_softmax

SCOOP_TOSS_ID = 0
APPROACH_ID = 1
EXPERT_NAMES = ("scoop_toss", "approach")


class MetaController:
    """One controller per episode worker; expert parameters are read-shared
    and never mutated here."""

    def __init__(self, meta_net: PolicyNet,
                 experts: tuple[PolicyNet, PolicyNet],
                 force_expert: int | None = None):
        if meta_net.kind != "categorical" or meta_net.act_dim != len(experts):
            raise CheckpointError("selector head does not match expert count")
        for e in experts:
            if e.obs_dim != meta_net.obs_dim:
                raise CheckpointError("expert/selector observation layouts differ")
        self.meta_net = meta_net
        self.experts = experts
        self.force_expert = force_expert
        self.last_selection: int = -1
        self.switch_count: int = 0


def select_expert(ctrl: MetaController, obs: np.ndarray, mode: str = "eval",
                  rng: np.random.Generator | None = None) -> int:
    """Expert id for this step; updates the controller's switch counter."""
    if ctrl.force_expert is not None:
        idx = ctrl.force_expert
    else:
        logits = ctrl.meta_net.actor(np.atleast_2d(obs).astype(ctrl.meta_net.dtype))
        if mode == "eval":
            idx = int(np.argmax(logits[0]))  # ties resolve to scoop-toss
        else:
            assert rng is not None, "training selection needs an RNG"
            probs = np.exp(log_softmax(logits))[0]
            idx = int(rng.choice(len(probs), p=probs / probs.sum()))
    if ctrl.last_selection >= 0 and idx != ctrl.last_selection:
        ctrl.switch_count += 1
    ctrl.last_selection = idx
    return idx


def meta_step(ctrl: MetaController, env: TaskEnv, mode: str = "eval",
              rng: np.random.Generator | None = None) -> tuple[np.ndarray, dict]:
    """One composed control step on a multi-object episode.

    Builds the shared observation, selects an expert, forwards the same
    observation to it for the action, steps the environment, and returns the
    transition record. Raises NoTargetError once every object is loaded.
    """
    ep = env.ep
    if ep.world.objects and ep.n_loaded == len(ep.world.objects):
        raise NoTargetError("all objects loaded; episode should end")
    obs = build_observation(ep).copy()
    idx = select_expert(ctrl, obs, mode=mode, rng=rng)
    action = ctrl.experts[idx].mean_action(
        obs[None].astype(ctrl.experts[idx].dtype))[0]
    _, reward, done, outcome = env.step(action)
    record = {"obs": obs, "selection": idx, "reward": reward,
              "done": done, "outcome": outcome}
    return action, record


def load_controller(meta_path, scoop_path, approach_path, *,
                    obs_dim: int | None = None) -> MetaController:
    """Assemble a controller from three checkpoints, refusing mismatched
    observation layouts."""
    meta_net, _ = load_checkpoint(meta_path, expected_obs_dim=obs_dim)
    scoop, _ = load_checkpoint(scoop_path, expected_obs_dim=meta_net.obs_dim)
    approach, _ = load_checkpoint(approach_path,
                                  expected_obs_dim=meta_net.obs_dim)
    return MetaController(meta_net, (scoop, approach))
