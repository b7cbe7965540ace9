"""Proximal policy optimization over vectorized episodes.

Rollout collection steps N_env independent episodes against a read-only
parameter snapshot; the update phase is a single serialized writer. Gradients
of the clipped surrogate, value error, and entropy bonus are assembled by hand
at the distribution heads and pulled back through the MLPs. Truncated episodes
(time limits) are bootstrapped by folding the critic's terminal value into the
last reward; task-success terminals are not.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import envs as E
from . import nets
from .envs import Curriculum, Mode, Outcome, TaskEnv, VecEnv
from .errors import ConfigError, TrainingFault
from .nets import PolicyNet
from .rewards import RewardWeights

TRUNCATION_OUTCOMES = (Outcome.TIME_LIMIT_FAIL, Outcome.TIMEOUT_20S)
# Reaching the approach target ends the episode but not the task's value:
# treating it as a reward cliff teaches deliberate loitering (the dense
# velocity/alignment flow outweighs ever finishing), so it bootstraps too.
APPROACH_TRUNCATIONS = TRUNCATION_OUTCOMES + (Outcome.APPROACH_SUCCESS,)


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 5
    minibatches: int = 4
    learning_rate: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.005
    grad_clip: float = 1.0
    n_env: int = 64
    horizon: int = 100

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ConfigError("gamma and lambda must lie in [0, 1]")
        if self.clip_eps <= 0.0:
            raise ConfigError("clip epsilon must be positive")


def compute_gae(rewards, values, dones, gamma: float, lam: float
                ) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and returns.

    ``values`` carries one extra trailing entry per sequence: the bootstrap
    value for a non-terminal truncation (ignored when the last step is done).
    Advantages are returned unnormalized; see ``normalize_advantages``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    horizon = rewards.shape[-1]
    if dones.shape != rewards.shape or values.shape[-1] != horizon + 1:
        raise ValueError("misaligned GAE inputs")
    adv = np.zeros_like(rewards)
    acc = np.zeros(rewards.shape[:-1])
    for t in range(horizon - 1, -1, -1):
        nonterm = 1.0 - dones[..., t]
        delta = (rewards[..., t] + gamma * values[..., t + 1] * nonterm
                 - values[..., t])
        acc = delta + gamma * lam * nonterm * acc
        adv[..., t] = acc
    return adv, adv + values[..., :horizon]


def normalize_advantages(adv: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    return (adv - adv.mean()) / max(adv.std(), floor)


def clipped_objective(ratio: np.ndarray, adv: np.ndarray, eps: float
                      ) -> np.ndarray:
    """Per-sample PPO surrogate min(rho*A, clip(rho, 1-eps, 1+eps)*A)."""
    return np.minimum(ratio * adv, np.clip(ratio, 1 - eps, 1 + eps) * adv)


class Adam:
    """First-order update with bias-corrected moment estimates."""

    def __init__(self, params: list[np.ndarray], lr: float = 3e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def clip_grad_norm(grads: list[np.ndarray], cap: float) -> float:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > cap:
        scale = cap / total
        for g in grads:
            g *= scale
    return total


class RolloutBuffer:
    """N_env x horizon on-policy storage, cleared after each update."""

    def __init__(self, n_env: int, horizon: int, obs_dim: int, act_dim: int,
                 discrete: bool = False, dtype=np.float64):
        self.n_env, self.horizon = n_env, horizon
        self.obs = np.zeros((n_env, horizon, obs_dim), dtype=dtype)
        if discrete:
            self.actions = np.zeros((n_env, horizon), dtype=np.int64)
        else:
            self.actions = np.zeros((n_env, horizon, act_dim), dtype=dtype)
        self.log_probs = np.zeros((n_env, horizon))
        self.rewards = np.zeros((n_env, horizon))
        self.values = np.zeros((n_env, horizon))
        self.dones = np.zeros((n_env, horizon))
        self.last_values = np.zeros(n_env)
        self.pos = 0

    def add(self, obs, actions, log_probs, rewards, values, dones) -> None:
        t = self.pos
        if t >= self.horizon:
            raise IndexError("rollout buffer is full")
        self.obs[:, t] = obs
        self.actions[:, t] = actions
        self.log_probs[:, t] = log_probs
        self.rewards[:, t] = rewards
        self.values[:, t] = values
        self.dones[:, t] = dones
        self.pos = t + 1

    @property
    def full(self) -> bool:
        return self.pos == self.horizon

    def clear(self) -> None:
        self.pos = 0


def _policy_loss_and_grads(policy: PolicyNet, obs, actions, logp_old, adv,
                           returns, cfg: PpoConfig) -> tuple[dict, list]:
    """One minibatch: losses plus exact gradients in parameters() order."""
    m = obs.shape[0]
    mean, actor_cache = policy.actor.forward(obs)
    values, critic_cache = policy.critic.forward(obs)
    values = values[:, 0]

    if policy.kind == "gaussian":
        std = np.exp(policy.log_std)
        z = (actions - mean) / std
        logp = -0.5 * (z * z).sum(axis=1) - policy.log_std.sum() \
            - 0.5 * policy.act_dim * nets.LOG_2PI
        entropy = float(policy.log_std.sum()
                        + 0.5 * policy.act_dim * (1.0 + nets.LOG_2PI))
    else:
        logp_all = nets.log_softmax(mean)
        probs = np.exp(logp_all)
        idx = actions.astype(int)
        logp = np.take_along_axis(logp_all, idx[:, None], axis=1)[:, 0]
        ent_per = -(probs * logp_all).sum(axis=1)
        entropy = float(ent_per.mean())

    ratio = np.exp(logp - logp_old)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - cfg.clip_eps, 1 + cfg.clip_eps) * adv
    actor_loss = -float(np.minimum(unclipped, clipped).mean())
    value_err = values - returns
    value_loss = float((value_err * value_err).mean())
    total = actor_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    if not math.isfinite(total):
        raise TrainingFault(f"non-finite loss (actor={actor_loss}, "
                            f"value={value_loss}, entropy={entropy})")

    # d(-mean min)/d logp: active branch of the min, or zero outside the band
    use_unclipped = unclipped <= clipped
    in_band = (ratio > 1 - cfg.clip_eps) & (ratio < 1 + cfg.clip_eps)
    dmin_dratio = adv * np.where(use_unclipped, 1.0, in_band)
    g_logp = -(dmin_dratio * ratio) / m

    if policy.kind == "gaussian":
        g_mean = g_logp[:, None] * (z / std)
        grads = policy.actor.backward(actor_cache, g_mean)
        g_logstd = (g_logp[:, None] * (z * z - 1.0)).sum(axis=0)
        g_logstd -= cfg.entropy_coef  # d(-c*H)/d log_std = -c per coordinate
    else:
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, idx[:, None], 1.0, axis=1)
        g_logits = g_logp[:, None] * (onehot - probs)
        # entropy bonus: d(-c*mean H)/dz = (c/m) * p * (log p + H)
        g_logits += (cfg.entropy_coef / m) * probs * (logp_all + ent_per[:, None])
        grads = policy.actor.backward(actor_cache, g_logits)
        g_logstd = None

    g_value = (cfg.value_coef * 2.0 / m) * value_err
    grads = grads + policy.critic.backward(critic_cache, g_value[:, None])
    if g_logstd is not None:
        grads.append(g_logstd)

    kl = float(np.mean(logp_old - logp))
    clip_frac = float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps))
    stats = {"actor_loss": actor_loss, "value_loss": value_loss,
             "entropy": entropy, "kl": kl, "clip_fraction": clip_frac}
    return stats, grads


def ppo_update(policy: PolicyNet, buf: RolloutBuffer, cfg: PpoConfig,
               optimizer: Adam, rng: np.random.Generator) -> dict:
    """Epochs of shuffled-minibatch updates over a full buffer."""
    if not buf.full:
        raise ValueError("buffer must be full before an update")
    n = buf.n_env * buf.horizon
    values_full = np.concatenate([buf.values, buf.last_values[:, None]], axis=1)
    advantages, returns = compute_gae(buf.rewards, values_full, buf.dones,
                                      cfg.gamma, cfg.lam)
    adv = normalize_advantages(advantages.reshape(-1))
    ret = returns.reshape(-1)
    obs = buf.obs.reshape(n, -1)
    if policy.kind == "gaussian":
        actions = buf.actions.reshape(n, -1)
    else:
        actions = buf.actions.reshape(n)
    logp_old = buf.log_probs.reshape(n)

    agg: dict[str, float] = {}
    count = 0
    dtype = policy.dtype
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for mb in np.array_split(order, cfg.minibatches):
            stats, grads = _policy_loss_and_grads(
                policy, obs[mb].astype(dtype, copy=False),
                actions[mb], logp_old[mb], adv[mb], ret[mb], cfg)
            if any(not np.all(np.isfinite(g)) for g in grads):
                raise TrainingFault("non-finite gradient")
            clip_grad_norm(grads, cfg.grad_clip)
            optimizer.step([g.astype(dtype, copy=False) for g in grads])
            policy.clamp_log_std()
            for k, v in stats.items():
                agg[k] = agg.get(k, 0.0) + v
            count += 1
    buf.clear()
    return {k: v / count for k, v in agg.items()}


@dataclass
class TrainStatus:
    iteration: int = 0
    env_steps: int = 0
    episodes: int = 0
    success_window: list = field(default_factory=list)
    loaded_window: list = field(default_factory=list)

    def success_rate(self) -> float:
        w = self.success_window[-100:]
        return sum(w) / len(w) if w else 0.0

    def mean_loaded(self) -> float:
        w = self.loaded_window[-100:]
        return sum(w) / len(w) if w else 0.0


class Trainer:
    """Rollout/update alternation for one policy in one mode.

    For meta mode, pass frozen ``experts`` (scoop-toss, approach); the sampled
    categorical index selects which expert's deterministic action drives the
    environment, and only the categorical policy is optimized.
    """

    def __init__(self, mode: Mode, cfg: PpoConfig, *, seed: int,
                 run_dir: str | Path,
                 weights: RewardWeights | None = None,
                 sim_params=None, curriculum: Curriculum | None = None,
                 sti_buffer=None, experts: tuple[PolicyNet, PolicyNet] | None = None,
                 object_spec=None, n_objects: int = 5,
                 meta_time_limit: float = 60.0, dtype=np.float32,
                 init_policy: PolicyNet | None = None,
                 checkpoint_every: int = 200):
        if mode is Mode.META and experts is None:
            raise ConfigError("meta training requires both expert policies")
        if sti_buffer is not None and sti_buffer.source_tag == mode.value:
            raise ConfigError(
                f"fine-tuning {mode.value} must draw initial states from the "
                f"other expert's buffer, got tag {sti_buffer.source_tag!r}")
        self.mode = mode
        self.cfg = cfg
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.checkpoint_every = checkpoint_every
        self.experts = experts
        self.seed = seed

        children = np.random.SeedSequence(seed).spawn(3 + cfg.n_env)
        init_rng = np.random.default_rng(children[0])
        self.act_rng = np.random.default_rng(children[1])
        self.upd_rng = np.random.default_rng(children[2])
        env_ss = children[3:]
        if mode is Mode.META:
            self.policy = PolicyNet(E.OBS_DIM, 2, kind="categorical",
                                    seed=init_rng, dtype=dtype)
        else:
            self.policy = PolicyNet(E.OBS_DIM, E.ACT_DIM, kind="gaussian",
                                    seed=init_rng, dtype=dtype)
        if init_policy is not None:
            for dst, src in zip(self.policy.parameters(),
                                init_policy.parameters()):
                dst[...] = src.astype(dtype)

        self.curriculum = curriculum if curriculum is not None else (
            Curriculum() if mode is Mode.SCOOP_TOSS else None)
        sampler = sti_buffer.sampler() if sti_buffer is not None else None
        task_envs = [TaskEnv(mode, seed=s, curriculum=self.curriculum,
                             weights=weights, params=sim_params,
                             object_spec=object_spec, n_objects=n_objects,
                             meta_time_limit=meta_time_limit,
                             sti_sampler=sampler)
                     for s in env_ss]
        self.vec = VecEnv(task_envs, curriculum=self.curriculum)
        self.buffer = RolloutBuffer(cfg.n_env, cfg.horizon, E.OBS_DIM,
                                    E.ACT_DIM, discrete=(mode is Mode.META),
                                    dtype=dtype)
        self.optimizer = Adam(self.policy.parameters(), lr=cfg.learning_rate)
        self.status = TrainStatus()
        self.metrics_path = self.run_dir / "metrics.csv"
        self._metrics_file = None
        self._obs = None

    # --- rollout ----------------------------------------------------------
    def _expert_actions(self, obs: np.ndarray, idx: np.ndarray) -> np.ndarray:
        acts = np.zeros((obs.shape[0], E.ACT_DIM))
        for e, expert in enumerate(self.experts):
            mask = idx == e
            if mask.any():
                acts[mask] = expert.mean_action(obs[mask])
        return acts

    def collect(self) -> float:
        cfg = self.cfg
        policy = self.policy
        if self._obs is None:
            self._obs = self.vec.reset_all()
        obs = self._obs
        reward_sum = 0.0
        dtype = policy.dtype
        for _ in range(cfg.horizon):
            obs_t = obs.astype(dtype, copy=False)
            acts, logps, vals = policy.sample(obs_t, self.act_rng)
            env_actions = self._expert_actions(obs_t, acts) \
                if self.mode is Mode.META else acts
            next_obs, rews, dones, infos = self.vec.step(env_actions)
            truncations = APPROACH_TRUNCATIONS \
                if self.mode is Mode.APPROACH else TRUNCATION_OUTCOMES
            for i, info in enumerate(infos):
                if info is None:
                    continue
                outcome, terminal_obs, n_loaded = info
                if outcome in truncations:
                    tv = policy.value(terminal_obs[None].astype(dtype))[0]
                    rews[i] += cfg.gamma * float(tv)
                self.status.episodes += 1
                if self.mode is Mode.META:
                    self.status.loaded_window.append(n_loaded)
                    self.status.success_window.append(
                        outcome is Outcome.SUCCESS_LOAD)
                elif self.mode is Mode.APPROACH:
                    self.status.success_window.append(
                        outcome is Outcome.APPROACH_SUCCESS)
                else:
                    self.status.success_window.append(
                        outcome is Outcome.SUCCESS_LOAD)
            self.buffer.add(obs_t, acts, logps, rews, vals, dones)
            reward_sum += float(rews.sum())
            obs = next_obs
        self._obs = obs
        self.buffer.last_values = policy.value(obs.astype(dtype, copy=False))
        self.status.env_steps += cfg.n_env * cfg.horizon
        return reward_sum / (cfg.n_env * cfg.horizon)

    # --- logging / checkpoints ---------------------------------------------
    def _log(self, mean_reward: float, stats: dict) -> None:
        if self._metrics_file is None:
            fresh = not self.metrics_path.exists()
            self._metrics_file = open(self.metrics_path, "a", newline="")
            self._writer = csv.writer(self._metrics_file)
            if fresh:
                self._writer.writerow(
                    ["iteration", "env_steps", "mean_reward", "success_rate",
                     "curriculum_level", "kl", "clip_fraction", "entropy",
                     "actor_loss", "value_loss"])
        level = self.curriculum.level if self.curriculum else 0
        sr = (self.status.mean_loaded() if self.mode is Mode.META
              else self.status.success_rate())
        self._writer.writerow(
            [self.status.iteration, self.status.env_steps,
             f"{mean_reward:.6f}", f"{sr:.4f}", level,
             f"{stats['kl']:.6g}", f"{stats['clip_fraction']:.4f}",
             f"{stats['entropy']:.6g}", f"{stats['actor_loss']:.6g}",
             f"{stats['value_loss']:.6g}"])
        self._metrics_file.flush()

    def save(self, name: str = "policy_latest.bin") -> Path:
        path = self.run_dir / name
        nets.save_checkpoint(
            self.policy, path, seed_lineage=f"seed={self.seed}",
            metadata={"mode": self.mode.value,
                      "iteration": self.status.iteration,
                      "env_steps": self.status.env_steps,
                      "curriculum_level":
                          self.curriculum.level if self.curriculum else 0,
                      "curriculum_radius":
                          self.curriculum.radius if self.curriculum else 0.0})
        return path

    # --- main loop ----------------------------------------------------------
    def run(self, *, iterations: int | None = None,
            max_minutes: float | None = None,
            target_success: float | None = None,
            min_episodes_for_target: int = 100,
            quiet: bool = False) -> Path:
        start = time.monotonic()
        while True:
            mean_reward = self.collect()
            stats = ppo_update(self.policy, self.buffer, self.cfg,
                               self.optimizer, self.upd_rng)
            self.status.iteration += 1
            self._log(mean_reward, stats)
            it = self.status.iteration
            if not quiet and (it % 10 == 0 or it == 1):
                level = self.curriculum.level if self.curriculum else "-"
                sr = (self.status.mean_loaded() if self.mode is Mode.META
                      else self.status.success_rate())
                mins = (time.monotonic() - start) / 60.0
                print(f"[{self.mode.value}] iter {it} steps "
                      f"{self.status.env_steps} reward {mean_reward:.3f} "
                      f"success {sr:.3f} level {level} ({mins:.1f} min)",
                      flush=True)
            if it % self.checkpoint_every == 0:
                self.save()
            done = False
            if iterations is not None and it >= iterations:
                done = True
            if max_minutes is not None and \
                    (time.monotonic() - start) / 60.0 >= max_minutes:
                done = True
            if (target_success is not None
                    and self.status.episodes >= min_episodes_for_target
                    and len(self.status.success_window) >= 50):
                sr = (self.status.mean_loaded() if self.mode is Mode.META
                      else self.status.success_rate())
                if sr >= target_success:
                    done = True
            if done:
                break
        path = self.save("policy_final.bin")
        self.save()
        if self._metrics_file is not None:
            self._metrics_file.close()
            self._metrics_file = None
        # wall-clock provenance lives apart from the deterministic metrics
        info = {"wall_minutes": (time.monotonic() - start) / 60.0,
                "iterations": self.status.iteration,
                "env_steps": self.status.env_steps,
                "episodes": self.status.episodes,
                "final_success":
                    self.status.mean_loaded() if self.mode is Mode.META
                    else self.status.success_rate(),
                "curriculum_level":
                    self.curriculum.level if self.curriculum else 0,
                "seed": self.seed, "mode": self.mode.value}
        import json
        (self.run_dir / "run_info.json").write_text(json.dumps(info, indent=1))
        return path
