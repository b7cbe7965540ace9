"""MLP actor/critic pairs with hand-written reverse-mode gradients.

Hidden stack is fixed at 256/128/64 ELU units; the actor head is a diagonal
Gaussian with a state-independent learnable log-std (experts) or a 2-way
categorical (the switching policy). Forward passes cache activations so the
exact gradient of any scalar loss can be pulled back through the stack.
Checkpoints are versioned little-endian binaries with a manifest header and
round-trip bit-exactly.
"""
from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

HIDDEN = (256, 128, 64)
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_STD_INIT = math.log(0.5)
LOG_2PI = math.log(2.0 * math.pi)

_MAGIC = b"STCP"
_VERSION = 1


def elu(z: np.ndarray) -> np.ndarray:
    out = z.copy()
    neg = z < 0
    out[neg] = np.expm1(z[neg])
    return out


def _elu_grad_from_post(h: np.ndarray) -> np.ndarray:
    # elu'(z) = 1 for z > 0 else exp(z) = elu(z) + 1; recoverable from output
    return np.where(h > 0, 1.0, h + 1.0)


def orthogonal(rng: np.random.Generator, n_in: int, n_out: int,
               gain: float, dtype) -> np.ndarray:
    a = rng.standard_normal((n_in, n_out))
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    q = u if u.shape == (n_in, n_out) else vt
    return np.ascontiguousarray(gain * q, dtype=dtype)


class Mlp:
    """Plain fully-connected net: ELU hidden layers, identity output."""

    def __init__(self, sizes, rng=None, out_gain: float = 0.01,
                 dtype=np.float64):
        self.sizes = list(sizes)
        self.dtype = np.dtype(dtype)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        if rng is None:
            rng = np.random.default_rng()
        last = len(sizes) - 2
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_gain if i == last else 1.0
            self.weights.append(orthogonal(rng, a, b, gain, self.dtype))
            self.biases.append(np.zeros(b, dtype=self.dtype))

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns (output, cache); cache holds each layer's input."""
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ValueError(f"expected (N, {self.sizes[0]}) input, "
                             f"got {x.shape}")
        acts = [x]
        h = x
        for i in range(len(self.weights) - 1):
            h = elu(h @ self.weights[i] + self.biases[i])
            acts.append(h)
        out = h @ self.weights[-1] + self.biases[-1]
        return out, acts

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, acts: list[np.ndarray], grad_out: np.ndarray
                 ) -> list[np.ndarray]:
        """Exact gradients of a scalar loss wrt every parameter, given
        d(loss)/d(output). Returned in ``parameters()`` order."""
        n_layers = len(self.weights)
        grads_w: list = [None] * n_layers
        grads_b: list = [None] * n_layers
        g = grad_out
        for i in range(n_layers - 1, -1, -1):
            grads_w[i] = acts[i].T @ g
            grads_b[i] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * _elu_grad_from_post(acts[i])
        return grads_w + grads_b

    def parameters(self) -> list[np.ndarray]:
        return self.weights + self.biases


class PolicyNet:
    """Actor + critic of identical hidden shape over the same observation."""

    def __init__(self, obs_dim: int, act_dim: int, kind: str = "gaussian",
                 seed: int | np.random.Generator = 0, dtype=np.float64,
                 hidden=HIDDEN):
        if kind not in ("gaussian", "categorical"):
            raise ValueError(f"unknown head kind {kind!r}")
        rng = seed if isinstance(seed, np.random.Generator) \
            else np.random.default_rng(seed)
        self.kind = kind
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = tuple(hidden)
        self.dtype = np.dtype(dtype)
        self.actor = Mlp([obs_dim, *hidden, act_dim], rng, dtype=dtype)
        self.critic = Mlp([obs_dim, *hidden, 1], rng, dtype=dtype)
        if kind == "gaussian":
            self.log_std = np.full(act_dim, LOG_STD_INIT, dtype=self.dtype)
        else:
            self.log_std = None

    # --- parameter access -------------------------------------------------
    def parameters(self) -> list[np.ndarray]:
        ps = self.actor.parameters() + self.critic.parameters()
        if self.log_std is not None:
            ps.append(self.log_std)
        return ps

    def clamp_log_std(self) -> None:
        if self.log_std is not None:
            np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    # --- inference --------------------------------------------------------
    def value(self, obs: np.ndarray) -> np.ndarray:
        return self.critic(np.atleast_2d(obs))[:, 0]

    def mean_action(self, obs: np.ndarray) -> np.ndarray:
        """Deterministic head output: Gaussian mean, or categorical argmax
        (ties resolve to the lowest index)."""
        out = self.actor(np.atleast_2d(obs))
        if self.kind == "gaussian":
            return out
        return np.argmax(out, axis=1)

    def sample(self, obs: np.ndarray, rng: np.random.Generator
               ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stochastic action, its log-density, and the value, batched."""
        obs = np.atleast_2d(obs)
        out = self.actor(obs)
        val = self.critic(obs)[:, 0]
        if self.kind == "gaussian":
            std = np.exp(self.log_std)
            eps = rng.standard_normal(out.shape)
            act = out + std * eps
            logp = gaussian_log_prob(act, out, self.log_std)
        else:
            logp_all = log_softmax(out)
            u = rng.random(out.shape[0])
            cdf = np.cumsum(np.exp(logp_all), axis=1)
            act = np.minimum((u[:, None] > cdf).sum(axis=1), out.shape[1] - 1)
            logp = np.take_along_axis(logp_all, act[:, None], axis=1)[:, 0]
        return act, logp, val

    def log_prob(self, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        out = self.actor(np.atleast_2d(obs))
        if self.kind == "gaussian":
            return gaussian_log_prob(actions, out, self.log_std)
        return np.take_along_axis(log_softmax(out),
                                  actions[:, None].astype(int), axis=1)[:, 0]


def gaussian_log_prob(act: np.ndarray, mean: np.ndarray,
                      log_std: np.ndarray) -> np.ndarray:
    z = (act - mean) / np.exp(log_std)
    return -0.5 * (z * z).sum(axis=1) - log_std.sum() \
        - 0.5 * act.shape[1] * LOG_2PI


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


# --- checkpoint io ---------------------------------------------------------

def _net_arrays(policy: PolicyNet) -> list[tuple[str, np.ndarray]]:
    named = []
    for tag, net in (("actor", policy.actor), ("critic", policy.critic)):
        for i, w in enumerate(net.weights):
            named.append((f"{tag}.w{i}", w))
        for i, b in enumerate(net.biases):
            named.append((f"{tag}.b{i}", b))
    if policy.log_std is not None:
        named.append(("log_std", policy.log_std))
    return named


def save_checkpoint(policy: PolicyNet, path, *, seed_lineage: str = "",
                    metadata: dict | None = None) -> None:
    arrays = _net_arrays(policy)
    manifest = {
        "kind": policy.kind,
        "obs_dim": policy.obs_dim,
        "act_dim": policy.act_dim,
        "hidden": list(policy.hidden),
        "dtype": policy.dtype.str,          # e.g. "<f8"
        "arrays": [[name, list(a.shape)] for name, a in arrays],
        "seed_lineage": seed_lineage,
        "metadata": metadata or {},
    }
    blob = json.dumps(manifest).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(blob)))
        f.write(blob)
        for _, a in arrays:
            f.write(np.ascontiguousarray(a, dtype=policy.dtype.newbyteorder("<"))
                    .tobytes())


def load_checkpoint(path, *, expected_obs_dim: int | None = None
                    ) -> tuple[PolicyNet, dict]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:4] != _MAGIC:
        raise CheckpointError(f"{path} is not a policy checkpoint")
    version, blob_len = struct.unpack("<II", raw[4:12])
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version "
                              f"{version} (expected {_VERSION})")
    manifest = json.loads(raw[12:12 + blob_len].decode("utf-8"))
    if expected_obs_dim is not None and manifest["obs_dim"] != expected_obs_dim:
        raise CheckpointError(
            f"{path}: observation layout mismatch "
            f"(file {manifest['obs_dim']}, expected {expected_obs_dim})")
    dtype = np.dtype(manifest["dtype"])
    policy = PolicyNet(manifest["obs_dim"], manifest["act_dim"],
                       kind=manifest["kind"], dtype=dtype,
                       hidden=manifest["hidden"])
    offset = 12 + blob_len
    targets = dict(_net_arrays(policy))
    for name, shape in manifest["arrays"]:
        n = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(raw, dtype=dtype.newbyteorder("<"),
                          count=n, offset=offset).astype(dtype).reshape(shape)
        offset += n * dtype.itemsize
        if name not in targets:
            raise CheckpointError(f"{path}: unexpected array {name!r}")
        if targets[name].shape != a.shape:
            raise CheckpointError(f"{path}: shape mismatch for {name!r}")
        targets[name][...] = a
    return policy, manifest
