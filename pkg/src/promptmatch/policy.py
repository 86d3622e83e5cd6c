"""Two-layer softmax policy, running normalizers, AdamW and checkpoints."""
from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import kernels

CHECKPOINT_MAGIC = b"PMPOLICY\x00\x01"
_HEADER = struct.Struct("<QQQQQ")


class CheckpointError(ValueError):
    pass


class DimensionError(ValueError):
    pass


@dataclass
class PolicyParams:
    """``softmax(w2 @ tanh(w1 @ s))`` with w1: hidden x state, w2: action x hidden; no biases."""

    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self):
        self.w1 = np.ascontiguousarray(self.w1, dtype=np.float64)
        self.w2 = np.ascontiguousarray(self.w2, dtype=np.float64)
        if self.w1.ndim != 2 or self.w2.ndim != 2 or self.w2.shape[1] != self.w1.shape[0]:
            raise DimensionError(f"incompatible shapes {self.w1.shape} and {self.w2.shape}")

    @property
    def state_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def action_dim(self) -> int:
        return self.w2.shape[0]

    @property
    def num_parameters(self) -> int:
        return self.w1.size + self.w2.size

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.state_dim, self.hidden_dim, self.action_dim

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.w1.copy(), self.w2.copy())


def init_policy(state_dim: int, hidden_dim: int, action_dim: int, seed: int) -> PolicyParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights from a seeded generator."""
    if min(state_dim, hidden_dim, action_dim) < 1:
        raise DimensionError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    b1 = 1.0 / math.sqrt(state_dim)
    b2 = 1.0 / math.sqrt(hidden_dim)
    w1 = rng.uniform(-b1, b1, size=(hidden_dim, state_dim))
    w2 = rng.uniform(-b2, b2, size=(action_dim, hidden_dim))
    return PolicyParams(w1, w2)


def policy_forward(params: PolicyParams, state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (action probabilities, hidden activations)."""
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (params.state_dim,):
        raise DimensionError(f"state has shape {state.shape}, policy expects ({params.state_dim},)")
    hidden, probs = kernels.forward(params.w1, params.w2, state)
    return probs, hidden


def sample_action(dist: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF categorical draw using one uniform from `rng`."""
    cdf = np.cumsum(dist)
    u = rng.random() * cdf[-1]
    i = int(np.searchsorted(cdf, u, side="right"))
    return min(i, len(dist) - 1)


@dataclass
class RunningNormalizer:
    """Streaming mean/variance (Welford) z-scoring; population variance."""

    shape: tuple = ()
    eps: float = 1e-8
    count: int = 0
    mean: np.ndarray = None
    m2: np.ndarray = None

    def __post_init__(self):
        self.shape = tuple(self.shape)
        if self.mean is None:
            self.mean = np.zeros(self.shape)
        if self.m2 is None:
            self.m2 = np.zeros(self.shape)

    @property
    def var(self) -> np.ndarray:
        return self.m2 / self.count if self.count > 0 else np.zeros(self.shape)

    def update(self, x) -> None:
        x = np.asarray(x, dtype=np.float64)
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (x - self.mean)

    def normalize(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.count < 2:
            return x - self.mean
        return (x - self.mean) / np.sqrt(self.var + self.eps)

    def copy(self) -> "RunningNormalizer":
        return RunningNormalizer(self.shape, self.eps, self.count, np.array(self.mean), np.array(self.m2))


@dataclass
class AdamWState:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-5
    weight_decay: float = 0.01
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def ensure(self, params: PolicyParams) -> None:
        if not self.m:
            self.m = [np.zeros_like(params.w1), np.zeros_like(params.w2)]
            self.v = [np.zeros_like(params.w1), np.zeros_like(params.w2)]


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward_raw: float
    reward_norm: float


def batch_arrays(batch: Sequence[Transition]):
    states = np.stack([t.state for t in batch])
    actions = np.fromiter((t.action for t in batch), dtype=np.int64, count=len(batch))
    adv = np.fromiter((t.reward_norm for t in batch), dtype=np.float64, count=len(batch))
    return states, actions, adv


def policy_loss(params: PolicyParams, states, actions, advantages, entropy_coef: float):
    """(loss, mean entropy, grad_w1, grad_w2) for a batch."""
    return kernels.loss_and_grad(params.w1, params.w2, states, actions, advantages, entropy_coef)


def policy_gradient_update(params: PolicyParams, batch: Sequence[Transition], lr: float, entropy_coef: float,
                           opt: AdamWState) -> tuple[PolicyParams, float, float]:
    """One AdamW step on the entropy-regularized policy-gradient loss.

    The normalized reward is the advantage. Parameters are updated in place and
    returned along with the pre-step loss and mean entropy. An all-zero gradient
    is not a step: weights and optimizer state stay put.
    """
    if not batch:
        raise ValueError("empty batch")
    states, actions, adv = batch_arrays(batch)
    if states.shape[1] != params.state_dim or actions.max() >= params.action_dim or actions.min() < 0:
        raise DimensionError("batch does not fit the policy dimensions")
    loss, ent, g1, g2 = policy_loss(params, states, actions, adv, entropy_coef)
    if not (math.isfinite(loss) and np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))):
        raise NonFiniteGradient(f"non-finite loss/gradient (loss={loss}, |g1|max={np.abs(g1).max()}, "
                                f"|g2|max={np.abs(g2).max()})")
    if not (g1.any() or g2.any()):
        return params, loss, ent
    opt.ensure(params)
    opt.step += 1
    b1, b2 = opt.betas
    for p, g, m, v in ((params.w1, g1, opt.m[0], opt.v[0]), (params.w2, g2, opt.m[1], opt.v[1])):
        kernels.adamw_step(p, g, m, v, opt.step, lr, b1, b2, opt.eps, opt.weight_decay)
    return params, loss, ent


def lr_schedule(lr0: float, epoch: int, epoch_max: int, floor: float = 1e-4) -> float:
    """Linear decay from lr0, clamped below at `floor`."""
    return max(floor, lr0 * (1.0 - epoch / epoch_max))


def _pack(params: PolicyParams, state_norm: RunningNormalizer, reward_norm: RunningNormalizer) -> bytes:
    parts = [CHECKPOINT_MAGIC,
             _HEADER.pack(params.state_dim, params.hidden_dim, params.action_dim, state_norm.count, reward_norm.count)]
    for arr in (params.w1, params.w2, state_norm.mean, state_norm.m2, reward_norm.mean, reward_norm.m2):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(path: str | Path, params: PolicyParams, state_norm: RunningNormalizer,
                    reward_norm: RunningNormalizer) -> None:
    """Magic, header (dims and normalizer counts), then little-endian float64 arrays, row-major."""
    if state_norm.mean.shape != (params.state_dim,):
        raise DimensionError("state normalizer does not match state dim")
    blob = _pack(params, state_norm, reward_norm)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path: str | Path, expect_dims: Optional[tuple[int, int, int]] = None):
    """Returns (params, state normalizer, reward normalizer)."""
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a policy checkpoint")
    off = len(CHECKPOINT_MAGIC)
    if len(data) < off + _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    sd, hd, ad, sc, rc = _HEADER.unpack_from(data, off)
    off += _HEADER.size
    if expect_dims is not None and (sd, hd, ad) != tuple(expect_dims):
        raise DimensionError(f"{path}: checkpoint dims {(sd, hd, ad)} do not match expected {tuple(expect_dims)}")
    sizes = [hd * sd, ad * hd, sd, sd, 1, 1]
    if len(data) != off + 8 * sum(sizes):
        raise CheckpointError(f"{path}: expected {off + 8 * sum(sizes)} bytes, found {len(data)}")
    arrays = []
    for n in sizes:
        arrays.append(np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(np.float64))
        off += 8 * n
    w1, w2, smean, sm2, rmean, rm2 = arrays
    params = PolicyParams(w1.reshape(hd, sd), w2.reshape(ad, hd))
    state_norm = RunningNormalizer((sd,), count=sc, mean=smean, m2=sm2)
    reward_norm = RunningNormalizer((), count=rc, mean=rmean.reshape(()), m2=rm2.reshape(()))
    return params, state_norm, reward_norm
