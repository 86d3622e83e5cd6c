"""Policy-gradient training of the prompt matcher."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .policy import (
    AdamWState,
    PolicyParams,
    RunningNormalizer,
    Transition,
    init_policy,
    lr_schedule,
    policy_forward,
    policy_gradient_update,
    sample_action,
)
from .providers import Provider, ProviderError
from .sue import sue_score
from .task import LabeledExample, Prompt, TaskSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr0: float = 1e-3
    lr_floor: float = 1e-4
    eps: float = 1e-5
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    hidden_dim: int = 600
    entropy_coef: Optional[float] = None  # None: take the task's value
    # episodes are a single step, so the discount never enters any computation
    gamma: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")


@dataclass
class EpochStats:
    epoch: int
    lr: float
    mean_reward: float
    loss: float
    entropy: float


@dataclass
class TrainResult:
    params: PolicyParams
    state_norm: RunningNormalizer
    reward_norm: RunningNormalizer
    report: list[EpochStats] = field(default_factory=list)


class TrainingAborted(RuntimeError):
    def __init__(self, message: str, epoch: int, resume_path: Optional[Path]):
        super().__init__(f"{message} (epoch {epoch}; resume state: {resume_path})")
        self.epoch = epoch
        self.resume_path = resume_path


@dataclass
class _Snapshot:
    epoch: int
    params: PolicyParams
    opt: AdamWState
    state_norm: RunningNormalizer
    reward_norm: RunningNormalizer
    rng_state: dict
    report: list[EpochStats]


def _snapshot(epoch, params, opt, state_norm, reward_norm, rng, report) -> _Snapshot:
    o = AdamWState(opt.lr, opt.betas, opt.eps, opt.weight_decay, opt.step,
                   [a.copy() for a in opt.m], [a.copy() for a in opt.v])
    return _Snapshot(epoch, params.copy(), o, state_norm.copy(), reward_norm.copy(),
                     rng.bit_generator.state, list(report))


def save_resume_state(path: str | Path, snap: _Snapshot) -> None:
    meta = {
        "epoch": snap.epoch, "rng": snap.rng_state, "opt_step": snap.opt.step,
        "state_count": snap.state_norm.count, "reward_count": snap.reward_norm.count,
        "report": [asdict(r) for r in snap.report],
    }
    arrays = {"w1": snap.params.w1, "w2": snap.params.w2,
              "state_mean": snap.state_norm.mean, "state_m2": snap.state_norm.m2,
              "reward_mean": snap.reward_norm.mean, "reward_m2": snap.reward_norm.m2}
    if snap.opt.m:
        arrays.update(m1=snap.opt.m[0], m2=snap.opt.m[1], v1=snap.opt.v[0], v2=snap.opt.v[1])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_resume_state(path: str | Path, cfg: TrainConfig) -> _Snapshot:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        params = PolicyParams(z["w1"], z["w2"])
        opt = AdamWState(cfg.lr0, tuple(cfg.betas), cfg.eps, cfg.weight_decay, meta["opt_step"])
        if "m1" in z:
            opt.m = [z["m1"].copy(), z["m2"].copy()]
            opt.v = [z["v1"].copy(), z["v2"].copy()]
        sn = RunningNormalizer((params.state_dim,), count=meta["state_count"], mean=z["state_mean"].copy(),
                               m2=z["state_m2"].copy())
        rn = RunningNormalizer((), count=meta["reward_count"], mean=z["reward_mean"].copy(),
                               m2=z["reward_m2"].copy())
    return _Snapshot(meta["epoch"], params, opt, sn, rn, meta["rng"], [EpochStats(**r) for r in meta["report"]])


def embed_input(provider: Provider, example: LabeledExample) -> np.ndarray:
    return provider.embed(example.joined)


def train(provider: Provider, train_set: Sequence[LabeledExample], prompts: Sequence[Prompt], task: TaskSpec,
          cfg: TrainConfig = TrainConfig(), *, resume_from: Optional[str | Path] = None,
          abort_path: Optional[str | Path] = None) -> TrainResult:
    """Train the matcher; one (state, action, reward) interaction per training input per epoch.

    On a provider failure the state at the start of the failing epoch is written to
    `abort_path` (if given) and :class:`TrainingAborted` is raised; pass that file
    as `resume_from` to continue.
    """
    if not train_set:
        raise ValueError("empty training set")
    action_dim = len(prompts)
    if action_dim < 1:
        raise ValueError("no prompts to match")
    entropy_coef = task.entropy_coef if cfg.entropy_coef is None else cfg.entropy_coef
    state_dim = provider.state_dim

    if resume_from is not None:
        snap = load_resume_state(resume_from, cfg)
        if snap.params.dims != (state_dim, cfg.hidden_dim, action_dim):
            raise ValueError(f"resume state dims {snap.params.dims} do not fit this run")
        start, params, opt = snap.epoch, snap.params, snap.opt
        state_norm, reward_norm, report = snap.state_norm, snap.reward_norm, snap.report
        rng = np.random.default_rng()
        rng.bit_generator.state = snap.rng_state
    else:
        start = 0
        params = init_policy(state_dim, cfg.hidden_dim, action_dim, cfg.seed)
        opt = AdamWState(cfg.lr0, tuple(cfg.betas), cfg.eps, cfg.weight_decay)
        state_norm = RunningNormalizer((state_dim,))
        reward_norm = RunningNormalizer(())
        report = []
        rng = np.random.default_rng([cfg.seed, 1])

    embeddings: dict[int, np.ndarray] = {}
    rewards: dict[tuple[int, int], float] = {}

    def reward(a: int, i: int) -> float:
        key = (a, i)
        if key not in rewards:
            rewards[key] = sue_score(provider, prompts[a], [train_set[i]], task).sue
        return rewards[key]

    n = len(train_set)
    for epoch in range(start, cfg.epochs):
        snap = _snapshot(epoch, params, opt, state_norm, reward_norm, rng, report)
        lr = lr_schedule(cfg.lr0, epoch, cfg.epochs, cfg.lr_floor)
        try:
            buffer = []
            for i in rng.permutation(n):
                i = int(i)
                if i not in embeddings:
                    embeddings[i] = embed_input(provider, train_set[i])
                s = embeddings[i]
                state_norm.update(s)
                s_n = state_norm.normalize(s)
                probs, _ = policy_forward(params, s_n)
                a = sample_action(probs, rng)
                r = reward(a, i)
                reward_norm.update(r)
                buffer.append(Transition(s_n, a, r, float(reward_norm.normalize(r))))
        except ProviderError as e:
            path = None
            if abort_path is not None:
                path = Path(abort_path)
                save_resume_state(path, snap)
            raise TrainingAborted(f"provider failure: {e}", epoch, path) from e

        order = rng.permutation(len(buffer))
        losses, ents = [], []
        for lo in range(0, len(buffer), cfg.batch_size):
            batch = [buffer[j] for j in order[lo:lo + cfg.batch_size]]
            params, loss, ent = policy_gradient_update(params, batch, lr, entropy_coef, opt)
            losses.append(loss)
            ents.append(ent)
        stats = EpochStats(epoch, lr, float(np.mean([t.reward_raw for t in buffer])),
                           float(np.mean(losses)), float(np.mean(ents)))
        report.append(stats)
        log.debug("epoch %d lr=%.2e reward=%.4f loss=%.4f entropy=%.4f", epoch, lr, stats.mean_reward,
                  stats.loss, stats.entropy)
    return TrainResult(params, state_norm, reward_norm, report)


def write_report(report: Sequence[EpochStats], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in report:
            fh.write(json.dumps(asdict(row), sort_keys=True) + "\n")
