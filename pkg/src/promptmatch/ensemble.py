"""Test-time prompt selection and probability-weighted ensembling."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .policy import PolicyParams, RunningNormalizer, policy_forward
from .providers import LabelDistribution, Provider, ProviderError
from .task import LabeledExample, Prompt, TaskSpec, render_query
from .training import embed_input

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class EnsemblePrediction:
    probs: tuple[float, ...]
    actions: tuple[int, ...]
    weights: tuple[float, ...]
    prompt_dists: tuple[tuple[float, ...], ...]

    @property
    def label(self) -> int:
        return int(np.argmax(self.probs))


def top_k_actions(dist: Sequence[float], k: int) -> list[tuple[int, float]]:
    """The k most probable actions, descending; equal probabilities go to the lower index."""
    p = np.asarray(dist, dtype=np.float64)
    if not 1 <= k <= len(p):
        raise ValueError(f"k={k} outside [1, {len(p)}]")
    order = np.lexsort((np.arange(len(p)), -p))[:k]
    return [(int(i), float(p[i])) for i in order]


def combine(dists: Sequence[Sequence[float]], weights: Sequence[float]) -> np.ndarray:
    """softmax over classes of sum_j w_j * log p_j(c), with p floored at 1e-12."""
    logits = np.zeros(len(dists[0]))
    for w, d in zip(weights, dists):
        logits = logits + w * np.log(np.maximum(np.asarray(d, dtype=np.float64), PROB_FLOOR))
    z = np.exp(logits - logits.max())
    return z / z.sum()


def ensemble_predict(provider: Provider, params: PolicyParams, state_norm: RunningNormalizer,
                     prompts: Sequence[Prompt], example: LabeledExample, task: TaskSpec,
                     k: Optional[int] = None, renormalize: bool = False) -> EnsemblePrediction:
    """Pick the top-k prompts for `example` under the policy and combine their label distributions.

    Weights are the raw policy probabilities unless `renormalize` is set.
    Normalizer statistics are used as-is, never updated.
    """
    if len(prompts) != params.action_dim:
        raise ValueError(f"{len(prompts)} prompts for a policy with {params.action_dim} actions")
    k = task.top_k if k is None else k
    state = state_norm.normalize(embed_input(provider, example))
    pi, _ = policy_forward(params, state)
    chosen = top_k_actions(pi, k)
    weights = [w for _, w in chosen]
    if renormalize:
        total = math.fsum(weights)
        weights = [w / total for w in weights]
    dists = []
    for a, _ in chosen:
        try:
            dists.append(provider.score_labels(render_query(prompts[a], example, task), task).probs)
        except ProviderError as e:
            raise type(e)(f"prompt #{a}: {e}") from e
    probs = combine(dists, weights)
    return EnsemblePrediction(tuple(float(x) for x in probs), tuple(a for a, _ in chosen), tuple(weights),
                              tuple(dists))


@dataclass
class EvalResult:
    accuracy: float
    confusion: list[list[int]]
    predictions: list[EnsemblePrediction]

    def metrics(self) -> dict:
        return {"accuracy": self.accuracy, "confusion": self.confusion, "n": len(self.predictions)}


def evaluate(provider: Provider, params: PolicyParams, state_norm: RunningNormalizer, prompts: Sequence[Prompt],
             test_set: Sequence[LabeledExample], task: TaskSpec, k: Optional[int] = None,
             renormalize: bool = False) -> EvalResult:
    """Accuracy and confusion counts (rows: gold, columns: predicted)."""
    if not test_set:
        raise ValueError("empty test set")
    c = task.num_labels
    confusion = [[0] * c for _ in range(c)]
    preds = []
    for z in test_set:
        pred = ensemble_predict(provider, params, state_norm, prompts, z, task, k=k, renormalize=renormalize)
        confusion[z.label][pred.label] += 1
        preds.append(pred)
    correct = sum(confusion[i][i] for i in range(c))
    return EvalResult(correct / len(test_set), confusion, preds)


def prediction_record(example: LabeledExample, pred: EnsemblePrediction, task: TaskSpec,
                      include_gold: bool = True) -> dict:
    labels = task.label_space.labels
    rec = {
        "text": example.text,
        "predicted": labels[pred.label],
        "probs": list(pred.probs),
        "prompts": list(pred.actions),
        "weights": list(pred.weights),
    }
    if example.text2 is not None:
        rec["text2"] = example.text2
    if include_gold:
        rec["gold"] = labels[example.label]
    return rec


def write_predictions(path: str | Path, test_set: Sequence[LabeledExample], result: EvalResult,
                      task: TaskSpec) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for z, pred in zip(test_set, result.predictions):
            fh.write(json.dumps(prediction_record(z, pred, task), sort_keys=True) + "\n")


def random_matching_accuracy(provider: Provider, prompts: Sequence[Prompt], test_set: Sequence[LabeledExample],
                             task: TaskSpec, seed: int = 0) -> float:
    """Baseline: one uniformly random prompt per input, argmax of its label distribution."""
    rng = np.random.default_rng(seed)
    hits = 0
    for z in test_set:
        a = int(rng.integers(len(prompts)))
        d: LabelDistribution = provider.score_labels(render_query(prompts[a], z, task), task)
        hits += int(np.argmax(d.probs)) == z.label
    return hits / len(test_set)
