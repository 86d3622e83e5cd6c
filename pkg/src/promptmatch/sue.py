"""Supervised & unsupervised entropy (SUE) scoring of prompts."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .providers import LabelDistribution, Provider, ProviderError
from .task import LabeledExample, Prompt, TaskSpec, render_query


@dataclass(frozen=True)
class SueBreakdown:
    s_sup: float
    s_uns: float
    sue: float
    n_inputs: int


def supervision_term(dist: LabelDistribution | Sequence[float], gold: int) -> float:
    """p(gold) minus the largest wrong-label probability."""
    p = dist.probs if isinstance(dist, LabelDistribution) else tuple(dist)
    if not 0 <= gold < len(p):
        raise IndexError(f"gold label {gold} out of range for {len(p)} classes")
    return p[gold] - max(x for i, x in enumerate(p) if i != gold)


def entropy(dist: LabelDistribution | Sequence[float]) -> float:
    p = dist.probs if isinstance(dist, LabelDistribution) else tuple(dist)
    return -math.fsum(x * math.log(x) for x in p if x > 0.0)


def combine(sup_terms: Sequence[float], entropies: Sequence[float], task: TaskSpec) -> SueBreakdown:
    # fsum is exactly rounded, so the result does not depend on input order
    s_sup = math.fsum(sup_terms)
    s_uns = math.fsum(entropies)
    return SueBreakdown(s_sup, s_uns, task.lambda1 * s_sup + task.lambda2 * s_uns, len(sup_terms))


def _score_all(provider: Provider, queries: Sequence[str], task: TaskSpec, jobs: int) -> list[LabelDistribution]:
    def one(i):
        try:
            return provider.score_labels(queries[i], task)
        except ProviderError as e:
            raise type(e)(f"input #{i}: {e}") from e

    if jobs <= 1 or len(queries) < 2:
        return [one(i) for i in range(len(queries))]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, range(len(queries))))


def sue_score(provider: Provider, prompt: Prompt | None, inputs: Sequence[LabeledExample], task: TaskSpec,
              jobs: int = 1) -> SueBreakdown:
    """Score one prompt against a labeled input set (one scoring call per input)."""
    if not inputs:
        raise ValueError("sue_score needs at least one input")
    dists = _score_all(provider, [render_query(prompt, z, task) for z in inputs], task, jobs)
    return combine([supervision_term(d, z.label) for d, z in zip(dists, inputs)], [entropy(d) for d in dists], task)


def rank_by_sue(provider: Provider, candidates: Sequence[Prompt], reference: Sequence[LabeledExample],
                task: TaskSpec, exclude_self: bool = False, jobs: int = 1) -> list[tuple[Prompt, SueBreakdown]]:
    """Score every candidate against `reference`, best first.

    With `exclude_self`, a candidate rendered from a reference example is not
    scored against that example. Ties sort by rendered text.
    """
    if not candidates:
        raise ValueError("no candidates to rank")
    if not reference:
        raise ValueError("empty reference set")
    scored = []
    for cand in candidates:
        ref = list(reference)
        if exclude_self and cand.example is not None:
            for i, z in enumerate(ref):
                if z == cand.example:
                    del ref[i]
                    break
            if not ref:
                raise ValueError("reference set is empty after excluding the candidate itself")
        b = sue_score(provider, cand, ref, task, jobs=jobs)
        scored.append((cand.with_score(b.sue), b))
    scored.sort(key=lambda pb: (-pb[1].sue, pb[0].rendered_text))
    return scored


def write_report(ranked: Sequence[tuple[Prompt, SueBreakdown]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "text", "s_sup", "s_uns", "sue", "n_inputs"])
        for i, (p, b) in enumerate(ranked):
            w.writerow([i, p.rendered_text, repr(b.s_sup), repr(b.s_uns), repr(b.sue), b.n_inputs])
