"""Small synthetic datasets for offline runs and tests."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import artifacts
from .task import LabeledExample, Prompt, PromptSource, TaskSpec, write_dataset

_POS = ("great", "wonderful", "moving", "sharp", "delightful", "superb", "charming", "clever")
_NEG = ("dull", "tedious", "clumsy", "flat", "bland", "hollow", "messy", "lifeless")
_NOUNS = ("film", "plot", "cast", "script", "ending", "score", "pacing", "dialogue", "story", "direction")


def sentiment_examples(n_per_class: int, seed: int) -> list[LabeledExample]:
    """Short review-like sentences; label 0 = negative, 1 = positive."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_per_class):
        for label, words in ((0, _NEG), (1, _POS)):
            noun = _NOUNS[int(rng.integers(len(_NOUNS)))]
            adj = words[int(rng.integers(len(words)))]
            adj2 = words[int(rng.integers(len(words)))]
            out.append(LabeledExample(f"the {noun} is {adj} and {adj2} {i}", label))
    return out


def bandit_examples(n: int, clusters: int, num_labels: int, seed: int, tag: str = "") -> list[LabeledExample]:
    """Inputs carrying ``cluster<c>`` and ``label<y>`` tokens for the planted-affinity scorer."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        c = i % clusters
        y = int(rng.integers(num_labels))
        out.append(LabeledExample(f"cluster{c} item{tag}{i} label{y} w{int(rng.integers(1000))}", y))
    return out


def bandit_prompts(action_dim: int, task: TaskSpec) -> list[Prompt]:
    out = []
    for j in range(action_dim):
        label = j % task.num_labels
        text = task.template.fill((f"demonstration prompt{j}",), mask=task.verbalizer.word(label))
        out.append(Prompt(rendered_text=text, source=PromptSource.DIALOGUE, pseudo_label=label))
    return out


def default_planting(clusters: int, action_dim: int) -> dict[int, int]:
    """Cluster c -> prompt index, spread over the action space."""
    step = max(1, action_dim // clusters)
    return {c: (c * step + 1) % action_dim for c in range(clusters)}


def write_bandit_fixture(directory: str | Path, task: TaskSpec, *, train_size: int = 96, test_size: int = 150,
                         clusters: int = 3, action_dim: int = 15, seed: int = 0,
                         planted: Optional[dict[int, int]] = None) -> dict:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_dataset(bandit_examples(train_size, clusters, task.num_labels, seed, "a"), d / "train.jsonl", task)
    write_dataset(bandit_examples(test_size, clusters, task.num_labels, seed + 1, "b"), d / "test.jsonl", task)
    artifacts.save_prompt_set(d / "prompt_set.json", bandit_prompts(action_dim, task), task, seed=seed)
    planted = planted or default_planting(clusters, action_dim)
    config = {
        "task": {"preset": task.name, "entropy_coef": 0.06},
        "provider": {"kind": "mock", "state_dim": 64,
                     "options": {"mock": "planted", "planted": {str(c): j for c, j in planted.items()}}},
        "train": {"hidden_dim": 32},
        "data": {"train": "train.jsonl", "test": "test.jsonl", "prompt_set": "prompt_set.json"},
        "artifact_dir": "artifacts",
        "seed": seed,
    }
    with open(d / "config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(config, fh, sort_keys=False)
    return {"train": d / "train.jsonl", "test": d / "test.jsonl", "prompt_set": d / "prompt_set.json",
            "planted": planted, "config": d / "config.yaml"}


def write_sentiment_fixture(directory: str | Path, task: TaskSpec, *, per_class: int = 16, test_per_class: int = 25,
                            seed: int = 0) -> dict:
    """Few-shot sentiment split plus a mock-provider config (requires a two-label task)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_dataset(sentiment_examples(per_class, seed), d / "train.jsonl", task)
    write_dataset(sentiment_examples(test_per_class, seed + 1), d / "test.jsonl", task)
    config = {
        "task": {"preset": task.name},
        "provider": {"kind": "mock", "state_dim": 64},
        "train": {"hidden_dim": 32, "epochs": 20},
        "data": {"train": "train.jsonl", "test": "test.jsonl"},
        "artifact_dir": "artifacts",
        "seed": seed,
    }
    with open(d / "config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(config, fh, sort_keys=False)
    return {"train": d / "train.jsonl", "test": d / "test.jsonl", "config": d / "config.yaml"}
