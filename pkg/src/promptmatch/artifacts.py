"""On-disk artifacts: prompt sets, seed sets, metrics. JSON with sorted keys."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Optional, Sequence

from .task import LabeledExample, Prompt, PromptSource, TaskSpec

PROMPT_SET_KIND = "prompt-set"


def write_json(path: str | Path, obj: Any) -> None:
    """Deterministic, atomically published JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def read_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def example_to_dict(ex: LabeledExample, task: TaskSpec) -> dict:
    d = {"text": ex.text, "label": task.label_space.labels[ex.label], "pseudo": ex.pseudo}
    if ex.text2 is not None:
        d["text2"] = ex.text2
    return d


def example_from_dict(d: dict, task: TaskSpec) -> LabeledExample:
    return LabeledExample(d["text"], task.label_space.index(d["label"]), text2=d.get("text2"),
                          pseudo=bool(d.get("pseudo", False)))


def prompt_set_payload(prompts: Sequence[Prompt], task: TaskSpec, **meta) -> dict:
    ordered = sorted(prompts, key=lambda p: (-(p.sue_score if p.sue_score is not None else float("-inf")),
                                             p.rendered_text))
    items = []
    for p in ordered:
        item = {"text": p.rendered_text, "source": p.source.value, "pseudo_label": p.pseudo_label,
                "sue_score": p.sue_score}
        if p.example is not None:
            item["example"] = example_to_dict(p.example, task)
        items.append(item)
    return {"kind": PROMPT_SET_KIND, "task": task.to_dict(), "prompts": items, **meta}


def save_prompt_set(path: str | Path, prompts: Sequence[Prompt], task: TaskSpec, **meta) -> None:
    write_json(path, prompt_set_payload(prompts, task, **meta))


def load_prompt_set(path: str | Path, task: Optional[TaskSpec] = None) -> list[Prompt]:
    data = read_json(path)
    if data.get("kind") != PROMPT_SET_KIND:
        raise ValueError(f"{path}: not a prompt-set artifact")
    stored = TaskSpec.from_dict(data["task"])
    if task is None:
        task = stored
    elif stored.label_space != task.label_space:
        raise ValueError(f"{path}: prompt set was built for labels {stored.label_space.labels}, "
                         f"task has {task.label_space.labels}")
    out = []
    for item in data["prompts"]:
        ex = example_from_dict(item["example"], task) if "example" in item else None
        out.append(Prompt(rendered_text=item["text"], source=PromptSource(item["source"]),
                          pseudo_label=int(item["pseudo_label"]), sue_score=item.get("sue_score"), example=ex))
    return out
