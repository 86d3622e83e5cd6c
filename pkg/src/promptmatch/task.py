"""Task vocabulary: label spaces, verbalizers, templates, examples and prompts."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

TEXT_SLOT = "<S>"
PAIR_SLOTS = ("<S1>", "<S2>")
MASK = "[MASK]"


class ConfigError(ValueError):
    """Invalid task/template/run configuration."""


class DatasetError(ValueError):
    """Malformed dataset record."""


@dataclass(frozen=True)
class LabelSpace:
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 2:
            raise ConfigError("label space needs at least two labels")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigError(f"duplicate labels in {self.labels}")

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(label) from None


@dataclass(frozen=True)
class Verbalizer:
    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if len(set(t.lower() for t in self.tokens)) != len(self.tokens):
            raise ConfigError(f"verbalizer tokens must be distinct: {self.tokens}")

    def word(self, label: int) -> str:
        return self.tokens[label]

    def lookup(self, word: str) -> Optional[int]:
        """Case-insensitive reverse mapping; None when `word` is not a label word."""
        w = word.strip().lower()
        for i, tok in enumerate(self.tokens):
            if tok.lower() == w:
                return i
        return None


@dataclass(frozen=True)
class TemplateSpec:
    """A pattern with ``<S>`` (or ``<S1>``/``<S2>``) input slots and one ``[MASK]``."""

    pattern: str

    def __post_init__(self):
        slots = self.slots
        if not slots:
            raise ConfigError(f"template {self.pattern!r} has no input slot")
        for s in slots + (MASK,):
            n = self.pattern.count(s)
            if n != 1:
                raise ConfigError(f"template {self.pattern!r} must contain {s} exactly once (found {n})")

    @property
    def is_pair(self) -> bool:
        return PAIR_SLOTS[0] in self.pattern or PAIR_SLOTS[1] in self.pattern

    @property
    def slots(self) -> tuple[str, ...]:
        if self.is_pair:
            return PAIR_SLOTS
        return (TEXT_SLOT,) if TEXT_SLOT in self.pattern else ()

    def fill(self, texts: Sequence[str], mask: Optional[str] = None) -> str:
        if len(texts) != len(self.slots):
            raise ConfigError(f"template expects {len(self.slots)} text(s), got {len(texts)}")
        out = self.pattern
        # substitute the mask first so input text that looks like a slot is left alone
        if mask is not None:
            out = out.replace(MASK, mask)
        pieces = []
        rest = out
        for slot, text in zip(self.slots, texts):
            head, _, rest = rest.partition(slot)
            pieces.append(head)
            pieces.append(text)
        pieces.append(rest)
        return "".join(pieces)


@dataclass(frozen=True)
class LabeledExample:
    text: str
    label: int
    text2: Optional[str] = None
    pseudo: bool = False

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError("example text must be non-empty")
        if self.text2 is not None and not self.text2.strip():
            raise ValueError("second text of a pair example must be non-empty")
        if self.label < 0:
            raise ValueError(f"negative label {self.label}")

    @property
    def texts(self) -> tuple[str, ...]:
        return (self.text,) if self.text2 is None else (self.text, self.text2)

    @property
    def joined(self) -> str:
        return " ".join(self.texts)


class PromptSource(str, Enum):
    TRAINING = "training-example"
    DIALOGUE = "dialogue-generated"


@dataclass(frozen=True)
class Prompt:
    rendered_text: str
    source: PromptSource
    pseudo_label: int
    sue_score: Optional[float] = None
    # an empty text is allowed and means "no demonstration"
    example: Optional[LabeledExample] = field(default=None, compare=False)

    @property
    def pseudo(self) -> bool:
        return self.source is PromptSource.DIALOGUE or (self.example is not None and self.example.pseudo)

    def with_score(self, score: float) -> "Prompt":
        return replace(self, sue_score=score)


@dataclass(frozen=True)
class TaskSpec:
    name: str
    label_space: LabelSpace
    verbalizer: Verbalizer
    template: TemplateSpec
    lambda1: float = 10.0
    lambda2: float = 7.0
    top_k: int = 10
    entropy_coef: float = 0.059
    m: int = 8
    n: int = 20
    round_max: int = 3
    h: int = 15
    separator: str = " "
    # generator instructions; "{n}" is replaced by the requested count
    init_instruction: str = "As a prompt engineer, please generate {n} similar samples as shown in the parentheses."
    rewrite_instruction: str = (
        "Now imitate the example in parentheses, randomly changing the three samples generated "
        "by the previous dialogue, and the other samples remain unchanged."
    )

    def __post_init__(self):
        if len(self.verbalizer.tokens) != self.label_space.size:
            raise ConfigError("verbalizer must have exactly one token per label")
        for name in ("top_k", "m", "n", "round_max", "h"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.m < 3:
            raise ConfigError("m must be at least 3")
        if self.top_k > self.h:
            raise ConfigError(f"top_k ({self.top_k}) cannot exceed h ({self.h})")
        if self.h > self.n * self.round_max:
            raise ConfigError(f"h ({self.h}) cannot exceed n*round_max ({self.n * self.round_max})")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be non-negative")

    @property
    def num_labels(self) -> int:
        return self.label_space.size

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "labels": list(self.label_space.labels),
            "verbalizer": list(self.verbalizer.tokens),
            "template": self.template.pattern,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "top_k": self.top_k,
            "entropy_coef": self.entropy_coef,
            "m": self.m,
            "n": self.n,
            "round_max": self.round_max,
            "h": self.h,
            "separator": self.separator,
            "init_instruction": self.init_instruction,
            "rewrite_instruction": self.rewrite_instruction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        d = dict(d)
        return cls(
            label_space=LabelSpace(tuple(d.pop("labels"))),
            verbalizer=Verbalizer(tuple(d.pop("verbalizer"))),
            template=TemplateSpec(d.pop("template")),
            **d,
        )


def _check_label(example: LabeledExample, task: TaskSpec) -> None:
    if example.label >= task.num_labels:
        raise ValueError(f"label {example.label} outside label space of size {task.num_labels}")


def render_prompt(example: LabeledExample, task: TaskSpec,
                  source: PromptSource = PromptSource.TRAINING) -> Prompt:
    """Render a labeled example as a demonstration with its label word filled in."""
    _check_label(example, task)
    text = task.template.fill(example.texts, mask=task.verbalizer.word(example.label))
    if example.pseudo:
        source = PromptSource.DIALOGUE
    return Prompt(rendered_text=text, source=source, pseudo_label=example.label, example=example)


def render_input(example: LabeledExample, task: TaskSpec) -> str:
    return task.template.fill(example.texts)


def render_query(prompt: Optional[Prompt], example: LabeledExample, task: TaskSpec) -> str:
    """Demonstration text, separator, then the templated input with the mask left in place."""
    query = render_input(example, task)
    prefix = prompt.rendered_text if prompt is not None else ""
    if not prefix:
        return query
    return prefix + task.separator + query


def load_dataset(path: str | Path, task: TaskSpec) -> list[LabeledExample]:
    """Read a JSON-lines file with ``text`` (or ``text1``/``text2``) and ``label`` fields."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}:{lineno}: malformed record ({e.msg})") from None
            if not isinstance(rec, dict) or "label" not in rec:
                raise DatasetError(f"{path}:{lineno}: record must be an object with a label field")
            try:
                label = task.label_space.index(str(rec["label"]))
            except KeyError:
                raise DatasetError(f"{path}:{lineno}: unknown label {rec['label']!r}") from None
            try:
                if task.template.is_pair:
                    ex = LabeledExample(rec["text1"], label, text2=rec["text2"], pseudo=bool(rec.get("pseudo", False)))
                else:
                    ex = LabeledExample(rec["text"], label, pseudo=bool(rec.get("pseudo", False)))
            except (KeyError, TypeError, ValueError) as e:
                raise DatasetError(f"{path}:{lineno}: bad text field ({e})") from None
            out.append(ex)
    return out


def write_dataset(examples: Iterable[LabeledExample], path: str | Path, task: TaskSpec) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            if ex.text2 is None:
                rec = {"text": ex.text}
            else:
                rec = {"text1": ex.text, "text2": ex.text2}
            rec["label"] = task.label_space.labels[ex.label]
            if ex.pseudo:
                rec["pseudo"] = True
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def sample_few_shot(dataset: Sequence[LabeledExample], per_class: int, seed: int,
                    num_labels: Optional[int] = None,
                    label_names: Optional[Sequence[str]] = None) -> list[LabeledExample]:
    """Draw `per_class` examples from every class, grouped by class id, in file order within a class."""
    if num_labels is None:
        num_labels = len(label_names) if label_names else (max((e.label for e in dataset), default=-1) + 1)
    rng = random.Random(seed)
    chosen = []
    for c in range(num_labels):
        idx = [i for i, e in enumerate(dataset) if e.label == c]
        if len(idx) < per_class:
            name = label_names[c] if label_names else str(c)
            raise ValueError(f"class {name!r} has {len(idx)} examples, need {per_class}")
        chosen.extend(sorted(rng.sample(idx, per_class)))
    return [dataset[i] for i in chosen]
