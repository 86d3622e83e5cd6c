"""Prompt-set construction through multi-turn dialogue with a generator model."""
from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import artifacts
from .providers import ChatMessage, Provider, ProviderError
from .sue import SueBreakdown, rank_by_sue
from .task import MASK, LabeledExample, Prompt, PromptSource, TaskSpec, render_prompt

log = logging.getLogger(__name__)

_ITEM = re.compile(r"^\s*(\d+)\s*[.)]\s*(.*)$")
_HEADER = re.compile(r"^\s*\w+\s*:\s*")
REASK = "Please list exactly {n} samples in the same numbered format."


class PipelineError(RuntimeError):
    def __init__(self, message: str, completed_rounds: int):
        super().__init__(f"{message} (completed rounds: {completed_rounds})")
        self.completed_rounds = completed_rounds


@dataclass
class ParsedBatch:
    items: list[LabeledExample]
    requested: int

    @property
    def short(self) -> bool:
        return len(self.items) < self.requested

    def __len__(self):
        return len(self.items)


@dataclass
class DialogueTranscript:
    round: int
    messages: list[ChatMessage] = field(default_factory=list)
    batches: list[ParsedBatch] = field(default_factory=list)

    def to_dict(self, task: TaskSpec) -> dict:
        return {
            "round": self.round,
            "messages": [m.to_dict() for m in self.messages],
            "batches": [{"requested": b.requested,
                         "items": [artifacts.example_to_dict(e, task) for e in b.items]} for b in self.batches],
        }


@dataclass
class PromptSet:
    prompts: list[Prompt]
    breakdowns: list[SueBreakdown]
    seeds: list[LabeledExample]
    num_candidates: int
    chat_calls: int
    transcripts: list[DialogueTranscript]

    def __len__(self):
        return len(self.prompts)

    def __iter__(self):
        return iter(self.prompts)

    def __getitem__(self, i):
        return self.prompts[i]


def rank_training_examples(provider: Provider, train: Sequence[LabeledExample], task: TaskSpec, jobs: int = 1):
    prompts = [render_prompt(z, task) for z in train]
    return rank_by_sue(provider, prompts, train, task, exclude_self=True, jobs=jobs)


def select_seed_set(provider: Provider, train: Sequence[LabeledExample], task: TaskSpec,
                    jobs: int = 1) -> list[LabeledExample]:
    """Top-m training examples, each scored against the rest of the training set."""
    if len(train) < task.m:
        raise ValueError(f"training set has {len(train)} examples, m={task.m}")
    ranked = rank_training_examples(provider, train, task, jobs)
    return [p.example for p, _ in ranked[:task.m]]


def build_initial_message(seed_pair: Sequence[LabeledExample], task: TaskSpec) -> list[ChatMessage]:
    if len(seed_pair) != 2:
        raise ValueError("the opening request takes exactly two seed examples")
    shown = "\n".join(render_prompt(z, task).rendered_text for z in seed_pair)
    return [ChatMessage("user", f"{task.init_instruction.format(n=task.n)}({shown})")]


def build_rewrite_message(next_seed: LabeledExample, task: TaskSpec) -> ChatMessage:
    return ChatMessage("user", f"{task.rewrite_instruction}({render_prompt(next_seed, task).rendered_text})")


def _template_regex(task: TaskSpec) -> re.Pattern:
    pattern = task.template.pattern
    slots = task.template.slots
    parts = re.split("(" + "|".join(re.escape(s) for s in slots + (MASK,)) + ")", pattern)
    rx = [r"^\s*"]
    n_slot = 0
    for i, part in enumerate(parts):
        if part in slots:
            # greedy first slot: the label keyword is taken at its last occurrence
            rx.append(f"(?P<s{n_slot}>.+)" if n_slot == 0 else f"(?P<s{n_slot}>.+?)")
            n_slot += 1
        elif part == MASK:
            rx.append(r"\s*(?P<mask>[^\W\d_][\w'-]*)")
        elif part:
            lit = r"\s*".join(re.escape(w) for w in part.split())
            if part[:1].isspace():
                lit = r"\s*" + lit
            if part[-1:].isspace():
                lit += r"\s*"
            rx.append(f"(?P<lead>{lit})?" if i == 0 else lit)
    rx.append(r"[\s.!?]*$" if pattern.endswith(MASK) else r"\s*$")
    return re.compile("".join(rx), re.IGNORECASE | re.DOTALL)


def _items(text: str) -> list[str]:
    items: list[str] = []
    for line in text.splitlines():
        m = _ITEM.match(line)
        if m:
            items.append(m.group(2).strip())
        elif items and line.strip():
            items[-1] = f"{items[-1]} {line.strip()}"
    return items


def parse_generation(text: str, task: TaskSpec, n: int) -> ParsedBatch:
    """Pull up to `n` numbered, labeled samples out of a generator reply.

    Items whose label word is not in the verbalizer are dropped.
    """
    rx = _template_regex(task)
    lead_literal = task.template.pattern.split(task.template.slots[0])[0]
    out: list[LabeledExample] = []
    for item in _items(text or ""):
        if len(out) >= n:
            break
        m = rx.match(item)
        if m is None:
            continue
        label = task.verbalizer.lookup(m.group("mask"))
        if label is None:
            continue
        texts = [m.group(f"s{i}").strip() for i in range(len(task.template.slots))]
        if m.groupdict().get("lead") is None and lead_literal.rstrip().endswith(":"):
            texts[0] = _HEADER.sub("", texts[0], count=1)
        try:
            out.append(LabeledExample(texts[0], label, text2=texts[1] if len(texts) > 1 else None, pseudo=True))
        except ValueError:
            continue
    return ParsedBatch(out, n)


def _ask(provider: Provider, transcript: DialogueTranscript, task: TaskSpec) -> ParsedBatch:
    reply = provider.chat(transcript.messages)
    transcript.messages.append(ChatMessage("assistant", reply))
    batch = parse_generation(reply, task, task.n)
    if batch.short:
        log.info("round %d: short batch (%d/%d), asking again", transcript.round, len(batch), task.n)
        transcript.messages.append(ChatMessage("user", REASK.format(n=task.n)))
        reply = provider.chat(transcript.messages)
        transcript.messages.append(ChatMessage("assistant", reply))
        retry = parse_generation(reply, task, task.n)
        if len(retry) >= len(batch):
            batch = retry
        if batch.short:
            log.warning("round %d: accepting short batch (%d/%d)", transcript.round, len(batch), task.n)
    transcript.batches.append(batch)
    return batch


def run_dialogue_round(provider: Provider, seeds: Sequence[LabeledExample], task: TaskSpec,
                       round_index: int = 0, transcript: Optional[DialogueTranscript] = None) -> list[Prompt]:
    """One opening request from seeds[0:2], then one rewrite per remaining seed.

    The whole message history is resent on every turn. Returns the last batch.
    """
    if len(seeds) != task.m:
        raise ValueError(f"expected {task.m} seeds, got {len(seeds)}")
    t = transcript if transcript is not None else DialogueTranscript(round_index)
    t.messages.extend(build_initial_message(seeds[:2], task))
    batch = _ask(provider, t, task)
    for seed in seeds[2:]:
        t.messages.append(build_rewrite_message(seed, task))
        batch = _ask(provider, t, task)
    return [render_prompt(z, task, source=PromptSource.DIALOGUE) for z in batch.items]


def construct_prompt_set(provider: Provider, train: Sequence[LabeledExample], task: TaskSpec, seed: int,
                         transcript_dir: Optional[str | Path] = None, artifact_path: Optional[str | Path] = None,
                         jobs: int = 1) -> PromptSet:
    rng = random.Random(seed)
    seeds = select_seed_set(provider, train, task, jobs=jobs)
    pool: list[Prompt] = []
    transcripts = []
    for r in range(task.round_max):
        order = list(seeds)
        rng.shuffle(order)
        t = DialogueTranscript(r)
        transcripts.append(t)
        try:
            batch = run_dialogue_round(provider, order, task, r, t)
        except ProviderError as e:
            raise PipelineError(f"round {r} failed: {e}", completed_rounds=r) from e
        finally:
            if transcript_dir is not None:
                artifacts.write_json(Path(transcript_dir) / f"round-{r:02d}.json", t.to_dict(task))
        pool.extend(batch)
    expected = task.n * task.round_max
    if len(pool) < expected:
        log.warning("candidate pool has %d prompts, %d short of %d", len(pool), expected - len(pool), expected)
    if len(pool) < task.h:
        raise PipelineError(f"only {len(pool)} candidates for h={task.h}", completed_rounds=task.round_max)
    try:
        ranked = rank_by_sue(provider, pool, train, task, exclude_self=False, jobs=jobs)
    except ProviderError as e:
        raise PipelineError(f"screening failed: {e}", completed_rounds=task.round_max) from e
    top = ranked[:task.h]
    result = PromptSet(
        prompts=[p for p, _ in top], breakdowns=[b for _, b in top], seeds=list(seeds),
        num_candidates=len(pool), transcripts=transcripts,
        chat_calls=sum(m.role == "assistant" for t in transcripts for m in t.messages),
    )
    if artifact_path is not None:
        artifacts.save_prompt_set(artifact_path, result.prompts, task, seed=seed, candidates=len(pool),
                                  seeds=[artifacts.example_to_dict(z, task) for z in seeds])
    return result
