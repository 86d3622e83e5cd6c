"""Deterministic offline providers.

Everything here is a pure function of (seed, request), so a pipeline run with a
mock provider can be replayed byte for byte.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
import threading
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ..task import MASK
from .base import ChatMessage, DegenerateResponseError, Provider, ProviderConfig

_WORD = re.compile(r"\w+", re.UNICODE)
_ITEM = re.compile(r"^\s*(\d+)[.)]\s*(.+?)\s*$")
_GEN_COUNT = re.compile(r"generate (\d+)")
_FILLERS = ("really", "quite", "truly", "rather", "simply", "honestly", "clearly", "overall")


def _digest(*parts: object) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    for p in parts:
        h.update(str(p).encode("utf-8"))
        h.update(b"\x1f")
    return h.digest()


def _seed_int(*parts: object) -> int:
    return int.from_bytes(_digest(*parts)[:8], "little")


@lru_cache(maxsize=1 << 16)
def _bucket(token: str, seed: int, dim: int) -> tuple[int, float]:
    d = _digest("bucket", seed, token)
    idx = int.from_bytes(d[:8], "little") % dim
    sign = 1.0 if d[8] & 1 else -1.0
    return idx, sign


def tokens(text: str) -> list[str]:
    return _WORD.findall(text.replace(MASK, " ").lower())


def hashed_features(text: str, dim: int, seed: int) -> np.ndarray:
    """Signed feature hashing of lower-cased unigrams, scaled to unit norm."""
    v = np.zeros(dim)
    for tok in tokens(text):
        i, s = _bucket(tok, seed, dim)
        v[i] += s
    norm = np.linalg.norm(v)
    if norm == 0.0:
        v[_bucket("<empty>", seed, dim)[0]] = 1.0
        return v
    return v / norm


@lru_cache(maxsize=256)
def _label_key(token: str, seed: int, dim: int) -> np.ndarray:
    rng = np.random.default_rng(_seed_int("label-key", seed, token))
    k = rng.standard_normal(dim)
    k.setflags(write=False)
    return k


ChatScript = Union[Sequence[str], Callable[[list[ChatMessage]], str]]


class MockProvider(Provider):
    """Hash-based stand-in for a scorer, embedder and chat model.

    Label scoring: each verbalizer token gets a seeded random key vector; its
    affinity is ``sigmoid(sharpness * <hashed(query), key>)`` and affinities are
    renormalized over the verbalizer. ``sharpness=0`` makes every output uniform.

    Chat: replays ``chat_script`` (a list consumed in order, or a callable of the
    message history). Without a script a small imitation generator answers.
    """

    name = "mock"

    def __init__(self, config: Optional[ProviderConfig] = None, *, sharpness: float = 4.0,
                 key_dim: int = 256, chat_script: Optional[ChatScript] = None):
        super().__init__(config)
        self.seed = self.config.seed
        self.sharpness = float(sharpness)
        self.key_dim = key_dim
        self._script = chat_script
        self._script_pos = 0
        self._lock = threading.Lock()
        self.chat_calls = 0

    def _identity(self) -> dict:
        return {"provider": self.name, "seed": self.seed, "sharpness": self.sharpness, "key_dim": self.key_dim}

    def _token_masses(self, query: str, tokens_: list[str]) -> list[float]:
        q = hashed_features(query, self.key_dim, self.seed)
        out = []
        for tok in tokens_:
            a = self.sharpness * float(q @ _label_key(tok, self.seed, self.key_dim))
            out.append(1.0 / (1.0 + math.exp(-a)))
        return out

    def _embed(self, text: str) -> np.ndarray:
        return hashed_features(text, self.state_dim, self.seed)

    def _chat(self, messages: list[ChatMessage]) -> str:
        with self._lock:
            self.chat_calls += 1
            script = self._script
            if script is None:
                return imitation_reply(messages, self.seed)
            if callable(script):
                return script(messages)
            if self._script_pos >= len(script):
                raise DegenerateResponseError("chat script exhausted")
            reply = script[self._script_pos]
            self._script_pos += 1
            return reply


def _parenthesized(text: str) -> str:
    """Content of the trailing parenthesized span (balanced), or ''."""
    end = text.rfind(")")
    if end < 0:
        return ""
    depth = 0
    for i in range(end, -1, -1):
        if text[i] == ")":
            depth += 1
        elif text[i] == "(":
            depth -= 1
            if depth == 0:
                return text[i + 1:end]
    return ""


def _variant(example: str, rng: np.random.Generator) -> str:
    words = example.split()
    if len(words) < 2:
        return example
    pos = int(rng.integers(1, min(len(words), 3) + 1))
    words.insert(pos, _FILLERS[int(rng.integers(len(_FILLERS)))])
    return " ".join(words)


def _numbered(text: str) -> list[str]:
    return [m.group(2) for m in map(_ITEM.match, text.splitlines()) if m]


def imitation_reply(messages: Sequence[ChatMessage], seed: int) -> str:
    """Deterministic generator: imitates the parenthesized examples.

    The first request produces ``n`` variants of the seed examples; later requests
    rewrite three items of the previous answer toward the newly supplied example.
    """
    history = json.dumps([m.to_dict() for m in messages], sort_keys=True)
    rng = np.random.default_rng(_seed_int("imitate", seed, history))
    last = messages[-1].content
    examples = [e.strip() for e in _parenthesized(last).split("\n") if e.strip()]
    if not examples:
        raise DegenerateResponseError("no example in parentheses")
    previous = None
    for m in reversed(messages[:-1]):
        if m.role == "assistant":
            previous = _numbered(m.content)
            break
    if previous:
        items = list(previous)
        for i in rng.choice(len(items), size=min(3, len(items)), replace=False):
            items[int(i)] = _variant(examples[int(rng.integers(len(examples)))], rng)
    else:
        n = 20
        for m in messages:
            g = _GEN_COUNT.search(m.content)
            if m.role == "user" and g:
                n = int(g.group(1))
                break
        items = [_variant(examples[i % len(examples)], rng) for i in range(n)]
    return "\n".join(f"{i + 1}. {t}" for i, t in enumerate(items))


class PlantedAffinityProvider(Provider):
    """Mock bandit: inputs fall into latent clusters; one prompt per cluster is good.

    Queries are recognized by regex: ``prompt<j>`` names the demonstration,
    ``cluster<c>`` the latent cluster and ``label<y>`` the gold class of the input.
    Under the planted prompt the scorer puts ``p_planted`` on gold. Under any other
    prompt it puts ``p_other`` on gold (``other_target="gold"``) or on the next
    class (``other_target="wrong"``); leftover mass is split evenly.
    Embeddings are a seeded cluster centroid plus per-text noise, unit norm.
    """

    name = "planted"

    def __init__(self, config: Optional[ProviderConfig] = None, *, planted: dict[int, int],
                 num_labels: int = 2, p_planted: float = 0.95, p_other: float = 0.55,
                 other_target: str = "wrong", noise: float = 0.3,
                 prompt_pattern: str = r"\bprompt(\d+)\b", cluster_pattern: str = r"\bcluster(\d+)\b",
                 label_pattern: str = r"\blabel(\d+)\b"):
        super().__init__(config)
        if other_target not in ("gold", "wrong"):
            raise ValueError("other_target must be 'gold' or 'wrong'")
        self.seed = self.config.seed
        self.planted = {int(k): int(v) for k, v in planted.items()}
        self.num_labels = num_labels
        self.p_planted = p_planted
        self.p_other = p_other
        self.other_target = other_target
        self.noise = noise
        self._prompt_re = re.compile(prompt_pattern)
        self._cluster_re = re.compile(cluster_pattern)
        self._label_re = re.compile(label_pattern)

    def _identity(self) -> dict:
        return {"provider": self.name, "seed": self.seed, "planted": sorted(self.planted.items()),
                "p": [self.p_planted, self.p_other, self.other_target], "noise": self.noise}

    def _find(self, rx: re.Pattern, text: str, what: str) -> int:
        m = rx.search(text)
        if m is None:
            raise DegenerateResponseError(f"cannot locate {what} in {text[:60]!r}")
        return int(m.group(1))

    def _token_masses(self, query: str, tokens_: list[str]) -> list[float]:
        c = len(tokens_)
        cluster = self._find(self._cluster_re, query, "cluster")
        gold = self._find(self._label_re, query, "label") % c
        m = self._prompt_re.search(query)
        prompt = int(m.group(1)) if m else -1
        if self.planted.get(cluster) == prompt:
            target, p = gold, self.p_planted
        else:
            target = gold if self.other_target == "gold" else (gold + 1) % c
            p = self.p_other
        rest = (1.0 - p) / (c - 1)
        return [p if i == target else rest for i in range(c)]

    def _embed(self, text: str) -> np.ndarray:
        cluster = self._find(self._cluster_re, text, "cluster")
        centroid = np.random.default_rng(_seed_int("centroid", self.seed, cluster)).standard_normal(self.state_dim)
        centroid /= np.linalg.norm(centroid)
        jitter = np.random.default_rng(_seed_int("jitter", self.seed, text)).standard_normal(self.state_dim)
        v = centroid + self.noise * jitter / math.sqrt(self.state_dim)
        return v / np.linalg.norm(v)

    def _chat(self, messages: list[ChatMessage]) -> str:
        return imitation_reply(messages, self.seed)
