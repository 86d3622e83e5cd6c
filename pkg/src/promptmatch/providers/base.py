from __future__ import annotations

import hashlib
import json
import math
import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..task import ConfigError, TaskSpec
from .cache import ResponseCache

ROLES = ("system", "user", "assistant")


class ProviderError(RuntimeError):
    """Transport or protocol failure talking to a language model."""


class DegenerateResponseError(ProviderError):
    """The model answered, but the answer is unusable (no mass on label words, empty text)."""


class _Counter:
    def __init__(self):
        self._lock = threading.Lock()
        self._value = 0

    def incr(self) -> None:
        with self._lock:
            self._value += 1

    def reset(self) -> int:
        with self._lock:
            v, self._value = self._value, 0
            return v

    @property
    def value(self) -> int:
        return self._value


_SCORING_CALLS = _Counter()


def scoring_calls() -> int:
    """Number of label-scoring requests that reached a model since the last reset."""
    return _SCORING_CALLS.value


def reset_scoring_calls() -> int:
    return _SCORING_CALLS.reset()


@dataclass(frozen=True)
class LabelDistribution:
    probs: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(x) for x in self.probs)
        object.__setattr__(self, "probs", p)
        if any(not math.isfinite(x) or x < 0 for x in p):
            raise ValueError(f"invalid probabilities {p}")
        if abs(math.fsum(p) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {math.fsum(p)}, not 1")

    @classmethod
    def from_masses(cls, masses: Sequence[float]) -> "LabelDistribution":
        m = [float(x) for x in masses]
        if any(not math.isfinite(x) or x < 0 for x in m):
            raise DegenerateResponseError(f"invalid token masses {m}")
        total = math.fsum(m)
        if total <= 0:
            raise DegenerateResponseError("no probability mass on any verbalizer token")
        return cls(tuple(x / total for x in m))

    def __len__(self):
        return len(self.probs)

    def __getitem__(self, i):
        return self.probs[i]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=np.float64)


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown chat role {self.role!r}")
        if self.role != "system" and not self.content:
            raise ValueError(f"{self.role} message must have content")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "mock"
    chat_url: str = "http://127.0.0.1:8000/v1/chat/completions"
    score_url: str = "http://127.0.0.1:8001/score"
    embed_url: str = "http://127.0.0.1:8001/embed"
    scorer_model: str = "roberta-large"
    embedder_model: str = "roberta-large"
    generator_model: str = "gpt-4"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    cache_dir: Optional[str] = None
    cache: bool = False
    state_dim: int = 1024
    # "mask" scores the verbalizer at the mask slot; "causal" at the end of the query
    scoring_position: str = "mask"
    # "sentence" = final-layer sentence embedding, "mean" = mean-pooled tokens
    pooling: str = "sentence"
    seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.state_dim < 1:
            raise ConfigError("state_dim must be positive")
        if self.scoring_position not in ("mask", "causal"):
            raise ConfigError(f"unknown scoring_position {self.scoring_position!r}")
        if self.pooling not in ("sentence", "mean"):
            raise ConfigError(f"unknown pooling {self.pooling!r}")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def cache_key(kind: str, payload: dict) -> str:
    blob = canonical_json({"kind": kind, "payload": payload}).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class Provider:
    """Common front for scoring, embedding and chat.

    Subclasses implement ``_token_masses``, ``_embed`` and ``_chat``; this class
    adds caching, renormalization, validation and the scoring-call counter.
    """

    name = "base"

    def __init__(self, config: Optional[ProviderConfig] = None):
        self.config = config or ProviderConfig()
        self.cache = ResponseCache(self.config.cache_dir) if self.config.cache and self.config.cache_dir else None

    @property
    def state_dim(self) -> int:
        return self.config.state_dim

    def _identity(self) -> dict:
        # folded into cache keys so different backends never share entries
        return {"provider": self.name}

    def _cached(self, kind: str, payload: dict, compute):
        if self.cache is None:
            return compute(), False
        key = cache_key(kind, {**payload, **self._identity()})
        hit = self.cache.get(key)
        if hit is not None:
            return hit, True
        value = compute()
        self.cache.put(key, value)
        return value, False

    def score_labels(self, query: str, task: TaskSpec) -> LabelDistribution:
        tokens = list(task.verbalizer.tokens)
        payload = {"query": query, "verbalizer_tokens": tokens, "position": self.config.scoring_position}

        def compute():
            _SCORING_CALLS.incr()
            return [float(x) for x in self._token_masses(query, tokens)]

        masses, _ = self._cached("score", payload, compute)
        if len(masses) != len(tokens):
            raise DegenerateResponseError(f"expected {len(tokens)} token probabilities, got {len(masses)}")
        return LabelDistribution.from_masses(masses)

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        vec, _ = self._cached("embed", {"text": text, "pooling": self.config.pooling},
                              lambda: [float(x) for x in self._embed(text)])
        out = np.asarray(vec, dtype=np.float64)
        if out.shape != (self.state_dim,):
            raise ConfigError(f"embedding has shape {out.shape}, configured state dim is {self.state_dim}")
        if not np.all(np.isfinite(out)):
            raise DegenerateResponseError("embedding contains non-finite values")
        return out

    def chat(self, messages: Sequence[ChatMessage]) -> str:
        if not messages:
            raise ValueError("chat needs at least one message")
        if messages[-1].role != "user":
            raise ValueError("last chat message must come from the user")
        payload = {"messages": [m.to_dict() for m in messages]}
        text, _ = self._cached("chat", payload, lambda: self._chat(list(messages)))
        if not isinstance(text, str) or not text.strip():
            raise DegenerateResponseError("empty completion")
        return text

    def _token_masses(self, query: str, tokens: list[str]) -> Sequence[float]:
        raise NotImplementedError

    def _embed(self, text: str) -> Sequence[float]:
        raise NotImplementedError

    def _chat(self, messages: list[ChatMessage]) -> str:
        raise NotImplementedError
