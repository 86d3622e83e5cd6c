from __future__ import annotations

import logging
import os
import time
from typing import Optional

import httpx

from .base import ChatMessage, DegenerateResponseError, Provider, ProviderConfig, ProviderError

log = logging.getLogger(__name__)

_RETRYABLE_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


class HttpProvider(Provider):
    """Talks to an OpenAI-style chat endpoint plus a scoring/embedding sidecar.

    Wire formats::

        POST chat_url   {model, messages: [{role, content}]} -> {choices: [{message: {content}}]}
        POST score_url  {model, query, verbalizer_tokens, position} -> {token_probs: [...]}
        POST embed_url  {model, text, pooling} -> {vector: [...]}
    """

    name = "http"

    def __init__(self, config: Optional[ProviderConfig] = None, *, client: Optional[httpx.Client] = None,
                 backoff: float = 0.5):
        super().__init__(config)
        self.backoff = backoff
        headers = {}
        key = os.environ.get(self.config.api_key_env) if self.config.api_key_env else None
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = client or httpx.Client(timeout=self.config.timeout, headers=headers)

    def _identity(self) -> dict:
        c = self.config
        return {"provider": self.name, "scorer": c.scorer_model, "embedder": c.embedder_model,
                "generator": c.generator_model}

    def close(self) -> None:
        self._client.close()

    def _post(self, url: str, body: dict) -> dict:
        attempts = self.config.max_retries + 1
        last: Exception | None = None
        for attempt in range(attempts):
            try:
                resp = self._client.post(url, json=body)
            except httpx.TransportError as e:
                last = e
            else:
                if resp.status_code < 400:
                    try:
                        return resp.json()
                    except ValueError as e:
                        raise ProviderError(f"{url}: response is not JSON") from e
                if resp.status_code not in _RETRYABLE_STATUS:
                    raise ProviderError(f"{url}: HTTP {resp.status_code}")
                last = ProviderError(f"{url}: HTTP {resp.status_code}")
            if attempt + 1 < attempts:
                delay = self.backoff * (2 ** attempt)
                log.warning("request to %s failed (%s); retry %d/%d in %.1fs", url, last, attempt + 1,
                            attempts - 1, delay)
                time.sleep(delay)
        raise ProviderError(f"{url}: giving up after {attempts} attempt(s): {last}") from last

    def _token_masses(self, query: str, tokens: list[str]) -> list[float]:
        data = self._post(self.config.score_url, {
            "model": self.config.scorer_model, "query": query, "verbalizer_tokens": tokens,
            "position": self.config.scoring_position,
        })
        try:
            return [float(x) for x in data["token_probs"]]
        except (KeyError, TypeError, ValueError) as e:
            raise DegenerateResponseError(f"malformed scoring response: {data!r:.200}") from e

    def _embed(self, text: str) -> list[float]:
        data = self._post(self.config.embed_url, {
            "model": self.config.embedder_model, "text": text, "pooling": self.config.pooling,
        })
        try:
            return [float(x) for x in data["vector"]]
        except (KeyError, TypeError, ValueError) as e:
            raise DegenerateResponseError(f"malformed embedding response: {data!r:.200}") from e

    def _chat(self, messages: list[ChatMessage]) -> str:
        data = self._post(self.config.chat_url, {
            "model": self.config.generator_model, "messages": [m.to_dict() for m in messages],
        })
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise DegenerateResponseError(f"malformed chat response: {data!r:.200}") from e
        if not isinstance(content, str) or not content.strip():
            raise DegenerateResponseError("empty completion")
        return content
