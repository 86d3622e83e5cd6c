from .base import (
    ChatMessage,
    DegenerateResponseError,
    LabelDistribution,
    Provider,
    ProviderConfig,
    ProviderError,
    cache_key,
    canonical_json,
    reset_scoring_calls,
    scoring_calls,
)
from .cache import ResponseCache
from .http import HttpProvider
from .mock import MockProvider, PlantedAffinityProvider, hashed_features, imitation_reply


def make_provider(config: ProviderConfig) -> Provider:
    """Build a provider from config; ``options`` carries mock-specific knobs."""
    opts = dict(config.options)
    if config.kind == "http":
        return HttpProvider(config)
    if config.kind == "mock":
        mock_kind = opts.pop("mock", "hash")
        if mock_kind == "planted":
            planted = {int(k): int(v) for k, v in opts.pop("planted").items()}
            return PlantedAffinityProvider(config, planted=planted, **opts)
        if mock_kind != "hash":
            raise ValueError(f"unknown mock kind {mock_kind!r}")
        script = opts.pop("chat_script", None)
        if isinstance(script, str):
            import json
            with open(script, encoding="utf-8") as fh:
                script = json.load(fh)
        return MockProvider(config, chat_script=script, **opts)
    raise ValueError(f"unknown provider kind {config.kind!r}")


__all__ = [
    "ChatMessage", "DegenerateResponseError", "HttpProvider", "LabelDistribution", "MockProvider",
    "PlantedAffinityProvider", "Provider", "ProviderConfig", "ProviderError", "ResponseCache",
    "cache_key", "canonical_json", "hashed_features", "imitation_reply", "make_provider",
    "reset_scoring_calls", "scoring_calls",
]
