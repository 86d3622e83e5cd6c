"""Few-shot classification with dialogue-generated prompts and a learned per-input prompt matcher."""
from .dialogue import PromptSet, construct_prompt_set, select_seed_set
from .ensemble import ensemble_predict, evaluate, top_k_actions
from .policy import PolicyParams, RunningNormalizer, init_policy, load_checkpoint, save_checkpoint
from .presets import preset
from .providers import LabelDistribution, MockProvider, Provider, ProviderConfig, make_provider
from .sue import rank_by_sue, sue_score
from .task import LabeledExample, Prompt, PromptSource, TaskSpec, load_dataset, render_query
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "LabelDistribution", "LabeledExample", "MockProvider", "PolicyParams", "Prompt", "PromptSet", "PromptSource",
    "Provider", "ProviderConfig", "RunningNormalizer", "TaskSpec", "TrainConfig", "construct_prompt_set",
    "ensemble_predict", "evaluate", "init_policy", "load_checkpoint", "load_dataset", "make_provider", "preset",
    "rank_by_sue", "render_query", "save_checkpoint", "select_seed_set", "sue_score", "top_k_actions", "train",
]
