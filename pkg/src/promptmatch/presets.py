"""Per-dataset task settings (templates, label words, hyperparameters)."""
from __future__ import annotations

from .task import ConfigError, LabelSpace, TaskSpec, TemplateSpec, Verbalizer

_SENTIMENT = "Reviews:<S> Sentiment:[MASK]"
_PAIR_FORM = " The form of prompt is {form}."


def _intro(role: str, extra: str = "") -> str:
    return f"As {role}, please generate {{n}} similar samples as shown in the parentheses.{extra}"


# name -> (labels, label words, template, generator intro, entropy coef, top-k, lambda2)
_TABLE = {
    "sst2": (("negative", "positive"), ("negative", "positive"), _SENTIMENT,
             _intro("a movie enthusiast"), 0.059, 10, 7.00),
    "yelp": (("negative", "positive"), ("negative", "positive"), _SENTIMENT,
             _intro("a critic"), 0.065, 15, 6.50),
    "mr": (("negative", "positive"), ("negative", "positive"), _SENTIMENT,
           _intro("a movie enthusiast"), 0.060, 7, 6.75),
    "cr": (("negative", "positive"), ("negative", "positive"), _SENTIMENT,
           _intro("a customer"), 0.068, 3, 6.75),
    "rte": (("entailment", "not_entailment"), ("Clearly", "Yet"), "<S1>. [MASK], I believe <S2>",
            _intro("a prompt engineer", _PAIR_FORM.format(form="Sentence1+Answer+Sentence2")), 0.050, 15, 6.00),
    "qnli": (("entailment", "not_entailment"), ("Okay", "Nonetheless"), "<S1>? [MASK]. Yes, <S2>",
             _intro("a prompt engineer", _PAIR_FORM.format(form="Question+Answer+Sentence")), 0.055, 15, 6.50),
    "mrpc": (("not_equivalent", "equivalent"), ("Alas", "Rather"), "<S1>. [MASK]! <S2>",
             _intro("a prompt engineer",
                    " The form of prompt is Sentence1+Answer+Sentence2 and the answer there are only two "
                    "answers: 'Alas' or 'Rather'."), 0.059, 5, 6.50),
}

PRESETS = tuple(_TABLE)

# shared across every dataset in the hyperparameter table
LAMBDA1 = 10.0
STATE_DIM = 1024
HIDDEN_DIM = 600
ACTION_DIM = 15
LEARNING_RATE = 1e-3
BATCH_SIZE = 32
EPOCHS = 200
ADAM_EPS = 1e-5
CANDIDATES = 60


def preset(name: str, **overrides) -> TaskSpec:
    key = name.lower().replace("-", "")
    if key not in _TABLE:
        raise ConfigError(f"unknown task preset {name!r}; choose from {', '.join(PRESETS)}")
    labels, words, template, intro, ent, top_k, lam2 = _TABLE[key]
    kwargs = dict(
        name=key,
        label_space=LabelSpace(labels),
        verbalizer=Verbalizer(words),
        template=TemplateSpec(template),
        lambda1=LAMBDA1,
        lambda2=lam2,
        top_k=top_k,
        entropy_coef=ent,
        m=8,
        n=20,
        round_max=3,
        h=ACTION_DIM,
        init_instruction=intro,
    )
    kwargs.update(overrides)
    return TaskSpec(**kwargs)
