"""Command-line entry point: seed-select, generate, train, eval, predict."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import artifacts
from .config import RunConfig, load_config
from .dialogue import PipelineError, construct_prompt_set, rank_training_examples
from .ensemble import evaluate, ensemble_predict, prediction_record, write_predictions
from .policy import CheckpointError, DimensionError, NonFiniteGradient, load_checkpoint, save_checkpoint
from .providers import ProviderError, make_provider, reset_scoring_calls, scoring_calls
from .sue import write_report
from .task import ConfigError, DatasetError, LabeledExample, load_dataset
from .training import TrainingAborted, train, write_report as write_train_report

log = logging.getLogger("promptmatch")

EXIT_OK, EXIT_CONFIG, EXIT_PROVIDER, EXIT_INTERNAL = 0, 2, 3, 4

SEED_SET = "seed_set.json"
PROMPT_SET = "prompt_set.json"
CHECKPOINT = "policy.ckpt"
RESUME = "train.resume.npz"


def _require(path, what: str) -> Path:
    if path is None:
        raise ConfigError(f"no {what} given (set it in the config or on the command line)")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _dataset(cfg: RunConfig, name: str):
    return load_dataset(_require(cfg.data_path(name), f"{name} dataset"), cfg.task)


def _report_calls(stage: str) -> None:
    print(f"[{stage}] scoring calls: {scoring_calls()}", file=sys.stderr)


def cmd_seed_select(cfg: RunConfig, args) -> int:
    train_set = _dataset(cfg, "train")
    if len(train_set) < cfg.task.m:
        raise ConfigError(f"training set has {len(train_set)} examples, m={cfg.task.m}")
    provider = make_provider(cfg.provider)
    reset_scoring_calls()
    ranked = rank_training_examples(provider, train_set, cfg.task, jobs=cfg.jobs)
    top = ranked[:cfg.task.m]
    out = cfg.artifact_dir / SEED_SET
    artifacts.write_json(out, {
        "kind": "seed-set", "seed": cfg.seed, "config": cfg.to_dict(),
        "seeds": [{**artifacts.example_to_dict(p.example, cfg.task), "sue": b.sue, "s_sup": b.s_sup,
                   "s_uns": b.s_uns} for p, b in top],
    })
    write_report(ranked, cfg.artifact_dir / "seed_report.csv")
    _report_calls("seed-select")
    print(out)
    return EXIT_OK


def cmd_generate(cfg: RunConfig, args) -> int:
    train_set = _dataset(cfg, "train")
    provider = make_provider(cfg.provider)
    reset_scoring_calls()
    out = cfg.artifact_dir / PROMPT_SET
    result = construct_prompt_set(provider, train_set, cfg.task, cfg.seed,
                                  transcript_dir=cfg.artifact_dir / "transcripts", jobs=cfg.jobs)
    artifacts.save_prompt_set(out, result.prompts, cfg.task, seed=cfg.seed, candidates=result.num_candidates,
                              config=cfg.to_dict(),
                              seeds=[artifacts.example_to_dict(z, cfg.task) for z in result.seeds])
    write_report(list(zip(result.prompts, result.breakdowns)), cfg.artifact_dir / "prompt_report.csv")
    _report_calls("generate")
    print(f"{out} ({len(result)} prompts from {result.num_candidates} candidates, {result.chat_calls} chat calls)")
    return EXIT_OK


def _prompt_set(cfg: RunConfig, args):
    path = args.prompt_set or cfg.data_path("prompt_set") or cfg.artifact_dir / PROMPT_SET
    return artifacts.load_prompt_set(_require(path, "prompt set"), cfg.task)


def cmd_train(cfg: RunConfig, args) -> int:
    train_set = _dataset(cfg, "train")
    prompts = _prompt_set(cfg, args)
    provider = make_provider(cfg.provider)
    resume_path = cfg.artifact_dir / RESUME
    resume_from = None
    if args.resume:
        resume_from = _require(resume_path, "resume state")
    result = train(provider, train_set, prompts, cfg.task, cfg.train, resume_from=resume_from,
                   abort_path=resume_path)
    ckpt = Path(args.checkpoint or cfg.artifact_dir / CHECKPOINT)
    save_checkpoint(ckpt, result.params, result.state_norm, result.reward_norm)
    write_train_report(result.report, cfg.artifact_dir / "train_report.jsonl")
    artifacts.write_json(ckpt.with_suffix(".json"), {
        "kind": "checkpoint-meta", "seed": cfg.seed, "config": cfg.to_dict(),
        "dims": list(result.params.dims), "parameters": result.params.num_parameters,
    })
    if resume_from is not None:
        resume_path.unlink(missing_ok=True)
    print(f"{ckpt} ({len(result.report)} epochs, {result.params.num_parameters} parameters)")
    return EXIT_OK


def _load_policy(cfg: RunConfig, args, prompts):
    provider = make_provider(cfg.provider)
    ckpt = _require(args.checkpoint or cfg.artifact_dir / CHECKPOINT, "checkpoint")
    params, state_norm, _ = load_checkpoint(ckpt, expect_dims=(provider.state_dim, cfg.train.hidden_dim,
                                                               len(prompts)))
    k = args.k if args.k is not None else cfg.task.top_k
    if not 1 <= k <= params.action_dim:
        raise ConfigError(f"--k {k} outside [1, {params.action_dim}]")
    return provider, params, state_norm, k


def cmd_eval(cfg: RunConfig, args) -> int:
    prompts = _prompt_set(cfg, args)
    test_set = _dataset(cfg, "test")
    provider, params, state_norm, k = _load_policy(cfg, args, prompts)
    res = evaluate(provider, params, state_norm, prompts, test_set, cfg.task, k=k, renormalize=args.renormalize)
    artifacts.write_json(cfg.artifact_dir / "metrics.json", {
        "kind": "metrics", "seed": cfg.seed, "k": k, "renormalize": args.renormalize, **res.metrics(),
        "labels": list(cfg.task.label_space.labels),
    })
    write_predictions(cfg.artifact_dir / "predictions.jsonl", test_set, res, cfg.task)
    print(json.dumps({"accuracy": res.accuracy, "confusion": res.confusion}))
    return EXIT_OK


def cmd_predict(cfg: RunConfig, args) -> int:
    prompts = _prompt_set(cfg, args)
    provider, params, state_norm, k = _load_policy(cfg, args, prompts)
    if cfg.task.template.is_pair and not args.text2:
        raise ConfigError("this task needs --text2")
    example = LabeledExample(args.text, 0, text2=args.text2 if cfg.task.template.is_pair else None)
    pred = ensemble_predict(provider, params, state_norm, prompts, example, cfg.task, k=k,
                            renormalize=args.renormalize)
    rec = prediction_record(example, pred, cfg.task, include_gold=False)
    rec["seed"] = cfg.seed
    print(json.dumps(rec, sort_keys=True))
    return EXIT_OK


def cmd_make_fixture(cfg: RunConfig, args) -> int:
    from .synthetic import write_bandit_fixture, write_sentiment_fixture

    out = Path(args.out)
    if args.kind == "bandit":
        paths = write_bandit_fixture(out, cfg.task, seed=cfg.seed)
    else:
        paths = write_sentiment_fixture(out, cfg.task, seed=cfg.seed)
    print(paths["config"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--task", help="task preset (sst2, yelp, mr, cr, rte, qnli, mrpc)")
    common.add_argument("--provider", choices=["http", "mock"])
    common.add_argument("--seed", type=int)
    common.add_argument("--cache", choices=["on", "off"])
    common.add_argument("--jobs", type=int, help="max concurrent provider requests")
    common.add_argument("--artifact-dir")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="promptmatch", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("seed-select", parents=[common], help="rank training examples and keep the top m")
    s.add_argument("--train")
    s.add_argument("--m", type=int)
    s.set_defaults(func=cmd_seed_select)

    g = sub.add_parser("generate", parents=[common], help="build the prompt set through dialogue")
    g.add_argument("--train")
    g.add_argument("--m", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--h", type=int)
    g.add_argument("--round-max", type=int)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[common], help="train the prompt-matching policy")
    t.add_argument("--train")
    t.add_argument("--prompt-set")
    t.add_argument("--epochs", type=int)
    t.add_argument("--checkpoint")
    t.add_argument("--resume", action="store_true", help="continue from the state saved by an aborted run")
    t.set_defaults(func=cmd_train)

    for name, fn, help_ in (("eval", cmd_eval, "accuracy on a labeled test set"),
                            ("predict", cmd_predict, "predict one input")):
        e = sub.add_parser(name, parents=[common], help=help_)
        e.add_argument("--prompt-set")
        e.add_argument("--checkpoint")
        e.add_argument("--k", type=int)
        e.add_argument("--renormalize", action="store_true", help="renormalize the top-k policy weights")
        if name == "eval":
            e.add_argument("--test")
        else:
            e.add_argument("--text", required=True)
            e.add_argument("--text2")
        e.set_defaults(func=fn)
    f = sub.add_parser("make-fixture", parents=[common], help="write a small offline dataset and config")
    f.add_argument("--out", required=True)
    f.add_argument("--kind", choices=["sentiment", "bandit"], default="sentiment")
    f.set_defaults(func=cmd_make_fixture)
    return p


def _overrides(args) -> dict:
    ov = {}
    for key in ("task", "provider", "seed", "jobs", "artifact_dir", "train", "test", "m", "n", "h", "round_max",
                "epochs"):
        ov[key] = getattr(args, key, None)
    if args.cache is not None:
        ov["cache"] = args.cache == "on"
    return ov


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        return args.func(cfg, args)
    except (ProviderError, PipelineError, TrainingAborted) as e:
        print(f"provider error: {e}", file=sys.stderr)
        return EXIT_PROVIDER
    except (NonFiniteGradient, AssertionError) as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ConfigError, DatasetError, DimensionError, CheckpointError, FileNotFoundError, ValueError,
            KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
