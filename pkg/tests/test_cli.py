import json
import subprocess
import sys

import pytest
import yaml

from promptmatch import preset
from promptmatch.cli import main
from promptmatch.config import load_config
from promptmatch.providers import ProviderConfig, ProviderError
from promptmatch.synthetic import write_bandit_fixture, write_sentiment_fixture
from promptmatch.task import ConfigError
from promptmatch.training import TrainingAborted, train
from promptmatch.artifacts import load_prompt_set
from promptmatch.task import load_dataset

from test_training import FlakyProvider


@pytest.fixture
def sentiment(tmp_path):
    return write_sentiment_fixture(tmp_path / "s", preset("sst2"))["config"]


@pytest.fixture
def bandit(tmp_path):
    return write_bandit_fixture(tmp_path / "b", preset("sst2"), train_size=30, test_size=30)


def run(*argv):
    return main([str(a) for a in argv])


def _art(cfg_path, name):
    return cfg_path.parent / "artifacts" / name


def test_seed_select(sentiment):
    assert run("seed-select", "--config", sentiment) == 0
    out = json.loads(_art(sentiment, "seed_set.json").read_text())
    assert len(out["seeds"]) == 8 and out["seed"] == 0
    assert _art(sentiment, "seed_report.csv").is_file()
    first = _art(sentiment, "seed_set.json").read_bytes()
    assert run("seed-select", "--config", sentiment) == 0
    assert _art(sentiment, "seed_set.json").read_bytes() == first


def test_seed_select_reports_scoring_calls(sentiment, capsys):
    run("seed-select", "--config", sentiment)
    assert "[seed-select] scoring calls: 992" in capsys.readouterr().err  # 32 candidates x 31 others


def test_missing_dataset_exit_2(sentiment, tmp_path, capsys):
    missing = tmp_path / "nope.jsonl"
    assert run("seed-select", "--config", sentiment, "--train", missing) == 2
    assert str(missing) in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    assert run("seed-select", "--config", tmp_path / "none.yaml") == 2


def test_generate_defaults(sentiment):
    assert run("generate", "--config", sentiment) == 0
    art = json.loads(_art(sentiment, "prompt_set.json").read_text())
    assert len(art["prompts"]) == 15 and art["candidates"] == 60
    assert art["seed"] == 0 and art["config"]["task"]["h"] == 15
    assert len(list(_art(sentiment, "transcripts").iterdir())) == 3


def test_generate_small(sentiment):
    assert run("generate", "--config", sentiment, "--round-max", 1, "--n", 5, "--h", 5) == 0
    art = json.loads(_art(sentiment, "prompt_set.json").read_text())
    assert len(art["prompts"]) == 5 and art["candidates"] == 5


def _scripted(cfg_path, replies):
    cfg = yaml.safe_load(cfg_path.read_text())
    cfg["provider"]["options"] = {"chat_script": replies}
    cfg["task"].update(m=4, n=3, round_max=2, h=4, top_k=2)
    cfg_path.write_text(yaml.safe_dump(cfg))


def test_generate_scripted_deterministic(sentiment):
    replies = ["1. Reviews:a fine film Sentiment:positive\n2. Reviews:so dull Sentiment:negative\n"
               "3. Reviews:quite lovely Sentiment:positive"] * 6
    _scripted(sentiment, replies)
    assert run("generate", "--config", sentiment) == 0
    first = _art(sentiment, "prompt_set.json").read_bytes()
    assert run("generate", "--config", sentiment) == 0
    assert _art(sentiment, "prompt_set.json").read_bytes() == first


def test_generate_provider_error_exit_3(sentiment):
    _scripted(sentiment, ["1. Reviews:a Sentiment:positive\n2. Reviews:b Sentiment:negative\n"
                          "3. Reviews:c Sentiment:positive"] * 4)
    assert run("generate", "--config", sentiment) == 3
    assert (_art(sentiment, "transcripts") / "round-01.json").is_file()
    assert not _art(sentiment, "prompt_set.json").exists()


def test_train_bandit_full_report(bandit):
    cfg = bandit["config"]
    assert run("train", "--config", cfg) == 0
    rows = _art(cfg, "train_report.jsonl").read_text().splitlines()
    assert len(rows) == 200
    meta = json.loads(_art(cfg, "policy.json").read_text())
    assert meta["seed"] == 0 and meta["dims"] == [64, 32, 15]


def test_train_epochs_one(bandit):
    cfg = bandit["config"]
    assert run("train", "--config", cfg, "--epochs", 1) == 0
    assert len(_art(cfg, "train_report.jsonl").read_text().splitlines()) == 1


def test_train_resume_matches_uninterrupted(bandit, tmp_path):
    cfg_path = bandit["config"]
    assert run("train", "--config", cfg_path, "--epochs", 6, "--checkpoint", tmp_path / "clean.ckpt") == 0
    rc = load_config(cfg_path, {"epochs": 6})
    flaky = FlakyProvider(rc.provider, planted=bandit["planted"], fail_after=70)
    prompts = load_prompt_set(bandit["prompt_set"], rc.task)
    with pytest.raises(TrainingAborted) as err:
        train(flaky, load_dataset(bandit["train"], rc.task), prompts, rc.task, rc.train,
              abort_path=_art(cfg_path, "train.resume.npz"))
    assert err.value.epoch == 2
    assert run("train", "--config", cfg_path, "--epochs", 6, "--resume") == 0
    assert _art(cfg_path, "policy.ckpt").read_bytes() == (tmp_path / "clean.ckpt").read_bytes()
    assert not _art(cfg_path, "train.resume.npz").exists()


def test_train_resume_without_state_exit_2(bandit):
    assert run("train", "--config", bandit["config"], "--resume") == 2


def test_train_provider_failure_exit_3(bandit):
    cfg_path = bandit["config"]
    cfg = yaml.safe_load(cfg_path.read_text())
    cfg["provider"] = {"kind": "http", "embed_url": "http://127.0.0.1:9/embed", "max_retries": 0,
                       "state_dim": 64}
    cfg_path.write_text(yaml.safe_dump(cfg))
    assert run("train", "--config", cfg_path) == 3
    assert _art(cfg_path, "train.resume.npz").is_file()


def test_eval_and_predict(bandit, capsys):
    cfg = bandit["config"]
    assert run("train", "--config", cfg, "--epochs", 3) == 0
    assert run("eval", "--config", cfg) == 0
    metrics = json.loads(_art(cfg, "metrics.json").read_text())
    assert 0.0 <= metrics["accuracy"] <= 1.0 and metrics["seed"] == 0
    conf = metrics["confusion"]
    gold = [json.loads(x)["label"] for x in bandit["test"].read_text().splitlines()]
    assert [sum(r) for r in conf] == [gold.count("negative"), gold.count("positive")]
    preds = _art(cfg, "predictions.jsonl").read_text().splitlines()
    assert len(preds) == 30 and "gold" in json.loads(preds[0])
    capsys.readouterr()
    assert run("predict", "--config", cfg, "--text", "cluster1 new label0") == 0
    rec = json.loads(capsys.readouterr().out)
    assert len(rec["weights"]) == 10 and sum(rec["weights"]) <= 1.0 + 1e-12
    assert rec["seed"] == 0


def test_k_too_large_exit_2(bandit):
    cfg = bandit["config"]
    run("train", "--config", cfg, "--epochs", 1)
    assert run("eval", "--config", cfg, "--k", 16) == 2
    assert run("predict", "--config", cfg, "--text", "x", "--k", 99) == 2


def test_checkpoint_dims_checked(bandit, tmp_path):
    cfg = bandit["config"]
    run("train", "--config", cfg, "--epochs", 1)
    other = yaml.safe_load(cfg.read_text())
    other["train"]["hidden_dim"] = 16
    cfg.write_text(yaml.safe_dump(other))
    assert run("eval", "--config", cfg) == 2


def test_full_pipeline_idempotent(sentiment):
    names = ("prompt_set.json", "policy.ckpt", "metrics.json", "predictions.jsonl", "train_report.jsonl")
    snaps = []
    for _ in range(2):
        for cmd in ("generate", "train", "eval"):
            assert run(cmd, "--config", sentiment) == 0
        snaps.append([_art(sentiment, n).read_bytes() for n in names])
    assert snaps[0] == snaps[1]


def test_cache_on_second_run_free(sentiment, capsys):
    assert run("seed-select", "--config", sentiment, "--cache", "on") == 0
    capsys.readouterr()
    assert run("seed-select", "--config", sentiment, "--cache", "on") == 0
    assert "scoring calls: 0" in capsys.readouterr().err


def test_config_overrides(sentiment):
    rc = load_config(sentiment, {"h": 5, "seed": 9, "epochs": 4})
    assert rc.task.h == 5 and rc.task.top_k == 5
    assert rc.seed == 9 and rc.train.seed == 9 and rc.provider.seed == 9 and rc.train.epochs == 4
    assert load_config(sentiment, {"task": "cr"}).task.name == "cr"


def test_config_rejects_unknown_keys(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("train:\n  epochz: 3\n")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text("task:\n  preset: sst2\n  lambda3: 1\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_api_key_env_not_recorded(sentiment):
    rc = load_config(sentiment)
    assert "api_key_env" not in rc.to_dict()["provider"]


def test_make_fixture_and_module_entry(tmp_path):
    out = subprocess.run([sys.executable, "-m", "promptmatch", "make-fixture", "--out", str(tmp_path / "fx"),
                          "--kind", "bandit"], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "fx" / "config.yaml").is_file()
    assert (tmp_path / "fx" / "prompt_set.json").is_file()
