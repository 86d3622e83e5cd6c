import json

import pytest

from promptmatch import LabeledExample, Prompt, PromptSource, preset
from promptmatch.artifacts import load_prompt_set, read_json, save_prompt_set, write_json
from promptmatch.task import render_prompt


def test_prompt_set_round_trip(tmp_path, sst2):
    prompts = [
        render_prompt(LabeledExample("nice", 1, pseudo=True), sst2).with_score(3.5),
        Prompt("Reviews:bad Sentiment:negative", PromptSource.TRAINING, 0, sue_score=9.25),
        Prompt("Reviews:ok Sentiment:positive", PromptSource.DIALOGUE, 1, sue_score=3.5),
    ]
    save_prompt_set(tmp_path / "p.json", prompts, sst2, seed=4)
    loaded = load_prompt_set(tmp_path / "p.json", sst2)
    assert [p.sue_score for p in loaded] == [9.25, 3.5, 3.5]
    assert [p.rendered_text for p in loaded] == ["Reviews:bad Sentiment:negative", "Reviews:nice Sentiment:positive",
                                                 "Reviews:ok Sentiment:positive"]
    assert loaded[1].example == LabeledExample("nice", 1, pseudo=True)
    assert loaded[1].source is PromptSource.DIALOGUE
    raw = read_json(tmp_path / "p.json")
    assert raw["seed"] == 4 and raw["kind"] == "prompt-set"


def test_prompt_set_task_mismatch(tmp_path, sst2):
    save_prompt_set(tmp_path / "p.json", [Prompt("x", PromptSource.DIALOGUE, 0)], sst2)
    with pytest.raises(ValueError):
        load_prompt_set(tmp_path / "p.json", preset("rte"))


def test_write_json_stable(tmp_path):
    write_json(tmp_path / "a.json", {"b": 1, "a": [1.5, "x"]})
    write_json(tmp_path / "b.json", {"a": [1.5, "x"], "b": 1})
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert json.loads((tmp_path / "a.json").read_text()) == {"a": [1.5, "x"], "b": 1}
