import json
import os
from pathlib import Path

import pytest

import nlual

SRC = Path(os.environ.get("NLUAL_SOURCE_DIR", Path(__file__).resolve().parents[2]))


def tiny_corpus():
    spec = (SRC / "tests/data/tiny_synth.json").read_text()
    return nlual.synth(spec)


def test_synth_split_train_interpret():
    corpus = tiny_corpus()
    assert nlual.validate_corpus(corpus) == len(corpus.strip().splitlines())
    train, pool, test = nlual.split(corpus, json.dumps({"train_fraction": 0.6, "pool_fraction": 0.2,
                                                         "test_fraction": 0.2, "seed": 1}))
    sizes = [len(x.strip().splitlines()) for x in (train, pool, test)]
    assert sum(sizes) == len(corpus.strip().splitlines())
    nlu = nlual.NluSystem.train(train, json.dumps({"ic_features": {"hash_bits": 14},
                                                   "ner_features": {"hash_bits": 12}}))
    assert nlu.domains == ["Books", "Music", "Weather"]
    hyps = nlu.interpret(["read", "dune"])
    assert hyps[0]["domain"] == "Books"
    assert len(hyps[0]["bio_tags"]) == 2
    assert nlu.evaluate(test)["ser"] < 0.5


def test_ser_and_table():
    r = nlual.score_ser("PlayMusicIntent", [("Artist", "madonna")], "PlayVideoIntent", [("Artist", "madonna")])
    assert r["ser"] == 0.5
    assert r["substitutions"] == 1
    names = [row["name"] for row in nlual.algorithm_table()]
    assert len(names) == 9 and "Majority-CRF" in names
    assert nlual.filter_passes("Majority-AS", 0.5, 0.3, 0.2)
    assert not nlual.filter_passes("QBC-AS", 0.5, 0.3, 0.2)
    assert nlual.score("Majority-CRF", 0.0, 1.0, 1.0, 0.8) == pytest.approx(0.4)


def test_stats():
    w, p = nlual.wilcoxon([1, 2, 3, 4, 5])
    assert w == 15 and p == pytest.approx(0.0625)
    same = [1.0] * 50
    assert nlual.bootstrap(same, same, [3.0] * 50, 200, 1)["p_value"] == 1.0
    assert nlual.relative_reduction(0.3059, 0.2801) == pytest.approx(8.43, abs=0.01)


def test_errors():
    with pytest.raises(nlual.ConfigError):
        nlual.split("", json.dumps({"train_fraction": 2}))
    with pytest.raises(nlual.Error):
        nlual.validate_corpus('{"id": "a", "text": "x", "tokens": ["x"], "bio_tags": ["I-A"], '
                              '"domain": "D", "intent": "I"}\n')


def test_simulate():
    cfg = json.loads((SRC / "tests/data/small_experiment.json").read_text())
    cfg["algorithms"] = ["Rand-Uniform", "Majority-AS"]
    cfg["repeats"] = 1
    report = nlual.simulate(cfg)
    assert [a["name"] for a in report["algorithms"]] == ["Rand-Uniform", "Majority-AS"]
    assert report["budget_per_target"] == 60
