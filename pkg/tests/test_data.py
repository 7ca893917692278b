import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twostage_rc.data import (
    PAD,
    UNK,
    ConfigError,
    Example,
    ParseError,
    SchemaError,
    SynthConfig,
    build_vocab,
    corpus_stats,
    find_occurrences,
    gen_synthetic,
    load_corpus,
    save_corpus,
    tokenize,
)

SMALL = dict(n_train=60, n_dev=20, n_test=20)


def _write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs), encoding="utf-8")


def _obj(i, n_passages=2):
    return {
        "id": f"q{i}",
        "question": "Which drink mixes rum and cola?",
        "answers": ["Cuba Libre"],
        "passages": [f"The Cuba Libre is a highball number {k}." for k in range(n_passages)],
    }


def _cues(ex):
    # question = template words, the cue words, then "?"
    return set(ex.question[5:-1])


def _gold_tokens(ex):
    return tokenize(ex.answers[0])


def _passages_with_gold(ex):
    return [p for p in ex.passages if find_occurrences(p, _gold_tokens(ex))]


class TestTokenize:
    def test_punctuation(self):
        assert tokenize("Cuba Libre.") == ["cuba", "libre", "."]

    def test_empty(self):
        assert tokenize("") == []

    def test_commas(self):
        assert tokenize("Rum, lime, and cola") == ["rum", ",", "lime", ",", "and", "cola"]

    @given(st.text(alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd")), min_size=1))
    def test_alphanumeric_never_empty(self, text):
        assert tokenize(text)


class TestVocab:
    def test_min_count_one(self):
        v = build_vocab([["a", "b", "a"]], min_count=1)
        assert len(v) == 4
        assert "a" in v and "b" in v

    def test_min_count_two(self):
        v = build_vocab([["a", "b", "a"]], min_count=2)
        assert "a" in v and "b" not in v
        assert v.id("b") == UNK

    def test_round_trip(self):
        v = build_vocab([["x", "y", "z", "x"]])
        for tok in ("x", "y", "z"):
            assert v.token(v.id(tok)) == tok
        assert v.id(v.token(PAD)) == PAD

    def test_list_round_trip(self):
        v = build_vocab([["x", "y"]])
        assert type(v).from_list(v.to_list()).to_list() == v.to_list()


class TestLoadCorpus:
    def test_well_formed(self, tmp_path):
        path = tmp_path / "c.jsonl"
        _write_lines(path, [_obj(i) for i in range(3)])
        exs = load_corpus(path)
        assert len(exs) == 3
        assert len(exs[0].question) == 7
        assert [len(p) for p in exs[0].passages] == [9, 9]

    def test_missing_answers(self, tmp_path):
        path = tmp_path / "c.jsonl"
        bad = _obj(1)
        del bad["answers"]
        _write_lines(path, [_obj(0), bad])
        with pytest.raises(SchemaError, match=":2:"):
            load_corpus(path)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(_obj(0)) + "\n{not json\n")
        with pytest.raises(ParseError, match=":2:"):
            load_corpus(path)

    def test_mean_passages(self, tmp_path):
        path = tmp_path / "c.jsonl"
        _write_lines(path, [_obj(i, n_passages=100) for i in range(2)])
        assert corpus_stats(load_corpus(path))["mean_passages"] == 100

    def test_truncation(self, tmp_path):
        path = tmp_path / "c.jsonl"
        obj = _obj(0)
        obj["passages"] = [" ".join(["w"] * 100)]
        _write_lines(path, [obj])
        assert len(load_corpus(path, max_passage_len=60)[0].passages[0]) == 60

    def test_reserialization_is_lossless(self, tmp_path):
        train, _, _ = gen_synthetic(SynthConfig(**SMALL))
        path = tmp_path / "c.jsonl"
        save_corpus(path, train)
        again = load_corpus(path)
        assert [(e.question, e.answers, e.passages) for e in again] == [
            (e.question, e.answers, e.passages) for e in train
        ]


class TestGenSynthetic:
    def test_deterministic(self):
        a = gen_synthetic(SynthConfig(seed=3, **SMALL))
        b = gen_synthetic(SynthConfig(seed=3, **SMALL))
        assert a == b

    def test_seed_matters(self):
        assert gen_synthetic(SynthConfig(seed=1, **SMALL))[0] != gen_synthetic(SynthConfig(seed=2, **SMALL))[0]

    def test_fraction_zero_single_passage(self):
        for split in gen_synthetic(SynthConfig(cross_fraction=0.0, **SMALL)):
            for ex in split:
                assert any(_cues(ex) <= set(p) for p in _passages_with_gold(ex))

    def test_fraction_one_needs_union(self):
        for split in gen_synthetic(SynthConfig(cross_fraction=1.0, n_passages=5, **SMALL)):
            for ex in split:
                gold_ps = _passages_with_gold(ex)
                assert not any(_cues(ex) <= set(p) for p in gold_ps)
                assert _cues(ex) <= set().union(*gold_ps)

    def test_distractor_never_covers_cues(self):
        for ex in gen_synthetic(SynthConfig(cross_fraction=1.0, **SMALL))[0]:
            gold = set(_gold_tokens(ex))
            cues = _cues(ex)
            others = [p for p in ex.passages if not gold & set(p)]
            ents = {t for p in others for t in p if t.startswith("ent") and cues & set(p)}
            # one distractor entity carries cues, and never all of them
            assert len({t.rstrip("ab") for t in ents}) <= 1
            assert not cues <= set().union(*others)

    def test_answer_appears_in_two_passages(self):
        for ex in gen_synthetic(SynthConfig(**SMALL))[0]:
            assert 1 <= len(_gold_tokens(ex)) <= 2
            assert len(_passages_with_gold(ex)) >= 2

    def test_shape(self):
        cfg = SynthConfig(n_passages=5, **SMALL)
        train, dev, test = gen_synthetic(cfg)
        assert (len(train), len(dev), len(test)) == (60, 20, 20)
        assert all(len(ex.passages) == 5 for ex in train)
        assert all(len(p) == cfg.passage_len for ex in train for p in ex.passages)

    def test_cross_fraction_counts(self):
        train, _, _ = gen_synthetic(SynthConfig(cross_fraction=0.5, **SMALL))
        cross = sum(not any(_cues(ex) <= set(p) for p in _passages_with_gold(ex)) for ex in train)
        assert cross == 30

    def test_infeasible(self):
        with pytest.raises(ConfigError):
            gen_synthetic(SynthConfig(n_cues=12, passage_len=12))

    @pytest.mark.parametrize("field,value", [("cross_fraction", 1.5), ("n_passages", 0), ("n_cues", 1)])
    def test_invalid(self, field, value):
        with pytest.raises(ConfigError):
            SynthConfig(**{field: value}).validate()

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0, 1), st.integers(2, 4))
    def test_extractive_guarantee(self, seed, fraction, n_cues):
        cfg = SynthConfig(seed=seed, cross_fraction=fraction, n_cues=n_cues, n_train=10, n_dev=0, n_test=0)
        for ex in gen_synthetic(cfg)[0]:
            assert _passages_with_gold(ex)


class TestFindOccurrences:
    def test_multiple(self):
        assert find_occurrences(["a", "b", "a", "b"], ["a", "b"]) == [(0, 1), (2, 3)]

    def test_absent(self):
        assert find_occurrences(["a"], ["a", "b"]) == []

    def test_brute_force(self):
        rng = np.random.default_rng(0)
        p = [str(x) for x in rng.integers(3, size=30)]
        ans = ["1", "2"]
        expected = [(i, i + 1) for i in range(29) if p[i : i + 2] == ans]
        assert find_occurrences(p, ans) == expected


def test_example_json_round_trip():
    ex = Example("q", ["a", "b"], ["x y"], [["x", "y", "."]])
    assert ex.to_json() == {"id": "q", "question": "a b", "answers": ["x y"], "passages": ["x y ."]}
