import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import F1_CASES, REWARD_CASES
from twostage_rc import evaluation as ev
from twostage_rc.config import ModelConfig, TrainConfig
from twostage_rc.data import Example, build_vocab
from twostage_rc.diagnostics import enumerable_instance, reinforce_exactness
from twostage_rc.extraction import build_candidate_set, mle_extract_loss
from twostage_rc.gradcore import RMSProp, backward, ops
from twostage_rc.rl import objective
from twostage_rc.rl import (
    EnumerationBudgetError,
    candidate_rewards,
    enumerate_candidate_sets,
    expected_reward_loss,
    joint_train,
    pretrain_extract,
    pretrain_select,
    reinforce_step,
    reinforce_surrogate,
    reward,
    reward_tokens,
    token_f1,
)
from twostage_rc.state import TrainState

SMALL_MODEL = ModelConfig(d_w=5, d_h=3, d_c=4, d_common=2, d_dist=3)
WORDS = [f"t{i}" for i in range(12)]


def toy_state(**cfg):
    base = dict(seed=0, dropout=0.0)
    base.update(cfg)
    return TrainState.fresh(build_vocab([WORDS]), SMALL_MODEL, TrainConfig(**base))


def toy_corpus(n=6, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        passages = [[WORDS[j] for j in rng.integers(2, 12, size=5)] for _ in range(2)]
        gold = passages[i % 2][1]
        out.append(Example(f"e{i}", [WORDS[j] for j in rng.integers(2, 12, size=3)], [gold], passages))
    return out


class TestTokenF1:
    @pytest.mark.parametrize("pred,gold,expected", F1_CASES)
    def test_cases(self, pred, gold, expected):
        assert token_f1(pred, gold) == pytest.approx(expected, abs=1e-15)


class TestReward:
    def test_enough_cases(self):
        assert len(REWARD_CASES) >= 20

    @pytest.mark.parametrize("cand,golds,expected", REWARD_CASES)
    def test_cases(self, cand, golds, expected):
        assert reward(cand, golds) == pytest.approx(expected, abs=1e-15)

    def test_needs_gold(self):
        with pytest.raises(ValueError):
            reward("x", [])

    @given(
        st.lists(st.sampled_from("abcdef"), max_size=5),
        st.lists(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=5), min_size=1, max_size=3),
    )
    def test_range_and_consistency(self, pred, golds):
        r = reward_tokens(pred, golds)
        overlap = any(set(pred) & set(g) for g in golds)
        assert r == -1.0 or r == 2.0 or 0.0 < r <= 1.0
        assert (r == -1.0) == (not overlap)
        if r == 2.0:
            assert max(token_f1(pred, g) for g in golds) == 1.0


class TestExpectedReward:
    def test_constant_reward(self, monkeypatch):
        ex, state = enumerable_instance(1)
        monkeypatch.setattr(objective, "candidate_rewards", lambda e, spans: np.full(len(spans), 0.7))
        assert expected_reward_loss(ex, state).item() == pytest.approx(-0.7, abs=1e-12)

    def test_single_passage_k1(self):
        state = toy_state(K=1, L_max=1)
        ex = Example("x", ["t1"], ["t2"], [["t2", "t3"]])
        dist = state.extraction.distributions(ex, state.vocab, 1)[0]
        p = dist.probs()
        assert len(p) == 2
        expected = -(p[0] * 2.0 + p[1] * -1.0)
        assert expected_reward_loss(ex, state).item() == pytest.approx(expected, abs=1e-14)

    def test_double_sum_oracle(self):
        ex, state = enumerable_instance(2)
        dists = state.extraction.distributions(ex, state.vocab, 3)
        total = 0.0
        for a, b in itertools.product(dists[0].spans(), dists[1].spans()):
            p_set = dists[0].probs()[dists[0].index(a)] * dists[1].probs()[dists[1].index(b)]
            sel = state.selection.forward(ex, [a, b], state.vocab).probs.data
            total += p_set * float(sel @ candidate_rewards(ex, [a, b]))
        assert expected_reward_loss(ex, state).item() == pytest.approx(-total, abs=1e-14)

    def test_enumeration_count(self):
        ex, state = enumerable_instance(0)
        dists = state.extraction.distributions(ex, state.vocab, 3)
        assert len(enumerate_candidate_sets(dists, 1, 100)) == 9
        assert len(enumerate_candidate_sets(dists, 2, 100)) == 9
        assert len(enumerate_candidate_sets(dists, 3, 100)) == 1

    def test_budget_guard(self):
        ex, state = enumerable_instance(0)
        with pytest.raises(EnumerationBudgetError):
            expected_reward_loss(ex, state, budget=8)


class TestReinforce:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_exact_expectation(self, seed):
        gap, scale, n_sets = reinforce_exactness(seed)
        assert n_sets <= 12
        assert scale > 1e-3
        assert gap < 1e-8

    def test_zero_reward_no_extraction_gradient(self, monkeypatch):
        ex, state = enumerable_instance(0)
        monkeypatch.setattr(objective, "candidate_rewards", lambda e, spans: np.zeros(len(spans)))
        dists = state.extraction.distributions(ex, state.vocab, 3)
        cset = build_candidate_set(dists, 1, "sampled", np.random.default_rng(0))
        backward(reinforce_surrogate(ex, state, dists, cset).loss)
        for k, p in state.params().items():
            if k.startswith("extraction/"):
                assert not np.any(p.grad)

    def test_single_set_is_exact(self):
        # K covers every span, so the only candidate set is sampled with probability 1
        state = toy_state(K=3, L_max=2)
        ex = Example("x", ["t1"], ["t2"], [["t2", "t3"]])
        dists = state.extraction.distributions(ex, state.vocab, 2)
        cset = build_candidate_set(dists, 3, "sampled", np.random.default_rng(0))
        assert cset.set_logp.item() == pytest.approx(0.0, abs=1e-12)
        s = reinforce_surrogate(ex, state, dists, cset)
        backward(s.loss)
        sampled = {k: p.grad.copy() for k, p in state.params().items()}
        for p in state.params().values():
            p.zero_grad()
        backward(expected_reward_loss(ex, state, K=3))
        for k, p in state.params().items():
            np.testing.assert_allclose(sampled[k], p.grad, atol=1e-12)

    def test_step_updates_both_models(self):
        state = toy_state(K=2, L_max=3)
        opt = RMSProp(state.params(), lr=1e-2)
        before = state.snapshot()
        report = reinforce_step(toy_corpus(3), state, opt)
        assert report["n"] == 3
        after = state.snapshot()
        for prefix in ("extraction/", "selection/"):
            assert any(not np.array_equal(before[k], after[k]) for k in before if k.startswith(prefix))


class TestTraining:
    def test_extract_loss_decreases(self):
        state = toy_state(L_max=3)
        batch = toy_corpus(4)
        opt = RMSProp({k: v for k, v in state.params().items() if k.startswith("extraction/")}, lr=2e-3)

        def loss():
            return ops.mean(ops.stack([mle_extract_loss(ex, state.extraction, state.vocab, 3) for ex in batch]))

        first = loss().item()
        for _ in range(50):
            opt.zero_grad()
            backward(loss())
            opt.step()
        assert loss().item() < first

    def test_empty_corpus_leaves_params(self):
        state = toy_state()
        before = state.snapshot()
        pretrain_extract([], [], state)
        pretrain_select([], [], state)
        joint_train([], [], state)
        after = state.snapshot()
        assert all(np.array_equal(before[k], after[k]) for k in before)

    def test_zero_learning_rate(self):
        state = toy_state(lr_rl=0.0, epochs_rl=1, K=1, L_max=2)
        before = state.snapshot()
        joint_train(toy_corpus(5), toy_corpus(2, seed=1), state)
        after = state.snapshot()
        assert all(np.array_equal(before[k], after[k]) for k in before)

    def test_checkpoint_round_trip(self, tmp_path):
        state = toy_state(epochs_extract=1, epochs_select=1, L_max=3)
        train, dev = toy_corpus(6), toy_corpus(4, seed=1)
        pretrain_extract(train, dev, state, tmp_path)
        pretrain_select(train, dev, state, tmp_path)
        loaded = TrainState.load(tmp_path / "select.ckpt.json")
        assert loaded.dumps() == state.dumps()
        assert ev.evaluate(dev, loaded).to_json() == ev.evaluate(dev, state).to_json()

    def test_joint_replay_is_byte_identical(self, tmp_path):
        def run(out):
            out.mkdir()
            state = toy_state(epochs_extract=1, epochs_select=1, epochs_rl=1, K=2, L_max=3, dropout=0.1)
            train, dev = toy_corpus(6), toy_corpus(3, seed=1)
            pretrain_extract(train, dev, state, out)
            pretrain_select(train, dev, state, out)
            joint_train(train, dev, state, out)
            return (out / "joint.ckpt.json").read_bytes()

        assert run(tmp_path / "a") == run(tmp_path / "b")


def test_pretrain_select_dumps_candidates(tmp_path):
    state = toy_state(epochs_extract=1, epochs_select=1, L_max=3)
    train = toy_corpus(3)
    pretrain_extract(train, train, state)
    pretrain_select(train, train, state, tmp_path)
    lines = (tmp_path / "candidates_train.jsonl").read_text().splitlines()
    assert len(lines) == 3
    doc = json.loads(lines[0])
    assert set(doc) == {"id", "candidates"}
    assert set(doc["candidates"][0]) == {"passage", "begin", "end", "logp", "text"}
    assert math.isfinite(doc["candidates"][0]["logp"])
