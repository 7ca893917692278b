"""One test per acceptance criterion; each prints a PASS/FAIL line (also in the terminal summary).

The learning criteria train at the desk configuration below on a single core
and take several minutes each; they are marked slow.
"""

import math
import time

import numpy as np
import pytest

from oracles import PAIR_P, REWARD_CASES
from twostage_rc import evaluation as ev
from twostage_rc.cli import main
from twostage_rc.config import ModelConfig, TrainConfig
from twostage_rc.data import Example, SynthConfig, build_vocab, gen_synthetic
from twostage_rc.diagnostics import gradient_suite, reinforce_exactness
from twostage_rc.experiments import run_ablation, run_k_sweep, run_pipeline
from twostage_rc.extraction import Span, sample_without_replacement, set_log_prob, span_distribution
from twostage_rc.gradcore import Tensor
from twostage_rc.rl import pretrain_extract, reward
from twostage_rc.selection import SelectionModel
from twostage_rc.state import TrainState

DESK_MODEL = ModelConfig(d_w=32, d_h=32, d_c=32, d_dist=50)
DESK_TRAIN = TrainConfig(epochs_extract=5, epochs_select=15, epochs_rl=1, seed=0)
SMOKE_BUDGET = 15 * 60


def synthetic(fraction):
    return gen_synthetic(SynthConfig(n_passages=5, n_train=500, n_dev=100, cross_fraction=fraction, seed=0))


def test_gradient_integrity(criterion):
    t = time.perf_counter()
    report = gradient_suite(seed=7, step=1e-5)
    elapsed = time.perf_counter() - t
    ok = report.max_error < 1e-4 and elapsed < 60
    criterion("gradient integrity", ok,
              f"max rel error {report.max_error:.2e} over {report.n_params} params in {elapsed:.1f} s")
    assert ok


def test_normalization_suite(criterion):
    rng = np.random.default_rng(0)
    worst_span, worst_shift = 0.0, 0.0
    vocab = build_vocab([[f"t{i}" for i in range(10)]])
    small = ModelConfig(d_w=5, d_h=3, d_c=4, d_common=2, d_dist=3)
    ex = Example("x", ["t1", "t2"], ["t3"], [["t3", "t4", "t5", "t6"], ["t7"] * 9])
    for seed in range(100):
        state = TrainState.fresh(vocab, small, TrainConfig(seed=seed, dropout=0.0))
        for d in state.extraction.distributions(ex, vocab, L_max=1 + seed % 8):
            worst_span = max(worst_span, abs(d.probs().sum() - 1.0))
        b, e = rng.normal(scale=3, size=7), rng.normal(scale=3, size=7)
        c = rng.uniform(-50, 50)
        p = span_distribution(Tensor(b), Tensor(e), 4).probs()
        q = span_distribution(Tensor(b + c), Tensor(e + c), 4).probs()
        worst_shift = max(worst_shift, float(np.abs(p - q).max()))
    worst_rows, worst_sel = 0.0, 0.0
    for seed in range(100):
        m = SelectionModel(len(vocab), small, np.random.default_rng(seed))
        M = 2 + seed % 7
        _, A, _ = m.fuse(Tensor(rng.normal(scale=3, size=(M, small.d_c))))
        worst_rows = max(worst_rows, float(np.abs(A.data.sum(axis=1) - 1.0).max()))
    ex_sel = Example("x", ["t1", "t2"], ["t4"], [["t4", "t5", "t1"], ["t6", "t4"], ["t2", "t7", "t8"]])
    spans = [Span(0, 0, 0), Span(0, 1, 2), Span(1, 1, 1), Span(2, 0, 1)]
    for seed in range(100):
        m = SelectionModel(len(vocab), small, np.random.default_rng(seed))
        worst_sel = max(worst_sel, abs(m.forward(ex_sel, spans, vocab).probs.data.sum() - 1.0))
    ok = max(worst_span, worst_rows, worst_sel) < 1e-10 and worst_shift < 1e-12
    criterion("normalization suite", ok,
              f"span {worst_span:.1e}, attention rows {worst_rows:.1e}, selection {worst_sel:.1e}, "
              f"shift {worst_shift:.1e}")
    assert ok


def test_set_distribution_oracle(criterion):
    t = time.perf_counter()
    d = span_distribution(Tensor(np.zeros(2)), Tensor(np.zeros(2)), 8)
    d.logp.data[d.begins, d.ends] = np.log(PAIR_P)
    spans = d.spans()
    prob = math.exp(set_log_prob([[spans[0], spans[1]]], [d]).item())
    exact = 0.5 * 0.3 / 0.5 + 0.3 * 0.5 / 0.7
    rng = np.random.default_rng(0)
    n = 200_000
    hits = sum(sorted(sample_without_replacement(np.array(PAIR_P), 2, rng)) == [0, 1] for _ in range(n))
    sigma = math.sqrt(exact * (1 - exact) / n)
    elapsed = time.perf_counter() - t
    ok = abs(prob - 0.514285714285714) < 1e-12 and abs(hits / n - exact) < 3 * sigma and elapsed < 10
    criterion("set-distribution oracle", ok,
              f"P={prob:.15f}, empirical {hits / n:.5f} ({(hits / n - exact) / sigma:+.2f} sigma) in {elapsed:.1f} s")
    assert ok


def test_reinforce_exactness(criterion):
    t = time.perf_counter()
    gap, scale, n_sets = reinforce_exactness(0)
    elapsed = time.perf_counter() - t
    ok = gap < 1e-8 and n_sets <= 12 and scale > 1e-3 and elapsed < 30
    criterion("REINFORCE exactness", ok,
              f"max gap {gap:.1e} (gradient scale {scale:.2e}) over {n_sets} sets in {elapsed:.1f} s")
    assert ok


def test_reward_suite(criterion):
    wrong = [(c, g, want, reward(c, g)) for c, g, want in REWARD_CASES if abs(reward(c, g) - want) > 1e-15]
    wants = {w for _, _, w in REWARD_CASES}
    covered = all(any(abs(w - x) < 1e-15 for w in wants) for x in (2.0, 0.4, 2 / 3, -1.0))
    ok = not wrong and covered and len(REWARD_CASES) >= 20
    criterion("reward suite", ok, f"{len(REWARD_CASES) - len(wrong)}/{len(REWARD_CASES)} pairs agree")
    assert ok


@pytest.mark.slow
def test_learning_smoke(criterion):
    train, dev, _ = synthetic(0.5)
    t = time.perf_counter()
    state = run_pipeline(train, dev, build_vocab(train), DESK_MODEL, DESK_TRAIN)
    elapsed = time.perf_counter() - t
    em = ev.evaluate(dev, state).em
    ok = em >= 90 and elapsed < SMOKE_BUDGET
    criterion("learning smoke", ok, f"dev EM {em:.1f} (need 90) in {elapsed / 60:.1f} min")
    assert ok


@pytest.mark.slow
def test_directional_ablation(criterion):
    train, dev, _ = synthetic(1.0)
    state = TrainState.fresh(build_vocab(train), DESK_MODEL, DESK_TRAIN)
    pretrain_extract(train, dev, state)
    base, no_fused = run_ablation(train, dev, state, features=(None, "fused"))
    drop = base.report.em - no_fused.report.em
    ok = drop >= 10
    criterion("directional ablation", ok,
              f"full EM {base.report.em:.1f}, without fused {no_fused.report.em:.1f}, drop {drop:.1f} (need 10)")
    assert ok


@pytest.mark.slow
def test_directional_k_sweep(criterion):
    train, dev, _ = synthetic(1.0)
    rows = run_k_sweep(train, dev, build_vocab(train), DESK_MODEL, DESK_TRAIN, Ks=(1, 2, 3))
    em = {r.variant: r.report.em for r in rows}
    ok = em["K=2"] >= em["K=1"] and "K=3" in em
    criterion("directional K-sweep", ok, ", ".join(f"{k} EM {v:.1f}" for k, v in em.items()))
    assert ok


def test_reproducibility(criterion, tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["gen-synth", "--seed", "3", "--out-dir", str(data), "--n-train", "12", "--n-dev", "4",
                 "--n-test", "0", "--n-passages", "4", "--passage-len", "8"]) == 0
    tiny = ["--d-w", "6", "--d-h", "4", "--d-c", "4", "--d-dist", "3", "--L-max", "3"]
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["train-joint", "--cold-start", "--seed", "5", "--train", str(data / "train.jsonl"),
                     "--dev", str(data / "dev.jsonl"), "--out-dir", str(out), *tiny, "--epochs-rl", "2"]) == 0
        assert main(["eval", "--ckpt", str(out / "joint.ckpt.json"), "--corpus", str(data / "dev.jsonl"),
                     "--out-dir", str(out)]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    capsys.readouterr()
    a, b = outputs
    same = sorted(a) == sorted(b) and all(a[k] == b[k] for k in a)
    ok = same and "joint.ckpt.json" in a and "eval.json" in a
    criterion("reproducibility", ok, f"{len(a)} output files, {'identical' if same else 'differ'}")
    assert ok
