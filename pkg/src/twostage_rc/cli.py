"""Command-line entry point: ``twostage-rc <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path
from typing import Sequence

from . import evaluation as ev
from . import experiments
from .config import FEATURES, ModelConfig, TrainConfig
from .data import (
    ConfigError,
    CorpusError,
    SynthConfig,
    build_vocab,
    gen_synthetic,
    load_corpus,
    load_embeddings,
    save_corpus,
)
from .diagnostics import gradient_suite
from .extraction import DegeneratePassageError, InputError
from .gradcore import GradcoreError, no_grad
from .gradcore.checkpoint import CheckpointError
from .rl.objective import EnumerationBudgetError
from .rl.train import Reporter, joint_train, pretrain_extract, pretrain_select
from .selection import BoundsError, dump_attention
from .state import TrainState

PROG = "twostage-rc"
OUT_ENV = "TWOSTAGE_RC_OUT"
DEFAULT_OUT = "runs"
GRAD_TOLERANCE = 1e-4
SWITCHES = ("--cold-start", "--verbose")  # flags without a value

MODULE_ERRORS = (
    BoundsError,
    CheckpointError,
    ConfigError,
    CorpusError,
    DegeneratePassageError,
    EnumerationBudgetError,
    GradcoreError,
    InputError,
    OSError,
)


class PreconditionError(RuntimeError):
    pass


# -- argument parsing ----------------------------------------------------------------


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _common(seed_required: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--out-dir", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--seed", type=int, required=seed_required)
    p.add_argument("--jobs", type=int, default=1, help="threads for evaluation")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _model_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    for f in fields(ModelConfig):
        p.add_argument(_flag(f.name), type=int, default=None)
    p.add_argument("--embeddings", help="text file of 'token v1 ... v_dw' lines")
    return p


def _train_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    for f in fields(TrainConfig):
        if f.name in ("seed", "disabled"):
            continue
        if f.type in (bool, "bool"):
            p.add_argument(_flag(f.name), type=_boolean, default=None)
        else:
            kind = float if f.type in (float, "float") else int
            p.add_argument(_flag(f.name), type=kind, default=None)
    p.add_argument("--disable", action="append", choices=FEATURES, default=None, help="selection feature to zero")
    return p


def _boolean(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Extract-then-select reading comprehension over multiple passages.",
        epilog="Any option may also come from a --config file of 'key = value' lines; command-line flags win.",
    )
    parser.add_argument("--config", help="file of 'key = value' lines setting any flag")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    seeded, unseeded = _common(True), _common(False)
    model, train = _model_flags(), _train_flags()

    p = sub.add_parser("gen-synth", parents=[seeded], help="write a synthetic cross-evidence corpus")
    for f in fields(SynthConfig):
        if f.name != "seed":
            p.add_argument(_flag(f.name), type=float if f.type in (float, "float") else int, default=None)

    p = sub.add_parser("pretrain-extract", parents=[seeded, model, train], help="MLE pretraining of the extractor")
    _corpora(p)
    p.add_argument("--min-count", type=int, default=1)

    p = sub.add_parser("pretrain-select", parents=[unseeded, train], help="MLE pretraining of the selector")
    _corpora(p)
    p.add_argument("--init", required=True, help="checkpoint from pretrain-extract")

    p = sub.add_parser("train-joint", parents=[unseeded, model, train], help="joint REINFORCE fine-tuning")
    _corpora(p)
    p.add_argument("--init", help="checkpoint to start from")
    p.add_argument("--cold-start", action="store_true", help="start from random parameters")
    p.add_argument("--min-count", type=int, default=1)

    p = sub.add_parser("eval", parents=[unseeded], help="EM/F1 of a checkpoint on a corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--K", type=int, default=None)
    p.add_argument("--name", default="eval", help="report file stem")

    p = sub.add_parser("ablate", parents=[unseeded, train], help="retrain the selector with each feature disabled")
    _corpora(p)
    p.add_argument("--init", required=True, help="checkpoint from pretrain-extract")
    p.add_argument("--features", default=",".join(FEATURES), help="comma-separated features to disable in turn")

    p = sub.add_parser("k-sweep", parents=[seeded, model, train], help="full training and evaluation per K")
    _corpora(p)
    p.add_argument("--Ks", default="1,2,3")
    p.add_argument("--min-count", type=int, default=1)

    p = sub.add_parser("grad-check", parents=[seeded], help="finite-difference check of every parameter")
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=GRAD_TOLERANCE)

    p = sub.add_parser("dump-attention", parents=[unseeded], help="candidate attention map as CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--id", dest="example_id", help="example id (default: first)")
    return parser


def _corpora(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)


def read_config(path: str) -> list[str]:
    """Turn ``key = value`` lines into ``--key value`` arguments; ``#`` starts a comment."""
    out: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            flag = _flag(key.lstrip("-"))
            if flag in SWITCHES:
                if _boolean(value):
                    out.append(flag)
            else:
                out.extend([flag, value])
    return out


def expand_argv(argv: Sequence[str]) -> list[str]:
    """Splice ``--config`` contents in right after the command so later flags override them."""
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(list(argv))
    if not known.config or not rest:
        return rest
    return [rest[0], *read_config(known.config), *rest[1:]]


# -- helpers -----------------------------------------------------------------------------------


def out_dir(args) -> Path:
    path = Path(args.out_dir or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def model_config(args, base: ModelConfig | None = None) -> ModelConfig:
    d = (base or ModelConfig()).to_dict()
    for f in fields(ModelConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            d[f.name] = value
    return ModelConfig.from_dict(d)


def train_config(args, base: TrainConfig | None = None) -> TrainConfig:
    d = (base or TrainConfig()).to_dict()
    for f in fields(TrainConfig):
        value = getattr(args, f.name, None)
        if value is not None and f.name not in ("disabled",):
            d[f.name] = value
    if getattr(args, "disable", None) is not None:
        d["disabled"] = list(args.disable)
    cfg = TrainConfig.from_dict(d)
    cfg.validate()
    return cfg


def fresh_state(args, train) -> TrainState:
    vocab = build_vocab(train, args.min_count)
    state = TrainState.fresh(vocab, model_config(args), train_config(args))
    if args.embeddings:
        for m in (state.extraction, state.selection):
            hits = load_embeddings(args.embeddings, vocab, m.embedding.data)
        logging.getLogger(PROG).info("embeddings: %d of %d tokens found", hits, len(vocab))
    return state


def load_state(args) -> TrainState:
    state = TrainState.load(args.init)
    state.train_cfg = train_config(args, state.train_cfg)
    if getattr(args, "disable", None) is not None:
        state.reset_selection(state.train_cfg.disabled)
    return state


def _reporter(directory: Path, command: str):
    fh = open(directory / f"{command}.steps.jsonl", "w", encoding="utf-8")
    return fh, Reporter(fh)


def _summary(**kw) -> None:
    print(json.dumps(kw, sort_keys=True))


# -- commands ------------------------------------------------------------------------------------


def cmd_gen_synth(args) -> int:
    kw = {f.name: getattr(args, f.name) for f in fields(SynthConfig) if getattr(args, f.name, None) is not None}
    cfg = SynthConfig(**{**kw, "seed": args.seed})
    directory = out_dir(args)
    splits = gen_synthetic(cfg)
    for name, examples in zip(("train", "dev", "test"), splits):
        save_corpus(directory / f"{name}.jsonl", examples)
    _summary(command="gen-synth", out_dir=str(directory), sizes=[len(s) for s in splits])
    return 0


def _train_phase(args, state: TrainState, phase) -> int:
    train, dev = load_corpus(args.train), load_corpus(args.dev)
    directory = out_dir(args)
    fh, reporter = _reporter(directory, args.command)
    with fh:
        phase(train, dev, state, directory, reporter)
    _summary(command=args.command, best=state.best, checkpoint=str(directory / f"{state.phase}.ckpt.json"))
    return 0


def cmd_pretrain_extract(args) -> int:
    state = fresh_state(args, load_corpus(args.train))
    return _train_phase(args, state, pretrain_extract)


def cmd_pretrain_select(args) -> int:
    return _train_phase(args, load_state(args), pretrain_select)


def cmd_train_joint(args) -> int:
    if args.init:
        state = load_state(args)
    elif args.cold_start:
        if args.seed is None:
            raise PreconditionError("--cold-start needs --seed")
        state = fresh_state(args, load_corpus(args.train))
    else:
        raise PreconditionError("train-joint needs --init CHECKPOINT or --cold-start")
    return _train_phase(args, state, joint_train)


def cmd_eval(args) -> int:
    state = TrainState.load(args.ckpt)
    examples = load_corpus(args.corpus)
    report = ev.evaluate(examples, state, K=args.K, jobs=args.jobs)
    directory = out_dir(args)
    report.write(directory / args.name)
    _summary(command="eval", em=report.em, f1=report.f1, n=report.n)
    return 0


def cmd_ablate(args) -> int:
    state = load_state(args)
    features = [f.strip() for f in args.features.split(",") if f.strip()]
    train, dev = load_corpus(args.train), load_corpus(args.dev)
    path = out_dir(args) / "ablation.csv"
    rows = experiments.run_ablation(train, dev, state, [None, *features], path)
    _summary(command="ablate", table=str(path), rows=[[r.variant, r.report.em] for r in rows])
    return 0


def cmd_k_sweep(args) -> int:
    try:
        Ks = [int(k) for k in args.Ks.split(",") if k.strip()]
    except ValueError as exc:
        raise ConfigError(f"--Ks must be comma-separated integers: {args.Ks!r}") from exc
    train, dev = load_corpus(args.train), load_corpus(args.dev)
    vocab = build_vocab(train, args.min_count)
    path = out_dir(args) / "k_sweep.csv"
    rows = experiments.run_k_sweep(train, dev, vocab, model_config(args), train_config(args), Ks, path)
    _summary(command="k-sweep", table=str(path), rows=[[r.variant, r.report.em] for r in rows])
    return 0


def cmd_grad_check(args) -> int:
    report = gradient_suite(args.seed, args.step)
    worst = max(report.errors, key=report.errors.get)
    print(f"max relative error {report.max_error:.3e} ({worst}) over {report.n_params} parameters")
    return 0 if report.max_error < args.tolerance else 1


def cmd_dump_attention(args) -> int:
    state = TrainState.load(args.ckpt)
    examples = load_corpus(args.corpus)
    if not examples:
        raise CorpusError(f"{args.corpus} holds no examples")
    if args.example_id is None:
        ex = examples[0]
    else:
        matches = [e for e in examples if e.id == args.example_id]
        if not matches:
            raise CorpusError(f"no example with id {args.example_id!r}")
        ex = matches[0]
    cset = ev.top_k_candidates(state, ex)
    with no_grad():
        out = state.selection.forward(ex, cset.spans, state.vocab)
    path = out_dir(args) / f"attention_{ex.id}.csv"
    dump_attention(path, ex, cset.spans, out.attention)
    _summary(command="dump-attention", path=str(path), candidates=len(cset))
    return 0


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "pretrain-extract": cmd_pretrain_extract,
    "pretrain-select": cmd_pretrain_select,
    "train-joint": cmd_train_joint,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "k-sweep": cmd_k_sweep,
    "grad-check": cmd_grad_check,
    "dump-attention": cmd_dump_attention,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = expand_argv(argv)
    except (OSError, ConfigError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 2 on usage errors, 0 after --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except (*MODULE_ERRORS, PreconditionError, ValueError, KeyError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
