"""Tokenization, vocabulary, corpus ingestion and the synthetic evidence task."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
MAX_PASSAGE_LEN = 60

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class CorpusError(Exception):
    pass


class ParseError(CorpusError):
    pass


class SchemaError(CorpusError):
    pass


class ConfigError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and split every punctuation mark off."""
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


@dataclass
class Example:
    id: str
    question: list[str]
    answers: list[str]
    passages: list[list[str]]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "question": detokenize(self.question),
            "answers": list(self.answers),
            "passages": [detokenize(p) for p in self.passages],
        }


def example_from_json(obj: dict, max_passage_len: int = MAX_PASSAGE_LEN, where: str = "") -> Example:
    for key in ("id", "question", "answers", "passages"):
        if key not in obj:
            raise SchemaError(f"{where}missing field {key!r}")
    answers, passages = obj["answers"], obj["passages"]
    if not isinstance(answers, list) or not answers or not all(isinstance(a, str) for a in answers):
        raise SchemaError(f"{where}'answers' must be a non-empty list of strings")
    if not isinstance(passages, list) or not all(isinstance(p, str) for p in passages):
        raise SchemaError(f"{where}'passages' must be a list of strings")
    if not isinstance(obj["question"], str):
        raise SchemaError(f"{where}'question' must be a string")
    question = tokenize(obj["question"])
    if not question:
        raise SchemaError(f"{where}empty question")
    toks = [tokenize(p)[:max_passage_len] for p in passages]
    toks = [t for t in toks if t]
    if not toks:
        raise SchemaError(f"{where}no non-empty passages")
    return Example(str(obj["id"]), question, list(answers), toks)


def load_corpus(path: str | Path, max_passage_len: int = MAX_PASSAGE_LEN) -> list[Example]:
    """Read one JSON object per line; passages are truncated to ``max_passage_len`` tokens."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise SchemaError(f"{path}:{lineno}: expected a JSON object")
            examples.append(example_from_json(obj, max_passage_len, where=f"{path}:{lineno}: "))
    stats = corpus_stats(examples)
    log.info("loaded %s: %d questions, %.1f passages/question", path, stats["questions"], stats["mean_passages"])
    return examples


def corpus_stats(examples: Sequence[Example]) -> dict:
    n = len(examples)
    mean_p = float(np.mean([len(e.passages) for e in examples])) if n else 0.0
    return {"questions": n, "mean_passages": mean_p}


def save_corpus(path: str | Path, examples: Iterable[Example]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(), sort_keys=True) + "\n")


class Vocab:
    """Token ids with 0 reserved for padding and 1 for unknown tokens."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = [PAD_TOKEN, UNK_TOKEN]
        self.stoi: dict[str, int] = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        for tok in tokens:
            if tok not in self.stoi:
                self.stoi[tok] = len(self.itos)
                self.itos.append(tok)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, tok: str) -> bool:
        return tok in self.stoi

    def id(self, tok: str) -> int:
        return self.stoi.get(tok, UNK)

    def ids(self, tokens: Sequence[str]) -> np.ndarray:
        return np.fromiter((self.stoi.get(t, UNK) for t in tokens), dtype=np.int64, count=len(tokens))

    def token(self, idx: int) -> str:
        return self.itos[idx]

    def to_list(self) -> list[str]:
        return list(self.itos[2:])

    @classmethod
    def from_list(cls, tokens: Sequence[str]) -> Vocab:
        return cls(tokens)


def build_vocab(examples: Iterable, min_count: int = 1) -> Vocab:
    """Vocabulary of tokens seen at least ``min_count`` times.

    Accepts Examples or plain token sequences. Ids are assigned by
    descending frequency, then alphabetically.
    """
    counts: Counter[str] = Counter()
    for ex in examples:
        if isinstance(ex, Example):
            counts.update(ex.question)
            for p in ex.passages:
                counts.update(p)
        elif isinstance(ex, str):
            counts[ex] += 1
        else:
            counts.update(ex)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocab(kept)


def load_embeddings(path: str | Path, vocab: Vocab, table: np.ndarray) -> int:
    """Overwrite rows of ``table`` from a ``token v1 v2 ...`` text file; returns rows set."""
    hits = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip().split(" ")
            if len(parts) != table.shape[1] + 1 or parts[0] not in vocab:
                continue
            table[vocab.id(parts[0])] = np.asarray(parts[1:], dtype=np.float64)
            hits += 1
    return hits


# -- synthetic cross-passage evidence task ---------------------------------------------

QUESTION_TEMPLATE = ("which", "entity", "is", "linked", "to")


@dataclass
class SynthConfig:
    """Knobs for :func:`gen_synthetic`.

    ``distractors`` is the number of passages that mention the question's
    distractor entity; the gold entity is always mentioned in exactly two
    passages and the remaining passages mention unrelated entities with no
    cue words.
    """

    vocab_size: int = 200
    n_entities: int = 40
    n_passages: int = 5
    passage_len: int = 12
    cross_fraction: float = 0.5
    distractors: int = 2
    n_cues: int = 3
    two_token_fraction: float = 0.3
    n_train: int = 500
    n_dev: int = 100
    n_test: int = 100
    seed: int = 0

    def validate(self) -> None:
        for name in ("vocab_size", "n_entities", "n_passages", "passage_len", "distractors", "n_cues"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("n_train", "n_dev", "n_test"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not 0.0 <= self.cross_fraction <= 1.0:
            raise ConfigError("cross_fraction must lie in [0, 1]")
        if not 0.0 <= self.two_token_fraction <= 1.0:
            raise ConfigError("two_token_fraction must lie in [0, 1]")
        if self.n_cues < 2:
            raise ConfigError("n_cues must be at least 2 so that strict cue subsets exist")
        if self.n_cues + 2 > self.passage_len:
            raise ConfigError(
                f"{self.n_cues} cues plus a two-token entity do not fit a passage of {self.passage_len}"
            )
        if 2 + self.distractors > self.n_passages:
            raise ConfigError("two gold passages plus the distractor passages exceed n_passages")
        if self.n_entities < 2 + max(0, self.n_passages - 2 - self.distractors):
            raise ConfigError("not enough entities for gold, distractor and noise passages")
        if self.vocab_size < 2 * self.n_cues + 8:
            raise ConfigError("vocab_size too small for cues plus filler")


def _entity_names(cfg: SynthConfig, rng: np.random.Generator) -> list[list[str]]:
    names = []
    for i in range(cfg.n_entities):
        if rng.random() < cfg.two_token_fraction:
            names.append([f"ent{i}a", f"ent{i}b"])
        else:
            names.append([f"ent{i}"])
    return names


def _passage(
    entity: list[str], cues: Sequence[str], filler: Sequence[str], length: int, rng: np.random.Generator
) -> list[str]:
    slots = length - len(entity) + 1
    body = [None] * (slots)
    positions = rng.permutation(slots)
    ent_pos = int(positions[0])
    body[ent_pos] = entity
    for pos, cue in zip(positions[1 : 1 + len(cues)], cues):
        body[int(pos)] = [cue]
    out: list[str] = []
    for item in body:
        out.extend(item if item is not None else [filler[int(rng.integers(len(filler)))]])
    return out


def _distractor_sets(
    cues: Sequence[str], cut: int, cfg: SynthConfig, rng: np.random.Generator
) -> list[list[str]]:
    """Cue sets for the distractor's passages.

    One passage carries ``cut`` or ``n_cues - cut`` cues with even odds, the
    size of a randomly chosen cross-evidence gold piece, so its cue count
    alone does not tell it apart from a gold passage. The rest carry none.
    """
    size = cut if rng.random() < 0.5 else cfg.n_cues - cut
    picks = [cues[int(i)] for i in rng.permutation(cfg.n_cues)[:size]]
    return [picks] + [[] for _ in range(cfg.distractors - 1)]


def _question(
    qid: str, cross: bool, cfg: SynthConfig, names: list[list[str]], words: list[str], rng: np.random.Generator
) -> Example:
    cue_idx = rng.choice(len(words), size=cfg.n_cues, replace=False)
    cues = [words[int(i)] for i in cue_idx]
    filler = [w for w in words if w not in set(cues)]
    ents = rng.choice(len(names), size=2 + cfg.n_passages - 2 - cfg.distractors, replace=False)
    gold, distractor, noise = names[int(ents[0])], names[int(ents[1])], [names[int(e)] for e in ents[2:]]

    order = [int(i) for i in rng.permutation(cfg.n_cues)]
    shuffled = [cues[i] for i in order]
    cut = int(rng.integers(1, cfg.n_cues))
    if cross:
        # split the cues between the two gold passages, neither gets all of them
        gold_sets = [shuffled[:cut], shuffled[cut:]]
    else:
        gold_sets = [list(shuffled), shuffled[:cut]]
    distractor_sets = _distractor_sets(cues, cut, cfg, rng)

    passages = [_passage(gold, s, filler, cfg.passage_len, rng) for s in gold_sets]
    passages += [_passage(distractor, s, filler, cfg.passage_len, rng) for s in distractor_sets]
    passages += [_passage(e, [], filler, cfg.passage_len, rng) for e in noise]
    perm = rng.permutation(len(passages))
    passages = [passages[int(i)] for i in perm]
    question = list(QUESTION_TEMPLATE) + [cues[i] for i in sorted(order)] + ["?"]
    return Example(qid, question, [detokenize(gold)], passages)


def gen_synthetic(cfg: SynthConfig) -> tuple[list[Example], list[Example], list[Example]]:
    """Deterministic train/dev/test splits of the cue-union task.

    Every question lists ``n_cues`` cue words. The gold entity appears in two
    passages. For a cross-evidence question, neither gold passage contains all
    cues but together they do; for the others, one gold passage has all cues.
    The distractor entity has one passage holding as many cues as one of the
    two gold pieces and the rest hold none, so it never covers all cues.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    names = _entity_names(cfg, rng)
    words = [f"w{i}" for i in range(cfg.vocab_size)]
    splits = []
    for split, n in (("train", cfg.n_train), ("dev", cfg.n_dev), ("test", cfg.n_test)):
        n_cross = int(round(cfg.cross_fraction * n))
        flags = np.zeros(n, dtype=bool)
        flags[rng.permutation(n)[:n_cross]] = True
        splits.append([_question(f"{split}-{k}", bool(flags[k]), cfg, names, words, rng) for k in range(n)])
    return splits[0], splits[1], splits[2]


def find_occurrences(passage: Sequence[str], answer_tokens: Sequence[str]) -> list[tuple[int, int]]:
    """All ``(begin, end)`` inclusive spans where ``answer_tokens`` appears contiguously."""
    n = len(answer_tokens)
    if n == 0:
        return []
    first = answer_tokens[0]
    return [
        (i, i + n - 1)
        for i in range(len(passage) - n + 1)
        if passage[i] == first and list(passage[i : i + n]) == list(answer_tokens)
    ]
