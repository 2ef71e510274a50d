"""Synthetic task families: deterministic generators with measurable ground truth.

Each family is a pure function of (family id, seed, sizes, knobs). Train and
test splits are disjoint by construction (token-sequence dedup before split).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Example, Label, LabeledSet, SEP_ID
from .errors import ConfigError
from .rng import Rng

FAMILY_IDS = ("majority-class", "parity", "pair-match",
              "token-count-regression", "fill-mask-seq", "sentiment-lexicon")

_CONTENT_LO = 3        # below this: pad/mask/separator
_PARITY_TOKEN = 5
_COUNT_TOKEN = 7


@dataclass(frozen=True)
class TaskFamily:
    family_id: str
    seed: int = 0
    train_size: int = 96
    test_size: int = 48
    noise: float = 0.0        # label-flip rate
    vocab_skew: float = 0.0   # >0 tilts token sampling toward low ids
    vocab_size: int = 64
    num_classes: int = 8
    seq_out_len: int = 8
    lexicon_seed: int = 0     # distinguishes sentiment-lexicon variants

    def __post_init__(self):
        if self.family_id not in FAMILY_IDS:
            raise ConfigError(f"unknown task family {self.family_id!r}")

    @property
    def label_kind(self) -> str:
        return {"majority-class": "class", "parity": "class", "pair-match": "class",
                "token-count-regression": "scalar", "fill-mask-seq": "tokens",
                "sentiment-lexicon": "class"}[self.family_id]


def _sample_token(rng: Rng, family: TaskFamily) -> int:
    hi = family.vocab_size
    if family.vocab_skew > 0:
        u = rng.uniform() ** (1.0 + family.vocab_skew)
        return _CONTENT_LO + int(u * (hi - _CONTENT_LO))
    return rng.randint(_CONTENT_LO, hi)


def _lexicon(family: TaskFamily) -> dict[int, float]:
    rng = Rng(family.lexicon_seed).split("lexicon")
    signs = rng.uniform((family.vocab_size,))
    return {t: (1.0 if signs[t] < 0.5 else -1.0) for t in range(_CONTENT_LO, family.vocab_size)}


def _vocab_permutation(family: TaskFamily) -> dict[int, int]:
    """Fixed content-token bijection used by the fill-mask-seq label map."""
    span = family.vocab_size - _CONTENT_LO
    return {t: _CONTENT_LO + ((t - _CONTENT_LO) * 7 + 11) % span
            for t in range(_CONTENT_LO, family.vocab_size)}


def _gen_one(family: TaskFamily, rng: Rng) -> Example:
    fid = family.family_id
    C = family.num_classes

    if fid == "majority-class":
        dominant = _sample_token(rng, family)
        length = rng.randint(8, 15)
        toks = [dominant if rng.uniform() < 0.6 else _sample_token(rng, family)
                for _ in range(length)]
        counts = {}
        for t in toks:
            counts[t] = counts.get(t, 0) + 1
        best = min(counts, key=lambda t: (-counts[t], t))
        return Example(tuple(toks), Label.of_class(best % C))

    if fid == "parity":
        k = rng.randint(0, 5)
        length = rng.randint(8, 15)
        toks = [t for t in (_sample_token(rng, family) for _ in range(length))
                if t != _PARITY_TOKEN][: length - k]
        toks += [_PARITY_TOKEN] * k
        perm = rng.permutation(len(toks))
        toks = [toks[i] for i in perm]
        return Example(tuple(toks), Label.of_class(k % 2))

    if fid == "pair-match":
        seg_len = rng.randint(3, 6)
        seg = [_sample_token(rng, family) for _ in range(seg_len)]
        if rng.uniform() < 0.5:
            other = list(seg)
            label = 1
        else:
            other = list(seg)
            pos = rng.randint(0, seg_len)
            other[pos] = _CONTENT_LO + (other[pos] - _CONTENT_LO + 1 +
                                        rng.randint(0, family.vocab_size - _CONTENT_LO - 1)) \
                % (family.vocab_size - _CONTENT_LO)
            label = 0
        return Example(tuple(seg + [SEP_ID] + other), Label.of_class(label))

    if fid == "token-count-regression":
        k = rng.randint(0, 7)
        length = rng.randint(8, 15)
        toks = [t for t in (_sample_token(rng, family) for _ in range(length))
                if t != _COUNT_TOKEN][: length - k]
        toks += [_COUNT_TOKEN] * k
        perm = rng.permutation(len(toks))
        toks = [toks[i] for i in perm]
        return Example(tuple(toks), Label.of_scalar(float(k)))

    if fid == "fill-mask-seq":
        mapping = _vocab_permutation(family)
        length = rng.randint(family.seq_out_len, 15)
        toks = [_sample_token(rng, family) for _ in range(length)]
        label = [mapping[t] for t in toks[: family.seq_out_len]]
        return Example(tuple(toks), Label.of_tokens(label))

    # sentiment-lexicon
    lex = _lexicon(family)
    length = rng.randint(6, 13)
    toks = [_sample_token(rng, family) for _ in range(length)]
    score = sum(lex[t] for t in toks)
    if score == 0:
        toks.append(_sample_token(rng, family))
        score = sum(lex[t] for t in toks)
        if score == 0:
            toks[-1] = max(lex, key=lex.get)
            score = sum(lex[t] for t in toks)
    return Example(tuple(toks), Label.of_class(1 if score > 0 else 0))


def _flip_label(label: Label, family: TaskFamily, rng: Rng) -> Label:
    if label.kind == "class":
        lo, hi = (0, 2) if family.family_id != "majority-class" else (0, family.num_classes)
        return Label.of_class((label.value + 1 + rng.randint(0, hi - 1)) % hi if hi > 1 else 0)
    if label.kind == "scalar":
        return Label.of_scalar(label.value + rng.normal())
    if label.kind == "tokens":
        toks = list(label.value)
        toks[rng.randint(0, len(toks))] = rng.randint(_CONTENT_LO, family.vocab_size)
        return Label.of_tokens(toks)
    return label


def true_label(family: TaskFamily, tokens) -> Label:
    """Noise-free ground-truth label for arbitrary input tokens."""
    fid = family.family_id
    toks = [int(t) for t in tokens]
    if fid == "majority-class":
        counts = {}
        for t in toks:
            if t >= _CONTENT_LO:
                counts[t] = counts.get(t, 0) + 1
        if not counts:
            return Label.of_class(0)
        best = min(counts, key=lambda t: (-counts[t], t))
        return Label.of_class(best % family.num_classes)
    if fid == "parity":
        return Label.of_class(toks.count(_PARITY_TOKEN) % 2)
    if fid == "pair-match":
        if SEP_ID in toks:
            i = toks.index(SEP_ID)
            return Label.of_class(1 if toks[:i] == toks[i + 1:] else 0)
        return Label.of_class(0)
    if fid == "token-count-regression":
        return Label.of_scalar(float(toks.count(_COUNT_TOKEN)))
    if fid == "fill-mask-seq":
        mapping = _vocab_permutation(family)
        return Label.of_tokens([mapping.get(t, t) for t in toks[: family.seq_out_len]])
    lex = _lexicon(family)
    return Label.of_class(1 if sum(lex.get(t, 0.0) for t in toks) > 0 else 0)


def gen_family(family: TaskFamily) -> tuple[LabeledSet, LabeledSet]:
    """Deterministic (train, test) with disjoint inputs."""
    rng = Rng(family.seed).split(f"family:{family.family_id}")
    noise_rng = rng.split("noise")
    total = family.train_size + family.test_size
    seen = set()
    examples = []
    attempts = 0
    while len(examples) < total:
        attempts += 1
        if attempts > 100 * total:
            raise ConfigError("family generator failed to produce enough distinct examples")
        ex = _gen_one(family, rng)
        if ex.tokens in seen:
            continue
        seen.add(ex.tokens)
        if family.noise > 0 and noise_rng.uniform() < family.noise:
            ex = Example(ex.tokens, _flip_label(ex.label, family, noise_rng))
        examples.append(ex)
    return (LabeledSet(examples[: family.train_size]),
            LabeledSet(examples[family.train_size:]))


def family_inputs(family: TaskFamily, n: int, seed: int) -> list:
    """Unlabeled token sequences from a family's input distribution (pool sourcing)."""
    rng = Rng(seed).split(f"inputs:{family.family_id}")
    out, seen = [], set()
    attempts = 0
    while len(out) < n and attempts < 100 * n:
        attempts += 1
        toks = _gen_one(family, rng).tokens
        if toks not in seen:
            seen.add(toks)
            out.append(toks)
    return out
