"""In-process candidate models for the benchmarks.

Two deliberately different architectures: fine-tuned tiny-transformer variants
(through the surrogate machinery, with their own configs) and a bag-of-tokens
linear model trained directly on token-count features.
"""

from __future__ import annotations


import numpy as np

from . import surrogate as sg
from .data import Label, LabeledSet, PAD_ID
from .errors import ConfigError
from .oracles import ModelOracle, SurrogateModelOracle
from .rng import Rng

ARCHITECTURES = ("xf-small", "xf-wide", "bow")


def _counts_features(tokens, vocab_size: int) -> np.ndarray:
    x = np.zeros(vocab_size)
    for t in tokens:
        if t != PAD_ID:
            x[int(t)] += 1.0
    return x


class BagOfTokensOracle(ModelOracle):
    """Linear model over token-count features; supports all four output kinds.

    class/distribution: multinomial logistic; scalar: linear regression;
    tokens: independent per-position logistic over the vocabulary.
    """

    def __init__(self, oracle_id: str, kind: str, vocab_size: int,
                 weights: np.ndarray, bias: np.ndarray, seq_out_len: int = 0):
        super().__init__(oracle_id, kind)
        self.vocab_size = vocab_size
        self.weights = weights
        self.bias = bias
        self.seq_out_len = seq_out_len

    def _predict(self, tokens, prompt):
        x = _counts_features(tokens, self.vocab_size)
        if self.kind in ("class", "distribution"):
            logits = self.weights @ x + self.bias
            if self.kind == "class":
                return Label.of_class(int(np.argmax(logits)))
            e = np.exp(logits - logits.max())
            return Label.of_distribution(e / e.sum())
        if self.kind == "scalar":
            return Label.of_scalar(float(self.weights @ x + self.bias[0]))
        logits = self.weights @ x + self.bias  # (seq_out_len, V)
        return Label.of_tokens(np.argmax(logits, axis=-1).tolist())


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def train_bag_of_tokens(oracle_id: str, data: LabeledSet, vocab_size: int,
                        num_classes: int, seq_out_len: int, epochs: int = 60,
                        lr: float = 0.05, seed: int = 0) -> BagOfTokensOracle:
    """Full-batch gradient descent; deterministic given the seed."""
    X = np.stack([_counts_features(ex.tokens, vocab_size) for ex in data])
    n = len(data)
    rng = Rng(seed).split("bow")
    if data.kind in ("class", "distribution"):
        C = num_classes
        if data.kind == "class":
            Y = np.zeros((n, C))
            Y[np.arange(n), [ex.label.value for ex in data]] = 1.0
        else:
            Y = np.array([ex.label.value for ex in data])
        W = rng.normal((C, vocab_size), std=0.01)
        b = np.zeros(C)
        for _ in range(epochs):
            P = _softmax_rows(X @ W.T + b)
            G = (P - Y) / n
            W -= lr * (G.T @ X)
            b -= lr * G.sum(axis=0)
        return BagOfTokensOracle(oracle_id, data.kind, vocab_size, W, b)
    if data.kind == "scalar":
        y = np.array([ex.label.value for ex in data])
        # ridge regression closed form
        A = X.T @ X + 1e-3 * np.eye(vocab_size)
        w = np.linalg.solve(A, X.T @ y)
        return BagOfTokensOracle(oracle_id, "scalar", vocab_size, w, np.zeros(1))
    # tokens: one logistic head per output position
    L = seq_out_len
    W = rng.normal((L, vocab_size, vocab_size), std=0.01)
    b = np.zeros((L, vocab_size))
    Y = np.zeros((n, L, vocab_size))
    for i, exm in enumerate(data):
        for j, t in enumerate(exm.label.value[:L]):
            if t != PAD_ID:
                Y[i, j, t] = 1.0
    for _ in range(epochs):
        logits = np.einsum("nv,lcv->nlc", X, W) + b
        P = _softmax_rows(logits)
        G = (P - Y) / n
        W -= lr * np.einsum("nlc,nv->lcv", G, X)
        b -= lr * G.sum(axis=0)
    Wf = W.reshape(L, vocab_size, vocab_size)
    return BagOfTokensOracle(oracle_id, "tokens", vocab_size,
                             Wf, b, seq_out_len=L)


def arch_surrogate_config(arch: str, vocab_size: int, max_len: int,
                          num_classes: int, seq_out_len: int) -> sg.SurrogateConfig:
    if arch == "xf-small":
        return sg.SurrogateConfig(vocab_size=vocab_size, width=16, layers=1, heads=2,
                                  ff_width=32, max_len=max_len, num_classes=num_classes,
                                  seq_out_len=seq_out_len)
    if arch == "xf-wide":
        return sg.SurrogateConfig(vocab_size=vocab_size, width=24, layers=2, heads=2,
                                  ff_width=48, max_len=max_len, num_classes=num_classes,
                                  seq_out_len=seq_out_len)
    raise ConfigError(f"unknown transformer architecture {arch!r}")


def train_zoo_model(arch: str, oracle_id: str, data: LabeledSet, vocab_size: int,
                    max_len: int, num_classes: int, seq_out_len: int,
                    epochs: int = 4, seed: int = 0) -> ModelOracle:
    """Train one candidate model of the given architecture on a labeled set."""
    if arch == "bow":
        return train_bag_of_tokens(oracle_id, data, vocab_size, num_classes,
                                   seq_out_len, seed=seed)
    cfg = arch_surrogate_config(arch, vocab_size, max_len, num_classes, seq_out_len)
    ckpt = sg.init_surrogate(cfg, seed)
    tuned = sg.fine_tune_full(ckpt, data, epochs=epochs, seed=seed)
    return SurrogateModelOracle(oracle_id, tuned, data.kind)
