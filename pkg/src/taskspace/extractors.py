"""Task-embedding extraction: Fisher-diagonal and prefix-based methods.

Both methods run through the same fixed surrogate checkpoint, which is what
puts dataset embeddings and model embeddings in one comparable vector space.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import surrogate as sg
from .data import LabeledSet
from .errors import (ContractViolation, DegenerateEmbeddingError,
                     IncompatibleSpaceError, NumericError)

METHODS = ("taskemb", "tupate")


@dataclass
class ExtractorConfig:
    """Hyperparameters for one extraction job."""

    epochs: int = 3
    batch_size: int = 16
    lr: float = 1e-3
    prefix_len: int = 4
    prefix_lr: float = 5e-2
    seed: int = 0
    reduce_per_tensor: bool = False   # per-tensor scalar means instead of full diagonal
    similarity: str = "cosine"        # or "pearson"

    def to_json(self) -> dict:
        return {"epochs": self.epochs, "batch_size": self.batch_size, "lr": self.lr,
                "prefix_len": self.prefix_len, "prefix_lr": self.prefix_lr,
                "seed": self.seed, "reduce_per_tensor": self.reduce_per_tensor,
                "similarity": self.similarity}


@dataclass(frozen=True)
class TaskEmbedding:
    """Fixed-dimension float32 vector plus the metadata needed to compare it."""

    vector: np.ndarray
    method: str
    kind: str       # "DTE" or "MTE"
    source_id: str
    fingerprint: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        vec = np.ascontiguousarray(self.vector, dtype=np.float32)
        if not np.all(np.isfinite(vec)):
            raise NumericError("embedding contains non-finite entries")
        object.__setattr__(self, "vector", vec)
        if self.method not in METHODS:
            raise ContractViolation(f"unknown method {self.method!r}")
        if self.kind not in ("DTE", "MTE"):
            raise ContractViolation(f"kind must be DTE or MTE, got {self.kind!r}")

    @property
    def dimension(self) -> int:
        return int(self.vector.size)

    def content_hash(self) -> str:
        return hashlib.sha256(self.vector.astype("<f4").tobytes()).hexdigest()


def fisher_diagonal(ckpt: sg.SurrogateCheckpoint, data: LabeledSet) -> np.ndarray:
    """Mean of element-wise squared per-example gradients of log P(y|x)."""
    cfg = ckpt.config
    acc = np.zeros(ckpt.params.total_size())
    for i, ex in enumerate(data):
        ids = sg.batch_ids(cfg, [ex])

        def logp(P):
            return sg.log_prob_batch(cfg, P, ids, [ex.label]).sum()
        try:
            _, grads = ad.value_and_grad(logp, ckpt.params)
        except NumericError as err:
            raise NumericError(f"gradient failure at example {i}: {err}") from err
        g = grads.flatten()
        acc += g * g
    return acc / len(data)


def taskemb_extract(ckpt: sg.SurrogateCheckpoint, data: LabeledSet,
                    cfg: ExtractorConfig | None = None, kind: str = "DTE",
                    source_id: str = "") -> TaskEmbedding:
    """Fine-tune the surrogate, then take the empirical Fisher diagonal."""
    cfg = cfg or ExtractorConfig()
    tuned = sg.fine_tune_full(ckpt, data, epochs=cfg.epochs, batch_size=cfg.batch_size,
                              lr=cfg.lr, seed=cfg.seed)
    diag = fisher_diagonal(tuned, data)
    if cfg.reduce_per_tensor:
        parts, off = [], 0
        for _, arr in tuned.params.items():
            parts.append(diag[off:off + arr.size].mean())
            off += arr.size
        diag = np.array(parts)
    return TaskEmbedding(vector=diag.astype(np.float32), method="taskemb", kind=kind,
                         source_id=source_id, fingerprint=ckpt.fingerprint,
                         metadata={"seed": cfg.seed, "epochs": cfg.epochs,
                                   "n_examples": len(data),
                                   "reduced": cfg.reduce_per_tensor})


def tupate_extract(ckpt: sg.SurrogateCheckpoint, data: LabeledSet,
                   cfg: ExtractorConfig | None = None, kind: str = "DTE",
                   source_id: str = "") -> TaskEmbedding:
    """Prefix-tune on frozen backbone; embedding is the layer-averaged prefix."""
    cfg = cfg or ExtractorConfig()
    prefix = sg.fine_tune_prefix(ckpt, data, prefix_len=cfg.prefix_len, epochs=cfg.epochs,
                                 batch_size=cfg.batch_size, lr=cfg.prefix_lr, seed=cfg.seed)
    k_mean = np.mean(np.stack(prefix.keys), axis=0)
    v_mean = np.mean(np.stack(prefix.values), axis=0)
    vec = np.concatenate([k_mean.ravel(), v_mean.ravel()])
    return TaskEmbedding(vector=vec.astype(np.float32), method="tupate", kind=kind,
                         source_id=source_id, fingerprint=ckpt.fingerprint,
                         metadata={"seed": cfg.seed, "epochs": cfg.epochs,
                                   "prefix_len": cfg.prefix_len, "n_examples": len(data)})


def extract(method: str, ckpt: sg.SurrogateCheckpoint, data: LabeledSet,
            cfg: ExtractorConfig | None = None, kind: str = "DTE",
            source_id: str = "") -> TaskEmbedding:
    if method == "taskemb":
        return taskemb_extract(ckpt, data, cfg, kind, source_id)
    if method == "tupate":
        return tupate_extract(ckpt, data, cfg, kind, source_id)
    raise ContractViolation(f"unknown extraction method {method!r}")


def _check_comparable(a: TaskEmbedding, b: TaskEmbedding) -> None:
    if a.method != b.method:
        raise IncompatibleSpaceError(f"method mismatch: {a.method} vs {b.method}")
    if a.fingerprint != b.fingerprint:
        raise IncompatibleSpaceError("surrogate fingerprint mismatch")
    if a.dimension != b.dimension:
        raise IncompatibleSpaceError(f"dimension mismatch: {a.dimension} vs {b.dimension}")


def cosine_similarity(a: TaskEmbedding, b: TaskEmbedding) -> float:
    """dot(a,b) / (|a||b|) in float64; raises on incomparable or zero vectors."""
    _check_comparable(a, b)
    x = a.vector.astype(np.float64)
    y = b.vector.astype(np.float64)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise DegenerateEmbeddingError("cosine undefined for all-zero embedding")
    return float(np.dot(x, y) / (nx * ny))


def pearson_similarity(a: TaskEmbedding, b: TaskEmbedding) -> float:
    """Pearson correlation of the two vectors (optional alternative metric)."""
    _check_comparable(a, b)
    x = a.vector.astype(np.float64)
    y = b.vector.astype(np.float64)
    xc, yc = x - x.mean(), y - y.mean()
    nx, ny = np.linalg.norm(xc), np.linalg.norm(yc)
    if nx == 0.0 or ny == 0.0:
        raise DegenerateEmbeddingError("pearson undefined for constant embedding")
    return float(np.dot(xc, yc) / (nx * ny))


def similarity(a: TaskEmbedding, b: TaskEmbedding, metric: str = "cosine") -> float:
    if metric == "cosine":
        return cosine_similarity(a, b)
    if metric == "pearson":
        return pearson_similarity(a, b)
    raise ContractViolation(f"unknown similarity metric {metric!r}")
