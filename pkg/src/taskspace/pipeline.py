"""Pool management, DTE/MTE computation with caching, candidate ranking, and
the invocation ledger backing the (k_p + k_D) vs (k_p * k_D) cost comparison.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from dataclasses import dataclass, field

import numpy as np

from . import extractors as ex
from . import surrogate as sg
from .data import Example, Label, LabeledSet, PAD_ID
from .errors import (ConfigError, ContractViolation, DegeneratePoolError,
                     IncompatibleSpaceError, TaskspaceError)
from .extractors import ExtractorConfig, TaskEmbedding
from .oracles import ModelOracle
from .rng import Rng


def normalize_text(tokens) -> tuple:
    """Dedup key: strip padding, keep content token order."""
    return tuple(int(t) for t in tokens if int(t) != PAD_ID)


@dataclass
class UnsupervisedPool:
    """Task-agnostic token sequences used to probe oracles."""

    pool_id: str
    texts: list
    provenance: list  # source tag per text

    def __len__(self) -> int:
        return len(self.texts)


def build_pool(sources: dict, cap_per_source: int, dedup_against=(),
               seed: int = 0, pool_id: str = "pool") -> UnsupervisedPool:
    """Sample up to cap entries per source, drop exact duplicates and any entry
    colliding with the declared evaluation data.

    sources: mapping source_tag -> list of token sequences.
    dedup_against: iterable of token sequences (e.g. evaluation dataset inputs).
    """
    if not sources:
        raise ContractViolation("at least one pool source required")
    rng = Rng(seed).split("pool-build")
    banned = {normalize_text(t) for t in dedup_against}
    seen = set()
    texts, provenance = [], []
    for tag in sorted(sources):
        entries = list(sources[tag])
        idx = rng.split(tag).choice(len(entries), min(cap_per_source, len(entries)))
        for i in sorted(idx):
            key = normalize_text(entries[i])
            if not key or key in banned or key in seen:
                continue
            seen.add(key)
            texts.append(key)
            provenance.append(tag)
    if not texts:
        raise DegeneratePoolError("pool is empty after dedup")
    return UnsupervisedPool(pool_id=pool_id, texts=texts, provenance=provenance)


@dataclass
class InvocationLedger:
    """Counts proving the extractor-call complexity of one experiment."""

    extractor_calls: int = 0
    oracle_predict_calls: int = 0
    grid_evaluations: int = 0
    k_p: int = 0
    k_d: int = 0

    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def count_extraction(self) -> None:
        with self._lock:
            self.extractor_calls += 1

    def count_predictions(self, n: int) -> None:
        with self._lock:
            self.oracle_predict_calls += n

    def count_grid(self, n: int = 1) -> None:
        with self._lock:
            self.grid_evaluations += n

    def to_json(self) -> dict:
        return {"extractor_calls": self.extractor_calls,
                "oracle_predict_calls": self.oracle_predict_calls,
                "grid_evaluations": self.grid_evaluations,
                "k_p": self.k_p, "k_d": self.k_d}


def _atomic_write(path: str, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class EmbeddingStore:
    """On-disk store: surrogate checkpoint, pools, embeddings, ledger.

    Layout under root: surrogate.ckpt, pool/<id>.jsonl, emb/<id>.json + .f32,
    ledger.json. All writes are atomic (write-temp-then-rename).
    """

    def __init__(self, root: str):
        self.root = str(root)
        os.makedirs(os.path.join(self.root, "emb"), exist_ok=True)
        os.makedirs(os.path.join(self.root, "pool"), exist_ok=True)
        self._write_lock = threading.Lock()

    # checkpoint ---------------------------------------------------------

    def checkpoint_path(self) -> str:
        return os.path.join(self.root, "surrogate.ckpt")

    def save_checkpoint(self, ckpt: sg.SurrogateCheckpoint) -> None:
        sg.save_checkpoint(ckpt, self.checkpoint_path())

    def load_checkpoint(self) -> sg.SurrogateCheckpoint:
        path = self.checkpoint_path()
        if not os.path.exists(path):
            raise ConfigError(f"no surrogate checkpoint in store {self.root}")
        return sg.load_checkpoint(path)

    # pools ---------------------------------------------------------------

    def save_pool(self, pool: UnsupervisedPool) -> None:
        lines = [canonical_json({"tokens": list(t), "source": s})
                 for t, s in zip(pool.texts, pool.provenance)]
        _atomic_write(os.path.join(self.root, "pool", f"{pool.pool_id}.jsonl"),
                      ("\n".join(lines) + "\n").encode())

    def load_pool(self, pool_id: str) -> UnsupervisedPool:
        path = os.path.join(self.root, "pool", f"{pool_id}.jsonl")
        texts, provenance = [], []
        with open(path) as f:
            for line in f:
                obj = json.loads(line)
                texts.append(tuple(obj["tokens"]))
                provenance.append(obj.get("source", ""))
        return UnsupervisedPool(pool_id=pool_id, texts=texts, provenance=provenance)

    # embeddings ------------------------------------------------------------

    def _emb_paths(self, emb_id: str) -> tuple[str, str]:
        base = os.path.join(self.root, "emb", emb_id)
        return base + ".json", base + ".f32"

    def has_embedding(self, emb_id: str) -> bool:
        return all(os.path.exists(p) for p in self._emb_paths(emb_id))

    def save_embedding(self, emb_id: str, emb: TaskEmbedding) -> None:
        meta_path, vec_path = self._emb_paths(emb_id)
        meta = {"id": emb_id, "method": emb.method, "kind": emb.kind,
                "source_id": emb.source_id, "fingerprint": emb.fingerprint,
                "dimension": emb.dimension, "content_hash": emb.content_hash(),
                "metadata": emb.metadata}
        with self._write_lock:
            if os.path.exists(meta_path):
                existing = json.loads(open(meta_path).read())
                if existing["content_hash"] != meta["content_hash"]:
                    raise ContractViolation(
                        f"store already holds {emb_id} with a different hash")
                return
            _atomic_write(vec_path, emb.vector.astype("<f4").tobytes())
            _atomic_write(meta_path, canonical_json(meta).encode())

    def load_embedding(self, emb_id: str) -> TaskEmbedding:
        meta_path, vec_path = self._emb_paths(emb_id)
        meta = json.loads(open(meta_path).read())
        vec = np.frombuffer(open(vec_path, "rb").read(), dtype="<f4")
        emb = TaskEmbedding(vector=vec, method=meta["method"], kind=meta["kind"],
                            source_id=meta["source_id"], fingerprint=meta["fingerprint"],
                            metadata=meta.get("metadata", {}))
        if emb.content_hash() != meta["content_hash"]:
            raise ContractViolation(f"content hash mismatch for {emb_id}")
        return emb

    def index(self) -> dict:
        out = {}
        emb_dir = os.path.join(self.root, "emb")
        for name in sorted(os.listdir(emb_dir)):
            if name.endswith(".json"):
                meta = json.loads(open(os.path.join(emb_dir, name)).read())
                out[meta["id"]] = meta
        return out

    # ledger ------------------------------------------------------------------

    def save_ledger(self, ledger: InvocationLedger) -> None:
        _atomic_write(os.path.join(self.root, "ledger.json"),
                      canonical_json(ledger.to_json()).encode())


def cache_key(method: str, fingerprint: str, source_id: str, pool_id: str,
              cfg: ExtractorConfig) -> str:
    payload = canonical_json({"method": method, "fingerprint": fingerprint,
                              "source": source_id, "pool": pool_id,
                              "cfg": cfg.to_json(), "seed": cfg.seed})
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def compute_dte(dataset: LabeledSet, dataset_id: str, method: str,
                ckpt: sg.SurrogateCheckpoint, cfg: ExtractorConfig | None = None,
                store: EmbeddingStore | None = None,
                ledger: InvocationLedger | None = None) -> TaskEmbedding:
    """Dataset task embedding; cached in the store keyed by all inputs."""
    cfg = cfg or ExtractorConfig()
    if store is not None:
        registered = store.load_checkpoint()
        if registered.fingerprint != ckpt.fingerprint:
            raise IncompatibleSpaceError("checkpoint does not match the store's surrogate")
    emb_id = f"dte-{dataset_id}-{method}-{cache_key(method, ckpt.fingerprint, dataset_id, '', cfg)}"
    if store is not None and store.has_embedding(emb_id):
        return store.load_embedding(emb_id)
    emb = ex.extract(method, ckpt, dataset, cfg, kind="DTE", source_id=dataset_id)
    if ledger is not None:
        ledger.count_extraction()
    if store is not None:
        store.save_embedding(emb_id, emb)
    return emb


def predict_pool(oracle: ModelOracle, pool: UnsupervisedPool) -> LabeledSet:
    """Label every pool text through the oracle (the MTE prediction step)."""
    if len(pool) == 0:
        raise ContractViolation("pool must be non-empty")
    examples = []
    for text in pool.texts:
        label = oracle.predict(text)
        examples.append(Example(tokens=text, label=label))
    return LabeledSet(examples)


def compute_mte(oracle: ModelOracle, pool: UnsupervisedPool, method: str,
                ckpt: sg.SurrogateCheckpoint, cfg: ExtractorConfig | None = None,
                store: EmbeddingStore | None = None,
                ledger: InvocationLedger | None = None,
                mte_epochs: int = 1) -> TaskEmbedding:
    """Model task embedding from the oracle's pool predictions.

    Uses one training epoch by default. Transport or protocol failures abort
    the job before anything is persisted.
    """
    cfg = cfg or ExtractorConfig()
    mcfg = ExtractorConfig(**{**cfg.to_json(), "epochs": mte_epochs})
    emb_id = (f"mte-{oracle.oracle_id}-{method}-"
              f"{cache_key(method, ckpt.fingerprint, oracle.oracle_id, pool.pool_id, mcfg)}")
    if store is not None and store.has_embedding(emb_id):
        return store.load_embedding(emb_id)
    labeled = predict_pool(oracle, pool)
    if ledger is not None:
        ledger.count_predictions(len(pool))
    emb = ex.extract(method, ckpt, labeled, mcfg, kind="MTE", source_id=oracle.oracle_id)
    if ledger is not None:
        ledger.count_extraction()
    if store is not None:
        store.save_embedding(emb_id, emb)
    return emb


def rank_candidates(target: TaskEmbedding, candidates: list[TaskEmbedding],
                    metric: str = "cosine") -> list[tuple[str, float]]:
    """All candidates sorted by similarity descending, ties broken by id."""
    rows = []
    for cand in candidates:
        try:
            sim = ex.similarity(target, cand, metric)
        except IncompatibleSpaceError as err:
            raise IncompatibleSpaceError(f"candidate {cand.source_id!r}: {err}") from err
        rows.append((cand.source_id, sim))
    rows.sort(key=lambda r: (-r[1], r[0]))
    return rows
