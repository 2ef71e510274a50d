"""Tiny transformer encoder used as the fixed base model for every embedding.

Supports full fine-tuning, masked-token pretraining, prefix-augmented
attention (per-layer key/value matrices prepended in attention), and exact
log-likelihood evaluation for all four label kinds.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamVector, Tensor
from .data import Example, Label, LabeledSet, MASK_ID, PAD_ID
from .errors import ConfigError, ContractViolation
from .rng import Rng

_MAGIC = b"TSKV1"
_NEG_INF = -1e9
_LN_EPS = 1e-5


@dataclass(frozen=True)
class SurrogateConfig:
    vocab_size: int = 64
    width: int = 32
    layers: int = 2
    heads: int = 2
    ff_width: int = 64
    max_len: int = 32
    num_classes: int = 8
    seq_out_len: int = 8
    sigma: float = 1.0  # regression noise, fixed

    def validate(self) -> None:
        extents = (self.vocab_size, self.width, self.layers, self.heads,
                   self.ff_width, self.max_len, self.num_classes, self.seq_out_len)
        if any(int(e) <= 0 for e in extents):
            raise ConfigError("all config extents must be positive")
        if self.width % self.heads != 0:
            raise ConfigError("width must be divisible by heads")
        if self.vocab_size < 3:
            raise ConfigError("vocab must include pad/mask/separator ids")
        if self.seq_out_len > self.max_len:
            raise ConfigError("seq_out_len cannot exceed max_len")
        if self.sigma != 1.0:
            raise ConfigError("regression sigma is fixed at 1")

    def to_json(self) -> dict:
        return {"vocab_size": self.vocab_size, "width": self.width,
                "layers": self.layers, "heads": self.heads,
                "ff_width": self.ff_width, "max_len": self.max_len,
                "num_classes": self.num_classes, "seq_out_len": self.seq_out_len,
                "sigma": self.sigma}

    @staticmethod
    def from_json(obj: dict) -> "SurrogateConfig":
        cfg = SurrogateConfig(**obj)
        cfg.validate()
        return cfg


def param_shapes(cfg: SurrogateConfig) -> list[tuple[str, tuple]]:
    """Canonical (name, shape) list; registration order defines the flat layout."""
    d, ff = cfg.width, cfg.ff_width
    shapes = [("tok_emb", (cfg.vocab_size, d)), ("pos_emb", (cfg.max_len, d))]
    for l in range(cfg.layers):
        pre = f"layer{l}."
        shapes += [
            (pre + "ln1.g", (d,)), (pre + "ln1.b", (d,)),
            (pre + "attn.wq", (d, d)), (pre + "attn.bq", (d,)),
            (pre + "attn.wk", (d, d)), (pre + "attn.bk", (d,)),
            (pre + "attn.wv", (d, d)), (pre + "attn.bv", (d,)),
            (pre + "attn.wo", (d, d)), (pre + "attn.bo", (d,)),
            (pre + "ln2.g", (d,)), (pre + "ln2.b", (d,)),
            (pre + "ff.w1", (d, ff)), (pre + "ff.b1", (ff,)),
            (pre + "ff.w2", (ff, d)), (pre + "ff.b2", (d,)),
        ]
    shapes += [
        ("ln_f.g", (d,)), ("ln_f.b", (d,)),
        ("head.class.w", (d, cfg.num_classes)), ("head.class.b", (cfg.num_classes,)),
        ("head.scalar.w", (d, 1)), ("head.scalar.b", (1,)),
        ("head.token.w", (d, cfg.vocab_size)), ("head.token.b", (cfg.vocab_size,)),
    ]
    return shapes


def param_count(cfg: SurrogateConfig) -> int:
    return sum(int(np.prod(s)) for _, s in param_shapes(cfg))


def _fingerprint(cfg: SurrogateConfig, params: ParamVector) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(cfg.to_json(), sort_keys=True, separators=(",", ":")).encode())
    for _, arr in params.items():
        h.update(arr.astype("<f8").tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class SurrogateCheckpoint:
    """Immutable full parameter state; fingerprint keys embedding compatibility."""

    config: SurrogateConfig
    params: ParamVector
    fingerprint: str

    @staticmethod
    def create(config: SurrogateConfig, params: ParamVector) -> "SurrogateCheckpoint":
        return SurrogateCheckpoint(config, params, _fingerprint(config, params))


@dataclass(frozen=True)
class PrefixParams:
    """Per-layer attention key/value prefix matrices, each (prefix_len, width)."""

    keys: tuple    # one (p, d) array per layer
    values: tuple  # one (p, d) array per layer
    prefix_len: int

    def to_paramvector(self) -> ParamVector:
        pv = ParamVector()
        for l, k in enumerate(self.keys):
            pv.register(f"prefix.k{l}", k)
        for l, v in enumerate(self.values):
            pv.register(f"prefix.v{l}", v)
        return pv

    @staticmethod
    def from_paramvector(pv: ParamVector, layers: int, prefix_len: int) -> "PrefixParams":
        keys = tuple(pv[f"prefix.k{l}"] for l in range(layers))
        values = tuple(pv[f"prefix.v{l}"] for l in range(layers))
        return PrefixParams(keys=keys, values=values, prefix_len=prefix_len)


def init_surrogate(config: SurrogateConfig, seed: int) -> SurrogateCheckpoint:
    """Deterministic scaled-normal init; same (config, seed) gives the same fingerprint."""
    config.validate()
    rng = Rng(seed).split("surrogate-init")
    params = ParamVector()
    for name, shape in param_shapes(config):
        if name.endswith((".g",)):
            params.register(name, np.ones(shape))
        elif name.endswith((".b", ".bq", ".bk", ".bv", ".bo", ".b1", ".b2")) and len(shape) == 1:
            params.register(name, np.zeros(shape))
        elif name in ("tok_emb", "pos_emb"):
            params.register(name, rng.normal(shape, std=0.1))
        else:
            fan_in = shape[0]
            params.register(name, rng.normal(shape, std=1.0 / np.sqrt(fan_in)))
    return SurrogateCheckpoint.create(config, params)


def init_prefix(config: SurrogateConfig, prefix_len: int, seed: int) -> PrefixParams:
    """Deterministic prefix initialization."""
    if prefix_len <= 0:
        raise ContractViolation("prefix length must be positive")
    rng = Rng(seed).split("prefix-init")
    std = 1.0 / np.sqrt(config.width)
    keys = tuple(rng.normal((prefix_len, config.width), std=std) for _ in range(config.layers))
    values = tuple(rng.normal((prefix_len, config.width), std=std) for _ in range(config.layers))
    return PrefixParams(keys=keys, values=values, prefix_len=prefix_len)


# -- forward pass -------------------------------------------------------------


def _layer_norm(x: Tensor, g: Tensor, b: Tensor) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return xc / (var + _LN_EPS).sqrt() * g + b


def _attention(cfg: SurrogateConfig, P: dict, layer: int, x: Tensor,
               key_pad: np.ndarray, prefix: dict | None) -> Tensor:
    B, S, d = x.shape
    h = cfg.heads
    dh = d // h
    pre = f"layer{layer}."

    def split_heads(t: Tensor) -> Tensor:
        return t.reshape(B, S, h, dh).swapaxes(1, 2)

    q = split_heads(x @ P[pre + "attn.wq"] + P[pre + "attn.bq"])
    k = split_heads(x @ P[pre + "attn.wk"] + P[pre + "attn.bk"])
    v = split_heads(x @ P[pre + "attn.wv"] + P[pre + "attn.bv"])

    p = 0
    if prefix is not None:
        kp, vp = prefix[f"prefix.k{layer}"], prefix[f"prefix.v{layer}"]
        p = kp.shape[0]
        if p > 0:
            kp = kp.reshape(p, h, dh).swapaxes(0, 1).reshape(1, h, p, dh).broadcast_to((B, h, p, dh))
            vp = vp.reshape(p, h, dh).swapaxes(0, 1).reshape(1, h, p, dh).broadcast_to((B, h, p, dh))
            k = ad.concat([kp, k], axis=2)
            v = ad.concat([vp, v], axis=2)
        else:
            p = 0

    # additive mask: pad key positions blocked, prefix positions always visible
    mask = np.zeros((B, 1, 1, p + S))
    mask[:, 0, 0, p:] = np.where(key_pad, _NEG_INF, 0.0)
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(dh)) + mask
    attn = scores.softmax()
    out = (attn @ v).swapaxes(1, 2).reshape(B, S, d)
    return out @ P[pre + "attn.wo"] + P[pre + "attn.bo"]


def encode(cfg: SurrogateConfig, P: dict, ids: np.ndarray,
           prefix: dict | None = None) -> tuple[Tensor, np.ndarray]:
    """Run the encoder; returns final states (B,S,d) and the pad mask (B,S)."""
    ids = np.asarray(ids, dtype=np.int64)
    B, S = ids.shape
    pad = ids == PAD_ID
    x = ad.embedding(P["tok_emb"], ids) + ad.embedding(P["pos_emb"], np.arange(S))
    for l in range(cfg.layers):
        pre = f"layer{l}."
        x = x + _attention(cfg, P, l, _layer_norm(x, P[pre + "ln1.g"], P[pre + "ln1.b"]), pad, prefix)
        hidden = _layer_norm(x, P[pre + "ln2.g"], P[pre + "ln2.b"])
        x = x + (hidden @ P[pre + "ff.w1"] + P[pre + "ff.b1"]).relu() @ P[pre + "ff.w2"] + P[pre + "ff.b2"]
    return _layer_norm(x, P["ln_f.g"], P["ln_f.b"]), pad


def _pool(states: Tensor, pad: np.ndarray) -> Tensor:
    keep = (~pad).astype(np.float64)
    counts = keep.sum(axis=1, keepdims=True)
    return (states * keep[:, :, None]).sum(axis=1) / counts


def _log_softmax(logits: Tensor) -> Tensor:
    shifted = logits + (-logits.data.max(axis=-1, keepdims=True))
    return shifted - shifted.exp().sum(axis=-1, keepdims=True).log()


def _pad_tokens(tokens, max_len: int) -> list[int]:
    if len(tokens) > max_len:
        raise ContractViolation(f"token sequence longer than max_len={max_len}")
    return list(tokens) + [PAD_ID] * (max_len - len(tokens))


def batch_ids(cfg: SurrogateConfig, examples) -> np.ndarray:
    return np.array([_pad_tokens(ex.tokens, cfg.max_len) for ex in examples], dtype=np.int64)


def log_prob_batch(cfg: SurrogateConfig, P: dict, ids: np.ndarray,
                   labels: list[Label], prefix: dict | None = None) -> Tensor:
    """Per-example log P(y|x), shape (B,). All labels must share one kind."""
    kinds = {lab.kind for lab in labels}
    if len(kinds) != 1:
        raise ContractViolation("mixed label kinds in one batch")
    kind = kinds.pop()
    for lab in labels:
        lab.validate_for(cfg.vocab_size, cfg.num_classes, cfg.seq_out_len)
    B = ids.shape[0]
    states, pad = encode(cfg, P, ids, prefix)

    if kind in ("class", "distribution"):
        logits = _pool(states, pad) @ P["head.class.w"] + P["head.class.b"]
        logp = _log_softmax(logits)
        if kind == "class":
            onehot = np.zeros((B, cfg.num_classes))
            onehot[np.arange(B), [lab.value for lab in labels]] = 1.0
            return (logp * onehot).sum(axis=-1)
        q = np.array([lab.value for lab in labels])
        return (logp * q).sum(axis=-1)

    if kind == "scalar":
        mu = (_pool(states, pad) @ P["head.scalar.w"] + P["head.scalar.b"]).reshape(B)
        y = np.array([lab.value for lab in labels])
        diff = mu - y
        return (diff * diff) * (-0.5)

    # token sequence: per-position softmax over the vocabulary
    logits = states @ P["head.token.w"] + P["head.token.b"]  # (B, S, V)
    logp = _log_softmax(logits)
    sel = np.zeros((B, ids.shape[1], cfg.vocab_size))
    for i, lab in enumerate(labels):
        for j, tok in enumerate(lab.value[: cfg.seq_out_len]):
            if tok != PAD_ID:
                sel[i, j, tok] = 1.0
    return (logp * sel).sum(axis=-1).sum(axis=-1)


def log_prob(ckpt: SurrogateCheckpoint, prefix: PrefixParams | None,
             example: Example) -> float:
    """Log-likelihood of one example under the checkpoint (optionally prefixed)."""
    cfg = ckpt.config
    P = ckpt.params.to_tensors(requires_grad=False)
    pt = prefix.to_paramvector().to_tensors(requires_grad=False) if prefix else None
    ids = batch_ids(cfg, [example])
    return log_prob_batch(cfg, P, ids, [example.label], pt).sum().item()


# -- training -----------------------------------------------------------------


def _mean_nll(cfg: SurrogateConfig, P: dict, ids: np.ndarray, labels: list[Label],
              prefix: dict | None) -> Tensor:
    return log_prob_batch(cfg, P, ids, labels, prefix).mean() * (-1.0)


def _iterate_batches(n: int, batch_size: int, epochs: int, rng: Rng):
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start:start + batch_size]


def fine_tune_full(ckpt: SurrogateCheckpoint, data: LabeledSet, epochs: int = 3,
                   batch_size: int = 16, lr: float = 1e-3, seed: int = 0) -> SurrogateCheckpoint:
    """Adam on mean negative log-likelihood; deterministic given the seed."""
    if epochs == 0:
        return ckpt
    cfg = ckpt.config
    rng = Rng(seed).split("fine-tune-full")
    params = ckpt.params.copy()
    state = ad.AdamState.init(params, lr=lr)
    all_ids = batch_ids(cfg, data.examples)
    labels = [ex.label for ex in data.examples]
    for idx in _iterate_batches(len(data), batch_size, epochs, rng):
        ids = all_ids[idx]
        labs = [labels[i] for i in idx]
        _, grads = ad.value_and_grad(lambda P: _mean_nll(cfg, P, ids, labs, None), params)
        params, state = ad.adam_step(state, params, grads)
    return SurrogateCheckpoint.create(cfg, params)


def fine_tune_prefix(ckpt: SurrogateCheckpoint, data: LabeledSet, prefix_len: int = 4,
                     epochs: int = 3, batch_size: int = 16, lr: float = 5e-2,
                     seed: int = 0) -> PrefixParams:
    """Train only the key/value prefixes; the backbone checkpoint is untouched."""
    if prefix_len <= 0:
        raise ContractViolation("prefix length must be positive")
    cfg = ckpt.config
    prefix_pv = init_prefix(cfg, prefix_len, seed).to_paramvector()
    if epochs == 0:
        return PrefixParams.from_paramvector(prefix_pv, cfg.layers, prefix_len)
    rng = Rng(seed).split("fine-tune-prefix")
    backbone = ckpt.params.to_tensors(requires_grad=False)
    state = ad.AdamState.init(prefix_pv, lr=lr)
    all_ids = batch_ids(cfg, data.examples)
    labels = [ex.label for ex in data.examples]
    for idx in _iterate_batches(len(data), batch_size, epochs, rng):
        ids = all_ids[idx]
        labs = [labels[i] for i in idx]

        def loss(pfx):
            return _mean_nll(cfg, backbone, ids, labs, pfx)
        _, grads = ad.value_and_grad(loss, prefix_pv)
        prefix_pv, state = ad.adam_step(state, prefix_pv, grads)
    return PrefixParams.from_paramvector(prefix_pv, cfg.layers, prefix_len)


def masked_token_loss(cfg: SurrogateConfig, P: dict, ids: np.ndarray,
                      masked: np.ndarray, originals: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of original tokens at masked positions."""
    states, _ = encode(cfg, P, ids)
    logits = states @ P["head.token.w"] + P["head.token.b"]
    logp = _log_softmax(logits)
    sel = np.zeros(logits.shape)
    rows, cols = np.nonzero(masked)
    sel[rows, cols, originals[rows, cols]] = 1.0
    total = max(len(rows), 1)
    return (logp * sel).sum() * (-1.0 / total)


def _mask_tokens(ids: np.ndarray, rng: Rng, rate: float = 0.15):
    """Mask `rate` of non-pad tokens (at least one per row)."""
    masked = np.zeros(ids.shape, dtype=bool)
    u = rng.uniform(ids.shape)
    candidates = ids != PAD_ID
    masked = candidates & (u < rate)
    for i in range(ids.shape[0]):
        if candidates[i].any() and not masked[i].any():
            pos = int(np.argmax(candidates[i]))
            masked[i, pos] = True
    corrupted = ids.copy()
    corrupted[masked] = MASK_ID
    return corrupted, masked


def pretrain_masked(ckpt: SurrogateCheckpoint, pool, epochs: int = 1, seed: int = 0,
                    batch_size: int = 16, lr: float = 1e-3) -> SurrogateCheckpoint:
    """Masked-token pretraining on raw token sequences (or an object with .texts)."""
    texts = list(getattr(pool, "texts", pool))
    if not texts:
        raise ContractViolation("pretraining pool must be non-empty")
    if epochs == 0:
        return ckpt
    cfg = ckpt.config
    rng = Rng(seed).split("pretrain")
    all_ids = np.array([_pad_tokens(t, cfg.max_len) for t in texts], dtype=np.int64)
    params = ckpt.params.copy()
    state = ad.AdamState.init(params, lr=lr)
    for idx in _iterate_batches(len(texts), batch_size, epochs, rng):
        ids = all_ids[idx]
        corrupted, masked = _mask_tokens(ids, rng)
        _, grads = ad.value_and_grad(
            lambda P: masked_token_loss(cfg, P, corrupted, masked, ids), params)
        params, state = ad.adam_step(state, params, grads)
    return SurrogateCheckpoint.create(cfg, params)


def masked_eval_loss(ckpt: SurrogateCheckpoint, texts, seed: int = 0) -> float:
    """Held-out masked-token loss, deterministic masking by seed."""
    cfg = ckpt.config
    rng = Rng(seed).split("pretrain-eval")
    ids = np.array([_pad_tokens(t, cfg.max_len) for t in texts], dtype=np.int64)
    corrupted, masked = _mask_tokens(ids, rng)
    P = ckpt.params.to_tensors(requires_grad=False)
    return masked_token_loss(cfg, P, corrupted, masked, ids).item()


# -- checkpoint file format ----------------------------------------------------


def save_checkpoint(ckpt: SurrogateCheckpoint, path) -> None:
    """Magic + canonical-JSON config header + little-endian float64 payload."""
    cfg_json = json.dumps(ckpt.config.to_json(), sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(cfg_json)))
        f.write(cfg_json)
        for _, arr in ckpt.params.items():
            f.write(arr.astype("<f8").tobytes())


def load_checkpoint(path) -> SurrogateCheckpoint:
    with open(path, "rb") as f:
        if f.read(5) != _MAGIC:
            raise ConfigError(f"not a surrogate checkpoint: {path}")
        (n,) = struct.unpack("<I", f.read(4))
        cfg = SurrogateConfig.from_json(json.loads(f.read(n).decode()))
        payload = np.frombuffer(f.read(), dtype="<f8")
    params = ParamVector()
    off = 0
    for name, shape in param_shapes(cfg):
        size = int(np.prod(shape))
        params.register(name, payload[off:off + size].reshape(shape).copy())
        off += size
    if off != payload.size:
        raise ConfigError("checkpoint payload length mismatch")
    return SurrogateCheckpoint.create(cfg, params)
