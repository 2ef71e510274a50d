"""Labels, examples, and labeled sets shared by the surrogate and oracles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

PAD_ID = 0
MASK_ID = 1
SEP_ID = 2

LABEL_KINDS = ("class", "distribution", "scalar", "tokens")


@dataclass(frozen=True)
class Label:
    """Tagged supervision target: class index, class distribution, scalar, or token sequence."""

    kind: str
    value: object

    def __post_init__(self):
        if self.kind not in LABEL_KINDS:
            raise ContractViolation(f"unknown label kind {self.kind!r}")

    @staticmethod
    def of_class(index: int) -> "Label":
        return Label("class", int(index))

    @staticmethod
    def of_distribution(probs) -> "Label":
        p = np.asarray(probs, dtype=np.float64)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
            raise ContractViolation("distribution label must be non-negative and sum to 1")
        return Label("distribution", tuple(float(x) for x in p))

    @staticmethod
    def of_scalar(value: float) -> "Label":
        v = float(value)
        if not np.isfinite(v):
            raise ContractViolation("scalar label must be finite")
        return Label("scalar", v)

    @staticmethod
    def of_tokens(tokens) -> "Label":
        toks = tuple(int(t) for t in tokens)
        if any(t < 0 for t in toks):
            raise ContractViolation("token ids must be non-negative")
        return Label("tokens", toks)

    def validate_for(self, vocab_size: int, num_classes: int, seq_out_len: int) -> None:
        """Check the label fits the surrogate head extents."""
        if self.kind == "class":
            if not 0 <= self.value < num_classes:
                raise ContractViolation(f"class index {self.value} out of range [0,{num_classes})")
        elif self.kind == "distribution":
            if len(self.value) != num_classes:
                raise ContractViolation("distribution length must equal class-head size")
        elif self.kind == "tokens":
            if len(self.value) > seq_out_len:
                raise ContractViolation("token label longer than sequence head output")
            if any(t >= vocab_size for t in self.value):
                raise ContractViolation("token label id out of vocabulary")

    def to_json(self) -> dict:
        return {"kind": self.kind, "value": list(self.value) if isinstance(self.value, tuple) else self.value}

    @staticmethod
    def from_json(obj: dict) -> "Label":
        kind, value = obj["kind"], obj["value"]
        if kind == "class":
            return Label.of_class(value)
        if kind == "distribution":
            return Label.of_distribution(value)
        if kind == "scalar":
            return Label.of_scalar(value)
        if kind == "tokens":
            return Label.of_tokens(value)
        raise ContractViolation(f"unknown label kind {kind!r}")


@dataclass(frozen=True)
class Example:
    """One supervised item: input token ids plus a label."""

    tokens: tuple
    label: Label

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise ContractViolation("example token list must be non-empty")
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))


class LabeledSet:
    """Ordered examples sharing one label kind."""

    def __init__(self, examples: list[Example]):
        if not examples:
            raise ContractViolation("labeled set must be non-empty")
        kinds = {ex.label.kind for ex in examples}
        if len(kinds) != 1:
            raise ContractViolation(f"mixed label kinds in one set: {sorted(kinds)}")
        self.examples = list(examples)
        self.kind = examples[0].label.kind

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def __getitem__(self, i):
        return self.examples[i]

    def subset(self, indices) -> "LabeledSet":
        return LabeledSet([self.examples[i] for i in indices])
