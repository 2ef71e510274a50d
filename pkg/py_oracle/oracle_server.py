#!/usr/bin/env python3
"""Stdio model-oracle server speaking newline-delimited JSON.

Usage: oracle_server.py <profile.json>

One JSON object per line on stdin/stdout. Requests:
  {"type": "hello"}                                  -> {"type": "hello", "kind": ..., "name": ...}
  {"type": "predict", "id": N, "input": [...],
   "prompt": [...] | null}                           -> {"type": "result", "id": N, "kind": ..., "value": ...}
  {"type": "bye"}                                    -> clean exit 0
Malformed lines or bad requests get {"type": "error", "id": ..., "msg": ...}
and the session continues. EOF exits 0. Stdout carries protocol frames only;
diagnostics go to stderr.

The profile file selects the behavior:
  {"profile": "echo", "kind": "tokens", "out_len": 4}
  {"profile": "lexicon", "kind": "class" | "distribution", "weights": {"3": 1.0, ...}}
  {"profile": "token-count", "kind": "scalar", "count_token": 7}
  {"profile": "prompted", "kind": "class", "num_classes": 2, "noise": 0.05,
   "seed": 0, "routing": [{"prompt": [5, 6], "weights": {...}, "accuracy": 0.9}, ...]}

Replies are deterministic: the prompted profile draws its mistakes from a
hash of (seed, prompt, input), so replaying a request yields the same answer.
"""

import hashlib
import json
import math
import sys

KINDS = ("class", "distribution", "scalar", "tokens")


def log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def reply(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def unit_hash(*parts) -> float:
    """Deterministic uniform in [0, 1) keyed by the given parts."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2.0 ** 64


def _weights(obj) -> dict:
    if not isinstance(obj, dict) or not obj:
        raise ValueError("weights must be a non-empty object of token -> number")
    return {int(k): float(v) for k, v in obj.items()}


class Profile:
    """Validated behavior specification; predict() is a pure function of
    (profile, prompt, input) and never touches stdout or stderr."""

    def __init__(self, obj: dict):
        self.name = str(obj.get("name", "py-oracle"))
        self.profile = obj.get("profile")
        self.kind = obj.get("kind")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")

        if self.profile == "echo":
            if self.kind != "tokens":
                raise ValueError("echo profile emits tokens")
            self.out_len = int(obj.get("out_len", 4))
            if self.out_len <= 0:
                raise ValueError("out_len must be positive")
        elif self.profile == "lexicon":
            if self.kind not in ("class", "distribution"):
                raise ValueError("lexicon profile emits class or distribution")
            self.weights = _weights(obj.get("weights"))
        elif self.profile == "token-count":
            if self.kind != "scalar":
                raise ValueError("token-count profile emits scalar")
            self.count_token = int(obj.get("count_token", 7))
        elif self.profile == "prompted":
            if self.kind != "class":
                raise ValueError("prompted profile emits class")
            self.num_classes = int(obj.get("num_classes", 2))
            if self.num_classes < 2:
                raise ValueError("num_classes must be >= 2")
            self.noise = float(obj.get("noise", 0.0))
            if not 0.0 <= self.noise < 1.0:
                raise ValueError("noise must be in [0, 1)")
            self.seed = int(obj.get("seed", 0))
            routing = obj.get("routing")
            if not isinstance(routing, list) or not routing:
                raise ValueError("prompted profile needs a non-empty routing list")
            self.routing = {}
            for entry in routing:
                prompt = tuple(int(t) for t in entry["prompt"])
                acc = float(entry["accuracy"])
                if not 0.0 <= acc <= 1.0:
                    raise ValueError("accuracy must be in [0, 1]")
                self.routing[prompt] = (_weights(entry["weights"]), acc)
        else:
            raise ValueError(f"unknown profile {self.profile!r}")

    # behaviors ----------------------------------------------------------

    def _lexicon_score(self, weights: dict, tokens: list) -> float:
        return sum(weights.get(t, 0.0) for t in tokens)

    def _prompted(self, tokens: list, prompt) -> int:
        key = tuple(int(t) for t in prompt) if prompt else ()
        if key in self.routing:
            weights, accuracy = self.routing[key]
        else:
            # unknown prompts elicit the least reliable configured behavior
            weights, accuracy = min(self.routing.values(), key=lambda wa: wa[1])
        true = 1 if self._lexicon_score(weights, tokens) > 0 else 0
        out = true
        if unit_hash(self.seed, "shift", key, tokens) > accuracy:
            out = (out + 1) % self.num_classes
        if unit_hash(self.seed, "noise", key, tokens) < self.noise:
            out = int(unit_hash(self.seed, "pick", key, tokens) * self.num_classes)
        return out

    def predict(self, tokens: list, prompt):
        if self.profile == "echo":
            return tokens[: self.out_len]
        if self.profile == "lexicon":
            score = self._lexicon_score(self.weights, tokens)
            if self.kind == "class":
                return 1 if score > 0 else 0
            p = 1.0 / (1.0 + math.exp(-score))
            return [1.0 - p, p]
        if self.profile == "token-count":
            return float(tokens.count(self.count_token))
        return self._prompted(tokens, prompt)


def handle_line(profile: Profile, line: str) -> bool:
    """Process one request line; returns False when the session should end."""
    try:
        req = json.loads(line)
    except json.JSONDecodeError as err:
        log(f"malformed request line: {err}")
        reply({"type": "error", "id": None, "msg": f"malformed JSON: {err}"})
        return True
    if not isinstance(req, dict):
        reply({"type": "error", "id": None, "msg": "request must be an object"})
        return True
    rtype = req.get("type")
    if rtype == "hello":
        reply({"type": "hello", "kind": profile.kind, "name": profile.name})
        return True
    if rtype == "bye":
        log("bye received, shutting down")
        return False
    if rtype != "predict":
        reply({"type": "error", "id": req.get("id"), "msg": f"unknown type {rtype!r}"})
        return True
    rid = req.get("id")
    tokens = req.get("input")
    prompt = req.get("prompt")
    if (not isinstance(tokens, list) or not all(isinstance(t, int) for t in tokens)
            or (prompt is not None and not isinstance(prompt, list))):
        reply({"type": "error", "id": rid, "msg": "predict needs integer token input"})
        return True
    try:
        value = profile.predict(tokens, prompt)
    except Exception as err:  # a bad input must not kill the session
        log(f"predict failed: {err}")
        reply({"type": "error", "id": rid, "msg": str(err)})
        return True
    reply({"type": "result", "id": rid, "kind": profile.kind, "value": value})
    return True


def main(argv) -> int:
    if len(argv) != 2:
        log("usage: oracle_server.py <profile.json>")
        return 2
    try:
        with open(argv[1]) as f:
            profile = Profile(json.load(f))
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as err:
        log(f"bad profile {argv[1]}: {err}")
        return 2
    log(f"serving profile={profile.profile} kind={profile.kind} name={profile.name}")
    for line in sys.stdin:
        if line.strip() and not handle_line(profile, line):
            break
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
