"""Black-box model oracles: in-process synthetics, external NDJSON processes,
an HTTP variant, and the prompted-model adapter that treats (prompt, model)
as one unit.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .data import Label, SEP_ID
from .errors import ContractViolation, ProtocolError, TransportError
from .rng import Rng

KIND_WIRE = {"class": "class", "distribution": "distribution",
             "scalar": "scalar", "tokens": "tokens"}


class ModelOracle:
    """Base prediction interface; predict mutates nothing but the counter."""

    def __init__(self, oracle_id: str, kind: str):
        if kind not in KIND_WIRE:
            raise ContractViolation(f"unknown output kind {kind!r}")
        self.oracle_id = oracle_id
        self.kind = kind
        self._invocations = 0
        self._lock = threading.Lock()

    @property
    def invocations(self) -> int:
        return self._invocations

    def predict(self, tokens, prompt=None) -> Label:
        out = self._predict(tuple(int(t) for t in tokens),
                            None if prompt is None else tuple(int(t) for t in prompt))
        if out.kind != self.kind:
            raise ProtocolError(
                f"oracle {self.oracle_id} declared kind {self.kind} but emitted {out.kind}")
        with self._lock:
            self._invocations += 1
        return out

    def _predict(self, tokens: tuple, prompt: tuple | None) -> Label:
        raise NotImplementedError

    def close(self) -> None:
        pass


# -- in-process synthetic oracles ----------------------------------------------


class ConstantOracle(ModelOracle):
    def __init__(self, oracle_id: str, label: Label):
        super().__init__(oracle_id, label.kind)
        self._label = label

    def _predict(self, tokens, prompt):
        return self._label


class MajorityTokenClassifier(ModelOracle):
    """Class = (most frequent non-reserved token) mod num_classes; ties to the smallest token."""

    def __init__(self, oracle_id: str, num_classes: int):
        super().__init__(oracle_id, "class")
        self.num_classes = num_classes

    def _predict(self, tokens, prompt):
        content = [t for t in tokens if t > SEP_ID]
        if not content:
            return Label.of_class(0)
        counts = Counter(content)
        best = min(counts, key=lambda t: (-counts[t], t))
        return Label.of_class(best % self.num_classes)


class EchoOracle(ModelOracle):
    """TokenSeq = first out_len input tokens."""

    def __init__(self, oracle_id: str, out_len: int):
        super().__init__(oracle_id, "tokens")
        self.out_len = out_len

    def _predict(self, tokens, prompt):
        return Label.of_tokens(tokens[: self.out_len])


class LexiconClassifier(ModelOracle):
    """Binary class by sign of summed per-token lexicon weights."""

    def __init__(self, oracle_id: str, weights: dict[int, float]):
        super().__init__(oracle_id, "class")
        self.weights = dict(weights)

    def _predict(self, tokens, prompt):
        score = sum(self.weights.get(t, 0.0) for t in tokens)
        return Label.of_class(1 if score > 0 else 0)


class FunctionOracle(ModelOracle):
    """Wraps an arbitrary deterministic labeling function (used by benchmarks)."""

    def __init__(self, oracle_id: str, kind: str, fn):
        super().__init__(oracle_id, kind)
        self._fn = fn

    def _predict(self, tokens, prompt):
        return self._fn(tokens)


class SurrogateModelOracle(ModelOracle):
    """In-process oracle backed by a (fine-tuned) surrogate checkpoint."""

    def __init__(self, oracle_id: str, ckpt, kind: str):
        super().__init__(oracle_id, kind)
        self.ckpt = ckpt

    def _predict(self, tokens, prompt):
        from . import surrogate as sg
        cfg = self.ckpt.config
        P = self.ckpt.params.to_tensors(requires_grad=False)
        ids = sg.batch_ids(cfg, [_TokenHolder(tokens[: cfg.max_len])])
        states, pad = sg.encode(cfg, P, ids)
        pooled = sg._pool(states, pad)
        if self.kind in ("class", "distribution"):
            logits = (pooled @ P["head.class.w"] + P["head.class.b"]).data[0]
            if self.kind == "class":
                return Label.of_class(int(np.argmax(logits)))
            e = np.exp(logits - logits.max())
            return Label.of_distribution(e / e.sum())
        if self.kind == "scalar":
            mu = (pooled @ P["head.scalar.w"] + P["head.scalar.b"]).data[0, 0]
            return Label.of_scalar(float(mu))
        logits = (states @ P["head.token.w"] + P["head.token.b"]).data[0]
        toks = np.argmax(logits[: cfg.seq_out_len], axis=-1)
        return Label.of_tokens(toks.tolist())


class _TokenHolder:
    def __init__(self, tokens):
        self.tokens = tuple(tokens)


# -- prompted models ------------------------------------------------------------


@dataclass(frozen=True)
class PromptSpec:
    """A prompt over the shared vocab, treated together with a model as one unit."""

    prompt_id: str
    tokens: tuple
    hint: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))


def compose_prompted_input(prompt_tokens, input_tokens, max_len: int) -> tuple:
    """prompt + separator + input, truncating the input tail to fit max_len."""
    head = list(prompt_tokens) + [SEP_ID] if prompt_tokens else []
    room = max_len - len(head)
    if room <= 0:
        raise ContractViolation("prompt leaves no room for input after truncation")
    return tuple(head + list(input_tokens)[:room])


class PromptedOracle(ModelOracle):
    """Derived oracle forwarding (prompt, input) to an underlying model."""

    def __init__(self, base: ModelOracle, prompt: PromptSpec, max_len: int):
        super().__init__(f"{base.oracle_id}#{prompt.prompt_id}", base.kind)
        if prompt.tokens and len(prompt.tokens) + 1 >= max_len:
            raise ContractViolation("prompt too long for the input window")
        self.base = base
        self.prompt = prompt
        self.max_len = max_len

    def _predict(self, tokens, prompt):
        room = self.max_len - (len(self.prompt.tokens) + 1 if self.prompt.tokens else 0)
        return self.base.predict(tokens[:room], prompt=self.prompt.tokens or None)


def as_prompted_model(llm: ModelOracle, prompt: PromptSpec, max_len: int = 32) -> ModelOracle:
    return PromptedOracle(llm, prompt, max_len)


class SimulatedPromptedLLM(ModelOracle):
    """Prompt-routed simulator: each known prompt maps to a labeling behavior
    with a configured accuracy; ground-truth best prompt is known by construction.

    routing: prompt tokens tuple -> (label_fn, accuracy). Unknown prompts fall
    back to the lowest-accuracy behavior in the table.
    """

    def __init__(self, oracle_id: str, routing: dict, num_classes: int,
                 noise: float = 0.05, seed: int = 0):
        super().__init__(oracle_id, "class")
        self.routing = {tuple(k): v for k, v in routing.items()}
        self.num_classes = num_classes
        self.noise = noise
        self.seed = seed

    def _behavior(self, prompt):
        if prompt in self.routing:
            return self.routing[prompt]
        return min(self.routing.values(), key=lambda fv: fv[1])

    def _predict(self, tokens, prompt):
        if prompt is None:
            prompt = ()
        label_fn, accuracy = self._behavior(tuple(prompt))
        true = label_fn(tokens)
        rng = Rng(self.seed).split(f"sim:{prompt}:{tokens}")
        out = true.value
        # wrong answers shift by one class so a low-accuracy prompt behaves
        # like a consistently different labeling, not unstructured noise
        if rng.uniform() > accuracy:
            out = (out + 1) % self.num_classes
        if rng.uniform() < self.noise:
            out = rng.randint(0, self.num_classes)
        return Label.of_class(out)


# -- wire protocol ---------------------------------------------------------------


def _parse_output(kind: str, value) -> Label:
    try:
        if kind == "class":
            return Label.of_class(value)
        if kind == "distribution":
            return Label.of_distribution(value)
        if kind == "scalar":
            return Label.of_scalar(value)
        if kind == "tokens":
            return Label.of_tokens(value)
    except (TypeError, ValueError, ContractViolation) as err:
        raise ProtocolError(f"bad value for kind {kind}: {err}") from err
    raise ProtocolError(f"unknown kind on wire: {kind!r}")


class ExternalProcessOracle(ModelOracle):
    """Child process speaking newline-delimited JSON over stdin/stdout."""

    def __init__(self, argv: list[str], timeout: float = 10.0):
        self._proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                      text=True, bufsize=1)
        self._timeout = timeout
        self._queue: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self._next_id = 0
        hello = self._roundtrip({"type": "hello"})
        if hello.get("type") != "hello" or hello.get("kind") not in KIND_WIRE:
            raise ProtocolError(f"bad handshake: {hello!r}")
        super().__init__(hello.get("name", "external"), hello["kind"])

    def _read_loop(self):
        for line in self._proc.stdout:
            self._queue.put(line)
        self._queue.put(None)

    def send_raw(self, line: str) -> None:
        if self._proc.poll() is not None:
            raise TransportError("oracle process is dead")
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as err:
            raise TransportError(f"oracle stdin closed: {err}") from err

    def recv_raw(self) -> dict:
        try:
            line = self._queue.get(timeout=self._timeout)
        except queue.Empty:
            raise TransportError(f"oracle response timed out after {self._timeout}s")
        if line is None:
            raise TransportError("oracle closed its stdout")
        try:
            return json.loads(line)
        except json.JSONDecodeError as err:
            raise ProtocolError(f"malformed protocol line {line!r}: {err}") from err

    def _roundtrip(self, obj: dict) -> dict:
        self.send_raw(json.dumps(obj, separators=(",", ":")))
        return self.recv_raw()

    def _predict(self, tokens, prompt):
        rid = self._next_id
        self._next_id += 1
        resp = self._roundtrip({"type": "predict", "id": rid,
                                "prompt": list(prompt) if prompt else None,
                                "input": list(tokens)})
        if resp.get("type") == "error":
            raise ProtocolError(f"oracle error frame: {resp.get('msg')!r}")
        if resp.get("type") != "result" or resp.get("id") != rid:
            raise ProtocolError(f"unexpected response: {resp!r}")
        if resp.get("kind") != self.kind:
            raise ProtocolError(f"kind changed mid-session: {resp.get('kind')!r}")
        return _parse_output(resp["kind"], resp.get("value"))

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self.send_raw(json.dumps({"type": "bye"}))
                self._proc.wait(timeout=self._timeout)
            except (TransportError, subprocess.TimeoutExpired):
                self._proc.kill()
        if self._proc.stdin:
            self._proc.stdin.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class HttpOracle(ModelOracle):
    """HTTP variant: each protocol message is POSTed as JSON to one endpoint."""

    def __init__(self, url: str, timeout: float = 10.0):
        import requests
        self._requests = requests
        self._url = url
        self._timeout = timeout
        self._next_id = 0
        hello = self._post({"type": "hello"})
        if hello.get("type") != "hello" or hello.get("kind") not in KIND_WIRE:
            raise ProtocolError(f"bad handshake: {hello!r}")
        super().__init__(hello.get("name", "http"), hello["kind"])

    def _post(self, obj: dict) -> dict:
        try:
            resp = self._requests.post(self._url, json=obj, timeout=self._timeout)
        except self._requests.RequestException as err:
            raise TransportError(f"http oracle unreachable: {err}") from err
        try:
            return resp.json()
        except ValueError as err:
            raise ProtocolError(f"malformed http response: {err}") from err

    def _predict(self, tokens, prompt):
        rid = self._next_id
        self._next_id += 1
        resp = self._post({"type": "predict", "id": rid,
                           "prompt": list(prompt) if prompt else None,
                           "input": list(tokens)})
        if resp.get("type") == "error":
            raise ProtocolError(f"oracle error frame: {resp.get('msg')!r}")
        if resp.get("type") != "result" or resp.get("id") != rid:
            raise ProtocolError(f"unexpected response: {resp!r}")
        if resp.get("kind") != self.kind:
            raise ProtocolError(f"kind changed mid-session: {resp.get('kind')!r}")
        return _parse_output(resp["kind"], resp.get("value"))


# -- protocol conformance ----------------------------------------------------------


def check_protocol_conformance(argv: list[str], probe_inputs: list[tuple],
                               timeout: float = 10.0) -> list[tuple[str, bool, str]]:
    """Drive a raw session against an external oracle command and report checks.

    Returns (check_name, passed, detail) rows covering handshake, prediction
    framing, determinism, the error frame, and clean shutdown.
    """
    results = []
    oracle = ExternalProcessOracle(argv, timeout=timeout)
    try:
        results.append(("handshake", True, f"kind={oracle.kind} name={oracle.oracle_id}"))
        outs1 = [oracle.predict(t) for t in probe_inputs]
        ok = all(o.kind == oracle.kind for o in outs1)
        results.append(("declared-kind-honored", ok, f"{len(outs1)} predictions"))
        outs2 = [oracle.predict(t) for t in probe_inputs]
        det = all(a == b for a, b in zip(outs1, outs2))
        results.append(("deterministic-replies", det, "same inputs replayed"))
        oracle.send_raw("this is not json")
        frame = oracle.recv_raw()
        results.append(("error-frame", frame.get("type") == "error", repr(frame)))
        after = oracle.predict(probe_inputs[0])
        results.append(("session-survives-error", after == outs1[0], "post-error predict"))
    except Exception as err:  # conformance is a report, not an assertion
        results.append(("session", False, f"{type(err).__name__}: {err}"))
    finally:
        oracle.close()
    code = oracle._proc.returncode
    results.append(("clean-exit", code == 0, f"exit code {code}"))
    return results
