"""Shared fixtures: tiny surrogate configs and an inline external-oracle script."""

import textwrap

import pytest

from taskspace import surrogate as sg
from taskspace.data import Example, Label, LabeledSet


@pytest.fixture(scope="session")
def tiny_cfg():
    return sg.SurrogateConfig(vocab_size=12, width=8, layers=2, heads=2,
                              ff_width=12, max_len=10, num_classes=3, seq_out_len=4)


@pytest.fixture(scope="session")
def tiny_ckpt(tiny_cfg):
    return sg.init_surrogate(tiny_cfg, seed=7)


def class_set(n=8, num_classes=3):
    return LabeledSet([Example((3 + i % 5, 4 + (i * 2) % 5, 3), Label.of_class(i % num_classes))
                       for i in range(n)])


def scalar_set(n=8):
    return LabeledSet([Example((3 + i % 5, 4, 5 + i % 3), Label.of_scalar(float(i % 4)))
                       for i in range(n)])


def tokens_set(n=8, out_len=4):
    return LabeledSet([Example((3 + i % 5, 4, 6), Label.of_tokens([3 + (i + j) % 5 for j in range(out_len)]))
                       for i in range(n)])


def distribution_set(n=8, num_classes=3):
    examples = []
    for i in range(n):
        p = [1.0] * num_classes
        p[i % num_classes] += float(num_classes)
        total = sum(p)
        examples.append(Example((3 + i % 5, 7), Label.of_distribution([x / total for x in p])))
    return LabeledSet(examples)


# A minimal external oracle used only to exercise the wire protocol from the
# client side. It is deliberately tiny and separate from any shipped server.
_ECHO_SERVER = """\
import json, sys

OUT_LEN = {out_len}
KIND = {kind!r}

def reply(obj):
    sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\\n")
    sys.stdout.flush()

for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    try:
        req = json.loads(line)
    except json.JSONDecodeError as err:
        reply({{"type": "error", "id": None, "msg": str(err)}})
        continue
    t = req.get("type")
    if t == "hello":
        reply({{"type": "hello", "kind": KIND, "name": "echo-fixture"}})
    elif t == "predict":
        toks = req.get("input", [])
        if KIND == "tokens":
            value = toks[:OUT_LEN]
        elif KIND == "class":
            value = (sum(toks) % 3)
        elif KIND == "scalar":
            value = float(len(toks))
        else:
            value = [0.5, 0.25, 0.25]
        reply({{"type": "result", "id": req.get("id"), "kind": KIND, "value": value}})
    elif t == "bye":
        break
    else:
        reply({{"type": "error", "id": req.get("id"), "msg": "unknown type"}})
"""


@pytest.fixture(scope="session")
def echo_server(tmp_path_factory):
    """Path factory for inline NDJSON oracle scripts, one per output kind."""
    root = tmp_path_factory.mktemp("oracle-fixture")

    def make(kind="tokens", out_len=4):
        path = root / f"server-{kind}-{out_len}.py"
        path.write_text(textwrap.dedent(_ECHO_SERVER.format(kind=kind, out_len=out_len)))
        return ["python3", str(path)]

    return make
