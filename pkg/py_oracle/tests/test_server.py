"""Protocol and behavior tests for the stdio oracle server, driven both with
raw subprocess sessions and through the taskspace client classes."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

SERVER = os.path.join(os.path.dirname(__file__), os.pardir, "oracle_server.py")


def _profile(tmp_path, obj, name="profile.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def _argv(profile_path):
    return [sys.executable, SERVER, profile_path]


def _session(profile_path, requests, timeout=10):
    """Send raw lines, return (stdout lines, stderr text, exit code)."""
    stdin = "\n".join(requests) + "\n"
    proc = subprocess.run(_argv(profile_path), input=stdin, capture_output=True,
                          text=True, timeout=timeout)
    out = [l for l in proc.stdout.splitlines() if l]
    return out, proc.stderr, proc.returncode


ECHO = {"profile": "echo", "kind": "tokens", "out_len": 3, "name": "ref-echo"}
LEXICON = {"profile": "lexicon", "kind": "class",
           "weights": {"3": 1.0, "4": 1.0, "5": -2.0}}
SOFT_LEXICON = {"profile": "lexicon", "kind": "distribution", "weights": {"3": 1.0}}
COUNT = {"profile": "token-count", "kind": "scalar", "count_token": 7}


def test_hello_and_predict_and_bye(tmp_path):
    path = _profile(tmp_path, ECHO)
    out, err, code = _session(path, [
        json.dumps({"type": "hello"}),
        json.dumps({"type": "predict", "id": 1, "input": [5, 6, 7, 8]}),
        json.dumps({"type": "bye"}),
    ])
    assert code == 0
    frames = [json.loads(l) for l in out]
    assert frames[0] == {"type": "hello", "kind": "tokens", "name": "ref-echo"}
    assert frames[1] == {"type": "result", "id": 1, "kind": "tokens", "value": [5, 6, 7]}
    assert "shutting down" in err  # diagnostics go to stderr, not stdout


def test_eof_exits_cleanly(tmp_path):
    out, _, code = _session(_profile(tmp_path, ECHO), [json.dumps({"type": "hello"})])
    assert code == 0 and len(out) == 1


def test_stdout_is_protocol_only(tmp_path):
    out, err, code = _session(_profile(tmp_path, LEXICON), [
        json.dumps({"type": "hello"}),
        "garbage that is not json",
        json.dumps({"type": "predict", "id": 2, "input": [3, 4]}),
        json.dumps({"type": "bye"}),
    ])
    assert code == 0
    frames = [json.loads(l) for l in out]  # every stdout line must parse
    assert [f["type"] for f in frames] == ["hello", "error", "result"]
    assert "malformed" in err


def test_error_frames_keep_session_alive(tmp_path):
    out, _, code = _session(_profile(tmp_path, ECHO), [
        json.dumps({"type": "predict", "id": 1, "input": "nope"}),
        json.dumps({"type": "mystery", "id": 2}),
        json.dumps({"type": "predict", "id": 3, "input": [9, 9, 9, 9]}),
    ])
    frames = [json.loads(l) for l in out]
    assert code == 0
    assert [f["type"] for f in frames] == ["error", "error", "result"]
    assert frames[2]["value"] == [9, 9, 9]


def test_bad_profile_refused(tmp_path):
    for bad in ({"profile": "echo", "kind": "class"},
                {"profile": "lexicon", "kind": "class", "weights": {}},
                {"profile": "prompted", "kind": "class", "routing": []},
                {"profile": "nope", "kind": "class"}):
        proc = subprocess.run(_argv(_profile(tmp_path, bad)), input="",
                              capture_output=True, text=True, timeout=10)
        assert proc.returncode == 2
        assert "bad profile" in proc.stderr


def test_lexicon_class_by_construction(tmp_path):
    path = _profile(tmp_path, LEXICON)
    out, _, _ = _session(path, [
        json.dumps({"type": "predict", "id": 0, "input": [3, 4]}),   # positive only
        json.dumps({"type": "predict", "id": 1, "input": [3, 5]}),   # negative wins
        json.dumps({"type": "bye"}),
    ])
    values = [json.loads(l)["value"] for l in out]
    assert values == [1, 0]


def test_soft_lexicon_distribution_sums_to_one(tmp_path):
    out, _, _ = _session(_profile(tmp_path, SOFT_LEXICON), [
        json.dumps({"type": "predict", "id": 0, "input": [3, 3]}),
        json.dumps({"type": "bye"}),
    ])
    value = json.loads(out[0])["value"]
    assert len(value) == 2
    assert sum(value) == pytest.approx(1.0, abs=1e-12)
    assert value[1] > value[0]  # positive evidence favors class 1


def test_token_count_scalar(tmp_path):
    out, _, _ = _session(_profile(tmp_path, COUNT), [
        json.dumps({"type": "predict", "id": 0, "input": [7, 3, 7, 7]}),
        json.dumps({"type": "bye"}),
    ])
    assert json.loads(out[0])["value"] == 3.0


# -- prompted profile ----------------------------------------------------------


def _prompted_profile(noise=0.05, seed=0):
    pos = {str(t): 1.0 for t in range(3, 10)}
    neg = {str(t): -1.0 for t in range(3, 10)}
    mixed = {**{str(t): 1.0 for t in range(3, 6)}, **{str(t): -1.0 for t in range(6, 10)}}
    return {"profile": "prompted", "kind": "class", "num_classes": 2,
            "noise": noise, "seed": seed,
            "routing": [{"prompt": [50], "weights": mixed, "accuracy": 0.9},
                        {"prompt": [51], "weights": neg, "accuracy": 0.6}]}


def _probe_inputs(n):
    # deterministic pseudo-random probe set over content tokens 3..9
    return [[3 + (i * 5 + j * 13 + (i * j) % 11) % 7 for j in range(6)]
            for i in range(n)]


def _predict_many(profile_path, probes, prompt):
    reqs = [json.dumps({"type": "predict", "id": i, "input": p, "prompt": prompt})
            for i, p in enumerate(probes)]
    out, _, code = _session(profile_path, reqs + [json.dumps({"type": "bye"})],
                            timeout=60)
    assert code == 0
    return [json.loads(l)["value"] for l in out]


def test_prompts_route_to_different_behaviors(tmp_path):
    profile = _prompted_profile(noise=0.0)
    # perfect accuracy makes replies a pure function of the routed labeling
    for entry in profile["routing"]:
        entry["accuracy"] = 1.0
    path = _profile(tmp_path, profile)
    probes = _probe_inputs(50)
    a = _predict_many(path, probes, [50])
    b = _predict_many(path, probes, [51])
    assert a != b
    mixed = profile["routing"][0]["weights"]
    assert a == [1 if sum(mixed.get(str(t), 0.0) for t in p) > 0 else 0 for p in probes]
    # unknown prompts fall back to the least accurate configured behavior
    low = min(profile["routing"], key=lambda e: e["accuracy"])["weights"]
    c = _predict_many(path, probes, [99])
    assert c == [1 if sum(low.get(str(t), 0.0) for t in p) > 0 else 0 for p in probes]


def test_prompted_replies_deterministic(tmp_path):
    path = _profile(tmp_path, _prompted_profile(noise=0.05, seed=3))
    probes = _probe_inputs(40)
    assert _predict_many(path, probes, [50]) == _predict_many(path, probes, [50])


def test_observed_accuracy_matches_profile(tmp_path):
    profile = _prompted_profile(noise=0.05)
    path = _profile(tmp_path, profile)
    probes = _probe_inputs(1000)
    mixed = profile["routing"][0]["weights"]
    truth = [1 if sum(mixed.get(str(t), 0.0) for t in p) > 0 else 0 for p in probes]
    for prompt, weights, configured in (([50], mixed, 0.9),
                                        ([51], profile["routing"][1]["weights"], 0.6)):
        ref = [1 if sum(weights.get(str(t), 0.0) for t in p) > 0 else 0 for p in probes]
        got = _predict_many(path, probes, prompt)
        observed = float(np.mean([g == r for g, r in zip(got, ref)]))
        assert abs(observed - configured) <= 0.05
    # the two behaviors genuinely disagree on this probe set
    neg_truth = [1 if sum(profile["routing"][1]["weights"].get(str(t), 0.0)
                          for t in p) > 0 else 0 for p in probes]
    assert float(np.mean([a == b for a, b in zip(truth, neg_truth)])) < 0.9


# -- conformance and MTE equivalence through the primary's client ----------------


@pytest.mark.parametrize("profile,kind", [(ECHO, "tokens"), (LEXICON, "class"),
                                          (SOFT_LEXICON, "distribution"),
                                          (COUNT, "scalar")])
def test_conformance_all_kinds(tmp_path, profile, kind):
    from taskspace.oracles import check_protocol_conformance
    rows = check_protocol_conformance(_argv(_profile(tmp_path, profile)),
                                      probe_inputs=[(3, 4, 5), (5, 6, 7, 7)])
    failed = [(name, detail) for name, ok, detail in rows if not ok]
    assert not failed, failed
    assert [name for name, _, _ in rows][-1] == "clean-exit"


def test_external_echo_mte_bit_identical_to_in_process(tmp_path, capfd):
    from taskspace import surrogate as sg
    from taskspace.extractors import ExtractorConfig
    from taskspace.oracles import EchoOracle, ExternalProcessOracle
    from taskspace.pipeline import build_pool, compute_mte

    cfg = sg.SurrogateConfig(vocab_size=16, width=8, layers=1, heads=2, ff_width=16,
                             max_len=16, num_classes=4, seq_out_len=3)
    ckpt = sg.init_surrogate(cfg, seed=7)
    pool = build_pool({"s": [(3 + i % 6, 4, 5 + i % 5, 6) for i in range(20)]},
                      cap_per_source=12, seed=1, pool_id="p")
    ecfg = ExtractorConfig(epochs=1, seed=2)

    inproc = compute_mte(EchoOracle("echo", out_len=3), pool, "taskemb", ckpt, ecfg)
    path = _profile(tmp_path, ECHO)
    with ExternalProcessOracle(_argv(path)) as oracle:
        external = compute_mte(oracle, pool, "taskemb", ckpt, ecfg)

    identical = (external.vector.tobytes() == inproc.vector.tobytes()
                 and external.content_hash() == inproc.content_hash())
    with capfd.disabled():
        print(f"{'PASS' if identical else 'FAIL'} external echo-oracle MTE "
              f"bit-identical to in-process MTE [dim {external.dimension}]")
    assert identical
