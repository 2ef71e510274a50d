"""End-to-end command-line workflows against a temporary store."""

import json
import os

import pytest

from taskspace.cli import main


@pytest.fixture()
def workdir(tmp_path):
    cfg = {
        "surrogate": {"vocab_size": 16, "width": 8, "layers": 1, "heads": 2,
                      "ff_width": 16, "max_len": 16, "num_classes": 4, "seq_out_len": 4},
        "extractor": {"epochs": 1},
        "method": "taskemb",
        "pool": {"cap_per_source": 6, "pool_id": "pool"},
        "families": [
            {"family_id": "parity", "seed": 2, "vocab_size": 16, "num_classes": 4,
             "train_size": 16, "test_size": 8, "seq_out_len": 4},
            {"family_id": "sentiment-lexicon", "seed": 3, "vocab_size": 16,
             "num_classes": 4, "train_size": 16, "test_size": 8, "seq_out_len": 4},
        ],
        "store": str(tmp_path / "store"),
        "seed": 0,
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(cfg))
    return {"root": tmp_path, "config": str(cfg_path), "store": cfg["store"]}


def _run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_verify_prints_pass_lines(capsys):
    code, out = _run(capsys, "verify")
    lines = [l for l in out.splitlines() if l.startswith(("PASS", "FAIL"))]
    assert code == 0
    assert len(lines) == 5
    assert all(l.startswith("PASS") for l in lines)
    assert out.strip().endswith("OK: 0 failing checks")


def test_pretrain_pool_dte_rank_project(capsys, workdir, echo_server):
    cfgf = workdir["config"]
    code, out = _run(capsys, "--config", cfgf, "pretrain")
    assert code == 0 and out.startswith("surrogate fingerprint ")
    assert os.path.exists(os.path.join(workdir["store"], "surrogate.ckpt"))

    code, out = _run(capsys, "--config", cfgf, "pool", "build")
    assert code == 0 and "pool pool:" in out
    assert os.path.exists(os.path.join(workdir["store"], "pool", "pool.jsonl"))

    code, out = _run(capsys, "--config", cfgf, "dte", "--dataset", "parity")
    assert code == 0 and out.startswith("DTE parity method=taskemb")

    cmd = " ".join(echo_server(kind="class"))
    code, out = _run(capsys, "--config", cfgf, "mte", "--oracle-cmd", cmd)
    assert code == 0 and out.startswith("MTE echo-fixture method=taskemb")

    # discover stored ids, then rank all MTEs against the dataset embedding
    from taskspace.pipeline import EmbeddingStore
    index = EmbeddingStore(workdir["store"]).index()
    dte_id = next(i for i, m in index.items() if m["kind"] == "DTE")
    code, out = _run(capsys, "--config", cfgf, "rank", "--target", dte_id)
    rows = [l.split("\t") for l in out.strip().splitlines()]
    assert code == 0 and len(rows) == 1
    assert rows[0][0] == "echo-fixture"

    code, out = _run(capsys, "--config", cfgf, "project")
    header = out.splitlines()[0].split("\t")
    assert code == 0 and header[:4] == ["id", "kind", "method", "source"]


def test_select_prompt_ranks_prompts(capsys, workdir, echo_server):
    cfgf = workdir["config"]
    assert _run(capsys, "--config", cfgf, "pretrain")[0] == 0
    assert _run(capsys, "--config", cfgf, "pool", "build")[0] == 0
    prompt_file = workdir["root"] / "prompts.json"
    prompt_file.write_text(json.dumps([{"id": "p0", "tokens": [5]},
                                       {"id": "p1", "tokens": [6]}]))
    cmd = " ".join(echo_server(kind="class"))
    code, out = _run(capsys, "--config", cfgf, "select-prompt",
                     "--dataset", "sentiment-lexicon",
                     "--prompt-file", str(prompt_file), "--oracle-cmd", cmd)
    lines = out.strip().splitlines()
    assert code == 0
    assert len(lines) == 3 and lines[-1].startswith("selected\t")


def test_bench_transfer_writes_run_dir(capsys, workdir):
    code, out = _run(capsys, "--config", workdir["config"], "--method", "tupate",
                     "bench", "transfer", "--out", str(workdir["root"] / "runs"))
    assert code == 0
    run_dir = out.splitlines()[0].split(" ", 2)[2]
    assert os.path.exists(os.path.join(run_dir, "report.json"))
    assert os.path.exists(os.path.join(run_dir, "resolved_config.json"))
    assert "avg_rank=" in out and "random:" in out


def test_exit_codes(capsys, workdir, tmp_path):
    # config errors exit 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"methodd": "x"}))
    assert _run(capsys, "--config", str(bad), "verify")[0] == 2
    # missing checkpoint is a config error
    assert _run(capsys, "--config", workdir["config"], "dte", "--dataset", "parity")[0] == 2
    # oracle transport failures exit 4
    assert _run(capsys, "--config", workdir["config"], "pretrain")[0] == 0
    assert _run(capsys, "--config", workdir["config"], "pool", "build")[0] == 0
    code, _ = _run(capsys, "--config", workdir["config"], "mte",
                   "--oracle-cmd", "python3 -c pass")
    assert code == 4
    # mte without any oracle is a config error
    assert _run(capsys, "--config", workdir["config"], "mte")[0] == 2
