"""Command-line surface: one verb per pipeline stage.

Exit codes: 0 success, 2 config error, 3 numeric error, 4 transport/protocol
error, 5 incompatible-space error. Output file formats are documented in
docs/formats.md.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import benchmarks, surrogate as sg
from .config import RunConfig, load_run_config
from .errors import (ConfigError, ContractViolation, DegenerateEmbeddingError,
                     DegeneratePoolError, IncompatibleSpaceError, NumericError,
                     ProtocolError, TaskspaceError, TransportError)
from .families import gen_family, family_inputs
from .metrics import ndcg
from .oracles import (ExternalProcessOracle, HttpOracle, PromptSpec,
                      as_prompted_model)
from .pipeline import (EmbeddingStore, build_pool, canonical_json,
                       compute_dte, compute_mte, rank_candidates)
from .projection import pca_project, projection_tsv

log = logging.getLogger("taskspace")

EXIT_CODES = [
    ((ConfigError, ContractViolation, DegeneratePoolError), 2),
    ((NumericError,), 3),
    ((TransportError, ProtocolError), 4),
    ((IncompatibleSpaceError, DegenerateEmbeddingError), 5),
]


def _persist_config(cfg: RunConfig, run_dir: str) -> None:
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "resolved_config.json"), "w") as f:
        f.write(canonical_json(cfg.to_json()))


def _store(cfg: RunConfig) -> EmbeddingStore:
    return EmbeddingStore(cfg.store)


def _base_checkpoint(cfg: RunConfig, store: EmbeddingStore) -> sg.SurrogateCheckpoint:
    if os.path.exists(store.checkpoint_path()):
        return store.load_checkpoint()
    raise ConfigError("no surrogate checkpoint in store; run `pretrain` first")


def _make_oracle(args):
    if getattr(args, "oracle_cmd", None):
        return ExternalProcessOracle(args.oracle_cmd.split())
    if getattr(args, "oracle_url", None):
        return HttpOracle(args.oracle_url)
    raise ConfigError("an oracle is required: pass --oracle-cmd or --oracle-url")


# -- subcommand implementations --------------------------------------------------


def cmd_pretrain(cfg: RunConfig, args) -> int:
    store = _store(cfg)
    ckpt = sg.init_surrogate(cfg.surrogate, cfg.surrogate_seed)
    if args.epochs > 0:
        texts = []
        for fid in cfg.pool.source_families or [f.family_id for f in cfg.families]:
            fam = cfg.family_by_id(fid)
            texts.extend(family_inputs(fam, cfg.pool.cap_per_source, cfg.pool.seed))
        ckpt = sg.pretrain_masked(ckpt, texts, epochs=args.epochs, seed=cfg.seed)
    store.save_checkpoint(ckpt)
    print(f"surrogate fingerprint {ckpt.fingerprint}")
    return 0


def cmd_pool_build(cfg: RunConfig, args) -> int:
    store = _store(cfg)
    fids = cfg.pool.source_families or [f.family_id for f in cfg.families]
    sources = {}
    dedup = []
    for fid in fids:
        fam = cfg.family_by_id(fid)
        sources[fid] = family_inputs(fam, cfg.pool.cap_per_source * 2, cfg.pool.seed)
        train, test = gen_family(fam)
        dedup.extend(ex.tokens for ex in list(train) + list(test))
    pool = build_pool(sources, cfg.pool.cap_per_source, dedup_against=dedup,
                      seed=cfg.pool.seed, pool_id=cfg.pool.pool_id)
    store.save_pool(pool)
    print(f"pool {pool.pool_id}: {len(pool)} texts from {len(sources)} sources")
    return 0


def cmd_dte(cfg: RunConfig, args) -> int:
    store = _store(cfg)
    ckpt = _base_checkpoint(cfg, store)
    fam = cfg.family_by_id(args.dataset)
    train, _ = gen_family(fam)
    emb = compute_dte(train, args.dataset, cfg.method, ckpt, cfg.extractor, store=store)
    print(f"DTE {args.dataset} method={cfg.method} dim={emb.dimension} "
          f"hash={emb.content_hash()[:12]}")
    return 0


def cmd_mte(cfg: RunConfig, args) -> int:
    store = _store(cfg)
    ckpt = _base_checkpoint(cfg, store)
    pool = store.load_pool(cfg.pool.pool_id)
    oracle = _make_oracle(args)
    try:
        emb = compute_mte(oracle, pool, cfg.method, ckpt, cfg.extractor, store=store)
    finally:
        oracle.close()
    print(f"MTE {oracle.oracle_id} method={cfg.method} dim={emb.dimension} "
          f"hash={emb.content_hash()[:12]}")
    return 0


def cmd_rank(cfg: RunConfig, args) -> int:
    store = _store(cfg)
    target = store.load_embedding(args.target)
    index = store.index()
    cand_ids = args.candidates or [i for i, m in index.items()
                                   if m["kind"] == "MTE" and m["method"] == cfg.method]
    candidates = [store.load_embedding(i) for i in cand_ids]
    for source_id, sim in rank_candidates(target, candidates,
                                          metric=cfg.extractor.similarity):
        print(f"{source_id}\t{sim:.6f}")
    return 0


def cmd_select_prompt(cfg: RunConfig, args) -> int:
    store = _store(cfg)
    ckpt = _base_checkpoint(cfg, store)
    pool = store.load_pool(cfg.pool.pool_id)
    with open(args.prompt_file) as f:
        prompt_objs = json.load(f)
    fam = cfg.family_by_id(args.dataset)
    train, _ = gen_family(fam)
    dte = compute_dte(train, args.dataset, cfg.method, ckpt, cfg.extractor, store=store)
    base = _make_oracle(args)
    try:
        mtes = []
        for obj in prompt_objs:
            spec = PromptSpec(prompt_id=obj["id"], tokens=obj["tokens"],
                              hint=obj.get("hint", ""))
            oracle = as_prompted_model(base, spec, max_len=cfg.surrogate.max_len)
            mtes.append(compute_mte(oracle, pool, cfg.method, ckpt, cfg.extractor,
                                    store=store))
    finally:
        base.close()
    ranking = rank_candidates(dte, mtes, metric=cfg.extractor.similarity)
    for source_id, sim in ranking:
        print(f"{source_id}\t{sim:.6f}")
    print(f"selected\t{ranking[0][0]}")
    return 0


def cmd_bench_transfer(cfg: RunConfig, args) -> int:
    families = cfg.families
    if len(families) < 2:
        raise ConfigError("transfer benchmark needs >=2 families in the config")
    run_dir = benchmarks.run_dir_for(args.out, {"cfg": cfg.to_json(), "bench": "transfer"})
    _persist_config(cfg, run_dir)
    report = benchmarks.run_transfer_benchmark(
        families, cfg.method, experiment_seed=cfg.seed,
        surrogate_cfg=cfg.surrogate, extractor_cfg=cfg.extractor, run_dir=run_dir)
    print(f"run dir {run_dir}")
    print(f"avg_rank={report.avg_rank:.3f} ndcg={report.ndcg:.3f} "
          f"random: avg_rank={report.baselines['random']['avg_rank']:.3f} "
          f"ndcg={report.baselines['random']['ndcg']:.3f}")
    return 0


def cmd_bench_prompt(cfg: RunConfig, args) -> int:
    families = [f for f in cfg.families if f.label_kind == "class"]
    if len(families) < 2:
        raise ConfigError("prompt benchmark needs >=2 class-kind families")
    run_dir = benchmarks.run_dir_for(args.out, {"cfg": cfg.to_json(), "bench": "prompt"})
    _persist_config(cfg, run_dir)
    report = benchmarks.run_prompt_benchmark(
        families, cfg.method, experiment_seed=cfg.seed,
        surrogate_cfg=cfg.surrogate, extractor_cfg=cfg.extractor,
        n_prompts=args.prompts, n_llms=args.llms, run_dir=run_dir)
    print(f"run dir {run_dir}")
    print(f"performance_rate={report.performance_rate:.3f} ndcg={report.ndcg:.3f}")
    return 0


def cmd_project(cfg: RunConfig, args) -> int:
    store = _store(cfg)
    index = store.index()
    ids = args.ids or [i for i, m in index.items() if m["method"] == cfg.method]
    embs = [store.load_embedding(i) for i in ids]
    result = pca_project(embs, dims=args.dims)
    tsv = projection_tsv(result)
    if args.out:
        with open(args.out, "w") as f:
            f.write(tsv)
        print(f"wrote {args.out} ({result['components']} components)")
    else:
        sys.stdout.write(tsv)
    if result["rank_deficient"]:
        log.warning("projection rank-deficient: only %d components available",
                    result["components"])
    return 0


def cmd_verify(cfg: RunConfig, args) -> int:
    """Quick invariant suite; prints one line per check."""
    from . import autodiff as ad
    from .data import Example, Label, LabeledSet

    failures = 0

    def check(name: str, ok: bool) -> None:
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        failures += 0 if ok else 1

    pv = ad.ParamVector()
    pv.register("p", np.array([1.0, 2.0]))
    _, grads = ad.value_and_grad(lambda P: (P["p"] * P["p"]).sum(), pv)
    check("autodiff quadratic gradient", np.allclose(grads["p"], [2.0, 4.0]))

    scfg = sg.SurrogateConfig(vocab_size=12, width=8, layers=1, heads=2,
                              ff_width=12, max_len=10, num_classes=3, seq_out_len=4)
    ckpt = sg.init_surrogate(scfg, 0)
    ex = Example((3, 4, 5), Label.of_class(1))
    ids = sg.batch_ids(scfg, [ex])

    def fn(P):
        return sg.log_prob_batch(scfg, P, ids, [ex.label]).sum()
    _, ga = ad.value_and_grad(fn, ckpt.params)
    gf = ad.finite_diff_grad(fn, ckpt.params, 1e-5)
    rel = (np.linalg.norm(ga.flatten() - gf.flatten())
           / max(np.linalg.norm(gf.flatten()), 1e-30))
    check("surrogate gradient vs finite differences", rel < 1e-6)

    total = sum(np.exp(sg.log_prob(ckpt, None, Example((3, 4), Label.of_class(c))))
                for c in range(scfg.num_classes))
    check("class log-probs normalize", abs(total - 1.0) < 1e-9)

    data = LabeledSet([Example((3 + i % 4, 4), Label.of_class(i % 2)) for i in range(8)])
    sg.fine_tune_prefix(ckpt, data, prefix_len=2, epochs=1, seed=0)
    check("prefix tuning freezes backbone",
          sg.SurrogateCheckpoint.create(scfg, ckpt.params).fingerprint == ckpt.fingerprint)

    import math
    hand = ((1 / math.log2(2) + 2 / math.log2(3) + 3 / math.log2(4))
            / (3 / math.log2(2) + 2 / math.log2(3) + 1 / math.log2(4)))
    check("ndcg hand value",
          abs(ndcg(["a", "b", "c"], {"a": 1.0, "b": 2.0, "c": 3.0}) - hand) < 1e-12)

    print(f"{'OK' if failures == 0 else 'FAILED'}: {failures} failing checks")
    return 0 if failures == 0 else 3


# -- argument parsing ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskspace",
        description="Unified task embeddings: dataset/model embeddings in one space")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--store", help=f"store root (or ${'TASKSPACE_STORE'})")
    parser.add_argument("--seed", type=int, help="experiment seed")
    parser.add_argument("--method", choices=["taskemb", "tupate"], help="extractor")
    parser.add_argument("--jobs", type=int, help="parallelism degree")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="initialize (and optionally pretrain) the surrogate")
    p.add_argument("--epochs", type=int, default=0, help="masked-token pretraining epochs")
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("pool", help="pool operations")
    pool_sub = p.add_subparsers(dest="pool_command", required=True)
    pb = pool_sub.add_parser("build", help="build the unsupervised pool")
    pb.set_defaults(fn=cmd_pool_build)

    p = sub.add_parser("dte", help="compute a dataset task embedding")
    p.add_argument("--dataset", required=True, help="family id declared in the config")
    p.set_defaults(fn=cmd_dte)

    p = sub.add_parser("mte", help="compute a model task embedding")
    p.add_argument("--oracle-cmd", help="external oracle argv (NDJSON over stdio)")
    p.add_argument("--oracle-url", help="external oracle HTTP endpoint")
    p.set_defaults(fn=cmd_mte)

    p = sub.add_parser("rank", help="rank stored candidates against a target embedding")
    p.add_argument("--target", required=True, help="stored embedding id")
    p.add_argument("--candidates", nargs="*", help="candidate embedding ids")
    p.set_defaults(fn=cmd_rank)

    p = sub.add_parser("select-prompt", help="pick the best prompt for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--prompt-file", required=True,
                   help='JSON list of {"id":..., "tokens":[...]}')
    p.add_argument("--oracle-cmd")
    p.add_argument("--oracle-url")
    p.set_defaults(fn=cmd_select_prompt)

    p = sub.add_parser("bench", help="run a benchmark")
    bench_sub = p.add_subparsers(dest="bench_command", required=True)
    bt = bench_sub.add_parser("transfer", help="source-model selection benchmark")
    bt.add_argument("--out", default="runs", help="directory for run outputs")
    bt.set_defaults(fn=cmd_bench_transfer)
    bp = bench_sub.add_parser("prompt", help="prompt selection benchmark")
    bp.add_argument("--out", default="runs")
    bp.add_argument("--prompts", type=int, default=13)
    bp.add_argument("--llms", type=int, default=2)
    bp.set_defaults(fn=cmd_bench_prompt)

    p = sub.add_parser("project", help="PCA-project stored embeddings to TSV")
    p.add_argument("--ids", nargs="*", help="embedding ids (default: all of --method)")
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--out", help="output TSV path (default stdout)")
    p.set_defaults(fn=cmd_project)

    p = sub.add_parser("verify", help="run the quick invariant suite")
    p.set_defaults(fn=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config, overrides={
            "store": args.store, "seed": args.seed,
            "method": args.method, "jobs": args.jobs})
        return args.fn(cfg, args)
    except TaskspaceError as err:
        log.error("%s: %s", type(err).__name__, err)
        for types, code in EXIT_CODES:
            if isinstance(err, types):
                return code
        return 2


if __name__ == "__main__":
    sys.exit(main())
