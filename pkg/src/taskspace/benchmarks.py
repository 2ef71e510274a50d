"""Desk-scale selection benchmarks with measured ground truth.

Two experiment shapes: source-model selection for transfer (rank candidate
models for a target dataset, truth = measured transfer gain) and zero-shot
prompt selection (rank prompts for a dataset against a simulated prompted
model, truth = measured accuracy).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics, pipeline, surrogate as sg, zoo
from .data import LabeledSet
from .errors import ContractViolation
from .extractors import ExtractorConfig
from .families import TaskFamily, family_inputs, gen_family, true_label
from .oracles import (ModelOracle, PromptSpec, SimulatedPromptedLLM,
                      SurrogateModelOracle, as_prompted_model)
from .pipeline import (EmbeddingStore, InvocationLedger, UnsupervisedPool,
                       build_pool, canonical_json, compute_dte, compute_mte,
                       rank_candidates)
from .rng import Rng


# -- scoring -------------------------------------------------------------------


def score_predictions(predicted: list, truth: list, kind: str) -> float:
    """Accuracy for classes, negative squared error for scalars, exact match for tokens."""
    if kind == "class":
        return float(np.mean([p.value == t.value for p, t in zip(predicted, truth)]))
    if kind == "scalar":
        return -float(np.mean([(p.value - t.value) ** 2 for p, t in zip(predicted, truth)]))
    if kind == "tokens":
        return float(np.mean([tuple(p.value)[: len(t.value)] == tuple(t.value)
                              for p, t in zip(predicted, truth)]))
    raise ContractViolation(f"no benchmark score for label kind {kind!r}")


def score_checkpoint(ckpt: sg.SurrogateCheckpoint, test: LabeledSet) -> float:
    oracle = SurrogateModelOracle("scorer", ckpt, test.kind)
    preds = [oracle.predict(ex.tokens) for ex in test]
    return score_predictions(preds, [ex.label for ex in test], test.kind)


def score_oracle(oracle: ModelOracle, test: LabeledSet) -> float:
    preds = [oracle.predict(ex.tokens) for ex in test]
    return score_predictions(preds, [ex.label for ex in test], test.kind)


def measure_transfer_gain(source_train: LabeledSet, target_train: LabeledSet,
                          target_test: LabeledSet, base_ckpt: sg.SurrogateCheckpoint,
                          epochs: int = 2, seeds=(0, 1)) -> float:
    """Mean over seeds of score(source-then-target) - score(target-only)."""
    gains = []
    for seed in seeds:
        tuned_src = sg.fine_tune_full(base_ckpt, source_train, epochs=epochs, seed=seed)
        transferred = sg.fine_tune_full(tuned_src, target_train, epochs=epochs, seed=seed)
        baseline = sg.fine_tune_full(base_ckpt, target_train, epochs=epochs, seed=seed)
        gains.append(score_checkpoint(transferred, target_test)
                     - score_checkpoint(baseline, target_test))
    return float(np.mean(gains))


# -- report ----------------------------------------------------------------------


@dataclass
class RankingReport:
    experiment: str
    method: str
    avg_rank: float
    ndcg: float
    selected_performance: float | None
    performance_rate: float | None
    baselines: dict = field(default_factory=dict)
    ledger: dict = field(default_factory=dict)
    per_target: list = field(default_factory=list)
    degenerate_relevance: bool = False

    def __post_init__(self):
        if self.avg_rank < 1.0:
            raise ContractViolation("average rank must be >= 1")
        if not 0.0 <= self.ndcg <= 1.0 + 1e-12:
            raise ContractViolation("ndcg out of [0,1]")

    def to_json(self) -> dict:
        return {"experiment": self.experiment, "method": self.method,
                "avg_rank": self.avg_rank, "ndcg": self.ndcg,
                "selected_performance": self.selected_performance,
                "performance_rate": self.performance_rate,
                "baselines": self.baselines, "ledger": self.ledger,
                "per_target": self.per_target,
                "degenerate_relevance": self.degenerate_relevance}

    def save(self, run_dir: str) -> None:
        """Canonical JSON plus a flat TSV of the per-target rows."""
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "report.json"), "w") as f:
            f.write(canonical_json(self.to_json()))
        if self.per_target:
            cols = sorted(self.per_target[0])
            lines = ["\t".join(cols)]
            for row in self.per_target:
                lines.append("\t".join(str(row[c]) for c in cols))
            with open(os.path.join(run_dir, "per_target.tsv"), "w") as f:
                f.write("\n".join(lines) + "\n")


def run_dir_for(root: str, config_obj: dict) -> str:
    digest = hashlib.sha256(canonical_json(config_obj).encode()).hexdigest()[:12]
    return os.path.join(root, f"run-{digest}")


# -- shared setup ------------------------------------------------------------------


DEFAULT_BENCH_SURROGATE = sg.SurrogateConfig(vocab_size=64, width=16, layers=2, heads=2,
                                             ff_width=32, max_len=24, num_classes=8,
                                             seq_out_len=8)

# the prompt benchmark separates many near-binary labeling functions, which
# needs a wider surrogate than the transfer benchmark
PROMPT_BENCH_SURROGATE = sg.SurrogateConfig(vocab_size=64, width=32, layers=2, heads=2,
                                            ff_width=64, max_len=24, num_classes=8,
                                            seq_out_len=8)


def make_pool(families: list[TaskFamily], cap: int, seed: int,
              dedup_sets: list[LabeledSet]) -> UnsupervisedPool:
    sources = {f"{fam.family_id}:{fam.seed}": family_inputs(fam, cap * 2, seed + i)
               for i, fam in enumerate(families)}
    dedup = [ex.tokens for ds in dedup_sets for ex in ds]
    return build_pool(sources, cap, dedup_against=dedup, seed=seed,
                      pool_id=f"pool-{seed}")


# -- clustering probe ----------------------------------------------------------------


def run_clustering_probe(families: list[TaskFamily], method: str,
                         base_ckpt: sg.SurrogateCheckpoint,
                         extractor_cfg: ExtractorConfig | None = None,
                         architectures=zoo.ARCHITECTURES, train_seeds=(0, 1, 2),
                         pool_cap: int = 30, zoo_epochs: int = 4,
                         mte_epochs: int = 1) -> dict:
    """Train (family x architecture x seed) oracles, embed everything, and check
    each model's MTE is closest to its own family's DTE.

    Returns per-pair results and the fraction of correct (oracle, other-family)
    comparisons.
    """
    cfg = extractor_cfg or ExtractorConfig()
    scfg = base_ckpt.config
    datasets = {fam.family_id: gen_family(fam) for fam in families}
    pool = make_pool(families, pool_cap, seed=cfg.seed,
                     dedup_sets=[tr for tr, _ in datasets.values()])
    dtes = {fid: compute_dte(train, fid, method, base_ckpt, cfg)
            for fid, (train, _) in datasets.items()}
    pairs = []
    for fam in families:
        train, _ = datasets[fam.family_id]
        for arch in architectures:
            for seed in train_seeds:
                oid = f"{fam.family_id}|{arch}|s{seed}"
                oracle = zoo.train_zoo_model(arch, oid, train, scfg.vocab_size,
                                             scfg.max_len, scfg.num_classes,
                                             scfg.seq_out_len, epochs=zoo_epochs,
                                             seed=seed)
                mte = compute_mte(oracle, pool, method, base_ckpt, cfg,
                                  mte_epochs=mte_epochs)
                own = pipeline.rank_candidates(mte, [dtes[fam.family_id]])[0][1]
                for other in families:
                    if other.family_id == fam.family_id:
                        continue
                    sim_other = pipeline.rank_candidates(mte, [dtes[other.family_id]])[0][1]
                    pairs.append({"oracle": oid, "own_family": fam.family_id,
                                  "other_family": other.family_id,
                                  "sim_own": own, "sim_other": sim_other,
                                  "correct": bool(own > sim_other)})
    frac = float(np.mean([p["correct"] for p in pairs])) if pairs else 0.0
    return {"method": method, "pairs": pairs, "fraction_correct": frac}


# -- transfer benchmark -----------------------------------------------------------------


def run_transfer_benchmark(families: list[TaskFamily], method: str,
                           experiment_seed: int = 0,
                           surrogate_cfg: sg.SurrogateConfig | None = None,
                           extractor_cfg: ExtractorConfig | None = None,
                           architectures=zoo.ARCHITECTURES,
                           gain_epochs: int = 2, gain_seeds=(0, 1),
                           pool_cap: int = 25, zoo_epochs: int = 4,
                           store: EmbeddingStore | None = None,
                           run_dir: str | None = None) -> RankingReport:
    """Model selection for transfer: rank zoo candidates per target by embedding
    similarity; ground truth is the measured transfer-gain table.
    """
    if len(families) < 2 or len(architectures) < 1:
        raise ContractViolation("need >=2 families and >=1 architecture")
    scfg = surrogate_cfg or DEFAULT_BENCH_SURROGATE
    ecfg = replace(extractor_cfg or ExtractorConfig(), seed=experiment_seed)
    base_ckpt = sg.init_surrogate(scfg, seed=1000 + experiment_seed)

    # targets: one dataset per family at the experiment seed
    targets = {}
    for fam in families:
        fam_t = replace(fam, seed=fam.seed + 7919 * experiment_seed)
        targets[fam.family_id] = gen_family(fam_t)

    # candidates: one model per (family, architecture), each with its own source dataset
    # (sizes vary by architecture so the DataSize baseline is non-trivial)
    sizes = {arch: 64 + 32 * i for i, arch in enumerate(architectures)}
    candidates = {}
    for fam in families:
        for arch in architectures:
            cid = f"{fam.family_id}|{arch}"
            arch_tag = int(hashlib.sha256(arch.encode()).hexdigest()[:8], 16) % 1000
            fam_s = replace(fam, seed=fam.seed + 104729 * experiment_seed
                            + arch_tag + 17,
                            train_size=sizes[arch])
            src_train, _ = gen_family(fam_s)
            oracle = zoo.train_zoo_model(arch, cid, src_train, scfg.vocab_size,
                                         scfg.max_len, scfg.num_classes,
                                         scfg.seq_out_len, epochs=zoo_epochs,
                                         seed=experiment_seed)
            candidates[cid] = (oracle, src_train)

    ledger = InvocationLedger(k_p=len(candidates), k_d=len(targets))
    pool = make_pool(families, pool_cap, seed=experiment_seed,
                     dedup_sets=[tr for tr, _ in targets.values()]
                     + [src for _, src in candidates.values()])

    mtes = {cid: compute_mte(oracle, pool, method, base_ckpt, ecfg,
                             store=store, ledger=ledger)
            for cid, (oracle, _) in candidates.items()}
    dtes = {fid: compute_dte(train, fid, method, base_ckpt, ecfg,
                             store=store, ledger=ledger)
            for fid, (train, _) in targets.items()}

    # ground truth: measured transfer-gain grid (the exhaustive path)
    gains = {}
    for fid, (tgt_train, tgt_test) in targets.items():
        gains[fid] = {}
        for cid, (_, src_train) in candidates.items():
            gains[fid][cid] = measure_transfer_gain(src_train, tgt_train, tgt_test,
                                                    base_ckpt, epochs=gain_epochs,
                                                    seeds=gain_seeds)
            ledger.count_grid()

    rng = Rng(experiment_seed).split("random-baseline")
    rows, ranks, ndcgs = [], [], []
    rand_ranks, rand_ndcgs, size_ranks, size_ndcgs = [], [], [], []
    sel_gains, best_gains = [], []
    degenerate = False
    by_size = sorted(candidates, key=lambda c: (-len(candidates[c][1]), c))
    for fid in sorted(targets):
        ranking = rank_candidates(dtes[fid], list(mtes.values()),
                                  metric=ecfg.similarity)
        predicted = [cid for cid, _ in ranking]
        truth = gains[fid]
        relevance = metrics.minmax_relevance(truth)
        if len(set(truth.values())) == 1:
            degenerate = True
        rho = metrics.avg_rank(predicted, truth)
        nd = metrics.ndcg(predicted, relevance)
        ranks.append(rho)
        ndcgs.append(nd)
        sel_gains.append(truth[predicted[0]])
        best_gains.append(max(truth.values()))
        rand_pred = metrics.random_ranking(predicted, rng)
        rand_ranks.append(metrics.avg_rank(rand_pred, truth))
        rand_ndcgs.append(metrics.ndcg(rand_pred, relevance))
        size_ranks.append(metrics.avg_rank(by_size, truth))
        size_ndcgs.append(metrics.ndcg(by_size, relevance))
        rows.append({"target": fid, "avg_rank": rho, "ndcg": nd,
                     "selected": predicted[0], "selected_gain": truth[predicted[0]],
                     "best_gain": max(truth.values()),
                     "best": max(sorted(truth), key=lambda c: truth[c])})

    report = RankingReport(
        experiment="transfer-selection", method=method,
        avg_rank=float(np.mean(ranks)), ndcg=float(np.mean(ndcgs)),
        selected_performance=float(np.mean(sel_gains)),
        performance_rate=None,
        baselines={"random": {"avg_rank": float(np.mean(rand_ranks)),
                              "ndcg": float(np.mean(rand_ndcgs))},
                   "datasize": {"avg_rank": float(np.mean(size_ranks)),
                                "ndcg": float(np.mean(size_ndcgs))}},
        ledger=ledger.to_json(), per_target=rows, degenerate_relevance=degenerate)
    if run_dir:
        report.save(run_dir)
    if store is not None:
        store.save_ledger(ledger)
    return report


# -- prompt benchmark ----------------------------------------------------------------


def make_prompt_set(families: list[TaskFamily], n_prompts: int, seed: int = 0,
                    matched_acc: float = 0.9,
                    mismatched_acc: float = 0.6) -> tuple[list[PromptSpec], dict]:
    """Distinct prompts plus a routing table of (family, label shift, accuracy)
    behaviors.

    The first prompt per family is the matched one: it elicits that family's
    labeling at matched_acc. Every later prompt is written for a different
    task: it elicits a distinct random-lexicon labeling, and only at
    mismatched_acc, so it scores poorly on all of the benchmark datasets. The
    ground-truth best prompt per dataset is therefore known by construction.
    """
    rng = Rng(seed).split("prompts")
    prompts, routing_behavior = [], {}
    seen = set()
    base = families[0]
    for i in range(n_prompts):
        while True:
            toks = tuple(int(t) for t in rng.randint(3, 64, (4,)))
            if toks not in seen:
                seen.add(toks)
                break
        if i < len(families):
            fam, acc = families[i], matched_acc
            hint = f"{fam.family_id}@{acc}"
        else:
            fam = TaskFamily("sentiment-lexicon", seed=base.seed,
                             vocab_size=base.vocab_size,
                             num_classes=base.num_classes,
                             lexicon_seed=9001 + 37 * i + seed)
            acc = mismatched_acc
            hint = f"lexicon{fam.lexicon_seed}@{acc}"
        prompts.append(PromptSpec(prompt_id=f"p{i:02d}", tokens=toks, hint=hint))
        routing_behavior[toks] = (fam, acc)
    return prompts, routing_behavior


def run_prompt_benchmark(families: list[TaskFamily], method: str,
                         experiment_seed: int = 0, n_prompts: int = 13,
                         n_llms: int = 2, matched_acc: float = 0.9,
                         mismatched_acc: float = 0.6, noise: float = 0.05,
                         surrogate_cfg: sg.SurrogateConfig | None = None,
                         extractor_cfg: ExtractorConfig | None = None,
                         pool_cap: int = 60, mte_epochs: int = 3,
                         store: EmbeddingStore | None = None,
                         run_dir: str | None = None) -> RankingReport:
    """Zero-shot prompt selection against simulated prompted models.

    Each prompt routes a simulated model to one family's labeling behavior at
    matched_acc; on any other dataset that behavior scores ~mismatched_acc.
    Ground-truth accuracy is measured directly on each dataset's test split.
    """
    if n_prompts < 2:
        raise ContractViolation("need >=2 prompts per model")
    if any(fam.label_kind != "class" for fam in families):
        raise ContractViolation("prompt benchmark datasets must be class-kind")
    scfg = surrogate_cfg or PROMPT_BENCH_SURROGATE
    ecfg = replace(extractor_cfg or ExtractorConfig(epochs=4), seed=experiment_seed)
    base_ckpt = sg.init_surrogate(scfg, seed=2000 + experiment_seed)

    fams = [replace(f, seed=f.seed + 7919 * experiment_seed) for f in families]
    datasets = {fam.family_id: gen_family(fam) for fam in fams}
    prompts, routing_behavior = make_prompt_set(fams, n_prompts, seed=experiment_seed,
                                                matched_acc=matched_acc,
                                                mismatched_acc=mismatched_acc)

    num_classes = scfg.num_classes
    llms = []
    for j in range(n_llms):
        routing = {toks: ((lambda fam: (lambda t: true_label(fam, t)))(fam), acc)
                   for toks, (fam, acc) in routing_behavior.items()}
        llms.append(SimulatedPromptedLLM(f"llm{j}", routing, num_classes,
                                         noise=noise, seed=experiment_seed * 131 + j))

    prompted = {}
    for llm in llms:
        for spec in prompts:
            oracle = as_prompted_model(llm, spec, max_len=scfg.max_len)
            prompted[oracle.oracle_id] = (oracle, llm.oracle_id, spec)

    ledger = InvocationLedger(k_p=len(prompted), k_d=len(datasets))
    pool = make_pool(fams, pool_cap, seed=experiment_seed,
                     dedup_sets=[tr for tr, _ in datasets.values()])

    mtes = {oid: compute_mte(oracle, pool, method, base_ckpt, ecfg,
                             store=store, ledger=ledger, mte_epochs=mte_epochs)
            for oid, (oracle, _, _) in prompted.items()}
    dtes = {fid: compute_dte(train, fid, method, base_ckpt, ecfg,
                             store=store, ledger=ledger)
            for fid, (train, _) in datasets.items()}

    # exhaustive ground truth: measured accuracy of every prompt on every dataset
    accuracy = {fid: {} for fid in datasets}
    for fid, (_, test) in datasets.items():
        for oid, (oracle, _, _) in prompted.items():
            accuracy[fid][oid] = score_oracle(oracle, test)
            ledger.count_grid()

    rows, ndcgs, ranks = [], [], []
    perf, rates = [], []
    for fid in sorted(datasets):
        for llm in llms:
            ids = [oid for oid, (_, lid, _) in prompted.items()
                   if lid == llm.oracle_id]
            ranking = rank_candidates(dtes[fid], [mtes[i] for i in ids],
                                      metric=ecfg.similarity)
            predicted = [oid for oid, _ in ranking]
            truth = {oid: accuracy[fid][oid] for oid in ids}
            nd = metrics.ndcg(predicted, metrics.minmax_relevance(truth))
            rho = metrics.avg_rank(predicted, truth)
            selected = truth[predicted[0]]
            rate = metrics.performance_rate(selected, list(truth.values()))
            ndcgs.append(nd)
            ranks.append(rho)
            perf.append(selected)
            rates.append(rate)
            rows.append({"target": fid, "llm": llm.oracle_id, "avg_rank": rho,
                         "ndcg": nd, "selected": predicted[0],
                         "selected_accuracy": selected,
                         "best_accuracy": max(truth.values()),
                         "performance_rate": rate})

    report = RankingReport(
        experiment="prompt-selection", method=method,
        avg_rank=float(np.mean(ranks)), ndcg=float(np.mean(ndcgs)),
        selected_performance=float(np.mean(perf)),
        performance_rate=float(np.mean(rates)),
        ledger=ledger.to_json(), per_target=rows)
    if run_dir:
        report.save(run_dir)
    if store is not None:
        store.save_ledger(ledger)
    return report
