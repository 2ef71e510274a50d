"""Unified task embeddings: dataset and model embeddings in one vector space
computed through a fixed tiny surrogate model, with black-box oracle support
and embedding-based selection benchmarks.
"""

from .data import Example, Label, LabeledSet
from .extractors import (ExtractorConfig, TaskEmbedding, cosine_similarity,
                         taskemb_extract, tupate_extract)
from .pipeline import (EmbeddingStore, InvocationLedger, UnsupervisedPool,
                       build_pool, compute_dte, compute_mte, rank_candidates)
from .surrogate import (PrefixParams, SurrogateCheckpoint, SurrogateConfig,
                        fine_tune_full, fine_tune_prefix, init_surrogate,
                        log_prob, pretrain_masked)

__all__ = [
    "Example", "Label", "LabeledSet",
    "ExtractorConfig", "TaskEmbedding", "cosine_similarity",
    "taskemb_extract", "tupate_extract",
    "EmbeddingStore", "InvocationLedger", "UnsupervisedPool",
    "build_pool", "compute_dte", "compute_mte", "rank_candidates",
    "PrefixParams", "SurrogateCheckpoint", "SurrogateConfig",
    "fine_tune_full", "fine_tune_prefix", "init_surrogate",
    "log_prob", "pretrain_masked",
]

__version__ = "0.1.0"
