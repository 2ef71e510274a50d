"""2-D (or k-D) PCA projection of embeddings for plotting."""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, IncompatibleSpaceError
from .extractors import TaskEmbedding


def pca_project(embeddings: list[TaskEmbedding], dims: int = 2) -> dict:
    """Mean-centered PCA via the Gram matrix (few samples, huge dimension).

    Returns {"rows": [(id, kind, method, source, coords...)], "dims": k,
    "rank_deficient": bool}. Sign convention: the largest-magnitude coordinate
    of each component is positive. Rows are sorted by embedding id.
    """
    if len(embeddings) < 2:
        raise ContractViolation("pca_project needs at least two embeddings")
    first = embeddings[0]
    for e in embeddings[1:]:
        if e.method != first.method or e.fingerprint != first.fingerprint:
            raise IncompatibleSpaceError(f"embedding {e.source_id!r} lives in another space")
        if e.dimension != first.dimension:
            raise IncompatibleSpaceError("embedding dimensions differ")

    order = np.argsort([f"{e.kind}:{e.source_id}" for e in embeddings], kind="stable")
    embs = [embeddings[i] for i in order]
    X = np.stack([e.vector.astype(np.float64) for e in embs])
    Xc = X - X.mean(axis=0, keepdims=True)
    gram = Xc @ Xc.T
    eigvals, eigvecs = np.linalg.eigh(gram)
    idx = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[idx], eigvecs[:, idx]

    available = int(np.sum(eigvals > max(eigvals.max(), 0.0) * 1e-12)) if eigvals.size else 0
    k = min(dims, available)
    coords = np.zeros((len(embs), dims))
    for j in range(k):
        comp = eigvecs[:, j] * np.sqrt(max(eigvals[j], 0.0))
        if abs(comp.min()) > abs(comp.max()):
            comp = -comp
        coords[:, j] = comp

    rows = []
    for e, c in zip(embs, coords):
        rows.append({"id": f"{e.kind}:{e.source_id}", "kind": e.kind,
                     "method": e.method, "source": e.source_id,
                     "coords": [float(v) for v in c]})
    return {"rows": rows, "dims": dims, "components": k,
            "rank_deficient": k < dims}


def projection_tsv(result: dict) -> str:
    dims = result["dims"]
    header = ["id", "kind", "method", "source"] + [f"c{j}" for j in range(dims)]
    lines = ["\t".join(header)]
    for row in result["rows"]:
        lines.append("\t".join([row["id"], row["kind"], row["method"], row["source"]]
                               + [repr(v) for v in row["coords"]]))
    return "\n".join(lines) + "\n"
