"""PCA projection of embeddings for plotting."""

import numpy as np
import pytest

from taskspace import projection as pj
from taskspace.errors import ContractViolation, IncompatibleSpaceError
from taskspace.extractors import TaskEmbedding


def _emb(source, vec, kind="DTE", method="taskemb", fp="fp"):
    return TaskEmbedding(vector=np.asarray(vec, dtype=np.float32), method=method,
                         kind=kind, source_id=source, fingerprint=fp)


def test_projection_recovers_principal_axis():
    # points spread along the first axis only
    embs = [_emb(f"d{i}", [float(i), 0.0, 0.0]) for i in range(5)]
    out = pj.pca_project(embs, dims=2)
    coords = np.array([r["coords"] for r in out["rows"]])
    # all variance sits in component 0; component 1 collapses
    assert np.allclose(coords[:, 1], 0.0, atol=1e-9)
    assert out["rank_deficient"] is True
    spread = coords[:, 0]
    assert len(set(np.round(spread, 9))) == 5


def test_projection_deterministic_and_sorted():
    embs = [_emb("b", [1.0, 2.0]), _emb("a", [3.0, 1.0]), _emb("m", [0.0, 5.0], kind="MTE")]
    a = pj.pca_project(embs, dims=2)
    b = pj.pca_project(list(reversed(embs)), dims=2)
    assert [r["id"] for r in a["rows"]] == ["DTE:a", "DTE:b", "MTE:m"]
    assert a == b


def test_projection_preserves_pairwise_distances_at_full_rank():
    vecs = [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]]
    embs = [_emb(f"d{i}", v) for i, v in enumerate(vecs)]
    out = pj.pca_project(embs, dims=2)
    coords = np.array([r["coords"] for r in out["rows"]])
    X = np.array(vecs)
    for i in range(3):
        for j in range(3):
            orig = np.linalg.norm(X[i] - X[j])
            proj = np.linalg.norm(coords[i] - coords[j])
            assert proj == pytest.approx(orig, abs=1e-9)


def test_projection_contracts():
    with pytest.raises(ContractViolation):
        pj.pca_project([_emb("a", [1.0, 2.0])])
    with pytest.raises(IncompatibleSpaceError):
        pj.pca_project([_emb("a", [1.0, 2.0]), _emb("b", [1.0], fp="fp")])
    with pytest.raises(IncompatibleSpaceError):
        pj.pca_project([_emb("a", [1.0, 2.0]), _emb("b", [1.0, 2.0], fp="other")])


def test_projection_tsv_shape():
    embs = [_emb("a", [1.0, 0.0]), _emb("b", [0.0, 1.0])]
    text = pj.projection_tsv(pj.pca_project(embs, dims=2))
    lines = text.strip().split("\n")
    assert lines[0].split("\t") == ["id", "kind", "method", "source", "c0", "c1"]
    assert len(lines) == 3
