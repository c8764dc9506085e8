"""Evaluation metrics and the representation-gap toolkit.

Span-level F1 for BIO tagging, positive-class / macro F1 for sequence
classification, Pearson correlation, cosine-distance Hausdorff between
point sets, and deterministic 2-component PCA.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ShapeError


# ---------------------------------------------------------------------------
# BIO spans

def bio_spans(tags: list[str]) -> set[tuple[str, int, int]]:
    """Extract (type, start, end) spans, end inclusive.

    Tolerant reading: an I-X that does not continue a same-type span opens
    a new one (standard conlleval behaviour), so raw argmax predictions
    can be scored directly.
    """
    spans = set()
    start = None
    kind = None
    for i, tag in enumerate(tags):
        if tag == "O" or tag is None:
            if start is not None:
                spans.add((kind, start, i - 1))
                start, kind = None, None
            continue
        if "-" not in tag:
            raise ContractError(f"malformed BIO tag {tag!r}")
        prefix, typ = tag.split("-", 1)
        if prefix not in ("B", "I"):
            raise ContractError(f"malformed BIO tag {tag!r}")
        if prefix == "B" or kind != typ:
            if start is not None:
                spans.add((kind, start, i - 1))
            start, kind = i, typ
    if start is not None:
        spans.add((kind, start, len(tags) - 1))
    return spans


def span_prf(
    gold: list[list[str]], predicted: list[list[str]]
) -> tuple[float, float, float]:
    """Corpus-level span precision/recall/F1; a span matches on (type, start, end)."""
    if len(gold) != len(predicted):
        raise ContractError(f"{len(gold)} gold vs {len(predicted)} predicted sequences")
    tp = n_gold = n_pred = 0
    for g, p in zip(gold, predicted):
        if len(g) != len(p):
            raise ContractError(f"tag sequences differ in length: {len(g)} vs {len(p)}")
        gs = bio_spans(list(g))
        ps = bio_spans(list(p))
        tp += len(gs & ps)
        n_gold += len(gs)
        n_pred += len(ps)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def span_f1(gold: list[list[str]], predicted: list[list[str]]) -> float:
    return span_prf(gold, predicted)[2]


def binary_f1(gold, predicted) -> float:
    """F1 of the positive class for labels in {0, 1}."""
    gold = np.asarray(gold)
    predicted = np.asarray(predicted)
    if gold.shape != predicted.shape:
        raise ContractError("gold and predicted label counts differ")
    if gold.size and not (set(np.unique(gold)) | set(np.unique(predicted))) <= {0, 1}:
        raise ContractError("binary_f1: labels must be 0 or 1")
    tp = int(((gold == 1) & (predicted == 1)).sum())
    fp = int(((gold == 0) & (predicted == 1)).sum())
    fn = int(((gold == 1) & (predicted == 0)).sum())
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def macro_f1(gold, predicted, n_labels: int) -> float:
    gold = np.asarray(gold)
    predicted = np.asarray(predicted)
    scores = []
    for c in range(n_labels):
        tp = int(((gold == c) & (predicted == c)).sum())
        fp = int(((gold != c) & (predicted == c)).sum())
        fn = int(((gold == c) & (predicted != c)).sum())
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def pearson(xs, ys) -> float:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
        raise ContractError("pearson: need two equal-length 1-D arrays of size >= 2")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    vx = float((dx * dx).sum())
    vy = float((dy * dy).sum())
    if vx == 0.0 or vy == 0.0:
        raise ContractError("pearson: zero variance input")
    return float((dx * dy).sum() / np.sqrt(vx * vy))


# ---------------------------------------------------------------------------
# representation sets

@dataclass
class RepresentationSet:
    """Vectors extracted from one model layer for one language."""

    vectors: np.ndarray
    language: str
    level: str = "token"  # "token" | "sequence"
    dropped_zero_vectors: int = 0

    @staticmethod
    def build(vectors, language: str, level: str = "token") -> "RepresentationSet":
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.ndim != 2:
            raise ContractError("RepresentationSet: vectors must be 2-D (n, d)")
        norms = np.linalg.norm(arr, axis=1)
        keep = norms > 0
        dropped = int((~keep).sum())
        arr = arr[keep]
        if arr.shape[0] == 0:
            raise ContractError("RepresentationSet: no nonzero vectors")
        return RepresentationSet(arr, language, level, dropped)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def cosine_distance(s: np.ndarray, t: np.ndarray) -> float:
    """1 - cos(s, t); both vectors must be nonzero."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if s.shape != t.shape:
        raise ShapeError(f"cosine_distance: shapes {s.shape} vs {t.shape}")
    ns = np.linalg.norm(s)
    nt = np.linalg.norm(t)
    if ns == 0.0 or nt == 0.0:
        raise ContractError("cosine_distance: zero vector")
    return float(1.0 - float(s @ t) / (ns * nt))


def _cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    an = a / np.linalg.norm(a, axis=1, keepdims=True)
    bn = b / np.linalg.norm(b, axis=1, keepdims=True)
    return 1.0 - an @ bn.T


def hausdorff(S: RepresentationSet, T: RepresentationSet) -> float:
    """max of the two directed max-min cosine distances between the sets."""
    if S.dim != T.dim:
        raise ContractError(f"hausdorff: dimensions differ ({S.dim} vs {T.dim})")
    d = _cosine_matrix(S.vectors, T.vectors)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def hausdorff_modified(S: RepresentationSet, T: RepresentationSet) -> float:
    """Average-based variant: mean of the two directed mean-min distances."""
    if S.dim != T.dim:
        raise ContractError(f"hausdorff: dimensions differ ({S.dim} vs {T.dim})")
    d = _cosine_matrix(S.vectors, T.vectors)
    return float(0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean()))


def pca2(vectors) -> tuple[np.ndarray, np.ndarray]:
    """Project mean-centered vectors onto the top-2 covariance eigenvectors.

    Sign convention: the first nonzero coordinate of each component is
    positive, so the projection is deterministic. Returns (points (n, 2),
    explained-variance fractions (2,), descending).
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ContractError("pca2: need at least 3 vectors")
    if x.shape[1] < 2:
        raise ContractError("pca2: need dimension >= 2")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:2]
    comps = eigvecs[:, order]
    for j in range(2):
        col = comps[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0:
            comps[:, j] = -col
    total = float(np.clip(eigvals.sum(), 1e-300, None))
    fractions = np.clip(eigvals[order], 0.0, None) / total
    return xc @ comps, fractions
