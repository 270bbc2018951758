"""Internal cluster-validity indices against held-out class labels.

Both indices use Euclidean distance.  The silhouette index is the macro
average (mean over classes of the per-class mean of s(x)); the micro average
(mean over all objects) is available as an option.  Singleton-class objects
get s(x) = 0, and when an object's a and b are both 0 (coincident points)
s(x) = 0 as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EvaluationError(Exception):
    """Undefined index or inconsistent inputs."""


@dataclass
class LabeledEmbedding:
    """An n-by-width real matrix with one class token per row."""

    vectors: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.labels = tuple(self.labels)
        if self.vectors.ndim != 2:
            raise EvaluationError("vectors must be a 2-d matrix")
        if len(self.labels) != self.vectors.shape[0]:
            raise EvaluationError("one label required per row")
        self.classes = tuple(dict.fromkeys(self.labels))
        self.members = [
            np.array([i for i, lab in enumerate(self.labels) if lab == c], dtype=np.int64)
            for c in self.classes
        ]

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def t(self) -> int:
        return len(self.classes)


def calinski_harabasz(emb: LabeledEmbedding) -> float:
    """Between-class over within-class scatter ratio; larger is better.

    Returns +inf when the within-class scatter is exactly zero (degenerate
    perfect separation).
    """
    if emb.t < 2 or emb.n <= emb.t:
        raise EvaluationError("CH undefined: requires 2 <= T < n")
    center = emb.vectors.mean(axis=0)
    between = 0.0
    within = 0.0
    for idx in emb.members:
        pts = emb.vectors[idx]
        centroid = pts.mean(axis=0)
        between += len(idx) * float(np.sum((centroid - center) ** 2))
        within += float(np.sum((pts - centroid) ** 2))
    between /= emb.t - 1
    within /= emb.n - emb.t
    if within == 0.0:
        return float("inf")
    return between / within


def _pairwise_distances(x: np.ndarray, block: int = 512) -> np.ndarray:
    """Euclidean distance matrix via the quadratic expansion, row blocks."""
    sq = np.sum(x * x, axis=1)
    n = x.shape[0]
    out = np.empty((n, n))
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * (x[lo:hi] @ x.T)
        out[lo:hi] = np.sqrt(np.maximum(d2, 0.0))
    np.fill_diagonal(out, 0.0)
    return out


def silhouette_samples(emb: LabeledEmbedding) -> np.ndarray:
    """Per-object s(x) = (b - a) / max(a, b), with the singleton rule s = 0."""
    if emb.t < 2:
        raise EvaluationError("silhouette undefined for a single class")
    dist = _pairwise_distances(emb.vectors)
    class_sums = np.stack([dist[:, idx].sum(axis=1) for idx in emb.members], axis=1)
    sizes = np.array([len(idx) for idx in emb.members], dtype=np.float64)
    label_idx = np.array([emb.classes.index(lab) for lab in emb.labels])
    s = np.zeros(emb.n)
    for i in range(emb.n):
        ci = label_idx[i]
        if sizes[ci] <= 1:
            continue  # singleton class: s stays 0
        a = class_sums[i, ci] / (sizes[ci] - 1.0)
        other = [class_sums[i, c] / sizes[c] for c in range(emb.t) if c != ci]
        b = min(other)
        denom = max(a, b)
        s[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return s


def silhouette(emb: LabeledEmbedding, average: str = "macro") -> float:
    """Macro-averaged silhouette index in [-1, 1] (micro available)."""
    s = silhouette_samples(emb)
    if average == "micro":
        return float(s.mean())
    if average != "macro":
        raise EvaluationError(f"unknown average {average!r}")
    label_idx = np.array([emb.classes.index(lab) for lab in emb.labels])
    per_class = [float(s[label_idx == c].mean()) for c in range(emb.t)]
    return float(np.mean(per_class))


@dataclass
class ComparisonRow:
    index: str          # "ch" or "s"
    method: str
    value: float
    rank: int           # 1 = best within the index, 2 = second best
    degenerate: bool    # CH infinity sentinel


def evaluate_all(embeddings: dict[str, LabeledEmbedding],
                 indices: tuple[str, ...] = ("ch", "s")) -> list[ComparisonRow]:
    """Score every method on every index; rank best and second best per index."""
    methods = list(embeddings)
    if not methods:
        raise EvaluationError("no embeddings to evaluate")
    label_sets = {embeddings[m].labels for m in methods}
    if len(label_sets) != 1:
        raise EvaluationError("all embeddings must share the same labels")
    rows: list[ComparisonRow] = []
    for index in indices:
        fn = calinski_harabasz if index == "ch" else silhouette
        values = {m: fn(embeddings[m]) for m in methods}
        ordered = sorted(methods, key=lambda m: values[m], reverse=True)
        for m in methods:
            pos = ordered.index(m) + 1
            rows.append(ComparisonRow(
                index=index,
                method=m,
                value=values[m],
                rank=pos if pos <= 2 else 0,
                degenerate=bool(np.isinf(values[m])),
            ))
    return rows


def format_rows(rows: list[ComparisonRow]) -> str:
    """Aligned text table: one line per index, one column per method.

    The best value per index is marked '*', the second best '+' (mirroring
    the usual bold/underline convention in results tables).
    """
    methods = list(dict.fromkeys(r.method for r in rows))
    indices = list(dict.fromkeys(r.index for r in rows))
    width = max(12, max(len(m) for m in methods) + 3)
    lines = ["index  " + "".join(m.rjust(width) for m in methods)]
    by_key = {(r.index, r.method): r for r in rows}
    for index in indices:
        cells = []
        for m in methods:
            r = by_key[(index, m)]
            mark = "*" if r.rank == 1 else ("+" if r.rank == 2 else " ")
            cells.append(f"{r.value:.4g}{mark}".rjust(width))
        lines.append(f"{index:<7}" + "".join(cells))
    return "\n".join(lines)
