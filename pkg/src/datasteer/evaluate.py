"""Projection quality harness: rank-based trustworthiness and continuity in
intra-modal (image-image) and inter-modal (image-label) settings, the mean
image-to-label layout similarity, and side-by-side method reports.

Trustworthiness sums, over each query's k nearest layout neighbors, how far
beyond rank k they sit in the original space; continuity swaps the roles of
the two spaces. Per-query penalties are normalized by 2/(k(2P-k-1)) with P
the query's candidate pool size, which keeps scores in [0, 1] for every k
up to the pool size (the usual 3k variant breaks down for large k).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .corpus import Corpus, cosine_distance_matrix, euclidean_distance_matrix
from .errors import KTooLarge
from .layout import Layout, check_layout

_METRICS = {"cosine": cosine_distance_matrix, "euclidean": euclidean_distance_matrix}


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    k: int
    rows: Mapping[str, dict]  # method -> {t_intra, c_intra, ims, t_inter, c_inter}

    COLUMNS = ("t_intra", "c_intra", "ims", "t_inter", "c_inter")

    def to_json(self) -> str:
        return json.dumps({"dataset": self.dataset, "k": self.k,
                           "rows": {m: dict(r) for m, r in self.rows.items()}}, indent=2)

    def to_table(self) -> str:
        header = ["method"] + [c.upper() for c in self.COLUMNS]
        lines = [header] + [
            [name] + [f"{row[c]:.4f}" for c in self.COLUMNS]
            for name, row in self.rows.items()
        ]
        widths = [max(len(r[i]) for r in lines) for i in range(len(header))]
        return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths))
                         for row in lines)


def _rank_matrix(dist: np.ndarray) -> np.ndarray:
    """ranks[i, j] = 1-based rank of column j among row i's distances."""
    order = np.argsort(dist, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(dist.shape[0])[:, None]
    ranks[rows, order] = np.arange(1, dist.shape[1] + 1)[None, :]
    return ranks


def _penalty_score(d_ref: np.ndarray, d_probe: np.ndarray, k: int,
                   exclude_self: bool) -> float:
    """Mean over queries of 1 - normalized stranger penalty.

    `d_probe` picks each query's k nearest; `d_ref` supplies the ranks the
    penalty is charged against.
    """
    n, pool = d_probe.shape
    if exclude_self:
        pool -= 1
        d_ref = d_ref.copy()
        d_probe = d_probe.copy()
        np.fill_diagonal(d_ref, np.inf)
        np.fill_diagonal(d_probe, np.inf)
    if pool < 2 or k > pool:
        raise KTooLarge(f"k={k} with candidate pool of {pool}")
    ranks_ref = _rank_matrix(d_ref)
    order_probe = np.argsort(d_probe, axis=1, kind="stable")[:, :k]
    rows = np.arange(n)[:, None]
    over = np.maximum(ranks_ref[rows, order_probe] - k, 0)
    per_query = over.sum(axis=1) * 2.0 / (k * (2 * pool - k - 1))
    return float(np.mean(1.0 - per_query))


def _distance_pairs(corpus: Corpus, layout: Layout, mode: str, metric: str):
    """(high, low) distance matrices for each query family of the mode."""
    img_ids = [im.id for im in corpus.images]
    lab_ids = [la.id for la in corpus.labels]
    high_img = corpus.image_matrix()
    low_img = layout.coords(img_ids)
    if mode == "intra":
        d_high = _METRICS[metric](high_img, high_img)
        d_low = euclidean_distance_matrix(low_img, low_img)
        return [(d_high, d_low, True)]
    if mode == "inter":
        high_lab = corpus.label_matrix()
        low_lab = layout.coords(lab_ids)
        d_high = _METRICS[metric](high_img, high_lab)
        d_low = euclidean_distance_matrix(low_img, low_lab)
        return [(d_high, d_low, False), (d_high.T, d_low.T, False)]
    raise ValueError(f"unknown mode {mode!r}")


def trustworthiness(corpus: Corpus, layout: Layout, k: int = 30,
                    mode: str = "intra", metric: str = "cosine") -> float:
    """1 iff no layout neighbor is a stranger in the original space."""
    check_layout(layout, corpus)
    scores = []
    weights = []
    for d_high, d_low, excl in _distance_pairs(corpus, layout, mode, metric):
        scores.append(_penalty_score(d_high, d_low, k, excl))
        weights.append(d_high.shape[0])
    return float(np.average(scores, weights=weights))


def continuity(corpus: Corpus, layout: Layout, k: int = 30,
               mode: str = "intra", metric: str = "cosine") -> float:
    """1 iff no original-space neighbor is lost in the layout."""
    check_layout(layout, corpus)
    scores = []
    weights = []
    for d_high, d_low, excl in _distance_pairs(corpus, layout, mode, metric):
        scores.append(_penalty_score(d_low, d_high, k, excl))
        weights.append(d_high.shape[0])
    return float(np.average(scores, weights=weights))


def ims(layout: Layout, corpus: Corpus) -> float:
    """Mean inverse-distance similarity 1/(1+d) over image-label edges."""
    check_layout(layout, corpus)
    if not corpus.graph.edges:
        raise ValueError("corpus has no image-label edges")
    total = 0.0
    for img, lab, _w in corpus.graph.edges:
        xi, yi = layout[img]
        xl, yl = layout[lab]
        d = np.hypot(xi - xl, yi - yl)
        total += 1.0 / (1.0 + d)
    return total / len(corpus.graph.edges)


def compare(methods: Mapping[str, Layout], corpus: Corpus, k: int = 30,
            metric: str = "cosine", dataset: str = "corpus") -> EvalReport:
    rows = {}
    for name, layout in methods.items():
        rows[name] = {
            "t_intra": trustworthiness(corpus, layout, k, "intra", metric),
            "c_intra": continuity(corpus, layout, k, "intra", metric),
            "ims": ims(layout, corpus),
            "t_inter": trustworthiness(corpus, layout, k, "inter", metric),
            "c_inter": continuity(corpus, layout, k, "inter", metric),
        }
    return EvalReport(dataset=dataset, k=k, rows=rows)
