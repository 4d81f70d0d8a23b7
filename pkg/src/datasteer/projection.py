"""Contrastive multi-modal projection of images and content labels into 2D.

Three InfoNCE-style terms are trained jointly on a six-layer network:
image-image and label-label terms pull same-modality neighbors together,
the image-label term pulls images onto their content labels. Negatives for
the same-modality terms are the other in-batch points (minus the anchor's
own nearest neighbors); image-label negatives are frequency-biased samples
of labels the image does not contain. The distance-order objective used by
earlier multi-modal projections is implemented as `order_loss` and doubles
as the training objective of the baseline estimator.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .corpus import Corpus, NeighborLists, knn_graph, label_frequencies
from .errors import BadConfig, Diverged, EmptyCandidates, NonFiniteLoss
from .layout import Layout, check_layout
from .network import Adam, DEFAULT_HIDDEN, Network, init_network

logger = logging.getLogger(__name__)

_NORM_EPS = 1e-6

II, IL, LL = "II", "IL", "LL"


# -- pair construction ----------------------------------------------------

@dataclass(frozen=True)
class PairGroup:
    """Positive pairs of one kind plus their candidate sets.

    `anchors`/`positives` are indices into the batch point list; `cand_mask`
    row g marks the candidate set of anchor g (positive included, anchor
    itself and its in-batch nearest neighbors excluded).
    """

    kind: str
    anchors: np.ndarray
    positives: np.ndarray
    cand_mask: np.ndarray

    @property
    def n_pairs(self) -> int:
        return len(self.anchors)


@dataclass(frozen=True)
class PairBatch:
    point_ids: tuple[str, ...]
    embeddings: np.ndarray  # (n_points, d)
    groups: tuple[PairGroup, ...]
    skipped_isolated: int = 0   # images with no contained label
    skipped_saturated: int = 0  # images containing every label


def sample_pairs(corpus: Corpus,
                 knn_images: NeighborLists,
                 knn_labels: NeighborLists | None,
                 freqs: dict[str, float] | None,
                 batch_size: int,
                 seed: int | np.random.Generator = 0,
                 m_negatives: int = 5,
                 anchors: Sequence[str] | None = None,
                 kinds: Sequence[str] = (II, IL, LL)) -> PairBatch:
    """Build one training batch.

    Image anchors default to a uniform sample of `batch_size` images; the
    positives are uniform draws from each anchor's kNN list. All labels ride
    along in the batch (label populations are small), so the label-label
    term sees every label and image-label negatives can be drawn exactly
    proportional to label frequency.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.PCG64(seed))
    image_ids = [im.id for im in corpus.images]
    if anchors is None:
        take = min(batch_size, len(image_ids))
        anchors = list(rng.choice(np.array(image_ids), size=take, replace=False))
    anchors = [str(a) for a in anchors]

    batch_images: list[str] = []
    seen = set()
    ii_pos: list[str] = []
    for a in anchors:
        p = str(rng.choice(np.array(knn_images[a])))
        ii_pos.append(p)
        for pid in (a, p):
            if pid not in seen:
                seen.add(pid)
                batch_images.append(pid)

    use_labels = (IL in kinds or LL in kinds) and corpus.n_labels > 0
    batch_labels = [la.id for la in corpus.labels] if use_labels else []
    point_ids = tuple(batch_images + batch_labels)
    index = {pid: i for i, pid in enumerate(point_ids)}
    n = len(point_ids)
    emb = np.array([corpus.embedding_of(pid) for pid in point_ids])

    image_mask = np.zeros(n, dtype=bool)
    image_mask[:len(batch_images)] = True
    label_mask = ~image_mask

    groups: list[PairGroup] = []
    skipped_isolated = 0
    skipped_saturated = 0

    if II in kinds:
        a_idx = np.array([index[a] for a in anchors], dtype=int)
        p_idx = np.array([index[p] for p in ii_pos], dtype=int)
        mask = np.repeat(image_mask[None, :], len(anchors), axis=0)
        for g, a in enumerate(anchors):
            mask[g, index[a]] = False
            for nb in knn_images[a]:
                j = index.get(nb)
                if j is not None:
                    mask[g, j] = False
            mask[g, p_idx[g]] = True
        groups.append(PairGroup(kind=II, anchors=a_idx, positives=p_idx, cand_mask=mask))

    if LL in kinds and len(batch_labels) >= 2 and knn_labels is not None:
        la_anchor = list(batch_labels)
        la_pos = [str(rng.choice(np.array(knn_labels[a]))) for a in la_anchor]
        a_idx = np.array([index[a] for a in la_anchor], dtype=int)
        p_idx = np.array([index[p] for p in la_pos], dtype=int)
        mask = np.repeat(label_mask[None, :], len(la_anchor), axis=0)
        for g, a in enumerate(la_anchor):
            mask[g, index[a]] = False
            for nb in knn_labels[a]:
                j = index.get(nb)
                if j is not None:
                    mask[g, j] = False
            mask[g, p_idx[g]] = True
        groups.append(PairGroup(kind=LL, anchors=a_idx, positives=p_idx, cand_mask=mask))

    if IL in kinds and batch_labels and freqs:
        all_labels = np.array(batch_labels)
        fvec = np.array([freqs[l] for l in batch_labels], dtype=float)
        il_a, il_p, il_rows = [], [], []
        for a in anchors:
            contained = corpus.labels_of(a)
            if not contained:
                skipped_isolated += 1
                continue
            others = [l for l in batch_labels if l not in set(contained)]
            if not others:
                skipped_saturated += 1
                continue
            pos = str(rng.choice(np.array(contained)))
            allowed = np.array([l in set(others) for l in batch_labels])
            p_allowed = fvec * allowed
            total = p_allowed.sum()
            if total <= 0:  # zero-frequency complement; fall back to uniform
                p_allowed = allowed.astype(float)
                total = p_allowed.sum()
            m = min(m_negatives, int(allowed.sum()))
            negs = rng.choice(all_labels, size=m, replace=False, p=p_allowed / total)
            row = np.zeros(n, dtype=bool)
            row[index[pos]] = True
            for neg in negs:
                row[index[str(neg)]] = True
            il_a.append(index[a])
            il_p.append(index[pos])
            il_rows.append(row)
        if il_a:
            groups.append(PairGroup(kind=IL, anchors=np.array(il_a, dtype=int),
                                    positives=np.array(il_p, dtype=int),
                                    cand_mask=np.array(il_rows)))
        if skipped_isolated:
            logger.debug("IL sampling skipped %d isolated image(s)", skipped_isolated)

    return PairBatch(point_ids=point_ids, embeddings=emb, groups=tuple(groups),
                     skipped_isolated=skipped_isolated, skipped_saturated=skipped_saturated)


# -- losses ---------------------------------------------------------------

def contrastive_loss(anchor, positive, candidates, tau: float) -> float:
    """Per-pair InfoNCE on cosine similarity in layout space.

    `candidates` must contain the positive and never the anchor itself.
    """
    if tau <= 0:
        raise BadConfig(f"tau must be positive, got {tau}")
    cands = np.atleast_2d(np.asarray(candidates, dtype=float))
    if cands.size == 0:
        raise EmptyCandidates("no candidates for contrastive loss")
    a = np.asarray(anchor, dtype=float)
    p = np.asarray(positive, dtype=float)

    def cos(u, v):
        su = np.sqrt(u @ u + _NORM_EPS ** 2)
        sv = np.sqrt(v @ v + _NORM_EPS ** 2)
        return float(u @ v / (su * sv))

    s_p = cos(a, p) / tau
    s_all = np.array([cos(a, c) for c in cands]) / tau
    mx = s_all.max()
    return float(-s_p + mx + np.log(np.sum(np.exp(s_all - mx))))


@dataclass(frozen=True)
class LossReport:
    epoch: int
    loss_ii: float
    loss_il: float
    loss_ll: float
    omega1: float
    omega2: float
    total: float
    pair_counts: tuple[int, int, int] = (0, 0, 0)

    @staticmethod
    def build(epoch, loss_ii, loss_il, loss_ll, omega1, omega2, pair_counts=(0, 0, 0)):
        return LossReport(epoch=epoch, loss_ii=loss_ii, loss_il=loss_il, loss_ll=loss_ll,
                          omega1=omega1, omega2=omega2,
                          total=loss_ii + omega1 * loss_il + omega2 * loss_ll,
                          pair_counts=tuple(pair_counts))

    def as_dict(self) -> dict:
        return {"epoch": self.epoch, "loss_ii": self.loss_ii, "loss_il": self.loss_il,
                "loss_ll": self.loss_ll, "omega1": self.omega1, "omega2": self.omega2,
                "total": self.total, "pair_counts": list(self.pair_counts)}


def task_weights(history: Sequence[LossReport], alpha: float = 0.5,
                 override: tuple[float, float] | None = None) -> tuple[float, float]:
    """Loss-balanced weights (current/initial ratio to the alpha power) for
    the image-label and label-label terms; (1, 1) before the first epoch."""
    if override is not None:
        return float(override[0]), float(override[1])
    if not history:
        return 1.0, 1.0
    first, last = history[0], history[-1]

    def ratio(now, start):
        if start <= 0 or now <= 0:
            return 1.0
        return float((now / start) ** alpha)

    return ratio(last.loss_il, first.loss_il), ratio(last.loss_ll, first.loss_ll)


def _group_loss_and_coeffs(unit: np.ndarray, group: PairGroup, tau: float):
    """Sum of per-pair losses for one group and the matching coefficient
    matrix W with W[a, c] = d(loss)/d cos(a, c)."""
    n = unit.shape[0]
    sims = unit[group.anchors] @ unit.T  # (G, n)
    logits = sims / tau
    neg_inf = -np.inf
    masked = np.where(group.cand_mask, logits, neg_inf)
    mx = masked.max(axis=1)
    expv = np.exp(masked - mx[:, None])
    expv[~group.cand_mask] = 0.0
    denom = expv.sum(axis=1)
    lse = mx + np.log(denom)
    pos_logits = logits[np.arange(group.n_pairs), group.positives]
    losses = -pos_logits + lse
    total = float(losses.sum())

    q = expv / denom[:, None]  # softmax over candidates
    coeff = q / tau
    coeff[np.arange(group.n_pairs), group.positives] -= 1.0 / tau
    w = np.zeros((n, n))
    np.add.at(w, group.anchors, coeff)
    return total, w


def _unit_rows(y: np.ndarray):
    # smoothed norm: keeps the map differentiable at the origin so analytic
    # gradients agree with finite differences everywhere
    norms = np.sqrt(np.sum(y * y, axis=1, keepdims=True) + _NORM_EPS ** 2)
    return y / norms, norms


def batch_loss(network: Network, batch: PairBatch, tau: float,
               weights: tuple[float, float] = (1.0, 1.0), epoch: int = 0) -> LossReport:
    """Forward-only evaluation of the weighted three-term objective."""
    y = network.forward(batch.embeddings)
    unit, _ = _unit_rows(y)
    per_kind = {II: 0.0, IL: 0.0, LL: 0.0}
    counts = {II: 0, IL: 0, LL: 0}
    for group in batch.groups:
        val, _ = _group_loss_and_coeffs(unit, group, tau)
        per_kind[group.kind] += val
        counts[group.kind] += group.n_pairs
    return LossReport.build(epoch, per_kind[II], per_kind[IL], per_kind[LL],
                            weights[0], weights[1],
                            pair_counts=(counts[II], counts[IL], counts[LL]))


def gradients(network: Network, batch: PairBatch, tau: float,
              weights: tuple[float, float] = (1.0, 1.0), epoch: int = 0):
    """Analytic parameter gradients of the weighted objective plus its report."""
    if not batch.groups:
        raise BadConfig("batch has no pair groups")
    y, caches = network.forward(batch.embeddings, cache=True)
    unit, norms = _unit_rows(y)
    n = unit.shape[0]
    per_kind = {II: 0.0, IL: 0.0, LL: 0.0}
    counts = {II: 0, IL: 0, LL: 0}
    w_total = np.zeros((n, n))
    kind_weight = {II: 1.0, IL: weights[0], LL: weights[1]}
    for group in batch.groups:
        val, w = _group_loss_and_coeffs(unit, group, tau)
        per_kind[group.kind] += val
        counts[group.kind] += group.n_pairs
        w_total += kind_weight[group.kind] * w
    report = LossReport.build(epoch, per_kind[II], per_kind[IL], per_kind[LL],
                              weights[0], weights[1],
                              pair_counts=(counts[II], counts[IL], counts[LL]))
    if not np.isfinite(report.total):
        raise NonFiniteLoss(f"loss became non-finite at epoch {epoch}")

    d_unit = (w_total + w_total.T) @ unit
    # through row normalization u = y/|y|
    d_y = (d_unit - np.sum(d_unit * unit, axis=1, keepdims=True) * unit) / norms
    grads = network.backward(caches, d_y)
    return grads, report


# -- distance-order objective (baseline / theory verifier) ----------------

@dataclass(frozen=True)
class OrderLossTerms:
    """Precomputed index structure for the distance-order objective."""

    point_ids: tuple[str, ...]
    label_groups: tuple  # (label_idx, image_idx_array, h_array) per label with >= 2 images
    edge_images: np.ndarray
    edge_labels: np.ndarray


def order_loss_terms(corpus: Corpus) -> OrderLossTerms:
    point_ids = tuple(corpus.point_ids())
    index = {pid: i for i, pid in enumerate(point_ids)}
    weights = {(img, lab): w for img, lab, w in corpus.graph.edges}
    groups = []
    for la in corpus.labels:
        imgs = corpus.images_of(la.id)
        if len(imgs) >= 2:
            groups.append((index[la.id],
                           np.array([index[i] for i in imgs], dtype=int),
                           np.array([weights[(i, la.id)] for i in imgs], dtype=float)))
    e_img = np.array([index[img] for img, _, _ in corpus.graph.edges], dtype=int)
    e_lab = np.array([index[lab] for _, lab, _ in corpus.graph.edges], dtype=int)
    return OrderLossTerms(point_ids=point_ids, label_groups=tuple(groups),
                          edge_images=e_img, edge_labels=e_lab)


def order_loss_value_grad(coords: np.ndarray, terms: OrderLossTerms,
                          want_grad: bool = True):
    """Inversion penalty of high- vs low-dimensional distance orders, summed
    per label over its incident image pairs and normalized by the total
    squared layout distance over edges. Zero iff all orders are preserved."""
    coords = np.asarray(coords, dtype=float)
    grad = np.zeros_like(coords) if want_grad else None
    if len(terms.edge_images) == 0:
        warnings.warn("distance-order loss over an empty edge set is 0 by convention")
        return 0.0, grad

    diffs = coords[terms.edge_images] - coords[terms.edge_labels]
    l_edges = np.maximum(np.sqrt(np.sum(diffs * diffs, axis=1)), _NORM_EPS)
    denom = float(np.sum(l_edges ** 2))
    if denom < _NORM_EPS:
        return 0.0, grad

    edge_index = {(int(i), int(l)): e for e, (i, l) in
                  enumerate(zip(terms.edge_images, terms.edge_labels))}
    numer = 0.0
    d_num_dl = np.zeros(len(l_edges))  # d numerator / d edge length
    for lab_idx, img_idx, h in terms.label_groups:
        e_ids = np.array([edge_index[(int(i), lab_idx)] for i in img_idx])
        l = l_edges[e_ids]
        dh = h[:, None] - h[None, :]
        dl = l[:, None] - l[None, :]
        x = dh * dl
        pen = np.where(x > 0, 0.0, -x)
        numer += float(pen.sum()) / 2.0
        if want_grad:
            g = np.where(x > 0, 0.0, -1.0)  # d pen / d x
            d_num_dl_local = np.sum(g * dh, axis=1)  # d/d l_j of sum_{j<t}
            np.add.at(d_num_dl, e_ids, d_num_dl_local)

    value = numer / denom
    if not want_grad:
        return value, None
    # d(value)/d l_e = (d_num * denom - numer * 2 l_e) / denom^2
    dv_dl = (d_num_dl * denom - numer * 2.0 * l_edges) / (denom * denom)
    unit = diffs / l_edges[:, None]
    contrib = dv_dl[:, None] * unit
    np.add.at(grad, terms.edge_images, contrib)
    np.add.at(grad, terms.edge_labels, -contrib)
    return value, grad


def order_loss(layout: Layout, corpus: Corpus) -> float:
    """Distance-order objective of a complete layout (0 = orders preserved)."""
    check_layout(layout, corpus)
    terms = order_loss_terms(corpus)
    coords = layout.coords(terms.point_ids)
    value, _ = order_loss_value_grad(coords, terms, want_grad=False)
    return float(value)


# -- estimators -----------------------------------------------------------

class ContrastiveProjector(BaseEstimator):
    """Joint 2D projection of images and content labels.

    Parameters mirror the training recipe: `epochs`/`batch_size`/`lr` drive
    mini-batch Adam, `tau` is the shared InfoNCE temperature, `k` the
    neighbor count for positives, `m_negatives` the number of
    frequency-biased label negatives per image. `weighting="balanced"`
    adapts the image-label and label-label weights from their loss ratios
    each epoch (exponent `alpha`); pass `fixed_weights=(w1, w2)` to pin
    them. `loss_kinds` can drop terms, e.g. ("II",) for an image-only run.
    """

    def __init__(self, epochs=200, batch_size=256, tau=0.1, k=15, m_negatives=5,
                 lr=1e-3, seed=0, hidden=DEFAULT_HIDDEN, nonlinearity="relu",
                 weighting="balanced", alpha=0.5, fixed_weights=None,
                 loss_kinds=(II, IL, LL), metric="cosine"):
        self.epochs = epochs
        self.batch_size = batch_size
        self.tau = tau
        self.k = k
        self.m_negatives = m_negatives
        self.lr = lr
        self.seed = seed
        self.hidden = hidden
        self.nonlinearity = nonlinearity
        self.weighting = weighting
        self.alpha = alpha
        self.fixed_weights = fixed_weights
        self.loss_kinds = loss_kinds
        self.metric = metric

    def fit(self, corpus: Corpus, y=None):
        if self.epochs < 0 or self.batch_size < 1 or self.tau <= 0 or self.k < 1:
            raise BadConfig("epochs >= 0, batch_size >= 1, tau > 0, k >= 1 required")
        kinds = tuple(self.loss_kinds)
        rng = np.random.Generator(np.random.PCG64(self.seed))
        knn_images = knn_graph(corpus, self.k, "image", metric=self.metric)
        use_labels = (IL in kinds or LL in kinds) and corpus.n_labels >= 2
        knn_labels = knn_graph(corpus, self.k, "label", metric=self.metric) if use_labels else None
        freqs = label_frequencies(corpus) if (IL in kinds and corpus.graph.edges) else None

        self.network_ = init_network(corpus.dimension, tuple(self.hidden), self.seed,
                                     nonlinearity=self.nonlinearity)
        optimizer = Adam(lr=self.lr)
        history: list[LossReport] = []
        image_ids = np.array([im.id for im in corpus.images])
        override = tuple(self.fixed_weights) if self.fixed_weights is not None else None
        if self.weighting == "fixed" and override is None:
            override = (1.0, 1.0)

        for epoch in range(self.epochs):
            w1, w2 = task_weights(history, alpha=self.alpha, override=override)
            order = rng.permutation(len(image_ids))
            sums = {II: 0.0, IL: 0.0, LL: 0.0}
            counts = {II: 0, IL: 0, LL: 0}
            for start in range(0, len(order), self.batch_size):
                chunk = [str(s) for s in image_ids[order[start:start + self.batch_size]]]
                batch = sample_pairs(corpus, knn_images, knn_labels, freqs,
                                     batch_size=self.batch_size, seed=rng,
                                     m_negatives=self.m_negatives, anchors=chunk,
                                     kinds=kinds)
                grads, report = gradients(self.network_, batch, self.tau,
                                          weights=(w1, w2), epoch=epoch)
                if not np.isfinite(report.total):
                    raise Diverged(f"training diverged at epoch {epoch}")
                optimizer.step(self.network_, grads)
                sums[II] += report.loss_ii
                sums[IL] += report.loss_il
                sums[LL] += report.loss_ll
                for kind, cnt in zip((II, IL, LL), report.pair_counts):
                    counts[kind] += cnt
            history.append(LossReport.build(epoch, sums[II], sums[IL], sums[LL], w1, w2,
                                            pair_counts=(counts[II], counts[IL], counts[LL])))
        self.history_ = history
        self.corpus_ = corpus
        self.layout_ = self._project(corpus)
        return self

    def _project(self, corpus: Corpus) -> Layout:
        ids = corpus.point_ids()
        coords = self.network_.forward(np.array([corpus.embedding_of(p) for p in ids]))
        layout = Layout({pid: (float(x), float(y)) for pid, (x, y) in zip(ids, coords)})
        return layout.normalized()

    def transform(self, corpus: Corpus | None = None) -> Layout:
        if not hasattr(self, "network_"):
            raise BadConfig("projector is not fitted")
        if corpus is None or corpus is self.corpus_:
            return self.layout_
        return self._project(corpus)

    def fit_transform(self, corpus: Corpus, y=None) -> Layout:
        return self.fit(corpus).layout_


class OrderPreservingProjector(BaseEstimator):
    """Baseline projector trained full-batch on the distance-order objective."""

    def __init__(self, epochs=300, lr=1e-2, seed=0, hidden=DEFAULT_HIDDEN,
                 nonlinearity="relu"):
        self.epochs = epochs
        self.lr = lr
        self.seed = seed
        self.hidden = hidden
        self.nonlinearity = nonlinearity

    def fit(self, corpus: Corpus, y=None):
        self.network_ = init_network(corpus.dimension, tuple(self.hidden), self.seed,
                                     nonlinearity=self.nonlinearity)
        terms = order_loss_terms(corpus)
        x = np.array([corpus.embedding_of(p) for p in terms.point_ids])
        optimizer = Adam(lr=self.lr)
        history = []
        for epoch in range(self.epochs):
            y_out, caches = self.network_.forward(x, cache=True)
            value, d_coords = order_loss_value_grad(y_out, terms)
            if not np.isfinite(value):
                raise Diverged(f"baseline training diverged at epoch {epoch}")
            grads = self.network_.backward(caches, d_coords)
            optimizer.step(self.network_, grads)
            history.append({"epoch": epoch, "loss": float(value)})
        self.history_ = history
        self.corpus_ = corpus
        self.layout_ = self._project(corpus)
        return self

    def _project(self, corpus: Corpus) -> Layout:
        ids = corpus.point_ids()
        coords = self.network_.forward(np.array([corpus.embedding_of(p) for p in ids]))
        layout = Layout({pid: (float(x), float(y)) for pid, (x, y) in zip(ids, coords)})
        return layout.normalized()

    def transform(self, corpus: Corpus | None = None) -> Layout:
        if not hasattr(self, "network_"):
            raise BadConfig("projector is not fitted")
        if corpus is None or corpus is self.corpus_:
            return self.layout_
        return self._project(corpus)

    def fit_transform(self, corpus: Corpus, y=None) -> Layout:
        return self.fit(corpus).layout_


def train(corpus: Corpus, config: dict | None = None):
    """Functional wrapper: returns (layout, loss history)."""
    projector = ContrastiveProjector(**(config or {}))
    projector.fit(corpus)
    return projector.layout_, projector.history_


def save_history(history: Sequence[LossReport], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([h.as_dict() for h in history], fh, indent=2)
