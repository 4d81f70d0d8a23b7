"""Dataset-quality metrics for the expansion timeline: informativeness,
per-class diversity, and the kernel two-sample distance between original and
generated embeddings.

Conventions: entropies and KL divergences use the natural log, with
0*ln(0) := 0. Feature vectors are softmax-normalized before KL so the
divergence is defined on arbitrary embeddings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Corpus, GENERATED, ORIGINAL
from .errors import (
    EmptyClass,
    MissingGenerated,
    MissingPredictions,
    NotADistribution,
    TooFewSamples,
)

DISTRIBUTION_TOL = 1e-6


@dataclass(frozen=True)
class MetricPoint:
    iteration: int
    informativeness: float
    diversity: float
    distance: float
    generated_count: int

    def to_json(self) -> str:
        return json.dumps({
            "iteration": self.iteration,
            "informativeness": self.informativeness,
            "diversity": self.diversity,
            "distance": self.distance,
            "generated_count": self.generated_count,
        })


@dataclass(frozen=True)
class CmmdResult:
    """sqrt of the unbiased squared-MMD estimate; small negative estimates
    are clamped to zero and flagged."""

    value: float
    squared: float
    clamped: bool
    sigma: float

    def __float__(self) -> float:
        return self.value


def _check_distribution(p: np.ndarray, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise NotADistribution(f"{name} must be a 1-D probability vector")
    if np.any(p < -DISTRIBUTION_TOL):
        raise NotADistribution(f"{name} has negative entries")
    if abs(float(p.sum()) - 1.0) > DISTRIBUTION_TOL:
        raise NotADistribution(f"{name} sums to {float(p.sum())}")
    return p


def entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def kl_divergence(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def softmax(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    z = v - v.max()
    e = np.exp(z)
    return e / e.sum()


def informativeness(p_original, p_generated) -> float:
    """Prediction entropy of the generated image plus its probability of the
    original image's argmax class."""
    p = _check_distribution(p_original, "p_original")
    q = _check_distribution(p_generated, "p_generated")
    if p.shape != q.shape:
        raise NotADistribution(f"class counts differ: {p.size} vs {q.size}")
    j = int(np.argmax(p))
    return entropy(q) + float(q[j])


def informativeness_of_set(pairs: Sequence[tuple]) -> float:
    """Mean per-image informativeness over (p_original, p_generated) pairs."""
    if not pairs:
        raise MissingGenerated("no generated images to score")
    return float(np.mean([informativeness(p, q) for p, q in pairs]))


def diversity(embeddings, class_assignments, classes: Sequence[str] | None = None) -> float:
    """Mean per-class KL spread of softmaxed features around the softmaxed
    class-mean feature vector, averaged over classes."""
    emb = np.asarray(embeddings, dtype=float)
    if emb.ndim != 2 or len(class_assignments) != emb.shape[0]:
        raise ValueError("embeddings must be (n, d) aligned with class_assignments")
    names = list(classes) if classes is not None else sorted(set(class_assignments))
    per_class = []
    for cls in names:
        idx = [i for i, c in enumerate(class_assignments) if c == cls]
        if not idx:
            raise EmptyClass(f"class '{cls}' has no images")
        block = emb[idx]
        center = softmax(block.mean(axis=0))
        per_class.append(float(np.mean([kl_divergence(softmax(v), center) for v in block])))
    return float(np.mean(per_class))


def gaussian_kernel(x: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    xx = np.sum(x * x, axis=1)[:, None]
    yy = np.sum(y * y, axis=1)[None, :]
    sq = np.maximum(xx + yy - 2.0 * (x @ y.T), 0.0)
    return np.exp(-sq / (2.0 * sigma * sigma))


def median_heuristic_sigma(originals, generated) -> float:
    """Median pairwise Euclidean distance over the union of both sets."""
    pts = np.vstack([np.asarray(originals, float), np.asarray(generated, float)])
    n = pts.shape[0]
    sq = np.maximum(
        np.sum(pts * pts, axis=1)[:, None] + np.sum(pts * pts, axis=1)[None, :]
        - 2.0 * (pts @ pts.T), 0.0)
    iu = np.triu_indices(n, k=1)
    med = float(np.median(np.sqrt(sq[iu])))
    return med if med > 0 else 1.0


def cmmd(originals, generated, sigma: float | None = None) -> CmmdResult:
    """Unbiased Gaussian-kernel MMD between original and generated embeddings.

    sigma=None selects the median heuristic over the union of both sets.
    """
    x = np.asarray(originals, dtype=float)
    y = np.asarray(generated, dtype=float)
    n, m = x.shape[0], y.shape[0]
    if n < 2 or m < 2:
        raise TooFewSamples(f"need >= 2 samples per set, got N={n}, M={m}")
    if sigma is None:
        sigma = median_heuristic_sigma(x, y)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    kxx = gaussian_kernel(x, x, sigma)
    kyy = gaussian_kernel(y, y, sigma)
    kxy = gaussian_kernel(x, y, sigma)
    sq = (
        (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
        - 2.0 * kxy.sum() / (n * m)
        + (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
    )
    sq = float(sq)
    clamped = sq < 0
    return CmmdResult(value=float(np.sqrt(max(sq, 0.0))), squared=sq,
                      clamped=clamped, sigma=float(sigma))


def metric_snapshot(corpus: Corpus, iteration: int, sigma: float | None = None) -> MetricPoint:
    """All three metrics over the generated images with iteration <= `iteration`.

    Informativeness scores each generated image's prediction against its own
    class index (the class semantic it must maintain); predictions must be
    present on every generated image in range.
    """
    gen = [im for im in corpus.images if im.kind == GENERATED and im.iteration <= iteration]
    if not gen:
        raise MissingGenerated(f"no generated images at or before iteration {iteration}")
    missing = [im.id for im in gen if im.prediction is None]
    if missing:
        raise MissingPredictions(f"{len(missing)} generated image(s) lack predictions, e.g. '{missing[0]}'")

    class_index = {c: i for i, c in enumerate(corpus.classes)}
    inf_scores = []
    for im in gen:
        q = _check_distribution(np.array(im.prediction), f"prediction of {im.id}")
        inf_scores.append(entropy(q) + float(q[class_index[im.class_name]]))
    inf = float(np.mean(inf_scores))

    div = diversity(np.array([im.embedding for im in gen]),
                    [im.class_name for im in gen])

    originals = np.array([im.embedding for im in corpus.images if im.kind == ORIGINAL])
    dist = cmmd(originals, np.array([im.embedding for im in gen]), sigma=sigma)
    return MetricPoint(iteration=iteration, informativeness=inf, diversity=div,
                       distance=dist.value, generated_count=len(gen))


def save_timeline(points: Sequence[MetricPoint], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in points:
            fh.write(p.to_json() + "\n")


def render_timeline_svg(points: Sequence[MetricPoint], width: int = 640, height: int = 320) -> str:
    """Minimal standalone SVG line chart of the three metrics over iterations."""
    pad = 40
    series = {
        "informativeness": ([p.informativeness for p in points], "#1f77b4"),
        "diversity": ([p.diversity for p in points], "#2ca02c"),
        "distance": ([p.distance for p in points], "#d62728"),
    }
    xs = [p.iteration for p in points]
    lo = min(min(v) for v, _ in series.values())
    hi = max(max(v) for v, _ in series.values())
    span = (hi - lo) or 1.0
    xspan = (max(xs) - min(xs)) or 1

    def sx(x):
        return pad + (x - min(xs)) / xspan * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - lo) / span * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    for i, (name, (vals, color)) in enumerate(series.items()):
        pts = " ".join(f"{sx(x):.1f},{sy(v):.1f}" for x, v in zip(xs, vals))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        parts.append(f'<text x="{pad}" y="{16 + 14 * i}" fill="{color}" font-size="12">{name}</text>')
        for x, v in zip(xs, vals):
            parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(v):.1f}" r="3" fill="{color}"/>')
    parts.append(f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>')
    parts.append("</svg>")
    return "\n".join(parts)
