"""Executable geometry oracles for the projection's feasibility analysis.

`order_bound` gives the closed-form ceiling on how many distinct
distance orders a plane query point can induce over n sites;
`count_distance_orders` enumerates the realizable orders exactly by walking
the arrangement of perpendicular bisectors with rational arithmetic;
`construct_many_to_one_layout` places a many-to-one corpus so every label's
image distance order is preserved exactly; `verify_order_infeasibility`
packages the counting argument plus a bounded layout search as evidence
that a many-to-many instance cannot be order-preserved.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize

from .corpus import Corpus
from .errors import DegenerateInput, NotManyToOne, TooManyPoints
from .layout import Layout
from .projection import order_loss_terms, order_loss_value_grad

MAX_POINTS = 7


def order_bound(n: int) -> int:
    """Maximum number of distinct strict distance orders of n plane points
    observable from any query location: n(n-1)(n^2-n+2)/8 + 1."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return n * (n - 1) * (n * n - n + 2) // 8 + 1


@dataclass(frozen=True)
class OrderCertificate:
    n: int
    realized_orders: frozenset
    bound: int

    @property
    def realized(self) -> int:
        return len(self.realized_orders)


# -- exact arrangement enumeration ----------------------------------------

def _to_fraction_points(points):
    out = []
    for p in points:
        x, y = p
        out.append((Fraction(x), Fraction(y)))
    return out


def _normalize_line(a: Fraction, b: Fraction, c: Fraction) -> tuple[int, int, int]:
    """Scale (a, b, c) to a canonical coprime integer triple."""
    denom = a.denominator * b.denominator * c.denominator
    ai = int(a * denom)
    bi = int(b * denom)
    ci = int(c * denom)
    g = math.gcd(math.gcd(abs(ai), abs(bi)), abs(ci))
    if g:
        ai, bi, ci = ai // g, bi // g, ci // g
    if ai < 0 or (ai == 0 and bi < 0):
        ai, bi, ci = -ai, -bi, -ci
    return ai, bi, ci


def _bisector(p, q) -> tuple[int, int, int]:
    (px, py), (qx, qy) = p, q
    a = 2 * (qx - px)
    b = 2 * (qy - py)
    c = (px * px + py * py) - (qx * qx + qy * qy)
    return _normalize_line(a, b, c)


def _line_value(line, pt):
    a, b, c = line
    x, y = pt
    return a * x + b * y + c


def _intersect(l1, l2):
    a1, b1, c1 = l1
    a2, b2, c2 = l2
    det = a1 * b2 - a2 * b1
    if det == 0:
        return None
    x = Fraction(b1 * c2 - b2 * c1, det)
    y = Fraction(a2 * c1 - a1 * c2, det)
    return (x, y)


def _angular_cmp(u, w):
    def half(d):
        return 0 if (d[1] > 0 or (d[1] == 0 and d[0] > 0)) else 1

    hu, hw = half(u), half(w)
    if hu != hw:
        return hu - hw
    cross = u[0] * w[1] - u[1] * w[0]
    if cross > 0:
        return -1
    if cross < 0:
        return 1
    return 0


def _sector_samples(vertex, lines_here, other_lines):
    """One interior point per angular sector around an arrangement vertex.

    Shrinks the step until the sample keeps the vertex's sign pattern on all
    lines not through the vertex and sits strictly off every line.
    """
    rays = []
    for a, b, _c in lines_here:
        rays.append((b, -a))
        rays.append((-b, a))
    rays.sort(key=functools.cmp_to_key(_angular_cmp))
    vx, vy = vertex
    base_signs = [(_line_value(ln, vertex) > 0) for ln in other_lines]
    samples = []
    for i in range(len(rays)):
        u = rays[i]
        w = rays[(i + 1) % len(rays)]
        mid = (u[0] + w[0], u[1] + w[1])
        if mid == (0, 0):
            continue
        t = Fraction(1)
        for _ in range(200):
            pt = (vx + t * mid[0], vy + t * mid[1])
            if all(_line_value(ln, pt) != 0 for ln in lines_here + other_lines) and \
               all((_line_value(ln, pt) > 0) == s for ln, s in zip(other_lines, base_signs)):
                samples.append(pt)
                break
            t /= 2
    return samples


def _slab_samples(lines):
    """Sample points for an all-parallel arrangement: one per slab plus the
    two outer half-planes, walked along the common normal. Lines may carry
    different integer scalings of the shared direction."""
    a, b, _ = lines[0]
    ts = sorted(Fraction(-c, ai * a + bi * b) for ai, bi, c in lines)
    probes = [ts[0] - 1]
    for lo, hi in zip(ts[:-1], ts[1:]):
        probes.append((lo + hi) / 2)
    probes.append(ts[-1] + 1)
    return [(t * a, t * b) for t in probes]


def count_distance_orders(points) -> OrderCertificate:
    """Enumerate every strict distance order of `points` realizable from some
    plane location (ties excluded), via the bisector arrangement.

    Coordinates are taken at their exact rational value, so the enumeration
    is exact for degenerate configurations (collinear points, concurrent
    bisectors) too.
    """
    pts = _to_fraction_points(points)
    n = len(pts)
    if n > MAX_POINTS:
        raise TooManyPoints(f"at most {MAX_POINTS} points supported, got {n}")
    if len(set(pts)) != n:
        raise DegenerateInput("duplicate points")
    if n == 1:
        return OrderCertificate(n=1, realized_orders=frozenset({(0,)}), bound=order_bound(1))

    lines = sorted({_bisector(pts[i], pts[j])
                    for i in range(n) for j in range(i + 1, n)})

    def direction(line):
        a, b, _ = line
        g = math.gcd(abs(a), abs(b))
        return (a // g, b // g)

    all_parallel = len({direction(ln) for ln in lines}) == 1
    if all_parallel:
        samples = _slab_samples(lines)
    else:
        vertices = set()
        for i in range(len(lines)):
            for j in range(i + 1, len(lines)):
                v = _intersect(lines[i], lines[j])
                if v is not None:
                    vertices.add(v)
        samples = []
        for v in sorted(vertices):
            here = [ln for ln in lines if _line_value(ln, v) == 0]
            other = [ln for ln in lines if _line_value(ln, v) != 0]
            samples.extend(_sector_samples(v, here, other))

    orders = set()
    for q in samples:
        qx, qy = q
        d = [((qx - px) ** 2 + (qy - py) ** 2, i) for i, (px, py) in enumerate(pts)]
        d.sort()
        for (d1, _), (d2, _) in zip(d[:-1], d[1:]):
            if d1 == d2:
                raise AssertionError("tie at an off-bisector sample; arrangement bug")
        orders.add(tuple(i for _, i in d))
    return OrderCertificate(n=n, realized_orders=frozenset(orders), bound=order_bound(n))


# -- constructive many-to-one layout ---------------------------------------

HUB_SEPARATION = 4.0  # times the maximum within-label radius (1.0)
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def construct_many_to_one_layout(corpus: Corpus) -> Layout:
    """Order-preserving layout for a corpus where each image has at most one
    label: labels become well-separated hubs and each label's images sit
    around their hub at radii increasing with the stored high-dimensional
    distance."""
    offenders = [im.id for im in corpus.images if len(corpus.labels_of(im.id)) > 1]
    if offenders:
        raise NotManyToOne(f"image '{offenders[0]}' has multiple labels")

    weights = {(img, lab): w for img, lab, w in corpus.graph.edges}
    positions: dict[str, tuple[float, float]] = {}
    for i, la in enumerate(corpus.labels):
        hx, hy = HUB_SEPARATION * (i + 1), 0.0
        positions[la.id] = (hx, hy)
        members = sorted(corpus.images_of(la.id),
                         key=lambda img: (weights[(img, la.id)], img))
        m = len(members)
        for rank, img in enumerate(members):
            radius = (rank + 1) / m
            angle = rank * GOLDEN_ANGLE
            positions[img] = (hx + radius * math.cos(angle),
                              hy + radius * math.sin(angle))
    far_y = 10.0
    for j, im in enumerate(corpus.images):
        if im.id not in positions:  # unlabeled images play no role in the objective
            positions[im.id] = (float(j), far_y)
    return Layout(positions)


# -- infeasibility evidence -------------------------------------------------

def adversarial_permutation_corpus(n_images: int = 4, dim: int = 4) -> Corpus:
    """Bipartite instance demanding every one of the n! image orders: one
    label per permutation, edge weights encoding that permutation as the
    label's distance order. For n=4 that asks for 24 orders where the plane
    realizes at most 22."""
    import itertools

    from .corpus import ImageRecord, LabelRecord, build_corpus

    rng = np.random.Generator(np.random.PCG64(7))
    images = [ImageRecord(id=f"i{j}", class_name="x", kind="original", iteration=0,
                          embedding=tuple(rng.standard_normal(dim)))
              for j in range(n_images)]
    labels = []
    edges = []
    for p, perm in enumerate(itertools.permutations(range(n_images))):
        lid = f"perm{p:03d}"
        labels.append(LabelRecord(id=lid, text=lid,
                                  embedding=tuple(rng.standard_normal(dim))))
        for position, img_idx in enumerate(perm):
            edges.append((f"i{img_idx}", lid, float(position + 1)))
    return build_corpus(images, labels, edges, classes=["x"], dimension=dim)


@dataclass(frozen=True)
class InfeasibilityReport:
    """Bound comparison plus bounded search residuals. The search half is
    evidence, not proof: a nonzero floor over finitely many trials."""

    n_images: int
    demanded_orders: int
    bound: int
    certified_infeasible: bool
    trials: int
    residuals: tuple[float, ...]
    min_residual: float | None
    evidence_only: bool = True


def demanded_order_count(corpus: Corpus) -> int:
    """Distinct full-image distance orders demanded by labels connected to
    every image (partial-order labels are not counted)."""
    weights = {(img, lab): w for img, lab, w in corpus.graph.edges}
    n_img = corpus.n_images
    orders = set()
    for la in corpus.labels:
        members = corpus.images_of(la.id)
        if len(members) != n_img:
            continue
        ranked = tuple(sorted(members, key=lambda img: (weights[(img, la.id)], img)))
        orders.add(ranked)
    return len(orders)


def search_layout_residual(corpus: Corpus, seed: int, maxiter: int = 200) -> float:
    """Best order-loss found by one bounded quasi-Newton run from a random
    unit-box layout.

    Each coordinate gets its own slightly jittered box: with shared bounds
    the optimizer can pin several points onto the same corner, and exactly
    coincident points zero the objective through ties without preserving
    any order. Distinct bounds make clamping collisions impossible.
    """
    terms = order_loss_terms(corpus)
    n = len(terms.point_ids)
    rng = np.random.Generator(np.random.PCG64(seed))
    x0 = rng.uniform(-1.0, 1.0, size=(n, 2))
    bounds = [(-1.0 - 1e-3 * rng.random(), 1.0 + 1e-3 * rng.random())
              for _ in range(2 * n)]

    def objective(flat):
        value, grad = order_loss_value_grad(flat.reshape(n, 2), terms)
        return value, grad.ravel()

    res = minimize(objective, x0.ravel(), jac=True, method="L-BFGS-B",
                   bounds=bounds, options={"maxiter": maxiter})
    return float(res.fun)


def verify_order_infeasibility(corpus: Corpus, trials: int = 100, seed: int = 0) -> InfeasibilityReport:
    """Check whether the corpus demands more distance orders than the plane
    can realize, then probe with seeded layout searches.

    Many-to-one corpora short-circuit to the constructive layout (residual
    exactly 0, nothing infeasible)."""
    if all(len(corpus.labels_of(im.id)) <= 1 for im in corpus.images):
        layout = construct_many_to_one_layout(corpus)
        terms = order_loss_terms(corpus)
        value, _ = order_loss_value_grad(layout.coords(terms.point_ids), terms, want_grad=False)
        return InfeasibilityReport(n_images=corpus.n_images, demanded_orders=0,
                                   bound=order_bound(corpus.n_images),
                                   certified_infeasible=False, trials=0,
                                   residuals=(float(value),), min_residual=float(value))

    demanded = demanded_order_count(corpus)
    bound = order_bound(corpus.n_images)
    residuals = tuple(search_layout_residual(corpus, seed=seed + t) for t in range(trials))
    return InfeasibilityReport(
        n_images=corpus.n_images, demanded_orders=demanded, bound=bound,
        certified_infeasible=demanded > bound, trials=trials, residuals=residuals,
        min_residual=min(residuals) if residuals else None)
