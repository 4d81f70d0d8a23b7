"""Synthetic many-to-many benchmark: planted class clusters with
class-specific and shared content labels, used to compare projection
methods head to head without any external model dependencies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, GENERATED, ImageRecord, LabelRecord, ORIGINAL, build_corpus
from .evaluate import EvalReport, compare
from .projection import ContrastiveProjector, OrderPreservingProjector


def make_benchmark_corpus(seed: int = 0, n_classes: int = 10,
                          images_per_class: int = 100, labels_per_class: int = 5,
                          n_shared_labels: int = 10, dim: int = 32,
                          generated_frac: float = 0.3) -> Corpus:
    """Planted corpus: each class is a Gaussian blob around a random unit
    center; its labels sit near the center; every image links to 2-3 class
    labels and, with some probability, one shared label. Predictions are a
    softmax over distances to the class centers."""
    rng = np.random.Generator(np.random.PCG64(seed))
    classes = [f"c{c}" for c in range(n_classes)]
    centers = rng.standard_normal((n_classes, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    labels: list[LabelRecord] = []
    class_label_ids: list[list[str]] = []
    for c in range(n_classes):
        ids = []
        for j in range(labels_per_class):
            lid = f"l_c{c}_{j}"
            emb = centers[c] + 0.25 * rng.standard_normal(dim)
            labels.append(LabelRecord(id=lid, text=f"tag{c}{j}", embedding=tuple(emb)))
            ids.append(lid)
        class_label_ids.append(ids)
    shared_ids = []
    for j in range(n_shared_labels):
        lid = f"l_shared_{j}"
        emb = 0.6 * rng.standard_normal(dim)
        labels.append(LabelRecord(id=lid, text=f"shared{j}", embedding=tuple(emb)))
        shared_ids.append(lid)

    images: list[ImageRecord] = []
    edges: list[tuple[str, str, float | None]] = []
    n_generated = int(round(images_per_class * generated_frac))
    for c, cls in enumerate(classes):
        for i in range(images_per_class):
            iid = f"i_c{c}_{i:03d}"
            emb = centers[c] + 0.35 * rng.standard_normal(dim)
            dists = np.linalg.norm(centers - emb[None, :], axis=1)
            pred = np.exp(-dists / 0.25)
            pred = pred / pred.sum()
            generated = i >= images_per_class - n_generated
            images.append(ImageRecord(
                id=iid, class_name=cls,
                kind=GENERATED if generated else ORIGINAL,
                iteration=1 if generated else 0,
                embedding=tuple(emb), prediction=tuple(pred)))
            n_links = int(rng.integers(2, 4))
            for lid in rng.choice(np.array(class_label_ids[c]), size=n_links, replace=False):
                edges.append((iid, str(lid), None))
            if rng.random() < 0.4:
                edges.append((iid, str(rng.choice(np.array(shared_ids))), None))
    return build_corpus(images, labels, edges, classes=classes, dimension=dim)


@dataclass(frozen=True)
class BenchmarkResult:
    report: EvalReport
    inter_dominance: dict  # column -> bool (contrastive > order baseline)
    intra_gap: dict        # column -> |contrastive - image-only|

    @property
    def dominant(self) -> bool:
        return all(self.inter_dominance.values())


def run_benchmark(seed: int = 0, epochs: int = 30, baseline_epochs: int = 200,
                  k: int = 30, corpus: Corpus | None = None,
                  **corpus_kwargs) -> BenchmarkResult:
    """Train the contrastive projector, the distance-order baseline, and an
    image-only contrastive run on one benchmark corpus; report the standard
    five measures per method plus the dominance checks."""
    if corpus is None:
        corpus = make_benchmark_corpus(seed=seed, **corpus_kwargs)
    contrastive = ContrastiveProjector(epochs=epochs, seed=seed).fit_transform(corpus)
    baseline = OrderPreservingProjector(epochs=baseline_epochs, seed=seed).fit_transform(corpus)
    image_only = ContrastiveProjector(epochs=epochs, seed=seed,
                                      loss_kinds=("II",)).fit_transform(corpus)
    report = compare({"contrastive": contrastive, "order-baseline": baseline,
                      "image-only": image_only}, corpus, k=k,
                     dataset=f"benchmark-seed{seed}")
    ours = report.rows["contrastive"]
    base = report.rows["order-baseline"]
    img = report.rows["image-only"]
    dominance = {col: ours[col] > base[col] for col in ("ims", "t_inter", "c_inter")}
    intra_gap = {col: abs(ours[col] - img[col]) for col in ("t_intra", "c_intra")}
    return BenchmarkResult(report=report, inter_dominance=dominance, intra_gap=intra_gap)
