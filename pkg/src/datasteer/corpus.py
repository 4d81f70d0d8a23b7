"""Corpus data model: images, content labels, embeddings, and the
image-label bipartite containment graph.

The on-disk format is line-delimited JSON with a ``type`` discriminator:
``meta`` (dimension + class list), ``label``, ``image``, ``edge``.
A corpus is immutable after load; adding a generation round produces a new
Corpus via :func:`with_images`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DanglingEdge,
    DimensionMismatch,
    EmptyGraph,
    EmptyModality,
    MalformedRecord,
)

ORIGINAL = "original"
GENERATED = "generated"


@dataclass(frozen=True)
class ImageRecord:
    id: str
    class_name: str
    kind: str  # "original" | "generated"
    iteration: int
    embedding: tuple[float, ...]
    prompt_id: str | None = None
    prediction: tuple[float, ...] | None = None
    caption: str | None = None
    image_path: str | None = None


@dataclass(frozen=True)
class LabelRecord:
    id: str
    text: str
    embedding: tuple[float, ...]
    frequency: int = 0  # degree in the bipartite graph, filled at load


@dataclass(frozen=True)
class BipartiteGraph:
    """Edges (image_id, label_id) -> weight (high-dimensional distance)."""

    edges: tuple[tuple[str, str, float], ...]

    def __post_init__(self):
        seen = set()
        for img, lab, w in self.edges:
            if (img, lab) in seen:
                raise MalformedRecord(0, "edge", f"duplicate edge ({img}, {lab})")
            if w < 0:
                raise MalformedRecord(0, "weight", f"negative weight on ({img}, {lab})")
            seen.add((img, lab))

    def labels_of(self, image_id: str) -> list[str]:
        return sorted(lab for img, lab, _ in self.edges if img == image_id)

    def images_of(self, label_id: str) -> list[str]:
        return sorted(img for img, lab, _ in self.edges if lab == label_id)


@dataclass(frozen=True)
class Corpus:
    images: tuple[ImageRecord, ...]
    labels: tuple[LabelRecord, ...]
    graph: BipartiteGraph
    classes: tuple[str, ...]
    dimension: int

    # Derived lookups, built once in __post_init__.
    _image_index: dict = field(default_factory=dict, repr=False, compare=False)
    _label_index: dict = field(default_factory=dict, repr=False, compare=False)
    _image_labels: dict = field(default_factory=dict, repr=False, compare=False)
    _label_images: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._image_index.update({im.id: im for im in self.images})
        self._label_index.update({la.id: la for la in self.labels})
        img_labels: dict[str, list[str]] = {im.id: [] for im in self.images}
        lab_images: dict[str, list[str]] = {la.id: [] for la in self.labels}
        for img, lab, _ in self.graph.edges:
            img_labels[img].append(lab)
            lab_images[lab].append(img)
        self._image_labels.update({k: sorted(v) for k, v in img_labels.items()})
        self._label_images.update({k: sorted(v) for k, v in lab_images.items()})

    @property
    def n_images(self) -> int:
        return len(self.images)

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def image(self, image_id: str) -> ImageRecord:
        return self._image_index[image_id]

    def label(self, label_id: str) -> LabelRecord:
        return self._label_index[label_id]

    def labels_of(self, image_id: str) -> list[str]:
        return self._image_labels[image_id]

    def images_of(self, label_id: str) -> list[str]:
        return self._label_images[label_id]

    def image_matrix(self) -> np.ndarray:
        return np.array([im.embedding for im in self.images], dtype=float)

    def label_matrix(self) -> np.ndarray:
        return np.array([la.embedding for la in self.labels], dtype=float)

    def point_ids(self) -> list[str]:
        """All point ids, images then labels, each block sorted."""
        return [im.id for im in self.images] + [la.id for la in self.labels]

    def embedding_of(self, point_id: str) -> np.ndarray:
        if point_id in self._image_index:
            return np.asarray(self._image_index[point_id].embedding, dtype=float)
        return np.asarray(self._label_index[point_id].embedding, dtype=float)

    def modality_of(self, point_id: str) -> str:
        return "image" if point_id in self._image_index else "label"

    def with_images(self, new_images: Sequence[ImageRecord],
                    new_edges: Sequence[tuple[str, str, float]]) -> "Corpus":
        """New corpus version with extra images/edges (a generation round)."""
        images = tuple(sorted(self.images + tuple(new_images), key=lambda im: im.id))
        edges = tuple(sorted(self.graph.edges + tuple(new_edges)))
        labels = _recount_frequencies(self.labels, edges)
        return Corpus(images=images, labels=labels, graph=BipartiteGraph(edges),
                      classes=self.classes, dimension=self.dimension)


@dataclass(frozen=True)
class NeighborLists:
    """Per-point k nearest same-modality neighbors, ascending by distance."""

    neighbors: Mapping[str, tuple[str, ...]]
    k: int
    modality: str
    metric: str

    def __getitem__(self, point_id: str) -> tuple[str, ...]:
        return self.neighbors[point_id]


def _recount_frequencies(labels, edges):
    degree: dict[str, int] = {la.id: 0 for la in labels}
    for _, lab, _ in edges:
        degree[lab] += 1
    return tuple(replace(la, frequency=degree[la.id]) for la in labels)


# -- distances -----------------------------------------------------------

def cosine_distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """1 - cosine similarity, rows of `a` against rows of `b`."""
    an = a / np.maximum(np.linalg.norm(a, axis=1, keepdims=True), 1e-12)
    bn = b / np.maximum(np.linalg.norm(b, axis=1, keepdims=True), 1e-12)
    return 1.0 - an @ bn.T


def euclidean_distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    sq = np.maximum(aa + bb - 2.0 * (a @ b.T), 0.0)
    return np.sqrt(sq)


_DISTANCES = {"cosine": cosine_distance_matrix, "euclidean": euclidean_distance_matrix}


def highdim_distance(a: np.ndarray, b: np.ndarray, metric: str = "cosine") -> float:
    d = _DISTANCES[metric](np.atleast_2d(a), np.atleast_2d(b))
    return float(d[0, 0])


# -- operations ----------------------------------------------------------

def knn_graph(corpus: Corpus, k: int, modality: str, metric: str = "cosine") -> NeighborLists:
    """Exact k-nearest-neighbor lists within one modality.

    Ties are broken by lexicographic id order; a point is never its own
    neighbor; lists are clamped to population-1 entries.
    """
    if modality == "image":
        ids = [im.id for im in corpus.images]
        mat = corpus.image_matrix()
    elif modality == "label":
        ids = [la.id for la in corpus.labels]
        mat = corpus.label_matrix()
    else:
        raise ValueError(f"unknown modality {modality!r}")
    n = len(ids)
    if n < 2:
        raise EmptyModality(f"modality '{modality}' has {n} point(s), need >= 2")
    dist = _DISTANCES[metric](mat, mat)
    kk = min(k, n - 1)
    lists: dict[str, tuple[str, ...]] = {}
    for i, pid in enumerate(ids):
        order = sorted((dist[i, j], ids[j]) for j in range(n) if j != i)
        lists[pid] = tuple(nid for _, nid in order[:kk])
    return NeighborLists(neighbors=lists, k=kk, modality=modality, metric=metric)


def label_frequencies(corpus: Corpus) -> dict[str, float]:
    """Label degree / total degree; probabilities sum to 1."""
    if not corpus.graph.edges:
        raise EmptyGraph("corpus has no image-label edges")
    total = len(corpus.graph.edges)
    return {la.id: la.frequency / total for la in corpus.labels}


# -- file format ----------------------------------------------------------

def _require(obj: dict, key: str, line: int):
    if key not in obj:
        raise MalformedRecord(line, key, "missing field")
    return obj[key]


def _check_embedding(vec, dim: int, record_id: str, line: int) -> tuple[float, ...]:
    if not isinstance(vec, list) or not all(isinstance(x, (int, float)) for x in vec):
        raise MalformedRecord(line, "embedding", f"embedding of '{record_id}' is not a number list")
    if len(vec) != dim:
        raise DimensionMismatch(record_id, dim, len(vec))
    emb = tuple(float(x) for x in vec)
    if not all(math.isfinite(x) for x in emb):
        raise MalformedRecord(line, "embedding", f"non-finite value in '{record_id}'")
    return emb


def load_corpus(path: str | Path) -> Corpus:
    """Parse and validate a line-delimited JSON corpus file.

    Records are re-sorted by id so two loads of the same content are equal
    regardless of line order.
    """
    rows: list[tuple[int, dict]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(lineno, "json", str(exc)) from exc
            if not isinstance(obj, dict) or "type" not in obj:
                raise MalformedRecord(lineno, "type", "record must be an object with a 'type'")
            rows.append((lineno, obj))

    metas = [(ln, o) for ln, o in rows if o["type"] == "meta"]
    if len(metas) != 1:
        line = metas[1][0] if len(metas) > 1 else 0
        raise MalformedRecord(line, "meta", f"expected exactly one meta record, found {len(metas)}")
    meta_line, meta = metas[0]
    dim = _require(meta, "dimension", meta_line)
    classes = tuple(_require(meta, "classes", meta_line))
    if not isinstance(dim, int) or dim < 1:
        raise MalformedRecord(meta_line, "dimension", "dimension must be a positive integer")

    labels: dict[str, LabelRecord] = {}
    images: dict[str, ImageRecord] = {}
    raw_edges: list[tuple[int, str, str, float | None]] = []

    for lineno, obj in rows:
        t = obj["type"]
        if t == "meta":
            continue
        if t == "label":
            lid = _require(obj, "id", lineno)
            if lid in labels:
                raise MalformedRecord(lineno, "id", f"duplicate label id '{lid}'")
            emb = _check_embedding(_require(obj, "embedding", lineno), dim, lid, lineno)
            labels[lid] = LabelRecord(id=lid, text=_require(obj, "text", lineno), embedding=emb)
        elif t == "image":
            iid = _require(obj, "id", lineno)
            if iid in images:
                raise MalformedRecord(lineno, "id", f"duplicate image id '{iid}'")
            cls = _require(obj, "class", lineno)
            if cls not in classes:
                raise MalformedRecord(lineno, "class", f"class '{cls}' of '{iid}' not in meta classes")
            kind = _require(obj, "kind", lineno)
            if kind not in (ORIGINAL, GENERATED):
                raise MalformedRecord(lineno, "kind", f"kind must be 'original' or 'generated', got '{kind}'")
            iteration = _require(obj, "iteration", lineno)
            if not isinstance(iteration, int) or iteration < 0:
                raise MalformedRecord(lineno, "iteration", "iteration must be a non-negative integer")
            if kind == ORIGINAL and iteration != 0:
                raise MalformedRecord(lineno, "iteration", f"original image '{iid}' must have iteration 0")
            emb = _check_embedding(_require(obj, "embedding", lineno), dim, iid, lineno)
            pred = obj.get("prediction")
            if pred is not None:
                if len(pred) != len(classes):
                    raise MalformedRecord(lineno, "prediction",
                                          f"'{iid}' has {len(pred)} entries for {len(classes)} classes")
                if abs(sum(pred) - 1.0) > 1e-6:
                    raise MalformedRecord(lineno, "prediction", f"'{iid}' prediction sums to {sum(pred)}")
                pred = tuple(float(p) for p in pred)
            images[iid] = ImageRecord(
                id=iid, class_name=cls, kind=kind, iteration=iteration, embedding=emb,
                prompt_id=obj.get("prompt_id"), prediction=pred,
                caption=obj.get("caption"), image_path=obj.get("image_path"))
        elif t == "edge":
            raw_edges.append((lineno, _require(obj, "image", lineno),
                              _require(obj, "label", lineno), obj.get("weight")))
        else:
            raise MalformedRecord(lineno, "type", f"unknown record type '{t}'")

    edges: list[tuple[str, str, float]] = []
    for lineno, img, lab, weight in raw_edges:
        if img not in images:
            raise DanglingEdge(img)
        if lab not in labels:
            raise DanglingEdge(lab)
        if weight is None:
            weight = highdim_distance(np.array(images[img].embedding),
                                      np.array(labels[lab].embedding))
        if weight < 0:
            raise MalformedRecord(lineno, "weight", f"negative weight on ({img}, {lab})")
        edges.append((img, lab, float(weight)))
    edges.sort()

    label_tuple = _recount_frequencies(
        tuple(labels[k] for k in sorted(labels)), edges)
    return Corpus(
        images=tuple(images[k] for k in sorted(images)),
        labels=label_tuple,
        graph=BipartiteGraph(tuple(edges)),
        classes=classes,
        dimension=dim,
    )


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the normalized line-delimited JSON form (meta, labels, images,
    edges, each block sorted by id). Floats use repr round-trip precision."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"type": "meta", "dimension": corpus.dimension,
                             "classes": list(corpus.classes)}) + "\n")
        for la in corpus.labels:
            fh.write(json.dumps({"type": "label", "id": la.id, "text": la.text,
                                 "embedding": list(la.embedding)}) + "\n")
        for im in corpus.images:
            rec = {"type": "image", "id": im.id, "class": im.class_name,
                   "kind": im.kind, "iteration": im.iteration,
                   "embedding": list(im.embedding)}
            if im.prompt_id is not None:
                rec["prompt_id"] = im.prompt_id
            if im.prediction is not None:
                rec["prediction"] = list(im.prediction)
            if im.caption is not None:
                rec["caption"] = im.caption
            if im.image_path is not None:
                rec["image_path"] = im.image_path
            fh.write(json.dumps(rec) + "\n")
        for img, lab, w in corpus.graph.edges:
            fh.write(json.dumps({"type": "edge", "image": img, "label": lab,
                                 "weight": w}) + "\n")


def build_corpus(images: Iterable[ImageRecord], labels: Iterable[LabelRecord],
                 edges: Iterable[tuple[str, str, float | None]],
                 classes: Sequence[str], dimension: int) -> Corpus:
    """Assemble a validated Corpus from in-memory records (test/bench helper).

    Edge weights default to the cosine distance of the endpoint embeddings.
    """
    images = tuple(sorted(images, key=lambda im: im.id))
    labels = tuple(sorted(labels, key=lambda la: la.id))
    img_idx = {im.id: im for im in images}
    lab_idx = {la.id: la for la in labels}
    resolved = []
    for img, lab, w in edges:
        if img not in img_idx:
            raise DanglingEdge(img)
        if lab not in lab_idx:
            raise DanglingEdge(lab)
        if w is None:
            w = highdim_distance(np.array(img_idx[img].embedding),
                                 np.array(lab_idx[lab].embedding))
        resolved.append((img, lab, float(w)))
    resolved.sort()
    for rec in list(images) + list(labels):
        if len(rec.embedding) != dimension:
            raise DimensionMismatch(rec.id, dimension, len(rec.embedding))
    for im in images:
        if im.class_name not in classes:
            raise MalformedRecord(0, "class", f"class '{im.class_name}' of '{im.id}' unknown")
    return Corpus(images=images,
                  labels=_recount_frequencies(labels, resolved),
                  graph=BipartiteGraph(tuple(resolved)),
                  classes=tuple(classes), dimension=dimension)
