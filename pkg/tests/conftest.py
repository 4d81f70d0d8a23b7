import numpy as np
import pytest

from datasteer.corpus import ImageRecord, LabelRecord, build_corpus


def random_corpus(seed=0, n_images=20, n_labels=5, dim=8, n_classes=2,
                  labels_per_image=2, with_predictions=False, generated_frac=0.0):
    """Small random corpus for unit tests."""
    rng = np.random.default_rng(seed)
    classes = [f"cls{c}" for c in range(n_classes)]
    images = []
    n_generated = int(round(n_images * generated_frac))
    for j in range(n_images):
        pred = None
        if with_predictions:
            raw = rng.random(n_classes) + 0.05
            pred = tuple(raw / raw.sum())
        generated = j >= n_images - n_generated
        images.append(ImageRecord(
            id=f"i{j:03d}", class_name=classes[j % n_classes],
            kind="generated" if generated else "original",
            iteration=1 if generated else 0,
            embedding=tuple(rng.normal(size=dim)), prediction=pred))
    labels = [LabelRecord(id=f"l{j}", text=f"tag{j}", embedding=tuple(rng.normal(size=dim)))
              for j in range(n_labels)]
    edges = []
    for j in range(n_images):
        picks = rng.choice(n_labels, size=min(labels_per_image, n_labels), replace=False)
        for l in picks:
            edges.append((f"i{j:03d}", f"l{l}", None))
    return build_corpus(images, labels, edges, classes=classes, dimension=dim)


def many_to_one_corpus(seed=0, n_labels=3, images_per_label=5, dim=6):
    """Corpus where every image has exactly one label (plus one unlabeled)."""
    rng = np.random.default_rng(seed)
    images, labels, edges = [], [], []
    for l in range(n_labels):
        labels.append(LabelRecord(id=f"l{l}", text=f"tag{l}",
                                  embedding=tuple(rng.normal(size=dim))))
        for j in range(images_per_label):
            iid = f"i{l}_{j}"
            images.append(ImageRecord(id=iid, class_name="cls0", kind="original",
                                      iteration=0, embedding=tuple(rng.normal(size=dim))))
            edges.append((iid, f"l{l}", float(rng.random() + 0.1)))
    images.append(ImageRecord(id="i_free", class_name="cls0", kind="original",
                              iteration=0, embedding=tuple(rng.normal(size=dim))))
    return build_corpus(images, labels, edges, classes=["cls0"], dimension=dim)


@pytest.fixture
def small_corpus():
    return random_corpus(seed=1)


@pytest.fixture
def predicted_corpus():
    return random_corpus(seed=2, with_predictions=True, generated_frac=0.5)
