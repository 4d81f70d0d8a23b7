"""2D layout produced by a projection: point id -> (x, y)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .corpus import Corpus
from .errors import IncompleteLayout


@dataclass(frozen=True)
class Layout:
    positions: Mapping[str, tuple[float, float]]

    def __getitem__(self, point_id: str) -> tuple[float, float]:
        return self.positions[point_id]

    def __contains__(self, point_id: str) -> bool:
        return point_id in self.positions

    def __len__(self) -> int:
        return len(self.positions)

    def __iter__(self) -> Iterator[str]:
        return iter(self.positions)

    def coords(self, ids) -> np.ndarray:
        return np.array([self.positions[i] for i in ids], dtype=float)

    def normalized(self) -> "Layout":
        """Rescale to unit RMS radius (rendering convention; no centering)."""
        mat = np.array(list(self.positions.values()), dtype=float)
        rms = float(np.sqrt(np.mean(np.sum(mat * mat, axis=1))))
        if rms < 1e-12:
            return self
        return Layout({k: (x / rms, y / rms) for k, (x, y) in self.positions.items()})


def check_layout(layout: Layout, corpus: Corpus) -> None:
    """Raise IncompleteLayout unless every corpus point has finite coords."""
    missing = [pid for pid in corpus.point_ids() if pid not in layout]
    if missing:
        raise IncompleteLayout(f"{len(missing)} point(s) missing, e.g. '{missing[0]}'")
    for pid, (x, y) in layout.positions.items():
        if not (math.isfinite(x) and math.isfinite(y)):
            raise IncompleteLayout(f"non-finite coordinates for '{pid}'")


def save_layout(layout: Layout, corpus: Corpus, path: str | Path) -> None:
    """Line-delimited JSON {id, modality, x, y}, sorted by id."""
    with open(path, "w", encoding="utf-8") as fh:
        for pid in sorted(layout.positions):
            x, y = layout.positions[pid]
            fh.write(json.dumps({"id": pid, "modality": corpus.modality_of(pid),
                                 "x": x, "y": y}) + "\n")


def load_layout(path: str | Path) -> Layout:
    positions = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            rec = json.loads(raw)
            positions[rec["id"]] = (float(rec["x"]), float(rec["y"]))
    return Layout(positions)
