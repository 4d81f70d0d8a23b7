"""datasteer: steer synthetic training-image dataset expansion.

Projects images and content labels into a shared 2D layout with contrastive
learning, tracks per-iteration dataset-quality metrics, and refines
generation prompts from sample-level feedback with an evolutionary loop.
"""

__version__ = "0.1.0"

from .corpus import Corpus, ImageRecord, LabelRecord, load_corpus, save_corpus
from .layout import Layout

__all__ = [
    "Corpus",
    "ImageRecord",
    "LabelRecord",
    "Layout",
    "load_corpus",
    "save_corpus",
    "__version__",
]
