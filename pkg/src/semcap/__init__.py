"""Semantically rewarded sequence captioning at desk scale.

A numpy-backed library covering the whole loop: synthetic catalog corpora
with known labels, an attention encoder-decoder with an attribute embedding,
attribute- and category-level semantic rewards, joint likelihood plus
policy-gradient training, and corpus evaluation metrics.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, SemcapError, ShapeError  # noqa: F401
