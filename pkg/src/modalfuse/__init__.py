"""Multimodal interview classification pipeline.

Subpackages follow the pipeline order: ``corpus`` (sessions, labels,
synthetic generation), ``chunking`` (data formats), ``embeddings``
(providers and normalization), ``nn`` (feature extractors and heads),
``svm`` (SMO classifier), ``fusion`` (three fusion levels), ``metrics``
(evaluation), and ``harness`` (config-driven runs and the CLI).
"""

from . import chunking, corpus, embeddings, errors, fusion, harness, metrics, nn, svm

__version__ = "0.1.0"

__all__ = [
    "chunking",
    "corpus",
    "embeddings",
    "errors",
    "fusion",
    "harness",
    "metrics",
    "nn",
    "svm",
    "__version__",
]
