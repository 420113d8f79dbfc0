"""Dialogue affect annotation, ensemble fusion, and dynamics analysis.

Thin re-export of the compiled core. Everything crosses the boundary as
plain dicts and lists; see the function docstrings for shapes.
"""

from ._core import (
    AnnotationError,
    DataError,
    ProviderError,
    TurnUnfusable,
    __version__,
    fuse_turn,
    median_iqr,
    mock_annotate,
    normalize_label,
    parse_corpus,
    quantile,
    rank_weights,
    run,
    segment_sessions,
)

__all__ = [
    "AnnotationError",
    "DataError",
    "ProviderError",
    "TurnUnfusable",
    "__version__",
    "fuse_turn",
    "median_iqr",
    "mock_annotate",
    "normalize_label",
    "parse_corpus",
    "quantile",
    "rank_weights",
    "run",
    "segment_sessions",
]
