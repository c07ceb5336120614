"""Small embedded demo inputs so every documented example runs offline."""

from __future__ import annotations

from .model import Catalog
from .reduction import DecisionTable

MOVIE_FEATURES = ("director", "starring", "genre")

MOVIE_ROWS = {
    "Forrest Gump": ("Spielberg", "Hanks", "historical"),
    "Jaws": ("Spielberg", "Dreyfuss", "action"),
    "Sully": ("Eastwood", "Hanks", "action"),
}


def movie_catalog() -> Catalog:
    """Three movies over director/starring/genre; two questions suffice."""
    return Catalog.from_tokens(MOVIE_FEATURES, MOVIE_ROWS)


def example_decision_table() -> DecisionTable:
    """Eight condition rows over three tests; the best tree has depth 3.

    Decision labels repeat across rows, so reduction-grade uses require
    :func:`convrec.reduction.dedupe_decisions` first.
    """
    rows = (
        (False, False, False),
        (False, False, True),
        (False, True, False),
        (False, True, True),
        (True, False, False),
        (True, True, False),
        (True, False, True),
        (True, True, True),
    )
    decisions = ("d1", "d1", "d2", "d3", "d4", "d4", "d5", "d5")
    return DecisionTable(tests=("x1", "x2", "x3"), rows=rows, decisions=decisions)
