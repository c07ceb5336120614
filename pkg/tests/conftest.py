from __future__ import annotations

import numpy as np
import pytest

from convrec.fixtures import example_decision_table, movie_catalog
from convrec.model import Catalog


@pytest.fixture
def movies() -> Catalog:
    return movie_catalog()


@pytest.fixture
def demo_table():
    return example_decision_table()


@pytest.fixture
def restaurants() -> Catalog:
    rows = {
        "I1": ("French", "midtown", "high"),
        "I2": ("French", "downtown", "low"),
        "I3": ("Italian", "midtown", "low"),
        "I4": ("Japanese", "downtown", "high"),
        "I5": ("Japanese", "midtown", "high"),
    }
    return Catalog.from_tokens(("cuisine", "location", "price"), rows)


def random_catalog(
    rng: np.random.Generator,
    n_items: int,
    n_features: int,
    domain_size: int,
) -> Catalog:
    """A small catalog with pairwise distinct items, for property tests."""
    n_items = min(n_items, domain_size**n_features)
    rows: dict[str, tuple[str, ...]] = {}
    seen = set()
    while len(rows) < n_items:
        vals = tuple(f"v{int(x)}" for x in rng.integers(domain_size, size=n_features))
        if vals in seen:
            continue
        seen.add(vals)
        rows[f"i{len(rows):02d}"] = vals
    names = tuple(f"f{j}" for j in range(n_features))
    domains = [tuple(f"v{x}" for x in range(domain_size))] * n_features
    return Catalog.from_tokens(names, rows, domains=domains)
