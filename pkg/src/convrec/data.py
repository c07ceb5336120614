"""Catalog and ratings ingestion plus synthetic catalog generation.

Textual formats:
  * tabular catalog — header line ``item<sep>feature...``, one item per line;
  * triples — one ``item<sep>feature<sep>value`` per line, possibly several
    or none per (item, feature), resolved by `sanitize`;
  * ratings — ``user<sep>item<sep>rating`` lines, extra columns ignored.

Separators are configurable; ratings default to ``::`` for MovieLens-style
files, everything else to tabs.

Synthetic catalogs are shaped by item count, feature count, and per-feature
distinct-value targets; value assignment is uniform or Zipf-skewed (default
Zipf, exponent 1.0 — real feature-value frequencies are skewed, and uniform
assignment makes many-feature catalogs unrealistically easy to partition).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import Catalog

log = logging.getLogger(__name__)


class ShapeError(ValueError):
    """The requested catalog shape cannot be generated."""


class IngestionError(ValueError):
    """Malformed input file; carries a line number when one applies."""

    def __init__(self, reason: str, line: int | None = None) -> None:
        super().__init__(reason if line is None else f"line {line}: {reason}")
        self.line = line


@dataclass(frozen=True)
class CatalogShape:
    items: int
    features: int
    values_per_feature: tuple[int, ...]
    distribution: str = "zipf"  # "zipf" | "uniform"
    zipf_exponent: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.features < 1 or len(self.values_per_feature) != self.features:
            raise ShapeError("values_per_feature must list one target per feature")
        if self.items < 1:
            raise ShapeError("need at least one item")
        if any(k < 1 for k in self.values_per_feature):
            raise ShapeError("every feature needs at least one value")
        if any(k > self.items for k in self.values_per_feature):
            raise ShapeError("distinct-value target exceeds the item count")
        if self.distribution not in ("zipf", "uniform"):
            raise ShapeError(f"unknown distribution {self.distribution!r}")

    @classmethod
    def uniform_values(
        cls, items: int, features: int, values: int, **kw
    ) -> "CatalogShape":
        return cls(items, features, (values,) * features, **kw)


@dataclass(frozen=True)
class RatingRecord:
    user: str
    item: str
    rating: float


def _value_probs(k: int, shape: CatalogShape) -> np.ndarray:
    if shape.distribution == "uniform":
        return np.full(k, 1.0 / k)
    weights = 1.0 / np.arange(1, k + 1, dtype=float) ** shape.zipf_exponent
    return weights / weights.sum()


def generate_catalog(shape: CatalogShape) -> Catalog:
    """Deterministic per seed; every value appears, no two items coincide."""
    log_space = sum(np.log(float(k)) for k in shape.values_per_feature)
    if log_space < np.log(shape.items):
        raise ShapeError(
            f"{shape.items} distinct items do not fit in the value space"
        )
    rng = np.random.default_rng(shape.seed)
    names = tuple(f"f{i}" for i in range(shape.features))
    columns = []
    for i, k in enumerate(shape.values_per_feature):
        col = rng.choice(k, size=shape.items, p=_value_probs(k, shape))
        # guarantee coverage of all k values
        spots = rng.choice(shape.items, size=k, replace=False)
        col[spots] = rng.permutation(k)
        columns.append(col)
    rows = np.stack(columns, axis=1)

    seen: dict[tuple[int, ...], int] = {}
    duplicates = []
    for r in range(shape.items):
        key = tuple(int(v) for v in rows[r])
        if key in seen:
            duplicates.append(r)
        else:
            seen[key] = r
    for r in duplicates:
        for _ in range(1000):
            fresh = tuple(
                int(rng.choice(k, p=_value_probs(k, shape)))
                for k in shape.values_per_feature
            )
            if fresh not in seen:
                seen[fresh] = r
                rows[r] = fresh
                break
        else:
            raise ShapeError("could not de-duplicate items within retry bound")

    width = len(str(shape.items))
    tokens = {
        f"i{r:0{width}d}": tuple(f"v{int(v):03d}" for v in rows[r])
        for r in range(shape.items)
    }
    domains = [
        tuple(f"v{j:03d}" for j in range(k)) for k in shape.values_per_feature
    ]
    return Catalog.from_tokens(names, tokens, domains=domains)


@dataclass(frozen=True)
class SanitizeReport:
    catalog: Catalog
    filled_nulls: int
    collapsed_multi: int
    dropped_duplicates: tuple[str, ...]


def sanitize(
    feature_names: Sequence[str],
    raw: Mapping[str, Sequence[Sequence[str]]],
    seed: int = 0,
) -> SanitizeReport:
    """Resolve nulls and multi-values into complete single-valued items.

    A null slot (empty candidate list) gets a value drawn from the feature's
    observed domain; a multi-valued slot keeps one of its own candidates.
    Draws are seeded; items that end up identical to an earlier item (by id
    order) are dropped and reported. A feature observed nowhere is an error.
    """
    names = tuple(feature_names)
    p = len(names)
    observed: list[set[str]] = [set() for _ in range(p)]
    for iid, slots in raw.items():
        if len(slots) != p:
            raise IngestionError(f"item {iid!r} has {len(slots)} slots, want {p}")
        for i, cands in enumerate(slots):
            observed[i].update(cands)
    for i, dom in enumerate(observed):
        if not dom:
            raise IngestionError(f"feature {names[i]!r} has no observed values")

    rng = np.random.default_rng(seed)
    domains = [tuple(sorted(dom)) for dom in observed]
    filled = 0
    collapsed = 0
    resolved: dict[str, tuple[str, ...]] = {}
    for iid in sorted(raw):
        row = []
        for i, cands in enumerate(raw[iid]):
            pool = sorted(set(cands))
            if not pool:
                row.append(domains[i][int(rng.integers(len(domains[i])))])
                filled += 1
                log.info("item %s: filled null %s with %s", iid, names[i], row[-1])
            elif len(pool) > 1:
                row.append(pool[int(rng.integers(len(pool)))])
                collapsed += 1
                log.info("item %s: collapsed %s to %s", iid, names[i], row[-1])
            else:
                row.append(pool[0])
        resolved[iid] = tuple(row)

    seen: dict[tuple[str, ...], str] = {}
    dropped = []
    for iid in sorted(resolved):
        row = resolved[iid]
        if row in seen:
            dropped.append(iid)
        else:
            seen[row] = iid
    for iid in dropped:
        del resolved[iid]
    if not resolved:
        raise IngestionError("no items left after de-duplication")
    catalog = Catalog.from_tokens(names, resolved, domains=domains)
    return SanitizeReport(catalog, filled, collapsed, tuple(dropped))


def select_features(catalog: Catalog, count: int, order: str = "most-values") -> Catalog:
    """Project a rich catalog onto its `count` widest or narrowest features.

    "most-values" keeps the features with the highest distinct-value counts
    (few-features/many-values shape); "few-values" keeps the lowest
    (many-features/few-values shape). Items that coincide after the
    projection are dropped, keeping the lexicographically first id.
    """
    if order not in ("most-values", "few-values"):
        raise ShapeError(f"unknown feature order {order!r}")
    if not 1 <= count <= catalog.schema.p:
        raise ShapeError(f"cannot keep {count} of {catalog.schema.p} features")
    counts = [
        (len({it.values[s] for it in catalog.items}), s)
        for s in range(catalog.schema.p)
    ]
    reverse = order == "most-values"
    ranked = sorted(counts, key=lambda cs: (-cs[0] if reverse else cs[0], cs[1]))
    slots = sorted(s for _, s in ranked[:count])

    names = tuple(catalog.schema.feature_names[s] for s in slots)
    seen: set[tuple[int, ...]] = set()
    rows: dict[str, tuple[str, ...]] = {}
    dropped = 0
    for iid, item in zip(catalog.ids, catalog.items):
        key = tuple(item.values[s] for s in slots)
        if key in seen:
            dropped += 1
            continue
        seen.add(key)
        rows[iid] = tuple(catalog.schema.token(s, item.values[s]) for s in slots)
    if dropped:
        log.info("feature projection dropped %d duplicate items", dropped)
    return Catalog.from_tokens(names, rows)


def store_catalog(catalog: Catalog, path: str | Path, sep: str = "\t") -> None:
    lines = ["item" + sep + sep.join(catalog.schema.feature_names)]
    for iid, item in zip(catalog.ids, catalog.items):
        toks = (catalog.schema.token(s, v) for s, v in enumerate(item.values))
        lines.append(iid + sep + sep.join(toks))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_catalog(
    path: str | Path,
    fmt: str = "tabular",
    sep: str = "\t",
    seed: int = 0,
) -> Catalog:
    """Parse and sanitize a catalog file (`fmt` is "tabular" or "triples")."""
    text = Path(path).read_text(encoding="utf-8")
    if fmt == "tabular":
        raw, names = _parse_tabular(text, sep)
    elif fmt == "triples":
        raw, names = _parse_triples(text, sep)
    else:
        raise IngestionError(f"unknown catalog format {fmt!r}")
    if not raw:
        raise IngestionError("catalog file holds no items")
    return sanitize(names, raw, seed=seed).catalog


def _parse_tabular(
    text: str, sep: str
) -> tuple[dict[str, list[list[str]]], tuple[str, ...]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return {}, ()
    header = lines[0].split(sep)
    if len(header) < 2 or header[0] != "item":
        raise IngestionError("header must be 'item' followed by feature names", 1)
    names = tuple(header[1:])
    raw: dict[str, list[list[str]]] = {}
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split(sep)
        if len(parts) != len(header):
            raise IngestionError(
                f"expected {len(header)} columns, found {len(parts)}", lineno
            )
        iid = parts[0]
        if iid in raw:
            raise IngestionError(f"duplicate item id {iid!r}", lineno)
        raw[iid] = [[tok] if tok else [] for tok in parts[1:]]
    return raw, names


def _parse_triples(
    text: str, sep: str
) -> tuple[dict[str, list[list[str]]], tuple[str, ...]]:
    triples = []
    names: list[str] = []
    for lineno, ln in enumerate(text.splitlines(), start=1):
        if not ln.strip():
            continue
        parts = ln.split(sep)
        if len(parts) != 3:
            raise IngestionError("expected item, feature, value", lineno)
        item, feature, value = parts
        if feature not in names:
            names.append(feature)
        triples.append((item, feature, value))
    raw: dict[str, list[list[str]]] = {}
    index = {f: i for i, f in enumerate(names)}
    for item, feature, value in triples:
        slots = raw.setdefault(item, [[] for _ in names])
        while len(slots) < len(names):
            slots.append([])
        slots[index[feature]].append(value)
    for slots in raw.values():
        while len(slots) < len(names):
            slots.append([])
    return raw, tuple(names)


def load_ratings(path: str | Path, sep: str = "::") -> list[RatingRecord]:
    """Parse (user, item, rating) lines; extra trailing columns are ignored."""
    records = []
    for lineno, ln in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not ln.strip():
            continue
        parts = ln.split(sep)
        if len(parts) < 3:
            raise IngestionError("expected user, item, rating", lineno)
        try:
            rating = float(parts[2])
        except ValueError:
            raise IngestionError(f"bad rating {parts[2]!r}", lineno) from None
        records.append(RatingRecord(parts[0], parts[1], rating))
    log.info(
        "loaded %d ratings by %d users over %d items",
        len(records),
        len({r.user for r in records}),
        len({r.item for r in records}),
    )
    return records


def filter_ratings(
    records: Iterable[RatingRecord], catalog: Catalog
) -> tuple[list[RatingRecord], int]:
    """Keep ratings of catalog items; returns (kept, dropped count)."""
    known = set(catalog.ids)
    records = list(records)
    kept = [r for r in records if r.item in known]
    dropped = len(records) - len(kept)
    if dropped:
        log.info("dropped %d ratings of unknown items", dropped)
    return kept, dropped


def generate_ratings(
    catalog: Catalog,
    n_users: int,
    ratings_per_user: int,
    seed: int = 0,
    scale: tuple[int, int] = (1, 5),
) -> list[RatingRecord]:
    """Synthetic ratings: each user rates a random item subset uniformly."""
    if ratings_per_user > len(catalog):
        raise ShapeError("ratings_per_user exceeds the catalog size")
    rng = np.random.default_rng(seed)
    lo, hi = scale
    out = []
    width = len(str(n_users))
    for u in range(n_users):
        items = rng.choice(len(catalog), size=ratings_per_user, replace=False)
        values = rng.integers(lo, hi + 1, size=ratings_per_user)
        user = f"u{u:0{width}d}"
        for row, val in zip(items, values):
            out.append(RatingRecord(user, catalog.ids[int(row)], float(val)))
    return out


def store_ratings(records: Iterable[RatingRecord], path: str | Path, sep: str = "::") -> None:
    lines = [f"{r.user}{sep}{r.item}{sep}{r.rating:g}" for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
