"""Decision tables, binary decision trees, and the catalog embedding.

A decision table maps boolean test combinations (rows) to decision labels; a
BDT evaluates tests one at a time until a decision is certain, and its depth
is the worst-case test count. Minimizing that depth embeds into minimizing
slot-filling questions over a boolean catalog: one item per row, one boolean
feature per test. `verify_reduction` computes both minima independently and
checks they agree; the relabeling maps between the two tree kinds are also
provided for directed tests.

Reduction-grade instances have pairwise distinct, distinctly-labeled rows and
every test true on exactly three of them (`generate_table` produces such
instances; `at_least` relaxes the column count downward only in the >=3
sense). Tables with repeated decision labels are accepted by the depth
computation but must be relabeled (`dedupe_decisions`) before the catalog
embedding, which needs labels as item ids.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import dtree
from .model import Catalog


class ReductionInputError(ValueError):
    """A table violates the invariants required of reduction instances."""


class TableSizeError(ValueError):
    """The table exceeds the row bound for the brute-force depth search."""


class TableFormatError(ValueError):
    """Malformed textual decision table."""

    def __init__(self, line: int, reason: str) -> None:
        super().__init__(f"line {line}: {reason}")
        self.line = line


FALSE_TOKEN = "false"
TRUE_TOKEN = "true"


@dataclass(frozen=True)
class DecisionTable:
    tests: tuple[str, ...]
    rows: tuple[tuple[bool, ...], ...]
    decisions: tuple[str, ...]

    def __post_init__(self) -> None:
        p = len(self.tests)
        if p < 1:
            raise ReductionInputError("a table needs at least one test")
        if len(self.rows) != len(self.decisions):
            raise ReductionInputError("row and decision counts differ")
        if not self.rows:
            raise ReductionInputError("a table needs at least one row")
        if len(self.rows) > 2 ** p:
            raise ReductionInputError(f"more than 2^{p} rows")
        for r in self.rows:
            if len(r) != p:
                raise ReductionInputError("ragged row")

    @property
    def q(self) -> int:
        return len(self.rows)

    @property
    def p(self) -> int:
        return len(self.tests)


@dataclass(frozen=True)
class BdtLeaf:
    decision: str


@dataclass(frozen=True)
class BdtNode:
    test: int
    low: "Bdt"
    high: "Bdt"


Bdt = Union[BdtLeaf, BdtNode]


def bdt_depth(b: Bdt) -> int:
    if isinstance(b, BdtLeaf):
        return 0
    return 1 + max(bdt_depth(b.low), bdt_depth(b.high))


def evaluate_bdt(b: Bdt, row: tuple[bool, ...]) -> str:
    while isinstance(b, BdtNode):
        b = b.high if row[b.test] else b.low
    return b.decision


def dedupe_decisions(t: DecisionTable) -> DecisionTable:
    """Make decision labels distinct by suffixing repeats with their row index."""
    seen: set[str] = set()
    out: list[str] = []
    for i, d in enumerate(t.decisions):
        label = d if d not in seen else f"{d}#{i}"
        seen.add(label)
        out.append(label)
    return DecisionTable(t.tests, t.rows, tuple(out))


def _min_depth_search(t: DecisionTable) -> dict[frozenset[int], tuple[int, int | None]]:
    """Memo of (depth, chosen test) per row subset, filled lazily from the root."""
    memo: dict[frozenset[int], tuple[int, int | None]] = {}

    def rec(rows: frozenset[int]) -> int:
        if rows in memo:
            return memo[rows][0]
        decisions = {t.decisions[r] for r in rows}
        if len(decisions) == 1:
            memo[rows] = (0, None)
            return 0
        best: tuple[int, int | None] = (len(t.tests) + 1, None)
        for test in range(t.p):
            high = frozenset(r for r in rows if t.rows[r][test])
            if not high or len(high) == len(rows):
                continue  # non-splitting test: wasted level, never optimal
            low = rows - high
            d = 1 + max(rec(low), rec(high))
            if d < best[0]:
                best = (d, test)
        if best[1] is None:
            pair = sorted(rows)[:2]
            raise ReductionInputError(
                f"rows {pair[0]} and {pair[1]} are identical but decide differently"
            )
        memo[rows] = best
        return best[0]

    rec(frozenset(range(t.q)))
    return memo


def bdt_min_depth(t: DecisionTable, max_rows: int = 16) -> int:
    """Minimum depth over all BDTs representing the table (brute force, memoized)."""
    if t.q > max_rows:
        raise TableSizeError(f"{t.q} rows exceeds bound {max_rows}")
    memo = _min_depth_search(t)
    return memo[frozenset(range(t.q))][0]


def build_min_depth_bdt(t: DecisionTable, max_rows: int = 16) -> Bdt:
    """A witnessing minimum-depth BDT for the table."""
    if t.q > max_rows:
        raise TableSizeError(f"{t.q} rows exceeds bound {max_rows}")
    memo = _min_depth_search(t)

    def rebuild(rows: frozenset[int]) -> Bdt:
        _, test = memo[rows]
        if test is None:
            return BdtLeaf(t.decisions[min(rows)])
        high = frozenset(r for r in rows if t.rows[r][test])
        return BdtNode(test, rebuild(rows - high), rebuild(high))

    return rebuild(frozenset(range(t.q)))


def check_reduction_instance(t: DecisionTable, require_exact3: bool = True) -> None:
    """Enforce the invariants of reduction-grade instances."""
    if len(set(t.decisions)) != t.q:
        raise ReductionInputError("decisions must be one-one with rows")
    if len(set(t.rows)) != t.q:
        raise ReductionInputError("rows must be pairwise distinct")
    for j, name in enumerate(t.tests):
        trues = sum(1 for r in t.rows if r[j])
        if require_exact3 and trues != 3:
            raise ReductionInputError(f"test {name!r} is true in {trues} rows, not 3")
        if not require_exact3 and trues < 3:
            raise ReductionInputError(f"test {name!r} is true in {trues} rows, under 3")


def table_to_catalog(t: DecisionTable, require_exact3: bool = True) -> Catalog:
    """One boolean item per row: feature j of the row's item is test j's value.

    Decision labels become item ids, so they must be distinct (use
    `dedupe_decisions` first when they are not).
    """
    if len(set(t.decisions)) != t.q:
        raise ReductionInputError("decisions must be distinct to serve as item ids")
    if require_exact3:
        check_reduction_instance(t, require_exact3=True)
    rows = {
        t.decisions[i]: tuple(TRUE_TOKEN if b else FALSE_TOKEN for b in t.rows[i])
        for i in range(t.q)
    }
    return Catalog.from_tokens(
        t.tests, rows, domains=[(FALSE_TOKEN, TRUE_TOKEN)] * t.p
    )


@dataclass(frozen=True)
class ReductionReport:
    table_depth: int
    catalog_depth: int

    @property
    def verified(self) -> bool:
        return self.table_depth == self.catalog_depth


def verify_reduction(
    t: DecisionTable, require_exact3: bool = True, max_rows: int = 16
) -> ReductionReport:
    """Compute the BDT minimum and the question-tree minimum independently.

    Equality of the two minima is the executable content of the embedding:
    each side's optimum relabels into the other's without changing depth.
    """
    table_depth = bdt_min_depth(t, max_rows=max_rows)
    catalog = table_to_catalog(t, require_exact3=require_exact3)
    tree = dtree.build_min_depth(catalog.ids, catalog, max_items=max_rows)
    return ReductionReport(table_depth=table_depth, catalog_depth=dtree.depth(tree))


def bdt_to_question_tree(b: Bdt, catalog: Catalog) -> dtree.DecisionTree:
    """Relabel tests as features and decisions as items (boolean catalogs only)."""
    if isinstance(b, BdtLeaf):
        return dtree.Leaf(b.decision)
    low = bdt_to_question_tree(b.low, catalog)
    high = bdt_to_question_tree(b.high, catalog)
    f = catalog.schema.handle(b.test, FALSE_TOKEN)
    tr = catalog.schema.handle(b.test, TRUE_TOKEN)
    return dtree.Node(b.test, tuple(sorted(((f, low), (tr, high)))))


def question_tree_to_bdt(tree: dtree.DecisionTree, catalog: Catalog) -> Bdt:
    """Inverse relabeling; requires binary nodes over boolean features."""
    if isinstance(tree, dtree.Leaf):
        return BdtLeaf(tree.item)
    children = dict(tree.edges)
    f = catalog.schema.handle(tree.slot, FALSE_TOKEN)
    tr = catalog.schema.handle(tree.slot, TRUE_TOKEN)
    if set(children) != {f, tr}:
        raise ReductionInputError("tree is not binary over boolean features")
    return BdtNode(
        tree.slot,
        question_tree_to_bdt(children[f], catalog),
        question_tree_to_bdt(children[tr], catalog),
    )


def generate_table(
    n_objects: int, n_tests: int, seed: int, at_least: bool = False
) -> DecisionTable:
    """A random reduction-grade instance: each test true on exactly three rows.

    With ``at_least`` a test may select more than three rows. Retries column
    draws until rows are pairwise distinct; infeasible shapes raise.
    """
    if n_objects < 4:
        raise ReductionInputError("need at least 4 objects for exact-3 columns")
    rng = np.random.default_rng(seed)
    for _ in range(500):
        cols = []
        for _ in range(n_tests):
            count = 3
            if at_least:
                count = int(rng.integers(3, n_objects))
            chosen = rng.choice(n_objects, size=count, replace=False)
            col = [False] * n_objects
            for c in chosen:
                col[int(c)] = True
            cols.append(col)
        rows = tuple(
            tuple(cols[j][i] for j in range(n_tests)) for i in range(n_objects)
        )
        if len(set(rows)) == n_objects:
            decisions = tuple(f"o{i}" for i in range(n_objects))
            t = DecisionTable(tuple(f"T{j + 1}" for j in range(n_tests)), rows, decisions)
            check_reduction_instance(t, require_exact3=not at_least)
            return t
    raise ReductionInputError(
        f"could not draw distinct rows for {n_objects} objects x {n_tests} tests"
    )


def format_table(t: DecisionTable) -> str:
    """One row per line: 0/1 cells then the decision label, space-separated.

    The first line names the tests, prefixed with '#'.
    """
    lines = ["# " + " ".join(t.tests)]
    for row, d in zip(t.rows, t.decisions):
        lines.append(" ".join("1" if b else "0" for b in row) + f" {d}")
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> DecisionTable:
    tests: tuple[str, ...] | None = None
    rows: list[tuple[bool, ...]] = []
    decisions: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if tests is None:
                tests = tuple(line[1:].split())
            continue
        parts = line.split()
        if len(parts) < 2:
            raise TableFormatError(lineno, "need at least one cell and a decision")
        cells, label = parts[:-1], parts[-1]
        try:
            row = tuple({"0": False, "1": True}[c] for c in cells)
        except KeyError:
            raise TableFormatError(lineno, "cells must be 0 or 1") from None
        rows.append(row)
        decisions.append(label)
    if not rows:
        raise TableFormatError(0, "no rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise TableFormatError(0, "rows have inconsistent widths")
    if tests is None:
        tests = tuple(f"T{j + 1}" for j in range(width))
    if len(tests) != width:
        raise TableFormatError(0, "header names do not match row width")
    try:
        return DecisionTable(tests, tuple(rows), tuple(decisions))
    except ReductionInputError as exc:
        raise TableFormatError(0, str(exc)) from exc
