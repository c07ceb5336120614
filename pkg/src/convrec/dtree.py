"""Slot-filling question trees over an item set.

A tree node asks one feature; each outgoing edge carries one of the feature's
active values for the node's item set, so single-valued features partition the
set and every item ends up in exactly one leaf.

Two builders are provided: an exact minimum-depth search (memoized over item
subsets, with an information-theoretic lower bound for early exit) and the
cheap entropy-greedy heuristic, which is not optimal in general. A third,
deliberately plain recursion (`min_depth_oracle`) exists only to cross-check
the exact builder and stays free of pruning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

from .model import Catalog, active_values


class AmbiguityError(ValueError):
    """Two items in the input set agree on every feature; no tree separates them."""


class SearchSizeError(ValueError):
    """The item set exceeds the configured bound for an exhaustive search."""


class WalkProtocolError(ValueError):
    """An answer fell outside the asked node's edge labels."""


@dataclass(frozen=True)
class Leaf:
    item: str


@dataclass(frozen=True)
class Node:
    slot: int
    edges: tuple[tuple[int, "DecisionTree"], ...]


DecisionTree = Union[Leaf, Node]


def depth(tree: DecisionTree) -> int:
    """Root-to-leaf edge count, maximized over leaves; a lone leaf has depth 0."""
    if isinstance(tree, Leaf):
        return 0
    return 1 + max(depth(child) for _, child in tree.edges)


def node_count(tree: DecisionTree) -> int:
    if isinstance(tree, Leaf):
        return 1
    return 1 + sum(node_count(child) for _, child in tree.edges)


def leaves(tree: DecisionTree) -> tuple[str, ...]:
    if isinstance(tree, Leaf):
        return (tree.item,)
    out: list[str] = []
    for _, child in tree.edges:
        out.extend(leaves(child))
    return tuple(out)


def _check_input(s: tuple[str, ...], catalog: Catalog) -> None:
    if not s:
        raise ValueError("cannot build a tree for an empty item set")
    seen: dict[tuple[int, ...], str] = {}
    for iid in s:
        vals = catalog.item(iid).values
        if vals in seen:
            raise AmbiguityError(
                f"items {seen[vals]!r} and {iid!r} agree on every feature"
            )
        seen[vals] = iid


def _splitting_slots(s: tuple[str, ...], catalog: Catalog) -> list[tuple[int, dict[int, tuple[str, ...]]]]:
    """Slots with more than one active value, each with its value partition of s."""
    out = []
    for slot in range(catalog.schema.p):
        parts: dict[int, list[str]] = {}
        for iid in s:
            parts.setdefault(catalog.value_of(iid, slot), []).append(iid)
        if len(parts) > 1:
            out.append((slot, {v: tuple(ids) for v, ids in sorted(parts.items())}))
    return out


def min_depth_oracle(s: tuple[str, ...] | frozenset[str], catalog: Catalog,
                     max_items: int = 12, memo: bool = True) -> int:
    """Minimum question-tree depth by plain exhaustive recursion.

    Independent of :func:`build_min_depth`: no lower bounds, no pruning, just
    the recurrence min over splitting features of 1 + max over value parts.
    """
    items = tuple(sorted(s))
    if len(items) > max_items:
        raise SearchSizeError(f"{len(items)} items exceeds oracle bound {max_items}")
    _check_input(items, catalog)
    table: dict[tuple[str, ...], int] = {}

    def rec(sub: tuple[str, ...]) -> int:
        if len(sub) == 1:
            return 0
        if memo and sub in table:
            return table[sub]
        best = None
        for _, parts in _splitting_slots(sub, catalog):
            d = 1 + max(rec(part) for part in parts.values())
            if best is None or d < best:
                best = d
        assert best is not None  # distinct rows guarantee a splitting slot
        if memo:
            table[sub] = best
        return best

    return rec(items)


def build_min_depth(s: tuple[str, ...] | frozenset[str], catalog: Catalog,
                    max_items: int = 24) -> DecisionTree:
    """A question tree of provably minimum depth for the given item set.

    Exhaustive search over feature choices, memoized on the item subset, with
    branch-and-bound early exits against the lower bound ceil(log_B |S|) where
    B is the largest available branching factor. Ties break toward the lowest
    feature index; edges are ordered by value handle.
    """
    items = tuple(sorted(s))
    if len(items) > max_items:
        raise SearchSizeError(f"{len(items)} items exceeds search bound {max_items}")
    _check_input(items, catalog)
    depths: dict[tuple[str, ...], int] = {}

    def lower_bound(sub: tuple[str, ...]) -> int:
        branching = max(
            len(active_values(sub, slot, catalog)) for slot in range(catalog.schema.p)
        )
        if branching <= 1:
            raise AmbiguityError(f"items {sub[0]!r} and {sub[1]!r} agree on every feature")
        return math.ceil(math.log(len(sub), branching))

    def best_depth(sub: tuple[str, ...]) -> int:
        if len(sub) == 1:
            return 0
        if sub in depths:
            return depths[sub]
        lb = lower_bound(sub)
        best: int | None = None
        for _, parts in _splitting_slots(sub, catalog):
            worst = 0
            for part in parts.values():
                worst = max(worst, best_depth(part))
                if best is not None and 1 + worst >= best:
                    break  # this feature cannot beat the incumbent
            else:
                d = 1 + worst
                if best is None or d < best:
                    best = d
                if best == lb:
                    break  # provably optimal already
        assert best is not None
        depths[sub] = best
        return best

    def rebuild(sub: tuple[str, ...]) -> DecisionTree:
        if len(sub) == 1:
            return Leaf(sub[0])
        target = best_depth(sub)
        for slot, parts in _splitting_slots(sub, catalog):
            if 1 + max(best_depth(part) for part in parts.values()) == target:
                edges = tuple((v, rebuild(part)) for v, part in parts.items())
                return Node(slot, edges)
        raise AssertionError("memoized depth has no witnessing feature")

    return rebuild(items)


def build_heuristic(s: tuple[str, ...] | frozenset[str], catalog: Catalog) -> DecisionTree:
    """Greedy tree: ask the feature whose active-value partition has maximum entropy.

    Valid, but its depth may exceed the optimum. Ties break toward more active
    values, then the lower feature index.
    """
    items = tuple(sorted(s))
    _check_input(items, catalog)

    def entropy(parts: dict[int, tuple[str, ...]], n: int) -> float:
        return -sum(
            (len(part) / n) * math.log2(len(part) / n) for part in parts.values()
        )

    def rec(sub: tuple[str, ...]) -> DecisionTree:
        if len(sub) == 1:
            return Leaf(sub[0])
        candidates = _splitting_slots(sub, catalog)
        assert candidates, "distinct items always leave a splitting slot"
        slot, parts = max(
            candidates, key=lambda c: (entropy(c[1], len(sub)), len(c[1]), -c[0])
        )
        return Node(slot, tuple((v, rec(part)) for v, part in parts.items()))

    return rec(items)


def walk(tree: DecisionTree, answer: Callable[[int], int]) -> tuple[str, int]:
    """Follow answers down the tree; returns (item id, questions asked)."""
    questions = 0
    node = tree
    while isinstance(node, Node):
        value = answer(node.slot)
        questions += 1
        for v, child in node.edges:
            if v == value:
                node = child
                break
        else:
            raise WalkProtocolError(
                f"answer {value} for slot {node.slot} is not among the offered values"
            )
    return node.item, questions


def render(tree: DecisionTree, catalog: Catalog) -> str:
    """Stable nested-text serialization with feature names and value tokens."""
    lines: list[str] = []

    def emit(node: DecisionTree, prefix: str) -> None:
        if isinstance(node, Leaf):
            lines.append(f"{prefix}-> {node.item}")
            return
        lines.append(f"{prefix}{catalog.schema.feature_names[node.slot]}?")
        for v, child in node.edges:
            lines.append(f"{prefix}  = {catalog.schema.token(node.slot, v)}:")
            emit(child, prefix + "    ")

    emit(tree, "")
    return "\n".join(lines) + "\n"
