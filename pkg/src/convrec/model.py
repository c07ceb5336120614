"""Core conversation-state model: catalogs, queries, constraints, transformations.

Items are complete vectors of single-valued categorical features. Values are
interned per feature: every token gets a stable integer handle (its index in
the feature's domain), and all core operations compare handles. Token-level
lookups live on :class:`CatalogSchema`.

Everything here is an immutable value; operations are pure functions that
return new states. Iteration order is deterministic everywhere (items sorted
by id, values by handle).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, Iterable, Mapping, Union

import numpy as np

# Hook for ordering the recommendable set. Must return a permutation of its
# input; the default (None) keeps plain id order, i.e. recommendation is
# exactly the matching set with no ranking applied.
RankHook = Callable[[tuple[str, ...]], tuple[str, ...]]


class SchemaError(ValueError):
    """A value, slot, or item does not conform to the catalog schema."""


class DomainError(ValueError):
    """An operation was asked of a structurally unusable input (e.g. empty catalog)."""


class TransformationError(ValueError):
    """A transformation's slot-occupancy or coherence precondition is violated."""


@dataclass(frozen=True)
class CatalogSchema:
    """Feature names plus the finite value domain of each feature.

    ``domains[i]`` is the tuple of value tokens for feature ``i``; a value's
    handle is its position in that tuple.
    """

    feature_names: tuple[str, ...]
    domains: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        if len(self.feature_names) < 1:
            raise SchemaError("schema needs at least one feature")
        if len(self.feature_names) != len(self.domains):
            raise SchemaError("feature_names and domains disagree in length")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise SchemaError("duplicate feature names")
        for name, dom in zip(self.feature_names, self.domains):
            if not dom:
                raise SchemaError(f"feature {name!r} has an empty domain")
            if len(set(dom)) != len(dom):
                raise SchemaError(f"feature {name!r} repeats a domain value")

    @property
    def p(self) -> int:
        return len(self.feature_names)

    @cached_property
    def _handle_maps(self) -> tuple[dict[str, int], ...]:
        return tuple({tok: h for h, tok in enumerate(dom)} for dom in self.domains)

    def handle(self, slot: int, token: str) -> int:
        self.check_slot(slot)
        try:
            return self._handle_maps[slot][token]
        except KeyError:
            raise SchemaError(
                f"value {token!r} not in domain of feature {self.feature_names[slot]!r}"
            ) from None

    def token(self, slot: int, handle: int) -> str:
        self.check_slot(slot)
        if not 0 <= handle < len(self.domains[slot]):
            raise SchemaError(f"handle {handle} out of range for slot {slot}")
        return self.domains[slot][handle]

    def domain_size(self, slot: int) -> int:
        self.check_slot(slot)
        return len(self.domains[slot])

    def check_slot(self, slot: int) -> None:
        if not 0 <= slot < self.p:
            raise SchemaError(f"slot {slot} out of range [0, {self.p})")

    def check_value(self, slot: int, value: int) -> None:
        self.check_slot(slot)
        if not 0 <= value < len(self.domains[slot]):
            raise SchemaError(
                f"value handle {value} outside domain of feature "
                f"{self.feature_names[slot]!r}"
            )


@dataclass(frozen=True)
class Item:
    """A complete item: one value handle per feature slot."""

    values: tuple[int, ...]


@dataclass(frozen=True)
class Catalog:
    """A fixed, schema-conforming item set with unique, sorted string ids."""

    schema: CatalogSchema
    ids: tuple[str, ...]
    items: tuple[Item, ...]

    def __post_init__(self) -> None:
        if len(self.ids) != len(self.items):
            raise SchemaError("ids and items disagree in length")
        if len(set(self.ids)) != len(self.ids):
            raise SchemaError("duplicate item ids")
        if tuple(sorted(self.ids)) != self.ids:
            raise SchemaError("item ids must be sorted")
        for iid, item in zip(self.ids, self.items):
            if len(item.values) != self.schema.p:
                raise SchemaError(f"item {iid!r} has wrong arity")
            for slot, v in enumerate(item.values):
                self.schema.check_value(slot, v)

    def __len__(self) -> int:
        return len(self.ids)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {iid: i for i, iid in enumerate(self.ids)}

    @cached_property
    def matrix(self) -> np.ndarray:
        """(n_items, p) array of value handles, row order matching ``ids``."""
        return np.array([it.values for it in self.items], dtype=np.int32)

    def item(self, item_id: str) -> Item:
        try:
            return self.items[self._index[item_id]]
        except KeyError:
            raise SchemaError(f"unknown item id {item_id!r}") from None

    def row(self, item_id: str) -> int:
        try:
            return self._index[item_id]
        except KeyError:
            raise SchemaError(f"unknown item id {item_id!r}") from None

    def value_of(self, item_id: str, slot: int) -> int:
        self.schema.check_slot(slot)
        return self.item(item_id).values[slot]

    @classmethod
    def from_tokens(
        cls,
        feature_names: Iterable[str],
        rows: Mapping[str, Iterable[str]],
        domains: Iterable[Iterable[str]] | None = None,
    ) -> "Catalog":
        """Build a catalog from token rows, interning values.

        When ``domains`` is omitted they are the observed values per feature,
        in sorted token order.
        """
        names = tuple(feature_names)
        ordered = sorted(rows.items())
        token_rows = [(iid, tuple(vals)) for iid, vals in ordered]
        for iid, vals in token_rows:
            if len(vals) != len(names):
                raise SchemaError(f"item {iid!r} has {len(vals)} values, want {len(names)}")
        if domains is None:
            doms = tuple(
                tuple(sorted({vals[i] for _, vals in token_rows}))
                for i in range(len(names))
            )
        else:
            doms = tuple(tuple(d) for d in domains)
        schema = CatalogSchema(names, doms)
        ids = tuple(iid for iid, _ in token_rows)
        items = tuple(
            Item(tuple(schema.handle(i, tok) for i, tok in enumerate(vals)))
            for _, vals in token_rows
        )
        return cls(schema, ids, items)


@dataclass(frozen=True)
class Var:
    """A query placeholder; ids are unique within one conversation."""

    id: int


Term = Union[int, Var]


@dataclass(frozen=True)
class Query:
    """A p-vector of terms: value handles where stated, variables elsewhere."""

    terms: tuple[Term, ...]

    def is_filled(self, slot: int) -> bool:
        return not isinstance(self.terms[slot], Var)

    def value(self, slot: int) -> int:
        t = self.terms[slot]
        if isinstance(t, Var):
            raise TransformationError(f"slot {slot} holds a variable, not a value")
        return t

    def filled_slots(self) -> tuple[int, ...]:
        return tuple(i for i, t in enumerate(self.terms) if not isinstance(t, Var))

    def variable_slots(self) -> tuple[int, ...]:
        return tuple(i for i, t in enumerate(self.terms) if isinstance(t, Var))

    def with_term(self, slot: int, term: Term) -> "Query":
        terms = list(self.terms)
        terms[slot] = term
        return Query(tuple(terms))


def queries_alpha_equal(a: Query, b: Query) -> bool:
    """Equality up to renaming of variables (position-wise)."""
    if len(a.terms) != len(b.terms):
        return False
    for ta, tb in zip(a.terms, b.terms):
        if isinstance(ta, Var) != isinstance(tb, Var):
            return False
        if not isinstance(ta, Var) and ta != tb:
            return False
    return True


@dataclass(frozen=True)
class Constraints:
    """Per-slot sets of disliked value handles; never a whole domain."""

    disliked: tuple[frozenset[int], ...]

    @classmethod
    def empty(cls, p: int) -> "Constraints":
        return cls(tuple(frozenset() for _ in range(p)))

    def with_dislike(self, slot: int, value: int, schema: CatalogSchema) -> "Constraints":
        schema.check_value(slot, value)
        new = self.disliked[slot] | {value}
        if len(new) >= schema.domain_size(slot):
            raise TransformationError(
                f"disliking {schema.token(slot, value)!r} would forbid every value "
                f"of feature {schema.feature_names[slot]!r}"
            )
        sets = list(self.disliked)
        sets[slot] = new
        return Constraints(tuple(sets))


@dataclass(frozen=True)
class Substitution:
    """Ordered (slot, value) bindings applied position-wise to a query."""

    bindings: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        slots = [s for s, _ in self.bindings]
        if len(set(slots)) != len(slots):
            raise SchemaError("substitution binds a slot more than once")


@dataclass(frozen=True)
class UserModel:
    query: Query
    constraints: Constraints
    liked: frozenset[str]
    disliked_items: frozenset[str]


@dataclass(frozen=True)
class ConversationState:
    """User model plus the currently recommendable items.

    ``recommended`` always equals ``select(query, catalog, constraints, N)``,
    except after an acceptance, where it collapses to the accepted singleton.
    ``next_var`` is the conversation's fresh-variable counter.
    """

    user_model: UserModel
    recommended: tuple[str, ...]
    next_var: int
    accepted: str | None = None


@dataclass(frozen=True)
class SlotFill:
    slot: int
    value: int


@dataclass(frozen=True)
class SlotUnfill:
    slot: int


@dataclass(frozen=True)
class SlotChange:
    slot: int
    value: int


@dataclass(frozen=True)
class DislikeValue:
    slot: int
    value: int


@dataclass(frozen=True)
class RejectItems:
    items: frozenset[str]


@dataclass(frozen=True)
class AcceptItem:
    item: str


Transformation = Union[SlotFill, SlotUnfill, SlotChange, DislikeValue, RejectItems, AcceptItem]


def is_coherent(sub: Substitution, k: Constraints, schema: CatalogSchema) -> bool:
    """True iff no binding assigns a value the constraints forbid for its slot."""
    for slot, value in sub.bindings:
        schema.check_value(slot, value)
        if value in k.disliked[slot]:
            return False
    return True


def apply_substitution(sub: Substitution, q: Query) -> Query:
    out = q
    for slot, value in sub.bindings:
        if not isinstance(out.terms[slot], Var):
            raise TransformationError(f"substitution targets filled slot {slot}")
        out = out.with_term(slot, value)
    return out


def matches(item: Item, q: Query, k: Constraints) -> bool:
    """True iff some substitution coherent with ``k`` maps ``q`` onto ``item``.

    Slot-wise: a stated value must equal the item's value; a variable slot
    only requires the item's value not to be disliked.
    """
    if len(item.values) != len(q.terms) or len(k.disliked) != len(q.terms):
        raise SchemaError("item, query, and constraints must share one schema")
    for slot, term in enumerate(q.terms):
        iv = item.values[slot]
        if isinstance(term, Var):
            if iv in k.disliked[slot]:
                return False
        elif term != iv:
            return False
    return True


def select(q: Query, catalog: Catalog, k: Constraints, n: frozenset[str]) -> tuple[str, ...]:
    """Ids of items in ``catalog - n`` matching ``q`` under ``k``, sorted by id."""
    m = catalog.matrix
    mask = np.ones(len(catalog), dtype=bool)
    for slot, term in enumerate(q.terms):
        if isinstance(term, Var):
            bad = k.disliked[slot]
            if bad:
                mask &= ~np.isin(m[:, slot], sorted(bad))
        else:
            mask &= m[:, slot] == term
    if n:
        for iid in n:
            mask[catalog.row(iid)] = False
    return tuple(np.compress(mask, catalog.ids).tolist())


def active_values(s: Iterable[str], slot: int, catalog: Catalog) -> frozenset[int]:
    """The value handles actually occurring at ``slot`` among items of ``s``."""
    catalog.schema.check_slot(slot)
    return frozenset(catalog.value_of(iid, slot) for iid in s)


def _ranked(ids: tuple[str, ...], rank: RankHook | None) -> tuple[str, ...]:
    if rank is None:
        return ids
    out = rank(ids)
    if sorted(out) != sorted(ids):
        raise DomainError("rank hook must permute the recommendable set")
    return out


def cold_start(catalog: Catalog, rank: RankHook | None = None) -> ConversationState:
    """All-variable query, no constraints, empty item ratings: everything recommendable."""
    if len(catalog) == 0:
        raise DomainError("cannot start a conversation over an empty catalog")
    p = catalog.schema.p
    um = UserModel(
        query=Query(tuple(Var(i) for i in range(p))),
        constraints=Constraints.empty(p),
        liked=frozenset(),
        disliked_items=frozenset(),
    )
    return ConversationState(um, recommended=_ranked(catalog.ids, rank), next_var=p)


def apply(state: ConversationState, t: Transformation, catalog: Catalog,
          rank: RankHook | None = None) -> ConversationState:
    """Successor state under one transformation; recomputes the recommendable set."""
    if state.accepted is not None:
        raise TransformationError("conversation already ended in acceptance")
    um = state.user_model
    q, k, n = um.query, um.constraints, um.disliked_items
    next_var = state.next_var

    if isinstance(t, SlotFill):
        catalog.schema.check_value(t.slot, t.value)
        if q.is_filled(t.slot):
            raise TransformationError(f"slot {t.slot} already holds a value; cannot fill")
        if t.value in k.disliked[t.slot]:
            raise TransformationError(
                f"fill of slot {t.slot} with a disliked value is incoherent"
            )
        q = q.with_term(t.slot, t.value)
    elif isinstance(t, SlotUnfill):
        catalog.schema.check_slot(t.slot)
        if not q.is_filled(t.slot):
            raise TransformationError(f"slot {t.slot} holds a variable; cannot unfill")
        q = q.with_term(t.slot, Var(next_var))
        next_var += 1
    elif isinstance(t, SlotChange):
        catalog.schema.check_value(t.slot, t.value)
        if not q.is_filled(t.slot):
            raise TransformationError(f"slot {t.slot} holds a variable; cannot change")
        if t.value == q.value(t.slot):
            raise TransformationError(f"slot {t.slot} already holds that value")
        if t.value in k.disliked[t.slot]:
            raise TransformationError(
                f"change of slot {t.slot} to a disliked value is incoherent"
            )
        q = q.with_term(t.slot, t.value)
    elif isinstance(t, DislikeValue):
        catalog.schema.check_value(t.slot, t.value)
        if q.is_filled(t.slot) and q.value(t.slot) == t.value:
            raise TransformationError(
                f"cannot dislike the value currently stated for slot {t.slot}"
            )
        k = k.with_dislike(t.slot, t.value, catalog.schema)
        sharing = (
            iid for iid in catalog.ids if catalog.value_of(iid, t.slot) == t.value
        )
        n = n | frozenset(sharing)
    elif isinstance(t, RejectItems):
        if not t.items:
            raise TransformationError("rejection of an empty item set")
        for iid in t.items:
            catalog.row(iid)
        n = n | t.items
    elif isinstance(t, AcceptItem):
        if t.item not in state.recommended:
            raise TransformationError(
                f"item {t.item!r} is not among the current recommendations"
            )
        return replace(state, recommended=(t.item,), accepted=t.item)
    else:
        raise TransformationError(f"unknown transformation {t!r}")

    um = UserModel(query=q, constraints=k, liked=um.liked, disliked_items=n)
    recommended = _ranked(select(q, catalog, k, n), rank)
    return ConversationState(um, recommended, next_var=next_var)
