"""Bounded-interaction strategy search and interaction-sequence compression.

`explore_strategies` decides whether some well-founded conversation policy is
guaranteed to end in an acceptance within a given interaction budget, against
every answer a truthful user could give. It is an AND-OR search: the system
chooses moves (which feature to ask; whether to unfill or change a slot after
a rejection), the user chooses replies (which active value to state; whether
to accept a proposed item; under protocol P2, which feature value of a
rejected item to rule out).

Interaction accounting: a slot fill costs 1; a rejection followed by a slot
unfill costs 1 in total; a rejection followed by a slot change costs 2. The
two base cases are: no budget means no strategy, and a budget covering the
remaining items is always enough (propose them one by one).

The search is exponential by nature, so inputs are guarded by an explicit
size budget instead of running unbounded.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .model import (
    AcceptItem,
    Catalog,
    ConversationState,
    Constraints,
    Query,
    SlotChange,
    SlotFill,
    SlotUnfill,
    Transformation,
    TransformationError,
    UserModel,
    Var,
    apply,
    select,
)


class Protocol(str, enum.Enum):
    """Rejection handling: P1 learns only the rejected items, P2 additionally
    elicits one disliked feature value and discards every item sharing it."""

    P1 = "p1"
    P2 = "p2"


class BudgetError(ValueError):
    """The catalog exceeds the configured size budget for the checker."""


class ReplayError(ValueError):
    """A transformation in a sequence is not applicable where it occurs."""

    def __init__(self, index: int, reason: str) -> None:
        super().__init__(f"step {index}: {reason}")
        self.index = index


class SequenceContractError(ValueError):
    """The sequence does not end in a successful acceptance."""


@dataclass(frozen=True)
class SearchBudget:
    max_items: int = 12
    max_features: int = 5
    max_domain: int = 4

    def check(self, catalog: Catalog) -> None:
        if len(catalog) > self.max_items:
            raise BudgetError(f"{len(catalog)} items exceeds budget {self.max_items}")
        if catalog.schema.p > self.max_features:
            raise BudgetError(
                f"{catalog.schema.p} features exceeds budget {self.max_features}"
            )
        widest = max(catalog.schema.domain_size(s) for s in range(catalog.schema.p))
        if widest > self.max_domain:
            raise BudgetError(f"domain size {widest} exceeds budget {self.max_domain}")


@dataclass(frozen=True)
class StrategyQuery:
    """A decision instance: does some strategy from `state` finish within `bound`?"""

    catalog: Catalog
    state: ConversationState
    bound: int


@dataclass(frozen=True)
class InteractionSequence:
    """An initial query plus transformations, the accepting one last."""

    initial_query: Query
    steps: tuple[Transformation, ...]


class _Arena:
    """Catalog preprocessed to item bitmasks for the exhaustive search."""

    def __init__(self, catalog: Catalog) -> None:
        self.catalog = catalog
        self.p = catalog.schema.p
        self.n = len(catalog)
        self.full = (1 << self.n) - 1
        self.domain_sizes = [catalog.schema.domain_size(s) for s in range(self.p)]
        self.value_mask: list[list[int]] = [
            [0] * self.domain_sizes[s] for s in range(self.p)
        ]
        for row, item in enumerate(catalog.items):
            for s, v in enumerate(item.values):
                self.value_mask[s][v] |= 1 << row
        self.item_values = [item.values for item in catalog.items]

    def select(self, fills: tuple[tuple[int, int], ...],
               k: tuple[frozenset[int], ...], n: int) -> int:
        mask = self.full & ~n
        filled = set()
        for s, v in fills:
            mask &= self.value_mask[s][v]
            filled.add(s)
        for s in range(self.p):
            if s not in filled and k[s]:
                for v in k[s]:
                    mask &= ~self.value_mask[s][v]
        return mask


def _state_key(u: UserModel, catalog: Catalog) -> tuple:
    fills = tuple(
        (s, u.query.value(s)) for s in range(catalog.schema.p) if u.query.is_filled(s)
    )
    k = tuple(u.constraints.disliked)
    n = 0
    for iid in u.disliked_items:
        n |= 1 << catalog.row(iid)
    return fills, k, n


def explore_strategies(
    catalog: Catalog,
    u: UserModel,
    m: int,
    protocol: Protocol,
    budget: SearchBudget = SearchBudget(),
    memoize: bool = True,
) -> bool:
    """True iff a well-founded strategy ends in acceptance within ``m`` interactions
    for every truthful user behavior.

    With ``memoize`` the search caches results per canonical state (sorted
    filled slots, constraint sets, rejected-item set) and remaining budget;
    liked items never matter and are ignored. ``memoize=False`` runs the plain
    AND-OR expansion, for cross-checking.
    """
    budget.check(catalog)
    arena = _Arena(catalog)
    fills, k, n = _state_key(u, catalog)
    memo: dict | None = {} if memoize else None
    return _explore(arena, fills, k, n, m, protocol, memo)


def _explore(arena: _Arena, fills: tuple[tuple[int, int], ...],
             k: tuple[frozenset[int], ...], n: int, m: int,
             protocol: Protocol, memo: dict | None) -> bool:
    if m <= 0:
        return False
    remaining = (arena.full & ~n).bit_count()
    if remaining <= m:
        return True
    key = (fills, k, n, m)
    if memo is not None and key in memo:
        return memo[key]

    s_mask = arena.select(fills, k, n)
    if s_mask == 0:
        # Dead focus set: the conversation cannot reach an acceptance from here.
        result = False
    elif s_mask.bit_count() == 1:
        result = _proposal_rejected(arena, fills, k, n, s_mask, m, protocol, memo)
    else:
        result = _ask_to_fill(arena, fills, k, n, s_mask, m, protocol, memo)
    if memo is not None:
        memo[key] = result
    return result


def _ask_to_fill(arena: _Arena, fills, k, n: int, s_mask: int, m: int,
                 protocol: Protocol, memo) -> bool:
    filled = {s for s, _ in fills}
    rows = [r for r in range(arena.n) if s_mask >> r & 1]
    for slot in range(arena.p):
        if slot in filled:
            continue
        av = sorted({arena.item_values[r][slot] for r in rows})
        new_fills = [tuple(sorted(fills + ((slot, v),))) for v in av]
        if all(
            _explore(arena, nf, k, n, m - 1, protocol, memo) for nf in new_fills
        ):
            return True
    return False


def _proposal_rejected(arena: _Arena, fills, k, n: int, s_mask: int, m: int,
                       protocol: Protocol, memo) -> bool:
    # The user may accept (success, within budget) or reject; only the
    # rejection branch constrains the result.
    row = s_mask.bit_length() - 1
    n_rejected = n | s_mask
    filled = {s for s, _ in fills}

    if protocol is Protocol.P2:
        dislikes = [
            (slot, arena.item_values[row][slot])
            for slot in range(arena.p)
            if slot not in filled
        ]
        if dislikes:
            for slot, v in dislikes:
                k2 = tuple(
                    cs | {v} if s == slot else cs for s, cs in enumerate(k)
                )
                n2 = n_rejected | arena.value_mask[slot][v]
                if not _recover_moves(arena, fills, k2, n2, m, protocol, memo):
                    return False
            return True
    return _recover_moves(arena, fills, k, n_rejected, m, protocol, memo)


def _recover_moves(arena: _Arena, fills, k, n: int, m: int,
                   protocol: Protocol, memo) -> bool:
    # System's turn after a rejection: unfill or change some stated slot.
    for idx, (slot, v) in enumerate(fills):
        rest = fills[:idx] + fills[idx + 1 :]
        # Unfill: the rejection is the one interaction spent.
        if _explore(arena, rest, k, n, m - 1, protocol, memo):
            return True
        # Change: rejection plus the newly stated value cost two interactions.
        # Only values selecting at least one item are offered; with none, the
        # change is not available as a move.
        viable = []
        for v2 in range(arena.domain_sizes[slot]):
            if v2 == v or v2 in k[slot]:
                continue
            changed = tuple(sorted(rest + ((slot, v2),)))
            if arena.select(changed, k, n) != 0:
                viable.append(changed)
        if viable and all(
            _explore(arena, ch, k, n, m - 2, protocol, memo) for ch in viable
        ):
            return True
    return False


def min_interactions(
    catalog: Catalog,
    u: UserModel,
    protocol: Protocol,
    budget: SearchBudget = SearchBudget(),
) -> int:
    """Least budget for which a strategy exists; at most the number of
    remaining items (the propose-one-by-one bound), found by binary search."""
    budget.check(catalog)
    arena = _Arena(catalog)
    fills, k, n = _state_key(u, catalog)
    remaining = (arena.full & ~n).bit_count()
    if remaining == 0:
        raise ValueError("every item is already rejected; nothing to recommend")
    memo: dict = {}
    lo, hi = 1, remaining
    while lo < hi:
        mid = (lo + hi) // 2
        if _explore(arena, fills, k, n, mid, protocol, memo):
            hi = mid
        else:
            lo = mid + 1
    return lo


def initial_state(seq: InteractionSequence, catalog: Catalog) -> ConversationState:
    p = catalog.schema.p
    if len(seq.initial_query.terms) != p:
        raise ReplayError(-1, "initial query arity does not match the catalog")
    var_ids = [t.id for t in seq.initial_query.terms if isinstance(t, Var)]
    um = UserModel(
        query=seq.initial_query,
        constraints=Constraints.empty(p),
        liked=frozenset(),
        disliked_items=frozenset(),
    )
    rec = select(seq.initial_query, catalog, um.constraints, frozenset())
    return ConversationState(um, rec, next_var=max(var_ids, default=-1) + 1)


def replay(seq: InteractionSequence, catalog: Catalog) -> list[ConversationState]:
    """All states the sequence passes through, the initial one first.

    Raises ReplayError where a step is inapplicable and SequenceContractError
    when the final step is not an acceptance.
    """
    states = [initial_state(seq, catalog)]
    for i, step in enumerate(seq.steps):
        try:
            states.append(apply(states[-1], step, catalog))
        except TransformationError as exc:
            raise ReplayError(i, str(exc)) from exc
    if not seq.steps or not isinstance(seq.steps[-1], AcceptItem):
        raise SequenceContractError("sequence must end with an acceptance")
    return states


def compress_to_slot_filling(
    seq: InteractionSequence, catalog: Catalog
) -> InteractionSequence:
    """An equivalent fill-only sequence reaching the same accepted item.

    Every slot keeps only whatever last established its final value: a fill or
    change that survived becomes a plain fill, superseded fills and their
    unfills disappear, and initial-query values that were later retracted turn
    into variables of the new initial query. Rejections and value dislikes
    carry no fills and are dropped. The result is never longer than the input.
    """
    states = replay(seq, catalog)
    accepted = states[-1].accepted
    assert accepted is not None
    final_query = states[-1].user_model.query

    last_set: dict[int, tuple[int, int]] = {}
    touched: set[int] = set()
    for i, step in enumerate(seq.steps):
        if isinstance(step, (SlotFill, SlotChange)):
            last_set[step.slot] = (i, step.value)
            touched.add(step.slot)
        elif isinstance(step, SlotUnfill):
            last_set.pop(step.slot, None)
            touched.add(step.slot)

    p = catalog.schema.p
    fills: list[tuple[int, SlotFill]] = []
    new_terms: list = []
    fresh = 0
    for slot in range(p):
        if final_query.is_filled(slot) and slot not in touched:
            new_terms.append(final_query.value(slot))
            continue
        new_terms.append(Var(fresh))
        fresh += 1
        if final_query.is_filled(slot):
            idx, value = last_set[slot]
            fills.append((idx, SlotFill(slot, value)))
    fills.sort(key=lambda pair: pair[0])

    out = InteractionSequence(
        initial_query=Query(tuple(new_terms)),
        steps=tuple(f for _, f in fills) + (AcceptItem(accepted),),
    )
    replay(out, catalog)
    return out
