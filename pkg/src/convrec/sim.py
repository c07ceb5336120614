"""Simulated system-driven dialogs under protocols P1 and P2.

A simulated user has a set of positively rated items (PRI) and per-feature
preference pools UP_i (the values those items carry). One dialog hunts one
designated ideal item: the per-dialog catalog keeps the ideal but drops the
user's other rated items. Each round the system asks features in a random
order; the user answers with a value from UP_i that some still-recommendable
item carries. A recommendation (the whole current focus set) fires when every
feature was asked, when a single item remains, or when the user cannot answer
the current question; it is accepted iff it contains the ideal.

On rejection all recommended items leave the catalog. Under P1 the round
restarts from scratch and the user avoids previously given answers (falling
back to the full pool when that would leave nothing to say). Under P2 the
user names one feature value of the rejected items that the ideal does not
share; all items carrying it are discarded, answers given before that feature
stay, and questioning resumes there with the value ruled out.

NQ, the efficiency metric, counts question events only. Dialogs are
deterministic given (catalog, profile, ideal, protocol, seed); experiment
batches derive one RNG stream per dialog from the master seed and the
(user, ideal) pair.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .data import IngestionError, RatingRecord
from .model import Catalog
from .strategy import Protocol


class DialogDeadlock(RuntimeError):
    """A dialog can make no further progress; carries the transcript prefix."""

    def __init__(self, reason: str, events: tuple["Event", ...]) -> None:
        super().__init__(reason)
        self.events = events


class TranscriptError(ValueError):
    """A transcript is inconsistent with its catalog and profile."""


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    pri: tuple[str, ...]
    up: tuple[frozenset[int], ...]


@dataclass(frozen=True)
class ProfilesResult:
    profiles: tuple[UserProfile, ...]
    dropped_users: int


@dataclass(frozen=True)
class Question:
    slot: int


@dataclass(frozen=True)
class Answer:
    slot: int
    value: int


@dataclass(frozen=True)
class Recommend:
    items: tuple[str, ...]


@dataclass(frozen=True)
class Reject:
    pass


@dataclass(frozen=True)
class Dislike:
    slot: int
    value: int


@dataclass(frozen=True)
class Accept:
    item: str


Event = Union[Question, Answer, Recommend, Reject, Dislike, Accept]


@dataclass(frozen=True)
class DialogTranscript:
    user_id: str
    ideal: str
    protocol: Protocol
    events: tuple[Event, ...]
    nq: int
    completed: bool
    failure: str | None = None


@dataclass(frozen=True)
class SimMetrics:
    protocol: Protocol
    dialogs: int
    failures: int
    mean_nq: float
    max_nq: int
    min_nq: int
    median_nq: float
    p95_nq: float


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    max_dialogs: int | None = None
    cutoff_factor: int = 10
    blacklist_scope: str = "dialog"  # "dialog" | "round"
    threads: int = 1


@dataclass(frozen=True)
class ExperimentResult:
    metrics: SimMetrics
    transcripts: tuple[DialogTranscript, ...]


def build_profiles(
    ratings: Iterable[RatingRecord], catalog: Catalog
) -> ProfilesResult:
    """One profile per user: items rated at or above the user's own mean,
    and the per-feature value pools those items induce."""
    by_user: dict[str, list[RatingRecord]] = {}
    known = set(catalog.ids)
    for r in ratings:
        if r.item not in known:
            raise IngestionError(f"rating references unknown item {r.item!r}")
        by_user.setdefault(r.user, []).append(r)
    profiles = []
    dropped = 0
    p = catalog.schema.p
    for user in sorted(by_user):
        recs = by_user[user]
        mean = sum(r.rating for r in recs) / len(recs)
        pri = sorted({r.item for r in recs if r.rating >= mean})
        if not pri:
            dropped += 1
            continue
        up = [set() for _ in range(p)]
        for iid in pri:
            for slot, v in enumerate(catalog.item(iid).values):
                up[slot].add(v)
        profiles.append(
            UserProfile(user, tuple(pri), tuple(frozenset(s) for s in up))
        )
    return ProfilesResult(tuple(profiles), dropped)


def run_dialog(
    catalog: Catalog,
    profile: UserProfile,
    ideal: str,
    protocol: Protocol,
    seed: int | np.random.SeedSequence,
    cutoff_factor: int = 10,
    blacklist_scope: str = "dialog",
) -> DialogTranscript:
    """Simulate one dialog to the acceptance of exactly ``ideal``.

    A hard cap of ``cutoff_factor`` times the per-dialog catalog size turns
    pathological runs into a transcript marked incomplete rather than a hang.
    """
    if ideal not in profile.pri:
        raise ValueError(f"ideal {ideal!r} is not among the user's rated items")
    ideal_row = catalog.row(ideal)
    if blacklist_scope not in ("dialog", "round"):
        raise ValueError(f"unknown blacklist scope {blacklist_scope!r}")

    rng = np.random.default_rng(seed)
    v = catalog.matrix
    p = catalog.schema.p
    n = len(catalog)

    alive = np.ones(n, dtype=bool)
    for iid in profile.pri:
        alive[catalog.row(iid)] = False
    alive[ideal_row] = True
    cutoff = cutoff_factor * int(alive.sum())
    ideal_vals = v[ideal_row]

    disliked: list[set[int]] = [set() for _ in range(p)]
    blacklist: list[set[int]] = [set() for _ in range(p)]
    events: list[Event] = []
    nq = 0

    def fresh_round() -> tuple[np.ndarray, list[tuple[int, int]], np.ndarray]:
        return rng.permutation(p), [], alive.copy()

    def fail(reason: str) -> DialogTranscript:
        return DialogTranscript(
            profile.user_id, ideal, protocol, tuple(events), nq,
            completed=False, failure=reason,
        )

    order, answers, focus = fresh_round()
    while True:
        while len(answers) < p and int(focus.sum()) > 1:
            slot = int(order[len(answers)])
            avail = set(np.unique(v[focus, slot]).tolist())
            base = sorted((profile.up[slot] & avail) - disliked[slot])
            if protocol is Protocol.P1:
                pool = [x for x in base if x not in blacklist[slot]] or base
            else:
                pool = base
            if not pool:
                break  # the user has nothing left to say here; show what we have
            nq += 1
            events.append(Question(slot))
            if nq > cutoff:
                return fail("cutoff")
            value = pool[int(rng.integers(len(pool)))]
            events.append(Answer(slot, value))
            answers.append((slot, value))
            focus &= v[:, slot] == value

        rec_rows = np.flatnonzero(focus)
        rec_ids = tuple(catalog.ids[int(r)] for r in rec_rows)
        events.append(Recommend(rec_ids))
        if focus[ideal_row]:
            events.append(Accept(ideal))
            return DialogTranscript(
                profile.user_id, ideal, protocol, tuple(events), nq, completed=True
            )

        events.append(Reject())
        if not rec_ids:
            raise DialogDeadlock("empty recommendation", tuple(events))
        alive &= ~focus

        if protocol is Protocol.P1:
            if blacklist_scope == "round":
                blacklist = [set() for _ in range(p)]
            for slot, value in answers:
                blacklist[slot].add(value)
            order, answers, focus = fresh_round()
        else:
            slot, value = _pick_dislike(rng, v, rec_rows, ideal_vals)
            events.append(Dislike(slot, value))
            disliked[slot].add(value)
            alive &= ~(v[:, slot] == value)
            pos = int(np.flatnonzero(order == slot)[0])
            kept = answers[: min(pos, len(answers))]
            focus = alive.copy()
            for s, val in kept:
                focus &= v[:, s] == val
            if int(focus.sum()) == 0:
                order, answers, focus = fresh_round()
            else:
                answers = kept


def _pick_dislike(
    rng: np.random.Generator,
    v: np.ndarray,
    rec_rows: np.ndarray,
    ideal_vals: np.ndarray,
) -> tuple[int, int]:
    """A (slot, value) carried by the rejected items but not by the ideal."""
    candidates = []
    for slot in range(v.shape[1]):
        for value in np.unique(v[rec_rows, slot]).tolist():
            if value != int(ideal_vals[slot]):
                candidates.append((slot, int(value)))
    assert candidates, "a rejected set always differs from the ideal somewhere"
    return candidates[int(rng.integers(len(candidates)))]


def dialog_seed(master_seed: int, user_id: str, ideal: str) -> np.random.SeedSequence:
    """Independent per-dialog stream keyed by the master seed and identities."""

    def digest(s: str) -> int:
        return int.from_bytes(hashlib.sha256(s.encode()).digest()[:8], "big")

    return np.random.SeedSequence([master_seed, digest(user_id), digest(ideal)])


def run_experiment(
    catalog: Catalog,
    profiles: Sequence[UserProfile],
    protocol: Protocol,
    config: SimConfig = SimConfig(),
) -> ExperimentResult:
    """One dialog per (user, rated item) pair, optionally subsampled.

    Deadlocked or cut-off dialogs are counted as failures and excluded from
    the question-count statistics; the batch never aborts.
    """
    pairs = [
        (prof, ideal)
        for prof in sorted(profiles, key=lambda pr: pr.user_id)
        for ideal in prof.pri
    ]
    if config.max_dialogs is not None and config.max_dialogs < len(pairs):
        rng = np.random.default_rng(config.seed)
        chosen = rng.choice(len(pairs), size=config.max_dialogs, replace=False)
        pairs = [pairs[i] for i in sorted(int(c) for c in chosen)]

    def one(pair: tuple[UserProfile, str]) -> DialogTranscript:
        prof, ideal = pair
        try:
            return run_dialog(
                catalog,
                prof,
                ideal,
                protocol,
                dialog_seed(config.seed, prof.user_id, ideal),
                cutoff_factor=config.cutoff_factor,
                blacklist_scope=config.blacklist_scope,
            )
        except DialogDeadlock as dead:
            return DialogTranscript(
                prof.user_id, ideal, protocol, dead.events, 0,
                completed=False, failure=str(dead),
            )

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            transcripts = tuple(pool.map(one, pairs))
    else:
        transcripts = tuple(one(pair) for pair in pairs)
    return ExperimentResult(aggregate(transcripts, protocol), transcripts)


def aggregate(
    transcripts: Sequence[DialogTranscript], protocol: Protocol
) -> SimMetrics:
    done = [t.nq for t in transcripts if t.completed]
    failures = sum(1 for t in transcripts if not t.completed)
    if not done:
        return SimMetrics(protocol, 0, failures, 0.0, 0, 0, 0.0, 0.0)
    arr = np.array(done, dtype=float)
    return SimMetrics(
        protocol=protocol,
        dialogs=len(done),
        failures=failures,
        mean_nq=float(arr.mean()),
        max_nq=int(arr.max()),
        min_nq=int(arr.min()),
        median_nq=float(np.median(arr)),
        p95_nq=float(np.percentile(arr, 95)),
    )


def metrics_table(rows: Sequence[tuple[str, SimMetrics]]) -> str:
    """Stable tabular text: one line per (itemset, protocol) run."""
    lines = ["itemset\tprotocol\tdialogs\tmean_nq\tmax_nq\tp95_nq\tfailures"]
    for name, m in rows:
        lines.append(
            f"{name}\t{m.protocol.value}\t{m.dialogs}\t{m.mean_nq:.4f}"
            f"\t{m.max_nq}\t{m.p95_nq:.4f}\t{m.failures}"
        )
    return "\n".join(lines) + "\n"


def transcript_to_json(t: DialogTranscript, catalog: Catalog) -> str:
    """One-line JSON record with feature names and value tokens."""
    schema = catalog.schema

    def enc(e: Event) -> list:
        if isinstance(e, Question):
            return ["q", schema.feature_names[e.slot]]
        if isinstance(e, Answer):
            return ["a", schema.feature_names[e.slot], schema.token(e.slot, e.value)]
        if isinstance(e, Recommend):
            return ["r", list(e.items)]
        if isinstance(e, Reject):
            return ["x"]
        if isinstance(e, Dislike):
            return ["d", schema.feature_names[e.slot], schema.token(e.slot, e.value)]
        return ["ok", e.item]

    record = {
        "user": t.user_id,
        "ideal": t.ideal,
        "protocol": t.protocol.value,
        "nq": t.nq,
        "completed": t.completed,
        "failure": t.failure,
        "events": [enc(e) for e in t.events],
    }
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def transcript_from_json(line: str, catalog: Catalog) -> DialogTranscript:
    rec = json.loads(line)
    schema = catalog.schema
    slot_of = {name: i for i, name in enumerate(schema.feature_names)}

    def dec(e: list) -> Event:
        tag = e[0]
        if tag == "q":
            return Question(slot_of[e[1]])
        if tag == "a":
            return Answer(slot_of[e[1]], schema.handle(slot_of[e[1]], e[2]))
        if tag == "r":
            return Recommend(tuple(e[1]))
        if tag == "x":
            return Reject()
        if tag == "d":
            return Dislike(slot_of[e[1]], schema.handle(slot_of[e[1]], e[2]))
        if tag == "ok":
            return Accept(e[1])
        raise TranscriptError(f"unknown event tag {tag!r}")

    return DialogTranscript(
        user_id=rec["user"],
        ideal=rec["ideal"],
        protocol=Protocol(rec["protocol"]),
        events=tuple(dec(e) for e in rec["events"]),
        nq=rec["nq"],
        completed=rec["completed"],
        failure=rec["failure"],
    )


def check_transcript(
    t: DialogTranscript, catalog: Catalog, profile: UserProfile
) -> None:
    """Replay a transcript against the dialog rules; raises TranscriptError.

    Checks: answers are preference values witnessed by the current focus set,
    recommendations equal the focus set, the ideal is recommended iff
    accepted, disliked values are carried by the rejected items but never by
    the ideal, and a completed dialog ends accepting exactly its ideal.
    """
    v = catalog.matrix
    p = catalog.schema.p
    ideal_row = catalog.row(t.ideal)
    alive = np.ones(len(catalog), dtype=bool)
    for iid in profile.pri:
        alive[catalog.row(iid)] = False
    alive[ideal_row] = True

    def recompute(answers: list[tuple[int, int]]) -> np.ndarray:
        focus = alive.copy()
        for s, val in answers:
            focus &= v[:, s] == val
        return focus

    answers: list[tuple[int, int]] = []
    asked_slots: list[int] = []
    pending_slot: int | None = None
    last_rec: tuple[str, ...] | None = None
    nq = 0
    for i, e in enumerate(t.events):
        if isinstance(e, Question):
            nq += 1
            pending_slot = e.slot
        elif isinstance(e, Answer):
            if pending_slot != e.slot:
                raise TranscriptError(f"event {i}: answer without matching question")
            pending_slot = None
            if e.value not in profile.up[e.slot]:
                raise TranscriptError(f"event {i}: answer outside the user's preferences")
            focus = recompute(answers)
            if not bool(np.any(focus & (v[:, e.slot] == e.value))):
                raise TranscriptError(f"event {i}: answer unwitnessed by the focus set")
            answers.append((e.slot, e.value))
            asked_slots.append(e.slot)
        elif isinstance(e, Recommend):
            focus = recompute(answers)
            expect = tuple(
                catalog.ids[int(r)] for r in np.flatnonzero(focus)
            )
            if expect != e.items:
                raise TranscriptError(f"event {i}: recommendation is not the focus set")
            last_rec = e.items
        elif isinstance(e, Accept):
            if last_rec is None or e.item not in last_rec:
                raise TranscriptError(f"event {i}: acceptance of an unrecommended item")
            if e.item != t.ideal:
                raise TranscriptError(f"event {i}: accepted item is not the ideal")
        elif isinstance(e, Reject):
            if last_rec is None:
                raise TranscriptError(f"event {i}: rejection without recommendation")
            if t.ideal in last_rec:
                raise TranscriptError(f"event {i}: truthful users do not reject the ideal")
            for iid in last_rec:
                alive[catalog.row(iid)] = False
            if t.protocol is Protocol.P1:
                answers = []
                asked_slots = []
        elif isinstance(e, Dislike):
            if t.protocol is not Protocol.P2:
                raise TranscriptError(f"event {i}: value dislike under P1")
            if e.value == int(v[ideal_row, e.slot]):
                raise TranscriptError(f"event {i}: disliked value is the ideal's")
            assert last_rec is not None
            rec_rows = [catalog.row(iid) for iid in last_rec]
            if all(int(v[r, e.slot]) != e.value for r in rec_rows):
                raise TranscriptError(
                    f"event {i}: disliked value absent from the rejected items"
                )
            alive &= ~(v[:, e.slot] == e.value)
            if e.slot in asked_slots:
                cut = asked_slots.index(e.slot)
                answers = answers[:cut]
                asked_slots = asked_slots[:cut]
            if not bool(np.any(recompute(answers))):
                answers = []
                asked_slots = []
    if nq != t.nq:
        raise TranscriptError(f"recorded nq {t.nq} but {nq} questions occurred")
    if t.completed:
        if not t.events or not isinstance(t.events[-1], Accept):
            raise TranscriptError("completed dialog does not end in an acceptance")
