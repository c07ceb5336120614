from __future__ import annotations

import pytest

from convrec.data import (
    CatalogShape,
    IngestionError,
    RatingRecord,
    generate_catalog,
    generate_ratings,
)
from convrec.model import Catalog
from convrec.sim import (
    Accept,
    Answer,
    Dislike,
    Question,
    Recommend,
    Reject,
    SimConfig,
    build_profiles,
    check_transcript,
    dialog_seed,
    run_dialog,
    run_experiment,
    transcript_from_json,
    transcript_to_json,
)
from convrec.strategy import Protocol

P1, P2 = Protocol.P1, Protocol.P2


# --- profiles -----------------------------------------------------------------


def test_profiles_keep_items_at_or_above_own_mean(movies):
    ratings = [
        RatingRecord("u", "Forrest Gump", 5),
        RatingRecord("u", "Jaws", 3),
        RatingRecord("u", "Sully", 4),
    ]
    result = build_profiles(ratings, movies)
    (profile,) = result.profiles
    assert profile.pri == ("Forrest Gump", "Sully")
    assert result.dropped_users == 0


def test_single_rating_makes_that_item_liked(movies):
    result = build_profiles([RatingRecord("u", "Jaws", 2)], movies)
    assert result.profiles[0].pri == ("Jaws",)


def test_preference_pools_are_unions_over_liked_items(movies):
    result = build_profiles(
        [RatingRecord("u", "Jaws", 5), RatingRecord("u", "Sully", 5)], movies
    )
    profile = result.profiles[0]
    g = movies.schema.feature_names.index("genre")
    assert profile.up[g] == {movies.schema.handle(g, "action")}
    s = movies.schema.feature_names.index("starring")
    assert {movies.schema.token(s, v) for v in profile.up[s]} == {"Dreyfuss", "Hanks"}


def test_profiles_reject_dangling_items(movies):
    with pytest.raises(IngestionError):
        build_profiles([RatingRecord("u", "Ghost", 5)], movies)


# --- single dialogs ----------------------------------------------------------------


def two_item_setup() -> tuple[Catalog, list[RatingRecord]]:
    cat = Catalog.from_tokens(
        ("f0", "f1"),
        {"ideal": ("a", "x"), "decoy": ("a", "y"), "liked2": ("b", "y")},
    )
    ratings = [
        RatingRecord("u", "ideal", 5),
        RatingRecord("u", "liked2", 5),
    ]
    return cat, ratings


def test_forced_answers_ask_every_feature_once():
    # only the ideal is liked, so every answer is forced to its values and
    # both features must be asked before the focus set is a singleton
    cat = Catalog.from_tokens(
        ("f0", "f1"),
        {"ideal": ("a", "x"), "j1": ("a", "y"), "j2": ("b", "x")},
    )
    profiles = build_profiles([RatingRecord("u", "ideal", 4)], cat).profiles
    t = run_dialog(cat, profiles[0], "ideal", P1, seed=0)
    assert t.completed
    assert t.nq == cat.schema.p == 2
    kinds = [type(e) for e in t.events]
    assert kinds.count(Recommend) == 1
    assert isinstance(t.events[-1], Accept)
    check_transcript(t, cat, profiles[0])


def test_two_branch_distribution_matches_hand_enumeration():
    # asking f1 first always ends at NQ=1; asking f0 first always ends at
    # NQ=2, whatever the answer branch; the feature order is a fair coin
    cat, ratings = two_item_setup()
    profiles = build_profiles(ratings, cat).profiles
    counts = {1: 0, 2: 0}
    for seed in range(200):
        t = run_dialog(cat, profiles[0], "ideal", P1, seed=seed)
        assert t.completed
        counts[t.nq] += 1
        check_transcript(t, cat, profiles[0])
    assert counts[1] + counts[2] == 200
    assert 70 <= counts[1] <= 130


def test_p2_rejection_resumes_from_the_disliked_slot():
    cat = Catalog.from_tokens(
        ("f0", "f1"),
        {
            "ideal": ("a", "x"),
            "decoy": ("a", "y"),
            "third": ("a", "z"),
            "liked2": ("b", "y"),
            "liked3": ("b", "z"),
        },
    )
    ratings = [
        RatingRecord("u", "ideal", 5),
        RatingRecord("u", "liked2", 5),
        RatingRecord("u", "liked3", 5),
    ]
    profiles = build_profiles(ratings, cat).profiles
    seen_resume = 0
    for seed in range(60):
        t = run_dialog(cat, profiles[0], "ideal", P2, seed=seed)
        assert t.completed
        check_transcript(t, cat, profiles[0])
        events = t.events
        for i, e in enumerate(events):
            if isinstance(e, Dislike):
                assert isinstance(events[i - 1], Reject)
                asked_before = [
                    q.slot for q in events[:i] if isinstance(q, Question)
                ]
                if e.slot in asked_before and i + 1 < len(events) and isinstance(
                    events[i + 1], Question
                ):
                    # questioning restarts at the slot whose value was ruled out
                    assert events[i + 1].slot == e.slot
                    seen_resume += 1
    assert seen_resume > 0


def test_dialog_is_deterministic_per_seed():
    cat = generate_catalog(CatalogShape.uniform_values(40, 4, 8, seed=6))
    profiles = build_profiles(generate_ratings(cat, 4, 6, seed=6), cat).profiles
    p = profiles[0]
    a = run_dialog(cat, p, p.pri[0], P2, seed=777)
    b = run_dialog(cat, p, p.pri[0], P2, seed=777)
    assert a == b
    c = run_dialog(cat, p, p.pri[0], P2, seed=778)
    assert a != c  # overwhelmingly likely


def test_ideal_must_be_a_liked_item(movies):
    profiles = build_profiles([RatingRecord("u", "Jaws", 4)], movies).profiles
    with pytest.raises(ValueError):
        run_dialog(movies, profiles[0], "Sully", P1, seed=0)


def test_focus_set_only_shrinks_within_a_round():
    cat = generate_catalog(CatalogShape.uniform_values(60, 5, 6, seed=8))
    profiles = build_profiles(generate_ratings(cat, 3, 8, seed=8), cat).profiles
    prof = profiles[0]
    for protocol in (P1, P2):
        t = run_dialog(cat, prof, prof.pri[0], protocol, seed=5)
        sizes = [len(e.items) for e in t.events if isinstance(e, Recommend)]
        assert sizes  # at least the accepted recommendation
        last = None
        for e in t.events:
            if isinstance(e, Recommend):
                last = set(e.items)
            elif isinstance(e, Reject):
                assert last  # rejections always remove something


def test_transcripts_replay_cleanly_on_random_instances():
    cat = generate_catalog(CatalogShape.uniform_values(50, 6, 7, seed=10))
    profiles = build_profiles(generate_ratings(cat, 5, 7, seed=10), cat).profiles
    for prof in profiles:
        for ideal in prof.pri[:3]:
            for protocol in (P1, P2):
                t = run_dialog(
                    cat, prof, ideal, protocol,
                    dialog_seed(1, prof.user_id, ideal),
                )
                assert t.completed
                assert t.events[-1] == Accept(ideal)
                check_transcript(t, cat, prof)


def test_round_scoped_blacklist_switch_runs():
    cat, ratings = two_item_setup()
    profiles = build_profiles(ratings, cat).profiles
    t = run_dialog(
        cat, profiles[0], "ideal", P1, seed=3, blacklist_scope="round"
    )
    assert t.completed
    with pytest.raises(ValueError):
        run_dialog(cat, profiles[0], "ideal", P1, seed=3, blacklist_scope="no")


# --- experiments -----------------------------------------------------------------------


def test_experiment_is_deterministic_and_bounded():
    cat = generate_catalog(CatalogShape.uniform_values(60, 4, 10, seed=2))
    profiles = build_profiles(generate_ratings(cat, 8, 6, seed=2), cat).profiles
    cfg = SimConfig(seed=5, max_dialogs=20)
    a = run_experiment(cat, profiles, P1, cfg)
    b = run_experiment(cat, profiles, P1, cfg)
    assert a.metrics == b.metrics
    assert a.transcripts == b.transcripts
    assert a.metrics.dialogs + a.metrics.failures == 20
    assert a.metrics.mean_nq <= a.metrics.max_nq
    assert a.metrics.min_nq <= a.metrics.median_nq <= a.metrics.p95_nq


def test_threaded_experiment_matches_serial():
    cat = generate_catalog(CatalogShape.uniform_values(50, 4, 9, seed=4))
    profiles = build_profiles(generate_ratings(cat, 6, 5, seed=4), cat).profiles
    serial = run_experiment(cat, profiles, P2, SimConfig(seed=1, max_dialogs=12))
    threaded = run_experiment(
        cat, profiles, P2, SimConfig(seed=1, max_dialogs=12, threads=4)
    )
    assert serial.transcripts == threaded.transcripts


def test_cutoff_becomes_a_counted_failure():
    cat = generate_catalog(CatalogShape.uniform_values(40, 4, 8, seed=9))
    profiles = build_profiles(generate_ratings(cat, 4, 6, seed=9), cat).profiles
    result = run_experiment(
        cat, profiles, P1, SimConfig(seed=0, max_dialogs=10, cutoff_factor=0)
    )
    assert result.metrics.failures == 10
    assert result.metrics.dialogs == 0
    assert all(t.failure == "cutoff" for t in result.transcripts)


def test_transcript_json_roundtrip(movies):
    profiles = build_profiles(
        [RatingRecord("u", "Jaws", 5), RatingRecord("u", "Sully", 1)], movies
    ).profiles
    t = run_dialog(movies, profiles[0], "Jaws", P2, seed=2)
    line = transcript_to_json(t, movies)
    assert transcript_from_json(line, movies) == t
    assert "\n" not in line
