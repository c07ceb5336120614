"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
are produced; plain ``pytest`` reports the same outcomes per test.
"""

from __future__ import annotations

import os
import time

import numpy as np
import pytest

from conftest import random_catalog
from convrec import dtree
from convrec.cli import main
from convrec.data import CatalogShape, generate_catalog, generate_ratings
from convrec.fixtures import movie_catalog
from convrec.model import AcceptItem, SlotFill, cold_start
from convrec.reduction import dedupe_decisions, generate_table, verify_reduction
from convrec.sim import SimConfig, build_profiles, run_experiment
from convrec.strategy import (
    Protocol,
    SearchBudget,
    compress_to_slot_filling,
    explore_strategies,
    replay,
)
from test_strategy import random_success_sequence

P1, P2 = Protocol.P1, Protocol.P2

IS1_MINI = dict(items=500, features=4, values=200)
IS2_MINI = dict(items=500, features=10, values=15)


def report(criterion: str, ok: bool, detail: str, started: float, limit_s: float):
    elapsed = time.perf_counter() - started
    verdict = "PASS" if ok else "FAIL"
    print(f"[acceptance] {criterion}: {verdict} ({detail}; {elapsed:.1f}s)")
    assert ok, f"{criterion}: {detail}"
    assert elapsed < limit_s, f"{criterion} exceeded {limit_s}s ({elapsed:.1f}s)"


def _itemset_means(spec: dict, seed: int, dialogs: int) -> tuple[float, float, int, int]:
    shape = CatalogShape.uniform_values(
        spec["items"], spec["features"], spec["values"], seed=seed
    )
    catalog = generate_catalog(shape)
    ratings = generate_ratings(catalog, n_users=40, ratings_per_user=15, seed=seed)
    profiles = build_profiles(ratings, catalog).profiles
    config = SimConfig(seed=seed, max_dialogs=dialogs)
    m1 = run_experiment(catalog, profiles, P1, config).metrics
    m2 = run_experiment(catalog, profiles, P2, config).metrics
    assert m1.failures == 0 and m2.failures == 0
    assert m1.dialogs == m2.dialogs == dialogs
    return m1.mean_nq, m2.mean_nq, m1.max_nq, m2.max_nq


def test_criterion_1_protocol_efficiency_reproduction():
    started = time.perf_counter()
    is1_p1, is1_p2, _, _ = _itemset_means(IS1_MINI, seed=0, dialogs=300)
    is2_p1, is2_p2, _, _ = _itemset_means(IS2_MINI, seed=0, dialogs=300)
    r1 = is1_p1 / is1_p2
    r2 = is2_p1 / is2_p2
    report(
        "criterion 1 (protocol efficiency, IS1<=1.5 IS2>=3.0)",
        r1 <= 1.5 and r2 >= 3.0,
        f"is1 ratio={r1:.3f} ({is1_p1:.2f}/{is1_p2:.2f}), "
        f"is2 ratio={r2:.3f} ({is2_p1:.2f}/{is2_p2:.2f})",
        started,
        300,
    )


@pytest.mark.skipif(
    not (os.environ.get("CONVREC_ML1M_RATINGS") and os.environ.get("CONVREC_ML1M_TRIPLES")),
    reason="full-scale movie dataset not supplied (optional job)",
)
def test_optional_full_scale_movie_dataset_within_25_percent():
    # Optional: needs the 1M ratings file plus an item/feature/value triples
    # file; targets are the published full-scale means, tolerance +-25%.
    from convrec.data import filter_ratings, load_catalog, load_ratings, select_features

    started = time.perf_counter()
    full = load_catalog(os.environ["CONVREC_ML1M_TRIPLES"], fmt="triples", seed=0)
    ratings = load_ratings(os.environ["CONVREC_ML1M_RATINGS"])
    targets = {
        "is1": (4, "most-values", 72.64, 67.45),
        "is2": (10, "few-values", 1023.75, 166.34),
    }
    results = {}
    for name, (k, order, want_p1, want_p2) in targets.items():
        catalog = select_features(full, k, order)
        kept, _ = filter_ratings(ratings, catalog)
        profiles = build_profiles(kept, catalog).profiles
        config = SimConfig(seed=0)
        p1 = run_experiment(catalog, profiles, P1, config).metrics.mean_nq
        p2 = run_experiment(catalog, profiles, P2, config).metrics.mean_nq
        results[name] = (
            abs(p1 - want_p1) <= 0.25 * want_p1
            and abs(p2 - want_p2) <= 0.25 * want_p2,
            p1,
            p2,
        )
    report(
        "optional (full-scale means within 25%)",
        all(ok for ok, _, _ in results.values()),
        ", ".join(f"{n}: {p1:.1f}/{p2:.1f}" for n, (_, p1, p2) in results.items()),
        started,
        float("inf"),
    )


def test_criterion_2_max_nq_ordering_across_seeds():
    started = time.perf_counter()
    outcomes = []
    for seed in range(10):
        _, _, max_p1, max_p2 = _itemset_means(IS2_MINI, seed=seed, dialogs=150)
        outcomes.append((seed, max_p1, max_p2))
    ok = all(a > b for _, a, b in outcomes)
    worst = min(outcomes, key=lambda o: o[1] - o[2])
    report(
        "criterion 2 (IS2 max NQ: P1 > P2 on 10 seeds)",
        ok,
        f"tightest seed {worst[0]}: maxP1={worst[1]} maxP2={worst[2]}",
        started,
        300,
    )


def test_criterion_3_min_depth_equals_oracle():
    started = time.perf_counter()
    rng = np.random.default_rng(31_337)
    mismatches = 0
    for _ in range(200):
        n = int(rng.integers(2, 9))
        p = int(rng.integers(2, 6))
        d = int(rng.integers(2, 5))
        cat = random_catalog(rng, n, p, d)
        built = dtree.depth(dtree.build_min_depth(cat.ids, cat))
        oracle = dtree.min_depth_oracle(cat.ids, cat)
        mismatches += built != oracle
    movies = movie_catalog()
    fixture_depth = dtree.depth(dtree.build_min_depth(movies.ids, movies))
    report(
        "criterion 3 (DT optimality vs oracle)",
        mismatches == 0 and fixture_depth == 2,
        f"200 catalogs, {mismatches} mismatches, movie fixture depth={fixture_depth}",
        started,
        60,
    )


def test_criterion_4_reduction_verification():
    started = time.perf_counter()
    failures = 0
    for seed in range(50):
        objects = 6 + seed % 4  # 6..9
        tests = 4 + seed % 3
        instance = generate_table(objects, tests, seed=seed)
        if not verify_reduction(instance).verified:
            failures += 1
    from convrec.fixtures import example_decision_table

    bundled = verify_reduction(
        dedupe_decisions(example_decision_table()), require_exact3=False
    )
    report(
        "criterion 4 (reduction verification)",
        failures == 0 and bundled.table_depth == 3 and bundled.catalog_depth == 3,
        f"50 instances, {failures} failures, bundled depths="
        f"{bundled.table_depth}/{bundled.catalog_depth}",
        started,
        120,
    )


def test_criterion_5_strategy_checker_properties():
    started = time.perf_counter()
    budget = SearchBudget()
    rng = np.random.default_rng(2_718)
    checked = 0
    for _ in range(50):
        n = int(rng.integers(2, 7))
        p = int(rng.integers(2, 4))
        d = int(rng.integers(2, 4))
        cat = random_catalog(rng, n, p, d)
        u = cold_start(cat).user_model
        size = len(cat)
        verdicts = {}
        for protocol in (P1, P2):
            vs = [
                explore_strategies(cat, u, m, protocol, budget=budget)
                for m in range(size + 1)
            ]
            assert vs[0] is False, "m=0 must fail"
            assert vs[size] is True, "m=|C-N| must succeed"
            for lo, hi in zip(vs, vs[1:]):
                assert not (lo and not hi), "monotonicity violated"
            for m, v in enumerate(vs):
                plain = explore_strategies(
                    cat, u, m, protocol, budget=budget, memoize=False
                )
                assert v == plain, "memoized != unmemoized"
            verdicts[protocol] = vs
        for m in range(size + 1):
            if verdicts[P1][m]:
                assert verdicts[P2][m], "P1 strategy must imply P2 strategy"
        checked += 1
    report(
        "criterion 5 (strategy checker properties)",
        checked == 50,
        f"{checked} catalogs: monotone, endpoints, dominance, memo-equivalence",
        started,
        180,
    )


def test_criterion_6_compression():
    started = time.perf_counter()
    rng = np.random.default_rng(606)
    ok = 0
    for _ in range(200):
        n = int(rng.integers(3, 7))
        p = int(rng.integers(2, 4))
        cat = random_catalog(rng, n, p, 3)
        seq = random_success_sequence(cat, rng)
        out = compress_to_slot_filling(seq, cat)
        assert all(isinstance(s, (SlotFill, AcceptItem)) for s in out.steps)
        assert out.steps[-1] == seq.steps[-1]
        assert len(out.steps) <= len(seq.steps)
        final = replay(out, cat)[-1]
        assert final.accepted == seq.steps[-1].item
        ok += 1
    report(
        "criterion 6 (fill-only compression)",
        ok == 200,
        f"{ok} sequences compressed, replayed, and bounded",
        started,
        60,
    )


def test_criterion_7_subcommand_determinism(tmp_path, capsys):
    started = time.perf_counter()
    demo_dir = tmp_path / "demo"
    catalog = tmp_path / "gen.tsv"
    commands = {
        "demo": (["demo", "--out", str(demo_dir)],
                 [demo_dir / "movies.tsv", demo_dir / "table.txt"]),
        "gen-catalog": (
            ["gen-catalog", "--items", "80", "--features", "5", "--values", "8",
             "--seed", "11", "--out", str(catalog)],
            [catalog],
        ),
        "build-dt": (
            ["build-dt", "--catalog", str(demo_dir / "movies.tsv"), "--optimal",
             "--out", str(tmp_path / "dt.txt")],
            [tmp_path / "dt.txt"],
        ),
        "check-strategy": (
            ["check-strategy", "--catalog", str(demo_dir / "movies.tsv"),
             "--minimize"],
            [],
        ),
        "reduce": (["reduce", "--table", str(demo_dir / "table.txt")], []),
        "simulate": (
            ["simulate", "--catalog", str(catalog), "--users", "4",
             "--ratings-per-user", "6", "--protocol", "both", "--dialogs", "10",
             "--seed", "3", "--threads", "2", "--itemset-name", "gen",
             "--out", str(tmp_path / "metrics.tsv"),
             "--transcripts", str(tmp_path / "transcripts.log")],
            [tmp_path / "metrics.tsv", tmp_path / "transcripts.log"],
        ),
    }

    def run_once(name: str) -> bytes:
        argv, files = commands[name]
        code = main(list(argv))
        out = capsys.readouterr().out
        assert code == 0, f"{name} exited {code}"
        return out.encode() + b"".join(f.read_bytes() for f in files)

    identical = []
    for name in commands:  # identical flags, run twice, byte-compare everything
        first = run_once(name)
        second = run_once(name)
        identical.append(first == second)
    report(
        "criterion 7 (byte-identical subcommand outputs)",
        all(identical),
        f"{sum(identical)}/{len(identical)} subcommands identical across reruns",
        started,
        120,
    )
