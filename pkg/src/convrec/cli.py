"""Command-line surface.

Machine-readable results go to stdout; diagnostics go to stderr. Every
subcommand is deterministic given its flags and seed. A key=value config file
(--config) supplies defaults that explicit flags override; relative input
paths are tried against $CONVREC_DATA_DIR when they do not resolve locally.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import data, dtree, fixtures, reduction, sim
from .model import cold_start
from .strategy import Protocol, SearchBudget, explore_strategies, min_interactions

log = logging.getLogger("convrec")


def data_dir() -> Path:
    return Path(os.environ.get("CONVREC_DATA_DIR", "."))


def _resolve(path: str) -> Path:
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    fallback = data_dir() / p
    return fallback if fallback.exists() else p


def _parse_values(text: str, features: int) -> tuple[int, ...]:
    parts = [int(tok) for tok in text.split(",")]
    if len(parts) == 1:
        return (parts[0],) * features
    if len(parts) != features:
        raise data.ShapeError(
            f"--values lists {len(parts)} targets for {features} features"
        )
    return tuple(parts)


def cmd_gen_catalog(args: argparse.Namespace) -> int:
    shape = data.CatalogShape(
        items=args.items,
        features=args.features,
        values_per_feature=_parse_values(args.values, args.features),
        distribution=args.dist,
        zipf_exponent=args.zipf_exponent,
        seed=args.seed,
    )
    catalog = data.generate_catalog(shape)
    data.store_catalog(catalog, args.out)
    counts = ",".join(
        str(len({it.values[s] for it in catalog.items}))
        for s in range(catalog.schema.p)
    )
    print(f"items\t{len(catalog)}")
    print(f"features\t{catalog.schema.p}")
    print(f"distinct\t{counts}")
    return 0


def cmd_build_dt(args: argparse.Namespace) -> int:
    catalog = data.load_catalog(_resolve(args.catalog), fmt=args.format, seed=args.seed)
    items = tuple(args.items.split(",")) if args.items else catalog.ids
    if args.heuristic:
        tree = dtree.build_heuristic(items, catalog)
    else:
        tree = dtree.build_min_depth(items, catalog, max_items=args.max_items)
    text = dtree.render(tree, catalog)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"depth\t{dtree.depth(tree)}")
    print(f"nodes\t{dtree.node_count(tree)}")
    return 0


def cmd_check_strategy(args: argparse.Namespace) -> int:
    catalog = data.load_catalog(_resolve(args.catalog), fmt=args.format, seed=args.seed)
    budget = SearchBudget(args.max_items, args.max_features, args.max_domain)
    state = cold_start(catalog)
    protocol = Protocol(args.protocol)
    if args.minimize:
        print(min_interactions(catalog, state.user_model, protocol, budget=budget))
    else:
        verdict = explore_strategies(
            catalog, state.user_model, args.bound, protocol, budget=budget
        )
        print("true" if verdict else "false")
    return 0


def _profiles_for(args: argparse.Namespace, catalog) -> list[sim.UserProfile]:
    if args.ratings:
        records = data.load_ratings(_resolve(args.ratings), sep=args.ratings_sep)
        kept, dropped = data.filter_ratings(records, catalog)
        if dropped:
            log.info("ignored %d ratings of items outside the catalog", dropped)
        if not kept:
            raise data.IngestionError("no ratings reference catalog items")
        result = sim.build_profiles(kept, catalog)
    else:
        records = data.generate_ratings(
            catalog, args.users, args.ratings_per_user, seed=args.seed
        )
        result = sim.build_profiles(records, catalog)
    if result.dropped_users:
        log.info("dropped %d users with no liked items", result.dropped_users)
    return list(result.profiles)


def cmd_simulate(args: argparse.Namespace) -> int:
    catalog = data.load_catalog(_resolve(args.catalog), fmt=args.format, seed=args.seed)
    if args.keep_features:
        catalog = data.select_features(catalog, args.keep_features, args.feature_order)
    profiles = _profiles_for(args, catalog)
    name = args.itemset_name or Path(args.catalog).stem
    config = sim.SimConfig(
        seed=args.seed,
        max_dialogs=args.dialogs,
        cutoff_factor=args.cutoff_factor,
        blacklist_scope=args.blacklist_scope,
        threads=args.threads,
    )
    protocols = (
        [Protocol.P1, Protocol.P2]
        if args.protocol == "both"
        else [Protocol(args.protocol)]
    )
    rows = []
    transcript_lines: list[str] = []
    for protocol in protocols:
        result = sim.run_experiment(catalog, profiles, protocol, config)
        rows.append((name, result.metrics))
        if args.transcripts:
            transcript_lines.extend(
                sim.transcript_to_json(t, catalog) for t in result.transcripts
            )
    table = sim.metrics_table(rows)
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    if len(rows) == 2:
        means = [m.mean_nq for _, m in rows]
        if means[1] > 0:
            print(f"ratio_mean_nq\t{means[0] / means[1]:.4f}")
    if args.transcripts:
        Path(args.transcripts).write_text(
            "\n".join(transcript_lines) + "\n", encoding="utf-8"
        )
    return 0


def cmd_reduce(args: argparse.Namespace) -> int:
    table = reduction.parse_table(Path(_resolve(args.table)).read_text(encoding="utf-8"))
    if args.exact3:
        reduction.check_reduction_instance(table, require_exact3=True)
    if len(set(table.decisions)) != table.q:
        log.info("decision labels repeat; relabeling rows for the catalog side")
        table = reduction.dedupe_decisions(table)
    report = reduction.verify_reduction(
        table, require_exact3=args.exact3, max_rows=args.max_rows
    )
    print(f"table_depth\t{report.table_depth}")
    print(f"catalog_depth\t{report.catalog_depth}")
    print("VERIFIED" if report.verified else "FAILED")
    return 0


def cmd_demo(args: argparse.Namespace) -> int:
    out = Path(args.out) if args.out else data_dir() / "convrec-demo"
    out.mkdir(parents=True, exist_ok=True)
    movies = out / "movies.tsv"
    data.store_catalog(fixtures.movie_catalog(), movies)
    table = out / "table.txt"
    table.write_text(
        reduction.format_table(fixtures.example_decision_table()), encoding="utf-8"
    )
    print(f"catalog\t{movies}")
    print(f"table\t{table}")
    return 0


def _load_config(path: str) -> dict[str, str]:
    pairs = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise data.IngestionError("expected key=value", lineno)
        key, value = line.split("=", 1)
        pairs[key.strip().replace("_", "-")] = value.strip()
    return pairs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convrec",
        description="Catalog generation, question trees, strategy checking, "
        "table reduction, and dialog simulation.",
    )
    parser.add_argument("--config", help="key=value file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-catalog", help="write a synthetic tabular catalog")
    g.add_argument("--items", type=int, required=True)
    g.add_argument("--features", type=int, required=True)
    g.add_argument("--values", required=True, help="distinct values per feature (int or comma list)")
    g.add_argument("--dist", choices=["zipf", "uniform"], default="zipf")
    g.add_argument("--zipf-exponent", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_catalog)

    b = sub.add_parser("build-dt", help="build a question tree over a catalog")
    b.add_argument("--catalog", required=True)
    b.add_argument("--format", choices=["tabular", "triples"], default="tabular")
    b.add_argument("--items", help="comma-separated item ids (default: all)")
    mode = b.add_mutually_exclusive_group()
    mode.add_argument("--optimal", action="store_true", default=True)
    mode.add_argument("--heuristic", action="store_true")
    b.add_argument("--max-items", type=int, default=24)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_build_dt)

    c = sub.add_parser("check-strategy", help="bounded-interaction strategy decision")
    c.add_argument("--catalog", required=True)
    c.add_argument("--format", choices=["tabular", "triples"], default="tabular")
    c.add_argument("-M", "--bound", type=int)
    c.add_argument("--minimize", action="store_true")
    c.add_argument("--protocol", choices=["p1", "p2"], default="p1")
    c.add_argument("--max-items", type=int, default=12)
    c.add_argument("--max-features", type=int, default=5)
    c.add_argument("--max-domain", type=int, default=4)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check_strategy)

    s = sub.add_parser("simulate", help="run dialog experiments and report NQ metrics")
    s.add_argument("--catalog", required=True)
    s.add_argument("--format", choices=["tabular", "triples"], default="tabular")
    s.add_argument("--keep-features", type=int, help="project onto this many features")
    s.add_argument(
        "--feature-order", choices=["most-values", "few-values"], default="most-values"
    )
    s.add_argument("--ratings", help="user::item::rating file")
    s.add_argument("--ratings-sep", default="::")
    s.add_argument("--users", type=int, default=40, help="synthetic users when no ratings file")
    s.add_argument("--ratings-per-user", type=int, default=15)
    s.add_argument("--protocol", choices=["p1", "p2", "both"], default="both")
    s.add_argument("--dialogs", type=int, default=None, help="subsample to this many dialogs")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--cutoff-factor", type=int, default=10)
    s.add_argument("--blacklist-scope", choices=["dialog", "round"], default="dialog")
    s.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    s.add_argument("--itemset-name")
    s.add_argument("--out", help="metrics table file")
    s.add_argument("--transcripts", help="JSON-lines transcript log")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("reduce", help="verify table-vs-catalog depth agreement")
    r.add_argument("--table", required=True)
    r.add_argument("--exact3", action="store_true", help="require exact-3 columns")
    r.add_argument("--max-rows", type=int, default=16)
    r.set_defaults(func=cmd_reduce)

    d = sub.add_parser("demo", help="write the bundled demo catalog and table")
    d.add_argument("--out")
    d.set_defaults(func=cmd_demo)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--config" in argv:
        at = argv.index("--config")
        cfg = _load_config(argv[at + 1])
        injected: list[str] = []
        for key, value in sorted(cfg.items()):
            injected.extend([f"--{key}", value])
        head, tail = argv[: at + 2], argv[at + 2 :]
        # config-provided flags come right after the subcommand so explicit
        # flags given later win
        if tail:
            argv = head + tail[:1] + injected + tail[1:]
        else:
            argv = head + injected
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "check-strategy" and not args.minimize and args.bound is None:
        parser.error("check-strategy needs -M or --minimize")
    try:
        return args.func(args)
    except (ValueError, sim.DialogDeadlock) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
