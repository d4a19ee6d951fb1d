"""Command line entry point: ``rgqa {index,run,score,report,validate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from pathlib import Path

from .config import ConfigError, build, index_config, load_settings
from .corpus import CorpusError, CorpusStore
from .data import ADAPTERS, DatasetError, load_dataset
from .harness import RunSummary, ScoringError, accuracy, read_records, report, run
from .pipeline import MODES
from .retrieval import IndexConfig, build_index


def _source_spec(value: str) -> tuple[str, str]:
    name, sep, path = value.partition("=")
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError("expected SOURCE=PATH")
    return name, path


def cmd_index(args) -> int:
    store = CorpusStore(args.store)
    for source, path in args.ingest or []:
        stats = store.ingest_corpus(path, source)
        print(f"ingested {path} as {source!r}: {stats.counts.get(source, 0)} snippets, {len(stats.rejects)} rejected")
    if args.config:
        cfg = index_config(load_settings(args.config))
    else:
        cfg = IndexConfig(k1=args.k1, b=args.b)
    indexes = build_index(store.iter_snippets(), cfg, store.sources)
    out = Path(args.out or Path(args.store) / "index.json")
    indexes.save(out)
    for src, ix in indexes.indexes.items():
        print(f"{src}: {ix.n_docs} docs, {len(ix.postings)} terms, avgdl {ix.avgdl:.1f}")
    print(f"index written to {out}")
    return 0


def cmd_run(args) -> int:
    settings = load_settings(args.config, {"mode": args.mode, "output_dir": args.output_dir, "limit": args.limit})
    config, pipeline, questions = build(settings)
    summary = run(config, pipeline, questions)
    print(report([summary]), end="")
    print(json.dumps(summary.runtime))
    return 0


def cmd_score(args) -> int:
    questions = load_dataset(args.dataset, args.format)
    records = read_records(args.records)
    acc = accuracy(records, questions)
    print(f"accuracy {acc:.4f} ({round(acc * len(records))}/{len(records)})")
    return 0


def cmd_report(args) -> int:
    summaries = [RunSummary.from_dict(json.loads(Path(p).read_text())) for p in args.summaries]
    print(report(summaries, args.out), end="")
    return 0


def cmd_validate(args) -> int:
    problems = 0
    for source, path in args.corpus or []:
        with tempfile.TemporaryDirectory() as scratch:
            stats = CorpusStore(scratch).ingest_corpus(path, source)
        for r in stats.rejects:
            print(f"{path}:{r['line']}: {r['reason']}")
        print(f"{path}: {stats.counts.get(source, 0)} valid, {len(stats.rejects)} rejected")
        problems += len(stats.rejects)
    for path in args.dataset or []:
        rejects: list[dict] = []
        qs = load_dataset(path, args.format, rejects=rejects)
        for r in rejects:
            print(f"{path}:{r['line']}: {r['reason']}")
        print(f"{path}: {len(qs)} valid, {len(rejects)} rejected")
        problems += len(rejects)
    return 1 if problems else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rgqa", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="ingest corpora and build per-source BM25 indexes")
    p.add_argument("--store", required=True, help="corpus store directory")
    p.add_argument("--ingest", action="append", type=_source_spec, metavar="SOURCE=PATH")
    p.add_argument("--config", help="take BM25 parameters from this config's [retrieval]")
    p.add_argument("--k1", type=float, default=0.9)
    p.add_argument("--b", type=float, default=0.4)
    p.add_argument("--out", help="index file (default: <store>/index.json)")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("run", help="answer a dataset with one pipeline mode")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--output-dir")
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("score", help="accuracy of a records file against gold labels")
    p.add_argument("--records", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", default="canonical", choices=sorted(ADAPTERS))
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="comparison table from summary.json files")
    p.add_argument("summaries", nargs="+")
    p.add_argument("--out", help="directory for report.txt / report.json")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate", help="lint corpus and dataset files")
    p.add_argument("--corpus", action="append", type=_source_spec, metavar="SOURCE=PATH")
    p.add_argument("--dataset", action="append")
    p.add_argument("--format", default="canonical", choices=sorted(ADAPTERS))
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CorpusError, DatasetError, ScoringError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
