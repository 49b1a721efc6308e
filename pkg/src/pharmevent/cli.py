"""Command-line entry point.

Subcommands mirror the pipeline stages plus standalone utilities:
ingest, label, windows, forecast, ncar, stats, graph, train, evaluate,
explain, report, simgen, fetch and run (the full pipeline). Global flags
--seed, --config and --out apply to every subcommand; exit codes are
0 on success, 1 on validation errors, 2 on runtime errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
import urllib.error
import urllib.request
from pathlib import Path

from . import pipeline
from .errors import (
    ComputationError,
    NetworkError,
    PharmEventError,
    SchemaError,
    StageError,
    ValidationError,
)
from .evalkit import SynthConfig, synth_generate, write_dataset

_EXPECTED_HEADERS = {
    "prices": ["date", "close", "volume"],
    "index": ["date", "close"],
    "fundamentals": ["ticker", "year"],
    "forecasts": ["event_id"],
}


def fetch_csv(url: str, destination: str | Path, schema: str = "prices", timeout: float = 30.0) -> Path:
    """Download a CSV and accept it only if its header matches the schema."""
    if not url.startswith(("http://", "https://")):
        raise SchemaError(f"only http(s) URLs are supported, got {url!r}")
    if schema not in _EXPECTED_HEADERS:
        raise SchemaError(f"unknown schema {schema!r}")
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            if getattr(resp, "status", 200) >= 400:
                raise NetworkError(f"HTTP {resp.status} fetching {url}")
            body = resp.read()
    except (urllib.error.URLError, OSError, TimeoutError) as exc:
        raise NetworkError(f"failed to fetch {url}: {exc}") from exc
    try:
        text = body.decode("utf-8")
        header = next(csv.reader(io.StringIO(text)), None)
    except (UnicodeDecodeError, csv.Error) as exc:
        raise SchemaError(f"response is not CSV: {exc}") from exc
    expected = _EXPECTED_HEADERS[schema]
    if header is None or [h.strip() for h in header[: len(expected)]] != expected:
        raise SchemaError(
            f"header {header!r} does not start with {expected} for schema {schema!r}"
        )
    destination = Path(destination)
    destination.parent.mkdir(parents=True, exist_ok=True)
    destination.write_bytes(body)
    return destination


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pharmevent",
        description="Event-study engine for pharma stock reactions to trial announcements",
    )
    parser.add_argument("--config", help="key=value config file", default=None)
    parser.add_argument("--seed", type=int, default=None, help="root random seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a single config key (repeatable)",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in pipeline.STAGES:
        sub.add_parser(stage, help=f"run the {stage} stage")
    sub.add_parser("run", help="run the full pipeline and write manifest.json")
    sub.add_parser("stats", help="moment summaries, normality/rank tests, mismatch matrix")
    sub.add_parser("report", help="announcements-per-year table")

    simgen = sub.add_parser("simgen", help="generate a synthetic dataset directory")
    simgen.add_argument("directory", help="where to write the dataset")
    simgen.add_argument("--companies", type=int, default=8)
    simgen.add_argument("--events", type=int, default=4, help="events per company")
    simgen.add_argument("--years", type=float, default=4.0)

    fetch = sub.add_parser("fetch", help="download a CSV input with schema validation")
    fetch.add_argument("url")
    fetch.add_argument("destination")
    fetch.add_argument("--schema", choices=sorted(_EXPECTED_HEADERS), default="prices")
    return parser


def _load_config(args: argparse.Namespace) -> pipeline.RunConfig:
    cfg = pipeline.RunConfig.from_file(args.config) if args.config else pipeline.RunConfig()
    overrides = {}
    for item in args.set:
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if overrides:
        cfg.apply_overrides(overrides)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simgen":
            seed = args.seed if args.seed is not None else 0
            dataset = synth_generate(
                SynthConfig(
                    n_companies=args.companies,
                    events_per_company=args.events,
                    years=args.years,
                    seed=seed,
                )
            )
            write_dataset(dataset, args.directory)
            print(f"wrote {len(dataset.announcements)} events for "
                  f"{len(dataset.prices)} companies to {args.directory}")
            return 0
        if args.command == "fetch":
            dest = fetch_csv(args.url, args.destination, schema=args.schema)
            print(f"fetched {dest}")
            return 0

        cfg = _load_config(args)
        if args.command == "run":
            manifest = pipeline.run_pipeline(cfg)
            print(f"pipeline complete: {len(manifest['stages'])} stages -> {cfg.out}/manifest.json")
            return 0
        if args.command == "stats":
            outputs = pipeline.run_stats(cfg)
        elif args.command == "report":
            outputs = pipeline.run_report(cfg)
        else:
            cfg.validate()
            Path(cfg.out).mkdir(parents=True, exist_ok=True)
            outputs = pipeline._STAGE_FUNCS[args.command](cfg)
        for path in outputs:
            print(f"wrote {path}")
        return 0
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if isinstance(exc.cause, ValidationError) else 2
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ComputationError, PharmEventError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
