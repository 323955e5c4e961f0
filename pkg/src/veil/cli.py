"""Command-line entry point: data generation, setup, queries, updates, sweeps and analysis."""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .analysis import analyze, bucket_metrics, compute_metrics
from .core import Dataset, DatasetFormatError, InvalidParams, Params, RecordTooLarge, VeilError, to_tsv
from .datagen import InvalidSpec, SkewSpec, generate
from .engine import NotFound, delete, insert, query, setup
from .outsource import (BundleError, DecryptionFailure, load_bundle, load_client, save_client,
                        store_bundle)

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_INTEGRITY = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _params(args, **over) -> Params:
    fields = dict(qa=args.qa, sa=args.sa, fanout=args.fanout, degree=args.degree,
                  desired_overlap=args.desired_overlap, seed=args.seed)
    fields.update(over)
    return Params(**fields)


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# -- single-setup commands --------------------------------------------------------------

def cmd_gen_data(args) -> int:
    ds = generate(SkewSpec(args.keys, args.records, args.z, args.seed, args.value_width))
    ds.dump_tsv(args.out)
    _print_json({"records": ds.size, "keys": len(ds.keys), "l_max": ds.l_max, "out": str(args.out)})
    return EXIT_OK


def cmd_setup(args) -> int:
    ds = Dataset.load_tsv(args.dataset)
    params = _params(args)
    bundle, client, bs = setup(ds, params, width=args.record_width)
    store_bundle(bundle, args.bundle)
    save_client(client, args.client)
    summary = {"bucket_size": bs.bucket_size, "n": bs.n, "stash": len(client.stash),
               "overlap": bundle.meta["overlap"], "fakes": bs.fake_count()}
    summary.update(compute_metrics(ds, bundle, client).as_dict())
    _print_json(summary)
    return EXIT_OK


def cmd_query(args) -> int:
    client, bundle = load_client(args.client), load_bundle(args.bundle)
    res = query(client, bundle, args.key)
    sys.stdout.write(to_tsv(res.records))
    return EXIT_OK


def cmd_insert(args) -> int:
    client, bundle = load_client(args.client), load_bundle(args.bundle)
    client, bundle = insert(client, bundle, args.key, args.value)
    store_bundle(bundle, args.bundle)
    save_client(client, args.client)
    return EXIT_OK


def cmd_delete(args) -> int:
    client, bundle = load_client(args.client), load_bundle(args.bundle)
    try:
        client, bundle = delete(client, bundle, args.key, args.value)
    except NotFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    store_bundle(bundle, args.bundle)
    save_client(client, args.client)
    return EXIT_OK


def cmd_analyze(args) -> int:
    ds = Dataset.load_tsv(args.dataset)
    client, bundle = load_client(args.client), load_bundle(args.bundle)
    queries = [q.encode() for q in args.queries]
    report = analyze(ds, bundle, client, queries, vsr_trials=args.vsr_trials, seed=args.seed)
    text = json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- benchmark --------------------------------------------------------------------------

BENCH_COLUMNS = ["cell", "seed", "z", "keys", "records", "qa", "sa", "fanout", "degree",
                 "desired_overlap", "bucket_size", "n", "overlap", "sr", "sa_actual", "qa_actual",
                 "status", "setup_ms", "mean_query_ms"]
TIMING_COLUMNS = ("setup_ms", "mean_query_ms")


@dataclass(frozen=True)
class BenchCell:
    index: int
    z: float
    keys: int
    records: int
    qa: str
    sa: str
    fanout: int
    degree: int
    desired_overlap: int | None
    seeds: int
    queries: int
    dataset_path: str | None = None
    bundle_dir: str | None = None


def _cell_dataset(cell: BenchCell) -> Dataset:
    if cell.dataset_path:
        return Dataset.load_tsv(cell.dataset_path)
    return generate(SkewSpec(cell.keys, cell.records, cell.z, seed=0))


def run_cell(cell: BenchCell) -> list[dict]:
    """All seeds of one grid cell; a failing seed yields a flagged row instead of aborting."""
    ds = _cell_dataset(cell)
    keys = sorted(ds.keys)
    rows = []
    for seed in range(cell.seeds):
        row = {k: v for k, v in asdict(cell).items() if k in BENCH_COLUMNS}
        row.update(cell=cell.index, seed=seed, keys=len(keys), records=ds.size)
        try:
            params = Params(cell.qa, cell.sa, cell.fanout, cell.degree, cell.desired_overlap, seed)
            t0 = time.perf_counter()
            bundle, client, bs = setup(ds, params)
            setup_ms = 1000 * (time.perf_counter() - t0)
            rng = np.random.Generator(np.random.PCG64(seed))
            sample = [keys[i] for i in rng.integers(len(keys), size=cell.queries)]
            t0 = time.perf_counter()
            for k in sample:
                query(client, bundle, k)
            query_ms = 1000 * (time.perf_counter() - t0) / max(len(sample), 1)
            m = bucket_metrics(bs, ds)
            if cell.bundle_dir:
                out = Path(cell.bundle_dir) / f"cell{cell.index}_seed{seed}"
                store_bundle(bundle, out / "server")
                save_client(client, out / "client")
            row.update(bucket_size=bs.bucket_size, n=bs.n,
                       overlap=bs.overlap.delta if bs.overlap else 0,
                       sr=m.sr, sa_actual=m.sa_actual, qa_actual=m.qa_actual, status="ok",
                       setup_ms=round(setup_ms, 3), mean_query_ms=round(query_ms, 3))
        except VeilError as exc:
            row.update(status=f"error: {type(exc).__name__}: {exc}")
        rows.append(row)
    return rows


def _mean_row(cell_rows: list[dict]) -> dict:
    ok = [r for r in cell_rows if r["status"] == "ok"]
    row = {k: cell_rows[0].get(k, "") for k in BENCH_COLUMNS}
    row["seed"] = "mean"
    row["status"] = f"ok {len(ok)}/{len(cell_rows)}"
    for col in ("sr", "sa_actual", "qa_actual", "overlap") + TIMING_COLUMNS:
        vals = [r[col] for r in ok]
        row[col] = round(float(np.mean(vals)), 10) if vals else ""
    return row


def _workers() -> int:
    env = os.environ.get("VEIL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"VEIL_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def bench_cells(args) -> list[BenchCell]:
    grid = itertools.product(args.z, args.qa, args.sa, args.fanout, args.degree,
                             args.desired_overlap or [None])
    cells = []
    for i, (z, qa, sa, f, d, o) in enumerate(grid):
        cells.append(BenchCell(i, z, args.keys, args.records, str(qa), str(sa), f, d, o,
                               args.seeds, args.queries, args.dataset, args.bundle_dir))
    return cells


def run_bench(cells: list[BenchCell], workers: int = 1) -> list[dict]:
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(cells))) as pool:
            per_cell = list(pool.map(run_cell, cells))
    else:
        per_cell = [run_cell(c) for c in cells]
    rows = [r for cell_rows in per_cell for r in cell_rows]
    rows.extend(_mean_row(cell_rows) for cell_rows in per_cell)
    return rows


def write_csv(rows: list[dict], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: ("" if r.get(k) is None else r.get(k, "")) for k in BENCH_COLUMNS})


def cmd_bench(args) -> int:
    if args.desired_overlap and 0 in args.degree:
        raise UsageError("--desired-overlap needs every --degree >= 1")
    rows = run_bench(bench_cells(args), _workers())
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_csv(rows, fh)
    else:
        buf = io.StringIO()
        write_csv(rows, buf)
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------------

def _add_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--qa", default="1", help="query amplification (>= 1)")
    p.add_argument("--sa", default="1.2", help="storage amplification (>= 1)")
    p.add_argument("--fanout", type=int, default=6)
    p.add_argument("--degree", type=int, default=0, help="0 selects disjoint padding")
    p.add_argument("--desired-overlap", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)


def _add_store(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bundle", required=True, type=Path, help="server bundle directory")
    p.add_argument("--client", required=True, type=Path, help="client state directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="veil", description="Volume-hiding encrypted key-value store")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a Zipf-skewed TSV dataset")
    p.add_argument("--keys", type=int, required=True)
    p.add_argument("--records", type=int, required=True)
    p.add_argument("--z", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--value-width", type=int, default=16)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("setup", help="bucketize, pad, encrypt and store a dataset")
    p.add_argument("dataset", type=Path)
    _add_store(p)
    _add_params(p)
    p.add_argument("--record-width", type=int, default=None, help="plaintext bytes per record")
    p.set_defaults(func=cmd_setup)

    p = sub.add_parser("query", help="print the records of a key as TSV")
    _add_store(p)
    p.add_argument("key")
    p.set_defaults(func=cmd_query)

    for name, func, text in (("insert", cmd_insert, "add a record"), ("delete", cmd_delete, "remove a record")):
        p = sub.add_parser(name, help=text)
        _add_store(p)
        p.add_argument("key")
        p.add_argument("value")
        p.set_defaults(func=func)

    p = sub.add_parser("bench", help="parameter sweep, one CSV row per cell and seed")
    p.add_argument("--dataset", default=None, help="TSV dataset; otherwise one is generated")
    p.add_argument("--keys", type=int, default=5000)
    p.add_argument("--records", type=int, default=100000)
    p.add_argument("--z", type=float, nargs="+", default=[0.4])
    p.add_argument("--qa", nargs="+", default=["1"])
    p.add_argument("--sa", nargs="+", default=["1.2"])
    p.add_argument("--fanout", type=int, nargs="+", default=[6])
    p.add_argument("--degree", type=int, nargs="+", default=[0])
    p.add_argument("--desired-overlap", type=int, nargs="+", default=None)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--queries", type=int, default=20, help="timed queries per run")
    p.add_argument("--bundle-dir", default=None, help="keep every bundle under this directory")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("analyze", help="metrics, leakage, attack and VSR report as JSON")
    p.add_argument("dataset", type=Path)
    _add_store(p)
    p.add_argument("--queries", nargs="*", default=[])
    p.add_argument("--vsr-trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BundleError, DecryptionFailure) as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (OSError, UsageError, InvalidParams, InvalidSpec, DatasetFormatError,
            RecordTooLarge, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
