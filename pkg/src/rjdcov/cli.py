"""Command-line interface: ``rjdcov <subcommand> ...``.

Every subcommand writes its result to stdout, or atomically to ``--out``.
Input and configuration errors exit with status 2, other failures with 1.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .calibration import NullCache, default_cache_dir
from .clt import AssumptionViolation, normality_diagnostic, random_centered_tensor
from .core import BlockedSample, WeightScheme
from .ica import NonConvergenceWarning, fit_ica
from .inference import dependency_structure, test_joint, test_pairwise_aggregate, test_subset
from .simulation import MODELS, TESTS, generate, power_curve, rows_to_csv

__all__ = ["main", "CliError", "RunConfig", "read_csv", "parse_blocks", "load_schema", "build_parser"]

SCHEMA_VERSION = 1


class CliError(Exception):
    """A user-facing input or configuration error."""


@dataclass(frozen=True)
class RunConfig:
    """Resolved options for the data-driven subcommands."""

    subcommand: str
    input: str | None
    blocks: tuple
    labels: tuple
    alpha: float
    B: int
    seed: int
    weights: WeightScheme
    cache_dir: str | None
    out: str | None


# ---------------------------------------------------------------- input


def _is_number(field: str) -> bool:
    try:
        float(field)
    except ValueError:
        return False
    return True


def read_csv(path: str, header: bool | None = None) -> tuple[np.ndarray, list[str] | None]:
    """Read a numeric CSV file.

    ``header=None`` treats the first row as a header when any of its fields
    is not a number. Returns the data and the column names (or None).
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    except (UnicodeDecodeError, csv.Error) as exc:
        raise CliError(f"{path}: not a UTF-8 CSV file ({exc})") from None
    numbered = [(i + 1, row) for i, row in enumerate(rows) if any(f.strip() for f in row)]
    if not numbered:
        raise CliError(f"{path}: no data")
    names = None
    first = [f.strip() for f in numbered[0][1]]
    if header is None:
        header = not all(_is_number(f) for f in first)
    if header:
        names = first
        numbered = numbered[1:]
        if len(set(names)) != len(names):
            raise CliError(f"{path}: duplicate column names in header")
    if not numbered:
        raise CliError(f"{path}: header but no data rows")
    width = len(names) if names is not None else len(numbered[0][1])
    data = np.empty((len(numbered), width))
    for r, (line, row) in enumerate(numbered):
        if len(row) != width:
            raise CliError(f"{path}: line {line}: expected {width} fields, found {len(row)}")
        for c, field in enumerate(row):
            try:
                data[r, c] = float(field)
            except ValueError:
                raise CliError(
                    f"{path}: line {line}, column {c + 1}: {field.strip()!r} is not a number"
                ) from None
    if not np.all(np.isfinite(data)):
        line, col = np.argwhere(~np.isfinite(data))[0]
        raise CliError(f"{path}: line {numbered[line][0]}, column {col + 1}: value is not finite")
    return data, names


def parse_blocks(spec: str, ncols: int) -> list[list[int]]:
    """Parse ``a-b,c-d,...`` (1-indexed, inclusive) into 0-based column lists."""
    blocks = []
    for part in spec.split(","):
        part = part.strip()
        lo, sep, hi = part.partition("-")
        try:
            lo = int(lo)
            hi = int(hi) if sep else lo
        except ValueError:
            raise CliError(f"bad block range {part!r}; use a-b with 1-indexed columns") from None
        if lo < 1 or hi < lo:
            raise CliError(f"bad block range {part!r}")
        if hi > ncols:
            raise CliError(f"block {part!r} refers to column {hi}, but the data have {ncols} columns")
        blocks.append(list(range(lo - 1, hi)))
    return blocks


def load_schema(path: str, names: list[str] | None, ncols: int) -> tuple[list[list[int]], list[str]]:
    """Read a block schema.

    The file holds ``{"blocks": [{"label": "X1", "columns": [...]}, ...]}``
    where columns are header names or 1-indexed integers.
    """
    try:
        schema = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read schema {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(schema, dict) or not isinstance(schema.get("blocks"), list):
        raise CliError(f"{path}: expected an object with a 'blocks' list")
    blocks, labels = [], []
    for k, entry in enumerate(schema["blocks"]):
        if not isinstance(entry, dict) or not isinstance(entry.get("columns"), list):
            raise CliError(f"{path}: block {k + 1} needs a 'columns' list")
        cols = []
        for col in entry["columns"]:
            if isinstance(col, int) and not isinstance(col, bool):
                if not 1 <= col <= ncols:
                    raise CliError(f"{path}: column {col} out of range 1..{ncols}")
                cols.append(col - 1)
            elif isinstance(col, str):
                if names is None:
                    raise CliError(f"{path}: column {col!r} given by name, but the data have no header")
                if col not in names:
                    raise CliError(f"{path}: column {col!r} not found in the data header")
                cols.append(names.index(col))
            else:
                raise CliError(f"{path}: column entries must be names or integers, got {col!r}")
        blocks.append(cols)
        labels.append(str(entry.get("label", f"X{k + 1}")))
    return blocks, labels


def _check_partition(blocks: list[list[int]], ncols: int):
    if len(blocks) < 2:
        raise CliError("need at least two blocks")
    seen: dict[int, int] = {}
    for k, cols in enumerate(blocks):
        if not cols:
            raise CliError(f"block {k + 1} is empty")
        for c in cols:
            if c in seen:
                raise CliError(f"column {c + 1} is in blocks {seen[c] + 1} and {k + 1}")
            seen[c] = k
    missing = sorted(set(range(ncols)) - set(seen))
    if missing:
        raise CliError(
            "blocks must cover every data column; unassigned: "
            + ", ".join(str(c + 1) for c in missing)
        )


def _parse_weights(text: str | None) -> WeightScheme:
    if text is None:
        return WeightScheme.geometric(1.0)
    try:
        if text.startswith("c="):
            return WeightScheme.geometric(float(text[2:]))
        return WeightScheme.explicit([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise CliError(f"bad --weights {text!r}: {exc}") from None


def _float_list(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise CliError(f"bad {what} list {text!r}") from None


def _load_sample(args) -> tuple[BlockedSample, RunConfig]:
    data, names = read_csv(args.input, args.header)
    ncols = data.shape[1]
    if (args.blocks is None) == (args.schema is None):
        raise CliError("give exactly one of --blocks or --schema")
    if args.blocks is not None:
        blocks = parse_blocks(args.blocks, ncols)
        labels = [f"X{k + 1}" for k in range(len(blocks))]
    else:
        blocks, labels = load_schema(args.schema, names, ncols)
    _check_partition(blocks, ncols)
    if not 0 < args.alpha < 1:
        raise CliError("alpha must lie in (0, 1)")
    if args.B < 1:
        raise CliError("B must be at least 1")
    sample = BlockedSample(tuple(data[:, cols] for cols in blocks), tuple(labels))
    config = RunConfig(
        subcommand=args.command,
        input=args.input,
        blocks=tuple(tuple(c) for c in blocks),
        labels=tuple(labels),
        alpha=args.alpha,
        B=args.B,
        seed=args.seed,
        weights=_parse_weights(getattr(args, "weights", None)),
        cache_dir=None if args.no_cache else str(args.cache_dir or default_cache_dir()),
        out=args.out,
    )
    return sample, config


def _cache(config: RunConfig) -> NullCache | None:
    return None if config.cache_dir is None else NullCache(config.cache_dir)


# ---------------------------------------------------------------- output


def write_atomic(path: str, text: str):
    """Write ``text`` to ``path`` via a temporary file and a rename."""
    target = Path(path)
    directory = target.parent if str(target.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out: str | None):
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _dump(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------- commands


def cmd_test(args) -> int:
    sample, config = _load_sample(args)
    cache = _cache(config)
    if args.kind == "joint":
        report = test_joint(sample, config.weights, config.alpha, config.B, config.seed, cache=cache)
    elif args.kind == "pairwise":
        report = test_pairwise_aggregate(sample, config.alpha, config.B, config.seed, cache=cache)
    else:
        if args.subset is None:
            raise CliError("--kind subset needs --subset, e.g. --subset 1,2,3")
        try:
            idx = [int(v) - 1 for v in args.subset.split(",")]
        except ValueError:
            raise CliError(f"bad --subset {args.subset!r}") from None
        if any(i < 0 or i >= sample.r for i in idx):
            raise CliError(f"--subset entries must lie in 1..{sample.r}")
        report = test_subset(sample, idx, config.alpha, config.B, config.seed, cache=cache)
    _emit(report.to_json(), config.out)
    return 0


def cmd_structure(args) -> int:
    sample, config = _load_sample(args)
    if sample.r < 3:
        raise CliError("structure needs at least three blocks")
    cache = _cache(config) or NullCache.in_memory()
    report = dependency_structure(sample, config.alpha, config.B, config.seed, cache=cache)
    if args.dot:
        write_atomic(args.dot, report.to_dot())
    _emit(report.to_json(), config.out)
    return 0


def _check_model(name: str):
    if name not in MODELS:
        raise CliError(f"unknown model {name!r}; choose from {', '.join(sorted(MODELS))}")


def cmd_simulate(args) -> int:
    _check_model(args.model)
    if args.n < 2:
        raise CliError("n must be at least 2")
    param = args.param if args.param is not None else MODELS[args.model].default_grid[-1]
    sample = generate(args.model, args.n, param, args.seed)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [f"b{k + 1}_c{j + 1}" for k, d in enumerate(sample.block_dims) for j in range(d)]
    )
    for row in sample.to_array():
        writer.writerow([repr(float(v)) for v in row])
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_power(args) -> int:
    _check_model(args.model)
    if args.reps < 1:
        raise CliError("reps must be at least 1")
    if args.B < 1:
        raise CliError("B must be at least 1")
    if not 0 < args.alpha < 1:
        raise CliError("alpha must lie in (0, 1)")
    tests = [t.strip() for t in args.tests.split(",")]
    for t in tests:
        if t not in TESTS:
            raise CliError(f"unknown test {t!r}; choose from {', '.join(TESTS)}")
    params = None if args.params is None else _float_list(args.params, "--params")
    rows = power_curve(
        args.model, params, args.n, args.reps, tests, args.alpha, args.B, args.seed, args.workers
    )
    _emit(rows_to_csv(rows), args.out)
    return 0


def cmd_ica(args) -> int:
    data, _ = read_csv(args.input, args.header)
    if args.restarts < 1:
        raise CliError("restarts must be at least 1")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonConvergenceWarning)
        est = fit_ica(data, c=args.c, restarts=args.restarts, max_iter=args.max_iter, seed=args.seed)
    for w in caught:
        print(f"rjdcov: warning: {w.message}", file=sys.stderr)
    _emit(est.to_json(), args.out)
    return 0


def cmd_clt_check(args) -> int:
    if args.n < 3:
        raise CliError("n must be at least 3")
    if args.order != 3:
        raise CliError("the variance formula covers order 3 only")
    tensor = random_centered_tensor(args.n, args.order, args.seed)
    try:
        report = normality_diagnostic(tensor, args.draws, args.seed, args.K1, args.K2)
    except AssumptionViolation as exc:
        raise CliError(str(exc)) from None
    _emit(_dump(report.to_dict()), args.out)
    return 0


def cmd_null(args) -> int:
    try:
        dims = [int(v) for v in args.dims.split(",")]
    except ValueError:
        raise CliError(f"bad --dims {args.dims!r}") from None
    if len(dims) < 2 or min(dims) < 1:
        raise CliError("--dims needs at least two positive block dimensions")
    if args.B < 1:
        raise CliError("B must be at least 1")
    weights = _parse_weights(args.weights)
    try:
        weights.coefficients(len(dims))
    except ValueError as exc:
        raise CliError(str(exc)) from None
    cache = NullCache(args.cache_dir or default_cache_dir())
    null = cache.get_or_simulate(args.n, dims, weights, None, args.B, args.seed)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "null",
        "key": null.key.as_dict(),
        "path": str(cache.path_for(null.key)),
        "quantile_95": null.quantile(0.05),
    }
    _emit(_dump(payload), args.out)
    return 0


# ---------------------------------------------------------------- parser


def _add_data_args(p: argparse.ArgumentParser, weights: bool = True):
    p.add_argument("input", help="CSV file with numeric columns")
    p.add_argument("--blocks", help="column ranges per block, e.g. 1-3,4-6,7-9 (1-indexed)")
    p.add_argument("--schema", help="JSON block schema (alternative to --blocks)")
    hdr = p.add_mutually_exclusive_group()
    hdr.add_argument("--header", dest="header", action="store_true", default=None)
    hdr.add_argument("--no-header", dest="header", action="store_false")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--B", type=int, default=999, help="null draws (default 999)")
    p.add_argument("--seed", type=int, default=0)
    if weights:
        p.add_argument("--weights", help="c=<value> for geometric weights, or C_2,...,C_r")
    p.add_argument("--cache-dir", help="null cache directory (default $RJDCOV_CACHE_DIR or ./.rjdcov-cache)")
    p.add_argument("--no-cache", action="store_true", help="simulate nulls without caching")
    p.add_argument("--out", help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rjdcov", description="Rank joint distance covariance tests and tools."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="test mutual independence of column blocks")
    _add_data_args(p)
    p.add_argument("--kind", choices=("joint", "pairwise", "subset"), default="joint")
    p.add_argument("--subset", help="1-indexed blocks for --kind subset, e.g. 1,2,3")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("structure", help="pairwise and third-order dependency screen")
    _add_data_args(p, weights=False)
    p.add_argument("--dot", help="write the dependency graph in DOT format here")
    p.set_defaults(func=cmd_structure)

    p = sub.add_parser("simulate", help="draw one dataset from a synthetic model as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--param", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("power", help="rejection rates over a parameter grid")
    p.add_argument("--model", required=True)
    p.add_argument("--params", help="comma-separated parameter grid (default: model grid)")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--tests", default="joint", help=f"comma-separated subset of {','.join(TESTS)}")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--B", type=int, default=199)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("ica", help="fit the rank-based ICA model to a CSV file")
    p.add_argument("input")
    hdr = p.add_mutually_exclusive_group()
    hdr.add_argument("--header", dest="header", action="store_true", default=None)
    hdr.add_argument("--no-header", dest="header", action="store_false")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ica)

    p = sub.add_parser("clt-check", help="normality check of combinatorial sums")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--draws", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--K1", type=float, default=10.0)
    p.add_argument("--K2", type=float, default=0.01)
    p.add_argument("--out")
    p.set_defaults(func=cmd_clt_check)

    p = sub.add_parser("null", help="simulate and cache a null distribution")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dims", required=True, help="block dimensions, e.g. 3,3,3")
    p.add_argument("--weights")
    p.add_argument("--B", type=int, default=999)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cache-dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_null)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"rjdcov: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"rjdcov: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
