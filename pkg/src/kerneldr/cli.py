"""Command-line harness: dataset generation and dimension/error experiments.

Every run is a pure function of its flags; trial randomness is derived from
``(--seed, method, D, trial)`` so adding a method leaves the others' draws
unchanged.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import zlib
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (METHODS, TradeoffRecord, exact_distances, kernel_kmeans_cost_exact,
                       kmeans_cost_embedded, max_relative_error, pairwise_distances, random_partition)
from .baselines import gram_build, jl_distances, svd_distances
from .errors import KernelDRError, OutOfBoundsError
from .kernels import BoundedSpec, Family, ShiftInvariantKernel, kernel_eval, parse_kernel_spec, s_k_bounded_sup
from .newlap import newlap_embed, newlap_new
from .rff import rff_embed, rff_new

log = logging.getLogger("kerneldr")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3

RECORD_HEADER = ["method", "D", "trial", "max_rel_err"]
SUMMARY_HEADER = ["method", "D", "mean", "ci95_lo", "ci95_hi"]
KMEANS_HEADER = ["partition", "exact_cost", "embedded_cost", "ratio"]


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def fmt(x: float) -> str:
    return f"{x:.17g}"


def trial_seed(master_seed: int, method: str, D: int, trial: int) -> int:
    key = (zlib.crc32(method.encode()), D, trial)
    return int(np.random.SeedSequence(master_seed, spawn_key=key).generate_state(1, dtype=np.uint64)[0])


# -- dataset files ---------------------------------------------------------

def generate_dataset(n: int, d: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal((n, d))


def write_dataset(points: np.ndarray, out: Path) -> None:
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"dim{i}" for i in range(points.shape[1])])
        for row in points:
            w.writerow([fmt(v) for v in row])


def read_dataset(path: Path) -> np.ndarray:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty dataset file")
    header, body = rows[0], rows[1:]
    if header != [f"dim{i}" for i in range(len(header))] or not header:
        raise DataError(f"{path}: header must be dim0,...,dim{{d-1}}")
    if not body:
        raise DataError(f"{path}: no data rows")
    try:
        pts = np.array([[float(v) for v in row] for row in body])
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric entry ({exc})") from exc
    if pts.ndim != 2 or pts.shape[1] != len(header):
        raise DataError(f"{path}: ragged rows; expected {len(header)} columns")
    if not np.all(np.isfinite(pts)):
        raise DataError(f"{path}: non-finite entries")
    return pts


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- experiments -----------------------------------------------------------

def data_bounds(points: np.ndarray) -> BoundedSpec:
    """Tightest (delta, rho) bounds that the dataset satisfies."""
    mags = np.abs(points)
    nonzero = mags[mags > 0]
    if nonzero.size == 0:
        return BoundedSpec(1.0, 1.0)
    return BoundedSpec(float(mags.max()), float(nonzero.min()))


def _embedding_distances(method, kernel, points, D, seed, bounds, gram):
    if method == "rff":
        return pairwise_distances(rff_embed(rff_new(kernel, points.shape[1], D, seed), points))
    if method == "newlap":
        return pairwise_distances(newlap_embed(newlap_new(kernel.bandwidth, bounds, D, seed), points))
    if method == "svd":
        return svd_distances(gram, D)
    return jl_distances(gram, D, seed)


def run_tradeoff(kernel: ShiftInvariantKernel, points: np.ndarray, methods: list[str], dims: list[int],
                 trials: int, master_seed: int, bounds: BoundedSpec | None = None) -> list[TradeoffRecord]:
    """One record per (method, D, trial), in that nesting order."""
    n = points.shape[0]
    if not dims:
        raise UsageError("the D grid is empty")
    for method in methods:
        if method not in METHODS:
            raise UsageError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if "svd" in methods and max(dims) > n:
        raise UsageError(f"svd requires D <= n (n={n}, largest D={max(dims)})")
    if "newlap" in methods and kernel.family is not Family.LAPLACIAN:
        raise UsageError("newlap requires a laplacian kernel")
    if trials < 1 or min(dims) < 1:
        raise UsageError("trials and every D must be >= 1")
    bounds = bounds or data_bounds(points)
    exact = exact_distances(kernel, points)
    gram = gram_build(kernel, points) if {"svd", "jl"} & set(methods) else None
    records = []
    for method in methods:
        for D in dims:
            for trial in range(trials):
                seed = trial_seed(master_seed, method, D, trial)
                approx = _embedding_distances(method, kernel, points, D, seed, bounds, gram)
                records.append(TradeoffRecord(method, D, trial, max_relative_error(exact, approx)))
                log.info("%s D=%d trial=%d err=%.4g", method, D, trial, records[-1].max_rel_err)
    return records


def summarize(records: list[TradeoffRecord]) -> list[tuple[str, int, float, float, float]]:
    """Per (method, D): mean and normal-approximation 95% interval over trials."""
    groups: dict[tuple[str, int], list[float]] = {}
    for r in records:
        groups.setdefault((r.method, r.D), []).append(r.max_rel_err)
    out = []
    for (method, D), errs in groups.items():
        e = np.asarray(errs)
        mean = float(e.mean())
        half = 1.96 * float(e.std(ddof=1)) / math.sqrt(e.size) if e.size > 1 else 0.0
        out.append((method, D, mean, mean - half, mean + half))
    return out


def run_kmeans_check(kernel: ShiftInvariantKernel, points: np.ndarray, D: int, k: int, partitions: int,
                     master_seed: int, method: str = "rff", bounds: BoundedSpec | None = None):
    n = points.shape[0]
    if not 1 <= k <= n:
        raise UsageError(f"k must satisfy 1 <= k <= n (k={k}, n={n})")
    if partitions < 1:
        raise UsageError("--partitions must be >= 1")
    seed = trial_seed(master_seed, method, D, 0)
    if method == "rff":
        emb = rff_embed(rff_new(kernel, points.shape[1], D, seed), points)
    elif method == "newlap":
        if kernel.family is not Family.LAPLACIAN:
            raise UsageError("newlap requires a laplacian kernel")
        emb = newlap_embed(newlap_new(kernel.bandwidth, bounds or data_bounds(points), D, seed), points)
    else:
        raise UsageError(f"kmeans-check supports rff or newlap, not {method!r}")
    gram = np.atleast_2d(kernel_eval(kernel, points[:, None, :] - points[None, :, :]))
    rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(zlib.crc32(b"partitions"), k)))
    rows = []
    for pid in range(partitions):
        part = random_partition(n, k, rng)
        exact = kernel_kmeans_cost_exact(gram, part)
        approx = kmeans_cost_embedded(emb, part)
        ratio = 1.0 if exact == 0 and approx == 0 else (approx / exact if exact > 0 else math.inf)
        rows.append((pid, exact, approx, ratio))
    return rows


# -- argument handling -----------------------------------------------------

def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None
    return vals


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _kernel(text: str) -> ShiftInvariantKernel:
    try:
        return parse_kernel_spec(text)
    except KernelDRError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kerneldr", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write n standard-normal points in d dimensions")
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--d", type=int, default=60)
    g.add_argument("--seed", type=_u64, default=1)
    g.add_argument("--out", type=Path, required=True)

    t = sub.add_parser("tradeoff", help="max relative error for each (method, D, trial)")
    t.add_argument("--kernel", type=_kernel, required=True)
    t.add_argument("--methods", type=_str_list, default=["rff"])
    t.add_argument("--dims", type=_int_list, required=True)
    t.add_argument("--trials", type=int, default=20)
    t.add_argument("--seed", type=_u64, default=0)
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--summary", type=Path, help="summary CSV (default: <out>.summary.csv)")
    t.add_argument("--delta", type=float, help="newlap magnitude bound (default: from data)")
    t.add_argument("--rho", type=float, help="newlap resolution bound (default: from data)")

    s = sub.add_parser("skstat", help="sup of s_K over (delta, rho)-bounded points")
    s.add_argument("--kernel", type=_kernel, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--rho", type=float, required=True)
    s.add_argument("--dim", type=int, default=1)

    k = sub.add_parser("kmeans-check", help="exact vs embedded kernel k-means cost on random partitions")
    k.add_argument("--kernel", type=_kernel, required=True)
    k.add_argument("--data", type=Path, required=True)
    k.add_argument("--dims", type=_int_list, default=[4096], help="target dimension D (one value)")
    k.add_argument("--methods", type=_str_list, default=["rff"], help="rff or newlap")
    k.add_argument("--k", type=int, required=True)
    k.add_argument("--partitions", type=int, default=100)
    k.add_argument("--seed", type=_u64, default=0)
    k.add_argument("--out", type=Path, required=True)
    k.add_argument("--delta", type=float)
    k.add_argument("--rho", type=float)
    return p


def _bounds_from_args(args) -> BoundedSpec | None:
    if args.delta is None and args.rho is None:
        return None
    if args.delta is None or args.rho is None:
        raise UsageError("--delta and --rho must be given together")
    if not args.delta >= args.rho > 0:
        raise UsageError(f"need delta >= rho > 0 (delta={args.delta}, rho={args.rho})")
    return BoundedSpec(args.delta, args.rho)


def _dispatch(args) -> int:
    if args.command == "gen-data":
        if args.n < 1 or args.d < 1:
            raise UsageError("--n and --d must be >= 1")
        try:
            write_dataset(generate_dataset(args.n, args.d, args.seed), args.out)
        except OSError as exc:
            raise DataError(f"cannot write {args.out}: {exc}") from exc
        return EXIT_OK

    if args.command == "skstat":
        if not (args.rho > 0 and args.delta >= args.rho):
            raise UsageError(f"need delta >= rho > 0 (delta={args.delta}, rho={args.rho})")
        sup = s_k_bounded_sup(args.kernel, BoundedSpec(args.delta, args.rho), args.dim)
        print(f"kernel={args.kernel.spec()} delta={args.delta!r} rho={args.rho!r} dim={args.dim}")
        print(f"s_K_sup={fmt(sup)}")
        for eps in (0.1, 0.2):
            print(f"eps={eps} dimension_floor~{sup / eps**2:.6g}")
        return EXIT_OK

    bounds = _bounds_from_args(args)
    points = read_dataset(args.data)

    if args.command == "tradeoff":
        records = run_tradeoff(args.kernel, points, args.methods, args.dims, args.trials, args.seed, bounds)
        summary_path = args.summary or args.out.with_name(args.out.name + ".summary.csv")
        try:
            write_csv(args.out, RECORD_HEADER,
                      [(r.method, r.D, r.trial, fmt(r.max_rel_err)) for r in records])
            write_csv(summary_path, SUMMARY_HEADER,
                      [(m, D, fmt(a), fmt(lo), fmt(hi)) for m, D, a, lo, hi in summarize(records)])
        except OSError as exc:
            raise DataError(f"cannot write output: {exc}") from exc
        return EXIT_OK

    if len(args.dims) != 1 or len(args.methods) != 1:
        raise UsageError("kmeans-check takes exactly one --dims value and one --methods value")
    rows = run_kmeans_check(args.kernel, points, args.dims[0], args.k, args.partitions, args.seed,
                            args.methods[0], bounds)
    try:
        write_csv(args.out, KMEANS_HEADER, [(pid, fmt(e), fmt(a), fmt(r)) for pid, e, a, r in rows])
    except OSError as exc:
        raise DataError(f"cannot write {args.out}: {exc}") from exc
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except UsageError as exc:
        print(f"kerneldr: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OutOfBoundsError) as exc:
        print(f"kerneldr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KernelDRError as exc:
        print(f"kerneldr: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
