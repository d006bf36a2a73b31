"""Error metrics, kernel k-means costs, and the RFF lower-bound experiment."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .baselines import GramMatrix
from .errors import InvalidInputError
from .kernels import BoundedSpec, ShiftInvariantKernel, one_minus_kernel, s_k_statistic
from .rff import rff_embed, rff_new

__all__ = [
    "Partition",
    "TradeoffRecord",
    "METHODS",
    "pairwise_distances",
    "exact_distances",
    "max_relative_error",
    "random_partition",
    "kernel_kmeans_cost_exact",
    "kmeans_cost_embedded",
    "LowerBoundSummary",
    "lower_bound_experiment",
]

METHODS = ("rff", "newlap", "svd", "jl")


@dataclass(frozen=True, eq=False)
class Partition:
    assignment: np.ndarray
    k: int

    def __post_init__(self):
        a = np.asarray(self.assignment)
        if a.ndim != 1 or self.k < 1 or (a.size and (a.min() < 0 or a.max() >= self.k)):
            raise InvalidInputError(f"assignment must be a 1-d array of ids in [0, {self.k})")
        object.__setattr__(self, "assignment", a.astype(np.int64))

    @property
    def n(self) -> int:
        return self.assignment.size

    def clusters(self):
        for c in range(self.k):
            members = np.flatnonzero(self.assignment == c)
            if members.size:
                yield members


@dataclass(frozen=True)
class TradeoffRecord:
    method: str
    D: int
    trial: int
    max_rel_err: float

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown method {self.method!r}")
        if not self.max_rel_err >= 0:
            raise InvalidInputError("max_rel_err must be nonnegative")


def pairwise_distances(features) -> np.ndarray:
    """Euclidean distance matrix of the rows of ``features``."""
    f = np.asarray(features, dtype=float)
    sq = np.sum(f * f, axis=1)
    out = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * f @ f.T, 0.0))
    np.fill_diagonal(out, 0.0)
    return out


def exact_distances(kernel: ShiftInvariantKernel, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.sqrt(2.0 * one_minus_kernel(kernel, pts[:, None, :] - pts[None, :, :]))


def max_relative_error(exact, approx) -> float:
    """max over unordered pairs with exact > 0 of |approx - exact| / exact.

    Accepts square distance matrices or matching flat arrays of pair distances.
    """
    exact = np.asarray(exact, dtype=float)
    approx = np.asarray(approx, dtype=float)
    if exact.shape != approx.shape:
        raise InvalidInputError(f"shape mismatch: {exact.shape} vs {approx.shape}")
    if exact.ndim == 2:
        if exact.shape[0] != exact.shape[1]:
            raise InvalidInputError("distance matrices must be square")
        iu = np.triu_indices(exact.shape[0], k=1)
        exact, approx = exact[iu], approx[iu]
    mask = exact > 0
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(approx[mask] - exact[mask]) / exact[mask]))


def random_partition(n: int, k: int, rng: np.random.Generator) -> Partition:
    """Random k-partition with every cluster non-empty.

    ``k`` distinct random points seed the clusters; the remaining points are
    assigned independently and uniformly.  With ``k == n`` this is the
    all-singletons partition.
    """
    if not 1 <= k <= n:
        raise InvalidInputError(f"need 1 <= k <= n, got k={k}, n={n}")
    assignment = rng.integers(0, k, size=n)
    assignment[rng.permutation(n)[:k]] = np.arange(k)
    return Partition(assignment, k)


def kernel_kmeans_cost_exact(g: GramMatrix | np.ndarray, part: Partition) -> float:
    """k-means cost in feature space via sum K(x,x) - (1/|C|) sum K(x,y) per cluster."""
    gram = g.entries if isinstance(g, GramMatrix) else np.asarray(g, dtype=float)
    if gram.shape != (part.n, part.n):
        raise InvalidInputError("partition size does not match the Gram matrix")
    total = 0.0
    for members in part.clusters():
        block = gram[np.ix_(members, members)]
        total += np.trace(block) - block.sum() / members.size
    return float(total)


def kmeans_cost_embedded(embedded, part: Partition) -> float:
    """Sum over clusters of squared distances to the cluster mean."""
    emb = np.asarray(embedded, dtype=float)
    if emb.shape[0] != part.n:
        raise InvalidInputError("partition size does not match the embedding")
    total = 0.0
    for members in part.clusters():
        block = emb[members]
        total += float(np.sum((block - block.mean(axis=0)) ** 2))
    return total


@dataclass(frozen=True)
class LowerBoundSummary:
    empirical_std_rel_sq_err: float
    predicted: float
    s_k: float
    trials: int
    D: int

    @property
    def ratio(self) -> float:
        return self.empirical_std_rel_sq_err / self.predicted


def lower_bound_experiment(kernel: ShiftInvariantKernel, bounds: BoundedSpec, D: int, trials: int,
                           seed: int) -> LowerBoundSummary:
    """Spread of the RFF relative squared-distance error at a pair rho apart.

    Uses the 1-d pair x = 0, y = rho.  Each trial draws a fresh map; the
    prediction is sqrt(s_K(rho) / D).
    """
    if D < 16 or trials < 100:
        raise InvalidInputError("need D >= 16 and trials >= 100")
    rho = bounds.rho_min
    pair = np.array([[0.0], [rho]])
    exact_sq = 2.0 * float(one_minus_kernel(kernel, np.array([rho])))
    seeds = np.random.SeedSequence(seed).generate_state(trials, dtype=np.uint64)
    errs = np.empty(trials)
    for t, s in enumerate(seeds):
        feats = rff_embed(rff_new(kernel, 1, D, int(s)), pair)
        diff = feats[0] - feats[1]
        errs[t] = (diff @ diff - exact_sq) / exact_sq
    s_k = float(s_k_statistic(kernel, np.array([rho])))
    return LowerBoundSummary(float(np.std(errs, ddof=1)), math.sqrt(s_k / D), s_k, trials, D)
