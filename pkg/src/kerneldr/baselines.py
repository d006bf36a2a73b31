"""Ideal-strength baselines: rank-D Gram truncation ("SVD") and JL on exact features."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import InvalidInputError
from .kernels import ShiftInvariantKernel, kernel_eval

__all__ = [
    "GramMatrix",
    "jacobi_eigh",
    "gram_build",
    "svd_distance",
    "svd_distances",
    "jl_distance",
    "jl_distances",
]

JACOBI_TOL = 1e-11
PSD_TOL = 1e-9
MAX_SWEEPS = 100


@numba.njit(cache=True)
def _jacobi(a, tol, max_sweeps):
    n = a.shape[0]
    v = np.eye(n)
    fro = math.sqrt(np.sum(a * a))
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off = max(off, abs(a[p, q]))
        if off <= tol * fro:
            return v, sweep
        for p in range(n):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return v, -1


def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_TOL) -> tuple[np.ndarray, np.ndarray, int]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps rotate every above-diagonal pair in row-major order until the
    largest off-diagonal entry is below ``tol * ||a||_F``.  Returns
    ``(values, vectors, sweeps)`` with values in descending order.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12):
        raise InvalidInputError("matrix is not symmetric")
    work = 0.5 * (a + a.T)
    vecs, sweeps = _jacobi(work, tol, MAX_SWEEPS)
    if sweeps < 0:
        raise RuntimeError(f"Jacobi did not converge in {MAX_SWEEPS} sweeps")
    vals = np.diag(work).copy()
    order = np.argsort(-vals, kind="stable")
    return vals[order], vecs[:, order], sweeps


@dataclass(frozen=True, eq=False)
class GramMatrix:
    entries: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)  # descending, clamped at 0
    eigenvectors: np.ndarray = field(repr=False)
    sweeps: int = 0

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def truncated(self, rank: int) -> np.ndarray:
        vecs = self.eigenvectors[:, :rank]
        return (vecs * self.eigenvalues[:rank]) @ vecs.T

    def features(self) -> np.ndarray:
        """Rows of V diag(sqrt(lambda)): an exact n-dimensional feature realisation."""
        return self.eigenvectors * np.sqrt(self.eigenvalues)


def gram_build(kernel: ShiftInvariantKernel, points) -> GramMatrix:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 1:
        raise InvalidInputError("need at least one point")
    entries = kernel_eval(kernel, pts[:, None, :] - pts[None, :, :])
    entries = np.atleast_2d(entries)
    vals, vecs, sweeps = jacobi_eigh(entries)
    floor = -PSD_TOL * max(vals[0], 0.0)
    if vals[-1] < floor:
        raise InvalidInputError(f"Gram matrix is not PSD: eigenvalue {vals[-1]:.3e}")
    vals = np.maximum(vals, 0.0)
    for arr in (entries, vals, vecs):
        arr.setflags(write=False)
    return GramMatrix(entries, vals, vecs, sweeps)


def _check_rank(g: GramMatrix, rank: int) -> None:
    if not 1 <= rank <= g.n:
        raise InvalidInputError(f"rank D={rank} must satisfy 1 <= D <= n={g.n}")


def svd_distances(g: GramMatrix, rank: int) -> np.ndarray:
    """All pairwise distances under the rank-``rank`` truncation; squared form clamped at 0."""
    _check_rank(g, rank)
    a = g.truncated(rank)
    diag = np.diag(a)
    sq = diag[:, None] + diag[None, :] - 2.0 * a
    out = np.sqrt(np.maximum(sq, 0.0))
    np.fill_diagonal(out, 0.0)
    return out


def svd_distance(g: GramMatrix, rank: int, i: int, j: int) -> float:
    _check_rank(g, rank)
    if i == j:
        return 0.0
    vecs = g.eigenvectors[[i, j], :rank] * np.sqrt(g.eigenvalues[:rank])
    sq = vecs[0] @ vecs[0] + vecs[1] @ vecs[1] - 2.0 * vecs[0] @ vecs[1]
    return math.sqrt(max(sq, 0.0))


def _jl_project(g: GramMatrix, D: int, seed: int) -> np.ndarray:
    if D < 1:
        raise InvalidInputError(f"D must be >= 1, got {D}")
    rng = np.random.default_rng(seed)
    proj = rng.standard_normal((g.n, D)) / math.sqrt(D)
    return g.features() @ proj


def jl_distances(g: GramMatrix, D: int, seed: int) -> np.ndarray:
    """Pairwise distances after a Gaussian JL map of the exact features."""
    y = _jl_project(g, D, seed)
    sq = np.sum(y * y, axis=1)
    out = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * y @ y.T, 0.0))
    np.fill_diagonal(out, 0.0)
    return out


def jl_distance(g: GramMatrix, D: int, seed: int, i: int, j: int) -> float:
    y = _jl_project(g, D, seed)
    return float(np.linalg.norm(y[i] - y[j]))
