"""Oblivious Laplacian-kernel embedding with a lazily sampled prefix-sum tree.

A point is snapped to an integer grid, each coordinate is (conceptually)
expanded in unary, and a Gaussian RFF is applied to the unary vector.  The
unary vector is never formed: the inner product with an i.i.d. Gaussian
vector is the sum of the first ``x`` leaves of a binary tree whose nodes hold
partial sums, and that prefix sum is sampled top-down along one root-to-leaf
path.  Every node draws its Gaussian from bits keyed by its ``NodeId``, so
two points that share a node see the same value without any shared state.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

from .errors import InvalidInputError, OutOfBoundsError
from .kernels import BoundedSpec

__all__ = [
    "NewLapMap",
    "NodeId",
    "newlap_new",
    "newlap_integer",
    "preprocess",
    "unary_embed",
    "node_gaussian_bits",
    "node_bit_blocks",
    "bits_to_uniform",
    "inverse_normal_cdf",
    "conditional_child_sample",
    "prefix_sum_sample",
    "newlap_embed",
    "newlap_inner",
    "reference_leaves",
    "reference_embed",
]

MAX_DEPTH = 58
WORDS_PER_NODE = 4  # 256 bits

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S12 = np.uint64(12)
_ONE = np.uint64(1)
_FOUR = np.uint64(4)
_TWO_M52 = 1.0 / 4503599627370496.0

# Acklam's rational approximation of the standard normal quantile.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


@numba.njit(cache=True, error_model="numpy")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@numba.njit(cache=True, error_model="numpy")
def _seed_key(seed):
    return _mix64(np.uint64(seed) + _GOLDEN)


@numba.njit(cache=True, error_model="numpy")
def _stream_key(seed_key, dim_index, freq_index):
    k = _mix64(seed_key + np.uint64(dim_index + 1) * _GOLDEN)
    return _mix64(k + np.uint64(freq_index + 1) * _GOLDEN)


@numba.njit(cache=True, error_model="numpy")
def _node_word(stream_key, heap, w):
    return _mix64(stream_key + (np.uint64(heap) * _FOUR + np.uint64(w) + _ONE) * _GOLDEN)


@numba.njit(cache=True, error_model="numpy")
def _uniform(word):
    return (float(word >> _S12) + 0.5) * _TWO_M52


@numba.njit(cache=True, error_model="numpy")
def _ndtri(p):
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            (((( _D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            (((( _D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return ((((( _A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
        ((((( _B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)


@numba.njit(cache=True, error_model="numpy")
def _walk(stream_key, x, h, root_sd):
    # Sum of the first x leaves; root covers 2^h leaves with sd root_sd.
    if x == 0:
        return 0.0
    leaf = x - 1
    a = root_sd * _ndtri(_uniform(_node_word(stream_key, 1, 0)))
    z = a
    heap = 1
    sd = root_sd
    for level in range(h):
        left = 2 * heap
        b = 0.5 * a + 0.5 * sd * _ndtri(_uniform(_node_word(stream_key, left, 0)))
        if (leaf >> (h - level - 1)) & 1 == 0:
            z = z - a + b
            a = b
            heap = left
        else:
            a = a - b
            heap = left + 1
        sd = sd * 0.7071067811865476
    return z


@numba.njit(cache=True, error_model="numpy")
def _inner_products(seed, grid, h, root_sd, D):
    n, d = grid.shape
    out = np.zeros((n, D))
    seed_key = _seed_key(seed)
    for i in range(d):
        for j in range(D):
            key = _stream_key(seed_key, i, j)
            for p in range(n):
                out[p, j] += _walk(key, grid[p, i], h, root_sd)
    return out


@numba.njit(cache=True, error_model="numpy")
def _walk_many_seeds(seeds, dim_index, freq_index, xs, h, root_sd):
    out = np.empty((seeds.size, xs.size))
    for s in range(seeds.size):
        key = _stream_key(_seed_key(seeds[s]), dim_index, freq_index)
        for k in range(xs.size):
            out[s, k] = _walk(key, xs[k], h, root_sd)
    return out


@numba.njit(cache=True, error_model="numpy")
def _expand_leaves(stream_key, h, root_sd):
    # Full top-down expansion of the tree, level by level; heap-ordered.
    vals = np.empty(2 << h)
    vals[1] = root_sd * _ndtri(_uniform(_node_word(stream_key, 1, 0)))
    sd = root_sd
    for level in range(h):
        first = 1 << level
        for heap in range(first, 2 * first):
            a = vals[heap]
            b = 0.5 * a + 0.5 * sd * _ndtri(_uniform(_node_word(stream_key, 2 * heap, 0)))
            vals[2 * heap] = b
            vals[2 * heap + 1] = a - b
        sd = sd * 0.7071067811865476
    return vals[1 << h:].copy()


@numba.njit(cache=True, error_model="numpy")
def _blocks(stream_key, heaps):
    out = np.empty((heaps.size, 4), dtype=np.uint64)
    for r in range(heaps.size):
        for w in range(4):
            out[r, w] = _node_word(stream_key, heaps[r], w)
    return out


class NodeId(NamedTuple):
    dim_index: int
    freq_index: int
    level: int
    offset: int

    @property
    def heap_index(self) -> int:
        return (1 << self.level) + self.offset


@dataclass(frozen=True)
class NewLapMap:
    """Parameters of one embedding; nothing random is stored.

    ``scale`` and ``shift`` map a bounded real coordinate to the integer grid
    ``{0, ..., grid_max}``; ``depth`` is the height of the virtual tree.
    ``bounds`` is None for maps that take integer input directly.
    """

    lam: float
    bounds: BoundedSpec | None
    D: int
    master_seed: int
    scale: int
    shift: int
    grid_max: int
    depth: int

    @property
    def leaf_variance(self) -> float:
        return 2.0 * self.lam / self.scale

    @property
    def output_dim(self) -> int:
        return 2 * self.D

    def to_line(self) -> str:
        if self.bounds is None:
            raise InvalidInputError("integer-grid maps have no (delta, rho) line form")
        return (f"newlap lambda={self.lam!r} delta={self.bounds.delta_max!r} "
                f"rho={self.bounds.rho_min!r} D={self.D} seed={self.master_seed}")

    @classmethod
    def from_line(cls, line: str) -> "NewLapMap":
        m = re.fullmatch(r"\s*newlap\s+lambda=(\S+)\s+delta=(\S+)\s+rho=(\S+)\s+D=(\d+)\s+seed=(\d+)\s*", line)
        if m is None:
            raise InvalidInputError(f"not a newlap parameter line: {line!r}")
        lam, delta, rho, D, seed = m.groups()
        return newlap_new(float(lam), BoundedSpec(float(delta), float(rho)), int(D), int(seed))

    def __call__(self, x) -> np.ndarray:
        return newlap_embed(self, x)


def _depth(n: int) -> int:
    return max(0, (n - 1).bit_length())


def _tree_key(m: NewLapMap, dim_index: int, freq_index: int) -> np.uint64:
    seed_key = np.uint64(_seed_key(np.uint64(m.master_seed)))
    return np.uint64(_stream_key(seed_key, dim_index, freq_index))


def _check_common(lam: float, D: int, seed: int) -> None:
    if not lam > 0:
        raise InvalidInputError(f"lambda must be positive, got {lam}")
    if D < 1:
        raise InvalidInputError(f"D must be >= 1, got {D}")
    if not 0 <= seed < 2**64:
        raise InvalidInputError("seed must fit in 64 unsigned bits")


def newlap_new(lam: float, bounds: BoundedSpec, D: int, seed: int) -> NewLapMap:
    """Embedding for (delta, rho)-bounded real input, Laplacian bandwidth ``lam``."""
    _check_common(lam, D, seed)
    delta, rho = bounds.delta_max, bounds.rho_min
    t = math.ceil(2.0 * delta / rho)
    s = max(t, math.ceil(delta))  # s >= delta keeps shifted coordinates nonnegative
    top = t * s + math.floor(t * delta + 0.5)
    n = max(math.ceil(t * (2.0 * delta + s)), top)
    h = _depth(n)
    if h > MAX_DEPTH:
        raise InvalidInputError(f"delta/rho too large: tree depth {h} exceeds {MAX_DEPTH}")
    return NewLapMap(float(lam), bounds, int(D), int(seed), t, s, n, h)


def newlap_integer(lam: float, grid_max: int, D: int, seed: int) -> NewLapMap:
    """Embedding for integer input in ``{0, ..., grid_max}`` with unit grid spacing."""
    _check_common(lam, D, seed)
    if grid_max < 1:
        raise InvalidInputError("grid_max must be >= 1")
    h = _depth(grid_max)
    if h > MAX_DEPTH:
        raise InvalidInputError(f"grid too large: tree depth {h} exceeds {MAX_DEPTH}")
    return NewLapMap(float(lam), None, int(D), int(seed), 1, 0, int(grid_max), h)


def preprocess(m: NewLapMap, x) -> np.ndarray:
    """Snap a point (or rows of points) to the integer grid ``{0, ..., N}``."""
    x = np.asarray(x, dtype=float)
    if m.bounds is None:
        if not np.all(np.isfinite(x)) or np.any(x != np.round(x)):
            raise OutOfBoundsError("integer-grid map requires integer coordinates")
        v = x.astype(np.int64)
        if np.any(v < 0) or np.any(v > m.grid_max):
            raise OutOfBoundsError(f"coordinates must lie in [0, {m.grid_max}]")
        return v
    a = np.abs(x)
    bad = ~np.isfinite(x) | (a > m.bounds.delta_max) | ((a != 0) & (a < m.bounds.rho_min))
    if np.any(bad):
        where = tuple(int(i) for i in np.argwhere(bad)[0])
        raise OutOfBoundsError(
            f"coordinate {where} = {x[where]!r} is not ({m.bounds.delta_max}, {m.bounds.rho_min})-bounded")
    return np.floor(x * m.scale + 0.5).astype(np.int64) + m.scale * m.shift


def unary_embed(v, grid_max: int) -> np.ndarray:
    """Concatenated unary codes: block i has ``v[i]`` leading ones out of ``grid_max``."""
    v = np.atleast_1d(np.asarray(v))
    if np.any(v < 0) or np.any(v > grid_max):
        raise InvalidInputError(f"entries must lie in [0, {grid_max}]")
    ramp = np.arange(grid_max)
    return (ramp[None, :] < v.astype(np.int64)[:, None]).astype(np.int8).reshape(-1)


def node_gaussian_bits(m: NewLapMap, node: NodeId) -> np.ndarray:
    """The 256-bit block for ``node``, as four uint64 words; word 0 drives the sample."""
    if not (0 <= node.level <= m.depth and 0 <= node.offset < (1 << node.level)):
        raise InvalidInputError(f"invalid node {node} for depth {m.depth}")
    key = _tree_key(m, node.dim_index, node.freq_index)
    return np.array([np.uint64(_node_word(key, node.heap_index, w)) for w in range(WORDS_PER_NODE)], dtype=np.uint64)


def node_bit_blocks(m: NewLapMap, dim_index: int, freq_index: int, heap_indices) -> np.ndarray:
    """Blocks for many nodes of one tree at once, addressed by heap index ``2^level + offset``."""
    heaps = np.asarray(heap_indices, dtype=np.int64)
    if np.any(heaps < 1) or np.any(heaps >= (2 << m.depth)):
        raise InvalidInputError("heap index outside the tree")
    return _blocks(_tree_key(m, dim_index, freq_index), heaps)


def bits_to_uniform(bits) -> float:
    """Uniform in (0, 1) from the top 52 bits of the leading 64-bit word."""
    return float(_uniform(np.uint64(np.atleast_1d(bits)[0])))


def inverse_normal_cdf(p) -> float:
    return float(_ndtri(float(p)))


def conditional_child_sample(parent_value: float, parent_leaf_count: int, leaf_variance: float, bits) -> float:
    """Left-child value given the parent sum over ``parent_leaf_count`` i.i.d. leaves.

    The two halves are i.i.d. normal with variance ``parent_leaf_count/2 *
    leaf_variance``; given their sum ``a`` the left half is normal with mean
    ``a/2`` and half that variance.
    """
    if parent_leaf_count < 2:
        raise InvalidInputError("a parent must cover at least two leaves")
    sd = 0.5 * math.sqrt(parent_leaf_count * leaf_variance)
    return 0.5 * parent_value + sd * inverse_normal_cdf(bits_to_uniform(bits))


def _root_sd(m: NewLapMap) -> float:
    return math.sqrt(float(1 << m.depth) * m.leaf_variance)


def prefix_sum_sample(m: NewLapMap, dim_index: int, freq_index: int, x: int) -> float:
    """Sampled sum of the first ``x`` leaf Gaussians of tree ``(dim_index, freq_index)``."""
    if not 0 <= x <= (1 << m.depth):
        raise InvalidInputError(f"x={x} outside [0, {1 << m.depth}]")
    key = _tree_key(m, dim_index, freq_index)
    return float(_walk(key, x, m.depth, _root_sd(m)))


def prefix_sums_over_seeds(m: NewLapMap, seeds, xs, dim_index: int = 0, freq_index: int = 0) -> np.ndarray:
    """``prefix_sum_sample`` for every (seed, x) pair, with other parameters of ``m``."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    xs = np.asarray(xs, dtype=np.int64)
    return _walk_many_seeds(seeds, dim_index, freq_index, xs, m.depth, _root_sd(m))


def newlap_inner(m: NewLapMap, points) -> np.ndarray:
    """Per-frequency phases sum_i alpha^{x_i} for each row of ``points``; shape (n, D)."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    grid = np.atleast_2d(preprocess(m, pts))
    inner = _inner_products(np.uint64(m.master_seed), np.ascontiguousarray(grid), m.depth, _root_sd(m), m.D)
    return inner[0] if single else inner


def _features(inner: np.ndarray, D: int) -> np.ndarray:
    out = np.empty(inner.shape[:-1] + (2 * D,))
    out[..., 0::2] = np.sin(inner)
    out[..., 1::2] = np.cos(inner)
    out *= math.sqrt(1.0 / D)
    return out


def newlap_embed(m: NewLapMap, points) -> np.ndarray:
    """Embed one point ``(d,)`` or a batch ``(n, d)`` into ``2 D`` interleaved features."""
    return _features(newlap_inner(m, points), m.D)


def reference_leaves(m: NewLapMap, dim_index: int, freq_index: int) -> np.ndarray:
    """All ``2^h`` leaf Gaussians of one tree, expanded from the node bits."""
    key = _tree_key(m, dim_index, freq_index)
    return _expand_leaves(key, m.depth, _root_sd(m))


def reference_embed(m: NewLapMap, points) -> np.ndarray:
    """Slow path: Gaussian RFF applied to the explicit unary vector; O(d N D)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    grid = preprocess(m, pts)
    d = grid.shape[1]
    width = 1 << m.depth
    omega = np.empty((m.D, d * width))
    for j in range(m.D):
        for i in range(d):
            omega[j, i * width:(i + 1) * width] = reference_leaves(m, i, j)
    unary = np.stack([unary_embed(row, width) for row in grid]).astype(float)
    out = _features(unary @ omega.T, m.D)
    return out[0] if np.ndim(points) == 1 else out
