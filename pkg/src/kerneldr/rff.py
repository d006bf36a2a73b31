"""Random Fourier features and their exact moment identities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .kernels import ShiftInvariantKernel, kernel_eval, sample_spectral

__all__ = ["RffMap", "rff_new", "rff_embed", "cos_power_moment", "centered_moment_mc"]


@dataclass(frozen=True, eq=False)
class RffMap:
    kernel: ShiftInvariantKernel
    d: int
    D: int
    seed: int
    frequencies: np.ndarray = field(repr=False)  # (D, d), read-only

    @property
    def output_dim(self) -> int:
        return 2 * self.D

    def __call__(self, x) -> np.ndarray:
        return rff_embed(self, x)


def rff_new(kernel: ShiftInvariantKernel, d: int, D: int, seed: int) -> RffMap:
    if d < 1 or D < 1:
        raise InvalidInputError(f"need d >= 1 and D >= 1, got d={d}, D={D}")
    rng = np.random.default_rng(seed)
    omega = sample_spectral(kernel, d, rng, size=D)
    omega.setflags(write=False)
    return RffMap(kernel, d, D, seed, omega)


def rff_embed(m: RffMap, x) -> np.ndarray:
    """Map one point ``(d,)`` or a batch ``(n, d)`` to interleaved (sin, cos) features.

    The output has ``2 D`` columns ordered ``sin<w_1,x>, cos<w_1,x>, ...`` and
    scaled by ``sqrt(1/D)``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != m.d or x.ndim > 2:
        raise InvalidInputError(f"expected points of dimension {m.d}, got shape {x.shape}")
    phase = x @ m.frequencies.T
    out = np.empty(phase.shape[:-1] + (2 * m.D,))
    out[..., 0::2] = np.sin(phase)
    out[..., 1::2] = np.cos(phase)
    out *= math.sqrt(1.0 / m.D)
    return out


def cos_power_moment(kernel: ShiftInvariantKernel, x, k: int) -> float:
    """Closed form of E[cos^k <w, x>] = 2^-k sum_j C(k, j) K((2j - k) x)."""
    if k < 0:
        raise InvalidInputError("k must be nonnegative")
    x = np.asarray(x, dtype=float)
    if k == 0:
        return 1.0
    total = 0.0
    for j in range(k + 1):
        total += math.comb(k, j) * kernel_eval(kernel, (2 * j - k) * x)
    return total / 2.0**k


def centered_moment_mc(kernel: ShiftInvariantKernel, x, k: int, n_samples: int, seed: int,
                       batch: int = 1_000_000) -> tuple[float, float]:
    """Monte-Carlo estimate of E|cos<w, x> - K(x)|^k.

    Returns ``(estimate, standard_error)``.
    """
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    kx = kernel_eval(kernel, x)
    rng = np.random.default_rng(seed)
    s1 = s2 = 0.0
    left = n_samples
    while left > 0:
        m = min(batch, left)
        omega = sample_spectral(kernel, x.size, rng, size=m)
        v = np.abs(np.cos(omega @ x) - kx) ** k
        s1 += float(v.sum())
        s2 += float(np.dot(v, v))
        left -= m
    mean = s1 / n_samples
    var = max(0.0, s2 / n_samples - mean * mean)
    return mean, math.sqrt(var / n_samples)
