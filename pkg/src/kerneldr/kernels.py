"""Shift-invariant kernels, their spectral laws, and the s_K lower-bound statistic."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, UndefinedStatisticError

__all__ = [
    "Family",
    "ShiftInvariantKernel",
    "BoundedSpec",
    "kernel_eval",
    "kernel_distance",
    "one_minus_kernel",
    "sample_spectral",
    "s_k_statistic",
    "s_k_bounded_sup",
    "parse_kernel_spec",
]

SUP_GRID_POINTS = 10_000


class Family(enum.Enum):
    GAUSSIAN = "gaussian"
    LAPLACIAN = "laplacian"
    CAUCHY = "cauchy"


@dataclass(frozen=True)
class ShiftInvariantKernel:
    """A kernel K(x - y) normalised so that K(0) = 1.

    ``bandwidth`` is gamma for Gaussian ``exp(-gamma |u|_2^2)``, lambda for
    Laplacian ``exp(-lambda |u|_1)`` and gamma for Cauchy
    ``prod_i 1 / (1 + u_i^2 / gamma^2)``.
    """

    family: Family
    bandwidth: float

    def __post_init__(self):
        if not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise InvalidInputError(f"bandwidth must be positive and finite, got {self.bandwidth!r}")

    @classmethod
    def gaussian(cls, gamma: float) -> "ShiftInvariantKernel":
        return cls(Family.GAUSSIAN, float(gamma))

    @classmethod
    def laplacian(cls, lam: float) -> "ShiftInvariantKernel":
        return cls(Family.LAPLACIAN, float(lam))

    @classmethod
    def cauchy(cls, gamma: float) -> "ShiftInvariantKernel":
        return cls(Family.CAUCHY, float(gamma))

    def spec(self) -> str:
        return f"{self.family.value}:{self.bandwidth!r}"

    def __call__(self, u) -> float | np.ndarray:
        return kernel_eval(self, u)


def parse_kernel_spec(spec: str) -> ShiftInvariantKernel:
    """Parse ``gaussian:<gamma>``, ``laplacian:<lambda>`` or ``cauchy:<gamma>``."""
    name, sep, value = spec.strip().partition(":")
    if not sep:
        raise InvalidInputError(f"kernel spec {spec!r} is not of the form <family>:<bandwidth>")
    try:
        family = Family(name.strip().lower())
    except ValueError:
        raise InvalidInputError(f"unknown kernel family {name!r}") from None
    try:
        bandwidth = float(value)
    except ValueError:
        raise InvalidInputError(f"bad bandwidth {value!r} in kernel spec") from None
    return ShiftInvariantKernel(family, bandwidth)


@dataclass(frozen=True)
class BoundedSpec:
    """Magnitude bound ``delta_max`` and resolution bound ``rho_min``."""

    delta_max: float
    rho_min: float

    def __post_init__(self):
        if not (self.rho_min > 0 and math.isfinite(self.delta_max)):
            raise InvalidInputError("bounds must satisfy 0 < rho and finite delta")
        if self.delta_max < self.rho_min:
            raise InvalidInputError(f"delta={self.delta_max} must be >= rho={self.rho_min}")

    def contains(self, x) -> bool:
        x = np.abs(np.asarray(x, dtype=float))
        if not np.all(np.isfinite(x)):
            return False
        nonzero = x[x != 0]
        return bool(np.all(x <= self.delta_max) and np.all(nonzero >= self.rho_min))


def _as_points(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = u.reshape(1)
    if u.shape[-1] < 1:
        raise InvalidInputError("kernel argument must have dimension >= 1")
    if not np.all(np.isfinite(u)):
        raise InvalidInputError("kernel argument has non-finite coordinates")
    return u


def kernel_eval(k: ShiftInvariantKernel, u) -> float | np.ndarray:
    """Evaluate K(u). ``u`` may be a single vector or a stack ``(..., d)``."""
    u = _as_points(u)
    if k.family is Family.GAUSSIAN:
        out = np.exp(-k.bandwidth * np.sum(u * u, axis=-1))
    elif k.family is Family.LAPLACIAN:
        out = np.exp(-k.bandwidth * np.sum(np.abs(u), axis=-1))
    else:
        out = np.prod(1.0 / (1.0 + (u / k.bandwidth) ** 2), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def kernel_distance(k: ShiftInvariantKernel, x, y) -> float:
    """Feature-space distance sqrt(2 - 2 K(x - y))."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise InvalidInputError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return math.sqrt(2.0 * float(one_minus_kernel(k, _as_points(x - y))))


def sample_spectral(k: ShiftInvariantKernel, d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw frequency vector(s) from the Fourier transform of ``k``.

    Returns shape ``(d,)`` when ``size`` is None, else ``(size, d)``.
    """
    if d < 1:
        raise InvalidInputError(f"dimension must be >= 1, got {d}")
    shape = (d,) if size is None else (size, d)
    if k.family is Family.GAUSSIAN:
        return rng.standard_normal(shape) * math.sqrt(2.0 * k.bandwidth)
    if k.family is Family.LAPLACIAN:
        return rng.standard_cauchy(shape) * k.bandwidth
    return rng.laplace(0.0, 1.0 / k.bandwidth, shape)


def one_minus_kernel(k: ShiftInvariantKernel, u: np.ndarray) -> np.ndarray:
    """1 - K(u), accurate near the origin."""
    if k.family is Family.GAUSSIAN:
        return -np.expm1(-k.bandwidth * np.sum(u * u, axis=-1))
    if k.family is Family.LAPLACIAN:
        return -np.expm1(-k.bandwidth * np.sum(np.abs(u), axis=-1))
    return -np.expm1(-np.sum(np.log1p((u / k.bandwidth) ** 2), axis=-1))


def s_k_statistic(k: ShiftInvariantKernel, x) -> float | np.ndarray:
    """(1 + K(2x) - 2 K(x)^2) / (2 (1 - K(x))^2), vectorised over leading axes."""
    x = _as_points(x)
    a = one_minus_kernel(k, x)
    if np.any(a <= 0.0):
        raise UndefinedStatisticError("s_K is undefined where K(x) = 1 (x = 0)")
    b = one_minus_kernel(k, 2.0 * x)
    # numerator rewritten in a = 1 - K(x), b = 1 - K(2x)
    out = (4.0 * a - b - 2.0 * a * a) / (2.0 * a * a)
    return float(out) if np.ndim(out) == 0 else out


def s_k_bounded_sup(k: ShiftInvariantKernel, b: BoundedSpec, dim: int = 1) -> float:
    """Supremum of s_K over (delta, rho)-bounded points, by log-grid search.

    Candidates are a single active coordinate of magnitude m and all ``dim``
    coordinates active at magnitude m, for m on a log grid over [rho, delta];
    m = rho is always included.
    """
    if dim < 1:
        raise InvalidInputError(f"dim must be >= 1, got {dim}")
    if b.delta_max == b.rho_min:
        mags = np.array([b.rho_min])
    else:
        mags = np.geomspace(b.rho_min, b.delta_max, SUP_GRID_POINTS)
        mags[0] = b.rho_min
    single = np.zeros((mags.size, dim))
    single[:, 0] = mags
    best = np.max(s_k_statistic(k, single))
    if dim > 1:
        full = np.repeat(mags[:, None], dim, axis=1)
        best = max(best, np.max(s_k_statistic(k, full)))
    return float(best)
