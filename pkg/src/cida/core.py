"""Shared numeric types, noise specifications and seeded random streams."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray


def _frozen_array(values: ArrayLike) -> NDArray[np.float64]:
    arr = np.array(values, dtype=float, ndmin=1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ControlBounds:
    """Elementwise box ``lower <= u <= upper`` on the control vector."""

    lower: NDArray[np.float64]
    upper: NDArray[np.float64]

    def __post_init__(self) -> None:
        lower, upper = _frozen_array(self.lower), _frozen_array(self.upper)
        if lower.shape != upper.shape:
            raise ValueError("lower and upper bounds must have the same length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("control bounds must be finite")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    def clip(self, u: ArrayLike) -> NDArray[np.float64]:
        return np.clip(u, self.lower, self.upper)

    def contains(self, u: ArrayLike) -> NDArray[np.bool_]:
        """Row-wise membership test; accepts a single vector or a batch."""
        u = np.asarray(u, dtype=float)
        return np.all((u >= self.lower) & (u <= self.upper), axis=-1)


@dataclass(frozen=True)
class DiagGaussian:
    """Gaussian with diagonal covariance, given by its variances."""

    mean: NDArray[np.float64]
    variances: NDArray[np.float64]

    def __post_init__(self) -> None:
        mean, var = _frozen_array(self.mean), _frozen_array(self.variances)
        if mean.shape != var.shape:
            raise ValueError("mean and variances must have the same length")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(var))):
            raise ValueError("mean and variances must be finite")
        if np.any(var < 0):
            raise ValueError("variances must be nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variances", var)

    @classmethod
    def zero_mean(cls, variances: ArrayLike) -> DiagGaussian:
        var = np.asarray(variances, dtype=float)
        return cls(np.zeros_like(var), var)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def std(self) -> NDArray[np.float64]:
        return np.sqrt(self.variances)

    def scaled(self, factor: float) -> DiagGaussian:
        """Same mean, standard deviations multiplied by ``factor``."""
        if factor < 0:
            raise ValueError("scale factor must be nonnegative")
        return DiagGaussian(self.mean, self.variances * factor**2)

    def logpdf(self, x: ArrayLike) -> NDArray[np.float64]:
        """Log-density over the last axis. Zero-variance coordinates are ignored."""
        x = np.asarray(x, dtype=float)
        active = self.variances > 0
        diff = (x - self.mean)[..., active]
        var = self.variances[active]
        return -0.5 * np.sum(diff**2 / var + np.log(2.0 * math.pi * var), axis=-1)


@dataclass(frozen=True)
class ChanceParams:
    """Chance-constraint and horizon parameters of one CIDA solve.

    ``epsilon`` is the tolerated violation probability, ``alpha`` the
    statistical violation rate accepted among the ``M`` scenarios, and
    ``delta`` the confidence parameter. ``R`` sampled rollouts are scored
    over a horizon of ``N`` steps with discount ``gamma``.
    """

    epsilon: float = 0.15
    alpha: float = 0.05
    delta: float = 0.05
    M: int = 150
    R: int = 150
    N: int = 10
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must lie in [0, 1)")
        if not 0.0 <= self.alpha < self.epsilon:
            raise ValueError("alpha must lie in [0, epsilon)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        for name in ("M", "R", "N"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    @property
    def min_scenarios(self) -> int:
        return hoeffding_min_samples(self.epsilon, self.alpha, self.delta)

    @property
    def certified(self) -> bool:
        """Whether ``M`` is large enough for the (epsilon, delta) guarantee."""
        return self.M >= self.min_scenarios


def hoeffding_min_samples(epsilon: float, alpha: float, delta: float) -> int:
    """Smallest scenario count ``M`` with ``M >= ln(1/delta) / (2 (epsilon - alpha)^2)``.

    A control sequence that passes the statistical test at rate ``alpha``
    with this many scenarios violates the ``epsilon`` chance constraint with
    probability at most ``delta``.

    >>> hoeffding_min_samples(0.15, 0.05, 0.05)
    150
    """
    if not 0.0 <= alpha < epsilon < 1.0:
        raise ValueError(f"require 0 <= alpha < epsilon < 1, got alpha={alpha}, epsilon={epsilon}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    bound = math.log(1.0 / delta) / (2.0 * (epsilon - alpha) ** 2)
    return max(1, math.ceil(bound))


def _encode_component(part: object) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if isinstance(part, (bool, np.bool_)):
        raise TypeError("stream id components must be str or nonnegative int")
    if isinstance(part, (int, np.integer)) and part >= 0:
        return int(part)
    raise TypeError(f"invalid stream id component {part!r}")


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream addressed by ``(seed, stream_id)``.

    The id is a tuple such as ``("scenario", t, i)``. Equal addresses give
    identical draws; distinct addresses give independent Philox keys, so
    work can be split across workers in any order without changing results.
    """

    seed: int
    stream_id: tuple = field(default=())

    def __post_init__(self) -> None:
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream_id", tuple(self.stream_id))
        for part in self.stream_id:
            _encode_component(part)

    def child(self, *parts: object) -> RngStream:
        return RngStream(self.seed, self.stream_id + parts)

    def generator(self) -> np.random.Generator:
        key = tuple(_encode_component(p) for p in self.stream_id)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=key)
        return np.random.Generator(np.random.Philox(seq))


def sample_diag_gaussian(
    stream: RngStream | np.random.Generator,
    spec: DiagGaussian,
    size: int | tuple[int, ...] | None = None,
) -> NDArray[np.float64]:
    """Draw ``mean + sqrt(variances) * z`` with ``z`` standard normal.

    ``size`` prepends batch dimensions. Passing a ``Generator`` continues an
    already-open stream instead of restarting it.
    """
    rng = stream.generator() if isinstance(stream, RngStream) else stream
    shape = () if size is None else (size,) if isinstance(size, int) else tuple(size)
    z = rng.standard_normal(shape + (spec.dim,))
    return spec.mean + spec.std * z
