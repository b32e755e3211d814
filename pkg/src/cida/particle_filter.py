"""Bootstrap particle filter with systematic resampling at every step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import DiagGaussian, RngStream, sample_diag_gaussian
from .dynamics import StochasticModel


@dataclass(frozen=True)
class ParticleSet:
    """Equiprobable particle cloud, shape ``(L, r_x)``."""

    particles: NDArray[np.float64]

    def __post_init__(self) -> None:
        arr = np.array(self.particles, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("particles must be a nonempty (L, r_x) array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("particles must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "particles", arr)

    @property
    def L(self) -> int:
        return self.particles.shape[0]

    @property
    def r_x(self) -> int:
        return self.particles.shape[1]

    @classmethod
    def from_gaussian(cls, dist: DiagGaussian, L: int, stream: RngStream) -> ParticleSet:
        return cls(sample_diag_gaussian(stream, dist, size=L))

    @classmethod
    def point(cls, x: ArrayLike, L: int = 1) -> ParticleSet:
        x = np.asarray(x, dtype=float)
        return cls(np.tile(x, (L, 1)))


def time_update(
    ps: ParticleSet, u: ArrayLike, model: StochasticModel, stream: RngStream
) -> ParticleSet:
    """Propagate every particle through the state equation with fresh process noise."""
    w = sample_diag_gaussian(stream, model.process_noise, size=ps.L)
    u = np.broadcast_to(np.asarray(u, dtype=float), (ps.L, model.r_u))
    return ParticleSet(model.step(ps.particles, u, w))


def measurement_weights(
    ps: ParticleSet, y: ArrayLike, model: StochasticModel
) -> tuple[NDArray[np.float64], bool]:
    """Normalized likelihood weights of the particles given observation ``y``.

    Returns ``(weights, degenerate)``. When no particle has a finite
    log-likelihood the weights fall back to uniform and ``degenerate`` is True.
    """
    residual = np.asarray(y, dtype=float) - model.predicted_measurement(ps.particles)
    with np.errstate(over="ignore", invalid="ignore"):
        loglik = model.measurement_noise.logpdf(residual)
    top = np.max(loglik)
    if not np.isfinite(top):
        return np.full(ps.L, 1.0 / ps.L), True
    w = np.exp(loglik - top)
    return w / w.sum(), False


def systematic_indices(weights: ArrayLike, u: float, n_out: int | None = None) -> NDArray[np.intp]:
    """Indices picked by stratified points ``(u + j) / n`` with offset ``u`` in ``[0, 1)``."""
    weights = np.asarray(weights, dtype=float)
    n = weights.size if n_out is None else n_out
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    points = (u + np.arange(n)) / n
    return np.minimum(np.searchsorted(cum, points, side="right"), weights.size - 1)


def resample(ps: ParticleSet, w: ArrayLike, stream: RngStream) -> ParticleSet:
    w = np.asarray(w, dtype=float)
    if w.shape != (ps.L,):
        raise ValueError("weight vector length must equal particle count")
    offset = stream.generator().random()
    return ParticleSet(ps.particles[systematic_indices(w, offset)])


def conditional_mean(ps: ParticleSet) -> NDArray[np.float64]:
    return ps.particles.mean(axis=0)


def filter_step(
    ps: ParticleSet,
    u: ArrayLike,
    y: ArrayLike,
    model: StochasticModel,
    stream: RngStream,
) -> tuple[ParticleSet, bool]:
    """Time update, measurement weighting and resampling in one call.

    Draws come from the ``"propagate"`` and ``"resample"`` children of ``stream``.
    """
    predicted = time_update(ps, u, model, stream.child("propagate"))
    w, degenerate = measurement_weights(predicted, y, model)
    return resample(predicted, w, stream.child("resample")), degenerate
