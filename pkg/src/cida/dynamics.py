"""Discrete-time stochastic models and the unicycle benchmark vehicle.

All model functions broadcast over leading batch dimensions, so the same
call propagates one state or a whole particle cloud.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import ControlBounds, DiagGaussian

SINC_SWITCH = 1e-4

StepFn = Callable[[NDArray, NDArray, NDArray], NDArray]
MeasureFn = Callable[[NDArray, NDArray], NDArray]


@dataclass(frozen=True)
class StochasticModel:
    """``x' = step(x, u, w)``, ``y = measure(x, v)`` with ``w ~ W``, ``v ~ V``.

    ``measure`` must be additive in ``v`` for particle weighting.
    """

    r_x: int
    r_u: int
    r_y: int
    step: StepFn
    measure: MeasureFn
    process_noise: DiagGaussian
    measurement_noise: DiagGaussian
    bounds: ControlBounds

    def __post_init__(self) -> None:
        if self.process_noise.dim != self.r_x:
            raise ValueError("process noise dimension must equal r_x")
        if self.measurement_noise.dim != self.r_y:
            raise ValueError("measurement noise dimension must equal r_y")
        if self.bounds.dim != self.r_u:
            raise ValueError("control bounds dimension must equal r_u")

    def noiseless_step(self, x: ArrayLike, u: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        return self.step(x, np.asarray(u, dtype=float), np.zeros_like(x))

    def predicted_measurement(self, x: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        return self.measure(x, np.zeros(x.shape[:-1] + (self.r_y,)))


@dataclass(frozen=True)
class UnicycleParams:
    tau: float = 0.2
    speed: float = 5.0

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.speed > 0:
            raise ValueError("speed must be positive")


def sinc_stable(t: ArrayLike) -> NDArray[np.float64] | float:
    """Unnormalized sinc ``sin(t)/t`` with a Taylor branch near zero."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < SINC_SWITCH
    safe_t = np.where(small, 1.0, t)
    t2 = t * t
    out = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(safe_t) / safe_t)
    return out[()] if out.ndim == 0 else out


def unicycle_step(
    xi: ArrayLike, omega: ArrayLike, w: ArrayLike, p: UnicycleParams = UnicycleParams()
) -> NDArray[np.float64]:
    """Exact zero-order-hold step of the constant-speed unicycle plus additive noise.

    ``xi`` is ``(..., 3)`` holding ``(x, y, theta)``, ``omega`` is ``(..., 1)``
    and ``w`` is ``(..., 3)``. The heading is left unwrapped.
    """
    xi = np.asarray(xi, dtype=float)
    omega, theta = np.broadcast_arrays(np.asarray(omega, dtype=float)[..., 0], xi[..., 2])
    half = 0.5 * omega * p.tau
    travel = p.tau * p.speed * sinc_stable(half)
    delta = np.stack(
        [travel * np.cos(theta + half), travel * np.sin(theta + half), p.tau * omega],
        axis=-1,
    )
    return xi + delta + np.asarray(w, dtype=float)


def unicycle_measure(xi: ArrayLike, v: ArrayLike) -> NDArray[np.float64]:
    """Noisy position fix ``(x, y) + v``."""
    xi = np.asarray(xi, dtype=float)
    return xi[..., :2] + np.asarray(v, dtype=float)


def unicycle_model(
    params: UnicycleParams = UnicycleParams(),
    process_variances: ArrayLike = (0.2, 0.2, 0.1),
    measurement_variances: ArrayLike = (0.1, 0.1),
    omega_max: float = math.pi,
) -> StochasticModel:
    def step(x, u, w):
        return unicycle_step(x, u, w, params)

    return StochasticModel(
        r_x=3,
        r_u=1,
        r_y=2,
        step=step,
        measure=unicycle_measure,
        process_noise=DiagGaussian.zero_mean(process_variances),
        measurement_noise=DiagGaussian.zero_mean(measurement_variances),
        bounds=ControlBounds([-omega_max], [omega_max]),
    )
