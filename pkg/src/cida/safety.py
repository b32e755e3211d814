"""Barrier-function safe sets, orbit vector field and the CBF safety filter.

The filter projects a baseline velocity ``u0`` onto the polyhedron

    grad h_m(p) . u >= -c * h_m(p)    for every obstacle m

by enumerating active sets of at most two constraints, which is exact for a
two-dimensional decision variable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import DegenerateGradient, InfeasibleQP, ZeroControl

QP_TOL = 1e-9

# Status codes returned by the batched routines.
OK = 0
INFEASIBLE = 1
DEGENERATE = 2
ZERO_CONTROL = 3
UNDEFINED_HEADING = 4
RELAXED = 5

_STATUS_ERRORS = {
    INFEASIBLE: (InfeasibleQP, "barrier constraints admit no solution"),
    DEGENERATE: (DegenerateGradient, "violated barrier constraint has zero gradient"),
    ZERO_CONTROL: (ZeroControl, "filtered velocity is zero"),
}


def wrap_angle(a: ArrayLike) -> NDArray[np.float64] | float:
    """Map angles into ``(-pi, pi]``."""
    out = math.pi - np.mod(math.pi - np.asarray(a, dtype=float), 2.0 * math.pi)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class CircularBarrier:
    center: tuple[float, float]
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("barrier radius must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))


def barrier_value(b: CircularBarrier, p: ArrayLike) -> NDArray[np.float64] | float:
    """``|p - center|^2 - radius^2``; positive outside the disk."""
    d = np.asarray(p, dtype=float) - np.asarray(b.center)
    out = np.sum(d * d, axis=-1) - b.radius**2
    return out[()] if np.ndim(out) == 0 else out


def barrier_gradient(b: CircularBarrier, p: ArrayLike) -> NDArray[np.float64]:
    return 2.0 * (np.asarray(p, dtype=float) - np.asarray(b.center))


@dataclass(frozen=True)
class SafeSet:
    """Intersection of the exteriors of circular obstacles.

    ``class_kappa_gain`` is the slope ``c`` of the linear class-K function
    ``c * h`` used by the barrier condition.
    """

    barriers: tuple[CircularBarrier, ...]
    class_kappa_gain: float = 0.05
    centers: NDArray[np.float64] = field(init=False, repr=False, compare=False)
    radii: NDArray[np.float64] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        barriers = tuple(self.barriers)
        if not barriers:
            raise ValueError("a safe set needs at least one barrier")
        if not self.class_kappa_gain > 0:
            raise ValueError("class_kappa_gain must be positive")
        object.__setattr__(self, "barriers", barriers)
        centers = np.array([b.center for b in barriers], dtype=float)
        radii = np.array([b.radius for b in barriers], dtype=float)
        centers.setflags(write=False)
        radii.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)

    @classmethod
    def from_obstacles(
        cls, obstacles: Sequence[tuple[tuple[float, float], float]], class_kappa_gain: float = 0.05
    ) -> SafeSet:
        return cls(tuple(CircularBarrier(c, r) for c, r in obstacles), class_kappa_gain)

    def values(self, positions: ArrayLike) -> NDArray[np.float64]:
        """Barrier values, shape ``(..., m)``."""
        d = np.asarray(positions, dtype=float)[..., None, :] - self.centers
        return np.sum(d * d, axis=-1) - self.radii**2

    def gradients(self, positions: ArrayLike) -> NDArray[np.float64]:
        """Barrier gradients, shape ``(..., m, 2)``."""
        return 2.0 * (np.asarray(positions, dtype=float)[..., None, :] - self.centers)

    def contains(self, states: ArrayLike) -> NDArray[np.bool_]:
        """Membership of the closed safe set; the first two state entries are the position."""
        x = np.asarray(states, dtype=float)
        px, py = x[..., 0], x[..., 1]
        inside = np.zeros(px.shape, dtype=bool)
        for (cx, cy), r in zip(self.centers, self.radii):
            inside |= (px - cx) ** 2 + (py - cy) ** 2 < r * r
        return ~inside


def is_safe(s: SafeSet, x: ArrayLike) -> bool:
    return bool(s.contains(x))


@dataclass(frozen=True)
class OrbitField:
    """Clockwise circular-orbit vector field centred at the origin."""

    radius: float = 10.0
    gain: float = 0.3
    speed: float = 5.0

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("orbit radius must be positive")
        if not self.gain > 0:
            raise ValueError("field gain must be positive")
        if not self.speed > 0:
            raise ValueError("speed must be positive")

    def heading(self, positions: ArrayLike) -> NDArray[np.float64]:
        """Desired heading in ``(-pi, pi]``; NaN at the orbit centre."""
        p = np.asarray(positions, dtype=float)
        px, py = p[..., 0], p[..., 1]
        d = np.hypot(px, py)
        theta = wrap_angle(np.arctan2(py, px) - 0.5 * math.pi - np.arctan(self.gain * (d - self.radius)))
        return np.where(d > 0, theta, np.nan)

    def velocity(self, positions: ArrayLike) -> NDArray[np.float64]:
        theta = self.heading(positions)
        return self.speed * np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def vector_field_heading(f: OrbitField, p: ArrayLike) -> float:
    p = np.asarray(p, dtype=float)
    if p[0] == 0.0 and p[1] == 0.0:
        raise ValueError("heading is undefined at the orbit centre")
    return float(f.heading(p))


def _subsets(m: int) -> list[tuple[int, ...]]:
    return [()] + [(i,) for i in range(m)] + list(itertools.combinations(range(m), 2))


def qp_safety_filter_batch(
    u0: ArrayLike, positions: ArrayLike, s: SafeSet, include: ArrayLike | None = None
) -> tuple[NDArray[np.float64], NDArray[np.int8]]:
    """Solve the safety-filter QP for a batch of ``(u0, position)`` pairs.

    Returns ``(u_star, status)`` with shapes ``(B, 2)`` and ``(B,)``. Rows with
    nonzero status hold NaN. Candidate active sets are scanned in the order
    empty, singletons, pairs; equal objectives keep the earliest.
    ``include`` is an optional ``(B, m)`` mask of constraints to keep.
    """
    u0 = np.atleast_2d(np.asarray(u0, dtype=float))
    p = np.atleast_2d(np.asarray(positions, dtype=float))
    u0, p = np.broadcast_arrays(u0, p)
    B = u0.shape[0]
    G = s.gradients(p)  # (B, m, 2)
    rhs = -s.class_kappa_gain * s.values(p)  # (B, m)
    if include is not None:
        drop = ~np.broadcast_to(np.asarray(include, dtype=bool), rhs.shape)
        G = np.where(drop[..., None], 0.0, G)
        rhs = np.where(drop, -1.0, rhs)
    gsq = np.sum(G * G, axis=-1)
    flat = gsq <= 1e-24
    degenerate = np.any(flat & (rhs > 0), axis=-1)

    m = len(s.barriers)
    subsets = _subsets(m)
    cand = np.empty((B, len(subsets), 2))
    valid = np.ones((B, len(subsets)), dtype=bool)
    resid = rhs - np.einsum("bmj,bj->bm", G, u0)  # b - g.u0
    with np.errstate(divide="ignore", invalid="ignore"):
        for c, sub in enumerate(subsets):
            if len(sub) == 0:
                cand[:, c] = u0
            elif len(sub) == 1:
                (i,) = sub
                lam = resid[:, i] / gsq[:, i]
                cand[:, c] = u0 + lam[:, None] * G[:, i]
                valid[:, c] = ~flat[:, i] & (lam >= -QP_TOL)
            else:
                i, j = sub
                gij = np.sum(G[:, i] * G[:, j], axis=-1)
                det = gsq[:, i] * gsq[:, j] - gij * gij
                ok = det > 1e-12 * gsq[:, i] * gsq[:, j]
                lam_i = (gsq[:, j] * resid[:, i] - gij * resid[:, j]) / det
                lam_j = (gsq[:, i] * resid[:, j] - gij * resid[:, i]) / det
                cand[:, c] = u0 + lam_i[:, None] * G[:, i] + lam_j[:, None] * G[:, j]
                valid[:, c] = ok & (lam_i >= -QP_TOL) & (lam_j >= -QP_TOL)
    slack = np.einsum("bmj,bcj->bcm", G, cand) - rhs[:, None, :]
    valid &= np.all(slack >= -QP_TOL, axis=-1) & np.all(np.isfinite(cand), axis=-1)
    obj = np.where(valid, np.sum((cand - u0[:, None, :]) ** 2, axis=-1), np.inf)
    best = np.argmin(obj, axis=-1)
    u_star = cand[np.arange(B), best]

    status = np.zeros(B, dtype=np.int8)
    status[~np.any(valid, axis=-1)] = INFEASIBLE
    status[degenerate] = DEGENERATE
    status[~np.all(np.isfinite(u0), axis=-1)] = UNDEFINED_HEADING
    u_star[status != OK] = np.nan
    return u_star, status


def _raise_for_status(code: int) -> None:
    if code == UNDEFINED_HEADING:
        raise ValueError("baseline heading is undefined at the orbit centre")
    if code not in (OK, RELAXED):
        exc, msg = _STATUS_ERRORS[code]
        raise exc(msg)


def qp_safety_filter(u0: ArrayLike, p: ArrayLike, s: SafeSet) -> NDArray[np.float64]:
    """Closest velocity to ``u0`` satisfying every barrier constraint at ``p``.

    Raises
    ------
    InfeasibleQP
        The constraint polyhedron is empty.
    DegenerateGradient
        ``p`` sits at an obstacle centre, where the constraint cannot be met.
    """
    u_star, status = qp_safety_filter_batch(u0, p, s)
    _raise_for_status(int(status[0]))
    return u_star[0]


def safe_heading_batch(
    positions: ArrayLike, s: SafeSet, f: OrbitField, relax_infeasible: bool = False
) -> tuple[NDArray[np.float64], NDArray[np.int8]]:
    """Heading of the filtered field velocity, with per-row status codes.

    With ``relax_infeasible``, rows whose QP is infeasible are re-solved with
    only the constraints of the obstacles that contain the position, and get
    status ``RELAXED``.
    """
    p = np.atleast_2d(np.asarray(positions, dtype=float))
    u0 = f.velocity(p)
    u_star, status = qp_safety_filter_batch(u0, p, s)
    if relax_infeasible:
        bad = np.flatnonzero(status == INFEASIBLE)
        if bad.size:
            u_r, st_r = qp_safety_filter_batch(u0[bad], p[bad], s, include=s.values(p[bad]) < 0)
            u_star[bad] = u_r
            status[bad] = np.where(st_r == OK, RELAXED, st_r)
    usable = (status == OK) | (status == RELAXED)
    zero = usable & (np.hypot(u_star[:, 0], u_star[:, 1]) <= 1e-12)
    status = np.where(zero, ZERO_CONTROL, status).astype(np.int8)
    usable &= ~zero
    theta = np.where(usable, np.arctan2(u_star[:, 1], u_star[:, 0]), np.nan)
    return theta, status


def safe_heading(p: ArrayLike, s: SafeSet, f: OrbitField) -> float:
    theta, status = safe_heading_batch(p, s, f)
    _raise_for_status(int(status[0]))
    return float(theta[0])


@dataclass(frozen=True)
class HeadingTrackingPolicy:
    """Turn-rate policy ``sat(gain * wrap(theta_safe(x, y) - theta))``.

    Calling it on a ``(B, 3)`` batch of states returns ``(B, 1)`` turn rates;
    rows where the safety filter fails are NaN. ``relax_infeasible`` selects
    the relaxed filter of :func:`safe_heading_batch` for positions where the
    stacked constraints are infeasible.
    """

    safe_set: SafeSet
    orbit: OrbitField = OrbitField()
    gain: float = 5.0
    omega_max: float = math.pi
    relax_infeasible: bool = False

    def heading_error(self, states: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.int8]]:
        x = np.atleast_2d(np.asarray(states, dtype=float))
        theta_star, status = safe_heading_batch(
            x[:, :2], self.safe_set, self.orbit, self.relax_infeasible
        )
        return wrap_angle(theta_star - x[:, 2]), status

    def __call__(self, states: ArrayLike) -> NDArray[np.float64]:
        err, _ = self.heading_error(states)
        return np.clip(self.gain * err, -self.omega_max, self.omega_max)[:, None]

    def control(self, xi: ArrayLike) -> NDArray[np.float64]:
        """Turn rate for a single state; raises the safety-filter error on failure."""
        err, status = self.heading_error(xi)
        _raise_for_status(int(status[0]))
        return np.clip(self.gain * err, -self.omega_max, self.omega_max)


def heading_tracking_policy(
    xi: ArrayLike,
    s: SafeSet,
    f: OrbitField,
    gain: float = 5.0,
    omega_max: float = math.pi,
) -> NDArray[np.float64]:
    """Turn rate steering the heading of state ``xi`` toward the safe field heading."""
    return HeadingTrackingPolicy(s, f, gain, omega_max).control(xi)
