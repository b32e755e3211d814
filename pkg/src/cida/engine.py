"""Control importance distribution random search (CIDA).

Each receding-horizon step draws ``R`` control sequences by simulating the
deterministic safe policy on noisy rollouts that start from particles, adds
the certainty-equivalence sequence, and scores every sequence on ``M``
independent scenarios. The first control of the cheapest statistically
feasible sequence is applied.

Candidate ``i`` uses its own random streams ``("rollout", i)`` and
``("scenario", i)`` under the step stream, so splitting candidates across
worker threads cannot change any result.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Literal, Protocol, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import ChanceParams, RngStream
from .dynamics import StochasticModel
from .exceptions import NoCandidate, NoFeasibleCandidate, SafetyFilterError
from .particle_filter import ParticleSet, conditional_mean

Policy = Callable[[NDArray[np.float64]], NDArray[np.float64]]
"""Maps a ``(B, r_x)`` batch of states to ``(B, r_u)`` controls; NaN rows mark failures."""

SAMPLED = "sampled"
CERTAINTY_EQUIVALENCE = "certainty_equivalence"


class SafeRegion(Protocol):
    def contains(self, states: NDArray[np.float64]) -> NDArray[np.bool_]: ...


@dataclass(frozen=True)
class StageCost:
    """Vectorized stage costs ``running(x, u, k)`` and ``terminal(x)``."""

    running: Callable[[NDArray, NDArray, int], NDArray]
    terminal: Callable[[NDArray], NDArray]


def orbit_tracking_cost(radius: float = 10.0) -> StageCost:
    """Squared radial distance from the orbit, used as both stage and terminal cost."""

    def err(x):
        return (np.hypot(x[..., 0], x[..., 1]) - radius) ** 2

    return StageCost(running=lambda x, u, k: err(x), terminal=err)


@dataclass(frozen=True)
class CidaConfig:
    chance: ChanceParams = ChanceParams()
    constraint_mode: Literal["hard", "soft"] = "soft"
    search_noise_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.constraint_mode not in ("hard", "soft"):
            raise ValueError("constraint_mode must be 'hard' or 'soft'")
        if not self.search_noise_scale >= 0:
            raise ValueError("search_noise_scale must be nonnegative")


@dataclass
class RolloutCandidate:
    """One scored control sequence.

    ``feasibility[k-1]`` is the fraction of scenarios inside the safe set at
    step ``k``. ``cost`` is infinite for infeasible candidates in hard mode.
    """

    index: int
    origin: str
    controls: NDArray[np.float64]
    feasibility: NDArray[np.float64]
    cost: float
    feasible: bool

    @property
    def min_feasibility(self) -> float:
        return float(np.min(self.feasibility))

    def summary(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "origin": self.origin,
            "cost": _json_float(self.cost),
            "min_feasibility": self.min_feasibility,
            "feasible": self.feasible,
        }


def _json_float(x: float) -> float | str:
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")


@dataclass
class StepDiagnostics:
    candidates: list[RolloutCandidate]
    selected: int
    n_failed: int
    used_fallback: bool
    certified: bool
    wall_clock: float = 0.0
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def chosen(self) -> RolloutCandidate:
        return self.candidates[self.selected]

    @property
    def ce_candidate(self) -> RolloutCandidate | None:
        for c in self.candidates:
            if c.origin == CERTAINTY_EQUIVALENCE:
                return c
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "selected": self.selected,
            "selected_index": self.chosen.index,
            "n_failed": self.n_failed,
            "used_fallback": self.used_fallback,
            "certified": self.certified,
            "wall_clock": self.wall_clock,
            "candidates": [c.summary() for c in self.candidates],
        }


def strictly_worse(a: RolloutCandidate, b: RolloutCandidate) -> bool:
    """True when ``a`` loses to ``b`` on feasibility first, then on cost.

    Among infeasible candidates the worst-step safety fraction is compared
    before cost, matching the fallback rule.
    """
    if a.feasible != b.feasible:
        return b.feasible
    if not a.feasible:
        if a.min_feasibility != b.min_feasibility:
            return a.min_feasibility < b.min_feasibility
    return a.cost > b.cost


def _rollout_controls(
    x0: NDArray, noise: NDArray, policy: Policy, model: StochasticModel
) -> tuple[NDArray, NDArray]:
    """Closed-loop rollouts of ``policy``; returns ``(controls (B, N, r_u), ok (B,))``."""
    B, N = noise.shape[:2]
    controls = np.empty((B, N, model.r_u))
    x = np.array(x0, dtype=float)
    for k in range(N):
        u = np.asarray(policy(x), dtype=float).reshape(B, model.r_u)
        controls[:, k] = u
        # failed rows keep propagating on zeros and are discarded afterwards
        x = model.step(x, np.nan_to_num(u), noise[:, k])
    ok = np.all(np.isfinite(controls), axis=(1, 2))
    return controls, ok


def _draw_rollout(
    ps: ParticleSet, model: StochasticModel, N: int, stream: RngStream, noise_scale: float
) -> tuple[NDArray, NDArray]:
    rng = stream.generator()
    x0 = ps.particles[rng.integers(ps.L)]
    z = rng.standard_normal((N, model.r_x))
    noise = model.process_noise.mean + noise_scale * model.process_noise.std * z
    return x0, noise


def sample_control_sequence(
    ps: ParticleSet,
    policy: Policy,
    model: StochasticModel,
    N: int,
    stream: RngStream,
    noise_scale: float = 1.0,
) -> NDArray[np.float64]:
    """Draw one ``(N, r_u)`` control sequence from the importance distribution.

    The rollout starts from a uniformly chosen particle and runs the policy in
    closed loop with process noise scaled by ``noise_scale``.
    """
    x0, noise = _draw_rollout(ps, model, N, stream, noise_scale)
    controls, ok = _rollout_controls(x0[None], noise[None], policy, model)
    if not ok[0]:
        raise SafetyFilterError("policy failed along the sampled rollout")
    return controls[0]


def certainty_equivalence_sequence(
    ps: ParticleSet, policy: Policy, model: StochasticModel, N: int
) -> NDArray[np.float64]:
    """Policy rollout from the particle mean with zero process noise."""
    x0 = conditional_mean(ps)
    noise = np.zeros((1, N, model.r_x))
    controls, ok = _rollout_controls(x0[None], noise, policy, model)
    if not ok[0]:
        raise SafetyFilterError("policy failed along the certainty-equivalence rollout")
    return controls[0]


def _evaluate_batch(
    controls: NDArray,
    ps: ParticleSet,
    model: StochasticModel,
    safe_set: SafeRegion,
    costs: StageCost,
    chance: ChanceParams,
    streams: Sequence[RngStream],
) -> tuple[NDArray, NDArray]:
    """Scenario scoring of ``B`` sequences; returns ``(feasibility (B, N), cost (B,))``."""
    B, N = controls.shape[:2]
    M = chance.M
    x = np.empty((B, M, model.r_x))
    w = np.empty((B, N, M, model.r_x))
    std, mean = model.process_noise.std, model.process_noise.mean
    for b, stream in enumerate(streams):
        rng = stream.generator()
        x[b] = ps.particles[rng.integers(0, ps.L, size=M)]
        w[b] = mean + std * rng.standard_normal((N, M, model.r_x))
    safe_counts = np.empty((B, N), dtype=np.int64)
    total = np.zeros((B, M))
    discount = 1.0
    for k in range(N):
        u = np.broadcast_to(controls[:, k][:, None, :], (B, M, model.r_u))
        total += discount * costs.running(x, u, k)
        x = model.step(x, u, w[:, k])
        safe_counts[:, k] = np.count_nonzero(safe_set.contains(x), axis=-1)
        discount *= chance.gamma
    total += discount * costs.terminal(x)
    return safe_counts / M, total.mean(axis=-1)


def _make_candidate(
    index: int, origin: str, controls: NDArray, a: NDArray, cost: float, chance: ChanceParams, mode: str
) -> RolloutCandidate:
    feasible = bool(np.all(a >= 1.0 - chance.alpha))
    if mode == "hard" and not feasible:
        cost = math.inf
    return RolloutCandidate(index, origin, controls, a, float(cost), feasible)


def evaluate_candidate(
    controls: ArrayLike,
    ps: ParticleSet,
    model: StochasticModel,
    safe_set: SafeRegion,
    costs: StageCost,
    chance: ChanceParams,
    stream: RngStream,
    constraint_mode: str = "hard",
    index: int = 0,
    origin: str = SAMPLED,
) -> RolloutCandidate:
    """Score a fixed open-loop sequence on ``chance.M`` independent scenarios.

    Scenario initial states are drawn from the particles with replacement.
    """
    controls = np.asarray(controls, dtype=float)
    if controls.ndim == 1:
        controls = controls[:, None]
    if controls.shape[0] != chance.N:
        raise ValueError(f"expected {chance.N} controls, got {controls.shape[0]}")
    a, cost = _evaluate_batch(controls[None], ps, model, safe_set, costs, chance, [stream])
    return _make_candidate(index, origin, controls, a[0], cost[0], chance, constraint_mode)


def select_fallback(candidates: Sequence[RolloutCandidate]) -> int:
    """Position of the candidate whose worst-step safety fraction is largest.

    Ties go to the lower cost, then to the earlier position.
    """
    if not candidates:
        raise ValueError("no candidates to choose from")
    return min(
        range(len(candidates)),
        key=lambda n: (-candidates[n].min_feasibility, candidates[n].cost, n),
    )


def _select(candidates: Sequence[RolloutCandidate], mode: str) -> tuple[int, bool]:
    feasible = [n for n, c in enumerate(candidates) if c.feasible]
    if feasible:
        return min(feasible, key=lambda n: (candidates[n].cost, n)), False
    if mode == "hard":
        raise NoFeasibleCandidate("no candidate passed the statistical feasibility test")
    return select_fallback(candidates), True


def _chunks(n: int, parts: int) -> list[range]:
    parts = max(1, min(parts, n))
    edges = np.linspace(0, n, parts + 1).round().astype(int)
    return [range(edges[j], edges[j + 1]) for j in range(parts) if edges[j + 1] > edges[j]]


def cida_step(
    ps: ParticleSet,
    policy: Policy,
    model: StochasticModel,
    safe_set: SafeRegion,
    costs: StageCost,
    cfg: CidaConfig,
    stream: RngStream,
    workers: int = 1,
) -> tuple[NDArray[np.float64], StepDiagnostics]:
    """One receding-horizon CIDA decision.

    Candidate 0 is the certainty-equivalence sequence; candidates ``1..R``
    are sampled. Returns the first control of the selected sequence and the
    step diagnostics. ``workers`` only affects speed.
    """
    start = time.perf_counter()
    chance = cfg.chance
    N, R = chance.N, chance.R

    def run(indices: range) -> list[tuple[int, NDArray, NDArray, float] | None]:
        x0 = np.empty((len(indices), model.r_x))
        noise = np.empty((len(indices), N, model.r_x))
        for row, i in enumerate(indices):
            if i == 0:
                x0[row] = conditional_mean(ps)
                noise[row] = 0.0
            else:
                x0[row], noise[row] = _draw_rollout(
                    ps, model, N, stream.child("rollout", i), cfg.search_noise_scale
                )
        controls, ok = _rollout_controls(x0, noise, policy, model)
        kept = [row for row in range(len(indices)) if ok[row]]
        out: list = [None] * len(indices)
        if kept:
            a, cost = _evaluate_batch(
                controls[kept],
                ps,
                model,
                safe_set,
                costs,
                chance,
                [stream.child("scenario", indices[row]) for row in kept],
            )
            for n, row in enumerate(kept):
                out[row] = (indices[row], controls[row], a[n], cost[n])
        return out

    chunks = _chunks(R + 1, workers)
    if len(chunks) == 1:
        results = [run(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            results = list(pool.map(run, chunks))

    candidates: list[RolloutCandidate] = []
    n_failed = 0
    for part in results:
        for item in part:
            if item is None:
                n_failed += 1
                continue
            i, controls, a, cost = item
            origin = CERTAINTY_EQUIVALENCE if i == 0 else SAMPLED
            candidates.append(_make_candidate(i, origin, controls, a, cost, chance, cfg.constraint_mode))
    if not candidates:
        raise NoCandidate(f"all {R + 1} rollouts failed")
    selected, fallback = _select(candidates, cfg.constraint_mode)
    diag = StepDiagnostics(
        candidates=candidates,
        selected=selected,
        n_failed=n_failed,
        used_fallback=fallback,
        certified=chance.certified,
        wall_clock=time.perf_counter() - start,
    )
    return candidates[selected].controls[0].copy(), diag
