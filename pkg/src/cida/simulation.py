"""Closed-loop benchmark runs and paired CE/CIDA comparisons.

Random streams are keyed by purpose and time step only, so the true-state
noise, measurement noise and filter noise of a seed are identical whichever
controller is in the loop.
"""

from __future__ import annotations

import hashlib
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .config import SCHEMA_VERSION, SimulationConfig
from .core import RngStream, sample_diag_gaussian
from .engine import StepDiagnostics, cida_step, strictly_worse
from .exceptions import FilterDegeneracy
from .particle_filter import ParticleSet, conditional_mean, filter_step

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ("k", "x", "y", "theta", "xhat", "yhat", "thetahat", "u", "violated")


@dataclass
class RunMetrics:
    """Outcome of one closed-loop run.

    Row ``k`` of the trajectory holds the true state and particle-mean
    estimate after the control ``u_k`` was applied, and whether that true
    state lies outside the safe set.
    """

    controller: str
    seed: int
    states: np.ndarray
    estimates: np.ndarray
    controls: np.ndarray
    violated: np.ndarray
    stage_costs: np.ndarray
    per_step_wall_clock: list[float]
    noise_digests: dict[str, str]
    diagnostics: list[StepDiagnostics] = field(default_factory=list)
    dominance_failures: list[int] = field(default_factory=list)
    fallback_steps: int = 0
    degenerate_updates: int = 0

    @property
    def steps(self) -> int:
        return len(self.violated)

    @property
    def violation_steps(self) -> list[int]:
        return [int(k) for k in np.flatnonzero(self.violated)]

    @property
    def violation_count(self) -> int:
        return int(np.count_nonzero(self.violated))

    @property
    def violation_rate(self) -> float:
        return self.violation_count / self.steps

    @property
    def total_cost(self) -> float:
        return float(np.sum(self.stage_costs))

    def trajectory_rows(self) -> list[tuple]:
        return [
            (k, *self.states[k], *self.estimates[k], self.controls[k, 0], int(self.violated[k]))
            for k in range(self.steps)
        ]

    def summary(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "controller": self.controller,
            "seed": self.seed,
            "steps": self.steps,
            "violation_count": self.violation_count,
            "violation_rate": self.violation_rate,
            "violation_steps": self.violation_steps,
            "total_cost": self.total_cost,
            "mean_step_wall_clock": float(np.mean(self.per_step_wall_clock)),
            "fallback_steps": self.fallback_steps,
            "dominance_failures": self.dominance_failures,
            "degenerate_updates": self.degenerate_updates,
            "noise_digests": self.noise_digests,
        }


class _Digest:
    def __init__(self) -> None:
        self._h = hashlib.sha256()

    def add(self, arr: np.ndarray) -> np.ndarray:
        self._h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return arr

    def hexdigest(self) -> str:
        return self._h.hexdigest()


def run_closed_loop(
    cfg: SimulationConfig,
    workers: int = 1,
    keep_diagnostics: bool = False,
    particle_log: list | None = None,
) -> RunMetrics:
    """Simulate the vehicle under the configured controller.

    Each step computes the control from the current filtered density, moves
    the true state with fresh process noise, measures it, and runs one
    filter update. ``particle_log``, when given, receives ``(k, particles)``
    after every update.
    """
    sim = cfg.simulation
    seed = sim.seed
    model = cfg.build_model()
    safe_set = cfg.build_safe_set()
    policy = cfg.build_policy()
    costs = cfg.build_costs()
    cida_cfg = cfg.build_cida()
    prior = cfg.initial_distribution()
    root = RngStream(seed)

    x = sample_diag_gaussian(root.child("truth_init"), prior)
    ps = ParticleSet.from_gaussian(prior, sim.particles, root.child("particles_init"))
    T = sim.steps
    states = np.empty((T, model.r_x))
    estimates = np.empty((T, model.r_x))
    controls = np.empty((T, model.r_u))
    violated = np.zeros(T, dtype=bool)
    stage_costs = np.empty(T)
    wall: list[float] = []
    truth_digest, meas_digest = _Digest(), _Digest()
    metrics_diag: list[StepDiagnostics] = []
    dominance_failures: list[int] = []
    fallback_steps = degenerate_updates = 0
    degenerate_run = 0

    for k in range(T):
        start = time.perf_counter()
        if sim.controller == "ce":
            u = policy.control(conditional_mean(ps))
        else:
            u, diag = cida_step(
                ps, policy, model, safe_set, costs, cida_cfg, root.child("cida", k), workers=workers
            )
            ce = diag.ce_candidate
            if ce is not None and strictly_worse(diag.chosen, ce):
                dominance_failures.append(k)
            fallback_steps += diag.used_fallback
            if keep_diagnostics:
                metrics_diag.append(diag)
        w = truth_digest.add(sample_diag_gaussian(root.child("truth", k), model.process_noise))
        x = model.step(x, u, w)
        v = meas_digest.add(sample_diag_gaussian(root.child("measure", k), model.measurement_noise))
        y = model.measure(x, v)
        ps, degenerate = filter_step(ps, u, y, model, root.child("filter", k))
        wall.append(time.perf_counter() - start)

        degenerate_updates += degenerate
        degenerate_run = degenerate_run + 1 if degenerate else 0
        if degenerate_run > sim.max_degenerate_steps:
            raise FilterDegeneracy(
                f"particle filter degenerate for {degenerate_run} consecutive steps at k={k}"
            )
        states[k], estimates[k], controls[k] = x, conditional_mean(ps), u
        violated[k] = not safe_set.contains(x)
        stage_costs[k] = costs.running(x, u, k)
        if particle_log is not None:
            particle_log.append((k, ps.particles))

    logger.info("%s seed %d: %d violations", sim.controller, seed, int(violated.sum()))
    return RunMetrics(
        controller=sim.controller,
        seed=seed,
        states=states,
        estimates=estimates,
        controls=controls,
        violated=violated,
        stage_costs=stage_costs,
        per_step_wall_clock=wall,
        noise_digests={"truth": truth_digest.hexdigest(), "measurement": meas_digest.hexdigest()},
        diagnostics=metrics_diag,
        dominance_failures=dominance_failures,
        fallback_steps=fallback_steps,
        degenerate_updates=degenerate_updates,
    )


def safety_factor(baseline: int, candidate: int) -> float:
    """Ratio of violation counts ``baseline / candidate``; ``0/0`` counts as 1."""
    if candidate == 0:
        return 1.0 if baseline == 0 else float("inf")
    return baseline / candidate


def _run_one(args: tuple[SimulationConfig, int]) -> RunMetrics:
    cfg, workers = args
    return run_closed_loop(cfg, workers=workers)


def compare_controllers(
    cfg: SimulationConfig,
    seeds: Sequence[int],
    controllers: tuple[str, str] = ("ce", "cida"),
    workers: int = 1,
    processes: int = 1,
) -> tuple[dict[str, Any], list[tuple[RunMetrics, RunMetrics]]]:
    """Paired runs of two controllers on common random numbers.

    Returns the JSON-ready report and the raw ``(baseline, candidate)`` metrics
    per seed. ``processes > 1`` runs the individual simulations in a process pool.
    """
    if not seeds:
        raise ValueError("at least one seed is required")
    jobs = [
        (cfg.replace(simulation={"seed": int(s), "controller": c}), workers)
        for s in seeds
        for c in controllers
    ]
    if processes > 1:
        with ProcessPoolExecutor(max_workers=processes) as pool:
            runs = list(pool.map(_run_one, jobs))
    else:
        runs = [_run_one(job) for job in jobs]
    pairs = [(runs[2 * n], runs[2 * n + 1]) for n in range(len(seeds))]

    entries = []
    for s, (a, b) in zip(seeds, pairs):
        entries.append(
            {
                "seed": int(s),
                "violations": {"baseline": a.violation_count, "candidate": b.violation_count},
                "total_cost": {"baseline": a.total_cost, "candidate": b.total_cost},
                "mean_step_wall_clock": {
                    "baseline": float(np.mean(a.per_step_wall_clock)),
                    "candidate": float(np.mean(b.per_step_wall_clock)),
                },
                "safety_factor": _finite_or_str(safety_factor(a.violation_count, b.violation_count)),
                "common_random_numbers": a.noise_digests == b.noise_digests,
            }
        )
    factors = [safety_factor(a.violation_count, b.violation_count) for a, b in pairs]
    report = {
        "schema_version": SCHEMA_VERSION,
        "controllers": {"baseline": controllers[0], "candidate": controllers[1]},
        "steps": cfg.simulation.steps,
        "seeds": entries,
        "median_violations": {
            "baseline": float(statistics.median(a.violation_count for a, _ in pairs)),
            "candidate": float(statistics.median(b.violation_count for _, b in pairs)),
        },
        "median_safety_factor": _finite_or_str(float(statistics.median(factors))),
    }
    return report, pairs


def _finite_or_str(x: float) -> float | str:
    return x if np.isfinite(x) else "inf"
