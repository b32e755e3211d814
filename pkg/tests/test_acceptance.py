"""Acceptance gate: one test per criterion, each printing a pass/fail line.

The benchmark criteria run the full 750-step configuration and take a few
minutes on a single core.
"""

import math
import os
import statistics
import time
from statistics import NormalDist

import numpy as np
import pytest

from cida.cli import main
from cida.config import SimulationConfig
from cida.core import ChanceParams, ControlBounds, DiagGaussian, RngStream, hoeffding_min_samples
from cida.dynamics import StochasticModel, unicycle_step
from cida.engine import StageCost, cida_step, evaluate_candidate
from cida.particle_filter import ParticleSet, conditional_mean, filter_step, measurement_weights, time_update
from cida.safety import OK, CircularBarrier, SafeSet, qp_safety_filter_batch
from cida.simulation import compare_controllers, run_closed_loop

from conftest import grid_qp_oracle, rk4_unicycle

BENCHMARK_SEEDS = (1, 2, 3, 4, 5)


def scalar_linear(a=1.0, w_var=1.0, v_var=1.0):
    """``x' = a x + u + w``, ``y = x + v``."""
    return StochasticModel(
        r_x=1,
        r_u=1,
        r_y=1,
        step=lambda x, u, w: a * x + u + w,
        measure=lambda x, v: x + v,
        process_noise=DiagGaussian.zero_mean([w_var]),
        measurement_noise=DiagGaussian.zero_mean([v_var]),
        bounds=ControlBounds([-10.0], [10.0]),
    )


def test_criterion_1_hoeffding_bound(acceptance_report, capsys):
    start = time.perf_counter()
    n = hoeffding_min_samples(0.15, 0.05, 0.05)
    elapsed = time.perf_counter() - start
    capsys.readouterr()
    assert main(["bound", "--epsilon", "0.15", "--alpha", "0.05", "--delta", "0.05"]) == 0
    printed = capsys.readouterr().out
    ok = n == 150 and printed == "150\n" and elapsed < 1e-3
    acceptance_report(1, ok, f"bound prints {printed.strip()!r}, computed in {elapsed * 1e6:.1f} us")
    assert ok


def test_criterion_2_false_pass_rate(acceptance_report):
    # one step of x' = x + w from x = 0 leaves the safe half-line with probability 0.2
    start = time.perf_counter()
    threshold = NormalDist().inv_cdf(0.8)

    class HalfLine:
        def contains(self, x):
            return x[..., 0] <= threshold

    model = scalar_linear()
    zero = StageCost(lambda x, u, k: np.zeros(x.shape[:-1]), lambda x: np.zeros(x.shape[:-1]))
    chance = ChanceParams(epsilon=0.15, alpha=0.05, delta=0.05, M=150, N=1)
    ps = ParticleSet.point([0.0])
    root = RngStream(2024, "false-pass")
    passes = sum(
        evaluate_candidate([0.0], ps, model, HalfLine(), zero, chance, root.child(i)).feasible for i in range(1000)
    )
    elapsed = time.perf_counter() - start
    rate = passes / 1000
    ok = rate <= 0.05 and elapsed < 10.0
    acceptance_report(2, ok, f"false-pass rate {rate:.3f} over 1000 checks in {elapsed:.2f} s")
    assert ok


def _random_qp_instances(rng, count):
    # positions are kept outside every obstacle, where the QP is always feasible
    out = []
    while len(out) < count:
        m = int(rng.integers(1, 4))
        centers = rng.uniform(-15, 15, size=(m, 2))
        radii = rng.uniform(1.0, 4.0, size=m)
        s = SafeSet(tuple(CircularBarrier(tuple(c), r) for c, r in zip(centers, radii)), 0.05)
        p = rng.uniform(-15, 15, size=2)
        if not s.contains(p):
            continue
        u0 = rng.uniform(-5, 5, size=2)
        out.append((u0, p, s))
    return out


def _wedge_angle(G, rhs, u):
    """Opening angle in degrees of the feasible cone at ``u`` (180 with one active constraint)."""
    active = np.flatnonzero(G @ u - rhs <= 1e-9 * (1 + np.abs(rhs)))
    if len(active) < 2:
        return 180.0
    n = -G[active] / np.linalg.norm(G[active], axis=1, keepdims=True)
    return 180.0 - math.degrees(math.acos(np.clip(n[0] @ n[1], -1.0, 1.0)))


def test_criterion_3_qp_matches_grid_oracle(acceptance_report):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    cell = 20.0 / 399 * math.sqrt(2.0)
    worst_gap, worst_slack, skipped = 0.0, math.inf, 0
    beaten, misses = 0, []
    for u0, p, s in _random_qp_instances(rng, 1000):
        u, status = qp_safety_filter_batch(u0, p, s)
        u = u[0]
        assert status[0] == OK
        G, rhs = s.gradients(p), -s.class_kappa_gain * s.values(p)
        worst_slack = min(worst_slack, float(np.min(G @ u - rhs)))
        if np.max(np.abs(u)) > 10.0 - cell:
            # the optimum lies outside the oracle's grid
            skipped += 1
            continue
        _, grid_obj = grid_qp_oracle(u0, p, s)
        gap = math.sqrt(grid_obj) - float(np.linalg.norm(u - u0))
        worst_gap = max(worst_gap, abs(gap))
        beaten += gap < -1e-9
        if gap > cell:
            misses.append(_wedge_angle(G, rhs, u))
    elapsed = time.perf_counter() - start
    ok = not misses and not beaten and worst_slack >= -1e-9 and elapsed < 30.0
    detail = (
        f"worst distance gap {worst_gap:.4f} (cell diameter {cell:.4f}), worst slack {worst_slack:.2e}, "
        f"grid beat QP {beaten} times, {skipped} optima outside grid, {elapsed:.1f} s"
    )
    if misses:
        detail += f"; {len(misses)} instances exceed one cell, feasible-cone angles {sorted(round(a, 1) for a in misses)} deg"
    acceptance_report(3, ok, detail)
    assert ok


def test_criterion_4_particle_filter_vs_kalman(acceptance_report):
    start = time.perf_counter()
    a, W, V, L = 0.9, 1.0, 0.5, 1000
    model = scalar_linear(a, W, V)
    prior = DiagGaussian([0.0], [1.0])
    root = RngStream(4)
    truth_rng = root.child("truth").generator()
    ps = ParticleSet.from_gaussian(prior, L, root.child("particles"))
    x = truth_rng.normal(0.0, 1.0)
    mean, var = 0.0, 1.0
    worst, worst_k, worst_ess = 0.0, -1, float(L)
    for k in range(100):
        u = math.sin(0.1 * k)
        x = a * x + u + truth_rng.normal(0.0, math.sqrt(W))
        y = x + truth_rng.normal(0.0, math.sqrt(V))
        # exact Kalman recursion
        mean, var = a * mean + u, a * a * var + W
        gain = var / (var + V)
        mean, var = mean + gain * (y - mean), (1 - gain) * var
        stream = root.child("filter", k)
        w, _ = measurement_weights(time_update(ps, [u], model, stream.child("propagate")), [y], model)
        ps, _ = filter_step(ps, [u], [y], model, stream)
        err = abs(conditional_mean(ps)[0] - mean) / (math.sqrt(var) / math.sqrt(L))
        if err > worst:
            worst, worst_k, worst_ess = err, k, 1.0 / float(np.sum(w**2))
    elapsed = time.perf_counter() - start
    ok = worst <= 5.0 and elapsed < 5.0
    acceptance_report(
        4,
        ok,
        f"worst error {worst:.2f} posterior std / sqrt(L) at step {worst_k} "
        f"(effective sample size {worst_ess:.0f} of {L}), {elapsed:.2f} s",
    )
    assert ok


def test_criterion_5_unicycle_matches_rk4(acceptance_report):
    rng = np.random.default_rng(5)
    xi = np.column_stack([rng.uniform(-15, 15, 1000), rng.uniform(-15, 15, 1000), rng.uniform(-math.pi, math.pi, 1000)])
    omega = rng.uniform(-math.pi, math.pi, 1000)
    omega[:50] = rng.uniform(-1e-3, 1e-3, 50)  # include the small-rate branch
    omega[50] = 0.0
    ours = unicycle_step(xi, omega[:, None], np.zeros_like(xi))
    err = float(np.max(np.abs(ours - rk4_unicycle(xi, omega))))
    ok = err <= 1e-6
    acceptance_report(5, ok, f"max deviation from RK4 {err:.2e} over 1000 pairs")
    assert ok


@pytest.fixture(scope="session")
def benchmark_runs():
    start = time.perf_counter()
    report, pairs = compare_controllers(
        SimulationConfig(), BENCHMARK_SEEDS, ("ce", "cida"), processes=os.cpu_count() or 1
    )
    return report, pairs, time.perf_counter() - start


@pytest.mark.slow
def test_criterion_6_benchmark(acceptance_report, benchmark_runs):
    report, pairs, elapsed = benchmark_runs
    ce = [a.violation_count for a, _ in pairs]
    cida = [b.violation_count for _, b in pairs]
    rates = [a.violation_rate for a, _ in pairs]
    factor = report["median_safety_factor"]
    factor = math.inf if factor == "inf" else factor
    rate_ok = all(0.02 <= r <= 0.15 for r in rates)
    median_ok = statistics.median(cida) < statistics.median(ce)
    ok = rate_ok and median_ok and factor >= 1.5 and elapsed <= 20 * 60
    acceptance_report(
        6,
        ok,
        f"CE violations {ce}, CIDA violations {cida}, CE rates {min(rates):.1%}-{max(rates):.1%}, "
        f"median factor {factor:.2f}, {elapsed:.0f} s",
    )
    assert ok


@pytest.mark.slow
def test_criterion_7_dominance(acceptance_report, benchmark_runs):
    _, pairs, _ = benchmark_runs
    steps = sum(b.steps for _, b in pairs)
    failures = {b.seed: b.dominance_failures for _, b in pairs if b.dominance_failures}
    ok = not failures and steps == 750 * len(BENCHMARK_SEEDS)
    acceptance_report(7, ok, f"{steps} CIDA steps checked, dominance failures {failures or 'none'}")
    assert ok


@pytest.mark.slow
def test_criterion_8_thread_determinism(acceptance_report, tmp_path, capsys):
    outputs = []
    for threads in (1, 8):
        out = tmp_path / f"t{threads}"
        argv = ["simulate", "--controller", "cida", "--seed", "1", "--threads", str(threads), "--out", str(out)]
        assert main(argv) == 0
        outputs.append((out / "trajectory.csv").read_bytes())
    capsys.readouterr()
    ok = outputs[0] == outputs[1] and len(outputs[0].splitlines()) == 751
    acceptance_report(8, ok, f"trajectory.csv with 1 and 8 threads byte-identical: {outputs[0] == outputs[1]}")
    assert ok


def test_criterion_9_step_time(acceptance_report):
    cfg = SimulationConfig()
    model, safe_set, policy, costs, cida_cfg = (
        cfg.build_model(), cfg.build_safe_set(), cfg.build_policy(), cfg.build_costs(), cfg.build_cida()
    )
    # particle sets from the prior and from a short closed-loop run near the first obstacle
    log = []
    run_closed_loop(cfg.replace(simulation={"steps": 12, "controller": "ce", "seed": 9}), particle_log=log)
    sets = [ParticleSet.from_gaussian(cfg.initial_distribution(), 1000, RngStream(9, "prior"))]
    sets += [ParticleSet(p) for _, p in log[3::4]]
    times = []
    for n, ps in enumerate(sets):
        start = time.perf_counter()
        cida_step(ps, policy, model, safe_set, costs, cida_cfg, RngStream(9).child("cida", n), workers=8)
        times.append(time.perf_counter() - start)
    worst = max(times)
    ok = worst <= 1.0
    acceptance_report(
        9, ok, f"slowest of {len(times)} benchmark cida_steps {worst * 1e3:.0f} ms with 8 workers on {os.cpu_count()} CPU(s)"
    )
    assert ok
