import math

import numpy as np
import pytest

from cida.safety import OrbitField, SafeSet

ACCEPTANCE_LINES: list[str] = []

BENCHMARK_OBSTACLES = [((9.0, -5.0), 3.0), ((-10.0, -9.0), 4.0), ((-7.0, 10.0), 3.0)]


@pytest.fixture
def benchmark_safe_set():
    return SafeSet.from_obstacles(BENCHMARK_OBSTACLES, 0.05)


@pytest.fixture
def orbit():
    return OrbitField(10.0, 0.3, 5.0)


@pytest.fixture
def acceptance_report():
    def record(number: int, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


def rk4_unicycle(xi, omega, speed=5.0, tau=0.2, substeps=400):
    """Fine RK4 integration of the continuous constant-turn-rate unicycle.

    ``xi`` may be a batch ``(B, 3)`` with ``omega`` of shape ``(B,)``.
    """
    h = tau / substeps
    x = np.array(xi, dtype=float)
    omega = np.asarray(omega, dtype=float)

    def f(s):
        return np.stack(
            [speed * np.cos(s[..., 2]), speed * np.sin(s[..., 2]), np.broadcast_to(omega, s[..., 2].shape)], axis=-1
        )

    for _ in range(substeps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def grid_qp_oracle(u0, position, safe_set, lo=-10.0, hi=10.0, n=400):
    """Brute-force QP: best feasible point of an ``n x n`` grid over ``[lo, hi]^2``.

    Returns ``(u, objective)`` or ``(None, inf)`` when no grid point is feasible.
    """
    axis = np.linspace(lo, hi, n)
    U = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    G = safe_set.gradients(np.asarray(position, dtype=float))
    rhs = -safe_set.class_kappa_gain * safe_set.values(np.asarray(position, dtype=float))
    feasible = np.all(U @ G.T >= rhs, axis=1)
    if not feasible.any():
        return None, math.inf
    obj = np.sum((U - u0) ** 2, axis=1)
    obj[~feasible] = np.inf
    best = int(np.argmin(obj))
    return U[best], float(obj[best])
