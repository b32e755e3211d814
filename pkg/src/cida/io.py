"""CSV, JSON and SVG emitters for trajectories, fields and reports."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .config import SimulationConfig
from .safety import SafeSet, OrbitField, safe_heading_batch
from .simulation import TRAJECTORY_COLUMNS, RunMetrics

FIELD_COLUMNS = ("x", "y", "theta_d", "theta_star")
PARTICLE_COLUMNS = ("k", "j", "x", "y", "theta")


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    x = float(value)
    return "nan" if math.isnan(x) else repr(x)


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]], notes: Sequence[str] = ()) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        for note in notes:
            fh.write(f"# {note}\n")


def read_csv(path: str | Path) -> tuple[list[str], list[list[float]]]:
    """Parse an emitted CSV into its header and float rows, skipping ``#`` notes."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [[float(v) for v in row] for row in reader]


def write_trajectory_csv(metrics: RunMetrics, path: str | Path) -> None:
    _write_rows(Path(path), TRAJECTORY_COLUMNS, metrics.trajectory_rows())


def write_particles_csv(log: Sequence[tuple[int, np.ndarray]], path: str | Path) -> None:
    rows = ((k, j, *p[:3]) for k, particles in log for j, p in enumerate(particles))
    _write_rows(Path(path), PARTICLE_COLUMNS, rows)


def dump_json(data: Any, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def field_grid(cfg: SimulationConfig) -> np.ndarray:
    """Rows ``(x, y, theta_d, theta_star)`` over the configured rectangle.

    ``theta_star`` is NaN inside obstacles, ``theta_d`` is NaN at the orbit centre.
    """
    f = cfg.field
    xs = np.linspace(f.xmin, f.xmax, f.grid_n)
    ys = np.linspace(f.ymin, f.ymax, f.grid_n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    p = np.column_stack([X.ravel(), Y.ravel()])
    orbit = cfg.build_orbit()
    safe_set = cfg.build_safe_set()
    theta_d = orbit.heading(p)
    theta_star, _ = safe_heading_batch(p, safe_set, orbit)
    theta_star = np.where(safe_set.contains(p), theta_star, np.nan)
    return np.column_stack([p, theta_d, theta_star])


def write_field_csv(grid: np.ndarray, path: str | Path) -> None:
    n_inside = int(np.count_nonzero(np.isnan(grid[:, 3]) & ~np.isnan(grid[:, 2])))
    notes = []
    if n_inside:
        notes.append(f"note: theta_star is nan at {n_inside} grid points inside obstacles")
    if np.any(np.isnan(grid[:, 2])):
        notes.append("note: theta_d and theta_star are nan at the orbit centre")
    _write_rows(Path(path), FIELD_COLUMNS, grid, notes)


class _Svg:
    def __init__(self, xmin: float, xmax: float, ymin: float, ymax: float, size: int = 600) -> None:
        self.xmin, self.ymax = xmin, ymax
        self.scale = size / max(xmax - xmin, ymax - ymin)
        self.w, self.h = (xmax - xmin) * self.scale, (ymax - ymin) * self.scale
        self.parts: list[str] = []

    def pt(self, x: float, y: float) -> tuple[float, float]:
        return (x - self.xmin) * self.scale, (self.ymax - y) * self.scale

    def circle(self, c, r, fill="none", stroke="black") -> None:
        cx, cy = self.pt(*c)
        self.parts.append(
            f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r * self.scale:.2f}" fill="{fill}" stroke="{stroke}"/>'
        )

    def line(self, a, b, stroke="black", width=1.0) -> None:
        (x1, y1), (x2, y2) = self.pt(*a), self.pt(*b)
        self.parts.append(
            f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
            f'stroke="{stroke}" stroke-width="{width}"/>'
        )

    def polyline(self, pts: np.ndarray, stroke="black") -> None:
        coords = " ".join("{:.2f},{:.2f}".format(*self.pt(x, y)) for x, y in pts)
        self.parts.append(f'<polyline points="{coords}" fill="none" stroke="{stroke}"/>')

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w:.0f}" height="{self.h:.0f}" '
            f'viewBox="0 0 {self.w:.2f} {self.h:.2f}">\n<rect width="100%" height="100%" fill="white"/>\n'
            f"{body}\n</svg>\n"
        )


def _scene(svg: _Svg, safe_set: SafeSet, orbit: OrbitField) -> None:
    svg.circle((0.0, 0.0), orbit.radius, stroke="red")
    for b in safe_set.barriers:
        svg.circle(b.center, b.radius, fill="lightsteelblue", stroke="steelblue")


def field_svg(grid: np.ndarray, cfg: SimulationConfig, column: int = 3) -> str:
    """Quiver plot of the ``theta_d`` (column 2) or ``theta_star`` (column 3) field."""
    f = cfg.field
    svg = _Svg(f.xmin, f.xmax, f.ymin, f.ymax)
    _scene(svg, cfg.build_safe_set(), cfg.build_orbit())
    step = 0.4 * min((f.xmax - f.xmin), (f.ymax - f.ymin)) / (f.grid_n - 1)
    for x, y, *angles in grid:
        theta = angles[column - 2]
        if math.isnan(theta):
            continue
        svg.line((x, y), (x + step * math.cos(theta), y + step * math.sin(theta)), width=0.8)
    return svg.render()


def trajectory_svg(metrics: RunMetrics, cfg: SimulationConfig) -> str:
    f = cfg.field
    svg = _Svg(f.xmin, f.xmax, f.ymin, f.ymax)
    _scene(svg, cfg.build_safe_set(), cfg.build_orbit())
    svg.polyline(metrics.states[:, :2], stroke="black")
    for x, y in metrics.states[metrics.violated, :2]:
        svg.circle((x, y), 0.15, fill="red", stroke="red")
    return svg.render()
