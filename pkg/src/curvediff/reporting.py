"""File outputs: JSONL trajectories, CSV statistics, JSON reports, manifests.

Every float is serialized with 17 significant digits, which round-trips
IEEE doubles exactly, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .brownian import EnsembleStats, SimulationConfig, TrajectoryRecord
from .triangle import TriangleTrajectory


def fmt(x) -> str:
    """17-significant-digit decimal form of a float (exact round trip)."""
    return format(float(x), ".17g")


def _to_jsonable(obj):
    if isinstance(obj, float):
        return _RawFloat(obj)
    if isinstance(obj, (np.floating,)):
        return _RawFloat(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


class _RawFloat(float):
    def __repr__(self):
        return fmt(self)


class _Encoder(json.JSONEncoder):
    # json uses repr() for floats, so _RawFloat carries the 17g format
    pass


def dump_json(obj, path, *, indent=2) -> None:
    text = json.dumps(_to_jsonable(obj), indent=indent, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _vertices_json(verts: np.ndarray) -> str:
    rows = ", ".join(
        "[" + ", ".join(fmt(x) for x in row) + "]" for row in verts
    )
    return "[" + rows + "]"


def write_trajectory_jsonl(record: TrajectoryRecord, path) -> None:
    """One JSON object per snapshot: {"step", "t", "vertices"}."""
    lines = []
    for step, t, curve in zip(record.steps, record.times, record.curves):
        lines.append(
            '{"step": %d, "t": %s, "vertices": %s}'
            % (step, fmt(t), _vertices_json(curve.vertices))
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_stats_csv(record: TrajectoryRecord, path) -> None:
    """Per-snapshot statistics: step,t,min_edge,length,centroid_*."""
    d = record.curves[0].d if record.curves else 0
    header = "step,t,min_edge,length," + ",".join(f"centroid_{a}" for a in range(d))
    lines = [header]
    for i, step in enumerate(record.steps):
        row = [
            str(step),
            fmt(record.times[i]),
            fmt(record.min_edge_series[i]),
            fmt(record.length_series[i]),
        ]
        row.extend(fmt(x) for x in record.centroid_series[i])
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_ensemble_csv(stats: EnsembleStats, path) -> None:
    """Per-time quantiles of min edge, length and centroid displacement."""
    tags = [f"q{int(round(100 * q))}" for q in stats.quantiles]
    header = ["step", "t", "n_alive"]
    for name in ("min_edge", "length", "centroid_disp"):
        header.extend(f"{name}_{tag}" for tag in tags)
    lines = [",".join(header)]
    for i, step in enumerate(stats.steps):
        row = [str(step), fmt(stats.times[i]), str(int(stats.n_alive[i]))]
        for arr in (stats.min_edge, stats.length, stats.centroid_displacement):
            row.extend(fmt(x) for x in arr[i])
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_triangle_jsonl(traj: TriangleTrajectory, path) -> None:
    """Triangle BM snapshots in the trajectory schema (one-vertex payload)."""
    lines = []
    for step, t, pt, dist in zip(
        traj.steps, traj.times, traj.points, traj.singularity_distance_series
    ):
        lines.append(
            '{"step": %d, "t": %s, "vertices": [[%s, %s]], '
            '"min_singularity_distance": %s}'
            % (step, fmt(t), fmt(pt[0]), fmt(pt[1]), fmt(dist))
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_grid_csv(xs: np.ndarray, ys: np.ndarray, values: np.ndarray, path) -> None:
    """Conformal factor samples as x,y,f rows (y varies fastest)."""
    lines = ["x,y,f"]
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            lines.append(f"{fmt(x)},{fmt(y)},{fmt(values[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    """Provenance record written next to every command's outputs."""

    command: list[str]
    config: dict
    seed: int | None = None
    generator: str | None = None
    version: str = __version__
    started: str = field(default_factory=_now)
    finished: str | None = None
    status: str = "running"
    events: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)

    def add_output(self, name: str, path) -> None:
        self.outputs[name] = {"path": str(path), "sha256": sha256_file(path)}

    def finalize(self, status: str = "ok") -> None:
        self.status = status
        self.finished = _now()

    def write(self, path) -> None:
        dump_json(
            {
                "command": self.command,
                "config": self.config,
                "seed": self.seed,
                "generator": self.generator,
                "version": self.version,
                "started": self.started,
                "finished": self.finished,
                "status": self.status,
                "events": self.events,
                "outputs": self.outputs,
            },
            path,
        )


def config_dict(config: SimulationConfig) -> dict:
    return config.describe()
