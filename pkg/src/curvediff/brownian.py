"""Euler-Maruyama simulation of Brownian motion on the space of curves.

One explicit step reads

    v_{k+1} = v_k + dt b(v_k) + sqrt(dt) sigma(v_k) xi_k

with b and sigma evaluated at the pre-step state and xi_k a standard
Gaussian vector.  Noise is counter-based: draw k opens a Philox stream at
counter k << 64, so xi_k is a pure function of (seed, k) and trajectories
are bit-reproducible regardless of how they are scheduled.  Ensembles run
independent trajectories whose seeds derive deterministically from the base
seed; aggregation is order-independent.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import calculus
from .curves import DiscreteCurve, MetricOrder, _check_order
from .errors import EdgeCollapse, SingularMetric

logger = logging.getLogger("curvediff.brownian")

#: Recorded in manifests; identifies the noise pipeline exactly.
GENERATOR_ID = "philox4x64(key=seed,counter=step<<64)+ziggurat-normal"


def derive_run_seed(base_seed: int, run_index: int) -> int:
    """Deterministic 64-bit seed for run `run_index` of an ensemble."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(run_index,))
    return int(ss.generate_state(1, np.uint64)[0])


class StepNoise:
    """Standard Gaussian draws that depend only on (seed, step index)."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def draw(self, step: int, size: int) -> np.ndarray:
        bg = np.random.Philox(key=self.seed, counter=step << 64)
        return np.random.Generator(bg).standard_normal(size)


class RotatedNoise:
    """Wrap a noise source, rotating each draw blockwise (test harness)."""

    def __init__(self, base: StepNoise, rotation: np.ndarray):
        self.base = base
        self.rotation = np.asarray(rotation, dtype=float)

    def draw(self, step: int, size: int) -> np.ndarray:
        d = self.rotation.shape[0]
        xi = self.base.draw(step, size)
        return (xi.reshape(-1, d) @ self.rotation.T).reshape(-1)


class SobolevGeometry:
    """Drift and diffusion of the order-m metric's Brownian generator."""

    def __init__(self, m: MetricOrder):
        self.m = _check_order(m)

    def drift_and_diffusion(self, curve: DiscreteCurve):
        return calculus.generator_coefficients(curve.vertices, self.m)


class FlatGeometry:
    """Identity-metric surrogate: zero drift, identity diffusion."""

    def drift_and_diffusion(self, curve: DiscreteCurve):
        dn = curve.n * curve.d
        return np.zeros(dn), np.eye(dn)


@dataclass(frozen=True)
class SimulationConfig:
    """Inputs that fully determine one trajectory."""

    initial: DiscreteCurve
    m: MetricOrder = 2
    dt: float = 0.01
    n_steps: int = 1000
    seed: int = 0
    record_every: int = 10
    edge_floor: float = 1e-8

    def __post_init__(self):
        _check_order(self.m)
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be >= 0, got {self.n_steps}")
        if self.record_every < 1:
            raise ValueError(f"record_every must be >= 1, got {self.record_every}")
        if self.edge_floor <= 0:
            raise ValueError(f"edge_floor must be positive, got {self.edge_floor}")

    @property
    def horizon(self) -> float:
        return self.dt * self.n_steps

    def describe(self) -> dict:
        return {
            "m": self.m,
            "dt": self.dt,
            "n_steps": self.n_steps,
            "seed": self.seed,
            "record_every": self.record_every,
            "edge_floor": self.edge_floor,
            "n": self.initial.n,
            "d": self.initial.d,
        }


@dataclass
class TrajectoryRecord:
    """Recorded snapshots and per-snapshot statistics of one trajectory."""

    steps: list[int] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    curves: list[DiscreteCurve] = field(default_factory=list)
    centroid_series: list[np.ndarray] = field(default_factory=list)
    min_edge_series: list[float] = field(default_factory=list)
    length_series: list[float] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    completed: bool = True

    def append(self, step: int, t: float, curve: DiscreteCurve) -> None:
        self.steps.append(step)
        self.times.append(t)
        self.curves.append(curve)
        self.centroid_series.append(curve.centroid())
        self.min_edge_series.append(curve.min_edge_length())
        self.length_series.append(curve.total_length())


def em_step(
    v: DiscreteCurve,
    m: MetricOrder,
    dt: float,
    xi: np.ndarray,
    *,
    edge_floor: float = 1e-8,
    geometry=None,
) -> DiscreteCurve:
    """One explicit Euler-Maruyama step from v.

    Raises EdgeCollapse (with the offending edge index) if the updated
    configuration has an edge shorter than edge_floor.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    geometry = geometry if geometry is not None else SobolevGeometry(m)
    b, sigma = geometry.drift_and_diffusion(v)
    xi = np.asarray(xi, dtype=float).reshape(-1)
    x = v.vertices.reshape(-1) + dt * b + np.sqrt(dt) * (sigma @ xi)
    verts = x.reshape(v.n, v.d)
    diffs = verts[np.r_[1 : v.n, 0]] - verts
    lengths = np.sqrt(np.einsum("ia,ia->i", diffs, diffs))
    if lengths.min() <= edge_floor:
        i = int(lengths.argmin())
        raise EdgeCollapse(
            f"edge {i} collapsed to {lengths[i]:.3e} (floor {edge_floor:.0e})",
            edge_index=i,
            length=float(lengths[i]),
        )
    return DiscreteCurve(verts)


def simulate(config: SimulationConfig, *, geometry=None, noise=None) -> TrajectoryRecord:
    """Run one trajectory, recording every record_every-th state.

    The initial and final states are always recorded.  On EdgeCollapse or
    SingularMetric the partial trajectory is returned with a terminal event
    instead of being discarded.
    """
    geometry = geometry if geometry is not None else SobolevGeometry(config.m)
    noise = noise if noise is not None else StepNoise(config.seed)
    dn = config.initial.n * config.initial.d
    record = TrajectoryRecord()
    v = config.initial
    record.append(0, 0.0, v)
    for k in range(config.n_steps):
        xi = noise.draw(k, dn)
        try:
            v = em_step(
                v, config.m, config.dt, xi,
                edge_floor=config.edge_floor, geometry=geometry,
            )
        except EdgeCollapse as exc:
            exc.step = k
            record.events.append(
                {
                    "type": "edge_collapse",
                    "step": k,
                    "edge_index": exc.edge_index,
                    "length": exc.length,
                }
            )
            record.completed = False
            logger.warning("edge collapse at step %d (edge %d)", k, exc.edge_index)
            break
        except SingularMetric as exc:
            record.events.append(
                {"type": "singular_metric", "step": k, "detail": str(exc)}
            )
            record.completed = False
            logger.warning("singular metric at step %d: %s", k, exc)
            break
        step = k + 1
        if step % config.record_every == 0 or step == config.n_steps:
            record.append(step, step * config.dt, v)
    return record


@dataclass
class EnsembleStats:
    """Per-time quantiles across independent runs of one configuration."""

    steps: list[int]
    times: list[float]
    quantiles: tuple
    #: arrays of shape (len(times), len(quantiles)); rows aggregate over the
    #: runs still alive at that time
    min_edge: np.ndarray
    length: np.ndarray
    centroid_displacement: np.ndarray
    n_alive: np.ndarray
    n_runs: int
    run_seeds: list[int]
    events: list[dict]

    @property
    def all_completed(self) -> bool:
        return not self.events


def _run_indexed(args):
    config, geometry = args
    return simulate(config, geometry=geometry)


def ensemble(
    config: SimulationConfig,
    n_runs: int,
    *,
    workers: int = 1,
    geometry=None,
    quantiles=(0.0, 0.25, 0.5, 0.75, 1.0),
) -> EnsembleStats:
    """Run n_runs independent trajectories and aggregate their statistics.

    Per-run seeds derive deterministically from config.seed, so the output
    is independent of scheduling and of the number of workers.
    """
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    seeds = [derive_run_seed(config.seed, r) for r in range(n_runs)]
    run_configs = [replace(config, seed=s) for s in seeds]
    jobs = [(rc, geometry) for rc in run_configs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_indexed, jobs))
    else:
        records = [_run_indexed(job) for job in jobs]

    ref = max(records, key=lambda r: len(r.steps))
    steps, times = list(ref.steps), list(ref.times)
    q = np.asarray(quantiles)
    shape = (len(times), len(q))
    min_edge = np.full(shape, np.nan)
    length = np.full(shape, np.nan)
    disp = np.full(shape, np.nan)
    n_alive = np.zeros(len(times), dtype=int)
    events: list[dict] = []
    for run, rec in enumerate(records):
        for ev in rec.events:
            events.append({"run": run, "seed": seeds[run], **ev})
    for ti in range(len(times)):
        me, ln, cd = [], [], []
        for rec in records:
            if ti < len(rec.steps):
                me.append(rec.min_edge_series[ti])
                ln.append(rec.length_series[ti])
                cd.append(
                    float(
                        np.linalg.norm(
                            rec.centroid_series[ti] - rec.centroid_series[0]
                        )
                    )
                )
        n_alive[ti] = len(me)
        if me:
            min_edge[ti] = np.quantile(me, q)
            length[ti] = np.quantile(ln, q)
            disp[ti] = np.quantile(cd, q)
    return EnsembleStats(
        steps=steps,
        times=times,
        quantiles=tuple(float(x) for x in q),
        min_edge=min_edge,
        length=length,
        centroid_displacement=disp,
        n_alive=n_alive,
        n_runs=n_runs,
        run_seeds=seeds,
        events=events,
    )
