"""Triangles in the plane modulo rotation, translation and scaling.

After normalizing two vertices to (1, 0) and (-1, 0) (so the base edge has
length 2), a triangle is the position v of its free apex, living in the
punctured plane R^2 minus those two points.  Restricting the order-m curve
metric to apex perturbations gives a metric conformal to the Euclidean one,
f_m(v) <., .>, with closed-form factors for m <= 2:

    f_0 = (|e0| + |e1|) / l^3
    f_1 = (|e0| + |e1|) / (2 l^3) + (1/|e0| + 1/|e1|) / l
    f_2 = (|e0| + |e1|) / (2 l^3)
        + (2 / (|e0|^2 (|e0|+2)) + 2 (|e0|+|e1|) / (|e0|^2 |e1|^2)
           + 2 / (|e1|^2 (|e1|+2))) * l

where |e0|, |e1| are the distances from v to (1, 0) and (-1, 0) and
l = |e0| + |e1| + 2.  Near a puncture (radius r) the factors behave like
1/32, 1/(4r) and 8/r^2: a flat patch, a cone tip, and a cylinder end.
Higher orders have no closed form here and are evaluated by embedding the
apex perturbation into the full three-vertex curve space.

Brownian motion on a 2-d conformal metric has zero coordinate drift and
isotropic diffusion f^{-1/2} I, which is what the simulator integrates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curves import EPS_EDGE, DiscreteCurve, MetricOrder, _check_order, metric_eval
from .errors import DomainViolation

#: The two excluded apex positions (vertex collisions).
SINGULAR_POINTS = np.array([[1.0, 0.0], [-1.0, 0.0]])
CLOSED_FORM_ORDERS = (0, 1, 2)


@dataclass(frozen=True)
class TrianglePoint:
    """Apex position of a normalized triangle with base (1,0) -- (-1,0)."""

    v: np.ndarray

    def __post_init__(self):
        v = np.array(self.v, dtype=float).reshape(-1)
        if v.shape != (2,):
            raise DomainViolation(f"apex must lie in the plane, got shape {v.shape}")
        if min(np.linalg.norm(v - s) for s in SINGULAR_POINTS) <= EPS_EDGE:
            raise DomainViolation(f"apex {v} coincides with an excluded base vertex")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @property
    def e0(self) -> float:
        """Distance from the apex to (1, 0)."""
        return float(np.linalg.norm(self.v - SINGULAR_POINTS[0]))

    @property
    def e1(self) -> float:
        """Distance from the apex to (-1, 0)."""
        return float(np.linalg.norm(self.v - SINGULAR_POINTS[1]))

    @property
    def total_length(self) -> float:
        return self.e0 + self.e1 + 2.0

    def to_curve(self) -> DiscreteCurve:
        return DiscreteCurve(np.array([[1.0, 0.0], list(self.v), [-1.0, 0.0]]))

    def distance_to_singularities(self) -> float:
        return min(self.e0, self.e1)


def _as_point(v) -> TrianglePoint:
    return v if isinstance(v, TrianglePoint) else TrianglePoint(np.asarray(v))


def conformal_factor(m: MetricOrder, v) -> float:
    """Closed-form conformal factor f_m(v) for m in {0, 1, 2}."""
    m = _check_order(m)
    if m not in CLOSED_FORM_ORDERS:
        raise ValueError(
            f"no closed form for order {m}; use conformal_factor_estimate"
        )
    p = _as_point(v)
    e0, e1, l = p.e0, p.e1, p.total_length
    if m == 0:
        return (e0 + e1) / l**3
    if m == 1:
        return (e0 + e1) / (2.0 * l**3) + (1.0 / e0 + 1.0 / e1) / l
    return (e0 + e1) / (2.0 * l**3) + (
        2.0 / (e0**2 * (e0 + 2.0))
        + 2.0 * (e0 + e1) / (e0**2 * e1**2)
        + 2.0 / (e1**2 * (e1 + 2.0))
    ) * l


def conformal_factor_grid(m: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorized f_m on a grid (broadcasting x against y); no clamping."""
    m = _check_order(m)
    if m not in CLOSED_FORM_ORDERS:
        raise ValueError(f"no closed form for order {m}")
    e0 = np.hypot(x - 1.0, y)
    e1 = np.hypot(x + 1.0, y)
    l = e0 + e1 + 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        if m == 0:
            return (e0 + e1) / l**3
        if m == 1:
            return (e0 + e1) / (2.0 * l**3) + (1.0 / e0 + 1.0 / e1) / l
        return (e0 + e1) / (2.0 * l**3) + (
            2.0 / (e0**2 * (e0 + 2.0))
            + 2.0 * (e0 + e1) / (e0**2 * e1**2)
            + 2.0 / (e1**2 * (e1 + 2.0))
        ) * l


def embed_tangent(h) -> np.ndarray:
    """Lift an apex perturbation to a tangent field on the 3-vertex curve."""
    h = np.asarray(h, dtype=float).reshape(2)
    return np.array([[0.0, 0.0], list(h), [0.0, 0.0]])


def restricted_metric_oracle(m: MetricOrder, v, h) -> float:
    """Evaluate the full curve metric on the embedded apex perturbation h.

    For m in {0, 1, 2} this equals f_m(v) |h|^2, which cross-checks the
    closed forms against the general machinery; for higher orders it is the
    defining evaluation.
    """
    p = _as_point(v)
    field_h = embed_tangent(h)
    return metric_eval(p.to_curve(), field_h, field_h, m)


def conformal_factor_estimate(m: MetricOrder, v, direction=(1.0, 0.0)) -> float:
    """f_m(v) via the embedded evaluation along a unit direction."""
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    return restricted_metric_oracle(m, v, direction)


def isotropy_defect(m: MetricOrder, v) -> float:
    """How far the restricted metric is from conformal at v.

    Returns max of |g(ex,ey)| / g(ex,ex) and |g(ex,ex)/g(ey,ey) - 1|; zero
    means perfectly isotropic.
    """
    gxx = restricted_metric_oracle(m, v, (1.0, 0.0))
    gyy = restricted_metric_oracle(m, v, (0.0, 1.0))
    gxy = 0.5 * (restricted_metric_oracle(m, v, (1.0, 1.0)) - gxx - gyy)
    return max(abs(gxy) / gxx, abs(gxx / gyy - 1.0))


@dataclass(frozen=True)
class BlowupFit:
    """Log-log fit of the conformal factor along the radial approach."""

    order: int
    exponent: float
    constant: float
    max_residual: float
    #: worst isotropy defect over the fitted radii (0 for m <= 2)
    anisotropy: float

    def is_estimate_only(self) -> bool:
        return self.order not in CLOSED_FORM_ORDERS


def estimate_blowup_exponent(m: MetricOrder, radii) -> BlowupFit:
    """Fit f_m along v = (1 - r, 0) as C * r^s, returning (s, C).

    Closed forms are used for m <= 2; higher orders go through the embedded
    evaluation and the result is an estimate, not an exact law.
    """
    m = _check_order(m)
    radii = np.asarray(sorted(float(r) for r in radii), dtype=float)
    if radii.size < 2 or radii[0] <= 0 or radii[-1] >= 1:
        raise ValueError("need at least two radii inside (0, 1)")
    values = []
    aniso = 0.0
    for r in radii:
        v = (1.0 - r, 0.0)
        if m in CLOSED_FORM_ORDERS:
            values.append(conformal_factor(m, v))
        else:
            values.append(conformal_factor_estimate(m, v))
            aniso = max(aniso, isotropy_defect(m, v))
    logr = np.log(radii)
    logf = np.log(values)
    slope, intercept = np.polyfit(logr, logf, 1)
    resid = np.abs(slope * logr + intercept - logf).max()
    return BlowupFit(
        order=m,
        exponent=float(slope),
        constant=float(np.exp(intercept)),
        max_residual=float(resid),
        anisotropy=float(aniso),
    )


def _radial_integrand(m: int, r: np.ndarray) -> np.ndarray:
    """sqrt(f_m) along v = (1 - r, 0), stable for r down to ~1e-300.

    Along this path |e0| = r, |e1| = 2 - r and l = 4.  For m = 2 the factor
    is evaluated as sqrt(r^2 f_2) / r so it never overflows.
    """
    r = np.asarray(r, dtype=float)
    if m == 0:
        return np.full_like(r, np.sqrt(1.0 / 32.0))
    if m == 1:
        return np.sqrt(1.0 / 64.0 + 0.25 / r + 0.25 / (2.0 - r))
    scaled = (
        r**2 / 64.0
        + 8.0 / (2.0 + r)
        + 16.0 / (2.0 - r) ** 2
        + 8.0 * r**2 / ((2.0 - r) ** 2 * (4.0 - r))
    )
    return np.sqrt(scaled) / r


@dataclass(frozen=True)
class RadialLengthResult:
    """Outcome of integrating sqrt(f_m) radially into a puncture."""

    order: int
    classification: str  # "CONVERGENT" or "DIVERGENT"
    value: float | None
    partial_sum: float
    levels: int


#: Cauchy tail threshold for convergence and the divergence criterion
#: (partial sums past this with monotone growth over >= 40 dyadic levels).
RADIAL_TAIL_TOL = 1e-6
RADIAL_DIVERGENCE_SUM = 1e3
RADIAL_MIN_LEVELS = 40
RADIAL_MAX_LEVELS = 4000

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _gl_integrate(f, a: float, b: float) -> float:
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return float(half * (np.asarray(f(mid + half * _GL_NODES)) @ _GL_WEIGHTS))


def radial_length(m: MetricOrder, r0: float) -> RadialLengthResult:
    """Classify the metric length of the radial segment into the puncture.

    Integrates sqrt(f_m) over dyadic subintervals [r0 2^-(k+1), r0 2^-k].
    A Cauchy tail below RADIAL_TAIL_TOL means finite length (the geodesic
    reaches the singularity: incompleteness); partial sums climbing past
    RADIAL_DIVERGENCE_SUM across at least RADIAL_MIN_LEVELS levels mean the
    puncture is infinitely far away.
    """
    m = _check_order(m)
    if m not in CLOSED_FORM_ORDERS:
        # the dyadic levels reach radii far below the curve regularity
        # threshold, where the embedded evaluation is not defined; the
        # m >= 3 factors dominate the m = 2 cylinder anyway
        raise ValueError(
            f"radial classification supports m in {CLOSED_FORM_ORDERS}"
        )
    if not 0.0 < r0 < 1.0:
        raise ValueError(f"r0 must be in (0, 1), got {r0}")
    total = 0.0
    for level in range(RADIAL_MAX_LEVELS):
        hi = r0 * 2.0 ** (-level)
        lo = 0.5 * hi
        inc = _gl_integrate(lambda r: _radial_integrand(m, r), lo, hi)
        total += inc
        if inc < RADIAL_TAIL_TOL:
            # remaining tail is below inc summed geometrically at worst
            return RadialLengthResult(m, "CONVERGENT", total, total, level + 1)
        if total > RADIAL_DIVERGENCE_SUM and level + 1 >= RADIAL_MIN_LEVELS:
            return RadialLengthResult(m, "DIVERGENT", None, total, level + 1)
    raise RuntimeError(
        f"radial classification undecided after {RADIAL_MAX_LEVELS} levels"
    )


@dataclass
class TriangleTrajectory:
    """One planar Brownian path on the conformal triangle metric."""

    m: int
    dt: float
    seed: int
    steps: list[int] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    points: list[np.ndarray] = field(default_factory=list)
    singularity_distance_series: list[float] = field(default_factory=list)
    min_singularity_distance: float = np.inf
    max_excursion_radius: float = 0.0
    events: list[dict] = field(default_factory=list)
    completed: bool = True


def _distances_to_singularities(pts: np.ndarray) -> np.ndarray:
    d0 = np.hypot(pts[:, 0] - 1.0, pts[:, 1])
    d1 = np.hypot(pts[:, 0] + 1.0, pts[:, 1])
    return np.minimum(d0, d1)


def _simulate_batch(
    m: int,
    v0: np.ndarray,
    dt: float,
    n_steps: int,
    seeds: list[int],
    record_every: int,
    edge_floor: float,
    factor,
) -> list[TriangleTrajectory]:
    """Run one trajectory per seed in lockstep (vectorized across runs)."""
    runs = len(seeds)
    noise = np.empty((runs, n_steps, 2))
    for r, seed in enumerate(seeds):
        gen = np.random.Generator(np.random.Philox(key=seed))
        noise[r] = gen.standard_normal((n_steps, 2))
    pts = np.tile(np.asarray(v0, dtype=float), (runs, 1))
    active = np.ones(runs, dtype=bool)
    trajs = [TriangleTrajectory(m=m, dt=dt, seed=s) for s in seeds]

    def record(step):
        t = step * dt
        dist = _distances_to_singularities(pts)
        for r, traj in enumerate(trajs):
            if active[r] or step == 0:
                traj.steps.append(step)
                traj.times.append(t)
                traj.points.append(pts[r].copy())
                traj.singularity_distance_series.append(float(dist[r]))

    record(0)
    min_dist = _distances_to_singularities(pts)
    max_rad = np.hypot(pts[:, 0], pts[:, 1])
    sq = np.sqrt(dt)
    for k in range(n_steps):
        if not active.any():
            break
        f = factor(pts[active])
        pts[active] += sq * noise[active, k, :] / np.sqrt(f)[:, None]
        dist = _distances_to_singularities(pts)
        np.minimum(min_dist, dist, out=min_dist, where=active)
        np.maximum(max_rad, np.hypot(pts[:, 0], pts[:, 1]), out=max_rad, where=active)
        hits = active & (dist < edge_floor)
        for r in np.flatnonzero(hits):
            trajs[r].events.append(
                {
                    "type": "singularity_approach",
                    "step": k,
                    "distance": float(dist[r]),
                }
            )
            trajs[r].completed = False
        active &= ~hits
        step = k + 1
        if step % record_every == 0 or step == n_steps:
            record(step)
    for r, traj in enumerate(trajs):
        traj.min_singularity_distance = float(min_dist[r])
        traj.max_excursion_radius = float(max_rad[r])
    return trajs


def _closed_form_factor(m: int):
    def factor(pts: np.ndarray) -> np.ndarray:
        return conformal_factor_grid(m, pts[:, 0], pts[:, 1])

    return factor


def simulate_triangle_bm(
    m: MetricOrder,
    v0,
    dt: float,
    n_steps: int,
    seed: int,
    *,
    record_every: int = 10,
    edge_floor: float = 1e-8,
    factor=None,
) -> TriangleTrajectory:
    """Euler-Maruyama Brownian motion of the apex on the conformal metric.

    Uses zero drift and diffusion f_m^{-1/2} I (exact for a 2-d conformal
    metric).  Approaching a puncture closer than edge_floor records a
    singularity_approach event and freezes the run.  `factor` may override
    f_m for surrogate tests (it receives an (n, 2) array of points).
    """
    m = _check_order(m)
    if factor is None:
        if m not in CLOSED_FORM_ORDERS:
            raise ValueError(f"triangle simulation supports m in {CLOSED_FORM_ORDERS}")
        factor = _closed_form_factor(m)
    p0 = _as_point(v0)
    return _simulate_batch(
        m, p0.v, dt, n_steps, [int(seed)], record_every, edge_floor, factor
    )[0]


@dataclass(frozen=True)
class TriangleBMReport:
    """Ensemble summary of triangle Brownian runs."""

    m: int
    n_runs: int
    dt: float
    n_steps: int
    base_seed: int
    singularity_fraction: float
    min_distance_per_run: tuple
    max_excursion_per_run: tuple

    def to_json_dict(self) -> dict:
        return {
            "m": self.m,
            "n_runs": self.n_runs,
            "dt": self.dt,
            "n_steps": self.n_steps,
            "seed": self.base_seed,
            "singularity_fraction": self.singularity_fraction,
            "min_distance_per_run": list(self.min_distance_per_run),
            "max_excursion_per_run": list(self.max_excursion_per_run),
        }


def triangle_bm_report(
    m: MetricOrder,
    v0,
    dt: float,
    n_steps: int,
    n_runs: int,
    seed: int,
    *,
    edge_floor: float = 1e-8,
    record_every: int = 100,
) -> TriangleBMReport:
    """Run an ensemble and report the fraction of singularity approaches."""
    from .brownian import derive_run_seed  # local import to avoid a cycle

    p0 = _as_point(v0)
    seeds = [derive_run_seed(seed, r) for r in range(n_runs)]
    trajs = _simulate_batch(
        _check_order(m),
        p0.v,
        dt,
        n_steps,
        seeds,
        record_every,
        edge_floor,
        _closed_form_factor(_check_order(m)),
    )
    hits = sum(1 for t in trajs if not t.completed)
    return TriangleBMReport(
        m=int(m),
        n_runs=n_runs,
        dt=dt,
        n_steps=n_steps,
        base_seed=int(seed),
        singularity_fraction=hits / n_runs,
        min_distance_per_run=tuple(t.min_singularity_distance for t in trajs),
        max_excursion_per_run=tuple(t.max_excursion_radius for t in trajs),
    )
