"""Derivatives of the metric tensor, generator coefficients, and geodesics.

The metric tensor depends on the vertices only through the edge lengths, so
its gradient is obtained in one forward pass: seed dual numbers on the edge
lengths, run the ordinary assembly, then chain through the analytic edge
length Jacobian.  Finite differences appear only in tests.

From the gradient follow the two coefficients of the Brownian generator in
vertex coordinates,

    b^j   = 1/2 d_i g^{ij} + 1/2 g^{ij} d_i log sqrt(det G)
    sigma = lower-triangular factor with sigma sigma^T = G^{-1}

and a fixed-step RK4 integrator for the geodesic Hamiltonian system
x' = G^{-1} p, p'_j = 1/2 (G^{-1}p)^T (d_j G) (G^{-1}p).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.linalg.lapack import dtrtri

from .curves import (
    EPS_EDGE,
    DiscreteCurve,
    MetricOrder,
    TangentVector,
    _check_order,
    _field_array,
    _metric_tensor_from_edge_lengths,
    _shift_index,
    metric_eval,
)
from .dual import Dual
from .errors import RegularityViolation, SingularMetric, StepTooLarge

logger = logging.getLogger("curvediff.calculus")

#: Condition number above which a near-degenerate-curve warning is logged.
COND_WARN = 1e12

_cond_warned = False


def _report_condition(cond_est: float) -> None:
    # warn loudly once; near-degenerate simulations would otherwise emit
    # one line per step
    global _cond_warned
    if _cond_warned:
        logger.debug("metric tensor condition estimate %.2e", cond_est)
    else:
        logger.warning("metric tensor condition estimate %.2e", cond_est)
        _cond_warned = True


_EYE_CACHE: dict[int, np.ndarray] = {}


def _eye(n: int) -> np.ndarray:
    mat = _EYE_CACHE.get(n)
    if mat is None:
        mat = np.eye(n)
        mat.setflags(write=False)
        _EYE_CACHE[n] = mat
    return mat


def _edge_geometry(X: np.ndarray):
    """Edge lengths and their Jacobian d|e_i| / dx_(j,a), shape (n, dn)."""
    n, d = X.shape
    E = X[_shift_index(n, -1)] - X
    elen = np.sqrt(np.einsum("ia,ia->i", E, E))
    unit = E / elen[:, None]
    J = np.zeros((n, n, d))
    idx = np.arange(n)
    J[idx, (idx + 1) % n, :] += unit
    J[idx, idx, :] -= unit
    return elen, J.reshape(n, n * d)


def metric_with_gradient(X: np.ndarray, m: int):
    """Metric tensor G (dn, dn) and its gradient dG[k, l, j] = dG_kl / dx_j.

    The assembly depends on the vertices only through the edge lengths, so
    the dual pass seeds one direction per edge length and chains through the
    analytic Jacobian d|e_i| / dx afterwards.
    """
    n, d = X.shape
    elen, J = _edge_geometry(X)
    g = _metric_tensor_from_edge_lengths(Dual(elen, np.eye(n)), n, d, m)
    G = 0.5 * (g.val + g.val.T)
    dG_de = 0.5 * (g.dot + g.dot.transpose(1, 0, 2))
    dG = np.tensordot(dG_de, J, axes=([2], [0]))
    return G, dG


def metric_tensor_derivative(c: DiscreteCurve, m: MetricOrder) -> np.ndarray:
    """Gradient of the metric tensor at c, shape (dn, dn, dn)."""
    m = _check_order(m)
    return metric_with_gradient(c.vertices, m)[1]


def _spd_cholesky(G: np.ndarray):
    """Cholesky factor of G, raising SingularMetric on failure.

    Logs a warning when the (cheap diagonal) condition estimate exceeds
    COND_WARN, which flags near-degenerate curves.
    """
    try:
        cho = cho_factor(G, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularMetric(f"metric tensor is not positive definite: {exc}") from exc
    diag = np.diag(cho[0])
    cond_est = (diag.max() / diag.min()) ** 2
    if cond_est > COND_WARN:
        _report_condition(cond_est)
    return cho


def _drift_from_parts(G: np.ndarray, dG: np.ndarray, cho=None) -> np.ndarray:
    """Drift vector from the metric tensor and its gradient.

    With S1[k, l, j] = (G^{-1} d_j G)[k, l]:

        sum_i d_i (G^{-1})[i, j] = -(sum_i S1[i, :, i]) G^{-1}
        d_i log det G            = tr S1[:, :, i]
    """
    dn = G.shape[0]
    if cho is None:
        cho = _spd_cholesky(G)
    Ginv = cho_solve(cho, np.eye(dn), check_finite=False)
    S1 = cho_solve(cho, dG.reshape(dn, -1), check_finite=False).reshape(dn, dn, dn)
    s_vec = np.einsum("ili->l", S1)
    trace = np.einsum("kki->i", S1)
    return -0.5 * (s_vec @ Ginv) + 0.25 * (Ginv @ trace)


def drift(c: DiscreteCurve, m: MetricOrder) -> np.ndarray:
    """Generator drift b at c, vertex-major flattening, shape (dn,)."""
    m = _check_order(m)
    G, dG = metric_with_gradient(c.vertices, m)
    return _drift_from_parts(G, dG)


def generator_coefficients(X: np.ndarray, m: int):
    """Drift vector and diffusion factor at the vertex array X, sharing one
    metric assembly and one SPD factorization (the simulation hot path)."""
    dn = X.size
    with np.errstate(over="ignore", invalid="ignore"):
        G, dG = metric_with_gradient(X, m)
    if not np.all(np.isfinite(G)):
        raise SingularMetric("metric tensor overflowed (degenerate curve)")
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise SingularMetric(f"metric tensor is not positive definite: {exc}") from exc
    cond_est = (np.diag(L).max() / np.diag(L).min()) ** 2
    if cond_est > COND_WARN:
        _report_condition(cond_est)
    Linv, info = dtrtri(L, lower=1)
    if info != 0:
        raise SingularMetric(f"triangular inversion failed (info={info})")
    Ginv = Linv.T @ Linv
    S1 = (Ginv @ dG.reshape(dn, -1)).reshape(dn, dn, dn)
    s_vec = np.einsum("ili->l", S1)
    trace = np.einsum("kki->i", S1)
    b = -0.5 * (s_vec @ Ginv) + 0.25 * (Ginv @ trace)
    try:
        L_rev = np.linalg.cholesky(G[::-1, ::-1])
    except np.linalg.LinAlgError as exc:
        raise SingularMetric(f"metric tensor is not positive definite: {exc}") from exc
    sigma_t, info = dtrtri(np.asfortranarray(L_rev[::-1, ::-1]), lower=0)
    if info != 0:
        raise SingularMetric(f"triangular inversion failed (info={info})")
    return b, sigma_t.T


def lower_inverse_factor(G: np.ndarray) -> np.ndarray:
    """Lower-triangular sigma with sigma sigma^T = G^{-1}.

    Factors G itself (reversed to get an upper factor U with U U^T = G) and
    inverts the triangle by a solve; G^{-1} is never formed.
    """
    try:
        L_rev = np.linalg.cholesky(G[::-1, ::-1])
    except np.linalg.LinAlgError as exc:
        raise SingularMetric(f"metric tensor is not positive definite: {exc}") from exc
    U = L_rev[::-1, ::-1]
    return solve_triangular(U.T, np.eye(G.shape[0]), lower=True, check_finite=False)


def diffusion_factor(c: DiscreteCurve, m: MetricOrder) -> np.ndarray:
    """Diffusion matrix sigma(c) of the Brownian generator, shape (dn, dn)."""
    m = _check_order(m)
    elen = c.edge_lengths()
    G = _metric_tensor_from_edge_lengths(elen, c.n, c.d, m)
    G = 0.5 * (G + G.T)
    diag = np.sqrt(np.diag(G))
    if (diag.max() / diag.min()) ** 2 > COND_WARN:
        _report_condition(float((diag.max() / diag.min()) ** 2))
    return lower_inverse_factor(G)


@dataclass(frozen=True)
class GeodesicState:
    """One recorded point of a geodesic: time, curve, momentum, energy."""

    t: float
    position: DiscreteCurve
    momentum: np.ndarray
    energy: float


def _sobolev_tensor_field(m: int):
    def field(X: np.ndarray):
        return metric_with_gradient(X, m)

    return field


def flat_tensor_field(X: np.ndarray):
    """Identity-metric surrogate: G = I, dG = 0 (for tests and sanity runs)."""
    dn = X.size
    return np.eye(dn), np.zeros((dn, dn, dn))


def geodesic_shoot(
    c0: DiscreteCurve,
    h0,
    T: float,
    steps: int,
    m: MetricOrder,
    *,
    energy_tol: float = 1e-3,
    tensor_field=None,
) -> list[GeodesicState]:
    """Integrate the geodesic through c0 with initial velocity h0.

    Classical RK4 at fixed step T/steps on the Hamiltonian system with
    H = 1/2 p^T G^{-1} p, starting from p0 = G(c0) h0.  Raises
    RegularityViolation if an edge collapses (the exit time is attached)
    and StepTooLarge if relative energy drift exceeds energy_tol.
    """
    m = _check_order(m)
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    h = _field_array(c0, h0).reshape(-1)
    if not np.any(h):
        raise ValueError("initial velocity must be nonzero")
    field = tensor_field if tensor_field is not None else _sobolev_tensor_field(m)
    n, d = c0.n, c0.d

    def rhs(x, p):
        G, dG = field(x.reshape(n, d))
        cho = _spd_cholesky(G)
        u = cho_solve(cho, p, check_finite=False)
        pdot = 0.5 * np.einsum("k,klj,l->j", u, dG, u)
        return u, pdot

    x = c0.vertices.reshape(-1).copy()
    G0, _ = field(c0.vertices)
    p = G0 @ h
    cho0 = _spd_cholesky(G0)
    H0 = 0.5 * float(p @ cho_solve(cho0, p, check_finite=False))
    dt = T / steps
    states = [GeodesicState(0.0, c0, p.copy(), H0)]
    for k in range(steps):
        k1x, k1p = rhs(x, p)
        k2x, k2p = rhs(x + 0.5 * dt * k1x, p + 0.5 * dt * k1p)
        k3x, k3p = rhs(x + 0.5 * dt * k2x, p + 0.5 * dt * k2p)
        k4x, k4p = rhs(x + dt * k3x, p + dt * k3p)
        x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        p = p + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        t = (k + 1) * dt
        verts = x.reshape(n, d)
        min_edge = np.linalg.norm(np.roll(verts, -1, 0) - verts, axis=1).min()
        if min_edge <= EPS_EDGE:
            raise RegularityViolation(
                f"geodesic left the regular set at t = {t:.6g}", time=t
            )
        G, _dG = field(verts)
        cho = _spd_cholesky(G)
        H = 0.5 * float(p @ cho_solve(cho, p, check_finite=False))
        if abs(H - H0) > energy_tol * abs(H0):
            raise StepTooLarge(
                f"energy drift {abs(H - H0) / abs(H0):.3e} at t = {t:.6g}; "
                "reduce the step size"
            )
        states.append(GeodesicState(t, DiscreteCurve(verts), p.copy(), H))
    return states


def unit_speed_velocity(c: DiscreteCurve, h, m: MetricOrder) -> TangentVector:
    """Rescale h so that g^m_c(h, h) = 1."""
    arr = _field_array(c, h)
    norm = np.sqrt(metric_eval(c, arr, arr, m))
    if norm == 0.0:
        raise ValueError("cannot normalize the zero field")
    return TangentVector(arr / norm)


def log_edge_rate(c: DiscreteCurve, h, i: int, m: MetricOrder) -> float:
    """Derivative of log |e_i| at t = 0 along the unit-norm field h.

    The caller must supply h with g^m_c(h, h) = 1 (checked); for m >= 2 the
    absolute value is bounded by 2^{-(m-1)}.
    """
    m = _check_order(m)
    arr = _field_array(c, h)
    norm2 = metric_eval(c, arr, arr, m)
    if abs(norm2 - 1.0) > 1e-8:
        raise ValueError(f"h must have unit metric norm, got g(h,h) = {norm2!r}")
    e = c.edges()
    n = c.n
    de = arr[(i + 1) % n] - arr[i % n]
    return float(e[i % n] @ de / (e[i % n] @ e[i % n]))


def log_edge_rates(c: DiscreteCurve, h) -> np.ndarray:
    """d/dt log |e_i| along h for every edge (no norm check)."""
    arr = _field_array(c, h)
    e = c.edges()
    de = np.roll(arr, -1, 0) - arr
    return np.einsum("ia,ia->i", e, de) / np.einsum("ia,ia->i", e, e)


@dataclass(frozen=True)
class GrowthReport:
    """Least-squares fit of max log sqrt(det G) against geodesic radius."""

    radii: tuple
    log_sqrt_det_max: tuple
    fit_slope: float
    fit_intercept: float
    grigoryan_divergent: bool
    #: max_i |log(|e_i(r)| / |e_i(0)|)| over all samples, per radius; kept as
    #: a diagnostic and deliberately absent from the JSON schema.
    log_edge_ratio_max: tuple = ()

    def to_json_dict(self) -> dict:
        return {
            "radii": list(self.radii),
            "log_sqrt_det_max": list(self.log_sqrt_det_max),
            "fit_slope": self.fit_slope,
            "fit_intercept": self.fit_intercept,
            "grigoryan_divergent": self.grigoryan_divergent,
        }


def _log_sqrt_det(G: np.ndarray) -> float:
    cho = _spd_cholesky(G)
    return float(np.log(np.diag(cho[0])).sum())


def _probe_one(args):
    X0, m, radii, key, steps_per_unit, tensor_field = args
    n, d = X0.shape
    c0 = DiscreteCurve(X0)
    rng = np.random.Generator(np.random.Philox(key=key))
    h = rng.standard_normal((n, d))
    h = unit_speed_velocity(c0, h, m).components
    r_max = max(radii)
    steps = max(1, int(np.ceil(r_max * steps_per_unit)))
    states = geodesic_shoot(c0, h, r_max, steps, m, tensor_field=tensor_field)
    dt = r_max / steps
    field = tensor_field if tensor_field is not None else _sobolev_tensor_field(m)
    out = []
    ratios = []
    e0 = c0.edge_lengths()
    for r in radii:
        state = states[min(len(states) - 1, int(round(r / dt)))]
        G, _ = field(state.position.vertices)
        out.append(_log_sqrt_det(G))
        er = state.position.edge_lengths()
        ratios.append(np.abs(np.log(er / e0)).max())
    return out, ratios


def probe_volume_growth(
    c0: DiscreteCurve,
    m: MetricOrder,
    radii,
    samples: int,
    seed: int,
    *,
    steps_per_unit: int = 200,
    workers: int = 1,
    tensor_field=None,
) -> GrowthReport:
    """Monte Carlo probe of volume-density growth along random geodesics.

    Shoots `samples` unit-speed geodesics in random directions, records
    log sqrt(det G) at each requested radius, and fits the per-radius
    maximum linearly in r.  A good linear fit means log V(r) grows at most
    linearly, so the integral of r / log V(r) diverges and the Grigor'yan
    completeness criterion is satisfied empirically.  This is a heuristic
    probe, not a proof.
    """
    m = _check_order(m)
    if m < 2:
        raise ValueError("volume growth probe requires metric order >= 2")
    radii = [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii) or any(
        b <= a for a, b in zip(radii, radii[1:])
    ):
        raise ValueError("radii must be positive and strictly increasing")
    keys = [
        int(np.random.SeedSequence(entropy=seed, spawn_key=(s,)).generate_state(1)[0])
        for s in range(samples)
    ]
    jobs = [
        (np.asarray(c0.vertices), m, tuple(radii), key, steps_per_unit, tensor_field)
        for key in keys
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_probe_one, jobs))
    else:
        results = [_probe_one(job) for job in jobs]
    values = np.array([r[0] for r in results])  # (samples, len(radii))
    ratios = np.array([r[1] for r in results])
    per_radius_max = values.max(axis=0)
    slope, intercept = np.polyfit(radii, per_radius_max, 1)
    fitted = slope * np.asarray(radii) + intercept
    resid = np.abs(fitted - per_radius_max).max()
    rel_resid = resid / max(1.0, float(np.ptp(per_radius_max)))
    return GrowthReport(
        radii=tuple(radii),
        log_sqrt_det_max=tuple(float(v) for v in per_radius_max),
        fit_slope=float(slope),
        fit_intercept=float(intercept),
        grigoryan_divergent=bool(rel_resid <= 0.2),
        log_edge_ratio_max=tuple(float(v) for v in ratios.max(axis=0)),
    )
