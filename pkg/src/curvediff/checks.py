"""Named property suites runnable from the CLI and reused by the tests.

Each check draws its own seeded random inputs, so a given (name, seed,
samples, m) triple is fully reproducible.  Results are plain data, ready to
serialize as JSON.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import calculus, curves, triangle

DEFAULT_SAMPLES = 200


def random_regular_curve(
    rng: np.random.Generator,
    n: int,
    d: int,
    *,
    spread: float = 0.35,
    min_edge: float = 0.1,
    tries: int = 200,
) -> curves.DiscreteCurve:
    """Perturbed regular polygon with a guaranteed minimum edge length."""
    base = curves.make_circle(n, 1.0, d).vertices
    for _ in range(tries):
        verts = base + spread * rng.standard_normal((n, d))
        diffs = np.roll(verts, -1, 0) - verts
        if np.linalg.norm(diffs, axis=1).min() > min_edge:
            return curves.DiscreteCurve(verts)
    raise RuntimeError(f"could not draw a regular curve (n={n}, d={d})")


def random_tangent(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    return rng.standard_normal((n, d))


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict

    def to_json_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "details": self.details}


def check_metric_spd(seed=0, samples=None, m=None) -> CheckResult:
    """Smallest eigenvalue of the metric tensor is positive."""
    rng = np.random.default_rng(seed)
    samples = samples or 20
    orders = (m,) if m is not None else (0, 1, 2, 3, 4)
    worst = np.inf
    count = 0
    for order in orders:
        for d in (2, 3):
            for n in (3, 5, 8, 12):
                for _ in range(max(1, samples // 8)):
                    c = random_regular_curve(rng, n, d)
                    lam = curves.metric_tensor(c, order).smallest_eigenvalue()
                    worst = min(worst, lam)
                    count += 1
    return CheckResult(
        "metric-spd",
        bool(worst > 0.0),
        {"min_eigenvalue": worst, "tensors_checked": count},
    )


def check_invariance(seed=0, samples=None, m=None) -> CheckResult:
    """Translation / rotation / scale invariance of the metric."""
    rng = np.random.default_rng(seed)
    samples = samples or DEFAULT_SAMPLES
    orders = (m,) if m is not None else (0, 1, 2, 3, 4)
    worst = {"translation": 0.0, "rotation": 0.0, "scale": 0.0}
    for _ in range(samples):
        order = orders[rng.integers(len(orders))]
        n, d = int(rng.integers(3, 9)), int(rng.integers(2, 4))
        # translation roundoff scales with |t| / min_edge through the order-m
        # recursion; these ranges keep the 1e-12 budget with margin
        c = random_regular_curve(rng, n, d, min_edge=0.2, spread=0.3)
        h = random_tangent(rng, n, d)
        k = random_tangent(rng, n, d)
        base = curves.metric_eval(c, h, k, order)
        t = rng.uniform(-3, 3, d)
        shifted = curves.metric_eval(c.translated(t), h, k, order)
        worst["translation"] = max(worst["translation"], abs(shifted / base - 1))
        rot = np.linalg.qr(rng.standard_normal((d, d)))[0]
        rotated = curves.metric_eval(c.transformed(rot), h @ rot.T, k @ rot.T, order)
        worst["rotation"] = max(worst["rotation"], abs(rotated / base - 1))
        lam = float(rng.uniform(0.2, 5.0))
        scaled = curves.metric_eval(c.scaled(lam), lam * h, lam * k, order)
        worst["scale"] = max(worst["scale"], abs(scaled / base - 1))
    passed = (
        worst["translation"] <= 1e-12
        and worst["rotation"] <= 1e-10
        and worst["scale"] <= 1e-10
    )
    return CheckResult("invariance", bool(passed), worst)


def check_edge_rate(seed=0, samples=None, m=None) -> CheckResult:
    """|d/dt log |e_i|| <= 2^{1-m} along unit-norm tangents (m >= 2)."""
    rng = np.random.default_rng(seed)
    samples = samples or DEFAULT_SAMPLES
    orders = (m,) if m is not None else (2, 3)
    details = {}
    passed = True
    for order in orders:
        bound = 2.0 ** (1 - order)
        worst = 0.0
        for _ in range(samples):
            n, d = int(rng.integers(3, 9)), int(rng.integers(2, 4))
            c = random_regular_curve(rng, n, d, min_edge=0.05, spread=0.5)
            h = calculus.unit_speed_velocity(c, random_tangent(rng, n, d), order)
            worst = max(worst, float(np.abs(calculus.log_edge_rates(c, h.components)).max()))
        details[f"max_rate_m{order}"] = worst
        details[f"bound_m{order}"] = bound
        passed = passed and worst <= bound + 1e-9
    return CheckResult("edge-rate", bool(passed), details)


def check_drift(seed=0, samples=None, m=None) -> CheckResult:
    """Dual-number drift against a central finite-difference evaluation."""
    rng = np.random.default_rng(seed)
    samples = samples or 15
    orders = (m,) if m is not None else (0, 1, 2)
    worst = 0.0
    for order in orders:
        for _ in range(samples):
            n, d = int(rng.integers(3, 7)), 2
            c = random_regular_curve(rng, n, d)
            b = calculus.drift(c, order)
            b_fd = finite_difference_drift(c, order)
            scale = max(np.linalg.norm(b_fd), 1e-12)
            worst = max(worst, float(np.linalg.norm(b - b_fd) / scale))
    return CheckResult("drift", bool(worst <= 1e-5), {"max_rel_err": worst})


def check_drift_translation(seed=0, samples=None, m=None) -> CheckResult:
    """The drift's divergence sum has no contribution along translations.

    Verifies that contracting the metric gradient (and hence the gradient
    of log sqrt(det G)) with constant fields gives zero, and that the drift
    field itself is translation invariant.
    """
    rng = np.random.default_rng(seed)
    samples = samples or 25
    orders = (m,) if m is not None else (0, 1, 2)
    worst_grad = 0.0
    worst_invariance = 0.0
    for order in orders:
        for _ in range(samples):
            n, d = int(rng.integers(3, 7)), int(rng.integers(2, 4))
            c = random_regular_curve(rng, n, d)
            G, dG = calculus.metric_with_gradient(c.vertices, order)
            Ginv = np.linalg.inv(G)
            grad_logdet = np.einsum("kl,klj->j", Ginv, dG)
            for a in range(d):
                t = np.zeros((n, d))
                t[:, a] = 1.0
                t = t.reshape(-1)
                worst_grad = max(
                    worst_grad,
                    float(np.abs(dG @ t).max()),
                    abs(float(grad_logdet @ t)),
                )
            b0 = calculus.drift(c, order)
            b1 = calculus.drift(c.translated(rng.uniform(-3, 3, d)), order)
            scale = max(np.linalg.norm(b0), 1e-12)
            worst_invariance = max(
                worst_invariance, float(np.linalg.norm(b1 - b0) / scale)
            )
    passed = worst_grad <= 1e-8 and worst_invariance <= 1e-8
    return CheckResult(
        "drift-translation",
        bool(passed),
        {
            "max_translation_gradient": worst_grad,
            "max_drift_shift": worst_invariance,
        },
    )


def check_diffusion(seed=0, samples=None, m=None) -> CheckResult:
    """Relative Frobenius residual of sigma sigma^T G - I."""
    rng = np.random.default_rng(seed)
    samples = samples or 34
    orders = (m,) if m is not None else (0, 1, 2)
    worst = 0.0
    for order in orders:
        for _ in range(samples):
            n, d = int(rng.integers(3, 10)), int(rng.integers(2, 4))
            c = random_regular_curve(rng, n, d)
            G = curves.metric_tensor(c, order).matrix
            sigma = calculus.diffusion_factor(c, order)
            eye = np.eye(G.shape[0])
            res = np.linalg.norm(sigma @ sigma.T @ G - eye) / np.linalg.norm(eye)
            worst = max(worst, float(res))
            if not np.allclose(sigma, np.tril(sigma)):
                return CheckResult(
                    "diffusion", False, {"error": "factor not lower-triangular"}
                )
    return CheckResult("diffusion", bool(worst <= 1e-10), {"max_rel_residual": worst})


def check_triangle_oracle(seed=0, samples=None, m=None, metric_fn=None) -> CheckResult:
    """Closed-form conformal factors against the embedded curve metric.

    metric_fn replaces curves.metric_eval, which lets tests inject a broken
    metric and confirm the oracle catches it.
    """
    rng = np.random.default_rng(seed)
    samples = samples or DEFAULT_SAMPLES
    metric_fn = metric_fn or curves.metric_eval
    orders = (m,) if m is not None else (0, 1, 2)
    worst = 0.0
    for _ in range(samples):
        order = orders[rng.integers(len(orders))]
        v = rng.uniform(-2.0, 2.0, 2)
        if min(np.hypot(v[0] - 1, v[1]), np.hypot(v[0] + 1, v[1])) < 1e-2:
            continue
        h = rng.standard_normal(2)
        point = triangle.TrianglePoint(v)
        lifted = triangle.embed_tangent(h)
        lhs = metric_fn(point.to_curve(), lifted, lifted, order)
        rhs = triangle.conformal_factor(order, point) * float(h @ h)
        worst = max(worst, abs(lhs / rhs - 1))
    return CheckResult("triangle-oracle", bool(worst <= 1e-10), {"max_rel_err": worst})


def check_geodesic_energy(seed=0, samples=None, m=None) -> CheckResult:
    """Hamiltonian conservation of the geodesic integrator."""
    rng = np.random.default_rng(seed)
    # each sample is a 1000-step shoot; a handful is plenty
    samples = min(samples, 5) if samples else 3
    order = m if m is not None else 2
    worst = 0.0
    for _ in range(samples):
        c = random_regular_curve(rng, 5, 2)
        h = calculus.unit_speed_velocity(c, random_tangent(rng, 5, 2), order)
        states = calculus.geodesic_shoot(c, h, 1.0, 1000, order)
        H = np.array([s.energy for s in states])
        worst = max(worst, float(np.abs(H / H[0] - 1.0).max()))
    return CheckResult("geodesic-energy", bool(worst <= 1e-6), {"max_rel_drift": worst})


def finite_difference_drift(c: curves.DiscreteCurve, m: int) -> np.ndarray:
    """Drift evaluated with central differences end to end (test oracle).

    The step balances truncation against the roundoff amplification of the
    two matrix inversions; 3e-5 minimizes the worst case for m <= 2.
    """
    X = c.vertices
    n, d = X.shape
    dn = n * d
    flat = X.reshape(-1)
    G0 = curves.metric_tensor(c, m).matrix
    Ginv0 = np.linalg.inv(G0)
    b = np.zeros(dn)
    for i in range(dn):
        step = 3e-5 * max(1.0, abs(flat[i]))
        xp = flat.copy()
        xp[i] += step
        xm = flat.copy()
        xm[i] -= step
        Gp = curves.metric_tensor(curves.DiscreteCurve(xp.reshape(n, d)), m).matrix
        Gm = curves.metric_tensor(curves.DiscreteCurve(xm.reshape(n, d)), m).matrix
        dGinv = (np.linalg.inv(Gp) - np.linalg.inv(Gm)) / (2 * step)
        dlog = (np.linalg.slogdet(Gp)[1] - np.linalg.slogdet(Gm)[1]) / (2 * step)
        b += 0.5 * dGinv[i, :] + 0.25 * Ginv0[i, :] * dlog
    return b


PROPERTIES = {
    "metric-spd": check_metric_spd,
    "invariance": check_invariance,
    "edge-rate": check_edge_rate,
    "drift": check_drift,
    "drift-translation": check_drift_translation,
    "diffusion": check_diffusion,
    "triangle-oracle": check_triangle_oracle,
    "geodesic-energy": check_geodesic_energy,
}


def run_checks(names=None, *, seed=0, samples=None, m=None) -> list[CheckResult]:
    names = list(names) if names else list(PROPERTIES)
    unknown = [x for x in names if x not in PROPERTIES]
    if unknown:
        raise ValueError(f"unknown properties: {unknown}; know {sorted(PROPERTIES)}")
    return [PROPERTIES[name](seed=seed, samples=samples, m=m) for name in names]
