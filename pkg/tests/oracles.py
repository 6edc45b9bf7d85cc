"""Independent reference implementations used as test oracles.

Everything here is written as a literal plain-loop transcription of the
defining formulas, sharing no code with the package.  The derivative oracle
uses complex-step differentiation, which is exact to machine precision and
entirely unrelated to the package's dual-number engine.
"""

import cmath

import numpy as np


def edge_list(verts):
    n = len(verts)
    return [[verts[(i + 1) % n][a] - verts[i][a] for a in range(len(verts[0]))]
            for i in range(n)]


def _norm(vec):
    # cmath.sqrt of the plain square sum keeps this analytic in each
    # coordinate, which is what complex-step differentiation requires
    return cmath.sqrt(sum(x * x for x in vec))


def metric_eval_reference(verts, h, k, m):
    """Order-m metric, transcribed term by term (supports complex verts)."""
    n = len(verts)
    d = len(verts[0])
    e = edge_list(verts)
    elen = [_norm(e[i]) for i in range(n)]
    l = sum(elen)

    def ds(field, order):
        out = [list(row) for row in field]
        for step in range(1, order + 1):
            if step % 2 == 1:
                out = [
                    [(out[(i + 1) % n][a] - out[i][a]) / elen[i] for a in range(d)]
                    for i in range(n)
                ]
            else:
                out = [
                    [
                        (out[i][a] - out[(i - 1) % n][a])
                        / ((elen[i] + elen[(i - 1) % n]) / 2)
                        for a in range(d)
                    ]
                    for i in range(n)
                ]
        return out

    dh = ds(h, m)
    dk = ds(k, m)
    total = 0
    for i in range(n):
        low_w = (elen[i] + elen[(i - 1) % n]) / 2
        total += sum(h[i][a] * k[i][a] for a in range(d)) / l**3 * low_w
        if m % 2 == 1:
            mu = elen[i]
        else:
            mu = (elen[i] + elen[(i - 1) % n]) / 2
        total += sum(dh[i][a] * dk[i][a] for a in range(d)) / l ** (3 - 2 * m) * mu
    return total


def metric_tensor_reference(verts, m):
    """Entry-by-entry Gram matrix of the reference metric."""
    n = len(verts)
    d = len(verts[0])
    dn = n * d
    G = np.zeros((dn, dn), dtype=complex)
    for q in range(dn):
        for p in range(dn):
            bq = [[1.0 if i * d + a == q else 0.0 for a in range(d)] for i in range(n)]
            bp = [[1.0 if i * d + a == p else 0.0 for a in range(d)] for i in range(n)]
            G[q, p] = metric_eval_reference(verts, bq, bp, m)
    return G


def metric_gradient_reference(verts, m, step=1e-200):
    """dG[k, l, j] by complex-step differentiation of the reference tensor."""
    verts = np.asarray(verts, dtype=float)
    n, d = verts.shape
    dn = n * d
    out = np.zeros((dn, dn, dn))
    for j in range(dn):
        bumped = verts.astype(complex).copy()
        bumped[j // d, j % d] += 1j * step
        out[:, :, j] = metric_tensor_reference(bumped.tolist(), m).imag / step
    return out


def drift_reference(verts, m):
    """Generator drift from the reference tensor and complex-step gradient."""
    verts = np.asarray(verts, dtype=float)
    dn = verts.size
    G = metric_tensor_reference(verts.tolist(), m).real
    dG = metric_gradient_reference(verts, m)
    Ginv = np.linalg.inv(G)
    b = np.zeros(dn)
    for j in range(dn):
        for i in range(dn):
            dGinv_i = -Ginv @ dG[:, :, i] @ Ginv
            b[j] += 0.5 * dGinv_i[i, j]
            b[j] += 0.25 * Ginv[i, j] * np.trace(Ginv @ dG[:, :, i])
    return b


def algorithm_step_reference(verts, m, dt, xi):
    """One Euler-Maruyama update transcribed directly from its definition."""
    verts = np.asarray(verts, dtype=float)
    G = metric_tensor_reference(verts.tolist(), m).real
    b = drift_reference(verts, m)
    sigma = np.linalg.cholesky(np.linalg.inv(G))
    x = verts.reshape(-1)
    x_new = x + dt * b + np.sqrt(dt) * sigma @ np.asarray(xi, dtype=float)
    return x_new.reshape(verts.shape)
