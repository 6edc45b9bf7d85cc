"""Discrete closed curves and the order-m Sobolev-type metric on them.

A curve is an ordered tuple of n >= 3 vertices in R^d, indexed cyclically,
with no two adjacent vertices coinciding ("regular").  Tangent vectors
attach one displacement per vertex.  The metric of order m combines a
length-weighted L^2 term with an order-m finite-difference arc-length term:

    g^m(h, k) = sum_i  <h_i, k_i> / l^3 * (|e_i| + |e_{i-1}|) / 2
              + sum_i  <D^m h_i, D^m k_i> / l^(3-2m) * mu_i

where e_i = v_{i+1} - v_i, l = sum_i |e_i|, D^m is the cyclic difference
recursion of :func:`arc_derivative`, and mu_i is |e_i| for odd m and the
adjacent-edge average for even m.  The length weights make g^m invariant
under translation, rotation, and simultaneous scaling of curve and tangents.

Everything here depends on the vertices only through the edge vectors, and
the metric weights only through the edge lengths; the assembly therefore
accepts dual-number edge lengths, which is how the calculus module obtains
exact metric derivatives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dual
from .errors import BadShape, RegularityViolation

#: Regularity threshold: adjacent vertices closer than this are rejected.
EPS_EDGE = 1e-12

MetricOrder = int


def _check_order(m: int) -> int:
    if not isinstance(m, (int, np.integer)) or m < 0:
        raise BadShape(f"metric order must be a non-negative integer, got {m!r}")
    return int(m)


@dataclass(frozen=True)
class DiscreteCurve:
    """Regular closed polygonal curve: vertices (n, d), cyclic indexing."""

    vertices: np.ndarray

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=float)
        if verts.ndim != 2:
            raise BadShape(f"vertices must be a 2-d array, got shape {verts.shape}")
        n, d = verts.shape
        if n < 3:
            raise BadShape(f"need at least 3 vertices, got {n}")
        if d < 2:
            raise BadShape(f"ambient dimension must be >= 2, got {d}")
        if not np.all(np.isfinite(verts)):
            raise BadShape("vertices must be finite")
        lengths = np.linalg.norm(np.roll(verts, -1, 0) - verts, axis=1)
        short = np.flatnonzero(lengths <= EPS_EDGE)
        if short.size:
            i = int(short[0])
            raise RegularityViolation(
                f"adjacent vertices {i} and {(i + 1) % n} coincide "
                f"(edge length {lengths[i]:.3e} <= {EPS_EDGE:.0e})",
                edge_index=i,
            )
        verts.setflags(write=False)
        object.__setattr__(self, "vertices", verts)

    @property
    def n(self) -> int:
        return self.vertices.shape[0]

    @property
    def d(self) -> int:
        return self.vertices.shape[1]

    def edges(self) -> np.ndarray:
        """Edge vectors e_i = v_{i+1} - v_i, index n-1 wrapping to vertex 0."""
        return np.roll(self.vertices, -1, 0) - self.vertices

    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edges(), axis=1)

    def total_length(self) -> float:
        return float(self.edge_lengths().sum())

    def min_edge_length(self) -> float:
        return float(self.edge_lengths().min())

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def translated(self, t) -> "DiscreteCurve":
        return DiscreteCurve(self.vertices + np.asarray(t, dtype=float))

    def transformed(self, matrix) -> "DiscreteCurve":
        """Apply a linear map (e.g. a rotation) to every vertex."""
        return DiscreteCurve(self.vertices @ np.asarray(matrix, dtype=float).T)

    def scaled(self, factor: float) -> "DiscreteCurve":
        return DiscreteCurve(self.vertices * float(factor))


@dataclass(frozen=True)
class TangentVector:
    """Per-vertex displacement field over a curve with matching (n, d)."""

    components: np.ndarray

    def __post_init__(self):
        comps = np.array(self.components, dtype=float)
        if comps.ndim != 2:
            raise BadShape(f"components must be a 2-d array, got shape {comps.shape}")
        comps.setflags(write=False)
        object.__setattr__(self, "components", comps)

    @property
    def n(self) -> int:
        return self.components.shape[0]

    @property
    def d(self) -> int:
        return self.components.shape[1]

    def flatten(self) -> np.ndarray:
        """Vertex-major flattening (all d coordinates of vertex 0 first)."""
        return self.components.reshape(-1)


@dataclass(frozen=True)
class MetricTensor:
    """Matrix of g^m in the standard vertex-major coordinate basis."""

    order: int
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise BadShape(f"metric tensor must be square, got shape {mat.shape}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def smallest_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


def _field_array(c: DiscreteCurve, h) -> np.ndarray:
    arr = h.components if isinstance(h, TangentVector) else np.asarray(h, dtype=float)
    if arr.shape != (c.n, c.d):
        raise BadShape(
            f"tangent field shape {arr.shape} does not match curve shape {(c.n, c.d)}"
        )
    return arr


# Identity basis fields, cached per (n, d): entry [i, a, q] is 1 exactly when
# q = i*d + a, so slicing along q enumerates the standard coordinate fields.
_BASIS_CACHE: dict[tuple[int, int], np.ndarray] = {}
_SHIFT_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _basis_fields(n: int, d: int) -> np.ndarray:
    key = (n, d)
    basis = _BASIS_CACHE.get(key)
    if basis is None:
        basis = np.eye(n * d).reshape(n, d, n * d)
        basis.setflags(write=False)
        _BASIS_CACHE[key] = basis
    return basis


def _shift_index(n: int, shift: int) -> np.ndarray:
    # fancy-index replacement for np.roll along axis 0 (np.roll is slow on
    # the small arrays in the assembly hot path)
    key = (n, shift)
    idx = _SHIFT_CACHE.get(key)
    if idx is None:
        idx = np.roll(np.arange(n), shift)
        idx.setflags(write=False)
        _SHIFT_CACHE[key] = idx
    return idx


def _rolled(x, n: int, shift: int):
    idx = _shift_index(n, shift)
    if isinstance(x, dual.Dual):
        return dual.Dual(x.val[idx], x.dot[idx])
    return x[idx]


def _apply_arc_recursion(h, elen, m: int):
    """Run m steps of the cyclic arc-length difference recursion on h.

    h has shape (n, d) or (n, d, B); elen has shape (n,).  Odd steps use the
    forward difference scaled by |e_i|, even steps the backward difference
    scaled by the adjacent-edge average.  Both h and elen may be duals.
    """
    n = dual.value(h).shape[0]
    ndim = dual.value(h).ndim
    cols = (slice(None),) + (np.newaxis,) * (ndim - 1)
    if m >= 2:
        avg = (elen + _rolled(elen, n, 1)) * 0.5
    for step in range(1, m + 1):
        if step % 2 == 1:
            h = (_rolled(h, n, -1) - h) / elen[cols]
        else:
            h = (h - _rolled(h, n, 1)) / avg[cols]
    return h


def _metric_weights(elen, l, m: int):
    """Per-vertex weights of the L^2 term and the order-m term."""
    n = dual.value(elen).shape[0]
    half = (elen + _rolled(elen, n, 1)) * 0.5
    w_low = half / l ** 3
    mu = elen if m % 2 == 1 else half
    w_high = mu / l ** (3 - 2 * m)
    return w_low, w_high


def _weighted_basis_gram(w_low, w_high, deriv, n: int, d: int):
    """Gram matrix sum_i w_low_i <b_q, b_p>_i + w_high_i <P_q, P_p>_i.

    deriv holds the recursion applied to all dn basis fields, shape
    (n, d, dn); any argument may be a Dual.  Contractions are arranged as
    reshaped matrix products, which is what keeps the simulation hot path
    fast.
    """
    dn = n * d
    plain = not (
        isinstance(w_low, dual.Dual)
        or isinstance(w_high, dual.Dual)
        or isinstance(deriv, dual.Dual)
    )
    wl_val = dual.value(w_low)
    wh_val = dual.value(w_high)
    P_val = dual.value(deriv).reshape(dn, dn)
    wh_rows = np.repeat(wh_val, d)
    G = P_val.T @ (wh_rows[:, None] * P_val)
    G[np.arange(dn), np.arange(dn)] += np.repeat(wl_val, d)
    if plain:
        return G
    ndirs = next(
        x.ndirs for x in (w_low, w_high, deriv) if isinstance(x, dual.Dual)
    )
    dot = np.zeros((dn, dn, ndirs))
    if isinstance(deriv, dual.Dual):
        Pd = deriv.dot.reshape(dn, dn, ndirs)
        cross = np.tensordot(
            P_val.T * wh_rows, Pd.reshape(dn, dn * ndirs), axes=1
        ).reshape(dn, dn, ndirs)
        dot += cross + cross.transpose(1, 0, 2)
    if isinstance(w_high, dual.Dual):
        outer = P_val[:, :, None] * P_val[:, None, :]
        dot += np.tensordot(
            outer.reshape(dn, dn * dn).T, np.repeat(w_high.dot, d, axis=0), axes=1
        ).reshape(dn, dn, ndirs)
    if isinstance(w_low, dual.Dual):
        dot[np.arange(dn), np.arange(dn), :] += np.repeat(w_low.dot, d, axis=0)
    return dual.Dual(G, dot)


def _metric_tensor_from_edge_lengths(elen, n: int, d: int, m: int):
    """Assemble the dn x dn metric tensor given the edge lengths.

    This is the bilinear form evaluated on all standard basis fields at
    once.  elen may be a Dual, in which case the result is one too.
    """
    l = elen.sum()
    w_low, w_high = _metric_weights(elen, l, m)
    basis = _basis_fields(n, d)
    deriv = _apply_arc_recursion(basis, elen, m)
    return _weighted_basis_gram(w_low, w_high, deriv, n, d)


def edges(c: DiscreteCurve) -> np.ndarray:
    return c.edges()


def total_length(c: DiscreteCurve) -> float:
    return c.total_length()


def arc_derivative(c: DiscreteCurve, h, m: MetricOrder) -> TangentVector:
    """Order-m arc-length difference of the tangent field h on c."""
    m = _check_order(m)
    arr = _field_array(c, h)
    return TangentVector(_apply_arc_recursion(arr, c.edge_lengths(), m))


def metric_eval(c: DiscreteCurve, h, k, m: MetricOrder) -> float:
    """Evaluate g^m_c(h, k)."""
    m = _check_order(m)
    h = _field_array(c, h)
    k = _field_array(c, k)
    elen = c.edge_lengths()
    w_low, w_high = _metric_weights(elen, elen.sum(), m)
    dh = _apply_arc_recursion(h, elen, m)
    dk = _apply_arc_recursion(k, elen, m)
    low = np.einsum("i,ia,ia->", w_low, h, k)
    high = np.einsum("i,ia,ia->", w_high, dh, dk)
    return float(low + high)


def metric_norm(c: DiscreteCurve, h, m: MetricOrder) -> float:
    """sqrt(g^m_c(h, h))."""
    return float(np.sqrt(metric_eval(c, h, h, m)))


def metric_tensor(c: DiscreteCurve, m: MetricOrder) -> MetricTensor:
    """Assemble the metric tensor of g^m at c in the vertex-major basis."""
    m = _check_order(m)
    mat = _metric_tensor_from_edge_lengths(c.edge_lengths(), c.n, c.d, m)
    mat = 0.5 * (mat + mat.T)  # contraction order is not bit-symmetric
    return MetricTensor(order=m, matrix=mat)


def make_circle(n: int, radius: float = 1.0, d: int = 2) -> DiscreteCurve:
    """Regular n-gon inscribed in a circle in the first two coordinates."""
    if n < 3:
        raise BadShape(f"need at least 3 vertices, got {n}")
    if d < 2:
        raise BadShape(f"ambient dimension must be >= 2, got {d}")
    if radius <= 0:
        raise BadShape(f"radius must be positive, got {radius}")
    angles = 2.0 * np.pi * np.arange(n) / n
    verts = np.zeros((n, d))
    verts[:, 0] = radius * np.cos(angles)
    verts[:, 1] = radius * np.sin(angles)
    return DiscreteCurve(verts)


def make_square() -> DiscreteCurve:
    """The four corners of the unit square."""
    return DiscreteCurve(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


def from_points(points) -> DiscreteCurve:
    """Build a curve from an ordered point list, enforcing regularity."""
    return DiscreteCurve(np.asarray(points, dtype=float))


def save_curve(c: DiscreteCurve, path) -> None:
    """Write a curve as JSON: {"d", "n", "vertices"} with full precision."""
    rows = ",\n".join(
        "    [" + ", ".join(format(x, ".17g") for x in row) + "]"
        for row in c.vertices
    )
    text = '{\n  "d": %d,\n  "n": %d,\n  "vertices": [\n%s\n  ]\n}\n' % (c.d, c.n, rows)
    Path(path).write_text(text, encoding="utf-8")


def load_curve(path) -> DiscreteCurve:
    """Read a curve from the JSON format written by :func:`save_curve`."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BadShape(f"not valid JSON: {path}: {exc}") from exc
    for key in ("d", "n", "vertices"):
        if key not in data:
            raise BadShape(f"curve file missing key {key!r}: {path}")
    verts = np.asarray(data["vertices"], dtype=float)
    if verts.ndim != 2 or verts.shape != (data["n"], data["d"]):
        raise BadShape(
            f"vertices shape {verts.shape} does not match declared "
            f"(n, d) = ({data['n']}, {data['d']}): {path}"
        )
    return DiscreteCurve(verts)
