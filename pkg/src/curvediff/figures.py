"""Matplotlib figures rendered next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import LogNorm

from .brownian import EnsembleStats, TrajectoryRecord
from .calculus import GeodesicState, GrowthReport
from .triangle import SINGULAR_POINTS, TriangleTrajectory


def save(fig, path, dpi=150) -> None:
    fig.savefig(path, dpi=dpi, bbox_inches="tight")
    plt.close(fig)


def trajectory_figure(record: TrajectoryRecord):
    """Centroid track, minimum edge length and total length over time."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    cent = np.asarray(record.centroid_series)
    t = np.asarray(record.times)
    axes[0].plot(cent[:, 0], cent[:, 1], color="crimson", lw=1.0)
    axes[0].scatter(cent[0, 0], cent[0, 1], color="k", s=12, zorder=3)
    axes[0].set_title("centroid track")
    axes[0].set_aspect("equal", adjustable="datalim")
    axes[1].plot(t, record.min_edge_series, lw=1.0)
    axes[1].set_yscale("log")
    axes[1].set_title("min edge length")
    axes[1].set_xlabel("t")
    axes[2].plot(t, record.length_series, lw=1.0)
    axes[2].set_title("total length")
    axes[2].set_xlabel("t")
    fig.tight_layout()
    return fig


def snapshots_figure(record: TrajectoryRecord):
    """Every recorded curve as a closed polyline, colored by time."""
    fig, ax = plt.subplots(figsize=(5, 5))
    cmap = plt.get_cmap("viridis")
    n_snap = len(record.curves)
    for i, curve in enumerate(record.curves):
        verts = curve.vertices
        closed = np.vstack([verts, verts[:1]])
        color = cmap(i / max(n_snap - 1, 1))
        ax.plot(closed[:, 0], closed[:, 1], color=color, lw=0.8, alpha=0.85)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(f"{n_snap} recorded curves")
    return fig


def ensemble_figure(stats: EnsembleStats):
    """Quantile fans of min edge length and centroid displacement."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    t = np.asarray(stats.times)
    q = stats.quantiles
    lo, hi = 0, len(q) - 1
    mid = len(q) // 2
    for ax, arr, title in (
        (axes[0], stats.min_edge, "min edge length"),
        (axes[1], stats.centroid_displacement, "centroid displacement"),
    ):
        ax.fill_between(t, arr[:, lo], arr[:, hi], alpha=0.25, label=f"q{int(100*q[lo])}-q{int(100*q[hi])}")
        ax.plot(t, arr[:, mid], lw=1.2, label="median")
        ax.set_xlabel("t")
        ax.set_title(title)
        ax.legend(fontsize=8)
    axes[0].set_yscale("log")
    fig.tight_layout()
    return fig


def conformal_grid_figure(xs, ys, values, clamp):
    """Heat map of the conformal factor with the punctures marked."""
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    clipped = np.minimum(values, clamp)
    mesh = ax.pcolormesh(
        xs, ys, clipped.T, norm=LogNorm(vmin=max(clipped.min(), 1e-6), vmax=clamp),
        shading="auto", cmap="magma",
    )
    ax.scatter(SINGULAR_POINTS[:, 0], SINGULAR_POINTS[:, 1], marker="x", color="cyan")
    ax.set_aspect("equal")
    fig.colorbar(mesh, ax=ax, label="conformal factor")
    return fig


def triangle_trajectory_figure(traj: TriangleTrajectory):
    """Apex path in the punctured plane."""
    fig, ax = plt.subplots(figsize=(5, 5))
    pts = np.asarray(traj.points)
    ax.plot(pts[:, 0], pts[:, 1], lw=0.7, color="navy", alpha=0.8)
    ax.scatter(pts[0, 0], pts[0, 1], color="k", s=14, zorder=3)
    ax.scatter(SINGULAR_POINTS[:, 0], SINGULAR_POINTS[:, 1], marker="x", color="red")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(f"min distance to punctures: {traj.min_singularity_distance:.3g}")
    return fig


def growth_figure(report: GrowthReport):
    """Volume-density probe with its linear fit."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    r = np.asarray(report.radii)
    ax.plot(r, report.log_sqrt_det_max, "o", ms=4, label="max log sqrt det G")
    ax.plot(
        r,
        report.fit_slope * r + report.fit_intercept,
        "--",
        label=f"fit slope {report.fit_slope:.3g}",
    )
    ax.set_xlabel("geodesic radius")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def geodesic_figure(states: list[GeodesicState]):
    """Energy drift and edge-length envelope along a shoot."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    t = np.array([s.t for s in states])
    H = np.array([s.energy for s in states])
    axes[0].plot(t, H / H[0] - 1.0, lw=1.0)
    axes[0].set_title("relative energy drift")
    axes[0].set_xlabel("t")
    edges = np.array([s.position.edge_lengths() for s in states])
    axes[1].plot(t, edges.min(axis=1), label="min edge")
    axes[1].plot(t, edges.max(axis=1), label="max edge")
    axes[1].set_yscale("log")
    axes[1].set_xlabel("t")
    axes[1].legend(fontsize=8)
    fig.tight_layout()
    return fig
