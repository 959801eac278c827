"""SVG figures for the CLI report paths.

Rendering follows the usual conventions for these pictures: sites are
triangles, zeros are small dots, Voronoi edges are solid black segments with a
thin warm band whose opacity tracks the limiting edge density.
"""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

# fixed hash salt and no date stamp keep the SVG text reproducible
plt.rcParams["svg.hashsalt"] = "hxz"
plt.rcParams["svg.fonttype"] = "none"

SITE_COLORS = {"essential": "#b2182b", "pole": "#2166ac"}


def _save(fig, path):
    fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return path


def view_box(points, zeros=None, pad=0.35):
    """Square window around the sites, widened to hold the bulk of the zeros."""
    pts = np.asarray(points, dtype=complex)
    if zeros is not None and len(zeros):
        z = np.asarray(zeros, dtype=complex)
        # ignore far outliers such as zeros escaping to infinity
        lo = np.percentile(np.c_[z.real, z.imag], 2, axis=0)
        hi = np.percentile(np.c_[z.real, z.imag], 98, axis=0)
        pts = np.concatenate([pts, [complex(lo[0], lo[1]), complex(hi[0], hi[1])]])
    cx = 0.5 * (pts.real.min() + pts.real.max())
    cy = 0.5 * (pts.imag.min() + pts.imag.max())
    half = 0.5 * max(np.ptp(pts.real), np.ptp(pts.imag), 1.0) * (1 + 2 * pad)
    return cx - half, cx + half, cy - half, cy + half


def _edge_segments(edge, box, samples=400):
    """Points of an edge, with infinite ends cut off well outside ``box``."""
    x0, x1, y0, y1 = box
    reach = 2 * math.hypot(x1 - x0, y1 - y0) + abs(edge.midpoint - complex(0.5 * (x0 + x1), 0.5 * (y0 + y1)))
    lo = max(edge.t_lo, -reach)
    hi = min(edge.t_hi, reach)
    if hi <= lo:
        return None
    t = np.linspace(lo, hi, samples)
    return t, edge.midpoint + t * edge.direction


def plot_voronoi(diagram, lim, kinds, path, zeros=None, title=None):
    """Sites, Voronoi edges with a density band, and optional zeros."""
    box = view_box(diagram.points, zeros)
    fig, ax = plt.subplots(figsize=(6, 6))
    dens = []
    bands = []
    for em in lim.edges:
        seg = _edge_segments(em.edge, box)
        if seg is None:
            continue
        t, z = seg
        ax.plot(z.real, z.imag, color="black", lw=1.0, zorder=2)
        d = em.density(z)
        pts = np.c_[z.real, z.imag].reshape(-1, 1, 2)
        bands.append(np.concatenate([pts[:-1], pts[1:]], axis=1))
        dens.append(0.5 * (d[1:] + d[:-1]))
    if bands:
        d = np.concatenate(dens)
        alpha = np.clip(d / d.max(), 0.05, 1.0)
        colors = np.zeros((len(d), 4))
        colors[:, :3] = matplotlib.colors.to_rgb("#fdae61")
        colors[:, 3] = alpha
        ax.add_collection(LineCollection(np.concatenate(bands), colors=colors, linewidths=5, zorder=1))
    if zeros is not None and len(zeros):
        z = np.asarray(zeros, dtype=complex)
        ax.plot(z.real, z.imag, ".", color="#1f3b73", ms=2.5, zorder=3, label="zeros")
    for p, kind in zip(diagram.points, kinds):
        ax.plot(p.real, p.imag, marker="^", ms=9, color=SITE_COLORS.get(kind, "gray"),
                mec="black", mew=0.6, ls="none", zorder=4)
    ax.set_xlim(box[0], box[1])
    ax.set_ylim(box[2], box[3])
    ax.set_aspect("equal")
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_local_model(x, weights, limit, path, title=None):
    """Histogram of rescaled zeros against the limiting density."""
    fig, ax = plt.subplots(figsize=(6, 4))
    top = float(limit.c_m)
    ax.hist(x, bins=40, range=(0, top), weights=weights * 40 / top, color="#9ecae1",
            edgecolor="white", label="rescaled zeros")
    grid = np.linspace(1e-4, top * (1 - 1e-6), 600)
    ax.plot(grid, limit.pdf(grid), color="#b2182b", lw=1.5, label=f"limit density, m={limit.m}")
    ax.set_xlabel(r"$\zeta$")
    ax.set_ylabel("density")
    ax.set_ylim(0, min(ax.get_ylim()[1], 4 * float(np.median(limit.pdf(grid))) + 1))
    ax.legend(frameon=False)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_l1rate(report, path):
    """log-log plot of the L1 estimates with the fitted and reference slopes."""
    n = np.asarray(report.n_list, dtype=float)
    est = np.asarray(report.estimates)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(n, est, "o-", color="#1f3b73", label=f"estimate (slope {report.slope:.3f})")
    ref = est[0] * (n / n[0]) ** report.expected_slope
    ax.loglog(n, ref, "--", color="gray", label=f"slope {report.expected_slope:g}")
    ax.set_xlabel("n")
    ax.set_ylabel("L1 distance")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_degree_law(rows, path):
    """deg B_n against n, computed and predicted."""
    n = [r.n for r in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(n, [r.deg_expected for r in rows], "-", color="gray", label="predicted")
    ax.plot(n, [r.deg for r in rows], ".", color="#1f3b73", label="computed")
    ax.set_xlabel("n")
    ax.set_ylabel(r"deg $B_n$")
    ax.legend(frameon=False)
    return _save(fig, path)
