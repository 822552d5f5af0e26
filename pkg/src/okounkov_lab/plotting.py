"""SVG figures for run reports (matplotlib, Agg backend, reproducible output)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 4.8

params = {
    "svg.hashsalt": "okounkov-lab",
    "svg.fonttype": "path",
    "font.family": "serif",
    "mathtext.fontset": "stix",
    "font.size": 8,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
    "lines.markersize": 3,
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "axes.prop_cycle": matplotlib.cycler(color=["#08589e", "#2b8cbe", "#4eb3d3", "#7bccc4", "#a8ddb5", "#d95f0e"]),
}


def _save(fig, path: str) -> None:
    # no date metadata so identical inputs give identical files
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_body(path, body, points_by_k, label):
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        verts = body.vertex_array()
        kmax = max(points_by_k)
        pts = np.array([[a / kmax for a in e] for e in points_by_k[kmax]], dtype=float)
        if body.dimension == 1:
            ax.plot(verts[:, 0], np.zeros(len(verts)), "-", color="0.4")
            ax.plot(pts[:, 0], np.zeros(len(pts)), "o")
            ax.set_yticks([])
        else:
            closed = np.vstack([verts, verts[:1]])
            ax.fill(closed[:, 0], closed[:, 1], alpha=0.2)
            ax.plot(closed[:, 0], closed[:, 1], "-", color="0.4")
            ax.plot(pts[:, 0], pts[:, 1], "o")
            ax.set_aspect("equal")
        ax.set_title(f"{label}: points of $\\Delta^{{{kmax}}}/{kmax}$")
        _save(fig, path)


def plot_levels(path, x, ks, samples, reference=None):
    """Single-level hulls ``c_k`` against ``x`` for each ``k`` on the ladder."""
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        for k, s in zip(ks, samples):
            ax.plot(x, s, label=f"$k={k}$")
        if reference is not None:
            ax.plot(x, reference.values, "k--", label="Legendre dual")
        ax.set_xlabel("$x$")
        ax.set_ylabel("$c_k(x)$")
        ax.legend(frameon=False)
        _save(fig, path)


def plot_convergence(path, ks, errors):
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        ax.loglog(ks, errors, "o-")
        kk = np.array(ks, dtype=float)
        ref = np.log(kk) / kk
        ax.loglog(ks, ref * errors[0] / ref[0], ":", color="0.5", label=r"$\log k / k$")
        ax.set_xlabel("$k$")
        ax.set_ylabel("sup error")
        ax.legend(frameon=False)
        _save(fig, path)


def plot_affinity(path, ks, residuals):
    """Affinity residual against ``k`` on log axes, one line per pair."""
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        for name, vals in residuals.items():
            ax.loglog(ks, np.maximum(vals, 1e-18), "o-", label=name)
        ax.set_xlabel("$k$")
        ax.set_ylabel("affinity residual")
        ax.legend(frameon=False)
        _save(fig, path)


def plot_distances(path, ts, curves):
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        for (name, p), d in curves.items():
            ax.plot(ts, d, label=f"{name}, p={p}")
        ax.set_xlabel("$t$")
        ax.set_ylabel("$d_p$")
        ax.legend(frameon=False)
        _save(fig, path)


def plot_hinge(path, x, profiles):
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        for i, (t, (hinge, lin)) in enumerate(profiles.items()):
            color = f"C{i % 6}"
            ax.plot(x, hinge, "-", color=color, label=f"hinge $t={t:g}$")
            ax.plot(x, lin, ":", color=color)
        ax.set_xlabel("$x$")
        ax.set_ylabel("$u_t(x)$")
        ax.legend(frameon=False)
        _save(fig, path)
