"""Figure helpers for the CLI reports.

``STYLE`` is an rcParams preset applied through :func:`styled`; each plot
helper draws into a given ``ax`` or makes its own figure, and returns the axes.
"""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (np.sqrt(5) - 1) / 2
FIG_WIDTH = 5.0
PALETTE = ["#08589e", "#2b8cbe", "#4eb3d3", "#7bccc4", "#a8ddb5", "#d95f0e"]

STYLE = {
    "axes.prop_cycle": matplotlib.cycler(color=PALETTE),
    "axes.labelsize": 10,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.family": "serif",
    "font.size": 9,
    "mathtext.fontset": "stix",
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
    "figure.figsize": (FIG_WIDTH, FIG_WIDTH * GOLDEN),
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


@contextmanager
def styled():
    with plt.rc_context(STYLE):
        yield


def _axes(ax, projection: str | None = None):
    if ax is not None:
        return ax
    fig = plt.figure()
    return fig.add_subplot(111, projection=projection)


def save(ax_or_fig, path) -> Path:
    fig = ax_or_fig.figure if hasattr(ax_or_fig, "figure") and not isinstance(ax_or_fig, plt.Figure) else ax_or_fig
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_mesh(points: np.ndarray, triangles: np.ndarray, ax=None, color=None, title: str = ""):
    """Triangulated surface in 3D with equal axis scaling."""
    ax = _axes(ax, "3d")
    ax.plot_trisurf(points[:, 0], points[:, 1], points[:, 2], triangles=triangles,
                    color=color or PALETTE[1], linewidth=0.1, edgecolor="#333333", alpha=0.9)
    span = np.ptp(points, axis=0)
    ax.set_box_aspect(np.maximum(span, 1e-3 * max(span.max(), 1e-12)))
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_zlabel("z")
    if title:
        ax.set_title(title)
    return ax


def plot_field(values: np.ndarray, z: np.ndarray, ax=None, label: str = "", cmap: str = "viridis"):
    """Real scalar field over the z-lattice as a heat map."""
    ax = _axes(ax)
    x, y = z.real, z.imag
    extent = (x.min(), x.max(), y.min(), y.max())
    im = ax.imshow(np.real(values), origin="lower", extent=extent, cmap=cmap, aspect="auto")
    ax.figure.colorbar(im, ax=ax, label=label)
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    return ax


def plot_branch_points(inner, outer, ax=None, cycles=None):
    """Branch points in the nu-plane with the unit circle; optional closed paths (arrays of nu)."""
    ax = _axes(ax)
    t = np.linspace(0, 2 * np.pi, 400)
    ax.plot(np.cos(t), np.sin(t), color="#999999", lw=0.8, label="|nu| = 1")
    inner, outer = np.asarray(inner), np.asarray(outer)
    ax.plot(inner.real, inner.imag, "o", color=PALETTE[0], label="inner")
    ax.plot(outer.real, outer.imag, "s", color=PALETTE[5], label="outer")
    ax.plot([0], [0], "x", color="k")
    for k, path in enumerate(cycles or []):
        path = np.asarray(path)
        ax.plot(path.real, path.imag, lw=0.8, color=PALETTE[(k + 1) % len(PALETTE)])
    ax.set_aspect("equal")
    ax.set_xlabel("Re nu")
    ax.set_ylabel("Im nu")
    ax.legend(loc="upper right")
    return ax


def plot_ratio(r: np.ndarray, ratio: np.ndarray, ax=None, threshold: float = 1.0):
    ax = _axes(ax)
    ax.plot(r, ratio, "o-", label="E(k')/(r K(k'))")
    ax.axhline(threshold, color=PALETTE[5], lw=0.8, ls="--", label="torus threshold")
    ax.set_xlabel("r")
    ax.set_ylabel("ratio")
    ax.set_yscale("log")
    ax.legend()
    return ax


def plot_frame_error(z: np.ndarray, err: np.ndarray, ax=None, label: str = "error"):
    """log10 of a positive error field over the lattice."""
    return plot_field(np.log10(np.maximum(err, 1e-300)), z, ax, f"log10 {label}", cmap="magma")


def plot_circle_values(theta: np.ndarray, series: dict, ax=None):
    """Real-valued functions of theta on S^1, one line per entry of ``series``."""
    ax = _axes(ax)
    for label, values in series.items():
        ax.plot(theta, np.real(values), label=label)
    ax.axhline(0.0, color="#999999", lw=0.6)
    ax.set_xlabel("theta")
    ax.legend()
    return ax
