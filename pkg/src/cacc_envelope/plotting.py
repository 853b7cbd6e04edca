"""Static figures for traces and boundary scans (written to files)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .oracle import BoundaryScan  # noqa: E402

__all__ = ["plot_trace", "plot_scan"]


def plot_trace(table: dict, path, title: str | None = None) -> None:
    """Gap, speeds and accelerations over time from :func:`traceio.trace_table`."""
    t = table["time"]
    fig, axes = plt.subplots(3, 1, figsize=(8, 8), sharex=True)
    ax = axes[0]
    ax.plot(t, table["gap"], color="k", lw=1.2, label="gap")
    if "x_gf" in table:
        ax.plot(t, table["x_gl"] - table["x_gf"], color="0.6", lw=0.8, ls="--",
                label="ghost gap")
    ax.axhline(0.0, color="r", lw=0.8)
    ax.set_ylabel("gap (m)")
    ax.legend(loc="best", fontsize=8)
    ax = axes[1]
    ax.plot(t, table["v_f"], label="v_f")
    ax.plot(t, table["v_l"], label="v_l")
    ax.step(t, table["v_ld"], where="post", lw=0.8, label="v_ld")
    ax.set_ylabel("speed (m/s)")
    ax.legend(loc="best", fontsize=8)
    ax = axes[2]
    ax.step(t, table["a_f"], where="pre", label="a_f")
    ax.step(t, table["a_l"], where="pre", label="a_l")
    dropped = np.asarray(table["pkgdrop"]) == 1
    if dropped.any():
        lo = min(np.min(table["a_f"]), np.min(table["a_l"]))
        ax.plot(t[dropped], np.full(dropped.sum(), lo), "|", color="r", label="pkgdrop")
    ax.set_ylabel("accel (m/s^2)")
    ax.set_xlabel("time (s)")
    ax.legend(loc="best", fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_scan(scan: BoundaryScan, path) -> None:
    """Guard threshold and its disagreement with the oracle over the grid."""
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.5))
    ext = [scan.v_ld[0], scan.v_ld[-1], scan.v_f[0], scan.v_f[-1]]
    im = axes[0].imshow(scan.formula_gap, origin="lower", aspect="auto", extent=ext)
    axes[0].set_title("drive threshold gap (m)")
    fig.colorbar(im, ax=axes[0])
    im = axes[1].imshow(scan.conservatism, origin="lower", aspect="auto", extent=ext,
                        cmap="coolwarm")
    axes[1].set_title("formula - oracle (m)")
    fig.colorbar(im, ax=axes[1])
    for ax in axes:
        ax.set_xlabel("v_ld (m/s)")
        ax.set_ylabel("v_f (m/s)")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
