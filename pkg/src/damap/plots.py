"""Figure rendering for run artifacts.

Every report path that writes a delimited file can also render the matching
figure next to it.  Matplotlib is imported lazily with the Agg backend so
headless batch runs never touch a display.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_mapping(payload: dict, path):
    """Hardened encoder maps, one panel per encoder."""
    plt = _plt()
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), sharey=True)
    for ax, entry, label in zip(axes, payload["encoders"], ("encoder 1", "encoder 2")):
        x = np.asarray(entry["x_grid"], float)
        v = np.asarray(entry["final_values"], float)
        ax.plot(x, v, lw=1.4)
        ax.set_xlabel("source value")
        ax.set_title(label)
        ax.grid(alpha=0.3)
    axes[0].set_ylabel("channel input")
    fig.tight_layout()
    _save(fig, path)


def render_decoder(payload: dict, path):
    plt = _plt()
    dec = payload["decoder"]
    xhat1 = np.asarray(dec["xhat1"], float)
    xhat2 = np.asarray(dec["xhat2"], float)
    y1 = np.asarray(dec["y_grid_1"], float)
    y2 = np.asarray(dec["y_grid_2"], float)
    extent = [y2[0], y2[-1], y1[0], y1[-1]]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.8))
    for ax, table, label in zip(axes, (xhat1, xhat2), ("estimate of source 1", "estimate of source 2")):
        im = ax.imshow(table, origin="lower", extent=extent, aspect="auto", cmap="viridis")
        ax.set_xlabel("channel output 2")
        ax.set_ylabel("channel output 1")
        ax.set_title(label)
        fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    _save(fig, path)


def render_anneal(rows: list[dict], path):
    """Cost curves and cluster counts against temperature (log axis)."""
    plt = _plt()
    hot = [r for r in rows if float(r["T"]) > 0]
    if not hot:
        return
    t = np.array([float(r["T"]) for r in hot])
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for key, style in (("D", "-"), ("J", "--"), ("F", ":")):
        ax1.plot(t, [float(r[key]) for r in hot], style, label=key)
    ax1.set_xscale("log")
    ax1.invert_xaxis()
    ax1.set_ylabel("cost")
    ax1.legend(loc="best")
    ax1.grid(alpha=0.3)

    ax2.plot(t, [float(r["H"]) for r in hot], label="association entropy")
    ax2.step(t, [int(float(r["clusters1"])) for r in hot], where="post", label="clusters, encoder 1")
    ax2.step(t, [int(float(r["clusters2"])) for r in hot], where="post", label="clusters, encoder 2")
    ax2.set_xlabel("temperature")
    ax2.set_ylabel("entropy / clusters")
    ax2.legend(loc="best")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def render_sweep(rows: list[dict], path):
    """Distortion SNR against channel SNR, one curve per method."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4.2))
    methods = sorted({row["method"] for row in rows})
    for method in methods:
        pts = sorted(
            ((float(r["CSNR_dB"]), float(r["SNR_dB"])) for r in rows if r["method"] == method)
        )
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=method)
    ax.set_xlabel("CSNR (dB)")
    ax.set_ylabel("SNR (dB)")
    ax.grid(alpha=0.3)
    ax.legend(loc="best")
    fig.tight_layout()
    _save(fig, path)


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130)
    import matplotlib.pyplot as plt

    plt.close(fig)
