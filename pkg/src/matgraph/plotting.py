"""Report figures (matplotlib, Agg backend). Each function writes one PNG and returns its path."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
from matplotlib import pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 8,
    "axes.titlesize": 9,
    "axes.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}
HALF = (3.5, 2.6)
FULL = (7.0, 2.6)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_synthesis_trace(events, path) -> Path:
    """Active-path depth per step; failed steps marked and labelled with their error code."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=FULL)
        steps = [e.step for e in events]
        depth = [e.depth for e in events]
        ax.step(steps, depth, where="post", color="0.2", lw=1)
        bad = [e for e in events if e.verdict == "invalid"]
        rep = [e for e in events if e.verdict == "repaired"]
        if bad:
            ax.scatter([e.step for e in bad], [e.depth for e in bad], marker="x", color="C3",
                       s=18, label="invalid", zorder=3)
        if rep:
            ax.scatter([e.step for e in rep], [e.depth for e in rep], marker="o", color="C2",
                       s=14, label="repaired", zorder=3)
        ax.set_xlabel("step")
        ax.set_ylabel("active path length")
        if bad or rep:
            ax.legend(frameon=False, loc="upper left")
        return _save(fig, path)


def plot_phase_times(timings: dict, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=HALF)
        keys = list(timings)
        ax.barh(keys, [timings[k] for k in keys], color="C0")
        ax.invert_yaxis()
        ax.set_xlabel("seconds")
        return _save(fig, path)


def plot_loss_history(history, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=HALF)
        if history:
            ev, loss = zip(*history)
            ax.step(ev, loss, where="post", color="C0")
            if min(loss) > 0:
                ax.set_yscale("log")
        ax.set_xlabel("evaluations")
        ax.set_ylabel("L1 loss")
        return _save(fig, path)


def plot_histogram(values, path, xlabel, threshold=None) -> Path:
    """Distribution of a per-item metric with its mean and an optional target line."""
    values = np.asarray(list(values), dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=HALF)
        ax.hist(values, bins=30, color="C0", alpha=0.8)
        if len(values):
            ax.axvline(values.mean(), color="0.2", lw=1, label=f"mean {values.mean():.3f}")
        if threshold is not None:
            ax.axvline(threshold, color="C3", lw=1, ls="--", label=f"target {threshold:g}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("count")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_channels(maps: dict, path) -> Path:
    """Channel maps side by side (grayscale maps shown with a gray colormap)."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(maps), figsize=(1.6 * len(maps), 1.9))
        axes = np.atleast_1d(axes)
        for ax, (name, buf) in zip(axes, maps.items()):
            d = np.clip(buf.data, 0.0, 1.0)
            if d.shape[2] == 1:
                ax.imshow(d[..., 0], cmap="gray", vmin=0, vmax=1, interpolation="nearest")
            else:
                ax.imshow(d[..., :3], interpolation="nearest")
            ax.set_title(name)
            ax.set_axis_off()
        return _save(fig, path)
