"""Static SVG figures: match overlays and sweep curves.

Output is byte-stable: the SVG date stamp is dropped and element ids use a
fixed hash salt.
"""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write  # noqa: E402

_RC = {"svg.hashsalt": "stereo-ot", "svg.fonttype": "none"}


def _save(fig, path):
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return atomic_write(path, buf.getvalue())


def plot_matches(path, left_uv, right_uv, pairs, correct=None, title=None):
    """Left and right image points side by side, one line per matched pair.

    ``pairs`` are index pairs; ``correct`` is an optional boolean per pair
    used to colour wrong matches.
    """
    left_uv = np.asarray(left_uv, dtype=float).reshape(-1, 2)
    right_uv = np.asarray(right_uv, dtype=float).reshape(-1, 2)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(8, 4))
        span = np.ptp(np.vstack([left_uv, right_uv])[:, 0]) or 1.0
        shift = np.array([1.2 * span + (left_uv[:, 0].max() - right_uv[:, 0].min()), 0.0])
        r = right_uv + shift
        ax.scatter(left_uv[:, 0], left_uv[:, 1], s=6, c="tab:blue", label="left")
        ax.scatter(r[:, 0], r[:, 1], s=6, c="tab:orange", label="right")
        for k, (i, j) in enumerate(pairs):
            ok = True if correct is None else bool(correct[k])
            ax.plot(
                [left_uv[i, 0], r[j, 0]],
                [left_uv[i, 1], r[j, 1]],
                lw=0.5,
                color="0.6" if ok else "tab:red",
            )
        ax.invert_yaxis()
        ax.set_aspect("equal", adjustable="datalim")
        ax.legend(loc="upper right", fontsize="small")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_sweep(path, rows):
    """Mean pointwise mismatch against noise level, one panel per distance."""
    distances = list(dict.fromkeys(r["distance"] for r in rows))
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(distances), figsize=(4 * len(distances), 3.2), squeeze=False)
        for ax, d in zip(axes[0], distances):
            sub = [r for r in rows if r["distance"] == d]
            for matcher in dict.fromkeys(r["matcher"] for r in sub):
                pts = sorted((r["sigma"], r["mismatch_mean_pct"]) for r in sub if r["matcher"] == matcher)
                xs = np.arange(len(pts))
                ax.plot(xs, [p[1] for p in pts], marker="o", label=matcher)
                ax.set_xticks(xs, [f"{p[0]:g}" for p in pts])
            ax.set_title(d)
            ax.set_xlabel("noise sigma")
            ax.set_ylabel("mismatch (%)")
            ax.legend(fontsize="small")
        fig.tight_layout()
        return _save(fig, path)
