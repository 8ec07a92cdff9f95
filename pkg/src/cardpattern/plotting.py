"""Figure rendering for the report commands.

Everything draws on a standalone Agg figure (no pyplot state) and returns
PNG bytes. Metadata that would vary between runs is stripped, so the same
data always renders to the same file.
"""

from __future__ import annotations

import io
import math

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

DPI = 100
LEGIT_STYLE = dict(marker="o", s=14, facecolors="none", edgecolors="tab:blue", linewidths=0.8)
FRAUD_STYLE = dict(marker="x", s=16, color="tab:red", linewidths=0.9)


def _new(nrows=1, ncols=1, size=(6.0, 4.5)):
    fig = Figure(figsize=size, dpi=DPI)
    FigureCanvasAgg(fig)
    axes = fig.subplots(nrows, ncols, squeeze=False)
    return fig, axes


def to_png(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=DPI, metadata={"Software": None})
    return buf.getvalue()


def _plane(ax, points, theta, title):
    legit = np.array([(p.point.x, p.point.y) for p in points if p.scored and p.truth.value == "L"]).reshape(-1, 2)
    fraud = np.array([(p.point.x, p.point.y) for p in points if p.scored and p.truth.value == "F"]).reshape(-1, 2)
    ax.scatter(legit[:, 0], legit[:, 1], label="legitimate", **LEGIT_STYLE)
    ax.scatter(fraud[:, 0], fraud[:, 1], label="fraudulent", **FRAUD_STYLE)
    if theta is not None:
        ax.plot([0, theta, theta], [theta, theta, 0], color="0.4", lw=0.8, ls="--")
    ax.set_xlim(-3, 103)
    ax.set_ylim(-3, 103)
    ax.set_xlabel("region confidence x")
    ax.set_ylabel("amount confidence y")
    ax.set_title(title, fontsize=10)


def confidence_planes(panels, theta=None) -> bytes:
    """One scatter panel per method. `panels` is a list of (title, points)."""
    n = len(panels)
    ncols = 2 if n > 1 else 1
    nrows = math.ceil(n / ncols)
    fig, axes = _new(nrows, ncols, (5.0 * ncols, 4.2 * nrows))
    for ax, (title, pts) in zip(axes.flat, panels):
        _plane(ax, pts, theta, title)
    for ax in list(axes.flat)[n:]:
        ax.set_axis_off()
    axes.flat[0].legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return to_png(fig)


def fraud_positions(points, title="") -> bytes:
    """Fraud-block confidence points coloured by position in the block."""
    fig, axes = _new(size=(5.5, 4.5))
    ax = axes[0, 0]
    fraud = [p for p in points if p.scored and p.truth.value == "F"]
    for pos in sorted({p.pos for p in fraud}):
        xy = np.array([(p.point.x, p.point.y) for p in fraud if p.pos == pos])
        ax.scatter(xy[:, 0], xy[:, 1], s=18, label=f"position {pos}")
    ax.plot([0, 10, 10], [10, 10, 0], color="0.4", lw=0.8, ls="--")
    ax.set_xlim(-3, 103)
    ax.set_ylim(-3, 103)
    ax.set_xlabel("region confidence x")
    ax.set_ylabel("amount confidence y")
    ax.set_title(title, fontsize=10)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return to_png(fig)


def sweep_curves(reports) -> bytes:
    """Accuracy and error counts against the threshold, one line per method."""
    fig, axes = _new(1, 3, (12.0, 3.8))
    for name, rep in reports:
        th = [r.theta for r in rep.rows]
        axes[0, 0].plot(th, [r.accuracy for r in rep.rows], marker="o", label=name)
        axes[0, 1].plot(th, [r.false_positive for r in rep.rows], marker="o", label=name)
        axes[0, 2].plot(th, [r.false_negative for r in rep.rows], marker="o", label=name)
    for ax, lab in zip(axes[0], ("accuracy", "false positives", "false negatives")):
        ax.set_xlabel("threshold")
        ax.set_ylabel(lab)
    axes[0, 0].legend(fontsize=8)
    fig.tight_layout()
    return to_png(fig)


def outlier_scan_plot(scan, mode, title="") -> bytes:
    """Log-amounts with the predictive band, flags and (EVP mode) probabilities."""
    idx = np.array([s.index for s in scan])
    y = np.array([s.y for s in scan])
    mean = np.array([s.mean for s in scan])
    upper = np.array([s.upper for s in scan])
    flags = np.array([s.flagged for s in scan])
    nrows = 2 if mode == "EVP" else 1
    fig, axes = _new(nrows, 1, (8.0, 3.2 * nrows))
    ax = axes[0, 0]
    ax.plot(idx, y, color="k", lw=0.8, label="log amount")
    ax.plot(idx, mean, color="tab:blue", lw=0.8, label="predicted mean")
    ax.plot(idx, upper, color="tab:blue", lw=0.6, ls="--", label="upper bound")
    ax.scatter(idx[flags], y[flags], color="tab:red", s=20, zorder=3, label="flagged")
    test = [s.index for s in scan if s.test]
    if test:
        ax.axvspan(test[0] - 0.5, test[-1] + 0.5, color="0.9", zorder=0)
    ax.set_ylabel("log amount")
    ax.set_title(title, fontsize=10)
    ax.legend(fontsize=7, loc="upper left")
    if mode == "EVP":
        ev = np.array([s.evp for s in scan])
        axes[1, 0].plot(idx, ev, color="tab:purple", lw=0.8)
        axes[1, 0].set_ylim(-0.02, 1.02)
        axes[1, 0].set_ylabel("extreme-value prob.")
    axes[-1, 0].set_xlabel("transaction index")
    fig.tight_layout()
    return to_png(fig)


def acf_bars(r, bound, title="") -> bytes:
    fig, axes = _new(size=(6.0, 3.5))
    ax = axes[0, 0]
    lags = np.arange(1, len(r) + 1)
    ax.vlines(lags, 0, r, color="k", lw=1.2)
    ax.axhline(0, color="k", lw=0.5)
    ax.axhline(bound, color="tab:blue", ls="--", lw=0.8)
    ax.axhline(-bound, color="tab:blue", ls="--", lw=0.8)
    ax.set_xlabel("lag")
    ax.set_ylabel("autocorrelation")
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    return to_png(fig)
