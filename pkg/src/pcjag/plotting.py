"""Figures written next to the CSV/JSON reports.

PNG metadata is pinned so the same data always yields the same bytes.
"""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_META = {"Software": None}

plt.rcParams.update({
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 100,
    "svg.hashsalt": "pcjag",
})


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)


def rd_curves(rows, path, metrics=("d1", "d2", "y_psnr")):
    """One panel per metric: quality vs total bpp, a line per q_attr."""
    metrics = [m for m in metrics if any(m in r for r in rows)]
    fig, axes = plt.subplots(1, max(len(metrics), 1), figsize=(3.2 * max(len(metrics), 1), 2.8),
                             squeeze=False)
    for ax, m in zip(axes[0], metrics):
        for qa in sorted({r["qa"] for r in rows}):
            pts = sorted((r["bpp_total"], r[m]) for r in rows
                         if r["qa"] == qa and r.get(m) is not None and math.isfinite(r[m]))
            if pts:
                ax.plot(*zip(*pts), marker="o", ms=3, label=f"qa={qa}")
        ax.set_xlabel("bpp")
        ax.set_ylabel(f"{m} (dB)")
        ax.legend()
    _save(fig, path)


def correlation(report, path):
    x = [r for r, m in zip(report.radii, report.mean_attr_diff) if m is not None]
    y = [m for m in report.mean_attr_diff if m is not None]
    fig, ax = plt.subplots(figsize=(3.5, 2.8))
    ax.scatter(x, y, s=10)
    if x:
        ax.plot([x[0], x[-1]], [report.slope * x[0] + report.intercept,
                                report.slope * x[-1] + report.intercept], "r-", lw=1)
    ax.set_xlabel("radial distance")
    ax.set_ylabel("mean attribute difference")
    ax.set_title(f"$R^2$ = {report.r_squared:.3f}")
    _save(fig, path)


def bd_curves(curve_a, curve_b, percent, path):
    fig, ax = plt.subplots(figsize=(3.5, 2.8))
    for curve, label in ((curve_a, "anchor"), (curve_b, "test")):
        pts = sorted(curve)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3, label=label)
    ax.set_xlabel("bpp")
    ax.set_ylabel("quality")
    ax.set_title(f"BD-rate {percent:+.2f}%")
    ax.legend()
    _save(fig, path)


def recolor_times(report, path):
    fig, ax = plt.subplots(figsize=(3.2, 2.8))
    ax.bar(["conventional", "optimized"], [report["conventional_s"], report["optimized_s"]],
           color=["0.6", "tab:blue"])
    ax.set_ylabel("mean time (s)")
    ax.set_title(f"reduction {report['reduction_pct']:.1f}%")
    _save(fig, path)
