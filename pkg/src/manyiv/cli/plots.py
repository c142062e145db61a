"""SVG power-curve figures."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from manyiv.models.simulation import SimReport  # noqa: E402


def plot_power_curves(report: SimReport, path: Path) -> Path:
    """Rejection rate against Δ, one series per statistic; predictions dashed."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    statistics = list(dict.fromkeys(row.statistic for row in report.rejections))
    for sid in statistics:
        rows = sorted((r for r in report.rejections if r.statistic == sid), key=lambda r: r.delta)
        deltas = [r.delta for r in rows]
        line = ax.plot(deltas, [r.rate for r in rows], marker="o", markersize=3, label=sid.value)[0]
        predicted = [r.predicted for r in rows]
        if all(p is not None for p in predicted):
            ax.plot(deltas, predicted, linestyle="--", color=line.get_color(), label=f"{sid.value} (theory)")
    ax.axhline(report.alpha, color="grey", linewidth=0.8, linestyle=":")
    ax.set_xlabel("Δ")
    ax.set_ylabel("rejection rate")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(report.name)
    ax.legend(fontsize="small")
    fig.tight_layout()

    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": report.name}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
