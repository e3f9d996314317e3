"""Figures for evaluation summaries (matplotlib, written to files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_improvement_vs_snr(summary: dict, path) -> Path:
    """Median SDR improvement per method against input SNR, with SE bars."""
    fig, ax = plt.subplots(figsize=(6, 4))
    methods = sorted({row["method"] for row in summary["by_snr"]})
    for method in methods:
        rows = sorted((r for r in summary["by_snr"] if r["method"] == method), key=lambda r: r["snr"])
        ax.errorbar([r["snr"] for r in rows], [r["median_delta"] for r in rows],
                    yerr=[r["se"] for r in rows], marker="o", capsize=3, label=method)
    ax.set_xlabel("input SNR (dB)")
    ax.set_ylabel("SDR improvement (dB)")
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_improvement_by_noise(summary: dict, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    noises = sorted({row["noise"] for row in summary["by_noise"]})
    methods = sorted({row["method"] for row in summary["by_noise"]})
    width = 0.8 / max(1, len(methods))
    for i, method in enumerate(methods):
        vals = {r["noise"]: r for r in summary["by_noise"] if r["method"] == method}
        xs = [j + i * width for j in range(len(noises))]
        ax.bar(xs, [vals[n]["median_delta"] for n in noises], width,
               yerr=[vals[n]["se"] for n in noises], label=method, capsize=2)
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(noises))])
    ax.set_xticklabels(noises)
    ax.set_ylabel("SDR improvement (dB)")
    ax.legend(frameon=False, fontsize="small")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
