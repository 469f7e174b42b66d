"""Figure rendering for the experiment reports.

Each function takes an already-computed result and writes one PNG next to the
delimited output.  Rendering is deterministic: fixed figure sizes, fixed dpi,
and fixed PNG metadata (no timestamps), so reruns produce identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_PNG_META = {"Software": "privgame"}
_DPI = 120


def _save(fig, path_out) -> None:
    fig.savefig(path_out, dpi=_DPI, metadata=_PNG_META)
    plt.close(fig)


def render_exp1(result, path_out) -> None:
    """Distance histograms per noise label with the per-draw radius medians."""
    labels = sorted({row[0] for row in result.rows})
    fig, ax = plt.subplots(figsize=(7, 4.2))
    for label in labels:
        dists = [row[2] for row in result.rows if row[0] == label]
        g_real = [row[3] for row in result.rows if row[0] == label]
        ax.hist(dists, bins=40, alpha=0.55, label=f"{label}: |x* - x_hat|")
        ax.axvline(float(np.median(g_real)), linestyle="--", linewidth=1.2,
                   label=f"{label}: median per-draw radius")
    ax.set_xlabel("distance between original and perturbed equilibrium")
    ax.set_ylabel("executions")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path_out)


def render_exp2(result, path_out) -> None:
    """Per-player distribution of the perturbed equilibrium, one panel per
    player, with the original equilibrium marked."""
    n = len(result.x_star)
    cols = min(5, n)
    rows_n = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows_n, cols, figsize=(2.6 * cols, 2.2 * rows_n),
                             sharex=True, squeeze=False)
    for i in range(n):
        ax = axes[i // cols][i % cols]
        for label, mat in sorted(result.samples.items()):
            ax.hist(mat[:, i], bins=30, alpha=0.55, label=label)
        ax.axvline(float(result.x_star[i]), color="black", linewidth=1.0)
        ax.set_title(f"player {i + 1}", fontsize=8)
        ax.tick_params(labelsize=7)
    for j in range(n, rows_n * cols):
        axes[j // cols][j % cols].axis("off")
    axes[0][0].legend(fontsize=7)
    fig.suptitle("perturbed equilibrium distribution (vertical line: original)", fontsize=10)
    fig.tight_layout()
    _save(fig, path_out)


def render_exp3(result, path_out) -> None:
    """Grouped bars: original payoff vs mean payoff at each perturbed
    equilibrium."""
    players = [row[0] for row in result.rows]
    series = [("original", [row[1] for row in result.rows])]
    for k, label in enumerate(result.labels):
        series.append((label, [row[2 + k] for row in result.rows]))
    width = 0.8 / len(series)
    fig, ax = plt.subplots(figsize=(7, 4.2))
    for k, (name, values) in enumerate(series):
        offsets = [p + (k - (len(series) - 1) / 2) * width for p in players]
        ax.bar(offsets, values, width=width, label=name)
    ax.set_xlabel("player")
    ax.set_ylabel("payoff at equilibrium")
    ax.set_xticks(players)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path_out)


def render_sweep(result, path_out) -> None:
    """Privacy-accuracy tradeoff: mean relative displacement against the
    per-coordinate epsilon."""
    eps = [row[0] for row in result.rows]
    rel = [row[3] for row in result.rows]
    half_widths = [row[2] for row in result.rows]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(eps, rel, marker="o")
    ax.set_xscale("log")
    ax.set_xlabel("epsilon (per coordinate)")
    ax.set_ylabel("mean relative equilibrium displacement")
    for e, r, a in zip(eps, rel, half_widths):
        ax.annotate(f"a={a:.3g}", (e, r), fontsize=6,
                    textcoords="offset points", xytext=(4, 4))
    fig.tight_layout()
    _save(fig, path_out)
