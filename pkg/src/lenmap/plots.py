"""Figure rendering for the report commands (headless backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .stats import ConvergenceReport, DistributionFit, cauchy_pdf


def render_convergence(report: ConvergenceReport, path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    w = np.asarray(report.widths, dtype=float)
    depth = report.length_map.depth
    for layer in range(1, depth + 1):
        ax.plot(w, report.layer_fraction[:, layer], color="gray", alpha=0.45, lw=1.0,
                marker=".", label="per layer" if layer == 1 else None)
    yerr = np.vstack([report.fraction - report.ci_lo, report.ci_hi - report.fraction])
    ax.errorbar(w, report.fraction, yerr=yerr, marker="o", color="C0", lw=1.8,
                capsize=3, label="all layers")
    ax.set_xscale("log", base=2)
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("width N")
    ax.set_ylabel(f"fraction of trials with max dev <= {report.epsilon:g}")
    ax.set_title(f"{report.length_map.activation}: convergence to the length map")
    ax.legend(loc="lower right", fontsize=9)
    ax.grid(alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_cauchy(hist_edges: np.ndarray, hist_counts: np.ndarray, total: int,
                  width: int, fit: DistributionFit, path) -> None:
    """Histogram of captured values against the predicted Cauchy density.

    hist_counts covers interior bins only; total counts every captured value
    so the bars integrate to the in-range mass fraction.
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    centers = 0.5 * (hist_edges[1:] + hist_edges[:-1])
    binw = hist_edges[1] - hist_edges[0]
    density = hist_counts / (total * binw)
    ax.bar(centers, density, width=binw, color="C0", alpha=0.55, label="captured values")
    grid = np.linspace(hist_edges[0], hist_edges[-1], 600)
    gamma_ref = np.sqrt(width)
    ax.plot(grid, cauchy_pdf(grid, 0.0, gamma_ref), "C3", lw=1.8,
            label=f"Cauchy(0, sqrt({width}))")
    sig = fit.gaussian_sigma
    ax.plot(grid, np.exp(-0.5 * (grid / sig) ** 2) / (sig * np.sqrt(2 * np.pi)),
            "C2--", lw=1.5, label="best-fit Gaussian")
    ax.set_xlabel("layer-2 pre-activation")
    ax.set_ylabel("density")
    ax.set_title(f"N = {width}: fitted gamma = {fit.cauchy_gamma:.3g}, "
                 f"KS(Cauchy) = {fit.ks_vs_cauchy:.4f}")
    ax.legend(fontsize=9)
    ax.grid(alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_per_init(rows: np.ndarray, width: int, path, bins: int = 60) -> None:
    """3x3 grid of single-initialization histograms of captured values."""
    k = min(9, rows.shape[0])
    lim = 5.0 * np.sqrt(width)
    fig, axes = plt.subplots(3, 3, figsize=(9, 7), sharex=True)
    grid = np.linspace(-lim, lim, 400)
    for p, ax in enumerate(axes.ravel()):
        if p >= k:
            ax.axis("off")
            continue
        vals = rows[p]
        in_range = vals[(vals >= -lim) & (vals <= lim)]
        if in_range.size:
            ax.hist(in_range, bins=bins, range=(-lim, lim), density=True,
                    color="C0", alpha=0.6)
        ax.plot(grid, cauchy_pdf(grid, 0.0, np.sqrt(width)), "C3", lw=1.0)
        ax.set_title(f"initialization {p}", fontsize=8)
        ax.tick_params(labelsize=7)
    fig.suptitle(f"N = {width}: captured layer values per initialization")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
