"""Figure rendering for study results, written next to the CSV exports."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "render_cost_boxplot",
    "render_trajectory_overview",
    "render_spectrum",
    "render_study_figures",
]

_LABELS = {"pm": "Proposed", "au": "Always update", "nu": "Never update"}


def render_cost_boxplot(summaries: dict, path) -> Path:
    """Boxplot of total trajectory costs per strategy."""
    order = [s for s in ("pm", "au", "nu") if s in summaries] or sorted(summaries)
    data = [summaries[s].costs for s in order]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.boxplot(data, tick_labels=[_LABELS.get(s, s) for s in order], whis=(0, 100))
    ax.set_ylabel(r"total cost $J_\mathrm{tot}$")
    ax.grid(True, axis="y", alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_trajectory_overview(episodes: dict, dt: float, path) -> Path:
    """Mean output trajectories with min/max bands, plus the mean update trace."""
    order = [s for s in ("pm", "au", "nu") if s in episodes] or sorted(episodes)
    has_pm = "pm" in episodes and episodes["pm"]
    n_rows = 3 if has_pm else 2
    fig, axes = plt.subplots(n_rows, 1, figsize=(7, 2.4 * n_rows), sharex=True)
    for joint, ax in enumerate(axes[:2]):
        for strat in order:
            runs = [ep for ep in episodes[strat] if not ep.failed]
            if not runs:
                continue
            n = min(ep.log.n_steps for ep in runs)
            ys = np.stack([ep.log.y[:n, joint] for ep in runs])
            t = np.arange(n) * dt
            ax.plot(t, ys.mean(axis=0), label=_LABELS.get(strat, strat))
            ax.fill_between(t, ys.min(axis=0), ys.max(axis=0), alpha=0.2)
        runs = [ep for ep in episodes[order[0]] if not ep.failed]
        if runs:
            n = min(ep.log.n_steps for ep in runs)
            t = np.arange(n) * dt
            ax.plot(t, runs[0].log.ref[:n, joint], "k--", linewidth=1, label="reference")
        ax.set_ylabel(f"$y_{joint + 1}$ (rad)")
        ax.grid(True, alpha=0.4)
    axes[0].legend(loc="best", fontsize=8)
    if has_pm:
        runs = [ep for ep in episodes["pm"] if not ep.failed]
        n = min(ep.log.n_steps for ep in runs)
        acc = np.stack([ep.log.accepted[:n].astype(float) for ep in runs])
        t = np.arange(n) * dt
        axes[2].plot(t, acc.mean(axis=0))
        axes[2].set_ylabel("mean update")
        axes[2].set_ylim(-0.05, 1.05)
        axes[2].grid(True, alpha=0.4)
    axes[-1].set_xlabel("time (s)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_spectrum(values, path, required_rank: int = None, window=None, rho: float = None) -> Path:
    """Singular values on a log scale with the admissible threshold band shaded."""
    values = np.asarray(values, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    idx = np.arange(1, values.size + 1)
    positive = values > 0
    ax.semilogy(idx[positive], values[positive], "o", markersize=4)
    if window is not None:
        ax.axhspan(max(window[0], np.min(values[positive]) * 0.5), window[1], alpha=0.15, color="tab:green",
                   label="admissible threshold")
    if rho is not None:
        ax.axhline(rho, color="tab:red", linestyle="--", linewidth=1, label=f"rho = {rho:g}")
    if required_rank is not None:
        ax.axvline(required_rank + 0.5, color="gray", linestyle=":", linewidth=1)
    ax.set_xlabel("index")
    ax.set_ylabel("singular value")
    ax.grid(True, which="both", alpha=0.3)
    if window is not None or rho is not None:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_study_figures(study, out_dir) -> list:
    """Render the standard report figures for a finished study."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [render_cost_boxplot(study.summaries, out / "costs_boxplot.png")]
    written.append(render_trajectory_overview(study.episodes, study.config.dt, out / "trajectories.png"))
    return written
