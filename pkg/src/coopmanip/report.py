"""Figure rendering for completed runs.

Reads the delimited output of ``write_results`` back from a run directory
and renders the estimate trajectories with their 10-sigma uncertainty
bands next to the log-scale estimation errors, plus the per-agent error
metrics. Figures are written as PNG files alongside the CSVs.
"""

from __future__ import annotations

import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_COLORS = ["tab:blue", "tab:green", "tab:red", "tab:orange", "tab:purple", "tab:brown"]


def _read_results(path: str):
    times: list[float] = []
    seen: dict[float, int] = {}
    series = defaultdict(lambda: defaultdict(dict))  # [agent][quantity][(k, idx)] -> row
    truth = defaultdict(dict)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            t = float(row["time"])
            if t not in seen:
                seen[t] = len(times)
                times.append(t)
            k = seen[t]
            agent = int(row["agent"])
            quantity = row["quantity"]
            idx = int(row["index"])
            mean = float(row["mean"]) if row["mean"] else np.nan
            variance = float(row["variance"]) if row["variance"] else np.nan
            bound = float(row["bound"]) if row["bound"] else np.nan
            series[agent][quantity][(k, idx)] = (mean, variance, bound)
            if row["truth"]:
                truth[quantity][idx] = float(row["truth"])
    return np.asarray(times), series, truth


def _quantity_arrays(per_quantity: dict, n_times: int, n_comp: int):
    mean = np.full((n_times, n_comp), np.nan)
    var = np.full((n_times, n_comp), np.nan)
    bound = np.full((n_times, n_comp), np.nan)
    for (k, idx), (m, v, b) in per_quantity.items():
        mean[k, idx] = m
        var[k, idx] = v
        bound[k, idx] = b
    return mean, var, bound


def _band_plot(ax, times, mean, sigma, truth, labels):
    for c in range(mean.shape[1]):
        color = _COLORS[c % len(_COLORS)]
        ax.fill_between(times, mean[:, c] - 10 * sigma[:, c], mean[:, c] + 10 * sigma[:, c],
                        color=color, alpha=0.2, linewidth=0)
        ax.plot(times, mean[:, c], color=color, label=labels[c])
        ax.axhline(truth[c], color=color, linestyle=":", linewidth=0.8)
    ax.legend(fontsize=7, ncol=min(3, mean.shape[1]), loc="upper right")
    ax.grid(alpha=0.3)


def _error_plot(ax, times, err, sigma_norm, bound_norm=None):
    ax.semilogy(times, np.maximum(err, 1e-12), color="tab:blue", label="error")
    ax.semilogy(times, 10 * sigma_norm, color="tab:blue", linestyle="--", label=r"10$\sigma$")
    if bound_norm is not None and np.any(np.isfinite(bound_norm)):
        ax.semilogy(times, bound_norm, color="tab:red", linestyle="-.", label="bound")
    ax.legend(fontsize=7, loc="upper right")
    ax.grid(alpha=0.3)


def render_run_report(run_dir: str | os.PathLike, agent: int = 0) -> list[str]:
    """Render estimates.png and metrics.png from a run directory."""
    results_path = os.path.join(run_dir, "results.csv")
    times, series, truth = _read_results(results_path)
    n_times = times.shape[0]
    agent_series = series[agent]
    n_agents = sum(1 for q in agent_series if q.startswith("r_"))

    written = []
    fig, axes = plt.subplots(3, 2, figsize=(9, 8), sharex=True)

    mean, var, bound = _quantity_arrays(agent_series["m_o"], n_times, 1)
    sigma = np.sqrt(var)
    _band_plot(axes[0, 0], times, mean, sigma, [truth["m_o"][0]], ["$m_o$"])
    axes[0, 0].set_ylabel("mass (kg)")
    err = np.abs(mean[:, 0] - truth["m_o"][0])
    _error_plot(axes[0, 1], times, err, sigma[:, 0], bound[:, 0])

    own = f"r_{agent + 1}"
    mean, var, bound = _quantity_arrays(agent_series[own], n_times, 3)
    sigma = np.sqrt(var)
    truth_r = np.array([truth[own][c] for c in range(3)])
    _band_plot(axes[1, 0], times, mean, sigma, truth_r, ["$r_x$", "$r_y$", "$r_z$"])
    axes[1, 0].set_ylabel("grasp offset (m)")
    err = np.linalg.norm(mean - truth_r[None, :], axis=1)
    _error_plot(axes[1, 1], times, err, np.linalg.norm(sigma, axis=1),
                np.linalg.norm(bound, axis=1))

    mean, var, _ = _quantity_arrays(agent_series["J"], n_times, 6)
    sigma = np.sqrt(var)
    truth_j = np.array([truth["J"][c] for c in range(6)])
    if np.any(np.isfinite(mean)):
        _band_plot(axes[2, 0], times, mean, sigma, truth_j,
                   ["$J_{11}$", "$J_{12}$", "$J_{13}$", "$J_{22}$", "$J_{23}$", "$J_{33}$"])
        err = np.linalg.norm(mean - truth_j[None, :], axis=1)
        _error_plot(axes[2, 1], times, err, np.linalg.norm(sigma, axis=1))
    axes[2, 0].set_ylabel("inertia (kg m$^2$)")
    axes[2, 0].set_xlabel("time (s)")
    axes[2, 1].set_xlabel("time (s)")
    axes[0, 0].set_title(f"agent {agent} estimates")
    axes[0, 1].set_title("estimation error")
    fig.tight_layout()
    path = os.path.join(run_dir, "estimates.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    metrics_path = os.path.join(run_dir, "metrics.csv")
    if os.path.exists(metrics_path):
        rows = defaultdict(list)
        with open(metrics_path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                rows[int(row["agent"])].append(
                    (float(row["time"]),
                     float(row["e_m"]) if row["e_m"] else np.nan,
                     float(row["e_r"]) if row["e_r"] else np.nan,
                     float(row["e_J"]) if row["e_J"] else np.nan)
                )
        fig, axes = plt.subplots(1, 3, figsize=(11, 3), sharex=True)
        for name, col, ax in (("$e_m$", 1, axes[0]), ("$e_r$", 2, axes[1]), ("$e_J$", 3, axes[2])):
            for i in sorted(rows):
                data = np.asarray(rows[i])
                ax.semilogy(data[:, 0], np.maximum(data[:, col], 1e-12),
                            label=f"agent {i}", linewidth=0.9)
            ax.set_title(name)
            ax.set_xlabel("time (s)")
            ax.grid(alpha=0.3)
        axes[0].legend(fontsize=7)
        fig.tight_layout()
        path = os.path.join(run_dir, "metrics.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
