"""Figure rendering for experiment reports.

Each function takes data already produced by the harness and writes one
PNG next to the delimited output.  Rendering is optional everywhere; the
CSV/JSON files remain the canonical record.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_saturation_plot(per_size: dict, level: float, title: str, path) -> Path:
    """Mean residual error ratio versus network size with the best/worst
    head bounds and the saturation level."""
    ns = sorted(int(n) for n in per_size)
    ratios = [per_size[str(n)]["ratio"] for n in ns]
    best = [per_size[str(n)]["best_bound_ratio"] for n in ns]
    worst = [per_size[str(n)]["worst_bound_ratio"] for n in ns]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ns, ratios, "o-", label="mean residual / tau_max")
    ax.plot(ns, best, "--", color="gray", label="best-case bound")
    ax.plot(ns, worst, ":", color="gray", label="worst-case bound")
    ax.axhline(level, color="tab:red", lw=0.8, label=f"saturation ~ {level:g}")
    ax.set_xlabel("network size")
    ax.set_ylabel("E{residual} / tau_max")
    ax.set_xscale("log", base=2)
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def save_eigen_accuracy_plot(rows: list[dict], path) -> Path:
    """Exact versus estimated second eigenvalue modulus over clique size."""
    ns = [r["n"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ns, [r["lambda2_exact"] for r in rows], "x-", label="numerical")
    ax.plot(ns, [r["lambda2_estimate"] for r in rows], "o--", label="closed form")
    ax.set_xlabel("clique size")
    ax.set_ylabel("|second eigenvalue|")
    ax.set_xscale("log", base=2)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    ax.set_title("convergence-rate eigenvalue accuracy")
    return _save(fig, path)


def save_schedule_plot(rows, node_count: int, path, title="schedule trajectories") -> Path:
    """Start/end timer trajectories per node over frames; rows are
    (frame, node, phi, psi) tuples from the scheduler dump."""
    frames: dict[int, list] = {}
    for (k, i, phi, psi) in rows:
        frames.setdefault(i, []).append((k, phi, psi))
    fig, ax = plt.subplots(figsize=(7, 4))
    cmap = plt.get_cmap("tab10")
    for i in sorted(frames):
        data = frames[i]
        ks = [d[0] for d in data]
        color = cmap(i % 10)
        ax.plot(ks, [d[1] for d in data], color=color, lw=1.0, label=f"node {i}")
        ax.plot(ks, [d[2] for d in data], color=color, lw=1.0, ls="--")
    ax.set_xlabel("frame")
    ax.set_ylabel("timer phase (solid start, dashed end)")
    ax.set_ylim(0, 1)
    ax.set_title(title)
    if node_count <= 10:
        ax.legend(fontsize=7, ncol=2)
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def save_share_histogram(edges, counts, path, title="converged free-gap histogram") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    widths = [edges[k + 1] - edges[k] for k in range(len(counts))]
    ax.bar(edges[:-1], counts, width=widths, align="edge", edgecolor="black")
    ax.set_xlabel("free gap")
    ax.set_ylabel("trials")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def save_sync_trace_plot(times, series: dict, path, logy=False,
                         title="pairwise phase distances") -> Path:
    """Distance-to-reference trajectories; series maps a label to a list
    of values aligned with times."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for label in sorted(series):
        ax.plot(times, series[label], lw=1.0, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("time (periods)")
    ax.set_ylabel("cyclic phase distance")
    ax.set_title(title)
    ax.legend(fontsize=7)
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
