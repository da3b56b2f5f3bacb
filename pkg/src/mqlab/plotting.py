"""Matplotlib figures written next to the CSV outputs (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path: Path) -> Path:
    tmp = path.with_name(path.name + ".tmp")
    # a fixed metadata block keeps reruns byte-identical
    fig.savefig(tmp, format="png", dpi=110, metadata={"Software": None})
    plt.close(fig)
    tmp.replace(path)
    return path


def plot_scan(series: dict[str, tuple[list[float], list[float]]], path: Path, xlabel: str = "quality of product 1") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, (xs, ys) in series.items():
        ax.plot(xs, ys, marker="o", ms=3, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("probability")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def plot_counterexample(ns: list[int], lead1: list[float], lead2: list[float], round_: int, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ns, lead1, marker="o", label="product 1 leads")
    ax.plot(ns, lead2, marker="s", label="product 2 leads")
    ax.set_xlabel("customers")
    ax.set_ylabel(f"probability at end of round {round_}")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_estimates(events: list[str], means: list[float], half_widths: list[float],
                   exact: list[float | None], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = list(range(len(events)))
    ax.errorbar(xs, means, yerr=half_widths, fmt="o", capsize=3, label="estimate (99% CI)")
    ex = [(x, v) for x, v in zip(xs, exact) if v is not None]
    if ex:
        ax.scatter([x for x, _ in ex], [v for _, v in ex], marker="x", color="k", label="exact", zorder=3)
    ax.set_xticks(xs)
    ax.set_xticklabels(events, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("probability")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_posterior(labels: list[str], weights: list[float], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(labels)), weights)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("posterior weight given product 1 leads")
    fig.tight_layout()
    return _save(fig, path)
