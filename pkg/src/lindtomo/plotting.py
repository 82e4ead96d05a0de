"""Figures written to files by the command-line reports (Agg backend, no display)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .markov import MarkovReport  # noqa: E402

_META = {"Software": None}  # keeps PNG bytes independent of the matplotlib build


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def plot_delta(times, delta, path, title: str = "free vs restricted") -> Path:
    """Diamond-norm deviation delta(t)."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(times, delta, "o-", ms=3)
    ax.set_xlabel("t (us)")
    ax.set_ylabel("delta(t)")
    ax.set_title(title)
    ax.set_ylim(bottom=0)
    return _save(fig, path)


def plot_markov(report: MarkovReport, path) -> Path:
    """Trace-distance series of the best pair with its positive increments."""
    t = np.array([p[0] for p in report.distance_series])
    d = np.array([p[1] for p in report.distance_series])
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(5, 4.5), sharex=True)
    ax1.plot(t, d, "o-", ms=3, color="tab:blue")
    ax1.set_ylabel("D(t)")
    ax1.set_title(f"pair {report.best_pair[0]} / {report.best_pair[1]}, N = {report.n_markov:.3g}")
    mids = [0.5 * (a + b) for (a, b), _ in report.increments]
    ax2.plot(mids, [v for _, v in report.increments], "o", ms=3, color="tab:red")
    if report.noise_floor is not None:
        ax2.axhline(report.noise_floor, ls="--", color="gray", lw=1)
    ax2.set_xlabel("t (us)")
    ax2.set_ylabel("max(0, dD)")
    return _save(fig, path)


def plot_populations(times, observed, predicted, labels, path, title: str = "") -> Path:
    """Observed outcome-0 frequencies (points) against model predictions (lines).

    :param observed: array (T, S) of frequencies
    :param predicted: array (T, S) of probabilities
    :param labels: S sequence labels
    """
    observed = np.asarray(observed)
    predicted = np.asarray(predicted)
    fig, ax = plt.subplots(figsize=(6, 4))
    for k, lab in enumerate(labels):
        line, = ax.plot(times, predicted[:, k], lw=1)
        ax.plot(times, observed[:, k], "o", ms=2.5, color=line.get_color(), label=lab)
    ax.set_xlabel("t (us)")
    ax.set_ylabel("P(0...0)")
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    if len(labels) <= 18:
        ax.legend(fontsize=6, ncol=3)
    return _save(fig, path)


def plot_matrix(mat, path, title: str = "") -> Path:
    """Real and imaginary parts of a complex matrix."""
    mat = np.asarray(mat)
    lim = max(np.abs(mat).max(), 1e-12)
    fig, axes = plt.subplots(1, 2, figsize=(7, 3.2))
    for ax, part, name in zip(axes, (mat.real, mat.imag), ("Re", "Im")):
        im = ax.imshow(part, cmap="RdBu_r", vmin=-lim, vmax=lim)
        ax.set_title(f"{name} {title}".strip())
        fig.colorbar(im, ax=ax, shrink=0.8)
    return _save(fig, path)
