"""SVG figures for band structures, transmissibility, optimization histories and errors."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bands import IBZ_LABELS, BandStructure, Bandgap  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_band_structure(bs: BandStructure, path, gaps: Sequence[Bandgap] = (),
                        freq_max: float = 2000.0) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    s = np.arange(len(bs.path))
    for band in bs.freqs.T:
        ax.plot(s, band, color="k", lw=1)
    for g in gaps:
        ax.axhspan(g.start, g.end, color="tab:orange", alpha=0.3)
    ax.set_xticks(bs.path.vertex_indices)
    ax.set_xticklabels(IBZ_LABELS)
    for v in bs.path.vertex_indices:
        ax.axvline(v, color="0.7", lw=0.5)
    ax.set_xlim(0, len(s) - 1)
    ax.set_ylim(0, freq_max)
    ax.set_ylabel("Frequency (Hz)")
    ax.set_xlabel("Wave vector")
    return _save(fig, path)


def plot_transmissibility(freqs, tr_db, path, query: tuple[float, float] | None = None,
                          gap: tuple[float, float] | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(freqs, tr_db, color="tab:blue", lw=1)
    if query is not None:
        ax.axvspan(*query, color="tab:green", alpha=0.2, label="query")
    if gap is not None:
        ax.axvline(gap[0], color="tab:red", ls="--", lw=0.8, label="predicted gap")
        ax.axvline(gap[1], color="tab:red", ls="--", lw=0.8)
    ax.set_xlabel("Frequency (Hz)")
    ax.set_ylabel("TR (dB re 1 m/N)")
    if query is not None or gap is not None:
        ax.legend(loc="lower left")
    return _save(fig, path)


def plot_convergence(histories: Mapping[str, Sequence], path) -> Path:
    """Violation and mass against evaluation count; ``histories`` maps label -> EvalRecords."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    for label, recs in histories.items():
        idx = [r.index + 1 for r in recs]
        ax1.plot(idx, [r.violation for r in recs], lw=1, label=label)
        ax2.plot(idx, [r.mass for r in recs], lw=1, label=label)
    ax1.set_ylabel("Violation")
    ax2.set_ylabel("Mass (g)")
    ax2.set_xlabel("Function evaluations")
    ax1.legend(fontsize="small")
    return _save(fig, path)


def plot_rmse(errors: Mapping[str, np.ndarray], path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.boxplot(list(errors.values()), labels=list(errors.keys()))
    ax.set_ylabel("Normalized RMSE")
    return _save(fig, path)


def plot_loss(train_loss, val_loss, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(np.arange(1, len(train_loss) + 1), train_loss, label="train")
    if len(val_loss):
        ax.semilogy(np.arange(1, len(val_loss) + 1), val_loss, label="validation")
    ax.set_xlabel("Epoch")
    ax.set_ylabel("L1 loss")
    ax.legend()
    return _save(fig, path)


def plot_displacement(nodes, abs_u, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 4.5))
    tc = ax.tricontourf(nodes[:, 0], nodes[:, 1], abs_u, levels=30, cmap="viridis")
    fig.colorbar(tc, ax=ax, label="|w| (m)")
    ax.set_aspect("equal")
    ax.set_xlabel("x (mm)")
    ax.set_ylabel("y (mm)")
    if title:
        ax.set_title(title)
    return _save(fig, path)
