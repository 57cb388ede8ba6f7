"""Static index plots of the influence diagnostics (needs matplotlib)."""

from __future__ import annotations

import numpy as np

from .diagnostics import DIAGNOSTICS, DiagnosticReport


def plot_diagnostics(report: DiagnosticReport, path, k_sd: int = 2) -> None:
    """One panel per diagnostic with its cutoff; infinite values sit on the top edge as crosses."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    values = {k: report.values(k) for k in DIAGNOSTICS}
    names = [k for k, v in values.items() if not np.all(np.isnan(v))]
    fig, axes = plt.subplots(len(names), 1, figsize=(7, 2.2 * len(names)), sharex=True, squeeze=False)
    for ax, name in zip(axes[:, 0], names):
        v = values[name]
        idx = np.arange(v.size)
        fin = np.isfinite(v)
        ax.plot(idx[fin], v[fin], ".", ms=3, color="0.3")
        cut = report.cutoffs[k_sd].get(name)
        if cut is not None and np.isfinite(cut):
            ax.axhline(cut, color="C3", lw=1)
        if np.isinf(v).any():
            top = np.nanmax(v[fin]) if fin.any() else 1.0
            ax.plot(idx[np.isinf(v)], np.full(np.isinf(v).sum(), top), "x", color="C0", ms=4)
        ax.set_ylabel(name)
    axes[-1, 0].set_xlabel("row")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
