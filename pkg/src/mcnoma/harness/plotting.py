"""Matplotlib figures written to files (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

LABELS = {"proposed": "Proposed", "oma": "OMA", "noma": "NOMA", "mc_noma": "MC-NOMA"}
MARKERS = {"proposed": "o", "oma": "s", "noma": "^", "mc_noma": "v"}
X_LABELS = {
    "snr_sweep": "receive SNR [dB]",
    "timeshare_demo": "receive SNR [dB]",
    "nt_sweep": "number of BS antennas",
    "user_sweep": "number of users",
    "subcarrier_sweep": "number of subcarriers",
    "distance_sweep": "distance from BS [m]",
}
# fixed metadata keeps PNG bytes independent of the run
PNG_METADATA = {"Software": None}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_table(table, path):
    """Mean metric per method versus the sweep value."""
    from .results import metric_for

    plt = _pyplot()
    spec = table.spec
    attr, ylabel = metric_for(spec)
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.asarray(spec.values, dtype=float)
    for method in spec.methods:
        label = LABELS[method]
        if method == "oma":
            label += f" ({spec.oma_variant})"
        ax.plot(x, table.mean(method, attr), marker=MARKERS[method], label=label)
    ax.set_xlabel(X_LABELS[spec.kind])
    ax.set_ylabel(ylabel)
    if spec.kind in ("subcarrier_sweep",):
        ax.set_xscale("log", base=2)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)
    return Path(path)


def plot_tones(table, outdir):
    """One spectral-efficiency-versus-tone figure per time-sharing block."""
    plt = _pyplot()
    rows = [r for r in table.select("proposed") if r.ok and r.per_tone]
    if not rows:
        return []
    row = rows[0]
    written = []
    for k, tones in enumerate(row.per_tone):
        tones = np.asarray(tones, dtype=float)
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for u in range(tones.shape[0]):
            ax.plot(np.arange(tones.shape[1]), tones[u], label=f"user {u + 1}")
        frac = row.block_fractions[k] if row.block_fractions else 1.0
        ax.set_title(f"block {k + 1} (fraction {frac:.3f})")
        ax.set_xlabel("tone index")
        ax.set_ylabel("spectral efficiency [bits/s/Hz]")
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = Path(outdir) / f"block_{k}.png"
        fig.savefig(path, metadata=PNG_METADATA)
        plt.close(fig)
        written.append(path)
    return written
