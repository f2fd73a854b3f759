"""Figures for the report path, written to files (no display needed)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .decomposition import Stratification
from .estimator import AllocationRule
from .gaussian import stream
from .sampler import ConditionalSampler

RC = {"dpi": 120}


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=RC["dpi"], bbox_inches="tight")
    return path


def plot_quantizer_paths(strata: Stratification, path, n_points: int = 400) -> Path:
    """Codebook paths of a product quantizer, line width by cell probability."""
    t = np.linspace(0.0, strata.spec.horizon, n_points)
    paths = strata.codebook_paths(t)
    fig = Figure(figsize=(6.0, 4.0))
    ax = fig.add_subplot()
    widths = 0.4 + 3.0 * strata.probs / strata.probs.max()
    for k in range(strata.n_strata):
        ax.plot(t, paths[k], lw=widths[k], color="C0", alpha=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("quantizer path")
    ax.set_title(f"{strata.spec.kind.value} product quantizer {strata.decomposition} "
                 f"({strata.n_strata} paths)")
    return _save(fig, path)


def plot_conditional_paths(sampler: ConditionalSampler, path, strata_shown=None,
                           n_paths: int = 5, seed: int = 0) -> Path:
    """A few conditional paths per stratum over their codebook path."""
    st = sampler.strata
    shown = list(strata_shown if strata_shown is not None else
                 np.unique(np.linspace(0, st.n_strata - 1, min(st.n_strata, 4)).astype(int)))
    fig = Figure(figsize=(6.0, 4.0))
    ax = fig.add_subplot()
    code = st.codebook_paths(sampler.grid)
    for c, k in enumerate(shown):
        x = sampler.sample(int(k), n_paths, stream(seed, int(k), 99))
        ax.plot(sampler.grid, x.T, color=f"C{c}", lw=0.6, alpha=0.6)
        ax.plot(sampler.grid, code[k], color=f"C{c}", lw=2.0, label=f"stratum {k}")
    ax.set_xlabel("t")
    ax.set_ylabel("path")
    ax.legend(fontsize="small")
    return _save(fig, path)


def plot_variances(rows, path) -> Path:
    """Grouped bars of per-sample variance: plain vs each allocation rule."""
    labels = [f"{r['benchmark']}\n{r['strata']} strata" for r in rows]
    keys = ["plain"] + [rule.value for rule in AllocationRule]
    x = np.arange(len(rows))
    width = 0.8 / len(keys)
    fig = Figure(figsize=(max(6.0, 1.4 * len(rows)), 4.0))
    ax = fig.add_subplot()
    for i, key in enumerate(keys):
        ax.bar(x + (i - (len(keys) - 1) / 2) * width, [r[key].variance for r in rows], width, label=key)
    ax.set_yscale("log")
    ax.set_xticks(x, labels, fontsize="small")
    ax.set_ylabel("variance per draw")
    ax.legend(fontsize="small")
    return _save(fig, path)
