"""Optional matplotlib figures for study results (written next to the CSV)."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _figure():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _num(values):
    return np.array([np.nan if v == "" else float(v) for v in values])


def plot_result(result, csv_path) -> Path:
    """Render a PNG for ``result`` and return its path."""
    plt = _figure()
    out = Path(csv_path).with_suffix(".png")
    fig, ax = plt.subplots(figsize=(6, 4.5))
    rows = [r for r in result.rows if not (len(r) and r[-1] == "fit")]
    h = result.header
    col = lambda name, rs=rows: _num([r[h.index(name)] for r in rs])
    if result.kind == "time-convergence":
        tau = col("tau")
        ax.loglog(tau, col("err_u_L2"), "o-", label="u")
        ax.loglog(tau, col("err_v_L2"), "s-", label="v")
        ax.set_xlabel("tau")
        ax.set_ylabel("L2 error")
    elif result.kind == "space-convergence":
        for p in sorted({r[1] for r in rows}):
            sub = [r for r in rows if r[1] == p]
            ax.loglog(1.0 / col("n_sub", sub), col("rel_err_L2", sub), "o-", label=f"p = {p}")
        ax.set_xlabel("h")
        ax.set_ylabel("relative L2 error")
    elif result.kind == "dispersion":
        for tau in sorted({r[2] for r in rows}):
            for rho in sorted({r[1] for r in rows}):
                sub = [r for r in rows if r[1] == rho and r[2] == tau]
                ax.semilogy(col("j", sub), col("err", sub), "o-", label=f"rho = {rho}, tau = {tau:g}")
        ax.set_xlabel("j")
        ax.set_ylabel("relative L2 error")
    elif result.kind == "precond-iterations":
        for g in sorted({r[0] for r in rows}):
            for p in sorted({r[1] for r in rows if r[0] == g}):
                sub = [r for r in rows if r[0] == g and r[1] == p]
                ax.plot(col("n_sub", sub), col("mean_iters", sub), "o-", label=f"{g}, p = {p}")
        ax.set_xscale("log", base=2)
        ax.set_xlabel("n_sub")
        ax.set_ylabel("mean PCG iterations")
    elif result.kind == "spectrum":
        samples = [r for r in result.rows if r[0] == "sample"]
        for key in sorted({(r[1], r[3]) for r in samples}):
            sub = [r for r in samples if (r[1], r[3]) == key]
            ax.plot(col("theta", sub), col("rho_G", sub), label=f"k = {key[0]}, rho = {key[1]}")
        for r in result.rows:
            if r[0] == "theta_max":
                ax.axvline(float(r[5]), color="grey", lw=0.5, ls="--")
        ax.set_xlabel("Theta")
        ax.set_ylabel("spectral radius")
    else:
        t = col("t")
        ax.semilogy(t, col("L2_error_u"), label="u")
        ax.semilogy(t, col("L2_error_v"), label="v")
        ax.set_xlabel("t")
        ax.set_ylabel("relative L2 error")
    ax.legend(fontsize=7)
    ax.grid(True, which="both", lw=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
