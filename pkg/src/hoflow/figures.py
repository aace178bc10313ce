"""Report figures: rendered PNGs alongside the CSV output.

CSV remains the machine contract; figures are the human-readable companion
the report path drops next to it.
"""

import math
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


def render_bound_figures(report, out_dir):
    paths = []
    for rep in report.bound_reports:
        if not rep.rows:
            continue
        ts = [r["t"] for r in rep.rows]
        ratios = [r["ratio"] for r in rep.rows]
        finite = [(t, r) for t, r in zip(ts, ratios)
                  if isinstance(r, float) and math.isfinite(r) and r > 0]
        if not finite:
            continue
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        ax.semilogy([t for t, _ in finite], [r for _, r in finite],
                    ".", ms=4, alpha=0.7)
        ax.set_xlabel("t (grid)")
        ax.set_ylabel("lhs / rhs")
        ax.set_title(f"{rep.bound_name}  [{rep.verdict}]  C={rep.fitted_constant:.4g}")
        ax.grid(True, which="both", lw=0.3, alpha=0.5)
        path = os.path.join(out_dir, f"bound_{rep.bound_name}.png")
        fig.tight_layout()
        fig.savefig(path, dpi=130)
        plt.close(fig)
        paths.append(path)
    return paths


def render_rate_figures(report, out_dir):
    paths = []
    regimes = sorted({r["regime"] for r in report.rate_rows})
    for regime in regimes:
        rows = [r for r in report.rate_rows if r["regime"] == regime]
        byN = {}
        for r in rows:
            byN.setdefault(r["N"], []).append(r["ratio"])
        Ns = sorted(byN)
        means = [sum(byN[n]) / len(byN[n]) for n in Ns]
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        ax.loglog(Ns, means, "o-", label="measured")
        fit = next((f for f in report.rate_fits if f.regime == regime), None)
        if fit is not None and not fit.saturated:
            ys = [math.exp(fit.intercept) * n ** fit.slope for n in Ns]
            ax.loglog(Ns, ys, "--",
                      label=f"fit slope {fit.slope:+.2f} (R2={fit.r2:.3f})")
        ax.set_xlabel("N")
        ax.set_ylabel("normalized error")
        ax.set_title(regime)
        ax.grid(True, which="both", lw=0.3, alpha=0.5)
        ax.legend(fontsize=8)
        path = os.path.join(out_dir, f"rate_{regime}.png")
        fig.tight_layout()
        fig.savefig(path, dpi=130)
        plt.close(fig)
        paths.append(path)
    return paths


def render_sample_figure(samples, target, out_dir, name="samples"):
    import numpy as np
    samples = np.atleast_2d(samples)
    target = np.atleast_2d(target)
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    if samples.shape[1] == 1:
        bins = np.linspace(-1.5, 1.5, 61)
        ax.hist(target[:, 0], bins=bins, density=True, alpha=0.45, label="target")
        ax.hist(samples[:, 0], bins=bins, density=True, alpha=0.45,
                histtype="step", lw=1.5, label="sampled")
    else:
        ax.plot(target[:, 0], target[:, 1], ".", ms=2, alpha=0.3, label="target")
        ax.plot(samples[:, 0], samples[:, 1], ".", ms=2, alpha=0.3, label="sampled")
    ax.legend(fontsize=8)
    ax.set_title(name)
    path = os.path.join(out_dir, f"{name}.png")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
