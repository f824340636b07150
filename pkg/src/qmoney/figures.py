"""Optional matplotlib figures written next to CSV/JSON reports."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams.update({
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "svg.hashsalt": "qmoney",
})


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None} if str(path).endswith((".svg", ".pdf")) else None)
    plt.close(fig)


def plot_scaling(rows, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.5, 3))
    ns = [r["n"] for r in rows]
    ax1.semilogy(ns, [max(r["queries"], 0.5) for r in rows], "o-", label="measured queries")
    ax1.semilogy(ns, [r["sqrt_ref"] for r in rows], "--", color="0.5", label=r"$\sqrt{2^n}$")
    ax1.set_xlabel("n")
    ax1.set_ylabel("oracle queries")
    ax1.legend(frameon=False)
    ax2.plot(ns, [r["ratio"] for r in rows], "s-")
    ax2.axhline(math.pi / 8, ls=":", color="0.5", label=r"$\pi/8$")
    ax2.set_xlabel("n")
    ax2.set_ylabel(r"queries / $\sqrt{2^n}$")
    ax2.legend(frameon=False)
    _save(fig, path)


def plot_bound_table(rows, path):
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ks = sorted({r["k"] for r in rows})
    for k in ks:
        sub = [r for r in rows if r["k"] == k]
        ys = [r["bound"] for r in sub]
        if any(y > 0 for y in ys):
            ax.semilogy([r["n"] for r in sub], [y if y > 0 else float("nan") for y in ys],
                        marker=".", label=f"k={k}")
    ax.set_xlabel("n")
    ax.set_ylabel("query lower bound (shape only)")
    ax.legend(frameon=False, fontsize=7)
    _save(fig, path)


def plot_retry(tries, n, path):
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    p = 2.0**-n
    top = int(max(tries))
    bins = range(1, min(top, int(8 / p)) + 2)
    ax.hist(tries, bins=bins, density=True, alpha=0.6, label="measured")
    xs = list(bins)[:-1]
    ax.plot([x + 0.5 for x in xs], [p * (1 - p) ** (x - 1) for x in xs], "k.-", label="Geometric(2^-n)")
    ax.set_xlabel("tries until acceptance")
    ax.set_ylabel("frequency")
    ax.legend(frameon=False)
    _save(fig, path)
