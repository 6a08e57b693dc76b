"""Figures written next to the CSV reports (headless backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {"figure.figsize": (5.0, 3.2), "figure.dpi": 120, "savefig.bbox": "tight",
      "axes.linewidth": 0.6, "font.size": 9, "svg.hashsalt": "arobundle"}


def _save(fig, path):
    # fixed metadata so deterministic runs give identical files
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def convergence(log_records, path):
    """Center value and expected decrease per iteration."""
    with plt.rc_context(RC):
        fig, (a1, a2) = plt.subplots(2, 1, sharex=True)
        rec = [r for r in log_records if np.isfinite(r.center_value)]
        k = [r.k for r in rec]
        a1.plot(k, [r.center_value for r in rec], "k-", lw=1)
        a1.set_ylabel("F at center")
        d = [(r.k, r.delta) for r in log_records if np.isfinite(r.delta) and r.delta > 0]
        if d:
            a2.semilogy(*zip(*d), "o-", ms=2, lw=0.8)
        a2.set_ylabel("expected decrease")
        a2.set_xlabel("iteration")
        return _save(fig, path)


def lower_bounds(seeds, harvested, sampled, path, upper=None):
    """Harvested vs uniformly sampled scenario lower bounds per instance."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        x = np.arange(len(seeds))
        ax.plot(x, harvested, "o-", ms=3, lw=0.8, label="harvested scenarios")
        ax.plot(x, sampled, "s--", ms=3, lw=0.8, label="uniform samples")
        if upper is not None:
            ax.plot(x, upper, "k:", lw=0.8, label="upper bound")
        ax.set_xticks(x, [str(s) for s in seeds])
        ax.set_xlabel("instance seed")
        ax.set_ylabel("lower bound")
        ax.legend(frameon=False)
        return _save(fig, path)


def gap_bars(report, path):
    """Relative gap per instance for each method of a study."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        methods = sorted({r["method"] for r in report.rows}, reverse=True)
        keys = sorted({(r["T"], r["seed"]) for r in report.rows})
        width = 0.8 / max(1, len(methods))
        for j, m in enumerate(methods):
            g = {(r["T"], r["seed"]): r["gap"] for r in report.rows if r["method"] == m}
            ax.bar(np.arange(len(keys)) + j * width, [100 * g.get(k, np.nan) for k in keys],
                   width, label=m.upper())
        ax.set_xticks(np.arange(len(keys)) + 0.4 - width / 2, [f"{s}" for _, s in keys])
        ax.set_xlabel("instance seed")
        ax.set_ylabel("relative gap (%)")
        ax.legend(frameon=False)
        return _save(fig, path)
