"""Precision-recall plots from written metric reports."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import MalformedReport  # noqa: E402
from .metrics import BETA2, PrCurve, f_measure, read_pr_csv  # noqa: E402


@dataclass
class Curve:
    label: str
    pr: PrCurve
    f_max: float


def load_curve(path, label: str | None = None) -> Curve:
    """Read a report JSON or a PR CSV (threshold,precision,recall)."""
    path = Path(path)
    if not path.is_file():
        raise MalformedReport(f"report not found: {path}")
    label = label or path.stem
    try:
        if path.suffix == ".json":
            blob = json.loads(path.read_text())
            pr = PrCurve(*(np.asarray(blob["pr"][k], dtype=np.float64) for k in ("threshold", "precision", "recall")))
            f_max = float(blob["scalars"]["f_max"])
        else:
            pr = read_pr_csv(path)
            f_max = float(np.max(f_measure(pr.precision, pr.recall, BETA2)))
    except (KeyError, TypeError, ValueError, IndexError, json.JSONDecodeError) as exc:
        raise MalformedReport(f"cannot read PR data from {path}: {exc}") from exc
    if not (len(pr.precision) == len(pr.recall) == len(pr.thresholds)) or len(pr.precision) == 0:
        raise MalformedReport(f"{path}: precision/recall columns are empty or of unequal length")
    if not (np.isfinite(pr.precision).all() and np.isfinite(pr.recall).all()):
        raise MalformedReport(f"{path}: non-finite precision/recall values")
    return Curve(label, pr, f_max)


def order_by_fmax(curves: list) -> list:
    return sorted(curves, key=lambda c: -c.f_max)


def plot_pr(curves: list, out_path, title: str | None = None) -> list:
    """Draw all curves on shared axes; the legend lists methods by F_max, best first."""
    ordered = order_by_fmax(curves)
    fig, ax = plt.subplots(figsize=(5, 4.5), dpi=120)
    for c in ordered:
        ax.plot(c.pr.recall, c.pr.precision, lw=1.5, label=f"{c.label} (F_max={c.f_max:.3f})")
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    if title:
        ax.set_title(title)
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path)
    plt.close(fig)
    return [c.label for c in ordered]
