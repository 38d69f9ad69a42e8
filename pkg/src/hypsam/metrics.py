"""Saliency evaluation: PR curves, F-measure family, MAE, E-measure, S-measure.

Conventions follow the widely used SOD evaluation toolbox so that published
maps rescore to published numbers:

* predictions are scaled to [0, 1] and min-max normalised per image;
  ground truth is foreground where the 8-bit value exceeds 128;
* curve metrics quantise the prediction to 8 bits (``floor(255 * p)``) and
  sweep 256 thresholds ``k = 0..255``; a pixel is positive iff its quantised
  value is ``>= k``;
* dataset-level F_max / E_max are maxima of the image-averaged curves.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import cv2
import numpy as np
from scipy.ndimage import convolve, distance_transform_edt

from .data import ATTRIBUTES
from .errors import EmptyDataset, ShapeMismatch

EPS = np.spacing(1)
BETA2 = 0.3
N_THRESHOLDS = 256
THRESHOLDS = np.arange(N_THRESHOLDS, dtype=np.float64) / 255.0


@dataclass
class PrCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray


def _check(pred, gt):
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")


def prepare_pair(pred: np.ndarray, gt: np.ndarray, normalize: bool = True):
    """Bring a raw prediction / GT pair into scoring form.

    ``pred`` may be uint8 (0..255) or float in [0, 1]; it is resized to the
    GT resolution when needed (never the reverse). ``gt`` may be boolean,
    {0, 1} or 8-bit.
    """
    gt = np.asarray(gt)
    if gt.ndim == 3:
        gt = gt[..., 0]
    if gt.dtype == bool:
        gt_b = gt
    elif gt.max(initial=0) > 1:
        gt_b = gt > 128
    else:
        gt_b = gt > 0.5

    pred = np.asarray(pred)
    if pred.ndim == 3:
        pred = pred[..., 0]
    if pred.dtype == np.uint8:
        pred = pred.astype(np.float64) / 255.0
    else:
        pred = pred.astype(np.float64)
    if pred.shape != gt_b.shape:
        pred = cv2.resize(pred, (gt_b.shape[1], gt_b.shape[0]), interpolation=cv2.INTER_LINEAR)
        pred = np.clip(pred, 0.0, 1.0)
    if normalize:
        lo, hi = pred.min(), pred.max()
        if hi != lo:
            pred = (pred - lo) / (hi - lo)
    return pred, gt_b


def quantize(pred: np.ndarray) -> np.ndarray:
    return (np.asarray(pred, dtype=np.float64) * 255).astype(np.uint8)


def _threshold_counts(pred, gt):
    """Per-threshold (TP, predicted-positive) counts for k = 0..255."""
    gt = np.asarray(gt, dtype=bool)
    q = quantize(pred)
    bins = np.arange(N_THRESHOLDS + 1)
    fg_hist = np.histogram(q[gt], bins=bins)[0]
    bg_hist = np.histogram(q[~gt], bins=bins)[0]
    # reverse cumulative sums: count of pixels with q >= k
    tp = np.cumsum(fg_hist[::-1])[::-1]
    fp = np.cumsum(bg_hist[::-1])[::-1]
    return tp.astype(np.float64), (tp + fp).astype(np.float64)


def pr_curve(pred: np.ndarray, gt: np.ndarray) -> PrCurve:
    """Precision and recall at each of the 256 thresholds.

    Precision is 0 where nothing is predicted positive and recall is 0 for an
    empty ground truth, as in the reference toolbox.
    """
    pred, gt = np.asarray(pred), np.asarray(gt, dtype=bool)
    _check(pred, gt)
    tp, pp = _threshold_counts(pred, gt)
    precision = tp / np.where(pp == 0, 1, pp)
    recall = tp / max(np.count_nonzero(gt), 1)
    return PrCurve(THRESHOLDS.copy(), precision, recall)


def f_measure(precision, recall, beta2: float = BETA2):
    precision = np.asarray(precision, dtype=np.float64)
    recall = np.asarray(recall, dtype=np.float64)
    num = (1 + beta2) * precision * recall
    den = np.where(num == 0, 1.0, beta2 * precision + recall)
    out = num / den
    return float(out) if out.ndim == 0 else out


def f_curve(pr: PrCurve, beta2: float = BETA2) -> np.ndarray:
    return f_measure(pr.precision, pr.recall, beta2)


def f_curve_stats(pr: PrCurve, beta2: float = BETA2):
    curve = f_curve(pr, beta2)
    return float(curve.mean()), float(curve.max())


def adaptive_f(pred: np.ndarray, gt: np.ndarray, beta2: float = BETA2) -> float:
    """F-measure at the adaptive threshold ``min(2 * mean(pred), 1)``."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=bool)
    _check(pred, gt)
    binary = pred >= min(2 * pred.mean(), 1.0)
    inter = np.count_nonzero(binary & gt)
    if inter == 0:
        return 0.0
    p = inter / np.count_nonzero(binary)
    r = inter / np.count_nonzero(gt)
    return float((1 + beta2) * p * r / (beta2 * p + r))


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    _check(pred, gt)
    return float(np.mean(np.abs(pred - gt)))


# ---------------------------------------------------------------------------
# E-measure


def _enhanced_sum(fg_fg, fg_bg, pred_fg, n, gt_fg):
    """Sum of the enhanced alignment matrix given confusion counts.

    A binary prediction and binary GT take only four value combinations, so
    the pixel sum collapses to four weighted terms.
    """
    pred_bg = n - pred_fg
    if gt_fg == 0:
        return pred_bg.astype(np.float64) if isinstance(pred_bg, np.ndarray) else float(pred_bg)
    if gt_fg == n:
        return pred_fg.astype(np.float64) if isinstance(pred_fg, np.ndarray) else float(pred_fg)
    bg_fg = gt_fg - fg_fg
    bg_bg = pred_bg - bg_fg
    mean_pred = pred_fg / n
    mean_gt = gt_fg / n
    total = 0.0
    for count, a, b in (
        (fg_fg, 1 - mean_pred, 1 - mean_gt),
        (fg_bg, 1 - mean_pred, -mean_gt),
        (bg_fg, -mean_pred, 1 - mean_gt),
        (bg_bg, -mean_pred, -mean_gt),
    ):
        align = 2 * a * b / (a * a + b * b + EPS)
        total = total + (align + 1) ** 2 / 4 * count
    return total


def enhanced_alignment(binary_pred: np.ndarray, gt: np.ndarray) -> float:
    """E-measure of a single binary foreground map."""
    binary_pred, gt = np.asarray(binary_pred, dtype=bool), np.asarray(gt, dtype=bool)
    _check(binary_pred, gt)
    n = gt.size
    fg_fg = np.count_nonzero(binary_pred & gt)
    fg_bg = np.count_nonzero(binary_pred & ~gt)
    return float(_enhanced_sum(fg_fg, fg_bg, fg_fg + fg_bg, n, np.count_nonzero(gt)) / n)


def e_curve(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """E-measure of the thresholded prediction at each of the 256 thresholds."""
    pred, gt = np.asarray(pred), np.asarray(gt, dtype=bool)
    _check(pred, gt)
    q = quantize(pred)
    bins = np.arange(N_THRESHOLDS + 1)
    fg_fg = np.cumsum(np.histogram(q[gt], bins=bins)[0][::-1])[::-1]
    fg_bg = np.cumsum(np.histogram(q[~gt], bins=bins)[0][::-1])[::-1]
    total = _enhanced_sum(fg_fg, fg_bg, fg_fg + fg_bg, gt.size, np.count_nonzero(gt))
    return np.asarray(total, dtype=np.float64) / gt.size


def e_measure(pred: np.ndarray, gt: np.ndarray, reduce: str = "mean") -> float:
    curve = e_curve(pred, gt)
    if reduce == "mean":
        return float(curve.mean())
    if reduce == "max":
        return float(curve.max())
    raise ValueError(f"reduce must be 'mean' or 'max', got {reduce!r}")


# ---------------------------------------------------------------------------
# S-measure


def _s_object(x: np.ndarray) -> float:
    mean = x.mean()
    std = x.std(ddof=1) if x.size > 1 else 0.0
    return 2 * mean / (mean * mean + 1 + std + EPS)


def _object_score(pred, gt):
    u = gt.mean()
    return u * _s_object(pred[gt]) + (1 - u) * _s_object((1 - pred)[~gt])


def _region_ssim(pred, gt):
    n = pred.size
    x, y = pred.mean(), gt.mean()
    dof = max(n - 1, 1)
    sx = np.sum((pred - x) ** 2) / dof
    sy = np.sum((gt - y) ** 2) / dof
    sxy = np.sum((pred - x) * (gt - y)) / dof
    alpha = 4 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        return alpha / (beta + EPS)
    return 1.0 if beta == 0 else 0.0


def _region_score(pred, gt):
    h, w = gt.shape
    area = h * w
    if np.count_nonzero(gt) == 0:
        cy, cx = np.round(h / 2), np.round(w / 2)
    else:
        cy, cx = np.argwhere(gt).mean(axis=0).round()
    # one-based centroid, so [0:cy] includes the centroid row like MATLAB's 1:Y
    cy, cx = int(cy) + 1, int(cx) + 1
    gt = gt.astype(np.float64)
    weights = (cx * cy / area, cy * (w - cx) / area, (h - cy) * cx / area)
    weights = weights + (1 - sum(weights),)
    blocks = (
        (slice(0, cy), slice(0, cx)),
        (slice(0, cy), slice(cx, w)),
        (slice(cy, h), slice(0, cx)),
        (slice(cy, h), slice(cx, w)),
    )
    score = 0.0
    for wgt, (rs, cs) in zip(weights, blocks):
        p, g = pred[rs, cs], gt[rs, cs]
        if p.size:
            score += wgt * _region_ssim(p, g)
    return score


def s_measure(pred: np.ndarray, gt: np.ndarray, alpha: float = 0.5) -> float:
    """Structure measure: ``alpha * object + (1 - alpha) * region``, floored at 0."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=bool)
    _check(pred, gt)
    y = gt.mean()
    if y == 0:
        return float(1 - pred.mean())
    if y == 1:
        return float(pred.mean())
    return float(max(0.0, alpha * _object_score(pred, gt) + (1 - alpha) * _region_score(pred, gt)))


# ---------------------------------------------------------------------------
# weighted F-measure


def _gauss2d(size=7, sigma=5.0):
    m = (size - 1) / 2
    y, x = np.ogrid[-m : m + 1, -m : m + 1]
    h = np.exp(-(x * x + y * y) / (2 * sigma * sigma))
    h[h < np.finfo(h.dtype).eps * h.max()] = 0
    return h / h.sum()


_WF_KERNEL = _gauss2d()


def weighted_f(pred: np.ndarray, gt: np.ndarray, beta2: float = 1.0) -> float:
    """Weighted F-measure with dependency-smoothed, distance-weighted errors.

    Returns 0 for an empty ground truth.
    """
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=bool)
    _check(pred, gt)
    if not gt.any():
        return 0.0
    dist, idx = distance_transform_edt(~gt, return_indices=True)
    err = np.abs(pred - gt)
    # background errors borrow the error of their nearest foreground pixel
    err_t = err.copy()
    bg = ~gt
    err_t[bg] = err[idx[0][bg], idx[1][bg]]
    smoothed = convolve(err_t, _WF_KERNEL, mode="constant", cval=0.0)
    min_e = np.where(gt & (smoothed < err), smoothed, err)
    importance = np.where(bg, 2 - np.exp(np.log(0.5) / 5 * dist), 1.0)
    ew = min_e * importance
    tpw = np.count_nonzero(gt) - ew[gt].sum()
    fpw = ew[bg].sum()
    recall = 1 - ew[gt].mean()
    precision = tpw / (tpw + fpw + EPS)
    return float((1 + beta2) * recall * precision / (recall + beta2 * precision + EPS))


# ---------------------------------------------------------------------------
# per-image and dataset reports


@dataclass
class ImageScores:
    name: str
    f_avg: float
    f_max: float
    f_adp: float
    f_w: float
    mae: float
    e_m: float
    e_max: float
    s_m: float
    precision: np.ndarray = field(repr=False)
    recall: np.ndarray = field(repr=False)
    f_curve: np.ndarray = field(repr=False)
    e_curve: np.ndarray = field(repr=False)
    attributes: frozenset = frozenset()


SCALARS = ("f_avg", "f_max", "f_w", "mae", "e_m", "s_m")
EXTRA_SCALARS = ("f_adp", "e_max")


def evaluate_pair(pred, gt, name: str = "", attributes=frozenset(), normalize: bool = True) -> ImageScores:
    """Score one prediction against its ground truth (raw or prepared)."""
    pred, gt = prepare_pair(pred, gt, normalize=normalize)
    pr = pr_curve(pred, gt)
    fc = f_curve(pr)
    ec = e_curve(pred, gt)
    return ImageScores(
        name=name,
        f_avg=float(fc.mean()),
        f_max=float(fc.max()),
        f_adp=adaptive_f(pred, gt),
        f_w=weighted_f(pred, gt),
        mae=mae(pred, gt),
        e_m=float(ec.mean()),
        e_max=float(ec.max()),
        s_m=s_measure(pred, gt),
        precision=pr.precision,
        recall=pr.recall,
        f_curve=fc,
        e_curve=ec,
        attributes=frozenset(attributes),
    )


@dataclass
class MetricReport:
    f_avg: float
    f_max: float
    f_w: float
    mae: float
    e_m: float
    s_m: float
    f_adp: float
    e_max: float
    n_images: int
    pr: PrCurve
    f_curve: np.ndarray
    per_image: list = field(default_factory=list, repr=False)
    by_attribute: dict = field(default_factory=dict)

    def scalars(self) -> dict:
        return {k: getattr(self, k) for k in SCALARS + EXTRA_SCALARS}

    def to_json(self) -> dict:
        return {
            "n_images": self.n_images,
            "scalars": self.scalars(),
            "pr": {
                "threshold": self.pr.thresholds.tolist(),
                "precision": self.pr.precision.tolist(),
                "recall": self.pr.recall.tolist(),
            },
            "f_curve": self.f_curve.tolist(),
            "by_attribute": self.by_attribute,
            "per_image": [
                {"name": s.name, **{k: getattr(s, k) for k in SCALARS + EXTRA_SCALARS}} for s in self.per_image
            ],
        }


def aggregate(per_image: Sequence[ImageScores], attribute_tags: Optional[dict] = None,
              breakdown: bool = True) -> MetricReport:
    """Reduce per-image scores to dataset scores.

    Curves are averaged pointwise across images; F_max and E_max are the
    maxima of the averaged curves. Scalar metrics are plain image means.
    When ``attribute_tags`` (name -> tags) is given, or images carry their
    own tags, a per-attribute breakdown is attached in the canonical order.
    """
    per_image = list(per_image)
    if not per_image:
        raise EmptyDataset("no images to aggregate")
    fc = np.mean([s.f_curve for s in per_image], axis=0)
    ec = np.mean([s.e_curve for s in per_image], axis=0)
    pr = PrCurve(
        THRESHOLDS.copy(),
        np.mean([s.precision for s in per_image], axis=0),
        np.mean([s.recall for s in per_image], axis=0),
    )
    report = MetricReport(
        f_avg=float(fc.mean()),
        f_max=float(fc.max()),
        f_w=float(np.mean([s.f_w for s in per_image])),
        mae=float(np.mean([s.mae for s in per_image])),
        e_m=float(ec.mean()),
        s_m=float(np.mean([s.s_m for s in per_image])),
        f_adp=float(np.mean([s.f_adp for s in per_image])),
        e_max=float(ec.max()),
        n_images=len(per_image),
        pr=pr,
        f_curve=fc,
        per_image=per_image,
    )
    tags_of = {s.name: s.attributes for s in per_image}
    if attribute_tags:
        tags_of.update({k: frozenset(v) for k, v in attribute_tags.items() if k in tags_of})
    if breakdown and any(tags_of.values()):
        table = {}
        for attr in ATTRIBUTES:
            subset = [s for s in per_image if attr in tags_of.get(s.name, ())]
            if subset:
                sub = aggregate(subset, breakdown=False)
                table[attr] = {"n": len(subset), **{k: getattr(sub, k) for k in SCALARS}}
        report.by_attribute = table
    return report


def evaluate_many(pairs: Iterable, attribute_tags: Optional[dict] = None) -> MetricReport:
    """``pairs`` yields (name, pred, gt); evaluation order is preserved."""
    tags = attribute_tags or {}
    scores = [evaluate_pair(p, g, name=n, attributes=tags.get(n, frozenset())) for n, p, g in pairs]
    return aggregate(scores)


def format_table(reports: dict) -> str:
    """Human-readable table, one row per named report."""
    cols = ("F_avg", "F_max", "F_w", "MAE", "E_m", "S_m")
    keys = SCALARS
    width = max([len("method")] + [len(k) for k in reports])
    lines = [f"{'method':<{width}}  " + "  ".join(f"{c:>6}" for c in cols)]
    for name, rep in reports.items():
        lines.append(f"{name:<{width}}  " + "  ".join(f"{getattr(rep, k):6.3f}" for k in keys))
    return "\n".join(lines)


def write_pr_csv(path, pr: PrCurve) -> None:
    with open(path, "w") as fh:
        fh.write("threshold,precision,recall\n")
        for t, p, r in zip(pr.thresholds, pr.precision, pr.recall):
            fh.write(f"{t:.10g},{p:.10g},{r:.10g}\n")


def read_pr_csv(path) -> PrCurve:
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return PrCurve(arr[:, 0], arr[:, 1], arr[:, 2])


def write_report_files(out_dir, report: MetricReport, stem: str = "report") -> dict:
    """Write JSON, scalar CSV, per-image CSV and PR CSV; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out / f"{stem}.json",
        "csv": out / f"{stem}.csv",
        "per_image": out / f"{stem}_per_image.csv",
        "pr": out / f"{stem}_pr.csv",
    }
    paths["json"].write_text(json.dumps(report.to_json(), indent=2))
    names = SCALARS + EXTRA_SCALARS
    paths["csv"].write_text(",".join(names) + "\n" + ",".join(f"{getattr(report, k):.6f}" for k in names) + "\n")
    rows = ["name," + ",".join(names)]
    rows += [s.name + "," + ",".join(f"{getattr(s, k):.6f}" for k in names) for s in report.per_image]
    paths["per_image"].write_text("\n".join(rows) + "\n")
    write_pr_csv(paths["pr"], report.pr)
    if report.by_attribute:
        paths["attributes"] = out / f"{stem}_attributes.csv"
        lines = ["attribute,n," + ",".join(SCALARS)]
        for attr, row in report.by_attribute.items():
            lines.append(f"{attr},{row['n']}," + ",".join(f"{row[k]:.6f}" for k in SCALARS))
        paths["attributes"].write_text("\n".join(lines) + "\n")
    return paths
