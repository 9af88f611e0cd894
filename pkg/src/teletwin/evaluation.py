"""Instance-segmentation scoring: pixel AP family + object-level counts.

Two metric families over mask predictions:

* Pixel metrics: interpolated average precision over mask IoU thresholds
  0.50:0.05:0.95 (AP), at 0.50 and 0.75, and AP_M restricted to medium-size
  ground truth (area within 32^2..96^2 px).

* Object counts: a ground-truth instance counts as TP when a same-class
  prediction covers at least half of ITS pixels -- intersection over the
  source object, deliberately not IoU -- matched greedily one-to-one by
  confidence; leftover predictions are FP, leftover ground truth FN.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import rasterize_annotation
from .maskops import intersection_over_gt, mask_iou
from .scene import CLASS_NAMES

IOU_THRESHOLDS = tuple(np.round(np.arange(0.50, 0.96, 0.05), 2))
MEDIUM_BAND = (32 ** 2, 96 ** 2)
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
OBJECT_MATCH_RATIO = 0.5


class EvalError(Exception):
    pass


class NoGroundTruth(EvalError):
    """Metric undefined: the class has no (in-band) ground truth."""


@dataclass
class ImageEval:
    """Per-image, per-class match table: masks reduced to overlap numbers."""

    gt_areas: np.ndarray          # (n_gt,)
    pred_scores: np.ndarray       # (n_pred,)
    pred_areas: np.ndarray        # (n_pred,)
    iou: np.ndarray               # (n_pred, n_gt)
    cover: np.ndarray             # (n_pred, n_gt) intersection / gt area


@dataclass
class PixelMetrics:
    ap: float | None = None
    ap50: float | None = None
    ap75: float | None = None
    ap_m: float | None = None


@dataclass
class ObjectMetrics:
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class EvalPairs:
    """Overlap tables for every (image, class) with ground truth or predictions."""

    by_class: dict = field(default_factory=dict)  # class -> list[ImageEval]


def build_pairs(gt_instances, pred_instances) -> EvalPairs:
    """Reduce masks to overlap tables.

    gt_instances: image_id -> list of (class, mask)
    pred_instances: image_id -> list of (class, mask, score)
    """
    pairs = EvalPairs()
    image_ids = sorted(set(gt_instances) | set(pred_instances))
    for img in image_ids:
        gts = gt_instances.get(img, [])
        preds = pred_instances.get(img, [])
        classes = {c for c, _ in gts} | {c for c, _, _ in preds}
        for cls in sorted(classes):
            g = [m for c, m in gts if c == cls]
            p = [(m, s) for c, m, s in preds if c == cls]
            iou = np.zeros((len(p), len(g)))
            cover = np.zeros((len(p), len(g)))
            for i, (pm, _) in enumerate(p):
                for j, gm in enumerate(g):
                    iou[i, j] = mask_iou(pm, gm)
                    cover[i, j] = intersection_over_gt(pm, gm)
            rec = ImageEval(
                gt_areas=np.array([np.count_nonzero(m) for m in g], dtype=float),
                pred_scores=np.array([s for _, s in p], dtype=float),
                pred_areas=np.array([np.count_nonzero(m) for m, _ in p], dtype=float),
                iou=iou,
                cover=cover,
            )
            pairs.by_class.setdefault(cls, []).append(rec)
    return pairs


def _match_at_threshold(rec: ImageEval, tau: float, band) -> list[tuple[float, int]]:
    """Greedy per-image matching; returns (score, flag) with flag 1 TP / 0 FP /
    -1 ignored, plus the in-band gt count via the second return value."""
    n_gt = len(rec.gt_areas)
    if band is None:
        in_band = np.ones(n_gt, dtype=bool)
    else:
        in_band = (rec.gt_areas >= band[0]) & (rec.gt_areas <= band[1])
    taken = np.zeros(n_gt, dtype=bool)
    out = []
    for i in np.argsort(-rec.pred_scores, kind="stable"):
        cand = np.where(~taken & in_band & (rec.iou[i] >= tau))[0]
        if len(cand):
            j = cand[np.argmax(rec.iou[i][cand])]
            taken[j] = True
            out.append((rec.pred_scores[i], 1))
            continue
        # out-of-band matches and out-of-band strays are ignored, not FP
        if band is not None:
            stray = np.where(~in_band & (rec.iou[i] >= tau))[0]
            if len(stray) or not (band[0] <= rec.pred_areas[i] <= band[1]):
                out.append((rec.pred_scores[i], -1))
                continue
        out.append((rec.pred_scores[i], 0))
    return out, int(in_band.sum())


def average_precision(pairs: EvalPairs, cls: str, tau: float, band=None) -> float:
    """101-point interpolated AP for one class at one IoU threshold (0..1)."""
    recs = pairs.by_class.get(cls, [])
    flags = []
    n_gt = 0
    for rec in recs:
        matched, in_band = _match_at_threshold(rec, tau, band)
        flags.extend(matched)
        n_gt += in_band
    if n_gt == 0:
        raise NoGroundTruth(f"no ground truth for {cls!r}" +
                            (" in the size band" if band else ""))
    flags = [f for f in flags if f[1] >= 0]
    if not flags:
        return 0.0
    flags.sort(key=lambda t: -t[0])
    tp = np.cumsum([f == 1 for _, f in flags])
    fp = np.cumsum([f == 0 for _, f in flags])
    recall = tp / n_gt
    precision = tp / np.maximum(tp + fp, 1)
    # precision envelope, then sample the 101 recall points
    env = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    for r in RECALL_POINTS:
        idx = np.searchsorted(recall, r, side="left")
        ap += env[idx] if idx < len(env) else 0.0
    return ap / len(RECALL_POINTS)


def pixel_ap(pairs: EvalPairs, cls: str) -> PixelMetrics:
    """AP / AP50 / AP75 / AP_M for one class, as percentages."""
    try:
        per_tau = [average_precision(pairs, cls, t) for t in IOU_THRESHOLDS]
    except NoGroundTruth:
        return PixelMetrics()
    m = PixelMetrics(
        ap=100.0 * float(np.mean(per_tau)),
        ap50=100.0 * per_tau[0],
        ap75=100.0 * per_tau[5],
    )
    try:
        band_aps = [average_precision(pairs, cls, t, band=MEDIUM_BAND)
                    for t in IOU_THRESHOLDS]
        m.ap_m = 100.0 * float(np.mean(band_aps))
    except NoGroundTruth:
        m.ap_m = None
    return m


def object_counts(pairs: EvalPairs, cls: str) -> ObjectMetrics:
    """TP / FP / FN by the >=50% intersection-over-source-object rule."""
    out = ObjectMetrics()
    for rec in pairs.by_class.get(cls, []):
        n_gt = len(rec.gt_areas)
        taken = np.zeros(n_gt, dtype=bool)
        for i in np.argsort(-rec.pred_scores, kind="stable"):
            cand = np.where(~taken & (rec.cover[i] >= OBJECT_MATCH_RATIO))[0]
            if len(cand):
                taken[cand[np.argmax(rec.cover[i][cand])]] = True
                out.tp += 1
            else:
                out.fp += 1
        out.fn += int(n_gt - taken.sum())
    return out


# --- file-level entry points ----------------------------------------------

def load_coco_ground_truth(path):
    """image_id -> [(class, mask)] plus {image_id: (h, w)} from a COCO file."""
    with open(path) as f:
        doc = json.load(f)
    cat_names = {c["id"]: c["name"] for c in doc["categories"]}
    shapes = {im["id"]: (im["height"], im["width"]) for im in doc["images"]}
    gt = {im_id: [] for im_id in shapes}
    for ann in doc["annotations"]:
        shape = shapes[ann["image_id"]]
        gt[ann["image_id"]].append(
            (cat_names[ann["category_id"]], rasterize_annotation(ann, shape)))
    return gt, shapes, cat_names


def load_coco_predictions(path, shapes, cat_names):
    """image_id -> [(class, mask, score)] from a COCO results file."""
    with open(path) as f:
        results = json.load(f)
    preds = {im_id: [] for im_id in shapes}
    for r in results:
        img = r["image_id"]
        if img not in shapes:
            continue
        mask = rasterize_annotation(r, shapes[img])
        preds[img].append((cat_names[r["category_id"]], mask, float(r["score"])))
    return preds


def evaluate_files(gt_path, pred_path):
    """class -> (PixelMetrics, ObjectMetrics, n_gt) for every class present."""
    gt, shapes, cat_names = load_coco_ground_truth(gt_path)
    preds = load_coco_predictions(pred_path, shapes, cat_names)
    pairs = build_pairs(gt, preds)
    report = {}
    order = list(CLASS_NAMES) + sorted(set(pairs.by_class) - set(CLASS_NAMES))
    for cls in order:
        if cls not in pairs.by_class:
            continue
        n_gt = sum(len(r.gt_areas) for r in pairs.by_class[cls])
        report[cls] = (pixel_ap(pairs, cls), object_counts(pairs, cls), n_gt)
    return report


def format_report(report, csv: bool = False) -> str:
    """Text or CSV table: pixel metrics (%) and object counts per class."""
    def fmt(v):
        return "-" if v is None else f"{v:.1f}"

    if csv:
        lines = ["class,AP,AP50,AP75,AP_M,TP,FP,FN,num_gt"]
        for cls, (px, ob, n) in report.items():
            lines.append(f"{cls},{fmt(px.ap)},{fmt(px.ap50)},{fmt(px.ap75)},"
                         f"{fmt(px.ap_m)},{ob.tp},{ob.fp},{ob.fn},{n}")
        return "\n".join(lines)
    head = (f"{'Object class':<22} {'AP':>6} {'AP50':>6} {'AP75':>6} {'AP_M':>6} "
            f"{'TP':>6} {'FP':>5} {'FN':>5}")
    lines = [head, "-" * len(head)]
    for cls, (px, ob, n) in report.items():
        lines.append(f"{cls:<22} {fmt(px.ap):>6} {fmt(px.ap50):>6} {fmt(px.ap75):>6} "
                     f"{fmt(px.ap_m):>6} {ob.tp:>3} of {n} {ob.fp:>5} {ob.fn:>5}")
    return "\n".join(lines)
