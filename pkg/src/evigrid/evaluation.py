"""Prediction metrics: MSE, dynamic MSE, image similarity (IS) and mask IoU."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import AlignmentError, DimensionMismatch
from .grid import CellClass, DynamicMask, Eogm, Ogm, check_same_grid

OCCUPIED_THRESHOLD = 0.6
FREE_THRESHOLD = 0.4
CLASSES = (CellClass.FREE, CellClass.OCCUPIED, CellClass.OCCLUDED)


def _probs(g) -> np.ndarray:
    return g.to_ogm().cells if isinstance(g, Eogm) else g.cells


def mse(pred: Ogm, target: Ogm) -> float:
    check_same_grid(pred, target)
    return float(np.mean((_probs(pred) - _probs(target)) ** 2))


def dynamic_mse(pred: Ogm, target: Ogm, mask: DynamicMask) -> float:
    """MSE restricted to masked cells; 0 when the mask is empty."""
    check_same_grid(pred, target, mask)
    sel = mask.cells.astype(bool)
    if not sel.any():
        return 0.0
    return float(np.mean((_probs(pred)[sel] - _probs(target)[sel]) ** 2))


def probability_classes(p: np.ndarray) -> np.ndarray:
    """Occupied at p >= 0.6, Free at p <= 0.4, Occluded in between."""
    out = np.full(p.shape, CellClass.OCCLUDED, np.uint8)
    out[p >= OCCUPIED_THRESHOLD] = CellClass.OCCUPIED
    out[p <= FREE_THRESHOLD] = CellClass.FREE
    return out


def manhattan_field(present: np.ndarray) -> np.ndarray:
    """L1 distance from every cell to the nearest True cell (``present`` must be non-empty)."""
    return ndimage.distance_transform_cdt(~present, metric="taxicab")


def _directed(a: np.ndarray, b: np.ndarray, c: int) -> float:
    in_a = a == c
    if not in_a.any():
        return 0.0
    in_b = b == c
    if not in_b.any():
        return float(a.shape[0] + a.shape[1])
    return float(np.mean(manhattan_field(in_b)[in_a]))


def _as_classes(g) -> np.ndarray:
    if isinstance(g, np.ndarray):
        return g
    return g.cells


def image_similarity(pred, target) -> float:
    """Symmetrised mean nearest same-class Manhattan distance; lower is better.

    Accepts class arrays or Sgm grids. A class present in one grid but missing
    from the other costs W + H.
    """
    a, b = _as_classes(pred), _as_classes(target)
    if not isinstance(pred, np.ndarray) and not isinstance(target, np.ndarray):
        check_same_grid(pred, target)
    elif a.shape != b.shape:
        raise DimensionMismatch(f"class grids differ in shape: {a.shape} vs {b.shape}")
    total = 0.0
    for c in CLASSES:
        total += _directed(a, b, int(c)) + _directed(b, a, int(c))
    return total


def _iou_counts(pred: np.ndarray, truth: np.ndarray) -> Tuple[int, int, int, int]:
    inter_d = int(np.count_nonzero(pred & truth))
    union_d = int(np.count_nonzero(pred | truth))
    inter_s = int(np.count_nonzero(~pred & ~truth))
    union_s = int(np.count_nonzero(~pred | ~truth))
    return inter_s, union_s, inter_d, union_d


def _ratio(inter: int, union: int) -> float:
    return 1.0 if union == 0 else inter / union


def mask_iou(pred: DynamicMask, truth: DynamicMask) -> Tuple[float, float, float]:
    """(static IoU, dynamic IoU, mean); an empty union scores 1."""
    return pooled_iou([pred], [truth])


def pooled_iou(preds: Sequence[DynamicMask], truths: Sequence[DynamicMask]) -> Tuple[float, float, float]:
    """IoU with intersections and unions summed over several mask pairs."""
    if len(preds) != len(truths):
        raise AlignmentError(f"{len(preds)} predicted masks for {len(truths)} truths")
    tot = np.zeros(4, np.int64)
    for p, t in zip(preds, truths):
        check_same_grid(p, t)
        tot += _iou_counts(p.cells.astype(bool), t.cells.astype(bool))
    s, d = _ratio(tot[0], tot[1]), _ratio(tot[2], tot[3])
    return s, d, (s + d) / 2


# ---------------------------------------------------------------------------
# reports


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs) if len(xs) else 0.0


def _stderr(xs: Sequence[float]) -> float:
    n = len(xs)
    if n < 2:
        return 0.0
    m = _mean(xs)
    var = math.fsum((x - m) ** 2 for x in xs) / (n - 1)
    return math.sqrt(var / n)


@dataclass
class MetricReport:
    mse_per_step: List[float]
    dynamic_mse_per_step: List[float]
    is_per_step: List[float]
    mse_avg: float
    dynamic_mse_avg: float
    is_avg: float
    iou_static: Optional[float]
    iou_dynamic: Optional[float]
    iou_mean: Optional[float]
    samples: int
    mse_stderr: float = 0.0
    dynamic_mse_stderr: float = 0.0
    is_stderr: float = 0.0

    def to_dict(self) -> Dict:
        return {
            "mse_per_step": self.mse_per_step,
            "dynamic_mse_per_step": self.dynamic_mse_per_step,
            "is_per_step": self.is_per_step,
            "mse_avg": self.mse_avg,
            "dynamic_mse_avg": self.dynamic_mse_avg,
            "is_avg": self.is_avg,
            "iou_static": self.iou_static,
            "iou_dynamic": self.iou_dynamic,
            "iou_mean": self.iou_mean,
            "samples": self.samples,
            "mse_stderr": self.mse_stderr,
            "dynamic_mse_stderr": self.dynamic_mse_stderr,
            "is_stderr": self.is_stderr,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        """Aligned plain-text table: one row per step, then the averages."""
        lines = [f"{'step':>5}  {'mse':>12}  {'dynamic_mse':>12}  {'is':>10}"]
        for i, (a, b, c) in enumerate(zip(self.mse_per_step, self.dynamic_mse_per_step, self.is_per_step)):
            lines.append(f"{i + 1:>5}  {a:>12.6f}  {b:>12.6f}  {c:>10.4f}")
        lines.append(f"{'avg':>5}  {self.mse_avg:>12.6f}  {self.dynamic_mse_avg:>12.6f}  {self.is_avg:>10.4f}")
        lines.append(f"{'se':>5}  {self.mse_stderr:>12.6f}  {self.dynamic_mse_stderr:>12.6f}  {self.is_stderr:>10.4f}")
        if self.iou_mean is not None:
            lines.append(f"iou static {self.iou_static:.4f}  dynamic {self.iou_dynamic:.4f}  "
                         f"mean {self.iou_mean:.4f}")
        lines.append(f"samples {self.samples}")
        return "\n".join(lines) + "\n"


def step_metrics(pred: Ogm, target: Eogm, mask: DynamicMask) -> Tuple[float, float, float]:
    """(mse, dynamic mse, IS) for one predicted step against its target eOGM."""
    t_ogm = target.to_ogm()
    pred_cls = probability_classes(pred.cells)
    return (mse(pred, t_ogm), dynamic_mse(pred, t_ogm, mask),
            image_similarity(pred_cls, target.classes()))


def evaluate(predicted: Sequence[Sequence[Ogm]], targets: Sequence[Sequence[Eogm]],
             gt_masks: Sequence[Sequence[DynamicMask]],
             pred_masks: Optional[Sequence[Sequence[DynamicMask]]] = None,
             truth_masks: Optional[Sequence[Sequence[DynamicMask]]] = None) -> MetricReport:
    """Per-step metrics averaged over samples, then over steps.

    ``gt_masks[s][i]`` is the true dynamic mask at the time of target step i.
    When ``pred_masks`` is given, IoU pools every pair against ``truth_masks``
    (by default the same ``gt_masks``) within a sample, then averages over
    samples.
    """
    n = len(predicted)
    if n == 0:
        raise AlignmentError("no samples to evaluate")
    if len(targets) != n or len(gt_masks) != n:
        raise AlignmentError(f"sample counts differ: {n} predicted, {len(targets)} targets, "
                             f"{len(gt_masks)} mask sequences")
    horizon = len(predicted[0])
    per = np.zeros((n, horizon, 3))
    for s in range(n):
        if not (len(predicted[s]) == len(targets[s]) == len(gt_masks[s]) == horizon):
            raise AlignmentError(f"sample {s}: sequence lengths differ "
                                 f"({len(predicted[s])}, {len(targets[s])}, {len(gt_masks[s])}), "
                                 f"expected {horizon}")
        for i in range(horizon):
            per[s, i] = step_metrics(predicted[s][i], targets[s][i], gt_masks[s][i])

    steps = [[_mean(per[:, i, k].tolist()) for i in range(horizon)] for k in range(3)]
    sample_avg = [[_mean(per[s, :, k].tolist()) for s in range(n)] for k in range(3)]

    iou = (None, None, None)
    if pred_masks is not None:
        truth = gt_masks if truth_masks is None else truth_masks
        if len(pred_masks) != n or len(truth) != n:
            raise AlignmentError("mask sequences do not align with samples")
        vals = [pooled_iou(p, t) for p, t in zip(pred_masks, truth)]
        st = _mean([v[0] for v in vals])
        dy = _mean([v[1] for v in vals])
        iou = (st, dy, (st + dy) / 2)

    return MetricReport(
        mse_per_step=steps[0], dynamic_mse_per_step=steps[1], is_per_step=steps[2],
        mse_avg=_mean(steps[0]), dynamic_mse_avg=_mean(steps[1]), is_avg=_mean(steps[2]),
        iou_static=iou[0], iou_dynamic=iou[1], iou_mean=iou[2], samples=n,
        mse_stderr=_stderr(sample_avg[0]), dynamic_mse_stderr=_stderr(sample_avg[1]),
        is_stderr=_stderr(sample_avg[2]),
    )
