"""End-to-end glue: representation, segmentation, prediction and evaluation of datasets."""

from __future__ import annotations

import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

from .errors import AlignmentError, LengthMismatch
from .evaluation import MetricReport, evaluate
from .grid import DynamicMask, Eogm, Ogm, Pose2, Rgm, Sgm, transform_grid
from .prediction import PredictorConfig, persistence_baseline, predict
from .representation import (
    PointCloud,
    RepresentationConfig,
    SequenceRepr,
    accumulate_eogm,
    build_rgm,
    build_sgm,
    remove_ground,
    represent_sequence,
)
from .segmentation import HeuristicParams, SegModel, segment_heuristic, segment_learned
from .sim import Dataset

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> List[R]:
    """Ordered map, optionally over a thread pool; results never depend on ``threads``."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class Segmenter:
    """Either the heuristic rule or a learned model with its decision threshold."""

    params: HeuristicParams = field(default_factory=HeuristicParams)
    model: Optional[SegModel] = None
    threshold: float = 0.5

    def __call__(self, sgm: Sgm, rgm: Rgm) -> DynamicMask:
        if self.model is None:
            return segment_heuristic(sgm, rgm, self.params)
        return segment_learned(self.model, sgm, rgm, self.threshold)


def represent_dataset(dataset: Dataset, config: Optional[RepresentationConfig] = None,
                      threads: int = 1) -> List[SequenceRepr]:
    cfg = config or dataset.config
    return parallel_map(lambda seq: represent_sequence([f.cloud for f in seq], cfg),
                        dataset.sequences, threads)


def segment_sequence(rep: SequenceRepr, segmenter: Segmenter) -> List[DynamicMask]:
    return [segmenter(s, r) for s, r in zip(rep.sgms, rep.rgms)]


@dataclass
class SplitSequence:
    """One sequence cut into a history and the targets that follow it."""

    history: List[Eogm]
    masks: List[DynamicMask]
    future_poses: List[Pose2]
    targets: List[Eogm]


def split_sequence(eogms: Sequence[Eogm], masks: Sequence[DynamicMask], cfg: PredictorConfig) -> SplitSequence:
    """First ``past_frames`` frames as history, the next ``horizon`` as targets."""
    p, h = cfg.sequence.past_frames, cfg.sequence.horizon
    if len(eogms) < p + h:
        raise AlignmentError(f"sequence has {len(eogms)} frames, needs {p + h}")
    if len(masks) < p:
        raise AlignmentError(f"{len(masks)} masks for a {p}-frame history")
    targets = list(eogms[p:p + h])
    return SplitSequence(list(eogms[:p]), list(masks[:p]), [g.pose for g in targets], targets)


def predict_split(s: SplitSequence, cfg: PredictorConfig, baseline: bool = False) -> List[Ogm]:
    if baseline:
        return persistence_baseline(s.history, s.future_poses, cfg)
    return predict(s.history, s.masks, s.future_poses, cfg)


def evaluate_dataset(reps: Sequence[SequenceRepr], masks: Sequence[Sequence[DynamicMask]],
                     gt_masks: Sequence[Sequence[DynamicMask]], cfg: PredictorConfig = PredictorConfig(),
                     baseline: bool = False, threads: int = 1) -> MetricReport:
    """Predict every sequence from its history and score it against its own later eOGMs."""
    if not (len(reps) == len(masks) == len(gt_masks)):
        raise AlignmentError("representations, masks and labels disagree on the sequence count")
    p, h = cfg.sequence.past_frames, cfg.sequence.horizon
    splits = [split_sequence(r.eogms, m, cfg) for r, m in zip(reps, masks)]
    preds = parallel_map(lambda s: predict_split(s, cfg, baseline), splits, threads)
    return evaluate(preds, [s.targets for s in splits], [list(g[p:p + h]) for g in gt_masks])


class FramePipeline:
    """Streaming per-frame pipeline: SGM, RGM, eOGM, mask and a full-horizon forecast.

    Keeps the SGMs needed for the residual offset and the last ``past_frames``
    eOGMs and masks. Until the history fills, the RGM compares against the
    earliest SGM held, and :meth:`step` returns no forecast.
    """

    def __init__(self, config: RepresentationConfig = RepresentationConfig(),
                 segmenter: Segmenter = Segmenter(), predictor: PredictorConfig = PredictorConfig()):
        self.config = config
        self.segmenter = segmenter
        self.predictor = predictor
        self._sgms: deque = deque(maxlen=config.rgm_offset + 1)
        self._eogms: deque = deque(maxlen=predictor.sequence.past_frames)
        self._masks: deque = deque(maxlen=predictor.sequence.past_frames)
        self._prior: Optional[Eogm] = None

    def step(self, cloud: PointCloud, future_poses: Optional[Sequence[Pose2]] = None
             ) -> Tuple[DynamicMask, Optional[List[Ogm]]]:
        sgm = build_sgm(remove_ground(cloud, self.config.ground_z_threshold), self.config)
        self._sgms.append(sgm)
        past = self._sgms[0]
        rgm = build_rgm(sgm, transform_grid(past, past.pose, sgm.pose))
        self._prior = accumulate_eogm(self._prior, sgm, self.config)
        mask = self.segmenter(sgm, rgm)
        self._eogms.append(self._prior)
        self._masks.append(mask)
        if len(self._eogms) < self.predictor.sequence.past_frames:
            return mask, None
        if future_poses is not None and len(future_poses) != self.predictor.sequence.horizon:
            raise LengthMismatch("future pose count differs from the horizon")
        return mask, predict(list(self._eogms), list(self._masks), future_poses, self.predictor)


def time_frames(clouds: Sequence[PointCloud], pipeline: FramePipeline,
                future: Optional[Callable[[int], Sequence[Pose2]]] = None) -> List[float]:
    """Wall-clock seconds of every forecasting :meth:`FramePipeline.step` call."""
    out = []
    for i, c in enumerate(clouds):
        poses = future(i) if future is not None else None
        t0 = time.perf_counter()
        _, pred = pipeline.step(c, poses)
        dt = time.perf_counter() - t0
        if pred is not None:
            out.append(dt)
    return out
