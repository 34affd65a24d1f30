"""Static/dynamic segmentation from an SGM and its RGM.

Two segmenters share the same input/output contract: a rule that grows RGM
hits into nearby Occupied clusters, and a per-cell logistic classifier over
a local patch of one-hot SGM classes plus the RGM channel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage
from scipy.special import expit

from .errors import EmptyDataset, LengthMismatch
from .grid import CellClass, DynamicMask, Rgm, Sgm, check_same_grid

log = logging.getLogger(__name__)

N_CHANNELS = 4  # Free, Occupied, Occluded one-hot, then RGM
_P_MAX = float(np.nextafter(1.0, 0.0))
_P_MIN = float(np.finfo(float).tiny)


def structure(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return ndimage.generate_binary_structure(2, 1)
    if connectivity == 8:
        return np.ones((3, 3), bool)
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


@dataclass(frozen=True)
class HeuristicParams:
    dilation_radius: int = 2
    min_component_size: int = 2
    connectivity: int = 8

    def __post_init__(self):
        if self.dilation_radius < 0:
            raise ValueError("dilation_radius must be >= 0")
        if self.min_component_size < 1:
            raise ValueError("min_component_size must be >= 1")
        structure(self.connectivity)


def segment_heuristic(sgm: Sgm, rgm: Rgm, params: HeuristicParams = HeuristicParams()) -> DynamicMask:
    """Occupied clusters around RGM hits.

    Candidates are Occupied cells within Chebyshev distance
    ``dilation_radius`` of a hit. A connected group of candidates is dynamic
    when it has at least ``min_component_size`` cells and contains a hit.
    """
    check_same_grid(sgm, rgm)
    hits = rgm.cells.astype(bool)
    occupied = sgm.cells == CellClass.OCCUPIED
    out = np.zeros(sgm.config.shape, np.uint8)
    if hits.any():
        size = 2 * params.dilation_radius + 1
        near = ndimage.maximum_filter(hits, size=size, mode="constant", cval=False)
        candidates = occupied & near
        labels, n = ndimage.label(candidates, structure=structure(params.connectivity))
        if n:
            sizes = np.bincount(labels.ravel(), minlength=n + 1)
            with_hit = np.bincount(labels[hits & candidates], minlength=n + 1) > 0
            keep = (sizes >= params.min_component_size) & with_hit
            keep[0] = False
            out = keep[labels].astype(np.uint8)
    return DynamicMask(sgm.config, out, sgm.pose, sgm.timestamp)


# ---------------------------------------------------------------------------
# learned per-cell classifier


def n_weights(k: int) -> int:
    return (2 * k + 1) ** 2 * N_CHANNELS + 1


@dataclass(frozen=True, eq=False)
class SegModel:
    """Logistic unit over a (2k+1)^2 patch; the last weight is the bias."""

    k: int
    weights: np.ndarray
    trained_epochs: int = 0

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True).ravel()
        if w.size != n_weights(self.k):
            raise LengthMismatch(f"expected {n_weights(self.k)} weights for k={self.k}, got {w.size}")
        if not np.all(np.isfinite(w)):
            raise ValueError("model weights must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls, k: int = 5) -> "SegModel":
        return cls(k, np.zeros(n_weights(k)))

    def __eq__(self, other):
        return isinstance(other, SegModel) and self.k == other.k and np.array_equal(self.weights, other.weights)

    __hash__ = None


@dataclass(frozen=True)
class SegTrainConfig:
    learning_rate: float = 0.01
    epochs: int = 60
    # None: (#static)/(#dynamic) over the sampled training cells
    positive_class_weight: Optional[float] = None
    threshold: float = 0.5
    k: int = 5
    batch_size: int = 32
    holdout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.positive_class_weight is not None and not self.positive_class_weight > 0:
            raise ValueError("positive_class_weight must be > 0")
        if self.k < 0 or self.batch_size < 1 or not 0.0 <= self.holdout < 1.0:
            raise ValueError("invalid k, batch_size or holdout")


def _channels(sgm: Sgm, rgm: Rgm) -> np.ndarray:
    h, w = sgm.config.shape
    ch = np.zeros((h, w, N_CHANNELS))
    ch[..., 0] = sgm.cells == CellClass.FREE
    ch[..., 1] = sgm.cells == CellClass.OCCUPIED
    ch[..., 2] = sgm.cells == CellClass.OCCLUDED
    ch[..., 3] = rgm.cells
    return ch


def _padded_channels(sgm: Sgm, rgm: Rgm, k: int) -> np.ndarray:
    ch = _channels(sgm, rgm)
    pad = np.zeros((ch.shape[0] + 2 * k, ch.shape[1] + 2 * k, N_CHANNELS))
    pad[..., 2] = 1.0  # off-grid positions read as Occluded with no RGM hit
    pad[k:k + ch.shape[0], k:k + ch.shape[1]] = ch
    return pad


def feature_matrix(sgm: Sgm, rgm: Rgm, rows, cols, k: int) -> np.ndarray:
    """Features for many cells at once, one row per (row, col) pair."""
    check_same_grid(sgm, rgm)
    pad = _padded_channels(sgm, rgm, k)
    win = sliding_window_view(pad, (2 * k + 1, 2 * k + 1), axis=(0, 1))
    # win: (H, W, C, P, P) -> patch-position-major, channel-minor
    patches = win[np.asarray(rows), np.asarray(cols)]
    return patches.transpose(0, 2, 3, 1).reshape(len(patches), -1)


def extract_features(sgm: Sgm, rgm: Rgm, cell: Tuple[int, int], k: int) -> List[float]:
    """Patch features for one cell, position-major with 4 values per position."""
    r, c = cell
    if not (0 <= r < sgm.config.height and 0 <= c < sgm.config.width):
        raise ValueError(f"cell {cell} outside the grid")
    return feature_matrix(sgm, rgm, [r], [c], k)[0].tolist()


def _score(model: SegModel, x: np.ndarray) -> np.ndarray:
    return x @ model.weights[:-1] + model.weights[-1]


def forward(model: SegModel, features) -> float:
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (model.weights.size - 1,):
        raise LengthMismatch(f"expected {model.weights.size - 1} features, got {x.size}")
    return float(np.clip(expit(_score(model, x)), _P_MIN, _P_MAX))


def forward_batch(model: SegModel, x: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != model.weights.size - 1:
        raise LengthMismatch(f"expected rows of {model.weights.size - 1} features, got {x.shape}")
    return np.clip(expit(_score(model, x)), _P_MIN, _P_MAX)


def weighted_bce(w: np.ndarray, x: np.ndarray, y: np.ndarray, pos_weight: float) -> float:
    """Mean class-weighted binary cross-entropy of a logistic unit."""
    z = x @ w[:-1] + w[-1]
    # log(sigmoid(z)) = -logaddexp(0, -z); log(1 - sigmoid(z)) = -logaddexp(0, z)
    return float(np.mean(pos_weight * y * np.logaddexp(0.0, -z) + (1.0 - y) * np.logaddexp(0.0, z)))


def bce_gradient(w: np.ndarray, x: np.ndarray, y: np.ndarray, pos_weight: float) -> np.ndarray:
    z = x @ w[:-1] + w[-1]
    p = expit(z)
    g = pos_weight * y * (p - 1.0) + (1.0 - y) * p
    grad = np.empty_like(w)
    grad[:-1] = g @ x / len(y)
    grad[-1] = g.mean()
    return grad


def gradient_check(model: SegModel, sample, epsilon: float = 1e-5, pos_weight: float = 1.0) -> float:
    """Largest relative gap between the analytic and central-difference gradients."""
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    features, label = sample
    x = np.asarray(features, dtype=np.float64).reshape(1, -1)
    y = np.array([float(label)])
    w = np.array(model.weights)
    analytic = bce_gradient(w, x, y, pos_weight)
    numeric = np.empty_like(w)
    for i in range(w.size):
        wp, wm = w.copy(), w.copy()
        wp[i] += epsilon
        wm[i] -= epsilon
        numeric[i] = (weighted_bce(wp, x, y, pos_weight) - weighted_bce(wm, x, y, pos_weight)) / (2 * epsilon)
    rel = np.abs(analytic - numeric) / np.maximum(1e-12, np.abs(analytic) + np.abs(numeric))
    return float(rel.max())


def sample_cells(dataset, k: int, rng: np.random.Generator):
    """Every dynamic cell plus as many Occupied static cells per frame."""
    xs, ys = [], []
    for sgm, rgm, mask in dataset:
        check_same_grid(sgm, rgm, mask)
        dyn = np.argwhere(mask.cells == 1)
        static = np.argwhere((mask.cells == 0) & (sgm.cells == CellClass.OCCUPIED))
        if static.size == 0:
            static = np.argwhere(mask.cells == 0)
        n_static = min(len(static), max(len(dyn), 1))
        picked = static[rng.choice(len(static), size=n_static, replace=False)] if n_static else static[:0]
        cells = np.concatenate([dyn, picked])
        if len(cells) == 0:
            continue
        xs.append(feature_matrix(sgm, rgm, cells[:, 0], cells[:, 1], k))
        ys.append(np.concatenate([np.ones(len(dyn)), np.zeros(len(picked))]))
    if not xs:
        return np.zeros((0, n_weights(k) - 1)), np.zeros(0)
    return np.concatenate(xs), np.concatenate(ys)


def train(dataset: Sequence[Tuple[Sgm, Rgm, DynamicMask]], cfg: SegTrainConfig = SegTrainConfig(),
          on_epoch=None) -> SegModel:
    """Minibatch SGD on the class-weighted cross-entropy.

    10% of the sampled cells (``cfg.holdout``) are held out; the weights with
    the lowest held-out loss are returned. ``on_epoch(epoch, train_loss,
    heldout_loss)`` is called after every epoch.
    """
    if len(dataset) == 0:
        raise EmptyDataset("segmentation training needs at least one frame")
    rng = np.random.default_rng(cfg.seed)
    x, y = sample_cells(dataset, cfg.k, rng)
    if len(y) == 0:
        raise EmptyDataset("no trainable cells in the dataset")

    order = rng.permutation(len(y))
    n_hold = int(round(cfg.holdout * len(y)))
    if cfg.holdout > 0:
        n_hold = min(max(n_hold, 1), len(y) - 1) if len(y) > 1 else 0
    hold, fit = order[:n_hold], order[n_hold:]
    if n_hold == 0:
        hold = fit
    x_fit, y_fit, x_hold, y_hold = x[fit], y[fit], x[hold], y[hold]

    if cfg.positive_class_weight is None:
        n_pos = y_fit.sum()
        pos_weight = float((len(y_fit) - n_pos) / n_pos) if n_pos > 0 else 1.0
        pos_weight = pos_weight if pos_weight > 0 else 1.0
    else:
        pos_weight = cfg.positive_class_weight

    w = np.zeros(n_weights(cfg.k))
    best_w, best_loss, best_epoch = w.copy(), weighted_bce(w, x_hold, y_hold, pos_weight), 0
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(len(y_fit))
        for start in range(0, len(perm), cfg.batch_size):
            b = perm[start:start + cfg.batch_size]
            w -= cfg.learning_rate * bce_gradient(w, x_fit[b], y_fit[b], pos_weight)
        held = weighted_bce(w, x_hold, y_hold, pos_weight)
        if on_epoch is not None:
            on_epoch(epoch, weighted_bce(w, x_fit, y_fit, pos_weight), held)
        if held < best_loss:
            best_w, best_loss, best_epoch = w.copy(), held, epoch
    log.debug("best held-out loss %.6f at epoch %d", best_loss, best_epoch)
    return SegModel(cfg.k, best_w, trained_epochs=cfg.epochs)


def segment_learned(model: SegModel, sgm: Sgm, rgm: Rgm, threshold: float = 0.5) -> DynamicMask:
    """Threshold the classifier on Occupied cells; everything else is static."""
    check_same_grid(sgm, rgm)
    out = np.zeros(sgm.config.shape, np.uint8)
    occ = np.argwhere(sgm.cells == CellClass.OCCUPIED)
    if len(occ):
        p = forward_batch(model, feature_matrix(sgm, rgm, occ[:, 0], occ[:, 1], model.k))
        on = occ[p >= threshold]
        out[on[:, 0], on[:, 1]] = 1
    return DynamicMask(sgm.config, out, sgm.pose, sgm.timestamp)
