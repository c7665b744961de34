"""Histogram-based gradient-boosted regression trees.

Squared-error boosting: after each round the per-row gradient is
(prediction - target) and the hessian is identically 1, so hessian sums
are row counts. Trees grow depth-wise (level order). Split finding is
done on quantized features: each feature is bucketed once into at most
`n_bins` quantile bins, per-node gradient/hessian histograms are
accumulated with bincount, and candidate splits are scored by

    gain = 1/2 [ GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda) ]

taking the first (lowest feature, then lowest bin) maximizer with both
children at or above `min_child_weight` hessian mass. Leaves predict
-G/(H+lambda) scaled by the round's shrinkage, which decays from
`eta_base` toward `eta_min` on a slow Gaussian-in-iteration schedule.

Thresholds stored in the tree are the raw bin edges, so prediction on
unbinned values routes rows exactly as binned training did: value <=
edges[b] if and only if bin(value) <= b.

Validation MAE is monitored every round; training stops once it has
failed to improve for `early_stopping_rounds` rounds, and the returned
ensemble is truncated at the best round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import Dataset
from .errors import ValidationError


@dataclass(frozen=True)
class EtaSchedule:
    """Shrinkage decay knobs; defaults decay 0.5 -> 0.2 over ~10^5 rounds."""

    eta_base: float = 0.5
    eta_min: float = 0.2
    max_iter_decay: int = 100_000

    def __post_init__(self) -> None:
        if not (
            math.isfinite(self.eta_base)
            and math.isfinite(self.eta_min)
            and 0.0 < self.eta_min <= self.eta_base <= 1.0
        ):
            raise ValidationError(
                f"eta: need 0 < eta_min <= eta_base <= 1, got "
                f"({self.eta_base!r}, {self.eta_min!r})"
            )
        if self.max_iter_decay < 1:
            raise ValidationError(
                f"max_iter_decay: must be >= 1, got {self.max_iter_decay}"
            )


def eta_decay(iteration: int, schedule: EtaSchedule = EtaSchedule()) -> float:
    """Learning rate for a zero-based boosting round.

    eta_min + (eta_base - eta_min) * exp(-((iteration+1)/8)^2 / max_iter_decay)

    Starts a hair under eta_base and decays monotonically toward
    eta_min, which it approaches (and, in floating point, eventually
    reaches) as the exponent underflows.
    """
    if iteration < 0:
        raise ValidationError(f"iteration: must be >= 0, got {iteration}")
    x = (iteration + 1) / 8.0
    return schedule.eta_min + (schedule.eta_base - schedule.eta_min) * math.exp(
        -(x * x) / schedule.max_iter_decay
    )


@dataclass(frozen=True)
class GbdtConfig:
    max_depth: int = 5
    num_rounds: int = 500
    early_stopping_rounds: int | None = None  # None: monitor but never stop early
    n_bins: int = 256
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    eta: EtaSchedule = EtaSchedule()
    eval_metric: str = "mae"

    def __post_init__(self) -> None:
        if not (1 <= self.max_depth <= 32):
            raise ValidationError(f"max_depth: must lie in [1, 32], got {self.max_depth}")
        if self.num_rounds < 1:
            raise ValidationError(f"num_rounds: must be >= 1, got {self.num_rounds}")
        if self.early_stopping_rounds is not None and self.early_stopping_rounds < 1:
            raise ValidationError(
                f"early_stopping_rounds: must be >= 1 or None, "
                f"got {self.early_stopping_rounds}"
            )
        if not (2 <= self.n_bins <= 1024):
            raise ValidationError(f"n_bins: must lie in [2, 1024], got {self.n_bins}")
        for name in ("reg_lambda", "min_child_weight"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"{name}: must be >= 0 and finite, got {v!r}")
        if self.eval_metric != "mae":
            raise ValidationError(
                f"eval_metric: only 'mae' is supported, got {self.eval_metric!r}"
            )


class BinnedMatrix(NamedTuple):
    """Quantized feature matrix: per-feature ascending edges plus codes.

    codes[i, f] counts the edges of feature f strictly below row i's
    value, so code b covers the half-open slab (edges[b-1], edges[b]].
    """

    edges: list[np.ndarray]
    codes: np.ndarray


def quantize_features(features: np.ndarray, n_bins: int) -> BinnedMatrix:
    """Bucket each feature into at most n_bins quantile bins.

    Edges are deduplicated quantiles with any edge at or above the
    column maximum dropped (it could never separate rows). A constant
    column gets no edges and is never split on. When a column has at
    most n_bins distinct values every distinct value lands in its own
    bin, so binned split finding is exact for it.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError(f"features: expected a non-empty 2-D array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("features: all values must be finite")
    if not (2 <= n_bins <= 1024):
        raise ValidationError(f"n_bins: must lie in [2, 1024], got {n_bins}")
    quantile_points = np.arange(1, n_bins) / n_bins
    dtype = np.uint8 if n_bins <= 256 else np.uint16
    codes = np.empty(X.shape, dtype=dtype)
    edges: list[np.ndarray] = []
    for f in range(X.shape[1]):
        col = X[:, f]
        e = np.unique(np.quantile(col, quantile_points))
        e = e[e < col.max()]
        codes[:, f] = np.searchsorted(e, col, side="left")
        edges.append(e)
    return BinnedMatrix(edges, codes)


class NodeHistogram(NamedTuple):
    """Per-(feature, bin) gradient and hessian sums for one node."""

    grad_sums: np.ndarray  # (n_features, n_bins)
    hess_sums: np.ndarray


class SplitDecision(NamedTuple):
    feature: int
    bin_index: int  # split sends bin <= bin_index left; threshold = edges[feature][bin_index]
    gain: float


def best_split(
    hist: NodeHistogram,
    reg_lambda: float = 1.0,
    min_child_weight: float = 1.0,
    candidate_mask: np.ndarray | None = None,
) -> SplitDecision | None:
    """Highest-gain split of one node's histogram, or None.

    Ties go to the lowest feature index, then the lowest bin. Splits
    leaving a child with hessian mass below `min_child_weight` (or
    empty) are ineligible. Returns None when no eligible split has
    strictly positive gain. `candidate_mask`, shape (n_features,
    n_bins - 1), can further restrict which bins are usable edges.
    """
    g = np.asarray(hist.grad_sums, dtype=np.float64)
    h = np.asarray(hist.hess_sums, dtype=np.float64)
    if g.ndim != 2 or g.shape != h.shape:
        raise ValidationError(
            f"histogram: grad/hess shapes must match and be 2-D, got {g.shape} vs {h.shape}"
        )
    if not (math.isfinite(reg_lambda) and reg_lambda >= 0):
        raise ValidationError(f"reg_lambda: must be >= 0 and finite, got {reg_lambda!r}")
    if not (math.isfinite(min_child_weight) and min_child_weight >= 0):
        raise ValidationError(
            f"min_child_weight: must be >= 0 and finite, got {min_child_weight!r}"
        )
    n_features, n_bins = g.shape
    if n_bins < 2:
        return None
    grad_left = np.cumsum(g, axis=1)
    hess_left = np.cumsum(h, axis=1)
    # totals from the same accumulation keep right sums exactly zero
    # past the last populated bin
    grad_total = grad_left[:, -1:]
    hess_total = hess_left[:, -1:]
    gl, hl = grad_left[:, :-1], hess_left[:, :-1]
    gr, hr = grad_total - gl, hess_total - hl
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (
            gl * gl / (hl + reg_lambda)
            + gr * gr / (hr + reg_lambda)
            - grad_total * grad_total / (hess_total + reg_lambda)
        )
    eligible = (hl >= min_child_weight) & (hr >= min_child_weight) & (hl > 0) & (hr > 0)
    if candidate_mask is not None:
        eligible = eligible & candidate_mask
    gain = np.where(eligible, gain, -np.inf)
    flat = int(np.argmax(gain))  # argmax takes the first maximum: lowest feature, lowest bin
    f, b = divmod(flat, n_bins - 1)
    top = float(gain[f, b])
    if not top > 0.0:
        return None
    return SplitDecision(f, b, top)


@dataclass
class Tree:
    """One regression tree in flat-array form.

    feature[i] is -1 at leaves (threshold/left/right unused there, with
    threshold stored as 0.0); value[i] is the leaf contribution with
    shrinkage already folded in, 0.0 at internal nodes.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        """Longest root-to-leaf edge count."""
        def walk(i: int) -> int:
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(int(self.left[i])), walk(int(self.right[i])))

        return walk(0)

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Leaf contribution per row of a raw (unbinned) feature matrix."""
        X = np.asarray(features, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            live = f >= 0
            if not live.any():
                break
            rows = np.nonzero(live)[0]
            at = node[rows]
            go_left = X[rows, f[live]] <= self.threshold[at]
            node[rows] = np.where(go_left, self.left[at], self.right[at])
        return self.value[node]


class RoundRecord(NamedTuple):
    round_index: int
    eta: float
    train_mae: float
    val_mae: float


@dataclass
class TreeEnsemble:
    """A trained boosted ensemble, truncated at its best validation round.

    `history` keeps every trained round including the discarded tail;
    `etas` aligns with the kept trees.
    """

    base_score: float
    trees: list[Tree]
    etas: list[float]
    n_features: int
    best_round: int
    history: list[RoundRecord] = field(default_factory=list)

    def predict(self, features: np.ndarray) -> np.ndarray:
        out = np.full(features.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            out += tree.predict(features)
        return out


def predict_gbdt(model: TreeEnsemble, features: np.ndarray) -> np.ndarray | float:
    """Ensemble prediction for one feature row (returns float) or a matrix."""
    X = np.asarray(features, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValidationError(
            f"features: expected {model.n_features} columns, got shape {X.shape}"
        )
    out = model.predict(X)
    return float(out[0]) if single else out


def _grow_tree(
    codes: np.ndarray,
    edges: list[np.ndarray],
    grad: np.ndarray,
    config: GbdtConfig,
    eta: float,
) -> tuple[Tree, np.ndarray]:
    """One depth-wise tree on binned features; also returns each row's leaf."""
    n_rows, n_features = codes.shape
    n_bins = config.n_bins
    lam = config.reg_lambda

    # only bins backed by a real edge are usable split candidates
    candidate_mask = np.zeros((n_features, n_bins - 1), dtype=bool)
    for f in range(n_features):
        candidate_mask[f, : len(edges[f])] = True

    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    g_root = float(grad.sum())
    value = [-g_root / (n_rows + lam) * eta]

    node_of_row = np.zeros(n_rows, dtype=np.int64)
    open_nodes = [0]
    for depth in range(config.max_depth):
        if not open_nodes:
            break
        slot = np.full(len(feature), -1, dtype=np.int64)
        slot[open_nodes] = np.arange(len(open_nodes))
        k_of_row = slot[node_of_row]
        rows = np.nonzero(k_of_row >= 0)[0]
        k_rows = k_of_row[rows]
        n_open = len(open_nodes)

        grad_hist = np.empty((n_open, n_features, n_bins), dtype=np.float64)
        hess_hist = np.empty((n_open, n_features, n_bins), dtype=np.float64)
        key_base = k_rows * n_bins
        g_rows = grad[rows]
        size = n_open * n_bins
        for f in range(n_features):
            key = key_base + codes[rows, f]
            grad_hist[:, f, :] = np.bincount(key, weights=g_rows, minlength=size).reshape(
                n_open, n_bins
            )
            hess_hist[:, f, :] = np.bincount(key, minlength=size).reshape(n_open, n_bins)

        split_feature = np.full(n_open, -1, dtype=np.int64)
        split_bin = np.zeros(n_open, dtype=np.int64)
        left_child = np.zeros(n_open, dtype=np.int64)
        right_child = np.zeros(n_open, dtype=np.int64)
        next_open: list[int] = []
        for k, node_id in enumerate(open_nodes):
            decision = best_split(
                NodeHistogram(grad_hist[k], hess_hist[k]),
                lam,
                config.min_child_weight,
                candidate_mask,
            )
            if decision is None:
                continue  # stays a leaf; its value was set at creation
            f, b, _ = decision
            gl = float(grad_hist[k, f, : b + 1].sum())
            hl = float(hess_hist[k, f, : b + 1].sum())
            gt = float(grad_hist[k, f].sum())
            ht = float(hess_hist[k, f].sum())
            gr, hr = gt - gl, ht - hl
            lid, rid = len(feature), len(feature) + 1
            for child_value in (-gl / (hl + lam) * eta, -gr / (hr + lam) * eta):
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(child_value)
            feature[node_id] = f
            threshold[node_id] = float(edges[f][b])
            left[node_id] = lid
            right[node_id] = rid
            value[node_id] = 0.0
            split_feature[k] = f
            split_bin[k] = b
            left_child[k] = lid
            right_child[k] = rid
            if depth + 1 < config.max_depth:
                next_open.extend((lid, rid))

        did_split = split_feature[k_rows] >= 0
        moving = rows[did_split]
        k_moving = k_rows[did_split]
        bin_values = codes[moving, split_feature[k_moving]]
        node_of_row[moving] = np.where(
            bin_values <= split_bin[k_moving],
            left_child[k_moving],
            right_child[k_moving],
        )
        open_nodes = next_open

    tree = Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=np.asarray(value, dtype=np.float64),
    )
    return tree, node_of_row


def train_gbdt(train: Dataset, val: Dataset, config: GbdtConfig) -> TreeEnsemble:
    """Boost squared-error trees on `train`, monitoring MAE on `val`.

    The base score is the train-target mean. Stops early once val MAE
    has not improved for `early_stopping_rounds` rounds (never, when
    that is None) and truncates the ensemble at the best round.
    """
    if len(train) == 0:
        raise ValidationError("train: need at least one row")
    if len(val) == 0:
        raise ValidationError("val: need at least one row")
    if train.features.shape[1] != val.features.shape[1]:
        raise ValidationError(
            f"val: feature arity {val.features.shape[1]} does not match "
            f"train arity {train.features.shape[1]}"
        )
    binned = quantize_features(train.features, config.n_bins)
    y = train.targets
    base = float(np.mean(y))
    pred = np.full(len(y), base, dtype=np.float64)
    val_pred = np.full(len(val), base, dtype=np.float64)
    patience = (
        config.early_stopping_rounds
        if config.early_stopping_rounds is not None
        else config.num_rounds
    )

    trees: list[Tree] = []
    etas: list[float] = []
    history: list[RoundRecord] = []
    best_val = math.inf
    best_round = 0
    for r in range(config.num_rounds):
        eta = eta_decay(r, config.eta)
        grad = pred - y
        tree, leaf_of_row = _grow_tree(binned.codes, binned.edges, grad, config, eta)
        pred = pred + tree.value[leaf_of_row]
        val_pred = val_pred + tree.predict(val.features)
        train_mae = float(np.mean(np.abs(pred - y)))
        val_mae = float(np.mean(np.abs(val_pred - val.targets)))
        trees.append(tree)
        etas.append(eta)
        history.append(RoundRecord(r, eta, train_mae, val_mae))
        if val_mae < best_val:
            best_val = val_mae
            best_round = r
        if r - best_round >= patience:
            break
    keep = best_round + 1
    return TreeEnsemble(
        base_score=base,
        trees=trees[:keep],
        etas=etas[:keep],
        n_features=train.features.shape[1],
        best_round=best_round,
        history=history,
    )
