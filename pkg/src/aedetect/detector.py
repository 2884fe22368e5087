"""Anomaly scoring, percentile thresholds, flagging, and latent export.

Score kinds: per-snapshot MSE, per-window MSE, and Mahalanobis distance of
the raw residual under the frozen training covariance. Thresholds are linear
interpolation percentiles of healthy training scores; flags use strict >.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LeakageError, ValidationError

SCORE_KINDS = ("mse_point", "mse_window", "mahalanobis")


@dataclass(frozen=True, eq=False)
class ScoreSeries:
    """Non-negative anomaly scores aligned to sample or window-end indices.

    `from_training` marks scores computed on the healthy training partition;
    only such series may fit a threshold.
    """

    scores: np.ndarray
    indices: np.ndarray
    kind: str
    from_training: bool = False

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        indices = np.asarray(self.indices, dtype=np.int64)
        if self.kind not in SCORE_KINDS:
            raise ValidationError(f"score kind must be one of {SCORE_KINDS}")
        if scores.shape != indices.shape or scores.ndim != 1:
            raise ValidationError("scores and indices must be matching 1-D arrays")
        if scores.size and (not np.isfinite(scores).all() or scores.min() < 0.0):
            raise ValidationError("scores must be finite and non-negative")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "indices", indices)

    def __len__(self) -> int:
        return self.scores.size


@dataclass(frozen=True)
class ThresholdSpec:
    """Percentile level alpha in (0, 100] and the fitted cut value tau."""

    alpha: float
    tau: float
    kind: str
    fitted_on: int

    def __post_init__(self):
        if not 0.0 < self.alpha <= 100.0:
            raise ValidationError("alpha must lie in (0, 100]")
        if self.kind not in SCORE_KINDS:
            raise ValidationError(f"score kind must be one of {SCORE_KINDS}")


def _default_indices(n: int, indices) -> np.ndarray:
    if indices is None:
        return np.arange(n, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.shape != (n,):
        raise ValidationError(f"expected {n} indices, got shape {indices.shape}")
    return indices


def score_pointwise_mse(
    model, x: np.ndarray, indices=None, from_training: bool = False
) -> ScoreSeries:
    """Per-row mean squared residual of the dense reconstruction."""
    x = np.asarray(x, dtype=np.float64)
    xhat, _ = model.forward(x)
    r = xhat - x
    scores = np.mean(r * r, axis=1)
    return ScoreSeries(scores, _default_indices(x.shape[0], indices),
                       "mse_point", from_training)


def score_window_mse(
    model, windows: np.ndarray, indices=None, from_training: bool = False
) -> ScoreSeries:
    """Per-window mean squared residual over all T*d entries."""
    w = np.asarray(windows, dtype=np.float64)
    what, _ = model.forward(w)
    r = what - w
    scores = np.mean(r * r, axis=(1, 2))
    return ScoreSeries(scores, _default_indices(w.shape[0], indices),
                       "mse_window", from_training)


def score_mahalanobis(
    model, cov, x: np.ndarray, indices=None, from_training: bool = False
) -> ScoreSeries:
    """D = sqrt(r' sigma^-1 r) per row, using the raw (uncentered) residual."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != cov.d:
        raise ValidationError(
            f"input dimension {x.shape[1]} != covariance dimension {cov.d}"
        )
    xhat, _ = model.forward(x)
    r = xhat - x
    quad = np.einsum("ij,jk,ik->i", r, cov.sigma_inv, r)
    # rounding can push the quadratic form infinitesimally below zero
    scores = np.sqrt(np.maximum(quad, 0.0))
    return ScoreSeries(scores, _default_indices(x.shape[0], indices),
                       "mahalanobis", from_training)


def percentile_linear(sorted_scores: np.ndarray, alpha: float) -> float:
    """Linear-interpolation percentile of an ascending score vector: for
    rank h = (n-1) * alpha / 100, interpolate between the neighbours of h."""
    n = sorted_scores.size
    h = (n - 1) * alpha / 100.0
    j = math.floor(h)
    if j + 1 >= n:
        return float(sorted_scores[n - 1])
    frac = h - j
    return float(sorted_scores[j] + frac * (sorted_scores[j + 1] - sorted_scores[j]))


def fit_threshold(train_scores: ScoreSeries, alpha: float = 95.0) -> ThresholdSpec:
    """Percentile threshold over healthy training scores."""
    if not train_scores.from_training:
        raise LeakageError(
            "thresholds may only be fitted on healthy training scores"
        )
    if len(train_scores) == 0:
        raise ValidationError("cannot fit a threshold on an empty score set")
    if not 0.0 < alpha <= 100.0:
        raise ValidationError(f"alpha must lie in (0, 100], got {alpha}")
    tau = percentile_linear(np.sort(train_scores.scores), alpha)
    return ThresholdSpec(alpha, tau, train_scores.kind, len(train_scores))


def detect(scores: ScoreSeries, spec: ThresholdSpec) -> np.ndarray:
    """Boolean flags: score strictly above tau."""
    if scores.kind != spec.kind:
        raise ValidationError(
            f"score kind {scores.kind!r} does not match threshold {spec.kind!r}"
        )
    return scores.scores > spec.tau


def extract_latent(model, x: np.ndarray) -> np.ndarray:
    """Encoder output per item, shape (batch, latent_width)."""
    return model.encode(np.asarray(x, dtype=np.float64))
