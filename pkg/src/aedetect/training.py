"""Training protocol: batched Adam epochs, validation monitoring, early
stopping with best-weight restore, plateau LR reduction, and the Mahalanobis
warm-up / covariance estimation procedure.

The Mahalanobis path trains with plain MSE for `warmup_epochs` epochs, then
estimates the residual covariance once on the training residuals, freezes it,
and continues with the whitened-residual loss. Early stopping and the plateau
scheduler watch one validation stream across the switch.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import LeakageError, NumericError, ValidationError
from .neuralnet import Adam, EarlyStopping, ReduceLROnPlateau

LOSS_KINDS = ("mse", "mahalanobis")


@dataclass
class TrainConfig:
    max_epochs: int = 25
    learning_rate: float = 3e-3
    batch_size: int = 256
    es_patience: int = 10
    plateau_patience: int = 5
    plateau_factor: float = 0.2
    loss: str = "mse"
    warmup_epochs: int = 5  # mahalanobis only
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ValidationError(f"loss must be one of {LOSS_KINDS}")
        if self.max_epochs < 0:
            raise ValidationError("max_epochs must be >= 0")
        positive = {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "es_patience": self.es_patience,
            "plateau_patience": self.plateau_patience,
            "plateau_factor": self.plateau_factor,
            "warmup_epochs": self.warmup_epochs,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValidationError(f"{name} must be positive, got {value}")


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Shrunk residual covariance with precomputed inverse and inverse sqrt."""

    sigma: np.ndarray  # (d, d), already includes the shrinkage term
    sigma_inv: np.ndarray
    sigma_inv_sqrt: np.ndarray
    epsilon: float

    @classmethod
    def from_sigma(cls, sigma: np.ndarray, epsilon: float) -> "CovarianceModel":
        """Build from an already-shrunk symmetric covariance."""
        sigma = np.asarray(sigma, dtype=np.float64)
        inv_sqrt = matrix_inverse_sqrt(sigma, 0.0)
        return cls(sigma, inv_sqrt @ inv_sqrt, inv_sqrt, epsilon)

    @property
    def d(self) -> int:
        return self.sigma.shape[0]


@dataclass
class TrainReport:
    """Per-epoch history; lengths equal the epochs actually run."""

    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = "max_epochs"
    warmup_epochs: int = 0  # epochs trained with MSE before the loss switch

    @property
    def epochs_run(self) -> int:
        return len(self.val_losses)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "learning_rate"])
            rows = zip(self.train_losses, self.val_losses, self.learning_rates)
            for epoch, (tr, va, lr) in enumerate(rows, start=1):
                writer.writerow([epoch, repr(tr), repr(va), repr(lr)])


def mse_loss(x: np.ndarray, xhat: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared residual over every entry; gradient wrt xhat.

    For (batch, d) inputs this is the batch mean of per-item mean squared
    errors; for (batch, T, d) windows it averages over all T*d entries, which
    equals flattening each window first.
    """
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise ValidationError(f"shape mismatch {x.shape} vs {xhat.shape}")
    r = xhat - x
    loss = float(np.mean(r * r))
    grad = (2.0 / r.size) * r
    return loss, grad


def window_mse_loss(x: np.ndarray, xhat: np.ndarray) -> tuple[float, np.ndarray]:
    """Window reconstruction loss; identical to mse_loss on the flattened
    (batch, T*d) view."""
    return mse_loss(x, xhat)


def matrix_inverse_sqrt(sigma: np.ndarray, epsilon: float) -> np.ndarray:
    """Inverse square root of sigma + epsilon*I via symmetric eigendecomposition.

    The result M satisfies M @ M @ (sigma + epsilon*I) ~= I.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValidationError("covariance must be square")
    if not np.allclose(sigma, sigma.T, rtol=0.0, atol=1e-10):
        raise ValidationError("covariance must be symmetric")
    shrunk = sigma + epsilon * np.eye(sigma.shape[0])
    eigvals, eigvecs = np.linalg.eigh(shrunk)
    if np.any(eigvals <= 0.0):
        raise NumericError(
            f"covariance not positive definite after shrinkage "
            f"(min eigenvalue {eigvals.min():.3e})"
        )
    return (eigvecs / np.sqrt(eigvals)) @ eigvecs.T


def mahalanobis_loss(
    x: np.ndarray, xhat: np.ndarray, cov: CovarianceModel
) -> tuple[float, np.ndarray]:
    """Batch mean of the whitened residual norm ||(xhat - x) @ sigma^-1/2||.

    Gradient wrt xhat is sigma^-1 r / (N * ||r sigma^-1/2||) per item;
    zero-residual items contribute zero gradient.
    """
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape or x.ndim != 2:
        raise ValidationError("mahalanobis loss expects matching (batch, d) arrays")
    if x.shape[1] != cov.d:
        raise ValidationError(
            f"residual dimension {x.shape[1]} != covariance dimension {cov.d}"
        )
    r = xhat - x
    white = r @ cov.sigma_inv_sqrt
    norms = np.sqrt(np.sum(white * white, axis=1))
    loss = float(np.mean(norms))
    n = r.shape[0]
    safe = np.where(norms > 0.0, norms, 1.0)
    grad = (r @ cov.sigma_inv) / (n * safe[:, None])
    grad[norms == 0.0] = 0.0
    return loss, grad


def estimate_residual_covariance(
    model, healthy: np.ndarray, labels: np.ndarray | None = None
) -> CovarianceModel:
    """Sample covariance (divisor N-1) of reconstruction residuals on healthy
    training rows, shrunk by epsilon*I with epsilon = 1e-6 * trace/d."""
    x = np.asarray(healthy, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("covariance estimation expects (batch, d) snapshots")
    if labels is not None and np.asarray(labels, dtype=bool).any():
        raise LeakageError("covariance estimation received fault-labelled rows")
    n, d = x.shape
    if n <= d:
        raise ValidationError(
            f"need more than d={d} rows to estimate covariance, got {n}"
        )
    xhat, _ = model.forward(x)
    r = xhat - x
    centered = r - r.mean(axis=0)
    sample = (centered.T @ centered) / (n - 1)
    sample = 0.5 * (sample + sample.T)  # force bit-exact symmetry
    epsilon = 1e-6 * float(np.trace(sample)) / d
    if epsilon <= 0.0:
        epsilon = 1e-12  # zero-variance residuals: keep the matrix invertible
    shrunk = sample + epsilon * np.eye(d)
    inv_sqrt = matrix_inverse_sqrt(sample, epsilon)
    return CovarianceModel(shrunk, inv_sqrt @ inv_sqrt, inv_sqrt, epsilon)


def _snapshot(model) -> list[np.ndarray]:
    return [p.copy() for p in model.parameters()]


def _restore(model, weights: list[np.ndarray]) -> None:
    for p, w in zip(model.parameters(), weights):
        p[...] = w


def _epoch_loss(model, items: np.ndarray, loss_fn, batch_size: int) -> float:
    """Full-dataset loss without parameter updates."""
    total = 0.0
    for lo in range(0, items.shape[0], batch_size):
        batch = items[lo : lo + batch_size]
        xhat, _ = model.forward(batch)
        loss, _ = loss_fn(batch, xhat)
        total += loss * batch.shape[0]
    return total / items.shape[0]


def train(
    model,
    train_items: np.ndarray,
    val_items: np.ndarray,
    config: TrainConfig,
    train_labels: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
) -> tuple[object, TrainReport, CovarianceModel | None]:
    """Run the full training protocol; returns the trained model (best
    weights restored), the per-epoch report, and the frozen residual
    covariance when the Mahalanobis loss is active.

    Items are snapshots (batch, d) for the dense model or windows
    (batch, T, d) for the sequence model; both must be healthy-only, which is
    enforced whenever label vectors are passed.
    """
    train_items = np.asarray(train_items, dtype=np.float64)
    val_items = np.asarray(val_items, dtype=np.float64)
    for name, labels in (("train", train_labels), ("validation", val_labels)):
        if labels is not None and np.asarray(labels, dtype=bool).any():
            raise LeakageError(f"{name} items contain fault-labelled samples")
    if train_items.shape[0] == 0 or val_items.shape[0] == 0:
        raise ValidationError("training and validation sets must be non-empty")

    use_mahalanobis = config.loss == "mahalanobis"
    if use_mahalanobis and train_items.ndim != 2:
        raise ValidationError("mahalanobis loss applies to the dense model only")

    optimizer = Adam(model.parameters(), config.learning_rate)
    stopper = EarlyStopping(config.es_patience)
    plateau = ReduceLROnPlateau(config.plateau_patience, config.plateau_factor)
    rng = np.random.default_rng(config.seed)
    report = TrainReport()
    cov: CovarianceModel | None = None
    best_weights = None
    n = train_items.shape[0]

    for epoch in range(1, config.max_epochs + 1):
        in_warmup = use_mahalanobis and epoch <= config.warmup_epochs
        if use_mahalanobis and not in_warmup and cov is None:
            cov = estimate_residual_covariance(model, train_items)
            report.warmup_epochs = epoch - 1

        if use_mahalanobis and not in_warmup:
            loss_fn = lambda x, xhat: mahalanobis_loss(x, xhat, cov)
        else:
            loss_fn = mse_loss

        lr_this_epoch = optimizer.learning_rate
        perm = rng.permutation(n)
        epoch_total = 0.0
        for lo in range(0, n, config.batch_size):
            batch = train_items[perm[lo : lo + config.batch_size]]
            xhat, _ = model.forward(batch)
            loss, grad = loss_fn(batch, xhat)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            epoch_total += loss * batch.shape[0]
            model.backward(grad)
            optimizer.step(model.gradients())

        val_loss = _epoch_loss(model, val_items, loss_fn, config.batch_size)
        if not np.isfinite(val_loss):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        report.train_losses.append(epoch_total / n)
        report.val_losses.append(val_loss)
        report.learning_rates.append(lr_this_epoch)

        # both callbacks watch the one validation stream; after the warm-up
        # switch the stream changes scale, which typically pins the best
        # epoch inside the warm-up (the callbacks do not special-case this)
        if val_loss < stopper.best:
            best_weights = _snapshot(model)
        should_stop = stopper.update(val_loss, epoch)
        if plateau.update(val_loss):
            optimizer.learning_rate *= config.plateau_factor
        if should_stop:
            report.stop_reason = "early_stop"
            break

    # mahalanobis runs shorter than the warm-up still need a covariance
    if use_mahalanobis and cov is None and report.epochs_run > 0:
        cov = estimate_residual_covariance(model, train_items)
        report.warmup_epochs = report.epochs_run

    if best_weights is not None:
        _restore(model, best_weights)
        report.best_epoch = stopper.best_epoch
    else:
        report.best_epoch = report.epochs_run
    return model, report, cov
