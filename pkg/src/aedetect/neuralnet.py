"""Minimal neural-network core: dense and LSTM layers with hand-derived
backward passes, Adam, and the two training callbacks.

Everything is float64. Layers keep the forward cache on the instance, so one
layer object serves one forward/backward pair at a time; parameters are plain
numpy arrays updated in place by the optimizer.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ValidationError


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values in {what}")


class DenseLayer:
    """y = act(x @ W.T + b) with act in {tanh, linear}; W is (out, in)."""

    def __init__(self, in_size: int, out_size: int, activation: str = "tanh",
                 rng: np.random.Generator | None = None):
        if activation not in ("tanh", "linear"):
            raise ValidationError(f"unknown activation {activation!r}")
        self.in_size = in_size
        self.out_size = out_size
        self.activation = activation
        rng = rng or np.random.default_rng(0)
        self.W = glorot_uniform(rng, in_size, out_size, (out_size, in_size))
        self.b = np.zeros(out_size)
        self.grad_W = np.zeros_like(self.W)
        self.grad_b = np.zeros_like(self.b)
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_size:
            raise ValidationError(
                f"dense layer expects (batch, {self.in_size}), got {x.shape}"
            )
        z = x @ self.W.T + self.b
        y = np.tanh(z) if self.activation == "tanh" else z
        _check_finite(y, "dense forward")
        self._cache = (x, y)
        return y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, y = self._cache
        if self.activation == "tanh":
            dz = grad_out * (1.0 - y * y)
        else:
            dz = grad_out
        self.grad_W = dz.T @ x
        self.grad_b = dz.sum(axis=0)
        return dz @ self.W

    def parameters(self):
        return [self.W, self.b]

    def gradients(self):
        return [self.grad_W, self.grad_b]


# gate slot order inside the stacked LSTM weight matrices
GATE_ORDER = ("input", "forget", "candidate", "output")


class LstmLayer:
    """Standard LSTM over (batch, T, in) inputs.

    Per step: i = sig(x Wi' + h Ui' + bi), f, o likewise, g = tanh(...),
    c <- f*c + i*g, h <- o*tanh(c). Weights are stored stacked as
    Wx (4u, in), Wh (4u, u), b (4u,) in GATE_ORDER; forget bias starts at 1.
    """

    def __init__(self, in_size: int, units: int, return_sequences: bool,
                 rng: np.random.Generator | None = None):
        self.in_size = in_size
        self.units = units
        self.return_sequences = return_sequences
        rng = rng or np.random.default_rng(0)
        self.Wx = glorot_uniform(rng, in_size, units, (4 * units, in_size))
        self.Wh = glorot_uniform(rng, units, units, (4 * units, units))
        self.b = np.zeros(4 * units)
        self.b[units : 2 * units] = 1.0  # forget gate
        self.grad_Wx = np.zeros_like(self.Wx)
        self.grad_Wh = np.zeros_like(self.Wh)
        self.grad_b = np.zeros_like(self.b)
        self._cache = None

    def _gate(self, name: str) -> slice:
        k = GATE_ORDER.index(name)
        return slice(k * self.units, (k + 1) * self.units)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.in_size:
            raise ValidationError(
                f"lstm layer expects (batch, T, {self.in_size}), got {x.shape}"
            )
        batch, steps, _ = x.shape
        u = self.units
        xp = x @ self.Wx.T  # (batch, T, 4u), input contribution for all steps
        h = np.zeros((batch, u))
        c = np.zeros((batch, u))
        gates = np.empty((batch, steps, 4 * u))
        cells = np.empty((batch, steps, u))
        tanh_c = np.empty((batch, steps, u))
        hs = np.empty((batch, steps, u))
        h_prev = np.empty((batch, steps, u))
        c_prev = np.empty((batch, steps, u))
        for t in range(steps):
            h_prev[:, t] = h
            c_prev[:, t] = c
            a = xp[:, t] + h @ self.Wh.T + self.b
            i = sigmoid(a[:, : u])
            f = sigmoid(a[:, u : 2 * u])
            g = np.tanh(a[:, 2 * u : 3 * u])
            o = sigmoid(a[:, 3 * u :])
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            gates[:, t, : u] = i
            gates[:, t, u : 2 * u] = f
            gates[:, t, 2 * u : 3 * u] = g
            gates[:, t, 3 * u :] = o
            cells[:, t] = c
            tanh_c[:, t] = tc
            hs[:, t] = h
        _check_finite(hs, "lstm forward")
        self._cache = (x, gates, cells, tanh_c, hs, h_prev, c_prev)
        return hs if self.return_sequences else hs[:, -1]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, gates, cells, tanh_c, hs, h_prev, c_prev = self._cache
        batch, steps, _ = x.shape
        u = self.units
        if self.return_sequences:
            dhs = np.asarray(grad_out, dtype=np.float64)
        else:
            dhs = np.zeros((batch, steps, u))
            dhs[:, -1] = grad_out
        da = np.empty((batch, steps, 4 * u))  # pre-activation gate grads
        dh_next = np.zeros((batch, u))
        dc_next = np.zeros((batch, u))
        for t in range(steps - 1, -1, -1):
            i = gates[:, t, : u]
            f = gates[:, t, u : 2 * u]
            g = gates[:, t, 2 * u : 3 * u]
            o = gates[:, t, 3 * u :]
            dh = dhs[:, t] + dh_next
            dc = dh * o * (1.0 - tanh_c[:, t] ** 2) + dc_next
            da[:, t, : u] = dc * g * i * (1.0 - i)
            da[:, t, u : 2 * u] = dc * c_prev[:, t] * f * (1.0 - f)
            da[:, t, 2 * u : 3 * u] = dc * i * (1.0 - g * g)
            da[:, t, 3 * u :] = dh * tanh_c[:, t] * o * (1.0 - o)
            dh_next = da[:, t] @ self.Wh
            dc_next = dc * f
        da_flat = da.reshape(batch * steps, 4 * u)
        self.grad_Wx = da_flat.T @ x.reshape(batch * steps, self.in_size)
        self.grad_Wh = da_flat.T @ h_prev.reshape(batch * steps, u)
        self.grad_b = da_flat.sum(axis=0)
        return da @ self.Wx

    def parameters(self):
        return [self.Wx, self.Wh, self.b]

    def gradients(self):
        return [self.grad_Wx, self.grad_Wh, self.grad_b]


class RepeatVector:
    """Copies a (batch, k) vector T times to (batch, T, k)."""

    def __init__(self, steps: int):
        self.steps = steps

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2:
            raise ValidationError(f"repeat_vector expects (batch, k), got {x.shape}")
        return np.repeat(x[:, None, :], self.steps, axis=1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out.sum(axis=1)

    def parameters(self):
        return []

    def gradients(self):
        return []


class TimeDistributedDense:
    """One shared dense layer applied to every time step of (batch, T, in)."""

    def __init__(self, in_size: int, out_size: int, activation: str = "tanh",
                 rng: np.random.Generator | None = None):
        self.inner = DenseLayer(in_size, out_size, activation, rng)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3:
            raise ValidationError(
                f"time-distributed layer expects (batch, T, in), got {x.shape}"
            )
        batch, steps, k = x.shape
        y = self.inner.forward(x.reshape(batch * steps, k))
        return y.reshape(batch, steps, self.inner.out_size)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        batch, steps, k = grad_out.shape
        dx = self.inner.backward(grad_out.reshape(batch * steps, k))
        return dx.reshape(batch, steps, self.inner.in_size)

    def parameters(self):
        return self.inner.parameters()

    def gradients(self):
        return self.inner.gradients()


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, params: list[np.ndarray], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValidationError("gradient list does not match parameter list")
        for g in grads:
            if not np.isfinite(g).all():
                raise NumericError("non-finite gradient")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)


class EarlyStopping:
    """Stop after `patience` consecutive epochs without strict improvement."""

    def __init__(self, patience: int = 10):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, loss: float, epoch: int) -> bool:
        """Feed one epoch's validation loss; returns True when training
        should stop."""
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            self.wait = 0
        else:
            self.wait += 1
        return self.wait >= self.patience


class ReduceLROnPlateau:
    """Multiply the learning rate by `factor` after `patience` stagnant
    epochs; the stagnation counter resets after each reduction."""

    def __init__(self, patience: int = 5, factor: float = 0.2):
        self.patience = patience
        self.factor = factor
        self.best = np.inf
        self.wait = 0

    def update(self, loss: float) -> bool:
        """Feed one epoch's validation loss; returns True when the learning
        rate should be reduced now."""
        if loss < self.best:
            self.best = loss
            self.wait = 0
            return False
        self.wait += 1
        if self.wait >= self.patience:
            self.wait = 0
            return True
        return False


def early_stopping(history, patience: int = 10) -> tuple[bool, int]:
    """Replay a validation-loss history; returns (stop, best_epoch) with
    epochs numbered from 1."""
    cb = EarlyStopping(patience)
    stop = False
    for epoch, loss in enumerate(history, start=1):
        stop = cb.update(float(loss), epoch)
        if stop:
            break
    return stop, cb.best_epoch


def reduce_lr_on_plateau(history, patience: int = 5, factor: float = 0.2,
                         learning_rate: float = 1e-3) -> float:
    """Replay a validation-loss history; returns the learning rate in effect
    after the last epoch."""
    cb = ReduceLROnPlateau(patience, factor)
    lr = learning_rate
    for loss in history:
        if cb.update(float(loss)):
            lr *= factor
    return lr
