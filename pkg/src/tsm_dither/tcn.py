"""Temporal convolutional network written directly against numpy.

The network maps a fixed-length window of measured output positions to the
command position that produced the window's final sample. Architecture per
residual block: dilated causal convolution, weight normalization, ReLU,
repeated twice, plus a skip connection (with a 1x1 projection when the
channel count changes). A linear head reads the final time step.

Everything is float64 and deterministic from the config seed: forward,
reverse-mode gradients, Adam, and early stopping live here with no framework
behind them.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConfigurationError,
    InsufficientDataError,
    ShapeError,
    TrainingDivergedError,
)

CHECKPOINT_VERSION = 1


def num_blocks(length: int, kernel_size: int) -> int:
    """Residual block count needed to cover a window of the given length.

    ceil(log2((L-1)/(2k-2)) + 1), clamped to at least one block so tiny
    windows still build a usable network.
    """
    if length < 2 or kernel_size < 2:
        raise ConfigurationError(
            f"need length >= 2 and kernel_size >= 2, got ({length}, {kernel_size})"
        )
    raw = math.ceil(math.log2((length - 1) / (2 * kernel_size - 2)) + 1)
    return max(1, raw)


def receptive_field(kernel_size: int, n_blocks: int) -> int:
    """Number of trailing input steps that can influence the final output."""
    return 1 + 2 * (kernel_size - 1) * (2 ** n_blocks - 1)


@dataclass(frozen=True)
class TcnConfig:
    """Architecture plus training hyperparameters.

    channels holds the output width of each residual block; its length must
    equal num_blocks(length, kernel_size).
    """

    length: int = 40
    kernel_size: int = 3
    in_channels: int = 1
    channels: tuple = (3, 3, 3, 3, 3)
    lr: float = 1e-3
    batch: int = 64
    epochs: int = 300
    patience: int = 30
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        nb = num_blocks(self.length, self.kernel_size)
        if len(self.channels) != nb:
            raise ConfigurationError(
                f"channels has {len(self.channels)} entries but "
                f"num_blocks({self.length}, {self.kernel_size}) = {nb}"
            )
        if any(c < 1 for c in self.channels):
            raise ConfigurationError("channel widths must be positive")
        if self.in_channels != 1:
            raise ConfigurationError("only single-channel input windows are supported")
        if self.lr <= 0.0 or self.batch < 1 or self.epochs < 1 or self.patience < 1:
            raise ConfigurationError("lr, batch, epochs, patience must be positive")

    @property
    def dilations(self) -> tuple:
        return tuple(2 ** n for n in range(len(self.channels)))

    def to_json(self) -> dict:
        return {
            "length": self.length,
            "kernel_size": self.kernel_size,
            "in_channels": self.in_channels,
            "channels": list(self.channels),
            "lr": self.lr,
            "batch": self.batch,
            "epochs": self.epochs,
            "patience": self.patience,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, d: dict) -> "TcnConfig":
        return cls(
            length=int(d["length"]), kernel_size=int(d["kernel_size"]),
            in_channels=int(d["in_channels"]), channels=tuple(d["channels"]),
            lr=float(d["lr"]), batch=int(d["batch"]), epochs=int(d["epochs"]),
            patience=int(d["patience"]), seed=int(d["seed"]),
        )


def param_count_formula(config: TcnConfig) -> int:
    """Closed-form approximate parameter count.

    2 * sum_{n=1}^{nb-1} c_{n-1} * c_n * k + c_in * c_0. Ignores biases,
    gains, first-conv input widths past block 0, downsample projections and
    the head, so it never exceeds the exact count.
    """
    ch = config.channels
    k = config.kernel_size
    total = 2 * sum(ch[n - 1] * ch[n] * k for n in range(1, len(ch)))
    return total + config.in_channels * ch[0]


# ---------------------------------------------------------------------------
# model


class TcnModel:
    """Parameter container with forward/backward passes.

    Parameters are kept as a list of named float64 arrays in a fixed order;
    the flat-vector view drives checkpoints, Adam, and finite-difference
    checks. Dataset statistics ride along so forward() accepts raw mm
    windows and returns raw mm commands.
    """

    def __init__(self, config: TcnConfig, x_mean: float = 0.0, x_std: float = 1.0,
                 y_mean: float = 0.0, y_std: float = 1.0, rng=None):
        self.config = config
        self.x_mean = float(x_mean)
        self.x_std = float(x_std) if x_std > 0.0 else 1.0
        self.y_mean = float(y_mean)
        # zero target spread means the constant y_mean predictor is exact;
        # keeping the 0 makes that literal instead of flooring it away
        self.y_std = float(y_std) if y_std > 0.0 else 0.0
        if rng is None:
            rng = np.random.default_rng(config.seed)
        self._names: list = []
        self._params: list = []
        self._build(rng)

    # -- construction ------------------------------------------------------

    def _add(self, name: str, arr: np.ndarray) -> None:
        self._names.append(name)
        self._params.append(np.asarray(arr, dtype=np.float64))

    def _init_conv(self, rng, name: str, c_out: int, c_in: int, k: int) -> None:
        # weight-norm parameterization: w = g * v / ||v||, one gain per row
        v = rng.normal(0.0, 1.0, size=(c_out, c_in, k)) / math.sqrt(c_in * k)
        g = np.sqrt(np.sum(v * v, axis=(1, 2)))  # start with w == v
        self._add(name + ".v", v)
        self._add(name + ".g", g)
        self._add(name + ".b", np.zeros(c_out))

    def _build(self, rng) -> None:
        cfg = self.config
        c_prev = cfg.in_channels
        for n, c_out in enumerate(cfg.channels):
            self._init_conv(rng, f"block{n}.conv1", c_out, c_prev, cfg.kernel_size)
            self._init_conv(rng, f"block{n}.conv2", c_out, c_out, cfg.kernel_size)
            if c_prev != c_out:
                w = rng.normal(0.0, 1.0, size=(c_out, c_prev)) / math.sqrt(c_prev)
                self._add(f"block{n}.down.w", w)
                self._add(f"block{n}.down.b", np.zeros(c_out))
            c_prev = c_out
        head_w = rng.normal(0.0, 1.0, size=(c_prev,)) / math.sqrt(c_prev)
        self._add("head.w", head_w)
        self._add("head.b", np.zeros(1))

    # -- parameter plumbing ------------------------------------------------

    def parameter_names(self) -> list:
        return list(self._names)

    def parameters(self) -> list:
        return self._params

    def _index(self, name: str) -> int:
        return self._names.index(name)

    def get(self, name: str) -> np.ndarray:
        return self._params[self._index(name)]

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self._params])

    def set_flat_parameters(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_parameters,):
            raise ShapeError(f"expected flat vector of {self.n_parameters}, got {vec.shape}")
        pos = 0
        for i, p in enumerate(self._params):
            n = p.size
            self._params[i] = vec[pos:pos + n].reshape(p.shape).copy()
            pos += n

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self._params)

    # -- forward -----------------------------------------------------------

    @staticmethod
    def _wn_weight(v: np.ndarray, g: np.ndarray):
        norm = np.sqrt(np.sum(v * v, axis=(1, 2)))  # (c_out,)
        # all-zero direction has no defined unit vector; weight collapses to 0
        safe = np.where(norm > 0.0, norm, 1.0)
        w = (g / safe)[:, None, None] * v
        return w, safe

    @staticmethod
    def _conv_cols(x: np.ndarray, k: int, d: int):
        """Left-pad causally and gather the k dilated taps.

        x is (B, C, T); the result is (B, C*k, T) ordered tap-major so a
        single matmul against the (C_out, C*k) flattened weight applies the
        convolution at every step.
        """
        b, c, t = x.shape
        pad = (k - 1) * d
        xp = np.concatenate([np.zeros((b, c, pad)), x], axis=2)
        cols = np.empty((b, k, c, t))
        for j in range(k):
            cols[:, j] = xp[:, :, j * d:j * d + t]
        return cols.reshape(b, k * c, t)

    def _conv_forward(self, x, name: str, d: int, cache: dict | None):
        k = self.config.kernel_size
        v = self.get(name + ".v")
        g = self.get(name + ".g")
        bias = self.get(name + ".b")
        w, norm = self._wn_weight(v, g)
        c_out, c_in, _ = w.shape
        b, _, t = x.shape
        cols = self._conv_cols(x, k, d)
        w2 = w.transpose(2, 1, 0).reshape(k * c_in, c_out)  # tap-major rows
        # one flat GEMM over all (batch, step) pairs beats per-batch matmuls
        ct = np.ascontiguousarray(cols.transpose(0, 2, 1)).reshape(b * t, k * c_in)
        y = (ct @ w2 + bias).reshape(b, t, c_out).transpose(0, 2, 1)
        if cache is not None:
            cache[name] = (ct, w2, norm)
        return y

    def _conv_backward(self, d_y, name: str, cache: dict, grads: dict):
        k = self.config.kernel_size
        v = self.get(name + ".v")
        g = self.get(name + ".g")
        ct, w2, norm = cache[name]
        c_out, c_in, _ = v.shape
        b, _, t = d_y.shape
        d_y2 = np.ascontiguousarray(d_y.transpose(0, 2, 1)).reshape(b * t, c_out)
        grads[name + ".b"] = np.sum(d_y2, axis=0)
        d_w2 = ct.T @ d_y2
        d_cols = (d_y2 @ w2.T).reshape(b, t, k * c_in).transpose(0, 2, 1)
        d_w = d_w2.reshape(k, c_in, c_out).transpose(2, 1, 0)
        # un-reparameterize: w = g * v / ||v||
        v_hat = v / norm[:, None, None]
        dot = np.sum(d_w * v_hat, axis=(1, 2))
        grads[name + ".g"] = dot
        grads[name + ".v"] = (g / norm)[:, None, None] * (d_w - dot[:, None, None] * v_hat)
        return d_cols

    @staticmethod
    def _cols_to_input(d_cols, shape, k: int, d: int):
        b, c, t = shape
        pad = (k - 1) * d
        d_xp = np.zeros((b, c, t + pad))
        d_cols = d_cols.reshape(b, k, c, t)
        for j in range(k):
            d_xp[:, :, j * d:j * d + t] += d_cols[:, j]
        return d_xp[:, :, pad:]

    def _check_window(self, x_raw) -> np.ndarray:
        x = np.asarray(x_raw, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.config.length:
            raise ShapeError(
                f"expected windows of length {self.config.length}, got shape {x.shape}"
            )
        return x, single

    def forward(self, x_raw, cache: dict | None = None):
        """Raw mm windows (B, L) or (L,) to raw mm command estimates."""
        x, single = self._check_window(x_raw)
        h = ((x - self.x_mean) / self.x_std)[:, None, :]
        dils = self.config.dilations
        if cache is not None:
            cache["x_std_in"] = h
        for n in range(len(self.config.channels)):
            inp = h
            z1 = self._conv_forward(inp, f"block{n}.conv1", dils[n], cache)
            a1 = np.maximum(z1, 0.0)
            z2 = self._conv_forward(a1, f"block{n}.conv2", dils[n], cache)
            a2 = np.maximum(z2, 0.0)
            if f"block{n}.down.w" in self._names:
                dw = self.get(f"block{n}.down.w")
                db = self.get(f"block{n}.down.b")
                skip = np.einsum("oc,bct->bot", dw, inp) + db[None, :, None]
            else:
                skip = inp
            h = a2 + skip
            if cache is not None:
                cache[f"block{n}.z1"] = z1
                cache[f"block{n}.z2"] = z2
                cache[f"block{n}.in"] = inp
        last = h[:, :, -1]
        y_hat = last @ self.get("head.w") + self.get("head.b")[0]
        if cache is not None:
            cache["last"] = last
        out = self.y_mean + self.y_std * y_hat
        return out[0] if single else out

    # -- backward ----------------------------------------------------------

    def loss_and_gradients(self, x_raw, y_raw):
        """Mean squared error in raw mm^2 plus gradients for every parameter.

        Returns (loss, grads dict keyed by parameter name).
        """
        x, _ = self._check_window(x_raw)
        y = np.asarray(y_raw, dtype=np.float64).reshape(-1)
        if y.shape[0] != x.shape[0]:
            raise ShapeError(f"{x.shape[0]} windows but {y.shape[0]} targets")
        cache: dict = {}
        pred = self.forward(x, cache)
        resid = pred - y
        loss = float(np.mean(resid * resid))
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss {loss}")
        b = x.shape[0]
        grads: dict = {}
        # d loss / d y_hat (standardized head output)
        d_yhat = (2.0 / b) * resid * self.y_std
        last = cache["last"]
        grads["head.w"] = last.T @ d_yhat
        grads["head.b"] = np.array([np.sum(d_yhat)])
        d_last = np.outer(d_yhat, self.get("head.w"))
        nb = len(self.config.channels)
        d_h = np.zeros((b, self.config.channels[-1], self.config.length))
        d_h[:, :, -1] = d_last
        dils = self.config.dilations
        k = self.config.kernel_size
        for n in range(nb - 1, -1, -1):
            z1 = cache[f"block{n}.z1"]
            z2 = cache[f"block{n}.z2"]
            inp = cache[f"block{n}.in"]
            d_a2 = d_h
            d_z2 = d_a2 * (z2 > 0.0)
            d_cols2 = self._conv_backward(d_z2, f"block{n}.conv2", cache, grads)
            d_a1 = self._cols_to_input(d_cols2, z1.shape, k, dils[n])
            d_z1 = d_a1 * (z1 > 0.0)
            d_cols1 = self._conv_backward(d_z1, f"block{n}.conv1", cache, grads)
            d_inp = self._cols_to_input(d_cols1, inp.shape, k, dils[n])
            if f"block{n}.down.w" in self._names:
                dw = self.get(f"block{n}.down.w")
                grads[f"block{n}.down.w"] = np.einsum("bot,bct->oc", d_h, inp)
                grads[f"block{n}.down.b"] = np.sum(d_h, axis=(0, 2))
                d_inp = d_inp + np.einsum("oc,bot->bct", dw, d_h)
            else:
                d_inp = d_inp + d_h
            d_h = d_inp
        return loss, grads

    def flat_gradients(self, grads: dict) -> np.ndarray:
        return np.concatenate([
            np.asarray(grads[name], dtype=np.float64).ravel() for name in self._names
        ])

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "config": self.config.to_json(),
            "stats": {
                "x_mean": self.x_mean, "x_std": self.x_std,
                "y_mean": self.y_mean, "y_std": self.y_std,
            },
            "params": self.flat_parameters().tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "TcnModel":
        if int(d.get("version", -1)) != CHECKPOINT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {d.get('version')}")
        cfg = TcnConfig.from_json(d["config"])
        st = d["stats"]
        model = cls(cfg, st["x_mean"], st["x_std"], st["y_mean"], st["y_std"])
        model.set_flat_parameters(np.asarray(d["params"], dtype=np.float64))
        return model

    def save(self, path: str) -> None:
        save_checkpoint(self, path)


def exact_param_count(model_or_config, *, kernel_size: int = 3,
                      in_channels: int = 1) -> int:
    """Total trainable scalars, counting v, g, b, downsample and head.

    Accepts a TcnModel, a TcnConfig, or a bare channels tuple (with explicit
    kernel_size/in_channels). The tuple form also covers the block-free
    degenerate case, where only the head's weight and bias remain.
    """
    if isinstance(model_or_config, TcnModel):
        return model_or_config.n_parameters
    if isinstance(model_or_config, TcnConfig):
        cfg = model_or_config
        channels = cfg.channels
        kernel_size = cfg.kernel_size
        in_channels = cfg.in_channels
    else:
        channels = tuple(model_or_config)
    total = 0
    prev = in_channels
    for c in channels:
        total += c * prev * kernel_size + 2 * c      # conv1 v, g, b
        total += c * c * kernel_size + 2 * c         # conv2 v, g, b
        if prev != c:
            total += c * prev + c                    # 1x1 downsample w, b
        prev = c
    return total + prev + 1                          # linear head w, b


def save_checkpoint(model: TcnModel, path: str) -> None:
    """Atomic JSON dump (temp file + rename)."""
    payload = json.dumps(model.to_json())
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> TcnModel:
    with open(path) as f:
        return TcnModel.from_json(json.load(f))


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class WindowedDataset:
    """Aligned (window, target) pairs with a fixed train/validation split.

    x is (N, L) measured positions in mm, y is (N,) commanded positions, and
    the first n_train rows train while the rest validate.
    """

    x: np.ndarray
    y: np.ndarray
    n_train: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ShapeError(f"windows {x.shape} do not align with targets {y.shape}")
        if not (0 < self.n_train < x.shape[0]):
            raise InsufficientDataError(
                f"split {self.n_train} leaves no train or no validation rows"
            )

    @property
    def train_x(self):
        return self.x[: self.n_train]

    @property
    def train_y(self):
        return self.y[: self.n_train]

    @property
    def val_x(self):
        return self.x[self.n_train:]

    @property
    def val_y(self):
        return self.y[self.n_train:]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float


def curve_to_csv(curve) -> str:
    lines = ["epoch,train_mse,val_mse"]
    for row in curve:
        lines.append(f"{row.epoch},{row.train_mse!r},{row.val_mse!r}")
    return "\n".join(lines) + "\n"


class _Adam:
    def __init__(self, n: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads * grads
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _batch_mse(model: TcnModel, x: np.ndarray, y: np.ndarray, chunk: int = 4096) -> float:
    total = 0.0
    for i in range(0, x.shape[0], chunk):
        pred = model.forward(x[i:i + chunk])
        r = pred - y[i:i + chunk]
        total += float(np.dot(r, r))
    return total / x.shape[0]


def train(config: TcnConfig, dataset: WindowedDataset):
    """Fit a model to the dataset; returns (model, curve).

    Standardization statistics come from the training split only. The
    returned model carries the best-validation weights seen, not the final
    ones, and the curve holds one EpochRecord per completed epoch.
    """
    if dataset.x.shape[1] != config.length:
        raise ShapeError(
            f"dataset windows have length {dataset.x.shape[1]}, config wants {config.length}"
        )
    x_mean = float(np.mean(dataset.train_x))
    x_std = float(np.std(dataset.train_x))
    y_mean = float(np.mean(dataset.train_y))
    y_std = float(np.std(dataset.train_y))
    model = TcnModel(config, x_mean, x_std, y_mean, y_std)
    rng = np.random.default_rng(config.seed + 0x5EED)
    adam = _Adam(model.n_parameters, config.lr)
    n = dataset.n_train
    best_val = math.inf
    best_params = model.flat_parameters()
    since_best = 0
    curve: list = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        train_accum = 0.0
        seen = 0
        for i in range(0, n, config.batch):
            idx = order[i:i + config.batch]
            loss, grads = model.loss_and_gradients(dataset.train_x[idx], dataset.train_y[idx])
            flat = model.flat_gradients(grads)
            model.set_flat_parameters(adam.step(model.flat_parameters(), flat))
            train_accum += loss * idx.size
            seen += idx.size
        val_mse = _batch_mse(model, dataset.val_x, dataset.val_y)
        if not math.isfinite(val_mse):
            raise TrainingDivergedError(f"validation loss diverged at epoch {epoch}")
        curve.append(EpochRecord(epoch, train_accum / seen, val_mse))
        if val_mse < best_val:
            best_val = val_mse
            best_params = model.flat_parameters()
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    model.set_flat_parameters(best_params)
    return model, curve
