"""Trainable classification head over per-segment features.

Architecture is fixed: input -> 128 ReLU -> 64 ReLU -> C-way softmax, with
inverted dropout after each hidden layer during training. Optimization is
Adam on mean categorical cross-entropy, mini-batches of 1500 segments,
early stopping on validation segment loss. All training math is float64 and
fully seeded: given the same data, config and seed, the returned weights are
bit-identical.

Seeding scheme: initial weights come from ``numpy.random.default_rng(seed)``
(Glorot-uniform, biases zero, draw order W1, W2, W3); the epoch shuffles and
dropout masks come from ``default_rng([seed, 1])``, masks drawn mask1 then
mask2 once per batch.
"""

from __future__ import annotations

import math
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import FeatureMatrix
from .errors import FormatError, InputError, IntegrityError, TruncatedError

HIDDEN1 = 128
HIDDEN2 = 64

HEAD_MAGIC = b"GPH1"
HEAD_VERSION = 1


@dataclass
class MlpParams:
    """Weights of the 2-hidden-layer head. Wk maps layer k-1 to layer k."""

    W1: np.ndarray  # dim x 128
    b1: np.ndarray
    W2: np.ndarray  # 128 x 64
    b2: np.ndarray
    W3: np.ndarray  # 64 x C
    b3: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def class_count(self) -> int:
        return self.W3.shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2, self.W3, self.b3]

    def copy(self) -> "MlpParams":
        return MlpParams(*(a.copy() for a in self.arrays()))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 1500
    max_epochs: int = 200
    dropout_rate: float = 0.4
    patience: int = 10
    seed: int = 0
    standardize: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InputError("dropout_rate must be in [0, 1)")
        if self.batch_size < 1:
            raise InputError("batch_size must be at least 1")
        if self.patience < 1:
            raise InputError("patience must be at least 1")
        if self.max_epochs < 1:
            raise InputError("max_epochs must be at least 1")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "AdamState":
        return cls(m=[np.zeros_like(a) for a in params.arrays()],
                   v=[np.zeros_like(a) for a in params.arrays()])


@dataclass
class TrainedHead:
    """Weights plus the train-set standardization applied to every input."""

    params: MlpParams
    feat_mean: np.ndarray
    feat_std: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.params.input_dim

    @property
    def class_count(self) -> int:
        return self.params.class_count


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    stop_reason: str = ""


def init_params(dim: int, n_classes: int, seed: int) -> MlpParams:
    """Glorot-uniform weights, zero biases, from a seeded generator."""
    if dim < 1 or n_classes < 1:
        raise InputError("dim and class count must be positive")
    rng = np.random.default_rng(seed)

    def glorot(fan_in: int, fan_out: int) -> np.ndarray:
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return MlpParams(
        W1=glorot(dim, HIDDEN1), b1=np.zeros(HIDDEN1),
        W2=glorot(HIDDEN1, HIDDEN2), b2=np.zeros(HIDDEN2),
        W3=glorot(HIDDEN2, n_classes), b3=np.zeros(n_classes),
    )


def sample_dropout_masks(rng: np.random.Generator, batch_size: int,
                         dropout_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """0/1 keep masks for both hidden layers, keep probability 1 - rate."""
    keep = 1.0 - dropout_rate
    mask1 = (rng.random((batch_size, HIDDEN1)) < keep).astype(np.float64)
    mask2 = (rng.random((batch_size, HIDDEN2)) < keep).astype(np.float64)
    return mask1, mask2


def _affine_forward(params: MlpParams, x: np.ndarray, masks, keep: float):
    z1 = x @ params.W1 + params.b1
    h1 = np.maximum(z1, 0.0)
    if masks is not None:
        h1 = h1 * masks[0] / keep
    z2 = h1 @ params.W2 + params.b2
    h2 = np.maximum(z2, 0.0)
    if masks is not None:
        h2 = h2 * masks[1] / keep
    logits = h2 @ params.W3 + params.b3
    return z1, h1, z2, h2, logits


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def forward(params: MlpParams, x: np.ndarray, dropout_masks=None,
            dropout_rate: float = 0.4) -> np.ndarray:
    """Class probabilities for one vector or a batch of rows.

    Masks are only for training-time use; inference passes none and is a
    pure function of the inputs.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.shape[1] != params.input_dim:
        raise InputError(
            f"input dim {batch.shape[1]} != param dim {params.input_dim}"
        )
    keep = 1.0 - dropout_rate
    *_, logits = _affine_forward(params, batch, dropout_masks, keep)
    probs = np.exp(_log_softmax(logits))
    return probs[0] if single else probs


def loss_and_grad(params: MlpParams, x: np.ndarray, labels: np.ndarray,
                  dropout_masks=None, dropout_rate: float = 0.4,
                  ) -> tuple[float, MlpParams]:
    """Mean cross-entropy over the batch and its exact gradients."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or len(x) == 0:
        raise InputError("batch must be a non-empty 2-D array")
    if not np.all(np.isfinite(x)):
        raise InputError("non-finite values in input batch")
    n_classes = params.class_count
    if labels.min() < 0 or labels.max() >= n_classes:
        raise InputError("labels out of range")

    keep = 1.0 - dropout_rate
    z1, h1, z2, h2, logits = _affine_forward(params, x, dropout_masks, keep)
    log_probs = _log_softmax(logits)
    n = len(x)
    rows = np.arange(n)
    loss = float(-log_probs[rows, labels].mean())

    dlogits = np.exp(log_probs)
    dlogits[rows, labels] -= 1.0
    dlogits /= n

    gW3 = h2.T @ dlogits
    gb3 = dlogits.sum(axis=0)
    dh2 = dlogits @ params.W3.T
    if dropout_masks is not None:
        dh2 = dh2 * dropout_masks[1] / keep
    dz2 = dh2 * (z2 > 0.0)

    gW2 = h1.T @ dz2
    gb2 = dz2.sum(axis=0)
    dh1 = dz2 @ params.W2.T
    if dropout_masks is not None:
        dh1 = dh1 * dropout_masks[0] / keep
    dz1 = dh1 * (z1 > 0.0)

    gW1 = x.T @ dz1
    gb1 = dz1.sum(axis=0)
    return loss, MlpParams(gW1, gb1, gW2, gb2, gW3, gb3)


def batch_loss(params: MlpParams, x: np.ndarray, labels: np.ndarray,
               dropout_masks=None, dropout_rate: float = 0.4) -> float:
    """Loss only; what the finite-difference oracle perturbs."""
    x = np.asarray(x, dtype=np.float64)
    keep = 1.0 - dropout_rate
    *_, logits = _affine_forward(params, x, dropout_masks, keep)
    log_probs = _log_softmax(logits)
    return float(-log_probs[np.arange(len(x)), labels].mean())


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState,
              config: TrainConfig) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update, in place."""
    state.t += 1
    b1c = 1.0 - config.beta1 ** state.t
    b2c = 1.0 - config.beta2 ** state.t
    for theta, g, m, v in zip(params.arrays(), grads.arrays(),
                              state.m, state.v):
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * g * g
        m_hat = m / b1c
        v_hat = v / b2c
        theta -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return params, state


def standardization_stats(x_train: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and population std of the train segments, floored."""
    mean = x_train.mean(axis=0, dtype=np.float64)
    std = x_train.std(axis=0, dtype=np.float64)
    return mean, np.maximum(std, 1e-8)


def _eval_loss_acc(params: MlpParams, x: np.ndarray, labels: np.ndarray,
                   mean: np.ndarray, std: np.ndarray) -> tuple[float, float]:
    total_nll = 0.0
    correct = 0
    for start in range(0, len(x), 8192):
        xb = (x[start : start + 8192].astype(np.float64) - mean) / std
        yb = labels[start : start + 8192]
        *_, logits = _affine_forward(params, xb, None, 1.0)
        log_probs = _log_softmax(logits)
        total_nll -= log_probs[np.arange(len(xb)), yb].sum()
        correct += int((logits.argmax(axis=1) == yb).sum())
    return total_nll / len(x), correct / len(x)


def train_head(x_train: np.ndarray, y_train: np.ndarray,
               x_val: np.ndarray, y_val: np.ndarray,
               config: TrainConfig,
               n_classes: int | None = None) -> tuple[TrainedHead, TrainingLog]:
    """Fit the head on train segments, early-stopping on val segment loss.

    Training runs until validation loss has failed to improve for more than
    ``patience`` consecutive epochs (or max_epochs), and the weights returned
    are the ones from the best-validation-loss epoch.
    """
    x_train = np.asarray(x_train)
    x_val = np.asarray(x_val)
    y_train = np.asarray(y_train)
    y_val = np.asarray(y_val)
    if len(x_train) == 0 or len(x_val) == 0:
        raise InputError("train and val splits must be non-empty")
    if x_train.ndim != 2 or x_val.ndim != 2 or x_train.shape[1] != x_val.shape[1]:
        raise InputError(
            f"feature dims disagree: train {x_train.shape} vs val {x_val.shape}"
        )

    dim = x_train.shape[1]
    if n_classes is None:
        n_classes = int(max(y_train.max(), y_val.max())) + 1
    if config.standardize:
        mean, std = standardization_stats(x_train)
    else:
        mean = np.zeros(dim)
        std = np.ones(dim)

    params = init_params(dim, n_classes, config.seed)
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng([config.seed, 1])

    log = TrainingLog()
    best_loss = math.inf
    best_params = params.copy()
    since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(x_train))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = (x_train[idx].astype(np.float64) - mean) / std
            yb = y_train[idx]
            masks = None
            if config.dropout_rate > 0.0:
                masks = sample_dropout_masks(rng, len(idx), config.dropout_rate)
            loss, grads = loss_and_grad(params, xb, yb, masks,
                                        config.dropout_rate)
            adam_step(params, grads, state, config)
            total += loss * len(idx)

        val_loss, val_acc = _eval_loss_acc(params, x_val, y_val, mean, std)
        log.records.append(EpochRecord(
            epoch=epoch, train_loss=total / len(order),
            val_loss=val_loss, val_accuracy=val_acc,
        ))

        if val_loss < best_loss:
            best_loss = val_loss
            best_params = params.copy()
            log.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best > config.patience:
                log.stopped_epoch = epoch
                log.stop_reason = "early_stop"
                break
    else:
        log.stopped_epoch = config.max_epochs
        log.stop_reason = "max_epochs"

    head = TrainedHead(params=best_params, feat_mean=mean, feat_std=std)
    return head, log


def predict_segments(head: TrainedHead | MlpParams,
                     matrix: FeatureMatrix) -> np.ndarray:
    """Per-frame class distributions, dropout off, shape (frames, C)."""
    if isinstance(head, MlpParams):
        params, mean, std = head, None, None
    else:
        params, mean, std = head.params, head.feat_mean, head.feat_std
    if matrix.values.ndim != 2 or matrix.dim != params.input_dim:
        raise InputError(
            f"feature dim {matrix.values.shape} does not match head "
            f"input dim {params.input_dim}"
        )
    if matrix.frames == 0:
        return np.zeros((0, params.class_count))
    x = matrix.values.astype(np.float64)
    if mean is not None:
        x = (x - mean) / std
    return forward(params, x, dropout_masks=None)


def save_head(head: TrainedHead, path: str | Path) -> None:
    """Persist as GPH1: dims, standardization vectors, weights, CRC32.

    Payload (everything after the 16-byte fixed header) is float32
    little-endian: mean, std, then W1, b1, W2, b2, W3, b3 row-major. The
    trailing u32 is the CRC32 of the payload.
    """
    p = head.params
    parts = [np.asarray(head.feat_mean), np.asarray(head.feat_std)] + p.arrays()
    payload = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes()
                       for a in parts)
    header = HEAD_MAGIC + struct.pack("<III", HEAD_VERSION, p.input_dim,
                                      p.class_count)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        with open(tmp, "wb") as fh:
            fh.write(header)
            fh.write(payload)
            fh.write(struct.pack("<I", zlib.crc32(payload)))
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def load_head(path: str | Path) -> TrainedHead:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16:
        raise TruncatedError(f"{path}: shorter than the fixed header")
    if raw[:4] != HEAD_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, dim, n_classes = struct.unpack_from("<III", raw, 4)
    if version != HEAD_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")

    shapes = [(dim,), (dim,), (dim, HIDDEN1), (HIDDEN1,), (HIDDEN1, HIDDEN2),
              (HIDDEN2,), (HIDDEN2, n_classes), (n_classes,)]
    payload_len = sum(int(np.prod(s)) for s in shapes) * 4
    if len(raw) < 16 + payload_len + 4:
        raise TruncatedError(f"{path}: payload truncated")
    payload = raw[16 : 16 + payload_len]
    (stored_crc,) = struct.unpack_from("<I", raw, 16 + payload_len)
    if stored_crc != zlib.crc32(payload):
        raise IntegrityError(f"{path}: CRC mismatch")

    arrays = []
    offset = 0
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        arrays.append(arr.reshape(shape).astype(np.float64))
        offset += count * 4
    mean, std, w1, b1, w2, b2, w3, b3 = arrays
    return TrainedHead(params=MlpParams(w1, b1, w2, b2, w3, b3),
                       feat_mean=mean, feat_std=std)
