"""Feed-forward acoustic model: tanh MLP, plain SGD training, generation.

Default architecture and schedule follow the experiment constants: six
hidden layers of 1024 tanh units, linear output, SGD with batch size 256,
25 epochs with a 10-epoch warm-up at learning rate 0.002 and exponential
decay afterwards, early stopping on validation error. Everything runs in
64-bit floats.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import acoustic
from .acoustic import AcousticStreams, NormalizationStats
from .errors import ArgumentError, DataError, FormatError, TrainingDiverged

DEFAULT_HIDDEN = (1024,) * 6

_CKPT_MAGIC = b"MLPC"
_CKPT_VERSION = 1


@dataclass
class MlpModel:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray] = field(repr=False)  # per layer, (fan_in, fan_out)
    biases: list[np.ndarray] = field(repr=False)  # per layer, (fan_out,)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MlpModel":
        return MlpModel(
            layer_sizes=self.layer_sizes,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass(frozen=True)
class TrainingSchedule:
    max_epochs: int = 25
    warmup_epochs: int = 10
    base_lr: float = 0.002
    decay: float = 0.5
    batch_size: int = 256
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.warmup_epochs < self.max_epochs:
            raise ArgumentError("warmup_epochs must be smaller than max_epochs")
        if not self.base_lr > 0:
            raise ArgumentError("base_lr must be > 0")
        if not 0.0 < self.decay <= 1.0:
            raise ArgumentError("decay must be in (0, 1]")
        if self.batch_size < 1 or self.patience < 1:
            raise ArgumentError("batch_size and patience must be >= 1")

    def learning_rate(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch: flat warm-up, then decay each epoch."""
        if epoch <= self.warmup_epochs:
            return self.base_lr
        return self.base_lr * self.decay ** (epoch - self.warmup_epochs)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    train_mse: float
    valid_mse: float


def init_model(
    input_dim: int,
    seed: int,
    hidden_sizes: tuple[int, ...] = DEFAULT_HIDDEN,
    output_dim: int = acoustic.target_width(),
) -> MlpModel:
    """Glorot-uniform weights, zero biases; bit-deterministic for a given seed."""
    if input_dim < 1:
        raise ArgumentError(f"input_dim must be >= 1, got {input_dim}")
    sizes = (input_dim, *hidden_sizes, output_dim)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_sizes=sizes, weights=weights, biases=biases)


def forward(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    """Affine + tanh through the hidden layers, linear output."""
    h = _check_batch(model, batch)
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.tanh(h @ w + b)
    return h @ model.weights[-1] + model.biases[-1]


def loss(pred: np.ndarray, targets: np.ndarray) -> float:
    """Half of the batch-mean squared error (summed over output dimensions)."""
    diff = pred - targets
    return float(0.5 * np.sum(diff * diff) / diff.shape[0])


def backward(
    model: MlpModel, batch: np.ndarray, targets: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray], float]:
    """Gradients of the half-MSE loss for every weight and bias, plus the loss."""
    batch = _check_batch(model, batch)
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if targets.shape != (batch.shape[0], model.output_dim):
        raise ArgumentError(
            f"target shape {targets.shape} != ({batch.shape[0]}, {model.output_dim})"
        )
    # overflow here only happens on a diverging model; the caller detects the
    # resulting non-finite loss, so silence the intermediate warnings
    with np.errstate(over="ignore", invalid="ignore"):
        activations = [batch]
        h = batch
        for w, b in zip(model.weights[:-1], model.biases[:-1]):
            h = np.tanh(h @ w + b)
            activations.append(h)
        pred = h @ model.weights[-1] + model.biases[-1]

        diff = pred - targets
        batch_loss = float(0.5 * np.sum(diff * diff) / diff.shape[0])
        delta = diff / diff.shape[0]  # d loss / d pred, mean over the batch
        grads_w = [np.empty(0)] * len(model.weights)
        grads_b = [np.empty(0)] * len(model.biases)
        for layer in reversed(range(len(model.weights))):
            grads_w[layer] = activations[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                # tanh' = 1 - tanh^2, using the stored activation
                delta = (delta @ model.weights[layer].T) * (1.0 - activations[layer] ** 2)
    return grads_w, grads_b, batch_loss


def train(
    model: MlpModel,
    train_set: tuple[np.ndarray, np.ndarray],
    valid_set: tuple[np.ndarray, np.ndarray],
    schedule: TrainingSchedule,
) -> tuple[MlpModel, list[EpochRecord]]:
    """Plain SGD with the warm-up/decay schedule and early stopping.

    Batches are reshuffled each epoch with a generator seeded from the
    schedule. Returns the parameters of the best-validation epoch; stops
    early when validation MSE has not improved for ``patience`` consecutive
    epochs after warm-up.
    """
    train_x, train_y = (np.asarray(a, dtype=np.float64) for a in train_set)
    valid_x, valid_y = (np.asarray(a, dtype=np.float64) for a in valid_set)
    if train_x.shape[0] == 0 or valid_x.shape[0] == 0:
        raise DataError("train and validation sets must be non-empty")

    rng = np.random.default_rng(schedule.seed)
    best = model.copy()
    best_valid = np.inf
    stale_epochs = 0
    history: list[EpochRecord] = []

    for epoch in range(1, schedule.max_epochs + 1):
        lr = schedule.learning_rate(epoch)
        order = rng.permutation(train_x.shape[0])
        batch_losses = []
        for start in range(0, order.size, schedule.batch_size):
            idx = order[start : start + schedule.batch_size]
            grads_w, grads_b, batch_loss = backward(model, train_x[idx], train_y[idx])
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            batch_losses.append(batch_loss)
            for w, b, gw, gb in zip(model.weights, model.biases, grads_w, grads_b):
                w -= lr * gw
                b -= lr * gb
        # per-element MSE, comparable with the validation column
        train_mse = 2.0 * float(np.mean(batch_losses)) / model.output_dim
        valid_mse = mse(forward(model, valid_x), valid_y)
        if not np.isfinite(valid_mse):
            raise TrainingDiverged(f"non-finite validation MSE at epoch {epoch}")
        history.append(EpochRecord(epoch=epoch, lr=lr, train_mse=train_mse, valid_mse=valid_mse))

        if valid_mse < best_valid:
            best_valid = valid_mse
            best = model.copy()
            stale_epochs = 0
        elif epoch > schedule.warmup_epochs:
            stale_epochs += 1
            if stale_epochs >= schedule.patience:
                break
    return best, history


def mse(pred: np.ndarray, targets: np.ndarray) -> float:
    diff = np.asarray(pred) - np.asarray(targets)
    return float(np.mean(diff * diff))


def predict_utterance(
    model: MlpModel,
    inputs: np.ndarray,
    output_stats: NormalizationStats,
    mgc_dim: int = acoustic.MGC_DIM,
    bap_dim: int = acoustic.BAP_DIM,
    use_mlpg: bool = True,
) -> tuple[AcousticStreams, np.ndarray]:
    """Generate acoustic streams for one utterance of normalized inputs.

    Denormalizes the network output, splits it into stream blocks, collapses
    each block to its static trajectory (MLPG over the training-set variances,
    or plain truncation when ``use_mlpg`` is false), thresholds the voicing
    flag at 0.5, and re-imposes the unvoiced LF0 sentinel.
    """
    if output_stats.kind != "meanvar":
        raise ArgumentError(
            f"output stats must be mean-variance normalized, got {output_stats.kind!r}"
        )
    if output_stats.n_columns != acoustic.target_width(mgc_dim, bap_dim):
        raise ArgumentError(
            f"output stats have {output_stats.n_columns} columns, expected "
            f"{acoustic.target_width(mgc_dim, bap_dim)}"
        )
    denorm = acoustic.invert_normalization(output_stats, forward(model, inputs))
    columns = acoustic.split_target_columns(mgc_dim, bap_dim)
    variances = np.where(output_stats.b > 0.0, output_stats.b**2, 1.0)

    vuv = (denorm[:, columns["vuv"]].ravel() > 0.5).astype(np.float64)
    statics = {}
    for name, width in (("mgc", mgc_dim), ("bap", bap_dim), ("lf0", 1)):
        block = denorm[:, columns[name]]
        if use_mlpg:
            statics[name] = acoustic.mlpg(block, variances[columns[name]])
        else:
            statics[name] = block[:, :width]
    lf0 = np.where(vuv > 0.0, statics["lf0"].ravel(), acoustic.UNVOICED_LF0)
    streams = AcousticStreams(mgc=statics["mgc"], bap=statics["bap"], lf0=lf0)
    return streams, vuv


def _check_batch(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[1] != model.input_dim:
        raise ArgumentError(f"batch width {batch.shape[1]} != model input {model.input_dim}")
    return batch


def save_checkpoint(
    model: MlpModel, path: Path, input_stats_ref: str = "", output_stats_ref: str = ""
) -> None:
    """Versioned binary checkpoint; stats refs name sibling files by convention."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIQ", _CKPT_MAGIC, _CKPT_VERSION, len(model.layer_sizes)))
        fh.write(struct.pack(f"<{len(model.layer_sizes)}Q", *model.layer_sizes))
        for ref in (input_stats_ref, output_stats_ref):
            encoded = ref.encode("utf-8")
            fh.write(struct.pack("<Q", len(encoded)))
            fh.write(encoded)
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(b.astype("<f8").tobytes())


def load_checkpoint(path: Path) -> tuple[MlpModel, str, str]:
    data = Path(path).read_bytes()
    offset = struct.calcsize("<4sIQ")
    magic, version, n_sizes = struct.unpack("<4sIQ", data[:offset])
    if magic != _CKPT_MAGIC or version != _CKPT_VERSION:
        raise FormatError(f"not a recognized checkpoint: {path}")
    sizes = struct.unpack_from(f"<{n_sizes}Q", data, offset)
    offset += 8 * n_sizes
    refs = []
    for _ in range(2):
        (length,) = struct.unpack_from("<Q", data, offset)
        offset += 8
        refs.append(data[offset : offset + length].decode("utf-8"))
        offset += length
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += 8 * fan_in * fan_out
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(w.reshape(fan_in, fan_out).copy())
        biases.append(b.copy())
    if offset != len(data):
        raise FormatError(f"checkpoint has {len(data) - offset} trailing bytes: {path}")
    return MlpModel(layer_sizes=tuple(sizes), weights=weights, biases=biases), refs[0], refs[1]
