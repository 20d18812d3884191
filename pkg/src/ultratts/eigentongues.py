"""PCA compression of flattened ultrasound frames into per-frame coefficients.

The compressor is fitted per speaker on training frames only; dev/test frames
are projected with the training model.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DataError, FormatError

_MAGIC = b"ETPC"
_VERSION = 1


@dataclass(frozen=True)
class EigenTonguesModel:
    mean: np.ndarray  # (d,)
    basis: np.ndarray  # (k, d), rows orthonormal
    eigenvalues: np.ndarray  # (k,), non-increasing, unbiased (n-1) normalization
    variance_target: float
    total_variance: float  # sum of all d eigenvalues of the training covariance

    @property
    def n_components(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def variance_retained(self) -> float:
        """Fraction of training variance captured by the kept components."""
        return float(self.eigenvalues.sum() / self.total_variance)


def fit_pca(
    frames: np.ndarray, variance_target: float, k_max: int | None = 128
) -> EigenTonguesModel:
    """Fit the compressor on flattened frames (one row per frame).

    Keeps the smallest component count whose cumulative eigenvalue fraction
    reaches ``variance_target``; ``k_max`` may truncate further. Eigenvalues
    use the unbiased (n-1) covariance normalization. Each basis row is
    sign-flipped so its largest-magnitude entry is positive, which makes the
    fit deterministic.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ArgumentError(f"frames must be 2-D (n, d), got shape {frames.shape}")
    n, d = frames.shape
    if n < 2:
        raise DataError(f"need at least 2 frames to fit, got {n}")
    if not 0.0 < variance_target <= 1.0:
        raise ArgumentError(f"variance_target must be in (0, 1], got {variance_target}")
    mean = frames.mean(axis=0)
    centered = frames - mean
    # Thin SVD; singular values relate to covariance eigenvalues by s^2/(n-1).
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = (s * s) / (n - 1)
    total = float(eigenvalues.sum())
    if total <= 0.0:
        raise DataError("zero total variance: all frames are identical")
    cumulative = np.cumsum(eigenvalues) / total
    k = int(np.searchsorted(cumulative, variance_target - 1e-12) + 1)
    k = min(k, eigenvalues.shape[0])
    if k_max is not None:
        k = min(k, k_max)
    basis = vt[:k].copy()
    flip = np.sign(basis[np.arange(k), np.argmax(np.abs(basis), axis=1)])
    basis *= flip[:, None]
    return EigenTonguesModel(
        mean=mean,
        basis=basis,
        eigenvalues=eigenvalues[:k].copy(),
        variance_target=float(variance_target),
        total_variance=total,
    )


def transform(model: EigenTonguesModel, frame: np.ndarray) -> np.ndarray:
    """Project a frame (or a stack of frames) onto the principal axes."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] != model.dim:
        raise ArgumentError(f"frame length {frame.shape[-1]} != model dimension {model.dim}")
    return (frame - model.mean) @ model.basis.T


def inverse_transform(model: EigenTonguesModel, coeffs: np.ndarray) -> np.ndarray:
    """Reconstruct a frame from coefficients (diagnostic use)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape[-1] != model.n_components:
        raise ArgumentError(
            f"coefficient length {coeffs.shape[-1]} != component count {model.n_components}"
        )
    return model.mean + coeffs @ model.basis


def reconstruction_mse(model: EigenTonguesModel, frames: np.ndarray) -> float:
    """Mean squared reconstruction error per pixel over a frame set.

    Normalized by (n-1)*d to match the unbiased eigenvalue convention, so on
    the training set it equals (sum of discarded eigenvalues) / d.
    """
    frames = np.asarray(frames, dtype=np.float64)
    residual = frames - inverse_transform(model, transform(model, frames))
    n = frames.shape[0]
    if n < 2:
        raise DataError("reconstruction_mse needs at least 2 frames")
    return float((residual * residual).sum() / ((n - 1) * model.dim))


def save_model(model: EigenTonguesModel, path: Path) -> None:
    """Write the model as a little-endian binary block with a versioned header."""
    header = struct.pack(
        "<4sIQQdd",
        _MAGIC,
        _VERSION,
        model.dim,
        model.n_components,
        model.variance_target,
        model.total_variance,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(model.mean.astype("<f8").tobytes())
        fh.write(model.eigenvalues.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(model.basis, dtype="<f8").tobytes())


def load_model(path: Path) -> EigenTonguesModel:
    data = Path(path).read_bytes()
    header_size = struct.calcsize("<4sIQQdd")
    if len(data) < header_size:
        raise FormatError(f"model file too short: {path}")
    magic, version, d, k, variance_target, total_variance = struct.unpack(
        "<4sIQQdd", data[:header_size]
    )
    if magic != _MAGIC:
        raise FormatError(f"bad magic in model file: {path}")
    if version != _VERSION:
        raise FormatError(f"unsupported model version {version} in {path}")
    expected = header_size + 8 * (d + k + k * d)
    if len(data) != expected:
        raise FormatError(f"model file length {len(data)} != expected {expected}")
    floats = np.frombuffer(data, dtype="<f8", offset=header_size)
    mean = floats[:d].copy()
    eigenvalues = floats[d : d + k].copy()
    basis = floats[d + k :].reshape(k, d).copy()
    return EigenTonguesModel(
        mean=mean,
        basis=basis,
        eigenvalues=eigenvalues,
        variance_target=variance_target,
        total_variance=total_variance,
    )
