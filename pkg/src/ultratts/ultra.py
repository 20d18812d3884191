"""Raw ultrasound recordings: sidecar metadata, frame loading, resizing, resampling.

A recording is a pair of files: ``<id>.ult`` holding raw unsigned 8-bit
echo-return samples (frame-major, scanline-major) and ``<id>.param`` holding
line-oriented ``Key=Value`` metadata that fixes the frame geometry and rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DataError, FormatError, MetadataError

_REQUIRED_KEYS = {
    "NumVectors": ("num_vectors", int),
    "PixPerVector": ("pix_per_vector", int),
    "FramesPerSec": ("frame_rate", float),
    "TimeInSecsOfFirstFrame": ("first_frame_offset", float),
}


@dataclass(frozen=True)
class UltrasoundMetadata:
    num_vectors: int
    pix_per_vector: int
    frame_rate: float
    first_frame_offset: float

    def __post_init__(self):
        if self.num_vectors < 1 or self.pix_per_vector < 1:
            raise MetadataError(
                f"frame geometry must be positive, got "
                f"{self.num_vectors}x{self.pix_per_vector}"
            )
        if not self.frame_rate > 0:
            raise MetadataError(f"FramesPerSec must be > 0, got {self.frame_rate}")
        if not math.isfinite(self.first_frame_offset):
            raise MetadataError("TimeInSecsOfFirstFrame must be finite")

    @property
    def frame_size(self) -> int:
        """Bytes per frame in the raw file."""
        return self.num_vectors * self.pix_per_vector


@dataclass(frozen=True)
class UltrasoundSequence:
    metadata: UltrasoundMetadata
    frames: np.ndarray  # (n_frames, num_vectors, pix_per_vector) uint8

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def parse_metadata(text: str) -> UltrasoundMetadata:
    """Parse a ``Key=Value`` sidecar document into metadata.

    Unknown keys are ignored. Raises MetadataError when a required key is
    missing or a value does not parse as a number.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _REQUIRED_KEYS:
            continue
        field, cast = _REQUIRED_KEYS[key]
        try:
            values[field] = cast(value.strip())
        except ValueError as e:
            raise MetadataError(f"line {lineno}: cannot parse {key}={value.strip()!r}") from e
    for key, (field, _) in _REQUIRED_KEYS.items():
        if field not in values:
            raise MetadataError(f"{key} missing")
    return UltrasoundMetadata(**values)


def serialize_metadata(meta: UltrasoundMetadata) -> str:
    """Render metadata back into the sidecar ``Key=Value`` format."""
    return (
        f"NumVectors={meta.num_vectors}\n"
        f"PixPerVector={meta.pix_per_vector}\n"
        f"FramesPerSec={meta.frame_rate!r}\n"
        f"TimeInSecsOfFirstFrame={meta.first_frame_offset!r}\n"
    )


def load_sequence(data: bytes, meta: UltrasoundMetadata) -> UltrasoundSequence:
    """Split a raw octet stream into frames in recording order."""
    frame_size = meta.frame_size
    remainder = len(data) % frame_size
    if remainder != 0:
        raise FormatError(
            f"byte count {len(data)} is not a multiple of the frame size "
            f"{frame_size} (remainder={remainder})"
        )
    n = len(data) // frame_size
    frames = np.frombuffer(data, dtype=np.uint8).reshape(
        n, meta.num_vectors, meta.pix_per_vector
    )
    return UltrasoundSequence(metadata=meta, frames=frames)


def serialize_sequence(seq: UltrasoundSequence) -> bytes:
    """Inverse of load_sequence; byte-identical round trip."""
    return np.ascontiguousarray(seq.frames, dtype=np.uint8).tobytes()


def read_utterance(ult_path: Path) -> UltrasoundSequence:
    """Load ``<id>.ult`` together with its ``<id>.param`` sidecar."""
    ult_path = Path(ult_path)
    param_path = ult_path.with_suffix(".param")
    if not param_path.exists():
        raise MetadataError(f"sidecar file not found: {param_path}")
    meta = parse_metadata(param_path.read_text())
    return load_sequence(ult_path.read_bytes(), meta)


def discover_utterances(ult_dir: Path) -> list[str]:
    """Utterance ids from a directory scan; lexicographic order is recording order."""
    ids = sorted(p.stem for p in Path(ult_dir).glob("*.ult"))
    if not ids:
        raise DataError(f"no .ult files found in {ult_dir}")
    return ids


def _cubic_kernel(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Cubic convolution kernel with sharpness parameter ``a``."""
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    inner = (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0
    outer = a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a
    return np.where(ax <= 1.0, inner, np.where(ax < 2.0, outer, 0.0))


@lru_cache(maxsize=64)
def _resize_weights(n_in: int, n_out: int) -> np.ndarray:
    """Dense (n_out, n_in) weight matrix for one axis of a cubic resize.

    Output sample i reads input coordinate (i + 0.5) * n_in / n_out - 0.5;
    taps falling outside the image are clamped to the border, which folds
    their weight onto the edge sample (border replication).
    """
    scale = n_in / n_out
    weights = np.zeros((n_out, n_in))
    for i in range(n_out):
        s = (i + 0.5) * scale - 0.5
        base = math.floor(s)
        t = s - base
        taps = np.array([base - 1, base, base + 1, base + 2])
        w = _cubic_kernel(np.array([1.0 + t, t, 1.0 - t, 2.0 - t]))
        for tap, wk in zip(np.clip(taps, 0, n_in - 1), w):
            weights[i, tap] += wk
    return weights


def resize_bicubic(frame: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Resize a 2-D image with separable cubic convolution (a = -0.5).

    Returns float64 values; no re-quantization. Border samples are replicated.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2 or frame.shape[0] < 2 or frame.shape[1] < 2:
        raise ArgumentError(f"input must be a 2-D image of at least 2x2, got shape {frame.shape}")
    if out_rows < 1 or out_cols < 1:
        raise ArgumentError(f"output dimensions must be >= 1, got {out_rows}x{out_cols}")
    row_w = _resize_weights(frame.shape[0], out_rows)
    col_w = _resize_weights(frame.shape[1], out_cols)
    return row_w @ frame @ col_w.T


def resample_to_frame_clock(
    seq: UltrasoundSequence, frame_shift: float, n_target: int
) -> np.ndarray:
    """Nearest source frame index for each tick of a uniform target clock.

    Target frame k sits at time k * frame_shift; its source index is
    round((t - first_frame_offset) * frame_rate), half up, clamped to the
    recording. A 5 ms shift realizes a 200 Hz clock.
    """
    if not frame_shift > 0:
        raise ArgumentError(f"frame_shift must be > 0, got {frame_shift}")
    if n_target < 0:
        raise ArgumentError(f"n_target must be >= 0, got {n_target}")
    if seq.n_frames == 0:
        if n_target > 0:
            raise DataError("cannot resample an empty ultrasound sequence")
        return np.zeros(0, dtype=np.int64)
    meta = seq.metadata
    t = np.arange(n_target, dtype=np.float64) * frame_shift
    raw = (t - meta.first_frame_offset) * meta.frame_rate
    idx = np.floor(raw + 0.5).astype(np.int64)
    return np.clip(idx, 0, seq.n_frames - 1)


def resampled_resized_frames(
    seq: UltrasoundSequence, frame_shift: float, n_target: int, out_rows: int, out_cols: int
) -> np.ndarray:
    """Flattened resized frames on the target clock, shape (n_target, out_rows*out_cols).

    Only the selected source frames are resized; repeated selections reuse
    the same resized image.
    """
    indices = resample_to_frame_clock(seq, frame_shift, n_target)
    unique, inverse = np.unique(indices, return_inverse=True)
    resized = np.stack(
        [resize_bicubic(seq.frames[i], out_rows, out_cols).ravel() for i in unique]
    )
    return resized[inverse]
