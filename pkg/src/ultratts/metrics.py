"""Objective measures between reference and predicted acoustic streams.

Five quantities per (system, split): mel-cepstral distortion, band
aperiodicity distortion, F0 RMSE in Hz, F0 Pearson correlation, and the
voiced/unvoiced decision error rate. Conventions: MCD excludes the 0th
cepstral coefficient; BAP uses the same formula over all coefficients
divided by 10; F0 measures are taken on exponentiated (Hz-scale) values over
frames voiced in both streams. Undefined quantities are reported as NaN,
never as 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .acoustic import AcousticStreams
from .errors import ArgumentError, DataError

_LOG_SCALE = 10.0 / math.log(10.0)

CONVENTION_NOTES = (
    "mcd_db: frame-mean of (10/ln10)*sqrt(2*sum(diff^2)) over cepstral "
    "coefficients 1..D-1 (0th excluded)",
    "bap_db: same formula over all coefficients, divided by 10",
    "f0 metrics: Hz scale (exponentiated), frames voiced in both streams",
)


def mcd(ref_mgc: np.ndarray, pred_mgc: np.ndarray) -> float:
    """Mel-cepstral distortion in dB, averaged over frames."""
    return float(np.mean(_mcd_frames(ref_mgc, pred_mgc)))


def bap_distortion(ref_bap: np.ndarray, pred_bap: np.ndarray) -> float:
    """Band-aperiodicity distortion in dB, averaged over frames."""
    return float(np.mean(_bap_frames(ref_bap, pred_bap)))


def _mcd_frames(ref: np.ndarray, pred: np.ndarray) -> np.ndarray:
    ref, pred = _check_pair(ref, pred)
    diff = ref[:, 1:] - pred[:, 1:]
    return _LOG_SCALE * np.sqrt(2.0 * np.sum(diff * diff, axis=1))


def _bap_frames(ref: np.ndarray, pred: np.ndarray) -> np.ndarray:
    ref, pred = _check_pair(ref, pred)
    diff = ref - pred
    return _LOG_SCALE * np.sqrt(2.0 * np.sum(diff * diff, axis=1)) / 10.0


def _check_pair(ref: np.ndarray, pred: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.atleast_2d(np.asarray(ref, dtype=np.float64))
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    if ref.shape != pred.shape:
        raise ArgumentError(f"shape mismatch: {ref.shape} vs {pred.shape}")
    return ref, pred


def f0_metrics(
    ref_lf0: np.ndarray,
    ref_vuv: np.ndarray,
    pred_lf0: np.ndarray,
    pred_vuv: np.ndarray,
) -> tuple[float, float, float]:
    """(rmse_hz, corr, vuv_error_pct) over frames voiced in both streams.

    With no commonly voiced frame, RMSE and correlation are NaN; correlation
    is also NaN when either Hz series has zero variance.
    """
    ref_lf0, pred_lf0 = np.ravel(ref_lf0), np.ravel(pred_lf0)
    ref_vuv, pred_vuv = np.ravel(ref_vuv), np.ravel(pred_vuv)
    if not (ref_lf0.size == pred_lf0.size == ref_vuv.size == pred_vuv.size):
        raise ArgumentError("f0 streams must share length")
    n = ref_vuv.size
    if n == 0:
        raise DataError("empty f0 streams")
    vuv_error = 100.0 * float(np.count_nonzero((ref_vuv > 0.5) != (pred_vuv > 0.5))) / n

    both = (ref_vuv > 0.5) & (pred_vuv > 0.5)
    if not np.any(both):
        return math.nan, math.nan, vuv_error
    hz_ref = np.exp(ref_lf0[both])
    hz_pred = np.exp(pred_lf0[both])
    rmse = float(np.sqrt(np.mean((hz_ref - hz_pred) ** 2)))
    dr = hz_ref - hz_ref.mean()
    dp = hz_pred - hz_pred.mean()
    denom = math.sqrt(float(np.sum(dr * dr)) * float(np.sum(dp * dp)))
    corr = float(np.sum(dr * dp)) / denom if denom > 0.0 else math.nan
    return rmse, corr, vuv_error


@dataclass(frozen=True)
class UtteranceEval:
    """Per-utterance error sums; holds enough to pool exactly across utterances."""

    utt_id: str
    n_frames: int
    mcd_sum: float
    bap_sum: float
    vuv_mismatches: int
    n_voiced_both: int
    sq_err_sum: float  # sum of squared Hz errors over commonly voiced frames
    sum_r: float
    sum_p: float
    sum_rr: float
    sum_pp: float
    sum_rp: float


def evaluate_utterance(
    utt_id: str,
    ref: AcousticStreams,
    ref_vuv: np.ndarray,
    pred: AcousticStreams,
    pred_vuv: np.ndarray,
) -> UtteranceEval:
    """Error sums for one utterance; no time warping is applied."""
    mcd_frames = _mcd_frames(ref.mgc, pred.mgc)
    bap_frames = _bap_frames(ref.bap, pred.bap)
    ref_vuv = np.ravel(ref_vuv)
    pred_vuv = np.ravel(pred_vuv)
    n = ref.n_frames
    if pred.n_frames != n or ref_vuv.size != n or pred_vuv.size != n:
        raise ArgumentError(f"frame count mismatch for {utt_id}")
    both = (ref_vuv > 0.5) & (pred_vuv > 0.5)
    hz_ref = np.exp(ref.lf0[both])
    hz_pred = np.exp(pred.lf0[both])
    return UtteranceEval(
        utt_id=utt_id,
        n_frames=n,
        mcd_sum=float(mcd_frames.sum()),
        bap_sum=float(bap_frames.sum()),
        vuv_mismatches=int(np.count_nonzero((ref_vuv > 0.5) != (pred_vuv > 0.5))),
        n_voiced_both=int(np.count_nonzero(both)),
        sq_err_sum=float(np.sum((hz_ref - hz_pred) ** 2)),
        sum_r=float(hz_ref.sum()),
        sum_p=float(hz_pred.sum()),
        sum_rr=float(np.sum(hz_ref * hz_ref)),
        sum_pp=float(np.sum(hz_pred * hz_pred)),
        sum_rp=float(np.sum(hz_ref * hz_pred)),
    )


@dataclass(frozen=True)
class EvaluationReport:
    speaker: str
    system: str  # ult2wav | txt2wav | txt+ult2wav
    split: str  # dev | test
    variant: str  # mlpg | static
    mcd_db: float
    bap_db: float
    f0_rmse_hz: float
    f0_corr: float
    vuv_error_pct: float
    n_frames: int
    n_voiced_both: int


def aggregate(
    utterances: Sequence[UtteranceEval],
    speaker: str = "",
    system: str = "",
    split: str = "",
    variant: str = "",
) -> EvaluationReport:
    """Pool utterance error sums into one report (frame-weighted means)."""
    if not utterances:
        raise DataError("no utterance evaluations to aggregate")
    n = sum(u.n_frames for u in utterances)
    nv = sum(u.n_voiced_both for u in utterances)
    mcd_db = sum(u.mcd_sum for u in utterances) / n
    bap_db = sum(u.bap_sum for u in utterances) / n
    vuv = 100.0 * sum(u.vuv_mismatches for u in utterances) / n
    if nv > 0:
        rmse = math.sqrt(sum(u.sq_err_sum for u in utterances) / nv)
        sum_r = sum(u.sum_r for u in utterances)
        sum_p = sum(u.sum_p for u in utterances)
        var_r = sum(u.sum_rr for u in utterances) - sum_r * sum_r / nv
        var_p = sum(u.sum_pp for u in utterances) - sum_p * sum_p / nv
        cov = sum(u.sum_rp for u in utterances) - sum_r * sum_p / nv
        corr = cov / math.sqrt(var_r * var_p) if var_r > 0.0 and var_p > 0.0 else math.nan
    else:
        rmse = corr = math.nan
    return EvaluationReport(
        speaker=speaker,
        system=system,
        split=split,
        variant=variant,
        mcd_db=mcd_db,
        bap_db=bap_db,
        f0_rmse_hz=rmse,
        f0_corr=corr,
        vuv_error_pct=vuv,
        n_frames=n,
        n_voiced_both=nv,
    )


def write_report_csv(reports: Iterable[EvaluationReport], path: Path) -> None:
    names = [f.name for f in fields(EvaluationReport)]
    with open(path, "w", newline="") as fh:
        for note in CONVENTION_NOTES:
            fh.write(f"# {note}\n")
        writer = csv.writer(fh)
        writer.writerow(names)
        for report in reports:
            writer.writerow(
                [repr(v) if isinstance(v, float) else v for v in (getattr(report, n) for n in names)]
            )


def read_report_csv(path: Path) -> list[EvaluationReport]:
    with open(path, newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows)
    out = []
    for row in reader:
        out.append(
            EvaluationReport(
                speaker=row["speaker"],
                system=row["system"],
                split=row["split"],
                variant=row["variant"],
                mcd_db=float(row["mcd_db"]),
                bap_db=float(row["bap_db"]),
                f0_rmse_hz=float(row["f0_rmse_hz"]),
                f0_corr=float(row["f0_corr"]),
                vuv_error_pct=float(row["vuv_error_pct"]),
                n_frames=int(row["n_frames"]),
                n_voiced_both=int(row["n_voiced_both"]),
            )
        )
    return out


_METRIC_COLUMNS = (
    ("MCD", "mcd_db", "{:.3f}"),
    ("BAP", "bap_db", "{:.3f}"),
    ("F0-RMSE", "f0_rmse_hz", "{:.3f}"),
    ("F0-CORR", "f0_corr", "{:.3f}"),
    ("F0-VUV", "vuv_error_pct", "{:.3f}"),
)

_SYSTEM_ORDER = ("ult2wav", "txt2wav", "txt+ult2wav")


def render_tables(reports: Sequence[EvaluationReport]) -> str:
    """Aligned text tables, one per metric: speaker rows, system columns,
    each cell holding ``dev / test`` values."""
    lines = [f"# {note}" for note in CONVENTION_NOTES]
    variants = sorted({r.variant for r in reports})
    for variant in variants:
        subset = [r for r in reports if r.variant == variant]
        speakers = sorted({r.speaker for r in subset})
        systems = [s for s in _SYSTEM_ORDER if any(r.system == s for r in subset)]
        systems += sorted({r.system for r in subset} - set(_SYSTEM_ORDER))
        by_key = {(r.speaker, r.system, r.split): r for r in subset}
        for title, attr, fmt in _METRIC_COLUMNS:
            lines.append("")
            lines.append(f"{title} ({variant}) on the dev/test set")
            width = max(17, *(len(s) + 2 for s in systems))
            header = "Spkr".ljust(8) + "".join(s.center(width) for s in systems)
            lines.append(header)
            lines.append("-" * len(header))
            for speaker in speakers:
                cells = []
                for system in systems:
                    parts = []
                    for split in ("dev", "test"):
                        r = by_key.get((speaker, system, split))
                        parts.append(fmt.format(getattr(r, attr)) if r else "-")
                    cells.append(f"{parts[0]} / {parts[1]}".center(width))
                lines.append(speaker.ljust(8) + "".join(cells))
    return "\n".join(lines) + "\n"
