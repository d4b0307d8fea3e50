"""Discrete extended Kalman filter run independently over each segment.

Predict with the segment's motion model over the actual inter-sample
interval, update with the RF position measurement. Covariance updates use
the Joseph form and are re-symmetrized after every step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataio import AlignedPair, Segment
from .geodesy import EnuPoint
from .motionmodels import (
    ModelKind,
    NoiseSigmas,
    jacobian,
    measurement_matrix,
    process_noise,
    transition,
)

log = logging.getLogger(__name__)


class FilterError(ValueError):
    """Dimension mismatch or degenerate numerics in a filter step."""


@dataclass(frozen=True)
class FilterState:
    s: np.ndarray
    P: np.ndarray
    t_ms: int


@dataclass(frozen=True)
class MeasurementModel:
    H: np.ndarray
    R: np.ndarray


@dataclass(frozen=True)
class TrackPoint:
    t_ms: int
    pos: EnuPoint
    state: FilterState


Track = list  # list[TrackPoint]


@dataclass(frozen=True)
class FilterConfig:
    """Filter tuning shared across segments.

    ``r_mode`` selects how :func:`estimate_R` summarizes the RF error:
    ``"mean"`` (mean Euclidean error on the diagonal) or ``"mse"``
    (per-axis mean squared errors). An explicit ``R`` overrides both.
    """

    R: Optional[np.ndarray] = None
    r_mode: str = "mean"
    v_max: float = 20.0
    accel_var: float = 25.0
    omega_var: float = 1.0

    def __post_init__(self):
        if self.r_mode not in ("mean", "mse"):
            raise FilterError(f"unknown R mode: {self.r_mode!r}")


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def predict(fs: FilterState, mm: ModelKind, T: float, Q: np.ndarray) -> FilterState:
    """Time update: propagate mean and covariance over ``T`` seconds."""
    n = mm.state_dim
    Q = np.asarray(Q, dtype=float)
    if fs.s.shape != (n,) or fs.P.shape != (n, n) or Q.shape != (n, n):
        raise FilterError(
            f"inconsistent dimensions for {mm.value}: s{fs.s.shape} P{fs.P.shape} Q{Q.shape}"
        )
    F = jacobian(mm, fs.s, T)
    s_pred = transition(mm, fs.s, T)
    P_pred = _symmetrize(F @ fs.P @ F.T + Q)
    return FilterState(s_pred, P_pred, fs.t_ms + round(T * 1000))


def update(fs_pred: FilterState, z: EnuPoint, meas: MeasurementModel) -> FilterState:
    """Measurement update with the RF position fix (Joseph form)."""
    H = np.asarray(meas.H, dtype=float)
    R = np.asarray(meas.R, dtype=float)
    n = fs_pred.s.shape[0]
    if H.shape != (2, n) or R.shape != (2, 2):
        raise FilterError(f"inconsistent measurement dimensions: H{H.shape} R{R.shape}")

    zv = np.array([z.x, z.y])
    S = H @ fs_pred.P @ H.T + R
    try:
        K = np.linalg.solve(S.T, (fs_pred.P @ H.T).T).T
    except np.linalg.LinAlgError as exc:
        raise FilterError(f"singular innovation covariance: {S}") from exc
    s = fs_pred.s + K @ (zv - H @ fs_pred.s)
    ImKH = np.eye(n) - K @ H
    P = _symmetrize(ImKH @ fs_pred.P @ ImKH.T + K @ R @ K.T)
    return FilterState(s, P, fs_pred.t_ms)


def estimate_R(pairs: Sequence[AlignedPair], mode: str = "mean") -> np.ndarray:
    """Measurement-noise covariance from the aligned RF errors.

    ``"mean"`` puts the mean Euclidean error (meters) on both diagonal
    entries; ``"mse"`` uses per-axis mean squared errors (meters^2).
    """
    if not pairs:
        raise FilterError("cannot estimate R from empty input")
    dx = np.array([p.rf.x - p.uav.x for p in pairs])
    dy = np.array([p.rf.y - p.uav.y for p in pairs])
    if mode == "mean":
        m = float(np.mean(np.hypot(dx, dy)))
        return np.diag([m, m])
    if mode == "mse":
        return np.diag([float(np.mean(dx**2)), float(np.mean(dy**2))])
    raise FilterError(f"unknown R mode: {mode!r}")


def _initial_state(seg: Segment, first: AlignedPair, R: np.ndarray, cfg: FilterConfig) -> FilterState:
    n = seg.mm.state_dim
    s = np.zeros(n)
    s[0], s[1] = first.rf.x, first.rf.y
    diag = np.zeros(n)
    diag[0], diag[1] = R[0, 0], R[1, 1]
    diag[2] = diag[3] = cfg.v_max**2
    if seg.mm is ModelKind.CA:
        diag[4] = diag[5] = cfg.accel_var
    elif seg.mm is ModelKind.CT:
        diag[4] = cfg.omega_var
    return FilterState(s, np.diag(diag), first.t_ms)


def run_segment(
    seg: Segment, pairs: Sequence[AlignedPair], cfg: FilterConfig
) -> Optional[Track]:
    """Filter one segment's aligned pairs; ``None`` signals a skipped segment.

    Initializes position from the first RF measurement of the segment with
    zero velocity (and acceleration / turn rate) under inflated covariance.
    """
    if len(pairs) < 2:
        log.warning("segment %s has %d pair(s), skipping", seg.id, len(pairs))
        return None
    R = cfg.R if cfg.R is not None else estimate_R(pairs, cfg.r_mode)
    meas = MeasurementModel(measurement_matrix(seg.mm), R)

    fs = _initial_state(seg, pairs[0], R, cfg)
    track: Track = [TrackPoint(fs.t_ms, EnuPoint(fs.s[0], fs.s[1]), fs)]
    for prev, cur in zip(pairs, pairs[1:]):
        T = (cur.t_ms - prev.t_ms) / 1000.0
        if T <= 0:
            raise FilterError(f"segment {seg.id}: non-increasing timestamps at {cur.t_ms}")
        Q = process_noise(seg.mm, T, seg.sigmas)
        fs = update(predict(fs, seg.mm, T, Q), cur.rf, meas)
        track.append(TrackPoint(cur.t_ms, EnuPoint(fs.s[0], fs.s[1]), fs))
    return track


def run_trajectory(
    segments: Sequence[Segment],
    pairs: Sequence[AlignedPair],
    cfg: FilterConfig,
    indices: Optional[Sequence[int]] = None,
    max_workers: int = 1,
) -> tuple[list[tuple[Segment, Track]], list[str]]:
    """Run each segment independently; no state carries across segments.

    ``indices`` maps each pair to its position in the aligned sequence the
    segment indices refer to (identity when cleaning removed nothing).
    Returns (per-segment tracks, warning messages); failed segments warn
    and are omitted.
    """
    if indices is None:
        indices = range(len(pairs))
    by_index = list(zip(indices, pairs))
    segments = sorted(segments, key=lambda s: s.start_idx)

    def _run(seg: Segment):
        seg_pairs = [p for i, p in by_index if seg.start_idx <= i <= seg.end_idx]
        try:
            return run_segment(seg, seg_pairs, cfg)
        except FilterError as exc:
            return exc

    warnings: list[str] = []
    results: list[tuple[Segment, Track]] = []
    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(_run, segments))
    else:
        outcomes = [_run(seg) for seg in segments]

    for seg, track in zip(segments, outcomes):
        if track is None:
            warnings.append(f"segment {seg.id}: too few pairs, skipped")
        elif isinstance(track, FilterError):
            warnings.append(f"segment {seg.id}: {track}")
        else:
            results.append((seg, track))
    return results, warnings
