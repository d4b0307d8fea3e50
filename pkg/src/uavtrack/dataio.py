"""Log parsing, timestamp alignment, error-threshold cleaning, segments.

File formats:
    UAV / RF logs: CSV with header ``t_ms,lat_deg,lon_deg``.
    Segment file:  JSON array of ``{id, start_idx, end_idx, mm, sigmas}``.
"""

from __future__ import annotations

import bisect
import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .geodesy import EnuPoint, GeoPoint, GeodesyError, to_enu
from .motionmodels import ModelKind, NoiseSigmas

log = logging.getLogger(__name__)

LOG_HEADER = ["t_ms", "lat_deg", "lon_deg"]
DEFAULT_CLEAN_THRESHOLD_M = 60.0


class ParseError(ValueError):
    def __init__(self, path, line_no, msg):
        super().__init__(f"{path}:{line_no}: {msg}")
        self.path = path
        self.line_no = line_no


class EmptyInputError(ValueError):
    pass


class SegmentError(ValueError):
    pass


@dataclass(frozen=True)
class TimedSample:
    t_ms: int
    pos: Union[GeoPoint, EnuPoint]


@dataclass(frozen=True)
class AlignedPair:
    t_ms: int
    uav: EnuPoint
    rf: EnuPoint

    def error_m(self) -> float:
        return float(np.hypot(self.uav.x - self.rf.x, self.uav.y - self.rf.y))


@dataclass(frozen=True)
class Segment:
    """Inclusive index range of the aligned sequence with one motion model."""

    id: str
    start_idx: int
    end_idx: int
    mm: ModelKind
    sigmas: NoiseSigmas


def _parse_position_log(path) -> list[TimedSample]:
    path = Path(path)
    samples: dict[int, TimedSample] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise EmptyInputError(f"{path}: empty file")
        if [h.strip() for h in header] != LOG_HEADER:
            raise ParseError(path, 1, f"expected header {','.join(LOG_HEADER)}, got {','.join(header)}")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ParseError(path, line_no, f"expected 3 fields, got {len(row)}")
            try:
                t_ms = int(row[0])
                pos = GeoPoint(float(row[1]), float(row[2]))
            except (ValueError, GeodesyError) as exc:
                raise ParseError(path, line_no, str(exc)) from exc
            if t_ms in samples:
                log.warning("%s:%d: duplicate timestamp %d, keeping first", path, line_no, t_ms)
                continue
            samples[t_ms] = TimedSample(t_ms, pos)
    if not samples:
        raise EmptyInputError(f"{path}: no data rows")
    return [samples[t] for t in sorted(samples)]


def parse_uav_log(path) -> list[TimedSample]:
    """Ground-truth GPS log (~10 Hz)."""
    return _parse_position_log(path)


def parse_rf_log(path) -> list[TimedSample]:
    """RF-sensor estimate log (~1 Hz)."""
    return _parse_position_log(path)


def write_position_log(path, samples: Sequence[TimedSample]) -> None:
    """Write geodetic samples in the standard log schema (deterministic bytes)."""
    with open(path, "w", newline="\n", encoding="utf-8") as f:
        f.write(",".join(LOG_HEADER) + "\n")
        for s in samples:
            f.write(f"{s.t_ms},{s.pos.lat_deg:.10f},{s.pos.lon_deg:.10f}\n")


def to_local(samples: Sequence[TimedSample], origin: GeoPoint) -> list[TimedSample]:
    """Convert geodetic samples to the local east/north frame."""
    return [TimedSample(s.t_ms, to_enu(s.pos, origin)) for s in samples]


def align(
    uav: Sequence[TimedSample], rf: Sequence[TimedSample], tol_ms: int = 1
) -> list[AlignedPair]:
    """Match each RF sample to the nearest UAV sample within ``tol_ms``.

    RF samples without a match are dropped; each UAV sample is used at
    most once. Inputs must be sorted by timestamp and in the local frame.
    """
    if tol_ms < 0:
        raise ValueError(f"tol_ms must be >= 0, got {tol_ms}")
    uav_t = [s.t_ms for s in uav]
    used: set[int] = set()
    pairs: list[AlignedPair] = []
    for r in rf:
        lo = bisect.bisect_left(uav_t, r.t_ms - tol_ms)
        hi = bisect.bisect_right(uav_t, r.t_ms + tol_ms)
        candidates = sorted((abs(uav_t[j] - r.t_ms), j) for j in range(lo, hi))
        for _, j in candidates:
            if j not in used:
                used.add(j)
                pairs.append(AlignedPair(r.t_ms, uav=uav[j].pos, rf=r.pos))
                break
    return pairs


def clean(
    pairs: Sequence[AlignedPair], threshold_m: float = DEFAULT_CLEAN_THRESHOLD_M
) -> list[AlignedPair]:
    """Drop pairs whose localization error is strictly above ``threshold_m``."""
    if not threshold_m > 0:
        raise ValueError(f"threshold_m must be positive, got {threshold_m}")
    return [p for p in pairs if p.error_m() <= threshold_m]


def _sigmas_from_dict(d: dict) -> NoiseSigmas:
    known = {"accel", "jerk", "omega"}
    unknown = set(d) - known
    if unknown:
        raise SegmentError(f"unknown sigma keys: {sorted(unknown)}")
    return NoiseSigmas(**{k: float(v) for k, v in d.items()})


def load_segments(path, K: int) -> list[Segment]:
    """Load and validate the segment file against an aligned sequence of length ``K``.

    Indices not covered by any segment are implicitly excluded from tracking.
    """
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, list):
        raise SegmentError(f"{path}: expected a JSON array of segments")

    segments = []
    for entry in raw:
        try:
            sid = str(entry["id"])
            start = int(entry["start_idx"])
            end = int(entry["end_idx"])
            mm_label = entry["mm"]
            sigmas = _sigmas_from_dict(entry.get("sigmas", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise SegmentError(f"{path}: malformed segment entry {entry!r}: {exc}") from exc
        try:
            mm = ModelKind(mm_label)
        except ValueError:
            raise SegmentError(f"segment {sid}: unknown motion model {mm_label!r}") from None
        if not (0 <= start <= end < K):
            raise SegmentError(
                f"segment {sid}: indices [{start}, {end}] out of range for K={K}"
            )
        segments.append(Segment(sid, start, end, mm, sigmas))

    segments.sort(key=lambda s: s.start_idx)
    for a, b in zip(segments, segments[1:]):
        if b.start_idx <= a.end_idx:
            raise SegmentError(f"segments {a.id} and {b.id} overlap")
    return segments


def write_segments(path, segments: Sequence[Segment]) -> None:
    payload = [
        {
            "id": s.id,
            "start_idx": s.start_idx,
            "end_idx": s.end_idx,
            "mm": s.mm.value,
            "sigmas": {"accel": s.sigmas.accel, "jerk": s.sigmas.jerk, "omega": s.sigmas.omega},
        }
        for s in segments
    ]
    with open(path, "w", newline="\n", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
