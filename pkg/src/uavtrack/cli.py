"""Command-line pipelines: simulate, track, evaluate, align, clean, convert.

Every command is driven by a JSON config (plus flag overrides), writes
deterministic outputs for a fixed seed, and echoes the resolved config
and a machine-readable summary into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import dataio, ekf, metrics, tdoa, trajgen
from .config import ConfigError, RunConfig, write_resolved
from .dataio import AlignedPair, Segment, TimedSample
from .geodesy import EnuPoint, GeoPoint, from_enu
from .motionmodels import ModelKind, NoiseSigmas

log = logging.getLogger("uavtrack")


class RunError(RuntimeError):
    pass


class _WarningCounter(logging.Handler):
    def __init__(self):
        super().__init__(level=logging.WARNING)
        self.count = 0

    def emit(self, record):
        self.count += 1


def _write_lines(path, lines: Sequence[str]) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")


def _write_json(path, payload) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_aligned_csv(path, pairs: Sequence[AlignedPair]) -> None:
    lines = ["t_ms,uav_x,uav_y,rf_x,rf_y"]
    for p in pairs:
        lines.append(f"{p.t_ms},{p.uav.x:.6f},{p.uav.y:.6f},{p.rf.x:.6f},{p.rf.y:.6f}")
    _write_lines(path, lines)


def _read_aligned_csv(path) -> list[AlignedPair]:
    pairs = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        for row in reader:
            pairs.append(
                AlignedPair(
                    int(row["t_ms"]),
                    EnuPoint(float(row["uav_x"]), float(row["uav_y"])),
                    EnuPoint(float(row["rf_x"]), float(row["rf_y"])),
                )
            )
    return pairs


def _to_geo(samples: Sequence[TimedSample], origin: GeoPoint) -> list[TimedSample]:
    return [TimedSample(s.t_ms, from_enu(s.pos, origin)) for s in samples]


def _resolve_origin(cfg: RunConfig, uav_geo: Sequence[TimedSample]) -> GeoPoint:
    return cfg.origin() or uav_geo[0].pos


# ---------------------------------------------------------------------------
# simulate


def _decimate(samples, interval_ms: int):
    out, last = [], None
    for s in samples:
        if last is None or s.t_ms - last >= interval_ms:
            out.append(s)
            last = s.t_ms
    return out


def _position_noise_flight(truth, sigma_m, seed, interval_ms, outlier_rate, outlier_max_m):
    """Direct position-noise measurement model (bypasses the TDoA chain)."""
    out = []
    for s in _decimate(truth, interval_ms):
        rng = tdoa._epoch_rng(seed, s.t_ms)
        x = s.pos.x + rng.normal(0.0, sigma_m)
        y = s.pos.y + rng.normal(0.0, sigma_m)
        if outlier_rate > 0 and rng.random() < outlier_rate:
            theta = rng.uniform(0.0, 2.0 * math.pi)
            radius = outlier_max_m * math.sqrt(rng.random())
            x += radius * math.cos(theta)
            y += radius * math.sin(theta)
        out.append(TimedSample(s.t_ms, EnuPoint(x, y)))
    return out, 0


def _leg_sigmas(leg_dict: dict, leg: trajgen.LegSpec, defaults: dict) -> NoiseSigmas:
    d = dict(leg_dict.get("sigmas", {}))
    if leg.mm is ModelKind.CA:
        d.setdefault("jerk", defaults["jerk"])
    else:
        d.setdefault("accel", defaults["accel"])
    if leg.mm is ModelKind.CT:
        d.setdefault("omega", defaults["omega"])
    return NoiseSigmas(**{k: float(v) for k, v in d.items()})


def _segments_from_boundaries(boundaries, leg_dicts, step: int, defaults: dict) -> list[Segment]:
    segments = []
    prev_end = -1
    for i, (leg, first, last) in enumerate(boundaries):
        start_rf = max(prev_end + 1, -(-first // step))  # ceil division
        end_rf = last // step
        if end_rf < start_rf:
            log.warning("leg %d too short for a segment at the RF rate, skipped", i + 1)
            continue
        sig = _leg_sigmas(leg_dicts[i], leg, defaults)
        segments.append(Segment(f"S{i + 1}", start_rf, end_rf, leg.mm, sig))
        prev_end = end_rf
    return segments


def cmd_simulate(cfg: RunConfig, out_dir: Path) -> dict:
    sim = cfg.data["sim"]
    leg_dicts = sim["legs"]
    if not leg_dicts:
        raise RunError("sim.legs is empty: nothing to simulate")
    legs = [trajgen.leg_from_dict(d) for d in leg_dicts]
    origin = cfg.sim_origin()

    start = EnuPoint(float(sim["start"]["x"]), float(sim["start"]["y"]))
    truth, boundaries = trajgen.generate_truth(
        legs,
        start=start,
        heading_deg=float(sim["heading_deg"]),
        speed=float(sim["speed"]),
        dt_ms=int(sim["truth_dt_ms"]),
    )

    interval = int(sim["rf_interval_ms"])
    dt_ms = int(sim["truth_dt_ms"])
    if interval % dt_ms != 0:
        raise RunError(f"rf_interval_ms ({interval}) must be a multiple of truth_dt_ms ({dt_ms})")
    seed = int(sim["seed"])
    if sim["noise_model"] == "position":
        rf, dropped = _position_noise_flight(
            truth, float(sim["position_sigma_m"]), seed, interval,
            float(sim["outlier_rate"]), float(sim["outlier_max_m"]),
        )
    elif sim["noise_model"] == "tdoa":
        arr = cfg.sensor_array(origin)
        rf, dropped = tdoa.simulate_flight(
            truth, arr, float(sim["sigma_t"]), seed,
            decimate_ms=interval,
            outlier_rate=float(sim["outlier_rate"]),
            outlier_max_m=float(sim["outlier_max_m"]),
        )
    else:
        raise RunError(f"unknown noise model: {sim['noise_model']!r}")

    segments = _segments_from_boundaries(
        boundaries, leg_dicts, interval // dt_ms, cfg.data["filter"]["sigma_defaults"]
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    dataio.write_position_log(out_dir / "truth.csv", _to_geo(truth, origin))
    dataio.write_position_log(out_dir / "rf.csv", _to_geo(rf, origin))
    dataio.write_segments(out_dir / "segments.json", segments)
    write_resolved(out_dir / "resolved_config.json", cfg)
    return {
        "command": "simulate",
        "n_truth": len(truth),
        "n_rf": len(rf),
        "n_segments": len(segments),
        "dropped_epochs": dropped,
    }


# ---------------------------------------------------------------------------
# track


def cmd_track(cfg: RunConfig, out_dir: Path, raw: bool = False, parallel: int = 1) -> dict:
    uav_geo = dataio.parse_uav_log(cfg.input_path("truth"))
    rf_geo = dataio.parse_rf_log(cfg.input_path("rf"))
    origin = _resolve_origin(cfg, uav_geo)

    pairs = dataio.align(
        dataio.to_local(uav_geo, origin),
        dataio.to_local(rf_geo, origin),
        int(cfg.data["align"]["tol_ms"]),
    )
    if not pairs:
        raise RunError("no aligned pairs: timestamps never match within tolerance")

    if raw:
        kept, kept_idx = list(pairs), list(range(len(pairs)))
    else:
        threshold = float(cfg.data["clean"]["threshold_m"])
        kept_idx = [i for i, p in enumerate(pairs) if p.error_m() <= threshold]
        kept = [pairs[i] for i in kept_idx]
    if not kept:
        raise RunError("all pairs removed by cleaning: nothing to track")

    segments = dataio.load_segments(cfg.input_path("segments"), K=len(pairs))
    fcfg = cfg.data["filter"]
    filter_cfg = ekf.FilterConfig(
        R=ekf.estimate_R(kept, fcfg["r_mode"]),
        r_mode=fcfg["r_mode"],
        v_max=float(fcfg["v_max"]),
        accel_var=float(fcfg["accel_var"]),
        omega_var=float(fcfg["omega_var"]),
    )
    results, warnings = ekf.run_trajectory(
        segments, kept, filter_cfg, indices=kept_idx, max_workers=parallel
    )
    for w in warnings:
        log.warning("%s", w)

    by_index = dict(zip(kept_idx, kept))
    rf_err: dict[str, np.ndarray] = {}
    ekf_err: dict[str, np.ndarray] = {}
    track_lines = ["t_ms,segment,x,y,lat_deg,lon_deg"]
    for seg, track in results:
        seg_pairs = [by_index[i] for i in sorted(by_index) if seg.start_idx <= i <= seg.end_idx]
        rf_err[seg.id] = metrics.euclidean_errors([p.uav for p in seg_pairs], [p.rf for p in seg_pairs])
        ekf_err[seg.id] = metrics.euclidean_errors(
            [p.uav for p in seg_pairs], [tp.pos for tp in track]
        )
        for tp in track:
            g = from_enu(tp.pos, origin)
            track_lines.append(
                f"{tp.t_ms},{seg.id},{tp.pos.x:.6f},{tp.pos.y:.6f},{g.lat_deg:.10f},{g.lon_deg:.10f}"
            )

    rows = metrics.segment_report(segments, rf_err, ekf_err)
    all_rf = metrics.euclidean_errors([p.uav for p in kept], [p.rf for p in kept])
    all_ekf = np.concatenate([ekf_err[s.id] for s, _ in results]) if results else np.array([])

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_lines(out_dir / "track.csv", track_lines)
    _write_lines(out_dir / "report.csv", metrics.report_to_csv_rows(rows))
    _write_lines(out_dir / "cdf_rf.csv", metrics.cdf_to_csv_rows(metrics.cdf(all_rf)))
    if all_ekf.size:
        _write_lines(out_dir / "cdf_ekf.csv", metrics.cdf_to_csv_rows(metrics.cdf(all_ekf)))
    write_resolved(out_dir / "resolved_config.json", cfg)
    return {
        "command": "track",
        "raw": raw,
        "k_aligned": len(pairs),
        "k_used": len(kept),
        "n_segments_tracked": len(results),
    }


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(
    truth_path, est_path, segments_path, out_dir: Path, cfg: RunConfig
) -> dict:
    truth_geo = dataio.parse_uav_log(truth_path)
    est_geo = dataio.parse_rf_log(est_path)
    origin = _resolve_origin(cfg, truth_geo)
    pairs = dataio.align(
        dataio.to_local(truth_geo, origin),
        dataio.to_local(est_geo, origin),
        int(cfg.data["align"]["tol_ms"]),
    )
    if not pairs:
        raise RunError("no aligned pairs between truth and estimate logs")

    errors = metrics.euclidean_errors([p.uav for p in pairs], [p.rf for p in pairs])
    st = metrics.stats(errors)

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(
        out_dir / "stats.json",
        {"min_m": st.min_m, "max_m": st.max_m, "mean_m": st.mean_m, "std_m": st.std_m, "n": st.n},
    )
    _write_lines(out_dir / "cdf.csv", metrics.cdf_to_csv_rows(metrics.cdf(errors)))

    n_segments = 0
    if segments_path:
        segments = dataio.load_segments(segments_path, K=len(pairs))
        lines = ["segment,mm,stat,value_m"]
        for seg in segments:
            seg_e = errors[seg.start_idx : seg.end_idx + 1]
            if seg_e.size == 0:
                log.warning("segment %s has no data, omitted", seg.id)
                continue
            s = metrics.stats(seg_e)
            for stat in ("min", "max", "mean", "std"):
                lines.append(f"{seg.id},{seg.mm.value},{stat},{getattr(s, stat + '_m'):.4f}")
            n_segments += 1
        _write_lines(out_dir / "segment_stats.csv", lines)
    return {"command": "evaluate", "k_aligned": len(pairs), "n_segments": n_segments}


# ---------------------------------------------------------------------------
# small utilities


def cmd_convert(input_path, out_path, cfg: RunConfig) -> dict:
    samples = dataio.parse_uav_log(input_path)
    origin = _resolve_origin(cfg, samples)
    local = dataio.to_local(samples, origin)
    lines = ["t_ms,x,y"]
    for s in local:
        lines.append(f"{s.t_ms},{s.pos.x:.6f},{s.pos.y:.6f}")
    _write_lines(out_path, lines)
    return {"command": "convert", "n": len(samples)}


def cmd_align(uav_path, rf_path, out_path, cfg: RunConfig) -> dict:
    uav_geo = dataio.parse_uav_log(uav_path)
    rf_geo = dataio.parse_rf_log(rf_path)
    origin = _resolve_origin(cfg, uav_geo)
    pairs = dataio.align(
        dataio.to_local(uav_geo, origin),
        dataio.to_local(rf_geo, origin),
        int(cfg.data["align"]["tol_ms"]),
    )
    _write_aligned_csv(out_path, pairs)
    return {"command": "align", "n_pairs": len(pairs)}


def cmd_clean(input_path, out_path, cfg: RunConfig) -> dict:
    pairs = _read_aligned_csv(input_path)
    kept = dataio.clean(pairs, float(cfg.data["clean"]["threshold_m"]))
    _write_aligned_csv(out_path, kept)
    return {"command": "clean", "n_in": len(pairs), "n_out": len(kept)}


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavtrack",
        description="TDoA localization and segment-wise motion-model EKF tracking pipelines.",
    )
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--seed", type=int, help="override sim.seed")
    parser.add_argument("--tol-ms", type=int, help="override align.tol_ms")
    parser.add_argument("--threshold-m", type=float, help="override clean.threshold_m")
    parser.add_argument("--r-mode", choices=["mean", "mse"], help="override filter.r_mode")
    parser.add_argument("--parallel", type=int, default=1, metavar="N",
                        help="worker threads for per-segment filtering")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", help="generate truth/RF logs and a segment file")

    p_track = sub.add_parser("track", help="align, clean, filter, and report")
    p_track.add_argument("--raw", action="store_true", help="skip the error-threshold cleaning step")

    p_eval = sub.add_parser("evaluate", help="metrics-only comparison of two logs")
    p_eval.add_argument("truth", type=Path)
    p_eval.add_argument("estimate", type=Path)
    p_eval.add_argument("--segments", type=Path, help="optional segment file for per-segment stats")

    p_conv = sub.add_parser("convert", help="geodetic log to local east/north CSV")
    p_conv.add_argument("input", type=Path)
    p_conv.add_argument("--output", type=Path, required=True)

    p_align = sub.add_parser("align", help="timestamp-match a truth log and an estimate log")
    p_align.add_argument("--uav", type=Path, required=True)
    p_align.add_argument("--rf", type=Path, required=True)
    p_align.add_argument("--output", type=Path, required=True)

    p_clean = sub.add_parser("clean", help="drop aligned pairs above the error threshold")
    p_clean.add_argument("input", type=Path)
    p_clean.add_argument("--output", type=Path, required=True)
    return parser


def _apply_overrides(cfg: RunConfig, args) -> None:
    if args.seed is not None:
        cfg.data["sim"]["seed"] = args.seed
    if args.tol_ms is not None:
        cfg.data["align"]["tol_ms"] = args.tol_ms
    if args.threshold_m is not None:
        cfg.data["clean"]["threshold_m"] = args.threshold_m
    if args.r_mode is not None:
        cfg.data["filter"]["r_mode"] = args.r_mode


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    counter = _WarningCounter()
    logging.getLogger().addHandler(counter)

    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig.from_dict({})
        _apply_overrides(cfg, args)
        out_dir = args.out

        if args.command == "simulate":
            summary = cmd_simulate(cfg, out_dir)
        elif args.command == "track":
            summary = cmd_track(cfg, out_dir, raw=args.raw, parallel=args.parallel)
        elif args.command == "evaluate":
            summary = cmd_evaluate(args.truth, args.estimate, args.segments, out_dir, cfg)
        elif args.command == "convert":
            return _run_utility(lambda: cmd_convert(args.input, args.output, cfg), counter)
        elif args.command == "align":
            return _run_utility(lambda: cmd_align(args.uav, args.rf, args.output, cfg), counter)
        elif args.command == "clean":
            return _run_utility(lambda: cmd_clean(args.input, args.output, cfg), counter)
        else:  # pragma: no cover
            raise RunError(f"unknown command {args.command!r}")
    except (RunError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    summary["warnings"] = counter.count
    summary["errors"] = 0
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "summary.json", summary)
    return 0


def _run_utility(fn, counter) -> int:
    try:
        summary = fn()
    except (RunError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    summary["warnings"] = counter.count
    log.info("%s", json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
