"""Analysis report generation: delimited output plus rendered figures."""
from __future__ import annotations

import json
from pathlib import Path

from .analysis import (
    MotionFeatures,
    analyze_clip,
    extract_features,
    library_max_accel_p75,
    speed_profile,
)
from .model import ExpressionClip
from .plots import save_spectrum_figure, save_speed_figure, save_trajectory_figure

REPORT_COLUMNS = (
    "clip_id",
    "emotion",
    "iteration",
    "final",
    "duration_ms",
    "sample_count",
    "speed_mean_dps",
    "speed_max_dps",
    "tilt_mean_deg",
    "tilt_min_deg",
    "pan_oscillations",
    "tilt_oscillations",
    "dominant_axis",
    "peak_count",
    "peak_rate_hz",
    "max_accel_dps2",
    "mean_peak_accel_dps2",
    "sparc",
    "signature_ok",
)


def analyze_library(clips: list[ExpressionClip]) -> list[dict]:
    """Per-clip analysis with the surprise percentile taken over the set."""
    features: list[MotionFeatures] = []
    for clip in clips:
        try:
            features.append(extract_features(clip))
        except ValueError:
            pass
    p75 = library_max_accel_p75(features) if features else None
    return [analyze_clip(clip, p75) for clip in clips]


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def report_csv(rows: list[dict]) -> bytes:
    lines = [",".join(REPORT_COLUMNS)]
    for row in rows:
        lines.append(",".join(_csv_cell(row.get(col)) for col in REPORT_COLUMNS))
    return ("\n".join(lines) + "\n").encode("ascii")


def write_report(clips: list[ExpressionClip], out_dir, figures: bool = True) -> dict:
    """Write report.json + report.csv (+ figures) under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = analyze_library(clips)
    json_path = out_dir / "report.json"
    json_path.write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    csv_path = out_dir / "report.csv"
    csv_path.write_bytes(report_csv(rows))
    figure_paths: list[str] = []
    if figures:
        for clip in clips:
            stem = clip.clip_id.replace("/", "_")
            figure_paths.append(str(save_trajectory_figure(clip, out_dir / f"{stem}_trajectory.png")))
            if clip.sample_count >= 2:
                profile = speed_profile(clip)
                figure_paths.append(
                    str(save_speed_figure(profile, clip.clip_id, out_dir / f"{stem}_speed.png"))
                )
                figure_paths.append(
                    str(save_spectrum_figure(profile, clip.clip_id, out_dir / f"{stem}_spectrum.png"))
                )
    return {
        "rows": rows,
        "json_path": str(json_path),
        "csv_path": str(csv_path),
        "figures": figure_paths,
    }
