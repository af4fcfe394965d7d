"""Clip persistence: one JSON document per clip, plus CSV export.

Degrees are serialized with exactly 4 decimal places. Tick resolution is
about 0.147 degrees, so 4 places round-trip losslessly: for any |v| <= 150
already rounded to 4 decimals, float(f"{v:.4f}") == v.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .model import EmotionLabel, ExpressionClip, InvalidClip, Pose, TrajectorySample

FORMAT_VERSION = 1
CLIP_SUFFIX = ".clip.json"


class ClipCorrupt(ValueError):
    """A clip file that cannot be parsed back into a valid ExpressionClip."""


def clip_filename(clip: ExpressionClip) -> str:
    return f"{clip.designer_id}_{clip.emotion.value}_{clip.iteration}{CLIP_SUFFIX}"


def clip_to_json_bytes(clip: ExpressionClip) -> bytes:
    header = {
        "clip_id": clip.clip_id,
        "emotion": clip.emotion.value,
        "designer_id": clip.designer_id,
        "iteration": clip.iteration,
        "final": clip.final,
        "timestep_ms": clip.timestep_ms,
        "recorded_at": clip.recorded_at,
    }
    rows = ",\n".join(
        f"    [{s.t_ms}, {s.pose.pan:.4f}, {s.pose.tilt:.4f}]" for s in clip.samples
    )
    text = (
        "{\n"
        f'  "format_version": {FORMAT_VERSION},\n'
        f'  "header": {json.dumps(header, sort_keys=True)},\n'
        '  "samples": [\n'
        f"{rows}\n"
        "  ]\n"
        "}\n"
    )
    return text.encode("utf-8")


def clip_from_json_bytes(data: bytes) -> ExpressionClip:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ClipCorrupt(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise ClipCorrupt("missing or unsupported format_version")
    try:
        header = doc["header"]
        samples = tuple(
            TrajectorySample(t_ms=int(row[0]), pose=Pose(float(row[1]), float(row[2])))
            for row in doc["samples"]
        )
        clip = ExpressionClip(
            clip_id=str(header["clip_id"]),
            emotion=EmotionLabel(header["emotion"]),
            designer_id=str(header["designer_id"]),
            iteration=int(header["iteration"]),
            timestep_ms=int(header["timestep_ms"]),
            samples=samples,
            final=bool(header["final"]),
            recorded_at=str(header["recorded_at"]),
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ClipCorrupt(f"malformed clip document: {exc}") from exc
    try:
        clip.validate()
    except InvalidClip as exc:
        raise ClipCorrupt(str(exc)) from exc
    return clip


def save_clip(clip: ExpressionClip, directory, overwrite: bool = False) -> Path:
    clip.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / clip_filename(clip)
    if path.exists() and not overwrite:
        raise FileExistsError(f"refusing to overwrite {path}")
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_bytes(clip_to_json_bytes(clip))
    os.replace(tmp, path)  # atomic: readers never see a partial clip
    return path


def load_clip(path) -> ExpressionClip:
    return clip_from_json_bytes(Path(path).read_bytes())


@dataclass(frozen=True)
class CatalogEntry:
    path: Path
    clip_id: str
    emotion: EmotionLabel
    designer_id: str
    iteration: int
    final: bool
    timestep_ms: int
    recorded_at: str
    duration_ms: int
    sample_count: int


@dataclass(frozen=True)
class ScanResult:
    entries: tuple[CatalogEntry, ...]
    warnings: tuple[str, ...]


def scan(directory) -> ScanResult:
    """Catalog every parseable clip file; corrupt files become warnings."""
    directory = Path(directory)
    entries: list[CatalogEntry] = []
    warnings: list[str] = []
    for path in sorted(directory.glob(f"*{CLIP_SUFFIX}")):
        try:
            clip = load_clip(path)
        except (ClipCorrupt, OSError) as exc:
            warnings.append(f"{path.name}: {exc}")
            continue
        entries.append(
            CatalogEntry(
                path=path,
                clip_id=clip.clip_id,
                emotion=clip.emotion,
                designer_id=clip.designer_id,
                iteration=clip.iteration,
                final=clip.final,
                timestep_ms=clip.timestep_ms,
                recorded_at=clip.recorded_at,
                duration_ms=clip.duration_ms,
                sample_count=clip.sample_count,
            )
        )
    return ScanResult(entries=tuple(entries), warnings=tuple(warnings))


def export_csv(clip: ExpressionClip) -> bytes:
    lines = ["t_ms,pan_deg,tilt_deg"]
    lines.extend(f"{s.t_ms},{s.pose.pan:.4f},{s.pose.tilt:.4f}" for s in clip.samples)
    return ("\n".join(lines) + "\n").encode("ascii")


def parse_csv(data: bytes) -> tuple[TrajectorySample, ...]:
    lines = data.decode("ascii").strip().split("\n")
    if not lines or lines[0] != "t_ms,pan_deg,tilt_deg":
        raise ClipCorrupt("missing t_ms,pan_deg,tilt_deg header")
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 3:
            raise ClipCorrupt(f"line {lineno}: expected 3 columns")
        try:
            samples.append(
                TrajectorySample(t_ms=int(parts[0]), pose=Pose(float(parts[1]), float(parts[2])))
            )
        except ValueError as exc:
            raise ClipCorrupt(f"line {lineno}: {exc}") from exc
    return tuple(samples)
