"""Aggregation of expression-recognition survey ratings.

Raters score each clip against emotion words on a 1-to-4 scale. Aggregation
uses integer sums, so results are exactly invariant under record order.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .model import EMOTION_ORDER, EmotionLabel

RATINGS_HEADER = ("rater_id", "clip_id", "word", "rating")
INTENTS_HEADER = ("clip_id", "emotion")


class UnknownClip(ValueError):
    """A rated clip_id that has no intended-emotion mapping."""


class NoData(ValueError):
    """No records to aggregate."""


class MissingIntendedRating(ValueError):
    """A clip with zero ratings for its intended word."""


@dataclass(frozen=True)
class RatingRecord:
    rater_id: str
    clip_id: str
    word: EmotionLabel
    rating: int

    def __post_init__(self) -> None:
        if self.rating not in (1, 2, 3, 4):
            raise ValueError("rating must be in [1, 4]")


@dataclass(frozen=True)
class RejectedRow:
    line: int
    reason: str


@dataclass(frozen=True)
class RecognizabilityReport:
    clip_id: str
    intended: EmotionLabel
    mean_intended: float
    mean_by_word: dict
    discriminability: float | None  # None when no non-intended word was rated
    weight: float
    n_raters: int

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "intended": self.intended.value,
            "mean_intended": self.mean_intended,
            "mean_by_word": {w.value: m for w, m in self.mean_by_word.items()},
            "discriminability": self.discriminability,
            "weight": self.weight,
            "n_raters": self.n_raters,
        }


def weight_from_mean(mean_intended: float) -> float:
    """Affine map of the 1-4 mean onto [0, 1]: weight(1)=0, weight(4)=1."""
    return (mean_intended - 1.0) / 3.0


def ingest(data: bytes) -> tuple[list[RatingRecord], list[RejectedRow]]:
    """Parse a ratings CSV; invalid rows are reported, never fatal."""
    text = data.decode("utf-8-sig")
    reader = csv.reader(io.StringIO(text))
    records: list[RatingRecord] = []
    rejects: list[RejectedRow] = []
    header_seen = False
    for line, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if not header_seen:
            if tuple(cell.strip() for cell in row) != RATINGS_HEADER:
                raise ValueError("ratings CSV must start with header rater_id,clip_id,word,rating")
            header_seen = True
            continue
        if len(row) != 4:
            rejects.append(RejectedRow(line, f"expected 4 columns, got {len(row)}"))
            continue
        rater_id, clip_id, word_text, rating_text = (cell.strip() for cell in row)
        if not rater_id or not clip_id:
            rejects.append(RejectedRow(line, "empty rater_id or clip_id"))
            continue
        try:
            word = EmotionLabel(word_text.lower())
        except ValueError:
            rejects.append(RejectedRow(line, f"unknown word {word_text!r}"))
            continue
        try:
            rating = int(rating_text)
        except ValueError:
            rejects.append(RejectedRow(line, f"non-integer rating {rating_text!r}"))
            continue
        if rating not in (1, 2, 3, 4):
            rejects.append(RejectedRow(line, f"rating {rating} outside [1, 4]"))
            continue
        records.append(RatingRecord(rater_id, clip_id, word, rating))
    if not header_seen:
        raise ValueError("ratings CSV must start with header rater_id,clip_id,word,rating")
    return records, rejects


def parse_intents_csv(data: bytes) -> dict[str, EmotionLabel]:
    text = data.decode("utf-8-sig")
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows or tuple(cell.strip() for cell in rows[0]) != INTENTS_HEADER:
        raise ValueError("intents CSV must start with header clip_id,emotion")
    intents: dict[str, EmotionLabel] = {}
    for row in rows[1:]:
        if len(row) != 2:
            raise ValueError(f"intents row needs 2 columns: {row!r}")
        intents[row[0].strip()] = EmotionLabel(row[1].strip().lower())
    return intents


def _group(records: list[RatingRecord]) -> dict[str, dict[EmotionLabel, list[int]]]:
    by_clip: dict[str, dict[EmotionLabel, list[int]]] = {}
    for rec in records:
        by_clip.setdefault(rec.clip_id, {}).setdefault(rec.word, []).append(rec.rating)
    return by_clip


def report(
    records: list[RatingRecord],
    intents: dict[str, EmotionLabel],
) -> list[RecognizabilityReport]:
    by_clip = _group(records)
    for clip_id in by_clip:
        if clip_id not in intents:
            raise UnknownClip(f"no intended emotion for clip {clip_id!r}")
    out: list[RecognizabilityReport] = []
    for clip_id in sorted(by_clip):
        words = by_clip[clip_id]
        intended = intents[clip_id]
        # integer sums keep the means exact regardless of record order
        mean_by_word = {w: sum(rs) / len(rs) for w, rs in words.items()}
        if intended not in mean_by_word:
            raise MissingIntendedRating(f"clip {clip_id!r} has no ratings for {intended.value!r}")
        mean_intended = mean_by_word[intended]
        competitors = [m for w, m in mean_by_word.items() if w != intended]
        discriminability = mean_intended - max(competitors) if competitors else None
        raters = {rec.rater_id for rec in records if rec.clip_id == clip_id}
        out.append(
            RecognizabilityReport(
                clip_id=clip_id,
                intended=intended,
                mean_intended=mean_intended,
                mean_by_word=dict(sorted(mean_by_word.items(), key=lambda kv: kv[0].value)),
                discriminability=discriminability,
                weight=weight_from_mean(mean_intended),
                n_raters=len(raters),
            )
        )
    return out


def confusion(
    records: list[RatingRecord],
    intents: dict[str, EmotionLabel],
) -> list[list[float | None]]:
    """6x6 matrix: cell (i, j) = mean over clips intended as emotion i of the
    per-clip mean rating for word j. Rows/columns follow EMOTION_ORDER.
    Cells with no data are None."""
    if not records:
        raise NoData("no rating records")
    by_clip = _group(records)
    for clip_id in by_clip:
        if clip_id not in intents:
            raise UnknownClip(f"no intended emotion for clip {clip_id!r}")
    matrix: list[list[float | None]] = []
    for intended in EMOTION_ORDER:
        clip_ids = sorted(cid for cid in by_clip if intents[cid] == intended)
        row: list[float | None] = []
        for word in EMOTION_ORDER:
            clip_means = [
                sum(by_clip[cid][word]) / len(by_clip[cid][word])
                for cid in clip_ids
                if word in by_clip[cid]
            ]
            row.append(sum(clip_means) / len(clip_means) if clip_means else None)
        matrix.append(row)
    return matrix
