"""Motion analysis over expression clips.

All functions are pure. Speeds are degrees/second, accelerations
degrees/second^2; time axes come from the clip samples themselves, so clips
with dropped frames (gaps in t_ms) are handled by non-uniform differences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EmotionLabel, ExpressionClip

PEAK_THRESHOLD_FRAC = 0.10
PEAK_REFRACTORY_MS = 100.0
OSCILLATION_GATE_DEG = 3.0
LOW_TILT_THRESHOLD_DEG = -10.0
SPARC_CUTOFF_HZ = 10.0
SPARC_AMP_THRESHOLD = 0.05


class TooShort(ValueError):
    """Not enough samples for the requested statistic."""


class DegenerateClip(ValueError):
    """All-zero speed: spectral normalization is undefined."""


@dataclass(frozen=True)
class SpeedProfile:
    timestep_ms: int
    t_ms: tuple[int, ...]
    speed: tuple[float, ...]
    pan_rate: tuple[float, ...]
    tilt_rate: tuple[float, ...]

    @property
    def duration_s(self) -> float:
        return (self.t_ms[-1] - self.t_ms[0]) / 1000.0


@dataclass(frozen=True)
class PeakStats:
    peak_count: int
    peak_rate_hz: float
    max_accel: float
    mean_peak_accel: float


@dataclass(frozen=True)
class Smoothness:
    sparc: float


@dataclass(frozen=True)
class MotionFeatures:
    tilt_mean_deg: float
    tilt_min_deg: float
    pan_oscillations: int
    tilt_oscillations: int
    dominant_axis: str  # "pan" | "tilt" | "none"
    max_accel: float
    duration_ms: int


def speed_profile(clip: ExpressionClip) -> SpeedProfile:
    """Per-axis rates (central differences interior, one-sided at the ends)
    and the combined speed sqrt(pan_rate^2 + tilt_rate^2)."""
    if clip.sample_count < 2:
        raise TooShort("speed profile needs at least 2 samples")
    # Differentiate against integer milliseconds: the grid is exact there, so
    # a frozen pose yields an exactly-zero rate instead of scaling noise.
    t_ms = np.array([s.t_ms for s in clip.samples], dtype=float)
    pan = np.array([s.pose.pan for s in clip.samples], dtype=float)
    tilt = np.array([s.pose.tilt for s in clip.samples], dtype=float)
    pan_rate = np.gradient(pan, t_ms) * 1000.0
    tilt_rate = np.gradient(tilt, t_ms) * 1000.0
    speed = np.hypot(pan_rate, tilt_rate)
    return SpeedProfile(
        timestep_ms=clip.timestep_ms,
        t_ms=tuple(s.t_ms for s in clip.samples),
        speed=tuple(float(v) for v in speed),
        pan_rate=tuple(float(v) for v in pan_rate),
        tilt_rate=tuple(float(v) for v in tilt_rate),
    )


def acceleration(profile: SpeedProfile) -> tuple[np.ndarray, np.ndarray]:
    """Finite difference of the combined speed.

    Returns (accel values, midpoint times in ms); length = len(speed) - 1.
    """
    t = np.asarray(profile.t_ms, dtype=float)
    v = np.asarray(profile.speed, dtype=float)
    dt_s = np.diff(t) / 1000.0
    accel = np.diff(v) / dt_s
    mid_t = (t[:-1] + t[1:]) / 2.0
    return accel, mid_t


def peak_stats(profile: SpeedProfile) -> PeakStats:
    """Count |acceleration| peaks: local maxima above 10% of the global max,
    at least 100 ms after the previously accepted peak. A strict rise
    followed by a non-rise qualifies; a maximum running into the end of the
    signal counts, the signal start does not."""
    if len(profile.speed) < 3:
        raise TooShort("peak stats need at least 3 speed samples")
    accel, mid_t = acceleration(profile)
    mag = np.abs(accel)
    max_accel = float(mag.max())
    gate = PEAK_THRESHOLD_FRAC * max_accel
    n = len(mag)
    picked: list[int] = []
    last_t: float | None = None
    for i in range(1, n):
        if mag[i] > mag[i - 1] and (i == n - 1 or mag[i] >= mag[i + 1]):
            if mag[i] <= gate:
                continue
            if last_t is not None and mid_t[i] - last_t < PEAK_REFRACTORY_MS:
                continue
            last_t = mid_t[i]
            picked.append(i)
    duration_s = profile.duration_s
    return PeakStats(
        peak_count=len(picked),
        peak_rate_hz=len(picked) / duration_s if duration_s > 0 else 0.0,
        max_accel=max_accel,
        mean_peak_accel=float(mag[picked].mean()) if picked else 0.0,
    )


def next_pow2_at_least(n: int) -> int:
    m = 1
    while m < n:
        m <<= 1
    return m


def sparc(
    profile: SpeedProfile,
    cutoff_hz: float = SPARC_CUTOFF_HZ,
    amp_threshold: float = SPARC_AMP_THRESHOLD,
) -> Smoothness:
    """Spectral arc length of the speed magnitude spectrum.

    Spectrum via FFT zero-padded to the next power of two >= 4x the profile
    length, normalized by its maximum magnitude, restricted to
    [0, cutoff_hz] and trimmed after the last bin >= amp_threshold. The arc
    length is accumulated with the frequency axis normalized by the retained
    range, so the result is dimensionless and <= 0 (more negative = less
    smooth). Degenerate selections (fewer than 2 retained bins) yield 0.0.
    """
    v = np.asarray(profile.speed, dtype=float)
    if v.size == 0 or not np.any(v != 0.0):
        raise DegenerateClip("all-zero speed profile")
    fs = 1000.0 / profile.timestep_ms
    nfft = next_pow2_at_least(4 * v.size)
    spectrum = np.abs(np.fft.fft(v, nfft))
    peak = spectrum.max()
    if peak == 0.0:
        raise DegenerateClip("zero spectrum")
    norm = spectrum / peak
    freqs = np.arange(nfft) * (fs / nfft)
    within = freqs <= cutoff_hz
    f_sel = freqs[within]
    m_sel = norm[within]
    above = np.nonzero(m_sel >= amp_threshold)[0]
    if above.size == 0:
        return Smoothness(sparc=0.0)
    last = above[-1]
    f_sel = f_sel[: last + 1]
    m_sel = m_sel[: last + 1]
    if f_sel.size < 2:
        return Smoothness(sparc=0.0)
    f_range = f_sel[-1] - f_sel[0]
    arc = -float(np.sum(np.sqrt((np.diff(f_sel) / f_range) ** 2 + np.diff(m_sel) ** 2)))
    return Smoothness(sparc=arc)


def _count_oscillations(x: np.ndarray, gate_deg: float = OSCILLATION_GATE_DEG) -> int:
    """Direction flips of the axis position whose swing since the previous
    flip exceeds the gate. The gate keeps tick noise (~0.147 deg) from
    registering as expressive undulation."""
    deltas = np.diff(x)
    count = 0
    anchor = x[0]
    prev_sign = 0
    for i, delta in enumerate(deltas):
        sign = 1 if delta > 0 else (-1 if delta < 0 else 0)
        if sign == 0:
            continue
        if prev_sign == 0:
            prev_sign = sign
            continue
        if sign != prev_sign:
            if abs(x[i] - anchor) > gate_deg:
                count += 1
            anchor = x[i]
            prev_sign = sign
    return count


def extract_features(clip: ExpressionClip) -> MotionFeatures:
    if clip.sample_count < 2:
        raise TooShort("features need at least 2 samples")
    pan = np.array([s.pose.pan for s in clip.samples], dtype=float)
    tilt = np.array([s.pose.tilt for s in clip.samples], dtype=float)
    pan_osc = _count_oscillations(pan)
    tilt_osc = _count_oscillations(tilt)
    if pan_osc > tilt_osc:
        dominant = "pan"
    elif tilt_osc > pan_osc:
        dominant = "tilt"
    else:
        dominant = "none"
    if clip.sample_count >= 3:
        accel, _ = acceleration(speed_profile(clip))
        max_accel = float(np.abs(accel).max())
    else:
        max_accel = 0.0
    return MotionFeatures(
        tilt_mean_deg=float(tilt.mean()),
        tilt_min_deg=float(tilt.min()),
        pan_oscillations=pan_osc,
        tilt_oscillations=tilt_osc,
        dominant_axis=dominant,
        max_accel=max_accel,
        duration_ms=clip.duration_ms,
    )


def signature_check(
    features: MotionFeatures,
    emotion: EmotionLabel,
    library_max_accel_p75: float | None = None,
) -> bool:
    """Heuristic per-emotion motion signatures.

    The surprise rule compares max_accel against the 75th percentile of the
    library under analysis; callers must supply that percentile. It is a
    stand-in for "abrupt movement" with no principled threshold. Disgust has
    no signature and passes vacuously.
    """
    if emotion == EmotionLabel.HAPPINESS:
        return features.tilt_oscillations >= 2
    if emotion == EmotionLabel.ANGER:
        return features.pan_oscillations >= 2
    if emotion in (EmotionLabel.SADNESS, EmotionLabel.FEAR):
        return features.tilt_mean_deg < LOW_TILT_THRESHOLD_DEG
    if emotion == EmotionLabel.SURPRISE:
        if library_max_accel_p75 is None:
            raise ValueError("surprise signature needs the library max_accel 75th percentile")
        return features.max_accel > library_max_accel_p75
    if emotion == EmotionLabel.DISGUST:
        return True
    raise ValueError(f"unknown emotion {emotion!r}")


def library_max_accel_p75(features_list) -> float:
    values = [f.max_accel for f in features_list]
    if not values:
        raise ValueError("empty library")
    return float(np.percentile(values, 75))


def analyze_clip(clip: ExpressionClip, p75: float | None = None) -> dict:
    """Bundle of every analysis for one clip, as plain JSON-ready values."""
    profile = speed_profile(clip)
    features = extract_features(clip)
    out: dict = {
        "clip_id": clip.clip_id,
        "emotion": clip.emotion.value,
        "iteration": clip.iteration,
        "final": clip.final,
        "duration_ms": clip.duration_ms,
        "sample_count": clip.sample_count,
        "speed_mean_dps": float(np.mean(profile.speed)),
        "speed_max_dps": float(np.max(profile.speed)),
        "tilt_mean_deg": features.tilt_mean_deg,
        "tilt_min_deg": features.tilt_min_deg,
        "pan_oscillations": features.pan_oscillations,
        "tilt_oscillations": features.tilt_oscillations,
        "dominant_axis": features.dominant_axis,
    }
    try:
        stats = peak_stats(profile)
        out.update(
            {
                "peak_count": stats.peak_count,
                "peak_rate_hz": stats.peak_rate_hz,
                "max_accel_dps2": stats.max_accel,
                "mean_peak_accel_dps2": stats.mean_peak_accel,
            }
        )
    except TooShort:
        out["peak_count"] = None
    try:
        out["sparc"] = sparc(profile).sparc
    except DegenerateClip:
        out["sparc"] = None
    try:
        out["signature_ok"] = signature_check(features, clip.emotion, p75)
        if clip.emotion == EmotionLabel.SURPRISE:
            out["signature_note"] = "surprise rule is a percentile stand-in"
    except ValueError:
        out["signature_ok"] = None
    return out
