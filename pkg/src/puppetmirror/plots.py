"""Matplotlib figure rendering for clip reports. Headless (Agg) only."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import (
    SPARC_AMP_THRESHOLD,
    SPARC_CUTOFF_HZ,
    SpeedProfile,
    acceleration,
    next_pow2_at_least,
)
from .model import ExpressionClip


def save_trajectory_figure(clip: ExpressionClip, path) -> Path:
    t = [s.t_ms / 1000.0 for s in clip.samples]
    pan = [s.pose.pan for s in clip.samples]
    tilt = [s.pose.tilt for s in clip.samples]
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(t, pan, label="pan", color="tab:red")
    ax.plot(t, tilt, label="tilt", color="tab:blue", linestyle="--")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("angle (deg)")
    ax.set_title(f"{clip.clip_id}: trajectory")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def save_speed_figure(profile: SpeedProfile, title: str, path) -> Path:
    t = np.asarray(profile.t_ms, dtype=float) / 1000.0
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    ax1.plot(t, profile.speed, color="tab:green")
    ax1.set_ylabel("speed (deg/s)")
    ax1.set_title(f"{title}: speed and |acceleration|")
    ax1.grid(True, alpha=0.3)
    if len(profile.speed) >= 3:
        accel, mid_t = acceleration(profile)
        ax2.plot(mid_t / 1000.0, np.abs(accel), color="tab:purple")
    ax2.set_ylabel("|accel| (deg/s^2)")
    ax2.set_xlabel("time (s)")
    ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def save_spectrum_figure(profile: SpeedProfile, title: str, path) -> Path:
    v = np.asarray(profile.speed, dtype=float)
    fs = 1000.0 / profile.timestep_ms
    nfft = next_pow2_at_least(4 * max(1, v.size))
    spectrum = np.abs(np.fft.fft(v, nfft))
    peak = spectrum.max() if spectrum.size else 0.0
    norm = spectrum / peak if peak > 0 else spectrum
    freqs = np.arange(nfft) * (fs / nfft)
    within = freqs <= SPARC_CUTOFF_HZ
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(freqs[within], norm[within], color="tab:orange")
    ax.axhline(SPARC_AMP_THRESHOLD, color="gray", linestyle=":", label="amplitude threshold")
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("normalized magnitude")
    ax.set_title(f"{title}: speed spectrum")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)
