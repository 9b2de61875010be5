"""WAV, CSV and STFT exports."""
from __future__ import annotations

import csv
import logging
import wave
from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RenderOptions:
    peak_dbfs: float = -1.0
    bit_depth: int = 16
    window: int = 2048
    hop: int = 512

    def __post_init__(self):
        if not self.peak_dbfs < 0:
            raise ValueError("normalisation target must be below 0 dBFS")
        if self.bit_depth not in (16, 24):
            raise ValueError("bit depth must be 16 or 24")
        if not self.window >= self.hop >= 1:
            raise ValueError("need window >= hop >= 1")


def quantise(w, options: RenderOptions = RenderOptions()) -> np.ndarray:
    """Peak-normalise to the target level and round to integers (no dither)."""
    w = np.asarray(w, dtype=np.float64)
    if not np.isfinite(w).all():
        raise ValueError("cannot render a non-finite series")
    full = 2 ** (options.bit_depth - 1) - 1
    peak = np.max(np.abs(w)) if w.size else 0.0
    if peak == 0.0:
        log.warning("rendering an all-zero series; writing silence")
        return np.zeros(w.shape, dtype=np.int32)
    gain = full * 10.0 ** (options.peak_dbfs / 20.0) / peak
    return np.round(w * gain).astype(np.int32)


def write_wav(path, w, fs: float, options: RenderOptions = RenderOptions()) -> None:
    """Mono PCM RIFF/WAVE at the simulation rate."""
    ints = quantise(w, options)
    width = options.bit_depth // 8
    if width == 2:
        frames = ints.astype("<i2").tobytes()
    else:
        b = ints.astype("<i4").view(np.uint8).reshape(-1, 4)
        frames = b[:, :3].tobytes()
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(width)
        fh.setframerate(int(round(fs)))
        fh.writeframes(frames)


def stft_magnitudes(w, window: int, hop: int) -> np.ndarray:
    """Periodic-Hann-windowed |STFT|, shape (frames, window // 2 + 1)."""
    w = np.asarray(w, dtype=np.float64)
    if not window >= hop >= 1:
        raise ValueError("need window >= hop >= 1")
    if w.size < window:
        raise ValueError(f"series of {w.size} samples is shorter than the window ({window})")
    n_frames = (w.size - window) // hop + 1
    idx = np.arange(window)[None, :] + hop * np.arange(n_frames)[:, None]
    return np.abs(np.fft.rfft(w[idx] * get_window("hann", window), axis=-1))


def write_series_csv(path, fs: float, columns: dict) -> None:
    """Columns step, time and each named series, full double precision."""
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    n = len(data[0])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "time"] + names)
        for i in range(n):
            wr.writerow([i, repr(i / fs)] + [repr(float(d[i])) for d in data])


def write_matrix_csv(path, matrix, header=None) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        if header:
            wr.writerow(header)
        for row in np.asarray(matrix):
            wr.writerow([repr(float(v)) for v in row])
