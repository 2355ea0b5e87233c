"""Measured impulse responses -> smoothed magnitude-response targets.

Pipeline: read a RIFF/WAVE file (PCM 16/24/32-bit int or 32-bit float),
optionally resample (polyphase windowed sinc, Kaiser window with > 80 dB
stopband), take the FFT magnitude in dB on a linear grid, and smooth with
a local least-squares polynomial (Savitzky-Golay) filter applied in the
dB domain.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .dsp import FrequencyGrid, MagnitudeResponse
from .errors import DataError, WavFormatError

# Kaiser beta 8.5547 puts the window sidelobes near -85 dB, comfortably
# past the 80 dB stopband requirement.
KAISER_BETA = 8.5547

FLOOR_DB = -128.0


@dataclass(frozen=True)
class ImpulseResponse:
    samples: np.ndarray
    sample_rate_hz: float
    channel_index: int = 0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class SmoothingConfig:
    window_length: int = 63
    poly_order: int = 3

    def __post_init__(self):
        if self.window_length < 1 or self.window_length % 2 == 0:
            raise ValueError(f"window_length must be odd and positive, got {self.window_length}")
        if not 0 <= self.poly_order < self.window_length:
            raise ValueError(
                f"poly_order must be in [0, window_length), got {self.poly_order}"
            )


# ---------------------------------------------------------------------------
# WAV reading
# ---------------------------------------------------------------------------


def read_wav(path: str | Path) -> list[ImpulseResponse]:
    """Parse a RIFF/WAVE file into one normalized ImpulseResponse per channel."""
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise WavFormatError(f"{path}: file ends at offset {len(raw)}, before the RIFF header")
    if raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file (offset 0)")

    fmt = None
    data = None
    offset = 12
    while offset + 8 <= len(raw):
        chunk_id = raw[offset : offset + 4]
        (size,) = struct.unpack_from("<I", raw, offset + 4)
        body_start = offset + 8
        if body_start + size > len(raw):
            raise WavFormatError(
                f"{path}: chunk {chunk_id!r} at offset {offset} claims {size} bytes "
                f"but the file ends at {len(raw)}"
            )
        if chunk_id == b"fmt ":
            if size < 16:
                raise WavFormatError(f"{path}: fmt chunk at offset {offset} is {size} bytes, need 16")
            fmt = struct.unpack_from("<HHIIHH", raw, body_start)
            if fmt[0] == 0xFFFE and size >= 40:
                # WAVE_FORMAT_EXTENSIBLE: the real format leads the GUID.
                (sub,) = struct.unpack_from("<H", raw, body_start + 24)
                fmt = (sub,) + fmt[1:]
        elif chunk_id == b"data":
            data = (body_start, size)
        offset = body_start + size + (size & 1)

    if fmt is None:
        raise WavFormatError(f"{path}: no fmt chunk found")
    if data is None:
        raise WavFormatError(f"{path}: no data chunk found")
    audio_format, channels, rate, _, block_align, bits = fmt
    if channels < 1:
        raise WavFormatError(f"{path}: zero channels")
    start, size = data
    if size == 0:
        raise WavFormatError(f"{path}: data chunk at offset {start - 8} is empty")
    body = raw[start : start + size]

    if audio_format == 1 and bits == 16:
        frames = np.frombuffer(body, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == 1 and bits == 24:
        if size % 3:
            raise WavFormatError(f"{path}: 24-bit data size {size} is not a multiple of 3")
        as_bytes = np.frombuffer(body, dtype=np.uint8).reshape(-1, 3)
        ints = (
            as_bytes[:, 0].astype(np.int32)
            | (as_bytes[:, 1].astype(np.int32) << 8)
            | (as_bytes[:, 2].astype(np.int32) << 16)
        )
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        frames = ints.astype(np.float64) / float(1 << 23)
    elif audio_format == 1 and bits == 32:
        frames = np.frombuffer(body, dtype="<i4").astype(np.float64) / float(1 << 31)
    elif audio_format == 3 and bits == 32:
        frames = np.frombuffer(body, dtype="<f4").astype(np.float64)
    else:
        raise WavFormatError(
            f"{path}: unsupported codec (format {audio_format}, {bits}-bit) at fmt chunk"
        )

    n_frames = len(frames) // channels
    if n_frames == 0:
        raise WavFormatError(f"{path}: data chunk holds no complete frame")
    frames = frames[: n_frames * channels].reshape(n_frames, channels)
    return [
        ImpulseResponse(frames[:, ch].copy(), float(rate), channel_index=ch)
        for ch in range(channels)
    ]


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def resample(ir: ImpulseResponse, to_hz: float) -> ImpulseResponse:
    """Polyphase windowed-sinc resampling; identity when rates match."""
    if not to_hz > 0:
        raise ValueError(f"target rate must be positive, got {to_hz}")
    if to_hz == ir.sample_rate_hz:
        return ImpulseResponse(ir.samples.copy(), ir.sample_rate_hz, ir.channel_index)
    ratio = to_hz / ir.sample_rate_hz
    frac = Fraction(ratio).limit_denominator(10000)
    if abs(float(frac) - ratio) > 1e-6 * ratio:
        raise DataError(
            f"rate ratio {to_hz}/{ir.sample_rate_hz} has no rational approximation within 1e-6"
        )
    out = resample_poly(ir.samples, frac.numerator, frac.denominator, window=("kaiser", KAISER_BETA))
    return ImpulseResponse(out, to_hz, ir.channel_index)


# ---------------------------------------------------------------------------
# Magnitude extraction and smoothing
# ---------------------------------------------------------------------------


def ir_to_magnitude(ir: ImpulseResponse, grid: FrequencyGrid) -> MagnitudeResponse:
    """FFT magnitude in dB, interpolated onto the grid.

    The FFT length is the next power of two >= 4x the IR length (no time
    window); zero-magnitude bins are floored at -128 dB before the log.
    """
    if ir.samples.size < 2:
        raise ValueError("impulse response must have at least 2 samples")
    if not np.any(ir.samples):
        raise DataError("all-zero impulse response")
    if abs(ir.sample_rate_hz - grid.sample_rate_hz) > 1e-6 * grid.sample_rate_hz:
        raise DataError(
            f"IR rate {ir.sample_rate_hz} does not match grid rate {grid.sample_rate_hz}; "
            "resample first"
        )
    nfft = 1 << int(4 * ir.samples.size - 1).bit_length()
    mag = np.abs(np.fft.rfft(ir.samples, n=nfft))
    db = 20.0 * np.log10(np.maximum(mag, 10.0 ** (FLOOR_DB / 20.0)))
    bin_w = 2.0 * np.pi * np.arange(nfft // 2 + 1) / nfft
    values = np.interp(grid.omegas, bin_w, db)
    return MagnitudeResponse(grid, values)


def savgol_coefficients(window_length: int, poly_order: int) -> np.ndarray:
    """Center-evaluated smoothing weights from the local Vandermonde fit."""
    half = window_length // 2
    t = np.arange(-half, half + 1) / max(half, 1)
    vand = np.vander(t, poly_order + 1, increasing=True)
    return np.linalg.pinv(vand)[0]


def _one_sided_fit(values: np.ndarray, eval_idx: int, lo: int, hi: int, poly_order: int) -> float:
    """Least-squares polynomial through values[lo:hi], evaluated at eval_idx."""
    idx = np.arange(lo, hi)
    scale = max(hi - lo - 1, 1)
    t = (idx - eval_idx) / scale
    degree = min(poly_order, len(idx) - 1)
    vand = np.vander(t, degree + 1, increasing=True)
    beta, *_ = np.linalg.lstsq(vand, values[lo:hi], rcond=None)
    return float(beta[0])


def savgol_smooth(x: MagnitudeResponse, cfg: SmoothingConfig | None = None) -> MagnitudeResponse:
    """Savitzky-Golay smoothing of the dB values.

    Interior points use the precomputed center-window convolution; edge
    points refit the polynomial on the truncated one-sided window.
    """
    cfg = cfg or SmoothingConfig()
    values = x.values_db
    f_count = len(values)
    if cfg.window_length > f_count:
        raise ValueError(
            f"window_length {cfg.window_length} exceeds response length {f_count}"
        )
    half = cfg.window_length // 2
    out = np.empty_like(values)
    weights = savgol_coefficients(cfg.window_length, cfg.poly_order)
    if f_count >= cfg.window_length:
        out[half : f_count - half] = np.correlate(values, weights, mode="valid")
    for j in range(half):
        out[j] = _one_sided_fit(values, j, 0, j + half + 1, cfg.poly_order)
    for j in range(f_count - half, f_count):
        out[j] = _one_sided_fit(values, j, j - half, f_count, cfg.poly_order)
    return MagnitudeResponse(x.grid, out)
