"""Magnitude-response mathematics for biquad cascades and coefficient filters.

All responses live on a linear frequency grid over [0, fs/2] and are
expressed in dB (20*log10|H|). The three response paths are:

  * ``cascade_response_db``   -- per-section energy formula, the hot path
    used by target generation and the gradient core (float64).
  * ``coeff_response_db``     -- direct per-frequency polynomial evaluation
    in extended precision; this is the reference implementation.
  * ``coeff_response_db_fft`` -- zero-padded FFT of numerator/denominator,
    valid when the grid matches the FFT bin structure (F = M/2 + 1).

The minimum-phase projection maps any finite complex root strictly inside
the unit circle while preserving its argument.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateResponseError, GridMismatchError

# Scale factor between natural log and dB of a magnitude: 20/ln(10).
DB_OVER_LN = 20.0 / np.log(10.0)

# Epsilon of the minimum-phase projection; keeps roots off the origin and
# strictly inside the unit circle.
PROJECTION_EPS = 1e-8

# Network-input clipping bound in dB.
CLIP_DB = 128.0


@dataclass(frozen=True)
class FrequencyGrid:
    """F angular frequencies linearly spaced over [0, pi].

    ``omegas[j] = pi * j / (f_count - 1)``; the endpoints are exactly 0
    and pi. ``sample_rate_hz`` maps omega to physical frequency:
    f_hz = omega / pi * (sample_rate_hz / 2).
    """

    f_count: int
    sample_rate_hz: float
    omegas: np.ndarray = field(repr=False)

    @property
    def frequencies_hz(self) -> np.ndarray:
        return self.omegas * (self.sample_rate_hz / (2.0 * np.pi))

    def matches(self, other: "FrequencyGrid") -> bool:
        return (
            self.f_count == other.f_count
            and self.sample_rate_hz == other.sample_rate_hz
        )


def make_grid(f_count: int, sample_rate_hz: float) -> FrequencyGrid:
    """Build a linear frequency grid with ``f_count`` points over [0, pi]."""
    if f_count < 2:
        raise ValueError(f"f_count must be >= 2, got {f_count}")
    if not sample_rate_hz > 0:
        raise ValueError(f"sample_rate_hz must be positive, got {sample_rate_hz}")
    omegas = np.linspace(0.0, np.pi, int(f_count))
    return FrequencyGrid(int(f_count), float(sample_rate_hz), omegas)


@dataclass(frozen=True)
class MagnitudeResponse:
    """Magnitude response in dB on a :class:`FrequencyGrid`.

    Values are not clipped at construction; the +/-128 dB clipping happens
    only in :func:`normalize_for_network`.
    """

    grid: FrequencyGrid
    values_db: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values_db, dtype=np.float64)
        if v.shape != (self.grid.f_count,):
            raise ValueError(
                f"values_db has shape {v.shape}, expected ({self.grid.f_count},)"
            )
        object.__setattr__(self, "values_db", v)


@dataclass(frozen=True)
class FilterCascade:
    """Scalar gain plus K conjugate-pair biquads given by one root each.

    Each stored pole/zero represents itself and its implicit complex
    conjugate, so the expanded filter order is N = 2K and all expanded
    coefficients are real.
    """

    gain: float
    poles: np.ndarray = field(repr=False)
    zeros: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.poles, dtype=np.complex128))
        z = np.atleast_1d(np.asarray(self.zeros, dtype=np.complex128))
        if p.shape != z.shape or p.ndim != 1:
            raise ValueError(f"poles/zeros must be equal-length 1-D, got {p.shape} vs {z.shape}")
        if not (np.isfinite(self.gain) and self.gain > 0):
            raise ValueError(f"gain must be positive and finite, got {self.gain}")
        object.__setattr__(self, "poles", p)
        object.__setattr__(self, "zeros", z)

    @property
    def n_sections(self) -> int:
        return len(self.poles)

    @property
    def order(self) -> int:
        return 2 * len(self.poles)

    def is_minimum_phase(self) -> bool:
        return bool(
            np.all(np.abs(self.poles) < 1.0) and np.all(np.abs(self.zeros) < 1.0)
        )


@dataclass(frozen=True)
class CoefficientFilter:
    """Numerator/denominator coefficient arrays, optionally with sections.

    ``numerator`` and ``denominator`` are the order-N expanded polynomials
    in z^-1 (length N+1 each). When ``sections`` is present it is a
    (K, 6) array of (b0, b1, b2, a0, a1, a2) rows whose polynomial product
    equals the expanded form.
    """

    numerator: np.ndarray = field(repr=False)
    denominator: np.ndarray = field(repr=False)
    sections: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.numerator, dtype=np.float64))
        a = np.atleast_1d(np.asarray(self.denominator, dtype=np.float64))
        if b.ndim != 1 or a.ndim != 1 or b.shape != a.shape:
            raise ValueError(f"numerator/denominator must be equal-length 1-D, got {b.shape} vs {a.shape}")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(a))):
            raise ValueError("coefficients must be finite")
        if a[0] == 0.0:
            raise ValueError("a0 must be nonzero")
        object.__setattr__(self, "numerator", b)
        object.__setattr__(self, "denominator", a)
        if self.sections is not None:
            s = np.asarray(self.sections, dtype=np.float64)
            if s.ndim != 2 or s.shape[1] != 6:
                raise ValueError(f"sections must be (K, 6), got {s.shape}")
            object.__setattr__(self, "sections", s)

    @property
    def order(self) -> int:
        return len(self.numerator) - 1

    def sections_consistent(self, rel_tol: float = 1e-9) -> bool:
        """Check that the section product matches the expanded polynomials."""
        if self.sections is None:
            return True
        num = np.array([1.0])
        den = np.array([1.0])
        for b0, b1, b2, a0, a1, a2 in self.sections:
            num = np.convolve(num, [b0, b1, b2])
            den = np.convolve(den, [a0, a1, a2])
        num = num[: len(self.numerator)]
        den = den[: len(self.denominator)]
        scale = max(np.max(np.abs(self.numerator)), np.max(np.abs(self.denominator)))
        return bool(
            np.allclose(num, self.numerator, rtol=rel_tol, atol=rel_tol * scale)
            and np.allclose(den, self.denominator, rtol=rel_tol, atol=rel_tol * scale)
        )


# ---------------------------------------------------------------------------
# Response evaluation
# ---------------------------------------------------------------------------


def _section_energy(roots: np.ndarray, cos_w: np.ndarray, cos_2w: np.ndarray) -> np.ndarray:
    """|1 - 2 Re(r) e^{-iw} + |r|^2 e^{-2iw}|^2 for each root, each frequency.

    Returns a (K, F) array. Uses the closed-form energy expansion
    1 + b1^2 + b2^2 + 2 b1 (1 + b2) cos w + 2 b2 cos 2w with
    b1 = -2 Re(r), b2 = |r|^2.
    """
    b1 = (-2.0 * roots.real)[:, None]
    b2 = (np.abs(roots) ** 2)[:, None]
    return 1.0 + b1 * b1 + b2 * b2 + 2.0 * b1 * (1.0 + b2) * cos_w + 2.0 * b2 * cos_2w


def cascade_response_db(cascade: FilterCascade, grid: FrequencyGrid) -> MagnitudeResponse:
    """Magnitude response of a conjugate-pair biquad cascade, in dB.

    Each section is evaluated directly at every grid frequency; the section
    dB values and 20*log10(gain) add up.
    """
    cos_w = np.cos(grid.omegas)[None, :]
    cos_2w = np.cos(2.0 * grid.omegas)[None, :]
    values = np.full(grid.f_count, 20.0 * np.log10(cascade.gain))
    if cascade.n_sections:
        s_num = _section_energy(cascade.zeros, cos_w, cos_2w)
        s_den = _section_energy(cascade.poles, cos_w, cos_2w)
        zero_hits = np.nonzero(~(s_den.min(axis=1) > 0.0))[0]
        if zero_hits.size:
            raise DegenerateResponseError(
                f"denominator section {zero_hits[0]} vanishes on the grid",
                section=int(zero_hits[0]),
            )
        # Rounding can drive a mathematically tiny positive energy to 0.
        s_num = np.maximum(s_num, 1e-300)
        values = values + 10.0 * np.log10(s_num / s_den).sum(axis=0)
    if not np.all(np.isfinite(values)):
        raise DegenerateResponseError("cascade response is non-finite on the grid")
    return MagnitudeResponse(grid, values)


def _polyval_circle(coeffs: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    """Evaluate sum_i c_i e^{-i*w*i} by Horner in extended precision.

    Extended (80-bit on x86-64) precision keeps the reference path accurate
    even when cancellation makes |value| much smaller than sum|c_i|.
    """
    z = np.exp(np.clongdouble(-1j) * omegas.astype(np.longdouble))
    acc = np.full(omegas.shape, np.clongdouble(coeffs[-1]))
    for c in coeffs[-2::-1]:
        acc = acc * z + np.clongdouble(c)
    return acc


def coeff_response_db(filt: CoefficientFilter, grid: FrequencyGrid) -> MagnitudeResponse:
    """Magnitude response of an expanded-coefficient filter, in dB.

    Direct per-frequency evaluation of numerator and denominator; the
    reference against which the FFT path and the cascade path are checked.
    """
    num = np.abs(_polyval_circle(filt.numerator, grid.omegas))
    den = np.abs(_polyval_circle(filt.denominator, grid.omegas))
    if np.any(den == 0.0):
        j = int(np.nonzero(den == 0.0)[0][0])
        raise DegenerateResponseError(f"denominator vanishes at grid index {j}")
    values = 20.0 * np.log10(num.astype(np.float64)) - 20.0 * np.log10(den.astype(np.float64))
    if not np.all(np.isfinite(values)):
        raise DegenerateResponseError("coefficient response is non-finite on the grid")
    return MagnitudeResponse(grid, values)


def coeff_response_db_fft(filt: CoefficientFilter, grid: FrequencyGrid) -> MagnitudeResponse:
    """FFT-path response: rfft of zero-padded numerator and denominator.

    Requires the grid to match the FFT bin structure, i.e. the FFT size is
    M = 2 (F - 1) so bin k sits exactly at omega = pi k / (F - 1).
    """
    m = 2 * (grid.f_count - 1)
    if m < len(filt.numerator):
        raise ValueError(
            f"grid with F={grid.f_count} gives FFT size {m} < {len(filt.numerator)} coefficients"
        )
    num = np.abs(np.fft.rfft(filt.numerator, n=m))
    den = np.abs(np.fft.rfft(filt.denominator, n=m))
    if np.any(den == 0.0):
        j = int(np.nonzero(den == 0.0)[0][0])
        raise DegenerateResponseError(f"denominator vanishes at grid index {j}")
    values = 20.0 * np.log10(num) - 20.0 * np.log10(den)
    if not np.all(np.isfinite(values)):
        raise DegenerateResponseError("coefficient response is non-finite on the grid")
    return MagnitudeResponse(grid, values)


def sections_response_db(filt: CoefficientFilter, grid: FrequencyGrid) -> MagnitudeResponse:
    """Response computed as the sum of per-section dB responses."""
    if filt.sections is None:
        return coeff_response_db(filt, grid)
    w = grid.omegas
    z1 = np.exp(-1j * w)
    z2 = np.exp(-2j * w)
    values = np.zeros(grid.f_count)
    for k, (b0, b1, b2, a0, a1, a2) in enumerate(filt.sections):
        num = np.abs(b0 + b1 * z1 + b2 * z2)
        den = np.abs(a0 + a1 * z1 + a2 * z2)
        if np.any(den == 0.0):
            raise DegenerateResponseError(
                f"denominator section {k} vanishes on the grid", section=k
            )
        values += 20.0 * np.log10(np.maximum(num, 1e-300)) - 20.0 * np.log10(den)
    if not np.all(np.isfinite(values)):
        raise DegenerateResponseError("section response is non-finite on the grid")
    return MagnitudeResponse(grid, values)


# ---------------------------------------------------------------------------
# Minimum-phase projection
# ---------------------------------------------------------------------------


def min_phase_project(root):
    """Rescale a root to lie strictly inside the unit circle.

    r -> (1 - eps) * r * tanh(|r|) / (|r| + eps) with eps = 1e-8. The
    argument is preserved, the origin is a fixed point, and the output
    magnitude is strictly below 1 for every finite input. Accepts scalars
    or arrays.
    """
    r = np.asarray(root, dtype=np.complex128)
    m = np.abs(r)
    out = (1.0 - PROJECTION_EPS) * r * np.tanh(m) / (m + PROJECTION_EPS)
    if np.isscalar(root) or np.ndim(root) == 0:
        return complex(out)
    return out


def sections_from_cascade(cascade: FilterCascade) -> CoefficientFilter:
    """Expand a cascade into sections and order-N coefficient arrays.

    Each root r and its implicit conjugate give the quadratic
    1 - 2 Re(r) z^-1 + |r|^2 z^-2; the gain is folded into the b
    coefficients of the first section.
    """
    k = cascade.n_sections
    sections = np.zeros((max(k, 1), 6))
    if k == 0:
        sections = np.array([[cascade.gain, 0.0, 0.0, 1.0, 0.0, 0.0]])
        return CoefficientFilter([cascade.gain], [1.0], sections)
    for i in range(k):
        z, p = cascade.zeros[i], cascade.poles[i]
        sections[i] = (1.0, -2.0 * z.real, abs(z) ** 2, 1.0, -2.0 * p.real, abs(p) ** 2)
    sections[0, :3] *= cascade.gain
    # Convolve in extended precision: the chain of K products then rounds
    # to float64 once, instead of accumulating per-step rounding.
    num = np.array([1.0], dtype=np.longdouble)
    den = np.array([1.0], dtype=np.longdouble)
    for row in sections.astype(np.longdouble):
        num = np.convolve(num, row[:3])
        den = np.convolve(den, row[3:])
    return CoefficientFilter(num.astype(np.float64), den.astype(np.float64), sections)


# ---------------------------------------------------------------------------
# Loss and normalization
# ---------------------------------------------------------------------------


def db_mse(estimate: MagnitudeResponse, target: MagnitudeResponse) -> float:
    """Mean squared error between two dB responses on the same grid."""
    if not estimate.grid.matches(target.grid):
        raise GridMismatchError(
            f"grids differ: F={estimate.grid.f_count}/fs={estimate.grid.sample_rate_hz} "
            f"vs F={target.grid.f_count}/fs={target.grid.sample_rate_hz}"
        )
    d = estimate.values_db - target.values_db
    return float(np.mean(d * d))


def normalize_for_network(target: MagnitudeResponse) -> np.ndarray:
    """Clip to [-128, 128] dB then scale to [-1, 1]."""
    return np.clip(target.values_db, -CLIP_DB, CLIP_DB) / CLIP_DB


# ---------------------------------------------------------------------------
# Root pairing (polynomial -> sections)
# ---------------------------------------------------------------------------


def pair_roots_to_quadratics(roots: np.ndarray) -> np.ndarray:
    """Group the roots of a real polynomial into real monic quadratics.

    Complex roots pair with their exact conjugates; real roots are sorted
    and paired consecutively. An odd real root count leaves one linear
    factor (1, -r, 0). Returns a (ceil(len/2), 3) array of (1, c1, c2).
    """
    roots = np.asarray(roots, dtype=np.complex128)
    real = np.sort(roots[roots.imag == 0.0].real)
    upper = roots[roots.imag > 0.0]
    order = np.lexsort((upper.imag, upper.real))
    upper = upper[order]
    quads = []
    for r in upper:
        quads.append((1.0, -2.0 * r.real, abs(r) ** 2))
    for i in range(0, len(real) - 1, 2):
        r1, r2 = real[i], real[i + 1]
        quads.append((1.0, -(r1 + r2), r1 * r2))
    if len(real) % 2:
        quads.append((1.0, -real[-1], 0.0))
    return np.array(quads) if quads else np.zeros((0, 3))
