"""Random target-filter generators (families A-G).

Six sampling families with distinct root statistics, plus the uniform
mixture G:

  A  iid standard-normal coefficients for numerator and denominator
  B  products of standard-normal quadratics (sections retained)
  C  roots uniform over the unit disk by area (r = sqrt(U))
  D  roots uniform in magnitude and argument (r = U)
  E  eigenvalues of scaled standard Gaussian matrices
  F  uniformly sampled parametric EQ (shelves + peaks)
  G  uniform mixture over A-F

Every draw is addressed by (master seed, stream tag, draw index, retry),
mapped onto a counter-based Philox key, so datasets regenerate
identically regardless of worker count or draw order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dsp import (
    CoefficientFilter,
    FilterCascade,
    FrequencyGrid,
    MagnitudeResponse,
    cascade_response_db,
    coeff_response_db,
    pair_roots_to_quadratics,
    sections_response_db,
)
from .errors import DataError, DegenerateResponseError, EigensolverError

FAMILIES = ("A", "B", "C", "D", "E", "F", "G")

# Stream tags keep train / eval / designer / init draws in disjoint
# namespaces of the same master seed.
STREAM_TRAIN = 0
STREAM_EVAL = 1
STREAM_SGD = 2
STREAM_INIT = 3


def draw_rng(seed: int, stream: int, index: int, retry: int = 0) -> np.random.Generator:
    """Independently addressable generator for one draw of one stream."""
    if not 0 <= index < 1 << 48:
        raise ValueError(f"draw index out of range: {index}")
    if not 0 <= retry < 256 or not 0 <= stream < 256:
        raise ValueError(f"stream/retry out of range: {stream}/{retry}")
    word = (np.uint64(stream) << np.uint64(56)) | (np.uint64(retry) << np.uint64(48)) | np.uint64(index)
    key = np.array([np.uint64(seed), word], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class EqRanges:
    """Parameter ranges for family F (uniform parametric EQ).

    Corner/center frequencies are drawn log-uniformly in
    [freq_lo_hz, freq_hi_frac * sample_rate_hz]; gains are uniform in dB;
    Q is uniform with separate ranges for shelves and peaks.
    """

    sample_rate_hz: float = 44100.0
    freq_lo_hz: float = 20.0
    freq_hi_frac: float = 0.45
    gain_db_lo: float = -24.0
    gain_db_hi: float = 24.0
    q_shelf_lo: float = 0.5
    q_shelf_hi: float = 4.0
    q_peak_lo: float = 0.1
    q_peak_hi: float = 10.0


def _require_even(order: int, minimum: int = 2) -> None:
    if order < minimum or order % 2:
        raise ValueError(f"order must be even and >= {minimum}, got {order}")


def sample_family_a(order: int, rng: np.random.Generator) -> CoefficientFilter:
    """Numerator and denominator with iid standard-normal coefficients."""
    _require_even(order)
    num = rng.standard_normal(order + 1)
    den = rng.standard_normal(order + 1)
    return CoefficientFilter(num, den)


def sample_family_b(order: int, rng: np.random.Generator) -> CoefficientFilter:
    """Products of standard-normal quadratics; sections retained."""
    _require_even(order)
    k = order // 2
    nq = rng.standard_normal((k, 3))
    dq = rng.standard_normal((k, 3))
    sections = np.hstack([nq, dq])
    num = np.array([1.0])
    den = np.array([1.0])
    for i in range(k):
        num = np.convolve(num, nq[i])
        den = np.convolve(den, dq[i])
    return CoefficientFilter(num, den, sections)


def _disk_roots(count: int, rng: np.random.Generator, radial: str) -> np.ndarray:
    theta = rng.uniform(0.0, 2.0 * np.pi, count)
    u = rng.uniform(0.0, 1.0, count)
    r = np.sqrt(u) if radial == "area" else u
    return r * np.exp(1j * theta)


def sample_family_c(order: int, rng: np.random.Generator) -> FilterCascade:
    """Conjugate root pairs with radius sqrt(U): uniform over the disk."""
    _require_even(order)
    k = order // 2
    zeros = _disk_roots(k, rng, "area")
    poles = _disk_roots(k, rng, "area")
    return FilterCascade(1.0, poles, zeros)


def sample_family_d(order: int, rng: np.random.Generator) -> FilterCascade:
    """Conjugate root pairs with radius uniform in [0, 1]."""
    _require_even(order)
    k = order // 2
    zeros = _disk_roots(k, rng, "uniform")
    poles = _disk_roots(k, rng, "uniform")
    return FilterCascade(1.0, poles, zeros)


def gaussian_matrix_roots(order: int, rng: np.random.Generator, scale: float | None = None) -> np.ndarray:
    """Eigenvalues of an order x order standard Gaussian matrix, rescaled.

    The default scale 1/sqrt(order) makes the spectrum fill the unit disk
    (circular law). Raises EigensolverError if the QR iteration fails.
    """
    a = rng.standard_normal((order, order))
    try:
        ev = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"eigenvalue iteration failed: {exc}") from exc
    return ev * (scale if scale is not None else 1.0 / np.sqrt(order))


def sample_family_e(
    order: int, rng: np.random.Generator, scale: float | None = None
) -> CoefficientFilter:
    """Roots from eigenvalues of two independent Gaussian matrices.

    Real eigenvalues are paired into real-root quadratics and complex ones
    keep their conjugates, so the result carries true second-order
    sections rather than a conjugate-pair cascade.
    """
    _require_even(order)
    zroots = gaussian_matrix_roots(order, rng, scale)
    proots = gaussian_matrix_roots(order, rng, scale)
    nq = pair_roots_to_quadratics(zroots)
    dq = pair_roots_to_quadratics(proots)
    sections = np.hstack([nq, dq])
    num = np.array([1.0])
    den = np.array([1.0])
    for i in range(len(nq)):
        num = np.convolve(num, nq[i])
        den = np.convolve(den, dq[i])
    return CoefficientFilter(num, den, sections)


# RBJ-style audio-EQ prototypes (bilinear transform) for family F.


def _shelf_section(f0: float, gain_db: float, q: float, fs: float, high: bool) -> np.ndarray:
    a_lin = 10.0 ** (gain_db / 40.0)
    w0 = 2.0 * np.pi * f0 / fs
    cw, sw = np.cos(w0), np.sin(w0)
    alpha = sw / (2.0 * q)
    sq = 2.0 * np.sqrt(a_lin) * alpha
    sign = 1.0 if high else -1.0
    b0 = a_lin * ((a_lin + 1) + sign * (a_lin - 1) * cw + sq)
    b1 = -2.0 * sign * a_lin * ((a_lin - 1) + sign * (a_lin + 1) * cw)
    b2 = a_lin * ((a_lin + 1) + sign * (a_lin - 1) * cw - sq)
    a0 = (a_lin + 1) - sign * (a_lin - 1) * cw + sq
    a1 = 2.0 * sign * ((a_lin - 1) - sign * (a_lin + 1) * cw)
    a2 = (a_lin + 1) - sign * (a_lin - 1) * cw - sq
    return np.array([b0, b1, b2, a0, a1, a2]) / a0


def _peak_section(f0: float, gain_db: float, q: float, fs: float) -> np.ndarray:
    a_lin = 10.0 ** (gain_db / 40.0)
    w0 = 2.0 * np.pi * f0 / fs
    cw, sw = np.cos(w0), np.sin(w0)
    alpha = sw / (2.0 * q)
    b0 = 1.0 + alpha * a_lin
    b1 = -2.0 * cw
    b2 = 1.0 - alpha * a_lin
    a0 = 1.0 + alpha / a_lin
    a1 = -2.0 * cw
    a2 = 1.0 - alpha / a_lin
    return np.array([b0, b1, b2, a0, a1, a2]) / a0


def sample_family_f(
    order: int, rng: np.random.Generator, ranges: EqRanges | None = None
) -> CoefficientFilter:
    """One low shelf, one high shelf, and (N-4)/2 peaking sections."""
    _require_even(order, minimum=4)
    ranges = ranges or EqRanges()
    fs = ranges.sample_rate_hz
    f_lo, f_hi = ranges.freq_lo_hz, ranges.freq_hi_frac * fs

    def draw_freq() -> float:
        return float(np.exp(rng.uniform(np.log(f_lo), np.log(f_hi))))

    def draw_gain() -> float:
        return float(rng.uniform(ranges.gain_db_lo, ranges.gain_db_hi))

    rows = [
        _shelf_section(draw_freq(), draw_gain(),
                       float(rng.uniform(ranges.q_shelf_lo, ranges.q_shelf_hi)), fs, high=False),
        _shelf_section(draw_freq(), draw_gain(),
                       float(rng.uniform(ranges.q_shelf_lo, ranges.q_shelf_hi)), fs, high=True),
    ]
    for _ in range((order - 4) // 2):
        rows.append(
            _peak_section(draw_freq(), draw_gain(),
                          float(rng.uniform(ranges.q_peak_lo, ranges.q_peak_hi)), fs)
        )
    sections = np.array(rows)
    num = np.array([1.0])
    den = np.array([1.0])
    for row in sections:
        num = np.convolve(num, row[:3])
        den = np.convolve(den, row[3:])
    return CoefficientFilter(num, den, sections)


def sample_family_g(
    order: int, rng: np.random.Generator, ranges: EqRanges | None = None
) -> CoefficientFilter | FilterCascade:
    """Uniform mixture: pick one of A-F, then delegate."""
    _require_even(order, minimum=4)
    tag = FAMILIES[int(rng.integers(0, 6))]
    return sample_filter(tag, order, rng, ranges)


_SAMPLERS = {
    "A": sample_family_a,
    "B": sample_family_b,
    "C": sample_family_c,
    "D": sample_family_d,
    "E": sample_family_e,
}


def sample_filter(
    family: str, order: int, rng: np.random.Generator, ranges: EqRanges | None = None
) -> CoefficientFilter | FilterCascade:
    """Draw one random filter from the given family."""
    if family in _SAMPLERS:
        return _SAMPLERS[family](order, rng)
    if family == "F":
        return sample_family_f(order, rng, ranges)
    if family == "G":
        return sample_family_g(order, rng, ranges)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def target_response(
    filt: CoefficientFilter | FilterCascade, grid: FrequencyGrid
) -> MagnitudeResponse:
    """Magnitude response of a sampled target, whichever form it took."""
    if isinstance(filt, FilterCascade):
        return cascade_response_db(filt, grid)
    if filt.sections is not None:
        return sections_response_db(filt, grid)
    return coeff_response_db(filt, grid)


def sample_target(
    family: str,
    order: int,
    grid: FrequencyGrid,
    seed: int,
    index: int,
    stream: int = STREAM_EVAL,
    ranges: EqRanges | None = None,
    max_retries: int = 100,
) -> tuple[CoefficientFilter | FilterCascade, MagnitudeResponse]:
    """Draw the filter at (seed, stream, index) and its grid response.

    Degenerate responses (a root landing exactly on a grid frequency) are
    resampled under a bumped retry tag so the draw stays addressable.
    """
    for retry in range(max_retries):
        rng = draw_rng(seed, stream, index, retry)
        try:
            filt = sample_filter(family, order, rng, ranges)
            return filt, target_response(filt, grid)
        except (DegenerateResponseError, EigensolverError):
            continue
    raise DegenerateResponseError(
        f"draw {index} of family {family} stayed degenerate after {max_retries} retries"
    )


def scatter_roots(filt: CoefficientFilter | FilterCascade) -> list[tuple[str, complex]]:
    """All numerator/denominator roots of a target, labeled by side."""
    out: list[tuple[str, complex]] = []
    if isinstance(filt, FilterCascade):
        for z in filt.zeros:
            out.append(("numerator", complex(z)))
            out.append(("numerator", complex(z.conjugate())))
        for p in filt.poles:
            out.append(("denominator", complex(p)))
            out.append(("denominator", complex(p.conjugate())))
        return out
    for r in np.roots(filt.numerator):
        out.append(("numerator", complex(r)))
    for r in np.roots(filt.denominator):
        out.append(("denominator", complex(r)))
    return out


def real_root_count(coeffs: np.ndarray) -> int:
    """Number of exactly-real roots of a real polynomial.

    The real-Schur eigensolver underlying np.roots returns real roots with
    an imaginary part of exactly zero, so no tolerance is needed.
    """
    return int(np.count_nonzero(np.roots(coeffs).imag == 0.0))


@dataclass(frozen=True)
class DatasetManifest:
    """Everything needed to regenerate a dataset on demand."""

    family: str
    order: int
    seed: int
    count: int
    f_count: int
    sample_rate_hz: float
    eq_ranges: EqRanges = EqRanges()

    def to_json(self) -> str:
        payload = asdict(self)
        payload["eq_ranges"] = asdict(self.eq_ranges)
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        try:
            payload = json.loads(text)
            ranges = EqRanges(**payload.pop("eq_ranges", {}))
            return cls(eq_ranges=ranges, **payload)
        except (json.JSONDecodeError, TypeError, KeyError) as exc:
            raise DataError(f"malformed dataset manifest: {exc}") from exc


def write_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    Path(path).write_text(manifest.to_json())


def read_manifest(path: str | Path) -> DatasetManifest:
    return DatasetManifest.from_json(Path(path).read_text())
