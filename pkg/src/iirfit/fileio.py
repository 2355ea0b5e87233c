"""On-disk formats for responses and filters.

* MagnitudeResponse: CSV with header ``freq_hz,mag_db``, frequencies
  ascending on a linear grid starting at 0.
* CoefficientFilter: JSON ``{"order": N, "gain": g, "sections": [[b0..a2],..]}``
  with every section normalized so a0 = 1.
* FilterCascade: JSON ``{"gain": g, "poles": [[re,im],..], "zeros": [[re,im],..]}``.

Floats are written with repr-exact precision so a write/read/write cycle
is byte-stable.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dsp import (
    CoefficientFilter,
    FilterCascade,
    FrequencyGrid,
    MagnitudeResponse,
    make_grid,
    pair_roots_to_quadratics,
)
from .errors import DataError


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_response_csv(path: str | Path, response: MagnitudeResponse) -> None:
    lines = ["freq_hz,mag_db"]
    for f_hz, v in zip(response.grid.frequencies_hz, response.values_db):
        lines.append(f"{_fmt(f_hz)},{_fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_response_csv(path: str | Path) -> MagnitudeResponse:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "freq_hz,mag_db":
        raise DataError(f"{path}: expected header 'freq_hz,mag_db'")
    freqs, vals = [], []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 2:
            raise DataError(f"{path}:{i}: expected 2 columns, got {len(parts)}")
        try:
            freqs.append(float(parts[0]))
            vals.append(float(parts[1]))
        except ValueError as exc:
            raise DataError(f"{path}:{i}: non-numeric value") from exc
    freqs = np.asarray(freqs)
    vals = np.asarray(vals)
    if len(freqs) < 2:
        raise DataError(f"{path}: need at least 2 rows")
    if freqs[0] != 0.0 or np.any(np.diff(freqs) <= 0):
        raise DataError(f"{path}: frequencies must ascend from 0")
    step = freqs[-1] / (len(freqs) - 1)
    if not np.allclose(freqs, step * np.arange(len(freqs)), rtol=1e-9, atol=1e-6):
        raise DataError(f"{path}: frequencies are not linearly spaced")
    grid = make_grid(len(freqs), 2.0 * freqs[-1])
    return MagnitudeResponse(grid, vals)


def write_filter_json(path: str | Path, filt: CoefficientFilter) -> None:
    """Serialize a coefficient filter as gain + a0-normalized sections.

    Filters without stored sections are factored into conjugate-pair /
    real-pair quadratics first.
    """
    if filt.sections is not None:
        gain = 1.0
        sections = []
        for b0, b1, b2, a0, a1, a2 in filt.sections:
            sections.append([b0 / a0, b1 / a0, b2 / a0, 1.0, a1 / a0, a2 / a0])
    else:
        b, a = filt.numerator, filt.denominator
        gain = b[0] / a[0]
        nq = pair_roots_to_quadratics(np.roots(b)) if filt.order else np.zeros((0, 3))
        dq = pair_roots_to_quadratics(np.roots(a)) if filt.order else np.zeros((0, 3))
        k = max(len(nq), len(dq), 1)
        sections = []
        for i in range(k):
            num = nq[i] if i < len(nq) else (1.0, 0.0, 0.0)
            den = dq[i] if i < len(dq) else (1.0, 0.0, 0.0)
            sections.append([*map(float, num), *map(float, den)])
    payload = {
        "order": filt.order,
        "gain": float(gain),
        "sections": sections,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_filter_json(path: str | Path) -> CoefficientFilter:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    try:
        order = int(payload["order"])
        gain = float(payload["gain"])
        rows = payload["sections"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: missing or malformed filter fields") from exc
    sections = np.asarray(rows, dtype=np.float64)
    if sections.ndim != 2 or sections.shape[1] != 6:
        raise DataError(f"{path}: sections must be rows of 6 values")
    if np.any(sections[:, 3] != 1.0):
        raise DataError(f"{path}: sections must be normalized to a0 = 1")
    sections[0, :3] *= gain
    num = np.array([1.0])
    den = np.array([1.0])
    for row in sections:
        num = np.convolve(num, row[:3])
        den = np.convolve(den, row[3:])
    width = order + 1
    num = _pad_trim(num, width, path)
    den = _pad_trim(den, width, path)
    return CoefficientFilter(num, den, sections)


def _pad_trim(coeffs: np.ndarray, width: int, path) -> np.ndarray:
    if len(coeffs) > width:
        if np.any(coeffs[width:] != 0.0):
            raise DataError(f"{path}: sections exceed declared order")
        return coeffs[:width]
    return np.pad(coeffs, (0, width - len(coeffs)))


def write_cascade_json(path: str | Path, cascade: FilterCascade) -> None:
    payload = {
        "gain": float(cascade.gain),
        "poles": [[p.real, p.imag] for p in cascade.poles],
        "zeros": [[z.real, z.imag] for z in cascade.zeros],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_cascade_json(path: str | Path) -> FilterCascade:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    try:
        gain = float(payload["gain"])
        poles = np.array([complex(re, im) for re, im in payload["poles"]])
        zeros = np.array([complex(re, im) for re, im in payload["zeros"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: missing or malformed cascade fields") from exc
    return FilterCascade(gain, poles, zeros)


def write_roots_csv(path: str | Path, rows: list[tuple[int, str, complex]]) -> None:
    """Root-scatter CSV: one row per root, labeled by draw and side."""
    lines = ["draw,side,re,im"]
    for draw, side, r in rows:
        lines.append(f"{draw},{side},{_fmt(r.real)},{_fmt(r.imag)}")
    Path(path).write_text("\n".join(lines) + "\n")
