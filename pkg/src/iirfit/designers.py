"""Non-neural design engines: modified Yule-Walker and gradient descent.

Both consume a target :class:`MagnitudeResponse` and produce dsp types,
and both are scored by the same dB-MSE as the neural path, so the three
engines compare on identical footing.

The Yule-Walker variant fits the denominator from overdetermined
autocorrelation equations (lags N+1..M) of the target power spectrum,
stabilizes it by reflecting exterior poles, and builds a minimum-phase
numerator by real-cepstrum spectral factorization truncated to order N.

The gradient-descent engine optimizes the same projected cascade
parameterization used everywhere else and returns the best parameters
seen, not the last iterate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import (
    CoefficientFilter,
    FilterCascade,
    MagnitudeResponse,
    coeff_response_db,
    _polyval_circle,
)
from .errors import DegenerateResponseError
from .gradients import CascadeParams, cascade_from_params, loss_and_grad
from .randfilt import STREAM_SGD, draw_rng

STABILITY_MARGIN = 1e-8


def _next_pow2(n: int) -> int:
    return 1 << (int(n - 1)).bit_length()


@dataclass(frozen=True)
class MywConfig:
    """Modified Yule-Walker knobs.

    ``acf_lags`` is the last autocorrelation lag used in the denominator
    system (defaults to 4N); ``fft_size`` is the spectral working size
    (defaults to the next power of two >= 4F).
    """

    order: int
    acf_lags: int | None = None
    fft_size: int | None = None

    def __post_init__(self):
        if self.order < 2 or self.order % 2:
            raise ValueError(f"order must be even and >= 2, got {self.order}")

    def resolved(self, f_count: int) -> tuple[int, int]:
        lags = self.acf_lags if self.acf_lags is not None else 4 * self.order
        size = self.fft_size if self.fft_size is not None else _next_pow2(4 * f_count)
        if lags < self.order + 1:
            raise ValueError(f"acf_lags must be >= order+1, got {lags}")
        if size & (size - 1) or size < 2 * (f_count - 1):
            raise ValueError(
                f"fft_size must be a power of two >= 2(F-1), got {size} for F={f_count}"
            )
        if lags > size // 2:
            raise ValueError(f"acf_lags {lags} exceeds fft_size/2 = {size // 2}")
        return lags, size


def _reflect_inside(roots: np.ndarray, margin: float = STABILITY_MARGIN) -> tuple[np.ndarray, float]:
    """Map roots with |r| >= 1 to 1/conj(r); returns the |r| product of the
    reflected roots (the uniform magnitude factor the reflection removed)."""
    out = roots.copy()
    mags = np.abs(out)
    outside = mags >= 1.0
    gain_factor = float(np.prod(mags[outside])) if np.any(outside) else 1.0
    out[outside] = 1.0 / np.conj(out[outside])
    mags = np.abs(out)
    clamp = mags > 1.0 - margin
    if np.any(clamp):
        out[clamp] *= (1.0 - margin) / mags[clamp]
    return out, gain_factor


def myw_design(target: MagnitudeResponse, cfg: MywConfig) -> CoefficientFilter:
    """Fit an order-N coefficient filter to a target magnitude response.

    Always returns a strictly stable denominator and a minimum-phase
    numerator; a final scalar gain refit aligns the mean dB level.
    """
    if not np.all(np.isfinite(target.values_db)):
        raise ValueError("target response contains non-finite values")
    n = cfg.order
    grid = target.grid
    lags, m = cfg.resolved(grid.f_count)

    # Target power spectrum on the FFT half grid, then its autocorrelation.
    w_bins = 2.0 * np.pi * np.arange(m // 2 + 1) / m
    db_bins = np.interp(w_bins, grid.omegas, target.values_db)
    power = 10.0 ** (db_bins / 10.0)
    acf = np.fft.irfft(power, n=m)

    # Overdetermined Yule-Walker system over lags N+1..M.
    rows = np.arange(n + 1, lags + 1)
    t_mat = acf[rows[:, None] - np.arange(1, n + 1)[None, :]]
    rhs = -acf[rows]
    if np.max(np.abs(t_mat)) <= 1e-10 * max(abs(acf[0]), np.finfo(float).tiny):
        # Flat target: the system is singular; fall back to a pure gain.
        gain = 10.0 ** (np.mean(target.values_db) / 20.0)
        num = np.zeros(n + 1)
        den = np.zeros(n + 1)
        num[0] = gain
        den[0] = 1.0
        return CoefficientFilter(num, den)
    a_tail, *_ = np.linalg.lstsq(t_mat, rhs, rcond=None)
    den_poly = np.concatenate(([1.0], a_tail))

    poles, _ = _reflect_inside(np.roots(den_poly))
    den_poly = np.poly(poles).real

    # Minimum-phase numerator via real-cepstrum factorization of |H|*|A|.
    a_mag = np.abs(_polyval_circle(den_poly, w_bins)).astype(np.float64)
    b_mag = np.maximum(np.sqrt(power) * a_mag, 1e-300)
    cep = np.fft.irfft(np.log(b_mag), n=m)
    folded = np.zeros(m)
    folded[0] = cep[0]
    folded[1 : m // 2] = 2.0 * cep[1 : m // 2]
    folded[m // 2] = cep[m // 2]
    h_min = np.fft.ifft(np.exp(np.fft.fft(folded))).real
    num_poly = h_min[: n + 1]

    zeros = np.roots(num_poly)
    if zeros.size and np.any(np.abs(zeros) >= 1.0):
        zeros, factor = _reflect_inside(zeros)
        num_poly = num_poly[0] * factor * np.poly(zeros).real
    num_poly = _pad(num_poly, n + 1)

    result = CoefficientFilter(num_poly, den_poly)
    fit_db = coeff_response_db(result, grid).values_db
    offset_db = float(np.mean(target.values_db - fit_db))
    num_poly = num_poly * 10.0 ** (offset_db / 20.0)
    return CoefficientFilter(num_poly, den_poly)


def _pad(coeffs: np.ndarray, width: int) -> np.ndarray:
    if len(coeffs) >= width:
        return coeffs[:width]
    return np.pad(coeffs, (0, width - len(coeffs)))


# ---------------------------------------------------------------------------
# Gradient descent
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SgdConfig:
    """Iterative designer: root parts start uniform in [-0.5, 0.5], the
    raw gain starts at the flat-match level, and the best-seen iterate
    wins."""

    order: int
    steps: int = 1000
    lr: float = 5e-4
    seed: int = 0
    gain_mode: str = "direct"
    optimizer: str = "plain-sgd"  # or "adaptive-moment"

    def __post_init__(self):
        if self.order < 2 or self.order % 2:
            raise ValueError(f"order must be even and >= 2, got {self.order}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.optimizer not in ("plain-sgd", "adaptive-moment"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class SgdResult:
    cascade: FilterCascade
    loss: float
    trace: np.ndarray  # raw per-iterate losses, length steps + 1


def _flat_match_raw_gain(target: MagnitudeResponse, gain_mode: str) -> float:
    level = 10.0 ** (np.mean(target.values_db) / 20.0)
    if gain_mode == "direct":
        return float(level)
    frac = np.clip(level / 100.0, 1e-6, 1.0 - 1e-6)
    return float(np.log(frac / (1.0 - frac)))


def sgd_design(target: MagnitudeResponse, cfg: SgdConfig) -> SgdResult:
    """Iterative descent on the projected-cascade dB-MSE loss."""
    k = cfg.order // 2
    rng = draw_rng(cfg.seed, STREAM_SGD, 0)
    vec = np.empty(4 * k + 1)
    vec[0] = _flat_match_raw_gain(target, cfg.gain_mode)
    vec[1:] = rng.uniform(-0.5, 0.5, 4 * k)

    adaptive = cfg.optimizer == "adaptive-moment"
    m_buf = np.zeros_like(vec)
    v_buf = np.zeros_like(vec)
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    def eval_with_retries(v: np.ndarray) -> tuple[float, np.ndarray]:
        for _ in range(50):
            try:
                return loss_and_grad(CascadeParams.from_vector(v), target, cfg.gain_mode)
            except DegenerateResponseError as exc:
                # Reinitialize the offending root only (pole section).
                idx = 1 + 2 * (exc.section or 0)
                v[idx : idx + 2] = rng.uniform(-0.5, 0.5, 2)
        raise DegenerateResponseError("descent stayed degenerate after 50 reinits")

    trace = np.empty(cfg.steps + 1)
    best_loss = np.inf
    best_vec = vec.copy()
    for step in range(cfg.steps):
        loss, grad = eval_with_retries(vec)
        trace[step] = loss
        if loss < best_loss:
            best_loss = loss
            best_vec = vec.copy()
        if adaptive:
            m_buf = beta1 * m_buf + (1.0 - beta1) * grad
            v_buf = beta2 * v_buf + (1.0 - beta2) * grad * grad
            m_hat = m_buf / (1.0 - beta1 ** (step + 1))
            v_hat = v_buf / (1.0 - beta2 ** (step + 1))
            vec = vec - cfg.lr * m_hat / (np.sqrt(v_hat) + eps)
        else:
            vec = vec - cfg.lr * grad
        if cfg.gain_mode == "direct" and vec[0] < 1e-6:
            vec[0] = 1e-6
    final_loss, _ = eval_with_retries(vec)
    trace[cfg.steps] = final_loss
    if final_loss < best_loss:
        best_loss = final_loss
        best_vec = vec
    cascade = cascade_from_params(CascadeParams.from_vector(best_vec), cfg.gain_mode)
    return SgdResult(cascade, float(best_loss), trace)
