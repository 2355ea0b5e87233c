"""Analytic gradients of the dB-MSE loss with respect to cascade parameters.

The forward composition is fixed and shallow:

  raw parameters -> (gain bound) + (minimum-phase projection of each root)
                 -> per-section log-magnitude response -> dB-MSE loss

so the backward pass is written in closed form instead of taping an
autodiff graph. A central-finite-difference harness verifies it.

Parameter layout (length 4K + 1 = 2N + 1):

  [raw_gain,
   Re p_0, Im p_0, ..., Re p_{K-1}, Im p_{K-1},
   Re z_0, Im z_0, ..., Re z_{K-1}, Im z_{K-1}]

``gain_mode`` selects how raw_gain becomes the cascade gain: ``direct``
uses it as-is (requires a positive value), ``sigmoid100`` maps it through
100 * sigmoid(raw_gain), bounding the gain to (0, 100).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import DB_OVER_LN, PROJECTION_EPS, FilterCascade, FrequencyGrid, MagnitudeResponse
from .errors import DegenerateResponseError, NumericError

GAIN_MODES = ("direct", "sigmoid100")


@dataclass
class CascadeParams:
    """Unconstrained parameter vector for a K-section cascade."""

    raw_gain: float
    pole_parts: np.ndarray
    zero_parts: np.ndarray

    def __post_init__(self):
        self.pole_parts = np.asarray(self.pole_parts, dtype=np.float64)
        self.zero_parts = np.asarray(self.zero_parts, dtype=np.float64)
        if self.pole_parts.shape != self.zero_parts.shape or self.pole_parts.ndim != 1:
            raise ValueError("pole_parts and zero_parts must be equal-length 1-D")
        if self.pole_parts.size % 2:
            raise ValueError("root part arrays must have even length (Re, Im pairs)")

    @property
    def n_sections(self) -> int:
        return self.pole_parts.size // 2

    def to_vector(self) -> np.ndarray:
        return np.concatenate(([self.raw_gain], self.pole_parts, self.zero_parts))

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "CascadeParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1 or (vec.size - 1) % 4:
            raise ValueError(f"parameter vector length must be 4K+1, got {vec.size}")
        two_k = (vec.size - 1) // 2
        return cls(float(vec[0]), vec[1 : 1 + two_k], vec[1 + two_k :])


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gain_and_derivative(raw: np.ndarray, gain_mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Cascade gain and d(gain)/d(raw) under the chosen bounding mode."""
    raw = np.asarray(raw, dtype=np.float64)
    if gain_mode == "direct":
        if np.any(raw <= 0):
            raise NumericError("direct gain mode requires a positive raw gain")
        return raw, np.ones_like(raw)
    if gain_mode == "sigmoid100":
        s = _sigmoid(raw)
        return 100.0 * s, 100.0 * s * (1.0 - s)
    raise ValueError(f"unknown gain_mode {gain_mode!r}")


def project_roots(parts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimum-phase projection of (..., 2R) part arrays.

    Returns (projected complex roots (..., R), s, q) where s is the radial
    scale tanh(m)(1-eps)/(m+eps) and q = (ds/dm)/m feeds the chain rule.
    """
    x = parts[..., 0::2]
    y = parts[..., 1::2]
    m = np.hypot(x, y)
    tanh_m = np.tanh(m)
    denom = m + PROJECTION_EPS
    s = (1.0 - PROJECTION_EPS) * tanh_m / denom
    sech2 = 1.0 - tanh_m * tanh_m
    ds_dm = (1.0 - PROJECTION_EPS) * (sech2 * denom - tanh_m) / (denom * denom)
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(m > 0.0, ds_dm / np.where(m > 0.0, m, 1.0), 0.0)
    return (x + 1j * y) * s, s, q


def cascade_from_params(params: CascadeParams, gain_mode: str = "direct") -> FilterCascade:
    """Projected, always-minimum-phase cascade for a parameter vector."""
    gain, _ = gain_and_derivative(np.array([params.raw_gain]), gain_mode)
    poles, _, _ = project_roots(params.pole_parts[None, :])
    zeros, _, _ = project_roots(params.zero_parts[None, :])
    return FilterCascade(float(gain[0]), poles[0], zeros[0])


def loss_and_grad_batch(
    vectors: np.ndarray,
    targets_db: np.ndarray,
    grid: FrequencyGrid,
    gain_mode: str = "sigmoid100",
) -> tuple[np.ndarray, np.ndarray]:
    """dB-MSE losses and gradients for a batch of parameter vectors.

    ``vectors`` is (B, 4K+1), ``targets_db`` is (B, F); returns losses (B,)
    and gradients (B, 4K+1) of each loss with respect to its own vector.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    targets_db = np.asarray(targets_db, dtype=np.float64)
    if vectors.ndim != 2 or targets_db.ndim != 2:
        raise ValueError("vectors and targets_db must be 2-D (batch first)")
    if targets_db.shape[1] != grid.f_count:
        raise ValueError(
            f"targets have {targets_db.shape[1]} bins, grid has {grid.f_count}"
        )
    b_sz = vectors.shape[0]
    two_k = (vectors.shape[1] - 1) // 2
    k = two_k // 2
    f_count = grid.f_count

    gain, dgain = gain_and_derivative(vectors[:, 0], gain_mode)
    # Root layout: poles then zeros, sign -1 / +1 on the dB contribution.
    parts = vectors[:, 1:]
    roots, s, q = project_roots(parts)
    sign = np.concatenate([-np.ones(k), np.ones(k)])

    cos_w = np.cos(grid.omegas)
    cos_2w = np.cos(2.0 * grid.omegas)
    b1 = -2.0 * roots.real
    b2 = roots.real**2 + roots.imag**2
    # S(w) = |1 + b1 e^{-iw} + b2 e^{-2iw}|^2, shape (B, 2K, F)
    energy = (
        1.0
        + (b1 * b1 + b2 * b2)[:, :, None]
        + 2.0 * (b1 * (1.0 + b2))[:, :, None] * cos_w
        + 2.0 * b2[:, :, None] * cos_2w
    )
    bad = ~(energy[:, :k, :].min(axis=2) > 0.0)
    if np.any(bad):
        b_idx, s_idx = np.argwhere(bad)[0]
        raise DegenerateResponseError(
            f"denominator section {s_idx} vanishes on the grid (batch element {b_idx})",
            section=int(s_idx),
        )
    energy = np.maximum(energy, 1e-300)

    est_db = 20.0 * np.log10(gain)[:, None] + 0.5 * DB_OVER_LN * (
        sign[None, :, None] * np.log(energy)
    ).sum(axis=1)
    err = est_db - targets_db
    losses = np.mean(err * err, axis=1)
    if not np.all(np.isfinite(losses)):
        raise DegenerateResponseError("non-finite loss in forward pass")

    # Backward: w_j = dL/d(est_db_j)
    w = 2.0 * err / f_count
    ws = w[:, None, :] / energy  # (B, 2K, F)
    basis = np.stack([np.ones(f_count), cos_w, cos_2w])  # (3, F)
    t = ws @ basis.T  # (B, 2K, 3): contractions with 1, cos w, cos 2w
    coef = 0.5 * DB_OVER_LN * sign[None, :]
    d_b1 = coef * (2.0 * b1 * t[:, :, 0] + 2.0 * (1.0 + b2) * t[:, :, 1])
    d_b2 = coef * (2.0 * b2 * t[:, :, 0] + 2.0 * b1 * t[:, :, 1] + 2.0 * t[:, :, 2])

    xp = roots.real
    yp = roots.imag
    d_xp = -2.0 * d_b1 + 2.0 * xp * d_b2
    d_yp = 2.0 * yp * d_b2

    x = parts[:, 0::2]
    y = parts[:, 1::2]
    d_x = d_xp * (s + x * x * q) + d_yp * (x * y * q)
    d_y = d_xp * (x * y * q) + d_yp * (s + y * y * q)

    grads = np.empty_like(vectors)
    grads[:, 0] = (DB_OVER_LN / gain) * dgain * w.sum(axis=1)
    grads[:, 1::2] = d_x
    grads[:, 2::2] = d_y
    return losses, grads


def forward_loss(
    params: CascadeParams, target: MagnitudeResponse, gain_mode: str = "direct"
) -> float:
    """dB-MSE of the projected cascade against the target."""
    losses, _ = loss_and_grad_batch(
        params.to_vector()[None, :], target.values_db[None, :], target.grid, gain_mode
    )
    return float(losses[0])


def loss_and_grad(
    params: CascadeParams, target: MagnitudeResponse, gain_mode: str = "direct"
) -> tuple[float, np.ndarray]:
    """Loss and exact gradient for a single parameter set."""
    losses, grads = loss_and_grad_batch(
        params.to_vector()[None, :], target.values_db[None, :], target.grid, gain_mode
    )
    return float(losses[0]), grads[0]


def finite_diff_grad(
    params: CascadeParams,
    target: MagnitudeResponse,
    gain_mode: str = "direct",
    h: float = 1e-6,
) -> np.ndarray:
    """Central-difference gradient of the forward loss, coordinate-wise."""
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    vec = params.to_vector()
    grad = np.empty_like(vec)
    for i in range(vec.size):
        hi = vec.copy()
        lo = vec.copy()
        hi[i] += h
        lo[i] -= h
        f_hi = forward_loss(CascadeParams.from_vector(hi), target, gain_mode)
        f_lo = forward_loss(CascadeParams.from_vector(lo), target, gain_mode)
        grad[i] = (f_hi - f_lo) / (2.0 * h)
    return grad
