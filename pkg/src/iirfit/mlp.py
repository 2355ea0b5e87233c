"""Neural magnitude-to-cascade estimator and its streaming trainer.

Architecture (fixed): two hidden blocks of linear -> layer normalization
-> leaky ReLU (slope 0.2) with hidden width D, then an activation-free
projection to 2N + 1 outputs laid out as
[raw_gain, pole Re/Im pairs, zero Re/Im pairs]. The gain head is bounded
downstream by 100 * sigmoid.

Training streams freshly sampled random filters (they are never reused),
backpropagates the dB-MSE loss through the cascade construction in double
precision while the network itself runs in single precision, clips the
global gradient norm, and applies a decoupled-weight-decay Adam update
with a two-point step-fraction learning-rate decay.

Checkpoints are little-endian binary: a fixed header, the parameter
arrays, the optimizer moments, and a trailing CRC-32 of the payload.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import FilterCascade, FrequencyGrid, MagnitudeResponse, make_grid, normalize_for_network
from .errors import CheckpointError, NonFiniteLossError
from .gradients import CascadeParams, cascade_from_params, loss_and_grad_batch
from .randfilt import STREAM_INIT, STREAM_TRAIN, EqRanges, draw_rng, sample_target

LN_EPS = 1e-12

CHECKPOINT_MAGIC = b"IIRN"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIQQQ")

# Parameter array order inside a model and its checkpoint payload.
PARAM_NAMES = ("w1", "b1", "g1", "beta1", "w2", "b2", "g2", "beta2", "w3", "b3")


@dataclass
class MlpModel:
    """Weights, biases, and normalization parameters of the estimator."""

    input_dim: int
    hidden_dim: int
    filter_order: int
    w1: np.ndarray
    b1: np.ndarray
    g1: np.ndarray
    beta1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    g2: np.ndarray
    beta2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    lrelu_alpha: float = 0.2

    @property
    def output_dim(self) -> int:
        return 2 * self.filter_order + 1

    @property
    def dtype(self) -> np.dtype:
        return self.w1.dtype

    def params(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in PARAM_NAMES]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params())


def init_model(
    f_count: int,
    hidden_dim: int,
    order: int,
    seed: int,
    dtype=np.float32,
) -> MlpModel:
    """Uniform fan-in initialization: W ~ U(+/- 1/sqrt(fan_in)), zero
    biases and offsets, unit normalization gains."""
    if order < 2 or order % 2:
        raise ValueError(f"filter order must be even and >= 2, got {order}")
    rng = draw_rng(seed, STREAM_INIT, 0)
    p = 2 * order + 1

    def linear(n_out, n_in):
        bound = 1.0 / np.sqrt(n_in)
        return rng.uniform(-bound, bound, (n_out, n_in)).astype(dtype)

    d = hidden_dim
    return MlpModel(
        input_dim=f_count,
        hidden_dim=d,
        filter_order=order,
        w1=linear(d, f_count),
        b1=np.zeros(d, dtype),
        g1=np.ones(d, dtype),
        beta1=np.zeros(d, dtype),
        w2=linear(d, d),
        b2=np.zeros(d, dtype),
        g2=np.ones(d, dtype),
        beta2=np.zeros(d, dtype),
        w3=linear(p, d),
        b3=np.zeros(p, dtype),
    )


def layernorm_forward(z: np.ndarray, gain: np.ndarray, offset: np.ndarray):
    """Row-wise normalization to zero mean / unit variance, then affine.

    Statistics accumulate in float64 so the normalized rows meet the
    zero-mean/unit-variance contract even in single precision.
    """
    mu = np.mean(z, axis=1, keepdims=True, dtype=np.float64)
    var = np.mean((z.astype(np.float64) - mu) ** 2, axis=1, keepdims=True)
    inv_std = (1.0 / np.sqrt(var + LN_EPS)).astype(z.dtype)
    xhat = ((z - mu.astype(z.dtype)) * inv_std).astype(z.dtype)
    return gain * xhat + offset, (xhat, inv_std)


def layernorm_backward(d_out: np.ndarray, gain: np.ndarray, cache):
    xhat, inv_std = cache
    d_gain = (d_out * xhat).sum(axis=0)
    d_offset = d_out.sum(axis=0)
    d_xhat = d_out * gain
    mean_dxhat = d_xhat.mean(axis=1, keepdims=True)
    mean_dxhat_xhat = (d_xhat * xhat).mean(axis=1, keepdims=True)
    d_z = inv_std * (d_xhat - mean_dxhat - xhat * mean_dxhat_xhat)
    return d_z.astype(d_out.dtype), d_gain, d_offset


def forward_batch(model: MlpModel, x: np.ndarray):
    """Network outputs (B, 2N+1) plus the cache for backpropagation."""
    x = np.ascontiguousarray(x, dtype=model.dtype)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(f"input has shape {x.shape}, expected (B, {model.input_dim})")
    a = model.lrelu_alpha
    z1 = x @ model.w1.T + model.b1
    n1, ln1 = layernorm_forward(z1, model.g1, model.beta1)
    h1 = np.where(n1 > 0, n1, a * n1)
    z2 = h1 @ model.w2.T + model.b2
    n2, ln2 = layernorm_forward(z2, model.g2, model.beta2)
    h2 = np.where(n2 > 0, n2, a * n2)
    out = h2 @ model.w3.T + model.b3
    return out, (x, ln1, n1, h1, ln2, n2, h2)


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Single-input forward pass; returns the raw parameter vector."""
    out, _ = forward_batch(model, np.asarray(x)[None, :])
    return out[0]


def backward_batch(model: MlpModel, cache, d_out: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss with respect to every model parameter,
    given d(loss)/d(outputs)."""
    x, ln1, n1, h1, ln2, n2, h2 = cache
    a = model.lrelu_alpha
    d_out = d_out.astype(model.dtype)

    grads: dict[str, np.ndarray] = {}
    grads["w3"] = d_out.T @ h2
    grads["b3"] = d_out.sum(axis=0)
    d_h2 = d_out @ model.w3
    d_n2 = d_h2 * np.where(n2 > 0, 1.0, a).astype(model.dtype)
    d_z2, grads["g2"], grads["beta2"] = layernorm_backward(d_n2, model.g2, ln2)
    grads["w2"] = d_z2.T @ h1
    grads["b2"] = d_z2.sum(axis=0)
    d_h1 = d_z2 @ model.w2
    d_n1 = d_h1 * np.where(n1 > 0, 1.0, a).astype(model.dtype)
    d_z1, grads["g1"], grads["beta1"] = layernorm_backward(d_n1, model.g1, ln1)
    grads["w1"] = d_z1.T @ x
    grads["b1"] = d_z1.sum(axis=0)
    return grads


def model_loss_and_param_grads(
    model: MlpModel, x: np.ndarray, targets_db: np.ndarray, grid: FrequencyGrid
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean batch dB-MSE and its gradient w.r.t. every network parameter.

    The DSP stage (projection, response, loss) runs in double precision;
    the returned output-stage gradient is cast back to the model dtype for
    the network backward pass.
    """
    out, cache = forward_batch(model, x)
    losses, d_raw = loss_and_grad_batch(
        out.astype(np.float64), targets_db, grid, gain_mode="sigmoid100"
    )
    loss = float(np.mean(losses))
    grads = backward_batch(model, cache, d_raw / len(losses))
    return loss, grads


def estimate(model: MlpModel, target: MagnitudeResponse) -> FilterCascade:
    """Design a minimum-phase cascade matching the target response."""
    if target.grid.f_count != model.input_dim:
        raise ValueError(
            f"target grid has {target.grid.f_count} bins, model expects {model.input_dim}"
        )
    out = forward(model, normalize_for_network(target).astype(model.dtype))
    params = CascadeParams.from_vector(out.astype(np.float64))
    return cascade_from_params(params, gain_mode="sigmoid100")


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    """Training regime; defaults follow the full-scale recipe."""

    order: int
    epochs: int
    hidden_dim: int = 512
    family: str = "G"
    batch_size: int = 128
    filters_per_epoch: int = 20000
    lr_initial: float | None = None  # 1e-5, or 1e-6 once order >= 32
    lr_decay_points: tuple[float, float] = (0.80, 0.95)
    lr_decay_factor: float = 0.1
    grad_clip_norm: float = 0.9
    f_count: int = 512
    sample_rate_hz: float = 44100.0
    seed: int = 0
    weight_decay: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    eq_ranges: EqRanges | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.filters_per_epoch < 1:
            raise ValueError("batch_size, epochs, filters_per_epoch must be >= 1")
        pts = self.lr_decay_points
        if not all(0.0 < p < 1.0 for p in pts) or list(pts) != sorted(pts):
            raise ValueError(f"lr_decay_points must ascend within (0, 1), got {pts}")
        if self.lr_initial is not None and self.lr_initial <= 0:
            raise ValueError("lr_initial must be positive")

    @property
    def lr(self) -> float:
        if self.lr_initial is not None:
            return self.lr_initial
        return 1e-6 if self.order >= 32 else 1e-5

    @property
    def steps_per_epoch(self) -> int:
        return -(-self.filters_per_epoch // self.batch_size)

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch


@dataclass
class TrainState:
    """Optimizer state; everything needed to resume bit-identically."""

    seed: int
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def fresh(cls, model: MlpModel, seed: int) -> "TrainState":
        return cls(
            seed=seed,
            step=0,
            m=[np.zeros_like(p) for p in model.params()],
            v=[np.zeros_like(p) for p in model.params()],
        )


def lr_at(step: int, total_steps: int, config: TrainConfig) -> float:
    """Learning rate for a 0-based step; decay applies from the first step
    at or beyond each decay fraction."""
    lr = config.lr
    for frac in config.lr_decay_points:
        if step >= frac * total_steps:
            lr *= config.lr_decay_factor
    return lr


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = np.sqrt(
        sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values())
    )
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for name in grads:
            grads[name] = grads[name] * np.asarray(scale, dtype=grads[name].dtype)
    return total


def adamw_update(
    model: MlpModel, state: TrainState, grads: dict[str, np.ndarray], lr: float, config: TrainConfig
) -> None:
    """Decoupled-weight-decay adaptive-moment step, in place."""
    t = state.step + 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for i, name in enumerate(PARAM_NAMES):
        g = grads[name]
        p = getattr(model, name)
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / np.asarray(bias1, dtype=p.dtype)
        v_hat = state.v[i] / np.asarray(bias2, dtype=p.dtype)
        step_vec = m_hat / (np.sqrt(v_hat) + config.adam_eps) + config.weight_decay * p
        setattr(model, name, p - np.asarray(lr, dtype=p.dtype) * step_vec)


def train_step(
    model: MlpModel,
    state: TrainState,
    batch_x: np.ndarray,
    batch_targets_db: np.ndarray,
    grid: FrequencyGrid,
    config: TrainConfig,
) -> float:
    """One optimizer step on one batch; returns the batch loss."""
    loss, grads = model_loss_and_param_grads(model, batch_x, batch_targets_db, grid)
    if not np.isfinite(loss):
        raise NonFiniteLossError(
            f"non-finite loss at step {state.step} "
            f"(seed {state.seed}, draws {state.step * len(batch_x)}..{(state.step + 1) * len(batch_x) - 1})"
        )
    clip_global_norm(grads, config.grad_clip_norm)
    adamw_update(model, state, grads, lr_at(state.step, config.total_steps, config), config)
    state.step += 1
    return loss


def _sample_batch(config: TrainConfig, grid: FrequencyGrid, cursor: int):
    targets = np.empty((config.batch_size, config.f_count))
    for i in range(config.batch_size):
        _, resp = sample_target(
            config.family,
            config.order,
            grid,
            config.seed,
            cursor + i,
            stream=STREAM_TRAIN,
            ranges=config.eq_ranges,
        )
        targets[i] = resp.values_db
    x = np.clip(targets, -128.0, 128.0) / 128.0
    return x, targets


def train(
    config: TrainConfig,
    model: MlpModel | None = None,
    state: TrainState | None = None,
    log_hook=None,
) -> tuple[MlpModel, TrainState, list[tuple[int, int, float, float]]]:
    """Stream random filters and train; returns model, state, and the log.

    Log rows are (epoch, step, lr, mean_db_mse) with one row per epoch.
    Pass a checkpointed (model, state) pair with the original config to
    resume; the filter stream continues from step * batch_size.
    """
    grid = make_grid(config.f_count, config.sample_rate_hz)
    if model is None:
        model = init_model(config.f_count, config.hidden_dim, config.order, config.seed)
    if state is None:
        state = TrainState.fresh(model, config.seed)
    log: list[tuple[int, int, float, float]] = []
    if state.step % config.steps_per_epoch:
        raise ValueError("resume is only supported from an epoch boundary")
    start_epoch = state.step // config.steps_per_epoch
    for epoch in range(start_epoch, config.epochs):
        epoch_losses = []
        for _ in range(config.steps_per_epoch):
            cursor = state.step * config.batch_size
            x, targets = _sample_batch(config, grid, cursor)
            epoch_losses.append(train_step(model, state, x, targets, grid, config))
        row = (
            epoch + 1,
            state.step,
            lr_at(state.step - 1, config.total_steps, config),
            float(np.mean(epoch_losses)),
        )
        log.append(row)
        if log_hook is not None:
            log_hook(row)
    return model, state, log


def write_training_log(path: str | Path, log: list[tuple[int, int, float, float]]) -> None:
    lines = ["epoch,step,lr,mean_db_mse"]
    for epoch, step, lr, loss in log:
        lines.append(f"{epoch},{step},{lr:.17g},{loss:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: MlpModel, state: TrainState, path: str | Path) -> None:
    """Binary checkpoint: header, float32 parameters, float32 moments, CRC-32."""
    header = _HEADER.pack(
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        model.input_dim,
        model.hidden_dim,
        model.filter_order,
        model.parameter_count(),
        state.seed,
        state.step,
    )
    chunks = []
    for p in model.params():
        chunks.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    for buf in (*state.m, *state.v):
        chunks.append(np.ascontiguousarray(buf, dtype="<f4").tobytes())
    payload = b"".join(chunks)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    Path(path).write_bytes(header + payload + struct.pack("<I", crc))


def load_checkpoint(path: str | Path) -> tuple[MlpModel, TrainState]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size + 4:
        raise CheckpointError(f"{path}: truncated checkpoint ({len(raw)} bytes)")
    magic, version, f_count, hidden, order, count, seed, step = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    payload = raw[_HEADER.size : -4]
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise CheckpointError(f"{path}: checksum mismatch")
    if len(payload) != count * 3 * 4:
        raise CheckpointError(
            f"{path}: payload holds {len(payload)} bytes, expected {count * 3 * 4}"
        )

    p = 2 * order + 1
    shapes = [
        (hidden, f_count), (hidden,), (hidden,), (hidden,),
        (hidden, hidden), (hidden,), (hidden,), (hidden,),
        (p, hidden), (p,),
    ]
    if sum(int(np.prod(s)) for s in shapes) != count:
        raise CheckpointError(f"{path}: header dimensions do not match parameter count")

    def take(buf_offset, shape):
        n = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=buf_offset).reshape(shape)
        return arr.copy(), buf_offset + 4 * n

    offset = 0
    arrays = []
    for _ in range(3):
        group = []
        for shape in shapes:
            arr, offset = take(offset, shape)
            group.append(arr)
        arrays.append(group)
    params, moments_m, moments_v = arrays
    model = MlpModel(f_count, hidden, order, *params)
    state = TrainState(seed=seed, step=step, m=moments_m, v=moments_v)
    return model, state
