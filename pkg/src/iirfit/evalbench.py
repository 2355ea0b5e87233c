"""Accuracy and runtime benchmarking of the three design engines.

Produces per-dataset rows of dB-MSE statistics and timings, serializable
to CSV (machine) and Markdown (human). Accuracy evaluation may fan out
over threads with a fixed aggregation order; timing always runs
sequentially on a warm cache and measures the design call only.
"""

from __future__ import annotations

import hashlib
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .designers import MywConfig, SgdConfig, myw_design, sgd_design
from .dsp import (
    FrequencyGrid,
    MagnitudeResponse,
    cascade_response_db,
    coeff_response_db,
    db_mse,
)
from .errors import IirfitError
from .mlp import MlpModel, estimate
from .randfilt import STREAM_EVAL, EqRanges, sample_target

REPORT_COLUMNS = (
    "method",
    "dataset",
    "count",
    "failures",
    "mean_db_mse",
    "median_db_mse",
    "p95_db_mse",
    "mean_ms",
    "p95_ms",
    "machine",
    "config_hash",
)


@dataclass
class EvalRow:
    method: str
    dataset: str
    count: int
    failures: int
    mean_db_mse: float
    median_db_mse: float
    p95_db_mse: float
    mean_ms: float
    p95_ms: float
    machine: str
    config_hash: str

    def as_csv(self) -> str:
        return ",".join(
            [
                self.method,
                self.dataset,
                str(self.count),
                str(self.failures),
                f"{self.mean_db_mse:.17g}",
                f"{self.median_db_mse:.17g}",
                f"{self.p95_db_mse:.17g}",
                f"{self.mean_ms:.17g}",
                f"{self.p95_ms:.17g}",
                self.machine,
                self.config_hash,
            ]
        )


class IirnetMethod:
    """Neural estimator wrapper; the design call is normalize+forward+project."""

    def __init__(self, model: MlpModel):
        self.model = model
        self.name = "iirnet"

    def config_text(self) -> str:
        return f"iirnet:D={self.model.hidden_dim},N={self.model.filter_order},F={self.model.input_dim}"

    def design(self, target: MagnitudeResponse):
        return estimate(self.model, target)

    def response(self, designed, grid: FrequencyGrid) -> MagnitudeResponse:
        return cascade_response_db(designed, grid)


class MywMethod:
    def __init__(self, cfg: MywConfig):
        self.cfg = cfg
        self.name = "myw"

    def config_text(self) -> str:
        return f"myw:{self.cfg}"

    def design(self, target: MagnitudeResponse):
        return myw_design(target, self.cfg)

    def response(self, designed, grid: FrequencyGrid) -> MagnitudeResponse:
        return coeff_response_db(designed, grid)


class SgdMethod:
    def __init__(self, cfg: SgdConfig):
        self.cfg = cfg
        self.name = f"sgd({cfg.steps})"

    def config_text(self) -> str:
        return f"sgd:{self.cfg}"

    def design(self, target: MagnitudeResponse):
        return sgd_design(target, self.cfg).cascade

    def response(self, designed, grid: FrequencyGrid) -> MagnitudeResponse:
        return cascade_response_db(designed, grid)


def machine_descriptor() -> str:
    try:
        for line in Path("/proc/cpuinfo").read_text().splitlines():
            if line.lower().startswith("model name"):
                return line.split(":", 1)[1].strip().replace(",", ";")
    except OSError:
        pass
    return f"{platform.system()}-{platform.machine()}"


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def build_eval_set(
    family: str,
    order: int,
    count: int,
    seed: int,
    grid: FrequencyGrid,
    ranges: EqRanges | None = None,
    threads: int = 1,
) -> list[MagnitudeResponse]:
    """Deterministic held-out targets; the eval stream tag keeps these
    draws disjoint from every training stream."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")

    def one(i: int) -> MagnitudeResponse:
        return sample_target(family, order, grid, seed, i, stream=STREAM_EVAL, ranges=ranges)[1]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(count)))
    return [one(i) for i in range(count)]


def evaluate(
    method,
    dataset: list[MagnitudeResponse],
    dataset_name: str,
    threads: int = 1,
) -> EvalRow:
    """Per-filter dB MSE and design wall time, aggregated into one row.

    Per-filter failures are recorded and skipped, never fatal.
    """
    grid = dataset[0].grid

    def one(target: MagnitudeResponse):
        t0 = time.perf_counter()
        try:
            designed = method.design(target)
        except IirfitError:
            return None
        elapsed = time.perf_counter() - t0
        try:
            mse = db_mse(method.response(designed, grid), target)
        except IirfitError:
            return None
        return mse, elapsed

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, dataset))
    else:
        results = [one(t) for t in dataset]

    ok = [r for r in results if r is not None]
    failures = len(results) - len(ok)
    mses = np.array([r[0] for r in ok]) if ok else np.array([np.nan])
    secs = np.array([r[1] for r in ok]) if ok else np.array([np.nan])
    return EvalRow(
        method=method.name,
        dataset=dataset_name,
        count=len(dataset),
        failures=failures,
        mean_db_mse=float(np.mean(mses)),
        median_db_mse=float(np.median(mses)),
        p95_db_mse=float(np.percentile(mses, 95)),
        mean_ms=float(np.mean(secs) * 1e3),
        p95_ms=float(np.percentile(secs, 95) * 1e3),
        machine=machine_descriptor(),
        config_hash=config_hash(method.config_text()),
    )


def time_method(
    method,
    dataset: list[MagnitudeResponse],
    repeats: int = 1000,
    warmup: int = 10,
) -> tuple[float, float]:
    """Warm-cache single-threaded timing of the design call only.

    Cycles through the dataset for `repeats` timed calls after `warmup`
    untimed ones; returns (mean_ms, p95_ms).
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    n = len(dataset)
    for i in range(warmup):
        method.design(dataset[i % n])
    times = np.empty(repeats)
    for i in range(repeats):
        target = dataset[i % n]
        t0 = time.perf_counter()
        method.design(target)
        times[i] = time.perf_counter() - t0
    return float(np.mean(times) * 1e3), float(np.percentile(times, 95) * 1e3)


# ---------------------------------------------------------------------------
# Order study
# ---------------------------------------------------------------------------


def order_study(
    models: dict[int, MlpModel],
    test_orders: tuple[int, ...],
    count: int,
    seed: int,
    grid: FrequencyGrid,
    threads: int = 1,
) -> tuple[dict[int, dict[int, float]], list[str]]:
    """Cross table of mean dB MSE: training-order rows, test-order columns.

    Missing models are skipped with a notice rather than failing the run.
    """
    notices = []
    table: dict[int, dict[int, float]] = {}
    datasets = {
        to: build_eval_set("G", to, count, seed, grid, threads=threads) for to in test_orders
    }
    for train_order in sorted(models):
        model = models[train_order]
        if model is None:
            notices.append(f"no model for train order {train_order}; row skipped")
            continue
        row = {}
        for to in test_orders:
            eval_row = evaluate(IirnetMethod(model), datasets[to], f"G{to}", threads=threads)
            row[to] = eval_row.mean_db_mse
        table[train_order] = row
    return table, notices


def order_study_markdown(table: dict[int, dict[int, float]], test_orders: tuple[int, ...]) -> str:
    lines = ["| train order | " + " | ".join(f"test {t}" for t in test_orders) + " |"]
    lines.append("|" + "---|" * (len(test_orders) + 1))
    for train_order in sorted(table):
        cells = " | ".join(f"{table[train_order][t]:.2f}" for t in test_orders)
        lines.append(f"| {train_order} | {cells} |")
    return "\n".join(lines) + "\n"


def order_study_csv(table: dict[int, dict[int, float]], test_orders: tuple[int, ...]) -> str:
    lines = ["train_order," + ",".join(f"test_{t}" for t in test_orders)]
    for train_order in sorted(table):
        cells = ",".join(f"{table[train_order][t]:.17g}" for t in test_orders)
        lines.append(f"{train_order},{cells}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------


def report_csv(rows: list[EvalRow]) -> str:
    lines = [",".join(REPORT_COLUMNS)]
    lines.extend(row.as_csv() for row in rows)
    return "\n".join(lines) + "\n"


def report_markdown(rows: list[EvalRow]) -> str:
    header = "| " + " | ".join(REPORT_COLUMNS[:-2]) + " |"
    sep = "|" + "---|" * (len(REPORT_COLUMNS) - 2)
    lines = [header, sep]
    for r in rows:
        lines.append(
            f"| {r.method} | {r.dataset} | {r.count} | {r.failures} "
            f"| {r.mean_db_mse:.2f} | {r.median_db_mse:.2f} | {r.p95_db_mse:.2f} "
            f"| {r.mean_ms:.3f} | {r.p95_ms:.3f} |"
        )
    return "\n".join(lines) + "\n"


def write_report(rows: list[EvalRow], csv_path: str | Path, md_path: str | Path) -> None:
    Path(csv_path).write_text(report_csv(rows))
    Path(md_path).write_text(report_markdown(rows))
