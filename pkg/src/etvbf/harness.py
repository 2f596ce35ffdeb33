"""Monte Carlo experiment runner: trials, metrics, parameter sweeps, outputs.

Trials are deterministic given (config, filter id, trial index). Truth
and noise come from a stream keyed by (base_seed, trial_index) only, so
all filters see identical trajectories (common random numbers), while
each filter's trigger draws come from a filter-local stream.
"""

from __future__ import annotations

import dataclasses
import json
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import KfState, clset_kf_step, kf_oracle_step
from .distributions import SeededRng, sample_gaussian
from .filter import FilterConfig, etvbf_step, initial_state
from .model import build_cv_scenario, scenario_defaults, simulate_truth
from .numerics import NotPositiveDefinite, Singular
from .trigger import TriggerConfig, TriggerOutcome, sensor_decide

__all__ = [
    "FILTER_IDS",
    "ExperimentConfig",
    "TrialRecord",
    "SweepRow",
    "build_filter_config",
    "run_trial",
    "compute_metrics",
    "run_sweep",
    "emit_outputs",
]

FILTER_ETVBF = "etvbf"
FILTER_VBF = "vbf"
FILTER_CLSET = "clset-kf"
FILTER_ORACLE = "oracle-kf"
FILTER_IDS = (FILTER_ETVBF, FILTER_VBF, FILTER_CLSET, FILTER_ORACLE)

SWEEP_PARAMS = ("y", "r", "rho")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment settings; defaults follow the vehicle scenario."""

    base_seed: int = 20240
    n_mc: int = 50
    n_step: int = 150
    filters: tuple[str, ...] = FILTER_IDS
    sweep_param: str | None = None
    sweep_grid: tuple[float, ...] = ()
    # scenario
    sample_time: float = 1.0
    cosine_period: int = 500
    # filter tuning
    nominal_q_scales: tuple[float, ...] = (1.0, 2.0, 3.0, 9.0, 10.0)
    dof_g: float = 10.0
    r_scale: float = 150.0
    s0: float = 5.0
    alpha0: float = 1.0
    rho: float = 0.997
    y_scale: float = 0.0005
    clset_q_scale: float = 4.0
    max_iterations: int = 50
    tol: float = 1e-6
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(self.filters))
        object.__setattr__(self, "sweep_grid", tuple(float(v) for v in self.sweep_grid))
        object.__setattr__(
            self, "nominal_q_scales", tuple(float(v) for v in self.nominal_q_scales)
        )
        if self.n_mc < 1 or self.n_step < 1:
            raise ValueError("n_mc and n_step must be at least 1")
        unknown = set(self.filters) - set(FILTER_IDS)
        if unknown:
            raise ValueError(f"unknown filter ids: {sorted(unknown)}")
        if self.sweep_param is not None and self.sweep_param not in SWEEP_PARAMS:
            raise ValueError(f"sweep_param must be one of {SWEEP_PARAMS}")
        if any(v <= 0 for v in self.sweep_grid):
            raise ValueError("sweep grid values must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class TrialRecord:
    """Per-step log of one trial; failed trials keep their failure step."""

    trial_index: int
    filter_id: str
    truth: np.ndarray  # (n_step, n)
    estimate: np.ndarray  # (n_step, n)
    gamma: np.ndarray  # (n_step,)
    iterations: np.ndarray  # (n_step,)
    failed: bool = False
    fail_step: int | None = None

    def to_csv(self, path) -> None:
        n = self.truth.shape[1]
        header = (
            ["k"]
            + [f"x{i+1}" for i in range(n)]
            + [f"xhat{i+1}" for i in range(n)]
            + ["gamma", "iterations"]
        )
        lines = [",".join(header)]
        for k in range(self.truth.shape[0]):
            row = (
                [str(k + 1)]
                + [f"{v:.12g}" for v in self.truth[k]]
                + [f"{v:.12g}" for v in self.estimate[k]]
                + [str(int(self.gamma[k])), str(int(self.iterations[k]))]
            )
            lines.append(",".join(row))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class SweepRow:
    """Aggregated metrics for one (sweep value, filter) cell."""

    sweep_value: float
    filter: str
    rmse: float
    comm_rate: float
    comm_rate_sqrt: float  # square root of the mean, reported alongside
    mean_iterations: float
    failures: int


def build_filter_config(cfg: ExperimentConfig) -> FilterConfig:
    """Adaptive filter configuration derived from the experiment settings."""
    m_size = len(cfg.nominal_q_scales)
    return FilterConfig(
        nominal_q=tuple(s * np.eye(4) for s in cfg.nominal_q_scales),
        dof_g=np.full(m_size, cfg.dof_g),
        r0=cfg.r_scale * np.eye(2),
        s0=cfg.s0,
        alpha0=np.full(m_size, cfg.alpha0),
        rho=cfg.rho,
        trigger=TriggerConfig(Y=cfg.y_scale * np.eye(2)),
        max_iterations=cfg.max_iterations,
        tol=cfg.tol,
    )


def _trigger_stream(cfg: ExperimentConfig, trial_index: int, filter_id: str) -> SeededRng:
    return SeededRng((cfg.base_seed, trial_index, zlib.crc32(filter_id.encode("utf-8"))))


def run_trial(cfg: ExperimentConfig, filter_id: str, trial_index: int) -> TrialRecord:
    """Simulate one closed sensor-estimator loop for one filter.

    The initial estimate is drawn from the truth stream before the
    trajectory, so every filter starts from the same estimate and sees
    the same truth.
    """
    if filter_id not in FILTER_IDS:
        raise ValueError(f"unknown filter id: {filter_id}")
    model = build_cv_scenario(cfg.sample_time, cfg.cosine_period)
    x0, p0, _ = scenario_defaults()
    truth_rng = SeededRng((cfg.base_seed, trial_index))
    x0_hat = sample_gaussian(truth_rng, x0, p0)
    traj = simulate_truth(model, x0, cfg.n_step, truth_rng)
    trig_rng = _trigger_stream(cfg, trial_index, filter_id)
    fcfg = build_filter_config(cfg)

    estimate = np.full((cfg.n_step, model.n), np.nan)
    gamma = np.zeros(cfg.n_step, dtype=int)
    iterations = np.zeros(cfg.n_step, dtype=int)
    record = TrialRecord(
        trial_index=trial_index,
        filter_id=filter_id,
        truth=traj.states,
        estimate=estimate,
        gamma=gamma,
        iterations=iterations,
    )

    vb_state = initial_state(x0_hat, p0, fcfg)
    kf_state = KfState(x_hat=x0_hat, P=p0)
    q_bar = cfg.clset_q_scale * np.eye(4)
    r_bar = cfg.r_scale * np.eye(2)

    for k in range(1, cfg.n_step + 1):
        f_k, h_k = model.F(k), model.H(k)
        z_k = traj.measurements[k - 1]
        try:
            if filter_id == FILTER_ORACLE:
                kf_state = kf_oracle_step(
                    kf_state, f_k, h_k, model.trueQ(k), model.trueR(k), z_k
                )
                estimate[k - 1] = kf_state.x_hat
                gamma[k - 1] = 1
            elif filter_id == FILTER_CLSET:
                z_pred = h_k @ (f_k @ kf_state.x_hat)
                outcome = sensor_decide(z_k, z_pred, fcfg.trigger, trig_rng)
                kf_state = clset_kf_step(
                    kf_state, f_k, h_k, q_bar, r_bar, fcfg.trigger.Y, outcome
                )
                estimate[k - 1] = kf_state.x_hat
                gamma[k - 1] = outcome.gamma
            else:
                if filter_id == FILTER_VBF:
                    outcome = TriggerOutcome(gamma=1, measurement=z_k)
                else:
                    z_pred = h_k @ (f_k @ vb_state.x_hat)
                    outcome = sensor_decide(z_k, z_pred, fcfg.trigger, trig_rng)
                vb_state, diag = etvbf_step(vb_state, f_k, h_k, outcome, fcfg)
                estimate[k - 1] = vb_state.x_hat
                gamma[k - 1] = outcome.gamma
                iterations[k - 1] = diag.iterations
        except (NotPositiveDefinite, Singular):
            record.failed = True
            record.fail_step = k
            break
    return record


def compute_metrics(records: list[TrialRecord]) -> tuple[float, float, float]:
    """RMSE over all (trial, step, component), transmit rate, mean iterations.

    Failed trials are excluded here; callers count them separately.
    """
    if not records:
        raise ValueError("no trial records")
    ok = [r for r in records if not r.failed]
    if not ok:
        return math.nan, math.nan, math.nan
    sq_sum = 0.0
    count = 0
    gamma_sum = 0
    gamma_count = 0
    iter_sum = 0
    for rec in ok:
        err = rec.estimate - rec.truth
        sq_sum += float(np.sum(err * err))
        count += err.size
        gamma_sum += int(rec.gamma.sum())
        gamma_count += rec.gamma.size
        iter_sum += int(rec.iterations.sum())
    rmse = math.sqrt(sq_sum / count)
    comm_rate = gamma_sum / gamma_count
    mean_iterations = iter_sum / gamma_count
    return rmse, comm_rate, mean_iterations


def _apply_sweep_value(cfg: ExperimentConfig, value: float) -> ExperimentConfig:
    if cfg.sweep_param == "y":
        return dataclasses.replace(cfg, y_scale=value)
    if cfg.sweep_param == "r":
        return dataclasses.replace(cfg, r_scale=value)
    if cfg.sweep_param == "rho":
        return dataclasses.replace(cfg, rho=value)
    raise ValueError("config has no sweep parameter set")


def run_sweep(cfg: ExperimentConfig) -> list[SweepRow]:
    """Run all filters over the sweep grid; one row per (value, filter).

    Trials run in a thread pool sized by cfg.workers; aggregation is a
    deterministic fold in trial order, so the worker count never changes
    the results.
    """
    if cfg.sweep_param is None or not cfg.sweep_grid:
        raise ValueError("run_sweep needs sweep_param and a nonempty sweep_grid")
    rows: list[SweepRow] = []
    for value in cfg.sweep_grid:
        point_cfg = _apply_sweep_value(cfg, value)
        for filter_id in cfg.filters:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                records = list(
                    pool.map(
                        lambda t: run_trial(point_cfg, filter_id, t),
                        range(cfg.n_mc),
                    )
                )
            failures = sum(1 for r in records if r.failed)
            rmse, comm_rate, mean_iter = compute_metrics(records)
            rows.append(
                SweepRow(
                    sweep_value=value,
                    filter=filter_id,
                    rmse=rmse,
                    comm_rate=comm_rate,
                    comm_rate_sqrt=math.sqrt(comm_rate) if comm_rate == comm_rate else math.nan,
                    mean_iterations=mean_iter,
                    failures=failures,
                )
            )
    return rows


def emit_outputs(rows: list[SweepRow], path_prefix: str, cfg: ExperimentConfig) -> list[str]:
    """Write the sweep CSV, per-metric plot-data files, and a config manifest."""
    if not rows:
        raise ValueError("no sweep rows to emit")
    written = []

    csv_path = f"{path_prefix}.csv"
    lines = ["sweep_value,filter,rmse,comm_rate,mean_iterations,failures"]
    for row in rows:
        lines.append(
            f"{row.sweep_value:.12g},{row.filter},{row.rmse:.12g},"
            f"{row.comm_rate:.12g},{row.mean_iterations:.12g},{row.failures}"
        )
    _write_text(csv_path, "\n".join(lines) + "\n")
    written.append(csv_path)

    # Plot-data files: one block per filter, rows sorted by sweep value.
    metrics = {
        "rmse": lambda r: f"{r.sweep_value:.12g} {r.rmse:.12g}",
        "comm_rate": lambda r: f"{r.sweep_value:.12g} {r.comm_rate:.12g} {r.comm_rate_sqrt:.12g}",
        "iterations": lambda r: f"{r.sweep_value:.12g} {r.mean_iterations:.12g}",
    }
    filter_order = list(dict.fromkeys(r.filter for r in rows))
    for name, fmt in metrics.items():
        blocks = []
        for filter_id in filter_order:
            chosen = sorted(
                (r for r in rows if r.filter == filter_id), key=lambda r: r.sweep_value
            )
            blocks.append(f"# {filter_id}\n" + "\n".join(fmt(r) for r in chosen))
        path = f"{path_prefix}_{name}.dat"
        _write_text(path, "\n\n".join(blocks) + "\n")
        written.append(path)

    manifest_path = f"{path_prefix}_manifest.json"
    _write_text(manifest_path, json.dumps(dataclasses.asdict(cfg), indent=2) + "\n")
    written.append(manifest_path)
    return written


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc
