"""Linear-Gaussian state-space model and the constant-velocity vehicle scenario.

The scenario tracks a vehicle in 2D with a constant-velocity model whose
true process and measurement noise covariances drift along a cosine
schedule, so the filter has to follow noise statistics it was never told.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distributions import SeededRng, sample_gaussian

__all__ = [
    "ModelSpec",
    "Trajectory",
    "build_cv_scenario",
    "simulate_truth",
    "scenario_defaults",
]


@dataclass(frozen=True)
class ModelSpec:
    """Time-indexed linear-Gaussian system x_k = F_k x_{k-1} + w_k, z_k = H_k x_k + v_k."""

    n: int
    m: int
    F: Callable[[int], np.ndarray]
    H: Callable[[int], np.ndarray]
    trueQ: Callable[[int], np.ndarray]
    trueR: Callable[[int], np.ndarray]


@dataclass(frozen=True)
class Trajectory:
    """Jointly simulated ground truth and measurements for one trial."""

    initial_state: np.ndarray
    states: np.ndarray  # (steps, n), row k-1 holds x_k
    measurements: np.ndarray  # (steps, m), row k-1 holds z_k

    def to_csv(self, path) -> None:
        """Debug export: columns k, x1..xn, z1..zm."""
        n = self.states.shape[1]
        m = self.measurements.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["k"] + [f"x{i+1}" for i in range(n)] + [f"z{i+1}" for i in range(m)]
            )
            for k, (x, z) in enumerate(zip(self.states, self.measurements), start=1):
                writer.writerow([k] + [repr(v) for v in x] + [repr(v) for v in z])


def build_cv_scenario(sample_time: float, cosine_period: int) -> ModelSpec:
    """Constant-velocity tracking scenario with cosine-scheduled true noise.

    State is [px, py, vx, vy]; position is measured directly. The true
    process noise is (6 + 0.5 cos(pi k / T_f)) times the standard
    continuous-white-noise-acceleration block, and the true measurement
    noise is (100 + 50 cos(pi k / T_f)) times a 0.5-correlated 2x2 matrix.
    """
    if sample_time <= 0.0:
        raise ValueError("sample_time must be positive")
    t = float(sample_time)
    eye2 = np.eye(2)
    f_mat = np.block([[eye2, t * eye2], [np.zeros((2, 2)), eye2]])
    h_mat = np.hstack([eye2, np.zeros((2, 2))])
    q_base = np.block(
        [[(t**3 / 3.0) * eye2, (t**2 / 2.0) * eye2], [(t**2 / 2.0) * eye2, t * eye2]]
    )
    r_base = np.array([[1.0, 0.5], [0.5, 1.0]])

    def true_q(k: int) -> np.ndarray:
        return (6.0 + 0.5 * math.cos(math.pi * k / cosine_period)) * q_base

    def true_r(k: int) -> np.ndarray:
        return (100.0 + 50.0 * math.cos(math.pi * k / cosine_period)) * r_base

    return ModelSpec(
        n=4,
        m=2,
        F=lambda k: f_mat,
        H=lambda k: h_mat,
        trueQ=true_q,
        trueR=true_r,
    )


def simulate_truth(
    model: ModelSpec, x0: np.ndarray, steps: int, rng: SeededRng
) -> Trajectory:
    """Simulate ground truth and measurements for steps k = 1..steps.

    The initial state x0 is deterministic; noise at step k uses the true
    covariances evaluated at k. Per step the process noise is drawn
    before the measurement noise, so the stream layout is reproducible.
    """
    x = np.asarray(x0, dtype=float)
    states = np.empty((steps, model.n))
    measurements = np.empty((steps, model.m))
    for k in range(1, steps + 1):
        x = model.F(k) @ x + sample_gaussian(rng, np.zeros(model.n), model.trueQ(k))
        z = model.H(k) @ x + sample_gaussian(rng, np.zeros(model.m), model.trueR(k))
        states[k - 1] = x
        measurements[k - 1] = z
    return Trajectory(
        initial_state=np.asarray(x0, dtype=float),
        states=states,
        measurements=measurements,
    )


def scenario_defaults() -> tuple[np.ndarray, np.ndarray, int]:
    """Default initial state, initial estimate covariance, and step count."""
    x0 = np.array([100.0, 100.0, 10.0, 10.0])
    p0 = 100.0 * np.eye(4)
    return x0, p0, 150
