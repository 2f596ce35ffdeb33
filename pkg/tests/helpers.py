"""Shared test utilities: random SPD matrices and dense reference formulas."""

import numpy as np


def random_spd(rng: np.random.Generator, dim: int, scale: float = 1.0) -> np.ndarray:
    """Well-conditioned random SPD matrix: A A^T + dim * I, scaled."""
    a = rng.standard_normal((dim, dim))
    return scale * (a @ a.T + dim * np.eye(dim))


def dense_theta(
    p_tilde: np.ndarray, r_tilde: np.ndarray, h: np.ndarray, y: np.ndarray
) -> np.ndarray:
    """Brute-force joint covariance: (Phi_tilde^{-1} + diag(0, Y))^{-1}."""
    n = p_tilde.shape[0]
    m = r_tilde.shape[0]
    p_inv = np.linalg.inv(p_tilde)
    r_inv = np.linalg.inv(r_tilde)
    phi_inv = np.block(
        [[p_inv + h.T @ r_inv @ h, -h.T @ r_inv], [-r_inv @ h, r_inv]]
    )
    penalty = np.zeros((n + m, n + m))
    penalty[n:, n:] = y
    return np.linalg.inv(phi_inv + penalty)
