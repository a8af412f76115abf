"""Shared numerical oracles for the test suite.

These deliberately avoid the closed-form code paths under test: the matrix
exponential is summed as a plain scaled Taylor series, and random rotations
are built from axis-angle sampling.
"""

import numpy as np


def expm_series(A, terms: int = 30) -> np.ndarray:
    """Matrix exponential via scaling-and-squaring over a Taylor series.

    Scale A down by a power of two until its norm is below 0.5, sum ``terms``
    series terms, then square back up.  With 30 terms the truncation error is
    far below double-precision round-off for the matrices used in tests.
    """
    A = np.asarray(A, dtype=float)
    norm = np.linalg.norm(A, ord=np.inf)
    squarings = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0 else 0
    B = A / (2.0**squarings)
    result = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms + 1):
        term = term @ B / k
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result


def random_rotation(rng) -> np.ndarray:
    """Random rotation matrix: uniform axis, angle uniform on [0, pi)."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, np.pi)
    K = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def random_psd(rng, dim: int = 3, eig_low: float = 0.0, eig_high: float = 2.0) -> np.ndarray:
    """Random symmetric positive-semidefinite matrix with bounded eigenvalues."""
    Q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    eigs = rng.uniform(eig_low, eig_high, dim)
    return Q @ np.diag(eigs) @ Q.T
