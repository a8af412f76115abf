"""IMU measurement types, vector-triad construction, and the attitude innovation.

The attitude correction is driven by pairing unit vectors measured in the
body frame (normalized accelerometer and magnetometer, plus their cross
product) with the corresponding known inertial directions (normalized
gravity and earth-field references).  The misalignment signal

    sum_i s_i (v_i x vhat_i),    vhat_i = Rhat^T r_i

equals, in matrix form, 2 vex(Pa(M_r Rtilde)) rotated into the body frame,
where M_r = sum_i s_i r_i r_i^T and Rtilde = R Rhat^T.  Both computations are
provided and cross-checked in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .liegroup import _as_vec3

__all__ = [
    "ImuSample",
    "ReferenceVectors",
    "TriadPair",
    "TriadDegenerate",
    "build_triads",
    "weighted_matrix",
    "body_weighted_matrix",
    "predicted_body_vectors",
    "attitude_innovation",
]

# ||v1 x v2|| at or below this is treated as collinear (the triad construction
# divides by it).
COLLINEARITY_TOL = 1e-6


class TriadDegenerate(Exception):
    """Measurements cannot form a non-collinear triad."""


@dataclass(frozen=True)
class ImuSample:
    """One IMU epoch: body-frame angular rate, specific force, magnetic field.

    ``mag`` may be None for datasets without a magnetometer; the replay layer
    synthesizes one from ground truth in that case.
    """

    timestamp: float
    gyro: np.ndarray
    accel: np.ndarray
    mag: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "timestamp", float(self.timestamp))
        object.__setattr__(self, "gyro", _as_vec3(self.gyro, "gyro"))
        object.__setattr__(self, "accel", _as_vec3(self.accel, "accel"))
        if self.mag is not None:
            object.__setattr__(self, "mag", _as_vec3(self.mag, "mag"))


@dataclass(frozen=True)
class ReferenceVectors:
    """Known inertial-frame directions: gravity and the local magnetic field."""

    gravity: np.ndarray = (0.0, 0.0, -9.8)
    mag_ref: np.ndarray = (-1.7, 0.0, 1.2)

    def __post_init__(self):
        g = _as_vec3(self.gravity, "gravity")
        m = _as_vec3(self.mag_ref, "mag_ref")
        if np.linalg.norm(g) <= 1e-12:
            raise ValueError("gravity reference must be nonzero")
        if np.linalg.norm(m) <= 1e-12:
            raise ValueError("magnetic reference must be nonzero")
        cross = np.cross(g / np.linalg.norm(g), m / np.linalg.norm(m))
        if np.linalg.norm(cross) <= COLLINEARITY_TOL:
            raise ValueError("magnetic reference is parallel to gravity")
        object.__setattr__(self, "gravity", g)
        object.__setattr__(self, "mag_ref", m)


@dataclass(frozen=True)
class TriadPair:
    """Three matched unit vectors in body (v) and inertial (r) frames.

    ``v`` and ``r`` are (3, 3) arrays whose rows are v_1..v_3 / r_1..r_3;
    ``s`` holds the per-pair confidence weights, constrained to sum to 3.
    """

    v: np.ndarray
    r: np.ndarray
    s: np.ndarray = (1.0, 1.0, 1.0)

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        r = np.asarray(self.r, dtype=float)
        s = np.asarray(self.s, dtype=float).reshape(-1)
        if v.shape != (3, 3) or r.shape != (3, 3):
            raise ValueError("v and r must be (3, 3) arrays of row vectors")
        if s.shape != (3,) or np.any(s < 0):
            raise ValueError("s must be 3 nonnegative weights")
        for name, rows in (("v", v), ("r", r)):
            norms = np.linalg.norm(rows, axis=1)
            if np.max(np.abs(norms - 1.0)) > 1e-12:
                raise ValueError(f"{name} rows must be unit vectors (norms {norms})")
        if abs(float(np.sum(s)) - 3.0) > 1e-9:
            raise ValueError(f"confidence weights must sum to 3, got {np.sum(s)}")
        for i in (0, 1):
            if abs(float(np.dot(v[2], v[i]))) > 1e-9:
                raise ValueError("v3 must be orthogonal to v1 and v2")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "s", s)


def build_triads(sample: ImuSample, ref: ReferenceVectors, s=None) -> TriadPair:
    """Form the measured/reference vector triads for one IMU sample.

    v1 is the normalized specific force (at low frequency the accelerometer
    points opposite gravity), paired with r1 = -g/||g||; v2 is the normalized
    magnetometer reading, paired with the normalized field reference; the
    third pair is the normalized cross product of the first two.

    Raises
    ------
    TriadDegenerate
        If the accelerometer or magnetometer norm is ~0, the magnetometer is
        missing, or v1 and v2 are collinear (cross-product norm <= 1e-6).
    """
    if sample.mag is None:
        raise TriadDegenerate("sample has no magnetometer reading")
    na = np.linalg.norm(sample.accel)
    nm = np.linalg.norm(sample.mag)
    if na <= 1e-9 or nm <= 1e-9:
        raise TriadDegenerate(f"accel/mag norm too small ({na:.2e}, {nm:.2e})")
    v1 = sample.accel / na
    v2 = sample.mag / nm
    cv = np.cross(v1, v2)
    ncv = np.linalg.norm(cv)
    if ncv <= COLLINEARITY_TOL:
        raise TriadDegenerate(f"accel and mag are collinear (cross norm {ncv:.2e})")
    g = ref.gravity
    r1 = -g / np.linalg.norm(g)
    r2 = ref.mag_ref / np.linalg.norm(ref.mag_ref)
    cr = np.cross(r1, r2)
    v3 = cv / ncv
    r3 = cr / np.linalg.norm(cr)
    weights = (1.0, 1.0, 1.0) if s is None else s
    return TriadPair(v=np.array([v1, v2, v3]), r=np.array([r1, r2, r3]), s=weights)


def weighted_matrix(triads: TriadPair) -> np.ndarray:
    """Inertial-frame confidence matrix M_r = sum_i s_i r_i r_i^T."""
    r = triads.r
    return (triads.s[:, None] * r).T @ r


def body_weighted_matrix(triads: TriadPair) -> np.ndarray:
    """Body-frame counterpart M_B = sum_i s_i v_i v_i^T (computed, unused by the observer)."""
    v = triads.v
    return (triads.s[:, None] * v).T @ v


def predicted_body_vectors(Rhat: np.ndarray, triads: TriadPair) -> np.ndarray:
    """Rows vhat_i = Rhat^T r_i: the reference directions seen from the estimate."""
    return triads.r @ Rhat


def attitude_innovation(triads: TriadPair, vhat: np.ndarray, Rhat: np.ndarray):
    """Misalignment sums (body_sum, inertial_sum).

    body_sum = sum_i s_i (v_i x vhat_i); inertial_sum = Rhat @ body_sum.
    The inertial sum equals 2 vex(Pa(M_r Rtilde)) for Rtilde = R Rhat^T.
    """
    crosses = np.cross(triads.v, vhat)
    body_sum = crosses.T @ triads.s
    return body_sum, Rhat @ body_sum
