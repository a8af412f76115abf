"""UWB time-difference-of-arrival positioning.

A tag hears N fixed anchors h_1..h_N and measures the cyclic chain of range
differences

    d = [d_{2,1}, d_{3,2}, ..., d_{N,N-1}, d_{1,N}],   d_{j,i} = ||P-h_j|| - ||P-h_i||.

Stacking one linear equation per consecutive pair and treating the range to
the first anchor as a fourth unknown gives an N x 4 least-squares system whose
solution is the reconstructed position.  The chain structure means row k's
constant term carries the cumulative sum d_{2,1} + ... + d_{k,k-1}, since
||P - h_k|| = ||P - h_1|| + sum of the differences along the chain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .liegroup import Rotation, _as_vec3

__all__ = [
    "Anchor",
    "AnchorSet",
    "TdoaFrame",
    "ReconstructedPosition",
    "GeometryDegenerate",
    "build_system",
    "solve_position",
    "synthesize_tdoa",
    "load_anchors",
]

# sigma_4 / sigma_1 below this means the 4-unknown system is rank deficient.
RANK_TOL = 1e-8

# Allowed excess of |d_k| over the anchor-set diameter before a frame is
# rejected as physically impossible (noise slack, meters).
DIAMETER_SLACK = 1.0


class GeometryDegenerate(Exception):
    """TDOA geometry does not determine a position; carries the numerical rank."""

    def __init__(self, message: str, rank: int):
        super().__init__(message)
        self.rank = rank


@dataclass(frozen=True)
class Anchor:
    """A fixed UWB base station with a known inertial-frame position."""

    id: int
    pos: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "pos", _as_vec3(self.pos, "anchor pos"))


@dataclass(frozen=True)
class AnchorSet:
    """Ordered anchors; the TDOA chain follows this order cyclically.

    Requires N >= 4 anchors with unique ids that are not all coplanar
    (smallest singular value of the centered position matrix must exceed
    1e-6 of the largest), otherwise 3-D positioning is impossible.
    """

    anchors: tuple

    def __post_init__(self):
        anchors = tuple(self.anchors)
        object.__setattr__(self, "anchors", anchors)
        if len(anchors) < 4:
            raise ValueError(f"need at least 4 anchors for a 3-D solve, got {len(anchors)}")
        ids = [a.id for a in anchors]
        if len(set(ids)) != len(ids):
            raise ValueError(f"anchor ids are not unique: {ids}")
        pos = self.positions
        centered = pos - pos.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        if not sv[2] > 1e-6 * sv[0]:
            raise ValueError("anchors are coplanar (or collinear); geometry is degenerate")

    @property
    def n(self) -> int:
        return len(self.anchors)

    @property
    def positions(self) -> np.ndarray:
        """(N, 3) array of anchor positions, in chain order."""
        return np.array([a.pos for a in self.anchors])

    @property
    def diameter(self) -> float:
        pos = self.positions
        return float(np.max(np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)))


@dataclass(frozen=True)
class TdoaFrame:
    """One epoch of cyclic range differences (meters)."""

    timestamp: float
    d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "timestamp", float(self.timestamp))
        d = np.asarray(self.d, dtype=float).reshape(-1)
        if not np.all(np.isfinite(d)):
            raise ValueError("range differences must be finite")
        object.__setattr__(self, "d", d)


@dataclass(frozen=True)
class ReconstructedPosition:
    """Least-squares TDOA fix.

    Attributes
    ----------
    p : (3,) ndarray
        Reconstructed tag position (m).
    range_to_h1 : float
        The solved fourth unknown ||p - h_1||; NaN for the reduced solve.
        Not clamped: a negative value signals inconsistent measurements and
        sets ``negative_range``.
    residual : float
        RMS of A @ solution - B (m).
    range_consistency : float
        |range_to_h1 - ||p - h_1||| when anchors were available to the solver,
        else NaN.  Large values flag a poor fix.
    negative_range : bool
        True when the solved range came out negative.
    reduced : bool
        True when the 3-unknown fallback produced this fix.
    """

    p: np.ndarray
    range_to_h1: float
    residual: float
    range_consistency: float = float("nan")
    negative_range: bool = False
    reduced: bool = False


def build_system(anchors: AnchorSet, frame: TdoaFrame):
    """Assemble the N x 4 linear system (A, B) for one TDOA frame.

    Row k (0-based, cyclic successor j = k+1 mod N):

        A[k] = [(h_k - h_j)^T, -d_k]
        B[k] = (d_k^2 + ||h_k||^2 - ||h_j||^2 + 2 d_k * csum_k) / 2

    where csum_k is the cumulative sum of d_0..d_{k-1} (empty for k = 0).
    """
    pos = anchors.positions
    n = anchors.n
    d = frame.d
    if d.shape != (n,):
        raise ValueError(f"frame has {d.shape[0]} differences for {n} anchors")
    bound = anchors.diameter + DIAMETER_SLACK
    if np.any(np.abs(d) > bound):
        raise ValueError(
            f"range difference exceeds anchor-set diameter + slack ({bound:.3f} m)"
        )
    A = np.zeros((n, 4))
    B = np.zeros(n)
    norms = np.sum(pos * pos, axis=1)
    csum = 0.0
    for k in range(n):
        j = (k + 1) % n
        A[k, :3] = pos[k] - pos[j]
        A[k, 3] = -d[k]
        B[k] = 0.5 * (d[k] ** 2 + norms[k] - norms[j] + 2.0 * d[k] * csum)
        csum += d[k]
    return A, B


def solve_position(A, B, allow_reduced: bool = False) -> ReconstructedPosition:
    """Solve the TDOA system by orthogonal-factorization least squares.

    Raises :class:`GeometryDegenerate` when the 4-column system is rank
    deficient (sigma_4/sigma_1 < 1e-8), e.g. for all-zero differences.  With
    ``allow_reduced=True`` such frames fall back to the 3-unknown system that
    drops the range column (usable when the differences are near zero); the
    fallback cannot report ``range_to_h1``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    sol, _, rank, sv = np.linalg.lstsq(A, B, rcond=RANK_TOL)
    if rank < 4:
        if not allow_reduced:
            raise GeometryDegenerate(
                f"TDOA system rank {rank} < 4 (singular values {sv})", rank=int(rank)
            )
        sol3, _, rank3, _ = np.linalg.lstsq(A[:, :3], B, rcond=RANK_TOL)
        if rank3 < 3:
            raise GeometryDegenerate(
                f"reduced TDOA system rank {rank3} < 3", rank=int(rank3)
            )
        residual = float(np.sqrt(np.mean((A[:, :3] @ sol3 - B) ** 2)))
        return ReconstructedPosition(
            p=sol3,
            range_to_h1=float("nan"),
            residual=residual,
            reduced=True,
        )
    residual = float(np.sqrt(np.mean((A @ sol - B) ** 2)))
    return ReconstructedPosition(
        p=sol[:3],
        range_to_h1=float(sol[3]),
        residual=residual,
        negative_range=bool(sol[3] < 0.0),
    )


def solve_frame(
    anchors: AnchorSet, frame: TdoaFrame, allow_reduced: bool = False
) -> ReconstructedPosition:
    """build_system + solve_position, with the h_1 consistency diagnostic filled in."""
    A, B = build_system(anchors, frame)
    fix = solve_position(A, B, allow_reduced=allow_reduced)
    if not fix.reduced:
        consistency = abs(fix.range_to_h1 - float(np.linalg.norm(fix.p - anchors.anchors[0].pos)))
        fix = ReconstructedPosition(
            p=fix.p,
            range_to_h1=fix.range_to_h1,
            residual=fix.residual,
            range_consistency=consistency,
            negative_range=fix.negative_range,
        )
    return fix


def synthesize_tdoa(
    P,
    R: Rotation | None,
    anchors: AnchorSet,
    tag_offset=(0.0, 0.0, 0.0),
    noise_sd: float = 0.0,
    seed=0,
    timestamp: float = 0.0,
) -> TdoaFrame:
    """Forward model: cyclic range differences for a tag at P (plus offset).

    The effective tag position is ``P + R @ tag_offset`` (the body-mounted
    antenna lever arm) or just ``P`` when ``R`` is None.  Gaussian noise with
    std ``noise_sd`` is added per difference, drawn from
    ``numpy.random.default_rng(seed)``; the seed may be an int or a tuple.
    """
    P = _as_vec3(P, "P")
    offset = _as_vec3(tag_offset, "tag_offset")
    eff = P if R is None else P + R.m @ offset
    pos = anchors.positions
    ranges = np.linalg.norm(eff - pos, axis=1)
    n = anchors.n
    d = np.empty(n)
    for k in range(n):
        j = (k + 1) % n
        d[k] = ranges[j] - ranges[k]
    if noise_sd > 0.0:
        rng = np.random.default_rng(seed)
        d = d + rng.normal(0.0, noise_sd, n)
    return TdoaFrame(timestamp=timestamp, d=d)


def load_anchors(path) -> AnchorSet:
    """Read an AnchorSet from a JSON document {"anchors": [{"id", "pos"}, ...]}."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        entries = doc["anchors"]
        anchors = tuple(Anchor(id=e["id"], pos=e["pos"]) for e in entries)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed anchor document {path}: {exc}") from exc
    return AnchorSet(anchors)
