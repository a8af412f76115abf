"""Dataset ingestion, ground-truth benchmarks, and observer replay.

A recorded trial arrives as three CSV streams — IMU, UWB, and ground truth —
plus an anchor JSON file.  This module loads and merges the streams, derives
a benchmark velocity from the ground-truth positions (local least-squares
polynomial differentiation), runs the observer sample-by-sample, and reports
the same error metrics and summary statistics as the simulator, so synthetic
and recorded runs are directly comparable.

File formats (canonical column names; remap via ``column_map``):

* ``imu.csv``: t, gx, gy, gz, ax, ay, az [, mx, my, mz]
* ``uwb.csv``: t, then N difference (or raw range) columns in anchor order
* ``gt.csv``:  t, qw, qx, qy, qz, px, py, pz
* ``anchors.json``: {"anchors": [{"id": ..., "pos": [x, y, z]}, ...]}

When the magnetometer columns are absent, measurements are synthesized from
the interpolated ground-truth attitude (deterministically, from the seed).
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation as _SpRotation
from scipy.spatial.transform import Slerp

from .liegroup import Rotation
from .observer import Gains, ObserverState, step
from .sensors import ImuSample, ReferenceVectors
from .sim import SimResult, settling_time
from .tdoa import GeometryDegenerate, TdoaFrame, solve_frame

__all__ = [
    "ConfigError",
    "DataError",
    "DatasetFrame",
    "GroundTruthRecord",
    "LoadReport",
    "LoadedDataset",
    "ReplayResult",
    "load_dataset",
    "quat_to_rotation",
    "rotation_to_quat",
    "derive_velocity",
    "run_replay",
    "export_dataset",
    "write_metrics_csv",
    "write_summary_json",
    "atomic_writer",
    "DEFAULT_COLUMN_MAP",
]

_QUAT_NORM_TOL = 1e-6
_STREAM_MAG = 2  # rng stream tag for synthesized magnetometer noise
_MAX_STEP_DT = 0.1


class ConfigError(Exception):
    """The run is misconfigured (missing files/columns, mismatched anchors)."""


class DataError(Exception):
    """The dataset content is unusable (empty stream, degenerate records)."""


@dataclass(frozen=True)
class GroundTruthRecord:
    """One ground-truth pose sample: unit quaternion (w, x, y, z) and position."""

    timestamp: float
    quat: np.ndarray
    pos: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.quat, dtype=float).reshape(-1)
        p = np.asarray(self.pos, dtype=float).reshape(-1)
        if q.shape != (4,):
            raise ValueError(f"quat must have 4 components, got shape {q.shape}")
        if p.shape != (3,):
            raise ValueError(f"pos must have 3 components, got shape {p.shape}")
        if not np.all(np.isfinite(q)) or not np.all(np.isfinite(p)):
            raise ValueError("ground-truth record contains non-finite values")
        if abs(np.linalg.norm(q) - 1.0) > _QUAT_NORM_TOL:
            raise ValueError(f"quaternion norm {np.linalg.norm(q):.8f} is not 1 +/- {_QUAT_NORM_TOL}")
        object.__setattr__(self, "quat", q)
        object.__setattr__(self, "pos", p)


@dataclass(frozen=True)
class DatasetFrame:
    """One merged-stream event: an IMU, TDOA, or ground-truth record."""

    timestamp: float
    kind: str
    payload: object

    _KINDS = ("ground_truth", "imu", "tdoa")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"kind must be one of {self._KINDS}, got {self.kind!r}")


@dataclass
class LoadReport:
    """Ingestion accounting: rows read/skipped and reorders per stream."""

    rows_read: dict = field(default_factory=dict)
    rows_skipped: dict = field(default_factory=dict)
    reordered: dict = field(default_factory=dict)
    skipped_rows: list = field(default_factory=list)

    def describe(self) -> str:
        lines = []
        for stream in sorted(self.rows_read):
            lines.append(
                f"{stream}: {self.rows_read[stream]} rows"
                f" ({self.rows_skipped.get(stream, 0)} skipped,"
                f" {self.reordered.get(stream, 0)} out of order)"
            )
        lines.extend(self.skipped_rows[:20])
        if len(self.skipped_rows) > 20:
            lines.append(f"... and {len(self.skipped_rows) - 20} more skipped rows")
        return "\n".join(lines)


@dataclass
class LoadedDataset:
    """Merged, time-sorted dataset frames plus the ingestion report."""

    frames: list
    report: LoadReport
    has_mag: bool
    n_uwb_values: int


DEFAULT_COLUMN_MAP = {
    "imu": {c: c for c in ("t", "gx", "gy", "gz", "ax", "ay", "az", "mx", "my", "mz")},
    "uwb": {"t": "t", "values": None, "mode": "diff"},
    "gt": {c: c for c in ("t", "qw", "qx", "qy", "qz", "px", "py", "pz")},
}


def _merge_column_map(column_map: dict | None) -> dict:
    merged = {k: dict(v) for k, v in DEFAULT_COLUMN_MAP.items()}
    for stream, mapping in (column_map or {}).items():
        if stream not in merged:
            raise ConfigError(f"column_map refers to unknown stream {stream!r}")
        for key, val in mapping.items():
            if key not in merged[stream]:
                raise ConfigError(f"column_map[{stream!r}] has unknown key {key!r}")
            merged[stream][key] = val
    if merged["uwb"]["mode"] not in ("diff", "range"):
        raise ConfigError(f"uwb mode must be 'diff' or 'range', got {merged['uwb']['mode']!r}")
    return merged


def _read_rows(path) -> tuple[list, list]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = list(reader)
    return header, rows


def _column_indices(header, names, path, *, required=True):
    indices = []
    for name in names:
        if name not in header:
            if required:
                raise ConfigError(f"{Path(path).name}: missing required column {name!r}")
            return None
        indices.append(header.index(name))
    return indices


def _parse_stream(path, header, rows, indices, builder, stream, report):
    """Parse rows into records, skipping and logging malformed ones."""
    records = []
    skipped = 0
    for row_no, row in enumerate(rows, start=2):  # header is line 1
        try:
            values = [float(row[i]) for i in indices]
            if not all(math.isfinite(v) for v in values):
                raise ValueError("non-finite value")
            records.append(builder(values))
        except (ValueError, IndexError) as exc:
            skipped += 1
            report.skipped_rows.append(f"{Path(path).name} row {row_no}: {exc}")
    report.rows_read[stream] = len(rows)
    report.rows_skipped[stream] = skipped
    times = np.array([r.timestamp for r in records])
    report.reordered[stream] = int(np.sum(np.diff(times) < 0)) if len(times) > 1 else 0
    order = np.argsort(times, kind="stable")
    return [records[i] for i in order]


def load_dataset(paths: dict, column_map: dict | None = None) -> LoadedDataset:
    """Load imu/uwb/gt CSV files into one merged, time-sorted frame stream.

    ``paths`` maps stream names ("imu", "uwb", "gt") to file paths; "gt" is
    optional at load time (replay will refuse to run without it).  Malformed
    rows are skipped and counted in the report rather than aborting the load.
    """
    cmap = _merge_column_map(column_map)
    if "imu" not in paths or "uwb" not in paths:
        raise ConfigError("paths must include 'imu' and 'uwb'")
    report = LoadReport()
    frames = []
    has_mag = False
    n_uwb = 0

    imu_map = cmap["imu"]
    header, rows = _read_rows(paths["imu"])
    base = [imu_map[c] for c in ("t", "gx", "gy", "gz", "ax", "ay", "az")]
    idx = _column_indices(header, base, paths["imu"])
    mag_names = [imu_map[c] for c in ("mx", "my", "mz")]
    mag_idx = _column_indices(header, mag_names, paths["imu"], required=False)
    n_mag_present = sum(name in header for name in mag_names)
    if 0 < n_mag_present < 3:
        raise ConfigError(f"{Path(paths['imu']).name}: magnetometer columns incomplete")
    has_mag = mag_idx is not None
    all_idx = idx + (mag_idx or [])

    def build_imu(v):
        mag = np.array(v[7:10]) if len(v) == 10 else None
        return ImuSample(timestamp=v[0], gyro=np.array(v[1:4]), accel=np.array(v[4:7]), mag=mag)

    imu_records = _parse_stream(paths["imu"], header, rows, all_idx, build_imu, "imu", report)
    frames.extend(DatasetFrame(r.timestamp, "imu", r) for r in imu_records)

    uwb_map = cmap["uwb"]
    header, rows = _read_rows(paths["uwb"])
    t_idx = _column_indices(header, [uwb_map["t"]], paths["uwb"])
    value_names = uwb_map["values"]
    if value_names is None:
        value_names = [h for h in header if h != uwb_map["t"]]
    if not value_names:
        raise ConfigError(f"{Path(paths['uwb']).name}: no UWB value columns")
    val_idx = _column_indices(header, value_names, paths["uwb"])
    n_uwb = len(value_names)
    as_ranges = uwb_map["mode"] == "range"

    def build_uwb(v):
        d = np.array(v[1:])
        if as_ranges:
            d = np.roll(d, -1) - d  # cyclic pairwise differences r[k+1] - r[k]
        return TdoaFrame(timestamp=v[0], d=d)

    uwb_records = _parse_stream(paths["uwb"], header, rows, t_idx + val_idx, build_uwb, "uwb", report)
    frames.extend(DatasetFrame(r.timestamp, "tdoa", r) for r in uwb_records)

    if "gt" in paths:
        gt_map = cmap["gt"]
        header, rows = _read_rows(paths["gt"])
        names = [gt_map[c] for c in ("t", "qw", "qx", "qy", "qz", "px", "py", "pz")]
        idx = _column_indices(header, names, paths["gt"])

        def build_gt(v):
            return GroundTruthRecord(timestamp=v[0], quat=np.array(v[1:5]), pos=np.array(v[5:8]))

        gt_records = _parse_stream(paths["gt"], header, rows, idx, build_gt, "gt", report)
        frames.extend(DatasetFrame(r.timestamp, "ground_truth", r) for r in gt_records)

    if not frames:
        raise DataError("dataset contains no usable rows")
    rank = {"ground_truth": 0, "imu": 1, "tdoa": 2}
    frames.sort(key=lambda f: (f.timestamp, rank[f.kind]))
    return LoadedDataset(frames=frames, report=report, has_mag=has_mag, n_uwb_values=n_uwb)


def quat_to_rotation(q) -> Rotation:
    """Convert a Hamilton (w, x, y, z) quaternion to a rotation matrix."""
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape != (4,):
        raise ValueError(f"quaternion must have 4 components, got shape {q.shape}")
    norm = np.linalg.norm(q)
    if not np.isfinite(norm) or norm < 1e-8:
        raise DataError(f"quaternion norm {norm} too small to normalize")
    w, x, y, z = q / norm
    m = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
    return Rotation(m)


def rotation_to_quat(R) -> np.ndarray:
    """Convert a rotation matrix to a unit Hamilton (w, x, y, z) quaternion, w >= 0."""
    m = R.m if isinstance(R, Rotation) else np.asarray(R, dtype=float)
    # Shepperd's method: pick the largest of (trace, m00, m11, m22) for stability.
    tr = np.trace(m)
    if tr >= max(m[0, 0], m[1, 1], m[2, 2]):
        s = math.sqrt(max(tr + 1.0, 0.0)) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= max(m[1, 1], m[2, 2]):
        s = math.sqrt(max(1.0 + m[0, 0] - m[1, 1] - m[2, 2], 0.0)) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(max(1.0 + m[1, 1] - m[0, 0] - m[2, 2], 0.0)) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(max(1.0 + m[2, 2] - m[0, 0] - m[1, 1], 0.0)) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    q /= np.linalg.norm(q)
    return q if q[0] >= 0.0 else -q


def derive_velocity(gt_records, window: int = 11, poly_order: int = 2) -> np.ndarray:
    """Benchmark velocity from ground-truth positions.

    Each point gets the derivative of a local least-squares polynomial fit
    (the Gaussian-noise maximum-likelihood smoother): Savitzky-Golay when the
    timestamps are uniform, an explicit windowed polyfit otherwise.  Exact on
    position series that are polynomials of degree <= poly_order.
    """
    if window % 2 == 0 or window < 3:
        raise ValueError(f"window must be an odd integer >= 3, got {window}")
    if window < poly_order + 2:
        raise ValueError(f"window {window} too small for poly_order {poly_order}")
    t = np.array([r.timestamp for r in gt_records], dtype=float)
    pos = np.array([r.pos for r in gt_records], dtype=float)
    n = len(t)
    if n < window:
        raise DataError(f"need at least {window} ground-truth samples, got {n}")
    dt = np.diff(t)
    if np.any(dt <= 0.0):
        raise DataError("ground-truth timestamps must be strictly increasing")
    if np.allclose(dt, dt[0], rtol=1e-6, atol=1e-12):
        from scipy.signal import savgol_filter

        return savgol_filter(pos, window, poly_order, deriv=1, delta=float(dt[0]), axis=0, mode="interp")
    half = window // 2
    vel = np.empty_like(pos)
    for i in range(n):
        lo = min(max(i - half, 0), n - window)
        sel = slice(lo, lo + window)
        ts = t[sel] - t[i]
        coeffs = np.polyfit(ts, pos[sel], poly_order)
        vel[i] = coeffs[-2]  # linear coefficient = derivative at t[i]
    return vel


@dataclass
class ReplayResult:
    """Per-timestamp error metrics and summary for one replayed trial.

    Arrays align with the IMU timeline (row 0 = initial state); rows outside
    the ground-truth time range, or steps without a TDOA fix in the raw
    columns, hold NaN.
    """

    t: np.ndarray
    att_err: np.ndarray
    pos_err: np.ndarray
    vel_err: np.ndarray
    truth_pos: np.ndarray
    truth_vel: np.ndarray
    est_pos: np.ndarray
    est_vel: np.ndarray
    raw_pos: np.ndarray
    raw_err: np.ndarray
    final_state: ObserverState
    summary: dict = field(default_factory=dict)


class _TruthInterpolator:
    """Attitude/position/velocity benchmark interpolated at query times.

    Attitude uses spherical linear interpolation, position and the derived
    velocity are linear.  Queries outside the ground-truth time range return
    None — the benchmark never extrapolates.
    """

    def __init__(self, gt_records, window: int, poly_order: int):
        if len(gt_records) < 2:
            raise DataError("need at least 2 ground-truth records")
        self.t = np.array([r.timestamp for r in gt_records])
        self.pos = np.array([r.pos for r in gt_records])
        self.vel = derive_velocity(gt_records, window, poly_order)
        quats_wxyz = np.array([r.quat for r in gt_records])
        self._slerp = Slerp(self.t, _SpRotation.from_quat(quats_wxyz[:, [1, 2, 3, 0]]))

    def in_range(self, time: float) -> bool:
        return self.t[0] <= time <= self.t[-1]

    def rot(self, time: float) -> np.ndarray:
        return self._slerp([time]).as_matrix()[0]

    def pos_at(self, time: float) -> np.ndarray:
        return np.array([np.interp(time, self.t, self.pos[:, i]) for i in range(3)])

    def vel_at(self, time: float) -> np.ndarray:
        return np.array([np.interp(time, self.t, self.vel[:, i]) for i in range(3)])


def run_replay(
    dataset: LoadedDataset,
    anchors,
    gains: Gains,
    init: ObserverState,
    tag_offset=(0.0, 0.0, 0.0),
    *,
    ref: ReferenceVectors | None = None,
    seed: int = 0,
    mag_noise_sd: float = 0.2,
    velocity_window: int = 11,
    velocity_poly_order: int = 2,
    settle_threshold: float = 0.5,
    settle_dwell: float = 5.0,
) -> ReplayResult:
    """Replay the observer over a loaded dataset against its ground truth.

    TDOA frames are consumed by the IMU step whose timestamp is closest at or
    before them; when several frames land in one step the last wins.  When the
    dataset has no magnetometer, one is synthesized from the interpolated
    ground-truth attitude with noise `mag_noise_sd` (draws keyed by the seed
    and sample index, so the replay is deterministic).
    """
    ref = ReferenceVectors() if ref is None else ref
    tag_offset = np.asarray(tag_offset, dtype=float)
    imu = [f.payload for f in dataset.frames if f.kind == "imu"]
    tdoa = [f.payload for f in dataset.frames if f.kind == "tdoa"]
    gt = [f.payload for f in dataset.frames if f.kind == "ground_truth"]
    if len(imu) < 2:
        raise DataError(f"need at least 2 IMU samples to step, got {len(imu)}")
    if not gt:
        raise DataError("dataset has no ground-truth stream")
    if tdoa and tdoa[0].d.shape[0] != anchors.n:
        raise ConfigError(
            f"dataset provides {tdoa[0].d.shape[0]} TDOA values but anchor set has {anchors.n}"
        )
    truth = _TruthInterpolator(gt, velocity_window, velocity_poly_order)

    t_imu = np.array([s.timestamp for s in imu])
    n_steps = len(imu) - 1
    # Map each TDOA frame onto the step that starts at or just before it.
    frame_for_step: dict = {}
    dropped_frames = 0
    for fr in tdoa:
        k = int(np.searchsorted(t_imu, fr.timestamp, side="right")) - 1
        if 0 <= k < n_steps:
            if k in frame_for_step:
                dropped_frames += 1
            frame_for_step[k] = fr
        else:
            dropped_frames += 1

    m = n_steps + 1
    att = np.full(m, np.nan)
    pos = np.full(m, np.nan)
    vel = np.full(m, np.nan)
    truth_pos = np.full((m, 3), np.nan)
    truth_vel = np.full((m, 3), np.nan)
    est_pos = np.empty((m, 3))
    est_vel = np.empty((m, 3))
    raw_pos = np.full((m, 3), np.nan)
    raw_err = np.full(m, np.nan)

    state = init

    def record(k: int):
        est_pos[k] = state.nav.pos
        est_vel[k] = state.nav.vel
        tk = float(t_imu[k])
        if truth.in_range(tk):
            R_true = truth.rot(tk)
            p_true = truth.pos_at(tk)
            v_true = truth.vel_at(tk)
            truth_pos[k] = p_true
            truth_vel[k] = v_true
            att[k] = 0.25 * (3.0 - np.trace(R_true @ state.nav.rot.m.T))
            pos[k] = np.linalg.norm(p_true - state.nav.pos)
            vel[k] = np.linalg.norm(v_true - state.nav.vel)

    record(0)
    skipped_steps = 0
    for k in range(n_steps):
        dt = float(t_imu[k + 1] - t_imu[k])
        if not 0.0 < dt <= _MAX_STEP_DT:
            skipped_steps += 1
            record(k + 1)
            continue
        sample = imu[k]
        if sample.mag is None and truth.in_range(sample.timestamp):
            mag = truth.rot(sample.timestamp).T @ ref.mag_ref
            if mag_noise_sd > 0.0:
                rng = np.random.default_rng((int(seed), _STREAM_MAG, k))
                mag = mag + rng.normal(0.0, mag_noise_sd, 3)
            sample = ImuSample(sample.timestamp, sample.gyro, sample.accel, mag)
        frame = frame_for_step.get(k)
        if frame is not None:
            try:
                fix = solve_frame(anchors, frame)
                raw_pos[k] = fix.p
                if np.all(np.isfinite(truth_pos[k])):
                    raw_err[k] = float(np.linalg.norm(fix.p - truth_pos[k]))
            except (GeometryDegenerate, ValueError):
                pass
        state = step(state, sample, frame, anchors, gains, dt, ref=ref)
        record(k + 1)

    duration = float(t_imu[-1] - t_imu[0])
    ss_mask = (t_imu - t_imu[0]) >= (2.0 / 3.0) * duration
    valid = np.isfinite(pos)
    ss_pos = pos[ss_mask & valid]
    ss_vel = vel[ss_mask & np.isfinite(vel)]
    raw_window = raw_err[ss_mask]
    raw_window = raw_window[np.isfinite(raw_window)]
    finite_pos = pos[valid]
    summary = {
        "duration": duration,
        "steps": n_steps,
        "skipped_steps": skipped_steps,
        "imu_samples": len(imu),
        "tdoa_frames": len(tdoa),
        "dropped_tdoa_frames": dropped_frames,
        "gt_records": len(gt),
        "initial_pos_err": float(finite_pos[0]) if finite_pos.size else float("nan"),
        "final_att_err": float(att[valid][-1]) if valid.any() else float("nan"),
        "final_pos_err": float(finite_pos[-1]) if finite_pos.size else float("nan"),
        "final_vel_err": float(vel[np.isfinite(vel)][-1]) if np.isfinite(vel).any() else float("nan"),
        "settling_time": settling_time(t_imu[valid], finite_pos, settle_threshold, settle_dwell)
        if finite_pos.size
        else float("nan"),
        "settle_threshold": settle_threshold,
        "ss_pos_rms": float(np.sqrt(np.mean(ss_pos**2))) if ss_pos.size else float("nan"),
        "ss_vel_rms": float(np.sqrt(np.mean(ss_vel**2))) if ss_vel.size else float("nan"),
        "raw_pos_rms": float(np.sqrt(np.mean(raw_window**2))) if raw_window.size else float("nan"),
        "tdoa_failures": state.tdoa_failures,
        "triad_failures": state.triad_failures,
    }
    return ReplayResult(
        t=t_imu,
        att_err=att,
        pos_err=pos,
        vel_err=vel,
        truth_pos=truth_pos,
        truth_vel=truth_vel,
        est_pos=est_pos,
        est_vel=est_vel,
        raw_pos=raw_pos,
        raw_err=raw_err,
        final_state=state,
        summary=summary,
    )


# --- artifact writing -------------------------------------------------------


@contextmanager
def atomic_writer(path):
    """Write a text file atomically: temp file in the same directory + rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _fmt(x) -> str:
    """Shortest exact decimal for a float (round-trips bit-for-bit); NaN -> ''."""
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def write_metrics_csv(path, t, att_err, pos_err, vel_err, truth_pos, est_pos, raw_pos):
    """Plot-ready per-timestamp error and track columns."""
    header = [
        "t",
        "att_err",
        "pos_err",
        "vel_err",
        "px_true",
        "py_true",
        "pz_true",
        "px_est",
        "py_est",
        "pz_est",
        "px_raw",
        "py_raw",
        "pz_raw",
    ]
    with atomic_writer(path) as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(len(t)):
            row = [t[k], att_err[k], pos_err[k], vel_err[k]]
            row.extend(truth_pos[k])
            row.extend(est_pos[k])
            row.extend(raw_pos[k])
            w.writerow([_fmt(v) for v in row])


def write_summary_json(path, summary: dict):
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        return v

    with atomic_writer(path) as fh:
        json.dump({k: clean(v) for k, v in summary.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def export_dataset(result: SimResult, outdir) -> dict:
    """Write a sim run out as a replayable dataset.

    Emits imu.csv / uwb.csv / gt.csv / anchors.json in the canonical layout.
    All floats are written in shortest round-trip form, so loading the files
    back reproduces the in-memory run bit-for-bit.
    """
    outdir = Path(outdir)
    paths = {
        "imu": outdir / "imu.csv",
        "uwb": outdir / "uwb.csv",
        "gt": outdir / "gt.csv",
        "anchors": outdir / "anchors.json",
    }
    with atomic_writer(paths["imu"]) as fh:
        w = csv.writer(fh)
        w.writerow(["t", "gx", "gy", "gz", "ax", "ay", "az", "mx", "my", "mz"])
        for s in result.imu:
            row = [s.timestamp, *s.gyro, *s.accel]
            row.extend(s.mag if s.mag is not None else [np.nan] * 3)
            w.writerow([_fmt(v) for v in row])
    n = result.scenario.anchors.n
    with atomic_writer(paths["uwb"]) as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"d{i + 1}" for i in range(n)])
        for k in sorted(result.frames):
            fr = result.frames[k]
            w.writerow([_fmt(v) for v in (fr.timestamp, *fr.d)])
    with atomic_writer(paths["gt"]) as fh:
        w = csv.writer(fh)
        w.writerow(["t", "qw", "qx", "qy", "qz", "px", "py", "pz"])
        for k in range(len(result.t)):
            q = rotation_to_quat(result.truth_rot[k])
            w.writerow([_fmt(v) for v in (result.t[k], *q, *result.truth_pos[k])])
    anchors = result.scenario.anchors
    payload = {"anchors": [{"id": a.id, "pos": [float(x) for x in a.pos]} for a in anchors.anchors]}
    with atomic_writer(paths["anchors"]) as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return {k: str(v) for k, v in paths.items()}
