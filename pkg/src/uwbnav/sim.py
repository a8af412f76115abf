"""Ground-truth propagation and synthetic measurement generation.

The true kinematics  Rdot = R [Omega]_x,  Pdot = V,  Vdot = R a + g  are the
group equation Xdot = X U - G X with U = u([Omega]_x, 0, a, 1) and the
constant G = u(0, 0, -g, 1).  For inputs held over a step this integrates
exactly as

    X(t + dt) = exp(-G dt) @ X(t) @ exp(U dt),

so the simulator samples Omega and a at the interval midpoint and applies the
sandwich step: exact for constant inputs, second-order accurate otherwise,
and SO(3) is preserved to machine precision.

Everything is deterministic: measurement noise is drawn from per-call
generators seeded by (scenario seed, stream tag, sample time/index), so a
run, and any CSV export of it, replays bit-identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .liegroup import NavState, Rotation, TangentElement, se23_exp, so3_exp
from .observer import Gains, ObserverState, error_metrics, step
from .sensors import ImuSample, ReferenceVectors
from .tdoa import Anchor, AnchorSet, GeometryDegenerate, solve_frame, synthesize_tdoa

__all__ = [
    "SensorNoise",
    "TruthModel",
    "Scenario",
    "SimResult",
    "default_anchors",
    "propagate_truth",
    "synthesize_imu",
    "preset_scenario",
    "run_scenario",
    "settling_time",
    "PRESET_NAMES",
]

# Stream tags mixed into per-call RNG seeds so the IMU, TDOA, and replay
# magnetometer streams never collide.
_STREAM_IMU = 0
_STREAM_TDOA = 1


@dataclass(frozen=True)
class SensorNoise:
    """Per-sensor Gaussian noise standard deviations."""

    gyro_sd: float = 0.0
    accel_sd: float = 0.0
    mag_sd: float = 0.2
    tdoa_sd: float = 0.0

    def __post_init__(self):
        for name in ("gyro_sd", "accel_sd", "mag_sd", "tdoa_sd"):
            val = float(getattr(self, name))
            if not (np.isfinite(val) and val >= 0.0):
                raise ValueError(f"{name} must be >= 0, got {val}")
            object.__setattr__(self, name, val)


def _zero3(_t: float) -> np.ndarray:
    return np.zeros(3)


@dataclass(frozen=True)
class TruthModel:
    """Exact vehicle state plus the measurement imperfections.

    ``omega_fn(t)`` and ``accel_fn(t)`` give the body-frame angular rate and
    specific force driving the kinematics; ``b_omega``/``b_a`` are the
    constant sensor biases added to the synthesized measurements.
    """

    nav: NavState
    omega_fn: object = _zero3
    accel_fn: object = _zero3
    b_omega: np.ndarray = (0.0, 0.0, 0.0)
    b_a: np.ndarray = (0.0, 0.0, 0.0)
    noise: SensorNoise = SensorNoise()
    seed: int = 0
    time: float = 0.0
    gravity: np.ndarray = (0.0, 0.0, -9.8)

    def __post_init__(self):
        object.__setattr__(self, "b_omega", np.asarray(self.b_omega, dtype=float))
        object.__setattr__(self, "b_a", np.asarray(self.b_a, dtype=float))
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float))


def propagate_truth(t: TruthModel, dt: float) -> TruthModel:
    """One exact Lie-group step of the true kinematics over [time, time+dt]."""
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt must be in (0, 0.1] s, got {dt}")
    mid = t.time + 0.5 * dt
    U = TangentElement(t.omega_fn(mid), np.zeros(3), t.accel_fn(mid), 1.0)
    G = TangentElement(np.zeros(3), np.zeros(3), -t.gravity, 1.0)
    X = np.eye(5)
    X[:3, :3] = t.nav.rot.m
    X[:3, 3] = t.nav.pos
    X[:3, 4] = t.nav.vel
    X = se23_exp(G, -dt) @ X @ se23_exp(U, dt)
    nav = NavState(Rotation(X[:3, :3]), X[:3, 3], X[:3, 4])
    return replace(t, nav=nav, time=t.time + dt)


def _call_rng(seed: int, stream: int, key: int) -> np.random.Generator:
    return np.random.default_rng((int(seed), int(stream), int(key)))


def synthesize_imu(t: TruthModel, time: float, ref: ReferenceVectors | None = None) -> ImuSample:
    """Biased, noisy IMU measurement of the truth at the given time.

    gyro  = Omega + b_omega + n,  accel = specific force + b_a + n,
    mag   = R^T m_r + n.  The noise draw depends only on (seed, time), so a
    repeated call is bit-identical.
    """
    ref = ReferenceVectors() if ref is None else ref
    R = t.nav.rot.m
    gyro = t.omega_fn(time) + t.b_omega
    accel = t.accel_fn(time) + t.b_a
    mag = R.T @ ref.mag_ref
    noise = t.noise
    if noise.gyro_sd > 0.0 or noise.accel_sd > 0.0 or noise.mag_sd > 0.0:
        rng = _call_rng(t.seed, _STREAM_IMU, round(time * 1e9))
        if noise.gyro_sd > 0.0:
            gyro = gyro + rng.normal(0.0, noise.gyro_sd, 3)
        if noise.accel_sd > 0.0:
            accel = accel + rng.normal(0.0, noise.accel_sd, 3)
        if noise.mag_sd > 0.0:
            mag = mag + rng.normal(0.0, noise.mag_sd, 3)
    return ImuSample(timestamp=time, gyro=gyro, accel=accel, mag=mag)


def default_anchors() -> AnchorSet:
    """Eight anchors on the vertices of a 8 m x 8 m x 4 m box."""
    verts = [
        (x, y, z)
        for x in (-4.0, 4.0)
        for y in (-4.0, 4.0)
        for z in (0.0, 4.0)
    ]
    return AnchorSet(tuple(Anchor(id=i + 1, pos=np.array(v)) for i, v in enumerate(verts)))


@dataclass
class Scenario:
    """A closed-loop experiment: truth model, sensors, observer initialization."""

    name: str
    anchors: AnchorSet
    duration: float
    truth: TruthModel
    estimate: ObserverState
    imu_rate: float = 100.0
    tdoa_rate: float = 10.0
    tag_offset: np.ndarray = (0.0, 0.0, 0.0)
    ref: ReferenceVectors = ReferenceVectors()

    def __post_init__(self):
        if not self.duration > 0.0:
            raise ValueError(f"duration must be > 0, got {self.duration}")
        if not (self.imu_rate > 0.0 and self.tdoa_rate > 0.0):
            raise ValueError("imu_rate and tdoa_rate must be > 0")
        self.tag_offset = np.asarray(self.tag_offset, dtype=float)


# --- preset trajectories ---------------------------------------------------

_G = np.array([0.0, 0.0, -9.8])


class _StaticHover:
    """Omega = 0, specific force exactly cancelling gravity."""

    def __init__(self, R0: np.ndarray):
        self._f = -(R0.T @ _G)

    def omega(self, _t: float) -> np.ndarray:
        return np.zeros(3)

    def accel(self, _t: float) -> np.ndarray:
        return self._f.copy()


class _YawCircle:
    """Constant-rate yaw while flying a horizontal circle."""

    def __init__(self, yaw_rate: float = 0.5, radius: float = 1.5, center=(0.0, 0.0, 1.5)):
        self.w = yaw_rate
        self.r = radius
        self.center = np.asarray(center, dtype=float)

    def rot(self, t: float) -> np.ndarray:
        return so3_exp(np.array([0.0, 0.0, self.w]), t)

    def pos(self, t: float) -> np.ndarray:
        a = self.w * t
        return self.center + self.r * np.array([math.cos(a), math.sin(a), 0.0])

    def vel(self, t: float) -> np.ndarray:
        a = self.w * t
        return self.r * self.w * np.array([-math.sin(a), math.cos(a), 0.0])

    def omega(self, _t: float) -> np.ndarray:
        return np.array([0.0, 0.0, self.w])

    def accel(self, t: float) -> np.ndarray:
        a = self.w * t
        vdot = -self.r * self.w**2 * np.array([math.cos(a), math.sin(a), 0.0])
        return self.rot(t).T @ (vdot - _G)


class _FigureEight:
    """Lissajous figure-eight (x at nu, y at 2 nu) with a gentle yaw rate.

    The yaw rate is constant so the true attitude has the closed form
    R(t) = exp([0,0,yaw_rate]_x t), which makes the synthesized specific
    force exact.
    """

    def __init__(
        self,
        center=(1.237, 0.124, 1.534),
        ampl_x: float = 2.0,
        ampl_y: float = 1.5,
        ampl_z: float = 0.3,
        nu: float = 0.5,
        yaw_rate: float = 0.3,
    ):
        self.center = np.asarray(center, dtype=float)
        self.ax, self.ay, self.az = ampl_x, ampl_y, ampl_z
        self.nu = nu
        self.w = yaw_rate

    def rot(self, t: float) -> np.ndarray:
        return so3_exp(np.array([0.0, 0.0, self.w]), t)

    def pos(self, t: float) -> np.ndarray:
        nu = self.nu
        return self.center + np.array(
            [self.ax * math.sin(nu * t), self.ay * math.sin(2 * nu * t), self.az * math.sin(nu * t)]
        )

    def vel(self, t: float) -> np.ndarray:
        nu = self.nu
        return np.array(
            [
                self.ax * nu * math.cos(nu * t),
                2 * self.ay * nu * math.cos(2 * nu * t),
                self.az * nu * math.cos(nu * t),
            ]
        )

    def vdot(self, t: float) -> np.ndarray:
        nu = self.nu
        return np.array(
            [
                -self.ax * nu**2 * math.sin(nu * t),
                -4 * self.ay * nu**2 * math.sin(2 * nu * t),
                -self.az * nu**2 * math.sin(nu * t),
            ]
        )

    def omega(self, _t: float) -> np.ndarray:
        return np.array([0.0, 0.0, self.w])

    def accel(self, t: float) -> np.ndarray:
        return self.rot(t).T @ (self.vdot(t) - _G)


PRESET_NAMES = ("static", "yaw_circle", "figure8")

_DEFAULT_DURATIONS = {"static": 10.0, "yaw_circle": 20.0, "figure8": 30.0}


def preset_scenario(
    name: str,
    *,
    seed: int = 0,
    duration: float | None = None,
    imu_rate: float = 100.0,
    tdoa_rate: float = 10.0,
    noise: SensorNoise | None = None,
    b_omega=(0.0, 0.0, 0.0),
    b_a=(0.0, 0.0, 0.0),
    estimate_pos=(-3.0, -1.0, 0.0),
    estimate_vel=(0.0, 0.0, 0.0),
    estimate_rotvec=(0.0, 0.0, 0.0),
    tag_offset=(0.0, 0.0, 0.0),
    anchors: AnchorSet | None = None,
    ref: ReferenceVectors | None = None,
) -> Scenario:
    """Build one of the named scenarios: static, yaw_circle, figure8."""
    if name not in PRESET_NAMES:
        raise ValueError(f"unknown scenario {name!r}; choose from {PRESET_NAMES}")
    ref = ReferenceVectors() if ref is None else ref
    noise = SensorNoise() if noise is None else noise
    anchors = default_anchors() if anchors is None else anchors
    if name == "static":
        pos0 = np.array([1.237, 0.124, 1.534])
        traj = _StaticHover(np.eye(3))
        nav0 = NavState(Rotation.identity(), pos0, np.zeros(3))
        omega_fn, accel_fn = traj.omega, traj.accel
    elif name == "yaw_circle":
        traj = _YawCircle()
        nav0 = NavState(Rotation(traj.rot(0.0)), traj.pos(0.0), traj.vel(0.0))
        omega_fn, accel_fn = traj.omega, traj.accel
    else:
        traj = _FigureEight()
        nav0 = NavState(Rotation(traj.rot(0.0)), traj.pos(0.0), traj.vel(0.0))
        omega_fn, accel_fn = traj.omega, traj.accel
    truth = TruthModel(
        nav=nav0,
        omega_fn=omega_fn,
        accel_fn=accel_fn,
        b_omega=b_omega,
        b_a=b_a,
        noise=noise,
        seed=seed,
        gravity=ref.gravity,
    )
    estimate = ObserverState(
        nav=NavState(Rotation.from_rotvec(estimate_rotvec), estimate_pos, estimate_vel),
        b_omega_hat=np.zeros(3),
        b_a_hat=np.zeros(3),
    )
    return Scenario(
        name=name,
        anchors=anchors,
        duration=_DEFAULT_DURATIONS[name] if duration is None else float(duration),
        truth=truth,
        estimate=estimate,
        imu_rate=imu_rate,
        tdoa_rate=tdoa_rate,
        tag_offset=tag_offset,
        ref=ref,
    )


@dataclass
class SimResult:
    """Time series and summary of one closed-loop run.

    Metric arrays have ``n_steps + 1`` entries (index 0 is the initial
    condition); ``raw_pos``/``raw_err`` are NaN at steps without a TDOA fix.
    ``imu`` holds one extra trailing sample so an exported dataset carries the
    step lengths implicitly in its timestamps.
    """

    scenario: Scenario
    t: np.ndarray
    att_err: np.ndarray
    pos_err: np.ndarray
    vel_err: np.ndarray
    b_omega_err: np.ndarray
    b_a_err: np.ndarray
    truth_rot: np.ndarray
    truth_pos: np.ndarray
    truth_vel: np.ndarray
    est_pos: np.ndarray
    est_vel: np.ndarray
    raw_pos: np.ndarray
    raw_err: np.ndarray
    imu: list
    frames: dict
    final_state: ObserverState
    summary: dict = field(default_factory=dict)


def settling_time(t, pos_err, threshold: float, dwell: float) -> float:
    """First time pos_err dips below ``threshold`` and stays there for ``dwell`` s.

    Returns NaN when the series never settles (a dip must hold until at least
    min(t[-1], t_dip + dwell); a dip too close to the end still counts only if
    it holds through the end of the series and t[-1] >= t_dip + dwell).
    """
    t = np.asarray(t, dtype=float)
    pos_err = np.asarray(pos_err, dtype=float)
    below = pos_err < threshold
    for i in np.flatnonzero(below):
        end = t[i] + dwell
        if t[-1] < end:
            return float("nan")
        window = (t >= t[i]) & (t <= end)
        if np.all(below[window]):
            return float(t[i])
    return float("nan")


def _log_error_slope(t, total_err, t_end: float) -> float:
    # Exact-to-machine-zero samples carry no slope information; drop them.
    mask = (t <= t_end) & (total_err > 0.0)
    if np.count_nonzero(mask) < 2:
        return float("nan")
    return float(np.polyfit(t[mask], np.log(total_err[mask]), 1)[0])


def run_scenario(
    sc: Scenario,
    gains: Gains,
    *,
    settle_threshold: float = 0.5,
    settle_dwell: float = 5.0,
) -> SimResult:
    """Run the observer closed-loop against the synthetic truth.

    Deterministic: the result depends only on (scenario, gains).  The summary
    reports final errors, settling time, steady-state RMS over the last third
    of the run, the raw TDOA RMS over the same window, and the slope of
    log(att+pos+vel error) over the first half (negative = converging).
    """
    n = int(round(sc.duration * sc.imu_rate))
    if n < 1:
        raise ValueError("duration too short for one IMU step")
    t = np.arange(n + 1) / sc.imu_rate
    truth = replace(sc.truth, time=0.0)
    est = sc.estimate

    att = np.empty(n + 1)
    pos = np.empty(n + 1)
    vel = np.empty(n + 1)
    b_om = np.empty(n + 1)
    b_a = np.empty(n + 1)
    truth_rot = np.empty((n + 1, 3, 3))
    truth_pos = np.empty((n + 1, 3))
    truth_vel = np.empty((n + 1, 3))
    est_pos = np.empty((n + 1, 3))
    est_vel = np.empty((n + 1, 3))
    raw_pos = np.full((n + 1, 3), np.nan)
    raw_err = np.full(n + 1, np.nan)
    imu_stream: list = []
    frames: dict = {}

    def record(k: int):
        m = error_metrics(truth.nav, est, truth.b_omega, truth.b_a)
        att[k], pos[k], vel[k] = m.att_err, m.pos_err, m.vel_err
        b_om[k], b_a[k] = m.b_omega_err, m.b_a_err
        truth_rot[k] = truth.nav.rot.m
        truth_pos[k] = truth.nav.pos
        truth_vel[k] = truth.nav.vel
        est_pos[k] = est.nav.pos
        est_vel[k] = est.nav.vel

    record(0)
    tdoa_next = 0.0
    tdoa_period = 1.0 / sc.tdoa_rate
    noise = sc.truth.noise
    for k in range(n):
        tk = float(t[k])
        sample = synthesize_imu(truth, tk, sc.ref)
        imu_stream.append(sample)
        frame = None
        if tk >= tdoa_next - 1e-9:
            tdoa_next += tdoa_period
            frame = synthesize_tdoa(
                truth.nav.pos,
                truth.nav.rot,
                sc.anchors,
                sc.tag_offset,
                noise.tdoa_sd,
                seed=(truth.seed, _STREAM_TDOA, k),
                timestamp=tk,
            )
            frames[k] = frame
            try:
                fix = solve_frame(sc.anchors, frame)
                raw_pos[k] = fix.p
                raw_err[k] = float(np.linalg.norm(fix.p - truth.nav.pos))
            except (GeometryDegenerate, ValueError):
                pass
        dt = float(t[k + 1] - t[k])
        est = step(est, sample, frame, sc.anchors, gains, dt, ref=sc.ref)
        truth = replace(propagate_truth(truth, dt), time=float(t[k + 1]))
        record(k + 1)
    # One trailing sample so dataset exports carry the final step length.
    imu_stream.append(synthesize_imu(truth, float(t[n]), sc.ref))

    total = att + pos + vel
    ss_mask = t >= (2.0 / 3.0) * sc.duration
    raw_window = raw_err[ss_mask]
    raw_window = raw_window[np.isfinite(raw_window)]
    summary = {
        "scenario": sc.name,
        "seed": sc.truth.seed,
        "duration": sc.duration,
        "steps": n,
        "final_att_err": float(att[-1]),
        "final_pos_err": float(pos[-1]),
        "final_vel_err": float(vel[-1]),
        "final_b_omega_err": float(b_om[-1]),
        "final_b_a_err": float(b_a[-1]),
        "initial_pos_err": float(pos[0]),
        "settling_time": settling_time(t, pos, settle_threshold, settle_dwell),
        "settle_threshold": settle_threshold,
        "ss_pos_rms": float(np.sqrt(np.mean(pos[ss_mask] ** 2))),
        "ss_vel_rms": float(np.sqrt(np.mean(vel[ss_mask] ** 2))),
        "raw_pos_rms": float(np.sqrt(np.mean(raw_window**2))) if raw_window.size else float("nan"),
        "log_error_slope": _log_error_slope(t, total, 0.5 * sc.duration),
        "tdoa_frames": len(frames),
        "tdoa_failures": est.tdoa_failures,
        "triad_failures": est.triad_failures,
    }
    return SimResult(
        scenario=sc,
        t=t,
        att_err=att,
        pos_err=pos,
        vel_err=vel,
        b_omega_err=b_om,
        b_a_err=b_a,
        truth_rot=truth_rot,
        truth_pos=truth_pos,
        truth_vel=truth_vel,
        est_pos=est_pos,
        est_vel=est_vel,
        raw_pos=raw_pos,
        raw_err=raw_err,
        imu=imu_stream,
        frames=frames,
        final_state=est,
        summary=summary,
    )
