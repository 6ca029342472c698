"""Ground-truth trajectories and sensor measurements for the benchmark scenarios.

Four scenarios are available:

* ``LinearWNOJ``: 2-D point driven by white jerk, observed by position fixes.
* ``LinearSinusoid``: 2-D circle ``d(t) = [2 cos 0.5t, 2 sin 0.5t]``.
* ``Se3WNOJ``: body twist driven by white jerk, integrated on SE(3).
* ``Se3Sinusoid``: camera circling under a ceiling tag while bobbing vertically.

SE(3) ground truth stores ``T_I^B`` (inertial to body) with body twist
``varpi = [v; omega]`` and its derivative ``alpha = [a; omega_dot]``.  In the
left-tangent convention used everywhere else ``g_dot = -varpi`` and
``g_ddot = -alpha``.
"""
from __future__ import annotations

import csv
import enum
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import TagBehindCamera
from .manifold import SE3, Euclidean, SO3xR3, LieGroup, skew
from .motion_model import covariance_scalar, transition_scalar

GRAVITY = 9.81
E3 = np.array([0.0, 0.0, 1.0])

SENSORS = ("truth", "position", "gyro", "accel", "bias", "fiducial")


class Scenario(str, enum.Enum):
    LinearWNOJ = "LinearWNOJ"
    LinearSinusoid = "LinearSinusoid"
    Se3WNOJ = "Se3WNOJ"
    Se3Sinusoid = "Se3Sinusoid"

    @property
    def is_linear(self) -> bool:
        return self in (Scenario.LinearWNOJ, Scenario.LinearSinusoid)


def _pose(R: np.ndarray, t: np.ndarray) -> np.ndarray:
    T = np.zeros(R.shape[:-2] + (4, 4))
    T[..., :3, :3] = R
    T[..., :3, 3] = t
    T[..., 3, 3] = 1.0
    return T


def default_T_B_C() -> np.ndarray:
    return _pose(np.eye(3), np.array([0.0, 0.0, 0.1]))


@dataclass
class SimConfig:
    scenario: Scenario = Scenario.LinearWNOJ
    duration: float = 20.0
    truth_rate: float = 1000.0
    position_rate: float = 100.0
    imu_rate: float = 100.0
    fiducial_rate: float = 10.0
    # process noise PSD; linear: 2x2, SE(3): 6x6
    Q: Optional[np.ndarray] = None
    R: np.ndarray = field(default_factory=lambda: 0.01 ** 2 * np.eye(2))
    sigma_g: float = 0.005
    sigma_a: float = 0.005
    sigma_bg: float = 0.005
    sigma_ba: float = 0.005
    bias_g0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bias_a0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sigma_c: float = 0.05
    fov_constrained: bool = False
    sigma_p: float = 0.5
    fx: float = 620.0
    fy: float = 620.0
    cx: float = 320.0
    cy: float = 240.0
    tag_size: float = 0.4
    T_B_C: np.ndarray = field(default_factory=default_T_B_C)
    tags: list = field(default_factory=lambda: [np.eye(4)])
    gravity: float = GRAVITY
    # linear initial conditions
    d0: np.ndarray = field(default_factory=lambda: np.zeros(2))
    v0: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    a0: np.ndarray = field(default_factory=lambda: np.zeros(2))
    # SE(3) WNOJ initial conditions
    T0: np.ndarray = field(default_factory=lambda: np.eye(4))
    twist0: np.ndarray = field(default_factory=lambda: np.zeros(6))
    twist_dot0: np.ndarray = field(default_factory=lambda: np.zeros(6))
    # sinusoid shape
    radius: float = 2.0
    angular_rate: float = 0.5
    phase: float = -2.5
    height: float = -2.0
    bob_amplitude: float = 0.3
    bob_rate: float = 2.0
    tilt: float = np.pi / 4
    noise_free: bool = False
    seed: int = 0

    def __post_init__(self):
        self.scenario = Scenario(self.scenario)
        if self.Q is None:
            self.Q = np.diag([1.0, 0.01]) if self.scenario.is_linear else np.diag([5.0] * 3 + [1.5] * 3)
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        for name in ("truth_rate", "position_rate", "imu_rate", "fiducial_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def for_scenario(cls, scenario, **overrides) -> "SimConfig":
        scenario = Scenario(scenario)
        base: dict = {"scenario": scenario}
        if scenario is Scenario.LinearWNOJ:
            base.update(duration=20.0)
        elif scenario is Scenario.LinearSinusoid:
            base.update(duration=20.0, Q=np.eye(2))
        elif scenario is Scenario.Se3WNOJ:
            base.update(duration=10.0, fov_constrained=False)
        else:
            base.update(duration=10.0, fov_constrained=True)
        base.update(overrides)
        return cls(**base)

    def rng(self, sensor: str) -> np.random.Generator:
        """Independent counter-based stream for one sensor."""
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(SENSORS.index(sensor),))
        return np.random.Generator(np.random.Philox(ss))

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


def grid(duration: float, rate: float) -> np.ndarray:
    """Stamps ``0, 1/rate, ..., duration`` (inclusive)."""
    n = int(round(duration * rate))
    return np.arange(n + 1) / rate


@dataclass
class GroundTruth:
    """Dense samples of the true trajectory (and IMU biases)."""

    times: np.ndarray
    group: LieGroup
    g: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    bias_g: Optional[np.ndarray] = None
    bias_a: Optional[np.ndarray] = None

    @property
    def rate(self) -> float:
        return 1.0 / (self.times[1] - self.times[0])

    def index(self, stamps) -> np.ndarray:
        idx = np.rint((np.asarray(stamps) - self.times[0]) * self.rate).astype(int)
        if np.any(np.abs(self.times[idx] - stamps) > 1e-9):
            raise ValueError("stamps are not on the ground-truth grid")
        return idx

    # SE(3) views ----------------------------------------------------------
    @property
    def twist(self) -> np.ndarray:
        return -self.vel

    @property
    def twist_dot(self) -> np.ndarray:
        return -self.acc

    def as_group(self, group: LieGroup):
        """``(g, g_dot, g_ddot)`` of the truth expressed on ``group``."""
        if group == self.group:
            return self.g, self.vel, self.acc
        if self.group == SE3 and group == SO3xR3:
            return se3_to_product(self.g, self.vel, self.acc)
        raise ValueError(f"cannot express {self.group} truth on {group}")


def se3_to_product(T, g_dot, g_ddot):
    """Convert ``T_I^B`` with left-tangent derivatives to ``(R_I^B, p^I)`` form."""
    R = T[:, :3, :3]
    Rt = np.swapaxes(R, 1, 2)
    p = -np.einsum("nij,nj->ni", Rt, T[:, :3, 3])
    v, w = -g_dot[:, :3], -g_dot[:, 3:]
    a, wd = -g_ddot[:, :3], -g_ddot[:, 3:]
    pd = np.einsum("nij,nj->ni", Rt, v)
    pdd = np.einsum("nij,nj->ni", Rt, a + np.cross(w, v))
    g = _pose(R, p)
    return g, np.concatenate([pd, -w], 1), np.concatenate([pdd, -wd], 1)


@dataclass
class Measurements:
    stamps: np.ndarray
    values: np.ndarray
    covs: np.ndarray  # (n, r, r)
    tag_ids: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.stamps)


@dataclass
class MeasurementSet:
    sensors: dict = field(default_factory=dict)

    def __getitem__(self, key) -> Measurements:
        return self.sensors[key]

    def __contains__(self, key) -> bool:
        return key in self.sensors

    def to_csv(self, directory: str) -> list[str]:
        """One CSV per sensor: stamp, values..., covariance upper triangle."""
        os.makedirs(directory, exist_ok=True)
        paths = []
        for name, m in self.sensors.items():
            path = os.path.join(directory, f"{name}.csv")
            vals = m.values.reshape(len(m), -1)
            r = m.covs.shape[-1]
            iu = np.triu_indices(r)
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                head = ["stamp"] + [f"v{i}" for i in range(vals.shape[1])] + [f"c{i}{j}" for i, j in zip(*iu)]
                if m.tag_ids is not None:
                    head.append("tag")
                w.writerow(head)
                for k in range(len(m)):
                    row = [repr(float(m.stamps[k]))] + [repr(float(x)) for x in vals[k]]
                    row += [repr(float(x)) for x in m.covs[k][iu]]
                    if m.tag_ids is not None:
                        row.append(int(m.tag_ids[k]))
                    w.writerow(row)
            paths.append(path)
        return paths


# ---------------------------------------------------------------------------
# helpers for exact discrete sampling of white-jerk chains
# ---------------------------------------------------------------------------

def _chain_noise_factor(h: float, blocks: int, Q: np.ndarray) -> np.ndarray:
    """Factor ``F`` with ``F F^T = kron(Q_scalar(h), Q)`` computed without cancellation."""
    S_inv = np.diag(h ** -np.arange(blocks, dtype=float))
    unit = covariance_scalar(1.0, blocks)
    Ls = h ** (blocks - 0.5) * S_inv @ np.linalg.cholesky(unit)
    d = Q.shape[0]
    LQ = _psd_factor(Q) if np.any(Q) else np.zeros((d, d))
    return np.kron(Ls, LQ)


def _psd_factor(Q):
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


# ---------------------------------------------------------------------------
# simulators
# ---------------------------------------------------------------------------

def sim_linear_wnoj(cfg: SimConfig):
    """Exact-discretisation WNOJ truth in 2-D plus position fixes."""
    h = 1.0 / cfg.truth_rate
    t = grid(cfg.duration, cfg.truth_rate)
    d = cfg.Q.shape[0]
    Phi = np.kron(transition_scalar(h, 3), np.eye(d))
    F = _chain_noise_factor(h, 3, cfg.Q)
    rng = cfg.rng("truth")
    x = np.zeros((t.size, 3 * d))
    x[0] = np.concatenate([cfg.d0, cfg.v0, cfg.a0])
    noise = rng.standard_normal((t.size - 1, 3 * d)) @ F.T
    for k in range(t.size - 1):
        x[k + 1] = Phi @ x[k] + noise[k]
    truth = GroundTruth(t, Euclidean(d), x[:, :d].copy(), x[:, d:2 * d].copy(), x[:, 2 * d:].copy())
    return truth, sim_position(truth, cfg)


def sim_position(truth: GroundTruth, cfg: SimConfig) -> MeasurementSet:
    stamps = grid(cfg.duration, cfg.position_rate)
    idx = truth.index(stamps)
    R = np.atleast_2d(cfg.R)
    eta = cfg.rng("position").standard_normal((stamps.size, R.shape[0])) @ _psd_factor(R).T
    if cfg.noise_free:
        eta[:] = 0.0
    z = truth.g[idx] + eta
    return MeasurementSet({"position": Measurements(stamps, z, np.broadcast_to(R, (stamps.size,) + R.shape).copy())})


def sim_se3_wnoj(cfg: SimConfig) -> GroundTruth:
    """Random SE(3) trajectory: exact white-jerk twist sampling, midpoint pose update."""
    h = 1.0 / cfg.truth_rate
    t = grid(cfg.duration, cfg.truth_rate)
    Phi = np.kron(transition_scalar(h, 2), np.eye(6))
    F = _chain_noise_factor(h, 2, cfg.Q)
    rng = cfg.rng("truth")
    x = np.zeros((t.size, 12))
    x[0] = np.concatenate([cfg.twist0, cfg.twist_dot0])
    noise = rng.standard_normal((t.size - 1, 12)) @ F.T
    T = np.zeros((t.size, 4, 4))
    T[0] = cfg.T0
    for k in range(t.size - 1):
        x[k + 1] = Phi @ x[k] + noise[k]
    steps = SE3.exp(-0.5 * h * (x[:-1, :6] + x[1:, :6]))
    for k in range(t.size - 1):
        T[k + 1] = steps[k] @ T[k]
    T = SE3.normalize(T)
    return GroundTruth(t, SE3, T, -x[:, :6], -x[:, 6:])


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z_batch(a):
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(a.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out


def sinusoid_state(t, cfg: SimConfig):
    """Analytic truth of the sinusoid scenarios at arbitrary times."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    r, w = cfg.radius, cfg.angular_rate
    th = w * t + cfg.phase
    if cfg.scenario is Scenario.LinearSinusoid:
        c, s = np.cos(th), np.sin(th)
        p = r * np.stack([c, s], 1)
        pd = r * w * np.stack([-s, c], 1)
        pdd = -r * w * w * np.stack([c, s], 1)
        return Euclidean(2), p, pd, pdd
    c, s = np.cos(th), np.sin(th)
    A, W = cfg.bob_amplitude, cfg.bob_rate
    p = np.stack([r * c, r * s, cfg.height + A * np.sin(W * t)], 1)
    pd = np.stack([-r * w * s, r * w * c, A * W * np.cos(W * t)], 1)
    pdd = np.stack([-r * w * w * c, -r * w * w * s, -A * W * W * np.sin(W * t)], 1)
    R0 = _rot_y(-cfg.tilt)
    R_BI = _rot_z_batch(th) @ R0  # body to inertial
    R_IB = np.swapaxes(R_BI, 1, 2)
    omega = np.broadcast_to(w * R0.T @ E3, (t.size, 3))
    v = np.einsum("nij,nj->ni", R_IB, pd)
    a = np.einsum("nij,nj->ni", R_IB, pdd) - np.cross(omega, v)
    T = _pose(R_IB, -np.einsum("nij,nj->ni", R_IB, p))
    twist = np.concatenate([v, omega], 1)
    twist_dot = np.concatenate([a, np.zeros_like(omega)], 1)
    return SE3, T, -twist, -twist_dot


def sim_sinusoid(cfg: SimConfig) -> GroundTruth:
    t = grid(cfg.duration, cfg.truth_rate)
    group, g, vel, acc = sinusoid_state(t, cfg)
    return GroundTruth(t, group, g, vel, acc)


def sim_imu(truth: GroundTruth, cfg: SimConfig) -> MeasurementSet:
    """Gyro and accelerometer readings with random-walk biases integrated at the truth rate."""
    if truth.group != SE3:
        raise TypeError("IMU simulation needs SE(3) ground truth")
    h = 1.0 / truth.rate
    n = truth.times.size
    rb = cfg.rng("bias")
    steps = rb.standard_normal((n - 1, 6)) * np.sqrt(h) * np.array([cfg.sigma_bg] * 3 + [cfg.sigma_ba] * 3)
    if cfg.noise_free:
        steps[:] = 0.0
    walk = np.concatenate([np.zeros((1, 6)), np.cumsum(steps, 0)])
    bias_g = cfg.bias_g0 + walk[:, :3]
    bias_a = cfg.bias_a0 + walk[:, 3:]
    truth.bias_g, truth.bias_a = bias_g, bias_a

    stamps = grid(cfg.duration, cfg.imu_rate)
    idx = truth.index(stamps)
    omega = truth.twist[idx, 3:]
    a = truth.twist_dot[idx, :3]
    R = truth.g[idx, :3, :3]
    eg = cfg.rng("gyro").standard_normal((stamps.size, 3)) * cfg.sigma_g
    ea = cfg.rng("accel").standard_normal((stamps.size, 3)) * cfg.sigma_a
    if cfg.noise_free:
        eg[:] = 0.0
        ea[:] = 0.0
    zg = omega + bias_g[idx] + eg
    za = a - cfg.gravity * R[:, :, 2] + bias_a[idx] + ea
    covg = np.broadcast_to(cfg.sigma_g ** 2 * np.eye(3), (stamps.size, 3, 3)).copy()
    cova = np.broadcast_to(cfg.sigma_a ** 2 * np.eye(3), (stamps.size, 3, 3)).copy()
    return MeasurementSet({"gyro": Measurements(stamps, zg, covg), "accel": Measurements(stamps, za, cova)})


# ---------------------------------------------------------------------------
# fiducial pose measurements
# ---------------------------------------------------------------------------

def tag_corners(size: float) -> np.ndarray:
    s = 0.5 * size
    return np.array([[-s, -s, 0.0], [s, -s, 0.0], [s, s, 0.0], [-s, s, 0.0]])


def project(K: np.ndarray, x_C: np.ndarray) -> np.ndarray:
    return np.stack([K[0, 0] * x_C[..., 0] / x_C[..., 2] + K[0, 2],
                     K[1, 1] * x_C[..., 1] / x_C[..., 2] + K[1, 2]], -1)


def pnp_jacobian(T_F_C: np.ndarray, K: np.ndarray, size: float, image_wh=None) -> np.ndarray:
    """Stacked ``8 x 6`` Jacobian of corner pixels w.r.t. a left pose perturbation.

    Raises :class:`TagBehindCamera` if a corner is behind the camera or, when
    ``image_wh`` is given, projects outside the image.
    """
    X = tag_corners(size) @ T_F_C[:3, :3].T + T_F_C[:3, 3]
    if np.any(X[:, 2] <= 0):
        raise TagBehindCamera("tag corner behind the camera")
    if image_wh is not None:
        px = project(K, X)
        w, hgt = image_wh
        if np.any(px < 0) or np.any(px[:, 0] > w) or np.any(px[:, 1] > hgt):
            raise TagBehindCamera("tag corner outside the image")
    J = np.zeros((8, 6))
    fx, fy = K[0, 0], K[1, 1]
    for i, (x, y, z) in enumerate(X):
        Jp = np.array([[fx / z, 0.0, -fx * x / z ** 2], [0.0, fy / z, -fy * y / z ** 2]])
        Jx = np.hstack([np.eye(3), -skew(X[i])])
        J[2 * i:2 * i + 2] = Jp @ Jx
    return J


def pnp_covariance(T_F_C: np.ndarray, K: np.ndarray, size: float, sigma_p: float, image_wh=None) -> np.ndarray:
    """First-order PnP pose covariance ``(J^T Sigma_p^-1 J)^-1``."""
    J = pnp_jacobian(T_F_C, K, size, image_wh)
    info = J.T @ J / sigma_p ** 2
    cov = np.linalg.inv(info)
    return 0.5 * (cov + cov.T)


def sim_fiducial(truth: GroundTruth, cfg: SimConfig) -> MeasurementSet:
    """Relative tag poses ``Exp(eta) T_B^C T_I^B T_I^F^-1`` at the fiducial rate."""
    if truth.group != SE3:
        raise TypeError("fiducial simulation needs SE(3) ground truth")
    stamps = grid(cfg.duration, cfg.fiducial_rate)
    idx = truth.index(stamps)
    rng = cfg.rng("fiducial")
    K = cfg.K
    image_wh = (2 * cfg.cx, 2 * cfg.cy)
    out_t, out_z, out_c, out_id = [], [], [], []
    for k, i in enumerate(idx):
        T = truth.g[i]
        for m, T_I_F in enumerate(cfg.tags):
            h = cfg.T_B_C @ T @ SE3.inverse(np.asarray(T_I_F))
            draw = rng.standard_normal(6)  # always consumed to keep streams aligned
            if cfg.fov_constrained:
                try:
                    cov = pnp_covariance(h, K, cfg.tag_size, cfg.sigma_p, image_wh)
                except TagBehindCamera:
                    continue
            else:
                cov = cfg.sigma_c * np.eye(6)
            eta = np.zeros(6) if cfg.noise_free else _psd_factor(cov) @ draw
            out_t.append(stamps[k])
            out_z.append(SE3.exp(eta) @ h)
            out_c.append(cov)
            out_id.append(m)
    meas = Measurements(np.array(out_t), np.array(out_z).reshape(-1, 4, 4),
                        np.array(out_c).reshape(-1, 6, 6), np.array(out_id, dtype=int))
    return MeasurementSet({"fiducial": meas})


def simulate(cfg: SimConfig):
    """Truth plus every sensor relevant to the scenario."""
    sc = cfg.scenario
    if sc is Scenario.LinearWNOJ:
        return sim_linear_wnoj(cfg)
    if sc is Scenario.LinearSinusoid:
        truth = sim_sinusoid(cfg)
        return truth, sim_position(truth, cfg)
    truth = sim_se3_wnoj(cfg) if sc is Scenario.Se3WNOJ else sim_sinusoid(cfg)
    meas = sim_imu(truth, cfg)
    meas.sensors.update(sim_fiducial(truth, cfg).sensors)
    return truth, meas


__all__ = [
    "Scenario", "SimConfig", "GroundTruth", "Measurements", "MeasurementSet", "simulate",
    "sim_linear_wnoj", "sim_position", "sim_se3_wnoj", "sim_sinusoid", "sinusoid_state", "sim_imu",
    "sim_fiducial", "pnp_jacobian", "pnp_covariance", "tag_corners", "project", "se3_to_product", "grid",
]
