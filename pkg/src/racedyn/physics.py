"""Single-track vehicle dynamics with load-sensitive lateral tire forces.

The model keeps three body-frame states (vx, vy, omega) plus a world-frame
pose (x, y, theta).  Longitudinal force comes from a motor/rolling-drag law
on the rear axle, lateral forces from a magic-formula curve per axle whose
output scales with the instantaneous normal load.  Longitudinal load
transfer shifts normal load between the axles through the CG height.
Integration is explicit forward Euler at a fixed step.

Every formula in this module is written elementwise, so the same code paths
accept Python floats and numpy arrays of any broadcastable shape.  The
batched entry points (`step_batch`, `step_batch_vjp`, ...) expose analytic
reverse-mode derivatives used by the estimator training loop and by the
receding-horizon controller.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergedError

# Floor applied to |vx| before slip-angle division; keeps the arctan argument
# finite through standstill.
V_EPS = 0.05

# Default axle-load clamp (N) keeping the load ratio positive.  Geometry can
# override it; vehicles whose static per-axle load is below 1 N need to.
LOAD_FLOOR = 1.0

# Any |state component| beyond this is treated as a diverged rollout.
DIVERGENCE_LIMIT = 1.0e4

# Column order of the flattened parameter vector.  Fixed: checkpoints, the
# guard bounds, and the estimator head all index by this order.
PARAM_NAMES = (
    "Bf", "Cf", "Df", "Ef",
    "Br", "Cr", "Dr", "Er",
    "Shf", "Svf", "Shr", "Svr",
    "Cm1", "Cm2", "Cr0", "Cr2",
    "Iz",
)

# Column order of rollout force traces.
TRACE_COLUMNS = ("frx", "ffy", "fry", "ffz", "frz", "alpha_f", "alpha_r")


class PhysicsMode(enum.Enum):
    """Which normal-load treatment feeds the lateral tire model.

    FULL and LOAD_TRANSFER_ONLY both compute axle loads with longitudinal
    load transfer and scale the lateral forces by load; they are separate
    members so ablation reports can label rows distinctly.  NOMINAL_LOAD
    pins both axle loads to the nominal value, which reduces the tire model
    to its fixed-load form.
    """

    FULL = "full"
    NOMINAL_LOAD = "nominal-load"
    LOAD_TRANSFER_ONLY = "load-transfer-only"

    @property
    def uses_load_transfer(self) -> bool:
        return self is not PhysicsMode.NOMINAL_LOAD


@dataclass(frozen=True)
class VehicleGeometry:
    """Fixed chassis quantities (SI units).

    m           vehicle mass, kg
    lf          CG to front axle, m
    lr          CG to rear axle, m
    hcg         CG height above ground, m
    g           gravitational acceleration, m/s^2
    fz0         nominal per-axle vertical load used to normalize tire curves, N
    load_floor  clamp applied to computed axle loads, N
    """

    m: float
    lf: float
    lr: float
    hcg: float
    g: float = 9.81
    fz0: float = 0.0
    load_floor: float = LOAD_FLOOR

    def __post_init__(self):
        for name in ("m", "lf", "lr", "g", "load_floor"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"geometry field {name} must be positive")
        if self.hcg < 0.0:
            raise ValueError("geometry field hcg must be non-negative")
        if self.fz0 <= 0.0:
            # default the normalization load to the static per-axle average
            object.__setattr__(self, "fz0", 0.5 * self.m * self.g)
        static_min = self.m * self.g * min(self.lf, self.lr) / (self.lf + self.lr)
        if self.load_floor >= static_min:
            raise ValueError(
                "load_floor must stay below the smaller static axle load "
                f"({static_min:.4g} N); pass a smaller load_floor for "
                "light vehicles")

    @property
    def wheelbase(self) -> float:
        return self.lf + self.lr


@dataclass(frozen=True)
class PacejkaCoeffs:
    """Magic-formula coefficients for one axle.

    b, c, d, e are stiffness, shape, peak and curvature; sh shifts the slip
    angle, sv shifts the force output.  d and sv carry force units, the rest
    are dimensionless.
    """

    b: float
    c: float
    d: float
    e: float
    sh: float = 0.0
    sv: float = 0.0

    def __post_init__(self):
        if self.b <= 0.0 or self.c <= 0.0 or self.d <= 0.0:
            raise ValueError("pacejka b, c, d must be positive")


@dataclass(frozen=True)
class DrivetrainCoeffs:
    """Motor and drag coefficients of the longitudinal force law."""

    cm1: float
    cm2: float
    cr0: float
    cr2: float


@dataclass(frozen=True)
class ModelParams:
    """All 17 learnable physical parameters of the single-track model."""

    front: PacejkaCoeffs
    rear: PacejkaCoeffs
    drivetrain: DrivetrainCoeffs
    iz: float

    def __post_init__(self):
        if self.iz <= 0.0:
            raise ValueError("yaw inertia iz must be positive")

    def to_vector(self) -> np.ndarray:
        """Flatten to the fixed 17-component order of PARAM_NAMES."""
        f, r, d = self.front, self.rear, self.drivetrain
        return np.array([
            f.b, f.c, f.d, f.e,
            r.b, r.c, r.d, r.e,
            f.sh, f.sv, r.sh, r.sv,
            d.cm1, d.cm2, d.cr0, d.cr2,
            self.iz,
        ], dtype=float)

    @classmethod
    def from_vector(cls, vec) -> "ModelParams":
        v = np.asarray(vec, dtype=float).reshape(-1)
        if v.shape[0] != len(PARAM_NAMES):
            raise ValueError(f"expected {len(PARAM_NAMES)} components, got {v.shape[0]}")
        front = PacejkaCoeffs(b=v[0], c=v[1], d=v[2], e=v[3], sh=v[8], sv=v[9])
        rear = PacejkaCoeffs(b=v[4], c=v[5], d=v[6], e=v[7], sh=v[10], sv=v[11])
        drive = DrivetrainCoeffs(cm1=v[12], cm2=v[13], cr0=v[14], cr2=v[15])
        return cls(front=front, rear=rear, drivetrain=drive, iz=float(v[16]))

    def to_dict(self) -> dict:
        return dict(zip(PARAM_NAMES, (float(x) for x in self.to_vector())))

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        missing = [n for n in PARAM_NAMES if n not in d]
        if missing:
            raise ValueError(f"missing parameter entries: {', '.join(missing)}")
        return cls.from_vector([float(d[n]) for n in PARAM_NAMES])


@dataclass(frozen=True)
class BodyState:
    """Body-frame velocities: longitudinal, lateral, yaw rate."""

    vx: float
    vy: float
    omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.omega], dtype=float)

    @classmethod
    def from_array(cls, a) -> "BodyState":
        a = np.asarray(a, dtype=float).reshape(-1)
        return cls(vx=float(a[0]), vy=float(a[1]), omega=float(a[2]))


@dataclass(frozen=True)
class StateRates:
    """Time derivatives of BodyState."""

    vx_dot: float
    vy_dot: float
    omega_dot: float


@dataclass(frozen=True)
class Pose:
    """World-frame position and heading; theta is kept in (-pi, pi]."""

    x: float
    y: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Pose":
        a = np.asarray(a, dtype=float).reshape(-1)
        return cls(x=float(a[0]), y=float(a[1]), theta=float(a[2]))


@dataclass(frozen=True)
class ControlInput:
    """Normalized throttle in [-1, 1] and steering angle in rad."""

    throttle: float
    steer: float

    def as_array(self) -> np.ndarray:
        return np.array([self.throttle, self.steer], dtype=float)


@dataclass(frozen=True)
class AxleLoads:
    """Vertical loads on the front and rear axle, N."""

    front: float
    rear: float


@dataclass(frozen=True)
class ForceTrace:
    """Per-step diagnostic forces and slip angles."""

    frx: float
    ffy: float
    fry: float
    ffz: float
    frz: float
    alpha_f: float
    alpha_r: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in TRACE_COLUMNS], dtype=float)


@dataclass(frozen=True)
class Trajectory:
    """Dense rollout result: states and poses carry the initial row."""

    states: np.ndarray   # (N+1, 3)
    poses: np.ndarray    # (N+1, 3)
    forces: np.ndarray   # (N, 7), columns per TRACE_COLUMNS

    def __len__(self) -> int:
        return self.forces.shape[0]


def wrap_angle(theta):
    """Wrap an angle (or array of angles) into (-pi, pi]."""
    return np.pi - (np.pi - np.asarray(theta, dtype=float)) % (2.0 * np.pi)


# ---------------------------------------------------------------------------
# elementwise force and rate laws


def _slip_core(vx, vy, omega, steer, lf, lr, shf, shr):
    speed = np.maximum(np.abs(vx), V_EPS)
    uf = (lf * omega + vy) / speed
    ur = (lr * omega - vy) / speed
    alpha_f = steer - np.arctan(uf) + shf
    alpha_r = np.arctan(ur) + shr
    return alpha_f, alpha_r, uf, ur, speed


def slip_angles(state: BodyState, steer: float, geom: VehicleGeometry,
                params: ModelParams) -> tuple:
    """Front and rear tire slip angles for the current state.

    |vx| is floored at V_EPS so the expression stays defined through
    standstill; each angle carries its axle's horizontal shift.
    """
    af, ar, _, _, _ = _slip_core(state.vx, state.vy, state.omega, steer,
                                 geom.lf, geom.lr,
                                 params.front.sh, params.rear.sh)
    return float(af), float(ar)


def longitudinal_force(vx, throttle, drivetrain: DrivetrainCoeffs):
    """Rear-axle longitudinal force: motor term minus rolling and drag."""
    return (drivetrain.cm1 - drivetrain.cm2 * vx) * throttle \
        - drivetrain.cr0 - drivetrain.cr2 * vx * vx


def axle_loads(frx, geom: VehicleGeometry, floor=None) -> AxleLoads:
    """Vertical axle loads under longitudinal load transfer.

    Before clamping, front + rear equals m*g exactly: the transfer term
    hcg*Frx/L moves load between the axles without creating any.  The clamp
    defaults to geom.load_floor; pass floor=-inf to read the raw values
    (diagnostics only; the stepper always clamps so the load ratio stays
    positive).
    """
    if floor is None:
        floor = geom.load_floor
    L = geom.wheelbase
    shift = geom.hcg * frx / L
    front = np.maximum(geom.m * geom.g * geom.lr / L - shift, floor)
    rear = np.maximum(geom.m * geom.g * geom.lf / L + shift, floor)
    return AxleLoads(front=front, rear=rear)


def _pacejka_core(alpha, fz, b, c, d, e, sv, fz0):
    t1 = b * alpha
    at1 = np.arctan(t1)
    g1 = t1 - e * (t1 - at1)
    psi = np.arctan(g1)
    sin_term = np.sin(c * psi)
    base = sv + d * sin_term
    fy = base * (fz / fz0)
    return fy, (t1, at1, g1, psi, sin_term, base)


def pacejka_lateral(alpha, fz, coeffs: PacejkaCoeffs, fz0):
    """Load-scaled magic-formula lateral force for one axle."""
    fy, _ = _pacejka_core(alpha, fz, coeffs.b, coeffs.c, coeffs.d, coeffs.e,
                          coeffs.sv, fz0)
    return fy


def body_derivative(state: BodyState, steer, frx, ffy, fry,
                    geom: VehicleGeometry, iz) -> StateRates:
    """Body-frame accelerations from the axle forces.

    Only the front axle is steered; the rear longitudinal force acts along
    the body x axis.
    """
    sd, cd = np.sin(steer), np.cos(steer)
    m = geom.m
    vx_dot = (frx - ffy * sd + m * state.vy * state.omega) / m
    vy_dot = (ffy * cd + fry - m * state.vx * state.omega) / m
    omega_dot = (geom.lf * ffy * cd - geom.lr * fry) / iz
    return StateRates(vx_dot=float(vx_dot), vy_dot=float(vy_dot),
                      omega_dot=float(omega_dot))


def euler_step(state: BodyState, rates: StateRates, dt: float) -> BodyState:
    """One explicit forward-Euler update of the body states."""
    return BodyState(vx=state.vx + dt * rates.vx_dot,
                     vy=state.vy + dt * rates.vy_dot,
                     omega=state.omega + dt * rates.omega_dot)


def advance_pose(pose: Pose, state: BodyState, dt: float) -> Pose:
    """Advance the world pose with the body velocities over one step.

    Uses the state passed in (the pre-step state in the stepper), so the
    pose integrates with the same explicit-Euler convention as the body
    states.  Heading is wrapped into (-pi, pi].
    """
    st, ct = math.sin(pose.theta), math.cos(pose.theta)
    return Pose(
        x=pose.x + dt * (state.vx * ct - state.vy * st),
        y=pose.y + dt * (state.vx * st + state.vy * ct),
        theta=float(wrap_angle(pose.theta + dt * state.omega)),
    )


# ---------------------------------------------------------------------------
# batched stepper with analytic reverse-mode derivatives
#
# States are (..., 3) arrays [vx, vy, omega], controls (..., 2) arrays
# [throttle, steer], parameters (..., 17) arrays in PARAM_NAMES order (a bare
# (17,) vector broadcasts over the batch).  All derivative formulas below are
# the hand-differentiated chain of the scalar laws above; the finite
# difference suite in the tests pins every branch.


def step_batch(states, controls, params, geom: VehicleGeometry, dt: float,
               mode: PhysicsMode = PhysicsMode.FULL, with_cache: bool = False):
    """Vectorized simulate_step over leading batch dimensions.

    Returns (next_states, traces) and, when with_cache is set, a cache
    consumed by step_batch_vjp.  traces has TRACE_COLUMNS layout.
    """
    states = np.asarray(states, dtype=float)
    controls = np.asarray(controls, dtype=float)
    params = np.asarray(params, dtype=float)
    vx, vy, omega = states[..., 0], states[..., 1], states[..., 2]
    throttle, steer = controls[..., 0], controls[..., 1]
    p = np.broadcast_to(params, states.shape[:-1] + (17,))
    bf, cf, df, ef = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
    br, cr_, dr, er = p[..., 4], p[..., 5], p[..., 6], p[..., 7]
    shf, svf, shr, svr = p[..., 8], p[..., 9], p[..., 10], p[..., 11]
    cm1, cm2, cr0, cr2 = p[..., 12], p[..., 13], p[..., 14], p[..., 15]
    iz = p[..., 16]

    alpha_f, alpha_r, uf, ur, speed = _slip_core(
        vx, vy, omega, steer, geom.lf, geom.lr, shf, shr)

    frx = (cm1 - cm2 * vx) * throttle - cr0 - cr2 * vx * vx

    L = geom.wheelbase
    if mode.uses_load_transfer:
        floor = geom.load_floor
        shift = geom.hcg * frx / L
        ffz_raw = geom.m * geom.g * geom.lr / L - shift
        frz_raw = geom.m * geom.g * geom.lf / L + shift
        ffz = np.maximum(ffz_raw, floor)
        frz = np.maximum(frz_raw, floor)
        ffz_free = ffz_raw > floor
        frz_free = frz_raw > floor
    else:
        ffz = np.full_like(frx, geom.fz0)
        frz = np.full_like(frx, geom.fz0)
        ffz_free = np.zeros_like(frx, dtype=bool)
        frz_free = np.zeros_like(frx, dtype=bool)

    ffy, front_cache = _pacejka_core(alpha_f, ffz, bf, cf, df, ef, svf, geom.fz0)
    fry, rear_cache = _pacejka_core(alpha_r, frz, br, cr_, dr, er, svr, geom.fz0)

    sd, cd = np.sin(steer), np.cos(steer)
    m = geom.m
    vx_dot = (frx - ffy * sd + m * vy * omega) / m
    vy_dot = (ffy * cd + fry - m * vx * omega) / m
    omega_dot = (geom.lf * ffy * cd - geom.lr * fry) / iz

    next_states = np.stack([vx + dt * vx_dot,
                            vy + dt * vy_dot,
                            omega + dt * omega_dot], axis=-1)
    traces = np.stack([frx, ffy, fry, ffz, frz, alpha_f, alpha_r], axis=-1)

    if not with_cache:
        return next_states, traces
    cache = dict(
        geom=geom, dt=dt, mode=mode,
        vx=vx, vy=vy, omega=omega, throttle=throttle, steer=steer,
        p=p, uf=uf, ur=ur, speed=speed, frx=frx,
        alpha_f=alpha_f, alpha_r=alpha_r,
        ffz=ffz, frz=frz, ffz_free=ffz_free, frz_free=frz_free,
        ffy=ffy, fry=fry, front=front_cache, rear=rear_cache,
        sd=sd, cd=cd, omega_dot=omega_dot,
    )
    return next_states, traces, cache


def _pacejka_vjp(g_fy, alpha, fz, b, c, d, e, fz0, cache):
    t1, at1, g1, psi, sin_term, base = cache
    ratio = fz / fz0
    g_fz = g_fy * base / fz0
    g_sv = g_fy * ratio
    g_d = g_fy * sin_term * ratio
    g_arg = g_fy * d * np.cos(c * psi) * ratio    # d/d(c*psi)
    g_c = g_arg * psi
    g_psi = g_arg * c
    g_g1 = g_psi / (1.0 + g1 * g1)
    g_e = -g_g1 * (t1 - at1)
    g_t1 = g_g1 * (1.0 - e * (1.0 - 1.0 / (1.0 + t1 * t1)))
    g_b = g_t1 * alpha
    g_alpha = g_t1 * b
    return g_alpha, g_fz, g_b, g_c, g_d, g_e, g_sv


def step_batch_vjp(cache, g_next):
    """Pull a gradient on the next state back onto (state, control, params).

    g_next is (..., 3); returns (g_states, g_controls, g_params) with shapes
    matching the forward inputs.  The load clamp and the |vx| floor
    propagate zero gradient where they are active.
    """
    geom, dt, mode = cache["geom"], cache["dt"], cache["mode"]
    vx, vy, omega = cache["vx"], cache["vy"], cache["omega"]
    throttle, steer = cache["throttle"], cache["steer"]
    p = cache["p"]
    uf, ur, speed = cache["uf"], cache["ur"], cache["speed"]
    frx, ffy, fry = cache["frx"], cache["ffy"], cache["fry"]
    ffz, frz = cache["ffz"], cache["frz"]
    sd, cd = cache["sd"], cache["cd"]
    m, lf, lr, L = geom.m, geom.lf, geom.lr, geom.wheelbase

    bf, cf, df, ef = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
    br, cr_, dr, er = p[..., 4], p[..., 5], p[..., 6], p[..., 7]
    cm1, cm2, cr2 = p[..., 12], p[..., 13], p[..., 15]
    iz = p[..., 16]

    g_next = np.asarray(g_next, dtype=float)
    gnvx, gnvy, gnw = g_next[..., 0], g_next[..., 1], g_next[..., 2]

    # euler: next = state + dt * rates
    g_vxd, g_vyd, g_wd = gnvx * dt, gnvy * dt, gnw * dt
    g_vx = gnvx.copy()
    g_vy = gnvy.copy()
    g_w = gnw.copy()

    # body rates
    g_frx = g_vxd / m
    g_ffy = (-g_vxd * sd + g_vyd * cd) / m + g_wd * lf * cd / iz
    g_fry = g_vyd / m - g_wd * lr / iz
    g_steer = (-g_vxd * ffy * cd - g_vyd * ffy * sd) / m \
        - g_wd * lf * ffy * sd / iz
    g_iz = -g_wd * cache["omega_dot"] / iz
    g_vx += -g_vyd * omega
    g_vy += g_vxd * omega
    g_w += g_vxd * vy - g_vyd * vx

    # lateral forces
    g_af, g_ffz, g_bf, g_cf, g_df, g_ef, g_svf = _pacejka_vjp(
        g_ffy, cache["alpha_f"], ffz, bf, cf, df, ef, geom.fz0, cache["front"])
    g_ar, g_frz, g_br, g_cr, g_dr, g_er, g_svr = _pacejka_vjp(
        g_fry, cache["alpha_r"], frz, br, cr_, dr, er, geom.fz0, cache["rear"])

    # axle loads
    if mode.uses_load_transfer:
        g_shift = -g_ffz * cache["ffz_free"] + g_frz * cache["frz_free"]
        g_frx += g_shift * geom.hcg / L

    # slip angles
    g_shf = g_af.copy()
    g_shr = g_ar.copy()
    g_steer += g_af
    g_uf = -g_af / (1.0 + uf * uf)
    g_ur = g_ar / (1.0 + ur * ur)
    g_w += (g_uf * lf + g_ur * lr) / speed
    g_vy += (g_uf - g_ur) / speed
    g_speed = -(g_uf * uf + g_ur * ur) / speed
    speed_free = np.abs(vx) > V_EPS
    g_vx += g_speed * np.sign(vx) * speed_free

    # longitudinal force
    g_throttle = g_frx * (cm1 - cm2 * vx)
    g_cm1 = g_frx * throttle
    g_cm2 = -g_frx * vx * throttle
    g_cr0 = -g_frx
    g_cr2 = -g_frx * vx * vx
    g_vx += g_frx * (-cm2 * throttle - 2.0 * cr2 * vx)

    g_states = np.stack([g_vx, g_vy, g_w], axis=-1)
    g_controls = np.stack([g_throttle, g_steer], axis=-1)
    g_params = np.stack([
        g_bf, g_cf, g_df, g_ef,
        g_br, g_cr, g_dr, g_er,
        g_shf, g_svf, g_shr, g_svr,
        g_cm1, g_cm2, g_cr0, g_cr2,
        g_iz,
    ], axis=-1)
    return g_states, g_controls, g_params


def pose_batch(poses, states, dt: float):
    """Vectorized advance_pose; poses (..., 3), states (..., 3)."""
    poses = np.asarray(poses, dtype=float)
    states = np.asarray(states, dtype=float)
    x, y, theta = poses[..., 0], poses[..., 1], poses[..., 2]
    vx, vy, omega = states[..., 0], states[..., 1], states[..., 2]
    st, ct = np.sin(theta), np.cos(theta)
    return np.stack([
        x + dt * (vx * ct - vy * st),
        y + dt * (vx * st + vy * ct),
        wrap_angle(theta + dt * omega),
    ], axis=-1)


def pose_batch_vjp(poses, states, dt: float, g_next):
    """Reverse-mode companion of pose_batch; wrap has unit derivative."""
    poses = np.asarray(poses, dtype=float)
    states = np.asarray(states, dtype=float)
    theta = poses[..., 2]
    vx, vy = states[..., 0], states[..., 1]
    st, ct = np.sin(theta), np.cos(theta)
    g_next = np.asarray(g_next, dtype=float)
    gx, gy, gth = g_next[..., 0], g_next[..., 1], g_next[..., 2]
    g_theta = gth + dt * (gx * (-vx * st - vy * ct) + gy * (vx * ct - vy * st))
    g_poses = np.stack([gx, gy, g_theta], axis=-1)
    g_states = np.stack([
        dt * (gx * ct + gy * st),
        dt * (-gx * st + gy * ct),
        gth * dt,
    ], axis=-1)
    return g_poses, g_states


# ---------------------------------------------------------------------------
# scalar convenience wrappers


def simulate_step(state: BodyState, pose: Pose, control: ControlInput,
                  params: ModelParams, geom: VehicleGeometry, dt: float,
                  mode: PhysicsMode = PhysicsMode.FULL):
    """One integration step; returns (next_state, next_pose, trace).

    The pose advances with the pre-step velocities, so both integrations
    are explicit Euler with the same timestamp convention.
    """
    ns, tr = step_batch(state.as_array(), control.as_array(),
                        params.to_vector(), geom, dt, mode)
    next_pose = advance_pose(pose, state, dt)
    next_state = BodyState.from_array(ns)
    trace = ForceTrace(*(float(v) for v in tr))
    return next_state, next_pose, trace


def rollout(state: BodyState, pose: Pose, controls, params: ModelParams,
            geom: VehicleGeometry, dt: float,
            mode: PhysicsMode = PhysicsMode.FULL) -> Trajectory:
    """Apply simulate_step over a control sequence.

    controls is an (N, 2) array or a sequence of ControlInput.  Raises
    DivergedError (carrying the step index) as soon as any state component
    leaves [-DIVERGENCE_LIMIT, DIVERGENCE_LIMIT].
    """
    arr = np.asarray([c.as_array() if isinstance(c, ControlInput) else c
                      for c in controls], dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("controls must have shape (N, 2)")
    n = arr.shape[0]
    pvec = params.to_vector()
    states = np.empty((n + 1, 3))
    poses = np.empty((n + 1, 3))
    forces = np.empty((n, 7))
    sv = state.as_array()
    pv = pose.as_array()
    states[0], poses[0] = sv, pv
    for k in range(n):
        ns, tr = step_batch(sv, arr[k], pvec, geom, dt, mode)
        pv = pose_batch(pv, sv, dt)
        sv = ns
        states[k + 1], poses[k + 1], forces[k] = sv, pv, tr
        if not np.all(np.abs(sv) <= DIVERGENCE_LIMIT):
            raise DivergedError(k)
    return Trajectory(states=states, poses=poses, forces=forces)
