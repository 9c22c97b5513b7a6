"""Multi-jump trajectory problem: rollout, constraint residuals, gradients.

A plan is N ballistic foot arcs chained through landing points.  Jump n is
described by its flight time t[n], takeoff speed v[n] and takeoff angle
theta[n].  Takeoff happens from the previous landing point; the foot path is
the hip arc shifted by the posture-change offsets of the leg, so landings
recurse as

    x[n] = x[n-1] + c_xe(theta[n]) + v[n] cos(theta[n]) t[n]
    z[n] = z[n-1] + c_ze(theta[n]) + v[n] sin(theta[n]) t[n] - g t[n]^2 / 2

Which side of each obstacle every landing falls on is a discrete choice,
carried by one pair of 0/1 flags per (jump, obstacle): front_flags[n, k] is 1
once the landing sits past the obstacle's front edge, back_flags[n, k] once
past its back edge.  With those flags fixed, all constraints are smooth in
(t, v, theta).

Residual blocks (each reported as "<= 0 is satisfied" for inequalities,
"= 0" for equalities):

    target          landing N must hit the commanded target x_t (equality)
    landing_height  landing height must equal the terrain implied by the
                    flags (equality)
    interval_sides  landings lie on the flag-consistent side of every edge
    edge_margin     landings keep half the horizontal margin to every edge
    clearance       foot clears crossed fronts, foot and knee clear crossed backs,
                    both by the vertical margin
    restricted      landings avoid restricted ground spans
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..leg import LegParams, lower_limb_flight_angle
from ..terrain import Obstacle, Parkour


class PlannerError(ValueError):
    """Invalid planner inputs."""


class NoForwardProgress(PlannerError):
    """Horizontal takeoff speed is not positive."""


@dataclass(frozen=True)
class Limits:
    """Box bounds on per-jump flight time [s], speed [m/s], angle [rad]."""

    t_min: float = 0.1
    t_max: float = 2.0
    v_min: float = 0.5
    v_max: float = 3.5
    theta_min: float = math.radians(45.0)
    theta_max: float = math.radians(85.0)

    def __post_init__(self) -> None:
        if not 0.0 < self.t_min < self.t_max:
            raise PlannerError("need 0 < t_min < t_max")
        if not 0.0 < self.v_min < self.v_max:
            raise PlannerError("need 0 < v_min < v_max")
        # theta_max < 90 deg keeps horizontal takeoff speed positive.
        if not 0.0 < self.theta_min < self.theta_max < 0.5 * math.pi:
            raise PlannerError("need 0 < theta_min < theta_max < pi/2")

    def lower(self, n: int) -> np.ndarray:
        return np.concatenate([
            np.full(n, self.t_min), np.full(n, self.v_min), np.full(n, self.theta_min)
        ])

    def upper(self, n: int) -> np.ndarray:
        return np.concatenate([
            np.full(n, self.t_max), np.full(n, self.v_max), np.full(n, self.theta_max)
        ])


@dataclass
class DecisionVars:
    """Stacked per-jump variables; arrays of equal length N."""

    t: np.ndarray
    v: np.ndarray
    theta: np.ndarray

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        if not (self.t.shape == self.v.shape == self.theta.shape and self.t.ndim == 1):
            raise PlannerError("t, v, theta must be 1-d arrays of equal length")

    @property
    def n_jumps(self) -> int:
        return self.t.shape[0]

    def pack(self) -> np.ndarray:
        return np.concatenate([self.t, self.v, self.theta])

    @staticmethod
    def unpack(u: np.ndarray) -> "DecisionVars":
        n = u.shape[0] // 3
        return DecisionVars(u[:n].copy(), u[n:2 * n].copy(), u[2 * n:].copy())


@dataclass
class BinaryAssignment:
    """Per-(jump, obstacle) side flags; 1 once the landing is past the edge."""

    front_flags: np.ndarray  # (N, K)
    back_flags: np.ndarray   # (N, K)

    def __post_init__(self) -> None:
        self.front_flags = np.asarray(self.front_flags, dtype=int)
        self.back_flags = np.asarray(self.back_flags, dtype=int)
        if self.front_flags.shape != self.back_flags.shape or self.front_flags.ndim != 2:
            raise PlannerError("flag arrays must share shape (N, K)")
        for name, flags in (("front", self.front_flags), ("back", self.back_flags)):
            if not np.isin(flags, (0, 1)).all():
                raise PlannerError(f"{name} flags must be 0 or 1")
            if flags.shape[0] > 1 and (np.diff(flags, axis=0) < 0).any():
                raise PlannerError(f"{name} flags must be non-decreasing over jumps")
        # a landing cannot be past the back but not past the front
        if (self.back_flags > self.front_flags).any():
            raise PlannerError("back flag set without front flag")

    @property
    def n_jumps(self) -> int:
        return self.front_flags.shape[0]

    @property
    def n_obstacles(self) -> int:
        return self.front_flags.shape[1]

    def implied_heights(self, heights: np.ndarray) -> np.ndarray:
        """Terrain height at each landing: on obstacle k iff past its front only."""
        on_top = self.front_flags - self.back_flags  # (N, K), entries 0/1
        return on_top @ np.asarray(heights, dtype=float)

    def crossings(self, initial_front: np.ndarray | None = None,
                  initial_back: np.ndarray | None = None,
                  ) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
        """(jump, obstacle) pairs whose front/back edge is crossed by that jump.

        The initial flag rows give the stance's side of each edge; edges the
        stance is already past produce no crossing for landings beyond them.
        """
        fronts, backs = [], []
        n, k = self.front_flags.shape
        prev_f = np.zeros(k, dtype=int) if initial_front is None else initial_front
        prev_b = np.zeros(k, dtype=int) if initial_back is None else initial_back
        for i in range(n):
            for j in np.nonzero(self.front_flags[i] > prev_f)[0]:
                fronts.append((i, int(j)))
            for j in np.nonzero(self.back_flags[i] > prev_b)[0]:
                backs.append((i, int(j)))
            prev_f, prev_b = self.front_flags[i], self.back_flags[i]
        return fronts, backs


@dataclass(frozen=True)
class OffsetModel:
    """Leg constants folded into the vectorized arc equations."""

    r_t: float        # takeoff extension
    rf_cos: float     # r_f cos(theta_f)
    rf_sin: float     # r_f sin(theta_f)
    knee_dx: float    # l2 cos(alpha_f), knee trails the foot by this much
    knee_dz: float    # l2 sin(alpha_f), knee rides above the foot by this much
    g: float

    @staticmethod
    def from_params(params: LegParams) -> "OffsetModel":
        alpha_f = lower_limb_flight_angle(params)
        return OffsetModel(
            r_t=params.takeoff_extension,
            rf_cos=params.flight_extension * math.cos(params.flight_angle),
            rf_sin=params.flight_extension * math.sin(params.flight_angle),
            knee_dx=params.l2 * math.cos(alpha_f),
            knee_dz=params.l2 * math.sin(alpha_f),
            g=params.gravity,
        )

    def foot_offsets(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (self.r_t * np.cos(theta) - self.rf_cos,
                self.r_t * np.sin(theta) - self.rf_sin)


def velocity_components(v: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical takeoff velocity."""
    v = np.asarray(v, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return v * np.cos(theta), v * np.sin(theta)


_TRIL_CACHE: dict[int, np.ndarray] = {}


def _tril_ones(n: int) -> np.ndarray:
    got = _TRIL_CACHE.get(n)
    if got is None:
        got = np.tril(np.ones((n, n)))
        got.setflags(write=False)
        _TRIL_CACHE[n] = got
    return got


class Trajectory:
    """Landing points of a jump chain plus their Jacobians.

    Variables are stacked u = [t, v, theta].  Landing n accumulates the
    per-jump displacements of jumps 0..n, so each Jacobian row is a prefix
    sum of per-jump partials (lower-triangular structure).
    """

    def __init__(self, model: OffsetModel, x_s: float, z_s: float,
                 t: np.ndarray, v: np.ndarray, theta: np.ndarray,
                 with_jac: bool = False) -> None:
        n = t.shape[0]
        self.n = n
        self.model = model
        self.x_s = x_s
        self.z_s = z_s
        self.t, self.v, self.theta = t, v, theta
        self.cos_th = np.cos(theta)
        self.sin_th = np.sin(theta)
        self.vx = v * self.cos_th
        self.vz = v * self.sin_th
        g = model.g
        self.c_xe = model.r_t * self.cos_th - model.rf_cos
        self.c_ze = model.r_t * self.sin_th - model.rf_sin
        self.c_xk = self.c_xe - model.knee_dx
        self.c_zk = self.c_ze + model.knee_dz
        dx = self.c_xe + self.vx * t
        dz = self.c_ze + self.vz * t - 0.5 * g * t * t
        self.x = x_s + np.cumsum(dx)
        self.z = z_s + np.cumsum(dz)

        self.jac_x: np.ndarray | None = None
        self.jac_z: np.ndarray | None = None
        if with_jac:
            tri = _tril_ones(n)
            # per-jump partials of the displacement of jump j
            dxe_dth = -model.r_t * self.sin_th
            dze_dth = model.r_t * self.cos_th
            jx = np.empty((n, 3 * n))
            jz = np.empty((n, 3 * n))
            jx[:, :n] = tri * self.vx
            jx[:, n:2 * n] = tri * (self.cos_th * t)
            jx[:, 2 * n:] = tri * (dxe_dth - self.vz * t)
            jz[:, :n] = tri * (self.vz - g * t)
            jz[:, n:2 * n] = tri * (self.sin_th * t)
            jz[:, 2 * n:] = tri * (dze_dth + self.vx * t)
            self.jac_x = jx
            self.jac_z = jz

    def prev_x(self, i: int) -> float:
        return self.x_s if i == 0 else float(self.x[i - 1])

    def prev_z(self, i: int) -> float:
        return self.z_s if i == 0 else float(self.z[i - 1])

    def prev_jac_x(self, i: int) -> np.ndarray:
        assert self.jac_x is not None
        return np.zeros(3 * self.n) if i == 0 else self.jac_x[i - 1]

    def prev_jac_z(self, i: int) -> np.ndarray:
        assert self.jac_z is not None
        return np.zeros(3 * self.n) if i == 0 else self.jac_z[i - 1]

    def edge_pass(self, i: int, edge_x: float, knee: bool) -> tuple[float, float]:
        """(time, height) of the tracked point passing x = edge_x during jump i.

        The tracked point is the foot (knee=False) or the knee (knee=True);
        the knee trails the foot by a constant offset in flight.  The arc is
        extrapolated outside [0, t_i]; callers multiply by the crossing flag.
        """
        if self.vx[i] <= 0.0:
            raise NoForwardProgress(f"jump {i} has v_x = {self.vx[i]}")
        cx = self.c_xk[i] if knee else self.c_xe[i]
        cz = self.c_zk[i] if knee else self.c_ze[i]
        tau = (edge_x - self.prev_x(i) - cx) / self.vx[i]
        height = self.prev_z(i) + cz + self.vz[i] * tau - 0.5 * self.model.g * tau * tau
        return tau, height

    def edge_pass_jac(self, i: int, edge_x: float, knee: bool) -> tuple[float, float, np.ndarray]:
        """edge_pass plus the gradient of the pass height w.r.t. u."""
        n = self.n
        tau, height = self.edge_pass(i, edge_x, knee)
        g = self.model.g
        vdrop = self.vz[i] - g * tau  # vertical speed at the pass
        grad = self.prev_jac_z(i) + vdrop * (-1.0 / self.vx[i]) * self.prev_jac_x(i)
        # dtau/dv = -tau / v;  dtau/dtheta = (r_t + tau v) sin(theta) / vx
        dtau_dv = -tau / self.v[i]
        dtau_dth = (self.model.r_t + tau * self.v[i]) * self.sin_th[i] / self.vx[i]
        grad = grad.copy()
        grad[n + i] += self.sin_th[i] * tau + vdrop * dtau_dv
        grad[2 * n + i] += (self.model.r_t * self.cos_th[i]
                            + self.vx[i] * tau + vdrop * dtau_dth)
        return tau, height, grad


def rollout(params: LegParams, x_s: float, z_s: float, dvars: DecisionVars) -> tuple[np.ndarray, np.ndarray]:
    """Landing points (x[n], z[n]) of the jump chain from (x_s, z_s)."""
    model = OffsetModel.from_params(params)
    traj = Trajectory(model, x_s, z_s, dvars.t, dvars.v, dvars.theta)
    return traj.x, traj.z


@dataclass(frozen=True)
class ClearanceInfo:
    """Pass times/heights of the foot over a front edge and knee over a back edge."""

    t_front: float
    z_front_foot: float
    t_back: float
    z_back_knee: float


def clearance_heights(params: LegParams, takeoff_x: float, takeoff_z: float,
                      v: float, theta: float, obstacle: Obstacle) -> ClearanceInfo:
    """Where the foot passes the obstacle front and the knee passes its back.

    The collision-critical point at the front is the foot (lowest leading
    point of the flight posture); at the back it is the trailing knee.
    """
    model = OffsetModel.from_params(params)
    traj = Trajectory(model, takeoff_x, takeoff_z,
                      np.array([1.0]), np.array([float(v)]), np.array([float(theta)]))
    t_f, z_f = traj.edge_pass(0, obstacle.front, knee=False)
    t_b, z_b = traj.edge_pass(0, obstacle.back, knee=True)
    return ClearanceInfo(t_f, z_f, t_b, z_b)


@dataclass
class ResidualReport:
    """Constraint residuals by block; inequalities satisfied when <= 0."""

    target: np.ndarray          # (1,) equality
    landing_height: np.ndarray  # (N,) equality
    interval_sides: np.ndarray  # (N, K, 4) inequality
    edge_margin: np.ndarray     # (N, K, 2) inequality
    clearance: np.ndarray       # (N, K, 3) inequality
    restricted: np.ndarray      # (N, M) inequality

    EQUALITIES = ("target", "landing_height")
    INEQUALITIES = ("interval_sides", "edge_margin", "clearance", "restricted")

    @property
    def max_violation(self) -> float:
        worst = 0.0
        for name in self.EQUALITIES:
            block = getattr(self, name)
            if block.size:
                worst = max(worst, float(np.abs(block).max()))
        for name in self.INEQUALITIES:
            block = getattr(self, name)
            if block.size:
                worst = max(worst, float(block.max()))
        return worst

    def blocks(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name)
                for name in self.EQUALITIES + self.INEQUALITIES}


def _course_arrays(parkour: Parkour) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    fronts = np.array([o.front for o in parkour.obstacles], dtype=float)
    backs = np.array([o.back for o in parkour.obstacles], dtype=float)
    heights = np.array([o.height for o in parkour.obstacles], dtype=float)
    area_lo = np.array([a.start for a in parkour.restricted], dtype=float)
    area_hi = np.array([a.end for a in parkour.restricted], dtype=float)
    return fronts, backs, heights, area_lo, area_hi


def constraint_residuals(parkour: Parkour, params: LegParams,
                         x_s: float, z_s: float, x_t: float,
                         dvars: DecisionVars, assignment: BinaryAssignment) -> ResidualReport:
    """Evaluate every constraint block at the given variables and side flags."""
    n = dvars.n_jumps
    fronts, backs, heights, area_lo, area_hi = _course_arrays(parkour)
    k = fronts.shape[0]
    if assignment.n_jumps != n or assignment.n_obstacles != k:
        raise PlannerError(
            f"assignment shape {assignment.front_flags.shape} does not match "
            f"N={n}, K={k}")
    model = OffsetModel.from_params(params)
    traj = Trajectory(model, x_s, z_s, dvars.t, dvars.v, dvars.theta)
    x, z = traj.x, traj.z

    target = np.array([x_t - (x[-1] if n else x_s)])
    landing_height = z - assignment.implied_heights(heights) if n else np.zeros(0)

    fa = assignment.front_flags.astype(float)
    fb = assignment.back_flags.astype(float)
    interval_sides = np.zeros((n, k, 4))
    edge_margin = np.zeros((n, k, 2))
    clearance = np.zeros((n, k, 3))
    if n and k:
        dx_front = x[:, None] - fronts[None, :]
        dx_back = x[:, None] - backs[None, :]
        interval_sides[:, :, 0] = fa * (-dx_front)
        interval_sides[:, :, 1] = (1.0 - fa) * dx_front
        interval_sides[:, :, 2] = fb * (-dx_back)
        interval_sides[:, :, 3] = (1.0 - fb) * dx_back
        half = 0.5 * parkour.margin_h
        edge_margin[:, :, 0] = half - np.abs(dx_front)
        edge_margin[:, :, 1] = half - np.abs(dx_back)
        # crossings are flag flips relative to the stance's side of each edge
        init_f = (x_s > fronts).astype(float)
        init_b = (x_s > backs).astype(float)
        flip_f = np.maximum(np.diff(np.vstack([init_f, fa]), axis=0), 0.0)
        flip_b = np.maximum(np.diff(np.vstack([init_b, fb]), axis=0), 0.0)
        for i in range(n):
            for j in range(k):
                if flip_f[i, j]:
                    _, h_pass = traj.edge_pass(i, fronts[j], knee=False)
                    clearance[i, j, 0] = (heights[j] + parkour.margin_v - h_pass) * flip_f[i, j]
                if flip_b[i, j]:
                    _, h_pass = traj.edge_pass(i, backs[j], knee=True)
                    clearance[i, j, 1] = (heights[j] + parkour.margin_v - h_pass) * flip_b[i, j]
                    # foot above the back corner as well: pins the concave
                    # overflight at both ends so it cannot sag onto the top
                    _, h_foot = traj.edge_pass(i, backs[j], knee=False)
                    clearance[i, j, 2] = (heights[j] + parkour.margin_v - h_foot) * flip_b[i, j]

    m = area_lo.shape[0]
    restricted = np.zeros((n, m))
    if n and m:
        centers = 0.5 * (area_lo + area_hi)
        half_w = 0.5 * (area_hi - area_lo)
        restricted = half_w[None, :] - np.abs(x[:, None] - centers[None, :])

    return ResidualReport(target, landing_height, interval_sides,
                          edge_margin, clearance, restricted)


def residual_jacobians(parkour: Parkour, params: LegParams,
                       x_s: float, z_s: float, x_t: float,
                       dvars: DecisionVars, assignment: BinaryAssignment
                       ) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-block (values, jacobian) pairs; jacobians are (rows, 3N) over u = [t, v, theta].

    Blocks match :func:`constraint_residuals` flattened in C order.  The
    absolute values in edge_margin/restricted use their one-sided slopes at
    kinks (sign convention of numpy.sign at zero).
    """
    report = constraint_residuals(parkour, params, x_s, z_s, x_t, dvars, assignment)
    n = dvars.n_jumps
    fronts, backs, heights, area_lo, area_hi = _course_arrays(parkour)
    k = fronts.shape[0]
    model = OffsetModel.from_params(params)
    traj = Trajectory(model, x_s, z_s, dvars.t, dvars.v, dvars.theta, with_jac=True)
    assert traj.jac_x is not None and traj.jac_z is not None
    x = traj.x
    nu = 3 * n

    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    jac_target = -traj.jac_x[-1:] if n else np.zeros((1, nu))
    out["target"] = (report.target, jac_target)
    out["landing_height"] = (report.landing_height, traj.jac_z.copy() if n else np.zeros((0, nu)))

    fa = assignment.front_flags.astype(float)
    fb = assignment.back_flags.astype(float)
    j_sides = np.zeros((n, k, 4, nu))
    j_margin = np.zeros((n, k, 2, nu))
    j_clear = np.zeros((n, k, 3, nu))
    if n and k:
        for i in range(n):
            jx = traj.jac_x[i]
            for j in range(k):
                j_sides[i, j, 0] = -fa[i, j] * jx
                j_sides[i, j, 1] = (1.0 - fa[i, j]) * jx
                j_sides[i, j, 2] = -fb[i, j] * jx
                j_sides[i, j, 3] = (1.0 - fb[i, j]) * jx
                j_margin[i, j, 0] = -np.sign(x[i] - fronts[j]) * jx
                j_margin[i, j, 1] = -np.sign(x[i] - backs[j]) * jx
        init_f = (x_s > fronts).astype(float)
        init_b = (x_s > backs).astype(float)
        flip_f = np.maximum(np.diff(np.vstack([init_f, fa]), axis=0), 0.0)
        flip_b = np.maximum(np.diff(np.vstack([init_b, fb]), axis=0), 0.0)
        for i in range(n):
            for j in range(k):
                if flip_f[i, j]:
                    _, _, grad = traj.edge_pass_jac(i, fronts[j], knee=False)
                    j_clear[i, j, 0] = -flip_f[i, j] * grad
                if flip_b[i, j]:
                    _, _, grad = traj.edge_pass_jac(i, backs[j], knee=True)
                    j_clear[i, j, 1] = -flip_b[i, j] * grad
                    _, _, grad_f = traj.edge_pass_jac(i, backs[j], knee=False)
                    j_clear[i, j, 2] = -flip_b[i, j] * grad_f

    out["interval_sides"] = (report.interval_sides, j_sides.reshape(n * k * 4, nu) if n and k else np.zeros((0, nu)))
    out["edge_margin"] = (report.edge_margin, j_margin.reshape(n * k * 2, nu) if n and k else np.zeros((0, nu)))
    out["clearance"] = (report.clearance, j_clear.reshape(n * k * 3, nu) if n and k else np.zeros((0, nu)))

    m = area_lo.shape[0]
    j_restr = np.zeros((n, m, nu))
    if n and m:
        centers = 0.5 * (area_lo + area_hi)
        for i in range(n):
            for j in range(m):
                j_restr[i, j] = -np.sign(x[i] - centers[j]) * traj.jac_x[i]
    out["restricted"] = (report.restricted, j_restr.reshape(n * m, nu) if n and m else np.zeros((0, nu)))
    return out
