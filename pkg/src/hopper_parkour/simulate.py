"""Phase-machine hopper simulator: plans executed one jump at a time.

The hip is a ballistic point mass; the leg is rendered kinematically under
it (setpoint tracking with a first-order lag), so the physics that decide
where the machine lands are exactly the planner's model: release the hip at
the staged extension/angle with the corrected speed, fly the closed-form
parabola, touch down where the foot path meets the terrain.  Everything
between landing and the next release -- crouching, aiming, thrust buildup --
changes logs and rendering, never the arc.

Grounded control walks the cycle Absorption -> Reposition -> Staging ->
Exertion; a planning request is issued exactly once per stance, at
Reposition entry, and its result is consumed no earlier than the tick
boundary (planning may run on a separate thread).  If no plan is ready --
solver still busy, or the step came back infeasible -- the leg holds in
Staging and retries with a fresh terrain snapshot.  Exertion accelerates the
hip along the staged line with the constant thrust law and releases exactly
at the takeoff extension, sub-tick, so a zero-noise episode reproduces the
planned landings to solver tolerance.

Contact is segment-based: each flight tick sweeps the foot (and knee) from
the previous sample to the next and classifies the earliest crossing --
landing on a top surface, foot against a block front, or knee against a
block back.  Faces end the episode; landings inside a margin band or a
restricted area are logged and survived.
"""

from __future__ import annotations

import json
import math
import queue
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .leg import (
    JointState,
    LegParams,
    exertion_force,
    exertion_velocity,
    flight_config,
    inverse_kinematics,
    joint_torques,
)
from .planner import (
    HorizonConfig,
    Infeasible,
    JumpSpec,
    Limits,
    RecedingPlanner,
    SolverConfig,
    StepResult,
)
from .terrain import EnvironmentUpdate, Parkour, apply_update, knee_shadow, locate


class Phase(str, Enum):
    INITIALIZATION = "initialization"
    FLIGHT = "flight"
    ABSORPTION = "absorption"
    REPOSITION = "reposition"
    STAGING = "staging"
    EXERTION = "exertion"


class WrongPhase(RuntimeError):
    """Command valid only in another phase (e.g. impulse while grounded)."""


@dataclass(frozen=True)
class PhaseGains:
    """Per-phase setpoint tracking and nominal dwell times.

    The lag constant renders joint-space PD tracking as its closed-loop
    effect; thrust is feedforward and does not pass through it.
    """

    absorption_s: float = 0.15
    reposition_s: float = 0.20
    staging_s: float = 0.10
    initialization_s: float = 0.10
    tracking_lag_s: float = 0.04  # first-order joint-tracking time constant
    crouch_fraction: float = 0.8  # exertion start extension, as a share of r_f


@dataclass(frozen=True)
class NoiseModel:
    """Per-jump execution jitter, sampled once at each Exertion entry."""

    sigma_v: float = 0.0       # takeoff speed [m/s]
    sigma_theta: float = 0.0   # takeoff angle [rad]


@dataclass(frozen=True)
class DisturbanceEvent:
    """Mid-flight velocity impulse; trigger by sim time or by jump index."""

    dvx: float
    dvz: float
    at_time: float | None = None
    at_jump: int | None = None   # 0-based jump whose flight takes the hit
    frac: float = 0.5            # fraction of the planned flight time elapsed


@dataclass(frozen=True)
class TerrainEvent:
    """Scheduled course edit; takes planning effect at the next snapshot."""

    update: EnvironmentUpdate
    at_time: float


@dataclass
class SimState:
    time: float
    phase: Phase
    hip: tuple[float, float]
    hip_vel: tuple[float, float]
    joints: JointState
    anchor: tuple[float, float] | None   # grounded foot point, None in flight


@dataclass(frozen=True)
class ContactEvent:
    kind: str              # landing | front_collision | back_collision
    point: tuple[float, float]
    obstacle: str | None = None
    margin_violation: str | None = None  # edge_band | restricted, landings only


@dataclass
class JumpRecord:
    index: int
    planned: JumpSpec
    takeoff_time: float
    v_c: float
    theta_c: float
    target: float
    horizon: int
    mode: str                 # warm | cold
    setup_time: float
    solve_time: float
    loop_time: float
    nodes: int
    landing_time: float | None = None
    actual_landing: tuple[float, float] | None = None
    margin_violation: str | None = None

    @property
    def landing_error(self) -> float | None:
        if self.actual_landing is None:
            return None
        return abs(self.actual_landing[0] - self.planned.landing[0])


@dataclass
class TickSample:
    time: float
    phase: str
    hip: tuple[float, float]
    hip_vel: tuple[float, float]
    foot: tuple[float, float]
    knee: tuple[float, float]
    torque: tuple[float, float] | None = None  # thrust feedforward, exertion only


@dataclass
class EpisodeLog:
    outcome: str = "running"   # success | collision | timeout
    jumps: list[JumpRecord] = field(default_factory=list)
    ticks: list[TickSample] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    final_x: float = 0.0
    duration: float = 0.0

    def event(self, t: float, kind: str, **detail) -> None:
        self.events.append({"t": round(t, 6), "kind": kind, **detail})

    def to_jsonl(self) -> str:
        lines = [json.dumps({"record": "outcome", "outcome": self.outcome,
                             "final_x": self.final_x, "duration": self.duration,
                             "jumps": len(self.jumps)})]
        for j in self.jumps:
            lines.append(json.dumps({
                "record": "jump", "index": j.index,
                "planned": {"t": j.planned.t, "v": j.planned.v,
                            "theta": j.planned.theta,
                            "takeoff": list(j.planned.takeoff),
                            "landing": list(j.planned.landing)},
                "takeoff_time": j.takeoff_time, "v_c": j.v_c,
                "theta_c": j.theta_c, "target": j.target,
                "horizon": j.horizon, "mode": j.mode,
                "setup_time": j.setup_time, "solve_time": j.solve_time,
                "loop_time": j.loop_time, "nodes": j.nodes,
                "landing_time": j.landing_time,
                "actual_landing": (list(j.actual_landing)
                                   if j.actual_landing else None),
                "margin_violation": j.margin_violation}))
        for e in self.events:
            lines.append(json.dumps({"record": "event", **e}))
        # one record per line so logs stream and partial files stay parseable
        for s in self.ticks:
            rec = {"record": "tick", "t": round(s.time, 6), "phase": s.phase,
                   "hip": [s.hip[0], s.hip[1]],
                   "vel": [s.hip_vel[0], s.hip_vel[1]],
                   "foot": [s.foot[0], s.foot[1]],
                   "knee": [s.knee[0], s.knee[1]]}
            if s.torque is not None:
                rec["torque"] = [s.torque[0], s.torque[1]]
            lines.append(json.dumps(rec))
        return "\n".join(lines) + "\n"


# --- contact detection --------------------------------------------------------


def detect_contact(parkour: Parkour, foot0: tuple[float, float],
                   foot1: tuple[float, float], knee0: tuple[float, float],
                   knee1: tuple[float, float]) -> ContactEvent | None:
    """Earliest terrain contact along one tick's swept foot/knee segments.

    The foot segment is checked against block fronts and top/ground
    surfaces, the knee segment against block backs (the knee trails the
    foot, so it is the last point to clear a back edge).  Returns None when
    the tick stays airborne.
    """
    hits: list[tuple[float, ContactEvent]] = []
    fx0, fz0 = foot0
    fx1, fz1 = foot1
    dx, dz = fx1 - fx0, fz1 - fz0

    for obs in parkour.obstacles:
        # foot through the front face (crossing it forward, below the top)
        if fx0 < obs.front <= fx1 and dx > 0.0:
            s = (obs.front - fx0) / dx
            z_at = fz0 + s * dz
            if z_at < obs.height - 1e-12:
                hits.append((s, ContactEvent("front_collision",
                                             (obs.front, z_at), obs.uid)))
        # foot drifting backward into the back face (post-disturbance only)
        if fx1 <= obs.back < fx0 and dx < 0.0:
            s = (obs.back - fx0) / dx
            z_at = fz0 + s * dz
            if z_at < obs.height - 1e-12:
                hits.append((s, ContactEvent("back_collision",
                                             (obs.back, z_at), obs.uid)))
        # knee through the back face (the knee trails, so it clears last)
        kx0, kz0 = knee0
        kx1, kz1 = knee1
        kdx = kx1 - kx0
        if kx0 < obs.back <= kx1 and kdx > 0.0:
            s = (obs.back - kx0) / kdx
            z_at = kz0 + s * (kz1 - kz0)
            if z_at < obs.height - 1e-12:
                hits.append((s, ContactEvent("back_collision",
                                             (obs.back, z_at), obs.uid)))

    # landing: split the segment at face abscissae so ground height is
    # constant on each piece, then look for a descending surface crossing
    cuts = [0.0, 1.0]
    if abs(dx) > 0.0:
        x_lo, x_hi = (fx0, fx1) if dx > 0.0 else (fx1, fx0)
        for obs in parkour.obstacles:
            for edge in (obs.front, obs.back):
                if x_lo < edge < x_hi:
                    cuts.append((edge - fx0) / dx)
    cuts = sorted(set(cuts))
    for a, b in zip(cuts, cuts[1:]):
        mid_x = fx0 + 0.5 * (a + b) * dx
        h = locate(parkour, min(max(mid_x, parkour.x_min), parkour.x_max))
        za = fz0 + a * dz
        zb = fz0 + b * dz
        if za > h >= zb and dz < 0.0:
            s = a + (h - za) / (zb - za) * (b - a)
            x_land = fx0 + s * dx
            hits.append((s, ContactEvent("landing", (x_land, h))))
            break

    if not hits:
        return None
    hits.sort(key=lambda it: it[0])
    return hits[0][1]


def classify_landing(parkour: Parkour, x: float,
                     knee_dx: float = 0.0, knee_dz: float = 0.0) -> str | None:
    """Margin violation kind for a landing abscissa, None when clean.

    Region boundaries are legal landing spots (plans sit exactly on them
    when the window constraint is active), so the test is strict-interior
    with a small slack for solver roundoff.
    """
    half = 0.5 * parkour.margin_h
    for area in parkour.restricted:
        if area.start + 1e-6 < x < area.end - 1e-6:
            return "restricted"
    z = locate(parkour, min(max(x, parkour.x_min), parkour.x_max))
    for obs in parkour.obstacles:
        for edge in (obs.front, obs.back):
            if abs(x - edge) < half - 1e-6:
                return "edge_band"
        shadow = knee_shadow(obs.height, z, parkour.margin_v, knee_dx, knee_dz)
        if shadow > 0.0 and obs.back <= x < obs.back + half + shadow - 1e-6:
            return "knee_shadow"
    return None


# --- planning executors -------------------------------------------------------


class InlinePlanning:
    """Synchronous planning: the simulation clock pauses while solving.

    Keeps episodes bit-reproducible; wall times are still measured for the
    timing reports.
    """

    def __init__(self, planner: RecedingPlanner):
        self.planner = planner
        self._result: tuple[StepResult | Infeasible, float] | None = None

    def submit(self, parkour: Parkour, x_s: float, z_s: float, goal_x: float,
               version: int) -> None:
        t0 = time.perf_counter()
        step = self.planner.plan_step(parkour, x_s, z_s, goal_x, version)
        self._result = (step, time.perf_counter() - t0)

    def poll(self) -> tuple[StepResult | Infeasible, float] | None:
        out, self._result = self._result, None
        return out

    def close(self) -> None:
        pass


class ThreadedPlanning:
    """Planning on a worker thread; results picked up at tick boundaries."""

    def __init__(self, planner: RecedingPlanner):
        self.planner = planner
        self._requests: queue.Queue = queue.Queue()
        self._results: queue.Queue = queue.Queue()
        self._worker = threading.Thread(target=self._run, daemon=True)
        self._worker.start()

    def _run(self) -> None:
        while True:
            job = self._requests.get()
            if job is None:
                return
            parkour, x_s, z_s, goal_x, version = job
            t0 = time.perf_counter()
            step = self.planner.plan_step(parkour, x_s, z_s, goal_x, version)
            self._results.put((step, time.perf_counter() - t0))

    def submit(self, parkour: Parkour, x_s: float, z_s: float, goal_x: float,
               version: int) -> None:
        self._requests.put((parkour, x_s, z_s, goal_x, version))

    def poll(self) -> tuple[StepResult | Infeasible, float] | None:
        try:
            return self._results.get_nowait()
        except queue.Empty:
            return None

    def close(self) -> None:
        self._requests.put(None)


# --- the simulator ------------------------------------------------------------


@dataclass
class _FlightBase:
    """Closed-form ballistic reference; rebased on disturbances."""

    t0: float
    pos: tuple[float, float]
    vel: tuple[float, float]

    def at(self, t: float, g: float) -> tuple[tuple[float, float], tuple[float, float]]:
        tau = t - self.t0
        x = self.pos[0] + self.vel[0] * tau
        z = self.pos[1] + self.vel[1] * tau - 0.5 * g * tau * tau
        return (x, z), (self.vel[0], self.vel[1] - g * tau)


class Simulator:
    """Owns SimState and advances it tick by tick.

    One instance per episode; `planning` delivers StepResults requested at
    Reposition entry.  Commands arriving from a service layer go through
    `edit_terrain` / `disturb` between ticks.
    """

    def __init__(self, parkour: Parkour, leg: LegParams, limits: Limits,
                 horizon: HorizonConfig, planning, log: EpisodeLog,
                 gains: PhaseGains = PhaseGains(),
                 noise: NoiseModel = NoiseModel(),
                 rng: np.random.Generator | None = None,
                 goal_x: float = 0.0, goal_tolerance: float = 0.05,
                 start_x: float = 0.0, dt: float = 1.0 / 200.0):
        self.parkour = parkour
        self.leg = leg
        self.limits = limits
        self.horizon = horizon
        self.planning = planning
        self.log = log
        self.gains = gains
        self.noise = noise
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.goal_x = goal_x
        self.goal_tolerance = goal_tolerance
        self.dt = dt

        self.terrain_version = 0
        z0 = locate(parkour, start_x)
        self._flight_q, self._alpha_f = flight_config(leg)
        anchor = (start_x, z0)
        hip = self._hip_over(anchor, leg.flight_extension, leg.flight_angle)
        self.state = SimState(0.0, Phase.INITIALIZATION, hip, (0.0, 0.0),
                              self._ik(hip, anchor), anchor)
        self._phase_elapsed = 0.0
        self._hip_target = hip
        self._plan: tuple[StepResult, float] | None = None  # (step, loop wall time)
        self._requested = False
        self._last_torque: tuple[float, float] | None = None
        self._jump_index = 0
        self._active_jump: JumpRecord | None = None
        self._flight: _FlightBase | None = None
        self._prev_foot: tuple[float, float] | None = None
        self._prev_knee: tuple[float, float] | None = None
        # exertion line, set at entry: direction, speeds, stroke timing
        self._thrust: dict | None = None
        self.done: str | None = None

    # -- kinematic helpers ---------------------------------------------------

    @staticmethod
    def _hip_over(anchor: tuple[float, float], r: float, ang: float) -> tuple[float, float]:
        return (anchor[0] + r * math.cos(ang), anchor[1] + r * math.sin(ang))

    def _ik(self, hip: tuple[float, float], foot: tuple[float, float]) -> JointState:
        rel = (foot[0] - hip[0], foot[1] - hip[1])
        return inverse_kinematics(self.leg, rel)

    def _flight_points(self, hip: tuple[float, float]) -> tuple[tuple[float, float], tuple[float, float]]:
        """Foot and knee world positions in the flight posture."""
        th_f = self.leg.flight_angle
        foot = (hip[0] - self.leg.flight_extension * math.cos(th_f),
                hip[1] - self.leg.flight_extension * math.sin(th_f))
        knee = (foot[0] - self.leg.l2 * math.cos(self._alpha_f),
                foot[1] + self.leg.l2 * math.sin(self._alpha_f))
        return foot, knee

    def _crouch_extension(self) -> float:
        return self.gains.crouch_fraction * self.leg.flight_extension

    # -- external commands -----------------------------------------------------

    def edit_terrain(self, update: EnvironmentUpdate) -> int:
        """Apply a course edit now; planners see it at their next snapshot."""
        self.parkour = apply_update(self.parkour, update)
        self.terrain_version += 1
        self.log.event(self.state.time, "terrain_edit",
                       version=self.terrain_version,
                       update=type(update).__name__)
        return self.terrain_version

    def disturb(self, dvx: float, dvz: float) -> None:
        if self.state.phase is not Phase.FLIGHT or self._flight is None:
            raise WrongPhase("velocity impulse requires flight")
        pos, vel = self._flight.at(self.state.time, self.leg.gravity)
        self._flight = _FlightBase(self.state.time, pos,
                                   (vel[0] + dvx, vel[1] + dvz))
        self.log.event(self.state.time, "disturbance", dvx=dvx, dvz=dvz)

    # -- per-phase behavior ------------------------------------------------------

    def _enter(self, phase: Phase) -> None:
        self.state.phase = phase
        self._phase_elapsed = 0.0
        anchor = self.state.anchor
        if phase is Phase.ABSORPTION:
            assert anchor is not None
            self._hip_target = self._hip_over(anchor, self._crouch_extension(),
                                              self.leg.flight_angle)
        elif phase is Phase.REPOSITION:
            assert anchor is not None
            # one planning request per stance, on the freshest terrain
            self.planning.submit(self.parkour, anchor[0], anchor[1],
                                 self.goal_x, self.terrain_version)
            self._requested = True
        elif phase is Phase.EXERTION:
            assert anchor is not None and self._plan is not None
            step, loop_time = self._plan
            jump = step.plan.jumps[0]
            theta_c = jump.theta
            v_cmd = jump.v
            if self.noise.sigma_theta > 0.0:
                theta_c += float(self.rng.normal(0.0, self.noise.sigma_theta))
            if self.noise.sigma_v > 0.0:
                v_cmd += float(self.rng.normal(0.0, self.noise.sigma_v))
            v_c = exertion_velocity(v_cmd, jump.theta, theta_c)
            r_c = self._crouch_extension()
            d = self.leg.takeoff_extension - r_c
            self._thrust = {
                "dir": (math.cos(theta_c), math.sin(theta_c)),
                "accel": v_c * v_c / (2.0 * d),
                "duration": 2.0 * d / v_c,
                "r_c": r_c,
                "v_c": v_c,
                "force": exertion_force(self.leg.mass, v_c, d),
            }
            self._active_jump = JumpRecord(
                index=self._jump_index, planned=jump, takeoff_time=math.nan,
                v_c=v_c, theta_c=theta_c, target=step.target,
                horizon=step.plan.n_jumps, mode=step.mode,
                setup_time=step.setup_time, solve_time=step.solve_time,
                loop_time=loop_time, nodes=step.plan.stats.nodes)
            self._hip_target = self._hip_over(anchor, r_c, theta_c)
            self.state.hip = self._hip_target

    def _track_target(self) -> None:
        """First-order lag of the hip toward the phase setpoint (exact step)."""
        k = 1.0 - math.exp(-self.dt / self.gains.tracking_lag_s)
        hx, hz = self.state.hip
        tx, tz = self._hip_target
        self.state.hip = (hx + k * (tx - hx), hz + k * (tz - hz))
        self.state.hip_vel = (0.0, 0.0)
        anchor = self.state.anchor
        assert anchor is not None
        self.state.joints = self._ik(self.state.hip, anchor)

    def _release(self, t_release: float) -> None:
        """Switch to flight at the exact end of the stroke (sub-tick)."""
        assert self.state.anchor is not None and self._thrust is not None
        th = self._thrust
        anchor = self.state.anchor
        hip = self._hip_over(anchor, self.leg.takeoff_extension,
                             math.atan2(th["dir"][1], th["dir"][0]))
        vel = (th["v_c"] * th["dir"][0], th["v_c"] * th["dir"][1])
        self._flight = _FlightBase(t_release, hip, vel)
        if self._active_jump is not None:
            self._active_jump.takeoff_time = t_release
            self.log.jumps.append(self._active_jump)
        self.state.anchor = None
        self._plan = None
        self._thrust = None
        self._last_torque = None
        foot, knee = self._flight_points(hip)
        self._prev_foot, self._prev_knee = foot, knee
        self.state.phase = Phase.FLIGHT
        self._phase_elapsed = 0.0
        self._jump_index += 1

    def _land(self, contact: ContactEvent, t_land: float) -> None:
        self.state.anchor = contact.point
        violation = classify_landing(self.parkour, contact.point[0],
                                     self.leg.l2 * math.cos(self._alpha_f),
                                     self.leg.l2 * math.sin(self._alpha_f))
        if violation is not None:
            self.log.event(t_land, "margin_violation", violation=violation,
                           x=contact.point[0])
        rec = self._active_jump
        if rec is not None:
            rec.landing_time = t_land
            rec.actual_landing = contact.point
            rec.margin_violation = violation
        self._active_jump = None
        self._flight = None
        # place the hip on the flight posture over the new anchor before
        # absorption pulls it down
        self.state.hip = self._hip_over(contact.point, self.leg.flight_extension,
                                        self.leg.flight_angle)
        self.state.hip_vel = (0.0, 0.0)
        self._enter(Phase.ABSORPTION)

    def _refine_landing(self, h: float) -> tuple[float, tuple[float, float]] | None:
        """Exact instant the foot parabola reaches height h, within this tick."""
        assert self._flight is not None
        g = self.leg.gravity
        base = self._flight
        th_f = self.leg.flight_angle
        fz0 = base.pos[1] - self.leg.flight_extension * math.sin(th_f)
        vz = base.vel[1]
        # fz0 + vz*tau - g/2 tau^2 = h, descending root
        disc = vz * vz - 2.0 * g * (h - fz0)
        if disc < 0.0:
            return None
        tau = (vz + math.sqrt(disc)) / g
        t_land = base.t0 + tau
        x = base.pos[0] - self.leg.flight_extension * math.cos(th_f) + base.vel[0] * tau
        return t_land, (x, h)

    def tick(self) -> None:
        """Advance one step of 1/dt Hz; may end the episode via self.done."""
        if self.done is not None:
            return
        s = self.state
        t_next = s.time + self.dt

        if s.phase is Phase.FLIGHT:
            assert self._flight is not None
            hip, vel = self._flight.at(t_next, self.leg.gravity)
            foot, knee = self._flight_points(hip)
            prev_foot = self._prev_foot if self._prev_foot is not None else foot
            prev_knee = self._prev_knee if self._prev_knee is not None else knee
            contact = detect_contact(self.parkour, prev_foot, foot, prev_knee, knee)
            if contact is not None and contact.kind == "landing":
                t_land, point = t_next, contact.point
                refined = self._refine_landing(contact.point[1])
                if refined is not None:
                    t_ref, p_ref = refined
                    x_cl = min(max(p_ref[0], self.parkour.x_min), self.parkour.x_max)
                    # keep the chord hit if the exact root slid past a face
                    # edge onto a different surface level
                    if abs(locate(self.parkour, x_cl) - p_ref[1]) < 1e-9:
                        t_land = min(max(t_ref, s.time), t_next)
                        point = p_ref
                s.time = t_land
                self._land(replace(contact, point=point), t_land)
                return
            if contact is not None:
                s.time = t_next
                self.log.event(t_next, "collision", collision=contact.kind,
                               obstacle=contact.obstacle, x=contact.point[0],
                               z=contact.point[1])
                self.done = "collision"
                return
            self._prev_foot, self._prev_knee = foot, knee
            s.hip, s.hip_vel = hip, vel
            s.joints = self._flight_q
            s.time = t_next
            return

        if s.phase is Phase.EXERTION:
            th = self._thrust
            assert th is not None
            if self._phase_elapsed + self.dt >= th["duration"]:
                self._release(s.time + (th["duration"] - self._phase_elapsed))
                s.time = t_next
                # fly the remainder of this tick so the clock stays uniform
                hip, vel = self._flight.at(t_next, self.leg.gravity)
                foot, knee = self._flight_points(hip)
                self._prev_foot, self._prev_knee = foot, knee
                s.hip, s.hip_vel = hip, vel
                s.joints = self._flight_q
                return
            self._phase_elapsed += self.dt
            tau = self._phase_elapsed
            r = th["r_c"] + 0.5 * th["accel"] * tau * tau
            anchor = s.anchor
            assert anchor is not None
            s.hip = (anchor[0] + r * th["dir"][0], anchor[1] + r * th["dir"][1])
            speed = th["accel"] * tau
            s.hip_vel = (speed * th["dir"][0], speed * th["dir"][1])
            s.joints = self._ik(s.hip, anchor)
            # feedforward torque for the log (diagnostic, not integrated)
            lam = (th["force"] * th["dir"][0], th["force"] * th["dir"][1])
            self._last_torque = joint_torques(self.leg, s.joints, lam)
            s.time = t_next
            return

        # grounded setpoint phases
        self._phase_elapsed += self.dt
        self._track_target()
        s.time = t_next

        if s.phase is Phase.INITIALIZATION:
            if self._phase_elapsed >= self.gains.initialization_s:
                if self._at_goal():
                    self._succeed()
                    return
                self._enter(Phase.REPOSITION)
            return
        if s.phase is Phase.ABSORPTION:
            if self._phase_elapsed >= self.gains.absorption_s:
                if self._at_goal():
                    self._succeed()
                    return
                self._enter(Phase.REPOSITION)
            return
        if s.phase is Phase.REPOSITION:
            self._consume_plan()
            if self._phase_elapsed >= self.gains.reposition_s:
                self._enter(Phase.STAGING)
            return
        if s.phase is Phase.STAGING:
            self._consume_plan()
            if self._phase_elapsed >= self.gains.staging_s:
                if self._plan is not None:
                    self._enter(Phase.EXERTION)
                elif not self._requested:
                    # last answer was unusable; hold here and retry on a
                    # fresh snapshot after another staging period
                    anchor = s.anchor
                    assert anchor is not None
                    self.planning.submit(self.parkour, anchor[0], anchor[1],
                                         self.goal_x, self.terrain_version)
                    self._requested = True
                    self._phase_elapsed = 0.0
            return

    def _consume_plan(self) -> None:
        if not self._requested or self._plan is not None:
            return
        got = self.planning.poll()
        if got is None:
            return
        self._requested = False
        step, loop_time = got
        if isinstance(step, Infeasible):
            self.log.event(self.state.time, "infeasible", reason=step.reason)
            return
        self._plan = (step, loop_time)
        # aim the launch line at the fresh plan
        anchor = self.state.anchor
        if anchor is not None and self.state.phase in (Phase.REPOSITION, Phase.STAGING):
            self._hip_target = self._hip_over(anchor, self._crouch_extension(),
                                              step.plan.jumps[0].theta)

    def _at_goal(self) -> bool:
        anchor = self.state.anchor
        return (anchor is not None
                and abs(anchor[0] - self.goal_x) <= self.goal_tolerance)

    def _succeed(self) -> None:
        self.log.event(self.state.time, "goal_reached", x=self.state.anchor[0])
        self.done = "success"

    def sample(self) -> TickSample:
        s = self.state
        if s.phase is Phase.FLIGHT:
            foot, knee = self._flight_points(s.hip)
        else:
            anchor = s.anchor
            foot = anchor if anchor is not None else s.hip
            kx = s.hip[0] + self.leg.l1 * math.cos(s.joints.q1)
            kz = s.hip[1] + self.leg.l1 * math.sin(s.joints.q1)
            knee = (kx, kz)
        torque = self._last_torque if s.phase is Phase.EXERTION else None
        return TickSample(s.time, s.phase.value, s.hip, s.hip_vel, foot, knee,
                          torque)


def run_episode(parkour: Parkour, leg: LegParams, limits: Limits,
                horizon: HorizonConfig, goal_x: float, start_x: float = 0.0,
                solver: SolverConfig | None = None,
                gains: PhaseGains = PhaseGains(),
                noise: NoiseModel = NoiseModel(), seed: int = 0,
                disturbances: tuple[DisturbanceEvent, ...] = (),
                terrain_events: tuple[TerrainEvent, ...] = (),
                goal_tolerance: float = 0.05, max_ticks: int = 40000,
                threaded: bool = False, keep_ticks: bool = True) -> EpisodeLog:
    """Run one full episode and return its log.

    Inline planning (default) pauses the simulation clock while solving, so
    a fixed seed reproduces the episode tick for tick; threaded planning
    trades that for a live wall-clock loop.
    """
    planner = RecedingPlanner(leg, limits, horizon,
                              solver if solver is not None else SolverConfig())
    planning = (ThreadedPlanning if threaded else InlinePlanning)(planner)
    log = EpisodeLog()
    sim = Simulator(parkour, leg, limits, horizon, planning, log,
                    gains=gains, noise=noise,
                    rng=np.random.default_rng(seed), goal_x=goal_x,
                    goal_tolerance=goal_tolerance, start_x=start_x)
    pending_terrain = sorted(terrain_events, key=lambda e: e.at_time)
    pending_disturb = list(disturbances)
    try:
        for _ in range(max_ticks):
            while pending_terrain and pending_terrain[0].at_time <= sim.state.time:
                ev = pending_terrain.pop(0)
                try:
                    sim.edit_terrain(ev.update)
                except Exception as exc:  # rejected edits are logged, not fatal
                    log.event(sim.state.time, "edit_rejected", reason=str(exc))
            still_pending = []
            for ev in pending_disturb:
                due = False
                if ev.at_time is not None:
                    due = sim.state.time >= ev.at_time
                elif ev.at_jump is not None and sim.state.phase is Phase.FLIGHT:
                    flying = log.jumps[-1] if log.jumps else None
                    due = (flying is not None
                           and flying.index == ev.at_jump
                           and sim.state.time - flying.takeoff_time
                               >= ev.frac * flying.planned.t)
                if due:
                    try:
                        sim.disturb(ev.dvx, ev.dvz)
                    except WrongPhase:
                        # timed trigger caught the machine grounded
                        log.event(sim.state.time, "disturbance_rejected",
                                  reason="grounded")
                    continue
                still_pending.append(ev)
            pending_disturb = still_pending

            sim.tick()
            if keep_ticks:
                log.ticks.append(sim.sample())
            if sim.done is not None:
                break
        else:
            sim.done = "timeout"
            log.event(sim.state.time, "timeout")
    finally:
        planning.close()
    log.outcome = sim.done if sim.done is not None else "timeout"
    anchor = sim.state.anchor
    log.final_x = anchor[0] if anchor is not None else sim.state.hip[0]
    log.duration = sim.state.time
    return log
