"""Minimum-total-flight-time planning over discrete landing choices.

The discrete side of the problem (which side of every obstacle edge each
landing falls on) is searched as "which landing interval does each jump land
in".  Landing intervals are the maximal legal landing spans of the course
window, so a non-decreasing sequence of interval indices, ending in the
interval that contains the target, fixes all side flags; each leaf is then a
smooth windowed-chain program.

Search order is depth-first, expanding children in lower-bound order, with
incumbent pruning.  The lower bound for a node sums, per jump, the largest
of three admissible underestimates of single-jump flight time given the
minimal horizontal gap its interval assignment implies:

  * the flight-time floor t_min,
  * gap / (fastest horizontal speed), after granting the largest possible
    posture offset,
  * the ballistic time for covering that gap at the flattest angle, after
    granting the largest possible net rise (climbing shortens flight, so the
    allowance keeps the bound admissible on courses with obstacles).

Ties within the optimality tolerance prefer fewer obstacle-top landings,
then the lexicographically smallest interval sequence.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ..leg import LegParams
from ..terrain import LandingInterval, Parkour, landing_intervals
from .nlp import (
    SolveOutcome,
    SolverConfig,
    WindowedChain,
    polish_chain,
    solve_windowed_chain,
)
from .problem import (
    BinaryAssignment,
    DecisionVars,
    Limits,
    OffsetModel,
    PlannerError,
    ResidualReport,
    Trajectory,
    constraint_residuals,
)


@dataclass(frozen=True)
class JumpSpec:
    """One executed-to-be jump: timing, takeoff state, predicted landing."""

    t: float
    v: float
    theta: float
    takeoff: tuple[float, float]
    landing: tuple[float, float]

    @property
    def v_x(self) -> float:
        return self.v * math.cos(self.theta)

    @property
    def v_z(self) -> float:
        return self.v * math.sin(self.theta)


@dataclass
class SolveStats:
    nodes: int = 0
    nlp_solves: int = 0
    nlp_evals: int = 0
    setup_time: float = 0.0
    solve_time: float = 0.0


@dataclass
class Plan:
    jumps: tuple[JumpSpec, ...]
    assignment: BinaryAssignment
    total_time: float
    residuals: ResidualReport | None
    stats: SolveStats
    interval_indices: tuple[int, ...] = ()

    @property
    def n_jumps(self) -> int:
        return len(self.jumps)

    def decision_vars(self) -> DecisionVars:
        return DecisionVars(
            np.array([j.t for j in self.jumps]),
            np.array([j.v for j in self.jumps]),
            np.array([j.theta for j in self.jumps]),
        )


@dataclass(frozen=True)
class Infeasible:
    reason: str


def initial_guess(params: LegParams, limits: Limits, x_s: float, x_t: float,
                  n: int) -> DecisionVars:
    """Obstacle-free starting point: flattest angle, equal-split shared speed."""
    if n <= 0:
        raise PlannerError("initial_guess needs n >= 1")
    model = OffsetModel.from_params(params)
    chain = WindowedChain(
        model=model, limits=limits, x_s=x_s, z_s=0.0, x_t=x_t,
        z_targets=np.zeros(n), win_lo=np.full(n, -math.inf),
        win_hi=np.full(n, math.inf), foot_cross=[], knee_cross=[], areas=[])
    return DecisionVars.unpack(chain.start_flat())


def snap_target(parkour: Parkour, x_s: float, x_t: float,
                knee_dx: float = 0.0, knee_dz: float = 0.0,
                front_standoff: float = 0.0) -> float | None:
    """Largest landable position at or before x_t, or None if nothing is ahead."""
    intervals = landing_intervals(parkour, x_s, x_t, knee_dx, knee_dz,
                                  front_standoff)
    if not intervals:
        return None
    snapped = intervals[-1].hi
    if snapped <= x_s + 1e-9:
        return None
    return min(snapped, x_t)


def _flags_for_interval(interval: LandingInterval, fronts: np.ndarray,
                        backs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    center = interval.mid
    return (center > fronts).astype(int), (center > backs).astype(int)


def assignment_from_intervals(chosen: list[LandingInterval], fronts: np.ndarray,
                              backs: np.ndarray) -> BinaryAssignment:
    front_rows = []
    back_rows = []
    for interval in chosen:
        f, b = _flags_for_interval(interval, fronts, backs)
        front_rows.append(f)
        back_rows.append(b)
    k = fronts.shape[0]
    return BinaryAssignment(
        np.array(front_rows, dtype=int).reshape(len(chosen), k),
        np.array(back_rows, dtype=int).reshape(len(chosen), k),
    )


@dataclass
class _SearchGeometry:
    """Precomputed per-course quantities used by bounds and leaf assembly."""

    model: OffsetModel
    limits: Limits
    c_xe_max: float
    h_allow: float     # most a jump can ballistically climb net of offsets
    reach_max: float   # generous per-jump horizontal displacement cap

    @staticmethod
    def build(model: OffsetModel, limits: Limits, max_height: float) -> "_SearchGeometry":
        c_xe_max = model.r_t * math.cos(limits.theta_min) - model.rf_cos
        c_ze_min = model.r_t * math.sin(limits.theta_min) - model.rf_sin
        h_allow = max(0.0, max_height - min(c_ze_min, 0.0))
        reach = max(c_xe_max, 0.0) + limits.v_max * math.cos(limits.theta_min) * limits.t_max
        return _SearchGeometry(model, limits, c_xe_max, h_allow, reach)

    def lb_time(self, gap: float, m: int) -> float:
        """Admissible lower bound on total flight time for gap metres in m jumps."""
        if m <= 0:
            return 0.0 if gap <= 1e-9 else math.inf
        lim = self.limits
        run = gap - m * max(self.c_xe_max, 0.0)
        speed_bound = run / (lim.v_max * math.cos(lim.theta_min))
        ball = 2.0 * max(0.0, run * math.tan(lim.theta_min) - m * self.h_allow) / self.model.g
        return max(m * lim.t_min, speed_bound, math.sqrt(ball))


def _leaf_chain(geom: _SearchGeometry, x_s: float, z_s: float, x_t: float,
                chosen: list[LandingInterval], fronts: np.ndarray,
                backs: np.ndarray, heights: np.ndarray, margin_v: float,
                step_min: float) -> WindowedChain:
    n = len(chosen)
    z_targets = np.array([seg.z for seg in chosen])
    win_lo = np.array([seg.lo for seg in chosen])
    win_hi = np.array([seg.hi for seg in chosen])
    foot_cross: list[tuple[int, float, float]] = []
    knee_cross: list[tuple[int, float, float]] = []
    if fronts.shape[0]:
        prev_f = (x_s > fronts).astype(int)
        prev_b = (x_s > backs).astype(int)
        for i, seg in enumerate(chosen):
            f, b = _flags_for_interval(seg, fronts, backs)
            for k in np.nonzero(f > prev_f)[0]:
                foot_cross.append((i, float(fronts[k]), float(heights[k] + margin_v)))
            for k in np.nonzero(b > prev_b)[0]:
                # the foot clears the back corner too: with both ends of the
                # overflight held above the top, the concave arc cannot sag
                # onto the surface short of the back edge
                foot_cross.append((i, float(backs[k]), float(heights[k] + margin_v)))
                knee_cross.append((i, float(backs[k]), float(heights[k] + margin_v)))
            prev_f, prev_b = f, b
    return WindowedChain(
        model=geom.model, limits=geom.limits, x_s=x_s, z_s=z_s, x_t=x_t,
        z_targets=z_targets, win_lo=win_lo, win_hi=win_hi,
        foot_cross=foot_cross, knee_cross=knee_cross, areas=[],
        step_min=step_min)


def _plan_from_outcome(outcome: SolveOutcome, x_s: float, z_s: float,
                       assignment: BinaryAssignment, stats: SolveStats,
                       parkour: Parkour, params: LegParams, x_t: float,
                       interval_indices: tuple[int, ...]) -> Plan:
    dvars = DecisionVars.unpack(outcome.u)
    model = OffsetModel.from_params(params)
    traj = Trajectory(model, x_s, z_s, dvars.t, dvars.v, dvars.theta)
    jumps = []
    for i in range(dvars.n_jumps):
        jumps.append(JumpSpec(
            t=float(dvars.t[i]), v=float(dvars.v[i]), theta=float(dvars.theta[i]),
            takeoff=(traj.prev_x(i), traj.prev_z(i)),
            landing=(float(traj.x[i]), float(traj.z[i])),
        ))
    report = constraint_residuals(parkour, params, x_s, z_s, x_t, dvars, assignment)
    return Plan(tuple(jumps), assignment, float(outcome.objective), report,
                stats, interval_indices)


def plan_jumps(parkour: Parkour, params: LegParams, limits: Limits,
               x_s: float, z_s: float, x_t: float, n: int,
               config: SolverConfig | None = None,
               front_standoff: float = 0.0) -> Plan | Infeasible:
    """Best n-jump chain from (x_s, z_s) landing exactly on x_t, or Infeasible."""
    config = config or SolverConfig()
    t_setup0 = time.perf_counter()
    stats = SolveStats()
    if n == 0:
        if abs(x_t - x_s) <= config.tol_feas:
            empty = BinaryAssignment(np.zeros((0, len(parkour.obstacles)), dtype=int),
                                     np.zeros((0, len(parkour.obstacles)), dtype=int))
            stats.setup_time = time.perf_counter() - t_setup0
            return Plan((), empty, 0.0, None, stats)
        return Infeasible("zero jumps cannot move the stance")
    if n < 0:
        raise PlannerError("jump count must be >= 0")

    model = OffsetModel.from_params(params)
    intervals = landing_intervals(parkour, x_s, x_t, model.knee_dx, model.knee_dz,
                                  front_standoff)
    target_idx = None
    for idx, seg in enumerate(intervals):
        if seg.lo - 1e-9 <= x_t <= seg.hi + 1e-9:
            target_idx = idx
    if target_idx is None:
        stats.setup_time = time.perf_counter() - t_setup0
        return Infeasible(f"target x_t={x_t} is not a legal landing position")

    fronts = np.array([o.front for o in parkour.obstacles])
    backs = np.array([o.back for o in parkour.obstacles])
    heights = np.array([o.height for o in parkour.obstacles])
    max_h = float(heights.max()) if heights.size else 0.0
    geom = _SearchGeometry.build(model, limits, max_h)

    # gap endpoints per interval; the target interval is pinned to x_t
    seg_lo = [seg.lo for seg in intervals]
    seg_hi = [seg.hi for seg in intervals]

    def gap_between(prev_hi: float, idx: int, is_last: bool) -> float:
        lo = x_t if is_last and idx == target_idx else seg_lo[idx]
        return max(0.0, lo - prev_hi)

    stats.setup_time = time.perf_counter() - t_setup0

    best: tuple[float, int, tuple[int, ...], SolveOutcome] | None = None
    t_solve0 = time.perf_counter()

    def leaf_solve(seq: tuple[int, ...]) -> None:
        nonlocal best
        chosen = [intervals[i] for i in seq]
        chain = _leaf_chain(geom, x_s, z_s, x_t, chosen, fronts, backs,
                            heights, parkour.margin_v, config.step_min)
        grid0 = chain.start_grid()
        starts = [chain.start_windows()] if grid0 is None else [grid0, chain.start_windows()]
        outcome = None
        for u0 in starts:
            stats.nlp_solves += 1
            cand = solve_windowed_chain(chain, u0, config)
            stats.nlp_evals += cand.n_evals
            if cand.ok and (outcome is None or cand.objective < outcome.objective):
                outcome = cand
            if not cand.ok and cand.status == "infeasible":
                break  # confident stall; another start would just re-burn it
        if outcome is None:
            return
        n_obstacle = sum(1 for seg in chosen if seg.z > 0.0)
        key = (outcome.objective, n_obstacle, seq)
        if best is None:
            best = (outcome.objective, n_obstacle, seq, outcome)
            return
        tie_eps = max(1e-9, config.rel_opt_tol * best[0])
        if outcome.objective < best[0] - tie_eps:
            best = (outcome.objective, n_obstacle, seq, outcome)
        elif outcome.objective <= best[0] + tie_eps and (key[1], key[2]) < (best[1], best[2]):
            best = (outcome.objective, n_obstacle, seq, outcome)

    # depth-first over non-decreasing interval sequences, best lower bound first
    def node_lb(seq: tuple[int, ...]) -> float:
        total = 0.0
        prev_hi = x_s
        for depth, idx in enumerate(seq):
            is_last = depth == n - 1
            total += geom.lb_time(gap_between(prev_hi, idx, is_last), 1)
            prev_hi = x_t if is_last and idx == target_idx else seg_hi[idx]
        remaining = n - len(seq)
        if remaining:
            total += geom.lb_time(max(0.0, x_t - prev_hi), remaining)
        return total

    stack: list[tuple[int, ...]] = [()]
    while stack:
        seq = stack.pop()
        stats.nodes += 1
        if len(seq) == n:
            leaf_solve(seq)
            continue
        lb_cut = math.inf if best is None else best[0] * (1.0 - config.rel_opt_tol)
        depth_next = len(seq) + 1
        first_child = seq[-1] if seq else 0
        children = []
        for idx in range(first_child, len(intervals)):
            if idx > target_idx:
                break
            if depth_next == n and idx != target_idx:
                continue
            prev_hi = x_s if not seq else (seg_hi[seq[-1]])
            if gap_between(prev_hi, idx, depth_next == n) > geom.reach_max:
                break  # later intervals only lie farther ahead
            child = seq + (idx,)
            lb = node_lb(child)
            if lb >= lb_cut:
                continue
            children.append((lb, child))
        children.sort(key=lambda c: (c[0], c[1]))
        for lb, child in reversed(children):
            stack.append(child)

    stats.solve_time = time.perf_counter() - t_solve0
    if best is None:
        return Infeasible(f"no feasible {n}-jump landing sequence")

    _, _, seq, outcome = best
    chosen = [intervals[i] for i in seq]
    assignment = assignment_from_intervals(chosen, fronts, backs)
    plan = _plan_from_outcome(outcome, x_s, z_s, assignment, stats, parkour,
                              params, x_t, seq)
    assert plan.residuals is not None
    if plan.residuals.max_violation > 10.0 * config.tol_feas:
        return Infeasible("solution failed the independent residual check")
    return plan


def assignment_chain(parkour: Parkour, params: LegParams, limits: Limits,
                     x_s: float, z_s: float, x_t: float,
                     assignment: BinaryAssignment,
                     config: SolverConfig) -> WindowedChain:
    """The windowed-chain program a given set of side flags induces."""
    n = assignment.n_jumps
    fronts = np.array([o.front for o in parkour.obstacles])
    backs = np.array([o.back for o in parkour.obstacles])
    heights = np.array([o.height for o in parkour.obstacles])
    if assignment.n_obstacles != fronts.shape[0]:
        raise PlannerError("assignment obstacle count does not match the course")
    model = OffsetModel.from_params(params)

    half = 0.5 * parkour.margin_h
    win_lo = np.full(n, parkour.x_min + half)
    win_hi = np.full(n, parkour.x_max - half)
    for i in range(n):
        for k in range(fronts.shape[0]):
            if assignment.front_flags[i, k]:
                win_lo[i] = max(win_lo[i], fronts[k] + half)
            else:
                win_hi[i] = min(win_hi[i], fronts[k] - half)
            if assignment.back_flags[i, k]:
                win_lo[i] = max(win_lo[i], backs[k] + half)
            else:
                win_hi[i] = min(win_hi[i], backs[k] - half)
    foot_cross = []
    knee_cross = []
    f_pairs, b_pairs = assignment.crossings((x_s > fronts).astype(int),
                                            (x_s > backs).astype(int))
    for i, k in f_pairs:
        foot_cross.append((i, float(fronts[k]), float(heights[k] + parkour.margin_v)))
    for i, k in b_pairs:
        # foot and knee both clear the back corner (see _leaf_chain)
        foot_cross.append((i, float(backs[k]), float(heights[k] + parkour.margin_v)))
        knee_cross.append((i, float(backs[k]), float(heights[k] + parkour.margin_v)))
    areas = [(0.5 * (a.start + a.end), 0.5 * (a.end - a.start))
             for a in parkour.restricted]
    return WindowedChain(
        model=model, limits=limits, x_s=x_s, z_s=z_s, x_t=x_t,
        z_targets=assignment.implied_heights(heights),
        win_lo=win_lo, win_hi=win_hi, foot_cross=foot_cross,
        knee_cross=knee_cross, areas=areas, step_min=config.step_min)


def solve_assignment(parkour: Parkour, params: LegParams, limits: Limits,
                     x_s: float, z_s: float, x_t: float,
                     assignment: BinaryAssignment,
                     guess: DecisionVars | None = None,
                     config: SolverConfig | None = None) -> Plan | Infeasible:
    """Locally optimal chain for explicitly given side flags."""
    config = config or SolverConfig()
    if assignment.n_jumps == 0:
        return plan_jumps(parkour, params, limits, x_s, z_s, x_t, 0, config)
    chain = assignment_chain(parkour, params, limits, x_s, z_s, x_t,
                             assignment, config)

    stats = SolveStats()

    def iter_starts():
        # the grid seed is deferred so a converging warm guess never pays for it
        if guess is not None:
            yield guess.pack()
        grid0 = chain.start_grid()
        if grid0 is not None:
            yield grid0
        yield chain.start_windows()
        yield chain.start_flat()

    t0 = time.perf_counter()
    outcome = None
    if guess is not None:
        # a guess near its basin's optimum is cheaper to finish with a few
        # Newton steps than with the full multiplier loop
        stats.nlp_solves += 1
        polished = polish_chain(chain, guess.pack(), config)
        if polished is not None:
            stats.nlp_evals += polished.n_evals
            outcome = polished
    if outcome is None:
        for j, u0 in enumerate(iter_starts()):
            stats.nlp_solves += 1
            cand = solve_windowed_chain(chain, u0, config)
            stats.nlp_evals += cand.n_evals
            if cand.ok:
                outcome = cand
                break
            # a stale guess alone cannot prove infeasibility; any other start can
            if cand.status == "infeasible" and (guess is None or j > 0):
                break
    stats.solve_time = time.perf_counter() - t0
    if outcome is None:
        return Infeasible("no feasible chain for the given side flags")
    plan = _plan_from_outcome(outcome, x_s, z_s, assignment, stats, parkour,
                              params, x_t, ())
    assert plan.residuals is not None
    if plan.residuals.max_violation > 10.0 * config.tol_feas:
        return Infeasible("solution failed the independent residual check")
    return plan
