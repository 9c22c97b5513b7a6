"""Receding-horizon replanning: one plan per stance, reusing the last one.

Each step plans from the current stance to a target clipped at a fixed
lookahead distance (and snapped back to landable ground).  A full search over
landing sequences only runs when there is nothing to reuse; otherwise the
previous plan's remaining jumps -- shifted, stretched to the advanced target,
or extended by one closing jump -- seed a single fixed-flags solve, which is
orders of magnitude cheaper than a cold search.  Terrain edits invalidate the
memory via the version stamp; any warm failure falls back to the cold path,
so reuse never costs feasibility.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..leg import LegParams
from ..terrain import Parkour, landing_intervals, locate
from .nlp import SolverConfig, two_point_jump
from .problem import BinaryAssignment, DecisionVars, Limits, OffsetModel
from .search import Infeasible, JumpSpec, Plan, plan_jumps, snap_target, solve_assignment


def max_jump_reach(params: LegParams, limits: Limits, drop: float = 0.0) -> float:
    """Farthest landing displacement of a single jump descending drop metres.

    The flattest allowed angle maximizes range for any non-negative drop, and
    dropping only ever extends it, so this bounds every jump of a chain whose
    landings never sit lower than drop below its takeoffs.
    """
    model = OffsetModel.from_params(params)
    th = limits.theta_min
    vx = limits.v_max * math.cos(th)
    vz = limits.v_max * math.sin(th)
    flight = (vz + math.sqrt(vz * vz + 2.0 * model.g * max(drop, 0.0))) / model.g
    return vx * flight + model.r_t * math.cos(th) - model.rf_cos


def min_jumps(gap: float, reach: float) -> int:
    """Fewest jumps that could possibly cover a gap of that many metres."""
    if gap <= 0.0:
        return 1
    return max(1, math.ceil(gap / reach - 1e-9))


@dataclass(frozen=True)
class HorizonConfig:
    lookahead: float = 2.0    # planning window beyond the stance [m]
    extra_jumps: int = 3      # jump counts tried above the coverage floor
    stretch_frac: float = 0.5  # target advance (in reaches) the old tail may absorb
    front_standoff: float = 0.7  # takeoff room before walls, in rises (robustness)


@dataclass
class StepResult:
    plan: Plan
    target: float             # snapped target this plan lands on
    mode: str                 # "warm" | "cold"
    setup_time: float
    solve_time: float

    @property
    def first_jump(self) -> JumpSpec:
        return self.plan.jumps[0]

    @property
    def n_jumps(self) -> int:
        return self.plan.n_jumps


@dataclass
class _Memory:
    terrain_version: int
    plan: Plan


def _assignment_for_landings(parkour: Parkour, landings: list[float]) -> BinaryAssignment:
    fronts = np.array([o.front for o in parkour.obstacles])
    backs = np.array([o.back for o in parkour.obstacles])
    lx = np.asarray(landings)[:, None]
    return BinaryAssignment((lx > fronts[None, :]).astype(int),
                            (lx > backs[None, :]).astype(int))


@dataclass
class RecedingPlanner:
    """Stateful step planner; keep one instance per hopper episode."""

    params: LegParams
    limits: Limits = field(default_factory=Limits)
    horizon: HorizonConfig = field(default_factory=HorizonConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self) -> None:
        self._model = OffsetModel.from_params(self.params)
        self._memory: _Memory | None = None

    def reset(self) -> None:
        self._memory = None

    def _reach_bound(self, parkour: Parkour, z_s: float) -> float:
        drop = max([z_s] + [o.height for o in parkour.obstacles] + [0.0])
        return max_jump_reach(self.params, self.limits, drop)

    def plan_step(self, parkour: Parkour, x_s: float, z_s: float, goal_x: float,
                  terrain_version: int = 0) -> StepResult | Infeasible:
        """Plan the remaining jumps from the stance (x_s, z_s) toward goal_x."""
        t0 = time.perf_counter()
        x_t = snap_target(parkour, x_s, min(goal_x, x_s + self.horizon.lookahead),
                          self._model.knee_dx, self._model.knee_dz,
                          self.horizon.front_standoff)
        if x_t is None:
            return Infeasible("no landable position ahead of the stance")
        reach = self._reach_bound(parkour, z_s)
        setup = time.perf_counter() - t0

        plan = None
        mode = "cold"
        mem = self._memory
        if mem is not None and mem.terrain_version == terrain_version:
            plan = self._warm_step(parkour, x_s, z_s, x_t, reach, mem.plan)
            if plan is not None:
                mode = "warm"
        if plan is None:
            plan = self._cold_step(parkour, x_s, z_s, x_t, reach)
        if isinstance(plan, Infeasible):
            self._memory = None
            return plan

        self._memory = _Memory(terrain_version, plan)
        return StepResult(plan=plan, target=x_t, mode=mode, setup_time=setup,
                          solve_time=time.perf_counter() - t0 - setup)

    # -- warm path ---------------------------------------------------------

    def _warm_step(self, parkour: Parkour, x_s: float, z_s: float, x_t: float,
                   reach: float, prev: Plan) -> Plan | None:
        kept = [j for j in prev.jumps if j.landing[0] > x_s + 1e-9]
        if not kept:
            return None
        lands_x = [j.landing[0] for j in kept]
        lands_z = [j.landing[1] for j in kept]
        advance = x_t - lands_x[-1]

        guesses: list[tuple[list[float], DecisionVars]] = []
        tail = DecisionVars(np.array([j.t for j in kept]),
                            np.array([j.v for j in kept]),
                            np.array([j.theta for j in kept]))
        stretched = (lands_x[:-1] + [x_t], tail)
        if advance > 1e-9:
            # target moved ahead: either one extra jump closes the gap, or the
            # old tail stretches to absorb a small advance
            extended = None
            closing = two_point_jump(self._model, self.limits, lands_x[-1],
                                     lands_z[-1], x_t, locate(parkour, x_t))
            if closing is not None:
                ct, cv, cth = closing
                extended = (lands_x + [x_t],
                            DecisionVars(np.append(tail.t, ct),
                                         np.append(tail.v, cv),
                                         np.append(tail.theta, cth)))
            if advance > self.horizon.stretch_frac * reach:
                stretched = None
            # a small advance is a mild deformation of the old plan, so the
            # same-count stretch is the likely winner; a large one genuinely
            # needs the extra jump.  Try the likely guess first and only pay
            # for the other when it fails -- both land in the same basin often
            # enough that solving both buys nothing but latency.
            order = ([stretched, extended] if advance <= 0.3 * reach
                     else [extended, stretched])
            guesses = [g for g in order if g is not None]
        else:
            guesses.append(stretched)

        for landings, dvars in guesses:
            if x_t - x_s > len(landings) * reach:
                continue
            assignment = _assignment_for_landings(parkour, landings)
            cand = solve_assignment(parkour, self.params, self.limits, x_s, z_s,
                                    x_t, assignment, guess=dvars, config=self.solver)
            if not isinstance(cand, Infeasible) and self._standoff_ok(parkour, cand, x_s, x_t):
                return cand
        return None

    def _standoff_ok(self, parkour: Parkour, plan: Plan, x_s: float,
                     x_t: float) -> bool:
        """Whether every landing keeps the configured room before walls.

        Fixed-flags solves bound landings by legality alone, so a stretched
        tail can drift a stance onto a wall the cold search would stand off
        from; such a plan is discarded rather than executed."""
        if self.horizon.front_standoff <= 0.0:
            return True
        segs = landing_intervals(parkour, x_s, x_t + 1e-9, self._model.knee_dx,
                                 self._model.knee_dz, self.horizon.front_standoff)
        return all(any(seg.lo - 1e-6 <= x <= seg.hi + 1e-6 for seg in segs)
                   for x in (j.landing[0] for j in plan.jumps))

    # -- cold path ---------------------------------------------------------

    def _cold_step(self, parkour: Parkour, x_s: float, z_s: float,
                   x_t: float, reach: float) -> Plan | Infeasible:
        floor = min_jumps(x_t - x_s, reach)
        last: Plan | Infeasible = Infeasible("no jump count was attempted")
        for n in range(floor, floor + self.horizon.extra_jumps + 1):
            last = plan_jumps(parkour, self.params, self.limits, x_s, z_s,
                              x_t, n, self.solver,
                              front_standoff=self.horizon.front_standoff)
            if not isinstance(last, Infeasible):
                return last
        return last
