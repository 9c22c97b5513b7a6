"""Exhaustive reference planner for cross-checking the optimizing planner.

Grids launch speed and angle per jump, propagates every legal landing with
dynamic programming (bucketing positions to keep the frontier small), and
solves the final jump exactly from each surviving state so the target is hit
without grid error.  All physics and feasibility rules are evaluated from
first principles here — takeoff/landing posture offsets included — so this
module shares no computation with the planner it checks.

Exhaustive means expensive: intended for short chains (a few jumps) over
small terrain windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..leg import LegParams
from ..terrain import Parkour


@dataclass(frozen=True)
class OracleConfig:
    v_step: float = 0.005
    theta_step: float = 0.005
    bucket: float = 0.005      # frontier resolution in landing x
    step_min: float = 1e-3     # minimum forward progress per jump
    eps: float = 1e-9


@dataclass
class OracleResult:
    feasible: bool
    total_time: float = math.inf


@dataclass
class _Geometry:
    g: float
    r_t: float
    foot_dx: float   # landing foot offset from the stance point, x
    foot_dz: float
    knee_dx: float
    knee_dz: float

    def c_xe(self, theta: np.ndarray) -> np.ndarray:
        return self.r_t * np.cos(theta) - self.foot_dx

    def c_ze(self, theta: np.ndarray) -> np.ndarray:
        return self.r_t * np.sin(theta) - self.foot_dz

    def c_xk(self, theta: np.ndarray) -> np.ndarray:
        return self.c_xe(theta) - self.knee_dx

    def c_zk(self, theta: np.ndarray) -> np.ndarray:
        return self.c_ze(theta) + self.knee_dz


def _geometry(params: LegParams) -> _Geometry:
    # recomputed from limb lengths on purpose: an offset regression in the
    # planner's model must show up as a disagreement here
    r_f = params.flight_extension
    cos_knee = (params.l1 ** 2 - r_f ** 2 - params.l2 ** 2) / (2.0 * r_f * params.l2)
    alpha_f = math.acos(max(-1.0, min(1.0, cos_knee))) - params.flight_angle
    return _Geometry(
        g=params.gravity,
        r_t=params.takeoff_extension,
        foot_dx=r_f * math.cos(params.flight_angle),
        foot_dz=r_f * math.sin(params.flight_angle),
        knee_dx=params.l2 * math.cos(alpha_f),
        knee_dz=params.l2 * math.sin(alpha_f),
    )


def _pieces(parkour: Parkour) -> list[tuple[float, float, float]]:
    out: list[tuple[float, float, float]] = []
    cursor = parkour.x_min
    for obs in parkour.obstacles:
        if obs.front > cursor:
            out.append((cursor, obs.front, 0.0))
        out.append((obs.front, obs.back, obs.height))
        cursor = obs.back
    if parkour.x_max > cursor:
        out.append((cursor, parkour.x_max, 0.0))
    return out


def _landing_legal(parkour: Parkour, x: np.ndarray, eps: float,
                   geom: _Geometry | None = None) -> np.ndarray:
    """Margin bands around block edges, knee shadows behind them, and
    restricted spans exclude landings."""
    half = 0.5 * parkour.margin_h
    ok = np.ones(x.shape, dtype=bool)
    z = np.zeros(x.shape)
    for obs in parkour.obstacles:
        z[(x >= obs.front) & (x <= obs.back)] = obs.height
    for obs in parkour.obstacles:
        ok &= np.abs(x - obs.front) >= half - eps
        ok &= np.abs(x - obs.back) >= half - eps
        if geom is not None:
            rise = obs.height + parkour.margin_v - z - geom.knee_dz
            width = np.where(rise > 0.0, geom.knee_dx + 0.5 * rise, 0.0)
            ok &= (x < obs.back) | (x >= obs.back + half + width - eps)
    for area in parkour.restricted:
        center = 0.5 * (area.start + area.end)
        half_w = 0.5 * (area.end - area.start)
        ok &= np.abs(x - center) >= half_w - eps
    return ok


def _clearances_ok(parkour: Parkour, geom: _Geometry, x0: float, z0: float,
                   x_land: np.ndarray, vx: np.ndarray, vz: np.ndarray,
                   cxe: np.ndarray, cze: np.ndarray, cxk: np.ndarray,
                   czk: np.ndarray, eps: float) -> np.ndarray:
    """Foot clears crossed fronts; foot and knee clear crossed backs."""
    g = geom.g
    ok = np.ones(x_land.shape, dtype=bool)
    for obs in parkour.obstacles:
        need = obs.height + parkour.margin_v - eps
        if x0 < obs.front:
            tau = (obs.front - x0 - cxe) / vx
            h = z0 + cze + vz * tau - 0.5 * g * tau * tau
            ok &= (x_land < obs.front) | (h >= need)
        if x0 < obs.back:
            crossed = x_land >= obs.back
            tau = (obs.back - x0 - cxk) / vx
            h = z0 + czk + vz * tau - 0.5 * g * tau * tau
            ok &= ~crossed | (h >= need)
            # foot at the back corner too, so the arc cannot sag onto the top
            tau = (obs.back - x0 - cxe) / vx
            h = z0 + cze + vz * tau - 0.5 * g * tau * tau
            ok &= ~crossed | (h >= need)
    return ok


def grid_plan(parkour: Parkour, params: LegParams, limits, x_s: float,
              z_s: float, x_t: float, n: int,
              config: OracleConfig | None = None) -> OracleResult:
    """Minimum total flight time over the grid, landing jump n exactly on x_t."""
    config = config or OracleConfig()
    eps = config.eps
    if n == 0:
        return OracleResult(abs(x_t - x_s) <= 1e-6, 0.0 if abs(x_t - x_s) <= 1e-6 else math.inf)

    geom = _geometry(params)
    pieces = _pieces(parkour)
    g = geom.g

    # target must itself be a legal landing at a known height
    if not bool(_landing_legal(parkour, np.array([x_t]), eps, geom)[0]):
        return OracleResult(False)
    z_t = None
    for lo, hi, h in pieces:
        if lo <= x_t <= hi:
            z_t = h
    if z_t is None:
        return OracleResult(False)

    nv = max(2, int(math.ceil((limits.v_max - limits.v_min) / config.v_step)) + 1)
    nth = max(2, int(math.ceil((limits.theta_max - limits.theta_min) / config.theta_step)) + 1)
    v_grid = np.linspace(limits.v_min, limits.v_max, nv)
    th_grid = np.linspace(limits.theta_min, limits.theta_max, nth)
    vv, tt = np.meshgrid(v_grid, th_grid, indexing="ij")
    vv = vv.ravel()
    tt = tt.ravel()
    vx = vv * np.cos(tt)
    vz = vv * np.sin(tt)
    cxe = geom.c_xe(tt)
    cze = geom.c_ze(tt)
    cxk = geom.c_xk(tt)
    czk = geom.c_zk(tt)

    xs = np.array([x_s])
    zs = np.array([z_s])
    ts = np.array([0.0])

    for _level in range(n - 1):
        cand_key: list[np.ndarray] = []
        cand_x: list[np.ndarray] = []
        cand_z: list[np.ndarray] = []
        cand_t: list[np.ndarray] = []
        for x0, z0, t0 in zip(xs, zs, ts):
            for lo, hi, h in pieces:
                disc = vz * vz - 2.0 * g * (h - z0 - cze)
                ok = disc >= 0.0
                tau = np.where(ok, (vz + np.sqrt(np.maximum(disc, 0.0))) / g, np.nan)
                x_land = x0 + cxe + vx * tau
                ok &= (tau >= limits.t_min - eps) & (tau <= limits.t_max + eps)
                ok &= (x_land >= lo - eps) & (x_land <= hi + eps)
                ok &= (x_land >= x0 + config.step_min - eps) & (x_land <= x_t + eps)
                if not ok.any():
                    continue
                ok &= _landing_legal(parkour, x_land, eps, geom)
                if ok.any():
                    ok &= _clearances_ok(parkour, geom, x0, z0, x_land, vx, vz,
                                         cxe, cze, cxk, czk, eps)
                if not ok.any():
                    continue
                cand_key.append(np.round(x_land[ok] / config.bucket).astype(np.int64))
                cand_x.append(x_land[ok])
                cand_z.append(np.full(int(ok.sum()), h))
                cand_t.append(t0 + tau[ok])
        if not cand_key:
            return OracleResult(False)
        keys = np.concatenate(cand_key)
        all_x = np.concatenate(cand_x)
        all_z = np.concatenate(cand_z)
        all_t = np.concatenate(cand_t)
        zkeys = np.round(all_z / 1e-6).astype(np.int64)
        order = np.lexsort((all_t, zkeys, keys))
        k_sorted, z_sorted = keys[order], zkeys[order]
        first = np.ones(k_sorted.shape, dtype=bool)
        first[1:] = (k_sorted[1:] != k_sorted[:-1]) | (z_sorted[1:] != z_sorted[:-1])
        take = order[first]
        xs, zs, ts = all_x[take], all_z[take], all_t[take]

    # exact final jump onto the target from every surviving state
    best = math.inf
    cxe_th = geom.c_xe(th_grid)
    cze_th = geom.c_ze(th_grid)
    cxk_th = geom.c_xk(th_grid)
    czk_th = geom.c_zk(th_grid)
    tan_th = np.tan(th_grid)
    cos_th = np.cos(th_grid)
    sin_th = np.sin(th_grid)
    for x0, z0, t0 in zip(xs, zs, ts):
        if x_t < x0 + config.step_min - eps:
            continue
        reach = x_t - x0 - cxe_th
        drop = z_t - z0 - cze_th
        val = 2.0 * (reach * tan_th - drop) / g
        ok = (reach > eps) & (val > 0.0)
        t_fin = np.where(ok, np.sqrt(np.maximum(val, 0.0)), np.nan)
        v_fin = np.where(ok, reach / np.maximum(cos_th * t_fin, eps), np.nan)
        ok &= (t_fin >= limits.t_min - eps) & (t_fin <= limits.t_max + eps)
        ok &= (v_fin >= limits.v_min - eps) & (v_fin <= limits.v_max + eps)
        ok &= v_fin * sin_th - g * t_fin <= eps  # must arrive descending
        if ok.any():
            ok &= _clearances_ok(
                parkour, geom, x0, z0, np.full(th_grid.shape, x_t),
                v_fin * cos_th, v_fin * sin_th, cxe_th, cze_th, cxk_th, czk_th, eps)
        if not ok.any():
            continue
        total = t0 + np.nanmin(np.where(ok, t_fin, np.nan))
        best = min(best, float(total))

    return OracleResult(math.isfinite(best), best)
