"""Smooth solver for a jump chain with fixed landing windows.

Once each landing is committed to one terrain interval, the remaining
problem is a small smooth program in u = [t, v, theta]:

    minimize    sum(t)
    subject to  z[n] = window height        (landing heights, equality)
                x[N-1] = x_t                (target, equality)
                lo[n] <= x[n] <= hi[n]      (window confinement)
                pass heights >= H + margin  (crossed-edge clearance)
                v_z[n] - g t[n] <= 0        (descending at landing)
                x[n] - x[n-1] >= step_min   (forward progress)
                box bounds from Limits

It is solved with an augmented Lagrangian outer loop (multiplier updates,
penalty growth) around a spectral projected-gradient inner loop on the box.
All gradients are analytic.  Infeasibility is declared when the penalty has
saturated and the constraint violation has stopped improving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problem import Limits, NoForwardProgress, OffsetModel, Trajectory


@dataclass(frozen=True)
class SolverConfig:
    tol_feas: float = 1e-6        # max constraint violation at a solution
    tol_rel_obj: float = 1e-8     # relative objective settle between outer iterations
    tol_stationarity: float = 1e-7  # projected-gradient inf-norm target
    penalty_init: float = 100.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e8
    penalty_stall: float = 1e6    # rho above which a non-improving run may bail out
    max_outer: int = 30
    max_inner: int = 80
    rel_opt_tol: float = 1e-4     # search-level relative optimality slack
    step_min: float = 1e-3        # minimum forward progress per jump [m]


def two_point_jump(model: OffsetModel, limits: Limits, x0: float, z0: float,
                   x1: float, z1: float) -> tuple[float, float, float] | None:
    """(t, v, theta) landing exactly on (x1, z1) from (x0, z0), or None.

    Scans launch angles flattest-first and keeps the first one whose exact
    two-point solution respects the speed cap; a flat angle covers ground in
    the least flight time.
    """
    gap = x1 - x0
    rise = z1 - z0
    for theta in np.linspace(limits.theta_min, limits.theta_max, 9):
        c_xe = model.r_t * math.cos(theta) - model.rf_cos
        c_ze = model.r_t * math.sin(theta) - model.rf_sin
        run = gap - c_xe
        if run <= 1e-6:
            continue
        arg = 2.0 * (c_ze + run * math.tan(theta) - rise) / model.g
        if arg <= 0.0:
            continue
        t = math.sqrt(arg)
        v = run / (math.cos(theta) * t)
        if v > limits.v_max * 1.05:
            continue
        return t, v, theta
    return None


@dataclass
class WindowedChain:
    """The fixed-window chain program; evaluates residuals and gradients."""

    model: OffsetModel
    limits: Limits
    x_s: float
    z_s: float
    x_t: float
    z_targets: np.ndarray           # (N,)
    win_lo: np.ndarray              # (N,)
    win_hi: np.ndarray              # (N,)
    foot_cross: list[tuple[int, float, float]]  # (jump, edge_x, min foot height)
    knee_cross: list[tuple[int, float, float]]  # (jump, edge_x, min knee height)
    areas: list[tuple[float, float]]  # (center, half width); empty on interval-refined leaves
    step_min: float = 1e-3

    def __post_init__(self) -> None:
        self.n = int(self.z_targets.shape[0])
        self.lb = self.limits.lower(self.n)
        self.ub = self.limits.upper(self.n)
        # fixed inequality layout: windows lo, windows hi, forward, descent,
        # foot crossings, knee crossings, restricted-area rows
        self._ac = np.array([a[0] for a in self.areas])
        self._aw = np.array([a[1] for a in self.areas])
        self.m_ineq = (4 * self.n + len(self.foot_cross) + len(self.knee_cross)
                       + self.n * len(self.areas))

    def structurally_empty(self) -> bool:
        return bool(np.any(self.win_lo > self.win_hi + 1e-12))

    def start_flat(self) -> np.ndarray:
        """Equal-split flat guess: all angles at the minimum, shared speed."""
        n = self.n
        th = np.full(n, self.limits.theta_min)
        c_xe, _ = self.model.foot_offsets(th)
        span = self.x_t - self.x_s - float(c_xe.sum())
        per = max(span, 0.0) / n
        s2 = math.sin(2.0 * self.limits.theta_min)
        v = math.sqrt(max(per * self.model.g / max(s2, 1e-9), 0.0))
        v = min(max(v, self.limits.v_min), self.limits.v_max)
        t = 2.0 * v * math.sin(self.limits.theta_min) / self.model.g
        t = min(max(t, self.limits.t_min), self.limits.t_max)
        return np.concatenate([np.full(n, t), np.full(n, v), th])

    def start_windows(self) -> np.ndarray:
        """Window-aware guess: aim each jump at its window midpoint."""
        n = self.n
        targets_x = np.empty(n)
        for i in range(n):
            lo, hi = self.win_lo[i], self.win_hi[i]
            targets_x[i] = min(max(0.5 * (lo + hi), lo), hi)
        targets_x[-1] = self.x_t
        # keep the landing sequence increasing
        prev = self.x_s
        for i in range(n):
            targets_x[i] = max(targets_x[i], prev + self.step_min)
            prev = targets_x[i]
        t = np.empty(n)
        v = np.empty(n)
        th = np.empty(n)
        prev_x, prev_z = self.x_s, self.z_s
        for i in range(n):
            chosen = two_point_jump(self.model, self.limits, prev_x, prev_z,
                                    targets_x[i], self.z_targets[i])
            if chosen is None:
                th[i] = 0.5 * (self.limits.theta_min + self.limits.theta_max)
                v[i] = 0.5 * (self.limits.v_min + self.limits.v_max)
                t[i] = 0.5 * (self.limits.t_min + self.limits.t_max)
            else:
                t[i] = min(max(chosen[0], self.limits.t_min), self.limits.t_max)
                v[i] = min(max(chosen[1], self.limits.v_min), self.limits.v_max)
                th[i] = chosen[2]
            c_xe = self.model.r_t * math.cos(th[i]) - self.model.rf_cos
            prev_x = prev_x + c_xe + v[i] * math.cos(th[i]) * t[i]
            c_ze = self.model.r_t * math.sin(th[i]) - self.model.rf_sin
            prev_z = (prev_z + c_ze + v[i] * math.sin(th[i]) * t[i]
                      - 0.5 * self.model.g * t[i] ** 2)
        return np.concatenate([t, v, th])

    def start_grid(self, n_theta: int = 11, n_v: int = 17,
                   bucket: float = 0.02) -> np.ndarray | None:
        """Best coarse launch-grid path through the windows, or None.

        Small dynamic program: every (v, theta) combination is landed exactly
        on each window's height, positions are bucketed per window to keep the
        frontier bounded, crossings are height-checked, and the last jump is
        solved exactly onto the target.  The winning path seeds the smooth
        solver inside the right basin; it is not itself a solution.
        """
        n = self.n
        lim = self.limits
        g = self.model.g
        th = np.linspace(lim.theta_min, lim.theta_max, n_theta)
        vv = np.linspace(lim.v_min, lim.v_max, n_v)
        v_g, th_g = np.meshgrid(vv, th, indexing="ij")
        v_g = v_g.ravel()
        th_g = th_g.ravel()
        vx = v_g * np.cos(th_g)
        vz = v_g * np.sin(th_g)
        cxe = self.model.r_t * np.cos(th_g) - self.model.rf_cos
        cze = self.model.r_t * np.sin(th_g) - self.model.rf_sin
        cxk = cxe - self.model.knee_dx
        czk = cze + self.model.knee_dz

        def cross_ok(i: int, x0: np.ndarray, z0: float, vx_a, vz_a, cxe_a,
                     cze_a, cxk_a, czk_a) -> np.ndarray:
            good = np.ones(np.shape(vx_a), dtype=bool)
            for j, edge_x, min_h in self.foot_cross:
                if j != i:
                    continue
                tau = (edge_x - x0 - cxe_a) / vx_a
                good &= z0 + cze_a + vz_a * tau - 0.5 * g * tau * tau >= min_h
            for j, edge_x, min_h in self.knee_cross:
                if j != i:
                    continue
                tau = (edge_x - x0 - cxk_a) / vx_a
                good &= z0 + czk_a + vz_a * tau - 0.5 * g * tau * tau >= min_h
            return good

        # frontier: landing x, cumulative time, decision history
        xs = np.array([self.x_s])
        ts = np.array([0.0])
        hist = np.zeros((1, 0, 3))
        z_prev = self.z_s
        for i in range(n - 1):
            z_i = float(self.z_targets[i])
            cand = []
            for s in range(xs.shape[0]):
                x0, t0 = float(xs[s]), float(ts[s])
                disc = vz * vz - 2.0 * g * (z_i - z_prev - cze)
                ok = disc >= 0.0
                tau = np.where(ok, (vz + np.sqrt(np.maximum(disc, 0.0))) / g, np.nan)
                x_land = x0 + cxe + vx * tau
                ok &= (tau >= lim.t_min) & (tau <= lim.t_max)
                ok &= (x_land >= self.win_lo[i]) & (x_land <= self.win_hi[i])
                ok &= x_land >= x0 + self.step_min
                if ok.any():
                    ok &= cross_ok(i, x0, z_prev, vx, vz, cxe, cze, cxk, czk)
                idx = np.nonzero(ok)[0]
                if idx.size:
                    cand.append((s, idx, tau[idx], x_land[idx]))
            if not cand:
                return None
            keys_all = []
            rows = []
            for s, idx, tau_i, x_i in cand:
                keys_all.append(np.round(x_i / bucket).astype(np.int64))
                rows.append((s, idx, tau_i, x_i))
            keys = np.concatenate(keys_all)
            t_all = np.concatenate([ts[s] + tau_i for s, _, tau_i, _ in rows])
            x_all = np.concatenate([x_i for _, _, _, x_i in rows])
            src = np.concatenate([np.full(i2.shape[0], s) for s, i2, _, _ in rows])
            combo = np.concatenate([i2 for _, i2, _, _ in rows])
            order = np.lexsort((t_all, keys))
            k_s = keys[order]
            first = np.ones(k_s.shape[0], dtype=bool)
            first[1:] = k_s[1:] != k_s[:-1]
            take = order[first]
            new_hist = np.empty((take.shape[0], i + 1, 3))
            for r, pick in enumerate(take):
                s = src[pick]
                c = combo[pick]
                tau_pick = t_all[pick] - ts[s]
                new_hist[r, :i] = hist[s]
                new_hist[r, i] = (tau_pick, v_g[c], th_g[c])
            xs, ts, hist = x_all[take], t_all[take], new_hist
            z_prev = z_i

        # exact last jump onto the target
        z_last = float(self.z_targets[-1])
        th_f = np.linspace(lim.theta_min, lim.theta_max, 25)
        cxe_f = self.model.r_t * np.cos(th_f) - self.model.rf_cos
        cze_f = self.model.r_t * np.sin(th_f) - self.model.rf_sin
        cxk_f = cxe_f - self.model.knee_dx
        czk_f = cze_f + self.model.knee_dz
        best: tuple[float, int, float, float, float] | None = None
        for s in range(xs.shape[0]):
            x0, t0 = float(xs[s]), float(ts[s])
            if self.x_t < x0 + self.step_min:
                continue
            reach = self.x_t - x0 - cxe_f
            drop = z_last - z_prev - cze_f
            val = 2.0 * (reach * np.tan(th_f) - drop) / g
            ok = (reach > 1e-9) & (val > 0.0)
            t_f = np.where(ok, np.sqrt(np.maximum(val, 1e-18)), np.nan)
            v_f = np.where(ok, reach / np.maximum(np.cos(th_f) * t_f, 1e-12), np.nan)
            ok &= (t_f >= lim.t_min) & (t_f <= lim.t_max)
            ok &= (v_f >= lim.v_min) & (v_f <= lim.v_max)
            ok &= v_f * np.sin(th_f) - g * t_f <= 1e-9
            if ok.any():
                ok &= cross_ok(n - 1, np.full(th_f.shape, x0), z_prev,
                               v_f * np.cos(th_f), v_f * np.sin(th_f),
                               cxe_f, cze_f, cxk_f, czk_f)
            if not ok.any():
                continue
            masked = np.where(ok, t_f, np.nan)
            c = int(np.nanargmin(masked))
            total = t0 + float(t_f[c])
            if best is None or total < best[0]:
                best = (total, s, float(t_f[c]), float(v_f[c]), float(th_f[c]))
        if best is None:
            return None
        _, s, t_l, v_l, th_l = best
        steps = np.vstack([hist[s], [t_l, v_l, th_l]])
        return np.concatenate([steps[:, 0], steps[:, 1], steps[:, 2]])

    # --- residual stacks ---------------------------------------------------

    def _traj(self, u: np.ndarray, with_jac: bool) -> Trajectory:
        n = self.n
        return Trajectory(self.model, self.x_s, self.z_s,
                          u[:n], u[n:2 * n], u[2 * n:], with_jac=with_jac)

    def value(self, u: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        """(objective, equalities, inequalities)."""
        n = self.n
        traj = self._traj(u, with_jac=False)
        eq = np.empty(n + 1)
        eq[:n] = traj.z - self.z_targets
        eq[n] = traj.x[-1] - self.x_t
        ineq = np.empty(self.m_ineq)
        ineq[0:n] = self.win_lo - traj.x
        ineq[n:2 * n] = traj.x - self.win_hi
        ineq[2 * n:3 * n - 1] = traj.x[:-1] - traj.x[1:] + self.step_min
        ineq[3 * n - 1] = self.x_s - traj.x[0] + self.step_min
        ineq[3 * n:4 * n] = traj.vz - self.model.g * u[:n]
        pos = 4 * n
        for i, edge_x, min_h in self.foot_cross:
            _, h = traj.edge_pass(i, edge_x, knee=False)
            ineq[pos] = min_h - h
            pos += 1
        for i, edge_x, min_h in self.knee_cross:
            _, h = traj.edge_pass(i, edge_x, knee=True)
            ineq[pos] = min_h - h
            pos += 1
        if self._ac.shape[0]:
            area_rows = self._aw[:, None] - np.abs(traj.x[None, :] - self._ac[:, None])
            ineq[pos:] = area_rows.ravel()
        return float(u[:n].sum()), eq, ineq

    def value_grad(self, u: np.ndarray) -> tuple[
            float, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(f, grad_f, eq, jac_eq, ineq, jac_ineq)."""
        n = self.n
        nu = 3 * n
        traj = self._traj(u, with_jac=True)
        if np.any(traj.vx <= 0.0):
            raise NoForwardProgress("chain requires positive horizontal speed")
        jx, jz = traj.jac_x, traj.jac_z
        grad_f = np.zeros(nu)
        grad_f[:n] = 1.0

        eq = np.empty(n + 1)
        eq[:n] = traj.z - self.z_targets
        eq[n] = traj.x[-1] - self.x_t
        jac_eq = np.empty((n + 1, nu))
        jac_eq[:n] = jz
        jac_eq[n] = jx[-1]

        ineq = np.empty(self.m_ineq)
        jac = np.zeros((self.m_ineq, nu))
        ineq[0:n] = self.win_lo - traj.x
        jac[0:n] = -jx
        ineq[n:2 * n] = traj.x - self.win_hi
        jac[n:2 * n] = jx
        ineq[2 * n:3 * n - 1] = traj.x[:-1] - traj.x[1:] + self.step_min
        jac[2 * n:3 * n - 1] = jx[:-1] - jx[1:]
        ineq[3 * n - 1] = self.x_s - traj.x[0] + self.step_min
        jac[3 * n - 1] = -jx[0]
        ineq[3 * n:4 * n] = traj.vz - self.model.g * u[:n]
        idx = np.arange(n)
        jac[3 * n + idx, idx] = -self.model.g
        jac[3 * n + idx, n + idx] = traj.sin_th
        jac[3 * n + idx, 2 * n + idx] = traj.vx
        pos = 4 * n
        for i, edge_x, min_h in self.foot_cross:
            _, h, grad_h = traj.edge_pass_jac(i, edge_x, knee=False)
            ineq[pos] = min_h - h
            jac[pos] = -grad_h
            pos += 1
        for i, edge_x, min_h in self.knee_cross:
            _, h, grad_h = traj.edge_pass_jac(i, edge_x, knee=True)
            ineq[pos] = min_h - h
            jac[pos] = -grad_h
            pos += 1
        if self._ac.shape[0]:
            na = self._ac.shape[0]
            diff = traj.x[None, :] - self._ac[:, None]
            ineq[pos:] = (self._aw[:, None] - np.abs(diff)).ravel()
            signs = np.sign(diff).reshape(na * n, 1)
            jac[pos:] = -signs * np.tile(jx, (na, 1))
        return float(u[:n].sum()), grad_f, eq, jac_eq, ineq, jac


@dataclass
class SolveOutcome:
    u: np.ndarray
    objective: float
    violation: float
    status: str          # converged | infeasible | exhausted
    n_outer: int
    n_evals: int
    lam: np.ndarray | None = None   # equality multipliers at exit
    mu: np.ndarray | None = None    # inequality multipliers at exit

    @property
    def ok(self) -> bool:
        return self.status == "converged"


@dataclass
class WarmStart:
    """Primal/dual state carried between related solves."""

    u: np.ndarray
    lam: np.ndarray
    mu: np.ndarray


def _al_value(chain: WindowedChain, u: np.ndarray, lam: np.ndarray,
              mu: np.ndarray, rho: float) -> float:
    f, eq, ineq = chain.value(u)
    shifted = np.maximum(0.0, mu + rho * ineq)
    return (f + lam @ eq + 0.5 * rho * (eq @ eq)
            + (0.5 / rho) * float(shifted @ shifted - mu @ mu))


def _pnewton(chain: WindowedChain, u: np.ndarray, lam: np.ndarray,
             mu: np.ndarray, rho: float, tol: float,
             max_iter: int) -> tuple[np.ndarray, int, float]:
    """Projected Gauss-Newton on the box for the subproblem.

    Coordinates pinned at a bound with the gradient pointing outward are
    frozen; the rest get a Newton step built from the exact penalty
    curvature rho * (Je'Je + sum over active inequality rows of a a'),
    assembled straight from the analytic jacobians that arrive with every
    evaluation.  The objective is linear and the dropped constraint-curvature
    terms stay bounded while this part grows with rho, so it is exactly the
    piece that matters once the subproblem turns stiff -- and unlike a
    differenced Hessian it stays clean at high penalty.  Adaptive Levenberg
    damping covers the tangential space, steered by line-search feedback.
    """
    lb, ub = chain.lb, chain.ub
    u = np.clip(u, lb, ub)

    def pieces(x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
        f, gf, eq, jeq, ineq, jineq = chain.value_grad(x)
        shifted = np.maximum(0.0, mu + rho * ineq)
        val = (f + float(lam @ eq) + 0.5 * rho * float(eq @ eq)
               + (0.5 / rho) * float(shifted @ shifted - mu @ mu))
        grad = gf + jeq.T @ (lam + rho * eq) + jineq.T @ shifted
        return val, grad, jeq, jineq[shifted > 0.0]

    val, grad, jeq, jact = pieces(u)
    evals = 1
    stat = math.inf
    tau = 0.0
    rejects = 0
    for _ in range(max_iter):
        stat = float(np.max(np.abs(u - np.clip(u - grad, lb, ub))))
        if stat <= tol:
            break
        at_lo = u - lb <= 1e-12
        at_hi = ub - u <= 1e-12
        free = ~((at_lo & (grad > 0.0)) | (at_hi & (grad < 0.0)))
        if not free.any():
            break
        idx = np.nonzero(free)[0]
        je = jeq[:, idx]
        ja = jact[:, idx]
        hess = rho * (je.T @ je + ja.T @ ja)
        scale = float(np.abs(np.diag(hess)).max(initial=1.0))
        if tau == 0.0:
            tau = 1e-8 * scale
        d = np.zeros_like(u)
        for _ in range(40):
            try:
                c_fac = np.linalg.cholesky(hess + tau * np.eye(idx.size))
                d[idx] = np.linalg.solve(c_fac.T, np.linalg.solve(c_fac, -grad[idx]))
                break
            except np.linalg.LinAlgError:
                tau = max(4.0 * tau, 1e-8 * scale)
        else:
            d[idx] = -grad[idx]
        if float(grad[idx] @ d[idx]) > -1e-14:
            d = np.zeros_like(u)
            d[idx] = -grad[idx]
        alpha = 1.0
        accepted = False
        for _ in range(12):
            u_new = np.clip(u + alpha * d, lb, ub)
            val_new = _al_value(chain, u_new, lam, mu, rho)
            evals += 1
            drop = float(grad @ (u_new - u))
            if val_new <= val + 1e-4 * min(0.0, drop) and val_new < val + 1e-12 * max(1.0, abs(val)):
                accepted = True
                break
            alpha *= 0.25
        if not accepted:
            # a poor model, not a dead end: damp harder and rebuild the step
            rejects += 1
            tau = min(16.0 * max(tau, 1e-8 * scale), 1e10 * scale)
            if rejects >= 4:
                break
            continue
        rejects = 0
        tau = max(0.25 * tau, 1e-12 * scale) if alpha == 1.0 else min(2.0 * tau, 1e8 * scale)
        if float(np.abs(u_new - u).max()) <= 1e-15:
            break
        u = u_new
        val, grad, jeq, jact = pieces(u)
        evals += 1
    return u, evals, stat


def _bootstrap_duals(chain: WindowedChain, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares multiplier estimate from the stationarity system at u.

    Spares the outer loop its first few rounds of dual discovery: rows of
    near-active constraints are fit to the negative objective gradient and
    inequality multipliers are clipped to be non-negative.
    """
    _, gf, eq, jeq, ineq, jineq = chain.value_grad(u)
    lam = np.zeros(eq.shape[0])
    mu = np.zeros(ineq.shape[0])
    active = ineq >= -1e-4
    rows = [jeq] if jeq.size else []
    if active.any():
        rows.append(jineq[active])
    if not rows:
        return lam, mu
    a_mat = np.vstack(rows)
    # ignore components the box carries: drop coordinates pinned at a bound
    free = ((u > chain.lb + 1e-12) & (u < chain.ub - 1e-12))
    if not free.any():
        return lam, mu
    y, *_ = np.linalg.lstsq(a_mat[:, free].T, -gf[free], rcond=None)
    n_eq = jeq.shape[0] if jeq.size else 0
    lam = y[:n_eq]
    mu[active] = np.maximum(0.0, y[n_eq:])
    return lam, mu


def _nullspace_shift(hess: np.ndarray, a_mat: np.ndarray) -> float | None:
    """Diagonal shift making the Hessian positive on the working-set null space.

    The objective is linear, so every bit of curvature is multiplier-weighted
    constraint curvature and nothing guarantees the right inertia away from
    the solution.  Returns None when the working set has dependent rows.
    """
    nu = hess.shape[0]
    q, r = np.linalg.qr(a_mat.T, mode="complete")
    diag = np.abs(np.diag(r[: a_mat.shape[0], : a_mat.shape[0]]))
    if a_mat.shape[0] and float(diag.min(initial=1.0)) < 1e-10:
        return None
    z = q[:, a_mat.shape[0]:]
    if z.shape[1] == 0:
        return 0.0
    hr = z.T @ hess @ z
    w = np.linalg.eigvalsh(0.5 * (hr + hr.T))
    lo = float(w[0])
    # the floor scales with the curvature present: shifting an indefinite
    # block to machine-noise level would leave a near-flat direction the
    # Newton step then runs away along
    floor = max(1e-8, 1e-4 * float(np.abs(w).max(initial=1.0)),
                0.1 * max(0.0, -lo))
    return max(0.0, floor - lo)


def polish_chain(chain: WindowedChain, u0: np.ndarray, config: SolverConfig,
                 max_iter: int = 18,
                 duals: tuple[np.ndarray, np.ndarray] | None = None,
                 ) -> SolveOutcome | None:
    """Active-set Newton refinement for starts already near a solution.

    Solves the KKT system of the working set (near-active inequalities plus
    box bounds at their bound), with the Lagrangian curvature taken by finite
    differences of its gradient and corrected to the right inertia, under an
    l1-merit line search with a second-order correction retry.  Converges in
    a handful of steps when the start is good; returns None the moment it is
    not the right tool, leaving the caller's slower globally-convergent path
    to do the work.  Callers holding multiplier estimates (a penalty loop
    mid-schedule) pass them as duals; otherwise a least-squares fit of the
    stationarity system supplies them.
    """
    lb, ub = chain.lb, chain.ub
    nu = lb.shape[0]
    n_eq = chain.n + 1
    u = np.clip(u0, lb, ub)
    try:
        f, gf, eq, je, ineq, ji = chain.value_grad(u)
    except NoForwardProgress:
        return None
    evals = 1
    m = ineq.shape[0]
    viol = max(float(np.abs(eq).max()), float(np.maximum(0.0, ineq).max(initial=0.0)))
    if viol > 0.1:
        return None

    def lagrangian_grad(w: np.ndarray, lam: np.ndarray, rows: np.ndarray,
                        mu_rows: np.ndarray) -> np.ndarray:
        _, gfw, _, jew, _, jiw = chain.value_grad(w)
        g = gfw + jew.T @ lam
        if rows.size:
            g = g + jiw[rows].T @ mu_rows
        return g

    eye = np.eye(nu)
    crawl_budget = 5
    if duals is not None:
        lam = duals[0].copy()
        mu = np.maximum(0.0, duals[1])
    else:
        # multiplier estimate from full-coordinate stationarity; box columns
        # for pinned coordinates keep the fit determined, otherwise least
        # squares hands back a min-norm vector whose Lagrangian has the wrong
        # curvature
        act = np.nonzero(ineq >= -1e-2)[0]
        cols = [je.T]
        if act.size:
            cols.append(ji[act].T)
        for k in np.nonzero(u - lb <= 1e-9)[0]:
            cols.append(-eye[:, k:k + 1])
        for k in np.nonzero(ub - u <= 1e-9)[0]:
            cols.append(eye[:, k:k + 1])
        y_fit, *_ = np.linalg.lstsq(np.hstack(cols), -gf, rcond=None)
        lam = y_fit[:n_eq]
        mu = np.zeros(m)
        mu[act] = np.maximum(0.0, y_fit[n_eq:n_eq + act.size])
    h_fd = 1e-5
    for it in range(max_iter):
        # working set: near-active inequality rows, plus box rows at bounds;
        # the threshold is loose on purpose -- a perturbed start sits a few
        # mm off the rows that bind at the solution, and the multiplier-sign
        # loop below evicts anything that does not belong
        ineq_all = np.concatenate([ineq, lb - u, u - ub])
        jac_all = np.vstack([ji, -eye, eye])
        cand = np.nonzero(ineq_all >= -1e-2)[0]
        # keep rows whose gradients stay independent of the equalities and
        # of each other, most urgent first: violated rows must be restored,
        # rows sitting exactly on their bound are certainly active, the
        # merely-nearby ones fill what room is left.  An over-determined
        # working set makes the dual estimates garbage and the eviction
        # loop blind, so never take more rows than there are variables.
        urgency = np.where(ineq_all[cand] > 1e-9, 2,
                           np.where(ineq_all[cand] > -1e-9, 1, 0))
        basis: list[np.ndarray] = []
        for row in je:
            vec = row.copy()
            for b in basis:
                vec -= (vec @ b) * b
            norm = float(np.linalg.norm(vec))
            if norm < 1e-12:
                return None
            basis.append(vec / norm)
        kept = []
        for r_idx in cand[np.argsort(-urgency, kind="stable")]:
            if n_eq + len(kept) >= nu:
                break
            vec = jac_all[r_idx].copy()
            for b in basis:
                vec -= (vec @ b) * b
            norm = float(np.linalg.norm(vec))
            if norm > 1e-6 * float(np.linalg.norm(jac_all[r_idx])):
                kept.append(int(r_idx))
                basis.append(vec / norm)
        w_rows = np.sort(np.array(kept, dtype=int))
        chain_rows = w_rows[w_rows < m]

        # curvature from the previous multiplier estimates; the objective is
        # linear, so only equalities and active rows contribute
        mu_h = mu[chain_rows]
        g0 = lagrangian_grad(u, lam, chain_rows, mu_h)
        evals += 1
        hess = np.empty((nu, nu))
        for k in range(nu):
            w_k = u.copy()
            w_k[k] += h_fd
            try:
                hess[:, k] = (lagrangian_grad(w_k, lam, chain_rows, mu_h) - g0) / h_fd
            except NoForwardProgress:
                return None
            evals += 1
        hess = 0.5 * (hess + hess.T)

        du = None
        y = None
        for _ in range(w_rows.shape[0] + 1):
            a_mat = np.vstack([je, jac_all[w_rows]])
            c_vec = np.concatenate([eq, ineq_all[w_rows]])
            m_rows = a_mat.shape[0]
            shift = _nullspace_shift(hess, a_mat)
            if shift is None:
                return None
            kkt = np.zeros((nu + m_rows, nu + m_rows))
            kkt[:nu, :nu] = hess + (1e-9 + shift) * eye
            kkt[:nu, nu:] = a_mat.T
            kkt[nu:, :nu] = a_mat
            kkt[nu:, nu:] = -1e-10 * np.eye(m_rows)
            try:
                sol = np.linalg.solve(kkt, np.concatenate([-gf, -c_vec]))
            except np.linalg.LinAlgError:
                return None
            du = sol[:nu]
            y = sol[nu:]
            mu_w = y[n_eq:]
            if mu_w.size == 0 or float(mu_w.min()) >= -1e-9:
                break
            # wrong-signed multiplier: that constraint wants to leave the set
            w_rows = np.delete(w_rows, int(np.argmin(mu_w)))
        else:
            return None

        lam = y[:n_eq]
        mu = np.zeros(m)
        sel = w_rows < m
        mu[w_rows[sel]] = np.maximum(0.0, y[n_eq:][sel])

        if float(np.abs(du).max()) <= 1e-8 and viol <= config.tol_feas:
            return SolveOutcome(u, f, viol, "converged", it + 1, evals, lam, mu)

        # l1 merit line search on box-clipped trials, so acceptance judges
        # the point the iterate will actually become
        sigma = max(10.0, 2.0 * float(np.abs(y).max(initial=0.0)))

        def merit(w: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
            fw, eqw, inw = chain.value(w)
            pen = float(np.abs(eqw).sum()) + float(np.maximum(0.0, inw).sum())
            return fw + sigma * pen, eqw, inw

        phi0 = f + sigma * (float(np.abs(eq).sum())
                            + float(np.maximum(0.0, ineq).sum()))

        def good(phi: float, alpha: float) -> bool:
            return phi <= phi0 - 1e-8 * alpha * max(1.0, abs(phi0))

        u_new = None
        try:
            w1 = np.clip(u + du, lb, ub)
            phi1, eq1, in1 = merit(w1)
            evals += 1
            if good(phi1, 1.0):
                u_new = w1
            else:
                # second-order correction: the full Newton step often trades
                # a tiny constraint drift for the objective drop the merit
                # refuses; re-landing on the working set fixes that
                in_all1 = np.concatenate([in1, lb - w1, w1 - ub])
                c1 = np.concatenate([eq1, in_all1[w_rows]])
                gram = a_mat @ a_mat.T + 1e-12 * np.eye(a_mat.shape[0])
                dc = -a_mat.T @ np.linalg.solve(gram, c1)
                w2 = np.clip(u + du + dc, lb, ub)
                phi2, _, _ = merit(w2)
                evals += 1
                if good(phi2, 1.0):
                    u_new = w2
        except NoForwardProgress:
            evals += 1
        if u_new is None:
            alpha = 0.5
            for _ in range(7):
                w_a = np.clip(u + alpha * du, lb, ub)
                try:
                    phi, _, _ = merit(w_a)
                except NoForwardProgress:
                    phi = math.inf
                evals += 1
                if good(phi, alpha):
                    u_new = w_a
                    break
                alpha *= 0.5
            else:
                return None
            # a warm start recovering its basin takes a couple of short steps
            # and then switches to full Newton ones; a run that keeps needing
            # them is stuck at a degenerate vertex or wild curvature, and the
            # slower fallback handles those better than a long shuffle here
            if alpha <= 0.125:
                crawl_budget -= 1
                if crawl_budget <= 0:
                    return None
        if float(np.abs(u_new - u).max()) <= 1e-14:
            # the box undid the whole step; nothing left to make progress with
            return None
        u = u_new
        f, gf, eq, je, ineq, ji = chain.value_grad(u)
        evals += 1
        viol = max(float(np.abs(eq).max()),
                   float(np.maximum(0.0, ineq).max(initial=0.0)))
    return None


def solve_windowed_chain(chain: WindowedChain, u0: np.ndarray,
                         config: SolverConfig,
                         warm: WarmStart | None = None) -> SolveOutcome:
    """Augmented Lagrangian driver around the projected-gradient subsolver."""
    if chain.structurally_empty():
        return SolveOutcome(u0, math.inf, math.inf, "infeasible", 0, 0)
    u = np.clip(u0, chain.lb, chain.ub)
    _, eq, ineq = chain.value(u)
    evals = 1
    if warm is not None and warm.lam.shape == eq.shape and warm.mu.shape == ineq.shape:
        lam = warm.lam.copy()
        mu = warm.mu.copy()
    else:
        lam, mu = _bootstrap_duals(chain, u)
        evals += 1
    rho = config.penalty_init
    prev_f = math.inf
    prev_viol = math.inf
    best_viol = math.inf
    stalled = 0
    outer = 0
    polish_gate = 1e-3
    for outer in range(1, config.max_outer + 1):
        # drive the subproblem just tighter than the current feasibility gap
        inner_tol = min(1e-3, 0.1 * prev_viol) if math.isfinite(prev_viol) else 1e-3
        inner_tol = max(config.tol_stationarity, inner_tol)
        u, n_ev, stat = _pnewton(chain, u, lam, mu, rho, inner_tol,
                                 config.max_inner)
        evals += n_ev
        f, eq, ineq = chain.value(u)
        evals += 1
        viol = 0.0
        if eq.size:
            viol = float(np.abs(eq).max())
        if ineq.size:
            viol = max(viol, float(np.maximum(0.0, ineq).max()))
        settled = abs(f - prev_f) <= config.tol_rel_obj * max(1.0, abs(f))
        stationary = stat <= 100.0 * config.tol_stationarity
        if viol <= config.tol_feas and (settled or stationary):
            return SolveOutcome(u, f, viol, "converged", outer, evals, lam, mu)
        lam = lam + rho * eq
        mu = np.maximum(0.0, mu + rho * ineq)
        # near-feasible with usable multiplier estimates: a few Newton steps
        # finish what the penalty schedule would otherwise spend its
        # remaining rounds grinding through.  A failed handoff waits for a
        # decade of feasibility progress before trying again.
        if viol <= polish_gate:
            finished = polish_chain(chain, u, config, duals=(lam, mu))
            if finished is not None:
                finished.n_outer = outer
                finished.n_evals += evals
                return finished
            polish_gate = 0.1 * viol
        if viol > 0.25 * prev_viol:
            rho = rho * config.penalty_growth
        if viol < best_viol * 0.9:
            best_viol = min(best_viol, viol)
            stalled = 0
        else:
            stalled += 1
        if rho > config.penalty_stall and viol > config.tol_feas and stalled >= 3:
            return SolveOutcome(u, f, viol, "infeasible", outer, evals, lam, mu)
        rho = min(rho, 10.0 * config.penalty_max)
        prev_f = f
        prev_viol = viol
    f, eq, ineq = chain.value(u)
    viol = 0.0
    if eq.size:
        viol = float(np.abs(eq).max())
    if ineq.size:
        viol = max(viol, float(np.maximum(0.0, ineq).max()))
    status = "converged" if viol <= config.tol_feas else "exhausted"
    return SolveOutcome(u, f, viol, status, outer, evals, lam, mu)
