"""Time integration of the three flows.

original:    u_t = lap u^m                      (extinction in finite time)
rescaled:    d/dt v^p = lap v + c v^p           (stationary profile V)
linearized:  p V^(p-1) f_t = lap f + c p V^(p-1) f

All steppers are implicit Euler.  The rescaled flow is advanced in the
conserved variable w = v^p, which obeys w_t = lap w^m + c w and has a maximum
principle; v is derived output.  Nonlinear steps use damped Newton with a
positivity-preserving line search (iterates are clipped at 1e-300 only inside
the search; an accepted step must be strictly positive).

Original runs stop near extinction (default sup u < 1e-6 sup u0); the
extinction time itself is always extrapolated from the exact linearity of
sup(u)^(1-m) in time, never simulated to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded, solveh_banded

from .grid import Grid
from .stationary import Exponents

_FLOOR = 1e-300


class StepFailure(RuntimeError):
    """Newton did not converge within the step (caller may halve dt)."""


class PositivityLoss(RuntimeError):
    """A converged step left the positive cone."""


class InsufficientDecay(RuntimeError):
    """Trajectory never decayed enough to extrapolate the extinction time."""


@dataclass
class FlowState:
    kind: str            # "original" | "rescaled" | "linearized"
    field: np.ndarray
    time: float
    newton_iters: int = 0

    def __post_init__(self):
        if self.kind not in ("original", "rescaled", "linearized"):
            raise ValueError(f"unknown flow kind {self.kind!r}")


@dataclass
class DtPolicy:
    """Adaptive step control: halve on StepFailure, grow on easy steps."""

    dt: float = 1e-3
    dt_min: float = 1e-8
    dt_max: float = 1e-2
    grow: float = 1.2
    easy_iters: int = 3   # grow dt when Newton needed at most this many iterations


@dataclass
class Trajectory:
    kind: str
    sample_times: list = field(default_factory=list)
    fields: list = field(default_factory=list)          # stored field at each sample
    diagnostics: list = field(default_factory=list)     # sampler outputs, if any
    dt_history: list = field(default_factory=list)
    newton_history: list = field(default_factory=list)
    initial_field: np.ndarray | None = None

    def sup_norms(self) -> np.ndarray:
        return np.array([np.max(np.abs(f)) for f in self.fields])

    def step_summary(self) -> dict:
        """Step statistics for the trajectory metadata JSON."""
        dts = np.asarray(self.dt_history, dtype=float)
        its = np.asarray(self.newton_history, dtype=float)
        return {
            "kind": self.kind,
            "steps": int(dts.size),
            "samples": len(self.sample_times),
            "dt_min": float(dts.min()) if dts.size else None,
            "dt_max": float(dts.max()) if dts.size else None,
            "newton_total": int(its.sum()) if its.size else 0,
            "newton_max": int(its.max()) if its.size else 0,
        }


def _newton_implicit(scale_hint, guess, residual, jac_banded, max_iters=30,
                     require_positive=True):
    """Damped Newton for F(x) = 0, iterated to the rounding floor.

    scale_hint estimates the magnitude of the terms composing F, so that
    eps * scale_hint is the evaluation noise: convergence is declared below a
    small multiple of it, and stagnation (no line-search progress) is accepted
    as converged while the residual sits within a larger multiple.  Stopping
    at a loose absolute tolerance instead would inject per-step noise into
    the entropy traces (visible for large-amplitude profiles at p near 1).
    """
    eps = np.finfo(float).eps
    floor = 2.0 * eps * scale_hint
    guard = 512.0 * eps * scale_hint
    x = guess.copy()
    res = residual(x)
    rnorm = float(np.max(np.abs(res)))

    def accept(iters):
        if require_positive and x.min() <= _FLOOR * 10:
            raise PositivityLoss("converged step is not strictly positive")
        return x, iters

    for it in range(1, max_iters + 1):
        if rnorm <= floor:
            return accept(it - 1)
        step = solve_banded((1, 1), jac_banded(x), -res)
        lam = 1.0
        improved = False
        while lam >= 1e-12:
            xt = x + lam * step
            if require_positive:
                xt = np.maximum(xt, _FLOOR)
            rt = residual(xt)
            if np.max(np.abs(rt)) < rnorm:
                x, res = xt, rt
                rnorm = float(np.max(np.abs(res)))
                improved = True
                break
            if lam == 1.0 and rnorm <= guard:
                return accept(it)      # stagnation at the rounding floor
            lam *= 0.5
        if not improved:
            if rnorm <= guard:
                return accept(it)
            raise StepFailure(f"line search stalled (residual {rnorm:.3e})")
    if rnorm <= guard:
        return accept(max_iters)
    raise StepFailure(f"Newton did not converge (residual {rnorm:.3e})")


def step_rescaled(grid: Grid, exps: Exponents, state: FlowState, dt: float) -> FlowState:
    """One implicit Euler step of w_t = lap w^m + c w in w = v^p."""
    if state.kind != "rescaled":
        raise ValueError("step_rescaled needs a rescaled state")
    v = grid.check_field(state.field)
    if v.min() <= 0:
        raise PositivityLoss("rescaled state must be positive")
    p, m, c = exps.p, exps.m, exps.c
    w_old = v ** p
    qw, lo, di = grid.quad_weights, grid.lap_offdiag, grid.lap_diag

    def lap(f):
        af = di * f
        af[1:] += lo * f[:-1]
        af[:-1] += lo * f[1:]
        return -af / qw

    def residual(w):
        return w - dt * (lap(w ** m) + c * w) - w_old

    def jac(w):
        dmu = m * w ** (m - 1.0)
        ab = np.zeros((3, grid.n))
        ab[0, 1:] = dt * (lo / qw[:-1]) * dmu[1:]
        ab[1, :] = 1.0 - dt * c + dt * (di / qw) * dmu
        ab[2, :-1] = dt * (lo / qw[1:]) * dmu[:-1]
        return ab

    scale = float(np.max(w_old) + 4.0 * dt * np.max(v) / grid.h ** 2
                  + dt * c * np.max(w_old))
    w_new, iters = _newton_implicit(scale, w_old, residual, jac)
    return FlowState(kind="rescaled", field=w_new ** m, time=state.time + dt,
                     newton_iters=iters)


def step_original(grid: Grid, exps: Exponents, state: FlowState, dt: float) -> FlowState:
    """One implicit Euler step of u_t = lap u^m."""
    if state.kind != "original":
        raise ValueError("step_original needs an original state")
    u_old = grid.check_field(state.field)
    if u_old.min() < 0:
        raise PositivityLoss("original state must be nonnegative")
    if u_old.max() == 0.0:
        return FlowState(kind="original", field=u_old.copy(), time=state.time + dt)
    m = exps.m
    qw, lo, di = grid.quad_weights, grid.lap_offdiag, grid.lap_diag

    def lap(f):
        af = di * f
        af[1:] += lo * f[:-1]
        af[:-1] += lo * f[1:]
        return -af / qw

    def residual(u):
        return u - dt * lap(u ** m) - u_old

    def jac(u):
        dmu = m * u ** (m - 1.0)
        ab = np.zeros((3, grid.n))
        ab[0, 1:] = dt * (lo / qw[:-1]) * dmu[1:]
        ab[1, :] = 1.0 + dt * (di / qw) * dmu
        ab[2, :-1] = dt * (lo / qw[1:]) * dmu[:-1]
        return ab

    guess = np.maximum(u_old, _FLOOR)
    scale = float(np.max(u_old) + 4.0 * dt * np.max(u_old ** m) / grid.h ** 2)
    u_new, iters = _newton_implicit(scale, guess, residual, jac)
    return FlowState(kind="original", field=u_new, time=state.time + dt,
                     newton_iters=iters)


def step_linearized(grid: Grid, V, exps: Exponents, state: FlowState,
                    dt: float) -> FlowState:
    """One implicit Euler step of p V^(p-1) f_t = lap f + c p V^(p-1) f.

    The step matrix p W + dt (A - c p W) is singular at dt = T (the lowest
    weighted mode); dt is rejected well before that pole.
    """
    if state.kind != "linearized":
        raise ValueError("step_linearized needs a linearized state")
    if dt >= 0.5 * exps.T:
        raise ValueError(f"dt = {dt} too close to the spectral pole at T = {exps.T}")
    f = grid.check_field(state.field)
    V = grid.check_field(V)
    p, c = exps.p, exps.c
    wq = grid.quad_weights * V ** (p - 1.0)   # W against quadrature
    ab = np.zeros((2, grid.n))
    ab[0, 1:] = dt * grid.lap_offdiag
    ab[1, :] = p * wq + dt * (grid.lap_diag - c * p * wq)
    f_new = solveh_banded(ab, p * wq * f)
    return FlowState(kind="linearized", field=f_new, time=state.time + dt)


_STEPPERS = {
    "rescaled": lambda grid, exps, V, s, dt: step_rescaled(grid, exps, s, dt),
    "original": lambda grid, exps, V, s, dt: step_original(grid, exps, s, dt),
    "linearized": lambda grid, exps, V, s, dt: step_linearized(grid, V, exps, s, dt),
}


def evolve(grid: Grid, exps: Exponents, initial: FlowState, horizon: float,
           dt_policy: DtPolicy | None = None, sample_every: float | None = None,
           sample_times=None, sampler=None, V=None,
           stop_sup_below: float | None = None) -> Trajectory:
    """March a flow to the horizon, sampling at exact multiples of sample_every
    (or at the explicit sample_times).  dt adapts: halve on StepFailure down to
    dt_min, grow by dt_policy.grow on easy steps up to dt_max.  Steps are
    clipped so samples land exactly on the requested times.

    stop_sup_below: halt (after the current sample) once sup|field| drops below
    this absolute level; original runs near extinction use it.
    """
    if initial.kind == "linearized" and V is None:
        raise ValueError("linearized evolve needs the profile V")
    if initial.kind == "original" and stop_sup_below is None:
        # near-extinction stop: extrapolate, never simulate the degenerate limit
        stop_sup_below = 1e-6 * float(np.max(np.abs(initial.field)))
    pol = dt_policy or DtPolicy()
    if sample_times is None:
        if sample_every is None:
            raise ValueError("give sample_every or sample_times")
        n_samples = int(np.floor(horizon / sample_every + 1e-9))
        sample_times = [(i + 1) * sample_every for i in range(n_samples)]
    sample_times = [float(t) for t in sample_times]
    if any(t2 <= t1 for t1, t2 in zip(sample_times, sample_times[1:])):
        raise ValueError("sample times must be strictly increasing")

    traj = Trajectory(kind=initial.kind, initial_field=initial.field.copy())
    state = initial
    dt = pol.dt
    stepper = _STEPPERS[initial.kind]
    for target in sample_times:
        if target > horizon + 1e-12:
            break
        while state.time < target - 1e-12 * max(1.0, target):
            dt_eff = min(dt, target - state.time)
            clipped = dt_eff < dt
            try:
                new_state = stepper(grid, exps, V, state, dt_eff)
            except StepFailure:
                if dt <= pol.dt_min:
                    raise
                dt = max(pol.dt_min, dt / 2.0)
                continue
            if clipped:
                new_state.time = target
            state = new_state
            traj.dt_history.append(dt_eff)
            traj.newton_history.append(state.newton_iters)
            if not clipped and state.newton_iters <= pol.easy_iters:
                dt = min(pol.dt_max, dt * pol.grow)
        state.time = target
        traj.sample_times.append(state.time)
        traj.fields.append(state.field.copy())
        if sampler is not None:
            traj.diagnostics.append(sampler(state.time, state.field))
        if stop_sup_below is not None and np.max(np.abs(state.field)) < stop_sup_below:
            break
    return traj


@dataclass(frozen=True)
class ExtinctionEstimate:
    T_est: float
    window: tuple
    slope: float
    intercept: float
    fit_residual: float


def estimate_extinction_time(traj: Trajectory, m: float,
                             window=(1e-3, 0.8)) -> ExtinctionEstimate:
    """Extrapolate the extinction time from sup(u)^(1-m) versus t, which the
    separate-variables law makes exactly linear.  The fit window keeps samples
    with sup(u) in window * sup(u0)."""
    if traj.kind != "original":
        raise ValueError("extinction estimate needs an original-flow trajectory")
    times = np.asarray(traj.sample_times)
    sups = traj.sup_norms()
    sup0 = float(np.max(np.abs(traj.initial_field)))
    lo, hi = window
    sel = (sups > lo * sup0) & (sups < hi * sup0)
    if sel.sum() < 10 or sups.min() > hi * sup0:
        raise InsufficientDecay(
            f"only {int(sel.sum())} samples inside the fit window")
    y = sups[sel] ** (1.0 - m)
    t = times[sel]
    A = np.vstack([t, np.ones(t.size)]).T
    (slope, intercept), res, *_ = np.linalg.lstsq(A, y, rcond=None)
    fit_res = float(np.sqrt(res[0] / t.size)) if res.size else 0.0
    if slope >= 0:
        raise InsufficientDecay("sup norm is not decaying over the fit window")
    return ExtinctionEstimate(T_est=float(-intercept / slope),
                              window=(float(t[0]), float(t[-1])),
                              slope=float(slope), intercept=float(intercept),
                              fit_residual=fit_res)


def rescaled_time_of(tau, T: float):
    """Logarithmic clock t = T log(T / (T - tau))."""
    return T * np.log(T / (T - np.asarray(tau)))


def original_time_of(t, T: float):
    """Inverse clock tau = T (1 - exp(-t/T))."""
    return T * (1.0 - np.exp(-np.asarray(t) / T))


def original_to_rescaled(u, t, exps: Exponents):
    """Map an original-flow field at rescaled time t to the conserved variable
    w(t) = exp(t/((1-m)T)) u(tau(t)) = exp(c t) u."""
    return np.exp(exps.c * t) * np.asarray(u)
