"""Entropy functionals, Rayleigh quotients and inequality checks along flows.

Conventions (f = v - V, h = v/V - 1):

  E_lin  = int f^2 V^(p-1) dx
  I_lin  = int |grad f|^2 dx - p c int f^2 V^(p-1) dx
  E_nl   = int [(v^(p+1) - V^(p+1)) - (p+1)/p (v^p - V^p) V] dx
  A_nl   = |int (v^p - V^p) phi_kj dx|            (plain Lebesgue measure)
  Q_lin  = |<f, phi_kj>_V| / sqrt(E_lin)
  Q_nl   = A_nl / sqrt(E_nl)                       (undefined for E_nl <= 1e-14)

Differences of powers are evaluated through their integral kernels, e.g. the
entropy density equals (p+1) f^2 int_0^1 (V + s f)^(p-1) s ds, which avoids
the catastrophic cancellation of the naive v^(p+1) - V^(p+1) form and keeps
the functionals meaningful down to machine-size perturbations.

Checks that differentiate sampled traces in time use centered differences
with a Richardson estimate of the finite-difference error; inequalities carry
an explicit O(dt) slack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, dirichlet_energy, integrate
from .spectrum import EigenSystem, GapReport
from .stationary import Exponents

QN_ENTROPY_FLOOR = 1e-14   # below this, nonlinear quotients are undefined (0/0 guard)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class WindowTooCoarse(RuntimeError):
    """Finite-difference noise dominates the quantity being estimated."""


class InsufficientTrace(RuntimeError):
    """The sampled trace does not cover the needed time window."""


def power_difference(V, f, q: float) -> np.ndarray:
    """(V + f)^q - V^q as q f int_0^1 (V + s f)^(q-1) ds (cancellation-free).

    Requires V > 0 and V + f > 0 nodewise.
    """
    acc = np.zeros_like(np.asarray(V, dtype=float))
    for x, w in zip(_GL_X, _GL_W):
        acc += w * (V + x * f) ** (q - 1.0)
    return q * f * acc


def entropy_density(V, f, p: float) -> np.ndarray:
    """Pointwise entropy integrand: (p+1) f^2 int_0^1 (V + s f)^(p-1) s ds >= 0."""
    acc = np.zeros_like(np.asarray(V, dtype=float))
    for x, w in zip(_GL_X, _GL_W):
        acc += (w * x) * (V + x * f) ** (p - 1.0)
    return (p + 1.0) * f * f * acc


def nonlinear_entropy(grid: Grid, V, p: float, v) -> float:
    """E_nl[v] against the grid quadrature."""
    return integrate(grid, entropy_density(V, np.asarray(v) - np.asarray(V), p))


@dataclass
class EntropyReport:
    """All sampled functionals at one time.

    Q_lin / Q_nl / A_nl are lists over distinct eigenvalues k = 1..k_p of
    arrays of length N_k; Q_nl is None when E_nl <= 1e-14.
    """

    t: float
    E_lin: float
    I_lin: float
    E_nl: float
    h_inf: float
    h_L2V_sq: float
    cubic: float                 # int |f|^3 V^(p-2) dx
    Q_lin: list
    Q_nl: list | None
    A_nl: list
    delta_now: float             # current relative-error level, = h_inf
    h: np.ndarray                # pointwise relative error (not serialized)

    def max_q_nl(self) -> float | None:
        if self.Q_nl is None:
            return None
        return max(float(np.max(a)) for a in self.Q_nl) if self.Q_nl else 0.0

    def max_q_lin(self) -> float:
        return max(float(np.max(a)) for a in self.Q_lin) if self.Q_lin else 0.0


def entropy_report(grid: Grid, V, exps: Exponents, eigs: EigenSystem,
                   gap: GapReport, v, t: float) -> EntropyReport:
    """Evaluate every tracked functional for a rescaled-flow field v > 0."""
    V = grid.check_field(V)
    v = grid.check_field(v)
    if v.min() <= 0:
        raise ValueError("rescaled field must be positive")
    p, c = exps.p, exps.c
    f = v - V
    h = f / V
    wq = grid.quad_weights

    e_lin = float(np.dot(wq, f * f * V ** (p - 1.0)))
    h_l2v_sq = float(np.dot(wq, h * h * V ** (p + 1.0)))
    i_lin = dirichlet_energy(grid, f) - p * c * e_lin
    e_nl = float(np.dot(wq, entropy_density(V, f, p)))
    cubic = float(np.dot(wq, np.abs(f) ** 3 * V ** (p - 2.0)))
    h_inf = float(np.max(np.abs(h)))

    k_p = gap.k_p
    q_lin, a_nl = [], []
    vpdiff = power_difference(V, f, p)
    sqrt_e_lin = np.sqrt(e_lin) if e_lin > 0 else 0.0
    for k in range(k_p):
        block = eigs.eigenfunctions[k]
        coeffs = block.T @ (wq * eigs.weight * f)
        q_lin.append(np.abs(coeffs) / sqrt_e_lin if sqrt_e_lin > 0
                     else np.zeros_like(coeffs))
        a_nl.append(np.abs(block.T @ (wq * vpdiff)))
    q_nl = None
    if e_nl > QN_ENTROPY_FLOOR:
        root = np.sqrt(e_nl)
        q_nl = [a / root for a in a_nl]

    return EntropyReport(t=t, E_lin=e_lin, I_lin=i_lin, E_nl=e_nl, h_inf=h_inf,
                         h_L2V_sq=h_l2v_sq, cubic=cubic, Q_lin=q_lin, Q_nl=q_nl,
                         A_nl=a_nl, delta_now=h_inf, h=h)


def make_sampler(grid: Grid, V, exps: Exponents, eigs: EigenSystem, gap: GapReport):
    """Sampler closure for flow.evolve: (t, v) -> EntropyReport."""
    def sampler(t, v):
        return entropy_report(grid, V, exps, eigs, gap, v, t)
    return sampler


@dataclass(frozen=True)
class ComparisonConstants:
    """Measured stand-ins for the abstract comparison constants: extremal
    sandwich ratios, the cubic-remainder kappa and the smoothing kappa."""

    sandwich_lo: float
    sandwich_hi: float
    remainder_kappa: float
    smoothing_kappa: float


def measure_comparison_constants(reports, p: float, ndim: int) -> ComparisonConstants:
    """Extract the measured comparison constants from a uniformly sampled
    trace: extremal ratios 2 E_nl / ((p+1) E_lin), the median cubic-remainder
    ratio over Richardson-valid samples, and the delayed smoothing sup."""
    ratios = [2.0 * r.E_nl / ((p + 1.0) * r.E_lin)
              for r in reports if r.E_lin > 1e-22]
    if not ratios:
        raise InsufficientTrace("no samples with measurable linear entropy")
    try:
        prod = production_residual(reports, p)
        kap = prod.kappa[prod.valid & np.isfinite(prod.kappa)]
        remainder = float(np.median(kap)) if kap.size else np.nan
    except (WindowTooCoarse, InsufficientTrace):
        remainder = np.nan
    try:
        smoothing, _, _ = smoothing_check(reports, ndim)
    except InsufficientTrace:
        smoothing = np.nan
    return ComparisonConstants(sandwich_lo=float(min(ratios)),
                               sandwich_hi=float(max(ratios)),
                               remainder_kappa=remainder,
                               smoothing_kappa=smoothing)


@dataclass(frozen=True)
class ProductionSeries:
    """Entropy-production decomposition along a uniformly sampled trace.

    residual[i] ~ R_p at times[i]: the finite-difference dE_nl/dt plus
    (p+1)/p I_lin.  valid[i] marks samples where the Richardson estimate of
    the finite-difference error is below 30% of |residual|.
    """

    times: np.ndarray
    dE_dt: np.ndarray
    residual: np.ndarray
    kappa: np.ndarray        # |R_p| / int |f|^3 V^(p-2)
    fd_error: np.ndarray
    valid: np.ndarray


def production_residual(reports, p: float, require_valid: bool = True) -> ProductionSeries:
    """Estimate R_p = dE_nl/dt + (p+1)/p I_lin from consecutive reports.

    Needs uniform sampling; raises WindowTooCoarse when no sample passes the
    Richardson check (finite differences dominated by curvature error).
    """
    ts = np.array([r.t for r in reports])
    if ts.size < 5:
        raise InsufficientTrace("need at least 5 uniformly spaced reports")
    dts = np.diff(ts)
    if np.max(np.abs(dts - dts[0])) > 1e-9 * dts[0]:
        raise ValueError("production residual needs uniform sampling")
    dt = dts[0]
    E = np.array([r.E_nl for r in reports])
    I = np.array([r.I_lin for r in reports])
    cub = np.array([r.cubic for r in reports])

    idx = np.arange(2, ts.size - 2)
    d1 = (E[idx + 1] - E[idx - 1]) / (2.0 * dt)
    d2 = (E[idx + 2] - E[idx - 2]) / (4.0 * dt)
    fd_err = np.abs(d1 - d2) / 3.0
    resid = d1 + (p + 1.0) / p * I[idx]
    with np.errstate(invalid="ignore", divide="ignore"):
        kappa = np.where(cub[idx] > 0, np.abs(resid) / cub[idx], np.nan)
    valid = fd_err <= 0.3 * np.abs(resid)
    if require_valid and not valid.any():
        raise WindowTooCoarse("finite-difference error dominates R_p everywhere")
    return ProductionSeries(times=ts[idx], dE_dt=d1, residual=resid,
                            kappa=kappa, fd_error=fd_err, valid=valid)


@dataclass(frozen=True)
class SandwichMargin:
    ratio: float          # 2 E_nl / ((p+1) E_lin)
    delta: float          # measured relative-error level
    implied_C: float      # smallest C with ratio in [(1+C d)^-2, (1+C d)^2]


def sandwich_check(report: EntropyReport, p: float) -> SandwichMargin:
    """Two-sided comparison of linear and nonlinear entropy at one sample."""
    if report.E_lin <= 0:
        return SandwichMargin(ratio=1.0, delta=report.h_inf, implied_C=0.0)
    ratio = 2.0 * report.E_nl / ((p + 1.0) * report.E_lin)
    delta = report.h_inf
    if delta == 0.0:
        return SandwichMargin(ratio=ratio, delta=0.0, implied_C=0.0)
    implied = (max(ratio, 1.0 / ratio) ** 0.5 - 1.0) / delta
    return SandwichMargin(ratio=ratio, delta=delta, implied_C=max(implied, 0.0))


@dataclass(frozen=True)
class ModeComparison:
    k: int
    j: int
    q_lin: float
    q_nl: float | None
    limit_factor: float    # sqrt(2) p / sqrt(p+1)
    excess: float | None   # |q_nl - limit_factor * q_lin|
    scale: float           # sqrt(E_lin), the size of the bracket slack term


def rayleigh_compare(report: EntropyReport, p: float) -> list:
    """Per-mode comparison of the linear and nonlinear Rayleigh quotients."""
    factor = np.sqrt(2.0) * p / np.sqrt(p + 1.0)
    scale = np.sqrt(max(report.E_lin, 0.0))
    out = []
    for k0, q_block in enumerate(report.Q_lin):
        for j0 in range(q_block.size):
            qn = None if report.Q_nl is None else float(report.Q_nl[k0][j0])
            ql = float(q_block[j0])
            excess = None if qn is None else abs(qn - factor * ql)
            out.append(ModeComparison(k=k0 + 1, j=j0 + 1, q_lin=ql, q_nl=qn,
                                      limit_factor=factor, excess=excess,
                                      scale=scale))
    return out


def _interp_log(ts, values, t):
    """log-linear interpolation of a positive series at time t."""
    logs = np.log(values)
    return float(np.exp(np.interp(t, ts, logs)))


def delayed_ratio_sup(reports, numerator, exponent: float, t_start: float,
                      entropy_floor: float = 1e-250):
    """sup over samples t >= t_start of numerator(report) / E_nl(t-1)^exponent.

    E_nl at the delayed time is log-interpolated between samples.  Samples
    where E_nl(t-1) has collapsed below entropy_floor are excluded (0/0
    exclusion at the fixed point).  Returns (sup, time at sup, series).
    """
    ts = np.array([r.t for r in reports])
    Es = np.array([r.E_nl for r in reports])
    if ts.size < 3 or ts[-1] < t_start:
        raise InsufficientTrace("trace does not reach the requested start time")
    pos = Es > 0
    if not pos.any():
        raise InsufficientTrace("entropy vanishes along the whole trace (0/0)")
    sup, arg, series = 0.0, None, []
    for r in reports:
        if r.t < t_start or r.t - 1.0 < ts[pos][0]:
            continue
        e_del = _interp_log(ts[pos], Es[pos], r.t - 1.0)
        if e_del <= entropy_floor:
            continue
        num = numerator(r)
        if num is None:
            continue
        val = num / e_del ** exponent
        series.append((r.t, val))
        if val > sup:
            sup, arg = val, r.t
    if not series:
        raise InsufficientTrace("no admissible samples for the delayed ratio")
    return sup, arg, series


def smoothing_check(reports, ndim: int, t_start: float | None = None):
    """sup_t ||h(t)||_inf / E_nl(t-1)^(1/(4N)) over the late trace.

    A finite, horizon-stable value certifies the delayed smoothing bound.
    """
    ts = [r.t for r in reports]
    if t_start is None:
        t_start = ts[0] + 1.0
    return delayed_ratio_sup(reports, lambda r: r.h_inf, 1.0 / (4.0 * ndim), t_start)


def decaying_prefix(reports):
    """Reports up to and including the entropy minimum.  Beyond it a finite
    clock-matching resolution lets the unstable profile direction re-emerge,
    so quotient diagnostics are meaningful only on the decaying segment."""
    Es = np.array([r.E_nl for r in reports])
    return list(reports[: int(np.argmin(Es)) + 1])


def ao_window(reports):
    """Reports up to the minimum of the worst nonlinear quotient.  The
    quotients decay while the trajectory tracks the matched-clock flow and
    re-grow once the residual instability outruns sqrt(E); the turning point
    bounds the window on which almost-orthogonality statements are testable
    at the given calibration resolution."""
    qs = []
    for r in reports:
        q = r.max_q_nl()
        qs.append(np.inf if q is None else q)
    return list(reports[: int(np.argmin(qs)) + 1])


def quotient_smallness_times(reports, eps_ladder=(0.1, 0.03, 0.01)):
    """For each eps, the first sample time after which every nonlinear quotient
    stays <= eps for the rest of the trace (None if that never happens);
    samples with undefined quotients (entropy at the floor) count as small."""
    maxq = []
    for r in reports:
        m = r.max_q_nl()
        maxq.append(0.0 if m is None else m)
    out = {}
    for eps in eps_ladder:
        time = None
        for r, q in zip(reversed(reports), reversed(maxq)):
            if q <= eps:
                time = r.t
            else:
                break
        out[eps] = time
    return out


def time_monotonicity_check(reports, exps: Exponents, t_min: float | None = None,
                            span: int = 5):
    """Two-sided integral bounds on h between checkpoint pairs (t0, t1), valid
    for t >= T log 2: integrate h in time by the trapezoid rule over the
    sampled fields and compare with the exponential envelopes driven by the
    pointwise bound d/dt h <= 2 c m (h + 1).

    Returns the worst additive violation (0 when all bounds hold).
    """
    c, m = exps.c, exps.m
    if t_min is None:
        t_min = exps.T * np.log(2.0)
    eligible = [r for r in reports if r.t >= t_min]
    if len(eligible) < span + 1:
        raise InsufficientTrace("not enough samples beyond T log 2")
    twocm = 2.0 * c * m
    worst = 0.0
    for i0 in range(0, len(eligible) - span, span):
        chunk = eligible[i0:i0 + span + 1]
        ts = np.array([r.t for r in chunk])
        H = np.stack([r.h for r in chunk])
        integral = np.trapezoid(H, ts, axis=0)
        d = ts[-1] - ts[0]
        h0, h1 = chunk[0].h, chunk[-1].h
        lower = (1.0 - np.exp(-twocm * d)) / twocm * h1 - c * m * d ** 2
        upper = (np.exp(twocm * d) - 1.0) / twocm * h0 \
            + c * m * d ** 2 * np.exp(twocm * d)
        worst = max(worst,
                    float(np.max(lower - integral, initial=0.0)),
                    float(np.max(integral - upper, initial=0.0)))
    return worst


def benilan_crandall_margin(reports, exps: Exponents, t_min: float | None = None):
    """Worst violation of the discrete d/dt h <= 2 c m (h+1) check (per unit
    O(dt) slack is the caller's business).  Valid for t >= T log 2."""
    c, m = exps.c, exps.m
    if t_min is None:
        t_min = exps.T * np.log(2.0)
    eligible = [r for r in reports if r.t >= t_min]
    if len(eligible) < 2:
        raise InsufficientTrace("not enough samples beyond T log 2")
    worst = -np.inf
    for r0, r1 in zip(eligible, eligible[1:]):
        dt = r1.t - r0.t
        rate = (r1.h - r0.h) / dt
        worst = max(worst, float(np.max(rate - 2.0 * c * m * (r0.h + 1.0))))
    return worst


def trace_rows(reports) -> tuple:
    """Flatten reports into (header, rows) for the trace CSV.  Column names
    and their order are part of the stable interface: t, E_lin, I_lin, E_nl,
    h_inf, then Q_k_j, Qn_k_j, A_k_j per tracked mode (Qn cells are empty
    when the quotient is undefined), then auxiliary columns."""
    if not reports:
        return ["t", "E_lin", "I_lin", "E_nl", "h_inf", "h_L2V_sq", "cubic"], []
    mode_idx = [(k + 1, j + 1)
                for k, block in enumerate(reports[0].Q_lin)
                for j in range(block.size)]
    header = ["t", "E_lin", "I_lin", "E_nl", "h_inf"]
    header += [f"Q_{k}_{j}" for k, j in mode_idx]
    header += [f"Qn_{k}_{j}" for k, j in mode_idx]
    header += [f"A_{k}_{j}" for k, j in mode_idx]
    header += ["h_L2V_sq", "cubic"]
    rows = []
    for r in reports:
        row = [r.t, r.E_lin, r.I_lin, r.E_nl, r.h_inf]
        row += [float(r.Q_lin[k - 1][j - 1]) for k, j in mode_idx]
        if r.Q_nl is None:
            row += [None] * len(mode_idx)
        else:
            row += [float(r.Q_nl[k - 1][j - 1]) for k, j in mode_idx]
        row += [float(r.A_nl[k - 1][j - 1]) for k, j in mode_idx]
        row += [r.h_L2V_sq, r.cubic]
        rows.append(row)
    return header, rows
