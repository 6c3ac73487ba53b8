"""Entropy functionals, comparison inequalities and trace checks."""

import numpy as np
import pytest

import fdelab as F
from fdelab.diagnostics import (EntropyReport, ao_window, decaying_prefix,
                                entropy_density, power_difference, trace_rows)


def analytic_remainder_kappa(p, c):
    """Small-delta limit of the cubic-remainder constant:
    c (p+1)(p-1)/6 * [(p+1) + |p-2|]."""
    return c * (p ** 2 - 1.0) / 6.0 * ((p + 1.0) + abs(p - 2.0))


def report_for(setup, v, t=0.0):
    return F.entropy_report(setup.grid, setup.profile.V, setup.exps, setup.eigs,
                            setup.gap, v, t)


class TestStablePowerDifferences:
    def test_matches_naive_at_moderate_amplitude(self, interval_p2_small):
        V = interval_p2_small.profile.V
        rng = np.random.RandomState(1)
        f = 1e-3 * V * rng.uniform(-1, 1, V.size)
        for q in (1.5, 2.0, 3.0, 3.5):
            naive = (V + f) ** q - V ** q
            stable = power_difference(V, f, q)
            assert np.max(np.abs(stable - naive)) <= 1e-10 * np.max(np.abs(naive))

    def test_entropy_density_nonnegative_and_quadratic(self, interval_p2_small):
        V = interval_p2_small.profile.V
        phi = interval_p2_small.eigs.mode(2, 1)
        p = interval_p2_small.exps.p
        for eps in (1e-10, 1e-7, 1e-4):
            d1 = entropy_density(V, eps * phi, p)
            d2 = entropy_density(V, 2.0 * eps * phi, p)
            assert np.all(d1 >= 0)
            nz = np.abs(phi) > 1e-3
            assert np.allclose(d2[nz] / d1[nz], 4.0, rtol=1e-4)

    def test_no_cancellation_floor(self, interval_p2_small):
        # naive evaluation loses the signal at machine-small f; kernels do not
        s = interval_p2_small
        V, p = s.profile.V, s.exps.p
        eps = 1e-9
        f = eps * s.eigs.mode(2, 1)
        e_stable = F.integrate(s.grid, entropy_density(V, f, p))
        expect = (p + 1.0) / 2.0 * eps ** 2
        assert abs(e_stable / expect - 1.0) < 1e-6


class TestEntropyReport:
    def test_coincidence_case(self, interval_p2_small):
        s = interval_p2_small
        r = report_for(s, s.profile.V.copy())
        assert r.E_lin == 0.0 and r.E_nl == 0.0 and r.h_inf == 0.0
        assert abs(r.I_lin) < 1e-12
        assert r.Q_nl is None
        assert all(np.max(a) < 1e-12 for a in r.A_nl)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_single_mode_sandwich_limit(self, interval_p2, k):
        # E_nl / E_lin -> (p+1)/2 as the perturbation shrinks
        s = interval_p2
        eps = 1e-4
        r = report_for(s, s.profile.V + eps * s.eigs.mode(k, 1))
        assert abs(r.E_nl / r.E_lin - (s.exps.p + 1.0) / 2.0) < 0.01 * (s.exps.p + 1) / 2

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_single_mode_production_identity(self, interval_p2, k):
        # I_lin = (lambda_k - p c) eps^2 for v = V + eps phi_k
        s = interval_p2
        eps = 1e-4
        r = report_for(s, s.profile.V + eps * s.eigs.mode(k, 1))
        expect = (s.eigs.eigenvalues[k - 1] - s.exps.p * s.exps.c) * eps ** 2
        assert abs(r.I_lin - expect) <= 1e-6 * abs(expect)

    def test_weighted_norm_consistency(self, calibrated_trace_p2):
        _, result = calibrated_trace_p2
        for r in result.reports[::50]:
            if r.E_lin > 0:
                assert abs(r.h_L2V_sq - r.E_lin) <= 1e-12 * r.E_lin

    def test_rejects_nonpositive_field(self, interval_p2_small):
        s = interval_p2_small
        with pytest.raises(ValueError):
            report_for(s, 0.0 * s.profile.V)


class TestProductionResidual:
    def test_fixed_point_noise_only(self, interval_p2_small):
        s = interval_p2_small
        _, reports = F.run_rescaled(s, s.profile.V.copy(), horizon=1.0,
                                    dt=5e-3, cadence=0.05)
        ps = F.production_residual(reports, s.exps.p, require_valid=False)
        assert np.max(np.abs(ps.residual)) < 1e-10

    def test_kappa_finite_and_below_analytic_envelope(self, amp3_uncalibrated_traces):
        setup, traces = amp3_uncalibrated_traces
        p = setup.exps.p
        envelope = 10.0 * analytic_remainder_kappa(p, setup.exps.c)
        meds = {}
        for dt, reports in traces.items():
            ps = F.production_residual(reports, p)
            h = np.array([r.h_inf for r in reports])[2:-2]
            win = ps.valid & (h >= 0.02) & (h <= 1.0 / (2.0 * p))
            assert win.sum() > 100
            kap = ps.kappa[win]
            assert np.max(kap) <= envelope
            meds[dt] = float(np.median(kap))
        drift = abs(meds[2.5e-4] - meds[5e-4]) / meds[5e-4]
        assert drift <= 0.10

    def test_remainder_vanishes_linearly_in_h(self, amp3_calibrated_traces):
        setup, _, traces = amp3_calibrated_traces
        reports = traces[2.5e-4]
        ps = F.production_residual(reports, setup.exps.p)
        h = np.array([r.h_inf for r in reports])[2:-2]
        I = np.array([r.I_lin for r in reports])[2:-2]
        win = ps.valid & (h >= 0.03) & (h <= 0.25) & (I > 0)
        ratio = np.abs(ps.residual[win]) / I[win]
        slope = np.polyfit(np.log(h[win]), np.log(ratio), 1)[0]
        assert 0.6 <= slope <= 1.6

    def test_window_too_coarse_detected(self, calibrated_trace_p2):
        _, result = calibrated_trace_p2
        sparse = result.reports[::20]       # cadence 0.4: curvature dominates
        with pytest.raises(F.WindowTooCoarse):
            F.production_residual(sparse, 2.0)

    def test_requires_uniform_sampling(self, calibrated_trace_p2):
        _, result = calibrated_trace_p2
        ragged = result.reports[:10] + result.reports[11:20]
        with pytest.raises(ValueError):
            F.production_residual(ragged, 2.0)


class TestSandwich:
    def test_uniform_bump_ratio(self, interval_p2_small):
        # v = (1+d)V gives exactly ratio = 1 + 2 d / 3 + O(d^2) for p = 2
        s = interval_p2_small
        m = F.sandwich_check(report_for(s, 1.01 * s.profile.V), s.exps.p)
        assert 0.97 <= m.ratio <= 1.03
        assert abs(m.ratio - (1.0 + 0.02 / 3.0)) < 1e-4

    def test_ratio_approaches_one_linearly(self, interval_p2_small):
        s = interval_p2_small
        gaps = []
        for d in (1e-2, 1e-3, 1e-4):
            m = F.sandwich_check(report_for(s, (1.0 + d) * s.profile.V), s.exps.p)
            gaps.append(abs(m.ratio - 1.0) / d)
        assert max(gaps) < 1.0            # slope O(delta) with modest constant
        assert np.ptp(gaps) < 0.01        # and the slope is stable

    def test_alternating_sign_perturbation_stays_in_bracket(self, interval_p2_small):
        s = interval_p2_small
        d = 5e-3
        signs = np.where(np.arange(s.grid.n) % 2 == 0, 1.0, -1.0)
        m = F.sandwich_check(report_for(s, (1.0 + d * signs) * s.profile.V),
                             s.exps.p)
        C = 1.0
        assert (1.0 + C * m.delta) ** -2 <= m.ratio <= (1.0 + C * m.delta) ** 2

    def test_whole_trace_bracket(self, calibrated_trace_p2):
        setup, result = calibrated_trace_p2
        implied = [F.sandwich_check(r, setup.exps.p).implied_C
                   for r in result.reports if r.E_lin > 1e-22]
        assert max(implied) < 1.0


class TestRayleighCompare:
    def test_single_low_mode_limit(self, interval_p2):
        s = interval_p2
        r = report_for(s, s.profile.V + 1e-4 * s.eigs.mode(1, 1))
        mc = F.rayleigh_compare(r, s.exps.p)[0]
        assert mc.q_nl is not None
        assert abs(mc.q_nl / mc.q_lin - mc.limit_factor) <= 0.02 * mc.limit_factor

    def test_orthogonal_mode_leaves_quotients_small(self, interval_p2):
        s = interval_p2
        eps = 1e-3
        r = report_for(s, s.profile.V + eps * s.eigs.mode(2, 1))
        mc = F.rayleigh_compare(r, s.exps.p)[0]    # mode (1,1) quotients
        assert mc.q_lin <= 10.0 * eps
        assert mc.q_nl <= 10.0 * eps

    def test_equivalence_constant_finite_along_flow(self, amp3_calibrated_traces):
        setup, _, traces = amp3_calibrated_traces
        window = ao_window(traces[5e-4])
        excesses = []
        for r in window:
            for mc in F.rayleigh_compare(r, setup.exps.p):
                if mc.q_nl is not None and mc.scale > 0:
                    excesses.append(mc.excess / mc.scale)
        assert max(excesses) < 10.0


class TestSmoothing:
    def test_sup_finite_and_horizon_stable(self, calibrated_trace_p2):
        setup, result = calibrated_trace_p2
        clean = decaying_prefix(result.reports)
        sup, arg, series = F.smoothing_check(clean, ndim=1)
        t_half = clean[len(clean) // 2].t
        half_sup = max(v for t, v in series if t <= t_half)
        assert np.isfinite(sup)
        assert (sup - half_sup) / half_sup <= 0.10

    def test_wrong_exponent_diverges(self, calibrated_trace_p2):
        _, result = calibrated_trace_p2
        clean = decaying_prefix(result.reports)
        t0 = clean[0].t
        sup, _, series = F.delayed_ratio_sup(clean, lambda r: r.h_inf, 1.0, t0 + 1)
        t_half = clean[len(clean) // 2].t
        half_sup = max(v for t, v in series if t <= t_half)
        assert sup / half_sup > 2.0

    def test_fixed_point_excluded(self, interval_p2_small):
        s = interval_p2_small
        _, reports = F.run_rescaled(s, s.profile.V.copy(), horizon=3.0,
                                    dt=5e-3, cadence=0.25)
        with pytest.raises(F.InsufficientTrace):
            F.smoothing_check(reports, ndim=1)


def constant_h_report(t, h, n):
    zeros = [np.zeros(1)]
    return EntropyReport(t=t, E_lin=1.0, I_lin=0.0, E_nl=1.0, h_inf=abs(h),
                         h_L2V_sq=1.0, cubic=1.0, Q_lin=zeros, Q_nl=None,
                         A_nl=zeros, delta_now=abs(h), h=np.full(n, h))


class TestTimeMonotonicity:
    def test_constant_relative_error(self, interval_p2_small):
        exps = interval_p2_small.exps
        reports = [constant_h_report(2.0 + 0.1 * i, 0.05, 16) for i in range(30)]
        assert F.time_monotonicity_check(reports, exps) == 0.0

    def test_fixed_point_trivial(self, interval_p2_small):
        exps = interval_p2_small.exps
        reports = [constant_h_report(2.0 + 0.1 * i, 0.0, 16) for i in range(30)]
        assert F.time_monotonicity_check(reports, exps) == 0.0

    def test_generic_run_within_dt_slack(self, calibrated_trace_p2):
        setup, result = calibrated_trace_p2
        worst = F.time_monotonicity_check(result.reports, setup.exps)
        dt = 1e-3
        cm = setup.exps.c * setup.exps.m
        assert worst <= 5.0 * dt * (1.0 + 2.0 * cm)

    def test_needs_late_samples(self, interval_p2_small):
        exps = interval_p2_small.exps
        reports = [constant_h_report(0.01 * i, 0.0, 8) for i in range(5)]
        with pytest.raises(F.InsufficientTrace):
            F.time_monotonicity_check(reports, exps)


class TestBenilanCrandall:
    def test_trace_satisfies_rate_bound(self, calibrated_trace_p2):
        setup, result = calibrated_trace_p2
        margin = F.benilan_crandall_margin(result.reports, setup.exps)
        assert margin <= 0.05


class TestAlmostOrthogonality:
    def test_quotient_ladder_nontrivial(self, amp3_calibrated_traces):
        setup, _, traces = amp3_calibrated_traces
        window = ao_window(traces[5e-4])
        qs = [r.max_q_nl() for r in window]
        assert qs[0] > 0.01                      # starts above the last rung
        assert min(qs) < 1e-4                    # improves by > two decades
        ladder = F.quotient_smallness_times(window)
        for eps, t_eps in ladder.items():
            assert t_eps is not None
            tail = [q for r, q in zip(window, qs) if r.t >= t_eps]
            assert max(tail) <= eps

    def test_quantitative_decay_against_delayed_entropy(self, calibrated_trace_p2):
        setup, result = calibrated_trace_p2
        window = ao_window(result.reports)
        sup, arg, series = F.delayed_ratio_sup(
            window, lambda r: r.max_q_nl(), 1.0 / 8.0, window[0].t + 1.0)
        t_half = window[len(window) // 2].t
        half = max(v for t, v in series if t <= t_half)
        assert np.isfinite(sup)
        assert (sup - half) / half <= 0.10

    def test_blowup_when_almost_orthogonality_fails(self, interval_p2_small):
        # uncalibrated low-mode content: the mode-1 moment grows exponentially
        s = interval_p2_small
        v0 = s.profile.V + 0.02 * s.eigs.mode(1, 1)
        _, reports = F.run_rescaled(s, v0, horizon=1.0, dt=1e-3, cadence=0.02)
        A = np.array([float(r.A_nl[0][0]) for r in reports])
        q = np.array([r.max_q_nl() for r in reports])
        d = np.array([r.h_inf for r in reports])
        growth = np.diff(A) / np.diff([r.t for r in reports])
        mask = (q[:-1] >= 0.3) & (d[:-1] <= 0.01)
        assert mask.sum() > 10
        assert np.all(growth[mask] > 0)
        kappa_low = np.min(growth[mask] / (0.3 * A[:-1][mask]))
        assert kappa_low > 0


class TestEntropyMonotonicity:
    def test_strictly_decreasing_once_almost_orthogonal(self, calibrated_trace_p2):
        # once h is small and all quotients small, sampled E_nl decreases
        _, result = calibrated_trace_p2
        window = ao_window(result.reports)
        E = np.array([r.E_nl for r in window])
        assert np.all(np.diff(E) < 0)


class TestComparisonConstants:
    def test_measured_on_trace(self, amp3_uncalibrated_traces):
        setup, traces = amp3_uncalibrated_traces
        cc = F.ComparisonConstants  # re-exported type
        from fdelab.diagnostics import measure_comparison_constants
        consts = measure_comparison_constants(traces[5e-4], setup.exps.p, ndim=1)
        assert isinstance(consts, cc)
        assert 0 < consts.sandwich_lo <= consts.sandwich_hi < np.inf
        assert np.isfinite(consts.remainder_kappa)
        assert np.isfinite(consts.smoothing_kappa)


class TestTraceRows:
    def test_header_names_stable(self, calibrated_trace_p2):
        _, result = calibrated_trace_p2
        header, rows = trace_rows(result.reports[:3])
        assert header[:5] == ["t", "E_lin", "I_lin", "E_nl", "h_inf"]
        assert "Q_1_1" in header and "Qn_1_1" in header and "A_1_1" in header
        assert len(rows) == 3 and len(rows[0]) == len(header)

    def test_undefined_quotients_are_none(self, interval_p2_small):
        s = interval_p2_small
        r = report_for(s, s.profile.V.copy())
        header, rows = trace_rows([r])
        qn_col = header.index("Qn_1_1")
        assert rows[0][qn_col] is None
