#!/usr/bin/env python3
"""Finite extinction time: estimate it, then close the loop.

The original flow u_t = lap u^m from u0 = S follows the separable solution
S(x) (1 - t/T)^(1/(1-m)) with T = p/((p-1)c), so sup(u)^(1-m) is exactly
linear in time: extrapolating its root gives T without ever simulating the
degenerate endpoint.  Rebuilding the rescaled stage with the estimated c and
rerunning from the same datum must relax back to a stationary profile.
"""

import numpy as np

import fdelab as F

setup = F.prepare(F.DomainSpec(geometry="interval", nodes=129),
                  F.Exponents.make(p=2.0, c=1.0))
exps = setup.exps
print(f"p = {exps.p}, c = {exps.c}  ->  true extinction time T = {exps.T}")

result = F.run_extinction_pipeline(setup, dt_original=2e-4, rerun_horizon=7.0,
                                   rerun_dt=2e-3)
est = result.estimate
print(f"\nextrapolated from sup(u)^(1-m) over t in "
      f"[{est.window[0]:.3f}, {est.window[1]:.3f}]:")
print(f"  T_est = {result.T_est:.6f}   (relative error "
      f"{abs(result.T_est - result.T_true) / result.T_true:.2e}, "
      f"fit residual {est.fit_residual:.1e})")

print(f"\nclosed loop with c_est = p/((p-1) T_est) = "
      f"{result.closed_loop_setup.exps.c:.6f}:")
E = [r.E_nl for r in result.closed_loop_reports]
print(f"  entropy of the rescaled rerun: start {E[0]:.3e} -> min {min(E):.3e}")
print("  (the rerun converges to the stationary profile of the estimated clock)")
