"""Sublinear rate of the double-loop solver on a merely monotone problem.

A bilinear saddle point on a product of unit balls plus rank-one quadratics.
The gap at the epoch average is compared with its theoretical envelope.

Run with ``python3 demos/monotone_bilinear.py``.
"""
import numpy as np

from vrvi import problems, savrep_m
from vrvi.core import GapEvaluator, Reference

problem, x_star = problems.gen_bilinear_monotone(20, 20, 10, seed=0, m2=10, g_offset=1.0)
params = savrep_m.make_params(problem)
print("conditions:", savrep_m.check_conditions(params, 200).describe())

x0 = np.zeros(problem.dim)
q0 = GapEvaluator.for_problem(problem, x_star)(x0)
_, trace = savrep_m.run(problem, params, budget=10**9, x0=x0, seed=1, reference=Reference(x_star=x_star),
                        max_epochs=200, log_every=20)
print(f"{'k':>6} {'q_gap':>12} {'envelope':>12}")
for rec in trace[1:]:
    bound = savrep_m.rate_bound(rec.iter, q0, problem.m1, problem.m2, problem.L_h, problem.L_g, params.omega_z)
    print(f"{rec.iter:>6} {rec.q_gap:>12.3e} {bound:>12.3e}")
