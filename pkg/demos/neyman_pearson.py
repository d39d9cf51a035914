"""Neyman-Pearson classification through its primal-dual operator.

The program minimises the class-0 loss subject to a budget on the class-1
loss.  Its Lagrangian gives a monotone VI; adding a small multiple of the
identity makes it strongly monotone, so the accelerated solver applies.

Run with ``python3 demos/neyman_pearson.py``.
"""
import numpy as np

from vrvi import constrained, problems, savrep
from vrvi.core import Reference

program = problems.gen_np_classification(n=10, n0=100, n1=100, r1=0.2, seed=0, m1=4, m2=4, separation=1.0)
x_ref, f_ref = constrained.solve_program_reference(program)
y_ref = constrained.multipliers_from_primal(program, x_ref)
print(f"reference objective {f_ref:.5f}, multiplier {y_ref}")

kkt = constrained.build_kkt_problem(program, dual_cap=10.0)
ok, worst = constrained.monotonicity_check(kkt, n_pairs=500)
print(f"operator monotone on random pairs: {ok} (smallest inner product {worst:.2e})")

for mu in (1e-2, 1e-3, 1e-4):
    perturbed = constrained.perturb(kkt, mu)
    base = savrep.default_params(mu, perturbed.L_h, perturbed.L_g, perturbed.m1, perturbed.m2)
    params = savrep.scaled_params(base, perturbed.L_h, perturbed.L_g, perturbed.m2,
                                  alpha_scale=(1 / 12) / base.alpha)
    z_ref = np.concatenate([x_ref, y_ref])
    state, trace = savrep.run(perturbed, params, budget=100_000, seed=1,
                              reference=Reference(x_star=z_ref, program=program, f_star=f_ref), log_interval=5000)
    last = trace[-1]
    print(f"mu={mu:g}: dist^2={last.dist_sq:.2e} violation={last.cons_viol:.2e} objective gap={last.obj_gap:+.2e}")
