"""Two-point gradient estimates from noisy function values.

Checks the bias of the sphere-smoothing estimator against its bound, then
solves a small constrained quadratic using only function values.

Run with ``python3 demos/zeroth_order.py``.
"""
import numpy as np

from vrvi import constrained, problems, savrep
from vrvi import zeroth_order as zo
from vrvi.core import Reference

n, phi = 5, 0.2
oracle = zo.NoisyScalarOracle(lambda X: 0.5 * np.sum(X * X, axis=-1), grad_std=0.5, vectorized=True)
x = np.linspace(-1, 1, n)
rng = np.random.default_rng(0)
G = zo.zo_gradient_batch(oracle, x, phi, zo.sphere_sample_batch(rng, 200_000, n), rng)
print(f"bias {np.linalg.norm(G.mean(axis=0) - x):.3e} (bound {zo.smoothing_bias_bound(1.0, phi, n)})")

program = problems.gen_constrained_quadratic(3, 1, 2, 2, seed=1)
_, f_ref = constrained.solve_program_reference(program)
problem = constrained.perturb(zo.zo_kkt_operator_components(program, zo.SmoothingConfig(1e-3, 3), 10.0), 1e-2)
base = savrep.default_params(1e-2, problem.L_h, problem.L_g, problem.m1, problem.m2)
params = savrep.scaled_params(base, problem.L_h, problem.L_g, problem.m2, alpha_scale=(1 / 12) / base.alpha)
_, trace = savrep.run(problem, params, budget=40_000, seed=2, reference=Reference(program=program, f_star=f_ref),
                      log_interval=2000)
for rec in trace[::4]:
    print(f"calls={rec.oracle_h_calls + rec.oracle_g_calls:>6} violation={rec.cons_viol:.2e} gap={rec.obj_gap:+.2e}")
