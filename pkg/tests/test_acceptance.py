"""Acceptance criteria, one test each.  Every test prints a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from vrvi import baselines, constrained, problems, savrep, savrep_m, verify
from vrvi import zeroth_order as zo
from vrvi.core import GapEvaluator, Reference
from vrvi.oracle import ComponentFamily, NoiseModel, refresh_snapshot, sample_component, vr_estimate


def report(capsys, number, ok, detail, t0):
    with capsys.disabled():
        print(f"\n[acceptance {number}] {'PASS' if ok else 'FAIL'}  {detail}  ({time.time() - t0:.1f} s)")
    assert ok, detail


@pytest.fixture(scope="module")
def sm_instance():
    spec = problems.SyntheticSpec(n=50, m1=20, m2=20, mu_h=0.1, L_h=1.0, L_g=1.0, seed=0)
    prob, x_star = problems.gen_strongly_monotone(spec)
    assert all(problems.certify_constants(prob, n_pairs=200).values())
    return prob, x_star, savrep.default_params(prob.mu_h, prob.L_h, prob.L_g, prob.m1, prob.m2)


def test_1_savrep_linear_rate(sm_instance, capsys):
    t0 = time.time()
    prob, x_star, p = sm_instance
    x0 = np.zeros(prob.dim)
    d0 = savrep.initial_distance_measure(prob, p, x0, x_star)
    C = savrep.complexity_constant(prob.mu_h, prob.L_h, prob.L_g, prob.m1, prob.m2)
    budget = 100 * C * math.log(d0 / 1e-8)
    worst = 0
    ok = True
    for seed in range(1, 6):
        st, rec = savrep.run(prob, p, int(budget), tol=1e-8, x0=x0, seed=seed, reference=Reference(x_star=x_star),
                             wall_clock=False)
        ok &= rec[-1].dist_sq <= 1e-8 and st.counter.total <= budget
        worst = max(worst, st.counter.total)
    report(capsys, 1, ok, f"max calls to dist^2<=1e-8: {worst} (budget {budget:.0f})", t0)


def test_2_potential_contraction(sm_instance, capsys):
    t0 = time.time()
    prob, x_star, p = sm_instance
    C = savrep.contraction_factor(p, prob.mu_h, prob.L_h, prob.L_g, prob.m1, prob.m2)
    ev = GapEvaluator.for_problem(prob, x_star)
    seeds, K = 200, 500
    P = np.zeros((seeds, K + 1))
    for seed in range(seeds):
        st = savrep.init_state(prob, np.zeros(prob.dim), seed)
        P[seed, 0] = savrep.potential(st, p, ev)
        for k in range(K):
            savrep.step(st, p, prob)
            P[seed, k + 1] = savrep.potential(st, p, ev)
    assert P.min() > 0
    worst = float((P[:, 1:] / P[:, :-1]).mean(axis=0).max())
    report(capsys, 2, worst <= C + 0.02, f"max mean ratio {worst:.5f} <= {C:.5f} + 0.02", t0)


def test_3_savrep_m_envelope(capsys):
    t0 = time.time()
    prob, x_star = problems.gen_bilinear_monotone(20, 20, 10, seed=0, m2=10, g_offset=1.0)
    pm = savrep_m.make_params(prob)
    ev = GapEvaluator.for_problem(prob, x_star)
    x0 = np.zeros(prob.dim)
    q0 = ev(x0)
    m2 = prob.m2
    worst_ratio, worst_slope = 0.0, -np.inf
    for seed in (1, 2, 3):
        _, rec = savrep_m.run(prob, pm, 10**12, x0=x0, seed=seed, reference=Reference(x_star=x_star),
                              max_epochs=200, wall_clock=False)
        ks = np.array([r.iter for r in rec])
        qs = np.array([r.q_gap for r in rec])
        sel = (ks >= 5 * m2) & (ks <= 200 * m2)
        bound = np.array([savrep_m.rate_bound(k, q0, prob.m1, m2, prob.L_h, prob.L_g, pm.omega_z) for k in ks[sel]])
        worst_ratio = max(worst_ratio, float((qs[sel] / bound).max()))
        last = (ks >= 20 * m2) & (ks <= 200 * m2)
        slope = np.polyfit(np.log(ks[last]), np.log(np.maximum(qs[last], 1e-300)), 1)[0]
        worst_slope = max(worst_slope, float(slope))
    ok = worst_ratio <= 1.1 and worst_slope <= -0.9
    report(capsys, 3, ok, f"max q_gap/bound {worst_ratio:.3f} <= 1.1, worst last-decade slope {worst_slope:.2f}", t0)


def _family(m, n, rng):
    mats = [rng.standard_normal((n, n)) for _ in range(m)]
    shifts = [rng.standard_normal(n) for _ in range(m)]
    comps = [(lambda x, A=A, b=b: np.sin(A @ x) + b) for A, b in zip(mats, shifts)]
    return ComponentFamily(comps, rng.uniform(0.2, 5.0, m))


def test_4_vr_unbiased(capsys):
    t0 = time.time()
    rng = np.random.default_rng(0)
    exact_err = 0.0
    for m in range(1, 9):
        for _ in range(5):
            fam = _family(m, 4, rng)
            anchor, x = rng.standard_normal(4), rng.standard_normal(4)
            cache = refresh_snapshot(fam, None, anchor, rng)
            mean = sum(fam.probs[i] * vr_estimate(cache, fam, None, i, x, rng) for i in range(m))
            exact_err = max(exact_err, float(np.max(np.abs(mean - fam.sum(x)))))
    fam = _family(50, 4, rng)
    anchor, x = rng.standard_normal(4), rng.standard_normal(4)
    cache = refresh_snapshot(fam, None, anchor, rng)
    N = 100_000
    # precompute the component differences; the estimate for index i is linear in them
    diffs = np.array([(fam.eval(i, x) - cache.per_component[i]) / fam.probs[i] for i in range(50)])
    idx = np.array([sample_component(fam, rng) for _ in range(N)])
    draws = cache.full_sum + diffs[idx]
    dev = np.abs(draws.mean(axis=0) - fam.sum(x))
    half = 4 * draws.std(axis=0) / math.sqrt(N)
    ok = exact_err <= 1e-12 and bool(np.all(dev <= half))
    report(capsys, 4, ok, f"exhaustive max error {exact_err:.1e}; MC max dev/half-width {float(np.max(dev / half)):.2f}",
           t0)


def test_5_zeroth_order_bias_variance(capsys):
    t0 = time.time()
    n, phi, N, L, varsigma = 5, 0.2, 1_000_000, 1.0, 0.5
    oracle = zo.NoisyScalarOracle(lambda X: 0.5 * np.sum(X * X, axis=-1), grad_std=varsigma, vectorized=True)
    x = np.linspace(-1.0, 1.0, n)
    rng = np.random.default_rng(0)
    G = np.zeros((N, n))
    chunk = 100_000
    for s in range(0, N, chunk):
        G[s:s + chunk] = zo.zo_gradient_batch(oracle, x, phi, zo.sphere_sample_batch(rng, chunk, n), rng)
    half = 4 * float(np.linalg.norm(G.std(axis=0))) / math.sqrt(N)
    bias = float(np.linalg.norm(G.mean(axis=0) - x))
    bound = zo.smoothing_bias_bound(L, phi, n)
    second = float(np.mean(np.sum((G - x) ** 2, axis=1)))
    # value-Lipschitz constant of g on the ball of radius phi around x
    M = float(np.linalg.norm(x)) + phi
    vb = zo.zo_variance_bound(M, varsigma, L, phi, n)
    ok = bias <= bound + half and second <= vb
    report(capsys, 5, ok, f"bias {bias:.2e} <= {bound} + {half:.1e}; second moment {second:.2f} <= {vb:.2f}", t0)


def test_6_kkt_correctness(capsys):
    t0 = time.time()
    worst_v, worst_g = 0.0, 0.0
    for k in range(20):
        rng = np.random.default_rng(100 + k)
        n, ell = int(rng.integers(1, 6)), int(rng.integers(1, 3))
        prog = problems.gen_constrained_quadratic(n, ell, 2, 2, seed=100 + k, active=(k % 2 == 0))
        x_ref, f_ref = constrained.solve_program_reference(prog)
        assert np.all(constrained.multipliers_from_primal(prog, x_ref) < 10.0)
        kkt = constrained.perturb(constrained.build_kkt_problem(prog, 10.0), 1e-6)
        p0 = savrep.default_params(kkt.mu_h, kkt.L_h, kkt.L_g, kkt.m1, kkt.m2)
        # the default alpha scales with sqrt(mu); 1/12 also satisfies every step-size constraint
        p = savrep.scaled_params(p0, kkt.L_h, kkt.L_g, kkt.m2, alpha_scale=(1 / 12) / p0.alpha)
        st, _ = savrep.run(kkt, p, 30_000, seed=k, reference=Reference(program=prog, f_star=f_ref),
                           log_interval=1000, wall_clock=False)
        x = st.x[:n]
        worst_v = max(worst_v, prog.constraint_violation(x))
        worst_g = max(worst_g, abs(prog.objective_gap(x, f_ref)))
    ok = worst_v <= 1e-3 and worst_g <= 1e-3
    report(capsys, 6, ok, f"max violation {worst_v:.1e}, max |objective gap| {worst_g:.1e}", t0)


def test_7_perturbation_monotone_approach(capsys):
    t0 = time.time()
    prog = problems.gen_constrained_quadratic(4, 1, 2, 2, seed=3, active=True)
    kkt = constrained.build_kkt_problem(prog, 10.0)
    z0 = baselines.reference_solution(kkt, tol=1e-12, max_iters=2_000_000)
    x_ref, _ = constrained.solve_program_reference(prog)
    assert np.linalg.norm(z0[:4] - x_ref) <= 1e-6
    dists = []
    for mu in (1e-1, 1e-2, 1e-3, 1e-4):
        pk = constrained.perturb(kkt, mu)
        zmu = baselines.reference_solution(pk, tol=1e-12, max_iters=2_000_000)
        dists.append(float(np.linalg.norm(zmu - z0)))
    ok = all(b <= a + 1e-8 for a, b in zip(dists, dists[1:]))
    report(capsys, 7, ok, "||z*(mu) - z*|| = " + ", ".join(f"{d:.2e}" for d in dists), t0)


def test_8_stochastic_floor(sm_instance, capsys):
    t0 = time.time()
    prob, x_star, p = sm_instance
    plateau = {}
    for sigma in (0.1, 0.01):
        vals = []
        for seed in range(20):
            nh = NoiseModel.for_family(prob.h, prob.dim, 0.0, sigma, stream=seed)
            _, rec = savrep.run(prob, p, 10**12, x0=np.zeros(prob.dim), seed=seed, noise_h=nh,
                                reference=Reference(x_star=x_star), max_iter=4000, log_interval=40, wall_clock=False)
            d = np.array([r.dist_sq for r in rec])
            its = np.array([r.iter for r in rec])
            vals.append(d[its >= 2000].mean())
        plateau[sigma] = float(np.mean(vals))
    ratio = plateau[0.1] / plateau[0.01]
    report(capsys, 8, ratio >= 10, f"plateau ratio {ratio:.1f} >= 10 ({plateau[0.1]:.2e} vs {plateau[0.01]:.2e})", t0)


def test_9_parameter_validators(capsys):
    t0 = time.time()
    grid = verify.param_grid(100)
    failures = []
    for mu, Lh, Lg, m1, m2 in grid:
        p = savrep.default_params(mu, Lh, Lg, m1, m2)
        if not savrep.check_param_constraints(p, Lh, Lg).ok:
            failures.append(("strong", mu, Lh, Lg, m1, m2))
        pm = savrep_m.SavrepMParams(L_h=Lh, L_g=Lg, m1=m1, m2=m2)
        if not savrep_m.check_conditions(pm, 51).ok or not savrep_m.schedule_checks(pm, 51).ok:
            failures.append(("monotone", mu, Lh, Lg, m1, m2))
    report(capsys, 9, len(grid) == 100 and not failures, f"{len(grid)} tuples, {len(failures)} failures", t0)
