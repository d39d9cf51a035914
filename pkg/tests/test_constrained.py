import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrvi import constrained
from vrvi.baselines import reference_solution
from vrvi.constrained import (
    ConstrainedProgram, ConstraintBlock, ObjectiveComponent, build_kkt_problem, constraint_violation,
    monotonicity_check, multipliers_from_primal, objective_gap, perturb, solve_program_reference,
)
from vrvi.core import Box, ConfigurationError, Whole
from vrvi.problems import gen_constrained_quadratic, gen_np_classification


def scalar_toy(cset=None):
    obj = [ObjectiveComponent(lambda x: 0.5 * float(x @ x), lambda x: x.copy(), lipschitz=1.0)]
    return ConstrainedProgram(obj, [ConstraintBlock.linear([[1.0]], [-1.0])], cset or Whole(1))


def test_scalar_toy_operator_and_solution():
    kkt = build_kkt_problem(scalar_toy(), dual_cap=5.0)
    rng = np.random.default_rng(0)
    for _ in range(20):
        z1, z2 = rng.standard_normal(2), rng.standard_normal(2)
        np.testing.assert_allclose(kkt.operator(z1), [z1[0] + z1[1], -(z1[0] - 1)])
        d = z1 - z2
        assert (kkt.operator(z1) - kkt.operator(z2)) @ d == pytest.approx(d[0] ** 2)
    zs = reference_solution(kkt, tol=1e-12)
    np.testing.assert_allclose(zs, [0.0, 0.0], atol=1e-10)


def test_boundary_solution_against_grid_search():
    # min 0.5 (x + 2)^2 s.t. x <= 0 on [-1, 1]; the box bound is active
    obj = [ObjectiveComponent(lambda x: 0.5 * float((x[0] + 2) ** 2), lambda x: x + 2, lipschitz=1.0)]
    prog = ConstrainedProgram(obj, [ConstraintBlock.linear([[1.0]])], Box([-1.0], [1.0]))
    grid = np.arange(-1.0, 1.0 + 5e-5, 1e-4)
    feas = grid[grid <= 0]
    x_grid = feas[np.argmin(0.5 * (feas + 2) ** 2)]
    zs = reference_solution(build_kkt_problem(prog, 5.0), tol=1e-12)
    assert abs(zs[0] - x_grid) <= 1e-4 and zs[0] == pytest.approx(-1.0, abs=1e-10)


def test_violation_and_gap_examples():
    prog = scalar_toy()
    assert constraint_violation(prog, np.array([0.5])) == 0.0
    assert constraint_violation(prog, np.array([1.5])) == pytest.approx(0.5)
    two = ConstrainedProgram(prog.objective, [ConstraintBlock.linear([[1.0]]), ConstraintBlock.linear([[1.0]])],
                             Whole(1))
    assert constraint_violation(two, np.array([0.3])) == pytest.approx(0.6)
    obj = [ObjectiveComponent(lambda x: 0.5 * float(x @ x), lambda x: x, lipschitz=1.0)]
    quad = ConstrainedProgram(obj, [ConstraintBlock.linear(np.zeros((1, 2)))], Whole(2))
    assert objective_gap(quad, np.array([1.0, 0.0]), 0.0) == pytest.approx(0.5)
    assert prog.objective_gap(np.zeros(1), 0.0) == 0.0


def test_dimension_checks():
    prog = scalar_toy()
    with pytest.raises(ConfigurationError):
        build_kkt_problem(prog, 0.0)
    bad = ConstrainedProgram(prog.objective, [ConstraintBlock.linear(np.ones((1, 2)))], Whole(1))
    with pytest.raises(ConfigurationError):
        build_kkt_problem(bad, 1.0)
    with pytest.raises(ConfigurationError):
        ConstrainedProgram(prog.objective, [ConstraintBlock.linear(np.ones((1, 1))),
                                            ConstraintBlock.linear(np.ones((2, 1)))], Whole(1))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 5), ell=st.integers(1, 2), active=st.booleans())
def test_built_operator_monotone(seed, n, ell, active):
    prog = gen_constrained_quadratic(n, ell, 2, 2, seed=seed, active=active)
    ok, worst = monotonicity_check(build_kkt_problem(prog, 10.0), n_pairs=200, seed=seed)
    assert ok, worst


def test_np_operator_monotone_and_lipschitz_modes():
    prog = gen_np_classification(n=4, n0=30, n1=30, seed=1, m1=2, m2=2)
    cf = build_kkt_problem(prog, 5.0)
    assert monotonicity_check(cf, n_pairs=1000)[0]
    emp = build_kkt_problem(prog, 5.0, lipschitz_mode="empirical", n_pairs=500)
    # the closed form is a valid bound; the sampled estimate is inflated by 1.5 but still below it here
    assert np.all(emp.h.lipschitz <= cf.h.lipschitz * 1.5 + 1e-12)
    rng = np.random.default_rng(3)
    for j, L in enumerate(cf.h.lipschitz):
        for _ in range(200):
            a, b = cf.constraint.sample(rng), cf.constraint.sample(rng)
            H = cf.h.components[j]
            assert np.linalg.norm(H(a) - H(b)) <= L * np.linalg.norm(a - b) * (1 + 1e-9)


def test_perturb_definitional():
    prog = gen_constrained_quadratic(3, 1, 2, 2, seed=0)
    kkt = build_kkt_problem(prog, 10.0)
    rng = np.random.default_rng(0)
    same = perturb(kkt, 0.0)
    p = perturb(kkt, 0.3, attach_index=1)
    assert p.mu_h == 0.3 and p.h.lipschitz[1] == pytest.approx(kkt.h.lipschitz[1] + 0.3)
    assert p.h.lipschitz[0] == kkt.h.lipschitz[0]
    for _ in range(10):
        z = rng.standard_normal(kkt.dim)
        np.testing.assert_array_equal(same.operator(z), kkt.operator(z))
        np.testing.assert_allclose(p.operator(z) - kkt.operator(z), 0.3 * z, atol=1e-12)
    with pytest.raises(ConfigurationError):
        perturb(kkt, 0.1, attach_index=5)


def test_complementarity_and_perturbation_approach():
    prog = gen_constrained_quadratic(3, 1, 2, 2, seed=1, active=True)
    kkt = build_kkt_problem(prog, 10.0)
    z0 = reference_solution(kkt, tol=1e-10, max_iters=2_000_000)
    x, y = kkt.split(z0)
    assert abs(float(y @ prog.constraint_sum(x))) <= 1e-5
    assert y[0] > 1e-3  # constraint active
    sols = {mu: reference_solution(perturb(kkt, mu), tol=1e-11, max_iters=2_000_000) for mu in (4e-2, 2e-2, 1e-2)}
    d = lambda a, b: np.linalg.norm(sols[a] - sols[b])
    assert d(1e-2, 2e-2) <= d(2e-2, 4e-2) + 1e-6
    assert np.linalg.norm(sols[1e-2] - z0) <= np.linalg.norm(sols[4e-2] - z0) + 1e-8


def test_program_reference_and_multipliers():
    prog = gen_constrained_quadratic(3, 1, 2, 2, seed=1, active=True)
    x, f = solve_program_reference(prog)
    y = multipliers_from_primal(prog, x)
    kkt = build_kkt_problem(prog, 10.0)
    z = np.concatenate([x, y])
    from vrvi.core import natural_residual

    assert natural_residual(kkt, z) <= 1e-5
    assert constraint_violation(prog, x) <= 1e-9
    assert not kkt.touches_cap(z)
