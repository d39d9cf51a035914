import numpy as np
import pytest

from vrvi.baselines import (
    ExtragradientParams, reference_solution, solve_extragradient, solve_projected_gradient,
)
from vrvi.core import Ball, Box, ConfigurationError, Whole, natural_residual
from vrvi.oracle import ComponentFamily, CompositeVIProblem
from vrvi.problems import Quadratic

from conftest import identity_problem


def zero_g():
    return ComponentFamily([lambda x: np.zeros_like(x)], [1e-12], values=[lambda x: 0.0], kind="g")


def pure_quadratic(C, c, cset):
    q = Quadratic(C, c)
    g = ComponentFamily([q.grad], [q.lipschitz], values=[q.value], kind="g")
    return CompositeVIProblem(ComponentFamily([], []), g, cset)


def test_identity_converges():
    prob = identity_problem(3)
    res = solve_extragradient(prob, ExtragradientParams.for_problem(prob), x0=np.ones(3))
    assert res.converged and np.linalg.norm(prob.operator(res.x)) < 1e-10
    res0 = solve_extragradient(prob, ExtragradientParams.for_problem(prob), x0=np.zeros(3))
    assert res0.iters == 0


def test_rotation_on_unit_ball():
    R = np.array([[0.0, 1.0], [-1.0, 0.0]])
    h = ComponentFamily([lambda x: R @ x], [1.0])
    prob = CompositeVIProblem(h, zero_g(), Ball(np.zeros(2), 1.0))
    res = solve_extragradient(prob, ExtragradientParams.for_problem(prob, max_iters=200_000, fraction=0.5),
                              x0=np.array([0.8, 0.1]))
    assert res.converged and np.linalg.norm(res.x) < 1e-9


def test_step_invariant():
    with pytest.raises(ConfigurationError):
        ExtragradientParams(step=1.0, lipschitz=2.0)
    with pytest.raises(ConfigurationError):
        ExtragradientParams(step=0.0)


def test_projected_gradient_examples():
    c = np.array([1.0, -2.0, 0.5])
    prob = pure_quadratic(np.eye(3), -c, Whole(3))
    res = solve_projected_gradient(prob, ExtragradientParams.for_problem(prob))
    np.testing.assert_allclose(res.x, c, atol=1e-10)
    assert solve_projected_gradient(prob, ExtragradientParams.for_problem(prob), x0=c).iters == 0
    with pytest.raises(ConfigurationError):
        solve_projected_gradient(identity_problem(1), ExtragradientParams(step=0.5))


def test_box_quadratic_kkt():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((4, 4))
    C = B @ B.T + np.eye(4)
    c = 5 * rng.standard_normal(4)
    box = Box(-np.ones(4), np.ones(4))
    prob = pure_quadratic(C, c, box)
    x = solve_projected_gradient(prob, ExtragradientParams.for_problem(prob, tol=1e-12)).x
    grad = C @ x + c
    # KKT on a box: gradient sign matches active bounds, vanishes in the interior
    for j in range(4):
        if abs(x[j] - 1) < 1e-9:
            assert grad[j] <= 1e-10
        elif abs(x[j] + 1) < 1e-9:
            assert grad[j] >= -1e-10
        else:
            assert abs(grad[j]) < 1e-10
    assert natural_residual(prob, x) < 1e-10


def test_reference_solution_vi_inequality(small_bilinear):
    prob, _ = small_bilinear
    xs = reference_solution(prob, tol=1e-10, max_iters=2_000_000)
    Fx = prob.operator(xs)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        z = prob.constraint.sample(rng)
        assert Fx @ (z - xs) >= -1e-8


def test_reference_solution_raises_when_stalled(small_bilinear):
    prob, _ = small_bilinear
    with pytest.raises(ConfigurationError, match="stalled"):
        reference_solution(prob, tol=1e-14, max_iters=5)
