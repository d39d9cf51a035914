import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrvi import problems, serialize
from vrvi.serialize import FormatError, dumps, load_problem, loads, save_problem


def _same_operator(a, b, rng, dim):
    for _ in range(5):
        z = rng.standard_normal(dim)
        np.testing.assert_array_equal(a(z), b(z))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 1000), set_kind=st.sampled_from(["whole", "ball"]))
def test_affine_vi_round_trip(seed, set_kind):
    spec = problems.SyntheticSpec(n=4, m1=3, m2=2, seed=seed, set_kind=set_kind)
    prob, xs = problems.gen_strongly_monotone(spec)
    back, meta, xs2 = loads(dumps(prob, {"k": 1}, xs))
    assert meta == {"k": 1}
    np.testing.assert_array_equal(xs, xs2)
    np.testing.assert_array_equal(back.h.lipschitz, prob.h.lipschitz)
    assert back.mu_h == prob.mu_h and type(back.constraint) is type(prob.constraint)
    rng = np.random.default_rng(seed)
    _same_operator(prob.operator, back.operator, rng, 4)
    z = rng.standard_normal(4)
    assert back.g_value(z) == prob.g_value(z)


def test_bilinear_product_set_round_trip(tmp_path):
    prob, xs = problems.gen_bilinear_monotone(2, 3, 3, seed=0, m2=2)
    path = tmp_path / "p.bin"
    save_problem(path, prob, x_star=xs)
    back, _, xs2 = load_problem(path)
    rng = np.random.default_rng(0)
    for _ in range(5):
        p = 3 * rng.standard_normal(5)
        np.testing.assert_array_equal(back.constraint.project(p), prob.constraint.project(p))
    _same_operator(prob.operator, back.operator, rng, 5)
    assert path.read_bytes().startswith(b"VRVI1\n")


def test_programs_round_trip():
    rng = np.random.default_rng(0)
    qp = problems.gen_constrained_quadratic(3, 2, 2, 2, seed=4)
    back, _, xs = loads(dumps(qp))
    assert xs is None
    for _ in range(5):
        x = rng.standard_normal(3)
        assert back.objective_value(x) == pytest.approx(qp.objective_value(x), rel=1e-14)
        np.testing.assert_allclose(back.constraint_sum(x), qp.constraint_sum(x), rtol=1e-14, atol=1e-15)
    npp = problems.gen_np_classification(n=4, n0=20, n1=20, seed=1, m1=2, m2=2)
    back, _, _ = loads(dumps(npp))
    for _ in range(5):
        x = rng.standard_normal(4)
        assert back.objective_value(x) == pytest.approx(npp.objective_value(x), rel=1e-13)
        np.testing.assert_allclose(back.constraint_sum(x), npp.constraint_sum(x), rtol=1e-13)


@pytest.mark.parametrize("blob", [b"", b"VRVI2\n1234", b"VRVI1\n", b"VRVI1\n\x05\x00\x00\x00{}xyzgarbage"])
def test_corrupt_inputs(blob):
    with pytest.raises(FormatError):
        loads(blob)


def test_format_error_is_value_error():
    assert issubclass(FormatError, ValueError)


def test_unserialisable_instance():
    from vrvi.core import ConfigurationError
    from conftest import identity_problem

    with pytest.raises(ConfigurationError):
        dumps(identity_problem(2))
