import numpy as np
import pytest

from vrvi import problems
from vrvi.oracle import ComponentFamily, CompositeVIProblem
from vrvi.core import Whole


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_sm():
    spec = problems.SyntheticSpec(n=6, m1=3, m2=3, mu_h=0.3, L_h=1.0, L_g=1.0, seed=4)
    return problems.gen_strongly_monotone(spec)


@pytest.fixture(scope="session")
def small_bilinear():
    return problems.gen_bilinear_monotone(3, 3, 4, seed=2, m2=3, g_offset=0.5)


def identity_problem(dim=1, scale=1.0, m1=1):
    """``H(x) = scale * x`` split evenly over ``m1`` components, ``g = 0`` (one zero component)."""
    comps = [(lambda x, s=scale / m1: s * x) for _ in range(m1)]
    h = ComponentFamily(comps, [scale / m1] * m1, kind="h")
    g = ComponentFamily([lambda x: np.zeros_like(x)], [1e-12], values=[lambda x: 0.0], kind="g")
    return CompositeVIProblem(h, g, Whole(dim), mu_h=scale)
