import pytest

from vrvi import verify


@pytest.mark.parametrize("suite", sorted(verify.SUITES))
def test_suite_passes(suite):
    checks = verify.run_suite(suite)
    assert checks and all(c.ok for c in checks), [c for c in checks if not c.ok]


def test_injected_fixture_fails_with_named_inequality():
    checks = verify.run_suite("params", inject=True)
    bad = [c for c in checks if not c.ok]
    assert len(bad) == 1 and "1 - alpha - beta >= 0" in bad[0].detail


def test_param_grid_shape():
    grid = verify.param_grid(100)
    assert len(grid) == 100 and len(set(grid)) == 100
    assert all(m1 >= 2 and mu <= Lh for mu, Lh, Lg, m1, m2 in grid)


def test_unknown_suite():
    with pytest.raises(KeyError):
        verify.run_suite("nope")
