"""Randomised smoothing and two-point zeroth-order gradient estimators.

The estimator at ``x`` along a direction ``u`` drawn uniformly from the unit
sphere is ``(n/phi) (f'(x + phi u) - f'(x)) u``.  It is unbiased for the
gradient of the ball-smoothed function ``f_phi``.  Both evaluations share the
same noise realisation of the oracle ``f'``.
"""
from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional, Sequence

import numpy as np

from .constrained import ConstrainedProgram, KktProblem, build_kkt_problem
from .core import Box, ConfigurationError, Product
from .oracle import ComponentFamily, unit_sphere

__all__ = [
    "SmoothingConfig",
    "NoisyScalarOracle",
    "sphere_sample",
    "sphere_sample_batch",
    "zo_gradient",
    "zo_gradient_batch",
    "zo_kkt_operator_components",
    "smoothing_bias_bound",
    "zo_variance_bound",
    "StochasticBounds",
    "kkt_stochastic_bounds",
]


@dataclasses.dataclass(frozen=True)
class SmoothingConfig:
    phi: float
    dim: int

    def __post_init__(self):
        if not self.phi > 0 or not math.isfinite(self.phi):
            raise ConfigurationError("smoothing radius phi must be positive")
        if self.dim < 1:
            raise ConfigurationError("dim must be >= 1")

    @classmethod
    def recommended(cls, eps: float, dim: int) -> "SmoothingConfig":
        """Heuristic ``phi = sqrt(eps) / n`` so that the squared bias is of order ``eps``."""
        return cls(math.sqrt(eps) / dim, dim)


class NoisyScalarOracle:
    """Unbiased noisy evaluations of ``f: R^n -> R`` (or ``R^ell``).

    A realisation ``xi = (e0, E)`` gives ``f'(x; xi) = f(x) + value_std * e0 +
    grad_std * E x`` with ``e0`` standard normal and ``E`` having i.i.d.
    ``N(0, 1/n)`` entries.  Hence ``E[f'] = f``, ``E[grad f'] = grad f`` and
    ``E||grad f' - grad f||^2 = grad_std^2`` per output row.

    Parameters
    ----------
    f : callable
        Exact function.  With ``vectorized=True`` it must accept an ``(N, n)``
        array and return ``(N,)`` or ``(N, ell)``.
    value_std, grad_std : float
        Noise scales (``varpi`` and ``varsigma``).
    ell : int
        Output length (1 for scalar functions).
    """

    def __init__(self, f: Callable, value_std: float = 0.0, grad_std: float = 0.0, ell: int = 1,
                 vectorized: bool = False):
        if value_std < 0 or grad_std < 0:
            raise ConfigurationError("noise scales must be nonnegative")
        self.f = f
        self.value_std = float(value_std)
        self.grad_std = float(grad_std)
        self.ell = int(ell)
        self.vectorized = vectorized

    @property
    def is_exact(self) -> bool:
        return self.value_std == 0 and self.grad_std == 0

    def draw(self, rng: Optional[np.random.Generator], n: int):
        """One noise realisation (``None`` when the oracle is exact)."""
        if self.is_exact or rng is None:
            return None
        e0 = rng.standard_normal(self.ell) if self.value_std else None
        E = rng.standard_normal((self.ell, n)) / math.sqrt(n) if self.grad_std else None
        return e0, E

    def evaluate(self, x, xi=None):
        x = np.asarray(x, dtype=np.float64)
        val = np.asarray(self.f(x), dtype=np.float64).reshape(-1)
        if xi is not None:
            e0, E = xi
            if e0 is not None:
                val = val + self.value_std * e0
            if E is not None:
                val = val + self.grad_std * (E @ x)
        return val if self.ell > 1 else val[:1]

    def __call__(self, x, rng=None):
        x = np.asarray(x, dtype=np.float64)
        out = self.evaluate(x, self.draw(rng, x.shape[0]))
        return out if self.ell > 1 else float(out[0])


def sphere_sample(rng: np.random.Generator, n: int) -> np.ndarray:
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    return unit_sphere(rng, n)


def sphere_sample_batch(rng: np.random.Generator, N: int, n: int) -> np.ndarray:
    """``(N, n)`` array of independent uniform unit vectors."""
    if n == 1:
        return np.where(rng.random((N, 1)) < 0.5, 1.0, -1.0)
    U = rng.standard_normal((N, n))
    nrm = np.linalg.norm(U, axis=1, keepdims=True)
    bad = nrm[:, 0] == 0
    while np.any(bad):
        U[bad] = rng.standard_normal((int(bad.sum()), n))
        nrm = np.linalg.norm(U, axis=1, keepdims=True)
        bad = nrm[:, 0] == 0
    return U / nrm


def _finite_difference(oracle: NoisyScalarOracle, x, phi, u, rng):
    xi = oracle.draw(rng, x.shape[0])
    return (oracle.evaluate(x + phi * u, xi) - oracle.evaluate(x, xi)), oracle.evaluate(x, xi)


def zo_gradient(oracle: NoisyScalarOracle, x, phi: float, u=None, rng=None) -> np.ndarray:
    """Two-point estimate ``(n/phi)(f'(x+phi u) - f'(x)) u`` with shared noise.

    ``u`` defaults to a fresh draw from ``rng``.  For vector-valued oracles
    the result is the ``(ell, n)`` matrix whose rows are the row estimates.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not phi > 0:
        raise ConfigurationError("phi must be positive")
    if u is None:
        if rng is None:
            raise ConfigurationError("need either a direction u or a generator")
        u = sphere_sample(rng, n)
    u = np.asarray(u, dtype=np.float64)
    if abs(float(np.linalg.norm(u)) - 1.0) > 1e-9:
        raise ConfigurationError("direction u must have unit norm")
    diff, _ = _finite_difference(oracle, x, phi, u, rng)
    G = (n / phi) * np.outer(diff, u)
    return G if oracle.ell > 1 else G[0]


def zo_gradient_batch(oracle: NoisyScalarOracle, x, phi: float, U: np.ndarray, rng=None) -> np.ndarray:
    """Estimates for every row of ``U`` (scalar oracles).  Returns ``(N, n)``."""
    x = np.asarray(x, dtype=np.float64)
    U = np.atleast_2d(np.asarray(U, dtype=np.float64))
    N, n = U.shape
    if oracle.ell != 1:
        raise ConfigurationError("batch estimates support scalar oracles only")
    if oracle.vectorized:
        plus = np.asarray(oracle.f(x[None, :] + phi * U), dtype=np.float64).reshape(N)
        base = float(np.asarray(oracle.f(x[None, :]), dtype=np.float64).reshape(-1)[0])
        diff = plus - base
        if rng is not None and oracle.grad_std:
            # shared realisation: the value shift cancels, E(x + phi u) - E x = phi E u
            E = rng.standard_normal((N, n)) / math.sqrt(n)
            diff = diff + oracle.grad_std * phi * np.einsum("ij,ij->i", E, U)
    else:
        diff = np.array([_finite_difference(oracle, x, phi, U[k], rng)[0][0] for k in range(N)])
    return (n / phi) * diff[:, None] * U


def smoothing_bias_bound(L: float, phi: float, n: int) -> float:
    """``phi n L / 2``: bound on ``||grad f_phi - grad f||`` for ``L``-smooth ``f``."""
    return phi * n * L / 2.0


def zo_variance_bound(M: float, varsigma: float, L: float, phi: float, n: int) -> float:
    """``2n(M^2 + varsigma^2) + phi^2 n^2 L^2 / 2``."""
    return 2.0 * n * (M * M + varsigma * varsigma) + (phi * n * L) ** 2 / 2.0


@dataclasses.dataclass(frozen=True)
class StochasticBounds:
    """Per-component bias and variance bounds of the zeroth-order KKT operator."""

    delta_h: float
    sigma_h_sq: float
    delta_g: float
    sigma_g_sq: float


def kkt_stochastic_bounds(n: int, phi: float, dual_radius: float, ell: int, row_L_h: Sequence[float],
                          row_M_h: Sequence[float], L_g: float, M_g: float, varpi: float = 0.0,
                          varsigma_h: float = 0.0, varsigma_g: float = 0.0) -> StochasticBounds:
    """Bias/variance bounds for one constraint block and one objective component.

    ``dual_radius`` bounds ``||y||`` along the run; ``row_L_h`` / ``row_M_h``
    are the gradient- and value-Lipschitz constants of the block's rows.
    """
    row_L_h = np.asarray(row_L_h, dtype=np.float64)
    row_M_h = np.asarray(row_M_h, dtype=np.float64)
    delta_h = phi * n * dual_radius / 2.0 * float(np.sqrt(np.sum(row_L_h**2)))
    vs_h = max(zo_variance_bound(M, varsigma_h, L, phi, n) for M, L in zip(row_M_h, row_L_h))
    sigma_h_sq = ell * (vs_h * dual_radius**2 + varpi**2)
    delta_g = phi * n * L_g / 2.0
    sigma_g_sq = zo_variance_bound(M_g, varsigma_g, L_g, phi, n)
    return StochasticBounds(delta_h, sigma_h_sq, delta_g, sigma_g_sq)


def _zo_h(oracle: NoisyScalarOracle, n: int, phi: float):
    def H(z, rng):
        z = np.asarray(z, dtype=np.float64)
        x, y = z[:n], z[n:]
        if rng is None:
            rng = np.random.default_rng(0)  # deterministic stand-in for metric evaluations
        u = sphere_sample(rng, n)
        diff, base = _finite_difference(oracle, x, phi, u, rng)
        # columns share one direction u: J' = (n/phi) diff u'
        return np.concatenate([(n / phi) * float(diff @ y) * u, -base])

    return H


def _zo_g(oracle: NoisyScalarOracle, n: int, ell: int, phi: float):
    pad = np.zeros(ell)

    def G(z, rng):
        z = np.asarray(z, dtype=np.float64)
        if rng is None:
            rng = np.random.default_rng(0)  # deterministic stand-in for metric evaluations
        u = sphere_sample(rng, n)
        diff, _ = _finite_difference(oracle, z[:n], phi, u, rng)
        return np.concatenate([(n / phi) * float(diff[0]) * u, pad])

    return G


def zo_kkt_operator_components(program: ConstrainedProgram, config: SmoothingConfig, dual_cap: float,
                               value_std: float = 0.0, grad_std_h: float = 0.0, grad_std_g: float = 0.0,
                               lipschitz_h: Optional[Sequence[float]] = None,
                               lipschitz_g: Optional[Sequence[float]] = None) -> KktProblem:
    """KKT problem whose components are zeroth-order estimates built from values only.

    Every component call draws a fresh direction ``u`` (shared by all rows of
    a constraint block) and a fresh oracle noise realisation.  Sampling
    weights use ``lipschitz_h`` / ``lipschitz_g`` when given, otherwise the
    closed-form KKT constants of the exact program.  When the program also
    carries gradients, the exact KKT problem is attached as
    ``exact_problem`` for scoring.
    """
    n, ell = program.n, program.ell
    if config.dim != n:
        raise ConfigurationError(f"smoothing dim {config.dim} does not match program dim {n}")
    if not dual_cap > 0:
        raise ConfigurationError("dual_cap must be positive")
    if any(c.value is None for c in program.objective) or any(c.value is None for c in program.constraints):
        raise ConfigurationError("every objective component and constraint block needs a value oracle")
    if ell == 0:
        raise ConfigurationError("program has no constraint blocks")

    exact = build_kkt_problem(program, dual_cap) if program.has_gradients else None
    if lipschitz_h is None:
        if exact is None:
            lipschitz_h = []
            for c in program.constraints:
                if c.jacobian_lipschitz is None or c.value_lipschitz is None:
                    raise ConfigurationError("need lipschitz_h or per-block Lipschitz information")
                a = c.jacobian_lipschitz * dual_cap * math.sqrt(ell)
                lipschitz_h.append(math.sqrt(a * a + 2.0 * c.value_lipschitz**2))
        else:
            lipschitz_h = exact.h.lipschitz
    if lipschitz_g is None:
        if any(c.lipschitz is None for c in program.objective):
            raise ConfigurationError("need lipschitz_g or per-component Lipschitz constants")
        lipschitz_g = [c.lipschitz for c in program.objective]

    h_or = [NoisyScalarOracle(c.value, value_std, grad_std_h, ell=ell) for c in program.constraints]
    g_or = [NoisyScalarOracle(c.value, 0.0, grad_std_g) for c in program.objective]
    hs = [_zo_h(o, n, config.phi) for o in h_or]
    gs = [_zo_g(o, n, ell, config.phi) for o in g_or]
    h_fam = ComponentFamily(hs, [max(v, 1e-12) for v in lipschitz_h], kind="h", stochastic=True)
    g_fam = ComponentFamily(gs, [max(v, 1e-12) for v in lipschitz_g],
                            values=[(lambda z, _c=c: _c.value(z[:n])) for c in program.objective],
                            kind="g", stochastic=True)
    dual_set = Box(np.zeros(ell), np.full(ell, float(dual_cap)))
    prob = KktProblem(h_fam, g_fam, Product([program.primal_set, dual_set]), mu_h=0.0,
                      name=f"zo-kkt[{program.name}]")
    prob.program = program
    prob.dual_cap = float(dual_cap)
    prob.dual_set = dual_set
    prob.smoothing = config
    prob.exact_problem = exact
    return prob
