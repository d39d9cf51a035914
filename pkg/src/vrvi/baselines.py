"""Deterministic reference solvers (used to compute high-accuracy solutions)."""
from __future__ import annotations

import dataclasses
from typing import NamedTuple, Optional

import numpy as np

from .core import ConfigurationError, natural_residual

__all__ = [
    "ExtragradientParams",
    "SolveResult",
    "solve_extragradient",
    "solve_projected_gradient",
    "reference_solution",
]


@dataclasses.dataclass(frozen=True)
class ExtragradientParams:
    step: float
    max_iters: int = 100_000
    tol: float = 1e-10
    lipschitz: Optional[float] = None

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigurationError("step must be positive")
        if self.lipschitz is not None and self.step > 1.0 / self.lipschitz * (1 + 1e-12):
            raise ConfigurationError(f"step {self.step} exceeds 1/L = {1.0 / self.lipschitz}")

    @classmethod
    def for_problem(cls, problem, max_iters=100_000, tol=1e-10, fraction=0.9):
        # a step of exactly 1/L leaves H(x) = x at a fixed point of the two-step map
        L = problem.L_h + problem.L_g
        return cls(step=fraction / L, max_iters=max_iters, tol=tol, lipschitz=L)


class SolveResult(NamedTuple):
    x: np.ndarray
    residual: float
    converged: bool
    iters: int


def solve_extragradient(problem, params: ExtragradientParams, x0=None, check_every: int = 10,
                        callback=None) -> SolveResult:
    """Two-projection extragradient on ``F = H + grad g``.

    Stops once the natural residual ``|x - P(x - F(x))|`` is at most ``tol``.
    If the iteration budget runs out, the best iterate seen is returned with
    ``converged=False``.  ``callback(k, x)`` is invoked at every residual check.
    """
    proj = problem.constraint.project
    F = problem.operator
    s = params.step
    x = proj(np.zeros(problem.dim) if x0 is None else np.asarray(x0, dtype=np.float64))
    best_x, best_r = x, natural_residual(problem, x)
    if best_r <= params.tol:
        return SolveResult(x, best_r, True, 0)
    for k in range(1, params.max_iters + 1):
        x_half = proj(x - s * F(x))
        x = proj(x - s * F(x_half))
        if k % check_every == 0 or k == params.max_iters:
            r = natural_residual(problem, x)
            if callback is not None:
                callback(k, x)
            if r < best_r:
                best_x, best_r = x, r
            if r <= params.tol:
                return SolveResult(x, r, True, k)
    return SolveResult(best_x, best_r, False, params.max_iters)


def solve_projected_gradient(problem, params: ExtragradientParams, x0=None, check_every: int = 10) -> SolveResult:
    """Projected gradient on ``g`` alone (the problem must have no H components)."""
    if len(problem.h):
        raise ConfigurationError("projected gradient applies to pure optimization problems (no H components)")
    proj = problem.constraint.project
    grad = problem.g_grad_sum
    s = params.step
    x = proj(np.zeros(problem.dim) if x0 is None else np.asarray(x0, dtype=np.float64))
    best_x, best_r = x, natural_residual(problem, x)
    if best_r <= params.tol:
        return SolveResult(x, best_r, True, 0)
    for k in range(1, params.max_iters + 1):
        x = proj(x - s * grad(x))
        if k % check_every == 0 or k == params.max_iters:
            r = natural_residual(problem, x)
            if r < best_r:
                best_x, best_r = x, r
            if r <= params.tol:
                return SolveResult(x, r, True, k)
    return SolveResult(best_x, best_r, False, params.max_iters)


def reference_solution(problem, tol: float = 1e-10, max_iters: int = 200_000, x0=None) -> np.ndarray:
    """High-accuracy solution via extragradient; raises if ``tol`` is not reached."""
    res = solve_extragradient(problem, ExtragradientParams.for_problem(problem, max_iters, tol), x0=x0)
    if not res.converged:
        raise ConfigurationError(f"reference solve stalled at residual {res.residual:.3e}")
    return res.x
