"""Finite-sum constrained programs and their primal-dual (KKT) variational inequality.

For ``min sum_i g_i(x)`` subject to ``sum_j h_j(x) <= 0`` (each ``h_j`` maps
to R^ell) over ``x`` in ``X``, the Lagrangian saddle point is the solution of
the VI with

    H_j(z)      = (Jh_j(x)' y, -h_j(x)),
    grad g_i(z) = (grad g_i(x), 0),

over ``z = (x, y)`` in ``X x [0, D_y]^ell``.  The dual cap ``D_y`` has to be
large enough to contain the optimal multiplier; it is always user supplied.
"""
from __future__ import annotations

import copy
import dataclasses
import math
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Ball, Box, ConfigurationError, ConstraintSet, Product, Whole
from .oracle import ComponentFamily, CompositeVIProblem

__all__ = [
    "ObjectiveComponent",
    "ConstraintBlock",
    "ConstrainedProgram",
    "KktProblem",
    "build_kkt_problem",
    "perturb",
    "constraint_violation",
    "objective_gap",
    "monotonicity_check",
    "empirical_lipschitz",
    "solve_program_reference",
    "multipliers_from_primal",
]


@dataclasses.dataclass
class ObjectiveComponent:
    """A convex ``g_i`` with value, gradient and gradient-Lipschitz constant."""

    value: Callable
    grad: Optional[Callable] = None
    lipschitz: Optional[float] = None
    value_lipschitz: Optional[float] = None


@dataclasses.dataclass
class ConstraintBlock:
    """A convex vector constraint ``h_j: R^n -> R^ell``.

    ``jacobian_lipschitz`` bounds ``sqrt(sum_s L_s^2)`` where ``L_s`` is the
    Lipschitz constant of the gradient of row ``s``; ``value_lipschitz`` bounds
    the Lipschitz constant of ``h_j`` itself (equivalently ``||Jh_j||_2``).
    Affine blocks built with :meth:`linear` carry their matrix and offset.
    """

    value: Callable
    jacobian: Optional[Callable] = None
    ell: int = 1
    jacobian_lipschitz: Optional[float] = None
    value_lipschitz: Optional[float] = None
    matrix: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None

    @classmethod
    def linear(cls, A, b=None) -> "ConstraintBlock":
        """``h(x) = A x + b``."""
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=np.float64).reshape(-1)
        if b.shape[0] != A.shape[0]:
            raise ConfigurationError("offset length must match the number of rows")
        return cls(
            value=lambda x: A @ x + b,
            jacobian=lambda x: A,
            ell=A.shape[0],
            jacobian_lipschitz=0.0,
            value_lipschitz=float(np.linalg.norm(A, 2)),
            matrix=A,
            offset=b,
        )

    @property
    def is_linear(self) -> bool:
        return self.matrix is not None


class ConstrainedProgram:
    """``min sum_i g_i(x)`` s.t. ``sum_j h_j(x) <= 0``, ``x`` in ``primal_set``."""

    def __init__(self, objective: Sequence[ObjectiveComponent], constraints: Sequence[ConstraintBlock],
                 primal_set: ConstraintSet, name: str = ""):
        self.objective = list(objective)
        self.constraints = list(constraints)
        self.primal_set = primal_set
        self.name = name
        if not self.objective:
            raise ConfigurationError("need at least one objective component")
        ells = {c.ell for c in self.constraints}
        if len(ells) > 1:
            raise ConfigurationError(f"constraint blocks disagree on ell: {sorted(ells)}")
        self.ell = ells.pop() if ells else 0
        self.n = primal_set.dim
        self.data = None

    def objective_value(self, x) -> float:
        return float(sum(c.value(x) for c in self.objective))

    def constraint_sum(self, x) -> np.ndarray:
        out = np.zeros(self.ell)
        for c in self.constraints:
            out = out + np.asarray(c.value(x), dtype=np.float64).reshape(-1)
        return out

    def constraint_violation(self, x) -> float:
        return constraint_violation(self, x)

    def objective_gap(self, x, f_star: float) -> float:
        return objective_gap(self, x, f_star)

    @property
    def has_gradients(self) -> bool:
        return all(c.grad is not None for c in self.objective) and all(
            c.jacobian is not None for c in self.constraints
        )


def constraint_violation(program: ConstrainedProgram, x) -> float:
    """``||max(0, sum_j h_j(x))||_inf`` (the blocks are summed before clamping)."""
    if not program.ell:
        return 0.0
    return float(np.max(np.maximum(program.constraint_sum(np.asarray(x, dtype=np.float64)), 0.0)))


def objective_gap(program: ConstrainedProgram, x, f_star: float) -> float:
    return program.objective_value(np.asarray(x, dtype=np.float64)) - float(f_star)


class KktProblem(CompositeVIProblem):
    """Composite VI over ``z = (x, y)`` built from a :class:`ConstrainedProgram`."""

    program: ConstrainedProgram
    dual_cap: float
    dual_set: Box

    def split(self, z):
        z = np.asarray(z, dtype=np.float64)
        return z[: self.program.n], z[self.program.n:]

    def touches_cap(self, z, tol: float = 1e-12) -> bool:
        """Whether some dual coordinate of ``z`` sits at the cap ``D_y``."""
        _, y = self.split(z)
        return bool(np.any(y >= self.dual_cap - tol))


def _kkt_h(block: ConstraintBlock, n: int):
    if block.is_linear:
        A, b = block.matrix, block.offset
        At = A.T

        def H(z):
            x, y = z[:n], z[n:]
            return np.concatenate([At @ y, -(A @ x + b)])
    else:
        def H(z):
            x, y = z[:n], z[n:]
            J = np.atleast_2d(np.asarray(block.jacobian(x), dtype=np.float64))
            return np.concatenate([J.T @ y, -np.asarray(block.value(x), dtype=np.float64).reshape(-1)])
    return H


def _kkt_g(comp: ObjectiveComponent, n: int, ell: int):
    pad = np.zeros(ell)

    def G(z):
        return np.concatenate([comp.grad(z[:n]), pad])

    def V(z):
        return comp.value(z[:n])

    return G, V


def empirical_lipschitz(fn: Callable, cset: ConstraintSet, n_pairs: int = 10_000, seed: int = 0,
                        safety: float = 1.5, scale: float = 1.0) -> float:
    """``safety`` times the largest difference quotient over random pairs of ``cset``."""
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_pairs):
        a = cset.sample(rng, scale)
        b = cset.sample(rng, scale)
        d = float(np.linalg.norm(a - b))
        if d > 0:
            best = max(best, float(np.linalg.norm(fn(a) - fn(b))) / d)
    return safety * best


def _closed_form_lipschitz(block: ConstraintBlock, dual_cap: float) -> float:
    if block.is_linear:
        # H(z) = [[0, A'], [-A, 0]] z + const, whose spectral norm is ||A||
        return float(np.linalg.norm(block.matrix, 2))
    if block.jacobian_lipschitz is None or block.value_lipschitz is None:
        raise ConfigurationError(
            "closed-form Lipschitz constants need jacobian_lipschitz and value_lipschitz on every block"
        )
    a = block.jacobian_lipschitz * dual_cap * math.sqrt(block.ell)
    M = block.value_lipschitz
    return math.sqrt(a * a + 2.0 * M * M)


def build_kkt_problem(program: ConstrainedProgram, dual_cap: float, lipschitz_mode: str = "closed_form",
                      n_pairs: int = 10_000, seed: int = 0) -> KktProblem:
    """Primal-dual VI of ``program`` with the dual restricted to ``[0, dual_cap]^ell``.

    ``lipschitz_mode`` is ``"closed_form"`` (exact for affine blocks, a
    triangle-inequality bound from the block constants otherwise) or
    ``"empirical"`` (1.5 times the largest difference quotient over
    ``n_pairs`` random feasible pairs).
    """
    if not dual_cap > 0 or not math.isfinite(dual_cap):
        raise ConfigurationError("dual_cap must be positive and finite")
    if lipschitz_mode not in ("closed_form", "empirical"):
        raise ConfigurationError(f"unknown lipschitz_mode {lipschitz_mode!r}")
    if not program.has_gradients:
        raise ConfigurationError("program lacks gradients; use the zeroth-order builder")
    n, ell = program.n, program.ell
    if ell == 0:
        raise ConfigurationError("program has no constraint blocks")
    rng = np.random.default_rng(seed)
    x = program.primal_set.sample(rng)
    for c in program.constraints:
        try:
            val = np.asarray(c.value(x)).reshape(-1)
            J = np.atleast_2d(np.asarray(c.jacobian(x)))
        except ValueError as exc:
            raise ConfigurationError(f"constraint block does not accept a point of dimension {n}: {exc}") from None
        if val.shape[0] != ell:
            raise ConfigurationError("constraint value has the wrong length")
        if J.shape != (ell, n):
            raise ConfigurationError(f"Jacobian has shape {J.shape}, expected {(ell, n)}")
    for c in program.objective:
        if np.asarray(c.grad(x)).shape != (n,):
            raise ConfigurationError("objective gradient has the wrong length")

    dual_set = Box(np.zeros(ell), np.full(ell, float(dual_cap)))
    zset = Product([program.primal_set, dual_set])
    hs = [_kkt_h(c, n) for c in program.constraints]
    gs = [_kkt_g(c, n, ell) for c in program.objective]
    if lipschitz_mode == "closed_form":
        lh = [_closed_form_lipschitz(c, dual_cap) for c in program.constraints]
        lg = []
        for c in program.objective:
            if c.lipschitz is None:
                raise ConfigurationError("closed-form mode needs a Lipschitz constant on every objective component")
            lg.append(c.lipschitz)
    else:
        lh = [empirical_lipschitz(H, zset, n_pairs, seed + j) for j, H in enumerate(hs)]
        lg = [empirical_lipschitz(G, zset, n_pairs, seed + 7919 + i) for i, (G, _) in enumerate(gs)]
    lh = [max(v, 1e-12) for v in lh]
    lg = [max(v, 1e-12) for v in lg]
    h_fam = ComponentFamily(hs, lh, kind="h")
    g_fam = ComponentFamily([G for G, _ in gs], lg, values=[V for _, V in gs], kind="g")
    prob = KktProblem(h_fam, g_fam, zset, mu_h=0.0, name=f"kkt[{program.name}]")
    prob.program = program
    prob.dual_cap = float(dual_cap)
    prob.dual_set = dual_set
    return prob


def perturb(problem: CompositeVIProblem, mu: float, attach_index: int = 0) -> CompositeVIProblem:
    """``F_mu(z) = F(z) + mu z`` with ``mu z`` folded into H-component ``attach_index``.

    The returned problem is a shallow copy of ``problem`` (same class, same
    extra attributes); its ``mu_h`` is ``mu``.
    """
    if mu < 0 or not math.isfinite(mu):
        raise ConfigurationError("mu must be nonnegative and finite")
    h = problem.h
    if not 0 <= attach_index < len(h):
        raise ConfigurationError(f"attach_index {attach_index} out of range for {len(h)} components")
    comps = list(h.components)
    base = comps[attach_index]
    if h.stochastic:
        comps[attach_index] = lambda z, rng, _f=base: _f(z, rng) + mu * np.asarray(z, dtype=np.float64)
    else:
        comps[attach_index] = lambda z, _f=base: _f(z) + mu * np.asarray(z, dtype=np.float64)
    lips = h.lipschitz.copy()
    lips[attach_index] += mu
    new = copy.copy(problem)
    new.h = ComponentFamily(comps, lips, values=h.values, kind="h", stochastic=h.stochastic)
    new.mu_h = float(mu)
    exact = getattr(problem, "exact_problem", None)
    if exact is not None:
        new.exact_problem = perturb(exact, mu, attach_index)
    return new


def monotonicity_check(problem: CompositeVIProblem, n_pairs: int = 1000, seed: int = 0, tol: float = 1e-8):
    """Smallest ``<F(z1) - F(z2), z1 - z2>`` over random feasible pairs.

    Returns ``(ok, worst)`` with ``ok`` true when ``worst >= -tol``.
    """
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(n_pairs):
        a = problem.constraint.sample(rng)
        b = problem.constraint.sample(rng)
        worst = min(worst, float((problem.operator(a) - problem.operator(b)) @ (a - b)))
    return worst >= -tol, worst


def solve_program_reference(program: ConstrainedProgram, x0=None, tol: float = 1e-12, max_iters: int = 1000):
    """High-accuracy primal solution ``(x*, f*)`` by sequential quadratic programming.

    Supports ``Whole``, ``Box`` and ``Ball`` primal sets.
    """
    from scipy.optimize import minimize

    n = program.n
    cset = program.primal_set
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64)
    cons = []
    if program.ell:
        cons.append(dict(
            type="ineq",
            fun=lambda x: -program.constraint_sum(x),
            jac=lambda x: -sum(np.atleast_2d(c.jacobian(x)) for c in program.constraints),
        ))
    bounds = None
    if isinstance(cset, Ball):
        c0, r = cset.center, cset.radius
        cons.append(dict(type="ineq", fun=lambda x: np.array([r * r - (x - c0) @ (x - c0)]),
                         jac=lambda x: (-2.0 * (x - c0)).reshape(1, -1)))
    elif isinstance(cset, Box):
        bounds = [(None if not math.isfinite(lo) else lo, None if not math.isfinite(hi) else hi)
                  for lo, hi in zip(cset.lo, cset.hi)]
    elif not isinstance(cset, Whole):
        raise ConfigurationError(f"unsupported primal set {type(cset).__name__}")

    def grad(x):
        return sum(c.grad(x) for c in program.objective)

    res = minimize(program.objective_value, x0, jac=grad, method="SLSQP", bounds=bounds, constraints=cons,
                   options=dict(ftol=tol, maxiter=max_iters))
    x = np.asarray(res.x, dtype=np.float64)
    # mode 8 means the line search hit round-off at the optimum; accept it when feasible
    feasible = constraint_violation(program, x) <= 1e-8 and cset.contains(x, 1e-8)
    if not (res.success or (res.status == 8 and feasible)):
        raise ConfigurationError(f"reference solve failed: {res.message}")
    return x, program.objective_value(x)


def multipliers_from_primal(program: ConstrainedProgram, x_star, active_tol: float = 1e-7) -> np.ndarray:
    """Dual vector ``y*`` matching a primal solution, by nonnegative least squares.

    Solves ``min ||grad f(x*) + Jh(x*)' y + N nu||`` over ``y, nu >= 0`` where
    only active constraint rows enter ``y`` and ``N`` holds outward normals of
    the active pieces of the primal set (ball or box).
    """
    from scipy.optimize import nnls

    x = np.asarray(x_star, dtype=np.float64)
    grad = sum(c.grad(x) for c in program.objective)
    hsum = program.constraint_sum(x)
    J = sum(np.atleast_2d(c.jacobian(x)) for c in program.constraints)
    active = np.flatnonzero(hsum >= -active_tol)
    cols = [J[s] for s in active]
    cset = program.primal_set
    if isinstance(cset, Ball):
        d = x - cset.center
        if np.linalg.norm(d) >= cset.radius - active_tol:
            cols.append(d)
    elif isinstance(cset, Box):
        for i in range(program.n):
            e = np.zeros(program.n)
            if x[i] >= cset.hi[i] - active_tol:
                e[i] = 1.0
                cols.append(e)
            elif x[i] <= cset.lo[i] + active_tol:
                e[i] = -1.0
                cols.append(e)
    y = np.zeros(program.ell)
    if cols:
        coef, _ = nnls(np.column_stack(cols), -grad)
        y[active] = coef[: len(active)]
    return y
