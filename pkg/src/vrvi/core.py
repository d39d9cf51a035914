"""Vectors, constraint sets, solution-quality metrics and trace records.

Points are plain 1-D ``float64`` numpy arrays.  Every projection here is the
exact Euclidean projection onto the set, which is what the proximal steps of
the solvers reduce to.
"""
from __future__ import annotations

import dataclasses
import math
import time
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "VRVIError",
    "ConfigurationError",
    "DivergenceError",
    "StaleCacheError",
    "as_point",
    "ConstraintSet",
    "Whole",
    "Ball",
    "NonnegOrthant",
    "Box",
    "Product",
    "CustomSet",
    "project",
    "prox_linear",
    "GapEvaluator",
    "q_gap",
    "residual_norm",
    "natural_residual",
    "TraceRecord",
    "TRACE_FIELDS",
    "Reference",
    "Monitor",
]


class VRVIError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(VRVIError, ValueError):
    """Invalid parameters, problem setup or experiment configuration."""


class DivergenceError(VRVIError, ArithmeticError):
    """A solver produced a non-finite iterate.

    ``state`` holds the last state whose iterates were all finite.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class StaleCacheError(VRVIError, RuntimeError):
    """A snapshot cache was used at an anchor it was not built for."""


def as_point(p, dim: Optional[int] = None) -> np.ndarray:
    """Convert ``p`` to a finite 1-D float64 array, optionally checking its length."""
    x = np.asarray(p, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.ndim != 1:
        raise ValueError(f"point must be one-dimensional, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite coordinates")
    return x


# ---------------------------------------------------------------------------
# constraint sets


class ConstraintSet:
    """Closed convex set with an exact Euclidean projection."""

    dim: int

    @property
    def diameter(self) -> Optional[float]:
        return None

    def _project(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def project(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        if p.ndim != 1 or p.shape[0] != self.dim:
            raise ValueError(
                f"dimension mismatch: set has dim {self.dim}, point has shape {p.shape}"
            )
        return self._project(p)

    def contains(self, p, tol: float = 1e-12) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.linalg.norm(self.project(p) - p) <= tol)

    def sample(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        """Random point of the set (projection of a Gaussian draw)."""
        return self.project(scale * rng.standard_normal(self.dim))


@dataclasses.dataclass(frozen=True)
class Whole(ConstraintSet):
    dim: int

    def _project(self, p):
        return p.copy()


@dataclasses.dataclass(frozen=True, eq=False)
class Ball(ConstraintSet):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def _project(self, p):
        d = p - self.center
        nrm = math.sqrt(float(d @ d))
        if nrm <= self.radius:
            return p.copy()
        return self.center + d * (self.radius / nrm)

    def sample(self, rng, scale=1.0):
        # uniform in the ball
        d = rng.standard_normal(self.dim)
        d /= np.linalg.norm(d)
        r = self.radius * rng.uniform() ** (1.0 / self.dim)
        return self.center + r * d


@dataclasses.dataclass(frozen=True)
class NonnegOrthant(ConstraintSet):
    dim: int

    def _project(self, p):
        return np.maximum(p, 0.0)

    def sample(self, rng, scale=1.0):
        return scale * np.abs(rng.standard_normal(self.dim))


@dataclasses.dataclass(frozen=True, eq=False)
class Box(ConstraintSet):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(-1)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("box bounds have different lengths")
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi coordinatewise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def diameter(self) -> Optional[float]:
        width = self.hi - self.lo
        if not np.all(np.isfinite(width)):
            return None
        return float(np.linalg.norm(width))

    def _project(self, p):
        return np.minimum(np.maximum(p, self.lo), self.hi)

    def sample(self, rng, scale=1.0):
        lo = np.where(np.isfinite(self.lo), self.lo, -scale)
        hi = np.where(np.isfinite(self.hi), self.hi, lo + 2 * scale)
        return rng.uniform(lo, hi)


class Product(ConstraintSet):
    """Cartesian product; each block is projected independently."""

    def __init__(self, blocks: Sequence[ConstraintSet]):
        if not blocks:
            raise ValueError("product needs at least one block")
        self.blocks = tuple(blocks)
        dims = [b.dim for b in self.blocks]
        self.offsets = np.cumsum([0] + dims)
        self.dim = int(self.offsets[-1])

    @property
    def diameter(self) -> Optional[float]:
        ds = [b.diameter for b in self.blocks]
        if any(d is None for d in ds):
            return None
        return math.sqrt(sum(d * d for d in ds))

    def split(self, p):
        return [p[self.offsets[i]:self.offsets[i + 1]] for i in range(len(self.blocks))]

    def _project(self, p):
        return np.concatenate([b._project(q) for b, q in zip(self.blocks, self.split(p))])

    def sample(self, rng, scale=1.0):
        return np.concatenate([b.sample(rng, scale) for b in self.blocks])

    def __repr__(self):
        return f"Product({list(self.blocks)!r})"


class CustomSet(ConstraintSet):
    """Set given only through a user projection callback."""

    def __init__(self, dim: int, projection: Callable, diameter: Optional[float] = None):
        self.dim = dim
        self._projection = projection
        self._diameter = diameter

    @property
    def diameter(self):
        return self._diameter

    def _project(self, p):
        return np.asarray(self._projection(p), dtype=np.float64)


def project(cset: ConstraintSet, p) -> np.ndarray:
    """Euclidean projection of ``p`` onto ``cset``."""
    return cset.project(p)


def prox_linear(cset: ConstraintSet, center, direction, step: float) -> np.ndarray:
    """Solve ``argmin_{x in set} step*<direction, x - center> + 0.5*||x - center||^2``.

    The minimiser is the projection of ``center - step*direction``.
    """
    return cset.project(np.asarray(center) - step * np.asarray(direction))


# ---------------------------------------------------------------------------
# metrics


class GapEvaluator:
    """Evaluates ``Q(x'; x*) = <H(x*), x' - x*> + g(x') - g(x*)``."""

    def __init__(self, reference_solution, h_sum: Callable, g_value: Callable):
        self.reference_solution = as_point(reference_solution)
        self.h_sum = h_sum
        self.g_value = g_value
        self._h_star = np.asarray(h_sum(self.reference_solution), dtype=np.float64)
        self._g_star = float(g_value(self.reference_solution))

    @classmethod
    def for_problem(cls, problem, x_star) -> "GapEvaluator":
        return cls(x_star, problem.h_sum, problem.g_value)

    def __call__(self, x_prime) -> float:
        return q_gap(self, x_prime)


def q_gap(evaluator: GapEvaluator, x_prime) -> float:
    x_prime = np.asarray(x_prime, dtype=np.float64)
    xs = evaluator.reference_solution
    if x_prime.shape != xs.shape:
        raise ValueError(f"dimension mismatch: {x_prime.shape} vs {xs.shape}")
    if np.array_equal(x_prime, xs):
        return 0.0
    return float(evaluator._h_star @ (x_prime - xs)) + float(evaluator.g_value(x_prime)) - evaluator._g_star


def residual_norm(problem, x) -> float:
    """``||sum_i H_i(x) + sum_i grad g_i(x)||_2`` with exact evaluations."""
    return float(np.linalg.norm(problem.operator(x)))


def natural_residual(problem, x, step: float = 1.0) -> float:
    """``||x - P(x - step*F(x))|| / step``; zero exactly at VI solutions."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.linalg.norm(x - problem.constraint.project(x - step * problem.operator(x)))) / step


# ---------------------------------------------------------------------------
# traces

TRACE_FIELDS = (
    "iter",
    "epoch",
    "oracle_h_calls",
    "oracle_g_calls",
    "dist_sq",
    "q_gap",
    "res_norm",
    "cons_viol",
    "obj_gap",
    "wall_ms",
)


@dataclasses.dataclass
class TraceRecord:
    """One logged row of convergence metrics and oracle-call counts.

    Metrics that cannot be computed for a run (no reference solution, no
    constrained program) are ``None``.
    """

    iter: int
    epoch: int
    oracle_h_calls: int
    oracle_g_calls: int
    dist_sq: Optional[float] = None
    q_gap: Optional[float] = None
    res_norm: Optional[float] = None
    cons_viol: Optional[float] = None
    obj_gap: Optional[float] = None
    wall_ms: Optional[float] = None

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class Reference:
    """Known quantities used to score iterates.

    ``program``/``f_star`` enable the constrained-program metrics; they apply
    to the first ``program.n`` coordinates of the iterate.
    """

    x_star: Optional[np.ndarray] = None
    program: object = None
    f_star: Optional[float] = None


class Monitor:
    """Builds :class:`TraceRecord` rows for a run on ``problem``."""

    def __init__(self, problem, reference: Optional[Reference] = None, wall_clock: bool = True):
        # problems with randomised components may carry an exact twin for scoring
        problem = getattr(problem, "exact_problem", None) or problem
        self.problem = problem
        self.reference = reference or Reference()
        self.wall_clock = wall_clock
        self.gap = None
        if self.reference.x_star is not None:
            self.gap = GapEvaluator.for_problem(problem, self.reference.x_star)
        self._t0 = time.perf_counter()
        self.records: list[TraceRecord] = []

    def record(self, it: int, epoch: int, x, counters) -> TraceRecord:
        ref = self.reference
        rec = TraceRecord(
            iter=int(it),
            epoch=int(epoch),
            oracle_h_calls=int(counters.h),
            oracle_g_calls=int(counters.g),
            res_norm=residual_norm(self.problem, x),
        )
        if ref.x_star is not None:
            d = x - ref.x_star
            rec.dist_sq = float(d @ d)
            rec.q_gap = q_gap(self.gap, x)
        if ref.program is not None:
            xp = x[: ref.program.n]
            rec.cons_viol = ref.program.constraint_violation(xp)
            if ref.f_star is not None:
                rec.obj_gap = ref.program.objective_gap(xp, ref.f_star)
        if self.wall_clock:
            rec.wall_ms = (time.perf_counter() - self._t0) * 1e3
        self.records.append(rec)
        return rec
