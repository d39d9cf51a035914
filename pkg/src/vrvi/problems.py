"""Synthetic instances with certified constants, Neyman-Pearson programs, LIBSVM I/O."""
from __future__ import annotations

import dataclasses
import math
import os
import re
from typing import Optional

import numpy as np

from .core import Ball, ConfigurationError, Product, VRVIError, Whole
from .oracle import ComponentFamily, CompositeVIProblem

__all__ = [
    "LinearMap",
    "Quadratic",
    "SyntheticSpec",
    "gen_strongly_monotone",
    "gen_bilinear_monotone",
    "smoothed_hinge",
    "logistic",
    "LOSSES",
    "gen_np_classification",
    "ParseError",
    "SparseDataset",
    "parse_libsvm",
    "write_libsvm",
    "certify_constants",
    "gen_constrained_quadratic",
]


class LinearMap:
    """``x -> A x + b``; Lipschitz constant ``||A||_2``."""

    def __init__(self, A, b=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        self.b = np.zeros(self.A.shape[0]) if b is None else np.asarray(b, dtype=np.float64).reshape(-1)

    def __call__(self, x):
        return self.A @ x + self.b

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.A, 2))


class Quadratic:
    """``x -> 0.5 x'Cx + c'x + const`` (``C`` symmetric PSD)."""

    def __init__(self, C, c=None, const: float = 0.0):
        self.C = np.atleast_2d(np.asarray(C, dtype=np.float64))
        self.c = np.zeros(self.C.shape[0]) if c is None else np.asarray(c, dtype=np.float64).reshape(-1)
        self.const = float(const)

    def value(self, x) -> float:
        return 0.5 * float(x @ (self.C @ x)) + float(self.c @ x) + self.const

    def grad(self, x):
        return self.C @ x + self.c

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.C, 2))


def _quad_family(quads, kind="g"):
    return ComponentFamily([q.grad for q in quads], [max(q.lipschitz, 1e-300) for q in quads],
                           values=[q.value for q in quads], kind=kind)


@dataclasses.dataclass
class SyntheticSpec:
    n: int = 10
    m1: int = 4
    m2: int = 4
    mu_h: float = 0.1
    L_h: float = 1.0
    L_g: float = 1.0
    seed: int = 0
    set_kind: str = "whole"  # "whole" | "ball"
    radius: float = 1.0
    offset_scale: float = 1.0


def _random_weights(rng, m):
    w = rng.uniform(0.5, 1.5, size=m)
    return w / w.sum()


def gen_strongly_monotone(spec: SyntheticSpec, x_star_tol: float = 1e-12):
    """Affine ``H_i(x) = A_i x + b_i`` with ``sum A_i = mu_h I + S + P`` and
    convex quadratic ``g_i``, scaled so that ``sum_i ||A_i|| = L_h`` and
    ``sum_i ||C_i|| = L_g`` exactly.

    ``S`` is skew-symmetric and ``P`` is PSD and singular, so the strong
    monotonicity modulus of ``sum A_i`` is exactly ``mu_h``.  Each ``A_i`` is a
    weighted share of the sum plus a zero-sum heterogeneous perturbation.
    Returns ``(problem, x_star)``.
    """
    n, m1, m2 = spec.n, spec.m1, spec.m2
    if m1 < 2:
        raise ConfigurationError("need m1 >= 2")
    if not spec.mu_h > 0 or spec.mu_h > spec.L_h:
        raise ConfigurationError("need 0 < mu_h <= L_h")
    rng = np.random.default_rng(spec.seed)
    G = rng.standard_normal((n, n)) / math.sqrt(n)
    S = G - G.T
    R = rng.standard_normal((n, max(n - 1, 1))) / math.sqrt(n)
    P = R @ R.T if n > 1 else np.zeros((1, 1))
    E = rng.standard_normal((m1, n, n)) / math.sqrt(n)
    E -= E.mean(axis=0)
    wts = _random_weights(rng, m1)

    def mats(t):
        M = spec.mu_h * np.eye(n) + t * (S + P)
        return [wts[i] * M + t * E[i] for i in range(m1)]

    def total(t):
        return sum(np.linalg.norm(A, 2) for A in mats(t))

    if total(0.0) > spec.L_h * (1 + 1e-12):
        raise ConfigurationError("requested L_h too small for mu_h")
    if n == 1:
        As = mats(0.0)
    else:
        lo, hi = 0.0, 1.0
        while total(hi) < spec.L_h:
            hi *= 2
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if total(mid) < spec.L_h else (lo, mid)
        As = mats(lo)
    bs = spec.offset_scale * rng.standard_normal((m1, n))
    h_maps = [LinearMap(A, b) for A, b in zip(As, bs)]

    quads = []
    cw = _random_weights(rng, m2)
    for i in range(m2):
        Z = rng.standard_normal((n, max(1, n // 2)))
        C = Z @ Z.T
        C *= cw[i] * spec.L_g / np.linalg.norm(C, 2)
        quads.append(Quadratic(C, spec.offset_scale * rng.standard_normal(n)))

    h_fam = ComponentFamily(h_maps, [hm.lipschitz for hm in h_maps], kind="h")
    g_fam = _quad_family(quads)
    if spec.set_kind == "whole":
        cset = Whole(n)
    elif spec.set_kind == "ball":
        cset = Ball(np.zeros(n), spec.radius)
    else:
        raise ConfigurationError(f"unknown set kind {spec.set_kind!r}")
    mu_cert = float(np.linalg.eigvalsh(0.5 * (sum(As) + sum(As).T)).min())
    problem = CompositeVIProblem(h_fam, g_fam, cset, mu_h=min(mu_cert, spec.mu_h), name="strongly_monotone")
    if spec.set_kind == "whole":
        M = sum(As) + sum(q.C for q in quads)
        r = bs.sum(axis=0) + sum(q.c for q in quads)
        x_star = np.linalg.solve(M, -r)
    else:
        from .baselines import reference_solution

        x_star = reference_solution(problem, tol=x_star_tol)
    return problem, x_star


def gen_bilinear_monotone(n_x: int, n_y: int, m1: int, seed: int = 0, m2: int = 0, L_h: float = 1.0,
                          L_g: float = 1.0, g_offset: float = 0.0, radius: float = 1.0):
    """Skew bilinear ``H_i(x, y) = (B_i y, -B_i' x)`` on a product of balls.

    With ``m2 > 0`` rank-one convex quadratics ``g_i(z) = 0.5 c_i (a_i'z - t_i)^2``
    are added (targets ``t_i`` scaled by ``g_offset``), so the sum stays
    merely monotone.  ``sum_i ||B_i|| = L_h``.  Returns ``(problem, x_star)``;
    ``x_star = 0`` exactly when ``m2 == 0`` or ``g_offset == 0``.
    """
    rng = np.random.default_rng(seed)
    n = n_x + n_y
    Bs = [rng.standard_normal((n_x, n_y)) for _ in range(m1)]
    norms = np.array([np.linalg.norm(B, 2) for B in Bs])
    wts = _random_weights(rng, m1)
    maps = []
    for B, nb, w in zip(Bs, norms, wts):
        B = B * (w * L_h / nb)
        A = np.zeros((n, n))
        A[:n_x, n_x:] = B
        A[n_x:, :n_x] = -B.T
        maps.append(LinearMap(A))
    h_fam = ComponentFamily(maps, [mp.lipschitz for mp in maps], kind="h")
    quads = []
    if m2:
        cw = _random_weights(rng, m2)
        for i in range(m2):
            a = rng.standard_normal(n)
            a /= np.linalg.norm(a)
            t = g_offset * rng.standard_normal()
            c = cw[i] * L_g
            quads.append(Quadratic(c * np.outer(a, a), -c * t * a, 0.5 * c * t * t))
    g_fam = _quad_family(quads)
    cset = Product([Ball(np.zeros(n_x), radius), Ball(np.zeros(n_y), radius)])
    problem = CompositeVIProblem(h_fam, g_fam, cset, mu_h=0.0, name="bilinear_monotone")
    if not m2 or g_offset == 0.0:
        return problem, np.zeros(n)
    from .baselines import reference_solution

    return problem, reference_solution(problem, tol=1e-11, max_iters=2_000_000)


def certify_constants(problem: CompositeVIProblem, n_pairs: int = 1000, seed: int = 0, rtol: float = 1e-9):
    """Randomised check of the advertised monotonicity and Lipschitz constants.

    Returns a dict of booleans: ``strong_monotone``, ``h_lipschitz``,
    ``g_lipschitz``, ``g_monotone``.
    """
    rng = np.random.default_rng(seed)
    mu = problem.mu_h or 0.0
    ok = dict(strong_monotone=True, h_lipschitz=True, g_lipschitz=True, g_monotone=True)
    for _ in range(n_pairs):
        x = problem.constraint.sample(rng)
        y = problem.constraint.sample(rng)
        d = x - y
        dd = float(d @ d)
        if dd == 0:
            continue
        hd = problem.h_sum(x) - problem.h_sum(y)
        if float(hd @ d) < mu * dd * (1 - rtol) - 1e-12:
            ok["strong_monotone"] = False
        for i in range(len(problem.h)):
            if np.linalg.norm(problem.h.eval(i, x) - problem.h.eval(i, y)) > problem.h.lipschitz[i] * math.sqrt(dd) * (1 + rtol) + 1e-12:
                ok["h_lipschitz"] = False
        for i in range(len(problem.g)):
            if np.linalg.norm(problem.g.eval(i, x) - problem.g.eval(i, y)) > problem.g.lipschitz[i] * math.sqrt(dd) * (1 + rtol) + 1e-12:
                ok["g_lipschitz"] = False
        gd = problem.g_grad_sum(x) - problem.g_grad_sum(y)
        if float(gd @ d) < -1e-12 * (1 + dd):
            ok["g_monotone"] = False
    return ok


# ---------------------------------------------------------------------------
# Neyman-Pearson classification


def smoothed_hinge(t):
    t = np.asarray(t, dtype=np.float64)
    return np.where(t <= 0, 0.5 - t, np.where(t <= 1, 0.5 * (1 - t) ** 2, 0.0))


def _smoothed_hinge_d(t):
    t = np.asarray(t, dtype=np.float64)
    return np.where(t <= 0, -1.0, np.where(t <= 1, t - 1.0, 0.0))


def logistic(t):
    return np.logaddexp(0.0, -np.asarray(t, dtype=np.float64))


def _logistic_d(t):
    return -0.5 * (1.0 - np.tanh(0.5 * np.asarray(t, dtype=np.float64)))


# loss -> (value, derivative, bound on second derivative, bound on |derivative|)
LOSSES = {
    "smoothed_hinge": (smoothed_hinge, _smoothed_hinge_d, 1.0, 1.0),
    "logistic": (logistic, _logistic_d, 0.25, 1.0),
}


def _blocks(n_items, m):
    if m < 1 or m > n_items:
        raise ConfigurationError(f"cannot split {n_items} items into {m} blocks")
    return np.array_split(np.arange(n_items), m)


def gen_np_classification(n: int = 50, n0: int = 200, n1: int = 200, loss: str = "smoothed_hinge",
                          lam: float = 5.0, r1: float = 0.1, seed: int = 0, dataset=None,
                          m1: int = 4, m2: int = 4, separation: float = 2.0):
    """Neyman-Pearson program: minimise the class-0 loss subject to a class-1 loss budget.

    ``min_{|x| <= lam} (1/n0) sum_j phi(x' xi_0j)``  s.t.
    ``(1/n1) sum_j phi(-x' xi_1j) <= r1``.

    Objective terms are grouped into ``m2`` blocks and the constraint terms into
    ``m1`` scalar constraint blocks (each carrying ``-r1/m1``).  Without a
    ``dataset`` two Gaussian classes with means ``+-separation/sqrt(n)`` per
    coordinate are drawn.
    """
    from .constrained import ConstrainedProgram, ConstraintBlock, ObjectiveComponent

    if loss not in LOSSES:
        raise ConfigurationError(f"unknown loss {loss!r}")
    phi, dphi, curv, slope = LOSSES[loss]
    if dataset is not None:
        X, labels = dataset.to_dense(n) if isinstance(dataset, SparseDataset) else dataset
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != n:
            raise ConfigurationError(f"dataset has {X.shape[1]} features, expected {n}")
        labels = np.asarray(labels)
        X0, X1 = X[labels < 0], X[labels > 0]
    else:
        rng = np.random.default_rng(seed)
        mean = separation / math.sqrt(n) * np.ones(n)
        X0 = rng.standard_normal((n0, n)) - mean
        X1 = rng.standard_normal((n1, n)) + mean
    n0, n1 = X0.shape[0], X1.shape[0]

    objective = []
    for idx in _blocks(n0, m2):
        Xb = X0[idx]
        lip = curv * float(np.linalg.norm(Xb, 2)) ** 2 / n0

        def val(x, Xb=Xb):
            return float(np.sum(phi(Xb @ x))) / n0

        def grad(x, Xb=Xb):
            return Xb.T @ dphi(Xb @ x) / n0

        objective.append(ObjectiveComponent(val, grad, lipschitz=lip))

    constraints = []
    for idx in _blocks(n1, m1):
        Xb = X1[idx]
        jac_lip = curv * float(np.linalg.norm(Xb, 2)) ** 2 / n1
        val_lip = slope * float(np.linalg.norm(Xb, 2)) * math.sqrt(len(idx)) / n1
        shift = r1 / m1

        def hval(x, Xb=Xb, shift=shift):
            return np.array([float(np.sum(phi(-(Xb @ x)))) / n1 - shift])

        def hjac(x, Xb=Xb):
            return (-(Xb.T @ dphi(-(Xb @ x))) / n1).reshape(1, -1)

        constraints.append(ConstraintBlock(hval, hjac, ell=1, jacobian_lipschitz=jac_lip, value_lipschitz=val_lip))
    prog = ConstrainedProgram(objective, constraints, Ball(np.zeros(n), lam), name=f"np_{loss}")
    prog.data = dict(X0=X0, X1=X1, loss=loss, lam=lam, r1=r1, m1=m1, m2=m2)
    return prog


# ---------------------------------------------------------------------------
# LIBSVM text format


class ParseError(VRVIError, ValueError):
    def __init__(self, message, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclasses.dataclass
class SparseDataset:
    """Rows of ``(label, {index: value})`` with 0-based feature indices."""

    rows: list
    n_features: int

    def to_dense(self, n_features: Optional[int] = None):
        n = n_features or self.n_features
        X = np.zeros((len(self.rows), n))
        y = np.zeros(len(self.rows))
        for r, (label, feats) in enumerate(self.rows):
            y[r] = label
            for j, v in feats.items():
                if j >= n:
                    raise ConfigurationError(f"feature index {j + 1} exceeds dimension {n}")
                X[r, j] = v
        return X, y


_TOKEN = re.compile(r"^(\d+):(\S+)$")


def parse_libsvm(path) -> SparseDataset:
    """Parse ``label idx:val idx:val ...`` lines (1-based ascending indices).

    Labels are coerced to +1 (positive) / -1 (otherwise).  Blank lines are
    skipped; anything malformed raises :class:`ParseError` with the line number.
    """
    rows = []
    n_features = 0
    with open(os.fspath(path), "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                label = float(parts[0])
            except ValueError:
                raise ParseError(f"bad label {parts[0]!r}", lineno) from None
            if not math.isfinite(label):
                raise ParseError(f"bad label {parts[0]!r}", lineno)
            feats = {}
            prev = 0
            for tok in parts[1:]:
                m = _TOKEN.match(tok)
                if m is None:
                    raise ParseError(f"malformed token {tok!r}", lineno)
                idx = int(m.group(1))
                try:
                    val = float(m.group(2))
                except ValueError:
                    raise ParseError(f"bad value in {tok!r}", lineno) from None
                if idx < 1:
                    raise ParseError(f"index {idx} < 1", lineno)
                if idx <= prev:
                    raise ParseError(f"indices not strictly ascending at {tok!r}", lineno)
                prev = idx
                feats[idx - 1] = val
            n_features = max(n_features, prev)
            rows.append((1 if label > 0 else -1, feats))
    return SparseDataset(rows, n_features)


def write_libsvm(dataset: SparseDataset, path) -> None:
    with open(os.fspath(path), "w") as fh:
        for label, feats in dataset.rows:
            toks = [f"{label:+d}"] + [f"{j + 1}:{v!r}" for j, v in sorted(feats.items())]
            fh.write(" ".join(toks) + "\n")


def gen_constrained_quadratic(n: int = 3, ell: int = 1, m1: int = 2, m2: int = 2, seed: int = 0,
                              active: bool = True, radius: float = 3.0, curvature: float = 1.0):
    """Small program with a strongly convex quadratic objective and affine constraints.

    The objective ``sum_i 0.5 x'C_i x + c_i'x`` has an unconstrained minimiser
    ``x_u`` inside ``Ball(0, radius/2)``.  The summed constraint ``A x + b <= 0``
    (``ell`` rows, split over ``m1`` blocks) cuts off ``x_u`` when ``active``
    and leaves it feasible with margin otherwise.  Error-bound holds with
    exponent one for such programs.
    """
    from .constrained import ConstrainedProgram, ConstraintBlock, ObjectiveComponent

    rng = np.random.default_rng(seed)
    quads = []
    for _ in range(m2):
        Z = rng.standard_normal((n, n))
        C = Z @ Z.T / n + curvature / m2 * np.eye(n)
        quads.append(Quadratic(C))
    Csum = sum(q.C for q in quads)
    x_u = rng.standard_normal(n)
    x_u *= rng.uniform(0.3, 0.5) * radius / np.linalg.norm(x_u)
    csum = -Csum @ x_u
    parts = rng.standard_normal((m2, n))
    parts -= parts.mean(axis=0)
    for q, p in zip(quads, parts):
        q.c = csum / m2 + 0.2 * p
    A = rng.standard_normal((ell, n))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    # row s evaluates to -t_s at x_u: t_s < 0 makes it violated there, t_s > 0 slack
    t = rng.uniform(0.2, 0.6, size=ell)
    if active:
        t[0] = -t[0]
    b = -A @ x_u - t
    if active:
        # the other rows must also hold past row 0's boundary, or the program can be infeasible
        x_f = x_u + (t[0] - 0.5) * A[0]
        for s in range(1, ell):
            b[s] = -max(A[s] @ x_u, A[s] @ x_f) - t[s]
    Ab = rng.standard_normal((m1, ell, n)) * 0.3
    Ab -= Ab.mean(axis=0)
    bb = rng.standard_normal((m1, ell)) * 0.3
    bb -= bb.mean(axis=0)
    blocks = [ConstraintBlock.linear(A / m1 + Ab[j], b / m1 + bb[j]) for j in range(m1)]
    objective = [ObjectiveComponent(q.value, q.grad, lipschitz=q.lipschitz) for q in quads]
    prog = ConstrainedProgram(objective, blocks, Ball(np.zeros(n), radius), name="constrained_quadratic")
    prog.data = dict(A=A, b=b, quads=quads, x_unconstrained=x_u, active=active)
    return prog
