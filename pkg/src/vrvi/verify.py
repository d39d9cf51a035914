"""Self-check suites run by ``vrvi verify <suite>``.

Each suite returns a list of :class:`Check` rows; a suite passes when every
row passes.  The checks are quick randomised versions of the package's
property tests.
"""
from __future__ import annotations

import itertools
import math
from typing import Callable, NamedTuple

import numpy as np

from . import constrained, oracle, problems, savrep, savrep_m, zeroth_order
from .core import Ball, Box, NonnegOrthant, Product, Whole, prox_linear

__all__ = ["Check", "SUITES", "run_suite", "param_grid"]


class Check(NamedTuple):
    name: str
    ok: bool
    detail: str = ""


def _oracles(inject: bool = False):
    out = []
    rng = np.random.default_rng(0)
    n, m = 4, 5
    mats = [rng.standard_normal((n, n)) for _ in range(m)]
    fam = oracle.ComponentFamily([(lambda x, A=A: A @ x) for A in mats], rng.uniform(0.5, 2.0, m))
    x, anchor = rng.standard_normal(n), rng.standard_normal(n)
    cache = oracle.refresh_snapshot(fam, None, anchor, rng)
    est = sum(fam.probs[i] * oracle.vr_estimate(cache, fam, None, i, x, rng) for i in range(m))
    err = float(np.max(np.abs(est - fam.sum(x))))
    out.append(Check("vr estimate unbiased (exhaustive, m=5)", err <= 1e-12, f"max error {err:.2e}"))
    draws = np.bincount([oracle.sample_component(fam, rng) for _ in range(20000)], minlength=m) / 20000
    dev = float(np.max(np.abs(draws - fam.probs)))
    out.append(Check("sampling frequencies match L_i / L", dev <= 4 * math.sqrt(0.25 / 20000), f"max dev {dev:.4f}"))
    try:
        oracle.vr_estimate(cache, fam, None, 0, x, rng, anchor=anchor + 1.0)
        out.append(Check("stale cache rejected", False, "no error raised"))
    except Exception as exc:  # noqa: BLE001
        out.append(Check("stale cache rejected", type(exc).__name__ == "StaleCacheError", type(exc).__name__))
    nm = oracle.NoiseModel.for_family(fam, n, bias_norm=0.3, std=0.0, stream=3)
    norms = np.linalg.norm(nm.bias_vectors, axis=1)
    out.append(Check("noise bias norm exact", bool(np.allclose(norms, 0.3, rtol=0, atol=1e-12)), ""))
    same = np.array_equal(oracle.vr_estimate(cache, fam, None, 2, anchor, rng), cache.full_sum)
    out.append(Check("estimate at the anchor equals the full sum", bool(same), ""))
    return out


def _sets():
    rng = np.random.default_rng(1)
    return {
        "whole": Whole(4),
        "ball": Ball(rng.standard_normal(4), 1.5),
        "nonneg": NonnegOrthant(4),
        "box": Box(-np.ones(4), np.array([1.0, 2.0, 0.5, 3.0])),
        "product": Product([Ball(np.zeros(2), 1.0), Box(np.zeros(2), np.ones(2))]),
    }


def _projections(inject: bool = False):
    out = []
    rng = np.random.default_rng(2)
    for name, s in _sets().items():
        idem = nonexp = inside = True
        for _ in range(200):
            p, q = 3 * rng.standard_normal(s.dim), 3 * rng.standard_normal(s.dim)
            Pp, Pq = s.project(p), s.project(q)
            idem &= bool(np.allclose(s.project(Pp), Pp, atol=1e-12))
            nonexp &= bool(np.linalg.norm(Pp - Pq) <= np.linalg.norm(p - q) + 1e-12)
            # variational characterisation: <p - P(p), z - P(p)> <= 0 for z in the set
            z = s.sample(rng)
            inside &= bool((p - Pp) @ (z - Pp) <= 1e-10)
        out.append(Check(f"{name}: idempotent", idem))
        out.append(Check(f"{name}: nonexpansive", nonexp))
        out.append(Check(f"{name}: obtuse-angle condition", inside))
    box = _sets()["box"]
    worst = 0.0
    for _ in range(200):
        c, d, g = rng.standard_normal(4), rng.standard_normal(4), rng.uniform(0.01, 2)
        closed = np.clip(c - g * d, box.lo, box.hi)
        worst = max(worst, float(np.max(np.abs(prox_linear(box, c, d, g) - closed))))
    out.append(Check("prox step equals projection (box closed form)", worst <= 1e-12, f"{worst:.1e}"))
    return out


def _monotonicity(inject: bool = False):
    out = []
    spec = problems.SyntheticSpec(n=8, m1=3, m2=3, mu_h=0.2, L_h=1.0, L_g=1.0, seed=0)
    prob, _ = problems.gen_strongly_monotone(spec)
    cert = problems.certify_constants(prob, n_pairs=300)
    for k, v in cert.items():
        out.append(Check(f"strongly monotone generator: {k}", v))
    bil, _ = problems.gen_bilinear_monotone(3, 3, 4, seed=0, m2=2)
    ok, worst = constrained.monotonicity_check(bil, n_pairs=300)
    out.append(Check("bilinear instance monotone", ok, f"min inner product {worst:.2e}"))
    prog = problems.gen_constrained_quadratic(3, 2, 2, 2, seed=0)
    ok, worst = constrained.monotonicity_check(constrained.build_kkt_problem(prog, 5.0), n_pairs=300)
    out.append(Check("KKT operator of a quadratic program monotone", ok, f"{worst:.2e}"))
    npp = problems.gen_np_classification(n=5, n0=40, n1=40, seed=0, m1=2, m2=2)
    ok, worst = constrained.monotonicity_check(constrained.build_kkt_problem(npp, 5.0), n_pairs=300)
    out.append(Check("KKT operator of a Neyman-Pearson program monotone", ok, f"{worst:.2e}"))
    return out


def _zeroth_order(inject: bool = False):
    out = []
    rng = np.random.default_rng(3)
    const = zeroth_order.NoisyScalarOracle(lambda x: 2.5, value_std=1.0)
    g = zeroth_order.zo_gradient(const, np.ones(3), 0.1, rng=rng)
    out.append(Check("constant function gives zero (shared noise)", bool(np.all(g == 0.0))))
    lin = zeroth_order.NoisyScalarOracle(lambda x: 3.0 * x[0])
    vals = [float(zeroth_order.zo_gradient(lin, np.array([0.4]), 0.1, np.array([s]))[0]) for s in (1.0, -1.0)]
    out.append(Check("n=1 linear function exact", all(abs(v - 3.0) < 1e-12 for v in vals), str(vals)))
    quad = zeroth_order.NoisyScalarOracle(lambda x: 0.5 * float(x @ x))
    v = float(zeroth_order.zo_gradient(quad, np.zeros(1), 0.1, np.ones(1))[0])
    out.append(Check("n=1 quadratic hand value 0.05", abs(v - 0.05) < 1e-12, f"{v}"))
    n, phi, N = 5, 0.2, 200_000
    vq = zeroth_order.NoisyScalarOracle(lambda X: 0.5 * np.sum(X * X, axis=-1), vectorized=True)
    x = np.linspace(-1, 1, n)
    G = zeroth_order.zo_gradient_batch(vq, x, phi, zeroth_order.sphere_sample_batch(rng, N, n))
    mean = G.mean(axis=0)
    half = 4 * float(np.linalg.norm(G.std(axis=0))) / math.sqrt(N)
    bias = float(np.linalg.norm(mean - x))
    bound = zeroth_order.smoothing_bias_bound(1.0, phi, n)
    out.append(Check("Monte-Carlo bias within phi n L / 2", bias <= bound + half, f"{bias:.3e} <= {bound}"))
    second = float(np.mean(np.sum((G - x) ** 2, axis=1)))
    vb = zeroth_order.zo_variance_bound(float(np.linalg.norm(x)) + phi, 0.0, 1.0, phi, n)
    out.append(Check("second moment within variance bound", second <= vb, f"{second:.3f} <= {vb:.3f}"))
    return out


def param_grid(k: int = 100, seed: int = 0):
    """``k`` tuples ``(mu_h, L_h, L_g, m1, m2)`` with ``m1 >= 2`` and ``mu_h <= L_h``."""
    rng = np.random.default_rng(seed)
    base = list(itertools.product([1e-4, 1e-2, 1.0], [1.0, 10.0], [0.1, 1.0, 100.0], [2, 7, 50], [1, 4, 100]))
    idx = rng.choice(len(base), size=min(k, len(base)), replace=False)
    out = []
    for i in idx:
        mu, Lh, Lg, m1, m2 = base[i]
        out.append((min(mu, Lh), Lh, Lg, m1, m2))
    return out


def _params(inject: bool = False):
    out = []
    bad_sm = bad_m = bad_c = 0
    names = []
    for mu, Lh, Lg, m1, m2 in param_grid(100):
        p = savrep.default_params(mu, Lh, Lg, m1, m2)
        if not savrep.check_param_constraints(p, Lh, Lg).ok:
            bad_sm += 1
        pm = savrep_m.SavrepMParams(L_h=Lh, L_g=Lg, m1=m1, m2=m2)
        r = savrep_m.check_conditions(pm, 51)
        if not r.ok:
            bad_m += 1
            names.extend(r.violations)
        if not savrep_m.schedule_checks(pm, 51).ok:
            bad_c += 1
    out.append(Check("strongly monotone defaults satisfy the step-size constraints (100 tuples)", bad_sm == 0,
                     f"{bad_sm} failures"))
    out.append(Check("monotone schedule satisfies the five conditions (100 tuples, s<=50)", bad_m == 0,
                     f"{bad_m} failures {sorted(set(names))[:3]}"))
    out.append(Check("monotone schedule inequality chain replays (100 tuples)", bad_c == 0, f"{bad_c} failures"))
    if inject:
        p = savrep.SavrepParams(gamma=0.01, alpha=0.6, beta=0.6, phi=1.0, p1=0.5, p2=0.5, mu_h=0.1)
        rep = savrep.check_param_constraints(p, 1.0, 1.0)
        out.append(Check("injected fixture alpha=beta=0.6", rep.ok, "; ".join(rep.violations)))
    return out


SUITES: dict[str, Callable] = {
    "oracles": _oracles,
    "projections": _projections,
    "monotonicity": _monotonicity,
    "zeroth_order": _zeroth_order,
    "params": _params,
}


def run_suite(name: str, inject: bool = False) -> list:
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name](inject)
