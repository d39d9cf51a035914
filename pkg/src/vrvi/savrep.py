"""Accelerated variance-reduced extra-point solver for strongly monotone VIs.

One iteration, with ``p1, p2`` the snapshot refresh probabilities::

    xbar   = (1 - p1) x + p1 w
    y      = (1 - alpha - beta) v + alpha x + beta wbar
    x_half = P(xbar - gamma (H'(w) + G(y)))
    x_new  = P(xbar - gamma (Hhat(x_half) + G(y)))
    v_new  = (1 - alpha - beta) v + alpha x_half + beta wbar
    w      <- x_new  with probability p1   (and refresh the H snapshot)
    wbar   <- v_new  with probability p2   (and refresh the g snapshot)

where ``G`` and ``Hhat`` are the variance-reduced estimates built from the
snapshots at ``wbar`` and ``w``.
"""
from __future__ import annotations

import copy
import dataclasses
import math
from typing import Callable, Optional

import numpy as np

from .core import ConfigurationError, DivergenceError, GapEvaluator, Monitor, Reference, q_gap
from .oracle import (
    CallCounter,
    CompositeVIProblem,
    NoiseModel,
    SnapshotCache,
    TheoryConstants,
    make_streams,
    refresh_snapshot,
    sample_component,
    vr_estimate,
)

__all__ = [
    "SavrepParams",
    "ParamReport",
    "SavrepState",
    "default_params",
    "scaled_params",
    "check_param_constraints",
    "init_state",
    "step",
    "run",
    "potential",
    "contraction_factor",
    "reduction_rate",
    "complexity_constant",
    "initial_distance_measure",
    "stochastic_errors",
]

STREAMS = ("xi", "zeta", "coin_h", "coin_g", "noise_h", "noise_g")


@dataclasses.dataclass(frozen=True)
class SavrepParams:
    gamma: float
    alpha: float
    beta: float
    phi: float
    p1: float
    p2: float
    mu_h: float


@dataclasses.dataclass
class ParamReport:
    """Slack of every checked inequality; negative slack is a violation."""

    slacks: dict
    tol: float = 0.0

    @property
    def violations(self) -> dict:
        return {k: v for k, v in self.slacks.items() if v < -self.tol}

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def describe(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(f"violated: {k} (slack {v:.3e})" for k, v in self.violations.items())


def check_param_constraints(params: SavrepParams, L_h: float, L_g: float, tol: float = 0.0) -> ParamReport:
    g, a, b, p1, mu = params.gamma, params.alpha, params.beta, params.p1, params.mu_h
    slacks = {
        "p1 - 2*gamma^2*L_h^2 - gamma*mu_h/3 >= 0": p1 - 2 * g**2 * L_h**2 - g * mu / 3,
        "1 - p1 - 19*gamma*mu_h/12 - alpha*gamma*L_g - alpha*gamma*L_g/beta >= 0": (
            1 - p1 - 19 * g * mu / 12 - a * g * L_g - a * g * L_g / b
        ),
        "1 - alpha - beta >= 0": 1 - a - b,
        "0 < p1 <= 1": 1 - p1 if p1 > 0 else -1.0,
        "0 < p2 <= 1": 1 - params.p2 if params.p2 > 0 else -1.0,
    }
    return ParamReport(slacks, tol)


def default_params(mu_h: float, L_h: float, L_g: float, m1: int, m2: int) -> SavrepParams:
    """Closed-form parameter choice with linear-rate guarantee.

    ``gamma = min(sqrt(p1)/L_h, sqrt(p2/(L_g mu_h)), p1/mu_h) / 4``,
    ``alpha = min(sqrt(mu_h/(L_g p2)), 1) / 12``, ``beta = 1/2``,
    ``phi = (1 + alpha) m2 / 2``, ``p1 = 1/m1``, ``p2 = 1/m2``.
    """
    if not mu_h > 0:
        raise ConfigurationError("mu_h must be positive")
    if m1 < 2 or m2 < 1:
        raise ConfigurationError("need m1 >= 2 and m2 >= 1")
    if L_h < mu_h:
        raise ConfigurationError("L_h must be at least mu_h")
    if not L_g > 0:
        raise ConfigurationError("L_g must be positive")
    p1, p2 = 1.0 / m1, 1.0 / m2
    gamma = 0.25 * min(math.sqrt(p1) / L_h, math.sqrt(p2 / (L_g * mu_h)), p1 / mu_h)
    alpha = min(math.sqrt(mu_h / (L_g * p2)), 1.0) / 12.0
    params = SavrepParams(gamma, alpha, 0.5, (1 + alpha) * m2 / 2.0, p1, p2, mu_h)
    report = check_param_constraints(params, L_h, L_g)
    if not report.ok:
        raise ConfigurationError(report.describe())
    return params


def scaled_params(params: SavrepParams, L_h: float, L_g: float, m2: int, alpha_scale=1.0, gamma_scale=1.0):
    """Rescale ``alpha``/``gamma`` (e.g. for tuning) and re-validate."""
    alpha = params.alpha * alpha_scale
    new = dataclasses.replace(params, alpha=alpha, gamma=params.gamma * gamma_scale, phi=(1 + alpha) * m2 / 2.0)
    report = check_param_constraints(new, L_h, L_g)
    if not report.ok:
        raise ConfigurationError(report.describe())
    return new


def contraction_factor(params: SavrepParams, mu_h, L_h, L_g, m1, m2) -> float:
    """Per-iteration reduction factor of the expected potential (default parameters)."""
    return max(
        1 - math.sqrt(mu_h) / (24 * math.sqrt(L_g * m2)),
        1 - 1 / (24 * m2),
        1 - mu_h / (48 * L_h * math.sqrt(m1)),
        1 - math.sqrt(mu_h) / (48 * math.sqrt(L_g * m2)),
        1 - 1 / (48 * m1),
    )


def reduction_rate(params: SavrepParams) -> float:
    """The tighter factor ``max{(1-a-b)/(1-phi p2), (b+phi(1-p2))/phi, 1-gamma mu/12}``."""
    a, b, phi, p2 = params.alpha, params.beta, params.phi, params.p2
    return max((1 - a - b) / (1 - phi * p2), (b + phi * (1 - p2)) / phi, 1 - params.gamma * params.mu_h / 12)


def complexity_constant(mu_h, L_h, L_g, m1, m2) -> float:
    """``m1 + m2 + sqrt(L_g m2 / mu_h) + L_h sqrt(m1) / mu_h``."""
    return m1 + m2 + math.sqrt(L_g * m2 / mu_h) + L_h * math.sqrt(m1) / mu_h


def initial_distance_measure(problem: CompositeVIProblem, params: SavrepParams, x0, x_star) -> float:
    """``d0 = gamma/(alpha mu_h) ||F(x0)||^2 + 2 ||x0 - x*||^2``."""
    r = problem.operator(x0)
    d = np.asarray(x0) - np.asarray(x_star)
    return params.gamma / (params.alpha * params.mu_h) * float(r @ r) + 2 * float(d @ d)


def stochastic_errors(params: SavrepParams, consts: TheoryConstants, m1, m2, noise_h, noise_g):
    """Per-iteration error terms ``(Delta_h, Delta_g)`` of the potential recursion."""
    a, g, mu = params.alpha, params.gamma, params.mu_h
    dh, sh = (noise_h.bias_norm, noise_h.effective_std) if noise_h is not None else (0.0, 0.0)
    dg, sg = (noise_g.bias_norm, noise_g.effective_std) if noise_g is not None else (0.0, 0.0)
    delta_h = a / mu * (m1 * sh**2 + m1**2 * dh**2) + 2 * a * g * consts.sigma_h_tilde_sq
    delta_g = 16 * a / mu * (m2 * sg**2 + m2**2 * dg**2) + 16 * a / mu * consts.sigma_g_tilde_sq
    return delta_h, delta_g


@dataclasses.dataclass(eq=False)
class SavrepState:
    x: np.ndarray
    v: np.ndarray
    w: np.ndarray
    w_bar: np.ndarray
    h_cache: SnapshotCache
    g_cache: SnapshotCache
    iter: int
    rngs: dict
    counter: CallCounter
    noise_h: Optional[NoiseModel] = None
    noise_g: Optional[NoiseModel] = None
    batch: int = 1

    def copy(self) -> "SavrepState":
        return copy.deepcopy(self)


def init_state(problem: CompositeVIProblem, x0=None, seed: int = 0, noise_h=None, noise_g=None, batch: int = 1):
    """Start from ``v = wbar = w = x = P(x0)`` and build both snapshots."""
    if len(problem.h) == 0 or len(problem.g) == 0:
        raise ConfigurationError("both component families must be nonempty")
    if batch < 1:
        raise ConfigurationError("batch must be >= 1")
    x0 = np.zeros(problem.dim) if x0 is None else np.asarray(x0, dtype=np.float64)
    x0 = problem.constraint.project(x0)
    rngs = make_streams(seed, STREAMS)
    counter = CallCounter()
    h_cache = refresh_snapshot(problem.h, noise_h, x0, rngs["noise_h"], counter)
    g_cache = refresh_snapshot(problem.g, noise_g, x0, rngs["noise_g"], counter)
    return SavrepState(
        x=x0.copy(), v=x0.copy(), w=x0.copy(), w_bar=x0.copy(),
        h_cache=h_cache, g_cache=g_cache, iter=0, rngs=rngs, counter=counter,
        noise_h=noise_h, noise_g=noise_g, batch=batch,
    )


def _estimate(cache, family, noise, x, index_rng, noise_rng, counter, batch):
    if batch == 1:
        i = sample_component(family, index_rng)
        return vr_estimate(cache, family, noise, i, x, noise_rng, counter)
    acc = np.zeros_like(cache.full_sum)
    for _ in range(batch):
        i = sample_component(family, index_rng)
        acc += vr_estimate(cache, family, noise, i, x, noise_rng, counter)
    return acc / batch


def _extra_point(state, problem, gamma, alpha, beta, p1):
    """Shared core of both solvers: returns ``(x_half, x_new, v_new)``."""
    r = state.rngs
    x, v, w, w_bar = state.x, state.v, state.w, state.w_bar
    x_bar = (1 - p1) * x + p1 * w
    c = 1 - alpha - beta
    y = c * v + alpha * x + beta * w_bar
    g_est = _estimate(state.g_cache, problem.g, state.noise_g, y, r["zeta"], r["noise_g"], state.counter, state.batch)
    proj = problem.constraint.project
    x_half = proj(x_bar - gamma * (state.h_cache.full_sum + g_est))
    h_est = _estimate(state.h_cache, problem.h, state.noise_h, x_half, r["xi"], r["noise_h"], state.counter, state.batch)
    x_new = proj(x_bar - gamma * (h_est + g_est))
    v_new = c * v + alpha * x_half + beta * w_bar
    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(v_new)) and np.all(np.isfinite(x_half))):
        raise DivergenceError(f"non-finite iterate at iteration {state.iter + 1}", state)
    return x_half, x_new, v_new


def step(state: SavrepState, params: SavrepParams, problem: CompositeVIProblem) -> SavrepState:
    """Advance ``state`` by one iteration (in place) and return it."""
    r = state.rngs
    _, x_new, v_new = _extra_point(state, problem, params.gamma, params.alpha, params.beta, params.p1)
    refresh_w = r["coin_h"].random() < params.p1
    refresh_wbar = r["coin_g"].random() < params.p2
    state.x = x_new
    state.v = v_new
    if refresh_w:
        state.w = x_new
        state.h_cache = refresh_snapshot(problem.h, state.noise_h, x_new, r["noise_h"], state.counter)
    if refresh_wbar:
        state.w_bar = v_new
        state.g_cache = refresh_snapshot(problem.g, state.noise_g, v_new, r["noise_g"], state.counter)
    state.iter += 1
    return state


def potential(state: SavrepState, params: SavrepParams, gap_eval: GapEvaluator) -> float:
    """``(1 - phi p2) Q(v) + phi Q(wbar) + alpha/(2 gamma) [(1-p1)|x-x*|^2 + |w-x*|^2]``."""
    xs = gap_eval.reference_solution
    dx = state.x - xs
    dw = state.w - xs
    quad = (1 - params.p1) * float(dx @ dx) + float(dw @ dw)
    return (
        (1 - params.phi * params.p2) * q_gap(gap_eval, state.v)
        + params.phi * q_gap(gap_eval, state.w_bar)
        + params.alpha / (2 * params.gamma) * quad
    )


def run(
    problem: CompositeVIProblem,
    params: SavrepParams,
    budget: int,
    tol: Optional[float] = None,
    x0=None,
    seed: int = 0,
    noise_h: Optional[NoiseModel] = None,
    noise_g: Optional[NoiseModel] = None,
    batch: int = 1,
    reference: Optional[Reference] = None,
    log_interval: Optional[int] = None,
    trace_sink: Optional[Callable] = None,
    validate: bool = True,
    wall_clock: bool = True,
    max_iter: Optional[int] = None,
):
    """Iterate until ``budget`` component calls are spent or ``tol`` is met.

    With ``reference.x_star`` known the stopping test is ``|x - x*|^2 <= tol``
    (checked every iteration); otherwise it is the exact residual norm,
    checked at logging points.  Returns ``(state, traces)``.
    """
    if problem.mu_h is None or not problem.mu_h > 0:
        raise ConfigurationError("the strongly monotone solver needs mu_h > 0 on the problem")
    if validate:
        report = check_param_constraints(params, problem.L_h, problem.L_g)
        if not report.ok:
            raise ConfigurationError(report.describe())
    reference = reference or Reference()
    log_interval = log_interval or (problem.m1 + problem.m2)
    monitor = Monitor(problem, reference, wall_clock=wall_clock)

    def emit(st):
        rec = monitor.record(st.iter, st.iter // log_interval, st.x, st.counter)
        if trace_sink is not None:
            trace_sink(rec)
        return rec

    state = init_state(problem, x0, seed, noise_h, noise_g, batch)
    rec = emit(state)
    x_star = reference.x_star

    def converged(st, rec=None):
        if tol is None:
            return False
        if x_star is not None:
            d = st.x - x_star
            return float(d @ d) <= tol
        return rec is not None and rec.res_norm <= tol

    if converged(state, rec):
        return state, monitor.records
    while state.counter.total < budget and (max_iter is None or state.iter < max_iter):
        step(state, params, problem)
        logged = state.iter % log_interval == 0
        rec = emit(state) if logged else None
        if converged(state, rec):
            if not logged:
                emit(state)
            return state, monitor.records
    if monitor.records[-1].iter != state.iter:
        emit(state)
    return state, monitor.records
