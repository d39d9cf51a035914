"""Double-loop variance-reduced extra-point solver for merely monotone VIs.

The iteration is the one of :mod:`vrvi.savrep` with epoch-dependent
``(alpha, beta, gamma)``; the g-snapshot ``wbar`` is replaced every ``m2``
iterations by the average of the last ``m2`` iterates ``v``.
"""
from __future__ import annotations

import copy
import dataclasses
import math
import warnings
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ConfigurationError, Monitor, Reference
from .oracle import CallCounter, CompositeVIProblem, NoiseModel, SnapshotCache, make_streams, refresh_snapshot
from .savrep import STREAMS, ParamReport, _extra_point

__all__ = [
    "SavrepMParams",
    "SavrepMState",
    "make_params",
    "schedule",
    "gamma_weights",
    "check_conditions",
    "schedule_checks",
    "rate_bound",
    "init_state",
    "step",
    "run",
]


@dataclasses.dataclass(frozen=True)
class SavrepMParams:
    L_h: float
    L_g: float
    m1: int
    m2: int
    q: float = 0.75
    p1: Optional[float] = None
    omega_z: Optional[float] = None
    delta_cap: float = 0.0

    def __post_init__(self):
        if self.p1 is None:
            object.__setattr__(self, "p1", 1.0 / self.m1)
        if not 0 < self.q < 1:
            raise ConfigurationError("q must lie in (0, 1)")
        if not 0 < self.p1 <= 1:
            raise ConfigurationError("p1 must lie in (0, 1]")
        if self.delta_cap < 0:
            raise ConfigurationError("delta_cap must be nonnegative")
        if self.omega_z is not None and not self.omega_z > 0:
            raise ConfigurationError("omega_z must be positive")


def make_params(problem: CompositeVIProblem, q: float = 0.75, omega_z=None, delta_cap: float = 0.0, p1=None):
    """Parameters for ``problem``; ``omega_z`` defaults to the set diameter."""
    if omega_z is None:
        omega_z = problem.constraint.diameter
    return SavrepMParams(
        L_h=problem.L_h, L_g=problem.L_g, m1=problem.m1, m2=problem.m2,
        q=q, p1=p1, omega_z=omega_z, delta_cap=delta_cap,
    )


def schedule(s: int, params: SavrepMParams):
    """Epoch-``s`` parameters ``(alpha, beta, gamma)``.

    ``alpha = 2/(s+4)``, ``beta = 1/2`` and
    ``gamma = (s+3) / (24 (L_g + (s+1) L_h sqrt(m1)) + (s+1) sqrt((s+1) Delta m2) / Omega)``.
    """
    if s < 0:
        raise ValueError("epoch index must be nonnegative")
    denom = 24.0 * (params.L_g + (s + 1) * params.L_h * math.sqrt(params.m1))
    if params.delta_cap > 0:
        if params.omega_z is None:
            raise ConfigurationError("omega_z (set diameter) is required when delta_cap > 0")
        denom += (s + 1) * math.sqrt((s + 1) * params.delta_cap * params.m2) / params.omega_z
    return 2.0 / (s + 4), 0.5, (s + 3) / denom


def gamma_weights(alphas: Sequence[float]) -> np.ndarray:
    """``Gamma_0 = 1``, ``Gamma_s = (1 - alpha_{s-1}) Gamma_{s-1}``; length ``len(alphas) + 1``."""
    out = np.ones(len(alphas) + 1)
    for s, a in enumerate(alphas):
        out[s + 1] = (1 - a) * out[s]
    return out


def _as_schedule(params, S, sched):
    if sched is None:
        return [schedule(s, params) for s in range(S)]
    if callable(sched):
        return [tuple(sched(s)) for s in range(S)]
    sched = [tuple(t) for t in sched]
    if len(sched) < S:
        raise ValueError("explicit schedule shorter than S")
    return sched[:S]


def check_conditions(params: SavrepMParams, S: int, sched=None, tol: float = 1e-12) -> ParamReport:
    """Evaluate the five convergence conditions over epochs ``0..S-1``.

    ``sched`` overrides the default schedule (callable ``s -> (a, b, g)`` or a
    list).  Each reported slack is the worst one over epochs, with the epoch
    named in the key.  The two cross-epoch conditions are scaled by their
    right-hand side.
    """
    if S < 1:
        raise ValueError("S must be >= 1")
    sch = _as_schedule(params, S, sched)
    alphas = [a for a, _, _ in sch]
    Gam = gamma_weights(alphas)
    L_h, L_g, p1, q = params.L_h, params.L_g, params.p1, params.q
    rows = {
        "p1 - 2*gamma^2*L_h^2 >= 0": [p1 - 2 * g * g * L_h**2 for a, b, g in sch],
        "q - p1 - alpha*gamma*L_g - alpha*gamma*L_g/beta >= 0": [q - p1 - a * g * L_g - a * g * L_g / b for a, b, g in sch],
        "1 - alpha - beta >= 0": [1 - a - b for a, b, g in sch],
    }
    mono, link = [], []
    for s in range(1, S):
        a0, b0, g0 = sch[s - 1]
        a1, b1, g1 = sch[s]
        lhs, rhs = a0 / (g0 * Gam[s]), a1 / (g1 * Gam[s + 1])
        mono.append((rhs - lhs) / abs(rhs))
        rhs5 = a0 + b0
        link.append((rhs5 - b1 / (1 - a1)) / abs(rhs5))
    rows["alpha/(gamma*Gamma) nondecreasing across epochs"] = [0.0] + mono
    rows["beta_s/(1 - alpha_s) <= alpha_{s-1} + beta_{s-1}"] = [0.0] + link
    slacks = {}
    for name, vals in rows.items():
        s_worst = int(np.argmin(vals))
        slacks[f"{name} [s={s_worst}]"] = float(vals[s_worst])
    return ParamReport(slacks, tol)


def schedule_checks(params: SavrepMParams, S: int, tol: float = 1e-12) -> ParamReport:
    """Replay the inequality chain used to certify the default schedule.

    Needs ``m1 >= 2``: ``gamma^2 L_h^2 <= p1/2``, ``p1 + 3 alpha gamma L_g <= 3/4``,
    the closed form ``Gamma_s = 6/((s+2)(s+3))`` and
    ``(s+4)/(2(s+2)) <= (s+7)/(2(s+3))``.
    """
    sch = _as_schedule(params, S, None)
    Gam = gamma_weights([a for a, _, _ in sch])
    r1, r2, r3, r4 = [], [], [], []
    for s, (a, b, g) in enumerate(sch):
        r1.append(params.p1 / 2 - g * g * params.L_h**2)
        r2.append(0.75 - params.p1 - 3 * a * g * params.L_g)
        r3.append(1e-12 - abs(Gam[s] - 6.0 / ((s + 2) * (s + 3))))
        r4.append((s + 7) / (2 * (s + 3)) - (s + 4) / (2 * (s + 2)) if s >= 1 else 0.0)
    slacks = {}
    for name, vals in (
        ("gamma^2*L_h^2 <= p1/2", r1),
        ("p1 + 3*alpha*gamma*L_g <= 3/4", r2),
        ("Gamma_s == 6/((s+2)(s+3))", r3),
        ("(s+4)/(2(s+2)) <= (s+7)/(2(s+3))", r4),
    ):
        s_worst = int(np.argmin(vals))
        slacks[f"{name} [s={s_worst}]"] = float(vals[s_worst])
    return ParamReport(slacks, tol)


def rate_bound(k: int, q0: float, m1, m2, L_h, L_g, omega_z, delta_cap=0.0) -> float:
    """Upper bound on ``E[Q(wbar^k; x*)]`` at an epoch boundary ``k``.

    ``24 m2^2/k^2 Q0 + 48 m2/k^2 L_g Omega^2 + 48/k L_h sqrt(m1) Omega^2 + 26 Omega sqrt(Delta)/sqrt(k)``
    """
    om2 = omega_z**2
    return (
        24 * m2**2 / k**2 * q0
        + 48 * m2 / k**2 * L_g * om2
        + 48 / k * L_h * math.sqrt(m1) * om2
        + 26 * omega_z * math.sqrt(delta_cap) / math.sqrt(k)
    )


@dataclasses.dataclass(eq=False)
class SavrepMState:
    x: np.ndarray
    v: np.ndarray
    w: np.ndarray
    w_bar: np.ndarray
    v_buffer: np.ndarray
    h_cache: SnapshotCache
    g_cache: SnapshotCache
    iter: int
    epoch: int
    inner: int
    rngs: dict
    counter: CallCounter
    noise_h: Optional[NoiseModel] = None
    noise_g: Optional[NoiseModel] = None
    batch: int = 1
    history: Optional[list] = None

    def copy(self) -> "SavrepMState":
        return copy.deepcopy(self)


def init_state(problem, x0=None, seed: int = 0, noise_h=None, noise_g=None, batch: int = 1, track_params=False):
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
    return SavrepMState(
        x=x0.copy(), v=x0.copy(), w=x0.copy(), w_bar=x0.copy(), v_buffer=np.zeros_like(x0),
        h_cache=h_cache, g_cache=g_cache, iter=0, epoch=0, inner=0, rngs=rngs, counter=counter,
        noise_h=noise_h, noise_g=noise_g, batch=batch, history=[] if track_params else None,
    )


def step(state: SavrepMState, params: SavrepMParams, problem: CompositeVIProblem) -> SavrepMState:
    """One inner iteration (in place); closes the epoch every ``m2`` iterations."""
    alpha, beta, gamma = schedule(state.epoch, params)
    _, x_new, v_new = _extra_point(state, problem, gamma, alpha, beta, params.p1)
    refresh_w = state.rngs["coin_h"].random() < params.p1
    if state.history is not None:
        state.history.append((state.iter, state.epoch, alpha, beta, gamma))
    state.x = x_new
    state.v = v_new
    if refresh_w:
        state.w = x_new
        state.h_cache = refresh_snapshot(problem.h, state.noise_h, x_new, state.rngs["noise_h"], state.counter)
    state.v_buffer = state.v_buffer + v_new
    state.iter += 1
    state.inner += 1
    if state.iter % params.m2 == 0:
        state.w_bar = state.v_buffer / params.m2
        state.g_cache = refresh_snapshot(problem.g, state.noise_g, state.w_bar, state.rngs["noise_g"], state.counter)
        state.v_buffer = np.zeros_like(state.v_buffer)
        state.epoch += 1
        state.inner = 0
    return state


def run(
    problem: CompositeVIProblem,
    params: SavrepMParams,
    budget: int,
    x0=None,
    seed: int = 0,
    noise_h: Optional[NoiseModel] = None,
    noise_g: Optional[NoiseModel] = None,
    batch: int = 1,
    reference: Optional[Reference] = None,
    trace_sink: Optional[Callable] = None,
    log_every: int = 1,
    max_epochs: Optional[int] = None,
    validate: bool = True,
    wall_clock: bool = True,
    track_params: bool = False,
):
    """Run until ``budget`` component calls are spent.

    Metrics are taken at ``wbar`` at every ``log_every``-th epoch boundary.
    Returns ``(state, traces)``.
    """
    if problem.constraint.diameter is None:
        if params.omega_z is None:
            warnings.warn("unbounded constraint set and no omega_z: the rate guarantee does not apply", stacklevel=2)
        else:
            warnings.warn(f"unbounded constraint set; using the supplied diameter cap {params.omega_z}", stacklevel=2)
    if validate:
        # each iteration costs at least one call, so budget // m2 bounds the epoch count
        horizon = max_epochs if max_epochs is not None else budget // params.m2 + 1
        report = check_conditions(params, max(2, min(horizon, 100_000)))
        if not report.ok:
            raise ConfigurationError(report.describe())
    reference = reference or Reference()
    monitor = Monitor(problem, reference, wall_clock=wall_clock)

    def emit(st):
        rec = monitor.record(st.iter, st.epoch, st.w_bar, st.counter)
        if trace_sink is not None:
            trace_sink(rec)

    state = init_state(problem, x0, seed, noise_h, noise_g, batch, track_params)
    emit(state)
    while state.counter.total < budget and (max_epochs is None or state.epoch < max_epochs):
        epoch = state.epoch
        step(state, params, problem)
        if state.epoch != epoch and state.epoch % log_every == 0:
            emit(state)
    return state, monitor.records
