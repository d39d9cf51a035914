"""Command-line experiment runner.

``vrvi solve -c run.ini``, ``vrvi verify <suite>``, ``vrvi bench-np -c np.ini``
and ``vrvi gen -c run.ini -o problem.bin``.  Configuration files are INI
style: ``[section]`` headers with ``key = value`` lines.  Unknown sections
and keys are rejected.  Exit status: 0 success, 2 configuration error,
3 divergence, 4 verification failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import os
import sys
from typing import Optional

import numpy as np

from . import baselines, constrained, problems, savrep, savrep_m, serialize
from .core import TRACE_FIELDS, ConfigurationError, DivergenceError, Monitor, Reference, VRVIError
from .oracle import CallCounter, NoiseModel

__all__ = ["ExperimentConfig", "parse_config", "load_config", "dump_config", "build_problem", "main",
           "EXIT_OK", "EXIT_CONFIG", "EXIT_DIVERGENCE", "EXIT_VERIFY"]

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_VERIFY = 0, 2, 3, 4

SOLVERS = ("savrep", "savrep_m", "extragradient")
KINDS = ("strongly_monotone", "bilinear_monotone", "constrained_quadratic", "np_classification", "file")


def _floats(s: str) -> tuple:
    return tuple(float(t) for t in s.replace(",", " ").split())


def _ints(s: str) -> tuple:
    return tuple(int(t) for t in s.replace(",", " ").split())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


def _opt_str(s: str):
    return None if s.strip().lower() in ("", "none") else s.strip()


@dataclasses.dataclass
class ExperimentSection:
    solver: str = "savrep"
    budget: int = 100_000
    seeds: tuple = (1, 2, 3, 4, 5)
    log_interval: int = 0
    output: str = "vrvi_run"
    tol: Optional[float] = None
    batch: int = 1
    mu: float = 0.0
    wall_clock: bool = True
    max_epochs: int = 0


@dataclasses.dataclass
class ProblemSection:
    kind: str = "strongly_monotone"
    n: int = 10
    m1: int = 4
    m2: int = 4
    mu_h: float = 0.1
    L_h: float = 1.0
    L_g: float = 1.0
    seed: int = 0
    set_kind: str = "whole"
    radius: float = 1.0
    n_x: int = 5
    n_y: int = 5
    g_offset: float = 0.0
    ell: int = 1
    active: bool = True
    loss: str = "smoothed_hinge"
    lam: float = 5.0
    r1: float = 0.1
    separation: float = 2.0
    n0: int = 200
    n1: int = 200
    dataset: Optional[str] = None
    dual_cap: float = 10.0
    path: Optional[str] = None


@dataclasses.dataclass
class NoiseSection:
    bias_h: float = 0.0
    std_h: float = 0.0
    bias_g: float = 0.0
    std_g: float = 0.0
    samples: int = 1


@dataclasses.dataclass
class ParamsSection:
    alpha_scale: float = 1.0
    gamma_scale: float = 1.0
    alpha: Optional[float] = None
    q: float = 0.75
    omega_z: Optional[float] = None
    delta_cap: float = 0.0
    step_fraction: float = 0.9


@dataclasses.dataclass
class BenchSection:
    mus: tuple = (1e-5, 1e-10)
    budget: int = 200_000


@dataclasses.dataclass
class ExperimentConfig:
    experiment: ExperimentSection = dataclasses.field(default_factory=ExperimentSection)
    problem: ProblemSection = dataclasses.field(default_factory=ProblemSection)
    noise: NoiseSection = dataclasses.field(default_factory=NoiseSection)
    params: ParamsSection = dataclasses.field(default_factory=ParamsSection)
    bench: BenchSection = dataclasses.field(default_factory=BenchSection)


_PARSERS = {
    int: int, float: float, str: str, bool: _bool, tuple: None,
    Optional[float]: _opt_float, Optional[str]: _opt_str,
    "int": int, "float": float, "str": str, "bool": _bool,
    "Optional[float]": _opt_float, "Optional[str]": _opt_str,
}
_TUPLES = {("experiment", "seeds"): _ints, ("bench", "mus"): _floats}


def _format(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_format(t) for t in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    e, p = cfg.experiment, cfg.problem
    if e.solver not in SOLVERS:
        raise ConfigurationError(f"solver must be one of {SOLVERS}, got {e.solver!r}")
    if p.kind not in KINDS:
        raise ConfigurationError(f"problem kind must be one of {KINDS}, got {p.kind!r}")
    if e.budget < 0:
        raise ConfigurationError("budget must be nonnegative")
    if not e.seeds:
        raise ConfigurationError("need at least one seed")
    if e.batch < 1 or cfg.noise.samples < 1:
        raise ConfigurationError("batch and samples must be >= 1")
    if e.mu < 0:
        raise ConfigurationError("mu must be nonnegative")
    if p.kind == "file" and not p.path:
        raise ConfigurationError("problem kind 'file' needs a path")
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    """Parse INI text; raises :class:`ConfigurationError` on any problem."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"config syntax error: {exc}") from None
    cfg = ExperimentConfig()
    sections = {f.name: f for f in dataclasses.fields(cfg)}
    for sec in cp.sections():
        if sec not in sections:
            raise ConfigurationError(f"unknown section [{sec}]")
        obj = getattr(cfg, sec)
        fields = {f.name: f for f in dataclasses.fields(obj)}
        for key, raw in cp.items(sec):
            if key not in fields:
                raise ConfigurationError(f"unknown key {key!r} in [{sec}]")
            parser = _TUPLES.get((sec, key)) or _PARSERS.get(fields[key].type)
            try:
                setattr(obj, key, parser(raw))
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"[{sec}] {key}: {exc}") from None
    return _validate(cfg)


def load_config(path) -> ExperimentConfig:
    try:
        with open(os.fspath(path)) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from None


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialise every field; ``parse_config(dump_config(c)) == c``."""
    lines = []
    for sec in dataclasses.fields(cfg):
        obj = getattr(cfg, sec.name)
        lines.append(f"[{sec.name}]")
        for f in dataclasses.fields(obj):
            lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# problem construction


@dataclasses.dataclass
class Built:
    """A ready-to-solve problem and the data used to score it."""

    problem: object
    reference: Reference
    program: object = None


def build_program_or_problem(p: ProblemSection):
    """The raw instance: ``(CompositeVIProblem or ConstrainedProgram, x_star or None)``."""
    if p.kind == "strongly_monotone":
        spec = problems.SyntheticSpec(n=p.n, m1=p.m1, m2=p.m2, mu_h=p.mu_h, L_h=p.L_h, L_g=p.L_g, seed=p.seed,
                                      set_kind=p.set_kind, radius=p.radius)
        return problems.gen_strongly_monotone(spec)
    if p.kind == "bilinear_monotone":
        return problems.gen_bilinear_monotone(p.n_x, p.n_y, p.m1, seed=p.seed, m2=p.m2, L_h=p.L_h, L_g=p.L_g,
                                              g_offset=p.g_offset, radius=p.radius)
    if p.kind == "constrained_quadratic":
        return problems.gen_constrained_quadratic(p.n, p.ell, p.m1, p.m2, seed=p.seed, active=p.active,
                                                  radius=p.radius), None
    if p.kind == "np_classification":
        ds = problems.parse_libsvm(p.dataset) if p.dataset else None
        return problems.gen_np_classification(n=p.n, n0=p.n0, n1=p.n1, loss=p.loss, lam=p.lam, r1=p.r1,
                                              seed=p.seed, dataset=ds, m1=p.m1, m2=p.m2,
                                              separation=p.separation), None
    obj, _, x_star = serialize.load_problem(p.path)
    return obj, x_star


def build_problem(cfg: ExperimentConfig) -> Built:
    obj, x_star = build_program_or_problem(cfg.problem)
    mu = cfg.experiment.mu
    if isinstance(obj, constrained.ConstrainedProgram):
        kkt = constrained.build_kkt_problem(obj, cfg.problem.dual_cap)
        _, f_ref = constrained.solve_program_reference(obj)
        prob = constrained.perturb(kkt, mu) if mu > 0 else kkt
        return Built(prob, Reference(program=obj, f_star=f_ref), obj)
    if mu > 0:
        obj = constrained.perturb(obj, mu)
        x_star = None  # the perturbed solution differs from the stored one
    return Built(obj, Reference(x_star=x_star))


def _noise(cfg: ExperimentConfig, problem):
    nz = cfg.noise
    nh = ng = None
    if nz.bias_h or nz.std_h:
        nh = NoiseModel.for_family(problem.h, problem.dim, nz.bias_h, nz.std_h, stream=1, samples=nz.samples)
    if nz.bias_g or nz.std_g:
        ng = NoiseModel.for_family(problem.g, problem.dim, nz.bias_g, nz.std_g, stream=2, samples=nz.samples)
    return nh, ng


def _savrep_params(cfg: ExperimentConfig, problem):
    if problem.mu_h is None or not problem.mu_h > 0:
        raise ConfigurationError("savrep needs a strongly monotone problem (set mu > 0 for monotone ones)")
    p = savrep.default_params(problem.mu_h, problem.L_h, problem.L_g, problem.m1, problem.m2)
    a_scale = cfg.params.alpha_scale
    if cfg.params.alpha is not None:
        a_scale = cfg.params.alpha / p.alpha
    if a_scale != 1.0 or cfg.params.gamma_scale != 1.0:
        p = savrep.scaled_params(p, problem.L_h, problem.L_g, problem.m2, a_scale, cfg.params.gamma_scale)
    return p


# ---------------------------------------------------------------------------
# CSV traces


def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


class CsvTrace:
    """Writes trace rows as they arrive (flushed on every row)."""

    def __init__(self, path: str):
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        self.fh = open(path, "w", newline="")
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(TRACE_FIELDS)
        self.rows = []

    def __call__(self, rec):
        row = rec.as_dict()
        self.rows.append(row)
        self.w.writerow([_fmt_cell(row[k]) for k in TRACE_FIELDS])
        self.fh.flush()

    def close(self):
        self.fh.close()


_INT_FIELDS = ("epoch", "oracle_h_calls", "oracle_g_calls")


def write_mean_csv(path: str, runs: list) -> None:
    """Average every numeric field over the seeds that logged the same ``iter``."""
    by_iter: dict = {}
    for rows in runs:
        for r in rows:
            by_iter.setdefault(r["iter"], []).append(r)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for it in sorted(by_iter):
            group = by_iter[it]
            row = []
            for k in TRACE_FIELDS:
                vals = [g[k] for g in group if g[k] is not None]
                if k == "iter":
                    row.append(str(it))
                elif not vals:
                    row.append("")
                else:
                    m = float(np.mean(vals))
                    row.append(str(int(m)) if k in _INT_FIELDS and m.is_integer() else repr(m))
            w.writerow(row)


def _seeds(cfg: ExperimentConfig):
    env = os.environ.get("VRVI_SEED")
    if env:
        try:
            return _ints(env)
        except ValueError:
            raise ConfigurationError(f"VRVI_SEED must be a list of integers, got {env!r}") from None
    return cfg.experiment.seeds


def _run_one(cfg, built: Built, seed: int, sink):
    e = cfg.experiment
    prob = built.problem
    nh, ng = _noise(cfg, prob)
    if e.solver == "savrep":
        params = _savrep_params(cfg, prob)
        st, _ = savrep.run(prob, params, e.budget, tol=e.tol, seed=seed, noise_h=nh, noise_g=ng, batch=e.batch,
                           reference=built.reference, log_interval=e.log_interval or None, trace_sink=sink,
                           wall_clock=e.wall_clock)
        return st.x
    if e.solver == "savrep_m":
        pm = savrep_m.make_params(prob, q=cfg.params.q, omega_z=cfg.params.omega_z, delta_cap=cfg.params.delta_cap)
        st, _ = savrep_m.run(prob, pm, e.budget, seed=seed, noise_h=nh, noise_g=ng, batch=e.batch,
                             reference=built.reference, trace_sink=sink, log_every=max(1, e.log_interval or 1),
                             max_epochs=e.max_epochs or None, wall_clock=e.wall_clock)
        return st.w_bar
    # deterministic extragradient: every iteration evaluates all components twice
    per_iter = 2 * (prob.m1 + prob.m2)
    max_iters = e.budget // per_iter
    params = baselines.ExtragradientParams.for_problem(prob, max_iters=max(1, max_iters), tol=e.tol or 1e-10,
                                                       fraction=cfg.params.step_fraction)
    mon = Monitor(prob, built.reference, wall_clock=e.wall_clock)
    every = e.log_interval or 10

    def cb(k, x):
        sink(mon.record(k, 0, x, CallCounter(k * (prob.m1 + prob.m2), k * (prob.m1 + prob.m2))))

    sink(mon.record(0, 0, prob.constraint.project(np.zeros(prob.dim)), CallCounter()))
    if max_iters == 0:
        return prob.constraint.project(np.zeros(prob.dim))
    res = baselines.solve_extragradient(prob, params, check_every=every, callback=cb)
    return res.x


def cmd_solve(cfg: ExperimentConfig, out=None) -> int:
    out = out or sys.stdout
    built = build_problem(cfg)
    runs = []
    base = cfg.experiment.output
    for seed in _seeds(cfg):
        sink = CsvTrace(f"{base}_seed{seed}.csv")
        try:
            _run_one(cfg, built, seed, sink)
        finally:
            sink.close()
        runs.append(sink.rows)
        last = sink.rows[-1]
        print(f"seed {seed}: " + " ".join(f"{k}={_fmt_cell(last[k])}" for k in TRACE_FIELDS if last[k] is not None
                                          and k != "wall_ms"), file=out)
    write_mean_csv(f"{base}_mean.csv", runs)
    return EXIT_OK


def cmd_gen(cfg: ExperimentConfig, output: str) -> int:
    obj, x_star = build_program_or_problem(cfg.problem)
    meta = {"config": dump_config(cfg)}
    serialize.save_problem(output, obj, meta, x_star)
    return EXIT_OK


def cmd_bench_np(cfg: ExperimentConfig, out=None) -> int:
    """SAVREP on each perturbed KKT problem and SAVREP-m on the unperturbed one."""
    out = out or sys.stdout
    p = cfg.problem
    if p.kind not in ("np_classification", "constrained_quadratic", "file"):
        raise ConfigurationError("bench-np needs a constrained program")
    program, _ = build_program_or_problem(p)
    if not isinstance(program, constrained.ConstrainedProgram):
        raise ConfigurationError("bench-np needs a constrained program")
    kkt = constrained.build_kkt_problem(program, p.dual_cap)
    x_ref, f_ref = constrained.solve_program_reference(program)
    z_ref = np.concatenate([x_ref, constrained.multipliers_from_primal(program, x_ref)])
    ref = Reference(x_star=z_ref, program=program, f_star=f_ref)
    seed = _seeds(cfg)[0]
    base = cfg.experiment.output
    rows = []
    for mu in cfg.bench.mus:
        prob = constrained.perturb(kkt, mu)
        params = _savrep_params(cfg, prob)
        sink = CsvTrace(f"{base}_savrep_mu{mu:g}.csv")
        # the reference is the unperturbed solution, so only the trace uses it
        try:
            savrep.run(prob, params, cfg.bench.budget, seed=seed, reference=ref,
                       log_interval=cfg.experiment.log_interval or None, trace_sink=sink,
                       wall_clock=cfg.experiment.wall_clock)
        finally:
            sink.close()
        rows.append((f"savrep mu={mu:g}", sink.rows[-1]))
    pm = savrep_m.make_params(kkt, q=cfg.params.q, omega_z=cfg.params.omega_z)
    sink = CsvTrace(f"{base}_savrep_m.csv")
    try:
        savrep_m.run(kkt, pm, cfg.bench.budget, seed=seed, reference=ref, trace_sink=sink,
                     wall_clock=cfg.experiment.wall_clock)
    finally:
        sink.close()
    rows.append(("savrep_m", sink.rows[-1]))
    cols = ("oracle_calls", "dist_sq", "res_norm", "cons_viol", "obj_gap")
    print(f"{'run':<22}" + "".join(f"{c:>14}" for c in cols), file=out)
    for name, r in rows:
        vals = [r["oracle_h_calls"] + r["oracle_g_calls"], r["dist_sq"], r["res_norm"], r["cons_viol"], r["obj_gap"]]
        print(f"{name:<22}" + "".join(f"{v:>14.4g}" if v is not None else f"{'':>14}" for v in vals), file=out)
    return EXIT_OK


def cmd_verify(suite: str, inject: bool = False, out=None) -> int:
    out = out or sys.stdout
    from .verify import run_suite

    checks = run_suite(suite, inject)
    width = max(len(c.name) for c in checks)
    failed = 0
    for c in checks:
        failed += not c.ok
        print(f"{'PASS' if c.ok else 'FAIL'}  {c.name:<{width}}  {c.detail}", file=out)
    print(f"{suite}: {len(checks) - failed}/{len(checks)} passed", file=out)
    return EXIT_OK if failed == 0 else EXIT_VERIFY


def _parser():
    from .verify import SUITES

    ap = argparse.ArgumentParser(prog="vrvi", description="Variance-reduced VI solvers: experiments and checks.")
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="run a solver over the configured seeds")
    s.add_argument("-c", "--config", required=True)
    v = sub.add_parser("verify", help="run a property suite")
    v.add_argument("suite", choices=sorted(SUITES))
    v.add_argument("--inject-violation", action="store_true", help="add a deliberately infeasible fixture (params)")
    b = sub.add_parser("bench-np", help="Neyman-Pearson benchmark")
    b.add_argument("-c", "--config", required=True)
    g = sub.add_parser("gen", help="generate and store a problem instance")
    g.add_argument("-c", "--config", required=True)
    g.add_argument("-o", "--output", required=True)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.suite, args.inject_violation)
        cfg = load_config(args.config)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "bench-np":
            return cmd_bench_np(cfg)
        return cmd_gen(cfg, args.output)
    except DivergenceError as exc:
        print(f"error: divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigurationError, serialize.FormatError, problems.ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VRVIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
