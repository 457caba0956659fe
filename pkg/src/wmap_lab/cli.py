"""Command-line experiment runner.

    wmap-lab run CONFIG.json [--out DIR] [--format csv,json]

Exit codes: 0 success, 2 unreadable or unparsable input (config, matrix or
data file), 3 invalid configuration, 4 task failure (non-convergence, failed
verification, unwritable output).  Every nonzero exit prints one JSON line
``{"exit": code, "error": kind, "detail": message}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from .bregman import compare_map_cm
from .config import (
    BesovConfig,
    BuiltinProblemConfig,
    ExperimentConfig,
    GaussianConfig,
    HierarchicalConfig,
    SamplerOptions,
    SolverOptions,
)
from .fomin import om_ratio_exact, om_ratio_quadrature
from .posterior import (
    PosteriorModel,
    cm_estimate,
    sample_posterior_is,
    sample_posterior_rwm,
    small_ball_ratio,
)
from .priors import BesovPrior, GaussianDiagPrior, HierarchicalPrior, PriorModel, sample_prior
from .problems import builtin_problem, read_problem_files, whitened_problem
from .report import FORMATS, Report, Table, emit_report
from .sampling import CHUNK_SIZE, thread_count
from .seqspace import BesovWeights
from .solvers import ConvergenceError, SolveOptions, refinement_study, solve_wmap, verify_solution

__all__ = ["main", "run", "load_config", "execute", "CliError", "TaskFailure"]

log = logging.getLogger(__name__)


class CliError(Exception):
    def __init__(self, code: int, kind: str, detail: str):
        super().__init__(detail)
        self.code, self.kind, self.detail = code, kind, detail


class TaskFailure(Exception):
    """The task ran but did not succeed; the report is still written."""

    def __init__(self, detail: str, report: Report):
        super().__init__(detail)
        self.report = report


# -- config and model construction ---------------------------------------


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(2, "missing-file", f"cannot read config {str(path)!r}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(2, "parse-error", f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise CliError(3, "validation-error", "config must be a JSON object")
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise CliError(3, "validation-error", _summarize(exc)) from None


def _summarize(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        where = ".".join(str(x) for x in err["loc"]) or "<root>"
        parts.append(f"{where}: {err['msg']}")
    return "; ".join(parts)


def _build_prior(prior_cfg, trunc: int | None) -> PriorModel | None:
    if prior_cfg is None:
        return None
    if isinstance(prior_cfg, BesovConfig):
        return BesovPrior(BesovWeights(prior_cfg.s, prior_cfg.p, prior_cfg.d), trunc)
    if isinstance(prior_cfg, GaussianConfig):
        return GaussianDiagPrior.white(trunc) if prior_cfg.white else GaussianDiagPrior(prior_cfg.cm_weights)
    if isinstance(prior_cfg, HierarchicalConfig):
        return HierarchicalPrior(prior_cfg.cov_weights, prior_cfg.mean_direction, prior_cfg.rho_variance)
    raise TypeError(prior_cfg)


def build_posterior(cfg: ExperimentConfig, trunc: int | None = None) -> PosteriorModel:
    """Posterior for the config, at ``trunc`` when given (refinement levels)."""
    trunc = trunc if trunc is not None else cfg.effective_trunc
    problem = cfg.problem
    if isinstance(problem, BuiltinProblemConfig):
        try:
            prior = _build_prior(cfg.prior, trunc)
            return builtin_problem(problem.builtin, trunc=trunc, seed=cfg.seed, prior=prior, **problem.params)
        except ValueError as exc:
            raise CliError(3, "validation-error", str(exc)) from None
    for f in (problem.matrix_file, problem.data_file):
        if not Path(f).is_file():
            raise CliError(2, "missing-file", f"cannot read {f!r}")
    try:
        A, m = read_problem_files(problem.matrix_file, problem.data_file)
    except (OSError, ValueError, UnicodeDecodeError) as exc:
        raise CliError(2, "parse-error", f"cannot parse problem files: {exc}") from None
    if cfg.prior is None:
        raise CliError(3, "validation-error", "a file problem needs an explicit prior")
    try:
        prior = _build_prior(cfg.prior, trunc if trunc is not None else A.shape[1])
        return whitened_problem(prior, A, m, problem.noise_std)
    except ValueError as exc:
        raise CliError(3, "validation-error", str(exc)) from None


def _solve_options(opts: SolverOptions) -> SolveOptions:
    return SolveOptions(max_iter=opts.max_iter, grad_tol=opts.grad_tol, method=opts.method)


def _component_names(post: PosteriorModel) -> list[str]:
    names = [f"u{i + 1}" for i in range(post.trunc)]
    return names + ["t"] if post.hierarchical else names


def _draw(post: PosteriorModel, seed: int, opts: SamplerOptions):
    if opts.sampler == "is":
        return sample_posterior_is(post, seed, opts.count)
    return sample_posterior_rwm(
        post, seed, opts.count, opts.step_size, burn_in=opts.burn_in, n_chains=opts.n_chains
    )


def _sampler_diagnostics(batch) -> list[tuple[str, object]]:
    rows: list[tuple[str, object]] = [("source", batch.source), ("count", len(batch))]
    if batch.source == "prior-importance":
        rows.append(("ess", batch.meta["ess"]))
    else:
        rows += [
            ("acceptance_rate", batch.meta["acceptance_rate"]),
            ("n_chains", batch.meta["n_chains"]),
            ("burn_in", batch.meta["burn_in"]),
        ]
    return rows


def _solve(post, opts: SolverOptions, warnings: list[str]):
    res = solve_wmap(post, _solve_options(opts))
    if not res.converged:
        warnings.append(f"solver did not converge: residual {res.residual:.3e} after {res.iterations} iterations")
    return res


# -- tasks ------------------------------------------------------------------
# Each returns (tables, failure message or None); warnings are appended in place.


def _task_sample_prior(cfg, opts, warnings):
    post = build_posterior(cfg)
    batch = sample_prior(post.prior, post.trunc, cfg.seed, opts.count)
    names = _component_names(post)
    draws = Table("draws", ["sample"] + names)
    for i, row in enumerate(batch.draws):
        draws.add(i, *row)
    est = batch.estimate(batch.draws)
    moments = Table("moments", ["component", "mean", "stderr"])
    for name, m, s in zip(names, np.atleast_1d(est.estimate), np.atleast_1d(est.stderr)):
        moments.add(name, m, s)
    return [draws, moments], None


def _task_solve_map(cfg, opts, warnings):
    post = build_posterior(cfg)
    res = _solve(post, opts.solver, warnings)
    solution = Table("solution", ["component", "value"])
    for name, v in zip(_component_names(post), post.to_flat(res.argmin)):
        solution.add(name, v)
    summary = Table("summary", ["key", "value"])
    for key in ("objective", "residual", "iterations", "converged", "method"):
        summary.add(key, getattr(res, key))
    return [solution, summary], None if res.converged else warnings[-1]


def _task_estimate_cm(cfg, opts, warnings):
    post = build_posterior(cfg)
    batch = _draw(post, cfg.seed, opts.sampling)
    warnings.extend(batch.meta.get("warnings", []))
    try:
        cm = post.to_flat(cm_estimate(batch))
    except ValueError as exc:
        return [], str(exc)
    se = np.atleast_1d(batch.estimate(batch.draws).stderr)
    table = Table("cm", ["component", "estimate", "stderr"])
    for name, m, s in zip(_component_names(post), cm, se):
        table.add(name, m, s)
    diag = Table("diagnostics", ["key", "value"], [list(r) for r in _sampler_diagnostics(batch)])
    return [table, diag], None


def _task_verify_om(cfg, opts, warnings):
    post = build_posterior(cfg)
    if opts.point == "map":
        x = post.to_flat(_solve(post, opts.solver, warnings).argmin)
    else:
        x = np.zeros(post.dim)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    table = Table("om_ratios", ["direction_id", "ratio_quadrature", "ratio_exact", "rel_err"])
    worst = 0.0
    for k in range(opts.n_directions):
        h = post.prior.scales * rng.standard_normal(post.dim)
        q = om_ratio_quadrature(post, x, h, nodes=opts.nodes)
        e = om_ratio_exact(post, x, h)
        rel = abs(q - e) / e if e > 0 else float("inf")
        worst = max(worst, rel)
        table.add(f"rand{k + 1}", q, e, rel)
    failure = None
    if worst > opts.rel_tol:
        failure = f"quadrature and exact ratios differ by {worst:.3e} > {opts.rel_tol:g}"
    return [table], failure


def _task_verify_wmap(cfg, opts, warnings):
    post = build_posterior(cfg)
    res = _solve(post, opts.solver, warnings)
    report = verify_solution(post, res, n_directions=opts.n_directions, seed=cfg.seed, tol=opts.tol, delta=opts.delta)
    directions = Table("directions", ["direction_id", "ratio_exact"], [list(d) for d in report.directions])
    checks = Table("checks", ["check", "value", "passed"])
    checks.add("first_order_residual", report.residual, report.first_order_ok)
    checks.add("max_ratio", report.max_ratio, report.ratio_scan_ok)
    checks.add("perturbation_gap", report.perturbation_gap, report.perturbation_ok)
    tables = [directions, checks]
    ok = report.passed and res.converged

    if opts.eps:
        if post.dim > 4:
            warnings.append(f"small-ball certificate at dimension {post.dim} > 4 is likely vacuous")
        batch = sample_posterior_is(post, cfg.seed, opts.ball_count)
        warnings.extend(batch.meta.get("warnings", []))
        x = post.to_flat(res.argmin)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
        hs = rng.standard_normal((opts.ball_directions, post.dim))
        hs *= opts.ball_shift / np.linalg.norm(hs, axis=1, keepdims=True)
        ball = Table("small_ball", ["direction_id", "eps", "ratio", "stderr", "ratio_exact", "passed"])
        for eps in opts.eps:
            for k, h in enumerate(hs):
                est = small_ball_ratio(post, x, h, eps, batch)
                passed = bool(np.isfinite(est.estimate) and est.estimate <= 1.0 + 3.0 * est.stderr)
                if not np.isfinite(est.estimate):
                    warnings.append(f"no samples in the eps={eps:g} ball at the estimate")
                ok = ok and passed
                ball.add(f"rand{k + 1}", eps, est.estimate, est.stderr, om_ratio_exact(post, x, h), passed)
        tables.append(ball)
    return tables, None if ok else "wMAP verification failed"


def _task_bregman_compare(cfg, opts, warnings):
    post = build_posterior(cfg)
    res = _solve(post, opts.solver, warnings)
    batch = _draw(post, cfg.seed, opts.sampling)
    warnings.extend(batch.meta.get("warnings", []))
    u_cm = cm_estimate(batch)
    rep = compare_map_cm(post, res.argmin, u_cm, batch)
    costs = Table("costs", ["quantity", "estimate", "stderr"])
    costs.add("cost_at_map", *rep.cost_at_map)
    costs.add("cost_at_cm", *rep.cost_at_cm)
    costs.add("difference", *rep.difference)
    estimates = Table("estimates", ["component", "map", "cm"])
    for name, a, b in zip(_component_names(post), post.to_flat(res.argmin), post.to_flat(u_cm)):
        estimates.add(name, a, b)
    summary = Table("summary", ["key", "value"])
    summary.add("verdict", rep.verdict)
    summary.add("shared_seed", rep.shared_seed)
    summary.add("n_samples", rep.n_samples)
    for key, value in _sampler_diagnostics(batch):
        if key != "count":
            summary.add(key, value)
    return [costs, estimates, summary], None if res.converged else warnings[-1]


def _task_refine_study(cfg, opts, warnings):
    family = lambda n: build_posterior(cfg, trunc=n)
    table = Table("refinement", ["N", "diff_norm", "objective", "residual", "iterations"])
    try:
        rows = refinement_study(family, opts.levels, _solve_options(opts.solver))
    except ConvergenceError as exc:
        return [table], str(exc)
    for r in rows:
        table.add(r.N, r.diff_norm, r.objective, r.residual, r.iterations)
    return [table], None


TASK_RUNNERS = {
    "sample-prior": _task_sample_prior,
    "solve-map": _task_solve_map,
    "estimate-cm": _task_estimate_cm,
    "verify-om": _task_verify_om,
    "verify-wmap": _task_verify_wmap,
    "bregman-compare": _task_bregman_compare,
    "refine-study": _task_refine_study,
}


def execute(cfg: ExperimentConfig) -> Report:
    """Run the configured task; raises :class:`TaskFailure` (carrying the report) on failure."""
    warnings: list[str] = []
    tables, failure = TASK_RUNNERS[cfg.task](cfg, cfg.task_options, warnings)
    report = Report(
        task=cfg.task,
        config=cfg.echo(),
        tables=tables,
        seed=cfg.seed,
        chunking=f"fixed-{CHUNK_SIZE}; threads={thread_count()}",
        version=__version__,
        warnings=warnings,
    )
    if failure:
        raise TaskFailure(failure, report)
    return report


def run(config_path, out_dir=".", formats=FORMATS) -> Report:
    """Load, execute and emit; raises :class:`CliError` with the exit code on any failure."""
    cfg = load_config(config_path)
    failure = None
    try:
        report = execute(cfg)
    except TaskFailure as exc:
        report, failure = exc.report, str(exc)
    try:
        emit_report(report, out_dir, formats)
    except OSError as exc:
        raise CliError(4, "write-error", f"cannot write report to {str(out_dir)!r}: {exc.strerror}") from None
    if failure:
        raise CliError(4, "task-failure", failure)
    return report


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail(CliError(2, "usage-error", message))


def _fail(err: CliError):
    line = json.dumps({"exit": err.code, "error": err.kind, "detail": err.detail})
    print(line, file=sys.stderr)
    sys.exit(err.code)


def _formats(value: str) -> list[str]:
    items = [v.strip() for v in value.split(",") if v.strip()]
    bad = [v for v in items if v not in FORMATS]
    if not items or bad:
        raise argparse.ArgumentTypeError(f"formats must be a comma list drawn from {list(FORMATS)}")
    return items


def main(argv=None) -> int:
    parser = _Parser(prog="wmap-lab", description="Weak MAP estimation experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment described by a JSON config")
    p_run.error = parser.error
    p_run.add_argument("config", help="path to the JSON config")
    p_run.add_argument("--out", default=".", help="output directory (default: current directory)")
    p_run.add_argument("--format", dest="formats", type=_formats, default=list(FORMATS), help="csv,json")
    p_run.add_argument("-v", "--verbose", action="store_true", help="log sampler and solver warnings to stderr")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        report = run(args.config, args.out, args.formats)
    except CliError as err:
        _fail(err)
    for w in report.warnings:
        log.warning(w)
    return 0


if __name__ == "__main__":
    sys.exit(main())
