"""Command-line interface.

Subcommands mirror the analysis pipeline: ``sample`` (posterior Gibbs
sampling), ``bf`` (encompassing Bayes factor), ``count`` (region counting
only), ``ppp`` (posterior-predictive p-values), ``map`` (MAP estimate) and
``check`` (constraint check of a point).  Every run emits a JSON report and
a human-readable table; rerunning with the same ``--seed`` reproduces the
report byte for byte apart from its timing block.

Exit codes: 0 success, 2 parse/validation error, 3 numerical failure,
4 infeasible model.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import evidence, fit, io, sampler
from .errors import (
    DimensionError,
    EmptyIntervalError,
    IneqmnError,
    InfeasibleError,
    ModelFileError,
    NumericError,
)
from .model import (
    CountData,
    DirichletPrior,
    ItemLayout,
    complete_theta,
    posterior_shapes,
    satisfies_ab,
    validate_theta,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NUMERIC = 3
EXIT_INFEASIBLE = 4


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return format(x, ".6g")
    return str(x)


def _render_table(rows: list[list[str]]) -> str:
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = []
    for r, row in enumerate(rows):
        line = "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        lines.append(line)
        if r == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.replace(",", " ").split()]


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _add_model_args(p: argparse.ArgumentParser):
    p.add_argument("--model", required=True, help="model file (JSON)")
    p.add_argument("--k", type=_int_list, default=None,
                   help="override counts (comma separated)")
    p.add_argument("--n", type=_int_list, default=None,
                   help="override totals per item type (or one shared total)")
    p.add_argument("--options", type=_int_list, default=None,
                   help="override category counts per item type")
    p.add_argument("--prior", type=_float_list, default=None,
                   help="override prior shapes (one value or full length)")


def _add_common_args(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None, help="master RNG seed")
    p.add_argument("--output", type=Path, default=None,
                   help="write the JSON report to this path")
    p.add_argument("--format", choices=("json", "table"), default="table",
                   help="what to print on stdout")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (INEQMN_THREADS overrides the default)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ineqmn",
        description="Bayesian inference for inequality-constrained multinomial models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="Gibbs sampling from the constrained posterior")
    _add_model_args(p)
    p.add_argument("--samples", type=int, default=5000, help="iterations per chain")
    p.add_argument("--chains", type=int, default=8)
    p.add_argument("--burnin", type=int, default=None)
    p.add_argument("--scan", choices=("systematic", "random"), default="systematic")
    p.add_argument("--samples-out", type=Path, default=None,
                   help="write pooled samples to this CSV file")
    _add_common_args(p)

    p = sub.add_parser("bf", help="encompassing Bayes factor")
    _add_model_args(p)
    p.add_argument("--samples", type=int, default=10000,
                   help="Monte Carlo draws per side (or per step)")
    p.add_argument("--steps", type=_int_list, default=None,
                   help="stepwise row counts, e.g. 1,2,3")
    p.add_argument("--cmin", type=int, default=None,
                   help="automatic mode: minimum hits per step")
    p.add_argument("--uncertainty-draws", type=int, default=5000)
    _add_common_args(p)

    p = sub.add_parser("count", help="count samples inside the region")
    _add_model_args(p)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--steps", type=_int_list, default=None)
    p.add_argument("--cmin", type=int, default=None)
    p.add_argument("--distribution", choices=("prior", "posterior"), default=None,
                   help="which Dirichlet to sample (default: posterior if counts exist)")
    p.add_argument("--uncertainty-draws", type=int, default=5000)
    _add_common_args(p)

    p = sub.add_parser("ppp", help="posterior-predictive p-value (Pearson X^2)")
    _add_model_args(p)
    p.add_argument("--samples", type=int, default=5000, help="iterations per chain")
    p.add_argument("--chains", type=int, default=8)
    p.add_argument("--burnin", type=int, default=None)
    _add_common_args(p)

    p = sub.add_parser("map", help="maximum a posteriori estimate")
    _add_model_args(p)
    _add_common_args(p)

    p = sub.add_parser("check", help="constraint check for a given point")
    _add_model_args(p)
    p.add_argument("--theta", type=_float_list, required=True,
                   help="free coordinates, comma separated")
    _add_common_args(p)
    return parser


def _load_spec(args) -> io.ModelSpec:
    spec = io.parse_model(args.model)
    layout = spec.layout
    if args.options is not None:
        layout = ItemLayout(tuple(args.options))
        if spec.ab is not None and spec.ab.n_rows and spec.ab.dim != layout.dim:
            raise ModelFileError(
                "--options conflicts with the constraint matrix dimensions"
            )
        if spec.vertices is not None and spec.vertices.dim != layout.dim:
            raise ModelFileError(
                "--options conflicts with the vertex matrix dimensions"
            )
    prior = spec.prior
    if args.prior is not None:
        beta = (
            np.full(layout.total_categories, args.prior[0])
            if len(args.prior) == 1
            else np.asarray(args.prior, dtype=float)
        )
        prior = DirichletPrior(beta)
        prior.check_layout(layout)
    counts = spec.counts
    convention = spec.counts_convention
    if args.k is not None:
        k = np.asarray(args.k)
        n = np.asarray(args.n) if args.n is not None else None
        if k.size == layout.total_categories:
            counts = CountData.from_full(k, layout, n=n)
            convention = "full"
        elif k.size == layout.dim:
            if n is None:
                raise ModelFileError("--n is required with free-category --k")
            counts = CountData.from_free(k, n, layout)
            convention = "free"
        else:
            raise ModelFileError(
                f"--k needs {layout.total_categories} or {layout.dim} entries"
            )
    elif args.options is not None and counts is not None:
        counts.check_layout(layout)
    return io.ModelSpec(
        layout=layout,
        prior=prior,
        counts=counts,
        ab=spec.ab,
        vertices=spec.vertices,
        counts_convention=convention,
    )


def _model_summary(spec: io.ModelSpec, path) -> dict:
    out = {
        "source": str(path),
        "options": list(spec.layout.options),
        "constraint": spec.kind,
        "prior": spec.prior.beta.tolist(),
    }
    if spec.ab is not None:
        out["n_rows"] = spec.ab.n_rows
    else:
        out["n_vertices"] = spec.vertices.n_vertices
    if spec.counts is not None:
        out["k"] = spec.counts.k.tolist()
        out["n"] = spec.counts.n.tolist()
        out["counts_convention"] = spec.counts_convention
    return out


def _emit(report: dict, table: list[list[str]], args) -> None:
    text = io.dumps_canonical(report)
    if args.output is not None:
        args.output.write_text(text)
    if args.format == "json":
        sys.stdout.write(text)
    else:
        print(_render_table(table))
        if args.output is not None:
            print(f"report written to {args.output}")


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int(np.random.SeedSequence().entropy % (2**63))


def _require_counts(spec: io.ModelSpec) -> CountData:
    if spec.counts is None:
        raise ModelFileError(
            "this command needs observed counts; add 'k' (and 'n') to the "
            "model file or pass --k/--n"
        )
    return spec.counts


def _count_one(spec, shapes, args, rng) -> evidence.CountResult:
    model = spec.constraint_model()
    if args.steps is None and args.cmin is None:
        return evidence.count_in_region(
            model, shapes, args.samples, rng, threads=args.threads
        )
    if spec.ab is None:
        raise ModelFileError(
            "stepwise and automatic counting need the inequality representation"
        )
    steps = tuple(args.steps) if args.steps is not None else (spec.ab.n_rows,)
    if args.cmin is None:
        return evidence.stepwise_count(
            spec.ab, steps, shapes, spec.layout, args.samples, rng
        )
    return evidence.automatic_count(
        spec.ab, steps, shapes, spec.layout, args.cmin, rng, block=args.samples
    )


def _count_payload(counts: evidence.CountResult, se: float) -> dict:
    out = {
        "inside": counts.inside,
        "total": counts.total,
        "proportion": counts.proportion,
        "se": se,
        "distribution": counts.distribution,
    }
    if counts.per_step is not None:
        out["per_step"] = [list(p) for p in counts.per_step]
    if counts.exhausted_steps:
        out["exhausted_steps"] = list(counts.exhausted_steps)
    return out


def _cmd_bf(args) -> tuple[dict, list[list[str]]]:
    spec = _load_spec(args)
    data = _require_counts(spec)
    seed = _resolve_seed(args)
    rng = np.random.default_rng(seed)
    prior_counts = _count_one(spec, spec.prior.beta, args, rng)
    post_counts = _count_one(spec, posterior_shapes(data, spec.prior), args, rng)
    r = args.uncertainty_draws
    res = evidence.encompassing_bf(prior_counts, post_counts, R=r, rng=rng)

    draw_rng = np.random.default_rng(rng.integers(2**63))
    c_draws = evidence.proportion_draws(prior_counts, r, draw_rng)
    f_draws = evidence.proportion_draws(post_counts, r, draw_rng)
    c_hat, f_hat = prior_counts.proportion, post_counts.proportion
    rows = [["", "bf", "se", "ci.5", "ci.95"]]
    table_vals = {}
    for label, point, draws in (
        ("bf_0u", res.bf_0u, f_draws / c_draws),
        ("bf_u0", res.bf_u0, c_draws / f_draws),
        (
            "bf_00c",
            res.bf_00c,
            (f_draws * (1 - c_draws)) / (c_draws * (1 - f_draws)),
        ),
    ):
        q05, q95 = np.quantile(draws, [0.05, 0.95])
        cells = [_fmt(point), _fmt(float(np.std(draws, ddof=1))),
                 _fmt(float(q05)), _fmt(float(q95))]
        rows.append([label] + cells)
        table_vals[label] = dict(zip(("bf", "se", "ci.5", "ci.95"), cells))
    results = {
        "bf_0u": res.bf_0u, "bf_u0": res.bf_u0, "bf_00c": res.bf_00c,
        "se": res.se, "q05": res.q05, "q95": res.q95,
        "uncertainty_draws": res.R, "status": res.status,
        "prior_counts": _count_payload(
            prior_counts, float(np.std(c_draws, ddof=1))
        ),
        "posterior_counts": _count_payload(
            post_counts, float(np.std(f_draws, ddof=1))
        ),
        "c_hat": c_hat, "f_hat": f_hat,
    }
    if res.bound is not None:
        results["bound"] = res.bound
        results["bound_note"] = res.bound_note
    report = {
        "schema": io.REPORT_SCHEMA,
        "command": "bf",
        "seed": seed,
        "args": {"samples": args.samples, "steps": args.steps, "cmin": args.cmin,
                 "uncertainty_draws": r},
        "model": _model_summary(spec, args.model),
        "results": results,
        "table": rows,
    }
    return report, rows


def _cmd_count(args) -> tuple[dict, list[list[str]]]:
    spec = _load_spec(args)
    which = args.distribution
    if which is None:
        which = "posterior" if spec.counts is not None else "prior"
    if which == "posterior":
        shapes = posterior_shapes(_require_counts(spec), spec.prior)
    else:
        shapes = spec.prior.beta
    seed = _resolve_seed(args)
    rng = np.random.default_rng(seed)
    counts = _count_one(spec, shapes, args, rng)
    draws = evidence.proportion_draws(counts, args.uncertainty_draws, rng)
    se = float(np.std(draws, ddof=1))
    rows = [["", "inside", "total", "proportion", "se"]]
    rows.append([which, _fmt(counts.inside), _fmt(counts.total),
                 _fmt(counts.proportion), _fmt(se)])
    if counts.per_step is not None:
        for m, (h, d) in enumerate(counts.per_step, start=1):
            rows.append([f"step {m}", _fmt(h), _fmt(d),
                         _fmt(h / d if d else float('nan')), ""])
    report = {
        "schema": io.REPORT_SCHEMA,
        "command": "count",
        "seed": seed,
        "args": {"samples": args.samples, "steps": args.steps,
                 "cmin": args.cmin, "distribution": which,
                 "uncertainty_draws": args.uncertainty_draws},
        "model": _model_summary(spec, args.model),
        "results": {"which": which, **_count_payload(counts, se)},
        "table": rows,
    }
    return report, rows


def _run_chains(spec: io.ModelSpec, args, seed: int):
    data = spec.counts if spec.counts is not None else CountData.empty(spec.layout)
    model = spec.constraint_model()
    chains = sampler.run_parallel_chains(
        model, data, spec.prior, args.samples, args.chains, seed,
        scan=getattr(args, "scan", "systematic"),
        burnin=args.burnin, threads=args.threads,
    )
    return model, data, chains


def _cmd_sample(args) -> tuple[dict, list[list[str]]]:
    spec = _load_spec(args)
    seed = _resolve_seed(args)
    model, data, chains = _run_chains(spec, args, seed)
    pooled = np.vstack([c.samples for c in chains])
    ess_per_chain = np.array([sampler.effective_sample_size(c) for c in chains])
    ess = ess_per_chain.sum(axis=0)
    n_iter = sum(len(c) for c in chains)
    means = pooled.mean(axis=0)
    sds = pooled.std(axis=0, ddof=1)
    q05, q50, q95 = np.quantile(pooled, [0.05, 0.5, 0.95], axis=0)

    rows = [["coord", "mean", "sd", "q5", "median", "q95", "ess_ratio"]]
    for d in range(spec.layout.dim):
        rows.append([
            f"theta[{d}]", _fmt(float(means[d])), _fmt(float(sds[d])),
            _fmt(float(q05[d])), _fmt(float(q50[d])), _fmt(float(q95[d])),
            _fmt(float(ess[d] / n_iter)),
        ])
    if args.samples_out is not None:
        np.savetxt(args.samples_out, pooled, delimiter=",")
    report = {
        "schema": io.REPORT_SCHEMA,
        "command": "sample",
        "seed": seed,
        "args": {"samples": args.samples, "chains": args.chains,
                 "burnin": args.burnin, "scan": args.scan},
        "model": _model_summary(spec, args.model),
        "results": {
            "mean": means.tolist(), "sd": sds.tolist(),
            "q05": q05.tolist(), "median": q50.tolist(), "q95": q95.tolist(),
            "ess": ess.tolist(), "iterations": n_iter,
            "ess_ratio": (ess / n_iter).tolist(),
        },
        "diagnostics": {
            "per_chain_ess_ratio": (ess_per_chain / args.samples).tolist(),
            "burnin": chains[0].burnin,
        },
        "table": rows,
    }
    return report, rows


def _cmd_ppp(args) -> tuple[dict, list[list[str]]]:
    spec = _load_spec(args)
    data = _require_counts(spec)
    seed = _resolve_seed(args)
    model, data, chains = _run_chains(spec, args, seed)
    pooled = np.vstack([c.samples for c in chains])
    pred_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    res = fit.ppp_value(pooled, data, spec.layout, pred_rng, by_item=True)
    rows = [["", "p_value", "iterations"]]
    rows.append(["total", _fmt(res.p_value), _fmt(res.T)])
    for i, p in enumerate(res.p_by_item):
        rows.append([f"item {i + 1}", _fmt(float(p)), ""])
    report = {
        "schema": io.REPORT_SCHEMA,
        "command": "ppp",
        "seed": seed,
        "args": {"samples": args.samples, "chains": args.chains,
                 "burnin": args.burnin},
        "model": _model_summary(spec, args.model),
        "results": {
            "p_value": res.p_value,
            "p_by_item": res.p_by_item.tolist(),
            "iterations": res.T,
            "x2_obs_mean": float(np.mean(res.x2_obs_samples)),
            "x2_pred_mean": float(np.mean(res.x2_pred_samples)),
        },
        "table": rows,
    }
    return report, rows


def _cmd_map(args) -> tuple[dict, list[list[str]]]:
    spec = _load_spec(args)
    seed = _resolve_seed(args)
    data = spec.counts if spec.counts is not None else CountData.empty(spec.layout)
    model = spec.constraint_model()
    theta = sampler.map_estimate(model, data, spec.prior)
    full = complete_theta(theta, spec.layout)
    rows = [["coord", "map"]]
    for d in range(spec.layout.dim):
        rows.append([f"theta[{d}]", _fmt(float(theta[d]))])
    report = {
        "schema": io.REPORT_SCHEMA,
        "command": "map",
        "seed": seed,
        "args": {},
        "model": _model_summary(spec, args.model),
        "results": {"theta": theta.tolist(), "theta_full": full.tolist()},
        "table": rows,
    }
    return report, rows


def _cmd_check(args) -> tuple[dict, list[list[str]]]:
    spec = _load_spec(args)
    seed = _resolve_seed(args)
    theta = validate_theta(np.asarray(args.theta, dtype=float), spec.layout)
    model = spec.constraint_model()
    results: dict = {"theta": theta.tolist()}
    rows = [["row", "slack", "satisfied"]]
    if spec.ab is not None:
        slack = spec.ab.b - spec.ab.A @ theta if spec.ab.n_rows else np.zeros(0)
        inside = bool(satisfies_ab(theta, spec.ab))
        results["inside"] = inside
        results["slack"] = slack.tolist()
        min_slack = float(slack.min()) if slack.size else float("inf")
        rows.append(["overall", _fmt(min_slack), _fmt(inside)])
        order = np.argsort(slack)
        for r in order[:100]:  # worst rows first; full slacks are in the JSON
            rows.append([str(int(r) + 1), _fmt(float(slack[r])),
                         _fmt(bool(slack[r] >= -1e-10))])
    else:
        inside = bool(model.contains(theta))
        results["inside"] = inside
        rows.append(["overall (hull)", "", _fmt(inside)])
    report = {
        "schema": io.REPORT_SCHEMA,
        "command": "check",
        "seed": seed,
        "args": {"theta": args.theta},
        "model": _model_summary(spec, args.model),
        "results": results,
        "table": rows,
    }
    return report, rows


_COMMANDS = {
    "sample": _cmd_sample,
    "bf": _cmd_bf,
    "count": _cmd_count,
    "ppp": _cmd_ppp,
    "map": _cmd_map,
    "check": _cmd_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        report, table = _COMMANDS[args.command](args)
    except (ModelFileError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleError as exc:
        print(f"infeasible model: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericError, EmptyIntervalError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except IneqmnError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    report["timing"] = {"seconds": time.perf_counter() - start}
    _emit(report, table, args)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
