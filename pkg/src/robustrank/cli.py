"""``robustrank`` command line: rank, detect, simulate, check, bench."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


from . import __version__
from .graph import build_operator, complete_graph_dataset, least_squares_scores
from .io import build_report, read_comparisons, write_matrix, write_report
from .lasso import huber_lasso, lasso_select_k
from .simulate import METHODS, DEFAULT_OP, DEFAULT_SN, default_jobs, run_grid
from .solvers import SolverConfig, alts, default_epsilon, iht, ilts
from .theory import DEFAULT_BUDGET, BudgetExceeded, condition_report

log = logging.getLogger("robustrank")

EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 3


class CliError(Exception):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _op_list(text):
    out = []
    for x in text.split(","):
        x = x.strip()
        if x:
            out.append(float(x[:-1]) / 100 if x.endswith("%") else float(x))
    return out


def _method_list(text):
    methods = [x.strip() for x in text.split(",") if x.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown methods {bad}; choose from {','.join(METHODS)}")
    return methods


def _write_json(obj, path):
    text = json.dumps(obj, indent=2) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)


def _finish(converged: bool, args) -> int:
    if converged:
        return 0
    if args.allow_nonconverged:
        log.warning("solver did not converge")
        return 0
    print("error: solver did not converge (use --allow-nonconverged to accept)", file=sys.stderr)
    return EXIT_NOT_CONVERGED


def cmd_rank(args) -> int:
    ds = read_comparisons(args.input)
    scores = least_squares_scores(ds)
    report = build_report(ds, scores, "ls", {"input": str(args.input)}, iterations=1)
    _emit_report(report, args.output)
    if args.matrix:
        write_matrix(ds, args.matrix, scores)
    return 0


def _emit_report(report, path):
    if path is None or str(path) == "-":
        sys.stdout.write(json.dumps(report, indent=2, ensure_ascii=False) + "\n")
    else:
        write_report(report, path)


def cmd_detect(args) -> int:
    ds = read_comparisons(args.input)
    method = args.method
    if method == "alts":
        if args.k is not None:
            raise CliError("--k is not allowed with --method alts (aLTS estimates the count)")
        if not ds.dichotomous:
            raise CliError("--method alts requires dichotomous input: every value must be +1 or -1")
    elif method == "lasso":
        if (args.k is None) == (args.lam is None):
            raise CliError("--method lasso needs exactly one of --k and --lambda")
    elif args.k is None:
        raise CliError(f"--method {method} requires --k")
    if args.lam is not None and method != "lasso":
        raise CliError("--lambda only applies to --method lasso")
    if args.k is not None and not 0 <= args.k <= ds.n_records:
        raise CliError(f"--k must lie in [0, {ds.n_records}]")
    try:
        SolverConfig(K=args.k or 0, epsilon=args.epsilon, beta1=args.beta1, beta2=args.beta2,
                     max_iters=args.max_iters, rng_seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from None

    op = build_operator(ds)
    params = {
        "input": str(args.input),
        "k": args.k,
        "beta1": args.beta1,
        "beta2": args.beta2,
        "epsilon": args.epsilon if args.epsilon is not None else default_epsilon(ds.values),
        "lambda": args.lam,
        "correction": args.correction,
        "seed": args.seed,
        "max_iters": args.max_iters,
    }
    khat = None
    if method == "lasso":
        if args.k is not None:
            sel = lasso_select_k(ds, args.k, op=op)
            point = sel.point
            params["selected_lambda"] = point.lam
            params["grid_exhausted"] = sel.exhausted
            converged = point.converged and not sel.exhausted
        else:
            point = huber_lasso(ds, args.lam, op=op)
            converged = point.converged
        scores, outliers, iterations = point.scores, point.support, point.iterations
    else:
        if method == "iht":
            out = iht(ds, args.k, op=op, epsilon=params["epsilon"], max_iters=args.max_iters)
        elif method == "ilts":
            if args.k >= ds.n_records:
                raise CliError("--method ilts needs --k smaller than the number of comparisons")
            out = ilts(ds, args.k, op=op, max_iters=args.max_iters, rng_seed=args.seed)
        else:
            out = alts(ds, op=op, beta1=args.beta1, beta2=args.beta2, rng_seed=args.seed,
                       apply_correction=args.correction, max_iters=args.max_iters)
            khat = out.khat
        scores, outliers, iterations, converged = out.scores, out.outlier_indices, out.iterations, out.converged
    report = build_report(ds, scores, method, params, outliers, khat=khat,
                          iterations=iterations, converged=converged)
    _emit_report(report, args.output)
    if args.matrix:
        write_matrix(ds, args.matrix, scores)
    return _finish(converged, args)


def cmd_simulate(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = {
        "n": args.n, "sn": args.sn, "op": args.op, "trials": args.trials,
        "methods": args.methods, "seed": args.seed, "value_scale": args.value_scale,
    }
    table = run_grid(args.n, args.sn, args.op, args.trials, args.methods, args.seed,
                     args.value_scale, jobs=args.jobs)
    _write_json(config, out_dir / "config.json")
    (out_dir / "metrics.csv").write_text(table.to_csv(), encoding="utf-8", newline="\n")
    for m in args.methods:
        (out_dir / f"timing_{m}.csv").write_text(table.timing_grid(m), encoding="utf-8", newline="\n")
    if args.per_trial:
        (out_dir / "trials.csv").write_text(table.trials_to_csv(), encoding="utf-8", newline="\n")
    failures = sum(r.failures for r in table.rows)
    if failures:
        log.warning("%d method runs failed; see failures column", failures)
    return 0


def _ground_truth(path):
    with open(path, encoding="utf-8") as fh:
        gt = json.load(fh)
    return gt.get("s_star"), gt.get("E_star"), gt.get("N_star")


def cmd_check(args) -> int:
    if args.complete_graph is not None:
        ds = complete_graph_dataset(args.complete_graph, repeats=args.repeats)
        source = {"complete_graph": args.complete_graph, "repeats": args.repeats}
    else:
        ds = read_comparisons(args.input)
        source = {"input": str(args.input)}
    s_star = E_star = N_star = None
    if args.with_ground_truth:
        s_star, E_star, N_star = _ground_truth(args.with_ground_truth)
    op = build_operator(ds)
    try:
        report = condition_report(op, args.k, s_star, E_star, N_star, budget=args.budget)
    except BudgetExceeded as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_ERROR
    doc = {"config": {**source, "k": args.k, "budget": args.budget,
                      "ground_truth": args.with_ground_truth}, **report.to_dict()}
    _write_json(doc, args.output)
    return 0


def _load_bench_spec(path):
    try:
        with open(path, encoding="utf-8") as fh:
            spec = json.load(fh)
    except FileNotFoundError:
        raise CliError(f"spec file not found: {path}") from None
    unknown = set(spec) - {"n", "sn", "op", "trials", "methods", "seed", "value_scale"}
    if unknown:
        raise CliError(f"unknown spec keys: {sorted(unknown)}")
    sn = spec.get("sn", list(DEFAULT_SN))
    op = spec.get("op", list(DEFAULT_OP))
    return {
        "n": int(spec.get("n", 16)),
        "sn": [sn] if isinstance(sn, int) else list(sn),
        "op": [op] if isinstance(op, (int, float)) else list(op),
        "trials": int(spec.get("trials", 100)),
        "methods": list(spec.get("methods", METHODS)),
        "seed": int(spec.get("seed", 0)),
        "value_scale": float(spec.get("value_scale", 1.0)),
    }


def cmd_bench(args) -> int:
    spec = _load_bench_spec(args.spec)
    table = run_grid(spec["n"], spec["sn"], spec["op"], spec["trials"], spec["methods"],
                     spec["seed"], spec["value_scale"], jobs=args.jobs)
    methods = spec["methods"]
    lines = ["SN,OP," + ",".join(methods)]
    totals = dict.fromkeys(methods, 0.0)
    for sn in spec["sn"]:
        for op in spec["op"]:
            secs = [table.cell(m, sn, op).seconds for m in methods]
            for m, t in zip(methods, secs):
                totals[m] += t
            lines.append(f"{sn},{op:g}," + ",".join(f"{t:.4f}" for t in secs))
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    fastest = min(totals, key=totals.get)
    for m in methods:
        ratio = totals[m] / totals[fastest] if totals[fastest] > 0 else float("inf")
        print(f"{m}: {totals[m]:.3f} s total, {ratio:.2f}x {fastest}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robustrank", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("rank", help="least-squares scores")
    r.add_argument("--input", required=True)
    r.add_argument("--output")
    r.add_argument("--matrix", help="also write the aggregated preference matrix CSV")
    r.set_defaults(func=cmd_rank)

    d = sub.add_parser("detect", help="outlier detection")
    d.add_argument("--input", required=True)
    d.add_argument("--method", required=True, choices=["iht", "ilts", "alts", "lasso"])
    d.add_argument("--k", type=int)
    d.add_argument("--beta1", type=float, default=0.75)
    d.add_argument("--beta2", type=float, default=1.03)
    d.add_argument("--epsilon", type=float)
    d.add_argument("--lambda", dest="lam", type=float)
    d.add_argument("--correction", type=_bool, default=False)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--max-iters", type=int, default=1000)
    d.add_argument("--output")
    d.add_argument("--matrix")
    d.add_argument("--allow-nonconverged", action="store_true")
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("simulate", help="simulation study")
    s.add_argument("--n", type=int, default=16)
    s.add_argument("--sn", type=_int_list, default=list(DEFAULT_SN))
    s.add_argument("--op", type=_op_list, default=list(DEFAULT_OP))
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--methods", type=_method_list, default=list(METHODS))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--value-scale", type=float, default=1.0)
    s.add_argument("--jobs", type=int, default=None)
    s.add_argument("--per-trial", action="store_true")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("check", help="recovery-condition constants")
    src = c.add_mutually_exclusive_group(required=True)
    src.add_argument("--input")
    src.add_argument("--complete-graph", type=int, metavar="N")
    c.add_argument("--repeats", type=int, default=1)
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--with-ground-truth", metavar="JSON")
    c.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    c.add_argument("--output")
    c.set_defaults(func=cmd_check)

    b = sub.add_parser("bench", help="timing grid")
    b.add_argument("--spec", required=True)
    b.add_argument("--jobs", type=int, default=None)
    b.add_argument("--output")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 0) is None:
        args.jobs = default_jobs()
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
