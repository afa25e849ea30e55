"""Command-line interface.

Subcommands cover the full pipeline: sample generation, classifier
training, scheduling, out-of-sample evaluation, report aggregation, and a
one-shot `reproduce` that sweeps the bundled cases over all methods and
risk levels. Flags can be preloaded from a JSON config file (--config);
explicit flags win. Logs are JSON lines on stderr; fatal errors print a
single machine-readable JSON object and exit with a code identifying the
failure class (2 config, 3 data, 4 solver, 5 validation).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import evaluation, netdata, scheduler, svc, usets
from .errors import (CaseFormatError, ConfigError, InfeasibleProblemError,
                     JccSchedError, SampleFormatError, SolverError,
                     TopologyError)

log = logging.getLogger("jcc_sched")

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SOLVER = 4
EXIT_VALIDATION = 5

# preset id -> (bundled case, sample family)
CASE_PRESETS = {
    "1": ("ieee13", "beta"),
    "2": ("ieee13_hetero", "weibull"),
    "3": ("ieee13", "gaussian"),
}

EPS_GRID = (0.05, 0.10, 0.15, 0.25)


class _JsonLineFormatter(logging.Formatter):
    def format(self, record):
        doc = {"ts": self.formatTime(record, "%Y-%m-%dT%H:%M:%S"),
               "level": record.levelname.lower(), "event": record.getMessage()}
        extra = getattr(record, "data", None)
        if extra:
            doc.update(extra)
        return json.dumps(doc)


def _setup_logging(verbose):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonLineFormatter())
    log.handlers[:] = [handler]
    log.setLevel(logging.DEBUG if verbose else logging.INFO)


def _log(event, **data):
    log.info(event, extra={"data": data})


def _apply_thread_limit():
    raw = os.environ.get("JCC_SCHED_THREADS")
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"JCC_SCHED_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError("JCC_SCHED_THREADS must be >= 1")
    os.environ.setdefault("OMP_NUM_THREADS", str(n))
    os.environ.setdefault("OPENBLAS_NUM_THREADS", str(n))
    try:
        import numba

        numba.set_num_threads(n)
    except ImportError:
        pass
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=n)
    except ImportError:
        pass


def _resolve_case(value):
    path = Path(value)
    if path.exists():
        return path
    try:
        return netdata.bundled_case_path(value)
    except FileNotFoundError:
        raise CaseFormatError(f"case {value!r}: no such file or bundled case")


def _load_case(value):
    return netdata.load_case(_resolve_case(value))


def _add_case_arg(p):
    p.add_argument("--case", required=True,
                   help="case file path or bundled case name (ieee13, ieee13_hetero)")


def cmd_gen_samples(args):
    network, inputs = _load_case(args.case)
    config = usets.SamplerConfig(family=args.family, horizon=inputs.horizon,
                                 dim=len(network.drg_buses),
                                 n_samples=args.n, seed=args.seed)
    samples = usets.generate_samples(config)
    netdata.save_samples(samples, args.out)
    _log("samples-written", out=args.out, family=args.family, n=args.n,
         horizon=inputs.horizon, dim=samples.dim, seed=args.seed)
    return 0


def cmd_train_sets(args):
    network, inputs = _load_case(args.case)
    samples = netdata.load_samples(args.samples, dim=len(network.drg_buses))
    if samples.horizon != inputs.horizon:
        raise SampleFormatError(f"samples cover {samples.horizon} steps, "
                                f"case has {inputs.horizon}")
    t0 = time.perf_counter()
    models = [svc.train(samples.xi[t], args.eps) for t in range(inputs.horizon)]
    svc.save_models(models, args.out)
    _log("models-trained", out=args.out, eps=args.eps,
         horizon=inputs.horizon, seconds=round(time.perf_counter() - t0, 3),
         sv_counts=[m.sv.shape[0] for m in models])
    return 0


def cmd_solve(args):
    network, inputs = _load_case(args.case)
    samples = netdata.load_samples(args.samples, dim=len(network.drg_buses))
    models = svc.load_models(args.models) if args.models else None
    sol, _sets = scheduler.schedule_from_samples(
        network, inputs, samples, args.method, args.eps, models=models,
        presolve=args.presolve, seed=args.seed, backend=args.backend)
    sol.save(args.out)
    _log("schedule-solved", out=args.out, method=args.method, eps=args.eps,
         status=sol.status, cost=round(sol.cost, 6),
         solve_seconds=round(sol.solve_seconds, 3), backend=sol.backend,
         **sol.build_info)
    return 0


def cmd_evaluate(args):
    network, inputs = _load_case(args.case)
    sol = scheduler.ScheduleSolution.load(args.solution)
    samples = netdata.load_samples(args.samples, dim=len(network.drg_buses))
    report = evaluation.violation_probability(network, inputs, sol, samples,
                                              label=args.label)
    util = evaluation.utilization_rate(inputs, sol)
    rec = evaluation.run_record(
        case=args.case_label or Path(args.case).stem, family=args.family,
        method=sol.method, eps=sol.eps, solution=sol, utilization=util,
        train_report=report if args.label == "train" else None,
        holdout_report=report if args.label != "train" else None)
    Path(args.out).write_text(json.dumps(rec))
    _log("evaluated", out=args.out, label=args.label,
         max_violation=report.max_over_t, argmax_t=report.argmax_t,
         utilization=round(util, 6))
    if args.bound is not None and report.max_over_t > args.bound:
        raise _ValidationFailure(
            f"max violation {report.max_over_t:.4f} exceeds bound {args.bound}")
    return 0


def cmd_report(args):
    records = [json.loads(Path(p).read_text()) for p in args.inputs]
    evaluation.run_report(records, csv_path=args.csv, json_path=args.json_out)
    _log("report-written", csv=args.csv, json=args.json_out, runs=len(records))
    return 0


def _boundary_traces(sets, steps):
    traces = {}
    for t in steps:
        try:
            traces[str(t)] = usets.trace_boundary_2d(sets[t]).tolist()
        except (ValueError, TypeError):
            return None
    return traces


def cmd_reproduce(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    eps_values = [float(e) for e in args.eps_list.split(",")]
    methods = args.methods.split(",")
    for m in methods:
        if m not in scheduler.METHODS:
            raise ConfigError(f"unknown method {m!r}")
    boundary_steps = (0, 6, 12, 18)
    records = []
    for preset in args.cases.split(","):
        if preset not in CASE_PRESETS:
            raise ConfigError(f"unknown case preset {preset!r} "
                              f"(choose from {sorted(CASE_PRESETS)})")
        case_name, family = CASE_PRESETS[preset]
        network, inputs = _load_case(case_name)
        dim = len(network.drg_buses)
        seed = 100 + 10 * int(preset)
        train = usets.generate_samples(usets.SamplerConfig(
            family=family, horizon=inputs.horizon, dim=dim,
            n_samples=args.n_train, seed=seed))
        holdout = usets.generate_samples(usets.SamplerConfig(
            family=family, horizon=inputs.horizon, dim=dim,
            n_samples=args.n_holdout, seed=seed + 1))
        netdata.save_samples(train, out_dir / f"case{preset}_train.csv")
        _log("case-start", preset=preset, case=case_name, family=family)
        for eps in eps_values:
            models = None
            if "svc" in methods:
                models = [svc.train(train.xi[t], eps)
                          for t in range(inputs.horizon)]
                svc.save_models(models, out_dir / f"case{preset}_eps{eps}_models.json")
            for method in methods:
                tag = f"case{preset}_{method}_eps{eps}"
                sol, sets = scheduler.schedule_from_samples(
                    network, inputs, train, method, eps, models=models,
                    presolve=args.presolve, seed=seed, backend=args.backend)
                sol.save(out_dir / f"{tag}.solution.json")
                rep_tr = evaluation.violation_probability(
                    network, inputs, sol, train, label="train")
                rep_ho = evaluation.violation_probability(
                    network, inputs, sol, holdout, label="holdout")
                rec = evaluation.run_record(
                    case=case_name, family=family, method=method, eps=eps,
                    solution=sol, utilization=evaluation.utilization_rate(inputs, sol),
                    train_report=rep_tr, holdout_report=rep_ho)
                if dim == 2 and method != "bonferroni":
                    rec["set_boundaries"] = _boundary_traces(sets, boundary_steps)
                records.append(rec)
                (out_dir / f"{tag}.eval.json").write_text(json.dumps(rec))
                _log("run-done", tag=tag, status=sol.status,
                     cost=round(sol.cost, 4),
                     max_violation_holdout=rep_ho.max_over_t,
                     solve_seconds=round(sol.solve_seconds, 2))
    evaluation.run_report(records, csv_path=out_dir / "report.csv",
                          json_path=out_dir / "report.json")
    _log("reproduce-done", runs=len(records), out_dir=str(out_dir))
    return 0


class _ValidationFailure(JccSchedError):
    pass


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jcc-sched",
        description="Chance-constrained HVAC scheduling with renewable "
                    "uncertainty on radial networks")
    parser.add_argument("--config", help="JSON file with default flag values")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-samples", help="draw synthetic forecast-error samples")
    _add_case_arg(p)
    p.add_argument("--family", choices=usets.SAMPLE_FAMILIES, required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_samples)

    p = sub.add_parser("train-sets", help="train one classifier per timestep")
    _add_case_arg(p)
    p.add_argument("--samples", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_sets)

    p = sub.add_parser("solve", help="build and solve the day-ahead schedule")
    _add_case_arg(p)
    p.add_argument("--samples", required=True)
    p.add_argument("--method", choices=scheduler.METHODS, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--models", help="pre-trained classifier models (JSON)")
    p.add_argument("--presolve", action="store_true",
                   help="drop members satisfied by variable bounds alone")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", default="auto",
                   choices=("auto", "clarabel", "scs"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="empirical risk of a solved schedule")
    _add_case_arg(p)
    p.add_argument("--solution", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--label", default="holdout")
    p.add_argument("--case-label")
    p.add_argument("--family")
    p.add_argument("--bound", type=float,
                   help="exit with code 5 if max violation exceeds this")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="merge evaluation records into CSV/JSON")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--csv")
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("reproduce", help="full sweep over cases, methods, eps")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--cases", default="1,2,3")
    p.add_argument("--eps-list", default=",".join(str(e) for e in EPS_GRID))
    p.add_argument("--methods", default=",".join(scheduler.METHODS))
    p.add_argument("--n-train", type=int, default=1000)
    p.add_argument("--n-holdout", type=int, default=10000)
    p.add_argument("--presolve", action="store_true")
    p.add_argument("--backend", default="auto",
                   choices=("auto", "clarabel", "scs"))
    p.set_defaults(func=cmd_reproduce)
    return parser


def _apply_config(parser, argv):
    """Load --config JSON and install its values as argparse defaults."""
    if "--config" not in argv:
        return
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        return  # argparse will report the missing value
    path = Path(argv[idx + 1])
    try:
        cfg = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    parser.set_defaults(**cfg)
    for action in parser._subparsers._group_actions[0].choices.values():
        dests = {a.dest for a in action._actions}
        action.set_defaults(**{k: v for k, v in cfg.items() if k in dests})


def _fail(code, exc):
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, InfeasibleProblemError) and exc.conflicting_rows:
        doc["conflicting_rows"] = exc.conflicting_rows
    print(json.dumps(doc), file=sys.stderr)
    return code


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        _setup_logging(getattr(args, "verbose", False))
        _apply_thread_limit()
        return args.func(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except (CaseFormatError, SampleFormatError, TopologyError) as exc:
        return _fail(EXIT_DATA, exc)
    except (SolverError, InfeasibleProblemError) as exc:
        return _fail(EXIT_SOLVER, exc)
    except _ValidationFailure as exc:
        return _fail(EXIT_VALIDATION, exc)


if __name__ == "__main__":
    sys.exit(main())
