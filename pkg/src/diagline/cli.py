"""Command-line entry point: ``diagline <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from collections import Counter

import numpy as np

from . import __version__
from .core import (BudgetError, InstanceError, load_instance, line_identity_check,
                   vanishing_subsum_scan)
from .enumeration import MEMORY_BUDGET, count_lines, default_threads, enumerate_solutions
from .expsum import classify_arc
from .experiments import (ExperimentConfig, fmt, run_asymptotic, run_density_suite,
                          run_subconvexity)
from .localdensity import (a_of_q, count_mod, sigma_p_estimate, sigma_p_via_series,
                           truncated_singular_series)
from .realdensity import RealDensityConfig, cross_check_real_density
from .singularity import classify_solutions


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _emit(args, doc: dict, rows: list[list] | None = None, header: list[str] | None = None) -> None:
    if args.csv and rows is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(header)
        w.writerows([[fmt(v) for v in r] for r in rows])
        sys.stdout.write(buf.getvalue())
    if args.json or not args.csv:
        sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_count(args) -> int:
    ls = load_instance(args.instance)
    res = count_lines(ls, args.box, method=args.method, threads=args.threads,
                      memory_budget=args.memory_budget)
    rec = res.as_record()
    _emit(args, rec, [[res.count, res.box, res.method, res.wall_time]],
          ["count", "box", "method", "seconds"])
    return 0


def cmd_arcs(args) -> int:
    k = load_instance(args.instance).k if args.instance else args.k
    rng = np.random.default_rng(args.seed)
    pts = rng.uniform(0.0, 1.0, size=(args.samples, k))
    rows, freq = [], Counter()
    for n, alpha in enumerate(pts):
        lab = classify_arc(list(alpha), args.X, args.L, args.Q)
        freq[lab.label] += 1
        a = " ".join(map(str, lab.a)) if lab.a else ""
        rows.append([n, lab.label, lab.q if lab.q else "", a])
    doc = {"X": args.X, "L": args.L, "Q": args.Q, "k": k, "seed": args.seed,
           "samples": args.samples, "labels": {lab: freq.get(lab, 0) for lab in ("W1", "W2", "W3", "W4")}}
    _emit(args, doc, rows, ["point", "label", "q", "a"])
    return 0


def cmd_densities(args) -> int:
    ls = load_instance(args.instance)
    out, rows, ok = {}, [], True
    for p in args.primes:
        est = sigma_p_estimate(ls, p, args.h_max)
        w = est.witness
        entry = {
            "d_h": [fmt(v) for v in est.sequence],
            "value": fmt(est.value),
            "stabilized": est.stabilized,
            "witness": None if w is None else {
                "z": list(w.z), "nu_p": w.nu_p, "delta": w.delta, "certified": w.certified,
            },
        }
        try:
            entry["series_delta"] = fmt(sigma_p_via_series(ls, p, min(args.h_max, 2)).error_indicator)
        except AssertionError as exc:
            entry["series_error"] = str(exc)
            ok = False
        out[str(p)] = entry
        rows += [[p, h, count_mod(ls, p, h), d] for h, d in enumerate(est.sequence, 1)]
    series = truncated_singular_series(ls, args.series_D)
    doc = {
        "instance_digest": ls.digest(),
        "primes": out,
        "series": {
            "S_D": fmt(series.value),
            "D": args.series_D,
            "imag_residue": fmt(series.imag_residue),
            "per_q": {str(q): fmt(a) for q, a in enumerate(series.sequence, 1)},
        },
    }
    _emit(args, doc, rows, ["p", "h", "M_p", "d_h"])
    return 0 if ok else 1


def cmd_realdensity(args) -> int:
    ls = load_instance(args.instance)
    cfg = RealDensityConfig(tuple(args.eta), args.mc_samples, args.seed, tuple(args.D),
                            args.tol, args.rel_tol, threads=args.threads)
    rep = cross_check_real_density(ls, cfg)
    doc = {
        "instance_digest": rep.digest,
        "seed": args.seed,
        "g_table": [[fmt(v) for v in r] for r in rep.g_table],
        "sigma_slab": fmt(rep.sigma_slab),
        "I_table": [[fmt(v) for v in r] for r in rep.I_table],
        "I_extrapolated": fmt(rep.I_extrapolated),
        "rel_diff": fmt(rep.rel_diff),
        "passed": rep.passed,
    }
    _emit(args, doc, [list(r) for r in rep.g_table], ["eta", "g", "stderr"])
    return 0 if rep.passed else 1


def cmd_singular(args) -> int:
    ls = load_instance(args.instance, strict=False if args.relaxed else None)
    if args.z is not None:
        with open(args.z, encoding="utf-8") as fh:
            zs = json.load(fh)
    elif args.box is not None:
        zs = enumerate_solutions(ls, args.box).tolist()
    else:
        raise InstanceError("give a z-list file or --box")
    reports = classify_solutions(ls, zs)
    items = [{
        "z": list(r.z), "is_solution": r.is_solution, "rank": r.rank,
        "nonsingular": r.nonsingular, "all_z_nonzero": r.all_z_nonzero,
        "guarantee_applicable": r.guarantee_applicable,
        "guaranteed_nonsingular": r.guaranteed_nonsingular,
        "vanishing_subsums_found": [sorted(S) for S in r.vanishing_subsums_found],
    } for r in reports]
    summary = {
        "total": len(reports),
        "solutions": sum(r.is_solution for r in reports),
        "nonsingular": sum(r.nonsingular for r in reports),
        "guaranteed": sum(r.guaranteed_nonsingular for r in reports),
    }
    rows = [[" ".join(map(str, r.z)), r.is_solution, r.rank, r.nonsingular, r.guaranteed_nonsingular]
            for r in reports]
    _emit(args, {"instance_digest": ls.digest(), "reports": items, "summary": summary}, rows,
          ["z", "is_solution", "rank", "nonsingular", "guaranteed"])
    return 0


def _overrides(args, keys) -> dict:
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _run_experiment(args, runner, keys) -> int:
    ov = _overrides(args, keys)
    if args.threads is not None:
        ov["threads"] = args.threads
    cfg = ExperimentConfig.build(args.config, ov)
    rep = runner(cfg)
    if args.outdir:
        rep.write(args.outdir)
    name = "counts" if "counts" in rep.tables else next(iter(rep.tables), None)
    rows = header = None
    if name:
        header, rows = rep.tables[name]
    _emit(args, rep.to_dict(), rows, header)
    return 0 if rep.passed else 1


def cmd_asymptotic(args) -> int:
    return _run_experiment(args, run_asymptotic,
                           ["instance", "boxes", "primes", "h_max", "etas", "ds", "mc_samples",
                            "seed", "memory_budget", "real_density"])


def cmd_subconvexity(args) -> int:
    return _run_experiment(args, run_subconvexity, ["c", "k", "xs", "averaging_max_x", "seed"])


def cmd_check(args) -> int:
    """Structural checks on an instance; exit status reflects all of them."""
    ls = load_instance(args.instance)
    checks = {}
    if ls.strict:
        form = ls.form
        checks["line_identity_zero"] = line_identity_check(form, ls.y, [0] * ls.s)
    checks["count_engines_agree"] = (
        count_lines(ls, 1, method="naive").count == count_lines(ls, 1, method="mitm").count
    )
    try:
        sigma_p_via_series(ls, 2, 1)
        checks["series_identity_p2"] = True
    except AssertionError:
        checks["series_identity_p2"] = False
    checks["a_of_1"] = a_of_q(ls, 1) == 1
    subsums = vanishing_subsum_scan(ls.c, ls.y, k=ls.k) if ls.s <= 28 else None
    doc = {
        "instance_digest": ls.digest(),
        "strict": ls.strict,
        "checks": checks,
        "vanishing_subsums": None if subsums is None else len(subsums),
        "passed": all(checks.values()),
    }
    if args.suite:
        cfg = ExperimentConfig.build(args.config, {"instance": args.instance, "threads": args.threads})
        rep = run_density_suite(cfg)
        doc["suite"] = rep.to_dict()
        doc["passed"] = doc["passed"] and rep.passed
    _emit(args, doc, [[k, v] for k, v in checks.items()], ["check", "passed"])
    return 0 if doc["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diagline", description=__doc__)
    parser.add_argument("--version", action="version", version=f"diagline {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="emit the JSON record (default)")
    common.add_argument("--csv", action="store_true", help="emit CSV rows")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: DIAGLINE_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("count", parents=[common], help="exact line count in [-B, B]^s")
    p.add_argument("instance")
    p.add_argument("--box", "-B", type=int, required=True)
    p.add_argument("--method", choices=["naive", "mitm", "stream", "auto"], default="auto")
    p.add_argument("--memory-budget", type=int, default=MEMORY_BUDGET)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("arcs", parents=[common], help="classify random points into W1..W4")
    p.add_argument("instance", nargs="?")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--X", type=float, required=True)
    p.add_argument("--L", type=float, default=None)
    p.add_argument("--Q", type=float, default=None)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_arcs)

    p = sub.add_parser("densities", parents=[common], help="p-adic densities and the singular series")
    p.add_argument("instance")
    p.add_argument("--primes", type=_int_list, default=[2, 3, 5, 7])
    p.add_argument("--h-max", type=int, default=2)
    p.add_argument("--series-D", type=int, default=8)
    p.set_defaults(func=cmd_densities)

    p = sub.add_parser("realdensity", parents=[common], help="slab volume against singular integral")
    p.add_argument("instance")
    p.add_argument("--eta", type=_float_list, default=[0.2, 0.1, 0.05])
    p.add_argument("--mc-samples", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--D", type=_float_list, default=[4.0, 8.0, 16.0])
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--rel-tol", type=float, default=0.05)
    p.set_defaults(func=cmd_realdensity)

    p = sub.add_parser("singular", parents=[common], help="Jacobian rank of given solutions")
    p.add_argument("instance")
    p.add_argument("z", nargs="?", help="JSON file holding a list of integer vectors")
    p.add_argument("--box", "-B", type=int, default=None,
                   help="classify every solution in [-B, B]^s instead of a file")
    p.add_argument("--relaxed", action="store_true", help="skip base point verification")
    p.set_defaults(func=cmd_singular)

    for name, func, extra in (
        ("asymptotic", cmd_asymptotic, ["boxes", "primes", "h_max", "etas", "ds", "mc_samples"]),
        ("subconvexity", cmd_subconvexity, ["c", "xs"]),
    ):
        p = sub.add_parser(name, parents=[common], help=f"{name} experiment")
        p.add_argument("--config", default=None, help="key = value configuration file")
        p.add_argument("--instance", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--outdir", default=None, help="write JSON, CSV and plot script here")
        for key in extra:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)
        if name == "asymptotic":
            p.add_argument("--memory-budget", dest="memory_budget", type=int, default=None)
            p.add_argument("--no-real-density", dest="real_density", action="store_false", default=None)
        else:
            p.add_argument("--k", type=int, default=None)
            p.add_argument("--averaging-max-x", dest="averaging_max_x", type=int, default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("check", parents=[common], help="structural checks on an instance")
    p.add_argument("instance")
    p.add_argument("--suite", action="store_true", help="also run the density suite")
    p.add_argument("--config", default=None, help="key = value configuration for the suite")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is None:
        args.threads = default_threads()
    try:
        return args.func(args)
    except (InstanceError, BudgetError, FileNotFoundError) as exc:
        print(f"diagline: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
