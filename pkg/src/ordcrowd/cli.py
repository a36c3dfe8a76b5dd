"""
Command-line driver: ``infer``, ``evaluate``, ``spam-bench`` and ``synth``.

Exit status is 0 on success, 1 on a usage error and 2 when a command fails
at run time (bad input file, failed fit, ...).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import methods
from .dataset import (
    CategoryMap,
    OrdinalScale,
    build_category_map,
    load_ratings,
    load_truth,
    read_estimates,
    read_id_map,
    write_id_map,
    write_ratings,
)
from .errors import OrdCrowdError
from .evaluation import (
    REPORT_COLUMNS,
    SynthConfig,
    evaluate,
    format_report_row,
    spam_sweep,
    synth_generate,
)
from .fitting import FitConfig

log = logging.getLogger("ordcrowd")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; usage errors here exit with 1
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _ensure_parent(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path, payload):
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_levels(text: str) -> list:
    """``"0..9"`` (inclusive range) or a comma list such as ``"0,3,6"``."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            levels = list(range(int(lo), int(hi) + 1))
        else:
            levels = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from None
    if not levels or min(levels) < 0 or max(levels) > 9:
        raise argparse.ArgumentTypeError("spam levels must lie in 0..9")
    return levels


def _method_list(text: str) -> list:
    names = [t.strip() for t in text.split(",") if t.strip()]
    bad = [n for n in names if n not in methods.available()]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown method(s) {', '.join(bad) or '(none)'}; choose from {', '.join(methods.available())}")
    return names


def _fit_config(args) -> FitConfig:
    return FitConfig(args.restarts, args.max_iters, args.tol, args.seed)


def _add_fit_flags(p):
    p.add_argument("--scale", type=int, default=5, metavar="K",
                   help="number of rating levels; values 1..K, thresholds k+0.5 (default 5)")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--tol", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--categories", metavar="FILE", help="instance<TAB>category file for odm")
    g.add_argument("--granularity", choices=("single", "per-instance"), default="single")
    p.add_argument("--no-ordinal-link", action="store_true", help="odm: treat ratings as reals")
    p.add_argument("--no-spam-mixture", action="store_true", help="odm: drop the spam component")


def _odm_flags(args) -> dict:
    return {"use_ordinal_link": not args.no_ordinal_link,
            "use_spam_mixture": not args.no_spam_mixture}


def sidecar_path(out) -> Path:
    out = Path(out)
    return out.with_suffix(".json") if out.suffix and out.suffix != ".json" else Path(str(out) + ".json")


def cmd_infer(args) -> int:
    scale = OrdinalScale.default(args.scale)
    table = load_ratings(args.ratings, scale)
    cats = build_category_map(table, args.categories or args.granularity)
    est = methods.run_method(args.method, table, scale, cats, _fit_config(args), **_odm_flags(args))
    _ensure_parent(args.out)
    write_id_map(args.out, table.instance_ids, [repr(float(v)) for v in est.z_hat],
                 header=("instance", "z_hat"))
    meta = {"method": args.method, "ratings": str(args.ratings), "n_instances": table.M,
            "n_annotators": table.N, "n_ratings": len(table), "scale": args.scale,
            "seed": args.seed, "restarts": args.restarts, "max_iters": args.max_iters,
            "tol": args.tol, **est.details}
    side = args.sidecar or sidecar_path(args.out)
    _write_json(side, meta)
    log.info("wrote %s and %s", args.out, side)
    return EXIT_OK


def _queries_for(path, ids, covered) -> CategoryMap:
    """Query map over ``ids``; only covered instances must appear in the file."""
    sub = [ids[i] for i in np.flatnonzero(covered)]
    qmap = read_id_map(path, sub)
    full = np.zeros(len(ids), dtype=np.intp)
    full[np.flatnonzero(covered)] = qmap.category
    return CategoryMap(full, qmap.category_ids)


def cmd_evaluate(args) -> int:
    ids, z_hat = read_estimates(args.estimates)
    truth = load_truth(args.truth, ids)
    if not truth.covered.any():
        raise OrdCrowdError("truth file covers none of the estimated instances")
    queries = _queries_for(args.queries, ids, truth.covered) if args.queries else None
    report = evaluate(truth, z_hat, queries)
    label = args.method or Path(args.estimates).stem
    payload = {"method": label, "mse": report.mse, "correlation": report.correlation,
               "ndcg": report.ndcg, "covered": report.covered, "n_estimates": len(ids)}
    if queries is not None:
        payload["per_query_ndcg"] = {queries.category_ids[q]: v
                                     for q, v in report.per_query_ndcg.items()}
    if args.json:
        _write_json(args.json, payload)
    else:
        print(json.dumps(_jsonable(payload), sort_keys=True))
    row = format_report_row(label, args.spam_level, report)
    if args.tsv:
        with open(_ensure_parent(args.tsv), "w", encoding="utf-8") as fh:
            fh.write("\t".join(REPORT_COLUMNS) + "\n" + row + "\n")
    else:
        print(row)
    return EXIT_OK


def cmd_spam_bench(args) -> int:
    scale = OrdinalScale.default(args.scale)
    table = load_ratings(args.ratings, scale)
    truth = load_truth(args.truth, table)
    queries = _queries_for(args.queries, table.instance_ids, truth.covered) if args.queries else None
    config = _fit_config(args)
    granularity = args.categories or args.granularity
    estimators = {name: methods.estimator(name, scale, config, granularity, **_odm_flags(args))
                  for name in args.methods}
    rows = spam_sweep(table, truth, estimators, args.levels, queries, seed=args.seed)
    lines = ["\t".join(REPORT_COLUMNS)] + [format_report_row(*r) for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        _ensure_parent(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    levels = ((args.eps_good, 1 - args.spam_fraction), (args.eps_spam, args.spam_fraction))
    cfg = SynthConfig(M=args.m, N=args.n, K=args.k, C=args.c,
                      ratings_per_instance=args.ratings_per_instance,
                      epsilon_levels=levels, seed=args.seed)
    table, truth, cats, params = synth_generate(cfg)
    prefix = args.out_prefix
    _ensure_parent(prefix)
    write_ratings(table, f"{prefix}.ratings.tsv")
    write_id_map(f"{prefix}.truth.tsv", table.instance_ids,
                 [repr(float(v)) for v in truth.values], header=("instance", "z"))
    write_id_map(f"{prefix}.categories.tsv", table.instance_ids,
                 [cats.category_ids[c] for c in cats.category], header=("instance", "category"))
    payload = {"config": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
               "annotator_ids": table.annotator_ids, "instance_ids": table.instance_ids,
               **params.as_dict()}
    _write_json(f"{prefix}.params.json", payload)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ordcrowd", description="Ordinal crowd-label aggregation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("infer", help="estimate ground truth from a ratings file")
    p.add_argument("--ratings", required=True)
    p.add_argument("--method", required=True, choices=methods.available())
    p.add_argument("--out", required=True, help="estimates TSV (instance, z_hat)")
    p.add_argument("--sidecar", help="JSON details path (default: --out with .json suffix)")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="score estimates against ground truth")
    p.add_argument("--estimates", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--queries", help="instance<TAB>query file for NDCG")
    p.add_argument("--method", help="label for the TSV row (default: estimates file stem)")
    p.add_argument("--spam-level", default="0")
    p.add_argument("--json", help="write the metrics JSON here instead of stdout")
    p.add_argument("--tsv", help="write the TSV row (with header) here instead of stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("spam-bench", help="sweep fake uniform ratings per instance")
    p.add_argument("--ratings", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--queries")
    p.add_argument("--methods", required=True, type=_method_list, help="comma-separated")
    p.add_argument("--levels", type=_parse_levels, default=list(range(10)),
                   help="'0..9' or '0,3,6'")
    p.add_argument("--out", help="TSV path (default stdout)")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_spam_bench)

    p = sub.add_parser("synth", help="sample a synthetic dataset from the mixture model")
    p.add_argument("--m", type=int, default=500)
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--c", type=int, default=1)
    p.add_argument("--ratings-per-instance", type=int, default=4)
    p.add_argument("--eps-good", type=float, default=0.95)
    p.add_argument("--eps-spam", type=float, default=0.05)
    p.add_argument("--spam-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OrdCrowdError, OSError, ValueError, KeyError) as exc:
        print(f"ordcrowd {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
