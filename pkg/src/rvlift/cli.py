"""Command-line entry point: ``rvlift infer | generate | bench``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Sequence, TextIO

from .engine import EngineError, EngineParams, InferenceResult, brute_force_marginals, compare, run
from .model import (
    GeneratorConfig,
    ModelError,
    apply_evidence,
    generate_layered_bn,
    generator_metadata,
    load_evidence,
    load_indices,
    load_model,
    parse_int_list,
    save_model,
)
from .factor import is_shared
from .rvelim_graph import parse_minibucket_mode

BENCH_HEADER = [
    "seed",
    "path_length",
    "epsilon",
    "mean_wall_ms",
    "mults",
    "adds",
    "blocks",
    "intermediate_factors",
    "incorrect",
    "fraction_incorrect",
    "max_abs_error",
]


class CliError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def _path_length(text: str) -> float:
    if text.strip().lower() in ("inf", "infinity"):
        return math.inf
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"path length must be a non-negative integer or 'inf', got {text!r}") from None
    if k < 0:
        raise argparse.ArgumentTypeError("path length must be non-negative")
    return float(k)


def _non_negative(text: str) -> float:
    x = float(text)
    if not x >= 0:
        raise argparse.ArgumentTypeError("value must be non-negative")
    return x


def _minibuckets(text: str):
    try:
        return parse_minibucket_mode(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _list(text: str, item) -> list:
    return [item(t) for t in text.replace(",", " ").split()]


def params_from_args(args: argparse.Namespace) -> EngineParams:
    mode = args.minibuckets
    p = EngineParams(
        use_bisimulation=args.lift,
        path_length=args.path_length,
        epsilon=args.epsilon,
        use_minibuckets=mode is not None,
        arg_count_restriction=mode is None or mode[0] == "args",
        minibucket_restriction=math.inf if mode is None else mode[1],
    )
    try:
        p.validate()
    except ValueError as e:
        raise CliError("config", str(e)) from e
    return p


def format_marginals(result: InferenceResult) -> str:
    lines = []
    for q in sorted(result.marginals):
        m = result.marginals[q]
        lines.append(" ".join([str(q), str(len(m))] + [f"{x:.17g}" for x in m]))
    return "\n".join(lines) + "\n"


def _read(path: str, stage: str, what: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise CliError(stage, f"cannot read {what} file {path}: {e.strerror}") from e


def _write(path: str | None, text: str, default: TextIO) -> None:
    if path is None or path == "-":
        default.write(text)
    else:
        Path(path).write_text(text)


def cmd_infer(args: argparse.Namespace) -> int:
    params = params_from_args(args)
    try:
        model = load_model(_read(args.model, "parse", "model"))
        queries = load_indices(_read(args.queries, "parse", "query")) if args.queries else list(model.variables)
        evidence = load_evidence(_read(args.evidence, "parse", "evidence")) if args.evidence else {}
        order = None
        if args.order:
            order = load_indices(_read(args.order, "parse", "order"))
            if not args.order_first_to_last:
                order = order[::-1]
    except ModelError as e:
        raise CliError("parse", str(e)) from e
    result = run(model, queries, evidence, params, order)
    stats = dict(result.stats)
    stats["Z"] = result.Z
    if args.compare:
        if args.compare == "brute":
            try:
                ref = brute_force_marginals(apply_evidence(model, evidence, queries), queries)
            except ValueError as e:
                raise CliError("evaluate", str(e)) from e
        else:
            ref = run(model, queries, evidence, EngineParams(use_bisimulation=False), order).marginals
        rep = compare(result.marginals, ref)
        stats["compare"] = {
            "reference": args.compare,
            "incorrect": rep.incorrect,
            "total": rep.total,
            "fraction_incorrect": rep.fraction,
            "max_abs_error": rep.max_abs_error,
        }
    _write(args.output, format_marginals(result), sys.stdout)
    _write(args.stats, json.dumps(stats, sort_keys=True) + "\n", sys.stderr)
    return 0


def _config_from_args(args: argparse.Namespace, seed: int | None = None) -> GeneratorConfig:
    return GeneratorConfig(
        layer_sizes=tuple(parse_int_list(args.layers)),
        domain_size=args.domain,
        parents_per_child=args.parents,
        prior_share_period=args.period,
        max_parent_fanout=args.fanout,
        noise_std=args.noise,
        seed=args.seed if seed is None else seed,
    )


def structure_summary(model, cfg: GeneratorConfig) -> dict:
    """Distinct prior tables and, per deeper layer, how many CPTs share the modal table."""
    sizes = cfg.layer_sizes
    priors = model.factors[: sizes[0]]
    distinct: list = []
    for f in priors:
        if not any(is_shared(f, g) for g in distinct):
            distinct.append(f)
    shared = []
    start = sizes[0]
    for s in sizes[1:]:
        cpts = model.factors[start : start + s]
        shared.append(max(sum(is_shared(f, g) for g in cpts) for f in cpts))
        start += s
    return {
        "variables": model.num_variables,
        "factors": len(model.factors),
        "distinct_priors": len(distinct),
        "shared_cpts_per_layer": shared,
    }


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    try:
        model, queries = generate_layered_bn(cfg)
    except ModelError as e:
        raise CliError("generate", str(e)) from e
    Path(args.out_model).write_text(save_model(model))
    Path(args.out_queries).write_text(" ".join(map(str, queries)) + "\n")
    summary = structure_summary(model, cfg)
    summary["config"] = generator_metadata(cfg)
    print(json.dumps(summary, sort_keys=True))
    return 0


def bench_rows(model, queries, path_lengths: Sequence[float], epsilons: Sequence[float],
               repeats: int, seed: int = 0) -> list[dict]:
    """Sweep path length (with epsilon 0) then epsilon (with exact skeleton).

    Each row averages wall time over ``repeats`` runs; errors are measured
    against the exact lifted result.
    """
    configs = [EngineParams(path_length=k) for k in path_lengths]
    configs += [EngineParams(epsilon=e) for e in epsilons]
    if not configs:
        return []
    ref = run(model, queries, params=EngineParams()).marginals
    rows = []
    for p in configs:
        times = []
        for _ in range(max(1, repeats)):
            res = run(model, queries, params=p)
            times.append(res.stats["wall_ms"])
        rep = compare(res.marginals, ref)
        rows.append({
            "seed": seed,
            "path_length": "inf" if math.isinf(p.path_length) else int(p.path_length),
            "epsilon": p.epsilon,
            "mean_wall_ms": sum(times) / len(times),
            "mults": res.stats["mults"],
            "adds": res.stats["adds"],
            "blocks": res.stats["blocks"],
            "intermediate_factors": res.stats["intermediate_factors"],
            "incorrect": rep.incorrect,
            "fraction_incorrect": rep.fraction,
            "max_abs_error": rep.max_abs_error,
        })
    return rows


def cmd_bench(args: argparse.Namespace) -> int:
    pls = _list(args.path_lengths, _path_length)
    eps = _list(args.epsilons, _non_negative)
    out = sys.stdout if args.output in (None, "-") else open(args.output, "w", newline="")
    try:
        w = csv.DictWriter(out, fieldnames=BENCH_HEADER, lineterminator="\n")
        w.writeheader()
        if args.model:
            model = load_model(_read(args.model, "parse", "model"))
            queries = load_indices(_read(args.queries, "parse", "query")) if args.queries else list(model.variables)
            w.writerows(bench_rows(model, queries, pls, eps, args.repeats))
        else:
            for seed in _list(args.seeds, int):
                try:
                    model, queries = generate_layered_bn(_config_from_args(args, seed))
                except ModelError as e:
                    raise CliError("generate", str(e)) from e
                w.writerows(bench_rows(model, queries, pls, eps, args.repeats, seed))
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _generator_flags(p: argparse.ArgumentParser, layers: str) -> None:
    d = GeneratorConfig()
    p.add_argument("--layers", default=layers, help="comma-separated layer sizes")
    p.add_argument("--domain", type=int, default=d.domain_size)
    p.add_argument("--parents", type=int, default=d.parents_per_child)
    p.add_argument("--period", type=int, default=d.prior_share_period, help="prior sharing period")
    p.add_argument("--fanout", type=int, default=d.max_parent_fanout, help="maximum children per parent")
    p.add_argument("--noise", type=_non_negative, default=d.noise_std, help="Gaussian noise std")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rvlift", description="Lifted variable elimination via bisimulation.")
    sub = ap.add_subparsers(dest="command", required=True)

    inf = sub.add_parser("infer", help="compute marginals of query variables")
    inf.add_argument("--model", required=True)
    inf.add_argument("--queries", help="query index file (default: all unobserved variables)")
    inf.add_argument("--evidence")
    inf.add_argument("--order", help="order file; the rightmost variable is eliminated first")
    inf.add_argument("--order-first-to-last", action="store_true",
                     help="read the order file as first-eliminated first")
    inf.add_argument("--lift", dest="lift", action="store_true", default=True)
    inf.add_argument("--no-lift", dest="lift", action="store_false")
    inf.add_argument("--path-length", type=_path_length, default=math.inf)
    inf.add_argument("--epsilon", type=_non_negative, default=0.0)
    inf.add_argument("--minibuckets", type=_minibuckets, default=None, help="off | args:<i> | merge:<m>")
    inf.add_argument("--compare", choices=("brute", "ground"))
    inf.add_argument("--output", help="marginals file (default stdout)")
    inf.add_argument("--stats", help="stats JSON file (default stderr)")
    inf.set_defaults(func=cmd_infer)

    gen = sub.add_parser("generate", help="write a layered Bayesian network")
    _generator_flags(gen, "1000,500,250")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out-model", required=True)
    gen.add_argument("--out-queries", required=True)
    gen.set_defaults(func=cmd_generate)

    b = sub.add_parser("bench", help="sweep path length and epsilon, emit CSV")
    _generator_flags(b, "100,50,25")
    b.set_defaults(domain=8, fanout=1)
    b.add_argument("--seeds", default="0", help="one generated model per seed")
    b.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    b.add_argument("--model", help="benchmark this model file instead of generated ones")
    b.add_argument("--queries")
    b.add_argument("--path-lengths", default="0,1,2,3,inf")
    b.add_argument("--epsilons", default="0,0.01,0.1")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--output", help="CSV file (default stdout)")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, EngineError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ModelError as e:
        print(f"error: [parse] {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: [io] {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
