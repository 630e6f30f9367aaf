"""Operator command line: policy generation, lookup-table builds, the
survey server, synthetic experiments, session analysis, and selftests."""

from __future__ import annotations

import argparse
import json
import secrets
import sys

import numpy as np

from .analysis import (
    COUNT_KEYS,
    STRICT_THRESHOLDS,
    chi_square_uniform_two,
    clean_responses,
    load_sessions_jsonl,
    run_comparison_experiment,
    summarize_final_query,
    two_sample_t,
    write_experiment_report,
)
from .engine import AlternativeSet, LookupTable, NoiseParams, build_lookup_table
from .errors import (
    DataValidationError,
    InfeasibleHistoryError,
    NumericalFailure,
    PrefElicitError,
)
from .policysim import ScenarioConfig, build_policy_alternatives, default_scenario, load_scenario

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = secrets.randbits(32)
    print(f"seed: {seed} (chosen from entropy; pass --seed to reproduce)", file=sys.stderr)
    return seed


def _emit(args, payload: dict, text_lines: list[str]) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in text_lines:
            print(line)


def cmd_policies_generate(args) -> int:
    seed = _resolve_seed(args)
    config = ScenarioConfig(
        beds=args.beds,
        waiting_death_prob=args.waiting_death_prob,
        mean_los_days=args.mean_los_days,
    )
    if args.arrivals or args.ages:
        if not (args.arrivals and args.ages):
            raise DataValidationError("--arrivals and --ages must be given together")
        scenario = load_scenario(args.arrivals, args.ages, config)
    else:
        scenario = default_scenario(config)
    alternatives, _, _ = build_policy_alternatives(
        count=args.count, seed=seed, scenario=scenario
    )
    alternatives.save(args.out)
    payload = {
        "v": 1,
        "out": args.out,
        "seed": seed,
        "count": len(alternatives),
        "dimension": alternatives.dimension,
        "beds": scenario.beds,
    }
    _emit(
        args,
        payload,
        [
            f"wrote {args.out}: {len(alternatives)} policies x "
            f"{alternatives.dimension} features (beds={scenario.beds}, seed={seed})"
        ],
    )
    return EXIT_OK


def cmd_lookup_build(args) -> int:
    alternatives = AlternativeSet.load(args.alternatives)
    noise = NoiseParams(sigma=args.sigma, p=args.p)
    depth = args.depth if args.depth is not None else args.k

    progress = None
    if args.progress:
        total_expected = (3**depth - 1) // 2

        def progress(done, total):
            if done % 10 == 0 or done == total_expected:
                print(f"  {done}/{total_expected} sequences solved", file=sys.stderr)

    table = build_lookup_table(
        alternatives, args.k, noise, depth=depth, progress=progress
    )
    table.save(args.out)
    payload = {
        "v": 1,
        "out": args.out,
        "entries": len(table.entries),
        "depth": depth,
        "k": args.k,
    }
    _emit(
        args,
        payload,
        [f"wrote {args.out}: {len(table.entries)} entries (depth {depth} of K={args.k})"],
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import ServiceConfig, SurveyService, create_app

    config = ServiceConfig.from_json(args.config)
    service = SurveyService(config)
    app = create_app(service)
    host, _, port = config.bind.rpartition(":")
    if args.check:
        _emit(
            args,
            {"v": 1, "ok": True, "bind": config.bind, "sessions": len(service.sessions)},
            [f"config ok; would bind {config.bind}; {len(service.sessions)} sessions restored"],
        )
        return EXIT_OK
    import uvicorn

    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return EXIT_OK


def cmd_experiment_run(args) -> int:
    seed = _resolve_seed(args)
    if args.alternatives:
        alternatives = AlternativeSet.load(args.alternatives)
    else:
        rng = np.random.default_rng(seed)
        alternatives = AlternativeSet(
            rng.uniform(0.0, 1.0, size=(args.num_alternatives, args.num_features))
        )
    noise = NoiseParams(sigma=args.sigma, p=args.p)
    summary = run_comparison_experiment(
        args.agents,
        alternatives,
        args.k,
        noise,
        seed=seed,
        response_sigma=args.agent_sigma,
        indifference_delta=args.delta,
    )
    write_experiment_report(summary, args.out_json, args.out_csv)
    payload = {
        "v": 1,
        "seed": seed,
        "n": summary.n,
        "counts": summary.counts,
        "mean_z_robust": summary.mean_z_robust,
        "mean_z_random": summary.mean_z_random,
        "out_json": args.out_json,
        "out_csv": args.out_csv,
    }
    _emit(
        args,
        payload,
        [
            f"{summary.n} agents (seed {seed}): mean worst-case "
            f"{summary.mean_z_robust:.4f} adaptive vs {summary.mean_z_random:.4f} random",
            f"final-preference counts: {summary.counts}",
            f"wrote {args.out_json} and {args.out_csv}",
        ],
    )
    return EXIT_OK


def cmd_analyze(args) -> int:
    sessions = load_sessions_jsonl(args.sessions)
    completed = [s for s in sessions if s.status == "completed"]
    thresholds = STRICT_THRESHOLDS if args.strict else None
    report = clean_responses(completed, thresholds=thresholds)
    kept_ids = set(report.kept)
    kept = [s for s in completed if s.session_id in kept_ids]
    summary = summarize_final_query(kept)

    rule_counts: dict[str, int] = {}
    for _, rule in report.removed:
        rule_counts[rule] = rule_counts.get(rule, 0) + 1

    lines = [
        f"sessions: {len(sessions)} total, {len(completed)} completed, "
        f"{len(report.kept)} kept after cleaning",
    ]
    if rule_counts:
        lines.append(
            "removed: "
            + ", ".join(f"{rule}={n}" for rule, n in sorted(rule_counts.items()))
        )
    if report.errors:
        lines.append(f"malformed records: {len(report.errors)}")
    lines.append(
        "final query counts: robust={prefers_robust} random={prefers_random} "
        "indifferent-different={indifferent_different} "
        "indifferent-same={indifferent_same}".format(**summary.counts)
    )

    payload = {
        "v": 1,
        "sessions": len(sessions),
        "completed": len(completed),
        "kept": len(report.kept),
        "removed": rule_counts,
        "errors": [list(e) for e in report.errors],
        "counts": summary.counts,
        "intervals": {k: list(v) for k, v in summary.intervals.items()},
    }

    robust_count = summary.counts["prefers_robust"]
    random_count = summary.counts["prefers_random"]
    strict_total = robust_count + random_count
    if strict_total > 0:
        chi2, df, p = chi_square_uniform_two((robust_count, random_count))
        margin = (robust_count - random_count) / strict_total
        lines.append(
            f"strict preferences (n={strict_total}): margin {margin:+.1%}, "
            f"chi-square({df}) = {chi2:.2f}, p = {p:.4f}"
        )
        payload.update(
            {"strict_n": strict_total, "margin": margin, "chi_square": chi2, "chi_square_p": p}
        )

    z_robust = [s.final.z_robust for s in kept if s.final and s.final.z_robust is not None]
    z_random = [s.final.z_random for s in kept if s.final and s.final.z_random is not None]
    if len(z_robust) >= 2 and len(z_robust) == len(z_random):
        t, df_t, p_t = two_sample_t(z_robust, z_random)
        lines.append(
            f"worst-case utility: mean {np.mean(z_robust):.4f} adaptive vs "
            f"{np.mean(z_random):.4f} random; t({df_t}) = {t:.2f}, p = {p_t:.2g}"
        )
        payload.update(
            {
                "mean_z_robust": float(np.mean(z_robust)),
                "mean_z_random": float(np.mean(z_random)),
                "t": t,
                "t_df": df_t,
                "t_p": p_t,
            }
        )

    _emit(args, payload, lines)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest(
        lp_instances=args.lp_instances, query_instances=args.query_instances
    )
    payload = {
        "v": 1,
        "results": [
            {"name": r.name, "passed": r.passed, "detail": r.detail} for r in results
        ],
    }
    lines = [
        f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}" for r in results
    ]
    _emit(args, payload, lines)
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prefelicit",
        description="Robust pairwise preference elicitation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    policies = sub.add_parser("policies", help="policy set operations")
    policies_sub = policies.add_subparsers(dest="subcommand", required=True)
    generate = policies_sub.add_parser(
        "generate", help="simulate scoring policies and write the alternative set"
    )
    generate.add_argument("--count", type=int, default=25)
    generate.add_argument("--seed", type=int, default=None)
    generate.add_argument("--out", default="alternatives.json")
    generate.add_argument("--arrivals", default=None, help="arrivals CSV (date,count)")
    generate.add_argument(
        "--ages", default=None, help="age table CSV (bin,proportion,survival_rate)"
    )
    generate.add_argument("--beds", type=int, default=None)
    generate.add_argument("--waiting-death-prob", type=float, default=0.10)
    generate.add_argument("--mean-los-days", type=float, default=7.0)
    generate.add_argument("--json", action="store_true")
    generate.set_defaults(func=cmd_policies_generate)

    lookup = sub.add_parser("lookup", help="lookup table operations")
    lookup_sub = lookup.add_subparsers(dest="subcommand", required=True)
    build = lookup_sub.add_parser("build", help="precompute the adaptive-query tree")
    build.add_argument("--alternatives", required=True)
    build.add_argument("--k", type=int, required=True, help="query budget per arm")
    build.add_argument("--sigma", type=float, default=0.1)
    build.add_argument("--p", type=float, default=0.9)
    build.add_argument("--depth", type=int, default=None)
    build.add_argument("--out", default="lookup.json")
    build.add_argument("--progress", action="store_true")
    build.add_argument("--json", action="store_true")
    build.set_defaults(func=cmd_lookup_build)

    serve = sub.add_parser("serve", help="run the survey service")
    serve.add_argument("--config", required=True)
    serve.add_argument(
        "--check", action="store_true", help="validate config and exit without binding"
    )
    serve.add_argument("--json", action="store_true")
    serve.set_defaults(func=cmd_serve)

    experiment = sub.add_parser("experiment", help="synthetic-agent experiments")
    experiment_sub = experiment.add_subparsers(dest="subcommand", required=True)
    run = experiment_sub.add_parser("run", help="compare adaptive vs random elicitation")
    run.add_argument("--agents", type=int, default=100)
    run.add_argument("--k", type=int, default=5)
    run.add_argument("--alternatives", default=None)
    run.add_argument("--num-alternatives", type=int, default=10)
    run.add_argument("--num-features", type=int, default=8)
    run.add_argument("--sigma", type=float, default=0.1)
    run.add_argument("--p", type=float, default=0.9)
    run.add_argument("--agent-sigma", type=float, default=0.05)
    run.add_argument("--delta", type=float, default=0.02)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out-json", default="experiment.json")
    run.add_argument("--out-csv", default="experiment.csv")
    run.add_argument("--json", action="store_true")
    run.set_defaults(func=cmd_experiment_run)

    analyze = sub.add_parser("analyze", help="clean and summarize exported sessions")
    analyze.add_argument("--sessions", required=True, help="JSONL export path")
    analyze.add_argument(
        "--strict", action="store_true", help="use the 30s/5s attention thresholds"
    )
    analyze.add_argument("--json", action="store_true")
    analyze.set_defaults(func=cmd_analyze)

    selftest = sub.add_parser("selftest", help="run the brute-force oracle suites")
    selftest.add_argument("--lp-instances", type=int, default=40)
    selftest.add_argument("--query-instances", type=int, default=10)
    selftest.add_argument("--json", action="store_true")
    selftest.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataValidationError, InfeasibleHistoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PrefElicitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
