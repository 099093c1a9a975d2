"""Command-line entry point tying the modules into reproducible workflows.

Subcommands
-----------
``gen-pop``
    Generate a population from a preset or a spec file; writes the
    population CSV and a summary JSON including the realized between-area
    variation ratio.
``run-design``
    Run a single list-sequential pass of one design over a scenario's
    population; writes the outcome and an estimate report.
``verify``
    Exhaustively enumerate small fixtures and check every identity the
    estimators rely on (unbiasedness, closed-form variances, variance
    estimator means, indicator moments). Exit code 3 on any breach;
    the report is machine-readable JSON.
``simulate``
    Run one Monte Carlo scenario; writes per-replicate rows (checkpoint),
    a summary JSON and a tidy ratio CSV. Exit code 3 when a design's
    error fraction exceeds the scenario budget.
``report``
    Merge one or more summary JSONs into a tidy ratio table.

Every subcommand is deterministic given its inputs: reruns produce
byte-identical files. The default output directory is the value of the
``POSA_OUT_DIR`` environment variable, falling back to the current
directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace
from math import fsum
from pathlib import Path

import numpy as np

from .engine import (
    UpdatingRule,
    area_threshold_rule,
    cposa_rule,
    poisson_rule,
    posa_rule,
    run_list_sequential,
    save_outcome,
    save_trace_csv,
)
from .estimation import (
    cposa_exact_variance,
    cposa_variance_estimate,
    estimate_report,
    poisson_exact_variance,
    posa_exact_variance,
    posa_marginals,
    variance_estimate,
)
from .exceptions import SamplingDesignError, ScenarioError
from .oracle import (
    case_draw_prob_floor,
    enumerate_design,
    oracle_estimator_law,
    oracle_moments,
    path_outcome,
)
from .population import (
    ClusterSpec,
    generate_clustered_population,
    save_population,
    summarize,
)
from .simulation import (
    MetricSet,
    ScenarioConfig,
    load_scenario_config,
    list_presets,
    population_preset,
    ratio_report,
    run_monte_carlo,
    scenario_preset,
    write_ratio_csv,
    write_summary_json,
)

__all__ = ["CommandSpec", "main"]

OUT_DIR_ENV = "POSA_OUT_DIR"

# exit codes: 0 success, 2 argument errors (argparse), 3 domain failure
EXIT_FAILURE = 3


@dataclass(frozen=True)
class CommandSpec:
    """Parsed invocation: one subcommand plus the shared plumbing flags."""

    subcommand: str
    config: "str | None" = None
    preset: "str | None" = None
    out: "str | None" = None
    seed: "int | None" = None
    jobs: int = 1
    quiet: bool = False


def _out_dir(spec: CommandSpec) -> Path:
    if spec.out is not None:
        return Path(spec.out)
    return Path(os.environ.get(OUT_DIR_ENV, "."))


def _say(spec: CommandSpec, message: str) -> None:
    if not spec.quiet:
        print(message)


# ===== gen-pop =====

def _population_spec_dict(spec: CommandSpec) -> tuple:
    """Resolve (name, ClusterSpec kwargs) from --preset or --config."""
    if spec.preset is not None:
        return spec.preset, dict(population_preset(spec.preset))
    if spec.config is not None:
        p = Path(spec.config)
        if p.suffix.lower() == ".json":
            doc = json.loads(p.read_text(encoding="utf-8"))
        elif p.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib  # type: ignore[no-redef]
            with open(p, "rb") as fh:
                doc = tomllib.load(fh)
        else:
            raise ScenarioError("population spec must be .toml or .json")
        return p.stem, dict(doc)
    raise ScenarioError("gen-pop needs --preset or --config")


def cmd_gen_pop(spec: CommandSpec) -> int:
    name, d = _population_spec_dict(spec)
    if spec.seed is not None:
        d["seed"] = spec.seed
    if "cluster_anchors" in d and d["cluster_anchors"] is not None:
        d["cluster_anchors"] = tuple(tuple(a) for a in d["cluster_anchors"])
    pop = generate_clustered_population(ClusterSpec(**d))
    out = _out_dir(spec)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.population.csv"
    json_path = out / f"{name}.summary.json"
    save_population(pop, csv_path)
    summary = summarize(pop).to_dict()
    summary["spec"] = {k: (list(map(list, v)) if k == "cluster_anchors" and v else v)
                       for k, v in d.items()}
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    k = summary["variation_ratio"]
    _say(spec, f"{name}: N={pop.size} M={pop.area_count} "
               f"cases={summary['case_count']} "
               f"k={'undefined' if k is None else f'{k:.3f}'} -> {csv_path}")
    return 0


# ===== run-design =====

def _scenario_from_flags(spec: CommandSpec) -> ScenarioConfig:
    if spec.preset is not None:
        return scenario_preset(spec.preset)
    if spec.config is not None:
        return load_scenario_config(spec.config)
    raise ScenarioError("need --preset or --config")


def cmd_run_design(spec: CommandSpec, design: str, trace: bool) -> int:
    from .simulation import _build_population, _make_rule, _prepare_inputs

    config = _scenario_from_flags(spec)
    pop = _build_population(config)
    inp = _prepare_inputs(config, pop)
    count = inp.y.shape[0]
    if design == "poisson":
        rule = poisson_rule()
        target = inp.m
    else:
        rule = _make_rule(inp, design)
        target = inp.m if design == "posa" else inp.n_min
    probs = np.full(count, target / count)
    seed = spec.seed if spec.seed is not None else config.base_seed
    outcome = run_list_sequential(inp.y, probs, rule, rng_seed=seed, trace=trace)
    report = estimate_report(outcome, population_size=inp.population_size)

    out = _out_dir(spec)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{config.name}.{design}.seed{seed}"
    save_outcome(outcome, out / f"{stem}.outcome.json")
    with open(out / f"{stem}.report.json", "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    if trace:
        save_trace_csv(outcome, out / f"{stem}.trace.csv")
    v = report.variance_estimate
    _say(spec, f"{config.name} {design}: selected {outcome.realized_n} of "
               f"{count}, estimate {report.point:.6g}"
               + (f", variance estimate {v:.6g}" if v is not None else ""))
    return 0


# ===== verify =====

# Fixtures are tiny by design: exhaustive enumeration doubles per unit.
# Values are in visit order; probabilities chosen to exercise mixed cases,
# adjacent cases, and forced chains while keeping every case's draw
# probability strictly positive on every path (checked where it matters).
_POISSON_FIXTURES = [
    ((1, 0, 1, 1), (0.5, 0.3, 0.6, 0.4)),
    ((1, 1, 0), (2 / 3, 2 / 3, 2 / 3)),
    ((0, 0, 0, 0), (0.25, 0.5, 0.75, 0.9)),
]
_POSA_FIXTURES = [
    ((1, 0, 1), (0.4, 0.7, 0.3)),
    ((1, 1, 0), (0.5, 0.5, 0.5)),
    ((0, 1, 0, 0, 1), (0.4, 0.4, 0.4, 0.4, 0.4)),
    ((1, 0, 1, 1, 0, 1), (0.3, 0.7, 0.2, 0.9, 0.5, 0.4)),
]
# (y, min_sample_size, uniform initial probability)
_CPOSA_FIXTURES = [
    ((1, 0, 0, 0, 0), 1, 0.2),
    ((1, 1, 0, 0, 0), 1, 0.2),
    ((0, 0, 0, 1, 0), 4, 0.8),
    ((0, 1, 0, 0), 2, 0.5),
    ((0, 0, 0, 0, 0, 0), 3, 0.5),
]

_TOL_MOMENT = 1e-12
_TOL_VARIANCE = 1e-10


def _check(id_: str, design: str, deviations, tolerance: float,
           expects_divergence: bool = False) -> dict:
    deviations = list(deviations)
    worst = max((abs(d) for d in deviations), default=0.0)
    passed = worst > tolerance if expects_divergence else worst <= tolerance
    return {
        "id": id_,
        "design": design,
        "fixtures": len(deviations),
        "max_abs_deviation": worst,
        "tolerance": tolerance,
        "expects_divergence": expects_divergence,
        "passed": bool(passed),
    }


def _mean_variance_estimate(dist) -> float:
    """Expectation of the per-run variance estimator over all paths."""
    total = []
    for p in range(dist.n_paths):
        out = path_outcome(dist, p)
        v = variance_estimate(out)
        total.append(v * dist.probs[p])
    return fsum(total)


def _verify_poisson(max_units: int) -> list:
    dev_mean, dev_var, dev_vest = [], [], []
    for y, probs in _POISSON_FIXTURES:
        if len(y) > max_units:
            continue
        dist = enumerate_design(y, probs, poisson_rule())
        law = oracle_estimator_law(dist)
        dev_mean.append(law.expectation - fsum(y) / len(y))
        exact = poisson_exact_variance(np.asarray(y, float), probs)
        dev_var.append(law.variance - exact)
        dev_vest.append(_mean_variance_estimate(dist) - exact)
    return [
        _check("estimator-mean-equals-population-mean", "poisson", dev_mean, _TOL_MOMENT),
        _check("closed-form-variance-matches-enumeration", "poisson", dev_var, _TOL_VARIANCE),
        _check("variance-estimator-mean-matches-variance", "poisson", dev_vest, _TOL_VARIANCE),
    ]


def _verify_posa(max_units: int, rule_factory=posa_rule) -> list:
    dev_mean, dev_var, dev_vest, dev_marg, dev_joint = [], [], [], [], []
    for y, probs in _POSA_FIXTURES:
        if len(y) > max_units:
            continue
        y_arr = np.asarray(y, float)
        probs_arr = np.asarray(probs, float)
        dist = enumerate_design(y, probs, rule_factory())
        law = oracle_estimator_law(dist)
        dev_mean.append(law.expectation - fsum(y) / len(y))
        exact = posa_exact_variance(y_arr, probs_arr)
        dev_var.append(law.variance - exact)
        dev_vest.append(_mean_variance_estimate(dist) - exact)
        mom = oracle_moments(dist)
        p = posa_marginals(y_arr, probs_arr)[1]
        dev_marg.extend((p - mom.e_s).tolist())
        # selection probability of a consecutive pair: the earlier unit's
        # marginal times the forced-or-retained successor probability
        n = len(y)
        for i in range(n - 1):
            closed = p[i] * (y_arr[i] + probs_arr[i + 1] * (1.0 - y_arr[i]))
            dev_joint.append(closed - mom.joint[i, i + 1])
    return [
        _check("estimator-mean-equals-population-mean", "posa", dev_mean, _TOL_MOMENT),
        _check("closed-form-variance-matches-enumeration", "posa", dev_var, _TOL_VARIANCE),
        _check("variance-estimator-mean-matches-variance", "posa", dev_vest, _TOL_VARIANCE),
        _check("closed-form-marginals-match-enumeration", "posa", dev_marg, _TOL_MOMENT),
        _check("adjacent-pair-probability-matches-enumeration", "posa", dev_joint, _TOL_MOMENT),
    ]


def _verify_cposa(max_units: int) -> list:
    dev_mean, dev_var, dev_vest, dev_unit, floor_gaps, n_gaps = [], [], [], [], [], []
    for y, m, pi in _CPOSA_FIXTURES:
        if len(y) > max_units:
            continue
        n = len(y)
        y_arr = np.asarray(y, float)
        probs = np.full(n, pi)
        dist = enumerate_design(y, probs, cposa_rule(m))
        floor = case_draw_prob_floor(dist)
        floor_gaps.append(1.0 if floor <= 0 else 0.0)
        law = oracle_estimator_law(dist)
        dev_mean.append(law.expectation - fsum(y) / n)
        exact = cposa_exact_variance(y_arr, probs, m)
        dev_var.append(law.variance - exact)
        dev_vest.append(_mean_variance_estimate(dist) - exact)
        # every case unit's weighted indicator has unit mean (selected paths
        # weighted by the probability in force at the unit's own draw); a
        # zero-value unit may lose all its probability after the minimum is
        # met, which never enters the estimator, so cases are the ones that
        # carry unbiasedness
        for i in np.flatnonzero(y_arr):
            terms = [
                dist.probs[p] * dist.smi[p, i] / dist.draw_probs[p, i]
                for p in range(dist.n_paths)
                if dist.smi[p, i]
            ]
            dev_unit.append(fsum(terms) - 1.0)
        realized = dist.smi.sum(axis=1)
        n_gaps.append(float((realized < m).sum()))
    return [
        _check("case-draw-probability-stays-positive", "cposa", floor_gaps, 0.0),
        _check("estimator-mean-equals-population-mean", "cposa", dev_mean, _TOL_MOMENT),
        _check("path-variance-matches-enumeration", "cposa", dev_var, _TOL_VARIANCE),
        _check("variance-estimator-mean-matches-variance", "cposa", dev_vest, _TOL_VARIANCE),
        _check("case-weighted-indicator-has-unit-mean", "cposa", dev_unit, _TOL_MOMENT),
        _check("realized-size-never-below-minimum", "cposa", n_gaps, 0.0),
    ]


def _pair_bracket_gaps(dist, z, naive: bool) -> list:
    """Gap between the pair bracket and the successor's realized draw.

    The variance derivation for the size-stabilized design hinges on the
    bracket equaling the probability the successor actually carries at its
    own draw, given selection at the step before. The implemented bracket
    subtracts the drawn unit's own probability share and matches exactly;
    ``naive=True`` builds it from the successor's pre-update probability
    instead, a variant that looks equivalent at first glance but does not
    match.
    Gaps are collected over consecutive selected pairs at non-forcing
    positions (at forcing positions the successor is pinned to one and the
    bracket never enters).
    """
    n = dist.size
    gaps = []
    for p in range(dist.n_paths):
        smi = dist.smi[p]
        for t in np.flatnonzero(smi):
            if t + 1 >= n or not smi[t + 1] or z[t] != 0.0:
                continue
            succ0 = float(dist.succ_pre[p, t])
            own = succ0 if naive else float(dist.draw_probs[p, t])
            bracket = succ0 - (1.0 - own) / float(n - 1 - t)
            gaps.append(bracket - float(dist.draw_probs[p, t + 1]))
    return gaps


def _verify_claims(max_units: int) -> list:
    rows = []
    # area-level fixture where the pair bracket is live: the middle area
    # holds a case but sits below the forcing threshold, and it enters the
    # sample forced by its over-threshold predecessor
    if max_units >= 3:
        sizes = np.full(3, 10.0)
        thresholds = np.full(3, 0.15)
        y = (2.0, 1.0, 1.0)
        z = np.asarray(y) / sizes > thresholds
        rule = area_threshold_rule(sizes, thresholds,
                                   size_stabilized=True, min_sample_size=2)
        dist = enumerate_design(y, np.full(3, 2 / 3), rule)
        z = z.astype(np.float64)
        rows.append(_check(
            "pair-bracket-reproduces-successor-draw-probability", "cposa",
            _pair_bracket_gaps(dist, z, naive=False), _TOL_MOMENT))
        rows.append(_check(
            "successor-indexed-pair-bracket-diverges", "cposa",
            _pair_bracket_gaps(dist, z, naive=True), 1e-6,
            expects_divergence=True))
        # with the live bracket the single-run variance estimator still
        # averages to the exact design variance
        law = oracle_estimator_law(dist)
        ev = fsum(
            dist.probs[p] * cposa_variance_estimate(
                path_outcome(dist, p), forcing_values=z)
            for p in range(dist.n_paths)
        )
        rows.append(_check(
            "area-level-variance-estimator-mean-matches-variance", "cposa",
            [ev - law.variance], _TOL_VARIANCE))
    # selection indicators of far-apart units are NOT uncorrelated: the
    # size-stabilized correction couples every pair, and the forcing design
    # couples beyond-adjacent units through case chains
    y2 = (1, 0, 0)
    if len(y2) <= max_units:
        dist = enumerate_design(y2, np.full(3, 1 / 3), cposa_rule(1))
        cov = oracle_moments(dist).cov[0, 2]
        rows.append(_check(
            "far-pair-covariance-nonzero-under-size-stabilization", "cposa",
            [cov], 1e-3, expects_divergence=True))
    y3 = (1, 1, 0)
    if len(y3) <= max_units:
        dist = enumerate_design(y3, np.full(3, 0.5), posa_rule())
        cov = oracle_moments(dist).cov[0, 2]
        rows.append(_check(
            "far-pair-covariance-nonzero-across-case-chains", "posa",
            [cov], 1e-3, expects_divergence=True))
    return rows


def _corrupted_posa_rule() -> UpdatingRule:
    """Deliberately broken forcing rule: reversion undershoots by 10%.

    Exists so the negative control can show the verify suite catches a
    biased design instead of waving everything through.
    """
    def update(tail, tail_init, step, draw_prob, s, y_obs):
        if s and y_obs:
            tail[0] = 1.0
        else:
            tail[0] = tail_init[0] * 0.9

    return UpdatingRule(rule_id="posa", update=update)


def cmd_verify(spec: CommandSpec, max_units: int, designs, include_claims: bool,
               corrupt_rule: bool) -> int:
    checks = []
    if "poisson" in designs:
        checks.extend(_verify_poisson(max_units))
    if "posa" in designs:
        factory = _corrupted_posa_rule if corrupt_rule else posa_rule
        checks.extend(_verify_posa(max_units, rule_factory=factory))
    if "cposa" in designs:
        checks.extend(_verify_cposa(max_units))
    if include_claims:
        checks.extend(_verify_claims(max_units))
    all_passed = all(c["passed"] for c in checks)
    doc = {
        "max_units": max_units,
        "designs": sorted(designs),
        "include_claims": include_claims,
        "checks": checks,
        "all_passed": all_passed,
    }
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if spec.out is not None:
        out = Path(spec.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        _say(spec, f"verify: {'all checks passed' if all_passed else 'CHECKS FAILED'}"
                   f" ({len(checks)} checks) -> {out}")
    else:
        sys.stdout.write(text)
    return 0 if all_passed else EXIT_FAILURE


# ===== simulate / report =====

def cmd_simulate(spec: CommandSpec, resume: bool) -> int:
    config = _scenario_from_flags(spec)
    if spec.seed is not None:
        config = replace(config, base_seed=spec.seed)
    out = _out_dir(spec)
    ms = run_monte_carlo(config, out_dir=out, jobs=spec.jobs, resume=resume)
    write_summary_json(ms, out / f"{config.name}.summary.json")
    write_ratio_csv(ratio_report(ms), out / f"{config.name}.ratios.csv")
    for design in ms.designs:
        dm = ms.metrics[design]
        ratios = dm.ratios or {}
        parts = ", ".join(
            f"{k}={v:.3f}" for k, v in ratios.items() if v is not None
        )
        _say(spec, f"{config.name} {design}: completed {dm.completed}/"
                   f"{dm.requested} (errors {dm.error_fraction:.1%}) {parts}")
    try:
        ms.check()
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return 0


def cmd_report(spec: CommandSpec, summaries) -> int:
    metric_sets = []
    for path in summaries:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        for entry in doc["scenarios"]:
            metric_sets.append(MetricSet.from_dict(entry))
    rows = ratio_report(*metric_sets)
    if spec.out is not None:
        out = Path(spec.out)
        write_ratio_csv(rows, out)
        _say(spec, f"report: {len(rows)} rows from {len(metric_sets)} "
                   f"scenario(s) -> {out}")
    else:
        for row in rows:
            ratio = "" if row["ratio"] is None else f"{row['ratio']:.4f}"
            value = "" if row["value"] is None else f"{row['value']:.6g}"
            k = "" if row["k"] is None else f"{row['k']:.3f}"
            print(f"{row['scenario']}\t{k}\t{row['design']}\t{row['metric']}"
                  f"\t{value}\t{ratio}")
    return 0


# ===== argument parsing =====

def _max_units_arg(text: str) -> int:
    value = int(text)
    if not 3 <= value <= 16:
        raise argparse.ArgumentTypeError(
            f"max units must lie in [3, 16], got {value} "
            "(exhaustive enumeration doubles per unit)"
        )
    return value


def _designs_arg(text: str):
    names = tuple(part.strip() for part in text.split(",") if part.strip())
    known = ("poisson", "posa", "cposa")
    bad = [n for n in names if n not in known]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"designs must be a comma-separated subset of {known}"
        )
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="posa",
        description="Sequential adaptive survey sampling: populations, "
                    "designs, verification and Monte Carlo comparison.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, config=True, preset=True):
        if config:
            p.add_argument("--config", help="TOML or JSON file")
        if preset:
            p.add_argument("--preset", help="named preset"
                           f" (one of: {', '.join(list_presets())})")
        p.add_argument("--out", help=f"output directory or file "
                       f"(default: ${OUT_DIR_ENV} or the working directory)")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--quiet", action="store_true", help="suppress chatter")

    p = sub.add_parser("gen-pop", help="generate a population CSV + summary")
    add_common(p)

    p = sub.add_parser("run-design", help="run one list-sequential pass")
    add_common(p)
    p.add_argument("--design", required=True,
                   choices=("poisson", "posa", "cposa"))
    p.add_argument("--trace", action="store_true",
                   help="also write a per-step trace CSV")

    p = sub.add_parser("verify", help="enumerate small fixtures and check "
                                      "every estimator identity")
    add_common(p, config=False, preset=False)
    p.add_argument("--max-units", type=_max_units_arg, default=10,
                   help="enumeration cap (3..16, default 10)")
    p.add_argument("--designs", type=_designs_arg,
                   default=("poisson", "posa", "cposa"),
                   help="comma-separated subset of poisson,posa,cposa")
    p.add_argument("--include-claims", action="store_true",
                   help="also check the simplifications that do NOT hold "
                        "(reported as expected divergences)")
    p.add_argument("--corrupt-rule", action="store_true",
                   help=argparse.SUPPRESS)

    p = sub.add_parser("simulate", help="run one Monte Carlo scenario")
    add_common(p)
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes (default 1)")
    p.add_argument("--no-resume", action="store_true",
                   help="ignore an existing replicate checkpoint")

    p = sub.add_parser("report", help="merge summary JSONs into a ratio table")
    p.add_argument("summaries", nargs="+", help="summary JSON files")
    p.add_argument("--out", help="ratio CSV path (default: print)")
    p.add_argument("--quiet", action="store_true", help="suppress chatter")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    spec = CommandSpec(
        subcommand=args.subcommand,
        config=getattr(args, "config", None),
        preset=getattr(args, "preset", None),
        out=getattr(args, "out", None),
        seed=getattr(args, "seed", None),
        jobs=getattr(args, "jobs", 1),
        quiet=getattr(args, "quiet", False),
    )
    try:
        if args.subcommand == "gen-pop":
            return cmd_gen_pop(spec)
        if args.subcommand == "run-design":
            return cmd_run_design(spec, args.design, args.trace)
        if args.subcommand == "verify":
            return cmd_verify(spec, args.max_units, args.designs,
                              args.include_claims, args.corrupt_rule)
        if args.subcommand == "simulate":
            return cmd_simulate(spec, resume=not args.no_resume)
        if args.subcommand == "report":
            return cmd_report(spec, args.summaries)
    except (SamplingDesignError, KeyError, ValueError, OSError) as exc:
        detail = exc.args[0] if exc.args else exc
        print(f"error: {detail}", file=sys.stderr)
        return EXIT_FAILURE
    raise AssertionError(f"unhandled subcommand {args.subcommand!r}")


if __name__ == "__main__":
    sys.exit(main())
