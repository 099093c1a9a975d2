"""Acceptance battery: eight numbered release criteria, one verdict line each.

Every criterion prints exactly one line to the terminal in the form

    [criterion N] PASS|FAIL - detail

so a teed pytest run leaves a readable scorecard. Criteria whose claims
do not hold for these designs fail here honestly: the assertion message
carries the counterexample or the survivorship analysis instead of the
test being weakened to pass. Three clauses are in that category:

* criterion 4: selection indicators two or more steps apart are NOT
  uncorrelated in general (case chains under forcing, the global size
  correction under stabilization); the variance identities of criteria
  2 and 3 hold regardless because the realized-probability weights make
  the estimator increments uncorrelated even where the raw indicators
  are not.
* criterion 5: the stabilized design aborts a large share of desk-scale
  replicates rather than violating its minimum (every completed
  replicate meets it), so "100% of 5000 replicates" cannot be certified.
* criterion 6a for the stabilized design: with 39-61% of replicates
  aborting, conditional-on-completion detection ratios are survivorship
  biased and cannot certify the trend claim at any sigma level.
"""

import math
import shutil
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from battery import (
    CHAIN_FREE_BATTERY,
    INDEPENDENT_FORCING_BATTERY,
    SIZE_STABILIZED_BATTERY,
)
from posa import (
    cposa_exact_variance,
    cposa_rule,
    detection_rate_per_100,
    enumerate_design,
    oracle_estimator_law,
    oracle_moments,
    path_outcome,
    poisson_exact_variance,
    poisson_rule,
    posa_exact_variance,
    posa_rule,
    read_replicate_rows,
    replicate_rows_path,
    run_monte_carlo,
    scenario_preset,
    smi_moments,
    variance_estimate,
)
from posa.cli import main as cli_main

TOL_MOMENT = 1e-12
TOL_VARIANCE = 1e-10

DESK_LADDER = ("desk1", "desk2", "desk3", "desk4", "desk5", "desk6")

# shared clause registry: split criteria record their clauses here and the
# criterion's last clause test prints the aggregated verdict line
CLAUSES: dict = {}


def _clause(criterion: int, name: str, ok: bool, detail: str) -> bool:
    CLAUSES[(criterion, name)] = (bool(ok), detail)
    return bool(ok)


def _verdict(capfd, criterion: int, passed=None, detail=None) -> bool:
    if passed is None:
        parts = [(name, ok, text)
                 for (c, name), (ok, text) in CLAUSES.items() if c == criterion]
        passed = all(ok for _, ok, _ in parts)
        detail = "; ".join(f"{name} {'PASS' if ok else 'FAIL'}: {text}"
                           for name, ok, text in parts)
    line = f"[criterion {criterion}] {'PASS' if passed else 'FAIL'} - {detail}"
    with capfd.disabled():
        print(line, file=sys.stderr, flush=True)
    return bool(passed)


# ===== oracle-scale batteries (criteria 1-5, enumerated halves) =====

def _battery_designs():
    """(design, y, probs, dist) for every battery entry and design."""
    entries = []
    for y, probs in INDEPENDENT_FORCING_BATTERY:
        ya = np.array(y, dtype=np.float64)
        pa = np.array(probs, dtype=np.float64)
        entries.append(("poisson", ya, pa, None,
                        enumerate_design(ya, pa, poisson_rule())))
        entries.append(("posa", ya, pa, None,
                        enumerate_design(ya, pa, posa_rule())))
    for y, m in SIZE_STABILIZED_BATTERY:
        ya = np.array(y, dtype=np.float64)
        pa = np.full(len(y), m / len(y))
        entries.append(("cposa", ya, pa, m,
                        enumerate_design(ya, pa, cposa_rule(m))))
    return entries


@pytest.fixture(scope="session")
def battery_designs():
    return _battery_designs()


def test_criterion_1_estimator_unbiasedness(capfd):
    """Enumerated E[estimate] equals the population mean on every fixture."""
    start = time.perf_counter()

    sizes = {len(y) for y, _ in INDEPENDENT_FORCING_BATTERY}
    uniform_levels = {probs[0] for _, probs in INDEPENDENT_FORCING_BATTERY
                      if len(set(probs)) == 1}
    stab_levels = {m / len(y) for y, m in SIZE_STABILIZED_BATTERY}
    assert len(INDEPENDENT_FORCING_BATTERY) >= 20
    assert len(SIZE_STABILIZED_BATTERY) >= 20
    assert sizes == set(range(3, 11))
    assert all(3 <= len(y) <= 10 for y, _ in SIZE_STABILIZED_BATTERY)
    assert {0.2, 0.5, 0.8} <= uniform_levels
    assert {0.2, 0.5, 0.8} <= stab_levels

    counts = {"poisson": 0, "posa": 0, "cposa": 0}
    worst = 0.0
    for design, y, probs, m, dist in _battery_designs():
        law = oracle_estimator_law(dist)
        worst = max(worst, abs(law.expectation - float(np.mean(y))))
        counts[design] += 1
    elapsed = time.perf_counter() - start

    ok = worst <= TOL_MOMENT and elapsed < 10.0
    _verdict(capfd, 1, ok,
             f"{counts['poisson']} poisson + {counts['posa']} posa + "
             f"{counts['cposa']} cposa fixtures (N 3..10, levels "
             f"0.2/0.5/0.8), max |E[estimate] - Ybar| = {worst:.2e} "
             f"(tol 1e-12), {elapsed:.1f}s (< 10 s)")
    assert worst <= TOL_MOMENT
    assert elapsed < 10.0


def test_criterion_2_variance_closed_forms(battery_designs, capfd):
    """Closed-form design variances match the enumerated variances."""
    worst = {"poisson": 0.0, "posa": 0.0, "cposa": 0.0}
    for design, y, probs, m, dist in battery_designs:
        law = oracle_estimator_law(dist)
        if design == "poisson":
            formula = poisson_exact_variance(y, probs)
        elif design == "posa":
            formula = posa_exact_variance(y, probs)
        else:
            formula = cposa_exact_variance(y, probs, m)
        worst[design] = max(worst[design], abs(formula - law.variance))

    ok = max(worst.values()) <= TOL_VARIANCE
    _verdict(capfd, 2, ok,
             f"closed form vs enumeration, max dev: poisson "
             f"{worst['poisson']:.1e}, posa {worst['posa']:.1e}, cposa "
             f"{worst['cposa']:.1e} (tol 1e-10)")
    assert max(worst.values()) <= TOL_VARIANCE


def test_criterion_3_variance_estimator_unbiasedness(battery_designs, capfd):
    """Enumerated E[variance estimate] equals the enumerated variance."""
    worst = 0.0
    worst_fixture = ""
    checked = 0
    for design, y, probs, m, dist in battery_designs:
        law = oracle_estimator_law(dist)
        ev = math.fsum(
            float(dist.probs[p]) * variance_estimate(path_outcome(dist, p))
            for p in range(dist.probs.shape[0])
        )
        dev = abs(ev - law.variance)
        checked += 1
        if dev > worst:
            worst = dev
            worst_fixture = (f"{design} y={tuple(int(v) for v in y)}"
                             + (f" m={m}" if m is not None else ""))

    ok = worst <= TOL_VARIANCE
    finding = "no systematic deviation" if ok else \
        f"SYSTEMATIC DEVIATION at {worst_fixture}"
    _verdict(capfd, 3, ok,
             f"E[v] vs Var over {checked} design-fixtures, max dev "
             f"{worst:.1e} at {worst_fixture or 'n/a'} (tol 1e-10); {finding}")
    assert worst <= TOL_VARIANCE, (
        f"variance estimator biased on {worst_fixture}: |E[v] - Var| = "
        f"{worst:.3e}; this is a reportable finding, not a tolerance issue"
    )


def test_criterion_4_adjacent_moment_formulas(battery_designs):
    """Formula values for E(S), Var(S) and adjacent pair moments match."""
    worst = 0.0
    for design, y, probs, m, dist in battery_designs:
        if design == "poisson":
            rule = poisson_rule()
        elif design == "posa":
            rule = posa_rule()
        else:
            rule = cposa_rule(m)
        sm = smi_moments(rule, y, probs)
        om = oracle_moments(dist)
        worst = max(
            worst,
            float(np.max(np.abs(sm.e - om.e_s))),
            float(np.max(np.abs(sm.var - om.var_s))),
            float(np.max(np.abs(sm.joint_next - np.diagonal(om.joint, 1)))),
            float(np.max(np.abs(sm.cov_next - np.diagonal(om.cov, 1)))),
        )
    _clause(4, "adjacent-moments", worst <= TOL_MOMENT,
            f"max dev {worst:.1e} (tol 1e-12)")
    assert worst <= TOL_MOMENT


def test_criterion_4_far_covariances_not_null(battery_designs, capfd):
    """Cov(S_i, S_j) = 0 for j > i+1 does NOT hold; documented honest red."""
    worst = {"poisson": 0.0, "posa": 0.0, "cposa": 0.0}
    for design, y, probs, m, dist in battery_designs:
        cov = oracle_moments(dist).cov
        n = cov.shape[0]
        for i in range(n):
            for j in range(i + 2, n):
                worst[design] = max(worst[design], abs(float(cov[i, j])))

    # the restriction is structural: chain-free forcing fixtures DO satisfy it
    chain_free_worst = 0.0
    for y, probs in CHAIN_FREE_BATTERY:
        ya = np.array(y, dtype=np.float64)
        pa = np.array(probs, dtype=np.float64)
        cov = oracle_moments(enumerate_design(ya, pa, posa_rule())).cov
        n = cov.shape[0]
        for i in range(n):
            for j in range(i + 2, n):
                chain_free_worst = max(chain_free_worst, abs(float(cov[i, j])))

    # frozen counterexamples, asserted exactly so the red stays explained
    cov_posa = oracle_moments(
        enumerate_design(np.array([1.0, 1.0, 0.0]), np.full(3, 0.5),
                         posa_rule())
    ).cov[0, 2]
    cov_cposa = oracle_moments(
        enumerate_design(np.array([1.0, 0.0, 0.0]), np.full(3, 1.0 / 3.0),
                         cposa_rule(1))
    ).cov[0, 2]
    assert cov_posa == pytest.approx(1.0 / 16.0, abs=1e-12)
    assert cov_cposa == pytest.approx(-1.0 / 9.0, abs=1e-12)

    far_ok = max(worst.values()) <= TOL_MOMENT
    _clause(4, "far-covariances", far_ok,
            f"max |Cov(S_i,S_j)|, j>i+1: poisson {worst['poisson']:.1e}, "
            f"posa {worst['posa']:.1e}, cposa {worst['cposa']:.1e}; "
            f"counterexamples Cov(S_1,S_3) = +1/16 (posa y=110 pi=0.5) and "
            f"-1/9 (cposa y=100 m=1 pi=1/3); zero holds for poisson always "
            f"and for posa on chain-free patterns (max {chain_free_worst:.1e})")
    _verdict(capfd, 4)
    assert far_ok, (
        "far covariances are not null for these designs:\n"
        f"  posa max |Cov(S_i,S_j)|, j>i+1: {worst['posa']:.4f} "
        "(forcing a case pins its successor, so a chain of adjacent cases "
        "carries dependence further than one step; on chain-free patterns "
        f"the covariance is exactly zero, max {chain_free_worst:.1e})\n"
        f"  cposa max: {worst['cposa']:.4f} (the size correction spreads "
        "every selection across all remaining units, linking arbitrary "
        "pairs; Cov(S_1,S_3) = -1/9 already at y=100, m=1, pi=1/3)\n"
        f"  poisson max: {worst['poisson']:.1e} (independent draws, zero "
        "as claimed)\n"
        "The estimator-level identities are unaffected: criteria 2 and 3 "
        "pass at 1e-10 because the realized-probability weights make the "
        "estimator increments uncorrelated even where the raw indicators "
        "are not. The null-far-covariance statement about the indicators "
        "themselves is the clause that fails."
    )


def test_criterion_5_enumerated_minimum(battery_designs):
    """Every enumerated stabilized path selects at least the minimum."""
    shortfall = 0
    fixtures = 0
    for design, y, probs, m, dist in battery_designs:
        if design != "cposa":
            continue
        fixtures += 1
        realized = dist.smi.sum(axis=1)
        shortfall = max(shortfall, int(np.max(m - realized)))
    _clause(5, "enumerated-paths", shortfall <= 0,
            f"{fixtures} fixtures, worst shortfall {shortfall} areas")
    assert shortfall <= 0


@pytest.fixture(scope="session")
def desk_minimum_run(tmp_path_factory):
    config = replace(scenario_preset("desk3"), designs=("cposa",),
                     replicates=5000)
    out = tmp_path_factory.mktemp("minsize")
    ms = run_monte_carlo(config, out_dir=out, jobs=4)
    rows = read_replicate_rows(replicate_rows_path(config, out))
    return ms, rows


def test_criterion_5_desk_scale_minimum(desk_minimum_run, capfd):
    """100% of 5000 desk replicates meet n_min; documented honest red."""
    ms, rows = desk_minimum_run
    n_min = ms.n_min
    ok_rows = [r for r in rows if r[2] == "ok"]
    completed = len(ok_rows)
    met = sum(1 for r in ok_rows if r[3] >= n_min)
    aborted = 5000 - completed

    all_completed_meet = met == completed
    clause_ok = all_completed_meet and completed == 5000
    _clause(5, "desk-monte-carlo", clause_ok,
            f"n_min={n_min}: {met}/{completed} completed replicates meet it, "
            f"but {aborted}/5000 ({aborted / 50:.1f}%) abort before "
            f"completion, so the 100%-of-5000 clause fails")
    _verdict(capfd, 5)
    assert all_completed_meet, (
        "a completed replicate violated the minimum sample size; that "
        "would be a genuine engine bug"
    )
    assert clause_ok, (
        f"the minimum-size guarantee holds on every path that completes "
        f"({met}/{completed} replicates selected >= {n_min} areas), but "
        f"{aborted} of 5000 replicates ({aborted / 50:.1f}%) abort: at desk "
        "scale (prevalence 0.005, 100 areas, n_min 12 of m 15) a forced "
        "selection injects probability mass that the constant correction "
        "must remove from the remaining areas, and late in the list that "
        "drives a probability out of [0, 1]. The engine refuses loudly "
        "rather than clamping, so the failure mode is an abort, never a "
        "silent shortfall. The clause as stated requires 100% of 5000 "
        "replicates and therefore fails."
    )


# ===== criterion 6: desk-scale trend grid =====

def _sem(values) -> float:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return float("inf")
    return float(arr.std() / math.sqrt(arr.size))


def _design_stats(rows, design: str, requested: int, true_mean: float) -> dict:
    ok = [r for r in rows if r[0] == design and r[2] == "ok"]
    persons = np.array([r[4] for r in ok], dtype=np.float64)
    cases = np.array([r[5] for r in ok], dtype=np.float64)
    est = np.array([r[6] for r in ok], dtype=np.float64)
    cost = np.array([r[7] for r in ok], dtype=np.float64)

    rates = cases[persons > 0] / persons[persons > 0]
    cpc = cost[cases > 0] / cases[cases > 0]
    sqe = (est - true_mean) ** 2
    msq = float(np.mean(sqe))
    rmse = math.sqrt(msq)
    return {
        "n": len(ok),
        "completion": len(ok) / requested,
        "detection": (float(np.mean(rates)), _sem(rates)),
        "cost": (float(np.mean(cpc)), _sem(cpc)),
        "size": (float(np.mean(persons)), _sem(persons)),
        "rmse": (rmse, _sem(sqe) / (2.0 * rmse)),
    }


def _ratio(stat_num, stat_den):
    (a, sa), (b, sb) = stat_num, stat_den
    r = a / b
    se = abs(r) * math.sqrt((sa / a) ** 2 + (sb / b) ** 2)
    return r, se


def _slope(points):
    """OLS slope of ratio against k with MC error propagated per rung."""
    ks = np.array([k for k, _, _ in points])
    rs = np.array([r for _, r, _ in points])
    ses = np.array([se for _, _, se in points])
    kbar = ks.mean()
    sxx = float(((ks - kbar) ** 2).sum())
    coef = (ks - kbar) / sxx
    slope = float((coef * rs).sum())
    slope_se = float(np.sqrt(((coef * ses) ** 2).sum()))
    return slope, slope_se


@pytest.fixture(scope="session")
def desk_grid(tmp_path_factory):
    start = time.perf_counter()
    rungs = []
    for name in DESK_LADDER:
        config = scenario_preset(name)
        out = tmp_path_factory.mktemp(f"grid_{name}")
        ms = run_monte_carlo(config, out_dir=out, jobs=4)
        rows = read_replicate_rows(replicate_rows_path(config, out))
        true_mean = (ms.population["case_count"]
                     / ms.population["population_size"])
        stats = {d: _design_stats(rows, d, config.replicates, true_mean)
                 for d in config.designs}
        # recomputed aggregates must agree with the harness's own
        for d in config.designs:
            dm = ms.metrics[d]
            assert stats[d]["detection"][0] == pytest.approx(
                dm.detection_rate, rel=1e-9)
            assert stats[d]["rmse"][0] == pytest.approx(dm.rmse, rel=1e-9)
        rungs.append({"name": name, "k": ms.k, "ms": ms, "stats": stats})
    elapsed = time.perf_counter() - start
    return {"rungs": rungs, "elapsed": elapsed}


def _rung_ratios(desk_grid, design: str, metric: str):
    out = []
    for rung in desk_grid["rungs"]:
        r, se = _ratio(rung["stats"][design][metric],
                       rung["stats"]["benchmark"][metric])
        out.append((rung["k"], r, se))
    return out


def test_criterion_6_trend_posa_detection(desk_grid, capfd):
    """Forcing design: detection ratio rises with k and clears 1."""
    assert desk_grid["elapsed"] < 600.0, "grid exceeded the runtime target"
    pts = _rung_ratios(desk_grid, "posa", "detection")
    slope, slope_se = _slope(pts)
    trend_ok = slope + 3 * slope_se > 0
    trend_decisive = slope - 3 * slope_se > 0
    level_ok = all(r + 3 * se > 1.0 for k, r, se in pts if k >= 1.4)
    top_k, top_r, top_se = pts[-1]
    top_decisive = top_r - 3 * top_se > 1.0

    ratios = "/".join(f"{r:.3f}" for _, r, _ in pts)
    _clause(6, "a-posa-detection", trend_ok and level_ok,
            f"ratios {ratios} over k 1.46..2.72, slope {slope:.3f} "
            f"(3*SE {3 * slope_se:.3f}, decisively positive: "
            f"{trend_decisive}), all rungs k>=1.4 within 3 sigma of >1, "
            f"top rung {top_r:.3f} decisively >1: {top_decisive}")
    assert trend_ok and level_ok
    assert trend_decisive, "detection trend should be positive at 3 sigma"


def test_criterion_6_trend_cposa_detection(desk_grid, capfd):
    """Stabilized design: survivorship ruins the clause; honest red."""
    pts = _rung_ratios(desk_grid, "cposa", "detection")
    completions = [rung["stats"]["cposa"]["completion"]
                   for rung in desk_grid["rungs"]]
    full = all(c == 1.0 for c in completions)

    ratios = "/".join(f"{r:.3f}" for _, r, _ in pts)
    comps = "/".join(f"{c:.0%}" for c in completions)
    _clause(6, "a-cposa-detection", full,
            f"conditional ratios {ratios} but completion only {comps}; "
            f"survivorship-biased, cannot certify the trend")
    assert full, (
        f"the stabilized design completes only {comps} of replicates "
        f"across the ladder (aborts are the documented out-of-[0,1] "
        f"refusal). The conditional-on-completion detection ratios "
        f"({ratios}) describe the surviving subset, and survival is "
        "correlated with the case pattern encountered early in the list, "
        "so they are not unbiased estimates of the design's detection "
        "ratio. With 39-61% of replicates missing, no 3-sigma statement "
        "about the full-design trend is possible; the clause fails for "
        "the stabilized design while it passes for the forcing design."
    )


def test_criterion_6_cost_per_case(desk_grid, capfd):
    """Cost per detected case drops below the benchmark for k >= 1.7."""
    posa = [(k, r, se) for k, r, se in
            _rung_ratios(desk_grid, "posa", "cost") if k >= 1.7]
    cposa = [(k, r, se) for k, r, se in
             _rung_ratios(desk_grid, "cposa", "cost") if k >= 1.7]
    posa_ok = all(r + 3 * se < 1.0 for _, r, se in posa)
    cposa_not_contradicted = all(r - 3 * se < 1.0 for _, r, se in cposa)

    pr = "/".join(f"{r:.2f}" for _, r, _ in posa)
    cr = "/".join(f"{r:.2f}" for _, r, _ in cposa)
    _clause(6, "b-cost-per-case", posa_ok and cposa_not_contradicted,
            f"k>=1.7 rungs: posa {pr} (all decisively <1), cposa {cr} "
            f"(conditional on completion, consistent with <1)")
    assert posa_ok
    assert cposa_not_contradicted


def test_criterion_6_posa_sample_size(desk_grid, capfd):
    """Forcing design's expected sample size stays within 1.6x benchmark."""
    pts = _rung_ratios(desk_grid, "posa", "size")
    not_contradicted = all(r - 3 * se <= 1.6 for _, r, se in pts)
    worst = max(r for _, r, _ in pts)
    _clause(6, "c-posa-sample-size", not_contradicted,
            f"max ratio {worst:.3f} across the ladder (bound 1.6)")
    assert not_contradicted
    assert worst <= 1.6, "point estimate should clear the bound outright"


def test_criterion_6_cposa_rmse_band(desk_grid, capfd):
    """Stabilized design's RMSE ratio sits near 1.1 at high k (with caveat)."""
    pts = [(k, r, se) for k, r, se in _rung_ratios(desk_grid, "cposa", "rmse")
           if k >= 2.4]
    in_band = all(r - 3 * se <= 1.25 and r + 3 * se >= 0.95
                  for _, r, se in pts)
    vals = "/".join(f"{r:.3f}" for _, r, _ in pts)
    completions = "/".join(
        f"{rung['stats']['cposa']['completion']:.0%}"
        for rung in desk_grid["rungs"] if rung["k"] >= 2.4)
    _clause(6, "d-cposa-rmse", in_band,
            f"high-k ratios {vals} within 1.1 +/- 0.15 at 3 sigma; caveat: "
            f"conditional on the {completions} of replicates that complete")
    grid_line = _verdict(capfd, 6)
    assert in_band
    del grid_line


def test_criterion_7_detection_rate_arithmetic(capfd):
    """Per-100 detection rates reproduce the reference arithmetic exactly."""
    a = detection_rate_per_100(271, 22160)
    b = detection_rate_per_100(33, 52098)
    ok = a == 1.22 and b == 0.06
    _verdict(capfd, 7, ok,
             f"100*271/22160 -> {a} (want 1.22), 100*33/52098 -> {b} "
             f"(want 0.06), exact")
    assert a == 1.22
    assert b == 0.06


# ===== criterion 8: byte determinism =====

TINY_TOML = """\
name = "tinysim"
designs = ["benchmark", "posa"]
m_areas = 4
n_min_ratio = 0.75
replicates = 20
base_seed = 90

[population]
population_size = 400
area_count = 16
prevalence = 0.05
n_clusters = 1
cluster_area_count = 2
clustered_fraction = 0.8
seed = 5
"""


def _dir_bytes(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())
            if p.is_file()}


def test_criterion_8_byte_determinism(tmp_path, capfd):
    """Identical command, config and seed give byte-identical outputs."""
    cfg = tmp_path / "tinysim.toml"
    cfg.write_text(TINY_TOML, encoding="utf-8")

    checked = []

    # fresh-directory repeats: no paths are embedded in these outputs
    for label, argv in (
        ("gen-pop", ["gen-pop", "--preset", "pop2", "--seed", "11"]),
        ("run-design", ["run-design", "--config", str(cfg),
                        "--design", "posa", "--seed", "0", "--trace"]),
        ("verify", ["verify", "--max-units", "5"]),
    ):
        snaps = []
        for sub in ("a", "b"):
            out = tmp_path / label / sub
            rc = cli_main(argv + ["--out", str(out), "--quiet"]
                          if label != "verify"
                          else argv + ["--out", str(out / "verify.json"),
                                       "--quiet"])
            assert rc == 0
            snaps.append(_dir_bytes(out) if label != "verify"
                          else {"verify.json": (out / "verify.json").read_bytes()})
        assert snaps[0] == snaps[1], f"{label} outputs differ between runs"
        checked.append(label)

    # simulate: from-scratch repeat into the SAME path, so even the
    # summary's rows-file location field must reproduce byte for byte
    sim_out = tmp_path / "sim"
    runs = []
    for _ in range(2):
        if sim_out.exists():
            shutil.rmtree(sim_out)
        rc = cli_main(["simulate", "--config", str(cfg),
                       "--out", str(sim_out), "--quiet"])
        assert rc == 0
        runs.append(_dir_bytes(sim_out))
    assert runs[0] == runs[1], "simulate outputs differ between scratch runs"
    checked.append("simulate")

    _verdict(capfd, 8, True,
             f"byte-identical reruns for {', '.join(checked)} "
             f"(simulate repeated from scratch into the same path)")
