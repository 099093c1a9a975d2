"""Point estimation, exact design variances, and variance estimation.

The estimator implemented here is the inverse-probability-weighted mean
where each sampled unit is weighted by the probability that was actually
in force at its own draw. Under every list-sequential design in this
package that draw probability is exactly the conditional inclusion
probability given the past, so each weighted term has conditional
expectation equal to its y value and the estimator is design-unbiased.

The same conditioning argument makes the weighted terms uncorrelated:
once a unit's term is centered given the past, no earlier term can
covary with it. The exact variance therefore reduces to a single sum
over units, and the adjacent-pair corrections that appear in the
traditional spelled-out variance formulas evaluate to zero when their
probabilities are read conditionally on the selection event. Those pair
terms are still computed literally here, not dropped, so the formulas
stay auditable term by term; tests assert that they vanish.

Design-specific notes:

* Plain Poisson and PoSA admit closed forms. Under PoSA the probability
  a unit is forced equals (previous y) * (previous marginal inclusion
  probability), which gives a two-line recursion for all marginals.
* CPoSA probabilities are path dependent, so its exact variance is
  evaluated over the enumeration oracle's path distribution and is only
  available at oracle scale.
* Area-level runs reuse the same estimators with areas as units and y
  as the area case total; the divisor is then the total person count,
  passed explicitly as ``population_size``, while the correction
  divisor inside the size-stabilized bracket stays the number of areas.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import fsum
import json

import numpy as np

from .engine import DesignOutcome, UpdatingRule
from .exceptions import InvalidWeightError
from .oracle import PathDistribution, enumerate_design

__all__ = [
    "EstimateReport",
    "SmiMoments",
    "ht_mean_estimate",
    "poisson_exact_variance",
    "poisson_variance_estimate",
    "posa_marginals",
    "posa_exact_variance",
    "posa_variance_estimate",
    "cposa_exact_variance",
    "cposa_variance_estimate",
    "variance_estimate",
    "estimate_report",
    "smi_moments",
    "explain_rows",
]


# ===== input plumbing =====================================================


def _as_y(pop_or_y) -> np.ndarray:
    """Accept a Population or a bare vector of y values."""
    y = getattr(pop_or_y, "y", pop_or_y)
    return np.asarray(y, dtype=np.float64)


def _resolve_y(outcome: DesignOutcome, y_sampled) -> np.ndarray:
    """Return y by visit position, defaulting to the run's own observations.

    Only positions with smi = 1 are ever read, so callers may pass a
    full-length vector with arbitrary values at unsampled positions.
    """
    if y_sampled is None:
        return outcome.y_observed
    y = np.asarray(y_sampled, dtype=np.float64)
    if y.shape[0] != outcome.size:
        raise ValueError(
            f"y_sampled must have one entry per visit position "
            f"({outcome.size}), got {y.shape[0]}"
        )
    return y


def _checked_sampled_probs(outcome: DesignOutcome) -> np.ndarray:
    """Draw probabilities with the positivity precondition enforced."""
    probs = outcome.draw_probs
    bad = np.flatnonzero(outcome.smi & ~(probs > 0.0))
    if bad.size:
        t = int(bad[0])
        raise InvalidWeightError(
            f"sampled unit at position {t} has draw probability "
            f"{probs[t]!r}; inverse-probability weighting is undefined"
        )
    return probs


# ===== domain types =======================================================


@dataclass(frozen=True)
class EstimateReport:
    """One run's estimation output.

    ``exact_variance`` requires full population knowledge and is None
    unless the caller supplies it. ``population_size`` is the divisor
    used by the estimator; for area-level runs it is the person total,
    not the number of areas.
    """

    point: float
    variance_estimate: float | None
    design_id: str
    realized_n: int
    population_size: float
    exact_variance: float | None = None

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "variance_estimate": self.variance_estimate,
            "design_id": self.design_id,
            "realized_n": self.realized_n,
            "population_size": self.population_size,
            "exact_variance": self.exact_variance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class SmiMoments:
    """Formula values for the selection-indicator moments of a design.

    ``joint_next[i]`` and ``cov_next[i]`` refer to the pair (i, i+1);
    both arrays have length N-1. Pairs further apart carry no entry:
    the adjacent pair is the only one the update rule links directly.
    """

    design_id: str
    e: np.ndarray
    var: np.ndarray
    joint_next: np.ndarray
    cov_next: np.ndarray

    def to_dict(self) -> dict:
        return {
            "design_id": self.design_id,
            "e": self.e.tolist(),
            "var": self.var.tolist(),
            "joint_next": self.joint_next.tolist(),
            "cov_next": self.cov_next.tolist(),
        }


# ===== point estimation ===================================================


def ht_mean_estimate(
    outcome: DesignOutcome,
    y_sampled=None,
    population_size: float | None = None,
) -> float:
    """Inverse-probability-weighted mean over the realized sample.

    Parameters
    ----------
    outcome:
        A completed sequential run.
    y_sampled:
        y by visit position; only sampled positions are read. Defaults
        to the observations recorded on the outcome itself.
    population_size:
        Divisor N. Defaults to the number of visited units; area-level
        callers pass the person total instead.

    Raises
    ------
    InvalidWeightError
        If any sampled unit has a nonpositive draw probability.
    """
    y = _resolve_y(outcome, y_sampled)
    probs = _checked_sampled_probs(outcome)
    n_div = float(population_size if population_size is not None else outcome.size)
    sampled = np.flatnonzero(outcome.smi)
    return fsum(float(y[t]) / float(probs[t]) for t in sampled) / n_div


# ===== exact variances (population side) ==================================


def poisson_exact_variance(pop_or_y, initial_probs) -> float:
    """Exact variance of the weighted mean under independent draws."""
    y = _as_y(pop_or_y)
    pi0 = np.asarray(initial_probs, dtype=np.float64)
    _require_positive_at_cases(y, pi0)
    terms = [
        float(y[i]) ** 2 * (1.0 - float(pi0[i])) / float(pi0[i])
        for i in range(y.shape[0])
        if y[i] != 0.0
    ]
    return fsum(terms) / float(y.shape[0]) ** 2


def posa_marginals(pop_or_y, initial_probs) -> tuple[np.ndarray, np.ndarray]:
    """Forcing probabilities f and marginal inclusion probabilities p.

    f[i] is the probability unit i enters with a forced probability of
    one, which happens exactly when its predecessor is a selected case:
    f[i] = y[i-1] * p[i-1] for binary y, f[0] = 0. The marginal is then
    p[i] = f[i] + (1 - f[i]) * pi0[i].
    """
    y = _as_y(pop_or_y)
    pi0 = np.asarray(initial_probs, dtype=np.float64)
    n = y.shape[0]
    f = np.zeros(n)
    p = np.zeros(n)
    for i in range(n):
        if i > 0:
            f[i] = y[i - 1] * p[i - 1]
        p[i] = f[i] + (1.0 - f[i]) * pi0[i]
    return f, p


def posa_exact_variance(pop_or_y, initial_probs) -> float:
    """Exact variance of the weighted mean under the forcing design.

    The single sum uses the fact that a unit is weighted by its initial
    probability unless it was forced, and a forced unit contributes no
    variance at all. The adjacent-pair sum is evaluated with the
    successor probability read on the selection event (forced to one
    when the predecessor is a case), which makes every pair numerator
    vanish; it is computed literally rather than assumed away.

    Raises
    ------
    InvalidWeightError
        If some unit has y != 0 but initial probability 0; the weighted
        estimator would divide by zero with positive probability.
    """
    y = _as_y(pop_or_y)
    pi0 = np.asarray(initial_probs, dtype=np.float64)
    _require_positive_at_cases(y, pi0)
    n = y.shape[0]
    f, _p = posa_marginals(y, pi0)

    main = fsum(
        float(y[i]) ** 2
        * (1.0 - float(f[i]))
        * (1.0 - float(pi0[i]))
        / float(pi0[i])
        for i in range(n)
        if y[i] != 0.0
    )
    # pair term: successor probability on the selection event equals
    # y_i + pi0_{i+1} (1 - y_i), the same value the numerator subtracts
    pair = 0.0
    for i in range(n - 1):
        if y[i] == 0.0 or y[i + 1] == 0.0:
            continue
        cond = float(y[i]) + float(pi0[i + 1]) * (1.0 - float(y[i]))
        pair += 2.0 * float(y[i]) * float(y[i + 1]) * (cond - cond) / cond
    return (main + pair) / float(n) ** 2


def cposa_exact_variance(
    pop_or_y,
    initial_probs,
    min_sample_size: int,
    *,
    max_units: int = 16,
) -> float:
    """Exact variance under the size-stabilized design, at oracle scale.

    Size-stabilized probabilities are path dependent, so the single-sum
    variance is an expectation over selection paths. This enumerates
    them and averages (1 - pi)/pi at each case position under the
    probability in force at that unit's own draw.

    Raises
    ------
    InvalidWeightError
        If some positive-probability path gives a case a zero draw
        probability (the weighted estimator is undefined there).
    ProbabilityRangeError
        Propagated from enumeration when the constant correction drives
        some path's probability out of [0, 1].
    EnumerationLimitError
        If the population exceeds ``max_units``.
    """
    from .engine import cposa_rule
    from .oracle import case_draw_prob_floor

    y = _as_y(pop_or_y)
    dist = enumerate_design(y, initial_probs, cposa_rule(min_sample_size),
                            max_units=max_units)
    floor = case_draw_prob_floor(dist)
    if not floor > 0.0:
        raise InvalidWeightError(
            "some positive-probability path reaches a case with draw "
            "probability 0; the weighted estimator is undefined for "
            "this population and minimum sample size"
        )
    return _path_variance(dist)


def _path_variance(dist: PathDistribution) -> float:
    """Average the single-sum variance formula over enumerated paths."""
    y = dist.y.astype(np.float64)
    n = dist.size
    case_pos = [i for i in range(n) if y[i] != 0.0]
    main = fsum(
        float(w) * float(y[i]) ** 2 * (1.0 - float(dp[i])) / float(dp[i])
        for w, dp in zip(dist.probs, dist.draw_probs)
        for i in case_pos
    )
    # pair term, evaluated per path with the successor probability read
    # on the selection event; zero term by term, kept for auditability
    pair = 0.0
    for w, dp, sp in zip(dist.probs, dist.draw_probs, dist.succ_pre):
        for i in range(n - 1):
            if y[i] == 0.0 or y[i + 1] == 0.0:
                continue
            bracket = float(sp[i]) - (1.0 - float(dp[i])) / float(n - 1 - i)
            cond = float(y[i]) + (1.0 - float(y[i])) * bracket
            pair += 2.0 * float(w) * float(y[i]) * float(y[i + 1]) * (cond - cond) / cond
    return (main + pair) / float(n) ** 2


def _require_positive_at_cases(y: np.ndarray, pi0: np.ndarray) -> None:
    bad = np.flatnonzero((y != 0.0) & ~(pi0 > 0.0))
    if bad.size:
        i = int(bad[0])
        raise InvalidWeightError(
            f"unit {i} has y = {y[i]!r} but initial probability "
            f"{pi0[i]!r}; its variance contribution divides by zero"
        )


# ===== variance estimation (sample side) ==================================


def posa_variance_estimate(
    outcome: DesignOutcome,
    y_sampled=None,
    population_size: float | None = None,
    forcing_values=None,
) -> float:
    """Unbiased variance estimate from one forcing-design run.

    The first sum runs over sampled units; the adjacent-pair sum runs
    over consecutive sampled pairs and uses the successor's initial
    probability (recorded on the outcome before the step's update) and
    its realized draw probability. On every realizable sample the pair
    numerator is zero: a sampled case forces its successor's draw
    probability to one, and a sampled non-case contributes no pair.

    ``forcing_values``: the per-position values that drove adaptation,
    when they differ from the estimation values. Unit-level binary runs
    leave this as None (y plays both roles); area-level callers pass
    the 0/1 threshold-crossing indicators while y carries case counts.
    """
    y = _resolve_y(outcome, y_sampled)
    z = y if forcing_values is None else np.asarray(forcing_values, dtype=np.float64)
    probs = _checked_sampled_probs(outcome)
    n_div = float(population_size if population_size is not None else outcome.size)
    smi = outcome.smi
    succ0 = outcome.succ_probs_pre_update

    sampled = np.flatnonzero(smi)
    main = fsum(
        (float(y[t]) / float(probs[t])) ** 2 * (1.0 - float(probs[t]))
        for t in sampled
    )
    pair = 0.0
    for t in sampled:
        if t + 1 >= outcome.size or not smi[t + 1]:
            continue
        if y[t] == 0.0 or y[t + 1] == 0.0:
            continue
        cond = float(z[t]) + float(succ0[t]) * (1.0 - float(z[t]))
        numer = cond - float(probs[t + 1])
        denom = float(probs[t + 1]) * float(probs[t]) * cond
        pair += 2.0 * float(y[t]) * float(y[t + 1]) * numer / denom
    return (main + pair) / n_div**2


def cposa_variance_estimate(
    outcome: DesignOutcome,
    y_sampled=None,
    population_size: float | None = None,
    forcing_values=None,
) -> float:
    """Unbiased variance estimate from one size-stabilized run.

    Identical in shape to the forcing-design estimate except that the
    successor's pre-update probability is corrected by the constant
    update before entering the pair bracket: given selection at step i,
    the successor's probability either is forced to one (case) or drops
    by (1 - draw_prob) over the remaining count. The correction divisor
    is the number of remaining visit positions, so area-level runs keep
    their area count here even though ``population_size`` is persons.
    """
    y = _resolve_y(outcome, y_sampled)
    z = y if forcing_values is None else np.asarray(forcing_values, dtype=np.float64)
    probs = _checked_sampled_probs(outcome)
    n_vis = outcome.size
    n_div = float(population_size if population_size is not None else n_vis)
    smi = outcome.smi
    succ0 = outcome.succ_probs_pre_update

    sampled = np.flatnonzero(smi)
    main = fsum(
        (float(y[t]) / float(probs[t])) ** 2 * (1.0 - float(probs[t]))
        for t in sampled
    )
    pair = 0.0
    for t in sampled:
        if t + 1 >= n_vis or not smi[t + 1]:
            continue
        if y[t] == 0.0 or y[t + 1] == 0.0:
            continue
        bracket = float(succ0[t]) - (1.0 - float(probs[t])) / float(n_vis - 1 - t)
        cond = float(z[t]) + (1.0 - float(z[t])) * bracket
        numer = cond - float(probs[t + 1])
        denom = float(probs[t + 1]) * float(probs[t]) * cond
        pair += 2.0 * float(y[t]) * float(y[t + 1]) * numer / denom
    return (main + pair) / n_div**2


def poisson_variance_estimate(
    outcome: DesignOutcome,
    y_sampled=None,
    population_size: float | None = None,
) -> float:
    """Unbiased variance estimate under independent draws.

    Independence leaves only the single sum. The forcing design's pair
    term must NOT be reused here: without forcing, a sampled case does
    not pin its successor's probability to one, so that term would add
    spurious mass whenever two adjacent cases are sampled.
    """
    y = _resolve_y(outcome, y_sampled)
    probs = _checked_sampled_probs(outcome)
    n_div = float(population_size if population_size is not None else outcome.size)
    main = fsum(
        (float(y[t]) / float(probs[t])) ** 2 * (1.0 - float(probs[t]))
        for t in np.flatnonzero(outcome.smi)
    )
    return main / n_div**2


_VARIANCE_DISPATCH = {
    "poisson": lambda out, y, n, z: poisson_variance_estimate(out, y, n),
    "posa": lambda out, y, n, z: posa_variance_estimate(out, y, n, z),
    "posa-area-threshold": lambda out, y, n, z: posa_variance_estimate(out, y, n, z),
    "cposa": lambda out, y, n, z: cposa_variance_estimate(out, y, n, z),
    "cposa-area-threshold": lambda out, y, n, z: cposa_variance_estimate(out, y, n, z),
}


def variance_estimate(
    outcome: DesignOutcome,
    y_sampled=None,
    population_size: float | None = None,
    forcing_values=None,
) -> float | None:
    """Design-appropriate variance estimate, or None when undefined.

    Designs without a closed-form estimator here, such as the two-stage
    benchmark, return None.
    """
    fn = _VARIANCE_DISPATCH.get(outcome.rule_id)
    if fn is None:
        return None
    return fn(outcome, y_sampled, population_size, forcing_values)


def estimate_report(
    outcome: DesignOutcome,
    y_sampled=None,
    population_size: float | None = None,
    forcing_values=None,
    exact_variance: float | None = None,
) -> EstimateReport:
    """Bundle the point estimate and variance estimate for one run."""
    point = ht_mean_estimate(outcome, y_sampled, population_size)
    v = variance_estimate(outcome, y_sampled, population_size, forcing_values)
    return EstimateReport(
        point=point,
        variance_estimate=v,
        design_id=outcome.rule_id,
        realized_n=outcome.realized_n,
        population_size=float(
            population_size if population_size is not None else outcome.size
        ),
        exact_variance=exact_variance,
    )


# ===== indicator moments ==================================================


def smi_moments(
    rule: UpdatingRule,
    pop_or_y,
    initial_probs,
    *,
    max_units: int = 16,
) -> SmiMoments:
    """Formula values for E(S), V(S) and the adjacent pair moments.

    Poisson and the forcing design have closed forms. For the
    size-stabilized design the probabilities are path dependent, so the
    formulas are evaluated as expectations over the enumerated path
    distribution; this keeps the function at oracle scale.
    """
    y = _as_y(pop_or_y)
    pi0 = np.asarray(initial_probs, dtype=np.float64)
    n = y.shape[0]

    if rule.rule_id == "poisson":
        e = pi0.copy()
        joint = pi0[:-1] * pi0[1:]
    elif rule.rule_id == "posa":
        _f, e = posa_marginals(y, pi0)
        joint = np.array(
            [
                e[i] * (y[i] + pi0[i + 1] * (1.0 - y[i]))
                for i in range(n - 1)
            ]
        )
    elif rule.rule_id == "cposa":
        dist = enumerate_design(y, pi0, rule, max_units=max_units)
        w = dist.probs
        s = dist.smi.astype(np.float64)
        dp = dist.draw_probs
        sp = dist.succ_pre
        e = np.array([fsum((s[:, i] * w).tolist()) for i in range(n)])
        # conditional successor probability given selection at i: forced
        # to one for a case, otherwise corrected down by the constant
        # update over the remaining count
        joint = np.empty(n - 1)
        for i in range(n - 1):
            succ_given_sel = y[i] + (1.0 - y[i]) * (
                sp[:, i] - (1.0 - dp[:, i]) / float(n - 1 - i)
            )
            joint[i] = fsum((s[:, i] * succ_given_sel * w).tolist())
    else:
        raise ValueError(
            f"indicator moments are defined for the poisson, posa and "
            f"cposa rules, not {rule.rule_id!r}"
        )

    var = e * (1.0 - e)
    cov = joint - e[:-1] * e[1:]
    return SmiMoments(
        design_id=rule.rule_id, e=e, var=var, joint_next=joint, cov_next=cov
    )


# ===== term-by-term audit trail ===========================================


def explain_rows(
    outcome: DesignOutcome,
    y_sampled=None,
    population_size: float | None = None,
    forcing_values=None,
) -> list[dict]:
    """Per-unit formula terms for auditing, one dict per sampled unit.

    Each row carries the unit's weight and its contribution to the
    first variance sum; rows for consecutive sampled pairs carry the
    pair numerator and the pair contribution (zero on every realizable
    sample, recorded so the audit shows it rather than assumes it).
    """
    y = _resolve_y(outcome, y_sampled)
    z = y if forcing_values is None else np.asarray(forcing_values, dtype=np.float64)
    probs = _checked_sampled_probs(outcome)
    n_vis = outcome.size
    n_div = float(population_size if population_size is not None else n_vis)
    stabilized = outcome.rule_id.startswith("cposa")
    # independent draws have no pair terms at all; see
    # poisson_variance_estimate
    has_pairs = outcome.rule_id != "poisson"
    succ0 = outcome.succ_probs_pre_update

    rows: list[dict] = []
    for t in np.flatnonzero(outcome.smi):
        t = int(t)
        weight = float(y[t]) / float(probs[t])
        row = {
            "position": t,
            "unit": int(outcome.unit_ids[t]),
            "y": float(y[t]),
            "draw_prob": float(probs[t]),
            "weight": weight,
            "point_term": weight / n_div,
            "var_main_term": (weight**2) * (1.0 - float(probs[t])) / n_div**2,
            "pair_numer": None,
            "var_pair_term": None,
        }
        if (
            has_pairs
            and t + 1 < n_vis
            and outcome.smi[t + 1]
            and y[t] != 0.0
            and y[t + 1] != 0.0
        ):
            if stabilized:
                bracket = float(succ0[t]) - (1.0 - float(probs[t])) / float(
                    n_vis - 1 - t
                )
                cond = float(z[t]) + (1.0 - float(z[t])) * bracket
            else:
                cond = float(z[t]) + float(succ0[t]) * (1.0 - float(z[t]))
            numer = cond - float(probs[t + 1])
            denom = float(probs[t + 1]) * float(probs[t]) * cond
            row["pair_numer"] = numer
            row["var_pair_term"] = (
                2.0 * float(y[t]) * float(y[t + 1]) * numer / denom / n_div**2
            )
        rows.append(row)
    return rows
