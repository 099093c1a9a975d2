"""Exhaustive enumeration oracle for list-sequential designs.

For a small population the complete probability law of a sequential design is
computable: walk both branches of every Bernoulli draw, apply the same
updating rule the engine applies, and collect every reachable selection path
with its exact probability. Everything downstream (estimator laws, indicator
moments, variance formulas) can then be validated against ground truth rather
than against a reimplementation of itself.

Branches whose probability is exactly zero are pruned, so forced draws
(probability 0 or 1) do not double the path count. Sums over paths use
compensated summation (``math.fsum``) to keep the arithmetic honest at the
1e-12 tolerances the checks run at.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import fsum

import numpy as np

from .engine import BOUNDARY_EPS, DesignOutcome, UpdatingRule, _snap_to_range
from .exceptions import EnumerationLimitError

__all__ = [
    "PathDistribution",
    "OracleMoments",
    "EstimatorLaw",
    "enumerate_design",
    "oracle_moments",
    "oracle_estimator_law",
    "ht_mean_values",
    "MAX_ENUMERABLE_UNITS",
    "case_draw_prob_floor",
    "path_outcome",
]

MAX_ENUMERABLE_UNITS = 16


@dataclass(frozen=True)
class PathDistribution:
    """Every reachable sample path of a design, with exact probabilities.

    Row p describes one path: ``smi[p]`` the selection indicators,
    ``probs[p]`` the path probability, ``draw_probs[p, t]`` the probability in
    force for unit t at its own draw on that path, and ``succ_pre[p, t]`` the
    probability of unit t+1 immediately before step t's update (NaN at the
    last step). ``y`` is the shared value vector in visit order.
    """

    y: np.ndarray
    initial_probs: np.ndarray
    rule_id: str
    smi: np.ndarray
    probs: np.ndarray
    draw_probs: np.ndarray
    succ_pre: np.ndarray

    @property
    def n_paths(self) -> int:
        return int(self.probs.shape[0])

    @property
    def size(self) -> int:
        return int(self.y.shape[0])

    def total_probability(self) -> float:
        return fsum(self.probs.tolist())


@dataclass(frozen=True)
class OracleMoments:
    """Exact indicator moments computed from a :class:`PathDistribution`.

    ``joint[i, j]`` is E(S_i S_j); ``cov[i, j]`` the covariance. Diagonals
    hold E(S_i^2) = E(S_i) and Var(S_i).
    """

    e_s: np.ndarray
    var_s: np.ndarray
    joint: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class EstimatorLaw:
    """Exact distribution of a statistic over all sample paths."""

    values: np.ndarray
    path_probs: np.ndarray
    expectation: float
    variance: float

    def support(self, decimals: int = 12) -> dict[float, float]:
        """Aggregate path probabilities by rounded statistic value."""
        out: dict[float, float] = {}
        for v, p in zip(self.values, self.path_probs):
            key = round(float(v), decimals)
            out[key] = out.get(key, 0.0) + float(p)
        return out


def enumerate_design(y, initial_probs, rule: UpdatingRule,
                     max_units: int = MAX_ENUMERABLE_UNITS) -> PathDistribution:
    """Enumerate every sample path of a design over a small population.

    Parameters
    ----------
    y : array-like
        Unit values in visit order.
    initial_probs : array-like
        Initial selection probabilities in visit order.
    rule : UpdatingRule
        The same rule object the engine would run.
    max_units : int
        Hard cap on the population size (at most 16; the path count is
        bounded by 2^N).

    Raises
    ------
    EnumerationLimitError
        If the population exceeds ``max_units``.
    ValueError
        If the rule's initial-sum requirement is violated.
    """
    y = np.asarray(y)
    init = np.array(initial_probs, dtype=np.float64, copy=True)
    n = init.shape[0]
    cap = min(max_units, MAX_ENUMERABLE_UNITS)
    if n > cap:
        raise EnumerationLimitError(
            f"population of {n} units exceeds the enumeration cap of {cap}"
        )
    if y.shape[0] != n or n == 0:
        raise ValueError("y and initial_probs must be equal-length and nonempty")
    _snap_to_range(init, 0)
    if rule.required_initial_sum is not None:
        total = float(init.sum())
        if abs(total - rule.required_initial_sum) > 1e-9:
            raise ValueError(
                f"rule {rule.rule_id!r} requires initial probabilities summing to "
                f"{rule.required_initial_sum}, got {total!r}"
            )

    smi_rows: list[np.ndarray] = []
    prob_list: list[float] = []
    draw_rows: list[np.ndarray] = []
    succ_rows: list[np.ndarray] = []

    smi_buf = np.zeros(n, dtype=np.int8)
    draw_buf = np.empty(n, dtype=np.float64)
    succ_buf = np.full(n, np.nan)

    def walk(t: int, probs: np.ndarray, path_prob: float) -> None:
        if t == n:
            smi_rows.append(smi_buf.copy())
            prob_list.append(path_prob)
            draw_rows.append(draw_buf.copy())
            succ_rows.append(succ_buf.copy())
            return
        p = float(probs[t])
        # snap arithmetic dust to the boundary, exactly as the engine does
        # at draw time; otherwise a branch whose true probability is zero
        # survives with weight ~1e-17 and its continuation can wander out
        # of [0, 1]
        if p <= BOUNDARY_EPS:
            p = 0.0
        elif p >= 1.0 - BOUNDARY_EPS:
            p = 1.0
        draw_buf[t] = p
        succ_buf[t] = probs[t + 1] if t < n - 1 else np.nan
        for s in (1, 0):
            branch_prob = p if s else 1.0 - p
            if branch_prob <= 0.0:
                continue
            smi_buf[t] = s
            nxt = probs.copy()
            if t < n - 1:
                tail = nxt[t + 1:]
                rule.update(tail, init[t + 1:], t, p, s, y[t] if s else None)
                _snap_to_range(tail, t + 1)
            walk(t + 1, nxt, path_prob * branch_prob)

    walk(0, init.copy(), 1.0)

    return PathDistribution(
        y=y,
        initial_probs=init,
        rule_id=rule.rule_id,
        smi=np.vstack(smi_rows),
        probs=np.asarray(prob_list, dtype=np.float64),
        draw_probs=np.vstack(draw_rows),
        succ_pre=np.vstack(succ_rows),
    )


def oracle_moments(dist: PathDistribution) -> OracleMoments:
    """Exact first and second moments of the selection indicators."""
    n = dist.size
    w = dist.probs
    s = dist.smi.astype(np.float64)
    e_s = np.array([fsum((s[:, i] * w).tolist()) for i in range(n)])
    joint = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            m = fsum((s[:, i] * s[:, j] * w).tolist())
            joint[i, j] = joint[j, i] = m
    cov = joint - np.outer(e_s, e_s)
    var_s = np.diag(cov).copy()
    return OracleMoments(e_s=e_s, var_s=var_s, joint=joint, cov=cov)


def ht_mean_values(dist: PathDistribution) -> np.ndarray:
    """Per-path value of the sequential inverse-probability mean estimator.

    Each selected unit contributes y / (probability in force at its own
    draw); the sum is divided by the population size. Unselected units
    contribute nothing, so paths on which a unit's probability collapsed to
    zero are still well defined (the unit simply cannot appear).
    """
    n = dist.size
    contrib = np.where(dist.smi == 1,
                       np.divide(dist.y, dist.draw_probs,
                                 out=np.zeros_like(dist.draw_probs),
                                 where=dist.draw_probs > 0),
                       0.0)
    return contrib.sum(axis=1) / n


def oracle_estimator_law(dist: PathDistribution, estimator=None) -> EstimatorLaw:
    """Exact law of a statistic under the enumerated design.

    ``estimator`` maps a :class:`PathDistribution` to one value per path;
    the default is the sequential inverse-probability mean
    (:func:`ht_mean_values`).
    """
    values = (estimator or ht_mean_values)(dist)
    values = np.asarray(values, dtype=np.float64)
    w = dist.probs
    mean = fsum((values * w).tolist())
    var = fsum(((values - mean) ** 2 * w).tolist())
    return EstimatorLaw(values=values, path_probs=w, expectation=mean, variance=var)


def case_draw_prob_floor(dist: PathDistribution) -> float:
    """Smallest probability any case had at its own draw, over all paths.

    Inverse-probability estimation is only exact when every case keeps a
    strictly positive draw probability on every reachable path; this is the
    quantity to inspect before trusting unbiasedness on a fixture. Returns
    +inf for populations without cases.
    """
    mask = dist.y != 0
    if not mask.any():
        return float("inf")
    return float(dist.draw_probs[:, mask].min())


def path_outcome(dist: PathDistribution, index: int) -> DesignOutcome:
    """Materialize one enumerated path as the outcome a live run would yield.

    Lets path-level quantities (estimates, variance estimates, report rows)
    be computed with the exact same functions that consume engine output,
    weighting each result by ``dist.probs[index]`` afterwards.
    """
    if not 0 <= index < dist.n_paths:
        raise IndexError(f"path index {index} out of range [0, {dist.n_paths})")
    smi = dist.smi[index].astype(bool)
    y = np.asarray(dist.y, dtype=np.float64)
    return DesignOutcome(
        smi=smi,
        draw_probs=dist.draw_probs[index].copy(),
        succ_probs_pre_update=dist.succ_pre[index].copy(),
        rule_id=dist.rule_id,
        seed=None,
        unit_ids=np.arange(dist.size),
        y_observed=np.where(smi, y, np.nan),
    )
