"""List-sequential sampling engine with pluggable probability-updating rules.

Units are visited one at a time in a fixed order. At each step the current
unit is drawn with the probability in force for it at that moment, and a rule
then rewrites the probabilities of the not-yet-visited units as a function of
the draw outcome (and, for adaptive rules, of the observed value of the drawn
unit). The full N x N matrix of step-wise probabilities is never materialized;
the engine keeps a single updating vector, which is what makes runs O(N) in
memory.

Rules included here:

* ``poisson_rule``      - independent draws, no updating.
* ``posa_rule``         - adaptive: a selected case forces the next unit in
                          (probability 1); otherwise the next unit reverts to
                          its initial probability. Units beyond the immediate
                          successor are never touched.
* ``cposa_rule``        - adaptive forcing as above, plus a constant
                          correction spread over all remaining units that
                          steers the realized sample size to a fixed minimum.
* ``area_threshold_rule`` - area-level variant of either rule above, where
                          forcing triggers when the observed case count of a
                          selected area exceeds a per-area prevalence
                          threshold.

The value ``y_i`` of a unit is passed to a rule only when that unit was
selected; unselected units' values are never read, which mirrors how a real
sequential survey can only act on what it has observed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .exceptions import ProbabilityRangeError

__all__ = [
    "BOUNDARY_EPS",
    "UpdatingRule",
    "DesignOutcome",
    "run_list_sequential",
    "poisson_rule",
    "posa_rule",
    "cposa_rule",
    "area_threshold_rule",
    "save_outcome",
    "load_outcome",
    "save_trace_csv",
]

# Float drift this close to the [0, 1] boundary is snapped onto it; anything
# further out is a genuine design infeasibility and raises. The tolerance
# matches the 1e-9 used to check rule preconditions.
BOUNDARY_EPS = 1e-9

# (tail_probs, tail_initial, step, draw_prob, s, y_obs) -> None, mutating
# tail_probs in place. The tail views cover visit positions step+1 .. N-1,
# so a rule physically cannot rewrite history.
UpdateFn = Callable[[np.ndarray, np.ndarray, int, float, int, "float | None"], None]


@dataclass(frozen=True)
class UpdatingRule:
    """A named probability-updating rule.

    ``update`` mutates the probabilities of not-yet-visited units after each
    draw. ``required_initial_sum`` (when set) is validated against the sum of
    the initial probabilities before a run starts; the size-stabilized rule
    uses it to pin the minimum sample size.
    """

    rule_id: str
    update: UpdateFn
    required_initial_sum: float | None = None


@dataclass
class DesignOutcome:
    """Everything a single sequential run produced.

    All arrays are indexed by visit position t = 0..N-1. ``unit_ids[t]`` maps
    a visit position back to the caller's unit labels (identity for plain
    vector runs). ``draw_probs[t]`` is the probability that was in force for
    the unit at its own draw; ``succ_probs_pre_update[t]`` is the probability
    of unit t+1 as it stood just *before* step t's update (needed by the
    size-stabilized variance estimator), with NaN at the last position.
    """

    smi: np.ndarray
    draw_probs: np.ndarray
    succ_probs_pre_update: np.ndarray
    rule_id: str
    seed: int | None
    unit_ids: np.ndarray
    trace: "list[tuple] | None" = None
    prob_snapshots: "list[np.ndarray] | None" = None
    y_observed: np.ndarray = field(default=None)  # type: ignore[assignment]

    @property
    def size(self) -> int:
        return int(self.smi.shape[0])

    @property
    def sample(self) -> np.ndarray:
        """Visit positions of the selected units, ascending."""
        return np.flatnonzero(self.smi)

    @property
    def realized_n(self) -> int:
        return int(self.smi.sum())


def _snap_to_range(probs: np.ndarray, first_position: int) -> None:
    """Clamp float drift onto [0, 1]; raise beyond the tolerance."""
    lo = probs.min() if probs.size else 0.0
    hi = probs.max() if probs.size else 0.0
    if lo < -BOUNDARY_EPS:
        idx = int(np.argmin(probs))
        raise ProbabilityRangeError(
            first_position + idx, float(probs[idx]),
            "reduce the required minimum sample size or flatten the initial probabilities",
        )
    if hi > 1.0 + BOUNDARY_EPS:
        idx = int(np.argmax(probs))
        raise ProbabilityRangeError(
            first_position + idx, float(probs[idx]),
            "lower the initial probabilities or the forcing pressure",
        )
    if lo < 0.0 or hi > 1.0:
        np.clip(probs, 0.0, 1.0, out=probs)


def run_list_sequential(
    y,
    initial_probs,
    rule: UpdatingRule,
    rng_seed: "int | np.random.SeedSequence | np.random.Generator | None" = None,
    *,
    trace: bool = False,
    unit_ids=None,
    uniforms: "np.ndarray | None" = None,
) -> DesignOutcome:
    """Run one list-sequential pass over ``y`` and return the outcome.

    Parameters
    ----------
    y : array-like
        Unit values in visit order. Only the values of selected units are
        read. For area-level runs these are case counts rather than 0/1.
    initial_probs : array-like
        Selection probabilities in force before the first draw, in visit
        order. Must lie in [0, 1].
    rule : UpdatingRule
        Updating rule applied after every draw except the last.
    rng_seed : int, SeedSequence, Generator, optional
        Source of the Bernoulli draws. Identical seeds reproduce the run
        bit for bit.
    trace : bool
        When True, record one row per step (step, unit, prob_in_force, s,
        y_if_observed) plus a post-update snapshot of the whole probability
        vector. Snapshots cost O(N^2) memory; meant for small runs and tests.
    unit_ids : array-like, optional
        Labels for visit positions (defaults to 0..N-1).
    uniforms : ndarray, optional
        Pre-drawn uniforms, one per step, used instead of the RNG. Intended
        for bulk consistency tests.

    Raises
    ------
    ProbabilityRangeError
        If any probability leaves [0, 1] by more than a hair (1e-9), at the
        start or after any update. The error names the visit position and
        the offending value.
    ValueError
        If the rule demands a fixed initial-probability sum and the supplied
        probabilities do not honour it.
    """
    y = np.asarray(y)
    probs = np.array(initial_probs, dtype=np.float64, copy=True)
    n = probs.shape[0]
    if y.shape[0] != n:
        raise ValueError(f"y has {y.shape[0]} entries but probs has {n}")
    if n == 0:
        raise ValueError("empty population")
    _snap_to_range(probs, 0)
    if rule.required_initial_sum is not None:
        total = float(probs.sum())
        if abs(total - rule.required_initial_sum) > 1e-9:
            raise ValueError(
                f"rule {rule.rule_id!r} requires initial probabilities summing to "
                f"{rule.required_initial_sum}, got {total!r}"
            )
    initial = probs.copy()

    if uniforms is not None:
        u = np.asarray(uniforms, dtype=np.float64)
        seed_value = None
    else:
        if isinstance(rng_seed, np.random.Generator):
            rng, seed_value = rng_seed, None
        else:
            rng = np.random.default_rng(rng_seed)
            seed_value = rng_seed if isinstance(rng_seed, (int, np.integer)) else None
        u = rng.random(n)

    smi = np.zeros(n, dtype=bool)
    draw_probs = np.empty(n, dtype=np.float64)
    succ_pre = np.full(n, np.nan)
    y_observed = np.full(n, np.nan)
    rows: "list[tuple] | None" = [] if trace else None
    snapshots: "list[np.ndarray] | None" = [] if trace else None
    ids = np.arange(n) if unit_ids is None else np.asarray(unit_ids)

    update = rule.update
    for t in range(n):
        p = probs[t]
        # a draw probability within BOUNDARY_EPS of 0 or 1 is arithmetic
        # dust from repeated corrections; treat it as the boundary itself
        if p <= BOUNDARY_EPS:
            p = 0.0
        elif p >= 1.0 - BOUNDARY_EPS:
            p = 1.0
        draw_probs[t] = p
        s = 1 if u[t] < p else 0
        smi[t] = bool(s)
        y_obs = y[t] if s else None
        if s:
            y_observed[t] = y[t]
        if t < n - 1:
            succ_pre[t] = probs[t + 1]
            tail = probs[t + 1:]
            update(tail, initial[t + 1:], t, p, s, y_obs)
            _snap_to_range(tail, t + 1)
        if rows is not None:
            rows.append((t, int(ids[t]), float(p), s,
                         float(y[t]) if s else None))
            snapshots.append(probs.copy())

    return DesignOutcome(
        smi=smi,
        draw_probs=draw_probs,
        succ_probs_pre_update=succ_pre,
        rule_id=rule.rule_id,
        seed=int(seed_value) if seed_value is not None else None,
        unit_ids=ids,
        trace=rows,
        prob_snapshots=snapshots,
        y_observed=y_observed,
    )


# ===== rules =====

def poisson_rule() -> UpdatingRule:
    """Independent Bernoulli draws: the probability vector never changes."""

    def update(tail, tail_init, step, draw_prob, s, y_obs):
        return

    return UpdatingRule(rule_id="poisson", update=update)


def posa_rule() -> UpdatingRule:
    """Adaptive rule for binary values.

    After drawing unit i: if the unit was selected and is a case, the next
    unit's probability becomes 1 (a forced follow); otherwise the next unit
    reverts to its initial probability. No other unit is touched, so every
    unit beyond the immediate successor keeps its initial probability until
    its own draw.
    """

    def update(tail, tail_init, step, draw_prob, s, y_obs):
        if s and y_obs == 1:
            tail[0] = 1.0
        else:
            tail[0] = tail_init[0]

    return UpdatingRule(rule_id="posa", update=update)


def cposa_rule(min_sample_size: int) -> UpdatingRule:
    """Size-stabilized adaptive rule for binary values.

    Initial probabilities must sum to ``min_sample_size`` (a positive
    integer). After each draw, every remaining unit receives the constant
    correction -(s - p)/r, where p is the probability the drawn unit had and
    r is the number of remaining units; this conserves the sum of remaining
    probabilities plus realized selections, which is what guarantees at least
    ``min_sample_size`` selections by the end. A selected case additionally
    forces the immediate successor to probability 1 (the correction then
    applies to the units beyond it).
    """
    if min_sample_size != int(min_sample_size) or min_sample_size < 1:
        raise ValueError("min_sample_size must be a positive integer")
    m = float(min_sample_size)

    def update(tail, tail_init, step, draw_prob, s, y_obs):
        corr = (s - draw_prob) / tail.shape[0]
        if s and y_obs == 1:
            tail[1:] -= corr
            tail[0] = 1.0
        else:
            tail -= corr

    return UpdatingRule(rule_id="cposa", update=update, required_initial_sum=m)


def area_threshold_rule(
    area_sizes,
    thresholds,
    *,
    size_stabilized: bool = False,
    min_sample_size: "int | None" = None,
) -> UpdatingRule:
    """Area-level adaptive rule: forcing triggers on observed prevalence.

    ``y`` values are case counts per area, in visit order. A selected area
    whose observed prevalence (count / area size) strictly exceeds its
    threshold forces the next area in. With ``size_stabilized=False`` the
    non-forced successor reverts to its initial probability; with
    ``size_stabilized=True`` the constant correction of the size-stabilized
    rule is applied instead (``min_sample_size`` then must be given and the
    initial probabilities must sum to it).
    """
    sizes = np.asarray(area_sizes, dtype=np.float64)
    thr = np.asarray(thresholds, dtype=np.float64)
    if sizes.shape != thr.shape:
        raise ValueError("area_sizes and thresholds must have the same length")
    if size_stabilized:
        if min_sample_size is None or min_sample_size != int(min_sample_size) \
                or min_sample_size < 1:
            raise ValueError("size_stabilized rule needs a positive integer "
                             "min_sample_size")

    def update(tail, tail_init, step, draw_prob, s, y_obs):
        trigger = bool(s) and (y_obs / sizes[step]) > thr[step]
        if size_stabilized:
            corr = (s - draw_prob) / tail.shape[0]
            if trigger:
                tail[1:] -= corr
                tail[0] = 1.0
            else:
                tail -= corr
        else:
            tail[0] = 1.0 if trigger else tail_init[0]

    rule_id = "cposa-area-threshold" if size_stabilized else "posa-area-threshold"
    return UpdatingRule(
        rule_id=rule_id,
        update=update,
        required_initial_sum=float(min_sample_size) if size_stabilized else None,
    )


# ===== serialization =====

def _float_or_none(x: float) -> "float | None":
    return None if np.isnan(x) else float(x)


def save_outcome(outcome: DesignOutcome, path: str | Path) -> None:
    """Write a run record to JSON (stable key order, reproducible bytes)."""
    doc = {
        "rule_id": outcome.rule_id,
        "seed": outcome.seed,
        "realized_n": outcome.realized_n,
        "sample_positions": [int(t) for t in outcome.sample],
        "sample_unit_ids": [int(outcome.unit_ids[t]) for t in outcome.sample],
        "smi": [int(v) for v in outcome.smi],
        "draw_probs": [float(p) for p in outcome.draw_probs],
        "succ_probs_pre_update": [_float_or_none(p)
                                  for p in outcome.succ_probs_pre_update],
        "y_observed": [_float_or_none(v) for v in outcome.y_observed],
        "unit_ids": [int(i) for i in outcome.unit_ids],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_outcome(path: str | Path) -> DesignOutcome:
    with open(path) as fh:
        doc = json.load(fh)
    nan = float("nan")
    return DesignOutcome(
        smi=np.asarray(doc["smi"], dtype=bool),
        draw_probs=np.asarray(doc["draw_probs"], dtype=np.float64),
        succ_probs_pre_update=np.asarray(
            [nan if v is None else v for v in doc["succ_probs_pre_update"]],
            dtype=np.float64,
        ),
        rule_id=doc["rule_id"],
        seed=doc["seed"],
        unit_ids=np.asarray(doc["unit_ids"]),
        y_observed=np.asarray([nan if v is None else v for v in doc["y_observed"]],
                              dtype=np.float64),
    )


def save_trace_csv(outcome: DesignOutcome, path: str | Path) -> None:
    """Write the per-step trace (requires a run with ``trace=True``)."""
    if outcome.trace is None:
        raise ValueError("outcome carries no trace; rerun with trace=True")
    import csv as _csv

    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["step", "unit", "prob_in_force", "s_i", "y_i_if_observed"])
        for step, unit, p, s, y_obs in outcome.trace:
            w.writerow([step, unit, repr(p), s, "" if y_obs is None else repr(y_obs)])
