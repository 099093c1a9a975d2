#!/usr/bin/env python3
"""The size-stabilized design: guaranteed minimum, honest refusal.

Part one enumerates a small fixture and shows that every possible path
selects at least the required minimum. Part two runs the same rule at
desk scale (10,000 persons in 100 areas) where one seed completes and
another aborts: the constant correction that preserves the expected
sample size can be pushed out of [0, 1] by forced selections, and the
engine then refuses loudly instead of clamping. An abort is the only
failure mode; a completed run never undershoots the minimum.
"""

import numpy as np

from posa import (
    ClusterSpec,
    area_threshold_rule,
    cposa_rule,
    enumerate_design,
    generate_clustered_population,
    run_list_sequential,
    scenario_preset,
    summarize,
)
from posa.exceptions import SamplingDesignError

LINE = "-" * 64


def enumerated_minimum() -> None:
    y = np.array([0.0, 1.0, 0.0, 0.0])
    m = 2
    probs = np.full(4, m / 4)
    dist = enumerate_design(y, probs, cposa_rule(m))

    print(f"fixture: y={y.astype(int).tolist()}, minimum {m} of 4 units")
    print(f"{'path':>6} {'probability':>12} {'selected':>9}")
    for p in range(dist.probs.shape[0]):
        bits = "".join(str(int(b)) for b in dist.smi[p])
        print(f"{bits:>6} {float(dist.probs[p]):>12.6f} "
              f"{int(dist.smi[p].sum()):>9d}")
    floor = int(dist.smi.sum(axis=1).min())
    print(f"smallest sample over all paths: {floor} (minimum {m})")
    assert floor >= m


def desk_scale_runs() -> None:
    config = scenario_preset("desk3")
    pop = generate_clustered_population(ClusterSpec(**config.population))
    counts = np.bincount(pop.area_ids, weights=pop.y,
                         minlength=pop.area_count)
    sizes = pop.area_sizes.astype(np.float64)
    prevalence = summarize(pop).prevalence
    n_min = round(config.n_min_ratio * config.m_areas)
    probs = np.full(pop.area_count, n_min / pop.area_count)

    print(f"population: {pop.size} persons, {pop.area_count} areas, "
          f"prevalence {prevalence}")
    print(f"required minimum: {n_min} areas "
          f"(initial probabilities sum to {probs.sum():.0f})")

    for seed in (0, 1):
        rule = area_threshold_rule(sizes, np.full(pop.area_count, prevalence),
                                   size_stabilized=True,
                                   min_sample_size=n_min)
        try:
            outcome = run_list_sequential(counts, probs, rule, rng_seed=seed)
        except SamplingDesignError as exc:
            print(f"seed {seed}: ABORT -> {exc}")
            continue
        cases = int(counts[outcome.sample].sum())
        print(f"seed {seed}: completed with {outcome.realized_n} areas "
              f"(>= {n_min}), {cases} cases found")
        assert outcome.realized_n >= n_min


def main() -> None:
    print("part one: exhaustive check on a small fixture")
    print(LINE)
    enumerated_minimum()
    print()
    print("part two: desk scale, one completing seed and one refusal")
    print(LINE)
    desk_scale_runs()


if __name__ == "__main__":
    main()
