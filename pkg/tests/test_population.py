"""Clustered population generation, visit order, and the variation ratio."""

import numpy as np
import pytest

from posa import (
    ClusterSpec,
    Population,
    compute_k,
    generate_clustered_population,
    load_population,
    save_population,
    serpentine_order,
    summarize,
)
from posa.exceptions import InfeasiblePopulationError, ZeroPrevalenceError


def tiny_pop(case_counts, area_size=25):
    """Population with the given per-area case counts on a square grid."""
    m = len(case_counts)
    side = int(np.sqrt(m))
    assert side * side == m
    n = m * area_size
    y = np.zeros(n, dtype=np.int8)
    area_ids = np.repeat(np.arange(m), area_size)
    for a, c in enumerate(case_counts):
        y[a * area_size: a * area_size + c] = 1
    return Population(
        y=y, area_ids=area_ids,
        area_sizes=np.full(m, area_size, dtype=np.int64),
        grid_rows=side, grid_cols=side,
        order=np.arange(n), order_rule="unit-id", seed=None,
    )


# ===== variation ratio =====

def test_variation_ratio_hand_value():
    # prevalences (0.16, 0, 0, 0): population-style SD over 4 areas gives
    # k = sqrt(3) exactly
    pop = tiny_pop([4, 0, 0, 0])
    assert compute_k(pop) == pytest.approx(np.sqrt(3.0), abs=1e-12)


def test_variation_ratio_uses_population_style_sd():
    pop = tiny_pop([2, 2, 2, 0])
    prevs = pop.area_case_counts() / 25
    p_bar = prevs.mean()
    sd = np.sqrt(np.mean((prevs - p_bar) ** 2))  # divide by M, not M - 1
    assert compute_k(pop) == pytest.approx(sd / p_bar, abs=1e-14)


def test_zero_prevalence_has_no_variation_ratio():
    pop = tiny_pop([0, 0, 0, 0])
    with pytest.raises(ZeroPrevalenceError):
        compute_k(pop)
    summary = summarize(pop)
    assert summary.variation_ratio is None
    assert summary.variation_defined is False


# ===== serpentine visit order =====

def test_serpentine_order_visits_grid_adjacent_areas():
    pop = generate_clustered_population(ClusterSpec(
        population_size=900, area_count=36, prevalence=0.05,
        n_clusters=2, clustered_fraction=0.7, seed=3,
    ))
    order = pop.area_visit_order()
    assert sorted(order.tolist()) == list(range(36))
    cols = pop.grid_cols
    for a, b in zip(order[:-1], order[1:]):
        dist = abs(a // cols - b // cols) + abs(a % cols - b % cols)
        assert dist == 1


def test_serpentine_order_keeps_units_of_an_area_together():
    pop = generate_clustered_population(ClusterSpec(
        population_size=400, area_count=16, prevalence=0.05,
        n_clusters=1, clustered_fraction=0.5, seed=7,
    ))
    seen = pop.area_ids[pop.order]
    changes = int((seen[1:] != seen[:-1]).sum())
    assert changes == pop.area_count - 1


def test_serpentine_order_function_is_idempotent():
    pop = generate_clustered_population(ClusterSpec(
        population_size=400, area_count=16, prevalence=0.05,
        n_clusters=1, clustered_fraction=0.5, seed=7,
    ))
    again = serpentine_order(pop)
    assert np.array_equal(pop.order, again.order)


# ===== generation =====

def test_case_count_matches_prevalence_exactly():
    pop = generate_clustered_population(ClusterSpec(
        population_size=10000, area_count=100, prevalence=0.005,
        n_clusters=3, clustered_fraction=0.8, seed=11,
    ))
    assert int(pop.y.sum()) == 50
    assert pop.size == 10000
    assert pop.area_count == 100


def test_generation_is_deterministic_in_the_seed():
    spec = ClusterSpec(population_size=2500, area_count=25, prevalence=0.01,
                       n_clusters=2, clustered_fraction=0.6, seed=21)
    a = generate_clustered_population(spec)
    b = generate_clustered_population(spec)
    assert a.equals(b)
    c = generate_clustered_population(
        ClusterSpec(population_size=2500, area_count=25, prevalence=0.01,
                    n_clusters=2, clustered_fraction=0.6, seed=22))
    assert not a.equals(c)


def test_cluster_anchors_pin_block_positions():
    spec = ClusterSpec(
        population_size=10000, area_count=100, prevalence=0.005,
        n_clusters=3, cluster_area_count=4,
        cluster_anchors=((2, 4), (5, 4), (8, 4)),
        clustered_fraction=1.0, even_within_blocks=True, seed=31,
    )
    pop = generate_clustered_population(spec)
    blocks = np.asarray(pop.cluster_areas)
    assert blocks.shape[0] == 12
    # every anchor area belongs to some block
    for r, c in spec.cluster_anchors:
        assert r * pop.grid_cols + c in set(blocks.tolist())
    # all cases are inside the blocks at clustered_fraction 1.0
    case_areas = set(pop.area_ids[pop.y == 1].tolist())
    assert case_areas <= set(blocks.tolist())


def test_even_deal_keeps_block_area_counts_within_one():
    spec = ClusterSpec(
        population_size=10000, area_count=100, prevalence=0.005,
        n_clusters=3, cluster_area_count=4,
        cluster_anchors=((2, 4), (5, 4), (8, 4)),
        clustered_fraction=1.0, even_within_blocks=True, seed=31,
    )
    pop = generate_clustered_population(spec)
    counts = pop.area_case_counts()[np.asarray(pop.cluster_areas)]
    assert counts.max() - counts.min() <= 1


def test_target_variation_ratio_is_reached():
    pop = generate_clustered_population(ClusterSpec(
        population_size=20000, area_count=100, prevalence=0.01,
        n_clusters=3, target_k=1.4, seed=41,
    ))
    assert abs(compute_k(pop) - 1.4) <= 0.05


def test_infeasible_quota_is_rejected():
    # a block of 1 area x 100 units cannot hold 150 clustered cases
    with pytest.raises(InfeasiblePopulationError):
        generate_clustered_population(ClusterSpec(
            population_size=10000, area_count=100, prevalence=0.02,
            n_clusters=1, cluster_area_count=1, clustered_fraction=0.75,
            seed=51,
        ))


def test_save_load_round_trip(tmp_path):
    pop = generate_clustered_population(ClusterSpec(
        population_size=900, area_count=36, prevalence=0.02,
        n_clusters=2, clustered_fraction=0.7, seed=61,
    ))
    path = tmp_path / "pop.population.csv"
    save_population(pop, path)
    back = load_population(path)
    assert pop.equals(back)
