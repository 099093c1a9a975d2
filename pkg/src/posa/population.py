"""Synthetic finite populations on an area grid, with controllable case clustering.

A population is a fixed vector of binary unit values ("cases") partitioned into
rectangular grid areas. The generator places a chosen fraction of all cases
inside a few contiguous blocks of areas and spreads the remainder uniformly,
which is the standard way to dial up between-area variation while holding the
overall prevalence fixed. The strength of clustering is summarized by the
ratio k = SD(area prevalences) / overall prevalence.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import InfeasiblePopulationError, ZeroPrevalenceError

__all__ = [
    "ClusterSpec",
    "Population",
    "PopulationSummary",
    "generate_clustered_population",
    "summarize",
    "compute_k",
    "serpentine_order",
    "save_population",
    "load_population",
]


@dataclass(frozen=True)
class ClusterSpec:
    """Recipe for a clustered binary population on an area grid.

    Parameters
    ----------
    population_size : int
        Total number of units N.
    area_count : int
        Number of areas M. The grid is ``grid_rows x grid_cols``; when those
        are omitted M must be a perfect square.
    prevalence : float
        Overall case fraction. The number of cases is ``round(N * prevalence)``.
    n_clusters : int
        Number of contiguous high-prevalence blocks.
    clustered_fraction : float
        Fraction of all cases placed inside the cluster blocks; the remainder
        is spread uniformly over units outside the blocks. 0 disables
        clustering entirely (cases uniform over the whole population).
    cluster_area_count : int or None
        Areas per cluster block. Default scales with the grid
        (``max(1, round(M / 45))``) so the block footprint stays proportionate.
    cluster_anchors : tuple of (row, col) or None
        Fixed grid positions for the blocks, one per cluster. None (default)
        places them at random. Pinning the anchors lets a family of
        populations share one geometry so that only the case concentration
        varies between them.
    even_within_blocks : bool
        Deal each block's case quota round-robin across its areas instead of
        scattering it over the block's units. With few cases per block the
        scatter can starve individual areas by luck; the deal keeps every
        block area's count within one of its neighbours'. Which persons
        within an area are the cases stays random.
    target_k : float or None
        If set, ``clustered_fraction`` is tuned by bisection until the realized
        variation ratio k is within 0.05 of the target (at most 100 trials).
    seed : int
        Seed for all randomness in generation.
    """

    population_size: int
    area_count: int
    prevalence: float
    n_clusters: int = 3
    clustered_fraction: float = 0.0
    cluster_area_count: int | None = None
    cluster_anchors: "tuple | None" = None
    even_within_blocks: bool = False
    target_k: float | None = None
    grid_rows: int | None = None
    grid_cols: int | None = None
    seed: int = 0

    def grid_shape(self) -> tuple[int, int]:
        if self.grid_rows is not None and self.grid_cols is not None:
            if self.grid_rows * self.grid_cols != self.area_count:
                raise InfeasiblePopulationError(
                    f"grid {self.grid_rows}x{self.grid_cols} does not hold "
                    f"{self.area_count} areas"
                )
            return self.grid_rows, self.grid_cols
        side = round(self.area_count ** 0.5)
        if side * side != self.area_count:
            raise InfeasiblePopulationError(
                f"area_count={self.area_count} is not a perfect square; "
                "pass grid_rows and grid_cols explicitly"
            )
        return side, side


@dataclass(frozen=True)
class Population:
    """A realized finite population and its visit order.

    ``y`` holds one binary value per unit; ``area_ids`` maps each unit to its
    area; ``order`` is the permutation of unit indices that a list-sequential
    design walks. Unit ``order[t]`` is visited at step t.
    """

    y: np.ndarray
    area_ids: np.ndarray
    area_sizes: np.ndarray
    grid_rows: int
    grid_cols: int
    order: np.ndarray
    order_rule: str = "serpentine"
    seed: int | None = None
    cluster_areas: tuple[int, ...] = field(default_factory=tuple)

    @property
    def size(self) -> int:
        return int(self.y.shape[0])

    @property
    def area_count(self) -> int:
        return int(self.area_sizes.shape[0])

    @property
    def prevalence(self) -> float:
        return float(self.y.sum()) / self.size

    def area_case_counts(self) -> np.ndarray:
        """Number of cases in each area, indexed by area id."""
        return np.bincount(self.area_ids, weights=self.y, minlength=self.area_count)

    def area_prevalences(self) -> np.ndarray:
        return self.area_case_counts() / self.area_sizes

    def area_visit_order(self) -> np.ndarray:
        """Area ids in the order their units are first visited."""
        seen = self.area_ids[self.order]
        _, first = np.unique(seen, return_index=True)
        return seen[np.sort(first)]

    def equals(self, other: "Population") -> bool:
        return (
            np.array_equal(self.y, other.y)
            and np.array_equal(self.area_ids, other.area_ids)
            and np.array_equal(self.area_sizes, other.area_sizes)
            and np.array_equal(self.order, other.order)
            and (self.grid_rows, self.grid_cols, self.order_rule, self.seed,
                 tuple(self.cluster_areas))
            == (other.grid_rows, other.grid_cols, other.order_rule, other.seed,
                tuple(other.cluster_areas))
        )


@dataclass(frozen=True)
class PopulationSummary:
    """Headline figures for a population.

    ``variation_ratio`` is k = SD(area prevalences) / overall prevalence,
    or None (with ``variation_defined=False``) when there are no cases.
    """

    population_size: int
    area_count: int
    prevalence: float
    case_count: int
    between_area_sd: float
    variation_ratio: float | None
    variation_defined: bool

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "area_count": self.area_count,
            "prevalence": self.prevalence,
            "case_count": self.case_count,
            "between_area_sd": self.between_area_sd,
            "variation_ratio": self.variation_ratio,
            "variation_defined": self.variation_defined,
        }


def summarize(pop: Population) -> PopulationSummary:
    """Compute the :class:`PopulationSummary` for a population."""
    prevs = pop.area_prevalences()
    sd = float(np.sqrt(np.mean((prevs - prevs.mean()) ** 2)))
    cases = int(pop.y.sum())
    if cases == 0:
        ratio, defined = None, False
    else:
        ratio, defined = sd / pop.prevalence, True
    return PopulationSummary(
        population_size=pop.size,
        area_count=pop.area_count,
        prevalence=pop.prevalence,
        case_count=cases,
        between_area_sd=sd,
        variation_ratio=ratio,
        variation_defined=defined,
    )


def compute_k(pop: Population) -> float:
    """Between-area variation ratio k = SD(area prevalences) / overall prevalence.

    The SD is the population-style standard deviation over the M area
    prevalences (divide by M, not M-1).

    Raises
    ------
    ZeroPrevalenceError
        If the population contains no cases, the ratio is undefined.
    """
    if pop.y.sum() == 0:
        raise ZeroPrevalenceError("population has no cases; k is undefined")
    prevs = pop.area_prevalences()
    sd = float(np.sqrt(np.mean((prevs - prevs.mean()) ** 2)))
    return sd / pop.prevalence


def serpentine_order(pop: Population) -> Population:
    """Return a copy of ``pop`` whose visit order snakes through the area grid.

    Areas are walked row by row, alternating direction (left-to-right on even
    rows, right-to-left on odd rows), so each area is grid-adjacent to its
    successor. Units inside an area are visited in ascending unit id.
    """
    order = _serpentine_unit_order(pop.area_ids, pop.grid_rows, pop.grid_cols)
    return replace(pop, order=order, order_rule="serpentine")


def _serpentine_area_order(rows: int, cols: int) -> np.ndarray:
    idx = np.arange(rows * cols).reshape(rows, cols)
    idx[1::2] = idx[1::2, ::-1]
    return idx.ravel()


def _serpentine_unit_order(area_ids: np.ndarray, rows: int, cols: int) -> np.ndarray:
    area_seq = _serpentine_area_order(rows, cols)
    by_area = [np.flatnonzero(area_ids == a) for a in range(rows * cols)]
    return np.concatenate([by_area[a] for a in area_seq])


def _grow_cluster_blocks(
    rows: int, cols: int, n_clusters: int, block_areas: int,
    rng: np.random.Generator, anchors=None,
) -> list[list[int]]:
    """Pick ``n_clusters`` disjoint contiguous area blocks of ``block_areas`` areas.

    Seeds come from ``anchors`` when given, otherwise they are drawn at
    random, retrying a few times to keep them apart. Each block is laid out
    as a brick about twice as wide as tall, so a row-serpentine visit order
    meets it as one or two runs of consecutive areas rather than scattered
    single cells; any cells lost to grid edges or to earlier blocks are
    refilled ring by ring around the seed.
    """
    m = rows * cols
    if n_clusters * block_areas > m:
        raise InfeasiblePopulationError(
            f"{n_clusters} clusters of {block_areas} areas exceed the "
            f"{m}-area grid"
        )
    if anchors is not None:
        if len(anchors) != n_clusters:
            raise InfeasiblePopulationError(
                f"{n_clusters} clusters need {n_clusters} anchors, "
                f"got {len(anchors)}"
            )
        seeds = []
        for r, c in anchors:
            if not (0 <= r < rows and 0 <= c < cols):
                raise InfeasiblePopulationError(
                    f"anchor ({r}, {c}) lies outside the {rows}x{cols} grid"
                )
            seeds.append(int(r) * cols + int(c))
        if len(set(seeds)) != len(seeds):
            raise InfeasiblePopulationError("anchors must be distinct")
    else:
        min_sep = int(np.ceil(block_areas ** 0.5)) + 1
        seeds = []
        for _ in range(200):
            cand = int(rng.integers(m))
            r, c = divmod(cand, cols)
            ok = all(
                max(abs(r - sr), abs(c - sc)) >= min_sep
                for sr, sc in (divmod(s, cols) for s in seeds)
            )
            if ok:
                seeds.append(cand)
                if len(seeds) == n_clusters:
                    break
        while len(seeds) < n_clusters:  # crowded grid: fall back to any free cell
            cand = int(rng.integers(m))
            if cand not in seeds:
                seeds.append(cand)

    taken: set[int] = set()
    blocks: list[list[int]] = []
    for s in seeds:
        sr, sc = divmod(s, cols)
        block: list[int] = []

        # brick footprint: width ~ sqrt(2 * size), rows filled left to right
        w = min(cols, max(1, int(np.ceil((2 * block_areas) ** 0.5))))
        h = int(np.ceil(block_areas / w))
        r0 = min(max(0, sr - (h - 1) // 2), max(0, rows - h))
        c0 = min(max(0, sc - (w - 1) // 2), max(0, cols - w))
        for rr in range(r0, min(rows, r0 + h)):
            for cc in range(c0, min(cols, c0 + w)):
                a = rr * cols + cc
                if a not in taken and len(block) < block_areas:
                    block.append(a)
                    taken.add(a)

        radius = 1  # crowded or clipped: refill from rings around the seed
        while len(block) < block_areas and radius <= max(rows, cols):
            ring = [
                rr * cols + cc
                for rr in range(max(0, sr - radius), min(rows, sr + radius + 1))
                for cc in range(max(0, sc - radius), min(cols, sc + radius + 1))
                if max(abs(rr - sr), abs(cc - sc)) == radius
            ]
            for a in ring:
                if a not in taken and len(block) < block_areas:
                    block.append(a)
                    taken.add(a)
            radius += 1
        if len(block) < block_areas:
            raise InfeasiblePopulationError(
                "could not grow disjoint cluster blocks; reduce n_clusters "
                "or cluster_area_count"
            )
        blocks.append(sorted(block))
    return blocks


def _place_cases(spec: ClusterSpec, clustered_fraction: float,
                 rng: np.random.Generator) -> tuple[np.ndarray, list[list[int]]]:
    """Return (y vector, cluster blocks) for one concrete draw."""
    n = spec.population_size
    rows, cols = spec.grid_shape()
    m = spec.area_count
    base, extra = divmod(n, m)
    sizes = np.full(m, base, dtype=np.int64)
    sizes[:extra] += 1
    area_ids = np.repeat(np.arange(m), sizes)

    n_cases = round(n * spec.prevalence)
    y = np.zeros(n, dtype=np.int8)
    if n_cases == 0:
        return y, []

    if clustered_fraction <= 0.0:
        y[rng.choice(n, size=n_cases, replace=False)] = 1
        return y, []

    block_areas = spec.cluster_area_count or max(1, round(m / 45))
    blocks = _grow_cluster_blocks(rows, cols, spec.n_clusters, block_areas, rng,
                                  anchors=spec.cluster_anchors)
    in_cluster = np.isin(area_ids, np.concatenate([np.array(b) for b in blocks]))

    n_clustered = round(clustered_fraction * n_cases)
    n_outside = n_cases - n_clustered
    outside_units = np.flatnonzero(~in_cluster)
    if n_outside > outside_units.size:
        raise InfeasiblePopulationError("more uniform cases than units outside clusters")

    # near-equal split of the clustered cases across blocks
    quota = np.full(spec.n_clusters, n_clustered // spec.n_clusters)
    quota[: n_clustered % spec.n_clusters] += 1
    for block, q in zip(blocks, quota):
        if spec.even_within_blocks:
            # deal the quota round-robin over the block's areas, then draw
            # that many persons within each area
            per_area = np.full(len(block), int(q) // len(block))
            per_area[: int(q) % len(block)] += 1
            for a, qa in zip(block, per_area):
                pool = np.flatnonzero(area_ids == a)
                if qa > pool.size:
                    raise InfeasiblePopulationError(
                        f"area {a} of {pool.size} units cannot hold {qa} cases; "
                        "increase cluster_area_count"
                    )
                if qa:
                    y[rng.choice(pool, size=int(qa), replace=False)] = 1
        else:
            pool = np.flatnonzero(np.isin(area_ids, np.array(block)))
            if q > pool.size:
                raise InfeasiblePopulationError(
                    f"cluster block of {pool.size} units cannot hold {q} cases; "
                    "increase cluster_area_count"
                )
            y[rng.choice(pool, size=int(q), replace=False)] = 1
    if n_outside:
        y[rng.choice(outside_units, size=n_outside, replace=False)] = 1
    return y, blocks


def generate_clustered_population(spec: ClusterSpec) -> Population:
    """Generate a population from a :class:`ClusterSpec`.

    Deterministic given the spec (including its seed). When ``target_k`` is
    set, the clustered fraction is tuned by bisection until the realized k is
    within 0.05 of the target; each trial draws from a fresh stream derived
    from the spec seed and the trial index, so the search path itself is
    reproducible.

    Returns
    -------
    Population
        With the serpentine visit order applied.

    Raises
    ------
    InfeasiblePopulationError
        Capacity or grid constraints cannot be met, or ``target_k`` is not
        reached within 100 trials (the message reports the best k achieved).
    """
    rows, cols = spec.grid_shape()
    base, extra = divmod(spec.population_size, spec.area_count)
    sizes = np.full(spec.area_count, base, dtype=np.int64)
    sizes[:extra] += 1

    def build(frac: float, stream: int) -> Population:
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, stream]))
        y, blocks = _place_cases(spec, frac, rng)
        area_ids = np.repeat(np.arange(spec.area_count), sizes)
        pop = Population(
            y=y,
            area_ids=area_ids,
            area_sizes=sizes,
            grid_rows=rows,
            grid_cols=cols,
            order=np.arange(spec.population_size),
            order_rule="unit-id",
            seed=spec.seed,
            cluster_areas=tuple(a for b in blocks for a in b),
        )
        return serpentine_order(pop)

    if spec.target_k is None:
        return build(spec.clustered_fraction, 0)

    # Bisection on the clustered fraction; k is nondecreasing in it.
    lo, hi = 0.0, 1.0
    frac = spec.clustered_fraction if 0.0 < spec.clustered_fraction < 1.0 else 0.5
    best_k = np.nan
    for trial in range(100):
        pop = build(frac, trial)
        try:
            k = compute_k(pop)
        except ZeroPrevalenceError:
            raise InfeasiblePopulationError("target_k set but prevalence is 0")
        if np.isnan(best_k) or abs(k - spec.target_k) < abs(best_k - spec.target_k):
            best_k = k
        if abs(k - spec.target_k) <= 0.05:
            return pop
        if k < spec.target_k:
            lo = frac
        else:
            hi = frac
        frac = (lo + hi) / 2.0
    raise InfeasiblePopulationError(
        f"target_k={spec.target_k} not reached within 100 trials; "
        f"closest achieved k = {best_k:.3f}"
    )


# ===== serialization =====

def save_population(pop: Population, csv_path: str | Path) -> None:
    """Write unit rows to CSV and a JSON header next to it.

    The CSV has one row per unit (unit_id, area_id, y, visit_rank); the
    header file ``<name>.header.json`` carries grid shape, order rule, seed,
    and cluster areas, so the pair round-trips losslessly.
    """
    csv_path = Path(csv_path)
    rank = np.empty(pop.size, dtype=np.int64)
    rank[pop.order] = np.arange(pop.size)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit_id", "area_id", "y", "visit_rank"])
        for i in range(pop.size):
            w.writerow([i, int(pop.area_ids[i]), int(pop.y[i]), int(rank[i])])
    header = {
        "population_size": pop.size,
        "area_count": pop.area_count,
        "grid_rows": pop.grid_rows,
        "grid_cols": pop.grid_cols,
        "order_rule": pop.order_rule,
        "seed": pop.seed,
        "cluster_areas": list(pop.cluster_areas),
        "area_sizes": [int(s) for s in pop.area_sizes],
    }
    with open(csv_path.with_suffix(".header.json"), "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_population(csv_path: str | Path) -> Population:
    """Inverse of :func:`save_population`."""
    csv_path = Path(csv_path)
    with open(csv_path.with_suffix(".header.json")) as fh:
        header = json.load(fh)
    n = header["population_size"]
    y = np.zeros(n, dtype=np.int8)
    area_ids = np.zeros(n, dtype=np.int64)
    rank = np.zeros(n, dtype=np.int64)
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            i = int(row["unit_id"])
            y[i] = int(row["y"])
            area_ids[i] = int(row["area_id"])
            rank[i] = int(row["visit_rank"])
    order = np.argsort(rank, kind="stable")
    return Population(
        y=y,
        area_ids=area_ids,
        area_sizes=np.asarray(header["area_sizes"], dtype=np.int64),
        grid_rows=header["grid_rows"],
        grid_cols=header["grid_cols"],
        order=order,
        order_rule=header["order_rule"],
        seed=header["seed"],
        cluster_areas=tuple(header["cluster_areas"]),
    )
