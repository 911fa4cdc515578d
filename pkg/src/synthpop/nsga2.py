"""NSGA-II evolutionary core: dominance, sorting, operators and the loop.

The engine minimises every objective. Determinism is strict: all random
draws happen on the main thread through named substreams of the master
seed, and worker threads only evaluate fitness (a pure function), so a
run's outputs are byte-identical at any worker count.
"""

from __future__ import annotations

import time
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .census_data import HOUSEHOLDS, PERSONS, RegionDataset
from .errors import DataError
from .fitness import ObjectiveEvaluator, ObjectiveSpec
from .population_model import (
    CandidatePopulation,
    CompiledRules,
    SamplingPlan,
    ValidationRule,
    generate_candidate,
)

_STAGE_IDS = {PERSONS: 0, HOUSEHOLDS: 1}
_MASK64 = (1 << 64) - 1

# Operation slots inside a generation's seed path.
_OP_INIT = 0
_OP_SELECT = 1
_OP_CROSSOVER = 2
_OP_MUTATE = 3


def substream(*keys: int) -> np.random.Generator:
    """Independent deterministic RNG for one position in the seed tree."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([k & _MASK64 for k in keys]))
    )


@dataclass(frozen=True)
class EvolutionConfig:
    """Parameters of one evolutionary stage."""

    population_size: int = 100
    generations: int = 500
    crossover_probability: float = 0.9
    mutation_probability: float = 0.2
    seed: int = 0
    max_retries: int = 100
    archive_capacity: int | None = None
    offspring_size: int | None = None
    resample_probability: float = 0.0
    resample_slots: int = 1
    sampling: str = "independent"

    def __post_init__(self) -> None:
        if self.population_size < 2 or self.population_size % 2:
            raise DataError("population size must be an even number of at least 2")
        if self.generations < 0:
            raise DataError("generation count must be non-negative")
        for label, p in (
            ("crossover", self.crossover_probability),
            ("mutation", self.mutation_probability),
            ("resample", self.resample_probability),
        ):
            if not 0.0 <= p <= 1.0:
                raise DataError(f"{label} probability must lie in [0, 1]")
        if self.max_retries < 1:
            raise DataError("max_retries must be at least 1")
        if self.resample_slots < 1:
            raise DataError("resample_slots must be at least 1")
        if self.archive_capacity is not None and self.archive_capacity < 1:
            raise DataError("archive capacity must be positive")
        if self.offspring_size is not None and (
            self.offspring_size < 2 or self.offspring_size % 2
        ):
            raise DataError("offspring size must be an even number of at least 2")
        if self.sampling not in ("independent", "joint"):
            raise DataError(f"unknown sampling mode {self.sampling!r}")

    @property
    def capacity(self) -> int:
        return self.archive_capacity or 10 * self.population_size

    @property
    def offspring(self) -> int:
        """Offspring per generation; defaults to the population size."""
        return self.offspring_size or self.population_size


@dataclass
class RankedCandidate:
    """A candidate with its front rank (1 is best) and crowding distance."""

    candidate: CandidatePopulation
    objectives: np.ndarray
    rank: int = 0
    crowding: float = 0.0


def dominates(a: np.ndarray, b: np.ndarray) -> bool:
    """True when vector a is no worse everywhere and better somewhere."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"objective vectors differ in shape: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def fast_nondominated_sort(vectors: Sequence[np.ndarray] | np.ndarray) -> list[list[int]]:
    """Partition objective vectors into fronts of mutually non-dominated
    indices, best front first. Duplicate vectors share a front."""
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ValueError("need a non-empty sequence of objective vectors")
    n = len(matrix)
    less_eq = (matrix[:, None, :] <= matrix[None, :, :]).all(axis=2)
    less = (matrix[:, None, :] < matrix[None, :, :]).any(axis=2)
    dominated_by = less_eq & less  # [i, j]: i dominates j
    counts = dominated_by.sum(axis=0).astype(np.int64)
    fronts: list[list[int]] = []
    assigned = np.zeros(n, dtype=bool)
    while not assigned.all():
        current = (counts == 0) & ~assigned
        idx = np.flatnonzero(current)
        fronts.append([int(i) for i in idx])
        assigned[current] = True
        counts -= dominated_by[current].sum(axis=0)
        counts[assigned] = -1
    return fronts


def crowding_distance(front: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Crowding distance of each member within one front.

    Boundary members of every objective get infinity; interior members sum
    normalised neighbour gaps. Objectives with zero range contribute
    nothing, so a front of identical vectors has zero interior distance.
    """
    matrix = np.asarray(front, dtype=np.float64)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ValueError("need a non-empty front")
    n, m = matrix.shape
    distance = np.zeros(n, dtype=np.float64)
    for j in range(m):
        order = np.argsort(matrix[:, j], kind="stable")
        distance[order[0]] = np.inf
        distance[order[-1]] = np.inf
        span = matrix[order[-1], j] - matrix[order[0], j]
        if span <= 0 or n < 3:
            continue
        gaps = (matrix[order[2:], j] - matrix[order[:-2], j]) / span
        distance[order[1:-1]] += gaps
    return distance


def rank_population(
    candidates: Sequence[CandidatePopulation], objectives: np.ndarray
) -> list[RankedCandidate]:
    """Attach front ranks and crowding distances, preserving input order."""
    if len(candidates) != len(objectives):
        raise ValueError("candidate and objective counts differ")
    ranked = [
        RankedCandidate(candidate=c, objectives=np.asarray(o, dtype=np.float64))
        for c, o in zip(candidates, objectives)
    ]
    for front_rank, front in enumerate(fast_nondominated_sort(objectives), start=1):
        distances = crowding_distance(np.asarray([objectives[i] for i in front]))
        for member, d in zip(front, distances):
            ranked[member].rank = front_rank
            ranked[member].crowding = float(d)
    return ranked


def binary_tournament(
    population: Sequence[RankedCandidate], rng: np.random.Generator
) -> RankedCandidate:
    """Pick two contestants uniformly; lower rank wins, then higher
    crowding distance, then a fair coin."""
    if not population:
        raise ValueError("tournament needs a non-empty population")
    i, j = rng.integers(0, len(population), size=2)
    a, b = population[int(i)], population[int(j)]
    if a.rank != b.rank:
        return a if a.rank < b.rank else b
    if a.crowding != b.crowding:
        return a if a.crowding > b.crowding else b
    return a if int(rng.integers(0, 2)) == 0 else b


def two_point_crossover(
    first: CandidatePopulation,
    second: CandidatePopulation,
    rng: np.random.Generator,
) -> tuple[CandidatePopulation, CandidatePopulation]:
    """Exchange the roster slice between two random cut points.

    Cuts satisfy 0 <= c1 <= c2 <= length; equal cuts yield copies of the
    parents, and cuts (0, length) yield the parents swapped.
    """
    if len(first) != len(second):
        raise ValueError("parents must have equal roster length")
    if first.attribute_names != second.attribute_names:
        raise ValueError("parents must share the same attribute layout")
    cut_a, cut_b = sorted(int(c) for c in rng.integers(0, len(first) + 1, size=2))
    child_a = first.codes.copy()
    child_b = second.codes.copy()
    child_a[cut_a:cut_b] = second.codes[cut_a:cut_b]
    child_b[cut_a:cut_b] = first.codes[cut_a:cut_b]
    return (
        CandidatePopulation(first.attributes, child_a),
        CandidatePopulation(second.attributes, child_b),
    )


def swap_mutation(
    candidate: CandidatePopulation,
    probability: float,
    rng: np.random.Generator,
    rules: Sequence[ValidationRule] = (),
) -> CandidatePopulation:
    """With the given probability, swap one attribute value between two
    random roster slots.

    Swapping conserves every attribute's frequency vector. If the swap
    would violate a validation rule it is reverted and the candidate
    returned unchanged.
    """
    if not 0.0 <= probability <= 1.0:
        raise ValueError("mutation probability must lie in [0, 1]")
    if rng.random() >= probability:
        return candidate
    codes = candidate.codes.copy()
    i, j = (int(x) for x in rng.integers(0, len(candidate), size=2))
    col = int(rng.integers(0, codes.shape[1]))
    codes[i, col], codes[j, col] = codes[j, col], codes[i, col]
    compiled = CompiledRules(rules, candidate.attributes)
    if not (compiled.row_ok(codes, i) and compiled.row_ok(codes, j)):
        return candidate
    return CandidatePopulation(candidate.attributes, codes)


def resample_mutation(
    candidate: CandidatePopulation,
    probability: float,
    plan: SamplingPlan,
    rng: np.random.Generator,
    rules: Sequence[ValidationRule] = (),
    slots: int = 1,
) -> CandidatePopulation:
    """With the given probability, redraw the attribute value of ``slots``
    random (slot, attribute) cells from the plan's marginal weights.

    Unlike the swap this shifts marginal frequencies, so it injects the
    fresh variation that recombination alone cannot reach once the
    population converges. Attributes are hit in proportion to their
    category count, since wide value spaces need more redraw traffic to
    drift. Roster slots whose redraws leave them violating a rule revert
    to their previous values; the others stand.
    """
    if not 0.0 <= probability <= 1.0:
        raise ValueError("mutation probability must lie in [0, 1]")
    if slots < 1:
        raise ValueError("slots must be at least 1")
    if rng.random() >= probability:
        return candidate
    codes = candidate.codes.copy()
    rows = rng.integers(0, len(candidate), size=slots)
    sizes = np.array([a.size for a in candidate.attributes], dtype=np.float64)
    cols = rng.choice(codes.shape[1], size=slots, p=sizes / sizes.sum())
    uniforms = rng.random(slots)
    for col in range(codes.shape[1]):
        hits = cols == col
        if not hits.any():
            continue
        cdf = np.cumsum(plan.weights(candidate.attributes[col].name))
        drawn = np.minimum(
            np.searchsorted(cdf, uniforms[hits], side="right"), len(cdf) - 1
        )
        codes[rows[hits], col] = drawn.astype(codes.dtype)
    compiled = CompiledRules(rules, candidate.attributes)
    touched = np.unique(rows)
    violating = touched[compiled.violation_mask(codes[touched])]
    if violating.size:
        codes[violating] = candidate.codes[violating]
    if np.array_equal(codes, candidate.codes):
        return candidate
    return CandidatePopulation(candidate.attributes, codes)


def environmental_selection(
    combined: Sequence[RankedCandidate], target_size: int
) -> list[RankedCandidate]:
    """Elitist truncation: take whole fronts while they fit, then fill from
    the next front by descending crowding distance (stable on ties)."""
    if target_size > len(combined):
        raise ValueError("target size exceeds the combined population")
    selected: list[RankedCandidate] = []
    for rank in sorted({rc.rank for rc in combined}):
        front = [rc for rc in combined if rc.rank == rank]
        if len(selected) + len(front) <= target_size:
            selected.extend(front)
            if len(selected) == target_size:
                break
        else:
            need = target_size - len(selected)
            front.sort(key=lambda rc: -rc.crowding)
            selected.extend(front[:need])
            break
    return selected


@dataclass(frozen=True)
class ArchiveMember:
    candidate: CandidatePopulation
    objectives: np.ndarray


class ParetoArchive:
    """Non-dominated candidates accumulated across all generations.

    Members keep insertion order. Inserting a candidate that is dominated
    by, or objective-identical to, a member is a no-op; inserting a
    dominator evicts everything it dominates. Over capacity, the most
    crowded member is dropped first, which preserves the per-objective
    extremes.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise DataError("archive capacity must be positive")
        self.capacity = capacity
        self._members: list[ArchiveMember] = []

    @classmethod
    def restore(
        cls,
        entries: Iterable[tuple[CandidatePopulation, np.ndarray]],
        capacity: int | None = None,
    ) -> "ParetoArchive":
        """Rebuild an archive from previously saved members.

        Entries are attached as-is, in order: a saved archive is already
        mutually non-dominated, so the insertion checks would all pass.
        """
        members = [
            ArchiveMember(candidate, np.asarray(objectives, dtype=np.float64))
            for candidate, objectives in entries
        ]
        archive = cls(capacity if capacity is not None else max(len(members), 1))
        archive._members = members
        return archive

    def __len__(self) -> int:
        return len(self._members)

    def __iter__(self) -> Iterable[ArchiveMember]:
        return iter(self._members)

    @property
    def members(self) -> tuple[ArchiveMember, ...]:
        return tuple(self._members)

    def objective_matrix(self) -> np.ndarray:
        if not self._members:
            raise DataError("archive is empty")
        return np.vstack([m.objectives for m in self._members])

    def best_values(self) -> np.ndarray:
        """Per-objective minimum across members; never worsens over a run."""
        return self.objective_matrix().min(axis=0)

    def insert(self, candidate: CandidatePopulation, objectives: np.ndarray) -> bool:
        objectives = np.asarray(objectives, dtype=np.float64)
        if self._members:
            matrix = self.objective_matrix()
            if matrix.shape[1] != objectives.shape[0]:
                raise ValueError("objective vector length does not match archive")
            le = (matrix <= objectives).all(axis=1)
            lt = (matrix < objectives).any(axis=1)
            if np.any(le & lt) or np.any((matrix == objectives).all(axis=1)):
                return False
            ge = (matrix >= objectives).all(axis=1)
            gt = (matrix > objectives).any(axis=1)
            evicted = ge & gt
            if evicted.any():
                self._members = [
                    m for m, gone in zip(self._members, evicted) if not gone
                ]
        self._members.append(ArchiveMember(candidate=candidate, objectives=objectives))
        while len(self._members) > self.capacity:
            distances = crowding_distance(self.objective_matrix())
            drop = int(np.argmin(distances))
            del self._members[drop]
        return True

    def update(
        self, entries: Iterable[tuple[CandidatePopulation, np.ndarray]]
    ) -> int:
        inserted = 0
        for candidate, objectives in entries:
            inserted += bool(self.insert(candidate, objectives))
        return inserted


@dataclass(frozen=True)
class GenerationRecord:
    """Objective statistics snapshotted after one generation.

    ``seconds`` is the wall-clock cost of producing this generation alone
    (for generation 0, of sampling and evaluating the initial population).
    """

    generation: int
    best: np.ndarray
    mean: np.ndarray
    best_normalized: np.ndarray
    mean_normalized: np.ndarray
    seconds: float


@dataclass
class GenerationHistory:
    """Per-generation traces with a fixed normalisation baseline.

    Normalised values divide raw values by the initial population's mean
    for each objective, so every trace starts near 1 and the descent is
    comparable across objectives of different scale.
    """

    names: tuple[str, ...]
    baseline: np.ndarray
    records: list[GenerationRecord] = field(default_factory=list)

    def normalize(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        out = np.zeros_like(values)
        np.divide(values, self.baseline, out=out, where=self.baseline > 0)
        return out

    def record(
        self, generation: int, best: np.ndarray, mean: np.ndarray, seconds: float
    ) -> GenerationRecord:
        entry = GenerationRecord(
            generation=generation,
            best=np.asarray(best, dtype=np.float64),
            mean=np.asarray(mean, dtype=np.float64),
            best_normalized=self.normalize(best),
            mean_normalized=self.normalize(mean),
            seconds=float(seconds),
        )
        self.records.append(entry)
        return entry

    @property
    def final(self) -> GenerationRecord:
        if not self.records:
            raise DataError("history is empty")
        return self.records[-1]


ProgressCallback = Callable[[str, int, np.ndarray, float], None]


def infer_stage(dataset: RegionDataset, specs: Sequence[ObjectiveSpec]) -> str:
    """Which pipeline stage a set of objectives belongs to."""
    person_names = {t.name for t in dataset.person_tables}
    household_names = {t.name for t in dataset.household_tables}
    referenced = {s.table for s in specs}
    if referenced <= person_names:
        return PERSONS
    if referenced <= household_names:
        return HOUSEHOLDS
    raise DataError(
        "objectives must reference tables of a single stage; got tables "
        f"{sorted(referenced)}"
    )


def _stage_attributes(dataset: RegionDataset, stage: str) -> tuple[str, ...]:
    """Roster attributes for a stage: the union of its tables' axes, in
    schema order."""
    present: set[str] = set()
    for table in dataset.stage_tables(stage):
        present.update(table.axis_names)
    return tuple(n for n in dataset.schema.names if n in present)


def _evaluate_population(
    candidates: Sequence[CandidatePopulation],
    evaluator: ObjectiveEvaluator,
    workers: int,
) -> np.ndarray:
    """Score candidates, optionally across threads; order is preserved so
    results do not depend on the worker count."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vectors = list(pool.map(evaluator, candidates))
    else:
        vectors = [evaluator(c) for c in candidates]
    for candidate, vector in zip(candidates, vectors):
        candidate.objectives = vector
    return np.vstack(vectors)


def evolve(
    dataset: RegionDataset,
    specs: Sequence[ObjectiveSpec],
    config: EvolutionConfig,
    rules: Sequence[ValidationRule] = (),
    *,
    workers: int = 1,
    weight_tables: Mapping[str, str] | None = None,
    progress: ProgressCallback | None = None,
) -> tuple[ParetoArchive, GenerationHistory]:
    """Run the full NSGA-II loop for one stage.

    Returns the Pareto archive of non-dominated rosters and the
    per-generation history. Deterministic for a given config seed.
    """
    if not specs:
        raise DataError("need at least one objective")
    if not any(s.weight > 0 for s in specs):
        raise DataError("at least one objective must carry positive weight")
    stage = infer_stage(dataset, specs)
    target = dataset.stage_target(stage)
    attributes = _stage_attributes(dataset, stage)
    plan = SamplingPlan.from_tables(
        dataset.schema,
        attributes,
        dataset.stage_tables(stage),
        mode=config.sampling,
        weight_tables=weight_tables,
    )
    evaluator = ObjectiveEvaluator(dataset, specs, target, plan.attributes)
    CompiledRules(rules, plan.attributes)  # fail fast on misconfigured rules
    stage_id = _STAGE_IDS[stage]
    seed = config.seed

    started = time.perf_counter()
    population = [
        generate_candidate(
            plan,
            target,
            rules,
            substream(seed, stage_id, 0, _OP_INIT, i),
            config.max_retries,
        )
        for i in range(config.population_size)
    ]
    objectives = _evaluate_population(population, evaluator, workers)
    ranked = rank_population(population, objectives)
    archive = ParetoArchive(config.capacity)
    archive.update((rc.candidate, rc.objectives) for rc in ranked if rc.rank == 1)
    history = GenerationHistory(
        names=evaluator.names, baseline=objectives.mean(axis=0)
    )
    entry = history.record(
        0, archive.best_values(), objectives.mean(axis=0), time.perf_counter() - started
    )
    if progress is not None:
        progress(stage, 0, entry.best, entry.seconds)

    for generation in range(1, config.generations + 1):
        started = time.perf_counter()
        select_rng = substream(seed, stage_id, generation, _OP_SELECT)
        cross_rng = substream(seed, stage_id, generation, _OP_CROSSOVER)
        mutate_rng = substream(seed, stage_id, generation, _OP_MUTATE)

        offspring: list[CandidatePopulation] = []
        for _ in range(config.offspring // 2):
            parent_a = binary_tournament(ranked, select_rng)
            parent_b = binary_tournament(ranked, select_rng)
            if cross_rng.random() < config.crossover_probability:
                child_a, child_b = two_point_crossover(
                    parent_a.candidate, parent_b.candidate, cross_rng
                )
            else:
                child_a = parent_a.candidate.copy()
                child_b = parent_b.candidate.copy()
            for child in (child_a, child_b):
                child = swap_mutation(
                    child, config.mutation_probability, mutate_rng, rules
                )
                if config.resample_probability > 0:
                    child = resample_mutation(
                        child,
                        config.resample_probability,
                        plan,
                        mutate_rng,
                        rules,
                        slots=config.resample_slots,
                    )
                offspring.append(child)

        offspring_objectives = _evaluate_population(offspring, evaluator, workers)
        combined_candidates = [rc.candidate for rc in ranked] + offspring
        combined_matrix = np.vstack([objectives, offspring_objectives])
        combined = rank_population(combined_candidates, combined_matrix)
        archive.update(
            (rc.candidate, rc.objectives) for rc in combined if rc.rank == 1
        )
        ranked = environmental_selection(combined, config.population_size)
        objectives = np.vstack([rc.objectives for rc in ranked])
        entry = history.record(
            generation,
            archive.best_values(),
            objectives.mean(axis=0),
            time.perf_counter() - started,
        )
        if progress is not None:
            progress(stage, generation, entry.best, entry.seconds)

    return archive, history
