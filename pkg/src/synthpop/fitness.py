"""Objective metrics comparing census frequencies with roster frequencies.

Each objective projects a contingency table onto one attribute (or keeps
the full joint cells), rescales the census counts to the roster length,
and scores the absolute error between expected and observed frequencies.
Lower is better for every metric.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .census_data import Attribute, RegionDataset, marginalize
from .errors import DataError
from .population_model import CandidatePopulation

L1 = "l1"
TRAPEZOID = "trapezoid"
METRICS = (L1, TRAPEZOID)


def l1_objective(actual: np.ndarray, observed: np.ndarray) -> float:
    """Sum of absolute per-category differences."""
    actual, observed = _as_pair(actual, observed)
    return float(np.abs(actual - observed).sum())


def trapezoid_area(actual: np.ndarray, observed: np.ndarray) -> float:
    """Area under the absolute difference curve across ordered categories.

    Categories sit at unit spacing, so the area is the trapezoidal sum of
    consecutive difference pairs. A single category degenerates to the
    plain absolute difference.
    """
    actual, observed = _as_pair(actual, observed)
    diff = np.abs(actual - observed)
    if len(diff) == 1:
        return float(diff[0])
    return float(np.trapezoid(diff))


def rmse(actual: np.ndarray, observed: np.ndarray) -> float:
    """Root mean squared error across categories."""
    actual, observed = _as_pair(actual, observed)
    return float(np.sqrt(np.mean((actual - observed) ** 2)))


def _as_pair(actual: np.ndarray, observed: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    actual = np.asarray(actual, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    if actual.shape != observed.shape or actual.ndim != 1 or len(actual) == 0:
        raise ValueError(
            f"frequency vectors must be equal-length and one-dimensional, "
            f"got {actual.shape} and {observed.shape}"
        )
    return actual, observed


_METRIC_FUNCTIONS = {L1: l1_objective, TRAPEZOID: trapezoid_area}


def normalize_objectives(vectors: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Min-max normalise objective vectors onto [0, 1] per objective.

    Objectives constant across all vectors map to zero. Returns one row
    per input vector.
    """
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ValueError("need a non-empty sequence of objective vectors")
    lo = matrix.min(axis=0)
    span = matrix.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    out = (matrix - lo) / safe
    out[:, span <= 0] = 0.0
    return out


@dataclass(frozen=True)
class ObjectiveSpec:
    """One reconstruction-error objective.

    ``attribute`` selects the table axis to project onto; leave it None to
    fit the table's full joint cell distribution instead.
    """

    name: str
    table: str
    attribute: str | None = None
    metric: str = TRAPEZOID
    weight: float = 1.0

    def __post_init__(self) -> None:
        if not self.name:
            raise DataError("objective needs a name")
        if self.metric not in METRICS:
            raise DataError(
                f"objective {self.name!r} has unknown metric {self.metric!r}; "
                f"choose from {METRICS}"
            )
        if self.weight < 0:
            raise DataError(f"objective {self.name!r} has negative weight")


class ObjectiveEvaluator:
    """Precomputed targets for scoring rosters against one dataset.

    Instances are immutable after construction and evaluation reads only
    local state, so a single evaluator can score candidates from multiple
    threads concurrently.
    """

    def __init__(
        self,
        dataset: RegionDataset,
        specs: Sequence[ObjectiveSpec],
        roster_size: int,
        attributes: Sequence[Attribute],
    ):
        if not specs:
            raise DataError("need at least one objective")
        if roster_size <= 0:
            raise DataError("roster size must be positive")
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise DataError("objective names must be unique")
        columns = {a.name: i for i, a in enumerate(attributes)}
        self.specs = tuple(specs)
        self._plans: list[tuple] = []
        for spec in specs:
            table = dataset.table(spec.table)
            scale = roster_size / table.total
            metric = _METRIC_FUNCTIONS[spec.metric]
            if spec.attribute is not None:
                if spec.attribute not in columns:
                    raise DataError(
                        f"objective {spec.name!r} projects onto {spec.attribute!r}, "
                        "which is not a roster attribute"
                    )
                target = marginalize(table, spec.attribute).values * scale
                col = columns[spec.attribute]
                size = attributes[col].size
                self._plans.append(("marginal", metric, target, col, size))
            else:
                missing = [n for n in table.axis_names if n not in columns]
                if missing:
                    raise DataError(
                        f"objective {spec.name!r} fits full cells of {table.name!r} "
                        f"but the roster lacks axes {missing}"
                    )
                cols = tuple(columns[n] for n in table.axis_names)
                dims = tuple(a.size for a in table.axes)
                target = table.counts.ravel() * scale
                self._plans.append(("cells", metric, target, cols, dims))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.specs)

    @property
    def weights(self) -> np.ndarray:
        return np.array([s.weight for s in self.specs], dtype=np.float64)

    def __call__(self, candidate: CandidatePopulation) -> np.ndarray:
        codes = candidate.codes
        values = np.empty(len(self._plans), dtype=np.float64)
        for i, plan in enumerate(self._plans):
            kind, metric, target = plan[0], plan[1], plan[2]
            if kind == "marginal":
                col, size = plan[3], plan[4]
                observed = np.bincount(codes[:, col].astype(np.intp), minlength=size)
            else:
                cols, dims = plan[3], plan[4]
                flat = np.ravel_multi_index(
                    tuple(codes[:, c].astype(np.intp) for c in cols), dims
                )
                observed = np.bincount(flat, minlength=int(np.prod(dims)))
            values[i] = metric(target, observed)
        return values


def evaluate(
    candidate: CandidatePopulation,
    dataset: RegionDataset,
    specs: Sequence[ObjectiveSpec],
) -> np.ndarray:
    """Score one roster; convenience wrapper around ObjectiveEvaluator."""
    evaluator = ObjectiveEvaluator(dataset, specs, len(candidate), candidate.attributes)
    return evaluator(candidate)
