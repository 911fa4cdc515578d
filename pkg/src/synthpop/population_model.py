"""Candidate rosters, weighted entity sampling and rule-based validation.

A candidate solution is a fixed-length roster of synthetic entities
(persons in stage one, households in stage two) stored as a dense matrix
of category indices: one row per entity, one column per attribute. All
sampling draws run through a :class:`SamplingPlan`, which either treats
attributes as independent marginals or walks the stage tables and draws
jointly from their cells.
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .census_data import (
    Attribute,
    AttributeSchema,
    ContingencyTable,
    FrequencyVector,
    attribute_weights,
    marginalize,
)
from .errors import DataError, EvolutionError

ENTITY_DTYPE = np.int16

INDEPENDENT = "independent"
JOINT = "joint"
SAMPLING_MODES = (INDEPENDENT, JOINT)


@dataclass(frozen=True)
class SyntheticPerson:
    """One synthetic entity: a category code per configured attribute."""

    assignments: Mapping[str, str]

    def __getitem__(self, attribute: str) -> str:
        return self.assignments[attribute]


@dataclass(frozen=True)
class ValidationRule:
    """A forbidden conjunction of per-attribute category sets.

    An entity violates the rule when, for every clause, its value for the
    clause's attribute falls inside the forbidden set. The default rule
    set forbids child age bands combined with a married status.
    """

    name: str
    clauses: tuple[tuple[str, frozenset[str]], ...]
    message: str = ""

    def __post_init__(self) -> None:
        if not self.clauses:
            raise DataError(f"rule {self.name!r} has no clauses")
        for attribute, categories in self.clauses:
            if not categories:
                raise DataError(
                    f"rule {self.name!r} has an empty category set for {attribute!r}"
                )

    def violated_by(self, assignments: Mapping[str, str]) -> bool:
        return all(
            assignments.get(attribute) in categories
            for attribute, categories in self.clauses
        )


def validate_person(
    person: SyntheticPerson, rules: Sequence[ValidationRule]
) -> list[ValidationRule]:
    """All rules the person violates; empty means valid."""
    return [rule for rule in rules if rule.violated_by(person.assignments)]


def load_rules(path: str | Path, schema: AttributeSchema) -> tuple[ValidationRule, ...]:
    """Load validation rules from YAML.

    Expected layout::

        rules:
          - name: no-child-marriage
            message: child age bands cannot be married
            when:
              age: [a0_4, a5_9, a10_14, a15_17]
              marital: [married]
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"rules file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise DataError(f"rules file {path} is not valid YAML: {exc}") from None
    if raw is None:
        return ()
    if not isinstance(raw, dict) or not isinstance(raw.get("rules"), list):
        raise DataError(f"rules file {path} must define a 'rules' list")
    rules = []
    for entry in raw["rules"]:
        if not isinstance(entry, dict) or "name" not in entry or "when" not in entry:
            raise DataError(f"rules file {path}: each rule needs 'name' and 'when'")
        when = entry["when"]
        if not isinstance(when, dict) or not when:
            raise DataError(
                f"rules file {path}: rule {entry['name']!r} 'when' must be a "
                "non-empty mapping of attribute to category list"
            )
        clauses = []
        for attribute, categories in when.items():
            declared = schema[str(attribute)]
            if not isinstance(categories, list) or not categories:
                raise DataError(
                    f"rules file {path}: rule {entry['name']!r} needs a non-empty "
                    f"category list for {attribute!r}"
                )
            for code in categories:
                declared.index_of(str(code))
            clauses.append((str(attribute), frozenset(str(c) for c in categories)))
        rules.append(
            ValidationRule(
                name=str(entry["name"]),
                clauses=tuple(clauses),
                message=str(entry.get("message", "")),
            )
        )
    return tuple(rules)


class CompiledRules:
    """Rules bound to a roster's column layout for vectorised checking."""

    def __init__(self, rules: Sequence[ValidationRule], attributes: Sequence[Attribute]):
        columns = {a.name: i for i, a in enumerate(attributes)}
        self.rules = tuple(rules)
        self._bound: list[tuple[tuple[int, np.ndarray, frozenset[int]], ...]] = []
        for rule in self.rules:
            bound = []
            for attribute, categories in rule.clauses:
                if attribute not in columns:
                    raise DataError(
                        f"rule {rule.name!r} references attribute {attribute!r}, "
                        "which is not configured for this roster"
                    )
            for attribute, categories in rule.clauses:
                col = columns[attribute]
                declared = attributes[col]
                indices = np.array(
                    sorted(declared.index_of(c) for c in categories), dtype=ENTITY_DTYPE
                )
                bound.append((col, indices, frozenset(int(i) for i in indices)))
            self._bound.append(tuple(bound))

    def violation_mask(self, codes: np.ndarray) -> np.ndarray:
        """Boolean mask over roster rows: True where any rule is violated."""
        bad = np.zeros(len(codes), dtype=bool)
        for bound in self._bound:
            hit = np.ones(len(codes), dtype=bool)
            for col, indices, _ in bound:
                hit &= np.isin(codes[:, col], indices)
                if not hit.any():
                    break
            bad |= hit
        return bad

    def row_ok(self, codes: np.ndarray, row: int) -> bool:
        for bound in self._bound:
            if all(int(codes[row, col]) in members for col, _, members in bound):
                return False
        return True


def _cdf(probabilities: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(np.asarray(probabilities, dtype=np.float64))
    return cdf


def _draw(cdf: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cdf, uniforms, side="right")
    return np.minimum(idx, len(cdf) - 1)


@dataclass(frozen=True)
class _JointGroup:
    """One table's contribution to a joint draw: which columns it fills and
    how its cells are conditioned on columns filled by earlier tables."""

    table_name: str
    given_columns: tuple[int, ...]
    given_dims: tuple[int, ...]
    new_columns: tuple[int, ...]
    new_dims: tuple[int, ...]
    cdf_rows: np.ndarray  # (n_given_combos, n_new_combos) cumulative rows


class SamplingPlan:
    """How entity attribute values are drawn for one pipeline stage.

    Independent mode draws every attribute from its own marginal weight
    vector. Joint mode walks the stage tables in order and draws each
    table's not-yet-assigned axes from the table's cells, conditioned on
    any axes already assigned by earlier tables; this preserves the
    cross-attribute structure the tables record.
    """

    def __init__(
        self,
        attributes: tuple[Attribute, ...],
        mode: str,
        marginal_cdfs: dict[str, np.ndarray],
        joint_groups: tuple[_JointGroup, ...] = (),
    ):
        self.attributes = attributes
        self.mode = mode
        self._marginal_cdfs = marginal_cdfs
        self._joint_groups = joint_groups

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def weights(self, attribute: str) -> np.ndarray:
        """Marginal sampling probabilities for one attribute."""
        if attribute not in self._marginal_cdfs:
            raise DataError(f"sampling plan has no attribute {attribute!r}")
        cdf = self._marginal_cdfs[attribute]
        return np.diff(cdf, prepend=0.0)

    @classmethod
    def independent(
        cls, pairs: Sequence[tuple[Attribute, np.ndarray]]
    ) -> SamplingPlan:
        """Plan drawing each attribute from an explicit weight vector."""
        if not pairs:
            raise DataError("sampling plan needs at least one attribute")
        cdfs: dict[str, np.ndarray] = {}
        for attribute, weights in pairs:
            weights = np.asarray(weights, dtype=np.float64)
            if weights.shape != (attribute.size,):
                raise DataError(
                    f"weight vector for {attribute.name!r} has length "
                    f"{weights.shape}, expected {attribute.size}"
                )
            if np.any(weights < 0) or weights.sum() <= 0:
                raise DataError(f"weights for {attribute.name!r} must be "
                                "non-negative and sum to a positive value")
            cdfs[attribute.name] = _cdf(weights / weights.sum())
        return cls(tuple(a for a, _ in pairs), INDEPENDENT, cdfs)

    @classmethod
    def from_tables(
        cls,
        schema: AttributeSchema,
        attributes: Sequence[str],
        tables: Sequence[ContingencyTable],
        mode: str = INDEPENDENT,
        weight_tables: Mapping[str, str] | None = None,
    ) -> SamplingPlan:
        """Plan for a stage, deriving weights from the stage's tables.

        In independent mode each attribute's weights come from the first
        table listing it, marginalised; ``weight_tables`` overrides the
        source table per attribute name.
        """
        if mode not in SAMPLING_MODES:
            raise DataError(f"unknown sampling mode {mode!r}")
        if not attributes:
            raise DataError("sampling plan needs at least one attribute")
        resolved = tuple(schema[name] for name in attributes)
        by_name = {t.name: t for t in tables}
        overrides = dict(weight_tables or {})

        def source_table(attribute: str) -> ContingencyTable:
            if attribute in overrides:
                override = overrides[attribute]
                if override not in by_name:
                    raise DataError(
                        f"weight table {override!r} for {attribute!r} is not a "
                        "stage table"
                    )
                table = by_name[override]
                if attribute not in table.axis_names:
                    raise DataError(
                        f"weight table {override!r} has no axis {attribute!r}"
                    )
                return table
            for table in tables:
                if attribute in table.axis_names:
                    return table
            raise DataError(f"no stage table lists attribute {attribute!r}")

        marginal_cdfs = {
            a.name: _cdf(attribute_weights(marginalize(source_table(a.name), a.name)))
            for a in resolved
        }
        if mode == INDEPENDENT:
            return cls(resolved, mode, marginal_cdfs)

        columns = {a.name: i for i, a in enumerate(resolved)}
        assigned: set[str] = set()
        groups: list[_JointGroup] = []
        for table in tables:
            in_stage = [a for a in table.axes if a.name in columns]
            new = [a for a in in_stage if a.name not in assigned]
            if not new:
                continue
            given = [a for a in in_stage if a.name in assigned]
            groups.append(_build_joint_group(table, given, new))
            assigned.update(a.name for a in new)
        missing = [a.name for a in resolved if a.name not in assigned]
        if missing:
            raise DataError(
                f"joint sampling cannot cover attributes {missing}: no stage "
                "table lists them"
            )
        bound = tuple(
            _JointGroup(
                table_name=g.table_name,
                given_columns=tuple(columns[n] for n in g.given_columns),  # type: ignore[arg-type]
                given_dims=g.given_dims,
                new_columns=tuple(columns[n] for n in g.new_columns),  # type: ignore[arg-type]
                new_dims=g.new_dims,
                cdf_rows=g.cdf_rows,
            )
            for g in groups
        )
        return cls(resolved, mode, marginal_cdfs, bound)

    def sample_codes(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Draw a (count, n_attributes) matrix of category indices."""
        if count <= 0:
            raise DataError("sample count must be positive")
        codes = np.empty((count, len(self.attributes)), dtype=ENTITY_DTYPE)
        if self.mode == INDEPENDENT:
            for col, attribute in enumerate(self.attributes):
                cdf = self._marginal_cdfs[attribute.name]
                codes[:, col] = _draw(cdf, rng.random(count))
            return codes
        for group in self._joint_groups:
            if group.given_columns:
                rows = np.ravel_multi_index(
                    tuple(codes[:, c].astype(np.intp) for c in group.given_columns),
                    group.given_dims,
                )
                row_cdfs = group.cdf_rows[rows]
                uniforms = rng.random(count)
                flat = (row_cdfs <= uniforms[:, None]).sum(axis=1)
                flat = np.minimum(flat, row_cdfs.shape[1] - 1)
            else:
                flat = _draw(group.cdf_rows[0], rng.random(count))
            parts = np.unravel_index(flat, group.new_dims)
            for col, part in zip(group.new_columns, parts):
                codes[:, col] = part.astype(ENTITY_DTYPE)
        return codes


def _build_joint_group(
    table: ContingencyTable,
    given: Sequence[Attribute],
    new: Sequence[Attribute],
) -> _JointGroup:
    """Condition a table's cells on its already-assigned axes.

    Returns a group whose column tuples still hold attribute names; the
    caller rebinds them to roster column indices.
    """
    given_names = [a.name for a in given]
    new_names = [a.name for a in new]
    order = given_names + new_names + [
        n for n in table.axis_names if n not in given_names and n not in new_names
    ]
    perm = [table.axis_names.index(n) for n in order]
    counts = np.transpose(table.counts, perm)
    # Sum out axes that belong to neither set (off-stage extras).
    extra = len(table.axes) - len(given) - len(new)
    if extra:
        counts = counts.sum(axis=tuple(range(len(order) - extra, len(order))))
    given_dims = tuple(a.size for a in given)
    new_dims = tuple(a.size for a in new)
    n_given = int(np.prod(given_dims)) if given_dims else 1
    n_new = int(np.prod(new_dims))
    matrix = counts.reshape(n_given, n_new).astype(np.float64)
    totals = matrix.sum(axis=1, keepdims=True)
    overall = matrix.sum(axis=0)
    overall = overall / overall.sum()
    # Conditioning combinations with no recorded cells fall back to the
    # table's unconditional distribution rather than failing the draw.
    safe = np.where(totals > 0, matrix / np.where(totals > 0, totals, 1.0), overall)
    cdf_rows = np.cumsum(safe, axis=1)
    return _JointGroup(
        table_name=table.name,
        given_columns=tuple(given_names),  # type: ignore[arg-type]
        given_dims=given_dims,
        new_columns=tuple(new_names),  # type: ignore[arg-type]
        new_dims=new_dims,
        cdf_rows=cdf_rows,
    )


def sample_person(plan: SamplingPlan, rng: np.random.Generator) -> SyntheticPerson:
    """Draw one entity according to the plan's weights."""
    row = plan.sample_codes(1, rng)[0]
    return _decode_row(plan.attributes, row)


def _decode_row(attributes: Sequence[Attribute], row: np.ndarray) -> SyntheticPerson:
    return SyntheticPerson(
        assignments={
            attribute.name: attribute.categories[int(code)]
            for attribute, code in zip(attributes, row)
        }
    )


@dataclass(eq=False)
class CandidatePopulation:
    """A fixed-length roster of synthetic entities; one search-space point.

    ``codes`` is read-only after construction. Variation operators copy it,
    so the cached objective vector can never go stale.
    """

    attributes: tuple[Attribute, ...]
    codes: np.ndarray
    objectives: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        codes = np.asarray(self.codes)
        if codes.ndim != 2 or codes.shape[1] != len(self.attributes):
            raise DataError(
                f"roster matrix has shape {codes.shape}, expected "
                f"(n, {len(self.attributes)})"
            )
        if not np.issubdtype(codes.dtype, np.integer):
            codes = codes.astype(ENTITY_DTYPE)
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    def __len__(self) -> int:
        return self.codes.shape[0]

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def column_index(self, attribute: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == attribute:
                return i
        raise DataError(f"roster has no attribute {attribute!r}")

    def column(self, attribute: str) -> np.ndarray:
        return self.codes[:, self.column_index(attribute)]

    def person(self, index: int) -> SyntheticPerson:
        return _decode_row(self.attributes, self.codes[index])

    def iter_persons(self) -> Iterator[SyntheticPerson]:
        for row in self.codes:
            yield _decode_row(self.attributes, row)

    def copy(self) -> CandidatePopulation:
        return CandidatePopulation(self.attributes, self.codes.copy())

    def same_roster(self, other: CandidatePopulation) -> bool:
        return (
            self.attribute_names == other.attribute_names
            and bool(np.array_equal(self.codes, other.codes))
        )


def observed_frequencies(
    candidate: CandidatePopulation, attribute: str
) -> FrequencyVector:
    """Per-category counts for one attribute across the roster."""
    col = candidate.column_index(attribute)
    counts = np.bincount(
        candidate.codes[:, col].astype(np.intp),
        minlength=candidate.attributes[col].size,
    )
    return FrequencyVector(attribute=attribute, values=counts)


def generate_candidate(
    plan: SamplingPlan,
    size: int,
    rules: Sequence[ValidationRule],
    rng: np.random.Generator,
    max_retries: int = 100,
) -> CandidatePopulation:
    """Build a roster of ``size`` valid entities by rejection sampling.

    Every roster slot gets up to ``max_retries`` draws (the initial draw
    included); slots still violating a rule after that raise, which points
    at contradictory rules and weights.
    """
    if size <= 0:
        raise DataError("roster size must be positive")
    if max_retries < 1:
        raise DataError("max_retries must be at least 1")
    compiled = CompiledRules(rules, plan.attributes)
    codes = plan.sample_codes(size, rng)
    bad = compiled.violation_mask(codes)
    attempts = 1
    while bad.any():
        if attempts >= max_retries:
            raise EvolutionError(
                f"rejection sampling exhausted {max_retries} retries with "
                f"{int(bad.sum())} roster slots still violating rules; the rule "
                "set and sampling weights may be contradictory"
            )
        fresh = plan.sample_codes(size, rng)
        codes[bad] = fresh[bad]
        bad = compiled.violation_mask(codes)
        attempts += 1
    return CandidatePopulation(tuple(plan.attributes), codes)
