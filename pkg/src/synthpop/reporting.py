"""Export, selection, and audit helpers for finished runs.

Everything here writes deterministic bytes: CSV rows use ``\\n`` line
endings and a fixed float format, JSON manifests sort their keys. Two runs
that produce equal populations therefore produce equal files, which is what
lets a re-run be compared with a plain byte diff.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .census_data import AttributeSchema, ContingencyTable, marginalize
from .errors import DataError
from .fitness import normalize_objectives
from .household_synthesis import SyntheticHousehold
from .nsga2 import ParetoArchive
from .population_model import ENTITY_DTYPE, CandidatePopulation

# Stable float rendering for CSV output. 10 significant digits is enough to
# round-trip the objective magnitudes we emit without trailing noise.
_FLOAT_FORMAT = "{:.10g}"

_CHECKSUM_CHUNK = 1 << 20


def _fmt(value: float) -> str:
    return _FLOAT_FORMAT.format(float(value))


def _writer(handle) -> csv.writer:
    return csv.writer(handle, lineterminator="\n")


def file_checksum(path: str | Path) -> str:
    """Return the SHA-256 hex digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        while True:
            chunk = handle.read(_CHECKSUM_CHUNK)
            if not chunk:
                break
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Selecting one member from an archive


def select_best(
    archive: ParetoArchive,
    names: Sequence[str],
    weights: Mapping[str, float] | None = None,
) -> int:
    """Pick one archive member as the exported population.

    Objectives are min-max normalized across the archive so that scales do
    not leak into the choice, then combined as a weighted sum (weight 1.0
    for any objective not named). The member with the lowest score wins;
    ties go to the earliest member, which keeps the choice stable for a
    given archive order.
    """
    if not archive.members:
        raise DataError("archive is empty, nothing to select")
    weights = dict(weights or {})
    unknown = sorted(set(weights) - set(names))
    if unknown:
        raise DataError(f"selection weights name unknown objectives: {', '.join(unknown)}")
    for name, value in weights.items():
        if value < 0:
            raise DataError(f"selection weight for '{name}' must be non-negative")
    vector = np.array([weights.get(name, 1.0) for name in names], dtype=np.float64)
    if not vector.any():
        raise DataError("at least one selection weight must be positive")
    normalized = normalize_objectives(archive.objective_matrix())
    scores = normalized @ vector
    return int(np.argmin(scores))


# ---------------------------------------------------------------------------
# Population CSVs


def export_persons(path: str | Path, candidate: CandidatePopulation) -> None:
    """Write one row per person: ``person_id`` plus category labels."""
    attributes = candidate.attributes
    with open(path, "w", newline="") as handle:
        writer = _writer(handle)
        writer.writerow(["person_id", *(a.name for a in attributes)])
        for row_index in range(len(candidate)):
            row = candidate.codes[row_index]
            writer.writerow(
                [row_index, *(a.categories[code] for a, code in zip(attributes, row))]
            )


def load_persons(path: str | Path, schema: AttributeSchema) -> CandidatePopulation:
    """Read a persons CSV back into a candidate, attribute order from the header."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"persons file {path} is empty") from None
        if not header or header[0] != "person_id":
            raise DataError(f"persons file {path} must start with a person_id column")
        attributes = tuple(schema[name] for name in header[1:])
        rows = []
        for line_number, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path} line {line_number}: expected {len(header)} fields")
            try:
                codes = [a.index_of(label) for a, label in zip(attributes, row[1:])]
            except DataError as exc:
                raise DataError(f"{path} line {line_number}: {exc}") from None
            rows.append(codes)
    if not rows:
        raise DataError(f"persons file {path} has no rows")
    return CandidatePopulation(attributes, np.array(rows, dtype=ENTITY_DTYPE))


def export_households(path: str | Path, households: Sequence[SyntheticHousehold]) -> None:
    """Write one row per household; members are ``;``-joined person ids."""
    if not households:
        raise DataError("no households to export")
    names = list(households[0].assignments)
    with open(path, "w", newline="") as handle:
        writer = _writer(handle)
        writer.writerow(["household_id", *names, "member_ids", "complete"])
        for household in households:
            writer.writerow(
                [
                    household.household_id,
                    *(household.assignments[name] for name in names),
                    ";".join(str(pid) for pid in household.members),
                    int(household.complete),
                ]
            )


def load_households(path: str | Path) -> tuple[SyntheticHousehold, ...]:
    """Read a households CSV written by :func:`export_households`."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"households file {path} is empty") from None
        expected_tail = ["member_ids", "complete"]
        if header[:1] != ["household_id"] or header[-2:] != expected_tail:
            raise DataError(f"households file {path} has an unexpected header")
        names = header[1:-2]
        households = []
        for line_number, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path} line {line_number}: expected {len(header)} fields")
            members = tuple(int(p) for p in row[-2].split(";")) if row[-2] else ()
            households.append(
                SyntheticHousehold(
                    household_id=int(row[0]),
                    assignments=dict(zip(names, row[1:-2])),
                    members=members,
                    complete=bool(int(row[-1])),
                )
            )
    return tuple(households)


# ---------------------------------------------------------------------------
# Convergence and archive CSVs


def export_convergence(path: str | Path, history, names: Sequence[str]) -> None:
    """Write the per-generation descent trace in long form.

    One row per (generation, objective) with the archive-best and
    population-mean values, both on the history's fixed normalization so
    the file is plot-ready without re-scaling.
    """
    with open(path, "w", newline="") as handle:
        writer = _writer(handle)
        writer.writerow(["generation", "objective", "best", "mean"])
        for record in history.records:
            for column, name in enumerate(names):
                writer.writerow(
                    [
                        record.generation,
                        name,
                        _fmt(record.best_normalized[column]),
                        _fmt(record.mean_normalized[column]),
                    ]
                )


def export_pareto_pairs(
    path: str | Path,
    archive: ParetoArchive,
    names: Sequence[str],
    selected: int,
) -> None:
    """Write the archive's objective pairs, flagging the selected member.

    One row per archive member: member index, each objective min-max
    normalized across the archive (the same scaling selection uses), and a
    ``selected`` column that is 1 on exactly one row.
    """
    if not 0 <= selected < len(archive.members):
        raise DataError("selected index is outside the archive")
    matrix = normalize_objectives(archive.objective_matrix())
    with open(path, "w", newline="") as handle:
        writer = _writer(handle)
        writer.writerow(["member_id", *names, "selected"])
        for index, row in enumerate(matrix):
            writer.writerow([index, *(_fmt(v) for v in row), int(index == selected)])


def save_archive(path: str | Path, archive: ParetoArchive, names: Sequence[str]) -> None:
    """Persist an archive's rosters and objectives as an ``.npz`` bundle."""
    if not archive.members:
        raise DataError("archive is empty, nothing to save")
    codes = np.stack([member.candidate.codes for member in archive.members])
    attribute_names = [a.name for a in archive.members[0].candidate.attributes]
    np.savez_compressed(
        path,
        codes=codes,
        objectives=archive.objective_matrix(),
        objective_names=np.array(list(names)),
        attribute_names=np.array(attribute_names),
    )


def load_archive(
    path: str | Path, schema: AttributeSchema
) -> tuple[list[CandidatePopulation], np.ndarray, list[str]]:
    """Load an ``.npz`` archive bundle back into candidates.

    Returns the member rosters, their objective matrix, and the objective
    names, in saved order.
    """
    with np.load(path, allow_pickle=False) as bundle:
        codes = bundle["codes"]
        objectives = bundle["objectives"]
        objective_names = [str(n) for n in bundle["objective_names"]]
        attributes = tuple(schema[str(n)] for n in bundle["attribute_names"])
    members = [
        CandidatePopulation(attributes, codes[i].astype(ENTITY_DTYPE))
        for i in range(codes.shape[0])
    ]
    return members, objectives.astype(np.float64), objective_names


# ---------------------------------------------------------------------------
# RMSE audit


@dataclass(frozen=True)
class RmseRow:
    """Reconstruction error for one attribute of one table.

    ``level`` is ``category`` for per-category counts or ``group`` for
    counts summed over the attribute's declared groups.
    """

    table: str
    attribute: str
    level: str
    value: float


def rmse_rows(
    candidate: CandidatePopulation, tables: Sequence[ContingencyTable]
) -> list[RmseRow]:
    """Compare a roster against each table axis it covers.

    For every table and every axis of that table, the roster's observed
    category counts are scored against the table's marginal (scaled to the
    roster size) with root-mean-square error. Attributes that declare
    groups get a second row at group level.
    """
    rows: list[RmseRow] = []
    names = set(candidate.attribute_names)
    for table in tables:
        for attribute in table.axes:
            if attribute.name not in names:
                continue
            marginal = marginalize(table, attribute.name)
            target = marginal.values * (len(candidate) / marginal.total)
            observed = np.bincount(
                candidate.column(attribute.name), minlength=attribute.size
            ).astype(np.float64)
            value = float(np.sqrt(np.mean((observed - target) ** 2)))
            rows.append(RmseRow(table.name, attribute.name, "category", value))
            if attribute.groups:
                labels = sorted(set(attribute.groups.values()))
                members = {
                    label: [
                        attribute.index_of(c)
                        for c in attribute.categories
                        if attribute.groups.get(c) == label
                    ]
                    for label in labels
                }
                grouped_target = np.array([target[members[g]].sum() for g in labels])
                grouped_observed = np.array([observed[members[g]].sum() for g in labels])
                grouped = float(np.sqrt(np.mean((grouped_observed - grouped_target) ** 2)))
                rows.append(RmseRow(table.name, attribute.name, "group", grouped))
    return rows


def export_rmse(path: str | Path, rows: Sequence[RmseRow]) -> None:
    with open(path, "w", newline="") as handle:
        writer = _writer(handle)
        writer.writerow(["table", "attribute", "level", "rmse"])
        for row in rows:
            writer.writerow([row.table, row.attribute, row.level, _fmt(row.value)])


# ---------------------------------------------------------------------------
# Manifest and timings


def write_manifest(path: str | Path, payload: Mapping) -> None:
    """Write a manifest as canonical JSON: sorted keys, two-space indent."""
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_manifest(path: str | Path) -> dict:
    with open(path) as handle:
        return json.load(handle)


def export_timings(path: str | Path, rows: Sequence[tuple[str, float]]) -> None:
    """Write wall-clock timings, one labelled stage per row.

    Timings live in their own file so that the manifest and data exports
    stay byte-identical between runs that only differ in speed.
    """
    with open(path, "w", newline="") as handle:
        writer = _writer(handle)
        writer.writerow(["stage", "wall_seconds"])
        for label, seconds in rows:
            writer.writerow([label, _fmt(seconds)])
