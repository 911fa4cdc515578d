"""Run configuration: one YAML file describing a whole region build.

The file names a schema, an output directory, and one section per stage
(persons required, households optional). Every relative path inside the
file resolves against the file's own directory, so a config can move with
its fixtures. CLI overrides (seed, generations, population size, workers,
output directory) are applied here so that the rest of the pipeline only
ever sees a finished, immutable configuration.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, replace
from pathlib import Path

import yaml

from .census_data import (
    HOUSEHOLDS,
    PERSONS,
    AttributeSchema,
    RegionDataset,
    load_contingency_table,
    load_schema,
)
from .errors import DataError
from .fitness import METRICS, ObjectiveSpec
from .nsga2 import EvolutionConfig
from .population_model import SAMPLING_MODES, ValidationRule, load_rules

_EVOLUTION_KEYS = {
    "population_size",
    "generations",
    "crossover_probability",
    "mutation_probability",
    "max_retries",
    "archive_capacity",
    "offspring_size",
    "resample_probability",
    "resample_slots",
    "sampling",
}


@dataclass(frozen=True)
class StageConfig:
    """Resolved settings for one synthesis stage."""

    stage: str
    target_count: int
    table_paths: tuple[Path, ...]
    rules_path: Path | None
    objectives: tuple[ObjectiveSpec, ...]
    evolution: EvolutionConfig


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs, with all paths resolved to absolutes."""

    config_path: Path
    region: str
    schema_path: Path
    output_dir: Path
    seed: int
    workers: int
    validation_tolerance: float
    strict_validation: bool
    selection_weights: Mapping[str, float]
    persons: StageConfig
    households: StageConfig | None


def _require(mapping: Mapping, key: str, context: str):
    if key not in mapping:
        raise DataError(f"{context}: missing required key '{key}'")
    return mapping[key]


def _as_mapping(value, context: str) -> Mapping:
    if not isinstance(value, Mapping):
        raise DataError(f"{context}: expected a mapping")
    return value


def _parse_objective(entry, context: str) -> ObjectiveSpec:
    entry = _as_mapping(entry, context)
    unknown = set(entry) - {"name", "table", "attribute", "metric", "weight"}
    if unknown:
        raise DataError(f"{context}: unknown keys {sorted(unknown)}")
    metric = entry.get("metric", "trapezoid")
    if metric not in METRICS:
        raise DataError(
            f"{context}: metric must be one of {sorted(METRICS)}, got '{metric}'"
        )
    return ObjectiveSpec(
        name=str(_require(entry, "name", context)),
        table=str(_require(entry, "table", context)),
        attribute=entry.get("attribute"),
        metric=metric,
        weight=float(entry.get("weight", 1.0)),
    )


def _parse_evolution(entry, seed: int, context: str) -> EvolutionConfig:
    entry = _as_mapping(entry, context) if entry is not None else {}
    unknown = set(entry) - _EVOLUTION_KEYS
    if unknown:
        raise DataError(f"{context}: unknown evolution keys {sorted(unknown)}")
    if "sampling" in entry and entry["sampling"] not in SAMPLING_MODES:
        raise DataError(
            f"{context}: sampling must be one of {sorted(SAMPLING_MODES)},"
            f" got '{entry['sampling']}'"
        )
    return EvolutionConfig(seed=seed, **entry)


def _parse_stage(stage: str, entry, base: Path, seed: int) -> StageConfig:
    context = f"stage '{stage}'"
    entry = _as_mapping(entry, context)
    unknown = set(entry) - {"target_count", "tables", "rules", "objectives", "evolution"}
    if unknown:
        raise DataError(f"{context}: unknown keys {sorted(unknown)}")
    target = _require(entry, "target_count", context)
    if not isinstance(target, int) or target <= 0:
        raise DataError(f"{context}: target_count must be a positive integer")
    tables = _require(entry, "tables", context)
    if not isinstance(tables, list) or not tables:
        raise DataError(f"{context}: tables must be a non-empty list of paths")
    objectives = _require(entry, "objectives", context)
    if not isinstance(objectives, list) or not objectives:
        raise DataError(f"{context}: objectives must be a non-empty list")
    rules = entry.get("rules")
    table_paths = tuple((base / str(p)).resolve() for p in tables)
    rules_path = (base / str(rules)).resolve() if rules else None
    for file_path in (*table_paths, *([rules_path] if rules_path else [])):
        if not file_path.is_file():
            raise DataError(f"{context}: file not found: {file_path}")
    return StageConfig(
        stage=stage,
        target_count=target,
        table_paths=table_paths,
        rules_path=rules_path,
        objectives=tuple(
            _parse_objective(o, f"{context} objective {i}")
            for i, o in enumerate(objectives)
        ),
        evolution=_parse_evolution(entry.get("evolution"), seed, context),
    )


def load_run_config(
    path: str | Path,
    *,
    seed: int | None = None,
    generations: int | None = None,
    population_size: int | None = None,
    workers: int | None = None,
    output_dir: str | Path | None = None,
) -> RunConfig:
    """Load a run configuration, applying any CLI overrides.

    ``generations`` and ``population_size`` overrides apply to every stage;
    ``seed`` replaces the file's top-level seed before stage configs are
    built, so both stages always share it.
    """
    config_path = Path(path).resolve()
    try:
        with open(config_path) as handle:
            raw = yaml.safe_load(handle)
    except OSError as exc:
        raise DataError(f"cannot read config file {config_path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise DataError(f"config file {config_path} is not valid YAML: {exc}") from exc
    raw = _as_mapping(raw, str(config_path))
    known = {
        "region",
        "schema",
        "output_dir",
        "seed",
        "workers",
        "validation_tolerance",
        "strict_validation",
        "selection_weights",
        PERSONS,
        HOUSEHOLDS,
    }
    unknown = set(raw) - known
    if unknown:
        raise DataError(f"{config_path}: unknown keys {sorted(unknown)}")
    base = config_path.parent

    effective_seed = seed if seed is not None else int(raw.get("seed", 0))
    weights = raw.get("selection_weights") or {}
    weights = _as_mapping(weights, "selection_weights") if weights else {}
    for name, value in weights.items():
        if not isinstance(value, (int, float)) or value < 0:
            raise DataError(f"selection weight '{name}' must be a non-negative number")

    persons = _parse_stage(PERSONS, _require(raw, PERSONS, str(config_path)), base, effective_seed)
    households = None
    if HOUSEHOLDS in raw:
        households = _parse_stage(HOUSEHOLDS, raw[HOUSEHOLDS], base, effective_seed)

    stages = {PERSONS: persons, HOUSEHOLDS: households}
    if generations is not None or population_size is not None:
        for name, stage in stages.items():
            if stage is None:
                continue
            updates = {}
            if generations is not None:
                updates["generations"] = generations
            if population_size is not None:
                updates["population_size"] = population_size
            stages[name] = replace(stage, evolution=replace(stage.evolution, **updates))
        persons, households = stages[PERSONS], stages[HOUSEHOLDS]

    tolerance = float(raw.get("validation_tolerance", 0.01))
    if tolerance < 0:
        raise DataError("validation_tolerance must be non-negative")
    effective_workers = workers if workers is not None else int(raw.get("workers", 1))
    if effective_workers < 1:
        raise DataError("workers must be at least 1")

    out = Path(output_dir) if output_dir is not None else base / str(raw.get("output_dir", "out"))
    schema_path = (base / str(_require(raw, "schema", str(config_path)))).resolve()
    if not schema_path.is_file():
        raise DataError(f"{config_path}: schema file not found: {schema_path}")
    return RunConfig(
        config_path=config_path,
        region=str(_require(raw, "region", str(config_path))),
        schema_path=schema_path,
        output_dir=out.resolve(),
        seed=effective_seed,
        workers=effective_workers,
        validation_tolerance=tolerance,
        strict_validation=bool(raw.get("strict_validation", True)),
        selection_weights=dict(weights),
        persons=persons,
        households=households,
    )


def load_dataset(config: RunConfig) -> RegionDataset:
    """Load the schema and every configured table into one dataset.

    Table names are the file stems, which is what objective specs and the
    manifest refer to.
    """
    schema = load_schema(config.schema_path)
    person_tables = tuple(
        load_contingency_table(p, schema) for p in config.persons.table_paths
    )
    household_tables = ()
    target_households = 0
    if config.households is not None:
        household_tables = tuple(
            load_contingency_table(p, schema) for p in config.households.table_paths
        )
        target_households = config.households.target_count
    return RegionDataset(
        region=config.region,
        schema=schema,
        person_tables=person_tables,
        household_tables=household_tables,
        target_persons=config.persons.target_count,
        target_households=target_households,
    )


def load_stage_rules(config: RunConfig, schema: AttributeSchema) -> dict[str, tuple[ValidationRule, ...]]:
    """Load validation rules for each configured stage (empty tuple if none)."""
    rules: dict[str, tuple[ValidationRule, ...]] = {PERSONS: (), HOUSEHOLDS: ()}
    if config.persons.rules_path is not None:
        rules[PERSONS] = load_rules(config.persons.rules_path, schema)
    if config.households is not None and config.households.rules_path is not None:
        rules[HOUSEHOLDS] = load_rules(config.households.rules_path, schema)
    return rules
