"""Hierarchical synthetic population generation by multi-objective search.

The package reconstructs person and household populations from census
contingency tables: an NSGA-II loop evolves fixed-length rosters to
minimise reconstruction error against the tables, persons first, then
households, and a greedy allocator nests one into the other.
"""

from .census_data import (
    Attribute,
    AttributeSchema,
    ContingencyTable,
    FrequencyVector,
    RegionDataset,
    attribute_weights,
    load_contingency_table,
    load_schema,
    marginalize,
    validate_dataset,
)
from .config import RunConfig, StageConfig, load_dataset, load_run_config, load_stage_rules
from .errors import DataError, EvolutionError, SynthPopError
from .fitness import (
    ObjectiveEvaluator,
    ObjectiveSpec,
    evaluate,
    l1_objective,
    normalize_objectives,
    rmse,
    trapezoid_area,
)
from .household_synthesis import (
    AllocationResult,
    CompositionSpec,
    SyntheticHousehold,
    allocate,
    classify_person,
    generate_households,
    parse_composition,
)
from .nsga2 import (
    EvolutionConfig,
    GenerationHistory,
    ParetoArchive,
    RankedCandidate,
    binary_tournament,
    crowding_distance,
    dominates,
    environmental_selection,
    evolve,
    fast_nondominated_sort,
    swap_mutation,
    two_point_crossover,
)
from .reporting import (
    RmseRow,
    export_convergence,
    export_households,
    export_pareto_pairs,
    export_persons,
    export_rmse,
    export_timings,
    file_checksum,
    load_archive,
    load_households,
    load_persons,
    read_manifest,
    rmse_rows,
    save_archive,
    select_best,
    write_manifest,
)
from .population_model import (
    CandidatePopulation,
    SamplingPlan,
    SyntheticPerson,
    ValidationRule,
    generate_candidate,
    load_rules,
    observed_frequencies,
    sample_person,
    validate_person,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationResult",
    "Attribute",
    "AttributeSchema",
    "CandidatePopulation",
    "CompositionSpec",
    "ContingencyTable",
    "DataError",
    "EvolutionConfig",
    "EvolutionError",
    "FrequencyVector",
    "GenerationHistory",
    "ObjectiveEvaluator",
    "ObjectiveSpec",
    "ParetoArchive",
    "RankedCandidate",
    "RegionDataset",
    "RmseRow",
    "RunConfig",
    "SamplingPlan",
    "StageConfig",
    "SynthPopError",
    "SyntheticHousehold",
    "SyntheticPerson",
    "ValidationRule",
    "allocate",
    "attribute_weights",
    "binary_tournament",
    "classify_person",
    "crowding_distance",
    "dominates",
    "environmental_selection",
    "evaluate",
    "evolve",
    "export_convergence",
    "export_households",
    "export_pareto_pairs",
    "export_persons",
    "export_rmse",
    "export_timings",
    "fast_nondominated_sort",
    "file_checksum",
    "generate_candidate",
    "generate_households",
    "l1_objective",
    "load_archive",
    "load_contingency_table",
    "load_dataset",
    "load_households",
    "load_persons",
    "load_run_config",
    "load_rules",
    "load_schema",
    "load_stage_rules",
    "marginalize",
    "normalize_objectives",
    "observed_frequencies",
    "parse_composition",
    "read_manifest",
    "rmse",
    "rmse_rows",
    "sample_person",
    "save_archive",
    "select_best",
    "swap_mutation",
    "trapezoid_area",
    "two_point_crossover",
    "validate_dataset",
    "validate_person",
    "write_manifest",
]
