"""Evolutionary architecture search for U-Net style image-translation generators."""

from .costmodel import CostReport, cost_report, layer_cost
from .decoder import (
    ARCHITECTURE_SCHEMA,
    ArchitectureGraph,
    LayerSpec,
    decode,
    export_architecture,
    import_architecture,
)
from .evolution import (
    PENALTY_EPSILON,
    Individual,
    OperatorConfig,
    Population,
    next_generation,
    op_crossover,
    op_mutate,
    op_select,
    roulette_pick,
    selection_probabilities,
)
from .fitness import (
    DEFAULT_LAMBDA,
    GAMMA_PRESETS,
    EvalRequest,
    EvalResponse,
    EvaluatorPool,
    EvaluatorProcess,
    SurrogateConfig,
    evaluate_individual,
    external_eval,
    fitness_value,
    gen_loss,
    surrogate_eval,
    surrogate_loss,
)
from .genome import (
    Genome,
    SearchSpace,
    baseline_genome,
    default_space,
    format_genome,
    parse_genome,
    random_genome,
    search_space_size,
    validate_genome,
)
from .searchloop import (
    ExternalSpec,
    ImageConfig,
    SearchConfig,
    SearchResult,
    SurrogateSpec,
    checkpoint_load,
    checkpoint_save,
    resume_search,
    run_search,
)

__version__ = "0.1.0"
