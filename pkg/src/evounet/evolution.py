"""Genetic machinery: roulette selection, the three operators, elitist stepping.

All randomness flows through an explicit numpy Generator, so a generation
step is a pure function of (population, operator config, rng state).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    EmptyPopulationError,
    NonpositiveFitnessError,
    UnevaluatedPopulationError,
)
from .genome import Genome, SearchSpace

#: Fitness assigned to individuals whose evaluation failed; keeps the
#: roulette denominator positive without letting failures reproduce.
PENALTY_EPSILON = 1e-9


@dataclass
class Individual:
    """A genome plus its evaluation bookkeeping."""

    genome: Genome
    fitness: float | None = None
    eval_record: object | None = None  # EvalResponse when evaluated
    penalized: bool = False

    def copy(self) -> "Individual":
        return replace(self)


@dataclass
class Population:
    individuals: list[Individual]
    generation: int = 0

    def __len__(self) -> int:
        return len(self.individuals)

    def best_index(self) -> int:
        """Index of the highest-fitness individual, ties toward lower index."""
        fitnesses = _require_evaluated(self)
        return int(max(range(len(fitnesses)), key=lambda j: (fitnesses[j], -j)))


@dataclass(frozen=True)
class OperatorConfig:
    """Probabilities of applying selection / crossover / mutation."""

    s1: float = 0.2
    s2: float = 0.7
    s3: float = 0.1

    def __post_init__(self):
        if min(self.s1, self.s2, self.s3) < 0:
            raise ValueError("operator probabilities must be >= 0")
        if abs(self.s1 + self.s2 + self.s3 - 1.0) > 1e-9:
            raise ValueError(
                f"operator probabilities must sum to 1, got {self.s1 + self.s2 + self.s3}"
            )


def selection_probabilities(fitnesses: list[float]) -> list[float]:
    """Fitness-proportional probabilities: Pr(j) = f_j / sum_k f_k."""
    if len(fitnesses) == 0:
        raise EmptyPopulationError("cannot select from an empty population")
    for j, f in enumerate(fitnesses):
        if not math.isfinite(f) or f <= 0:
            raise NonpositiveFitnessError(
                f"fitness at index {j} is {f}; all fitnesses must be finite and > 0"
            )
    total = sum(fitnesses)
    return [f / total for f in fitnesses]


def roulette_pick(probs: list[float], rng: np.random.Generator) -> int:
    """Sample an index with the given probabilities.

    Cumulative-sum inversion; a draw landing exactly on a boundary resolves
    to the lower index.
    """
    cumulative = np.cumsum(probs)
    u = rng.random()
    idx = int(np.searchsorted(cumulative, u, side="left"))
    return min(idx, len(probs) - 1)


def op_select(
    pop: Population, probs: list[float], rng: np.random.Generator
) -> Individual:
    """Copy a roulette-picked parent as an offspring (fitness unset)."""
    parent = pop.individuals[roulette_pick(probs, rng)]
    return Individual(genome=parent.genome)


def op_crossover(
    a: Genome, b: Genome, rng: np.random.Generator
) -> tuple[Genome, Genome]:
    """Single-point crossover, applied independently to each code.

    The cut point is uniform in 1..L-1 per code; a code of length < 2 has no
    interior cut and is passed through unchanged.  The per-position multiset
    of genes across the two offspring equals that of the parents.
    """
    c1_a, c1_b = _cross_code(a.channel_code, b.channel_code, rng)
    c2_a, c2_b = _cross_code(a.skip_code, b.skip_code, rng)
    return (
        Genome(channel_code=c1_a, skip_code=c2_a),
        Genome(channel_code=c1_b, skip_code=c2_b),
    )


def _cross_code(
    code_a: tuple, code_b: tuple, rng: np.random.Generator
) -> tuple[tuple, tuple]:
    if len(code_a) < 2:
        return code_a, code_b
    cut = int(rng.integers(1, len(code_a)))
    return code_a[:cut] + code_b[cut:], code_b[:cut] + code_a[cut:]


def op_mutate(
    genome: Genome, space: SearchSpace, rng: np.random.Generator
) -> Genome:
    """Mutate one gene in each code.

    One uniformly chosen c1 position is resampled from the channel alphabet
    minus its current value, and one uniformly chosen c2 bit is flipped, so
    the mutant differs from its parent in exactly two positions (one per
    code).  To mutate only one code per application instead, apply the two
    halves below under a coin flip.
    """
    channels = list(genome.channel_code)
    pos = int(rng.integers(0, len(channels)))
    remaining = [c for c in space.channel_choices if c != channels[pos]]
    if remaining:
        channels[pos] = remaining[int(rng.integers(0, len(remaining)))]

    skips = list(genome.skip_code)
    if skips:
        bit = int(rng.integers(0, len(skips)))
        skips[bit] ^= 1

    return Genome(channel_code=tuple(channels), skip_code=tuple(skips))


def next_generation(
    pop: Population,
    cfg: OperatorConfig,
    space: SearchSpace,
    rng: np.random.Generator,
) -> Population:
    """Produce the next population of the same size.

    Slot 1 holds a copy of the best parent (elitism, evaluation kept).  Each
    remaining slot draws s ~ U[0,1) and applies selection (s < s1), crossover
    (s < s1 + s2, two roulette parents, two offspring, the second discarded
    when only one slot remains), or mutation.  Selection probabilities are
    computed once, before the offspring loop.
    """
    fitnesses = _require_evaluated(pop)
    probs = selection_probabilities(fitnesses)
    size = len(pop)

    offspring: list[Individual] = [pop.individuals[pop.best_index()].copy()]
    while len(offspring) < size:
        s = rng.random()
        if s < cfg.s1:
            offspring.append(op_select(pop, probs, rng))
        elif s < cfg.s1 + cfg.s2:
            parent_a = pop.individuals[roulette_pick(probs, rng)]
            parent_b = pop.individuals[roulette_pick(probs, rng)]
            child_a, child_b = op_crossover(parent_a.genome, parent_b.genome, rng)
            offspring.append(Individual(genome=child_a))
            if len(offspring) < size:
                offspring.append(Individual(genome=child_b))
        else:
            parent = pop.individuals[roulette_pick(probs, rng)]
            offspring.append(Individual(genome=op_mutate(parent.genome, space, rng)))

    return Population(individuals=offspring, generation=pop.generation + 1)


def _require_evaluated(pop: Population) -> list[float]:
    fitnesses = []
    for j, ind in enumerate(pop.individuals):
        if ind.fitness is None:
            raise UnevaluatedPopulationError(
                f"individual {j} has no fitness; evaluate the population first"
            )
        fitnesses.append(ind.fitness)
    return fitnesses
