"""End-to-end search orchestration.

One run: initialize K random genomes, then per generation evaluate every
unevaluated individual (decode -> cost -> evaluator -> fitness, with a
run-wide cache keyed by the canonical genome string), log a history record,
and step the population with elitism.  After the final step the last
population gets one more evaluation pass before the best individual is
exported.

Runs are fully deterministic given the seed and a deterministic evaluator:
the GA and the surrogate-noise streams are spawned from one seed sequence,
and both stream states travel in the checkpoint, so an interrupted run
resumed from disk produces byte-identical history.

Output directory layout (when an output directory is given):

    history.jsonl           one record per generation
    checkpoint.json         latest saved state, hash-protected
    best_architecture.json  architecture document of the final best
    best_genome.txt         canonical genome string of the final best
"""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .costmodel import CostReport, cost_report
from .decoder import ArchitectureGraph, decode, export_architecture
from .errors import CheckpointError, CheckpointWriteError, ConfigError, EngineError
from .evolution import Individual, OperatorConfig, Population, next_generation
from .fitness import (
    DEFAULT_LAMBDA,
    DEFAULT_TIMEOUT_S,
    EvalRequest,
    EvalResponse,
    EvaluatorPool,
    SurrogateConfig,
    evaluate_individual,
    surrogate_eval,
)
from .genome import (
    Genome,
    SearchSpace,
    format_genome,
    parse_genome,
    random_genome,
    validate_genome,
)

CHECKPOINT_FORMAT = "evounet-checkpoint-v1"

HISTORY_FILE = "history.jsonl"
CHECKPOINT_FILE = "checkpoint.json"
BEST_ARCHITECTURE_FILE = "best_architecture.json"
BEST_GENOME_FILE = "best_genome.txt"


@dataclass(frozen=True)
class ImageConfig:
    channels: int = 3
    resolution: int = 256


@dataclass(frozen=True)
class SurrogateSpec:
    """Evaluate with the in-process hidden-target surrogate."""

    target: str  # canonical genome string
    noise_sigma: float = 0.0
    base: float = 0.5
    skip_weight: float = 2.0
    channel_weight: float = 1.0

    kind = "surrogate"


@dataclass(frozen=True)
class ExternalSpec:
    """Evaluate by driving external trainer processes over the wire protocol."""

    endpoint: str
    timeout_s: float = DEFAULT_TIMEOUT_S
    parallelism: int = 1
    mini_epochs: int = 1
    batch_size: int = 1
    train_path: str = ""
    val_path: str = ""

    kind = "external"


@dataclass(frozen=True)
class SearchConfig:
    space: SearchSpace = field(default_factory=SearchSpace)
    population_size: int = 32
    generations: int = 100
    gamma: float = 0.01
    lambda_: float = DEFAULT_LAMBDA
    operators: OperatorConfig = field(default_factory=OperatorConfig)
    seed: int = 0
    evaluator: SurrogateSpec | ExternalSpec | None = None
    image: ImageConfig = field(default_factory=ImageConfig)
    checkpoint_every: int = 10

    def to_dict(self) -> dict:
        evaluator: dict = {}
        if isinstance(self.evaluator, SurrogateSpec):
            evaluator = {
                "kind": "surrogate",
                "target": self.evaluator.target,
                "noise_sigma": self.evaluator.noise_sigma,
                "base": self.evaluator.base,
                "skip_weight": self.evaluator.skip_weight,
                "channel_weight": self.evaluator.channel_weight,
            }
        elif isinstance(self.evaluator, ExternalSpec):
            evaluator = {
                "kind": "external",
                "endpoint": self.evaluator.endpoint,
                "timeout_s": self.evaluator.timeout_s,
                "parallelism": self.evaluator.parallelism,
                "mini_epochs": self.evaluator.mini_epochs,
                "batch_size": self.evaluator.batch_size,
                "train_path": self.evaluator.train_path,
                "val_path": self.evaluator.val_path,
            }
        return {
            "space": {
                "channel_choices": list(self.space.channel_choices),
                "channel_code_length": self.space.channel_code_length,
            },
            "population_size": self.population_size,
            "generations": self.generations,
            "gamma": self.gamma,
            "lambda": self.lambda_,
            "operators": {
                "s1": self.operators.s1,
                "s2": self.operators.s2,
                "s3": self.operators.s3,
            },
            "seed": self.seed,
            "evaluator": evaluator,
            "image": {
                "channels": self.image.channels,
                "resolution": self.image.resolution,
            },
            "checkpoint_every": self.checkpoint_every,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SearchConfig":
        try:
            space = SearchSpace(
                channel_choices=tuple(raw["space"]["channel_choices"]),
                channel_code_length=int(raw["space"]["channel_code_length"]),
                skip_code_length=int(raw["space"]["channel_code_length"]) - 1,
            )
            ev_raw = raw.get("evaluator") or {}
            evaluator: SurrogateSpec | ExternalSpec | None = None
            if ev_raw.get("kind") == "surrogate":
                evaluator = SurrogateSpec(
                    target=ev_raw["target"],
                    noise_sigma=float(ev_raw.get("noise_sigma", 0.0)),
                    base=float(ev_raw.get("base", 0.5)),
                    skip_weight=float(ev_raw.get("skip_weight", 2.0)),
                    channel_weight=float(ev_raw.get("channel_weight", 1.0)),
                )
            elif ev_raw.get("kind") == "external":
                evaluator = ExternalSpec(
                    endpoint=ev_raw["endpoint"],
                    timeout_s=float(ev_raw.get("timeout_s", DEFAULT_TIMEOUT_S)),
                    parallelism=int(ev_raw.get("parallelism", 1)),
                    mini_epochs=int(ev_raw.get("mini_epochs", 1)),
                    batch_size=int(ev_raw.get("batch_size", 1)),
                    train_path=ev_raw.get("train_path", ""),
                    val_path=ev_raw.get("val_path", ""),
                )
            elif ev_raw:
                raise ConfigError(f"unknown evaluator kind {ev_raw.get('kind')!r}")
            return cls(
                space=space,
                population_size=int(raw["population_size"]),
                generations=int(raw["generations"]),
                gamma=float(raw["gamma"]),
                lambda_=float(raw["lambda"]),
                operators=OperatorConfig(
                    s1=float(raw["operators"]["s1"]),
                    s2=float(raw["operators"]["s2"]),
                    s3=float(raw["operators"]["s3"]),
                ),
                seed=int(raw["seed"]),
                evaluator=evaluator,
                image=ImageConfig(
                    channels=int(raw["image"]["channels"]),
                    resolution=int(raw["image"]["resolution"]),
                ),
                checkpoint_every=int(raw.get("checkpoint_every", 10)),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid search config: {exc}")


@dataclass
class SearchResult:
    best: Individual
    best_architecture: ArchitectureGraph
    best_cost: CostReport
    history: list[dict]


def validate_config(cfg: SearchConfig) -> None:
    if cfg.population_size < 2:
        raise ConfigError(f"population_size must be >= 2, got {cfg.population_size}")
    if cfg.generations < 1:
        raise ConfigError(f"generations must be >= 1, got {cfg.generations}")
    if cfg.gamma < 0:
        raise ConfigError(f"gamma must be >= 0, got {cfg.gamma}")
    if cfg.lambda_ < 0:
        raise ConfigError(f"lambda must be >= 0, got {cfg.lambda_}")
    if cfg.checkpoint_every < 1:
        raise ConfigError(f"checkpoint_every must be >= 1, got {cfg.checkpoint_every}")
    if cfg.evaluator is None:
        raise ConfigError("an evaluator must be configured")
    min_side = 2**cfg.space.channel_code_length
    if cfg.image.resolution < min_side or cfg.image.resolution % min_side != 0:
        raise ConfigError(
            f"image resolution {cfg.image.resolution} is not a multiple of "
            f"2^{cfg.space.channel_code_length} = {min_side}"
        )
    if isinstance(cfg.evaluator, SurrogateSpec):
        try:
            parse_genome(cfg.evaluator.target, cfg.space)
        except EngineError as exc:
            raise ConfigError(f"surrogate target is not in the search space: {exc}")
        if cfg.evaluator.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
    if isinstance(cfg.evaluator, ExternalSpec):
        if not cfg.evaluator.endpoint.strip():
            raise ConfigError("external evaluator endpoint must be non-empty")
        if cfg.evaluator.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")


# --------------------------------------------------------------------- #
# Search state and checkpointing
# --------------------------------------------------------------------- #


@dataclass
class SearchState:
    config: SearchConfig
    population: Population
    rng: np.random.Generator
    eval_rng: np.random.Generator
    cache: dict[str, EvalResponse]
    history: list[dict]


def _initial_state(cfg: SearchConfig) -> SearchState:
    ga_seq, eval_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(ga_seq)
    eval_rng = np.random.default_rng(eval_seq)
    individuals = [
        Individual(genome=random_genome(cfg.space, rng))
        for _ in range(cfg.population_size)
    ]
    return SearchState(
        config=cfg,
        population=Population(individuals=individuals, generation=0),
        rng=rng,
        eval_rng=eval_rng,
        cache={},
        history=[],
    )


def _rng_to_doc(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return {
        "algorithm": state["bit_generator"],
        "state_hex": json.dumps(state, sort_keys=True).encode().hex(),
    }


def _rng_from_doc(doc: dict) -> np.random.Generator:
    try:
        state = json.loads(bytes.fromhex(doc["state_hex"]).decode())
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"bad rng state in checkpoint: {exc}")
    if state.get("bit_generator") != doc.get("algorithm"):
        raise CheckpointError("rng algorithm identifier does not match its state")
    rng = np.random.default_rng()
    if doc["algorithm"] != rng.bit_generator.state["bit_generator"]:
        raise CheckpointError(f"unsupported rng algorithm {doc['algorithm']!r}")
    rng.bit_generator.state = state
    return rng


def checkpoint_save(state: SearchState) -> dict:
    """Serialize the full resumable state; load(save(s)) restores s exactly."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": state.config.to_dict(),
        "generation": state.population.generation,
        "population": [
            {
                "genome": format_genome(ind.genome),
                "fitness": ind.fitness,
                "penalized": ind.penalized,
                "eval": _response_to_doc(ind.eval_record),
            }
            for ind in state.population.individuals
        ],
        "rng": _rng_to_doc(state.rng),
        "eval_rng": _rng_to_doc(state.eval_rng),
        "cache": {key: _response_to_doc(resp) for key, resp in state.cache.items()},
        "history": state.history,
    }
    digest = hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode()
    ).hexdigest()
    payload["sha256"] = digest
    return payload


def checkpoint_load(document: dict) -> SearchState:
    """Rebuild a SearchState, rejecting corrupt documents."""
    if not isinstance(document, dict) or document.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a recognized checkpoint document")
    payload = {k: v for k, v in document.items() if k != "sha256"}
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
    if digest != document.get("sha256"):
        raise CheckpointError("checkpoint hash mismatch; file is corrupt")
    try:
        cfg = SearchConfig.from_dict(document["config"])
        individuals = [
            Individual(
                genome=parse_genome(entry["genome"], cfg.space),
                fitness=entry["fitness"],
                penalized=bool(entry["penalized"]),
                eval_record=_response_from_doc(entry["eval"]),
            )
            for entry in document["population"]
        ]
        state = SearchState(
            config=cfg,
            population=Population(
                individuals=individuals, generation=int(document["generation"])
            ),
            rng=_rng_from_doc(document["rng"]),
            eval_rng=_rng_from_doc(document["eval_rng"]),
            cache={
                key: _response_from_doc(doc)
                for key, doc in document["cache"].items()
            },
            history=list(document["history"]),
        )
    except CheckpointError:
        raise
    except (EngineError, KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint fields are invalid: {exc}")
    return state


def _response_to_doc(resp: EvalResponse | None) -> dict | None:
    if resp is None:
        return None
    return {
        "l_gan": resp.l_gan,
        "l_l1": resp.l_l1,
        "status": resp.status,
        "message": resp.message,
    }


def _response_from_doc(doc: dict | None) -> EvalResponse | None:
    if doc is None:
        return None
    return EvalResponse(
        l_gan=doc["l_gan"],
        l_l1=doc["l_l1"],
        status=doc["status"],
        message=doc.get("message", ""),
    )


# --------------------------------------------------------------------- #
# Evaluation plumbing
# --------------------------------------------------------------------- #


def _request_seed(run_seed: int, genome_key: str) -> int:
    # Stable per (run, genome): resuming must hand the trainer the same seed.
    return (run_seed * 1_000_003 + zlib.crc32(genome_key.encode())) % (2**31)


def _evaluate_population(state: SearchState, pool: EvaluatorPool | None) -> int:
    """Fill in fitness for every unevaluated individual.

    Returns the number of actual evaluator invocations (cache misses).
    """
    cfg = state.config
    pending = [
        (i, ind)
        for i, ind in enumerate(state.population.individuals)
        if ind.fitness is None
    ]
    keys = {i: format_genome(ind.genome) for i, ind in pending}
    fresh: list[tuple[str, Genome]] = []
    seen: set[str] = set()
    for i, ind in pending:
        key = keys[i]
        if key not in state.cache and key not in seen:
            seen.add(key)
            fresh.append((key, ind.genome))

    if isinstance(cfg.evaluator, SurrogateSpec):
        surrogate_cfg = SurrogateConfig(
            target=parse_genome(cfg.evaluator.target, cfg.space),
            noise_sigma=cfg.evaluator.noise_sigma,
            base=cfg.evaluator.base,
            skip_weight=cfg.evaluator.skip_weight,
            channel_weight=cfg.evaluator.channel_weight,
        )
        for key, genome in fresh:
            state.cache[key] = surrogate_eval(genome, surrogate_cfg, state.eval_rng)
    else:
        requests = []
        for key, genome in fresh:
            graph = decode(genome, cfg.image.channels, cfg.image.resolution)
            requests.append(
                EvalRequest(
                    architecture=export_architecture(graph),
                    genome=key,
                    lambda_=cfg.lambda_,
                    train_budget={
                        "mini_epochs": cfg.evaluator.mini_epochs,
                        "batch_size": cfg.evaluator.batch_size,
                    },
                    dataset={
                        "train_path": cfg.evaluator.train_path,
                        "val_path": cfg.evaluator.val_path,
                    },
                    seed=_request_seed(cfg.seed, key),
                )
            )
        responses = pool.evaluate_many(requests)
        for (key, _), response in zip(fresh, responses):
            state.cache[key] = response

    for i, ind in pending:
        response = state.cache[keys[i]]
        cost = cost_report(decode(ind.genome, cfg.image.channels, cfg.image.resolution))
        state.population.individuals[i] = evaluate_individual(
            ind, lambda _g, r=response: r, cost, cfg.gamma, cfg.lambda_
        )
    return len(fresh)


def _history_record(state: SearchState, evaluations_used: int) -> dict:
    individuals = state.population.individuals
    best = state.population.best_index()
    return {
        "generation": state.population.generation,
        "best_fitness": individuals[best].fitness,
        "mean_fitness": sum(ind.fitness for ind in individuals) / len(individuals),
        "best_genome": format_genome(individuals[best].genome),
        "evaluations_used": evaluations_used,
    }


# --------------------------------------------------------------------- #
# File plumbing
# --------------------------------------------------------------------- #


def _write_text(path: Path, content: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(content)
        tmp.replace(path)
    except OSError as exc:
        raise CheckpointWriteError(f"cannot write {path}: {exc}")


def _write_history_file(out_dir: Path, history: list[dict]) -> None:
    lines = "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in history)
    _write_text(out_dir / HISTORY_FILE, lines)


def _write_checkpoint_file(out_dir: Path, state: SearchState) -> None:
    doc = checkpoint_save(state)
    _write_text(out_dir / CHECKPOINT_FILE, json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _write_best_files(out_dir: Path, result: SearchResult) -> None:
    doc = export_architecture(result.best_architecture)
    _write_text(
        out_dir / BEST_ARCHITECTURE_FILE, json.dumps(doc, sort_keys=True, indent=2) + "\n"
    )
    _write_text(out_dir / BEST_GENOME_FILE, format_genome(result.best.genome) + "\n")


# --------------------------------------------------------------------- #
# Main loop
# --------------------------------------------------------------------- #


def run_search(
    cfg: SearchConfig,
    out_dir: Path | str | None = None,
    stop_after_generation: int | None = None,
    progress: "callable | None" = None,
) -> SearchResult | None:
    """Run the full search.

    With `stop_after_generation` set, the run halts after evaluating and
    checkpointing that generation and returns None (used to exercise
    interrupt/resume).  `progress`, when given, receives each history record
    as it is produced.
    """
    validate_config(cfg)
    state = _initial_state(cfg)
    return _run_loop(state, out_dir, stop_after_generation, progress, fresh=True)


def resume_search(
    out_dir: Path | str,
    stop_after_generation: int | None = None,
    progress: "callable | None" = None,
) -> SearchResult | None:
    """Continue an interrupted run from its checkpoint; the completed run is
    identical to one that was never interrupted."""
    out_dir = Path(out_dir)
    path = out_dir / CHECKPOINT_FILE
    try:
        document = json.loads(path.read_text())
    except OSError as exc:
        raise CheckpointWriteError(f"cannot read checkpoint {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is not valid JSON: {exc}")
    state = checkpoint_load(document)
    return _run_loop(state, out_dir, stop_after_generation, progress, fresh=False)


def _run_loop(
    state: SearchState,
    out_dir: Path | str | None,
    stop_after_generation: int | None,
    progress: "callable | None",
    fresh: bool,
) -> SearchResult | None:
    cfg = state.config
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        # Rewrite history from state so a resumed file matches exactly.
        _write_history_file(out_path, state.history)

    pool: EvaluatorPool | None = None
    if isinstance(cfg.evaluator, ExternalSpec):
        pool = EvaluatorPool(
            cfg.evaluator.endpoint,
            timeout_s=cfg.evaluator.timeout_s,
            parallelism=cfg.evaluator.parallelism,
        )
    try:
        # On resume, the checkpointed generation was already evaluated and
        # logged; pick up at the step that produced the next generation.
        resuming = not fresh and state.history and (
            state.history[-1]["generation"] == state.population.generation
        )
        while True:
            if not resuming:
                used = _evaluate_population(state, pool)
                record = _history_record(state, used)
                state.history.append(record)
                if progress is not None:
                    progress(record)
                if out_path is not None:
                    with (out_path / HISTORY_FILE).open("a") as fh:
                        fh.write(json.dumps(record, sort_keys=True) + "\n")
                generation = state.population.generation
                is_last = generation >= cfg.generations
                stopping = (
                    stop_after_generation is not None
                    and generation >= stop_after_generation
                    and not is_last
                )
                if out_path is not None and (
                    generation % cfg.checkpoint_every == 0 or is_last or stopping
                ):
                    _write_checkpoint_file(out_path, state)
                if stopping:
                    return None
            resuming = False
            if state.population.generation >= cfg.generations:
                break
            state.population = next_generation(
                state.population, cfg.operators, cfg.space, state.rng
            )
    finally:
        if pool is not None:
            pool.close()

    best = state.population.individuals[state.population.best_index()]
    graph = decode(best.genome, cfg.image.channels, cfg.image.resolution)
    result = SearchResult(
        best=best,
        best_architecture=graph,
        best_cost=cost_report(graph),
        history=state.history,
    )
    if out_path is not None:
        _write_best_files(out_path, result)
    return result
