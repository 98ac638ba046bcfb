"""Command-line surface for the search engine.

Subcommands: search, resume, cost, decode, spacesize, baseline, export-best.
Only search/resume write files (to --out); everything else prints to stdout.
Exit codes: 0 success, 2 configuration or parse errors, 3 checkpoint I/O
errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import searchloop
from .costmodel import cost_report, layer_cost
from .decoder import decode, export_architecture
from .errors import CheckpointError, CheckpointWriteError, ConfigError, EngineError
from .fitness import DEFAULT_LAMBDA, DEFAULT_TIMEOUT_S, EvalRequest
from .genome import (
    SearchSpace,
    baseline_genome,
    default_space,
    format_genome,
    parse_genome,
    search_space_size,
)
from .searchloop import (
    ExternalSpec,
    ImageConfig,
    SearchConfig,
    SurrogateSpec,
    resume_search,
    run_search,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evounet",
        description="Evolutionary architecture search for U-Net style generators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    search = sub.add_parser("search", help="run an architecture search")
    search.add_argument("--config", type=Path, help="JSON config file; inline flags override it")
    search.add_argument("--out", type=Path, required=True, help="output directory")
    search.add_argument("--gamma", type=float, help="FLOPs weight in the fitness (default 0.01)")
    search.add_argument("--lambda", dest="lambda_", type=float, help=f"L1 weight in the generator loss (default {DEFAULT_LAMBDA:g})")
    search.add_argument("--seed", type=int, help="run seed (default 0)")
    search.add_argument("--pop", type=int, help="population size K (default 32)")
    search.add_argument("--gens", type=int, help="max generations T (default 100)")
    search.add_argument(
        "--evaluator",
        help="'surrogate' or 'external:<command>' (default surrogate)",
    )
    search.add_argument("--surrogate-target", help="hidden-target genome (default: baseline)")
    search.add_argument("--noise-sigma", type=float, help="surrogate noise sigma (default 0)")
    search.add_argument("--s1", type=float, help="selection probability (default 0.2)")
    search.add_argument("--s2", type=float, help="crossover probability (default 0.7)")
    search.add_argument("--s3", type=float, help="mutation probability (default 0.1)")
    search.add_argument("--image-channels", type=int, help="default 3")
    search.add_argument("--image-resolution", type=int, help="default 256")
    search.add_argument("--checkpoint-every", type=int, help="default 10")
    search.add_argument("--timeout", type=float, help=f"external evaluator timeout seconds (default {DEFAULT_TIMEOUT_S:g})")
    search.add_argument("--parallelism", type=int, help="external evaluator processes (default 1)")
    search.add_argument("--mini-epochs", type=int, help="mini-train epochs per evaluation (default 1)")
    search.add_argument("--batch-size", type=int, help="mini-train batch size (default 1)")
    search.add_argument("--train-data", help="mini train set path, passed through to the evaluator")
    search.add_argument("--val-data", help="mini validation set path, passed through to the evaluator")

    resume = sub.add_parser("resume", help="continue a checkpointed search")
    resume.add_argument("--out", type=Path, required=True, help="run directory holding checkpoint.json")

    cost = sub.add_parser("cost", help="analytic FLOPs/params/memory of a genome")
    target = cost.add_mutually_exclusive_group(required=True)
    target.add_argument("--genome", help="canonical genome string")
    target.add_argument("--baseline", action="store_true", help="use the original U-Net genome")
    cost.add_argument("--json", action="store_true", help="emit the architecture document with a cost field")
    _add_image_flags(cost)

    dec = sub.add_parser("decode", help="expand a genome into its layer table")
    dec.add_argument("--genome", required=True, help="canonical genome string")
    dec.add_argument("--format", choices=["text", "document"], default="text")
    _add_image_flags(dec)

    size = sub.add_parser("spacesize", help="number of genomes in the search space")
    size.add_argument("--channel-choices", help="comma-separated alphabet (default 64,128,256,512)")
    size.add_argument("--code-length", type=int, help="channel code length (default 8)")

    sub.add_parser("baseline", help="print the original U-Net genome")

    export = sub.add_parser("export-best", help="print the best architecture of a finished run")
    export.add_argument("--out", type=Path, required=True, help="run directory holding checkpoint.json")
    export.add_argument(
        "--request-template",
        action="store_true",
        help="emit an evaluation-request template for fine-tuning instead",
    )
    return parser


def _add_image_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--image-channels", type=int, default=3)
    p.add_argument("--image-resolution", type=int, default=256)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {
        "search": _cmd_search,
        "resume": _cmd_resume,
        "cost": _cmd_cost,
        "decode": _cmd_decode,
        "spacesize": _cmd_spacesize,
        "baseline": _cmd_baseline,
        "export-best": _cmd_export_best,
    }[args.command]
    try:
        return handler(args)
    except (CheckpointError, CheckpointWriteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


# --------------------------------------------------------------------- #
# search / resume
# --------------------------------------------------------------------- #


def _config_from_args(args: argparse.Namespace) -> SearchConfig:
    if args.config is not None:
        raw = json.loads(Path(args.config).read_text())
        cfg = SearchConfig.from_dict(raw)
    else:
        cfg = SearchConfig(evaluator=None)

    space = cfg.space
    operators = cfg.operators
    if args.s1 is not None or args.s2 is not None or args.s3 is not None:
        operators = type(operators)(
            s1=args.s1 if args.s1 is not None else operators.s1,
            s2=args.s2 if args.s2 is not None else operators.s2,
            s3=args.s3 if args.s3 is not None else operators.s3,
        )
    image = ImageConfig(
        channels=args.image_channels
        if args.image_channels is not None
        else cfg.image.channels,
        resolution=args.image_resolution
        if args.image_resolution is not None
        else cfg.image.resolution,
    )

    evaluator = cfg.evaluator
    if args.evaluator is not None or evaluator is None:
        kind = args.evaluator or "surrogate"
        if kind == "surrogate":
            target = args.surrogate_target or (
                evaluator.target
                if isinstance(evaluator, SurrogateSpec)
                else format_genome(baseline_genome(space))
                if space == default_space()
                else None
            )
            if target is None:
                raise ConfigError(
                    "--surrogate-target is required for non-default spaces"
                )
            evaluator = SurrogateSpec(
                target=target,
                noise_sigma=args.noise_sigma if args.noise_sigma is not None else 0.0,
            )
        elif kind.startswith("external:"):
            endpoint = kind.split(":", 1)[1]
            evaluator = ExternalSpec(
                endpoint=endpoint,
                timeout_s=args.timeout if args.timeout is not None else DEFAULT_TIMEOUT_S,
                parallelism=args.parallelism if args.parallelism is not None else 1,
                mini_epochs=args.mini_epochs if args.mini_epochs is not None else 1,
                batch_size=args.batch_size if args.batch_size is not None else 1,
                train_path=args.train_data or "",
                val_path=args.val_data or "",
            )
        else:
            raise ConfigError(
                f"unknown evaluator {kind!r}; use 'surrogate' or 'external:<command>'"
            )
    else:
        # Config-file evaluator, with inline overrides where they make sense.
        if isinstance(evaluator, SurrogateSpec):
            if args.surrogate_target is not None or args.noise_sigma is not None:
                evaluator = SurrogateSpec(
                    target=args.surrogate_target or evaluator.target,
                    noise_sigma=args.noise_sigma
                    if args.noise_sigma is not None
                    else evaluator.noise_sigma,
                    base=evaluator.base,
                    skip_weight=evaluator.skip_weight,
                    channel_weight=evaluator.channel_weight,
                )

    return SearchConfig(
        space=space,
        population_size=args.pop if args.pop is not None else cfg.population_size,
        generations=args.gens if args.gens is not None else cfg.generations,
        gamma=args.gamma if args.gamma is not None else cfg.gamma,
        lambda_=args.lambda_ if args.lambda_ is not None else cfg.lambda_,
        operators=operators,
        seed=args.seed if args.seed is not None else cfg.seed,
        evaluator=evaluator,
        image=image,
        checkpoint_every=args.checkpoint_every
        if args.checkpoint_every is not None
        else cfg.checkpoint_every,
    )


def _print_progress(record: dict) -> None:
    print(
        "gen {generation:4d}  best {best_fitness:.6g}  mean {mean_fitness:.6g}  "
        "evals {evaluations_used}".format(**record)
    )


def _print_result(result: searchloop.SearchResult, out: Path) -> None:
    print(f"best genome   {format_genome(result.best.genome)}")
    print(f"best fitness  {result.best.fitness:.6g}")
    print(
        f"best cost     flops_m {result.best_cost.flops_m:.3f}  "
        f"params {result.best_cost.params}  memory_mib {result.best_cost.memory_mib:.3f}"
    )
    print(f"outputs in    {out}")


def _cmd_search(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    print("effective-config: " + json.dumps(cfg.to_dict(), sort_keys=True))
    result = run_search(cfg, out_dir=args.out, progress=_print_progress)
    _print_result(result, args.out)
    return EXIT_OK


def _cmd_resume(args: argparse.Namespace) -> int:
    result = resume_search(args.out, progress=_print_progress)
    _print_result(result, args.out)
    return EXIT_OK


# --------------------------------------------------------------------- #
# inspection subcommands
# --------------------------------------------------------------------- #


def _genome_from_flags(args: argparse.Namespace):
    space = default_space()
    if getattr(args, "baseline", False):
        return baseline_genome(space)
    return parse_genome(args.genome, space)


def _layer_table(graph) -> str:
    header = f"{'layer':<6}{'kind':<10}{'in_ch':>6}{'out_ch':>7}{'in_res':>7}{'out_res':>8}"
    rows = [header]
    for layer in graph.layers:
        rows.append(
            f"{layer.name:<6}{layer.kind:<10}{layer.in_channels:>6}"
            f"{layer.out_channels:>7}{layer.in_resolution:>7}{layer.out_resolution:>8}"
        )
    return "\n".join(rows)


def _cmd_cost(args: argparse.Namespace) -> int:
    genome = _genome_from_flags(args)
    graph = decode(genome, args.image_channels, args.image_resolution)
    report = cost_report(graph)
    if args.json:
        doc = export_architecture(graph)
        doc["cost"] = report.as_dict()
        print(json.dumps(doc, sort_keys=True, indent=2))
        return EXIT_OK
    print(f"{'layer':<6}{'kind':<10}{'in_ch':>6}{'out_ch':>7}{'out_res':>8}{'macs':>16}{'params':>12}")
    for layer in graph.layers:
        macs, params = layer_cost(layer)
        print(
            f"{layer.name:<6}{layer.kind:<10}{layer.in_channels:>6}"
            f"{layer.out_channels:>7}{layer.out_resolution:>8}{macs:>16}{params:>12}"
        )
    print(
        f"total  flops_m {report.flops_m:.3f}  params {report.params}  "
        f"memory_mib {report.memory_mib:.3f}"
    )
    return EXIT_OK


def _cmd_decode(args: argparse.Namespace) -> int:
    genome = parse_genome(args.genome, default_space())
    graph = decode(genome, args.image_channels, args.image_resolution)
    if args.format == "document":
        print(json.dumps(export_architecture(graph), sort_keys=True, indent=2))
    else:
        print(_layer_table(graph))
        print("skips " + ",".join(str(b) for b in graph.skips))
    return EXIT_OK


def _cmd_spacesize(args: argparse.Namespace) -> int:
    if args.channel_choices or args.code_length:
        choices = (
            tuple(int(v) for v in args.channel_choices.split(","))
            if args.channel_choices
            else (64, 128, 256, 512)
        )
        length = args.code_length or 8
        space = SearchSpace(
            channel_choices=choices,
            channel_code_length=length,
            skip_code_length=length - 1,
        )
    else:
        space = default_space()
    print(search_space_size(space))
    return EXIT_OK


def _cmd_baseline(args: argparse.Namespace) -> int:
    print(format_genome(baseline_genome(default_space())))
    return EXIT_OK


def _cmd_export_best(args: argparse.Namespace) -> int:
    path = Path(args.out) / searchloop.CHECKPOINT_FILE
    try:
        document = json.loads(path.read_text())
    except OSError as exc:
        raise CheckpointWriteError(f"cannot read checkpoint {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is not valid JSON: {exc}")
    state = searchloop.checkpoint_load(document)
    cfg = state.config
    best = state.population.individuals[state.population.best_index()]
    graph = decode(best.genome, cfg.image.channels, cfg.image.resolution)
    if args.request_template:
        template = EvalRequest(
            architecture=export_architecture(graph),
            genome=format_genome(best.genome),
            lambda_=cfg.lambda_,
            train_budget={"mini_epochs": 1, "batch_size": 1},
            dataset={"train_path": "<full-train-set>", "val_path": "<full-val-set>"},
            seed=cfg.seed,
        )
        print(json.dumps(json.loads(template.to_wire()), sort_keys=True, indent=2))
    else:
        print(json.dumps(export_architecture(graph), sort_keys=True, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
