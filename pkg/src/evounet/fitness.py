"""Fitness computation and the evaluator contract.

fitness = 1 / (l_gen + gamma * flops_m)   with   l_gen = l_gan + lambda * l_l1

Two evaluator implementations share one response type:

  * a deterministic hidden-target surrogate (test landscape with a known
    optimum, no training involved), and
  * an external-process evaluator speaking newline-delimited JSON over the
    child's stdin/stdout: one request line -> one response line.

Evaluators report per-image mean loss components; composing them with
lambda and gamma stays engine-side.  Every external failure mode (timeout,
spawn failure, malformed or non-finite response) is absorbed into the
penalized-fitness policy so a search never aborts mid-run.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import threading
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .costmodel import CostReport
from .errors import (
    EngineError,
    NonFiniteInputError,
    NonpositiveDenominatorError,
    SpaceMismatchError,
)
from .evolution import PENALTY_EPSILON, Individual
from .genome import Genome

DEFAULT_LAMBDA = 100.0
GAMMA_PRESETS = (0.1, 0.01, 0.001)
DEFAULT_TIMEOUT_S = 3600.0


@dataclass(frozen=True)
class EvalRequest:
    """One evaluation job, serialized as a single wire line."""

    architecture: dict
    genome: str
    lambda_: float
    train_budget: dict  # {"mini_epochs": int, "batch_size": int}
    dataset: dict  # {"train_path": str, "val_path": str}
    seed: int

    def __post_init__(self):
        if self.lambda_ < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lambda_}")
        if int(self.train_budget.get("mini_epochs", 0)) < 1:
            raise ValueError("train_budget.mini_epochs must be >= 1")

    def to_wire(self) -> str:
        return json.dumps(
            {
                "architecture": self.architecture,
                "genome": self.genome,
                "lambda": self.lambda_,
                "train_budget": self.train_budget,
                "dataset": self.dataset,
                "seed": self.seed,
            },
            sort_keys=True,
        )

    @classmethod
    def from_wire(cls, line: str) -> "EvalRequest":
        raw = json.loads(line)
        return cls(
            architecture=raw["architecture"],
            genome=raw["genome"],
            lambda_=float(raw["lambda"]),
            train_budget=raw["train_budget"],
            dataset=raw["dataset"],
            seed=int(raw["seed"]),
        )


@dataclass(frozen=True)
class EvalResponse:
    """Loss components reported by an evaluator (per-image means)."""

    l_gan: float
    l_l1: float
    status: str = "ok"  # "ok" | "failed"
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_wire(self) -> str:
        return json.dumps(
            {
                "l_gan": self.l_gan,
                "l_l1": self.l_l1,
                "status": self.status,
                "message": self.message,
            },
            sort_keys=True,
        )

    @classmethod
    def failed(cls, message: str) -> "EvalResponse":
        return cls(l_gan=0.0, l_l1=0.0, status="failed", message=message)

    @classmethod
    def from_wire(cls, line: str) -> "EvalResponse":
        """Parse and validate one response line.

        Malformed lines, unknown statuses, and non-finite or negative loss
        components all come back as failed responses rather than exceptions.
        """
        try:
            raw = json.loads(line)
            status = raw["status"]
            if status not in ("ok", "failed"):
                return cls.failed(f"malformed-response: unknown status {status!r}")
            if status == "failed":
                return cls.failed(str(raw.get("message", "")) or "evaluator failure")
            l_gan = float(raw["l_gan"])
            l_l1 = float(raw["l_l1"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            return cls.failed(f"malformed-response: {exc}")
        if not (math.isfinite(l_gan) and math.isfinite(l_l1)):
            return cls.failed(f"non-finite-loss: l_gan={l_gan}, l_l1={l_l1}")
        if l_l1 < 0:
            return cls.failed(f"malformed-response: negative l_l1 {l_l1}")
        return cls(l_gan=l_gan, l_l1=l_l1, status="ok", message=str(raw.get("message", "")))


def gen_loss(l_gan: float, l_l1: float, lambda_: float = DEFAULT_LAMBDA) -> float:
    """Generator loss: adversarial component plus lambda-weighted L1."""
    if not all(math.isfinite(v) for v in (l_gan, l_l1, lambda_)):
        raise NonFiniteInputError(
            f"loss components must be finite, got l_gan={l_gan}, l_l1={l_l1}, lambda={lambda_}"
        )
    return l_gan + lambda_ * l_l1


def fitness_value(l_gen: float, flops_m: float, gamma: float) -> float:
    """Reciprocal of (loss + gamma * FLOPs); higher is better, strictly
    decreasing in both arguments for gamma > 0."""
    denominator = l_gen + gamma * flops_m
    if not math.isfinite(denominator) or denominator <= 0:
        raise NonpositiveDenominatorError(
            f"fitness denominator {denominator} is not positive"
        )
    return 1.0 / denominator


@dataclass(frozen=True)
class SurrogateConfig:
    """Hidden-target landscape: loss grows with distance from `target`.

    Channel distance is measured in log2 steps (the alphabet is geometric),
    skip distance as normalized Hamming distance.  Deterministic when
    noise_sigma is 0; the unique minimum over the space is at `target`.
    """

    target: Genome
    noise_sigma: float = 0.0
    base: float = 0.5
    skip_weight: float = 2.0
    channel_weight: float = 1.0


def surrogate_loss(genome: Genome, cfg: SurrogateConfig) -> float:
    """Noise-free surrogate l_gan for `genome` against the hidden target."""
    target = cfg.target
    if len(genome.channel_code) != len(target.channel_code) or len(
        genome.skip_code
    ) != len(target.skip_code):
        raise SpaceMismatchError(
            "genome and surrogate target come from different search spaces"
        )
    loss = cfg.base
    if genome.skip_code:
        hamming = sum(a != b for a, b in zip(genome.skip_code, target.skip_code))
        loss += cfg.skip_weight * hamming / len(genome.skip_code)
    channel_dist = sum(
        abs(math.log2(a) - math.log2(b))
        for a, b in zip(genome.channel_code, target.channel_code)
    )
    loss += cfg.channel_weight * channel_dist / len(genome.channel_code)
    return loss


def surrogate_eval(
    genome: Genome, cfg: SurrogateConfig, rng: np.random.Generator
) -> EvalResponse:
    """Evaluate against the hidden target; optional Gaussian noise on the loss."""
    loss = surrogate_loss(genome, cfg)
    if cfg.noise_sigma > 0:
        loss += cfg.noise_sigma * rng.standard_normal()
    return EvalResponse(l_gan=loss, l_l1=0.0)


# --------------------------------------------------------------------- #
# External evaluator: line-delimited JSON over a child process
# --------------------------------------------------------------------- #


class EvaluatorProcess:
    """A persistent external evaluator child, one in-flight request at a time.

    A dead or timed-out child is respawned on the next request, so one bad
    evaluation costs one penalized individual, not the rest of the run.
    """

    def __init__(self, endpoint: str):
        self.endpoint = endpoint
        self._proc: subprocess.Popen | None = None
        self._spawn()

    def _spawn(self) -> str | None:
        try:
            self._proc = subprocess.Popen(
                shlex.split(self.endpoint),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except (OSError, ValueError) as exc:
            self._proc = None
            return str(exc)
        return None

    def request(self, req: EvalRequest, timeout_s: float) -> EvalResponse:
        if self._proc is None or self._proc.poll() is not None:
            error = self._spawn()
            if error is not None:
                return EvalResponse.failed(f"process-spawn-failure: {error}")
        try:
            self._proc.stdin.write(req.to_wire() + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            return EvalResponse.failed(f"process-spawn-failure: {exc}")

        line = self._read_line(timeout_s)
        if line is None:
            self._kill()
            return EvalResponse.failed(f"timeout: no response within {timeout_s}s")
        if line == "":
            return EvalResponse.failed("malformed-response: evaluator closed its output")
        return EvalResponse.from_wire(line)

    def _read_line(self, timeout_s: float) -> str | None:
        # readline on a blocking pipe, bounded by joining a reader thread;
        # returns None on timeout.
        result: list[str] = []

        def reader():
            result.append(self._proc.stdout.readline())

        thread = threading.Thread(target=reader, daemon=True)
        thread.start()
        thread.join(timeout_s)
        if thread.is_alive():
            return None
        return result[0].rstrip("\n") if result else ""

    def _kill(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()
        self._proc = None

    def close(self) -> None:
        if self._proc is None:
            return
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        self._proc = None

    def __enter__(self) -> "EvaluatorProcess":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def external_eval(
    req: EvalRequest, endpoint: str, timeout_s: float = DEFAULT_TIMEOUT_S
) -> EvalResponse:
    """One-shot evaluation: spawn `endpoint`, send one request line, read one
    response line under `timeout_s`, terminate.  Never raises; every failure
    mode maps to a failed response."""
    with EvaluatorProcess(endpoint) as proc:
        return proc.request(req, timeout_s)


class EvaluatorPool:
    """A fixed set of persistent evaluator processes serving requests in
    parallel; results are joined by request index so outcomes are
    order-independent."""

    def __init__(
        self,
        endpoint: str,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        parallelism: int = 1,
    ):
        self.timeout_s = timeout_s
        self._workers = [EvaluatorProcess(endpoint) for _ in range(max(1, parallelism))]

    def evaluate_many(self, requests: list[EvalRequest]) -> list[EvalResponse]:
        responses: list[EvalResponse | None] = [None] * len(requests)
        pending = list(enumerate(requests))
        lock = threading.Lock()

        def drain(worker: EvaluatorProcess):
            while True:
                with lock:
                    if not pending:
                        return
                    index, req = pending.pop(0)
                responses[index] = worker.request(req, self.timeout_s)

        threads = [
            threading.Thread(target=drain, args=(worker,), daemon=True)
            for worker in self._workers
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        return [r if r is not None else EvalResponse.failed("internal: not scheduled") for r in responses]

    def close(self) -> None:
        for worker in self._workers:
            worker.close()

    def __enter__(self) -> "EvaluatorPool":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def evaluate_individual(
    ind: Individual,
    evaluator: Callable[[Genome], EvalResponse],
    cost: CostReport,
    gamma: float,
    lambda_: float = DEFAULT_LAMBDA,
) -> Individual:
    """Run the evaluator on an individual and attach its fitness.

    Failed responses (and degenerate losses that push the fitness
    denominator nonpositive) land on the penalty fitness instead of
    aborting the search.
    """
    try:
        response = evaluator(ind.genome)
    except EngineError as exc:
        response = EvalResponse.failed(f"evaluator-error: {exc}")
    if response.ok:
        try:
            loss = gen_loss(response.l_gan, response.l_l1, lambda_)
            value = fitness_value(loss, cost.flops_m, gamma)
            return replace(ind, fitness=value, eval_record=response, penalized=False)
        except (NonFiniteInputError, NonpositiveDenominatorError) as exc:
            response = EvalResponse.failed(f"degenerate-loss: {exc}")
    return replace(
        ind, fitness=PENALTY_EPSILON, eval_record=response, penalized=True
    )
