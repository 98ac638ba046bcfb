import itertools
import json
import time

import numpy as np
import pytest

from conftest import loopback_endpoint
from evounet.costmodel import CostReport
from evounet.decoder import decode, export_architecture
from evounet.errors import (
    NonFiniteInputError,
    NonpositiveDenominatorError,
    SpaceMismatchError,
)
from evounet.evolution import PENALTY_EPSILON, Individual
from evounet.fitness import (
    DEFAULT_LAMBDA,
    DEFAULT_TIMEOUT_S,
    GAMMA_PRESETS,
    EvalRequest,
    EvalResponse,
    EvaluatorPool,
    SurrogateConfig,
    evaluate_individual,
    external_eval,
    fitness_value,
    gen_loss,
    surrogate_eval,
    surrogate_loss,
)
from evounet.genome import Genome, SearchSpace, baseline_genome, random_genome


def make_request(genome_text="64,128|1", seed=0):
    space = SearchSpace(channel_choices=(64, 128), channel_code_length=2, skip_code_length=1)
    from evounet.genome import parse_genome

    graph = decode(parse_genome(genome_text, space), 3, 16)
    return EvalRequest(
        architecture=export_architecture(graph),
        genome=genome_text,
        lambda_=100.0,
        train_budget={"mini_epochs": 1, "batch_size": 1},
        dataset={"train_path": "", "val_path": ""},
        seed=seed,
    )


class TestGenLoss:
    def test_analytic(self):
        assert gen_loss(0.5, 0.01, 100) == 1.5

    def test_zero_l1_term(self):
        assert gen_loss(0.37, 0.0, 12345.0) == 0.37

    def test_default_lambda_is_100(self):
        assert DEFAULT_LAMBDA == 100.0
        assert gen_loss(0.0, 1.0) == 100.0

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteInputError):
            gen_loss(float("nan"), 0.0, 100.0)
        with pytest.raises(NonFiniteInputError):
            gen_loss(0.0, float("inf"), 100.0)


class TestFitnessValue:
    def test_analytic(self):
        assert fitness_value(1.0, 100.0, 0.01) == 0.5

    def test_gamma_zero_ignores_cost(self):
        assert fitness_value(2.0, 1e12, 0.0) == 0.5

    def test_gamma_presets(self):
        assert GAMMA_PRESETS == (0.1, 0.01, 0.001)

    def test_strictly_decreasing_in_both_arguments(self):
        base = fitness_value(1.0, 100.0, 0.01)
        assert fitness_value(1.1, 100.0, 0.01) < base
        assert fitness_value(1.0, 110.0, 0.01) < base

    def test_nonpositive_denominator(self):
        with pytest.raises(NonpositiveDenominatorError):
            fitness_value(-2.0, 100.0, 0.01)
        with pytest.raises(NonpositiveDenominatorError):
            fitness_value(0.0, 0.0, 0.0)


class TestSurrogate:
    def test_target_hits_base_loss(self, baseline, rng):
        cfg = SurrogateConfig(target=baseline)
        response = surrogate_eval(baseline, cfg, rng)
        assert response.ok
        assert response.l_gan == 0.5
        assert response.l_l1 == 0.0

    def test_one_skip_bit_off(self, baseline, rng):
        cfg = SurrogateConfig(target=baseline)
        g = Genome(baseline.channel_code, (0,) + baseline.skip_code[1:])
        response = surrogate_eval(g, cfg, rng)
        assert response.l_gan == pytest.approx(0.5 + 2.0 / 7.0)

    def test_one_log2_channel_step(self, baseline, rng):
        cfg = SurrogateConfig(target=baseline)
        g = Genome((128,) + baseline.channel_code[1:], baseline.skip_code)
        response = surrogate_eval(g, cfg, rng)
        assert response.l_gan == pytest.approx(0.625)

    def test_space_mismatch(self, baseline, tiny_space, rng):
        cfg = SurrogateConfig(target=baseline)
        with pytest.raises(SpaceMismatchError):
            surrogate_eval(random_genome(tiny_space, rng), cfg, rng)

    def test_noise_is_deterministic_given_rng(self, baseline):
        cfg = SurrogateConfig(target=baseline, noise_sigma=0.3)
        a = surrogate_eval(baseline, cfg, np.random.default_rng(4)).l_gan
        b = surrogate_eval(baseline, cfg, np.random.default_rng(4)).l_gan
        assert a == b != 0.5

    def test_unique_global_optimum_on_enumerable_space(self):
        space = SearchSpace(
            channel_choices=(64, 128, 256, 512), channel_code_length=4, skip_code_length=3
        )
        target = Genome(channel_code=(128, 512, 64, 256), skip_code=(1, 0, 1))
        cfg = SurrogateConfig(target=target)
        losses = {}
        for channels in itertools.product(space.channel_choices, repeat=4):
            for skips in itertools.product((0, 1), repeat=3):
                g = Genome(channels, skips)
                losses[g] = surrogate_loss(g, cfg)
        assert len(losses) == 2048
        ranked = sorted(losses.items(), key=lambda kv: kv[1])
        assert ranked[0][0] == target
        assert ranked[0][1] < ranked[1][1]


class TestWireFormats:
    def test_request_round_trip(self):
        req = make_request(seed=99)
        again = EvalRequest.from_wire(req.to_wire())
        assert again == req
        assert json.loads(req.to_wire())["lambda"] == 100.0

    def test_request_invariants(self):
        with pytest.raises(ValueError):
            EvalRequest(
                architecture={}, genome="", lambda_=-1.0,
                train_budget={"mini_epochs": 1, "batch_size": 1},
                dataset={}, seed=0,
            )
        with pytest.raises(ValueError):
            EvalRequest(
                architecture={}, genome="", lambda_=1.0,
                train_budget={"mini_epochs": 0, "batch_size": 1},
                dataset={}, seed=0,
            )

    def test_response_round_trip(self):
        resp = EvalResponse(l_gan=0.7, l_l1=0.002)
        assert EvalResponse.from_wire(resp.to_wire()) == resp

    def test_response_validation(self):
        assert EvalResponse.from_wire("not json").status == "failed"
        assert "malformed-response" in EvalResponse.from_wire("{}").message
        nan = EvalResponse.from_wire('{"l_gan": NaN, "l_l1": 0, "status": "ok", "message": ""}')
        assert nan.status == "failed"
        assert "non-finite-loss" in nan.message
        negative = EvalResponse.from_wire('{"l_gan": 0.5, "l_l1": -1, "status": "ok", "message": ""}')
        assert negative.status == "failed"


class TestExternalEval:
    def test_loopback_ok(self):
        response = external_eval(make_request(), loopback_endpoint("ok"), timeout_s=30)
        assert response == EvalResponse(l_gan=0.7, l_l1=0.002, status="ok", message="")

    def test_loopback_nan_is_non_finite_loss(self):
        response = external_eval(make_request(), loopback_endpoint("nan"), timeout_s=30)
        assert response.status == "failed"
        assert "non-finite-loss" in response.message

    def test_loopback_malformed(self):
        response = external_eval(make_request(), loopback_endpoint("malformed"), timeout_s=30)
        assert response.status == "failed"
        assert "malformed-response" in response.message

    def test_loopback_timeout(self):
        start = time.time()
        response = external_eval(make_request(), loopback_endpoint("sleep"), timeout_s=1.0)
        assert response.status == "failed"
        assert "timeout" in response.message
        assert time.time() - start < 4

    def test_loopback_reported_failure(self):
        response = external_eval(make_request(), loopback_endpoint("fail"), timeout_s=30)
        assert response.status == "failed"
        assert "boom" in response.message

    def test_spawn_failure(self):
        response = external_eval(make_request(), "/nonexistent/evaluator-binary", timeout_s=5)
        assert response.status == "failed"
        assert "process-spawn-failure" in response.message

    def test_crash_after_request(self):
        response = external_eval(make_request(), loopback_endpoint("crash"), timeout_s=30)
        assert response.status == "failed"

    def test_default_timeout_constant(self):
        assert DEFAULT_TIMEOUT_S == 3600.0

    def test_pool_joins_by_index(self):
        requests = [make_request(seed=i) for i in range(5)]
        with EvaluatorPool(loopback_endpoint("cheap"), timeout_s=30, parallelism=2) as pool:
            responses = pool.evaluate_many(requests)
        assert len(responses) == 5
        assert all(r.ok for r in responses)
        # "cheap" derives its loss from the genome, identical here for all
        expected = (64 + 128) / 1000.0
        assert all(r.l_gan == expected for r in responses)

    def test_pool_survives_worker_timeout(self):
        with EvaluatorPool(loopback_endpoint("sleep"), timeout_s=0.5, parallelism=1) as pool:
            first = pool.evaluate_many([make_request(seed=1)])
            second = pool.evaluate_many([make_request(seed=2)])
        assert first[0].status == "failed" and "timeout" in first[0].message
        assert second[0].status == "failed" and "timeout" in second[0].message


class TestEvaluateIndividual:
    def cost(self, flops_m=100.0):
        params = 1000
        return CostReport(flops_m=flops_m, params=params, memory_mib=params * 4 / 2**20)

    def test_ok_response_math(self, baseline):
        ind = Individual(genome=baseline)
        response = EvalResponse(l_gan=0.5, l_l1=0.01)
        out = evaluate_individual(ind, lambda g: response, self.cost(100.0), gamma=0.01)
        assert out.fitness == pytest.approx(1.0 / (1.5 + 1.0))
        assert not out.penalized
        assert out.eval_record == response

    def test_failed_response_penalized(self, baseline):
        ind = Individual(genome=baseline)
        out = evaluate_individual(
            ind, lambda g: EvalResponse.failed("timeout"), self.cost(), gamma=0.01
        )
        assert out.fitness == PENALTY_EPSILON == 1e-9
        assert out.penalized

    def test_degenerate_loss_penalized(self, baseline):
        ind = Individual(genome=baseline)
        response = EvalResponse(l_gan=-50.0, l_l1=0.0)
        out = evaluate_individual(ind, lambda g: response, self.cost(1.0), gamma=0.01)
        assert out.penalized
        assert out.fitness == PENALTY_EPSILON

    def test_evaluator_exception_penalized(self, baseline, tiny_space, rng):
        cfg = SurrogateConfig(target=random_genome(tiny_space, rng))
        ind = Individual(genome=baseline)
        out = evaluate_individual(
            ind,
            lambda g: surrogate_eval(g, cfg, rng),
            self.cost(),
            gamma=0.0,
        )
        assert out.penalized

    def test_lower_flops_wins_at_equal_loss(self, baseline):
        response = EvalResponse(l_gan=1.0, l_l1=0.0)
        small = evaluate_individual(
            Individual(genome=baseline), lambda g: response, self.cost(100.0), gamma=0.01
        )
        large = evaluate_individual(
            Individual(genome=baseline), lambda g: response, self.cost(200.0), gamma=0.01
        )
        assert small.fitness > large.fitness

    def test_argmax_invariant_under_fitness_scaling(self):
        fitnesses = [0.2, 0.9, 0.4, 0.9]
        best = max(range(4), key=lambda j: (fitnesses[j], -j))
        for c in (1e-9, 7.0, 1e9):
            scaled = [c * f for f in fitnesses]
            assert max(range(4), key=lambda j: (scaled[j], -j)) == best
