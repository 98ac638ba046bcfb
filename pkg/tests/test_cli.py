import json

import jsonschema
import pytest

from conftest import run_cli
from evounet.decoder import ARCHITECTURE_SCHEMA
from evounet.searchloop import SearchConfig, run_search


def extract_effective_config(stdout: str) -> dict:
    line = next(l for l in stdout.splitlines() if l.startswith("effective-config: "))
    return json.loads(line.removeprefix("effective-config: "))


SEARCH_FLAGS = ["--evaluator", "surrogate", "--seed", "1", "--pop", "8", "--gens", "6", "--gamma", "0"]


class TestSearchCommand:
    def test_deterministic_history_files(self, tmp_path):
        a = run_cli("search", *SEARCH_FLAGS, "--out", str(tmp_path / "a"))
        b = run_cli("search", *SEARCH_FLAGS, "--out", str(tmp_path / "b"))
        assert a.returncode == 0 and b.returncode == 0
        assert (tmp_path / "a" / "history.jsonl").read_bytes() == (
            tmp_path / "b" / "history.jsonl"
        ).read_bytes()

    def test_effective_config_defaults(self, tmp_path):
        result = run_cli(
            "search", "--gamma", "0.01", "--gens", "2", "--pop", "4",
            "--out", str(tmp_path / "run"),
        )
        assert result.returncode == 0
        cfg = extract_effective_config(result.stdout)
        assert cfg["gamma"] == 0.01
        assert cfg["lambda"] == 100.0
        # defaults used when --pop/--gens are omitted
        bare = run_cli("search", "--gamma", "0.01", "--gens", "1", "--pop", "4",
                       "--out", str(tmp_path / "run2"))
        defaults = SearchConfig.from_dict(extract_effective_config(bare.stdout))
        assert SearchConfig().population_size == 32
        assert SearchConfig().generations == 100
        assert defaults.gamma == 0.01

    def test_config_feedback_reproduces_run(self, tmp_path):
        first = run_cli("search", *SEARCH_FLAGS, "--out", str(tmp_path / "a"))
        cfg = extract_effective_config(first.stdout)
        cfg_file = tmp_path / "config.json"
        cfg_file.write_text(json.dumps(cfg))
        second = run_cli("search", "--config", str(cfg_file), "--out", str(tmp_path / "b"))
        assert second.returncode == 0
        assert extract_effective_config(second.stdout) == cfg
        assert (tmp_path / "a" / "history.jsonl").read_bytes() == (
            tmp_path / "b" / "history.jsonl"
        ).read_bytes()

    def test_missing_out_is_usage_error(self):
        result = run_cli("search", "--evaluator", "surrogate")
        assert result.returncode == 2
        assert "--out" in result.stderr
        assert "usage" in result.stderr.lower()

    def test_bad_evaluator_is_config_error(self, tmp_path):
        result = run_cli("search", "--evaluator", "bogus", "--out", str(tmp_path / "x"))
        assert result.returncode == 2
        assert "error" in result.stderr

    def test_progress_lines_printed(self, tmp_path):
        result = run_cli("search", *SEARCH_FLAGS, "--out", str(tmp_path / "run"))
        lines = [l for l in result.stdout.splitlines() if l.startswith("gen ")]
        assert len(lines) == 7  # generations 0..6
        assert "best" in lines[0] and "mean" in lines[0]


class TestResumeCommand:
    def test_resume_completes_interrupted_run(self, tmp_path, tiny_space):
        from evounet.searchloop import ImageConfig, SurrogateSpec

        cfg = SearchConfig(
            space=tiny_space, population_size=4, generations=8, gamma=0.01,
            evaluator=SurrogateSpec(target="128,64|1"),
            image=ImageConfig(3, 16), seed=2,
        )
        full = run_search(cfg, out_dir=tmp_path / "full")
        run_search(cfg, out_dir=tmp_path / "split", stop_after_generation=3)
        result = run_cli("resume", "--out", str(tmp_path / "split"))
        assert result.returncode == 0
        assert (tmp_path / "split" / "history.jsonl").read_bytes() == (
            tmp_path / "full" / "history.jsonl"
        ).read_bytes()

    def test_resume_without_checkpoint_fails(self, tmp_path):
        result = run_cli("resume", "--out", str(tmp_path))
        assert result.returncode == 3

    def test_resume_corrupt_checkpoint_fails(self, tmp_path):
        (tmp_path / "checkpoint.json").write_text('{"format": "bogus"}')
        result = run_cli("resume", "--out", str(tmp_path))
        assert result.returncode == 3


class TestCostCommand:
    def test_baseline_reference_figures(self):
        result = run_cli("cost", "--baseline")
        assert result.returncode == 0
        total = next(l for l in result.stdout.splitlines() if l.startswith("total"))
        parts = total.split()
        flops_m = float(parts[2])
        memory_mib = float(parts[6])
        assert abs(flops_m - 18_147) / 18_147 < 0.005
        assert abs(memory_mib - 208) / 208 < 0.02

    def test_skipless_genome_strictly_cheaper(self):
        skipless = "64,128,256,512,512,512,512,512|0,0,0,0,0,0,0"
        base = run_cli("cost", "--baseline")
        off = run_cli("cost", "--genome", skipless)
        base_total = next(l for l in base.stdout.splitlines() if l.startswith("total")).split()
        off_total = next(l for l in off.stdout.splitlines() if l.startswith("total")).split()
        assert float(off_total[2]) < float(base_total[2])
        assert int(off_total[4]) < int(base_total[4])

    def test_malformed_genome_names_token(self):
        result = run_cli("cost", "--genome", "64,999,256,512,512,512,512,512|1,1,1,1,1,1,1")
        assert result.returncode == 2
        assert "999" in result.stderr
        assert "position 2" in result.stderr

    def test_json_variant_carries_cost_field(self):
        result = run_cli("cost", "--baseline", "--json")
        doc = json.loads(result.stdout)
        jsonschema.validate(doc, ARCHITECTURE_SCHEMA)
        assert doc["cost"]["params"] == 54_409_603

    def test_per_layer_lines(self):
        result = run_cli("cost", "--baseline")
        names = [l.split()[0] for l in result.stdout.splitlines()[1:-1]]
        assert names == [f"E{k}" for k in range(1, 9)] + [f"D{k}" for k in range(8, 0, -1)]


class TestDecodeCommand:
    BASELINE = "64,128,256,512,512,512,512,512|1,1,1,1,1,1,1"

    def test_text_format(self):
        result = run_cli("decode", "--genome", self.BASELINE)
        assert result.returncode == 0
        assert "E1" in result.stdout and "D1" in result.stdout
        assert "skips 1,1,1,1,1,1,1" in result.stdout

    def test_document_format_is_valid(self):
        result = run_cli("decode", "--genome", self.BASELINE, "--format", "document")
        doc = json.loads(result.stdout)
        jsonschema.validate(doc, ARCHITECTURE_SCHEMA)
        assert doc["genome"] == self.BASELINE

    def test_parse_error_exit_code(self):
        result = run_cli("decode", "--genome", "garbage")
        assert result.returncode == 2


class TestSmallCommands:
    def test_spacesize_default(self):
        result = run_cli("spacesize")
        assert result.returncode == 0
        assert result.stdout.strip() == "8388608"

    def test_spacesize_custom(self):
        result = run_cli("spacesize", "--channel-choices", "64,128", "--code-length", "2")
        assert result.stdout.strip() == "8"

    def test_baseline_prints_canonical_genome(self):
        result = run_cli("baseline")
        assert result.stdout.strip() == "64,128,256,512,512,512,512,512|1,1,1,1,1,1,1"

    def test_export_best(self, tmp_path, tiny_space):
        from evounet.searchloop import ImageConfig, SurrogateSpec

        cfg = SearchConfig(
            space=tiny_space, population_size=4, generations=4, gamma=0.01,
            evaluator=SurrogateSpec(target="128,64|1"),
            image=ImageConfig(3, 16), seed=2,
        )
        run_search(cfg, out_dir=tmp_path)
        result = run_cli("export-best", "--out", str(tmp_path))
        assert result.returncode == 0
        doc = json.loads(result.stdout)
        jsonschema.validate(doc, ARCHITECTURE_SCHEMA)
        assert doc == json.loads((tmp_path / "best_architecture.json").read_text())

    def test_export_best_request_template(self, tmp_path, tiny_space):
        from evounet.searchloop import ImageConfig, SurrogateSpec

        cfg = SearchConfig(
            space=tiny_space, population_size=4, generations=4, gamma=0.01,
            evaluator=SurrogateSpec(target="128,64|1"),
            image=ImageConfig(3, 16), seed=2,
        )
        run_search(cfg, out_dir=tmp_path)
        result = run_cli("export-best", "--out", str(tmp_path), "--request-template")
        template = json.loads(result.stdout)
        assert template["lambda"] == 100.0
        assert "architecture" in template and "seed" in template
