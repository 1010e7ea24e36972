"""Config schema strictness and the four CLI commands."""

import csv
import xml.etree.ElementTree as ET

import pytest

from vetokd.cli import ABLATE_CSV_COLUMNS, GRAD_STUDY_CSV_COLUMNS, main
from vetokd.config import load_config
from vetokd.errors import ConfigError
from vetokd.training import METRICS_CSV_COLUMNS

BASE_CONFIG = """\
schema_version: 1
seed: 1
task:
  kind: mod_sum
  vocab_size: 6
  prompt_len: 2
  answer_len: 3
policy:
  smoothing: 0.05
train:
  objective: forward_veto
  learning_rate: 0.5
  total_steps: {steps}
  batch_size: 4
  eval_every: 10
  eval_prompts: 40
schedule:
  kind: linear_decay
  beta_init: 0.8
"""


def write_config(tmp_path, text, name="config.yaml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestConfigSchema:
    def test_minimal_valid(self, tmp_path):
        config = load_config(write_config(tmp_path, BASE_CONFIG.format(steps=20)))
        assert config.task.kind == "mod_sum"
        assert config.train.total_steps == 20
        assert config.seeds == [1]

    def test_unknown_key_rejected(self, tmp_path):
        text = BASE_CONFIG.format(steps=20) + "mystery: 3\n"
        with pytest.raises(ConfigError, match="mystery"):
            load_config(write_config(tmp_path, text))

    def test_unknown_nested_key_rejected(self, tmp_path):
        text = BASE_CONFIG.format(steps=20).replace("  batch_size: 4",
                                                    "  batch_size: 4\n  warmup: 2")
        with pytest.raises(ConfigError, match="train.*warmup"):
            load_config(write_config(tmp_path, text))

    def test_beta_out_of_range_rejected_citing_range(self, tmp_path):
        text = BASE_CONFIG.format(steps=20).replace("beta_init: 0.8", "beta_init: 1.2")
        with pytest.raises(ConfigError, match=r"beta_init.*\[0, 1\)"):
            load_config(write_config(tmp_path, text))

    def test_schema_version_required(self, tmp_path):
        text = BASE_CONFIG.format(steps=20).replace("schema_version: 1\n", "")
        with pytest.raises(ConfigError, match="schema_version"):
            load_config(write_config(tmp_path, text))

    def test_beta_default_depends_on_task(self, tmp_path):
        text = BASE_CONFIG.format(steps=20).replace("  beta_init: 0.8\n", "")
        assert load_config(write_config(tmp_path, text)).train.schedule.beta_init == 0.8
        text2 = text.replace("kind: mod_sum", "kind: copy")
        assert load_config(write_config(tmp_path, text2)).train.schedule.beta_init == 0.3

    def test_seed_list_accepted(self, tmp_path):
        text = BASE_CONFIG.format(steps=20).replace("seed: 1", "seed: [1, 2]")
        assert load_config(write_config(tmp_path, text)).seeds == [1, 2]

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/nope.yaml")


class TestCliTrain:
    def test_writes_csv_with_exact_schema(self, tmp_path):
        config = write_config(tmp_path, BASE_CONFIG.format(steps=12))
        out = tmp_path / "out"
        assert main(["train", "--config", config, "--out", str(out), "--quiet"]) == 0
        with open(out / "metrics.csv") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == METRICS_CSV_COLUMNS
        assert len(rows) == 13  # header + one row per step
        assert (out / "policy.bin").exists()
        assert (out / "summary.txt").exists()

    def test_byte_identical_reruns(self, tmp_path):
        config = write_config(tmp_path, BASE_CONFIG.format(steps=12))
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["train", "--config", config, "--out", str(out_a), "--quiet"]) == 0
        assert main(["train", "--config", config, "--out", str(out_b), "--quiet"]) == 0
        assert (out_a / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()
        assert (out_a / "policy.bin").read_bytes() == (out_b / "policy.bin").read_bytes()

    def test_invalid_config_exits_2(self, tmp_path):
        bad = write_config(tmp_path, BASE_CONFIG.format(steps=12).replace(
            "beta_init: 0.8", "beta_init: 1.2"))
        assert main(["train", "--config", bad, "--quiet"]) == 2

    def test_seed_override(self, tmp_path):
        config = write_config(tmp_path, BASE_CONFIG.format(steps=5))
        out = tmp_path / "o"
        assert main(["train", "--config", config, "--out", str(out), "--seed", "9",
                     "--quiet"]) == 0
        assert "seed=9" in (out / "summary.txt").read_text()

    def test_seed_list_writes_per_seed_files(self, tmp_path):
        text = BASE_CONFIG.format(steps=5).replace("seed: 1", "seed: [1, 2]")
        config = write_config(tmp_path, text)
        out = tmp_path / "multi"
        assert main(["train", "--config", config, "--out", str(out), "--quiet"]) == 0
        assert (out / "metrics_seed1.csv").exists()
        assert (out / "metrics_seed2.csv").exists()

    def test_saved_policy_artifact_reproduces_reported_accuracy(self, tmp_path):
        from vetokd import SyntheticTask, TabularPolicy, task_accuracy
        config = write_config(tmp_path, BASE_CONFIG.format(steps=60))
        out = tmp_path / "art"
        assert main(["train", "--config", config, "--out", str(out), "--quiet"]) == 0
        with open(out / "metrics.csv") as fh:
            final = list(csv.DictReader(fh))[-1]
        policy = TabularPolicy.load(out / "policy.bin")
        task = SyntheticTask("mod_sum", vocab_size=6, prompt_len=2, answer_len=3)
        acc = task_accuracy(policy, task, 200, mode="greedy", seed=0)
        # same trained table; accuracies agree up to eval-prompt sampling
        assert abs(acc - float(final["accuracy"])) < 0.15


class TestCliVerify:
    def test_selector_validation_usage_error(self, tmp_path, capsys):
        assert main(["verify", "bogus", "--out", str(tmp_path)]) == 2

    def test_reductions_suite_runs_green(self, tmp_path):
        assert main(["verify", "reductions", "--out", str(tmp_path), "--quiet"]) == 0
        report = (tmp_path / "verify_report.txt").read_text()
        assert "status=PASS" in report and "status=FAIL" not in report

    def test_failed_check_exits_1_and_is_enumerated(self, tmp_path, monkeypatch):
        from vetokd import cli
        from vetokd.verify import SuiteReport

        def broken():
            report = SuiteReport("reductions")
            report.add("n1", "forced_failure", 1.0, 0.5)
            return report

        monkeypatch.setitem(cli.SUITE_BUILDERS, "reductions", broken)
        assert main(["verify", "reductions", "--out", str(tmp_path), "--quiet"]) == 1
        assert "status=FAIL" in (tmp_path / "verify_report.txt").read_text()


class TestCliGradStudy:
    def test_outputs_and_schema(self, tmp_path):
        text = BASE_CONFIG.format(steps=30).replace(
            "policy:\n  smoothing: 0.05",
            "policy:\n  smoothing: 0.3\n  init: uniform\n  init_range: 3.5")
        config = write_config(tmp_path, text)
        out = tmp_path / "gs"
        assert main(["grad-study", "--config", config, "--out", str(out), "--quiet"]) == 0
        with open(out / "grad_study.csv") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == GRAD_STUDY_CSV_COLUMNS
        assert len(rows) == 1 + 2 * 30  # both objectives, every step
        svg = ET.parse(out / "grad_study.svg").getroot()
        ns = "{http://www.w3.org/2000/svg}"
        polylines = svg.findall(f".//{ns}polyline")
        assert len(polylines) == 2
        axes = [g for g in svg.findall(f".//{ns}g") if g.get("data-scale") == "log10"]
        assert len(axes) == 1

    def test_reruns_identical(self, tmp_path):
        text = BASE_CONFIG.format(steps=15).replace(
            "policy:\n  smoothing: 0.05",
            "policy:\n  smoothing: 0.3\n  init: uniform\n  init_range: 3.5")
        config = write_config(tmp_path, text)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["grad-study", "--config", config, "--out", str(a), "--quiet"]) == 0
        assert main(["grad-study", "--config", config, "--out", str(b), "--quiet"]) == 0
        assert (a / "grad_study.csv").read_bytes() == (b / "grad_study.csv").read_bytes()
        assert (a / "grad_study.svg").read_bytes() == (b / "grad_study.svg").read_bytes()


class TestCliAblate:
    def test_grid_cardinality_and_determinism(self, tmp_path):
        text = BASE_CONFIG.format(steps=10) + (
            "ablate:\n  objective: forward_veto\n"
            "  beta_values: [0.2, 0.5, 0.8]\n"
            "  schedules: [constant, linear_decay]\n")
        config = write_config(tmp_path, text)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["ablate", "--config", config, "--out", str(out_a), "--quiet"]) == 0
        with open(out_a / "ablate.csv") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == ABLATE_CSV_COLUMNS
        assert len(rows) == 1 + 6  # 3 betas x 2 schedules
        assert main(["ablate", "--config", config, "--out", str(out_b), "--quiet"]) == 0
        assert (out_a / "ablate.csv").read_bytes() == (out_b / "ablate.csv").read_bytes()

    def test_beta_zero_cell_matches_standard_objective(self, tmp_path):
        text = BASE_CONFIG.format(steps=10) + (
            "ablate:\n  objective: forward_veto\n"
            "  beta_values: [0.0]\n"
            "  schedules: [constant, linear_decay]\n")
        config = write_config(tmp_path, text)
        out = tmp_path / "z"
        assert main(["ablate", "--config", config, "--out", str(out), "--quiet"]) == 0
        with open(out / "ablate.csv") as fh:
            rows = list(csv.DictReader(fh))
        # both beta = 0 cells carry identical outcome columns
        for key in ("final_accuracy", "max_grad_ignorant", "final_entropy",
                    "final_kl_to_teacher"):
            assert rows[0][key] == rows[1][key]


class TestCliUsage:
    def test_no_command_is_usage_error(self):
        assert main([]) == 2

    def test_missing_config_flag(self):
        assert main(["train"]) == 2
