from __future__ import annotations

import json

from embed_exporter.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


def run(*argv):
    return main(list(argv))


class TestExportCommand:
    def test_export(self, small_export, tmp_path):
        out = tmp_path / "emb.tsv"
        code = run(
            "export", "--events-text", str(small_export / "events-text.tsv"),
            "--model", "local-small", "--max-length", "128", "--out", str(out),
        )
        assert code == EXIT_OK
        assert out.read_text().startswith("dim=64\n")

    def test_missing_input(self, tmp_path):
        code = run("export", "--events-text", str(tmp_path / "nope.tsv"),
                   "--model", "local-small", "--out", str(tmp_path / "o.tsv"))
        assert code == EXIT_DATA

    def test_unresolvable_model(self, small_export, tmp_path):
        code = run("export", "--events-text", str(small_export / "events-text.tsv"),
                   "--model", "no-such-model-anywhere", "--out", str(tmp_path / "o.tsv"))
        assert code == EXIT_DATA


class TestUsage:
    def test_unknown_subcommand(self):
        assert run("frobnicate") == EXIT_USAGE

    def test_missing_required(self):
        assert run("export") == EXIT_USAGE


class TestFinetuneCommand:
    def test_report_written(self, semantic_export, tmp_path):
        code = run(
            "finetune", "--traces-text", str(semantic_export / "traces-text.tsv"),
            "--splits", str(semantic_export / "splits.tsv"),
            "--model", "local-small", "--max-length", "128",
            "--task", "ad", "--epochs", "2", "--out", str(tmp_path),
        )
        assert code == EXIT_OK
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["model_kind"] == "finetune"
        assert len(doc["epoch_log"]) == 2
        assert 0.0 <= doc["metrics"]["test"]["f1"] <= 1.0


class TestMilCommand:
    def test_report_written(self, small_export, tmp_path):
        code = run(
            "mil", "--events-text", str(small_export / "events-text.tsv"),
            "--traces-text", str(small_export / "traces-text.tsv"),
            "--splits", str(small_export / "splits.tsv"),
            "--model", "local-small", "--max-length", "64",
            "--segment-size", "2", "--epochs", "1", "--out", str(tmp_path),
        )
        assert code == EXIT_OK
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["model_kind"] == "mil"
        assert len(doc["epoch_log"]) == 1
