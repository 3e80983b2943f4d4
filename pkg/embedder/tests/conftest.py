from __future__ import annotations

import subprocess
import sys

import pytest


def run_primary(*argv):
    """Invoke the graph-toolkit CLI; the only coupling is its file formats."""
    proc = subprocess.run(
        [sys.executable, "-m", "tracediag.cli", *map(str, argv)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.fixture(scope="session")
def semantic_export(tmp_path_factory):
    """Semantic-fault synthetic set exported through the primary CLI."""
    root = tmp_path_factory.mktemp("semantic")
    tables = root / "tables"
    run_primary(
        "synth", "--out", tables, "--n-traces", "300", "--events", "6:8",
        "--fanout", "2:2", "--fault-mix", "corrupt-description=0.4", "--seed", "17",
    )
    run_primary("export-text", "--tables", tables, "--out", root)
    run_primary("split", "--tables", tables, "--out", root, "--seed", "3")
    return root


@pytest.fixture(scope="session")
def small_export(tmp_path_factory):
    """50-trace export used by the embedding-export checks."""
    root = tmp_path_factory.mktemp("small")
    tables = root / "tables"
    run_primary(
        "synth", "--out", tables, "--n-traces", "50", "--events", "4:6",
        "--fault-mix", "drop-subtree=0.2", "--seed", "8",
    )
    run_primary("export-text", "--tables", tables, "--out", root)
    run_primary("split", "--tables", tables, "--out", root, "--seed", "1")
    return root
