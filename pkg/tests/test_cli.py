"""Tests for the command-line interface."""

from __future__ import annotations

from collections.abc import Generator
from pathlib import Path

import pytest

from app.cli import build_parser, main

TINY = Path(__file__).resolve().parent.parent / "configs" / "tiny.toml"


@pytest.fixture(autouse=True)
def no_export(monkeypatch: pytest.MonkeyPatch) -> Generator[None, None, None]:
    """Keep spans local and the runtime lenient."""
    monkeypatch.delenv("OTEL_EXPORTER_OTLP_ENDPOINT", raising=False)
    monkeypatch.delenv("SLICING_STRICT", raising=False)
    monkeypatch.setenv("LOG_LEVEL", "WARNING")
    yield


def run_args(out: Path, *extra: str) -> list[str]:
    return ["run", "--config", str(TINY), "--horizon", "120", "--output-dir", str(out), *extra]


class TestParser:
    """Argument surface."""

    def test_subcommand_required(self) -> None:
        """A bare invocation is a usage error."""
        with pytest.raises(SystemExit) as excinfo:
            build_parser().parse_args([])
        assert excinfo.value.code == 2

    def test_unknown_policy(self) -> None:
        """Policies are limited to the known controllers."""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["run", "--policy", "greedy"])

    def test_matrix_workers(self) -> None:
        """Matrix runs serially unless asked otherwise."""
        assert build_parser().parse_args(["matrix"]).workers == 1


class TestMain:
    """End-to-end invocations on the tiny instance."""

    def test_run_prints_csv_path(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """A successful run exits 0 and prints where the CSV went."""
        assert main(run_args(tmp_path, "--policy", "sau")) == 0
        printed = Path(capsys.readouterr().out.strip())
        assert printed.parent == tmp_path.resolve()
        assert printed.name == "sau_s1_T2_seed0.csv"
        assert printed.read_text().startswith("# schema: slicing-run/1;")

    def test_runs_are_reproducible(self, tmp_path: Path) -> None:
        """Same arguments, same bytes."""
        assert main(run_args(tmp_path / "a", "--seed", "5")) == 0
        assert main(run_args(tmp_path / "b", "--seed", "5")) == 0
        name = "dqn_s1_T2_seed5.csv"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_unknown_environment(self, tmp_path: Path) -> None:
        """Configuration errors exit 2 without writing anything."""
        assert main(run_args(tmp_path, "--environment", "E9")) == 2
        assert not tmp_path.joinpath("dqn_s1_E9_seed0.csv").exists()

    def test_missing_config_file(self, tmp_path: Path) -> None:
        """A missing TOML file is a configuration error."""
        assert main(["run", "--config", str(tmp_path / "absent.toml")]) == 2

    def test_invalid_log_level(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """A bad LOG_LEVEL is reported before anything runs."""
        monkeypatch.setenv("LOG_LEVEL", "chatty")
        assert main(["run", "--config", str(TINY)]) == 2

    def test_oracle(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """The oracle subcommand writes its value table."""
        code = main(["oracle", "--config", str(TINY), "--output-dir", str(tmp_path)])
        assert code == 0
        printed = Path(capsys.readouterr().out.strip())
        assert printed.name == "oracle_s1_T2.csv"
        assert printed.parent.name == "oracle"

    def test_oracle_refuses_large_cluster(self, tmp_path: Path) -> None:
        """The hexagonal cluster is too large to enumerate."""
        assert main(["oracle", "--horizon", "0", "--output-dir", str(tmp_path)]) == 1
