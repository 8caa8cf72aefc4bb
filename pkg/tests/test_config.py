"""Tests for configuration loading."""

from __future__ import annotations

from pathlib import Path

import pytest

from app.config import AdaptationConfig, Config, ExperimentConfig, load_experiment_config
from app.errors import ConfigurationError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class TestRuntimeConfig:
    """Environment-driven settings."""

    def test_defaults(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Unset variables fall back to defaults."""
        for name in ("OTEL_EXPORTER_OTLP_ENDPOINT", "LOG_LEVEL", "RESULTS_DIR", "SLICING_STRICT"):
            monkeypatch.delenv(name, raising=False)
        config = Config.from_env()
        assert config.log_level == "INFO"
        assert config.results_dir == Path("results")
        assert not config.tracing_enabled
        assert not config.strict

    def test_from_env(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Variables are read and normalized."""
        monkeypatch.setenv("OTEL_EXPORTER_OTLP_ENDPOINT", " collector:4317 ")
        monkeypatch.setenv("LOG_LEVEL", "debug")
        monkeypatch.setenv("SLICING_STRICT", "yes")
        config = Config.from_env()
        assert config.otel_endpoint == "collector:4317"
        assert config.tracing_enabled
        assert config.log_level == "DEBUG"
        assert config.strict

    def test_invalid_log_level(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Unknown level names are rejected."""
        monkeypatch.setenv("LOG_LEVEL", "chatty")
        with pytest.raises(ValueError, match="LOG_LEVEL"):
            Config.from_env()


class TestLoadExperimentConfig:
    """TOML parsing and overrides."""

    def test_shipped_defaults_match_builtin(self) -> None:
        """The shipped file spells out the builtin defaults."""
        config = load_experiment_config(CONFIGS / "default.toml")
        assert config.config_digest() == ExperimentConfig().config_digest()

    def test_tiny_config(self) -> None:
        """The oracle-sized instance loads with its custom profile."""
        config = load_experiment_config(CONFIGS / "tiny.toml")
        assert config.environment == "T2"
        assert config.cluster_topology().k == 2
        assert config.profile("T2").utility.probs[2] == pytest.approx(0.6)

    def test_no_path_gives_defaults(self) -> None:
        """Without a file the builtin config is used."""
        assert load_experiment_config() == ExperimentConfig()

    def test_missing_file(self, tmp_path: Path) -> None:
        """A missing file is a configuration error."""
        with pytest.raises(ConfigurationError, match="not found"):
            load_experiment_config(tmp_path / "absent.toml")

    def test_malformed_file(self, tmp_path: Path) -> None:
        """Broken TOML is a configuration error."""
        path = tmp_path / "bad.toml"
        path.write_text("[experiment\nseed = ")
        with pytest.raises(ConfigurationError, match="Malformed"):
            load_experiment_config(path)

    def test_unknown_section(self, tmp_path: Path) -> None:
        """Unrecognized sections are refused."""
        path = tmp_path / "extra.toml"
        path.write_text("[metrics]\nport = 9090\n")
        with pytest.raises(ConfigurationError, match="sections"):
            load_experiment_config(path)

    def test_unknown_key(self, tmp_path: Path) -> None:
        """Unrecognized keys inside a section are refused."""
        path = tmp_path / "typo.toml"
        path.write_text("[agent]\ngama = 0.5\n")
        with pytest.raises(ConfigurationError, match="agent"):
            load_experiment_config(path)

    def test_profile_shadowing_builtin(self, tmp_path: Path) -> None:
        """Custom profiles may not reuse E1..E5."""
        path = tmp_path / "shadow.toml"
        path.write_text("[profiles.E1]\nutility = [0.1, 0, 0, 0, 0, 0, 0, 0, 0, 0.9]\n")
        with pytest.raises(ConfigurationError, match="shadow"):
            load_experiment_config(path)

    def test_profile_load_exceeding_capacity(self, tmp_path: Path) -> None:
        """A profile's own blocks must fit on the smallest FN."""
        path = tmp_path / "big.toml"
        path.write_text(
            '[experiment]\nenvironment = "X1"\n'
            "[profiles.X1]\nutility = [0, 0, 0, 0, 0, 0, 0, 0, 0, 1]\n"
            "[profiles.X1.load]\n"
            "c_values = [9]\nc_probs = [1.0]\nh_values = [5]\nh_probs = [1.0]\n"
        )
        with pytest.raises(ConfigurationError, match="capacity"):
            load_experiment_config(path)

    def test_profile_load_exceeding_global_maxima(self, tmp_path: Path) -> None:
        """Longer holding times than [load] would push the load bonus below 1."""
        path = tmp_path / "long.toml"
        path.write_text(
            '[experiment]\nenvironment = "X1"\n'
            "[profiles.X1]\nutility = [0, 0, 0, 0, 0, 0, 0, 0, 0, 1]\n"
            "[profiles.X1.load]\n"
            "c_values = [4]\nc_probs = [1.0]\nh_values = [60]\nh_probs = [1.0]\n"
        )
        with pytest.raises(ConfigurationError, match="maxima"):
            load_experiment_config(path)

    def test_profile_load_within_maxima(self, tmp_path: Path) -> None:
        """A lighter per-profile load is accepted."""
        path = tmp_path / "light.toml"
        path.write_text(
            '[experiment]\nenvironment = "X1"\n'
            "[profiles.X1]\nutility = [0, 0, 0, 0, 0, 0, 0, 0, 0, 1]\n"
            "[profiles.X1.load]\n"
            "c_values = [1]\nc_probs = [1.0]\nh_values = [5]\nh_probs = [1.0]\n"
        )
        assert load_experiment_config(path).profile("X1").load.c_max == 1

    def test_reward_overrides(self, tmp_path: Path) -> None:
        """Reward constants and the GoS weight flow into the scenario."""
        path = tmp_path / "rewards.toml"
        path.write_text("[rewards]\nr_sh = 30\nload_bonus = false\nw_g = 0.6\n")
        scenario = load_experiment_config(path).scenario_bundle()
        assert scenario.rewards.r_sh == 30.0
        assert scenario.rewards.load_bonus_enabled is False
        assert scenario.weights.w_g == 0.6
        assert scenario.weights.w_u == pytest.approx(0.4)

    def test_unknown_policy(self) -> None:
        """Overrides are validated like file values."""
        with pytest.raises(ConfigurationError, match="policy"):
            load_experiment_config(policy="greedy")


class TestOverrides:
    """Copy-with-changes and the digest."""

    def test_none_is_ignored(self) -> None:
        """None leaves the field unchanged."""
        config = ExperimentConfig().with_overrides(seed=None, horizon=10)
        assert (config.seed, config.horizon) == (0, 10)

    def test_unknown_name(self) -> None:
        """Misspelled settings are refused."""
        with pytest.raises(ConfigurationError, match="horizen"):
            ExperimentConfig().with_overrides(horizen=10)

    def test_digest_ignores_output_dir(self, tmp_path: Path) -> None:
        """Where results go does not change what is computed."""
        base = ExperimentConfig()
        moved = base.with_overrides(output_dir=str(tmp_path))
        assert moved.output_dir == tmp_path
        assert moved.config_digest() == base.config_digest()

    def test_digest_tracks_settings(self) -> None:
        """Any computed setting changes the digest."""
        base = ExperimentConfig()
        assert base.with_overrides(seed=1).config_digest() != base.config_digest()

    def test_schedule_length(self) -> None:
        """170 samples of 2000 steps."""
        assert ExperimentConfig().schedule_length == 340_000

    def test_window_matches_sample(self) -> None:
        """KPI windows are one schedule sample long."""
        config = ExperimentConfig()
        assert config.window_size == 2000
        assert config.window_size == config.steps_per_sample

    def test_adaptation_validation(self) -> None:
        """Unknown drift responses are refused."""
        with pytest.raises(ConfigurationError):
            AdaptationConfig(mode="retrain")
