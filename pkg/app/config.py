"""
Application configuration management.

Two layers:
- `Config`: process-level runtime settings (telemetry, logging, output root)
  loaded from environment variables.
- `ExperimentConfig`: everything that determines a simulation run, loaded
  from a TOML file and overridable from the command line. Its digest is
  embedded in every output file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import sys
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from app.errors import ConfigurationError
from app.services.baselines import TabularConfig
from app.services.cluster import ClusterTopology
from app.services.dqn_agent import AgentConfig
from app.services.environment import (
    BUILTIN_UTILITY_COLUMNS,
    DAILY_SEQUENCE,
    DEFAULT_LOAD,
    EnvironmentProfile,
    LoadDistribution,
    PrimaryFnRule,
    ScheduleSegment,
    UtilityDistribution,
    builtin_profile,
)
from app.services.mdp import REWARD_TABLE, Scenario, ScenarioWeights, builtin_scenario

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

POLICIES: tuple[str, ...] = ("dqn", "sau", "shu", "ql", "random")
MATRIX_POLICIES: tuple[str, ...] = ("dqn", "sau", "shu", "ql")
ADAPTATION_MODES: tuple[str, ...] = ("online", "policy_bank", "none")
TOPOLOGY_KINDS: tuple[str, ...] = ("hexagonal", "uniform", "custom")
LOG_LEVELS: tuple[str, ...] = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
REWARD_KEYS: tuple[str, ...] = ("r_sh", "r_sl", "r_rh", "r_rl", "r_bh", "r_bl")


def _env_bool(name: str, default: str = "false") -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


@dataclass(frozen=True)
class Config:
    """Runtime configuration loaded from environment variables.

    Attributes:
        otel_endpoint: OTLP exporter endpoint; empty disables span export.
        service_name: Service name for traces.
        service_namespace: Service namespace for traces.
        environment: Deployment environment label.
        app_version: Application version.
        build_number: CI build number.
        log_level: Root log level.
        results_dir: Default output directory for run artifacts.
        strict: Enable debug contract checks (double-count detection).
    """

    # OpenTelemetry settings
    otel_endpoint: str = ""
    service_name: str = "fog-slicing-sim"
    service_namespace: str = "fog-slicing"
    environment: str = "local"

    # Application metadata
    app_version: str = "1.0.0"
    build_number: str = "0"

    # Runtime behaviour
    log_level: str = "INFO"
    results_dir: Path = field(default_factory=lambda: Path("results"))
    strict: bool = False

    @classmethod
    def from_env(cls) -> Config:
        """Create configuration from environment variables.

        Raises:
            ValueError: If LOG_LEVEL is not a known level name.
        """
        log_level = os.getenv("LOG_LEVEL", "INFO").strip().upper()
        if log_level not in LOG_LEVELS:
            raise ValueError(
                f"Invalid LOG_LEVEL value: {log_level!r}. Expected one of {', '.join(LOG_LEVELS)}."
            )

        return cls(
            # OpenTelemetry
            otel_endpoint=os.getenv("OTEL_EXPORTER_OTLP_ENDPOINT", "").strip(),
            service_name=os.getenv("OTEL_SERVICE_NAME", "fog-slicing-sim"),
            service_namespace=os.getenv("OTEL_SERVICE_NAMESPACE", "fog-slicing"),
            environment=os.getenv("OTEL_ENVIRONMENT", "local"),
            # App metadata
            app_version=os.getenv("APP_VERSION", "1.0.0"),
            build_number=os.getenv("BUILD_NUMBER", "0"),
            # Runtime
            log_level=log_level,
            results_dir=Path(os.getenv("RESULTS_DIR", "results")),
            strict=_env_bool("SLICING_STRICT"),
        )

    @property
    def tracing_enabled(self) -> bool:
        return bool(self.otel_endpoint)


@dataclass(frozen=True)
class TopologySpec:
    """How to build the cluster.

    `hexagonal` is the seven-FN hexagon with the centre FN as EC, `uniform`
    a fully connected cluster of k equal FNs, `custom` takes explicit
    capacities and neighbour lists.
    """

    kind: str = "hexagonal"
    k: int = 7
    capacity: int = 7
    capacities: tuple[int, ...] = ()
    neighbors: tuple[tuple[int, ...], ...] = ()
    ec_index: int = 0

    def __post_init__(self) -> None:
        if self.kind not in TOPOLOGY_KINDS:
            raise ConfigurationError(
                f"Unknown topology kind {self.kind!r}; expected one of {TOPOLOGY_KINDS}"
            )

    def build(self) -> ClusterTopology:
        if self.kind == "hexagonal":
            return ClusterTopology.hexagonal(self.capacity)
        if self.kind == "uniform":
            return ClusterTopology.uniform(self.k, self.capacity, ec_index=self.ec_index or 1)
        if not self.capacities or not self.neighbors:
            raise ConfigurationError("Custom topology needs capacities and neighbors")
        return ClusterTopology(
            k=len(self.capacities),
            capacities=self.capacities,
            neighbors=self.neighbors,
            ec_index=self.ec_index or 1,
        )


@dataclass(frozen=True)
class AdaptationConfig:
    """Traffic-change handling for dynamic runs.

    Attributes:
        mode: `online` re-boosts exploration on drift, `policy_bank` swaps in
            weights learned for a matching earlier profile, `none` ignores drift.
        window: Sliding window of observed utilities compared to the reference.
        check_interval: Steps between drift tests.
        quantile: Chi-square quantile used as the detection threshold.
        boost_epsilon: Exploration rate restored on drift in `online` mode.
        cooldown: Minimum steps between two detections.
        match_quantile: Threshold quantile for matching a banked profile.
    """

    mode: str = "online"
    window: int = 10_000
    check_interval: int = 1000
    quantile: float = 0.99
    boost_epsilon: float = 0.3
    cooldown: int = 10_000
    match_quantile: float = 0.99

    def __post_init__(self) -> None:
        if self.mode not in ADAPTATION_MODES:
            raise ConfigurationError(
                f"Unknown adaptation mode {self.mode!r}; expected one of {ADAPTATION_MODES}"
            )
        if self.window < 1 or self.check_interval < 1:
            raise ConfigurationError("Adaptation window and check_interval must be >= 1")
        if not 0.0 < self.quantile < 1.0 or not 0.0 < self.match_quantile < 1.0:
            raise ConfigurationError("Adaptation quantiles must be in (0, 1)")
        if not 0.0 <= self.boost_epsilon <= 1.0:
            raise ConfigurationError(f"boost_epsilon must be in [0, 1], got {self.boost_epsilon}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration of one experiment.

    Attributes:
        seed: Master seed; every random stream derives from it.
        horizon: Number of decision steps T.
        window_size: Steps per KPI window row.
        policy: Controller name (dqn, sau, shu, ql, random).
        scenario: Reward scenario id.
        environment: Profile id for static runs.
        output_dir: Root directory for CSV and snapshot output.
        u_h: High-utility threshold.
        serve_preference: Serve order for rule-based controllers.
        strict: Reject double-counted steps.
        save_snapshot: Write the trained DQN policy next to its CSV.
        steps_per_sample: Steps per schedule sample unit.
        schedule: Dynamic-run segments as (profile id, samples).
        rewards: Reward constant overrides by name, plus optional load_bonus.
        w_g: GoS weight override.
    """

    seed: int = 0
    horizon: int = 300_000
    window_size: int = 2000
    policy: str = "dqn"
    scenario: int = 1
    environment: str = "E3"
    output_dir: Path = field(default_factory=lambda: Path("results"))
    u_h: int = 8
    serve_preference: str = "ordered"
    strict: bool = False
    save_snapshot: bool = True
    steps_per_sample: int = 2000
    schedule: tuple[tuple[str, int], ...] = DAILY_SEQUENCE
    topology: TopologySpec = field(default_factory=TopologySpec)
    load: LoadDistribution = DEFAULT_LOAD
    profiles: tuple[EnvironmentProfile, ...] = ()
    rewards: Mapping[str, float] = field(default_factory=dict)
    w_g: float | None = None
    agent: AgentConfig = field(default_factory=AgentConfig)
    baselines: TabularConfig = field(default_factory=TabularConfig)
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise ConfigurationError(f"Unknown policy {self.policy!r}; expected one of {POLICIES}")
        if self.scenario not in REWARD_TABLE:
            raise ConfigurationError(
                f"Unknown scenario {self.scenario!r}; expected one of {sorted(REWARD_TABLE)}"
            )
        if self.horizon < 0:
            raise ConfigurationError(f"horizon must be >= 0, got {self.horizon}")
        if self.window_size < 1:
            raise ConfigurationError(f"window_size must be >= 1, got {self.window_size}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {self.seed}")
        if self.serve_preference not in ("ordered", "most_free"):
            raise ConfigurationError(f"Unknown serve preference {self.serve_preference!r}")
        if self.steps_per_sample < 1:
            raise ConfigurationError("steps_per_sample must be >= 1")
        if not self.schedule:
            raise ConfigurationError("schedule must have at least one segment")
        unknown = set(self.rewards) - {*REWARD_KEYS, "load_bonus"}
        if unknown:
            raise ConfigurationError(f"Unknown reward keys {sorted(unknown)}")
        for pid in {self.environment, *(pid for pid, _ in self.schedule)}:
            self.profile(pid)
        min_capacity = self.cluster_topology().min_capacity
        self.load.validate_capacity(min_capacity)
        for profile in self.profiles:
            profile.load.validate_capacity(min_capacity)
            if profile.load.c_max > self.load.c_max or profile.load.h_max > self.load.h_max:
                raise ConfigurationError(
                    f"Profile {profile.id!r} load (c_max={profile.load.c_max}, "
                    f"h_max={profile.load.h_max}) exceeds the [load] maxima "
                    f"(c_max={self.load.c_max}, h_max={self.load.h_max})"
                )

    def cluster_topology(self) -> ClusterTopology:
        return self.topology.build()

    def profile(self, profile_id: str) -> EnvironmentProfile:
        """Custom profile by id, else the builtin one with this config's load.

        Raises:
            ConfigurationError: If the id is neither custom nor builtin.
        """
        for profile in self.profiles:
            if profile.id == profile_id:
                return profile
        return builtin_profile(profile_id, self.load)

    def scenario_bundle(self) -> Scenario:
        """Builtin scenario with reward and weight overrides applied."""
        base = builtin_scenario(self.scenario, self.u_h, self.load.c_max, self.load.h_max)
        changes: dict[str, Any] = {
            k: float(v) for k, v in self.rewards.items() if k != "load_bonus"
        }
        if "load_bonus" in self.rewards:
            changes["load_bonus_enabled"] = bool(self.rewards["load_bonus"])
        rewards = dataclasses.replace(base.rewards, **changes) if changes else base.rewards
        weights = base.weights
        if self.w_g is not None:
            weights = ScenarioWeights(w_g=self.w_g, w_u=round(1.0 - self.w_g, 10))
        return Scenario(id=base.id, rewards=rewards, weights=weights)

    def static_schedule(self) -> list[ScheduleSegment]:
        """A single segment holding the configured environment for the whole run."""
        return [ScheduleSegment(self.profile(self.environment), max(self.horizon, 1))]

    def dynamic_schedule(self) -> list[ScheduleSegment]:
        return [
            ScheduleSegment(self.profile(pid), samples * self.steps_per_sample)
            for pid, samples in self.schedule
        ]

    @property
    def schedule_length(self) -> int:
        return sum(samples for _, samples in self.schedule) * self.steps_per_sample

    def with_overrides(self, **overrides: Any) -> ExperimentConfig:
        """Copy with top-level fields replaced; None values are ignored."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        known = {f.name for f in dataclasses.fields(self)}
        unknown = set(changes) - known
        if unknown:
            raise ConfigurationError(f"Unknown experiment settings {sorted(unknown)}")
        if "output_dir" in changes:
            changes["output_dir"] = Path(changes["output_dir"])
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        """Canonical plain-data form; output_dir is excluded."""
        data = dataclasses.asdict(self)
        data.pop("output_dir")
        data["rewards"] = dict(sorted(self.rewards.items()))
        return data

    def config_digest(self) -> str:
        """SHA-256 of the canonical JSON of the resolved configuration."""
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


_SECTIONS = (
    "experiment",
    "topology",
    "load",
    "profiles",
    "schedule",
    "rewards",
    "agent",
    "baselines",
    "adaptation",
)


def _tuplify(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _build(cls: type, section: str, data: Mapping[str, Any]) -> Any:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"Unknown keys in [{section}]: {sorted(unknown)}")
    try:
        return cls(**{k: _tuplify(v) for k, v in data.items()})
    except TypeError as exc:
        raise ConfigurationError(f"Invalid [{section}] section: {exc}") from exc


def _parse_profiles(
    data: Mapping[str, Any], default_load: LoadDistribution
) -> tuple[EnvironmentProfile, ...]:
    profiles: list[EnvironmentProfile] = []
    for pid, body in data.items():
        unknown = set(body) - {"utility", "primary_weights", "load"}
        if unknown:
            raise ConfigurationError(f"Unknown keys in [profiles.{pid}]: {sorted(unknown)}")
        if "utility" not in body:
            raise ConfigurationError(f"[profiles.{pid}] needs a utility column")
        load = default_load
        if "load" in body:
            load = _build(LoadDistribution, f"profiles.{pid}.load", body["load"])
        weights = body.get("primary_weights")
        profiles.append(
            EnvironmentProfile(
                id=pid,
                utility=UtilityDistribution(tuple(float(p) for p in body["utility"])),
                load=load,
                primary_fn_rule=PrimaryFnRule(tuple(weights) if weights else None),
            )
        )
    return tuple(profiles)


def parse_experiment_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    """Build an ExperimentConfig from parsed TOML data.

    Raises:
        ConfigurationError: On unknown sections or keys, or invalid values.
    """
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigurationError(f"Unknown config sections {sorted(unknown)}")
    top: dict[str, Any] = dict(raw.get("experiment", {}))
    if "output_dir" in top:
        top["output_dir"] = Path(top["output_dir"])

    load = _build(LoadDistribution, "load", raw["load"]) if "load" in raw else DEFAULT_LOAD
    top["load"] = load
    if "topology" in raw:
        top["topology"] = _build(TopologySpec, "topology", raw["topology"])
    if "profiles" in raw:
        clashes = set(raw["profiles"]) & set(BUILTIN_UTILITY_COLUMNS)
        if clashes:
            raise ConfigurationError(f"Custom profiles shadow builtin ids {sorted(clashes)}")
        top["profiles"] = _parse_profiles(raw["profiles"], load)
    if "schedule" in raw:
        schedule = dict(raw["schedule"])
        extra = set(schedule) - {"segments", "steps_per_sample"}
        if extra:
            raise ConfigurationError(f"Unknown keys in [schedule]: {sorted(extra)}")
        if "segments" in schedule:
            top["schedule"] = tuple((str(pid), int(n)) for pid, n in schedule["segments"])
        if "steps_per_sample" in schedule:
            top["steps_per_sample"] = int(schedule["steps_per_sample"])
    if "rewards" in raw:
        rewards = dict(raw["rewards"])
        if "w_g" in rewards:
            top["w_g"] = float(rewards.pop("w_g"))
        top["rewards"] = rewards
    if "agent" in raw:
        top["agent"] = _build(AgentConfig, "agent", raw["agent"])
    if "baselines" in raw:
        top["baselines"] = _build(TabularConfig, "baselines", raw["baselines"])
    if "adaptation" in raw:
        top["adaptation"] = _build(AdaptationConfig, "adaptation", raw["adaptation"])
    return _build(ExperimentConfig, "experiment", top)


def load_experiment_config(path: Path | str | None = None, **overrides: Any) -> ExperimentConfig:
    """Load an experiment config from TOML and apply overrides.

    Without a path the builtin defaults are used.

    Raises:
        ConfigurationError: If the file is missing, malformed or invalid.
    """
    if path is None:
        config = ExperimentConfig()
    else:
        path = Path(path)
        try:
            with path.open("rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigurationError(f"Config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"Malformed config file {path}: {exc}") from exc
        config = parse_experiment_config(raw)
        logging.getLogger(__name__).debug(f"Loaded experiment config from {path}")
    return config.with_overrides(**overrides)
