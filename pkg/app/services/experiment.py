"""
Experiment harness.

Drives a controller through the request stream step by step
(request -> decision -> reward -> KPIs -> tick), records windowed KPI rows
and writes plot-ready CSV through the result store. On top of single runs it
provides the scenario x environment x policy matrix, the dynamic daily-schedule
run with drift-triggered adaptation, greedy evaluation and the oracle
comparison on tiny instances.

Every random draw comes from a named sub-stream of the master seed, so
(config, seed) determines every emitted byte.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import zlib
from collections import deque
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.stats import chi2, chi2_contingency

from app.config import MATRIX_POLICIES, AdaptationConfig, ExperimentConfig
from app.errors import ConfigurationError
from app.services.baselines import (
    QLNoControllerPolicy,
    RandomPolicy,
    ServeAllPolicy,
    ServeHighPolicy,
)
from app.services.cluster import ClusterState, ClusterTopology, feasible_serve_set
from app.services.dqn_agent import AgentRandomness, DQNAgent
from app.services.environment import (
    BUILTIN_UTILITY_COLUMNS,
    U_MAX,
    RequestStream,
    ScheduleSegment,
    TaskRequest,
)
from app.services.metrics import KpiCounters, KpiReport, WindowRow, WindowSampler, finalize
from app.services.mdp import DecisionContext, Policy, Scenario, step
from app.services.neural import NetworkWeights
from app.services.oracle import OraclePolicy, OracleSolution, TinyMdpSpec, value_iteration
from app.services.storage import ResultStore
from app.telemetry import traced

logger = logging.getLogger(__name__)

RUN_SCHEMA = "slicing-run/1"
MATRIX_SCHEMA = "slicing-matrix/1"
ORACLE_SCHEMA = "slicing-oracle/1"

RUN_COLUMNS = (
    "kind",
    "window",
    "start",
    "end",
    "profile",
    "gos",
    "utilization",
    "cloud_avoidance",
    "performance",
    "mean_reward",
    "epsilon",
    "loss_mean",
)

MATRIX_COLUMNS = (
    "scenario",
    "environment",
    "policy",
    "seed",
    "status",
    "gos",
    "utilization",
    "cloud_avoidance",
    "performance",
    "mean_reward",
    "converged_at",
    "output",
    "error",
)


def _fmt(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


class SeedStreams:
    """Named random sub-streams derived from one master seed.

    A stream depends only on (seed, name), so adding or changing one
    component never perturbs the randomness of another.
    """

    def __init__(self, seed: int) -> None:
        self.seed = seed

    def sequence(self, name: str) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=(zlib.crc32(name.encode("utf-8")),))

    def generator(self, name: str) -> np.random.Generator:
        return np.random.default_rng(self.sequence(name))

    def agent(self) -> AgentRandomness:
        return AgentRandomness(
            init=self.generator("agent_init"),
            exploration=self.generator("exploration"),
            replay=self.generator("replay"),
        )


def derive_cell_seed(master: int, scenario: int, environment: str) -> int:
    """Seed shared by every policy of one (scenario, environment) cell."""
    key = (scenario, zlib.crc32(environment.encode("utf-8")))
    return int(np.random.SeedSequence(master, spawn_key=key).generate_state(1)[0])


def build_policy(
    config: ExperimentConfig,
    topology: ClusterTopology,
    scenario: Scenario,
    horizon: int,
    streams: SeedStreams,
) -> Policy:
    """Instantiate the configured controller.

    Raises:
        ConfigurationError: If the policy name is unknown.
    """
    name = config.policy
    if name == "dqn":
        return DQNAgent(
            topology,
            config.load,
            config.agent,
            horizon,
            streams.agent(),
            config_digest=config.config_digest(),
        )
    if name == "sau":
        return ServeAllPolicy(config.serve_preference)
    if name == "shu":
        return ServeHighPolicy(config.u_h, config.serve_preference)
    if name == "ql":
        return QLNoControllerPolicy(
            topology, scenario.rewards, config.baselines, horizon, streams.generator("policy")
        )
    if name == "random":
        return RandomPolicy(streams.generator("policy"))
    raise ConfigurationError(f"Unknown policy {name!r}")


def driving_topology(policy: Policy, topology: ClusterTopology) -> ClusterTopology:
    """Topology the run is stepped on; the uncoordinated baseline has no hand-over."""
    if isinstance(policy, QLNoControllerPolicy):
        return policy.topology
    return topology


class UtilityDriftDetector:
    """Detects a change of traffic profile from observed utilities.

    A reference histogram is taken from the first `window` utilities. Every
    `check_interval` steps the histogram of the latest `window` utilities is
    compared to it with a chi-square homogeneity test; a statistic above the
    configured quantile is a detection. After a detection the reference is
    rebuilt from fresh observations.
    """

    def __init__(self, config: AdaptationConfig) -> None:
        self.config = config
        self._window: deque[int] = deque(maxlen=config.window)
        self._counts = np.zeros(U_MAX, dtype=np.int64)
        self.reference: np.ndarray | None = None
        self.detections: list[int] = []
        self._last_detection: int | None = None

    @property
    def current(self) -> np.ndarray:
        return self._counts.copy()

    def _push(self, u: int) -> None:
        if len(self._window) == self._window.maxlen:
            self._counts[self._window[0] - 1] -= 1
        self._window.append(u)
        self._counts[u - 1] += 1

    def reset(self) -> None:
        self._window.clear()
        self._counts[:] = 0
        self.reference = None

    def observe(self, t: int, u: int) -> bool:
        """Add the utility seen at step t; True when a drift is detected now."""
        self._push(u)
        if len(self._window) < self.config.window:
            return False
        if self.reference is None:
            self.reference = self._counts.copy()
            logger.debug(f"Drift reference captured at t={t}")
            return False
        if (t + 1) % self.config.check_interval:
            return False
        if self._last_detection is not None and t - self._last_detection < self.config.cooldown:
            return False
        if not differs(self.reference, self._counts, self.config.quantile):
            return False
        self.detections.append(t)
        self._last_detection = t
        logger.info(f"Utility drift detected at t={t}")
        self.reset()
        return True


def homogeneity_statistic(a: np.ndarray, b: np.ndarray) -> tuple[float, int]:
    """Chi-square homogeneity statistic of two count histograms and its dof.

    Classes absent from both histograms are dropped.
    """
    table = np.vstack((a, b)).astype(np.float64)
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 0.0, 0
    statistic, _, dof, _ = chi2_contingency(table, correction=False)
    return float(statistic), int(dof)


def differs(a: np.ndarray, b: np.ndarray, quantile: float) -> bool:
    statistic, dof = homogeneity_statistic(a, b)
    return dof > 0 and statistic > float(chi2.ppf(quantile, dof))


class Adaptation:
    """Reacts to detected drift according to the configured mode.

    `online` boosts exploration so the agent relearns in place. `policy_bank`
    banks the weights learned under the outgoing profile and, once the new
    profile's reference is known, reinstalls banked weights of a matching
    profile or falls back to an exploration boost.
    """

    def __init__(self, config: AdaptationConfig, agent: DQNAgent | None) -> None:
        self.config = config
        self.agent = agent
        self.detector = UtilityDriftDetector(config)
        self.bank: list[tuple[np.ndarray, NetworkWeights]] = []
        self.events: list[tuple[int, str]] = []
        self._awaiting_reference = False

    def observe(self, t: int, u: int) -> None:
        previous = self.detector.reference
        if self.detector.observe(t, u):
            self._on_drift(t, previous)
        elif self._awaiting_reference and self.detector.reference is not None:
            self._awaiting_reference = False
            self._select_from_bank(t, self.detector.reference)

    def _on_drift(self, t: int, previous: np.ndarray | None) -> None:
        if self.agent is None or self.config.mode == "none":
            self.events.append((t, "detected"))
            return
        if self.config.mode == "online":
            self.agent.on_drift(t, self.config.boost_epsilon)
            self.events.append((t, "boost"))
            return
        if previous is not None:
            self._bank(previous, self.agent.online.copy())
        self._awaiting_reference = True
        self.events.append((t, "banked"))

    def _bank(self, histogram: np.ndarray, weights: NetworkWeights) -> None:
        for i, (hist, _) in enumerate(self.bank):
            if not differs(hist, histogram, self.config.match_quantile):
                self.bank[i] = (histogram, weights)
                return
        self.bank.append((histogram, weights))

    def _select_from_bank(self, t: int, reference: np.ndarray) -> None:
        if self.agent is None:
            return
        for hist, weights in self.bank:
            if not differs(hist, reference, self.config.match_quantile):
                self.agent.load_weights(weights)
                self.events.append((t, "restored"))
                logger.info(f"Restored banked policy at t={t}")
                return
        self.agent.on_drift(t, self.config.boost_epsilon)
        self.events.append((t, "boost"))


@dataclass
class RunRecord:
    """Windowed KPI rows plus the whole-run summary of one run."""

    label: str
    policy: str
    environment: str
    scenario: int
    seed: int
    horizon: int
    config_digest: str
    rows: list[WindowRow]
    summary: KpiReport
    mean_reward: float
    converged_at: int | None = None
    adaptation_events: list[tuple[int, str]] = field(default_factory=list)
    csv_path: Path | None = None
    snapshot_path: Path | None = None

    def header(self) -> str:
        return (
            f"# schema: {RUN_SCHEMA}; digest={self.config_digest}; policy={self.policy}; "
            f"environment={self.environment}; scenario={self.scenario}; seed={self.seed}; "
            f"horizon={self.horizon}"
        )

    def to_csv(self) -> str:
        """Versioned header line, one row per window, then the summary row."""
        buffer = io.StringIO()
        buffer.write(self.header() + "\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(RUN_COLUMNS)
        for row in self.rows:
            writer.writerow(
                [
                    "window",
                    row.window,
                    row.start,
                    row.end,
                    row.profile,
                    _fmt(row.gos),
                    _fmt(row.utilization),
                    _fmt(row.cloud_avoidance),
                    _fmt(row.performance),
                    _fmt(row.mean_reward),
                    _fmt(row.epsilon),
                    _fmt(row.loss_mean),
                ]
            )
        writer.writerow(
            [
                "summary",
                "",
                0 if self.horizon else "",
                self.horizon - 1 if self.horizon else "",
                self.environment,
                _fmt(self.summary.gos),
                _fmt(self.summary.utilization),
                _fmt(self.summary.cloud_avoidance),
                _fmt(self.summary.performance),
                _fmt(self.mean_reward),
                "",
                "",
            ]
        )
        return buffer.getvalue()


def run_label(config: ExperimentConfig, environment: str | None = None) -> str:
    env = environment or config.environment
    return f"{config.policy}_s{config.scenario}_{env}_seed{config.seed}"


def simulate(
    config: ExperimentConfig,
    policy: Policy,
    schedule: Sequence[ScheduleSegment],
    horizon: int,
    topology: ClusterTopology,
    scenario: Scenario,
    streams: SeedStreams,
    adaptation: Adaptation | None = None,
) -> tuple[list[WindowRow], KpiCounters, float]:
    """Run the decision loop for `horizon` steps.

    Returns:
        Window rows, whole-run counters and the reward sum.

    Raises:
        TrainingFaultError: If a learning controller hits a non-finite loss.
        ContractViolationError: If a controller picks an infeasible action.
    """
    topo = driving_topology(policy, topology)
    stream = RequestStream(schedule, topo.k, streams.generator("environment"))
    sampler = WindowSampler(config.window_size, scenario.weights, config.u_h)
    totals = KpiCounters(u_h=config.u_h, strict=config.strict)
    reward_sum = 0.0
    if horizon == 0:
        return sampler.rows, totals, reward_sum

    def context(t: int, cluster: ClusterState, req: TaskRequest) -> DecisionContext:
        return DecisionContext(t, cluster, req, feasible_serve_set(cluster, topo, req), topo)

    ctx = context(0, ClusterState.empty(topo.k), stream.next(0))
    profile = stream.profile_at(0).id
    for t in range(horizon):
        req = ctx.request
        profile = stream.profile_at(t).id
        action = policy.decide(ctx)
        outcome = step(ctx.cluster, req, action, scenario.rewards, topo)
        totals.record_step(req, action, outcome.occupied, topo)
        reward_sum += outcome.reward
        terminal = t + 1 == horizon
        next_ctx = context(t + 1, outcome.cluster, stream.next(t + 1))
        loss = policy.observe(ctx, action, outcome.reward, next_ctx, terminal)
        sampler.record(req, action, outcome.occupied, topo, outcome.reward, loss)
        if adaptation is not None:
            adaptation.observe(t, req.u)
        sampler.maybe_close(t, getattr(policy, "current_epsilon", 0.0), profile)
        ctx = next_ctx
    sampler.close(horizon - 1, getattr(policy, "current_epsilon", 0.0), profile)
    return sampler.rows, totals, reward_sum


def _execute(
    config: ExperimentConfig,
    schedule: Sequence[ScheduleSegment],
    horizon: int,
    environment: str,
    store: ResultStore | None,
    prefix: str,
    adaptive: bool,
) -> RunRecord:
    topology = config.cluster_topology()
    scenario = config.scenario_bundle()
    streams = SeedStreams(config.seed)
    policy = build_policy(config, topology, scenario, horizon, streams)
    agent = policy if isinstance(policy, DQNAgent) else None
    adaptation = Adaptation(config.adaptation, agent) if adaptive else None

    rows, totals, reward_sum = simulate(
        config, policy, schedule, horizon, topology, scenario, streams, adaptation
    )
    record = RunRecord(
        label=prefix + run_label(config, environment),
        policy=config.policy,
        environment=environment,
        scenario=config.scenario,
        seed=config.seed,
        horizon=horizon,
        config_digest=config.config_digest(),
        rows=rows,
        summary=finalize(totals, scenario.weights),
        mean_reward=reward_sum / horizon if horizon else 0.0,
        converged_at=agent.converged_at if agent else None,
        adaptation_events=adaptation.events if adaptation else [],
    )
    if store is not None:
        record.csv_path = store.write_text(f"{record.label}.csv", record.to_csv())
        if agent is not None and config.save_snapshot and horizon:
            record.snapshot_path = store.write_bytes(
                f"{record.label}.npz", agent.export_policy().to_bytes()
            )
    logger.info(
        f"Run {record.label}: performance={record.summary.performance:.4f} "
        f"gos={record.summary.gos:.4f} utilization={record.summary.utilization:.4f} "
        f"cloud_avoidance={record.summary.cloud_avoidance:.4f}"
    )
    return record


def _span_attributes(config: ExperimentConfig, environment: str, horizon: int) -> dict[str, Any]:
    return {
        "policy": config.policy,
        "environment": environment,
        "scenario": config.scenario,
        "seed": config.seed,
        "horizon": horizon,
    }


def run_experiment(
    config: ExperimentConfig, store: ResultStore | None = None, prefix: str = ""
) -> RunRecord:
    """One static run of config.policy on config.environment for config.horizon steps.

    The CSV (and the DQN snapshot) go to `store`, defaulting to config.output_dir.

    Raises:
        SlicingError: On configuration, contract or training failures.
    """
    store = store or ResultStore(config.output_dir)
    with traced("experiment.run", _span_attributes(config, config.environment, config.horizon)):
        return _execute(
            config,
            config.static_schedule(),
            config.horizon,
            config.environment,
            store,
            prefix,
            adaptive=False,
        )


def run_dynamic(
    config: ExperimentConfig,
    schedule: Sequence[ScheduleSegment] | None = None,
    store: ResultStore | None = None,
) -> RunRecord:
    """One continuous run across the profile schedule.

    The run lasts the whole schedule; the drift detector drives the
    configured adaptation mode for the learning agent.

    Raises:
        ConfigurationError: If the schedule is empty.
    """
    schedule = list(schedule) if schedule is not None else config.dynamic_schedule()
    if not schedule:
        raise ConfigurationError("Dynamic run needs a nonempty schedule")
    horizon = sum(segment.duration for segment in schedule)
    store = store or ResultStore(config.output_dir)
    with traced("experiment.dynamic", _span_attributes(config, "dynamic", horizon)):
        return _execute(config, schedule, horizon, "dynamic", store, "dynamic/", adaptive=True)


@dataclass(frozen=True)
class MatrixCell:
    scenario: int
    environment: str
    policy: str
    seed: int


@dataclass
class CellResult:
    cell: MatrixCell
    record: RunRecord | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.record is not None


@dataclass
class MatrixResult:
    results: list[CellResult]
    summary_path: Path | None = None

    @property
    def records(self) -> list[RunRecord]:
        return [r.record for r in self.results if r.record is not None]

    @property
    def failures(self) -> list[CellResult]:
        return [r for r in self.results if not r.ok]

    def to_csv(self, digest: str) -> str:
        buffer = io.StringIO()
        buffer.write(f"# schema: {MATRIX_SCHEMA}; digest={digest}\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(MATRIX_COLUMNS)
        for result in self.results:
            cell, record = result.cell, result.record
            if record is None:
                writer.writerow(
                    [cell.scenario, cell.environment, cell.policy, cell.seed, "failed"]
                    + [""] * 7
                    + [result.error or ""]
                )
                continue
            writer.writerow(
                [
                    cell.scenario,
                    cell.environment,
                    cell.policy,
                    cell.seed,
                    "ok",
                    _fmt(record.summary.gos),
                    _fmt(record.summary.utilization),
                    _fmt(record.summary.cloud_avoidance),
                    _fmt(record.summary.performance),
                    _fmt(record.mean_reward),
                    _fmt(record.converged_at),
                    f"{record.label}.csv",
                    "",
                ]
            )
        return buffer.getvalue()


def matrix_cells(
    config: ExperimentConfig,
    scenarios: Sequence[int] = (1, 2, 3),
    environments: Sequence[str] = tuple(BUILTIN_UTILITY_COLUMNS),
    policies: Sequence[str] = MATRIX_POLICIES,
) -> list[MatrixCell]:
    """Cells in scenario, environment, policy order with derived seeds."""
    return [
        MatrixCell(s, env, p, derive_cell_seed(config.seed, s, env))
        for s in scenarios
        for env in environments
        for p in policies
    ]


def _run_cell(config: ExperimentConfig, cell: MatrixCell) -> CellResult:
    cell_config = config.with_overrides(
        scenario=cell.scenario, environment=cell.environment, policy=cell.policy, seed=cell.seed
    )
    try:
        record = run_experiment(cell_config, ResultStore(config.output_dir), prefix="matrix/")
    except Exception as exc:
        logger.error(f"Matrix cell {cell} failed: {exc}")
        return CellResult(cell=cell, error=f"{type(exc).__name__}: {exc}")
    return CellResult(cell=cell, record=record)


def run_matrix(
    config: ExperimentConfig,
    workers: int = 1,
    scenarios: Sequence[int] = (1, 2, 3),
    environments: Sequence[str] = tuple(BUILTIN_UTILITY_COLUMNS),
    policies: Sequence[str] = MATRIX_POLICIES,
) -> MatrixResult:
    """Every scenario x environment x policy combination plus a summary table.

    A failing cell is recorded in the summary without aborting the others.
    With workers > 1 cells run in a process pool; output is identical.
    """
    cells = matrix_cells(config, scenarios, environments, policies)
    with traced("experiment.matrix", {"cells": len(cells), "seed": config.seed}):
        logger.info(f"Running matrix of {len(cells)} cells with {workers} worker(s)")
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_run_cell, config, cell) for cell in cells]
                results = [f.result() for f in futures]
        else:
            results = [_run_cell(config, cell) for cell in cells]
        matrix = MatrixResult(results=results)
        store = ResultStore(config.output_dir)
        matrix.summary_path = store.write_text(
            "matrix/summary.csv", matrix.to_csv(config.config_digest())
        )
        if matrix.failures:
            logger.warning(f"{len(matrix.failures)} of {len(cells)} matrix cells failed")
        return matrix


@dataclass(frozen=True)
class Evaluation:
    """Greedy evaluation without learning."""

    steps: int
    mean_reward: float
    report: KpiReport


def evaluate_policy(
    policy: Policy, config: ExperimentConfig, steps: int, stream_name: str = "evaluation"
) -> Evaluation:
    """Run `policy` greedily on config.environment for `steps` steps.

    Only decide() is called, so nothing is learned. Learning agents should be
    passed as exported snapshots.
    """
    topology = driving_topology(policy, config.cluster_topology())
    scenario = config.scenario_bundle()
    stream = RequestStream(
        [ScheduleSegment(config.profile(config.environment), max(steps, 1))],
        topology.k,
        SeedStreams(config.seed).generator(stream_name),
    )
    counters = KpiCounters(u_h=config.u_h)
    cluster = ClusterState.empty(topology.k)
    total = 0.0
    for t in range(steps):
        req = stream.next(t)
        ctx = DecisionContext(t, cluster, req, feasible_serve_set(cluster, topology, req), topology)
        action = policy.decide(ctx)
        outcome = step(cluster, req, action, scenario.rewards, topology)
        counters.record_step(req, action, outcome.occupied, topology)
        total += outcome.reward
        cluster = outcome.cluster
    return Evaluation(
        steps=steps,
        mean_reward=total / steps if steps else 0.0,
        report=finalize(counters, scenario.weights),
    )


def tiny_spec(config: ExperimentConfig, gamma: float | None = None) -> TinyMdpSpec:
    """Oracle instance for config: its topology, load, rewards and environment."""
    profile = config.profile(config.environment)
    support = [(u, p) for u, p in zip(profile.utility.values, profile.utility.probs) if p > 0]
    return TinyMdpSpec(
        topology=config.cluster_topology(),
        utility_values=tuple(u for u, _ in support),
        utility_probs=tuple(p for _, p in support),
        load=profile.load,
        rewards=config.scenario_bundle().rewards,
        gamma=config.agent.gamma if gamma is None else gamma,
        primary_rule=profile.primary_fn_rule,
    )


def oracle_table(solution: OracleSolution, digest: str) -> str:
    """Optimal action and value per (occupancy, request) as CSV."""
    buffer = io.StringIO()
    buffer.write(
        f"# schema: {ORACLE_SCHEMA}; digest={digest}; iterations={solution.iterations}; "
        f"residual={_fmt(solution.bellman_residual())}\n"
    )
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("occupancy", "u", "c", "h", "primary_fn", "action", "value"))
    for i, occ in enumerate(solution.occupancies):
        encoded = "|".join(" ".join(str(n) for n in row) for row in occ)
        for j, req in enumerate(solution.requests):
            writer.writerow(
                [
                    encoded,
                    req.u,
                    req.c,
                    req.h,
                    req.primary_fn,
                    int(solution.policy[i, j]),
                    _fmt(float(solution.values[i, j])),
                ]
            )
    return buffer.getvalue()


@dataclass
class OracleReport:
    solution: OracleSolution
    table_path: Path | None = None
    oracle_eval: Evaluation | None = None
    dqn_eval: Evaluation | None = None

    @property
    def relative_gap(self) -> float | None:
        """(oracle - dqn) / |oracle| average reward, when both were evaluated."""
        if self.oracle_eval is None or self.dqn_eval is None:
            return None
        reference = self.oracle_eval.mean_reward
        gap = reference - self.dqn_eval.mean_reward
        if reference == 0.0:
            return 0.0 if gap == 0.0 else math.inf
        return gap / abs(reference)


def run_oracle(
    config: ExperimentConfig,
    store: ResultStore | None = None,
    compare_steps: int = 0,
    gamma: float | None = None,
) -> OracleReport:
    """Solve the tiny MDP for config; optionally compare a trained DQN against it.

    With compare_steps > 0 a DQN is trained for config.horizon steps and both
    greedy policies are evaluated on the same request stream.

    Raises:
        OracleSizeError: If the instance is too large to enumerate.
    """
    spec = tiny_spec(config, gamma)
    store = store or ResultStore(config.output_dir)
    with traced(
        "experiment.oracle",
        {"environment": config.environment, "scenario": config.scenario, "gamma": spec.gamma},
    ):
        solution = value_iteration(spec)
        report = OracleReport(solution=solution)
        name = f"oracle/oracle_s{config.scenario}_{config.environment}"
        report.table_path = store.write_text(
            f"{name}.csv", oracle_table(solution, config.config_digest())
        )
        if compare_steps > 0:
            dqn_config = config.with_overrides(policy="dqn")
            topology = dqn_config.cluster_topology()
            scenario = dqn_config.scenario_bundle()
            streams = SeedStreams(dqn_config.seed)
            agent = DQNAgent(
                topology,
                dqn_config.load,
                dqn_config.agent,
                dqn_config.horizon,
                streams.agent(),
                config_digest=dqn_config.config_digest(),
            )
            simulate(
                dqn_config,
                agent,
                dqn_config.static_schedule(),
                dqn_config.horizon,
                topology,
                scenario,
                streams,
            )
            report.dqn_eval = evaluate_policy(agent.export_policy(), dqn_config, compare_steps)
            report.oracle_eval = evaluate_policy(OraclePolicy(solution), dqn_config, compare_steps)
            logger.info(
                f"Oracle mean reward {report.oracle_eval.mean_reward:.4f}, "
                f"DQN mean reward {report.dqn_eval.mean_reward:.4f}"
            )
        return report
