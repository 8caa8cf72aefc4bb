"""
Environment profiles and the sequential request stream.

A profile couples a utility distribution over the ten utility classes with a
load distribution over requested blocks and holding times. Requests arrive one
per time step; the primary FN receiving each request is drawn uniformly unless
a per-FN weight vector is configured. Schedules switch profiles over time.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from app.errors import ConfigurationError

logger = logging.getLogger(__name__)

U_MAX = 10
PROB_TOLERANCE = 1e-9

# P(u = 1..10) for E1..E5.
BUILTIN_UTILITY_COLUMNS: dict[str, tuple[float, ...]] = {
    "E1": (0.015, 0.073, 0.365, 0.292, 0.205, 0.014, 0.013, 0.011, 0.009, 0.003),
    "E2": (0.012, 0.058, 0.288, 0.230, 0.162, 0.071, 0.064, 0.057, 0.043, 0.015),
    "E3": (0.008, 0.038, 0.192, 0.154, 0.108, 0.142, 0.129, 0.114, 0.086, 0.029),
    "E4": (0.004, 0.019, 0.096, 0.077, 0.054, 0.214, 0.193, 0.171, 0.129, 0.043),
    "E5": (0.001, 0.004, 0.019, 0.015, 0.011, 0.271, 0.244, 0.217, 0.163, 0.055),
}

DAILY_SEQUENCE: tuple[tuple[str, int], ...] = (
    ("E4", 40),
    ("E1", 30),
    ("E2", 30),
    ("E3", 30),
    ("E5", 30),
)


def _check_probabilities(name: str, probs: Sequence[float]) -> None:
    if not probs:
        raise ConfigurationError(f"{name}: probability vector is empty")
    if any(p < 0 or not math.isfinite(p) for p in probs):
        raise ConfigurationError(f"{name}: probabilities must be finite and nonnegative: {probs}")
    total = math.fsum(probs)
    if abs(total - 1.0) > PROB_TOLERANCE:
        raise ConfigurationError(f"{name}: probabilities sum to {total!r}, expected 1")


def _cdf(probs: Sequence[float]) -> np.ndarray:
    cdf = np.cumsum(np.asarray(probs, dtype=np.float64))
    cdf[-1] = 1.0
    return cdf


def _draw(values: Sequence[int], cdf: np.ndarray, rng: np.random.Generator) -> int:
    idx = int(np.searchsorted(cdf, rng.random(), side="right"))
    return values[min(idx, len(values) - 1)]


@dataclass(frozen=True)
class UtilityDistribution:
    """Probabilities of the utility classes u = 1..U_MAX."""

    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.probs) != U_MAX:
            raise ConfigurationError(
                f"Utility distribution needs exactly {U_MAX} probabilities, got {len(self.probs)}"
            )
        _check_probabilities("utility", self.probs)
        object.__setattr__(self, "_cdf", _cdf(self.probs))

    @property
    def values(self) -> tuple[int, ...]:
        return tuple(range(1, U_MAX + 1))

    @property
    def cdf(self) -> np.ndarray:
        return self._cdf  # type: ignore[attr-defined]

    @property
    def mean(self) -> float:
        return math.fsum(u * p for u, p in zip(self.values, self.probs))

    def high_utility_share(self, u_h: int) -> float:
        """Probability that a request is high-utility, i.e. P(u >= u_h)."""
        return math.fsum(self.probs[u_h - 1 :])


@dataclass(frozen=True)
class LoadDistribution:
    """Distributions of requested blocks c and holding times h."""

    c_values: tuple[int, ...]
    c_probs: tuple[float, ...]
    h_values: tuple[int, ...]
    h_probs: tuple[float, ...]

    def __post_init__(self) -> None:
        for name, values, probs in (
            ("c", self.c_values, self.c_probs),
            ("h", self.h_values, self.h_probs),
        ):
            if len(values) != len(probs):
                raise ConfigurationError(
                    f"{name}: {len(values)} values but {len(probs)} probabilities"
                )
            if len(set(values)) != len(values) or list(values) != sorted(values):
                raise ConfigurationError(f"{name}: values must be strictly increasing: {values}")
            if min(values) < 1:
                raise ConfigurationError(f"{name}: values must be >= 1: {values}")
            _check_probabilities(name, probs)
        object.__setattr__(self, "_c_cdf", _cdf(self.c_probs))
        object.__setattr__(self, "_h_cdf", _cdf(self.h_probs))

    @property
    def c_max(self) -> int:
        return self.c_values[-1]

    @property
    def h_max(self) -> int:
        return self.h_values[-1]

    @property
    def c_cdf(self) -> np.ndarray:
        return self._c_cdf  # type: ignore[attr-defined]

    @property
    def h_cdf(self) -> np.ndarray:
        return self._h_cdf  # type: ignore[attr-defined]

    @property
    def mean_load(self) -> float:
        mean_c = math.fsum(c * p for c, p in zip(self.c_values, self.c_probs))
        mean_h = math.fsum(h * p for h, p in zip(self.h_values, self.h_probs))
        return mean_c * mean_h

    def validate_capacity(self, min_capacity: int) -> None:
        """Check that every block request fits on the smallest FN.

        Raises:
            ConfigurationError: If c_max exceeds the smallest capacity.
        """
        if self.c_max > min_capacity:
            raise ConfigurationError(
                f"c_max={self.c_max} exceeds the smallest FN capacity {min_capacity}"
            )


DEFAULT_LOAD = LoadDistribution(
    c_values=(1, 2, 3, 4),
    c_probs=(0.1, 0.2, 0.3, 0.4),
    h_values=(5, 10, 15, 20, 25, 30),
    h_probs=(0.05, 0.1, 0.1, 0.15, 0.2, 0.4),
)


@dataclass(frozen=True)
class PrimaryFnRule:
    """Which FN receives each request: uniform, or proportional to weights."""

    weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.weights is None:
            return
        if any(w < 0 or not math.isfinite(w) for w in self.weights) or sum(self.weights) <= 0:
            raise ConfigurationError(f"Primary FN weights must be nonnegative: {self.weights}")

    def probabilities(self, k: int) -> tuple[float, ...]:
        if self.weights is None:
            return tuple(1.0 / k for _ in range(k))
        if len(self.weights) != k:
            raise ConfigurationError(
                f"Primary FN weights have length {len(self.weights)}, cluster has k={k}"
            )
        total = math.fsum(self.weights)
        return tuple(w / total for w in self.weights)

    def draw(self, k: int, rng: np.random.Generator) -> int:
        if self.weights is None:
            return int(rng.integers(1, k + 1))
        return _draw(tuple(range(1, k + 1)), _cdf(self.probabilities(k)), rng)


@dataclass(frozen=True)
class EnvironmentProfile:
    """A traffic profile: utility and load distributions plus arrival rule."""

    id: str
    utility: UtilityDistribution
    load: LoadDistribution = DEFAULT_LOAD
    primary_fn_rule: PrimaryFnRule = field(default_factory=PrimaryFnRule)


@dataclass(frozen=True)
class ScheduleSegment:
    """A profile held for a number of time steps."""

    profile: EnvironmentProfile
    duration: int

    def __post_init__(self) -> None:
        if self.duration < 1:
            raise ConfigurationError(f"Segment duration must be >= 1, got {self.duration}")


@dataclass(frozen=True)
class TaskRequest:
    """One service request arriving at time step t."""

    u: int
    c: int
    h: int
    primary_fn: int
    t: int = 0

    @property
    def load(self) -> int:
        """Task load L = c * h."""
        return self.c * self.h

    def is_high_utility(self, u_h: int) -> bool:
        return self.u >= u_h


def builtin_profile(profile_id: str, load: LoadDistribution | None = None) -> EnvironmentProfile:
    """Return one of the builtin environments E1..E5.

    Raises:
        ConfigurationError: If the id is not a builtin environment.
    """
    try:
        column = BUILTIN_UTILITY_COLUMNS[profile_id]
    except KeyError as exc:
        raise ConfigurationError(
            f"Unknown environment {profile_id!r}; expected one of {sorted(BUILTIN_UTILITY_COLUMNS)}"
        ) from exc
    return EnvironmentProfile(
        id=profile_id,
        utility=UtilityDistribution(column),
        load=load or DEFAULT_LOAD,
    )


def sample_request(
    profile: EnvironmentProfile, t: int, rng: np.random.Generator, k: int = 7
) -> TaskRequest:
    """Draw the request arriving at step t.

    u, c and h are drawn independently, in that order, followed by the
    primary FN. The draw order is part of the reproducibility contract.
    """
    u = _draw(profile.utility.values, profile.utility.cdf, rng)
    c = _draw(profile.load.c_values, profile.load.c_cdf, rng)
    h = _draw(profile.load.h_values, profile.load.h_cdf, rng)
    primary = profile.primary_fn_rule.draw(k, rng)
    return TaskRequest(u=u, c=c, h=h, primary_fn=primary, t=t)


def segment_starts(schedule: Sequence[ScheduleSegment]) -> list[int]:
    """Start step of every segment."""
    starts: list[int] = []
    t = 0
    for segment in schedule:
        starts.append(t)
        t += segment.duration
    return starts


def advance_schedule(schedule: Sequence[ScheduleSegment], t: int) -> EnvironmentProfile:
    """Profile active at step t; segments cover [start, start + duration)."""
    if not schedule:
        raise ConfigurationError("Schedule is empty")
    if t < 0:
        raise ConfigurationError(f"Time step must be >= 0, got {t}")
    end = 0
    for segment in schedule:
        end += segment.duration
        if t < end:
            return segment.profile
    return schedule[-1].profile


def daily_schedule(
    steps_per_sample: int = 2000, load: LoadDistribution | None = None
) -> list[ScheduleSegment]:
    """Busy-hours day: E4 for 40 samples, then E1, E2, E3, E5 for 30 each."""
    return [
        ScheduleSegment(builtin_profile(pid, load), samples * steps_per_sample)
        for pid, samples in DAILY_SEQUENCE
    ]


class RequestStream:
    """Sequential request source over a schedule.

    Example:
        stream = RequestStream(daily_schedule(), k=7, rng=np.random.default_rng(1))
        first = stream.next(0)
    """

    def __init__(
        self, schedule: Sequence[ScheduleSegment], k: int, rng: np.random.Generator
    ) -> None:
        if not schedule:
            raise ConfigurationError("Schedule is empty")
        ids = [segment.profile.id for segment in schedule]
        self._schedule = list(schedule)
        self._k = k
        self._rng = rng
        self._starts = segment_starts(schedule)
        self._segment = 0
        logger.debug(f"Request stream over profiles {ids}")

    @property
    def schedule(self) -> list[ScheduleSegment]:
        return self._schedule

    def profile_at(self, t: int) -> EnvironmentProfile:
        # Steps only move forward, so the segment cursor never rewinds.
        while (
            self._segment + 1 < len(self._schedule) and t >= self._starts[self._segment + 1]
        ):
            self._segment += 1
            logger.info(
                f"Profile switch at t={t}: now {self._schedule[self._segment].profile.id}"
            )
        return self._schedule[self._segment].profile

    def next(self, t: int) -> TaskRequest:
        return sample_request(self.profile_at(t), t, self._rng, self._k)
