"""Tests for request generation and profile schedules."""

from __future__ import annotations

import math

import numpy as np
import pytest

from app.errors import ConfigurationError
from app.services.environment import (
    BUILTIN_UTILITY_COLUMNS,
    DEFAULT_LOAD,
    EnvironmentProfile,
    LoadDistribution,
    PrimaryFnRule,
    RequestStream,
    ScheduleSegment,
    TaskRequest,
    UtilityDistribution,
    advance_schedule,
    builtin_profile,
    daily_schedule,
    sample_request,
    segment_starts,
)


class TestProfiles:
    """Builtin profiles and distribution validation."""

    @pytest.mark.parametrize("profile_id", sorted(BUILTIN_UTILITY_COLUMNS))
    def test_builtin_columns_sum_to_one(self, profile_id: str) -> None:
        """Every builtin utility column is a probability vector."""
        profile = builtin_profile(profile_id)
        assert math.isclose(sum(profile.utility.probs), 1.0, abs_tol=1e-9)
        assert profile.load == DEFAULT_LOAD

    def test_e3_high_utility_share(self) -> None:
        """P(u >= 8) in E3 is 0.229."""
        assert builtin_profile("E3").utility.high_utility_share(8) == pytest.approx(0.229)

    def test_high_utility_share_grows_from_e1_to_e5(self) -> None:
        """Profiles are ordered by their share of high-utility requests."""
        shares = [builtin_profile(f"E{i}").utility.high_utility_share(8) for i in range(1, 6)]
        assert shares == sorted(shares)

    def test_unknown_profile_raises(self) -> None:
        """An unknown id is a configuration error."""
        with pytest.raises(ConfigurationError, match="Unknown environment"):
            builtin_profile("E9")

    def test_load_probabilities_must_sum_to_one(self) -> None:
        """A load distribution with a bad probability vector is rejected."""
        with pytest.raises(ConfigurationError):
            LoadDistribution(c_values=(1, 2), c_probs=(0.5, 0.6), h_values=(1,), h_probs=(1.0,))

    def test_load_values_must_increase(self) -> None:
        """Values must be strictly increasing."""
        with pytest.raises(ConfigurationError):
            LoadDistribution(c_values=(2, 1), c_probs=(0.5, 0.5), h_values=(1,), h_probs=(1.0,))

    def test_capacity_check(self) -> None:
        """c_max larger than the smallest FN is refused."""
        with pytest.raises(ConfigurationError, match="c_max=4"):
            DEFAULT_LOAD.validate_capacity(3)
        DEFAULT_LOAD.validate_capacity(4)

    def test_mean_load(self) -> None:
        """Mean load is E[c] * E[h] for independent draws."""
        assert DEFAULT_LOAD.mean_load == pytest.approx(3.0 * 22.75)

    def test_primary_rule_uniform(self) -> None:
        """Without weights every FN is equally likely."""
        assert PrimaryFnRule().probabilities(4) == (0.25, 0.25, 0.25, 0.25)

    def test_primary_rule_weights_length(self) -> None:
        """Weights must match the cluster size."""
        with pytest.raises(ConfigurationError):
            PrimaryFnRule((1.0, 2.0)).probabilities(3)


class TestSampling:
    """Request sampling."""

    def test_request_fields_in_support(self, rng: np.random.Generator) -> None:
        """Sampled values come from the profile's supports."""
        profile = builtin_profile("E2")
        for t in range(500):
            req = sample_request(profile, t, rng, k=7)
            assert 1 <= req.u <= 10
            assert req.c in DEFAULT_LOAD.c_values
            assert req.h in DEFAULT_LOAD.h_values
            assert 1 <= req.primary_fn <= 7
            assert req.t == t

    def test_same_seed_same_requests(self) -> None:
        """Sampling is a pure function of the generator state."""
        profile = builtin_profile("E1")
        a = [sample_request(profile, t, np.random.default_rng(5)) for t in range(3)]
        b = [sample_request(profile, t, np.random.default_rng(5)) for t in range(3)]
        assert a == b

    def test_zero_probability_class_never_drawn(self, rng: np.random.Generator) -> None:
        """Classes with probability 0 never occur."""
        probs = [0.0] * 10
        probs[2] = 0.5
        probs[8] = 0.5
        profile = EnvironmentProfile(id="two", utility=UtilityDistribution(tuple(probs)))
        seen = {sample_request(profile, t, rng).u for t in range(2000)}
        assert seen == {3, 9}

    def test_task_load(self) -> None:
        """Load is blocks times holding time."""
        req = TaskRequest(u=8, c=2, h=10, primary_fn=3)
        assert req.load == 20
        assert req.is_high_utility(8)
        assert not TaskRequest(u=7, c=1, h=5, primary_fn=1).is_high_utility(8)

    @pytest.mark.slow
    @pytest.mark.parametrize("profile_id", sorted(BUILTIN_UTILITY_COLUMNS))
    def test_utility_frequencies_match_column(self, profile_id: str) -> None:
        """At 100k samples every class frequency is within 4 sigma of its probability."""
        profile = builtin_profile(profile_id)
        generator = np.random.default_rng(2024)
        n = 100_000
        counts = np.zeros(10)
        for t in range(n):
            counts[sample_request(profile, t, generator).u - 1] += 1
        for p, count in zip(profile.utility.probs, counts):
            sigma = math.sqrt(n * p * (1 - p))
            assert abs(count - n * p) <= 4 * sigma + 1e-9

    @pytest.mark.slow
    def test_e3_high_share_empirical(self) -> None:
        """Empirical P(u >= 8) in E3 is 0.229 +- 0.01."""
        profile = builtin_profile("E3")
        generator = np.random.default_rng(99)
        n = 100_000
        high = sum(sample_request(profile, t, generator).u >= 8 for t in range(n))
        assert abs(high / n - 0.229) <= 0.01


class TestSchedules:
    """Profile schedules and the request stream."""

    @pytest.fixture
    def schedule(self) -> list[ScheduleSegment]:
        return [
            ScheduleSegment(builtin_profile("E1"), 3),
            ScheduleSegment(builtin_profile("E5"), 2),
        ]

    def test_segments_are_half_open(self, schedule: list[ScheduleSegment]) -> None:
        """Segment boundaries belong to the next segment."""
        ids = [advance_schedule(schedule, t).id for t in range(5)]
        assert ids == ["E1", "E1", "E1", "E5", "E5"]

    def test_last_profile_persists(self, schedule: list[ScheduleSegment]) -> None:
        """Past the end the last profile stays active."""
        assert advance_schedule(schedule, 100).id == "E5"

    def test_empty_schedule_raises(self) -> None:
        """An empty schedule is a configuration error."""
        with pytest.raises(ConfigurationError):
            advance_schedule([], 0)

    def test_segment_duration_positive(self) -> None:
        """Zero-length segments are refused."""
        with pytest.raises(ConfigurationError):
            ScheduleSegment(builtin_profile("E1"), 0)

    def test_daily_schedule_switch_times(self) -> None:
        """E4(40) E1(30) E2(30) E3(30) E5(30) samples of 2000 steps."""
        schedule = daily_schedule(steps_per_sample=2000)
        assert [s.profile.id for s in schedule] == ["E4", "E1", "E2", "E3", "E5"]
        assert segment_starts(schedule) == [0, 80_000, 140_000, 200_000, 260_000]
        assert sum(s.duration for s in schedule) == 320_000

    def test_stream_follows_schedule(self, schedule: list[ScheduleSegment]) -> None:
        """The stream switches profiles at segment starts."""
        stream = RequestStream(schedule, k=7, rng=np.random.default_rng(0))
        ids = [stream.profile_at(t).id for t in range(6)]
        assert ids == ["E1", "E1", "E1", "E5", "E5", "E5"]

    def test_stream_matches_direct_sampling(self, schedule: list[ScheduleSegment]) -> None:
        """A stream draws exactly what sample_request draws from the same generator."""
        stream = RequestStream(schedule, k=7, rng=np.random.default_rng(8))
        direct = np.random.default_rng(8)
        for t in range(5):
            expected = sample_request(advance_schedule(schedule, t), t, direct, 7)
            assert stream.next(t) == expected
