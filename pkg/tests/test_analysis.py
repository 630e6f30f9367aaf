import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import cleaning_fixture, make_session
from prefelicit import AlternativeSet, DataValidationError, NoiseParams, Query
from prefelicit.analysis import (
    AVERAGE_FAST,
    BOT_CRT,
    DUPLICATE_ATTEMPT,
    DURATION_OUTLIER,
    FIRST_QUERY_FAST,
    SAME_POLICY_NOT_INDIFFERENT,
    STRICT_THRESHOLDS,
    AgentComparison,
    SyntheticAgent,
    agent_respond,
    chi_square_uniform_two,
    clean_responses,
    dump_sessions_jsonl,
    load_sessions_jsonl,
    normalized_wc_difference,
    random_agent,
    reference_partition_sessions,
    run_comparison_experiment,
    run_session,
    summarize_final_query,
    two_sample_t,
)


class TestAgentRespond:
    def test_deterministic_sign(self):
        x = AlternativeSet([[1.0, 0.0], [0.0, 1.0]])
        agent = SyntheticAgent(utility=(1.0, 0.0))
        rng = np.random.default_rng(0)
        assert agent_respond(agent, x, Query(1, 2), rng) == 1

    def test_indifference_band(self):
        x = AlternativeSet([[1.0, 0.0], [0.0, 1.0]])
        agent = SyntheticAgent(utility=(0.5, 0.5), indifference_delta=0.01)
        rng = np.random.default_rng(0)
        assert agent_respond(agent, x, Query(1, 2), rng) == 0

    def test_flip_rate_matches_normal_cdf(self):
        # u.delta = 0.05, sigma = 0.1: flips when the shock is below -0.05
        x = AlternativeSet([[0.6, 0.5], [0.5, 0.5]])
        agent = SyntheticAgent(utility=(0.5, 0.5), response_sigma=0.1)
        rng = np.random.default_rng(123)
        draws = 100_000
        flips = sum(
            agent_respond(agent, x, Query(1, 2), rng) == -1 for _ in range(draws)
        )
        assert flips / draws == pytest.approx(0.3085, abs=0.01)

    def test_antisymmetric_under_side_swap(self):
        rng = np.random.default_rng(5)
        features = rng.uniform(0.0, 1.0, size=(3, 2))
        x = AlternativeSet(features)
        swapped = AlternativeSet(features[[1, 0, 2]])
        agent = random_agent(2, rng, indifference_delta=0.05)
        r = agent_respond(agent, x, Query(1, 2), rng)
        r_swapped = agent_respond(agent, swapped, Query(1, 2), rng)
        assert r == -r_swapped

    def test_invalid_agent_rejected(self):
        with pytest.raises(DataValidationError):
            SyntheticAgent(utility=(0.5, 0.4))
        with pytest.raises(DataValidationError):
            SyntheticAgent(utility=(1.2, -0.2))


class TestRunSession:
    X = AlternativeSet([[1.0, 0.0], [0.0, 1.0], [0.55, 0.45]])
    NOISE = NoiseParams(0.1, 0.9)

    def test_noiseless_robust_session_is_hand_checkable(self):
        agent = SyntheticAgent(utility=(0.8, 0.2))
        rng = np.random.default_rng(0)
        history, rec = run_session(agent, self.X, 2, self.NOISE, "robust", rng)
        assert len(history) == 2
        # responses must match the agent's noiseless preferences
        u = np.asarray(agent.utility)
        for query, response in history:
            diff = float(u @ (self.X.vector(query.first) - self.X.vector(query.second)))
            assert response == (0 if diff == 0 else (1 if diff > 0 else -1))
        # and the recommendation must be the direct recompute
        from prefelicit import gamma_schedule, recommend

        direct = recommend(self.X, history, gamma_schedule(self.NOISE, 2))
        assert rec == direct

    def test_same_seeds_identical_transcripts(self):
        agent = SyntheticAgent(utility=(0.3, 0.7), response_sigma=0.2)
        first = run_session(
            agent, self.X, 3, self.NOISE, "robust", np.random.default_rng(42)
        )
        second = run_session(
            agent, self.X, 3, self.NOISE, "robust", np.random.default_rng(42)
        )
        assert first == second

    def test_random_strategy_distinct_queries(self):
        agent = SyntheticAgent(utility=(0.5, 0.5))
        history, _ = run_session(
            agent, self.X, 3, self.NOISE, "random", np.random.default_rng(1)
        )
        assert len({q.as_pair() for q, _ in history}) == 3

    def test_zero_queries_rejected(self):
        agent = SyntheticAgent(utility=(0.5, 0.5))
        with pytest.raises(DataValidationError):
            run_session(agent, self.X, 0, self.NOISE, "robust", np.random.default_rng(0))


class TestComparisonExperiment:
    def test_counts_sum_to_n(self):
        rng = np.random.default_rng(8)
        x = AlternativeSet(rng.uniform(0.0, 1.0, size=(4, 3)))
        summary = run_comparison_experiment(
            6, x, 2, NoiseParams(0.1, 0.9), seed=7, response_sigma=0.05
        )
        assert sum(summary.counts.values()) == 6
        assert len(summary.records) == 6
        assert len(summary.normalized_differences) == 6

    def test_identical_recommendations_counted_as_same(self):
        # two near-identical alternatives: both arms recommend the same policy
        x = AlternativeSet([[0.5, 0.5], [0.5, 0.5]])
        summary = run_comparison_experiment(
            1, x, 1, NoiseParams(0.1, 0.9), seed=1, response_sigma=0.0,
            indifference_delta=0.02,
        )
        assert summary.counts["indifferent_same"] == 1

    def test_noiseless_exhaustive_budget_matches_random_exactly(self):
        # K covers the whole query universe: both arms ask the same three
        # pairs, truthful answers build the same feasible set, z ties.
        rng = np.random.default_rng(21)
        x = AlternativeSet(rng.uniform(0.0, 1.0, size=(3, 3)))
        summary = run_comparison_experiment(
            8, x, 3, NoiseParams(0.0, 0.9), seed=3,
            response_sigma=0.0, indifference_delta=0.0,
        )
        for record in summary.records:
            assert record.z_robust == pytest.approx(record.z_random, abs=1e-9)


class TestNormalizedDifference:
    @staticmethod
    def record(z_robust, z_random, z_best, z_zero):
        return AgentComparison(
            seed=0,
            robust_index=1,
            random_index=2,
            z_robust=z_robust,
            z_random=z_random,
            true_util_robust=0.0,
            true_util_random=0.0,
            preference=0,
            z_combined_best=z_best,
            z_no_query=z_zero,
        )

    def test_equal_values_give_zero(self):
        assert normalized_wc_difference(self.record(0.5, 0.5, 0.8, 0.3)) == 0.0

    def test_endpoints(self):
        assert normalized_wc_difference(self.record(0.8, 0.3, 0.8, 0.3)) == 1.0
        assert normalized_wc_difference(self.record(0.3, 0.8, 0.8, 0.3)) == -1.0

    def test_direct_formula(self):
        value = normalized_wc_difference(self.record(0.6, 0.45, 0.9, 0.4))
        assert value == pytest.approx((0.6 - 0.45) / 0.5, abs=1e-12)

    def test_degenerate_span_gives_zero(self):
        assert normalized_wc_difference(self.record(0.6, 0.4, 0.5, 0.5)) == 0.0
        assert normalized_wc_difference(self.record(0.6, 0.4, None, 0.5)) == 0.0


class TestCleaning:
    def test_fixture_removals_are_exact(self):
        report = clean_responses(cleaning_fixture())
        assert report.errors == []
        assert set(report.kept) == {"s01", "s06", "s10"}
        removed = dict(report.removed)
        assert removed == {
            "s02": DUPLICATE_ATTEMPT,
            "s03": BOT_CRT,
            "s04": FIRST_QUERY_FAST,
            "s05": FIRST_QUERY_FAST,
            "s07": AVERAGE_FAST,
            "s08": DURATION_OUTLIER,
            "s09": SAME_POLICY_NOT_INDIFFERENT,
        }

    def test_boundaries_are_bit_exact(self):
        kept = clean_responses(
            [make_session("b1", first_query_s=15.0, other_query_s=3.0, duration_s=3600.0)]
        )
        assert kept.kept == ["b1"]
        removed = clean_responses([make_session("b2", first_query_s=14.999)])
        assert removed.removed == [("b2", FIRST_QUERY_FAST)]

    def test_first_rule_wins(self):
        session = make_session(
            "s", crt_answers=["", "", ""], first_query_s=1.0
        )
        report = clean_responses([session])
        assert report.removed == [("s", BOT_CRT)]

    def test_strict_profile(self):
        session = make_session("s", first_query_s=20.0, other_query_s=4.0)
        assert clean_responses([session]).kept == ["s"]
        strict = clean_responses([session], thresholds=STRICT_THRESHOLDS)
        assert strict.removed == [("s", FIRST_QUERY_FAST)]

    def test_idempotent(self):
        sessions = cleaning_fixture()
        first = clean_responses(sessions)
        survivors = [s for s in sessions if s.session_id in set(first.kept)]
        second = clean_responses(survivors)
        assert second.removed == []
        assert set(second.kept) == set(first.kept)

    def test_malformed_record_reported_not_dropped(self):
        broken = make_session("s-broken")
        broken.steps = []
        report = clean_responses([broken, make_session("s-ok")])
        assert [sid for sid, _ in report.errors] == ["s-broken"]
        assert report.kept == ["s-ok"]


class TestStatistics:
    def test_t_identical_samples(self):
        t, df, p = two_sample_t([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert t == 0.0 and df == 4 and p == 1.0

    def test_t_hand_computed(self):
        t, df, p = two_sample_t([1, 2, 3, 4], [3, 4, 5, 6])
        assert t == pytest.approx(-2.1909, abs=1e-4)
        assert df == 6
        assert p == pytest.approx(0.0709877, abs=1e-6)

    def test_t_small_sample_rejected(self):
        with pytest.raises(DataValidationError):
            two_sample_t([1.0], [1.0, 2.0])

    def test_t_zero_pooled_variance_rejected(self):
        with pytest.raises(DataValidationError):
            two_sample_t([2.0, 2.0], [2.0, 2.0])

    def test_t_antisymmetric(self):
        t1, _, p1 = two_sample_t([1, 2, 3, 4], [3, 4, 5, 6])
        t2, _, p2 = two_sample_t([3, 4, 5, 6], [1, 2, 3, 4])
        assert t1 == -t2
        assert p1 == p2

    def test_chi_square_continuity(self):
        chi2, df, p = chi_square_uniform_two((94, 61), continuity=True)
        assert chi2 == pytest.approx(6.606, abs=0.01)
        assert df == 1

    def test_chi_square_balanced_clamps_to_zero(self):
        chi2, _, p = chi_square_uniform_two((10, 10), continuity=True)
        assert chi2 == 0.0
        assert p == 1.0

    def test_chi_square_without_continuity(self):
        chi2, _, _ = chi_square_uniform_two((20, 10), continuity=False)
        assert chi2 == pytest.approx(10.0 / 3.0, abs=1e-9)

    @given(st.integers(min_value=0, max_value=500), st.integers(min_value=0, max_value=500))
    @settings(max_examples=50)
    def test_chi_square_symmetric(self, n1, n2):
        if n1 + n2 == 0:
            return
        a = chi_square_uniform_two((n1, n2))
        b = chi_square_uniform_two((n2, n1))
        assert a == b

    @given(st.integers(min_value=1, max_value=500))
    @settings(max_examples=30)
    def test_chi_square_equal_counts_zero(self, n):
        chi2, _, _ = chi_square_uniform_two((n, n))
        assert chi2 == 0.0


class TestSummaries:
    def test_reference_partition(self):
        sessions = reference_partition_sessions()
        summary = summarize_final_query(sessions)
        assert summary.counts == {
            "prefers_robust": 94,
            "prefers_random": 61,
            "indifferent_different": 22,
            "indifferent_same": 16,
        }
        assert summary.n == 193
        lo, hi = summary.intervals["prefers_robust"]
        assert lo < 94 < hi

    def test_reference_partition_t_statistic(self):
        sessions = reference_partition_sessions()
        t, df, p = two_sample_t(
            [s.final.z_robust for s in sessions],
            [s.final.z_random for s in sessions],
        )
        assert df == 384
        assert t == pytest.approx(4.58, abs=1e-6)
        assert p < 0.001

    def test_empty_input_all_zero(self):
        summary = summarize_final_query([])
        assert summary.n == 0
        assert all(c == 0 for c in summary.counts.values())

    def test_counts_sum_to_input_size(self):
        sessions = [make_session(f"s{i}") for i in range(5)]
        summary = summarize_final_query(sessions)
        assert sum(summary.counts.values()) == 5


class TestSessionSerialization:
    def test_jsonl_round_trip(self, tmp_path):
        sessions = cleaning_fixture()
        path = tmp_path / "sessions.jsonl"
        dump_sessions_jsonl(sessions, path)
        loaded = load_sessions_jsonl(path)
        assert loaded == sessions

    def test_bundled_fixture_matches_generator(self):
        from importlib import resources

        data = resources.files("prefelicit.data") / "demo_sessions.jsonl"
        with resources.as_file(data) as path:
            loaded = load_sessions_jsonl(path)
        assert loaded == reference_partition_sessions()
