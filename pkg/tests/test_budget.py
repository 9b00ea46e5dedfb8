import numpy as np
import pytest

from drsort import budget
from drsort.seeding import stream


class TestSolveBudgetArgmax:
    def test_zero_budget_forces_all_zero(self):
        rng = stream(0, "b0")
        values = rng.normal(size=(5, 3))
        assert np.array_equal(budget.solve_budget_argmax(values, 0), np.zeros(5, dtype=int))

    def test_slack_budget_gives_row_argmax(self):
        rng = stream(1, "slack")
        values = rng.normal(size=(4, 4))
        action = budget.solve_budget_argmax(values, 4 * 3)
        assert np.array_equal(action, values.argmax(axis=1))

    def test_matches_brute_force_on_random_instances(self):
        rng = stream(2, "opt")
        for _ in range(200):
            n = int(rng.integers(1, 7))
            a_max = int(rng.integers(1, 5))
            m = int(rng.integers(0, 9))
            values = rng.normal(size=(n, a_max + 1))
            dp_action = budget.solve_budget_argmax(values, m)
            bf_action = budget.brute_force_argmax(values, m)
            assert np.array_equal(dp_action, bf_action)
            assert budget.max_joint_value(values, m) == budget.joint_value(values, bf_action)

    def test_feasibility(self):
        rng = stream(3, "feas")
        for _ in range(100):
            values = rng.normal(size=(6, 3))
            m = int(rng.integers(0, 7))
            action = budget.solve_budget_argmax(values, m)
            assert action.sum() <= m
            assert np.all(action >= 0) and np.all(action <= 2)

    def test_objective_nondecreasing_in_budget(self):
        rng = stream(4, "mono")
        values = rng.normal(size=(5, 4))
        optima = [budget.max_joint_value(values, m) for m in range(0, 16)]
        assert all(b >= a for a, b in zip(optima, optima[1:]))

    def test_row_constant_shift_keeps_argmax(self):
        rng = stream(5, "shift")
        for _ in range(50):
            values = rng.normal(size=(4, 3))
            m = 4
            base_action = budget.solve_budget_argmax(values, m)
            base_value = budget.max_joint_value(values, m)
            shifted = values.copy()
            shifted[2] += 1.75
            assert np.array_equal(budget.solve_budget_argmax(shifted, m), base_action)
            assert budget.max_joint_value(shifted, m) == pytest.approx(base_value + 1.75, abs=1e-9)

    def test_nonfinite_table_rejected(self):
        values = np.array([[0.0, np.inf]])
        with pytest.raises(ValueError, match="non-finite"):
            budget.solve_budget_argmax(values, 1)


class TestTieBreaking:
    def test_all_equal_table_yields_all_zero(self):
        values = np.ones((4, 2))
        assert np.array_equal(budget.solve_budget_argmax(values, 3), np.zeros(4, dtype=int))
        assert np.array_equal(budget.brute_force_argmax(values, 3), np.zeros(4, dtype=int))

    def test_equal_gains_give_lexicographically_smallest_action(self):
        # two agents tied on an integer gain, one chute: the later agent wins
        values = np.array([[1.0, 3.0], [2.0, 4.0]])
        expected = np.array([0, 1])
        assert np.array_equal(budget.solve_budget_argmax(values, 1), expected)
        assert np.array_equal(budget.brute_force_argmax(values, 1), expected)

    def test_within_row_ties_prefer_smaller_action(self):
        values = np.array([[2.0, 2.0, 2.0], [0.0, 1.0, 1.0]])
        expected = np.array([0, 1])
        assert np.array_equal(budget.solve_budget_argmax(values, 4), expected)
        assert np.array_equal(budget.brute_force_argmax(values, 4), expected)

    def test_top_k_marginal_gains(self):
        # N=5 binary actions: the two largest gains get the chutes
        values = np.zeros((5, 2))
        values[:, 1] = [0.5, 3.0, 1.0, 2.5, -1.0]
        assert np.array_equal(budget.solve_budget_argmax(values, 2), [0, 1, 0, 1, 0])


class TestBruteForce:
    def test_single_agent_respects_budget(self):
        values = np.array([[0.0, 5.0, 9.0, 11.0]])
        assert np.array_equal(budget.brute_force_argmax(values, 2), [2])

    def test_rejects_huge_instances(self):
        values = np.zeros((30, 4))
        with pytest.raises(ValueError, match="too large"):
            budget.brute_force_argmax(values, 3)


class TestBatchValues:
    def test_matches_scalar_dp(self):
        rng = stream(6, "batch")
        for a_max in (1, 2, 3):
            tables = rng.normal(size=(20, 5, a_max + 1))
            got = budget.max_joint_value_batch(tables, 4)
            want = [budget.max_joint_value(tables[i], 4) for i in range(20)]
            assert got == pytest.approx(want, abs=1e-9)

    def test_budget_larger_than_agents(self):
        rng = stream(7, "batch2")
        tables = rng.normal(size=(8, 3, 2))
        got = budget.max_joint_value_batch(tables, 11)
        want = [budget.max_joint_value(tables[i], 11) for i in range(8)]
        assert got == pytest.approx(want, abs=1e-9)


class TestUniformFeasibleSampling:
    def test_counts_match_enumeration(self):
        import itertools

        counts = budget.count_feasible(3, 2, 4)
        brute = sum(
            1 for a in itertools.product(range(3), repeat=3) if sum(a) <= 4
        )
        assert counts[0, 4] == brute

    def test_samples_feasible(self):
        rng = stream(8, "uni")
        for _ in range(200):
            action = budget.sample_feasible_uniform(6, 2, 4, rng)
            assert action.sum() <= 4
            assert np.all((action >= 0) & (action <= 2))

    def test_uniform_over_small_space(self):
        from scipy.stats import chisquare

        rng = stream(9, "chi")
        tallies = {}
        n_draws = 14_000
        for _ in range(n_draws):
            action = tuple(budget.sample_feasible_uniform(3, 1, 2, rng))
            tallies[action] = tallies.get(action, 0) + 1
        assert len(tallies) == 7  # C(3,0)+C(3,1)+C(3,2)
        stat, p = chisquare(list(tallies.values()))
        assert p > 0.01
