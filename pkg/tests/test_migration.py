"""Joint migration machinery: calibration, dependence rows, path simulation."""

import itertools

import numpy as np
import pytest

from ccpwaterfall.errors import CalibrationError, ConfigError, MarginalInfeasibleError
from ccpwaterfall.migration import (
    DependenceType,
    JointMigrationModel,
    JointState,
    MigrationPath,
    RatingTransitionMatrix,
    calibrate_daily,
    daily_matrix_family,
    joint_transition_row,
    marginal_of_row,
    pattern_mask,
    simulate_path,
    simulate_paths_batch,
    study_migration_matrix,
    survival_indicator,
)


def small_matrix(size=4, up=0.05, down=0.08, jump=0.02, terminal=0.1):
    """Pattern-respecting test matrix with noticeable move probabilities."""
    jumps = {x: jump for x in range(3, size - 1)}
    return daily_matrix_family(
        size=size, up_rate=up, down_rate=down, jump_rates=jumps, terminal_default_rate=terminal
    )


class TestRatingTransitionMatrix:
    def test_valid_study_matrix(self):
        matrix = study_migration_matrix()
        assert matrix.size == 8
        assert matrix.matches_pattern()
        assert np.allclose(matrix.probs.sum(axis=1), 1.0, atol=1e-15)

    def test_rejects_non_stochastic(self):
        bad = np.eye(3)
        bad[0, 0] = 0.5
        with pytest.raises(ConfigError):
            RatingTransitionMatrix(bad)

    def test_rejects_non_absorbing_default(self):
        bad = np.eye(3)
        bad[2, 0] = 0.1
        bad[2, 2] = 0.9
        with pytest.raises(ConfigError):
            RatingTransitionMatrix(bad)

    def test_pattern_detection(self):
        probs = np.eye(4)
        probs[0, 0] = 0.9
        probs[0, 3] = 0.1  # default jump from the best rating is outside the pattern
        matrix = RatingTransitionMatrix(probs)
        assert not matrix.matches_pattern()
        with pytest.raises(ConfigError):
            matrix.require_pattern()

    def test_pattern_mask_structure(self):
        mask = pattern_mask(8)
        assert mask[0].tolist() == [True, True, False, False, False, False, False, False]
        assert mask[6].tolist() == [False, False, False, False, False, True, True, True]
        assert mask[7].tolist() == [False] * 7 + [True]

    def test_csv_round_trip(self, tmp_path):
        matrix = small_matrix()
        path = tmp_path / "matrix.csv"
        matrix.to_csv(path)
        again = RatingTransitionMatrix.from_csv(path)
        assert np.array_equal(matrix.probs, again.probs)


class TestCalibration:
    def test_identity_root(self):
        identity = RatingTransitionMatrix(np.eye(8))
        result = calibrate_daily(identity, 252)
        assert np.allclose(result.matrix.probs, np.eye(8), atol=1e-12)
        assert result.reconstruction_error < 1e-12

    def test_round_trip_study_matrix(self):
        daily = study_migration_matrix()
        annual = daily.power(252)
        result = calibrate_daily(annual, 252)
        assert np.max(np.abs(result.matrix.probs - daily.probs)) < 1e-8
        assert result.reconstruction_error < 1e-8

    def test_round_trip_randomized(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            daily = daily_matrix_family(
                size=8,
                up_rate=float(rng.uniform(5e-4, 5e-3)),
                down_rate=float(rng.uniform(5e-4, 8e-3)),
                jump_rates={x: float(rng.uniform(1e-5, 2e-3)) for x in range(3, 7)},
                terminal_default_rate=float(rng.uniform(5e-4, 8e-3)),
            )
            annual = daily.power(252)
            result = calibrate_daily(annual, 252)
            assert np.max(np.abs(result.matrix.probs - daily.probs)) < 1e-8

    def test_absorbing_row_preserved_exactly(self):
        annual = study_migration_matrix().power(252)
        result = calibrate_daily(annual, 252)
        assert result.matrix.probs[7, 7] == 1.0
        assert np.all(result.matrix.probs[7, :7] == 0.0)

    def test_failure_reports_diagnostics(self):
        # A strongly mixing annual matrix has no root near the pattern: the
        # projection strips rows bare and calibration reports a failure.
        probs = np.zeros((4, 4))
        probs[0, 1] = 1.0
        probs[1, 0] = 1.0
        probs[2, 2] = 1.0
        probs[3, 3] = 1.0
        annual = RatingTransitionMatrix(probs)
        with pytest.raises(CalibrationError):
            calibrate_daily(annual, 252)


def all_states(members, size):
    return itertools.product(range(1, size + 1), repeat=members)


class TestJointRows:
    def test_type1_is_product_measure(self):
        row_probs = np.array(
            [
                [0.9, 0.05, 0.0, 0.05],
                [0.05, 0.85, 0.05, 0.05],
                [0.0, 0.08, 0.82, 0.1],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )
        matrix = RatingTransitionMatrix(row_probs)
        model = JointMigrationModel.homogeneous(matrix, 2, DependenceType.TYPE_I)
        row = joint_transition_row(model, (2, 2))
        for (y1, y2), prob in row.items():
            assert prob == pytest.approx(row_probs[1, y1 - 1] * row_probs[1, y2 - 1], abs=1e-15)
        assert sum(row.values()) == pytest.approx(1.0, abs=1e-12)

    def test_type1_two_member_example(self):
        # Symmetric rows: stay 0.9, up 0.05, down 0.05.
        probs = np.zeros((4, 4))
        probs[1] = [0.05, 0.9, 0.05, 0.0]
        probs[0] = [0.95, 0.05, 0.0, 0.0]
        probs[2] = [0.0, 0.05, 0.85, 0.1]
        probs[3, 3] = 1.0
        model = JointMigrationModel.homogeneous(
            RatingTransitionMatrix(probs), 2, DependenceType.TYPE_I
        )
        row = joint_transition_row(model, (2, 2))
        assert row[(2, 2)] == pytest.approx(0.81)
        assert row[(1, 2)] == pytest.approx(0.045)
        assert row[(2, 3)] == pytest.approx(0.045)
        assert row[(1, 3)] == pytest.approx(0.0025)

    def test_type3_common_move_example(self):
        # Identical marginals: stay 0.9, down 0.1; everything co-moves.
        probs = np.zeros((3, 3))
        probs[0] = [0.9, 0.1, 0.0]
        probs[1] = [0.05, 0.85, 0.1]
        probs[2, 2] = 1.0
        model = JointMigrationModel.homogeneous(
            RatingTransitionMatrix(probs), 2, DependenceType.TYPE_III
        )
        row = joint_transition_row(model, (1, 1))
        assert row[(2, 2)] == pytest.approx(0.1)
        assert row[(1, 1)] == pytest.approx(0.9)
        assert len(row) == 2

    def test_type2_prohibits_upgrades_on_default_events(self):
        matrix = small_matrix()
        model = JointMigrationModel.homogeneous(matrix, 3, DependenceType.TYPE_II)
        row = joint_transition_row(model, (3, 3, 3))
        size = matrix.size
        for state, prob in row.items():
            if any(r == size for r in state) and prob > 0.0:
                assert all(r >= 3 for r in state), f"upgrade on default event: {state}"

    def test_frozen_members_stay_default(self):
        matrix = small_matrix()
        for dep in DependenceType:
            model = JointMigrationModel.homogeneous(matrix, 2, dep)
            row = joint_transition_row(model, (4, 2))
            assert all(state[0] == 4 for state in row)
            assert sum(row.values()) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("dep", list(DependenceType))
    @pytest.mark.parametrize("members", [1, 2, 3])
    def test_marginal_consistency_exhaustive(self, dep, members):
        matrix = small_matrix(size=4)
        model = JointMigrationModel.homogeneous(matrix, members, dep)
        for state in all_states(members, 4):
            row = joint_transition_row(model, state)
            total = sum(row.values())
            assert total == pytest.approx(1.0, abs=1e-12)
            assert all(p >= 0.0 for p in row.values())
            for i, rating in enumerate(state):
                expected = matrix.probs[rating - 1]
                got = marginal_of_row(row, i, 4)
                assert np.allclose(got, expected, atol=1e-12), (dep, members, state, i)

    def test_marginal_consistency_heterogeneous(self):
        matrices = [small_matrix(up=0.04, down=0.06), small_matrix(up=0.02, down=0.1)]
        for dep in DependenceType:
            model = JointMigrationModel(tuple(matrices), dep)
            for state in all_states(2, 4):
                row = joint_transition_row(model, state)
                for i, rating in enumerate(state):
                    expected = matrices[i].probs[rating - 1]
                    assert np.allclose(marginal_of_row(row, i, 4), expected, atol=1e-12)

    def test_type3_infeasibility_detected(self):
        # Hyperactive heterogeneous members: total single-move mass exceeds one.
        probs_a = np.zeros((4, 4))
        probs_a[1] = [0.45, 0.1, 0.45, 0.0]
        probs_a[0] = [0.5, 0.5, 0.0, 0.0]
        probs_a[2] = [0.0, 0.45, 0.45, 0.1]
        probs_a[3, 3] = 1.0
        probs_b = np.zeros((4, 4))
        probs_b[1] = [0.5, 0.0, 0.5, 0.0]
        probs_b[0] = [0.4, 0.6, 0.0, 0.0]
        probs_b[2] = [0.0, 0.5, 0.4, 0.1]
        probs_b[3, 3] = 1.0
        model = JointMigrationModel(
            (RatingTransitionMatrix(probs_a), RatingTransitionMatrix(probs_b)),
            DependenceType.TYPE_III,
        )
        with pytest.raises(MarginalInfeasibleError):
            joint_transition_row(model, (2, 1))


class TestPathSimulation:
    def test_deterministic_for_fixed_seed(self):
        model = JointMigrationModel.homogeneous(small_matrix(), 3, DependenceType.TYPE_II)
        a = simulate_path(model, (3, 3, 3), 20, seed=99)
        b = simulate_path(model, (3, 3, 3), 20, seed=99)
        assert a == b
        c = simulate_path(model, (3, 3, 3), 20, seed=100)
        assert a != c  # overwhelmingly likely with these move rates

    def test_single_path_matches_batch_head(self):
        model = JointMigrationModel.homogeneous(small_matrix(), 2, DependenceType.TYPE_III)
        single = simulate_path(model, (2, 3), 15, seed=5)
        states, defaults = simulate_paths_batch(model, (2, 3), 15, 4, seed=5)
        assert tuple(tuple(int(x) for x in row) for row in states[0]) == single.states

    def test_chunk_size_invariance(self):
        model = JointMigrationModel.homogeneous(small_matrix(), 3, DependenceType.TYPE_II)
        s1, d1 = simulate_paths_batch(model, (3, 3, 3), 10, 300, seed=7, chunk_size=300)
        s2, d2 = simulate_paths_batch(model, (3, 3, 3), 10, 300, seed=7, chunk_size=17)
        assert np.array_equal(s1, s2)
        assert np.array_equal(d1, d2)

    def test_prefix_stability(self):
        model = JointMigrationModel.homogeneous(small_matrix(), 2, DependenceType.TYPE_I)
        s1, _ = simulate_paths_batch(model, (3, 3), 10, 50, seed=3)
        s2, _ = simulate_paths_batch(model, (3, 3), 10, 200, seed=3)
        assert np.array_equal(s1, s2[:50])

    def test_all_default_initial_state_is_constant(self):
        model = JointMigrationModel.homogeneous(small_matrix(), 2, DependenceType.TYPE_I)
        path = simulate_path(model, (4, 4), 10, seed=1)
        assert all(s == (4, 4) for s in path.states)
        assert path.default_steps == (None, None)

    def test_default_absorption_along_paths(self):
        model = JointMigrationModel.homogeneous(small_matrix(), 3, DependenceType.TYPE_II)
        states, defaults = simulate_paths_batch(model, (3, 3, 3), 25, 500, seed=13)
        size = 4
        hit = states == size
        # Once in default, always in default.
        assert np.all(hit[:, 1:, :] >= hit[:, :-1, :] * 1 - 0)
        for p in range(states.shape[0]):
            for i in range(3):
                tau = defaults[p, i]
                if tau >= 0:
                    assert np.all(states[p, tau:, i] == size)
                    assert np.all(states[p, :tau, i] != size)
                else:
                    assert np.all(states[p, :, i] != size)

    def test_single_member_empirical_frequencies(self):
        matrix = small_matrix()
        model = JointMigrationModel.homogeneous(matrix, 1, DependenceType.TYPE_I)
        n = 100_000
        states, _ = simulate_paths_batch(model, (2,), 1, n, seed=21)
        outcomes = states[:, 1, 0]
        expected = matrix.probs[1]
        for target in range(1, 5):
            freq = float(np.mean(outcomes == target))
            p = expected[target - 1]
            se = np.sqrt(max(p * (1 - p), 1e-12) / n)
            assert abs(freq - p) <= 3 * se + 1e-9, (target, freq, p)

    def test_type2_clusters_joint_defaults(self):
        # One-sided check: joint defaults are at least as frequent as under
        # independence when upgrades are prohibited on default events.
        matrix = small_matrix(size=4, up=0.05, down=0.05, jump=0.05, terminal=0.1)
        n, steps = 30_000, 5
        counts = {}
        for dep in (DependenceType.TYPE_I, DependenceType.TYPE_II):
            model = JointMigrationModel.homogeneous(matrix, 4, dep)
            _, defaults = simulate_paths_batch(model, (3, 3, 3, 3), steps, n, seed=17)
            counts[dep] = float(np.mean((defaults > 0).sum(axis=1) >= 2))
        p = counts[DependenceType.TYPE_I]
        se = np.sqrt(p * (1 - p) / n)
        assert counts[DependenceType.TYPE_II] >= p - 3 * se

    def test_survival_indicator(self):
        model = JointMigrationModel.homogeneous(small_matrix(), 2, DependenceType.TYPE_I)
        path = simulate_path(model, (3, 3), 30, seed=2)
        for member in range(2):
            tau = path.default_steps[member]
            for t in range(len(path.states)):
                expected = tau is None or tau > t
                assert survival_indicator(path, member, t) == expected
                assert (path.states[t][member] == 4) == (not expected)
        with pytest.raises(ConfigError):
            survival_indicator(path, 5, 0)
        with pytest.raises(ConfigError):
            survival_indicator(path, 0, 99)


class TestJointStateAndPath:
    def test_joint_state_validation(self):
        JointState((1, 2, 3)).validate(4)
        with pytest.raises(ConfigError):
            JointState((0, 2)).validate(4)
        with pytest.raises(ConfigError):
            JointState((1, 9)).validate(4)

    def test_migration_path_rejects_escape_from_default(self):
        with pytest.raises(ConfigError):
            MigrationPath(states=((4,), (3,)), default_steps=(0,))
