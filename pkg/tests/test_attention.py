"""
Tests for lag-weight fitting, feature refinement and temporal-state assignment.
"""
import numpy as np
import pytest

from dgdata.attention import (
    FeatureSequence,
    WindowLayout,
    assign_temporal_states,
    build_pseudo_labels,
    build_sequences,
    composite_pseudo_label,
    fit_attention,
    refine_features,
    vote_along_runs,
)
from dgdata.exceptions import ConfigurationError, DataError, DimensionError, LabelError
from dgdata.models.labels import AttentionWeights, TemporalStateLabels


def ar_sequence(beta, length: int, dim: int, seed: int) -> FeatureSequence:
    """Noise-free autoregression ``h_t = sum_i beta_i h_{t-i}`` from random initial rows."""
    rng = np.random.default_rng(seed)
    p = len(beta)
    values = np.zeros((length, dim))
    values[:p] = rng.standard_normal((p, dim))
    for t in range(p, length):
        values[t] = sum(beta[i] * values[t - 1 - i] for i in range(p))
    return FeatureSequence(values=values, window_index=np.arange(length))


def single_recording(n: int, domain: int = 0, recording: int = 0) -> WindowLayout:
    return WindowLayout(domains=np.full(n, domain), recording=np.full(n, recording), seq_index=np.arange(n))


class TestFitAttention:
    """Least-squares lag weights."""

    @pytest.mark.parametrize("beta", [[0.5, 0.3], [0.4, 0.2, 0.1, 0.15]])
    def test_recovers_autoregressive_coefficients(self, beta):
        """Coefficients of a noise-free AR(p) process are recovered to within 1e-6."""
        sequences = [ar_sequence(beta, length=12, dim=5, seed=s) for s in range(10)]
        weights = fit_attention(sequences, p=len(beta))
        np.testing.assert_allclose(weights.beta, beta, atol=1e-6)
        assert weights.residual < 1e-6

    def test_short_sequences_are_skipped(self):
        """Sequences no longer than p do not contribute."""
        long = ar_sequence([0.6, 0.2], length=30, dim=3, seed=0)
        short = FeatureSequence(values=np.full((2, 3), 100.0), window_index=np.arange(2))
        with_short = fit_attention([long, short], p=2)
        without = fit_attention([long], p=2)
        np.testing.assert_allclose(with_short.beta, without.beta)

    def test_constant_sequence_is_solvable(self):
        """A rank-deficient design still yields finite weights."""
        seq = FeatureSequence(values=np.ones((10, 4)), window_index=np.arange(10))
        weights = fit_attention(seq, p=3)
        assert np.all(np.isfinite(weights.beta))
        assert sum(weights.beta) == pytest.approx(1.0, abs=1e-6)

    def test_no_usable_sequence(self):
        with pytest.raises(DataError):
            fit_attention([FeatureSequence(values=np.ones((3, 2)), window_index=np.arange(3))], p=3)

    def test_invalid_lag_count(self):
        with pytest.raises(ConfigurationError):
            fit_attention(ar_sequence([0.5], 10, 2, 0), p=0)


class TestRefineFeatures:
    """Blending with the most significant past features."""

    def test_top_lag_blend(self):
        """With one selected lag of normalised weight 1 the blend is (1 - rho) h_t + rho h_{t-lag}."""
        values = np.arange(12, dtype=float).reshape(6, 2)
        seq = FeatureSequence(values=values, window_index=np.arange(6))
        weights = AttentionWeights(beta=[0.1, -0.6], p=2, residual=0.0)

        refined = refine_features(seq, weights, top_k=1, rho=0.25).values

        np.testing.assert_array_equal(refined[:2], values[:2])
        # lag 2 has the largest |beta| and a negative sign
        np.testing.assert_allclose(refined[2:], 0.75 * values[2:] - 0.25 * values[:-2])

    def test_rho_zero_is_identity(self):
        seq = ar_sequence([0.5, 0.3], 10, 3, 1)
        refined = refine_features(seq, AttentionWeights(beta=[0.5, 0.3], p=2, residual=0.0), top_k=2, rho=0.0)
        np.testing.assert_array_equal(refined.values, seq.values)

    @pytest.mark.parametrize("top_k,rho", [(0, 0.5), (3, 0.5), (1, 1.5)])
    def test_invalid_arguments(self, top_k, rho):
        seq = ar_sequence([0.5, 0.3], 10, 3, 1)
        with pytest.raises(ConfigurationError):
            refine_features(seq, AttentionWeights(beta=[0.5, 0.3], p=2, residual=0.0), top_k=top_k, rho=rho)

    def test_sequence_shape_is_checked(self):
        with pytest.raises(DimensionError):
            FeatureSequence(values=np.zeros((4, 2)), window_index=np.arange(3))


class TestBuildSequences:
    """Splitting windows into uninterrupted chronological runs."""

    def test_gaps_and_recordings_break_runs(self):
        """A missing seq_index or a new recording starts a new sequence."""
        layout = WindowLayout(
            domains=np.array([1, 0, 0, 0, 0, 0]),
            recording=np.array([2, 0, 0, 0, 1, 1]),
            seq_index=np.array([0, 3, 0, 1, 0, 1]),
        )
        features = np.arange(6, dtype=float)[:, None]

        sequences = build_sequences(layout, features)

        assert [seq.window_index.tolist() for seq in sequences] == [[2, 3], [1], [4, 5], [0]]
        np.testing.assert_array_equal(sequences[0].values[:, 0], [2.0, 3.0])


class TestAssignTemporalStates:
    """Per-class clustering into temporal states."""

    @pytest.fixture
    def two_phase(self):
        """One recording of class 0: six windows near 0 followed by six near 10."""
        rng = np.random.default_rng(0)
        features = np.concatenate([rng.normal(0.0, 0.1, (6, 3)), rng.normal(10.0, 0.1, (6, 3))])
        return features, np.zeros(12, dtype=np.int64), single_recording(12)

    def test_states_numbered_by_first_appearance(self, two_phase):
        features, classes, layout = two_phase
        labels = assign_temporal_states(features, classes, layout, k=2, seed=0, epoch=4)
        assert labels.states.tolist() == [0] * 6 + [1] * 6
        assert labels.k == 2 and labels.epoch == 4

    def test_unknown_class_takes_nearest_centroid(self, two_phase):
        """A window with class -1 gets the state of the closest class-state centroid."""
        features, classes, layout = two_phase
        features = np.vstack([features, [[9.8, 10.1, 10.0]]])
        classes = np.append(classes, -1)
        layout = WindowLayout(domains=np.append(layout.domains, 1), recording=np.append(layout.recording, 1),
                              seq_index=np.append(layout.seq_index, 0))
        labels = assign_temporal_states(features, classes, layout, k=2, seed=0)
        assert labels.states[-1] == 1

    def test_median_filter_removes_isolated_flips(self):
        """A single outlier inside a run takes its neighbours' state."""
        features = np.array([[0.0]] * 5 + [[10.0]] + [[0.0]] * 2 + [[10.0]] * 4)
        labels = assign_temporal_states(features, np.zeros(12, dtype=np.int64), single_recording(12), k=2, seed=0)
        assert labels.states[5] == 0
        unsmoothed = assign_temporal_states(features, np.zeros(12, dtype=np.int64), single_recording(12), k=2,
                                            seed=0, median_width=1)
        assert unsmoothed.states[5] == 1

    def test_deterministic_for_a_seed(self):
        rng = np.random.default_rng(3)
        features = rng.standard_normal((30, 4))
        classes = rng.integers(0, 2, 30)
        layout = single_recording(30)
        a = assign_temporal_states(features, classes, layout, k=3, seed=11)
        b = assign_temporal_states(features, classes, layout, k=3, seed=11)
        np.testing.assert_array_equal(a.states, b.states)
        assert a.states.max() < 3

    def test_small_class_uses_fewer_states(self):
        """A class with fewer windows than states still gets valid ids."""
        features = np.array([[0.0], [1.0]])
        labels = assign_temporal_states(features, np.array([0, 0]), single_recording(2), k=3, seed=0)
        assert set(labels.states.tolist()) <= {0, 1}

    def test_even_median_width(self, two_phase):
        features, classes, layout = two_phase
        with pytest.raises(ConfigurationError):
            assign_temporal_states(features, classes, layout, k=2, seed=0, median_width=2)

    def test_length_mismatch(self, two_phase):
        features, classes, layout = two_phase
        with pytest.raises(DimensionError):
            assign_temporal_states(features, classes[:-1], layout, k=2, seed=0)


class TestCompositeLabels:
    """Composite class-state ids."""

    def test_composite(self):
        assert composite_pseudo_label(2, 1, 3) == 7
        assert composite_pseudo_label(0, 0, 1) == 0

    @pytest.mark.parametrize("activity,state,k", [(1, 3, 3), (1, -1, 3), (-1, 0, 3)])
    def test_out_of_range(self, activity, state, k):
        with pytest.raises(LabelError):
            composite_pseudo_label(activity, state, k)

    def test_divmod_recovers_class_and_state(self):
        """Composite ids are a bijection onto [0, C * k) inverted by divmod."""
        for k in range(1, 7):
            ids = [composite_pseudo_label(c, s, k) for c in range(10) for s in range(k)]
            assert sorted(ids) == list(range(10 * k)), f"k={k} ids are not a bijection"
            for c in range(10):
                for s in range(k):
                    assert divmod(composite_pseudo_label(c, s, k), k) == (c, s)

    def test_pseudo_labels_use_the_same_composite(self):
        """Window-level composites agree with the scalar helper and keep -1 for unknown classes."""
        states = TemporalStateLabels(states=np.array([0, 2, 1, 1]), k=3, epoch=1)
        pseudo = build_pseudo_labels(states, np.array([1, 0, -1, 2]))
        assert pseudo.composite.tolist() == [composite_pseudo_label(1, 0, 3), composite_pseudo_label(0, 2, 3),
                                             -1, composite_pseudo_label(2, 1, 3)]


class TestVoteAlongRuns:
    """Majority pseudo classes along uninterrupted target runs."""

    def test_each_run_takes_its_majority(self):
        """Two target runs split by a gap vote separately; source rows are untouched."""
        layout = WindowLayout(
            domains=np.array([0, 0, 1, 1, 1, 1, 1, 1]),
            recording=np.array([0, 0, 1, 1, 1, 1, 1, 1]),
            seq_index=np.array([0, 1, 0, 1, 2, 4, 5, 6]),
        )
        classes = np.array([2, 0, 1, 1, 0, 2, 0, 2])

        voted = vote_along_runs(classes, layout)

        assert voted.tolist() == [2, 0, 1, 1, 1, 2, 2, 2]
        assert classes.tolist() == [2, 0, 1, 1, 0, 2, 0, 2], "input was modified"

    def test_ties_and_unknown_classes(self):
        """Ties go to the smaller class and -1 entries stay unknown."""
        layout = single_recording(5, domain=1)
        voted = vote_along_runs(np.array([3, 1, -1, 3, 1]), layout)
        assert voted.tolist() == [1, 1, -1, 1, 1]


class TestStateAssignmentStability:
    """Temporal states do not depend on row order and recover clean clusters."""

    @staticmethod
    def blobs():
        """Class 0 of one recording: 20 windows near -5 then 20 near +5, plus a second class."""
        rng = np.random.default_rng(2)
        features = np.concatenate([rng.normal(-5.0, 0.2, (20, 4)), rng.normal(5.0, 0.2, (20, 4)),
                                   rng.normal(0.0, 0.2, (10, 4))])
        classes = np.array([0] * 40 + [1] * 10)
        layout = WindowLayout(domains=np.zeros(50, dtype=np.int64),
                              recording=np.array([0] * 40 + [1] * 10),
                              seq_index=np.concatenate([np.arange(40), np.arange(10)]))
        truth = np.array([0] * 20 + [1] * 20)
        return features, classes, layout, truth

    def test_two_separated_blobs_are_recovered(self):
        """Agreement with the generating clusters is 1.0."""
        features, classes, layout, truth = self.blobs()
        labels = assign_temporal_states(features, classes, layout, k=2, seed=0)
        agreement = float(np.mean(labels.states[:40] == truth))
        assert agreement == 1.0, f"agreement {agreement}"

    def test_row_permutation_does_not_change_states(self):
        """Shuffling the rows (with their layout) permutes the states the same way."""
        features, classes, layout, _ = self.blobs()
        reference = assign_temporal_states(features, classes, layout, k=2, seed=0).states

        order = np.random.default_rng(9).permutation(50)
        shuffled_layout = WindowLayout(domains=layout.domains[order], recording=layout.recording[order],
                                       seq_index=layout.seq_index[order])
        shuffled = assign_temporal_states(features[order], classes[order], shuffled_layout, k=2, seed=0).states

        np.testing.assert_array_equal(shuffled, reference[order])
