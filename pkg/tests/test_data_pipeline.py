"""
Tests for windowing, the target split, split storage and the synthetic generator.
"""
import numpy as np
import pytest

from dgdata.data.storage import load_split, save_split
from dgdata.data.synth import SOURCE_USER, TARGET_USER, synth_crossuser, transition_matrix
from dgdata.data.windows import (
    compute_channel_stats,
    normalize_channels,
    prepare_split,
    segment_windows,
    split_target,
    window_length,
    window_stride,
)
from dgdata.exceptions import ConfigurationError, DataError
from dgdata.models.config import SynthConfig, UserTransform
from dgdata.models.data import RawRecording, UnlabeledWindow, WindowedSample


def make_recording(samples: int, activity=None, user: str = "u", rate: float = 1.0, channels: int = 2,
                   seed: int = 0) -> RawRecording:
    rng = np.random.default_rng(seed)
    if activity is None:
        activity = np.zeros(samples, dtype=np.int64)
    return RawRecording(
        user_id=user,
        recording_id=f"{user}-r",
        sample_rate_hz=rate,
        channel_names=[f"c{i}" for i in range(channels)],
        samples=rng.standard_normal((samples, channels)),
        activity=np.asarray(activity, dtype=np.int64),
        label_names=["a", "b"],
    )


class TestWindowing:
    """Sliding-window segmentation."""

    def test_count_matches_brute_force(self):
        """Window count and positions equal a brute-force scan for 100 random configurations."""
        rng = np.random.default_rng(42)
        for _ in range(100):
            length = int(rng.integers(1, 40))
            total = int(rng.integers(length, 200))
            overlap = float(rng.choice([0.0, 0.25, 0.5, 0.75, 0.9]))
            rec = make_recording(total)
            windows = segment_windows(rec, window_seconds=length, overlap=overlap)
            stride = window_stride(length, overlap)
            expected = [s for s in range(total - length + 1) if s % stride == 0]
            assert [w.seq_index * stride for w in windows] == expected
            assert all(w.values.shape == (2, length) for w in windows)

    @pytest.mark.parametrize("rate,expected", [(30.0, 90), (100.0, 300), (50.0, 150)])
    def test_protocol_window(self, rate, expected):
        """Three-second windows with 50% overlap give W = round(3 fs) and stride W/2."""
        assert window_length(3.0, rate) == expected
        assert window_stride(expected, 0.5) * 2 == expected

    def test_window_values_are_channel_major(self):
        """Window values are [channels, W] slices of the recording."""
        rec = make_recording(10)
        window = segment_windows(rec, window_seconds=4, overlap=0.5)[1]
        np.testing.assert_array_equal(window.values, rec.samples[2:6].T)

    def test_windows_across_activity_boundaries_are_dropped(self):
        """Mixed-label windows are discarded and seq_index keeps grid positions."""
        activity = np.array([0] * 6 + [1] * 6)
        windows = segment_windows(make_recording(12, activity), window_seconds=4, overlap=0.5)
        assert [w.seq_index for w in windows] == [0, 1, 3, 4]
        assert [w.activity for w in windows] == [0, 0, 1, 1]

    def test_short_recording(self):
        """A recording shorter than one window is a data error."""
        with pytest.raises(DataError):
            segment_windows(make_recording(3), window_seconds=4, overlap=0.5)

    def test_invalid_overlap(self):
        """Overlap of 1 would never advance."""
        with pytest.raises(ConfigurationError):
            segment_windows(make_recording(10), window_seconds=4, overlap=1.0)


class TestNormalisation:
    """Channel statistics and standardisation."""

    def test_source_statistics_standardise_source(self):
        """After normalisation the source windows have zero mean and unit deviation per channel."""
        windows = segment_windows(make_recording(50, channels=3), window_seconds=5, overlap=0.0)
        stats = compute_channel_stats(windows)
        normalized = normalize_channels(windows, stats)
        stacked = np.stack([w.values for w in normalized])
        np.testing.assert_allclose(stacked.mean(axis=(0, 2)), 0.0, atol=1e-10)
        np.testing.assert_allclose(stacked.std(axis=(0, 2)), 1.0, atol=1e-10)

    def test_constant_channel_passes_through(self):
        """A zero-deviation channel is left unchanged."""
        rec = make_recording(20)
        rec.samples[:, 1] = 3.0
        windows = segment_windows(rec, window_seconds=5, overlap=0.0)
        normalized = normalize_channels(windows, compute_channel_stats(windows))
        assert np.all(normalized[0].values[1] == 3.0)


class TestTargetSplit:
    """Stratified target validation/test split."""

    def _windows(self, labels):
        return [WindowedSample(values=np.zeros((1, 2)), domain="target", activity=int(a), seq_index=i,
                               recording_id="t", user_id="t") for i, a in enumerate(labels)]

    def test_stratified_and_disjoint(self):
        """Both subsets hold every class and share no window."""
        windows = self._windows([0] * 10 + [1] * 10)
        val, test = split_target(windows, val_fraction=0.5, seed=0)
        assert len(val) == 10 and len(test) == 10
        assert {w.activity for w in val} == {0, 1} and {w.activity for w in test} == {0, 1}
        assert not {w.window_id for w in val} & {w.window_id for w in test}

    def test_singleton_class_goes_to_test(self):
        """A class with one window cannot be stratified and stays in the test subset."""
        windows = self._windows([0] * 6 + [1])
        val, test = split_target(windows, val_fraction=0.5, seed=0)
        assert 1 in [w.activity for w in test]
        assert 1 not in [w.activity for w in val]

    def test_small_split_keeps_every_class_on_both_sides(self):
        """Counts too small for a stratified draw still split with one window per class on each side."""
        # 1. Class counts [2, 2, 4] with a 20% validation share
        windows = self._windows([0] * 2 + [1] * 2 + [2] * 4)
        val, test = split_target(windows, val_fraction=0.2, seed=0)

        # 2. Every window lands on exactly one side
        assert len(val) + len(test) == 8, "windows lost or duplicated"
        assert not {w.window_id for w in val} & {w.window_id for w in test}

        # 3. Every class is represented on both sides
        assert {w.activity for w in val} == {0, 1, 2}, f"validation classes: {[w.activity for w in val]}"
        assert {w.activity for w in test} == {0, 1, 2}, f"test classes: {[w.activity for w in test]}"

    def test_small_split_is_deterministic(self):
        """The per-class split depends only on the seed."""
        windows = self._windows([0] * 2 + [1] * 2 + [2] * 4)
        first = split_target(windows, val_fraction=0.2, seed=5)
        second = split_target(windows, val_fraction=0.2, seed=5)
        assert [w.window_id for w in first[0]] == [w.window_id for w in second[0]]

    def test_invalid_fraction(self):
        """val_fraction must lie strictly between 0 and 1."""
        with pytest.raises(ConfigurationError):
            split_target(self._windows([0, 1]), val_fraction=1.0)


class TestPrepareSplit:
    """The segment, normalise and split pipeline."""

    def test_target_training_windows_are_unlabeled(self):
        """target_train carries no activity attribute at all."""
        recordings = [make_recording(40, user="s", seed=1), make_recording(40, user="t", seed=2)]
        split = prepare_split(recordings, "s", "t", window_seconds=4, overlap=0.5, val_fraction=0.5)
        assert split.target_train
        assert all(type(w) is UnlabeledWindow for w in split.target_train)
        assert not hasattr(split.target_train[0], "activity")
        assert split.n_target == len(split.target_val) + len(split.target_test)

    def test_missing_user(self):
        """A user with no windows is a data error."""
        with pytest.raises(DataError):
            prepare_split([make_recording(40, user="s")], "s", "nobody", window_seconds=4)

    def test_mixed_sample_rates(self):
        """Recordings of one split must share a sample rate."""
        recordings = [make_recording(40, user="s"), make_recording(40, user="t", rate=2.0)]
        with pytest.raises(DataError):
            prepare_split(recordings, "s", "t", window_seconds=4)


class TestSplitStorage:
    """save_split / load_split."""

    def test_round_trip_keeps_windows_and_diagnostics(self, tiny_split, tmp_path):
        """Values, labels, provenance and diagnostics survive a save and load."""
        save_split(tiny_split, tmp_path)
        loaded = load_split(tmp_path)
        for name in ("source_train", "target_val", "target_test"):
            original, restored = getattr(tiny_split, name), getattr(loaded, name)
            assert [w.window_id for w in restored] == [w.window_id for w in original]
            assert [w.activity for w in restored] == [w.activity for w in original]
            np.testing.assert_array_equal(restored[0].values, original[0].values)
        assert all(type(w) is UnlabeledWindow for w in loaded.target_train)
        assert loaded.diagnostics == tiny_split.diagnostics
        assert loaded.channel_stats == tiny_split.channel_stats

    def test_missing_directory(self, tmp_path):
        """Loading from an empty directory is a data error."""
        with pytest.raises(DataError):
            load_split(tmp_path / "nothing")


class TestSynth:
    """The synthetic cross-user generator."""

    def test_transition_matrix_is_left_to_right(self):
        """Rows sum to one and only the next state is reachable."""
        matrix = transition_matrix(np.array([4.0, 2.0, 10.0]))
        np.testing.assert_allclose(matrix.sum(axis=1), 1.0)
        assert matrix[0, 0] == pytest.approx(0.75) and matrix[0, 1] == pytest.approx(0.25)
        assert matrix[2, 0] == pytest.approx(0.1)
        assert matrix[0, 2] == 0.0

    def test_split_shape_and_users(self, tiny_split, tiny_synth_config):
        """Windows are [channels, W] and each user yields the configured number of windows."""
        assert tiny_split.window_shape == (6, 30)
        assert tiny_split.n_source == tiny_synth_config.windows_per_user
        assert tiny_split.n_target == tiny_synth_config.windows_per_user
        assert {w.user_id for w in tiny_split.source_train} == {SOURCE_USER}
        assert {w.user_id for w in tiny_split.target_train} == {TARGET_USER}

    def test_diagnostics_cover_every_training_window(self, tiny_split):
        """Hidden states are retained per window and per recording."""
        diagnostics = tiny_split.diagnostics
        ids = [w.window_id for w in tiny_split.source_train] + [w.window_id for w in tiny_split.target_train]
        assert set(ids) == set(diagnostics.window_states)
        assert all(len(states) == 30 for states in diagnostics.window_states.values())
        assert set(diagnostics.transition_matrices) == {f"{u}/{c}" for u in (SOURCE_USER, TARGET_USER)
                                                        for c in range(2)}

    def test_deterministic(self, tiny_synth_config):
        """The same seed yields identical windows."""
        a = synth_crossuser(tiny_synth_config, seed=11)
        b = synth_crossuser(tiny_synth_config, seed=11)
        np.testing.assert_array_equal(a.source_train[3].values, b.source_train[3].values)
        np.testing.assert_array_equal(a.target_test[0].values, b.target_test[0].values)

    @staticmethod
    def state_conditional_shift(split):
        """
        Per-channel target-minus-source mean of samples sharing a hidden (class, state), and its standard error.

        Overlapping windows repeat every sample twice, so group sizes are halved.
        """
        states = split.diagnostics.window_states
        groups = {}
        for domain, windows in (("source", split.source_train), ("target", split.target_val + split.target_test)):
            for window in windows:
                hidden = np.asarray(states[window.window_id])
                for s in np.unique(hidden):
                    groups.setdefault((window.activity, int(s)), {}).setdefault(domain, []).append(
                        window.values[:, hidden == s])
        shifts, variances = [], []
        for per_domain in groups.values():
            if len(per_domain) < 2:
                continue
            source = np.concatenate(per_domain["source"], axis=1)
            target = np.concatenate(per_domain["target"], axis=1)
            shifts.append(target.mean(axis=1) - source.mean(axis=1))
            variances.append(2 * source.var(axis=1) / source.shape[1] + 2 * target.var(axis=1) / target.shape[1])
        n = len(shifts)
        return np.mean(shifts, axis=0), np.sqrt(np.sum(variances, axis=0)) / n

    def test_identity_transform_gives_no_shift(self):
        """Two users with the identity transform emit the same state-conditional means."""
        identity = UserTransform()
        split = synth_crossuser(SynthConfig(source=identity, target=identity), seed=3)

        shift, sigma = self.state_conditional_shift(split)

        assert np.all(np.abs(shift) < 3 * sigma), f"shift {shift} vs 3 sigma {3 * sigma}"

    def test_default_target_is_shifted(self):
        """The default target transform moves the gyroscope channels far beyond sampling noise."""
        split = synth_crossuser(SynthConfig(), seed=3)

        shift, sigma = self.state_conditional_shift(split)

        assert np.linalg.norm(shift[3:]) > 10 * np.linalg.norm(sigma[3:]), f"shift {shift} vs sigma {sigma}"

    def test_hidden_states_follow_the_transition_matrix(self):
        """States only stay or step to the next state, at the rate the transition matrix sets."""
        split = synth_crossuser(SynthConfig(), seed=4)
        diagnostics = split.diagnostics
        k = SynthConfig().states_per_class

        observed, expected, variance = 0, 0.0, 0.0
        for recording_id, sequence in diagnostics.state_sequences.items():
            user, activity = recording_id.split("-a")
            matrix = np.asarray(diagnostics.transition_matrices[f"{user}/{activity}"])
            sequence = np.asarray(sequence)
            current, following = sequence[:-1], sequence[1:]

            # 1. Left-to-right: stay, or move to the next state (wrapping around)
            assert np.all((following == current) | (following == (current + 1) % k)), recording_id

            # 2. Accumulate the expected number of moves
            leave = 1.0 - matrix[current, current]
            observed += int(np.sum(following != current))
            expected += float(leave.sum())
            variance += float(np.sum(leave * (1.0 - leave)))

        assert abs(observed - expected) < 4 * np.sqrt(variance), (
            f"{observed} state changes, {expected:.1f} expected"
        )

    def test_singular_rotation_rejected(self, tiny_synth_config):
        """A singular channel mixing matrix is a configuration error."""
        cfg = tiny_synth_config.model_copy(update={"target": UserTransform(rotation=[[0.0] * 6] * 6)})
        with pytest.raises(ConfigurationError):
            synth_crossuser(cfg, seed=0)
