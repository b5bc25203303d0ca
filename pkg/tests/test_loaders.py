"""
Tests for the dataset loaders, using small fixture files written to tmp_path.
"""
import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from dgdata.data.loaders import CHANNELS, SCHEMAS, load_dataset
from dgdata.data.windows import segment_windows
from dgdata.exceptions import ConfigurationError, DataError, SchemaError


def write_whitespace_table(path: Path, table: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, table, fmt="%.6f", delimiter=" ")


class TestOpportunity:
    """Whitespace tables with the locomotion track in column 244."""

    @pytest.fixture
    def dataset(self, tmp_path) -> Path:
        rng = np.random.default_rng(0)
        for user in ("S1", "S2"):
            table = rng.standard_normal((12, 250))
            table[:, 243] = [1, 1, 2, 2, 0, 0, 4, 4, 5, 5, 3, 1]
            write_whitespace_table(tmp_path / f"{user}-ADL1.dat", table)
        return tmp_path

    def test_keeps_declared_activities(self, dataset):
        """Rows with undeclared codes (0, 3) are dropped and codes map to label indices."""
        recordings = load_dataset(dataset, "oppt")

        # 1. Dropped rows split each file into gap-free segments, sorted by user
        assert [r.user_id for r in recordings] == ["S1"] * 3 + ["S2"] * 3
        assert [r.recording_id for r in recordings[:3]] == ["S1-ADL1-seg000", "S1-ADL1-seg001", "S1-ADL1-seg002"]

        # 2. Codes 1, 2, 4, 5 map to indices 0..3
        assert [r.activity.tolist() for r in recordings[:3]] == [[0, 0, 1, 1], [2, 2, 3, 3], [0]]
        assert recordings[0].samples.shape == (4, 6)
        assert recordings[0].channel_names == CHANNELS
        assert recordings[0].sample_rate_hz == SCHEMAS["oppt"].sample_rate_hz

    def test_channel_columns(self, dataset):
        """The retained channels are raw columns 63-68."""
        raw = np.loadtxt(dataset / "S1-ADL1.dat")
        rec = load_dataset(dataset, "oppt")[0]
        np.testing.assert_allclose(rec.samples[0], raw[0, 63:69], atol=1e-6)

    def test_too_few_columns(self, tmp_path):
        """A table narrower than the label column is a schema error."""
        write_whitespace_table(tmp_path / "S1-ADL1.dat", np.ones((4, 10)))
        with pytest.raises(SchemaError):
            load_dataset(tmp_path, "oppt")


class TestPamap2:
    """Per-subject whitespace tables with the activity in column 2."""

    def test_user_id_and_nan_rows(self, tmp_path):
        """subject101 becomes user "1", transient activity 0 and NaN rows are dropped."""
        table = np.ones((6, 20))
        table[:, 1] = [0, 1, 1, 4, 4, 24]
        table[2, 5] = np.nan
        write_whitespace_table(tmp_path / "Protocol" / "subject101.dat", table)

        recordings = load_dataset(tmp_path, "pamap2", sample_rate_hz=50.0)

        assert {r.user_id for r in recordings} == {"1"}
        assert [r.activity.tolist() for r in recordings] == [[0], [3, 3]]
        assert recordings[0].sample_rate_hz == 50.0


class TestDsads:
    """Comma-separated segments under aXX/pY/."""

    def test_segments_are_concatenated(self, tmp_path):
        """Each (person, activity) pair yields one recording of its segments in order."""
        for segment, fill in (("s01", 1.0), ("s02", 2.0)):
            path = tmp_path / "a03" / "p2" / f"{segment}.txt"
            path.parent.mkdir(parents=True, exist_ok=True)
            np.savetxt(path, np.full((5, 45), fill), delimiter=",", fmt="%.2f")

        rec = load_dataset(tmp_path, "dsads")[0]

        assert rec.user_id == "2"
        assert rec.samples.shape == (10, 6)
        assert rec.samples[:5].max() == 1.0 and rec.samples[5:].min() == 2.0
        assert set(rec.activity.tolist()) == {2}


class TestGenericCsv:
    """manifest.json plus one CSV per user."""

    def write(self, root: Path, rows, label_names=("walk", "sit")) -> Path:
        frame = pd.DataFrame(rows, columns=["timestamp", "user", "activity"] + CHANNELS)
        frame.to_csv(root / "alice.csv", index=False, lineterminator="\n")
        manifest = {"sample_rate_hz": 20.0, "label_names": list(label_names), "files": {"alice": "alice.csv"}}
        (root / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")
        return root

    def test_rows_sorted_and_unlabelled_dropped(self, tmp_path):
        """Rows are ordered by timestamp and rows with an empty activity are skipped."""
        rows = [
            [2, "alice", "sit"] + [2.0] * 6,
            [0, "alice", "walk"] + [0.0] * 6,
            [1, "alice", ""] + [1.0] * 6,
        ]
        recordings = load_dataset(self.write(tmp_path, rows), "generic-csv")

        assert [r.activity.tolist() for r in recordings] == [[0], [1]]
        assert [r.samples[0, 0] for r in recordings] == [0.0, 2.0]
        assert recordings[0].sample_rate_hz == 20.0

    def test_no_window_spans_an_unlabelled_gap(self, tmp_path):
        """60 walk rows, 300 blank rows and 60 walk rows give windows inside either walk segment only."""
        # 1. A file whose two walk segments are separated by unlabelled rows
        rows = ([[t, "alice", "walk"] + [0.0] * 6 for t in range(60)]
                + [[t, "alice", ""] + [5.0] * 6 for t in range(60, 360)]
                + [[t, "alice", "walk"] + [1.0] * 6 for t in range(360, 420)])
        recordings = load_dataset(self.write(tmp_path, rows), "generic-csv")

        # 2. The gap splits the file into two recordings
        assert [len(r.samples) for r in recordings] == [60, 60]
        assert recordings[0].recording_id != recordings[1].recording_id

        # 3. 2 s windows at 20 Hz with 50% overlap: two per segment, none mixing the segments
        windows = [w for r in recordings for w in segment_windows(r, window_seconds=2.0, overlap=0.5)]
        assert len(windows) == 4, f"expected 4 windows, got {len(windows)}"
        for window in windows:
            assert np.unique(window.values).size == 1, f"window {window.window_id} spans the gap"

    def test_unknown_label(self, tmp_path):
        """An activity outside the declared label set is a schema error."""
        rows = [[0, "alice", "jog"] + [0.0] * 6]
        with pytest.raises(SchemaError):
            load_dataset(self.write(tmp_path, rows), "generic-csv")

    def test_missing_column(self, tmp_path):
        """Every channel column is required."""
        pd.DataFrame({"timestamp": [0], "user": ["alice"], "activity": ["walk"]}).to_csv(
            tmp_path / "alice.csv", index=False)
        manifest = {"sample_rate_hz": 20.0, "label_names": ["walk"], "files": {"alice": "alice.csv"}}
        (tmp_path / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")
        with pytest.raises(SchemaError):
            load_dataset(tmp_path, "generic-csv")

    def test_invalid_manifest(self, tmp_path):
        """A manifest without files is rejected."""
        (tmp_path / "manifest.json").write_text(json.dumps({"sample_rate_hz": 20.0}), encoding="utf-8")
        with pytest.raises(SchemaError):
            load_dataset(tmp_path, "generic-csv")


class TestLoadDatasetErrors:
    """Errors shared by every schema."""

    def test_missing_path(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path / "missing", "oppt")

    def test_unknown_schema(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_dataset(tmp_path, "wisdm")

    def test_no_recordings(self, tmp_path):
        """An existing but empty directory holds no recordings."""
        with pytest.raises(DataError):
            load_dataset(tmp_path, "pamap2")
