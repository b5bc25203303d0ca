"""
Tests for metrics, evaluation, the source-only baseline and report files.
"""
import json

import numpy as np
import pandas as pd
import pytest

from dgdata.evaluation import (
    THREADS_ENV,
    build_manifest,
    combine_metrics,
    confusion_matrix,
    dump_features,
    evaluate,
    metrics_from_confusion,
    report,
    source_only_baseline,
    split_digests,
    worker_count,
)
from dgdata.exceptions import ConfigurationError, DataError, LabelError, ReportError
from dgdata.trainer import train


@pytest.fixture
def trained(tiny_train_config, tiny_split):
    """A one-epoch model with its history."""
    return train(tiny_train_config.model_copy(update={"epochs": 1}), tiny_split)


class TestConfusionMatrix:
    """Counting and derived metrics."""

    def test_counts_rows_true_columns_predicted(self):
        cm = confusion_matrix([0, 1, 1, 2, 0], [0, 1, 2, 2, 1], 3, ["a", "b", "c"])
        assert cm.counts == [[1, 0, 0], [1, 1, 0], [0, 1, 1]]
        assert cm.label_names == ["a", "b", "c"]

    def test_absent_class_keeps_its_row(self):
        """A class never seen nor predicted still has a zero row and column."""
        cm = confusion_matrix([0, 0], [0, 0], 3)
        assert cm.counts == [[2, 0, 0], [0, 0, 0], [0, 0, 0]]
        assert cm.label_names == ["0", "1", "2"]

    def test_metrics_identities(self):
        """Accuracy is trace / total and empty rows or columns give zero precision or recall."""
        metrics = metrics_from_confusion(confusion_matrix([0, 1, 1, 0], [0, 1, 0, 0], 3))
        assert metrics.accuracy == pytest.approx(0.75)
        assert metrics.recall == pytest.approx([2 / 3, 1.0, 0.0])
        assert metrics.precision == pytest.approx([1.0, 0.5, 0.0])
        assert metrics.support == [3, 1, 0]

    def test_perfect_predictions(self):
        metrics = metrics_from_confusion(confusion_matrix([2, 0, 1], [2, 0, 1], 3))
        assert metrics.accuracy == 1.0
        assert metrics.precision == [1.0, 1.0, 1.0]

    @pytest.mark.parametrize("preds,truths", [([0, 3], [0, 1]), ([0, 1], [-1, 1]), ([0], [0, 1])])
    def test_invalid_labels(self, preds, truths):
        with pytest.raises(LabelError):
            confusion_matrix(preds, truths, 3)

    def test_combine_sums_counts(self):
        """Combining runs pools their confusion counts."""
        a = metrics_from_confusion(confusion_matrix([0, 1], [0, 0], 2))
        b = metrics_from_confusion(confusion_matrix([1, 1], [1, 1], 2))
        combined = combine_metrics([a, b])
        assert combined.confusion.counts == [[1, 1], [0, 2]]
        assert combined.accuracy == pytest.approx(0.75)

    def test_combine_nothing(self):
        with pytest.raises(DataError):
            combine_metrics([])


class TestEvaluate:
    """Inference on labelled target windows."""

    def test_evaluate_does_not_change_the_model(self, trained, tiny_split):
        """Parameters, batch-norm statistics and module modes are untouched."""
        model, _ = trained
        before = model.state_dict()
        modes = {name: m.training for name, m in model.modules.items()}

        metrics = evaluate(model, tiny_split.target_test)

        after = model.state_dict()
        for name in before:
            np.testing.assert_array_equal(before[name], after[name], err_msg=name)
        assert {name: m.training for name, m in model.modules.items()} == modes
        assert sum(metrics.support) == len(tiny_split.target_test)

    def test_thread_count_does_not_change_results(self, trained, tiny_split, monkeypatch):
        model, _ = trained
        monkeypatch.setenv(THREADS_ENV, "1")
        single = evaluate(model, tiny_split.target_test)
        monkeypatch.setenv(THREADS_ENV, "3")
        threaded = evaluate(model, tiny_split.target_test)
        assert single.model_dump() == threaded.model_dump()

    @pytest.mark.parametrize("value", ["zero", "0"])
    def test_invalid_thread_count(self, monkeypatch, value):
        monkeypatch.setenv(THREADS_ENV, value)
        with pytest.raises(ConfigurationError):
            worker_count()

    def test_empty_windows(self, trained):
        model, _ = trained
        with pytest.raises(DataError):
            evaluate(model, [])

    def test_unlabelled_window(self, trained, tiny_split):
        model, _ = trained
        hidden = [tiny_split.target_test[0].model_copy(update={"activity": None})]
        with pytest.raises(DataError):
            evaluate(model, hidden)

    def test_source_only_baseline(self, tiny_train_config, tiny_split):
        """The baseline reports metrics over every target_test window."""
        metrics = source_only_baseline(tiny_train_config.model_copy(update={"epochs": 1}), tiny_split)
        assert sum(metrics.support) == len(tiny_split.target_test)
        assert 0.0 <= metrics.accuracy <= 1.0


class TestReport:
    """Files written for a run."""

    def test_report_files(self, trained, tiny_split, tiny_train_config, tmp_path):
        """metrics.json, confusion.csv, history.csv and manifest.json are written and consistent."""
        model, history = trained
        metrics = evaluate(model, tiny_split.target_test)
        manifest = build_manifest("report", {"train": tiny_train_config.model_dump(mode="json")}, tiny_split,
                                  {"run": 0, "train": 3}, 1.5)

        written = report(metrics, history, tmp_path, manifest)

        assert sorted(p.name for p in written) == ["confusion.csv", "history.csv", "manifest.json", "metrics.json"]
        saved = json.loads((tmp_path / "metrics.json").read_text())
        assert saved["accuracy"] == pytest.approx(metrics.accuracy)
        confusion = pd.read_csv(tmp_path / "confusion.csv", index_col=0)
        assert list(confusion.index) == tiny_split.label_names
        assert list(confusion.columns) == tiny_split.label_names
        assert confusion.to_numpy().tolist() == metrics.confusion.counts
        assert pd.read_csv(tmp_path / "history.csv")["epoch"].tolist() == [1]
        manifest_json = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest_json["dataset_digests"] == split_digests(tiny_split)

    def test_report_is_deterministic(self, trained, tiny_split, tmp_path):
        """Writing the same metrics twice yields identical bytes."""
        model, history = trained
        metrics = evaluate(model, tiny_split.target_test)
        report(metrics, history, tmp_path / "a")
        report(metrics, history, tmp_path / "b")
        for name in ("metrics.json", "confusion.csv", "history.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_baseline_report_has_no_history(self, trained, tiny_split, tmp_path):
        model, _ = trained
        written = report(evaluate(model, tiny_split.target_test), None, tmp_path)
        assert sorted(p.name for p in written) == ["confusion.csv", "metrics.json"]

    def test_unwritable_directory(self, trained, tiny_split, tmp_path):
        """A file standing where the output directory should be is a report error."""
        model, history = trained
        blocker = tmp_path / "blocked"
        blocker.write_text("not a directory")
        with pytest.raises(ReportError):
            report(evaluate(model, tiny_split.target_test), history, blocker / "out")

    def test_digests_change_with_values(self, tiny_split):
        """Partition digests are stable and sensitive to window values."""
        digests = split_digests(tiny_split)
        assert digests == split_digests(tiny_split)
        changed = tiny_split.model_copy(update={"target_test": [
            tiny_split.target_test[0].model_copy(update={"values": tiny_split.target_test[0].values + 1.0})
        ] + list(tiny_split.target_test[1:])})
        other = split_digests(changed)
        assert other["target_test"] != digests["target_test"]
        assert other["source_train"] == digests["source_train"]

    def test_features_dump(self, trained, tiny_split, tmp_path):
        """features.npz holds raw and latent rows for source_train followed by target_test."""
        model, _ = trained
        path = dump_features(model, tiny_split, tmp_path / "features.npz")
        with np.load(path) as npz:
            n = tiny_split.n_source + len(tiny_split.target_test)
            assert npz["raw"].shape == (n, 6 * 30)
            assert npz["latent"].shape == (n, model.config.architecture.latent_dim)
            assert npz["domain"].tolist() == [0] * tiny_split.n_source + [1] * len(tiny_split.target_test)
