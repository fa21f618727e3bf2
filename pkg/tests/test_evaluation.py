import numpy as np
import pytest
from PIL import Image

from paddydoc.errors import (
    ComparisonError,
    ConfigurationError,
    EvaluationError,
    PlotError,
)
from paddydoc.evaluation import (
    ComparisonRow,
    DiagnosticThresholds,
    EvalReport,
    compare,
    diagnose,
    evaluate,
    make_history_figure,
    plot_history,
    render_comparison,
    rows_from_json,
)
from paddydoc.training import EpochRecord, TrainingHistory

from oracles import brute_force_accuracy, brute_force_confusion

# published accuracy table: (backbone, train accuracy, validation accuracy)
TABLE2 = [
    ("resnet50", 0.87, 0.75),
    ("densenet121", 1.00, 0.90),
    ("vgg16", 0.76, 0.84),
    ("mobilenetv2", 0.94, 0.9583),
    ("inceptionv3", 0.96, 0.86),
    ("efficientnetb0", 0.33, 0.33),
    ("resnet101", 0.58, 0.54),
    ("vgg19", 0.98, 0.70),
    ("nasnet", 1.00, 0.80),
    ("densenet169", 1.00, 0.91),
]


def _stream_from_labels(true_labels, num_classes=3):
    """One-batch stream whose images encode the sample index."""
    n = len(true_labels)
    images = np.arange(n, dtype=np.float32).reshape(n, 1, 1, 1)
    labels = np.eye(num_classes, dtype=np.float32)[true_labels]
    return [(images, labels)]


def _table_predictor(predicted_labels, num_classes=3):
    table = np.eye(num_classes, dtype=np.float32)[predicted_labels]

    def predict(images):
        idx = images.reshape(len(images)).astype(int)
        return table[idx]

    return predict


class TestEvaluate:
    def test_constant_predictor_on_balanced_set(self):
        trues = [0] * 10 + [1] * 10 + [2] * 10
        stream = _stream_from_labels(trues)
        constant = lambda images: np.tile(
            np.array([1.0, 0.0, 0.0], dtype=np.float32), (len(images), 1)
        )
        report = evaluate(constant, stream, split="val")
        assert report.accuracy == pytest.approx(1 / 3)
        confusion = np.array(report.confusion)
        assert confusion[:, 0].sum() == 30
        assert confusion[:, 1:].sum() == 0
        assert report.precision_defined == [True, False, False]

    def test_perfect_predictor(self):
        trues = [0, 1, 2, 0, 1, 2, 1, 2, 0]
        report = evaluate(_table_predictor(trues), _stream_from_labels(trues))
        assert report.accuracy == 1.0
        confusion = np.array(report.confusion)
        assert np.all(confusion == np.diag(np.diag(confusion)))
        assert report.per_class_recall == [1.0, 1.0, 1.0]

    def test_hand_labeled_fixture_matches_brute_force(self):
        trues = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]
        preds = [0, 1, 0, 2, 1, 1, 0, 1, 2, 2, 1, 2]
        report = evaluate(_table_predictor(preds), _stream_from_labels(trues))
        assert report.accuracy == brute_force_accuracy(trues, preds)
        assert report.confusion == brute_force_confusion(trues, preds)
        assert report.n_samples == 12
        # accuracy equals trace/n exactly
        assert report.accuracy == np.trace(np.array(report.confusion)) / 12

    def test_confusion_row_sums_are_class_counts(self):
        rng = np.random.default_rng(0)
        trues = rng.integers(0, 3, 60).tolist()
        preds = rng.integers(0, 3, 60).tolist()
        report = evaluate(_table_predictor(preds), _stream_from_labels(trues))
        row_sums = np.array(report.confusion).sum(axis=1)
        np.testing.assert_array_equal(row_sums, np.bincount(trues, minlength=3))

    def test_argmax_tie_breaks_to_lowest_index(self):
        stream = [(np.zeros((1, 1, 1, 1), dtype=np.float32), np.eye(3, dtype=np.float32)[[1]])]
        tied = lambda images: np.full((len(images), 3), 1 / 3, dtype=np.float32)
        report = evaluate(tied, stream)
        assert np.array(report.confusion)[1, 0] == 1  # predicted class 0

    def test_empty_stream(self):
        with pytest.raises(EvaluationError):
            evaluate(lambda images: images, [])

    def test_report_round_trip(self, tmp_path):
        trues = [0, 1, 2]
        report = evaluate(_table_predictor(trues), _stream_from_labels(trues), "x", "val")
        path = report.save(tmp_path / "eval_val.json")
        assert EvalReport.load(path) == report


class TestDiagnose:
    def test_golden_flags_from_published_table(self):
        overfit = set()
        low_perf = set()
        for name, train_acc, val_acc in TABLE2:
            flags = diagnose(train_acc, val_acc)
            if "overfit" in flags:
                overfit.add(name)
            if "low_performance" in flags:
                low_perf.add(name)
        assert overfit == {"vgg19", "nasnet"}
        assert low_perf == {"efficientnetb0", "resnet101"}

    def test_example_rows(self):
        assert diagnose(1.00, 0.80) == {"overfit"}
        assert diagnose(0.58, 0.54) == {"low_performance"}
        assert diagnose(0.70, 0.70) == set()
        assert diagnose(0.33, 0.33) == {"low_performance"}

    def test_threshold_boundaries(self):
        assert diagnose(0.80, 0.65) == {"overfit"}  # gap exactly 0.15
        assert diagnose(0.60, 0.60) == {"low_performance"}  # val exactly at cutoff
        assert diagnose(0.7449, 0.61) == set()

    def test_custom_thresholds(self):
        strict = DiagnosticThresholds(overfit_gap_min=0.05, low_perf_val_max=0.9)
        assert diagnose(0.96, 0.86, strict) == {"overfit", "low_performance"}

    def test_input_validation(self):
        with pytest.raises(ConfigurationError):
            diagnose(1.2, 0.5)
        with pytest.raises(ConfigurationError):
            DiagnosticThresholds(low_perf_val_max=0.2)


def _report(name, split, accuracy):
    return EvalReport(
        backbone_name=name,
        split=split,
        accuracy=accuracy,
        loss=0.5,
        confusion=[[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        per_class_precision=[1.0, 1.0, 1.0],
        per_class_recall=[1.0, 1.0, 1.0],
        precision_defined=[True, True, True],
        recall_defined=[True, True, True],
        n_samples=3,
    )


def _table2_pairs():
    return [
        (_report(name, "train", train_acc), _report(name, "val", val_acc))
        for name, train_acc, val_acc in TABLE2
    ]


class TestCompare:
    def test_published_table_rows(self):
        rows = compare(_table2_pairs())
        assert [r.backbone_name for r in rows] == [name for name, _, _ in TABLE2]
        by_name = {r.backbone_name: r for r in rows}
        mob = by_name["mobilenetv2"]
        assert mob.gap == pytest.approx(-0.0183)
        assert mob.flags == ()
        assert by_name["vgg19"].flags == ("overfit",)
        assert by_name["nasnet"].flags == ("overfit",)
        assert by_name["efficientnetb0"].flags == ("low_performance",)
        assert by_name["resnet101"].flags == ("low_performance",)
        assert by_name["densenet121"].flags == ()
        assert by_name["resnet50"].flags == ()

    def test_gap_is_exact_difference(self):
        rows = compare(_table2_pairs())
        for row, (_, train_acc, val_acc) in zip(rows, TABLE2):
            assert row.gap == train_acc - val_acc

    def test_missing_split_names_backbone(self):
        pairs = [(_report("vgg16", "train", 0.8), None)]
        with pytest.raises(ComparisonError, match="vgg16"):
            compare(pairs)
        pairs = [(_report("vgg16", "val", 0.8), _report("vgg16", "val", 0.8))]
        with pytest.raises(ComparisonError, match="vgg16"):
            compare(pairs)


class TestRender:
    def test_csv_shape(self):
        text = render_comparison(compare(_table2_pairs()), "csv")
        lines = text.strip().split("\n")
        assert len(lines) == 11
        assert lines[0] == "backbone,train_accuracy,val_accuracy,gap,flags"
        assert lines[8].startswith("vgg19,")
        assert lines[8].endswith("overfit")

    def test_markdown_mirrors_table_structure(self):
        text = render_comparison(compare(_table2_pairs()), "markdown")
        lines = text.strip().split("\n")
        assert len(lines) == 12  # header + separator + 10 rows
        assert "0.9583" in text
        assert "low_performance" in text

    def test_deterministic_bytes(self):
        rows = compare(_table2_pairs())
        for fmt in ("markdown", "csv", "json"):
            assert render_comparison(rows, fmt) == render_comparison(rows, fmt)

    def test_json_round_trip(self):
        rows = compare(_table2_pairs())
        assert rows_from_json(render_comparison(rows, "json")) == rows

    def test_unknown_format(self):
        with pytest.raises(ConfigurationError):
            render_comparison(compare(_table2_pairs()), "yaml")

    def test_empty_rows(self):
        with pytest.raises(ConfigurationError):
            render_comparison([], "csv")


def _history(n_epochs, name="densenet121", seed=42):
    records = [
        EpochRecord(
            epoch=i,
            train_accuracy=min(0.5 + 0.05 * i, 1.0),
            train_loss=max(2.0 - 0.2 * i, 0.01),
            val_accuracy=min(0.48 + 0.045 * i, 1.0),
            val_loss=max(2.1 - 0.18 * i, 0.05),
        )
        for i in range(1, n_epochs + 1)
    ]
    return TrainingHistory(
        backbone_name=name,
        seed=seed,
        records=records,
        stopped_epoch=n_epochs,
        best_epoch=n_epochs,
        wall_time_s=1.0,
    )


class TestPlots:
    def test_two_panel_plot_written_and_decodable(self, tmp_path):
        out = plot_history(_history(9), tmp_path / "history_densenet121_42.png")
        assert out.exists()
        with Image.open(out) as img:
            img.verify()

    def test_accuracy_panel_covers_expected_range(self):
        fig = make_history_figure(_history(9))
        try:
            ax_acc, ax_loss = fig.axes
            low, high = ax_acc.get_ylim()
            assert low <= 0.5 and high >= 1.0
            assert ax_acc.get_xlabel() == "epoch"
            assert ax_acc.get_ylabel() == "accuracy"
            assert ax_loss.get_ylabel() == "loss"
            assert len(ax_acc.lines) == 2 and len(ax_loss.lines) == 2
            assert ax_acc.get_legend() is not None
        finally:
            import matplotlib.pyplot as plt

            plt.close(fig)

    def test_single_epoch_plot(self, tmp_path):
        out = plot_history(_history(1), tmp_path / "one.png")
        with Image.open(out) as img:
            assert img.size[0] > 0

    def test_empty_history_raises(self, tmp_path):
        with pytest.raises(PlotError):
            plot_history(_history(0), tmp_path / "none.png")
