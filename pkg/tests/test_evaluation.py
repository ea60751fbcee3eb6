import logging

import numpy as np
import pytest

from simcse_forge.evaluation import (MetricReport, UndefinedMetricError,
                                     accuracy, emit_report, parse_report_tsv,
                                     pearson, score_histogram,
                                     similarity_heatmap)


# -- accuracy -----------------------------------------------------------------------

def test_accuracy_basic():
    assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert accuracy([1, 2, 3, 4], [1, 2, 0, 0]) == 0.5
    assert accuracy([0], [1]) == 0.0


def test_accuracy_errors():
    with pytest.raises(ValueError):
        accuracy([], [])
    with pytest.raises(ValueError):
        accuracy([1, 2], [1])


# -- pearson -----------------------------------------------------------------------

def test_pearson_perfect_lines():
    x = [1.0, 2.0, 3.0, 4.0, 5.0]
    assert pearson(x, x) == pytest.approx(1.0, abs=1e-12)
    y = [-2.0 * v + 7.0 for v in x]
    assert pearson(x, y) == pytest.approx(-1.0, abs=1e-12)


def test_pearson_matches_numpy_reference():
    rng = np.random.default_rng(20240817)
    for _ in range(1000):
        x = rng.normal(size=100)
        y = rng.normal(size=100)
        assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)


def test_pearson_affine_invariance():
    rng = np.random.default_rng(3)
    x = rng.normal(size=50)
    y = rng.normal(size=50)
    r = pearson(x, y)
    assert pearson(3.0 * x + 11.0, y) == pytest.approx(r, abs=1e-12)
    assert pearson(x, 0.25 * y - 4.0) == pytest.approx(r, abs=1e-12)
    assert pearson(-2.0 * x, y) == pytest.approx(-r, abs=1e-12)


def test_pearson_paired_shuffle_invariance():
    rng = np.random.default_rng(4)
    x = rng.normal(size=40)
    y = rng.normal(size=40)
    perm = rng.permutation(40)
    assert pearson(x[perm], y[perm]) == pytest.approx(pearson(x, y), abs=1e-12)


def test_pearson_errors():
    with pytest.raises(ValueError):
        pearson([1.0], [2.0])
    with pytest.raises(ValueError):
        pearson([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(UndefinedMetricError):
        pearson([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(UndefinedMetricError):
        pearson([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])


# -- histogram / heatmap ---------------------------------------------------------------

def test_score_histogram_bins():
    # width 5/6: 0.4 -> bin 0, 1.2 -> bin 1, 4.9 and the top edge 5.0 -> bin 5
    counts = score_histogram([0.4, 1.2, 4.9, 5.0])
    assert counts.tolist() == [1, 1, 0, 0, 0, 2]


def test_score_histogram_clips_and_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="simcse_forge.evaluation"):
        counts = score_histogram([-1.0, 6.0])
    assert counts.tolist() == [1, 0, 0, 0, 0, 1]
    assert any("clamped" in r.message for r in caplog.records)


def test_heatmap_perfect_predictions_are_diagonal():
    scores = [0.1, 0.9, 1.7, 2.5, 3.4, 4.2, 5.0]
    grid, _ = similarity_heatmap(scores, scores)
    assert int(np.trace(grid)) == len(scores)
    assert int(grid.sum()) == len(scores)


def test_heatmap_constant_predictions_fill_one_column():
    true = [0.2, 1.4, 2.6, 3.8, 4.9]
    grid, _ = similarity_heatmap(true, [2.5] * 5)
    col = int(np.floor(2.5 / 5.0 * 6))
    assert grid[:, col].sum() == 5
    assert grid.sum() == 5
    mask = np.ones(6, dtype=bool)
    mask[col] = False
    assert grid[:, mask].sum() == 0


def test_heatmap_conserves_counts_and_marginals():
    rng = np.random.default_rng(11)
    true = rng.uniform(0.0, 5.0, size=200)
    pred = rng.uniform(0.0, 5.0, size=200)
    grid, _ = similarity_heatmap(true, pred)
    assert int(grid.sum()) == 200
    # row marginal = histogram of true scores; column marginal = predictions
    assert grid.sum(axis=1).tolist() == score_histogram(true).tolist()
    assert grid.sum(axis=0).tolist() == score_histogram(pred).tolist()


def test_heatmap_csv_shape_and_contents():
    true = [0.1, 2.6, 4.8]
    pred = [0.2, 2.4, 4.9]
    grid, csv_text = similarity_heatmap(true, pred)
    lines = csv_text.strip().split("\n")
    assert len(lines) == 7
    assert lines[0].startswith("true\\pred,")
    assert lines[0].count(",") == 6
    parsed = [list(map(int, line.split(",")[1:])) for line in lines[1:]]
    assert parsed == grid.tolist()


def test_heatmap_errors():
    with pytest.raises(ValueError):
        similarity_heatmap([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        similarity_heatmap([1.0], [1.0], bins=0)


# -- reports -----------------------------------------------------------------------

def test_metric_report_validation():
    MetricReport("m", "sts", "pearson", -1.0, 10)
    MetricReport("m", "sst", "accuracy", 1.0, 10)
    with pytest.raises(ValueError):
        MetricReport("m", "sst", "accuracy", 1.2, 10)
    with pytest.raises(ValueError):
        MetricReport("m", "sts", "pearson", -1.5, 10)
    with pytest.raises(ValueError):
        MetricReport("m", "sts", "rmse", 0.5, 10)
    with pytest.raises(ValueError):
        MetricReport("m", "sts", "pearson", 0.5, 0)


def test_emit_report_adds_overall_mean_row():
    rows = [MetricReport("multitask", "sst", "accuracy", 0.533, 100),
            MetricReport("multitask", "paraphrase", "accuracy", 0.798, 100),
            MetricReport("multitask", "sts", "pearson", 0.788, 100)]
    text = emit_report(rows)
    lines = text.strip().split("\n")
    assert lines[0] == "model\ttask\tmetric\tvalue\tn\tstage"
    assert len(lines) == 5      # header + 3 rows + overall
    overall = [l for l in lines if "\toverall\t" in l]
    assert len(overall) == 1
    value = float(overall[0].split("\t")[3])
    assert value == pytest.approx((0.533 + 0.798 + 0.788) / 3, abs=1e-12)


def test_emit_report_single_row_has_no_overall():
    text = emit_report([MetricReport("solo", "sst", "accuracy", 0.9, 10)])
    assert "overall" not in text


def test_emit_report_stagewise_rows_not_averaged():
    # one metric per stage: an overall across stages would be meaningless
    rows = [MetricReport("two_tier", "sts", "pearson", 0.5, 10, stage=s)
            for s in ("baseline", "unsup_simcse", "sup_simcse")]
    assert "overall" not in emit_report(rows)


def test_report_tsv_roundtrip_full_precision():
    rows = [MetricReport("a", "sts", "pearson", 0.1 + 0.2, 7, stage="transfer"),
            MetricReport("b", "sst", "accuracy", 2.0 / 3.0, 99)]
    back = parse_report_tsv(emit_report(rows))
    assert back == rows


def test_emit_report_pretty_format():
    rows = [MetricReport("model-x", "sst", "accuracy", 0.75, 100),
            MetricReport("model-x", "sts", "pearson", 0.5, 100)]
    text = emit_report(rows, format="pretty")
    assert "0.7500" in text and "model-x" in text and "overall" in text
    with pytest.raises(ValueError):
        emit_report(rows, format="json")


def test_emit_report_empty_is_header_only():
    assert emit_report([]) == "model\ttask\tmetric\tvalue\tn\tstage\n"
