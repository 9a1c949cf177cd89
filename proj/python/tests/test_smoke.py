import math

import pytest

import qrec


def test_quantize_and_distribution():
    assert qrec.bin_count() == 13
    assert qrec.quantize_dwell(0.0) == 0
    assert qrec.quantize_dwell(3.0) == 2
    assert qrec.quantize_dwell(1e9) == 12
    t, q = qrec.dwell_distribution([0.0, 3.0, 3.0, 7.0])
    assert len(t) == 13
    assert math.isclose(sum(t), 1.0)
    assert math.isclose(q, (0 + 2 + 2 + 3) / 4)
    with pytest.raises(qrec.InputError):
        qrec.quantize_dwell(-1.0)


def test_quality_table_filters_by_clicks():
    records = [("u%d" % i, "N1", 100.0) for i in range(10)] + [("u0", "N2", 5.0)]
    table = qrec.quality_table(records)
    assert set(table) == {"N1"}
    assert table["N1"] == qrec.quantize_dwell(100.0)


def test_metrics():
    assert qrec.auc([0.9, 0.1, 0.5], [1, 0, 0]) == 1.0
    assert qrec.auc([0.1, 0.2], [0, 0]) is None
    assert math.isclose(qrec.mrr([0.1, 0.9, 0.5], [1, 0, 0]), 1.0 / 3.0)
    assert qrec.ndcg([0.9, 0.1], [1, 0], 5) == 1.0
    assert qrec.qs_at_k([3.0, 2.0, 1.0], [4.0, None, 8.0], 2) == 4.0
    assert qrec.lq_at_k([3.0, 2.0, 1.0], [1.0, 2.0, 9.0], 3, 2.0) == 2.0
    assert math.isclose(qrec.pearson([1, 2, 3], [2, 4, 7]), 0.9933992677987828)


def test_config_errors():
    with pytest.raises(qrec.ConfigError):
        qrec.generate_dataset("/nonexistent", {"no_such_key": "1"})
    assert "lambda=2" in qrec.default_config()


def test_small_pipeline(tmp_path):
    data = tmp_path / "data"
    manifest = qrec.generate_dataset(
        str(data),
        {"n_news": "120", "n_users": "80", "n_impressions": "800", "vocab_size": "300", "candidates_per_impression": "8"},
    )
    assert "n_news=120" in manifest
    config = {
        "embed_dim": "8", "hidden_dim": "8", "heads": "2", "epochs": "1",
        "max_title": "10", "max_body": "20", "max_history": "8", "lr": "0.002",
    }
    qrec.train(str(data), str(tmp_path / "run"), config)
    report = qrec.evaluate(str(data), str(tmp_path / "run"))
    assert 0.0 <= report["auc"] <= 1.0
    assert report["impressions"] > 0
    assert report == qrec.evaluate(str(data), str(tmp_path / "run"))
    ranked = qrec.score_news(str(data), str(tmp_path / "run"))
    assert len(ranked) == 120
    predicted = [r[1] for r in ranked]
    assert predicted == sorted(predicted, reverse=True)
