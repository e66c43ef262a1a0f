import math

import numpy as np
import pytest

dm = pytest.importorskip("dualmatch")


def test_metrics_hand_cases():
    assert dm.average_precision([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) == pytest.approx(5 / 6, abs=1e-15)
    assert dm.ndcg_at_k([0.9, 0.1], [0, 1], 2) == pytest.approx(1 / math.log2(3), abs=1e-15)


def test_typed_errors_surface_with_codes():
    with pytest.raises(dm.DualmatchError) as info:
        dm.average_precision([0.5, 0.4], [0, 0])
    assert info.value.code == "NoPositives"
    with pytest.raises(dm.DualmatchError):
        dm.oracle_y(6, 0.5, 0.5)


def test_synthetic_rows_follow_the_generator():
    rows = dm.generate_synthetic(50, 3)
    assert rows.shape == (50, 6)
    for c, n1, n2, y1, y2, y3 in rows[:5]:
        assert (y1, y2, y3) == tuple(dm.oracle_y(int(c), n1, n2))
    assert np.array_equal(rows, dm.generate_synthetic(50, 3))


def test_bisecting_kmeans_singletons():
    x = np.random.default_rng(0).normal(size=(12, 2))
    out = dm.bisecting_kmeans(x, 12)
    assert sorted(out["labels"]) == list(range(12))
    assert out["total_sse"] == 0.0


def test_cli_train_and_score_round_trip(tmp_path):
    data = tmp_path / "data"
    run = tmp_path / "run"
    code, out, err = dm.run_cli(["synth", "--n", "300", "--seed", "4", "--out", str(data)])
    assert code == 0, err
    code, _, err = dm.run_cli(["train", "--data", str(data), "--epochs", "2", "--out", str(run)])
    assert code == 0, err
    model = dm.Model.load(str(run / "model.ckpt"))
    xa = np.random.default_rng(1).normal(size=(4, model.input_width_a))
    xb = np.random.default_rng(2).normal(size=(3, model.input_width_b))
    dm.reset_encoder_rows_forwarded()
    logits, probs = model.score(xa, xb)
    assert dm.encoder_rows_forwarded() == 7
    assert logits.shape == (4, 3)
    assert np.all((probs > 0) & (probs < 1))
    assert model.embed(xa, "A").shape == (4, model.embed_dim)
    code, _, _ = dm.run_cli(["train", "--bogus"])
    assert code == 1
