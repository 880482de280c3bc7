"""PSNR/MSE, EMA smoothing, metric log, and summary tables."""

import math

import numpy as np
import pytest

from fastei import metrics


def test_psnr_identical_images_hit_cap():
    x = np.random.default_rng(0).uniform(size=(8, 8))
    assert metrics.psnr(x, x) == 200.0


def test_psnr_direct_arithmetic():
    # constant error of 0.1 -> MSE 0.01 -> 20 dB at peak 1
    ref = np.zeros((4, 4))
    x = np.full((4, 4), 0.1)
    assert abs(metrics.psnr(x, ref) - 20.0) <= 1e-12


def test_psnr_reimplementation_oracle():
    rng = np.random.default_rng(1)
    x, ref = rng.uniform(size=(16, 16)), rng.uniform(size=(16, 16))
    expected = 10.0 * math.log10(1.0 / np.mean((x - ref) ** 2))
    assert abs(metrics.psnr(x, ref) - expected) <= 1e-10


def test_psnr_constant_shift_invariance():
    rng = np.random.default_rng(2)
    x, ref = rng.uniform(size=(8, 8)), rng.uniform(size=(8, 8))
    assert metrics.psnr(x + 0.3, ref + 0.3) == pytest.approx(metrics.psnr(x, ref), abs=1e-12)


def test_psnr_validation():
    with pytest.raises(ValueError):
        metrics.psnr(np.zeros((2, 2)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        metrics.psnr(np.zeros((2, 2)), np.zeros((2, 2)), peak=0.0)


def test_ema_first_call_passes_through():
    new = np.array([1.0, 2.0])
    assert np.array_equal(metrics.ema_update(None, new, 0.99), new)


def test_ema_decay_zero_returns_new():
    avg, new = np.array([5.0]), np.array([7.0])
    assert np.array_equal(metrics.ema_update(avg, new, 0.0), new)


def test_ema_constant_stream_fixed_point():
    c = np.array([0.4, 0.6])
    avg = None
    for _ in range(50):
        avg = metrics.ema_update(avg, c, 0.9)
    np.testing.assert_allclose(avg, c, atol=1e-12)


def test_ema_alternating_stream_converges_to_half():
    avg = None
    for i in range(1000):
        avg = metrics.ema_update(avg, np.array([float(i % 2)]), 0.99)
    assert abs(float(avg[0]) - 0.5) <= 0.02


def test_ema_validation():
    with pytest.raises(ValueError):
        metrics.ema_update(None, np.zeros(2), 1.0)


def _row(step, wall=None, **over):
    row = dict(
        step=step,
        epoch=0,
        wall_time_s=wall if wall is not None else float(step),
        loss_mc=1.0,
        loss_eq=2.0,
        loss_total=201.0,
        mse_train=0.01,
        psnr_raw=20.0,
        psnr_ema=21.0,
        psnr_train=21.0,
    )
    row.update(over)
    return row


def test_metric_log_append_and_columns():
    log = metrics.MetricLog(run_id="r1", method="fei")
    log.append(**_row(1))
    log.append(**_row(2))
    assert log.column("step") == [1, 2]


def test_metric_log_rejects_nonincreasing_steps():
    log = metrics.MetricLog(run_id="r1", method="fei")
    log.append(**_row(5))
    with pytest.raises(ValueError):
        log.append(**_row(5))


def test_metric_log_rejects_time_reversal():
    log = metrics.MetricLog(run_id="r1", method="fei")
    log.append(**_row(1, wall=10.0))
    with pytest.raises(ValueError):
        log.append(**_row(2, wall=9.0))


def test_metric_log_rejects_missing_columns():
    log = metrics.MetricLog(run_id="r1", method="fei")
    with pytest.raises(ValueError):
        log.append(step=1, epoch=0)


def test_metric_log_csv_roundtrip(tmp_path):
    log = metrics.MetricLog(run_id="r1", method="fei")
    log.append(**_row(1, loss_mc=1 / 3, psnr_raw=math.pi))
    log.append(**_row(2))
    path = tmp_path / "metrics.csv"
    log.write_csv(path)
    rows = metrics.read_log_csv(path)
    assert rows[0]["loss_mc"] == 1 / 3
    assert rows[0]["psnr_raw"] == math.pi
    assert rows[1]["step"] == 2


def test_summarize_single_score():
    row = metrics.summarize("fbp", [30.0])
    assert row.formatted() == "30.00 ± 0.00"


def test_summarize_population_std():
    row = metrics.summarize("ei", [32.0, 34.0])
    assert row.formatted() == "33.00 ± 1.00"
    assert row.mean == 33.0 and row.std == 1.0


def test_summarize_empty_rejected():
    with pytest.raises(ValueError):
        metrics.summarize("ei", [])


def test_summary_csv_and_table(tmp_path):
    rows = [metrics.summarize("ei", [30.0, 32.0]), metrics.summarize("fei", [33.0])]
    path = tmp_path / "summary.csv"
    metrics.write_summary_csv(rows, path)
    text = path.read_text()
    assert "ei" in text and "fei" in text
    table = metrics.format_summary_table(rows)
    assert "31.00 ± 1.00" in table
    with pytest.raises(ValueError):
        metrics.write_summary_csv([], path)


def test_render_curves(tmp_path):
    rows_a = [_row(i) for i in range(1, 6)]
    rows_b = [_row(i, psnr_train=25.0) for i in range(1, 6)]
    paths = metrics.render_curves({"ei": rows_a, "fei": rows_b}, tmp_path, threshold=22.0)
    assert all(p.exists() for p in paths)
    assert {p.name for p in paths} == {"curves_iter.png", "curves_time.png"}
