"""Tests for the Monte Carlo sweep harness."""

import numpy as np
import pytest

import beamlink.montecarlo as mc
from beamlink.config import SystemConfig
from beamlink.montecarlo import (
    CSV_HEADER,
    MonteCarloError,
    SweepRow,
    TrialFailure,
    TrialResult,
    emit_csv,
    run_sweep,
    run_trial,
    write_rows_csv,
)

SMALL = dict(n_t=8, n_r=8, k=16, m=3, trials=4, seed=11)


def _cfg(**overrides):
    merged = {**SMALL, **overrides}
    return SystemConfig(**merged)


def test_trial_is_deterministic():
    cfg = _cfg(snr_grid_db=(0.0, 10.0))
    assert run_trial(cfg, 2) == run_trial(cfg, 2)


def test_trials_differ():
    cfg = _cfg(snr_grid_db=(0.0,))
    a = run_trial(cfg, 0)
    b = run_trial(cfg, 1)
    assert a.proposed_rates != b.proposed_rates
    assert a.dbf_rates != b.dbf_rates


def test_trial_shapes_and_ordering():
    grid = (-5.0, 5.0, 15.0)
    cfg = _cfg(snr_grid_db=grid)
    out = run_trial(cfg, 0)
    assert len(out.proposed_rates) == len(out.dbf_rates) == len(grid)
    assert len(out.reference_rates) == len(grid)
    # rates are reported in grid order; fully digital ones grow with SNR
    assert out.dbf_rates[0] < out.dbf_rates[1] < out.dbf_rates[2]
    assert all(r >= 0 for r in out.proposed_rates)


def test_trial_constraint_residuals_tiny():
    cfg = _cfg(snr_grid_db=(0.0, 20.0))
    for trial in range(3):
        out = run_trial(cfg, trial)
        assert out.worst_tx_residual < 1e-8
        assert out.worst_rx_residual < 1e-8


def test_hybrid_below_fully_digital_in_sweep():
    cfg = _cfg(snr_grid_db=(-10.0, 0.0, 10.0), trials=6)
    result = run_sweep(cfg)
    for row in result.rows:
        assert 0.0 < row.mean_rate <= row.dbf_mean_rate
        assert 0.0 < row.normalized_rate <= 1.0


def test_parallel_equals_serial():
    cfg = _cfg(snr_grid_db=(0.0, 10.0), trials=6)
    serial = run_sweep(cfg, workers=1)
    threaded = run_sweep(cfg, workers=4)
    assert serial.rows == threaded.rows
    assert serial.reference_mean_rates == threaded.reference_mean_rates


def test_rows_sorted_by_snr():
    cfg = _cfg(snr_grid_db=(10.0, -10.0, 0.0), trials=2)
    result = run_sweep(cfg)
    assert [row.snr_db for row in result.rows] == [-10.0, 0.0, 10.0]
    for row in result.rows:
        assert (row.codebook, row.criterion, row.m) == ("orthogonal", "eig", 3)
        assert row.trials == 2


def test_noise_free_sweep_runs():
    cfg = _cfg(snr_grid_db=(0.0, 10.0), trials=3, noise_free_training=True)
    result = run_sweep(cfg)
    assert result.num_trials_succeeded == 3
    assert result.rows[0].mean_rate > 0


def test_single_trial_has_zero_ci():
    cfg = _cfg(trials=1, snr_grid_db=(0.0,))
    result = run_sweep(cfg)
    assert result.rows[0].ci95_halfwidth == 0.0


def test_ci_matches_sample_std():
    cfg = _cfg(trials=5, snr_grid_db=(0.0,))
    result = run_sweep(cfg)
    samples = [run_trial(cfg, t).proposed_rates[0] for t in range(5)]
    expected = 1.96 * np.std(samples, ddof=1) / np.sqrt(5)
    assert result.rows[0].ci95_halfwidth == pytest.approx(expected, rel=1e-12)
    assert result.rows[0].mean_rate == pytest.approx(np.mean(samples), rel=1e-12)


def test_failures_recorded_not_silent(monkeypatch):
    real = mc.run_trial

    def flaky(cfg, trial_index, tx_cb=None, rx_cb=None):
        if trial_index == 1:
            raise ValueError("synthetic failure")
        return real(cfg, trial_index, tx_cb, rx_cb)

    monkeypatch.setattr(mc, "run_trial", flaky)
    cfg = _cfg(trials=4, snr_grid_db=(0.0,))
    result = run_sweep(cfg)
    assert result.num_trials_succeeded == 3
    assert len(result.failures) == 1
    assert result.failures[0] == TrialFailure(1, "ValueError", "synthetic failure")
    assert result.failure_fraction == pytest.approx(0.25)
    assert result.rows[0].trials == 3
    # the aggregate really excludes the failed trial
    kept = [real(cfg, t).proposed_rates[0] for t in (0, 2, 3)]
    assert result.rows[0].mean_rate == pytest.approx(np.mean(kept))


def test_all_failed_raises(monkeypatch):
    def doomed(cfg, trial_index, tx_cb=None, rx_cb=None):
        raise ValueError("synthetic failure")

    monkeypatch.setattr(mc, "run_trial", doomed)
    with pytest.raises(MonteCarloError, match="all 4 trials failed"):
        run_sweep(_cfg(trials=4, snr_grid_db=(0.0,)))


def test_run_sweep_rejects_bad_workers():
    with pytest.raises(ValueError):
        run_sweep(_cfg(), workers=0)


def test_emit_csv_round_trip(tmp_path):
    cfg = _cfg(snr_grid_db=(0.0, 10.0), trials=2)
    result = run_sweep(cfg)
    path = tmp_path / "out.csv"
    emit_csv(result, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 3
    fields = lines[1].split(",")
    assert float(fields[0]) == 0.0
    assert fields[1:4] == ["orthogonal", "eig", "3"]
    # repr round-trip: parsing the text recovers the exact float
    assert float(fields[5]) == result.rows[0].mean_rate


def test_csv_reruns_byte_identical(tmp_path):
    cfg = _cfg(snr_grid_db=(-5.0, 5.0), trials=3)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_csv(run_sweep(cfg), str(a))
    emit_csv(run_sweep(cfg), str(b))
    assert a.read_bytes() == b.read_bytes()


def test_csv_overwrites_atomically(tmp_path):
    path = tmp_path / "out.csv"
    path.write_text("stale content that must disappear\n")
    rows = [
        SweepRow(
            snr_db=0.0, codebook="orthogonal", criterion="eig", m=2, trials=1,
            mean_rate=1.0, dbf_mean_rate=2.0, normalized_rate=0.5,
            ci95_halfwidth=0.0,
        )
    ]
    write_rows_csv(rows, str(path))
    text = path.read_text()
    assert "stale" not in text
    assert text.splitlines()[0] == CSV_HEADER
    assert list(tmp_path.iterdir()) == [path]  # no temp files left behind


def test_trial_result_fields():
    cfg = _cfg(snr_grid_db=(0.0,))
    out = run_trial(cfg, 0)
    assert isinstance(out, TrialResult)
    assert out.trial_index == 0
