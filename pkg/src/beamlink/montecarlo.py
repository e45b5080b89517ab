"""Monte Carlo throughput sweeps over an SNR grid.

Each trial draws one channel, runs training, selects beams, and evaluates
the proposed hybrid link, the fully digital upper baseline, and the
codebook-constrained reference design at every SNR point.  Trials are
seeded from ``(root seed, trial index)`` so results are reproducible and
identical whether the sweep runs serially or on a thread pool.

Common random numbers are used across the SNR grid: a trial's channel and
its unit-variance training noise are drawn once, and the noise is scaled
per SNR point, so throughput curves differ across SNR only through the
noise level, not through resampling.
"""

from __future__ import annotations

import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import sample_channel
from .config import SystemConfig, build_codebooks
from .linalg import LinalgError, svd_phase_fixed
from .metrics import (
    audit_power_constraints,
    evaluate_rate,
    fully_digital_rate_from_singular_values,
)
from .reference import reference_from_svd
from .selection import (
    EffectiveChannelEstimate,
    NoViableCandidatesError,
    criterion_values_from_singular_values,
    digital_beamforming,
    effective_channel_grid,
    initial_beam_selection,
)
from .training import CouplingTensor, noiseless_couplings, unit_noise_tensor

__all__ = [
    "CSV_HEADER",
    "MonteCarloError",
    "SweepResult",
    "SweepRow",
    "TrialFailure",
    "TrialResult",
    "emit_csv",
    "run_sweep",
    "run_trial",
    "write_rows_csv",
]

CSV_HEADER = (
    "snr_db,codebook,criterion,m,trials,mean_rate,dbf_mean_rate,"
    "normalized_rate,ci95_halfwidth"
)


class MonteCarloError(RuntimeError):
    """The sweep could not produce a usable aggregate (e.g. no trial succeeded)."""


@dataclass(frozen=True)
class TrialResult:
    """Per-trial throughput samples, one entry per SNR grid point.

    Attributes:
        trial_index: Which trial this is; fixes the random streams.
        proposed_rates: Hybrid design driven by coupling measurements.
        dbf_rates: Fully digital upper baseline on the true channel.
        reference_rates: Codebook-constrained reference design.
        worst_tx_residual: Largest transmit-power-constraint residual seen.
        worst_rx_residual: Largest combiner-orthogonality residual seen.
    """

    trial_index: int
    proposed_rates: tuple
    dbf_rates: tuple
    reference_rates: tuple
    worst_tx_residual: float
    worst_rx_residual: float


@dataclass(frozen=True)
class TrialFailure:
    """A trial that raised instead of producing rates."""

    trial_index: int
    stage: str
    message: str


@dataclass(frozen=True)
class SweepRow:
    """One output row: aggregate throughput at a single SNR point."""

    snr_db: float
    codebook: str
    criterion: str
    m: int
    trials: int
    mean_rate: float
    dbf_mean_rate: float
    normalized_rate: float
    ci95_halfwidth: float


@dataclass(frozen=True)
class SweepResult:
    """Aggregated sweep output.

    ``rows`` match the CSV schema exactly.  ``reference_mean_rates`` carries
    the reference-design average (same row order) for comparisons and plots;
    it is deliberately not part of the CSV contract.
    """

    config: SystemConfig
    rows: tuple
    reference_mean_rates: tuple
    failures: tuple
    num_trials_succeeded: int

    @property
    def failure_fraction(self) -> float:
        return len(self.failures) / self.config.trials


def run_trial(cfg: SystemConfig, trial_index: int, tx_cb=None, rx_cb=None) -> TrialResult:
    """Run a single seeded trial across the whole SNR grid.

    Args:
        cfg: Run configuration.
        trial_index: Trial number in [0, cfg.trials); determines the random
            streams together with ``cfg.seed``.
        tx_cb, rx_cb: Prebuilt codebooks (built from ``cfg`` when omitted);
            passing them avoids rebuilding once per trial.

    Raises:
        NoViableCandidatesError: every candidate combination was unusable.
        LinalgError, ValueError: numerically unusable intermediate results.
    """
    if tx_cb is None or rx_cb is None:
        tx_cb, rx_cb = build_codebooks(cfg)
    channel_rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, trial_index, 0])
    )
    chan = sample_channel(cfg, cfg.channel, channel_rng)
    signal = noiseless_couplings(chan, tx_cb, rx_cb)

    # the channel SVD feeds both the fully digital baseline and the
    # reference design's target singular vectors
    svd = svd_phase_fixed(chan.per_subcarrier)
    ref_bf = reference_from_svd(svd.left, svd.right, tx_cb, rx_cb, cfg.n_rf, cfg.n_s)
    r_s = np.eye(cfg.n_s) / cfg.n_s

    proposed = []
    dbf = []
    reference = []
    worst_tx = 0.0
    worst_rx = 0.0

    if cfg.noise_free_training:
        # selection inputs do not depend on SNR: build the candidate grid and
        # its singular values once, then re-score per SNR point (only the
        # ``eig`` criterion actually depends on gamma)
        y = CouplingTensor(y=signal, noise_variance=0.0, noise_free=True)
        sets = initial_beam_selection(y, cfg.m, cfg.n_rf)
        pair_indices, grid, skipped = effective_channel_grid(y, sets, tx_cb, rx_cb)
        if not pair_indices:
            raise NoViableCandidatesError(
                "all candidate combinations were numerically unusable "
                f"(first: {skipped[0][2] if skipped else 'n/a'})"
            )
        grid_svals = np.linalg.svd(grid, compute_uv=False)
        bf_cache = {}
        for snr_db in cfg.snr_grid_db:
            gamma = cfg.gamma(snr_db)
            sigma2 = cfg.sigma2(snr_db)
            values = _criterion_values(grid_svals, cfg, gamma)
            best = int(np.argmax(values))
            if best not in bf_cache:
                i_f, i_w = pair_indices[best]
                est = EffectiveChannelEstimate(
                    per_subcarrier=grid[best],
                    tx_combo_index=i_f,
                    rx_combo_index=i_w,
                    flat_index=i_f * sets.num_rx_combos + i_w,
                )
                bf_cache[best] = digital_beamforming(est, tx_cb, rx_cb, sets, cfg.n_s)
            bf = bf_cache[best]
            audit = audit_power_constraints(bf, r_s)
            worst_tx = max(worst_tx, audit.worst_tx)
            worst_rx = max(worst_rx, audit.worst_rx)
            proposed.append(evaluate_rate(chan, bf, r_s, sigma2).mean_bits_per_s_hz)
            dbf.append(
                fully_digital_rate_from_singular_values(
                    svd.singular_values, gamma, cfg.n_s
                ).mean_bits_per_s_hz
            )
            reference.append(evaluate_rate(chan, ref_bf, r_s, sigma2).mean_bits_per_s_hz)
    else:
        z_unit = unit_noise_tensor(
            signal.shape, np.random.SeedSequence([cfg.seed, trial_index, 1])
        )
        for snr_db in cfg.snr_grid_db:
            gamma = cfg.gamma(snr_db)
            sigma2 = cfg.sigma2(snr_db)
            y = CouplingTensor(
                y=signal + math.sqrt(sigma2) * z_unit,
                noise_variance=sigma2,
                noise_free=False,
            )
            sets = initial_beam_selection(y, cfg.m, cfg.n_rf)
            pair_indices, grid, skipped = effective_channel_grid(y, sets, tx_cb, rx_cb)
            if not pair_indices:
                raise NoViableCandidatesError(
                    "all candidate combinations were numerically unusable "
                    f"(first: {skipped[0][2] if skipped else 'n/a'})"
                )
            grid_svals = np.linalg.svd(grid, compute_uv=False)
            values = _criterion_values(grid_svals, cfg, gamma)
            best = int(np.argmax(values))
            i_f, i_w = pair_indices[best]
            est = EffectiveChannelEstimate(
                per_subcarrier=grid[best],
                tx_combo_index=i_f,
                rx_combo_index=i_w,
                flat_index=i_f * sets.num_rx_combos + i_w,
            )
            bf = digital_beamforming(est, tx_cb, rx_cb, sets, cfg.n_s)
            audit = audit_power_constraints(bf, r_s)
            worst_tx = max(worst_tx, audit.worst_tx)
            worst_rx = max(worst_rx, audit.worst_rx)
            proposed.append(evaluate_rate(chan, bf, r_s, sigma2).mean_bits_per_s_hz)
            dbf.append(
                fully_digital_rate_from_singular_values(
                    svd.singular_values, gamma, cfg.n_s
                ).mean_bits_per_s_hz
            )
            reference.append(evaluate_rate(chan, ref_bf, r_s, sigma2).mean_bits_per_s_hz)

    return TrialResult(
        trial_index=trial_index,
        proposed_rates=tuple(proposed),
        dbf_rates=tuple(dbf),
        reference_rates=tuple(reference),
        worst_tx_residual=worst_tx,
        worst_rx_residual=worst_rx,
    )


def _criterion_values(grid_svals: np.ndarray, cfg: SystemConfig, gamma: float):
    return criterion_values_from_singular_values(
        grid_svals, cfg.criterion, gamma=gamma, n_s=cfg.n_s
    )


def _safe_trial(cfg, trial_index, tx_cb, rx_cb):
    try:
        return run_trial(cfg, trial_index, tx_cb, rx_cb)
    except (NoViableCandidatesError, LinalgError, np.linalg.LinAlgError, ValueError) as exc:
        return TrialFailure(
            trial_index=trial_index, stage=type(exc).__name__, message=str(exc)
        )


def run_sweep(cfg: SystemConfig, workers: int = 1) -> SweepResult:
    """Run all trials and aggregate throughput per SNR point.

    Trials that raise are recorded as :class:`TrialFailure` entries and
    excluded from the averages — never silently dropped.  Aggregation
    iterates trials in index order, so ``workers > 1`` changes wall time
    only, not the result.

    Raises:
        MonteCarloError: if every trial failed.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    tx_cb, rx_cb = build_codebooks(cfg)
    outcomes = {}
    if workers == 1:
        for t in range(cfg.trials):
            outcomes[t] = _safe_trial(cfg, t, tx_cb, rx_cb)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                t: pool.submit(_safe_trial, cfg, t, tx_cb, rx_cb)
                for t in range(cfg.trials)
            }
            for t, future in futures.items():
                outcomes[t] = future.result()

    ordered = [outcomes[t] for t in range(cfg.trials)]
    successes = [o for o in ordered if isinstance(o, TrialResult)]
    failures = tuple(o for o in ordered if isinstance(o, TrialFailure))
    if not successes:
        raise MonteCarloError(
            f"all {cfg.trials} trials failed "
            f"(first: {failures[0].stage}: {failures[0].message})"
        )

    proposed = np.array([s.proposed_rates for s in successes])
    dbf = np.array([s.dbf_rates for s in successes])
    reference = np.array([s.reference_rates for s in successes])
    n = len(successes)

    order = np.argsort(np.asarray(cfg.snr_grid_db), kind="stable")
    rows = []
    ref_means = []
    for col in order:
        mean_rate = float(np.mean(proposed[:, col]))
        dbf_mean = float(np.mean(dbf[:, col]))
        ci95 = 0.0 if n < 2 else float(1.96 * np.std(proposed[:, col], ddof=1) / np.sqrt(n))
        rows.append(
            SweepRow(
                snr_db=float(cfg.snr_grid_db[col]),
                codebook=cfg.codebook_kind,
                criterion=cfg.criterion,
                m=cfg.m,
                trials=n,
                mean_rate=mean_rate,
                dbf_mean_rate=dbf_mean,
                normalized_rate=mean_rate / dbf_mean,
                ci95_halfwidth=ci95,
            )
        )
        ref_means.append(float(np.mean(reference[:, col])))

    return SweepResult(
        config=cfg,
        rows=tuple(rows),
        reference_mean_rates=tuple(ref_means),
        failures=failures,
        num_trials_succeeded=n,
    )


def write_rows_csv(rows, path: str) -> None:
    """Write :class:`SweepRow` entries to ``path`` atomically (temp + rename)."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(CSV_HEADER + "\n")
            for row in rows:
                fh.write(
                    f"{row.snr_db!r},{row.codebook},{row.criterion},{row.m},"
                    f"{row.trials},{row.mean_rate!r},{row.dbf_mean_rate!r},"
                    f"{row.normalized_rate!r},{row.ci95_halfwidth!r}\n"
                )
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def emit_csv(result: SweepResult, path: str) -> None:
    """Write the sweep rows to ``path`` atomically (temp file + rename)."""
    write_rows_csv(result.rows, path)
