"""Rate evaluation, power-constraint audits, and training-noise statistics.

Mutual information is always evaluated with the general combined-noise
covariance

    R_nbar[k] = sigma2 * W_B[k]^H W_P^H W_P W_B[k]

because the explicit-CSI reference produces combiners that do not whiten
the noise; when the combiner orthogonality identity holds, this reduces to
``sigma2 * I`` automatically.

The noise-statistics half of the module characterizes the estimation
error Z_E of the whitened effective channel: its exact covariance is a
Kronecker product of inverse codebook Grams, the squared norm
U = ||Z_E||_F^2 follows a Gamma law for orthogonal beams, and the
cross-term V = 2 Re tr(H'^H Z_E) is zero-mean.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelRealization
from .linalg import inv_hermitian, inv_sqrt_hermitian, kron
from .selection import BeamformerSet, EffectiveChannelEstimate

__all__ = [
    "RateReport",
    "NoiseStats",
    "ConstraintAudit",
    "ApproximationErrorReport",
    "mutual_information",
    "evaluate_rate",
    "fully_digital_rate",
    "fully_digital_rate_from_singular_values",
    "approximation_error",
    "ze_covariance",
    "draw_ze",
    "u_statistics",
    "v_statistics",
    "audit_power_constraints",
    "export_noise_stats_csv",
]

_LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class RateReport:
    """Throughput of one realization, per subcarrier and averaged.

    Attributes:
        per_subcarrier_bits: (K,) mutual information per subcarrier.
        mean_bits_per_s_hz: average over subcarriers.
        normalized_to_dbf: optional ratio against the fully digital mean.
    """

    per_subcarrier_bits: np.ndarray = field(repr=False)
    mean_bits_per_s_hz: float
    normalized_to_dbf: float | None = None

    def __post_init__(self):
        if np.any(self.per_subcarrier_bits < -1e-9):
            raise ValueError("per-subcarrier rates must be non-negative")
        expected = float(np.mean(self.per_subcarrier_bits))
        if abs(expected - self.mean_bits_per_s_hz) > 1e-9 * max(1.0, abs(expected)):
            raise ValueError("mean_bits_per_s_hz must be the subcarrier average")

    def with_normalization(self, dbf_mean: float) -> "RateReport":
        return replace(self, normalized_to_dbf=self.mean_bits_per_s_hz / dbf_mean)


def _rate_from_report_inputs(t, r_nbar, r_s) -> np.ndarray:
    """log2 det(I + R_nbar^{-1} T R_s T^H) for stacks of T / R_nbar."""
    n_s = t.shape[-1]
    signal = np.einsum("...ij,jl,...ml->...im", t, r_s, t.conj(), optimize=True)
    try:
        inner = np.linalg.solve(r_nbar, signal)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"combined noise covariance is singular: {exc}") from exc
    sign, logdet = np.linalg.slogdet(np.eye(n_s) + inner)
    if np.any(sign.real <= 0):
        raise ValueError("rate determinant came out non-positive; inputs inconsistent")
    return logdet / _LN2


def mutual_information(
    h_k: np.ndarray, bf: BeamformerSet, k: int, r_s: np.ndarray, sigma2: float
) -> float:
    """Mutual information at one subcarrier, in bit/s/Hz.

    Args:
        h_k: channel matrix at subcarrier k.
        bf: analog + digital beamformers.
        k: subcarrier index (selects the digital stages).
        r_s: (N_S, N_S) stream covariance, typically I/N_S.
        sigma2: receiver noise variance (> 0).

    Raises:
        ValueError: singular combined-noise covariance (the error names
            the subcarrier).
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if not 0 <= k < bf.num_subcarriers:
        raise IndexError(f"subcarrier {k} out of range")
    w_b = bf.rx_digital[k]
    f_b = bf.tx_digital[k]
    t = w_b.conj().T @ bf.rx_analog.conj().T @ h_k @ bf.tx_analog @ f_b
    r_nbar = sigma2 * (w_b.conj().T @ bf.rx_analog.conj().T @ bf.rx_analog @ w_b)
    try:
        return float(_rate_from_report_inputs(t, r_nbar, np.asarray(r_s)))
    except ValueError as exc:
        raise ValueError(f"subcarrier {k}: {exc}") from exc


def evaluate_rate(
    chan: ChannelRealization, bf: BeamformerSet, r_s: np.ndarray, sigma2: float
) -> RateReport:
    """Mutual information on every subcarrier (batched), averaged."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if bf.num_subcarriers != chan.num_subcarriers:
        raise ValueError("beamformer set and channel disagree on subcarrier count")
    inner = np.einsum(
        "rm,krt,tn->kmn", bf.rx_analog.conj(), chan.per_subcarrier, bf.tx_analog,
        optimize=True,
    )
    t = np.einsum(
        "kms,kmn,knt->kst", bf.rx_digital.conj(), inner, bf.tx_digital, optimize=True
    )
    g_w = bf.rx_analog.conj().T @ bf.rx_analog
    r_nbar = sigma2 * np.einsum(
        "kms,mn,knt->kst", bf.rx_digital.conj(), g_w, bf.rx_digital, optimize=True
    )
    bits = _rate_from_report_inputs(t, r_nbar, np.asarray(r_s))
    return RateReport(
        per_subcarrier_bits=bits, mean_bits_per_s_hz=float(np.mean(bits))
    )


def fully_digital_rate_from_singular_values(
    svals: np.ndarray, gamma: float, n_s: int
) -> RateReport:
    """Unconstrained-beamforming throughput from channel singular values.

    Args:
        svals: (K, min(N_R, N_T)) singular values, descending.
        gamma: linear SNR (per-stream power over noise).
        n_s: number of streams kept.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    bits = np.sum(np.log2(1.0 + gamma * svals[:, :n_s] ** 2), axis=1)
    return RateReport(per_subcarrier_bits=bits, mean_bits_per_s_hz=float(np.mean(bits)))


def fully_digital_rate(chan: ChannelRealization, gamma: float, n_s: int) -> RateReport:
    """Throughput with ideal fully digital beamforming on the true channel."""
    svals = np.linalg.svd(chan.per_subcarrier, compute_uv=False)
    return fully_digital_rate_from_singular_values(svals, gamma, n_s)


@dataclass(frozen=True)
class ApproximationErrorReport:
    """Gap between the exact log-det objective and its low-SNR key parameter.

    Attributes:
        epsilon: |E[sum_k log-term] - E[sum_k gamma * fro-term]| / K.
        closed_form: low-SNR prediction (gamma/K)(1/ln2 - 1) E[sum_k fro].
        log_term_mean: ensemble mean of sum_k sum_i log2(1 + gamma s_i^2).
        key_param_mean: ensemble mean of sum_k gamma ||H_E[k]||_F^2.
    """

    epsilon: float
    closed_form: float
    log_term_mean: float
    key_param_mean: float


def approximation_error(
    estimates, gamma: float, n_s: int | None = None
) -> ApproximationErrorReport:
    """Ensemble approximation error of the low-SNR selection surrogate.

    Args:
        estimates: iterable of noise-free :class:`EffectiveChannelEstimate`
            (or raw (K, N_RF, N_RF) stacks) selected under the exact
            criterion.
        gamma: linear SNR.
        n_s: streams counted in the log term (defaults to all).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    log_terms = []
    fro_terms = []
    num_k = None
    for est in estimates:
        mats = est.per_subcarrier if isinstance(est, EffectiveChannelEstimate) else est
        num_k = mats.shape[0] if num_k is None else num_k
        if mats.shape[0] != num_k:
            raise ValueError("all estimates must cover the same subcarrier count")
        svals = np.linalg.svd(mats, compute_uv=False)
        top = svals if n_s is None else svals[:, :n_s]
        log_terms.append(float(np.sum(np.log2(1.0 + gamma * top**2))))
        fro_terms.append(float(np.sum(svals**2)))
    if not log_terms:
        raise ValueError("need at least one estimate")
    log_mean = float(np.mean(log_terms))
    fro_mean = float(np.mean(fro_terms))
    return ApproximationErrorReport(
        epsilon=abs(log_mean - gamma * fro_mean) / num_k,
        closed_form=(gamma / num_k) * (1.0 / _LN2 - 1.0) * fro_mean,
        log_term_mean=log_mean,
        key_param_mean=gamma * fro_mean,
    )


# ---------------------------------------------------------------------------
# noise statistics of the whitened effective-channel estimate


def ze_covariance(gram_tx: np.ndarray, gram_rx: np.ndarray, sigma2: float) -> np.ndarray:
    """Exact covariance of vec(Z_E) (column-major vec).

    Z_E = (W^H W)^{-1/2} Z (F^H F)^{-1/2} with Z i.i.d. CSCG of variance
    sigma2 gives cov(vec Z_E) = sigma2 * kron((F^T F*)^{-1}, (W^H W)^{-1}).
    For orthogonal combos this is sigma2 * I.
    """
    inv_tx = inv_hermitian(np.conj(gram_tx), label="tx gram")
    inv_rx = inv_hermitian(gram_rx, label="rx gram")
    return sigma2 * kron(inv_tx, inv_rx)


def draw_ze(
    gram_tx: np.ndarray,
    gram_rx: np.ndarray,
    sigma2: float,
    num_samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Monte Carlo draws of Z_E: (num_samples, N_RF, N_RF)."""
    n_rf = gram_rx.shape[0]
    b_f = inv_sqrt_hermitian(gram_tx, label="tx gram")
    b_w = inv_sqrt_hermitian(gram_rx, label="rx gram")
    raw = rng.standard_normal((num_samples, n_rf, n_rf, 2))
    z = np.sqrt(sigma2 / 2.0) * (raw[..., 0] + 1j * raw[..., 1])
    return np.einsum("ij,sjk,kl->sil", b_w, z, b_f, optimize=True)


@dataclass(frozen=True)
class NoiseStats:
    """Law of the effective-channel estimation error for one Gram pair.

    Attributes:
        covariance: (N_RF^2, N_RF^2) covariance of vec(Z_E).
        expected_u: closed-form E[||Z_E||_F^2].
        var_u: Var(U) via the fourth-moment contraction tr(Psi R_zV) - E[U]^2
            with R_zV estimated by Monte Carlo.
        gamma_shape / gamma_scale: Gamma(N_RF^2, sigma2) parameters; U follows
            this law exactly when both Grams are identity.
        empirical_mean_u / empirical_var_u: plain sample moments of the draws.
        u_samples: the Monte Carlo U draws used for the empirical moments.
    """

    covariance: np.ndarray = field(repr=False)
    expected_u: float
    var_u: float
    gamma_shape: int
    gamma_scale: float
    empirical_mean_u: float
    empirical_var_u: float
    u_samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        cov = self.covariance
        if np.max(np.abs(cov - cov.conj().T)) > 1e-9 * max(1.0, np.max(np.abs(cov))):
            raise ValueError("covariance must be Hermitian")


def u_statistics(
    gram_tx: np.ndarray,
    gram_rx: np.ndarray,
    sigma2: float,
    num_samples: int = 100_000,
    rng: np.random.Generator | None = None,
) -> NoiseStats:
    """Mean/variance of U = ||Z_E||_F^2, closed form plus Monte Carlo.

    E[U] = sigma2 * tr((F^T F*)^{-1}) * tr((W^H W)^{-1}) exactly.  The
    variance uses U = z^H C1 z with C1 = kron((F^T F*)^{-1}, (W^H W)^{-1})
    and z = vec(Z): Var(U) = tr((C1 x C1) R_zV) - E[U]^2, with the fourth
    moment R_zV = E[(z x z)(z x z)^H] estimated from the draws.

    Args:
        num_samples: Monte Carlo sample count (>= 10^4 recommended).
        rng: generator for the draws; a fixed default seed if omitted.
    """
    if num_samples < 2:
        raise ValueError("need at least two samples")
    if rng is None:
        rng = np.random.default_rng(0)
    n_rf = gram_rx.shape[0]
    inv_tx = inv_hermitian(np.conj(gram_tx), label="tx gram")
    inv_rx = inv_hermitian(gram_rx, label="rx gram")
    c1 = kron(inv_tx, inv_rx)
    expected_u = sigma2 * float(np.real(np.trace(inv_tx)) * np.real(np.trace(inv_rx)))

    raw = rng.standard_normal((num_samples, n_rf, n_rf, 2))
    z_mat = np.sqrt(sigma2 / 2.0) * (raw[..., 0] + 1j * raw[..., 1])
    # column-major vec per sample
    z_vec = np.transpose(z_mat, (0, 2, 1)).reshape(num_samples, n_rf * n_rf)
    quad = np.einsum("si,ij,sj->s", z_vec.conj(), c1, z_vec, optimize=True)
    u_samples = np.real(quad)

    w = np.einsum("si,sj->sij", z_vec, z_vec).reshape(num_samples, -1)
    r_zv = (w.T @ w.conj()) / num_samples
    psi = kron(c1, c1)
    var_u = float(np.real(np.trace(psi @ r_zv))) - expected_u**2

    return NoiseStats(
        covariance=sigma2 * c1,
        expected_u=expected_u,
        var_u=var_u,
        gamma_shape=n_rf * n_rf,
        gamma_scale=sigma2,
        empirical_mean_u=float(np.mean(u_samples)),
        empirical_var_u=float(np.var(u_samples, ddof=1)),
        u_samples=u_samples,
    )


def v_statistics(h_e_ref: np.ndarray, ze_draws: np.ndarray) -> tuple[float, float]:
    """Sample mean and variance of V = 2 Re tr(H'^H Z_E).

    V is zero-mean by construction; for orthogonal combos its variance is
    2 * sigma2 * ||H'||_F^2 (reported empirically, no closed form claimed
    for correlated combos).
    """
    v = 2.0 * np.real(
        np.einsum("ij,sij->s", np.asarray(h_e_ref).conj(), ze_draws, optimize=True)
    )
    return float(np.mean(v)), float(np.var(v, ddof=1))


@dataclass(frozen=True)
class ConstraintAudit:
    """Per-subcarrier residuals of the two beamformer power constraints.

    ``tx_residuals[k]`` is |tr(F_P F_B R_s F_B^H F_P^H) - tr(R_s)|;
    ``rx_residuals[k]`` is the worst entry of W_B^H W_P^H W_P W_B - I.
    """

    tx_residuals: np.ndarray = field(repr=False)
    rx_residuals: np.ndarray = field(repr=False)

    @property
    def worst_tx(self) -> float:
        return float(np.max(self.tx_residuals))

    @property
    def worst_rx(self) -> float:
        return float(np.max(self.rx_residuals))


def audit_power_constraints(bf: BeamformerSet, r_s: np.ndarray) -> ConstraintAudit:
    """Evaluate both power constraints on every subcarrier (reporting only)."""
    r_s = np.asarray(r_s)
    g_tx = bf.tx_analog.conj().T @ bf.tx_analog
    m_tx = np.einsum(
        "kis,ij,kjt->kst", bf.tx_digital.conj(), g_tx, bf.tx_digital, optimize=True
    )
    powers = np.real(np.einsum("kst,ts->k", m_tx, r_s, optimize=True))
    tx_residuals = np.abs(powers - np.real(np.trace(r_s)))

    g_rx = bf.rx_analog.conj().T @ bf.rx_analog
    m_rx = np.einsum(
        "kis,ij,kjt->kst", bf.rx_digital.conj(), g_rx, bf.rx_digital, optimize=True
    )
    eye = np.eye(bf.n_s)
    rx_residuals = np.max(np.abs(m_rx - eye), axis=(1, 2))
    return ConstraintAudit(tx_residuals=tx_residuals, rx_residuals=rx_residuals)


def export_noise_stats_csv(stats: NoiseStats, path: str) -> None:
    """Write (statistic, closed_form, empirical, rel_error) rows."""
    rows = [
        ("mean_u", stats.expected_u, stats.empirical_mean_u),
        ("var_u", stats.var_u, stats.empirical_var_u),
    ]
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["statistic", "closed_form", "empirical", "rel_error"])
            for name, closed, emp in rows:
                rel = abs(emp - closed) / abs(closed) if closed else 0.0
                writer.writerow([name, repr(closed), repr(emp), repr(rel)])
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
