"""Exhaustive beam-pair training: the coupling-coefficient tensor.

Sweeping every transmit beam against every receive beam and correlating
with the unit-modulus pilot leaves, per pair and subcarrier,

    y[n_w, n_f, k] = w[n_w]^H H[k] f[n_f] + z[n_w, n_f, k]

with i.i.d. circularly symmetric complex Gaussian noise z of variance
``sigma2``.  The pilot itself never needs to be materialized.

Noise is drawn from per-subcarrier substreams spawned off one seed, so a
run parallelized over subcarriers reproduces the serial tensor bit for
bit, and so the same seed at two noise levels yields the *same* noise
shape scaled by sigma (common random numbers across an SNR sweep).
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .codebooks import Codebook

__all__ = [
    "CouplingTensor",
    "noiseless_couplings",
    "unit_noise_tensor",
    "simulate_training",
    "pair_energy",
    "pair_energies",
    "export_couplings_csv",
]

SeedLike = "int | np.random.SeedSequence"


@dataclass(frozen=True)
class CouplingTensor:
    """Implicit CSI from one full training sweep.

    Attributes:
        y: (N_W, N_F, K) complex couplings, receive beam first.
        noise_variance: per-sample noise variance used to generate ``y``.
        noise_free: True if ``y`` holds exact couplings with no noise term.
    """

    y: np.ndarray
    noise_variance: float
    noise_free: bool

    @property
    def num_rx_beams(self) -> int:
        return self.y.shape[0]

    @property
    def num_tx_beams(self) -> int:
        return self.y.shape[1]

    @property
    def num_subcarriers(self) -> int:
        return self.y.shape[2]


def noiseless_couplings(
    chan: ChannelRealization, tx_cb: Codebook, rx_cb: Codebook
) -> np.ndarray:
    """Exact couplings w^H H[k] f for every beam pair and subcarrier.

    Computed as two matrix products per subcarrier (W^H H[k] F), never as
    independent triple products per pair.

    Returns:
        (N_W, N_F, K) complex array.
    """
    if tx_cb.num_antennas != chan.num_tx:
        raise ValueError(
            f"transmit codebook is for {tx_cb.num_antennas} antennas, "
            f"channel has {chan.num_tx}"
        )
    if rx_cb.num_antennas != chan.num_rx:
        raise ValueError(
            f"receive codebook is for {rx_cb.num_antennas} antennas, "
            f"channel has {chan.num_rx}"
        )
    # (K, N_W, N_F) then moved to (N_W, N_F, K)
    per_k = np.einsum(
        "rw,krt,tf->kwf", rx_cb.beams.conj(), chan.per_subcarrier, tx_cb.beams,
        optimize=True,
    )
    return np.ascontiguousarray(np.moveaxis(per_k, 0, 2))


def unit_noise_tensor(
    shape: tuple[int, int, int], seed: "int | np.random.SeedSequence"
) -> np.ndarray:
    """Unit-variance CSCG noise with per-subcarrier substreams.

    Subcarrier ``k`` uses the child stream ``SeedSequence(seed).spawn``-ed
    at position k, so any partition of subcarriers across workers produces
    the identical tensor.

    Args:
        shape: (N_W, N_F, K).
        seed: integer or SeedSequence root.
    """
    n_w, n_f, num_k = shape
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(num_k)
    out = np.empty(shape, dtype=np.complex128)
    for k, child in enumerate(children):
        rng = np.random.default_rng(child)
        draws = rng.standard_normal((n_w, n_f, 2))
        out[:, :, k] = (draws[..., 0] + 1j * draws[..., 1]) / np.sqrt(2.0)
    return out


def simulate_training(
    chan: ChannelRealization,
    tx_cb: Codebook,
    rx_cb: Codebook,
    sigma2: float,
    noise_free: bool = False,
    seed: "int | np.random.SeedSequence" = 0,
) -> CouplingTensor:
    """Run the full training sweep and return the coupling tensor.

    Args:
        chan: channel realization to probe.
        tx_cb / rx_cb: beam codebooks on the two ends.
        sigma2: noise variance per coupling sample (>= 0).
        noise_free: skip the noise term entirely.
        seed: root seed for the noise substreams (unused if noise_free).

    Returns:
        CouplingTensor with y of shape (N_W, N_F, K).
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    signal = noiseless_couplings(chan, tx_cb, rx_cb)
    if noise_free or sigma2 == 0.0:
        return CouplingTensor(y=signal, noise_variance=0.0, noise_free=noise_free)
    noise = unit_noise_tensor(signal.shape, seed)
    return CouplingTensor(
        y=signal + np.sqrt(sigma2) * noise,
        noise_variance=float(sigma2),
        noise_free=False,
    )


def pair_energy(tensor: CouplingTensor, n_w: int, n_f: int) -> float:
    """Received energy estimate of one beam pair: sum_k |y[n_w, n_f, k]|^2."""
    if not 0 <= n_w < tensor.num_rx_beams:
        raise IndexError(f"receive beam {n_w} out of range")
    if not 0 <= n_f < tensor.num_tx_beams:
        raise IndexError(f"transmit beam {n_f} out of range")
    return float(np.sum(np.abs(tensor.y[n_w, n_f, :]) ** 2))


def pair_energies(tensor: CouplingTensor) -> np.ndarray:
    """(N_W, N_F) matrix of per-pair energies (vectorized pair_energy)."""
    return np.sum(np.abs(tensor.y) ** 2, axis=2)


def export_couplings_csv(tensor: CouplingTensor, path: str) -> None:
    """Write the tensor as (n_w, n_f, k, re, im) rows."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n_w", "n_f", "k", "re", "im"])
            n_w, n_f, num_k = tensor.y.shape
            for i in range(n_w):
                for j in range(n_f):
                    for k in range(num_k):
                        val = tensor.y[i, j, k]
                        writer.writerow(
                            [i, j, k, repr(float(val.real)), repr(float(val.imag))]
                        )
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
