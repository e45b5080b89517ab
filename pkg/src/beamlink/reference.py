"""Explicit-CSI baseline: hybrid beamforming via orthogonal matching pursuit.

Given the exact per-subcarrier channel SVD, the wideband OMP baseline
approximates the top singular-vector slices with a sparse combination of
codebook beams shared across subcarriers:

1. score every unused codebook column against the current residuals,
   summed over subcarriers, and keep the best one;
2. solve the least-squares digital stage against the original targets;
3. recompute the residuals, renormalizing per subcarrier;
4. after the last RF chain, rescale each subcarrier's digital stage so
   the hybrid precoder carries exactly the stream power.

The combiner side runs the identical procedure on the left-singular
vectors.  Its digital stage is a least-squares fit, not an orthogonalized
combiner, so rate evaluation must use the general combined-noise
covariance rather than assuming white noise after combining.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .codebooks import Codebook
from .linalg import svd_phase_fixed
from .selection import BeamformerSet

__all__ = [
    "OmpResult",
    "omp_hybrid",
    "reference_beamformers",
    "reference_from_svd",
    "export_selected_indices_csv",
]

_ZERO_RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class OmpResult:
    """Sparse hybrid approximation of a stack of target matrices.

    Attributes:
        analog: (N, N_RF) selected codebook columns.
        digital: (K, N_RF, N_S) per-subcarrier least-squares stages, scaled
            so ``norm(analog @ digital[k], 'fro')**2 == n_s`` for every k.
        selected_indices: codebook column indices in selection order.
        residual_history: total squared residual norm (against the original
            targets, before per-subcarrier renormalization) after each
            iteration; non-increasing.
    """

    analog: np.ndarray
    digital: np.ndarray
    selected_indices: tuple[int, ...]
    residual_history: tuple[float, ...] = ()


def omp_hybrid(targets: np.ndarray, cb: Codebook, n_rf: int, n_s: int | None = None) -> OmpResult:
    """Greedy sparse approximation of per-subcarrier singular-vector slices.

    Args:
        targets: (K, N, N_S) stack; columns orthonormal per subcarrier
            (slices of U[k] or V[k]).
        cb: codebook providing the candidate columns.
        n_rf: number of columns to select (RF chains).
        n_s: stream count used for the final power normalization; defaults
            to the target column count.

    Returns:
        OmpResult; an atom is never reused across iterations.
    """
    targets = np.asarray(targets, dtype=np.complex128)
    if targets.ndim != 3:
        raise ValueError("targets must be a (K, N, N_S) stack")
    num_k, n, num_cols = targets.shape
    if n != cb.num_antennas:
        raise ValueError(
            f"targets live on {n} antennas but the codebook has {cb.num_antennas}"
        )
    if not 1 <= n_rf <= cb.num_beams:
        raise ValueError(f"n_rf must be in [1, {cb.num_beams}]")
    if n_s is None:
        n_s = num_cols

    residual = targets.copy()
    selected: list[int] = []
    history: list[float] = []
    available = np.ones(cb.num_beams, dtype=bool)
    for _ in range(n_rf):
        # projections of every candidate beam onto the residuals: (K, N_F, N_S)
        proj = np.einsum("nf,kns->kfs", cb.beams.conj(), residual, optimize=True)
        scores = np.sum(np.abs(proj) ** 2, axis=(0, 2))
        scores[~available] = -np.inf
        atom = int(np.argmax(scores))
        selected.append(atom)
        available[atom] = False

        analog = cb.beams[:, selected]  # (N, i)
        gram_inv = np.linalg.inv(analog.conj().T @ analog)
        coeffs = np.einsum(
            "ij,nj,kns->kis", gram_inv, analog.conj(), targets, optimize=True
        )
        residual = targets - np.einsum("ni,kis->kns", analog, coeffs, optimize=True)
        norms = np.linalg.norm(residual, axis=(1, 2))
        history.append(float(np.sum(norms**2)))
        safe = norms >= _ZERO_RESIDUAL_TOL
        residual[safe] = residual[safe] / norms[safe, None, None]

    analog = cb.beams[:, selected]
    gram_inv = np.linalg.inv(analog.conj().T @ analog)
    digital = np.einsum("ij,nj,kns->kis", gram_inv, analog.conj(), targets, optimize=True)
    hybrid_norms = np.linalg.norm(
        np.einsum("ni,kis->kns", analog, digital, optimize=True), axis=(1, 2)
    )
    digital = digital * (np.sqrt(n_s) / hybrid_norms)[:, None, None]
    return OmpResult(
        analog=analog,
        digital=digital,
        selected_indices=tuple(selected),
        residual_history=tuple(history),
    )


def reference_beamformers(
    chan: ChannelRealization, tx_cb: Codebook, rx_cb: Codebook, n_rf: int, n_s: int
) -> BeamformerSet:
    """Run the OMP baseline on both link ends from the exact channel SVD.

    The precoder approximates the top right-singular vectors, the combiner
    the top left-singular vectors, each with its own codebook.
    """
    svd = svd_phase_fixed(chan.per_subcarrier)
    return reference_from_svd(svd.left, svd.right, tx_cb, rx_cb, n_rf, n_s)


def reference_from_svd(
    left: np.ndarray,
    right: np.ndarray,
    tx_cb: Codebook,
    rx_cb: Codebook,
    n_rf: int,
    n_s: int,
) -> BeamformerSet:
    """OMP baseline from precomputed singular-vector stacks.

    Useful when the channel SVD is already available (it is shared with
    the fully digital baseline in the Monte Carlo harness).
    """
    precoder = omp_hybrid(right[:, :, :n_s], tx_cb, n_rf, n_s=n_s)
    combiner = omp_hybrid(left[:, :, :n_s], rx_cb, n_rf, n_s=n_s)
    return BeamformerSet(
        tx_analog=precoder.analog,
        rx_analog=combiner.analog,
        tx_digital=precoder.digital,
        rx_digital=combiner.digital,
    )


def export_selected_indices_csv(result: OmpResult, path: str) -> None:
    """Write the selection-order beam trace (step, beam_index) to CSV."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "beam_index"])
            for step, idx in enumerate(result.selected_indices):
                writer.writerow([step, idx])
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
