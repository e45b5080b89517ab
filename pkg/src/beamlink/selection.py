"""Analog beam selection and digital beamforming from implicit CSI.

The pipeline implemented here never sees the channel matrix itself, only
the coupling tensor from training:

1. ``initial_beam_selection`` greedily keeps the M strongest beam pairs
   by received energy, excluding both beams of a chosen pair from further
   rounds, and enumerates all C(M, N_RF)-sized beam combinations per side.
2. ``estimate_effective_channel`` whitens the coupling submatrix of one
   combination pair through the inverse square roots of the codebook Gram
   matrices, giving the effective channel estimate per subcarrier.
3. ``select_beams`` scores every combination pair with one of three
   criteria (exact log-det, Frobenius norm for the low-SNR regime,
   squared determinant for the high-SNR regime) and keeps the argmax.
4. ``digital_beamforming`` builds the per-subcarrier digital stages from
   the SVD of the estimated effective channel, absorbing the Gram
   whiteners so the transmit power and combiner orthogonality constraints
   hold exactly.
"""

from __future__ import annotations

import csv
import itertools
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .codebooks import Codebook
from .linalg import IllConditionedGramError, inv_sqrt_hermitian, svd_phase_fixed
from .training import CouplingTensor, pair_energies

__all__ = [
    "CandidateSets",
    "EffectiveChannelEstimate",
    "BeamformerSet",
    "NoViableCandidatesError",
    "initial_beam_selection",
    "estimate_effective_channel",
    "selection_criterion",
    "select_beams",
    "digital_beamforming",
    "effective_channel_grid",
    "criterion_values_from_singular_values",
    "export_selection_diagnostics_csv",
]


class NoViableCandidatesError(RuntimeError):
    """Every candidate beam combination was numerically unusable."""


@dataclass(frozen=True)
class CandidateSets:
    """Outcome of the initial energy-based screen.

    Attributes:
        selected_pairs: M (tx_beam, rx_beam) codebook index pairs, in
            selection (descending-energy) order.
        tx_combos: all C(M, N_RF) transmit-beam index subsets, lexicographic
            over selection order; entries are codebook indices.
        rx_combos: same on the receive side.
    """

    selected_pairs: tuple[tuple[int, int], ...]
    tx_combos: tuple[tuple[int, ...], ...]
    rx_combos: tuple[tuple[int, ...], ...]

    @property
    def num_pairs(self) -> int:
        return len(self.selected_pairs)

    @property
    def num_tx_combos(self) -> int:
        return len(self.tx_combos)

    @property
    def num_rx_combos(self) -> int:
        return len(self.rx_combos)


@dataclass(frozen=True)
class EffectiveChannelEstimate:
    """Whitened effective channel of one combination pair.

    ``flat_index = tx_combo_index * num_rx_combos + rx_combo_index`` is the
    tie-breaking order used by :func:`select_beams`.
    """

    per_subcarrier: np.ndarray  # (K, N_RF, N_RF)
    tx_combo_index: int
    rx_combo_index: int
    flat_index: int

    def __post_init__(self):
        if self.per_subcarrier.ndim != 3 or (
            self.per_subcarrier.shape[1] != self.per_subcarrier.shape[2]
        ):
            raise ValueError("per_subcarrier must be (K, N_RF, N_RF)")

    @property
    def num_subcarriers(self) -> int:
        return self.per_subcarrier.shape[0]

    @property
    def n_rf(self) -> int:
        return self.per_subcarrier.shape[1]


@dataclass(frozen=True)
class BeamformerSet:
    """Analog + per-subcarrier digital beamformers for both link ends.

    Attributes:
        tx_analog: (N_T, N_RF) selected transmit codebook columns.
        rx_analog: (N_R, N_RF) selected receive codebook columns.
        tx_digital: (K, N_RF, N_S) per-subcarrier transmit digital stages.
        rx_digital: (K, N_RF, N_S) per-subcarrier receive digital stages.

    Power-constraint residuals are *not* enforced here (the explicit-CSI
    reference produces sets whose combiner is deliberately not
    orthogonalized); see metrics.audit_power_constraints.
    """

    tx_analog: np.ndarray
    rx_analog: np.ndarray
    tx_digital: np.ndarray
    rx_digital: np.ndarray

    def __post_init__(self):
        if self.tx_analog.ndim != 2 or self.rx_analog.ndim != 2:
            raise ValueError("analog beamformers must be matrices")
        n_rf = self.tx_analog.shape[1]
        if self.rx_analog.shape[1] != n_rf:
            raise ValueError("transmit and receive must use the same RF chain count")
        if self.tx_digital.ndim != 3 or self.rx_digital.ndim != 3:
            raise ValueError("digital beamformers must be (K, N_RF, N_S) stacks")
        if self.tx_digital.shape[0] != self.rx_digital.shape[0]:
            raise ValueError("digital stages must cover the same subcarriers")
        if self.tx_digital.shape[1] != n_rf or self.rx_digital.shape[1] != n_rf:
            raise ValueError("digital stage row count must equal N_RF")
        if self.tx_digital.shape[2] != self.rx_digital.shape[2]:
            raise ValueError("stream counts must match")
        for name, analog in (("tx_analog", self.tx_analog), ("rx_analog", self.rx_analog)):
            norms = np.linalg.norm(analog, axis=0)
            if np.any(np.abs(norms - 1.0) > 1e-9):
                raise ValueError(f"{name} columns must be unit norm (codebook members)")

    @property
    def num_subcarriers(self) -> int:
        return self.tx_digital.shape[0]

    @property
    def n_rf(self) -> int:
        return self.tx_analog.shape[1]

    @property
    def n_s(self) -> int:
        return self.tx_digital.shape[2]


def initial_beam_selection(y: CouplingTensor, m: int, n_rf: int) -> CandidateSets:
    """Greedy energy-based screen keeping the M strongest beam pairs.

    Each round picks the (receive, transmit) pair with the largest
    received energy, then removes BOTH beams from further consideration,
    so no transmit or receive beam repeats among the M pairs.  Ties go to
    the smallest (n_w, n_f) pair in lexicographic order.

    Args:
        y: coupling tensor from training.
        m: number of pairs to keep.
        n_rf: RF chain count; combinations have this size.

    Raises:
        ValueError: if m < n_rf or m exceeds the smaller codebook.
    """
    if n_rf < 1:
        raise ValueError("n_rf must be positive")
    if m < n_rf:
        raise ValueError(f"m={m} must be at least n_rf={n_rf}")
    if m > min(y.num_tx_beams, y.num_rx_beams):
        raise ValueError(
            f"m={m} exceeds the available beams "
            f"(tx {y.num_tx_beams}, rx {y.num_rx_beams})"
        )
    energies = pair_energies(y).copy()
    pairs: list[tuple[int, int]] = []
    for _ in range(m):
        # argmax over the flattened row-major array: first maximum is the
        # lexicographically smallest (n_w, n_f) among ties.
        flat = int(np.argmax(energies))
        n_w, n_f = divmod(flat, energies.shape[1])
        pairs.append((n_f, n_w))
        energies[n_w, :] = -np.inf
        energies[:, n_f] = -np.inf
    tx_order = [p[0] for p in pairs]
    rx_order = [p[1] for p in pairs]
    return CandidateSets(
        selected_pairs=tuple(pairs),
        tx_combos=tuple(itertools.combinations(tx_order, n_rf)),
        rx_combos=tuple(itertools.combinations(rx_order, n_rf)),
    )


def _whitener(cb: Codebook, combo: tuple[int, ...], label: str) -> np.ndarray:
    """Inverse square root of the Gram matrix of the combo's beams."""
    beams = cb.beams[:, list(combo)]
    gram = beams.conj().T @ beams
    return inv_sqrt_hermitian(gram, label=label)


def estimate_effective_channel(
    y: CouplingTensor,
    sets: CandidateSets,
    i_f: int,
    i_w: int,
    tx_cb: Codebook,
    rx_cb: Codebook,
) -> EffectiveChannelEstimate:
    """Whitened effective-channel estimate for one combination pair.

    Gathers the coupling submatrix Y_i[k] of the combo's beams and returns
    (W^H W)^{-1/2} Y_i[k] (F^H F)^{-1/2} per subcarrier.  With orthogonal
    codebooks the Grams are identity and the estimate is the submatrix
    itself.

    Raises:
        IllConditionedGramError: when the combo picks near-parallel beams;
            the error is tagged with the offending combo index.
    """
    if not 0 <= i_f < sets.num_tx_combos:
        raise IndexError(f"tx combo index {i_f} out of range")
    if not 0 <= i_w < sets.num_rx_combos:
        raise IndexError(f"rx combo index {i_w} out of range")
    tx_combo = sets.tx_combos[i_f]
    rx_combo = sets.rx_combos[i_w]
    b_f = _whitener(tx_cb, tx_combo, label=f"tx combo {i_f}")
    b_w = _whitener(rx_cb, rx_combo, label=f"rx combo {i_w}")
    sub = y.y[np.ix_(rx_combo, tx_combo)]  # (N_RF, N_RF, K)
    sub = np.moveaxis(sub, 2, 0)  # (K, N_RF, N_RF)
    est = np.einsum("ij,kjl,lm->kim", b_w, sub, b_f, optimize=True)
    return EffectiveChannelEstimate(
        per_subcarrier=est,
        tx_combo_index=i_f,
        rx_combo_index=i_w,
        flat_index=i_f * sets.num_rx_combos + i_w,
    )


def criterion_values_from_singular_values(
    svals: np.ndarray, mode: str, gamma: float | None = None, n_s: int | None = None
) -> np.ndarray:
    """Evaluate a selection criterion from singular-value stacks.

    Args:
        svals: (..., K, N_RF) singular values, descending along the last
            axis, one stack of K subcarriers per leading index.
        mode: 'eig' (sum of log2(1 + gamma * s^2) over the n_s largest),
            'fro' (sum of all s^2), or 'det' (sum over k of prod s^2).
        gamma: linear SNR; required for 'eig'.
        n_s: stream count for 'eig'; defaults to all values.

    Returns:
        Criterion value summed over subcarriers, shape ``svals.shape[:-2]``.
    """
    if mode == "eig":
        if gamma is None or gamma <= 0:
            raise ValueError("eig criterion requires gamma > 0")
        top = svals if n_s is None else svals[..., :n_s]
        return np.sum(np.log2(1.0 + gamma * top**2), axis=(-2, -1))
    if mode == "fro":
        return np.sum(svals**2, axis=(-2, -1))
    if mode == "det":
        return np.sum(np.prod(svals**2, axis=-1), axis=-1)
    raise ValueError(f"unknown criterion mode {mode!r}")


def selection_criterion(
    est: EffectiveChannelEstimate, mode: str, gamma: float | None = None,
    n_s: int | None = None,
) -> float:
    """Score one effective-channel estimate under the given criterion."""
    svals = np.linalg.svd(est.per_subcarrier, compute_uv=False)
    return float(criterion_values_from_singular_values(svals, mode, gamma, n_s))


def effective_channel_grid(
    y: CouplingTensor, sets: CandidateSets, tx_cb: Codebook, rx_cb: Codebook
):
    """Whitened estimates for every viable combination pair, batched.

    Combos whose Gram matrix cannot be inverted (near-parallel beams) are
    skipped, mirroring how a single estimate would fail.

    Returns:
        (pair_indices, grid, skipped): pair_indices is a list of
        (i_f, i_w) in flat-index order; grid is the matching
        (P, K, N_RF, N_RF) stack; skipped lists (i_f, i_w, reason) for
        dropped pairs.
    """
    tx_whiteners: list[np.ndarray | None] = []
    rx_whiteners: list[np.ndarray | None] = []
    tx_errors: list[str] = []
    rx_errors: list[str] = []
    for i_f, combo in enumerate(sets.tx_combos):
        try:
            tx_whiteners.append(_whitener(tx_cb, combo, label=f"tx combo {i_f}"))
            tx_errors.append("")
        except IllConditionedGramError as exc:
            tx_whiteners.append(None)
            tx_errors.append(str(exc))
    for i_w, combo in enumerate(sets.rx_combos):
        try:
            rx_whiteners.append(_whitener(rx_cb, combo, label=f"rx combo {i_w}"))
            rx_errors.append("")
        except IllConditionedGramError as exc:
            rx_whiteners.append(None)
            rx_errors.append(str(exc))

    pair_indices: list[tuple[int, int]] = []
    blocks: list[np.ndarray] = []
    skipped: list[tuple[int, int, str]] = []
    for i_f, b_f in enumerate(tx_whiteners):
        tx_combo = list(sets.tx_combos[i_f])
        for i_w, b_w in enumerate(rx_whiteners):
            if b_f is None or b_w is None:
                skipped.append((i_f, i_w, tx_errors[i_f] or rx_errors[i_w]))
                continue
            sub = np.moveaxis(y.y[np.ix_(list(sets.rx_combos[i_w]), tx_combo)], 2, 0)
            blocks.append(np.einsum("ij,kjl,lm->kim", b_w, sub, b_f, optimize=True))
            pair_indices.append((i_f, i_w))
    grid = np.stack(blocks) if blocks else np.empty((0,))
    return pair_indices, grid, skipped


def select_beams(
    y: CouplingTensor,
    sets: CandidateSets,
    mode: str,
    gamma: float | None,
    tx_cb: Codebook,
    rx_cb: Codebook,
    n_s: int | None = None,
):
    """Pick the combination pair maximizing the selection criterion.

    Ties break toward the smallest flat index
    ``i = i_f * num_rx_combos + i_w``.

    Returns:
        (i_f, i_w, EffectiveChannelEstimate) of the winner.

    Raises:
        NoViableCandidatesError: if every combination pair was skipped.
    """
    pair_indices, grid, skipped = effective_channel_grid(y, sets, tx_cb, rx_cb)
    if not pair_indices:
        raise NoViableCandidatesError(
            f"all {sets.num_tx_combos * sets.num_rx_combos} candidate combinations "
            f"were numerically unusable (first: {skipped[0][2] if skipped else 'n/a'})"
        )
    svals = np.linalg.svd(grid, compute_uv=False)
    values = criterion_values_from_singular_values(svals, mode, gamma, n_s)
    # pair_indices is in ascending flat-index order and argmax returns the
    # first maximum, which realizes the smallest-flat-index tie-break.
    best = int(np.argmax(values))
    i_f, i_w = pair_indices[best]
    est = EffectiveChannelEstimate(
        per_subcarrier=grid[best],
        tx_combo_index=i_f,
        rx_combo_index=i_w,
        flat_index=i_f * sets.num_rx_combos + i_w,
    )
    return i_f, i_w, est


def digital_beamforming(
    est: EffectiveChannelEstimate,
    tx_cb: Codebook,
    rx_cb: Codebook,
    sets: CandidateSets,
    n_s: int,
) -> BeamformerSet:
    """Per-subcarrier digital stages from the SVD of the estimate.

    The digital precoder is (F^H F)^{-1/2} times the top right-singular
    vectors, the combiner (W^H W)^{-1/2} times the top left-singular
    vectors; the whiteners make the transmit-power and combiner
    orthogonality constraints hold exactly.
    """
    if not 1 <= n_s <= est.n_rf:
        raise ValueError(f"n_s must be in [1, {est.n_rf}]")
    tx_combo = sets.tx_combos[est.tx_combo_index]
    rx_combo = sets.rx_combos[est.rx_combo_index]
    b_f = _whitener(tx_cb, tx_combo, label=f"tx combo {est.tx_combo_index}")
    b_w = _whitener(rx_cb, rx_combo, label=f"rx combo {est.rx_combo_index}")
    svd = svd_phase_fixed(est.per_subcarrier)
    tx_digital = np.einsum("ij,kjm->kim", b_f, svd.right[:, :, :n_s], optimize=True)
    rx_digital = np.einsum("ij,kjm->kim", b_w, svd.left[:, :, :n_s], optimize=True)
    return BeamformerSet(
        tx_analog=tx_cb.beams[:, list(tx_combo)],
        rx_analog=rx_cb.beams[:, list(rx_combo)],
        tx_digital=tx_digital,
        rx_digital=rx_digital,
    )


def export_selection_diagnostics_csv(
    y: CouplingTensor,
    sets: CandidateSets,
    mode: str,
    gamma: float | None,
    tx_cb: Codebook,
    rx_cb: Codebook,
    path: str,
    n_s: int | None = None,
) -> None:
    """Dump per-combination criterion values (or skip reasons) to CSV."""
    pair_indices, grid, skipped = effective_channel_grid(y, sets, tx_cb, rx_cb)
    values: dict[tuple[int, int], float] = {}
    if pair_indices:
        svals = np.linalg.svd(grid, compute_uv=False)
        for pair, val in zip(
            pair_indices, criterion_values_from_singular_values(svals, mode, gamma, n_s)
        ):
            values[pair] = float(val)
    reasons = {(i_f, i_w): reason for i_f, i_w, reason in skipped}
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i_f", "i_w", "flat_index", "criterion", "value", "skipped"])
            for i_f in range(sets.num_tx_combos):
                for i_w in range(sets.num_rx_combos):
                    flat = i_f * sets.num_rx_combos + i_w
                    if (i_f, i_w) in values:
                        writer.writerow([i_f, i_w, flat, mode, repr(values[i_f, i_w]), ""])
                    else:
                        writer.writerow(
                            [i_f, i_w, flat, mode, "", reasons.get((i_f, i_w), "")]
                        )
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
