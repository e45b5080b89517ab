"""Analog beamforming codebooks for half-wavelength uniform linear arrays.

Three codebook families are provided, distinguished by their worst-case
pairwise coherence ``max |f_i^H f_j|``:

* ``orthogonal_codebook`` - a DFT grid (as many beams as antennas), with
  beams exactly orthogonal.
* ``weak_coherent_codebook`` - a slightly oversampled arcsine grid (36
  beams on 32 antennas by default), coherence about 0.12.
* ``strong_coherent_codebook`` - a grid uniform in angle rather than in
  sine space, which packs beams very densely near endfire; coherence about
  0.99 for 32 beams on 32 antennas.

Angles follow the convention that a beam at ``angle_deg`` steers a
half-wavelength ULA with per-element phase ``pi * sin(angle) * n``.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Codebook",
    "steering_vector",
    "max_coherence",
    "orthogonal_codebook",
    "weak_coherent_codebook",
    "strong_coherent_codebook",
    "export_codebook_csv",
]

_UNIT_NORM_TOL = 1e-12


def steering_vector(angle_deg, num_antennas: int) -> np.ndarray:
    """Unit-norm array response of a half-wavelength ULA.

    Element ``n`` (0-based) has phase ``pi * sin(angle) * n``; the vector is
    scaled by ``1/sqrt(num_antennas)`` so its Euclidean norm is 1.

    Args:
        angle_deg: scalar angle or array of angles, in degrees, within
            [-90, 90].
        num_antennas: number of array elements.

    Returns:
        (num_antennas,) vector for a scalar angle, or an
        (num_antennas, len(angle_deg)) matrix with one column per angle.
    """
    if num_antennas < 1:
        raise ValueError("num_antennas must be positive")
    angles = np.atleast_1d(np.asarray(angle_deg, dtype=np.float64))
    if np.any(np.abs(angles) > 90.0 + 1e-9):
        raise ValueError("steering angles must lie in [-90, 90] degrees")
    n = np.arange(num_antennas)[:, None]
    phase = np.pi * np.sin(np.deg2rad(angles))[None, :]
    vectors = np.exp(1j * phase * n) / np.sqrt(num_antennas)
    if np.isscalar(angle_deg) or np.ndim(angle_deg) == 0:
        return vectors[:, 0]
    return vectors


def max_coherence(beams: np.ndarray) -> float:
    """Largest pairwise coherence ``max_{i != j} |f_i^H f_j|`` of unit-norm columns."""
    gram = np.abs(beams.conj().T @ beams)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max()) if gram.size else 0.0


@dataclass(frozen=True)
class Codebook:
    """A set of unit-norm analog beams for one end of the link.

    Attributes:
        num_antennas: array size the beams are built for.
        beams: (num_antennas, num_beams) complex matrix, one beam per column.
        steering_angles_deg: (num_beams,) pointing angle of each beam.
        coherence: worst-case pairwise coherence, computed at construction.
    """

    num_antennas: int
    beams: np.ndarray
    steering_angles_deg: np.ndarray
    coherence: float = field(init=False)

    def __post_init__(self):
        if self.beams.ndim != 2 or self.beams.shape[0] != self.num_antennas:
            raise ValueError(
                f"beams must be ({self.num_antennas}, num_beams), got {self.beams.shape}"
            )
        if self.beams.shape[1] != len(self.steering_angles_deg):
            raise ValueError("one steering angle is required per beam")
        norms = np.linalg.norm(self.beams, axis=0)
        if np.any(np.abs(norms - 1.0) > _UNIT_NORM_TOL):
            raise ValueError("all beams must have unit norm")
        object.__setattr__(self, "coherence", max_coherence(self.beams))

    @property
    def num_beams(self) -> int:
        return self.beams.shape[1]


def _from_angles(angles_deg: np.ndarray, num_antennas: int) -> Codebook:
    beams = steering_vector(angles_deg, num_antennas)
    return Codebook(
        num_antennas=num_antennas,
        beams=beams,
        steering_angles_deg=np.asarray(angles_deg, dtype=np.float64),
    )


def orthogonal_codebook(num_beams: int) -> Codebook:
    """DFT codebook: ``num_beams`` beams on ``num_beams`` antennas.

    Beam ``i`` (1-based) points at ``asin((i - n/2) / (n/2))``, i.e. the
    beams are uniform in sine space with step ``2/n``, which makes them
    exactly orthogonal.  The sine grid reaches +1 at the top beam; at that
    grid edge +90 and -90 degrees describe the same physical beam.

    Args:
        num_beams: number of beams (= number of antennas); must be even and
            positive so that the grid is symmetric around broadside.
    """
    if num_beams < 2 or num_beams % 2 != 0:
        raise ValueError("orthogonal codebook requires an even number of beams >= 2")
    index = np.arange(1, num_beams + 1)
    sines = (index - num_beams / 2) / (num_beams / 2)
    angles = np.degrees(np.arcsin(sines))
    return _from_angles(angles, num_beams)


def weak_coherent_codebook(num_antennas: int = 32, num_beams: int = 36) -> Codebook:
    """Oversampled arcsine-grid codebook with mild inter-beam coherence.

    Same sine-uniform construction as the orthogonal codebook but with more
    beams than antennas, so neighbouring beams overlap slightly.  The
    default 36 beams on a 32-element array give a coherence of about 0.12.
    """
    if num_beams <= num_antennas:
        raise ValueError("weak coherent codebook must have more beams than antennas")
    if num_beams % 2 != 0:
        raise ValueError("number of beams must be even")
    index = np.arange(1, num_beams + 1)
    sines = (index - num_beams / 2) / (num_beams / 2)
    angles = np.degrees(np.arcsin(sines))
    return _from_angles(angles, num_antennas)


def strong_coherent_codebook(num_antennas: int = 32, num_beams: int | None = None) -> Codebook:
    """Angle-uniform codebook whose endfire beams are nearly parallel.

    Beam ``i`` (1-based) points at ``-90 + 180 * i / num_beams`` degrees.
    Because the sine compresses near +/-90 degrees, beams at the ends of
    the grid are almost identical: 32 beams on 32 antennas have a
    worst-case coherence of about 0.99.
    """
    if num_beams is None:
        num_beams = num_antennas
    if num_beams < 2:
        raise ValueError("need at least two beams")
    index = np.arange(1, num_beams + 1)
    angles = -90.0 + 180.0 * index / num_beams
    return _from_angles(angles, num_antennas)


def export_codebook_csv(codebook: Codebook, path: str) -> None:
    """Write a codebook to CSV, one row per beam.

    Columns: beam index, steering angle in degrees, then interleaved
    real/imaginary parts of the beam entries.  The file is written
    atomically (temp file + rename).
    """
    header = ["beam", "angle_deg"]
    for n in range(codebook.num_antennas):
        header += [f"re{n}", f"im{n}"]
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(codebook.num_beams):
                row = [i, repr(float(codebook.steering_angles_deg[i]))]
                for entry in codebook.beams[:, i]:
                    row += [repr(float(entry.real)), repr(float(entry.imag))]
                writer.writerow(row)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
