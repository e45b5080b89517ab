"""Tests for the beam codebooks.

The angle grids are checked against hand-computed arcsine values, and the
coherence of each family against independently derived constants.
"""

import csv

import numpy as np
import pytest

from beamlink.codebooks import (
    Codebook,
    export_codebook_csv,
    max_coherence,
    orthogonal_codebook,
    steering_vector,
    strong_coherent_codebook,
    weak_coherent_codebook,
)

# arcsin((i - 4) / 4) in degrees for i = 1..8, worked out independently
ORTH8_ANGLES = [
    -48.590377890729144,
    -30.000000000000004,
    -14.477512185929925,
    0.0,
    14.477512185929925,
    30.000000000000004,
    48.590377890729144,
    90.0,
]


def test_steering_vector_unit_norm_and_phase():
    v = steering_vector(30.0, 8)
    assert v.shape == (8,)
    assert np.linalg.norm(v) == pytest.approx(1.0)
    # element n carries phase pi * sin(30 deg) * n = pi n / 2
    expected = np.exp(1j * np.pi * 0.5 * np.arange(8)) / np.sqrt(8)
    np.testing.assert_allclose(v, expected, atol=1e-15)


def test_steering_vector_broadside_is_constant():
    v = steering_vector(0.0, 16)
    np.testing.assert_allclose(v, np.full(16, 1 / 4.0), atol=1e-15)


def test_steering_vector_vectorized():
    angles = np.array([-30.0, 0.0, 45.0])
    mat = steering_vector(angles, 4)
    assert mat.shape == (4, 3)
    for j, ang in enumerate(angles):
        np.testing.assert_array_equal(mat[:, j], steering_vector(float(ang), 4))


def test_steering_vector_rejects_out_of_range():
    with pytest.raises(ValueError):
        steering_vector(91.0, 8)


def test_endfire_beams_coincide():
    """+90 and -90 degrees alias to the same physical beam on a ULA."""
    plus = steering_vector(90.0, 8)
    minus = steering_vector(-90.0, 8)
    np.testing.assert_allclose(plus, minus.conj(), atol=1e-12)
    # identical up to per-element phase exp(+/- i pi n); the beam patterns match
    assert abs(abs(np.vdot(plus, minus)) - 1.0) < 1e-12


def test_orthogonal_codebook_angles():
    cb = orthogonal_codebook(8)
    np.testing.assert_allclose(cb.steering_angles_deg, ORTH8_ANGLES, atol=1e-12)


def test_orthogonal_codebook_gram_is_identity():
    for n in (8, 16, 32):
        cb = orthogonal_codebook(n)
        gram = cb.beams.conj().T @ cb.beams
        assert np.abs(gram - np.eye(n)).max() < 1e-10
        assert cb.coherence < 1e-10


def test_orthogonal_codebook_rejects_odd_sizes():
    with pytest.raises(ValueError):
        orthogonal_codebook(7)


def test_weak_coherent_codebook_coherence():
    cb = weak_coherent_codebook()
    assert cb.num_antennas == 32
    assert cb.num_beams == 36
    assert cb.coherence == pytest.approx(0.1226, abs=0.005)


def test_strong_coherent_codebook_coherence():
    cb = strong_coherent_codebook()
    assert cb.num_antennas == 32
    assert cb.num_beams == 32
    assert cb.coherence == pytest.approx(0.99, abs=0.005)
    # the angle grid is uniform in angle, not in sine
    steps = np.diff(cb.steering_angles_deg)
    np.testing.assert_allclose(steps, 180.0 / 32, atol=1e-12)


def test_coherence_ordering_across_families():
    orth = orthogonal_codebook(32)
    weak = weak_coherent_codebook()
    strong = strong_coherent_codebook()
    assert orth.coherence < weak.coherence < strong.coherence


def test_codebook_validates_shapes_and_norms():
    beams = np.ones((4, 2), dtype=complex)  # not unit norm
    with pytest.raises(ValueError):
        Codebook(num_antennas=4, beams=beams, steering_angles_deg=np.zeros(2))
    good = np.eye(4, 2, dtype=complex)
    with pytest.raises(ValueError):
        Codebook(num_antennas=4, beams=good, steering_angles_deg=np.zeros(3))


def test_max_coherence_of_identity_is_zero():
    assert max_coherence(np.eye(5, dtype=complex)) == 0.0


def test_export_codebook_csv(tmp_path):
    cb = orthogonal_codebook(4)
    out = tmp_path / "orth4.csv"
    export_codebook_csv(cb, str(out))
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["beam", "angle_deg"] + [f"{p}{n}" for n in range(4) for p in ("re", "im")]
    assert len(rows) == 5
    # round trip one beam
    got = np.array(
        [float(rows[2][2 + 2 * n]) + 1j * float(rows[2][3 + 2 * n]) for n in range(4)]
    )
    np.testing.assert_allclose(got, cb.beams[:, 1], atol=0)
