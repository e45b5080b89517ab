"""Complex linear-algebra kernels shared by the simulator.

Everything here is a thin, deterministic layer over LAPACK (via numpy):
the value added is a fixed phase convention for singular vectors, strict
validation, and loud failures instead of silent regularization.  All
functions accept stacked ("batched") inputs where noted, operating on the
trailing two axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LinalgError",
    "SvdConvergenceError",
    "IllConditionedGramError",
    "SvdResult",
    "as_matrix",
    "svd_phase_fixed",
    "inv_sqrt_hermitian",
    "inv_hermitian",
    "frobenius_norm_sq",
    "det_abs_sq",
    "kron",
]

# Relative eigenvalue floor below which a Gram matrix is treated as singular.
GRAM_CONDITION_FLOOR = 1e-10

# Maximum allowed deviation from Hermitian symmetry, relative to the largest
# entry magnitude.
HERMITIAN_TOL = 1e-12


class LinalgError(Exception):
    """Base class for numerical failures in this module."""


class SvdConvergenceError(LinalgError):
    """The iterative SVD did not converge."""


class IllConditionedGramError(LinalgError):
    """A Gram matrix is numerically singular (or not positive definite).

    Attributes:
        label: optional caller-supplied context (e.g. which beam combination
            produced the offending Gram matrix).
    """

    def __init__(self, message: str, label: object | None = None):
        if label is not None:
            message = f"{message} [{label}]"
        super().__init__(message)
        self.label = label


def as_matrix(a) -> np.ndarray:
    """Validate and convert input to a complex128 matrix (or matrix stack).

    Args:
        a: array-like with at least 2 dimensions; the trailing two axes are
            the matrix axes.

    Returns:
        np.ndarray of dtype complex128.

    Raises:
        ValueError: if the input has fewer than 2 dimensions, is empty, or
            contains non-finite entries.
    """
    arr = np.asarray(a)
    if arr.ndim < 2:
        raise ValueError(f"expected a matrix, got array with shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("matrix must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    return arr.astype(np.complex128, copy=False)


@dataclass(frozen=True)
class SvdResult:
    """Compact SVD with a deterministic phase convention.

    ``left @ diag(singular_values) @ right^H`` reconstructs the input.  The
    phase of each left singular vector is fixed so that its
    largest-magnitude entry is real and positive (ties broken by the
    smallest row index); the matching right singular vector is rotated by
    the same phase so the product is unchanged.

    Attributes:
        left: (..., m, r) array with orthonormal columns.
        singular_values: (..., r) array, non-negative, descending.
        right: (..., n, r) array with orthonormal columns.
    """

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    def reconstruct(self) -> np.ndarray:
        """Multiply the factors back together."""
        scaled = self.left * self.singular_values[..., None, :]
        return scaled @ np.swapaxes(self.right, -2, -1).conj()


def svd_phase_fixed(a) -> SvdResult:
    """Compact SVD with the phase of each singular vector pinned.

    Supports stacked input of shape (..., m, n); factors are computed on
    the trailing two axes.

    Raises:
        SvdConvergenceError: if LAPACK fails to converge (the message names
            the matrix dimensions).
    """
    arr = as_matrix(a)
    try:
        left, values, right_h = np.linalg.svd(arr, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        m, n = arr.shape[-2:]
        raise SvdConvergenceError(f"SVD did not converge for {m}x{n} matrix") from exc
    right = np.swapaxes(right_h, -2, -1).conj()

    # Pivot = largest-magnitude entry of each left singular vector.  argmax
    # returns the first maximum, i.e. the smallest row index on ties.
    pivot_rows = np.argmax(np.abs(left), axis=-2)
    pivots = np.take_along_axis(left, pivot_rows[..., None, :], axis=-2)[..., 0, :]
    phases = pivots / np.abs(pivots)
    left = left * phases.conj()[..., None, :]
    right = right * phases.conj()[..., None, :]
    return SvdResult(left=left, singular_values=values, right=right)


def inv_sqrt_hermitian(a, label: object | None = None) -> np.ndarray:
    """Inverse matrix square root of a Hermitian positive-definite matrix.

    Computed through the eigendecomposition; eigenvalues are *not* clamped.
    A matrix whose smallest eigenvalue falls at or below
    ``GRAM_CONDITION_FLOOR`` times the largest is rejected so that a
    degenerate beam combination fails loudly instead of being silently
    regularized.

    Args:
        a: square Hermitian matrix.
        label: optional context included in the error message (e.g. the
            candidate combination index that produced ``a``).

    Returns:
        Hermitian matrix ``b`` with ``b @ a @ b == I``.

    Raises:
        ValueError: if ``a`` is not square or not Hermitian within tolerance.
        IllConditionedGramError: if ``a`` is numerically singular or not
            positive definite.
    """
    arr = as_matrix(a)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    scale = np.max(np.abs(arr))
    if np.max(np.abs(arr - arr.conj().T)) > HERMITIAN_TOL * max(scale, 1.0):
        raise ValueError("matrix is not Hermitian")
    eigvals, eigvecs = np.linalg.eigh(arr)
    if eigvals[-1] <= 0.0 or eigvals[0] <= GRAM_CONDITION_FLOOR * eigvals[-1]:
        raise IllConditionedGramError(
            f"Gram matrix is numerically singular (eigenvalues in [{eigvals[0]:.3e}, "
            f"{eigvals[-1]:.3e}])",
            label,
        )
    inv_sqrt = (eigvecs / np.sqrt(eigvals)) @ eigvecs.conj().T
    # Symmetrize to wash out rounding asymmetry from the two matmuls.
    return 0.5 * (inv_sqrt + inv_sqrt.conj().T)


def inv_hermitian(a, label: object | None = None) -> np.ndarray:
    """Inverse of a Hermitian positive-definite matrix.

    Same validation and conditioning rules as :func:`inv_sqrt_hermitian`.
    """
    arr = as_matrix(a)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    scale = np.max(np.abs(arr))
    if np.max(np.abs(arr - arr.conj().T)) > HERMITIAN_TOL * max(scale, 1.0):
        raise ValueError("matrix is not Hermitian")
    eigvals, eigvecs = np.linalg.eigh(arr)
    if eigvals[-1] <= 0.0 or eigvals[0] <= GRAM_CONDITION_FLOOR * eigvals[-1]:
        raise IllConditionedGramError(
            f"Gram matrix is numerically singular (eigenvalues in [{eigvals[0]:.3e}, "
            f"{eigvals[-1]:.3e}])",
            label,
        )
    inv = (eigvecs / eigvals) @ eigvecs.conj().T
    return 0.5 * (inv + inv.conj().T)


def frobenius_norm_sq(a) -> np.ndarray | float:
    """Squared Frobenius norm over the trailing two axes.

    Returns a scalar for a single matrix, an array for a stack.
    """
    arr = np.asarray(a)
    out = np.sum(np.abs(arr) ** 2, axis=(-2, -1))
    return float(out) if out.ndim == 0 else out


def det_abs_sq(a) -> np.ndarray | float:
    """Squared magnitude of the determinant over the trailing two axes."""
    arr = as_matrix(a)
    if arr.shape[-2] != arr.shape[-1]:
        raise ValueError(f"determinant requires a square matrix, got shape {arr.shape[-2:]}")
    out = np.abs(np.linalg.det(arr)) ** 2
    return float(out) if np.ndim(out) == 0 else out


def kron(a, b) -> np.ndarray:
    """Kronecker product of two matrices."""
    return np.kron(as_matrix(a), as_matrix(b))
