"""Dense complex matrix kernel.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  All routines
are pure; none of them mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

DEFAULT_TOL = 1e-10


class MatrixError(ValueError):
    """Input is not a valid square, finite complex matrix."""


def as_matrix(t, name: str = "matrix") -> np.ndarray:
    a = np.asarray(t, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise MatrixError(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise MatrixError(f"{name} has non-finite entries")
    return a


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.flags.writeable = False
    return a


def adjoint(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def frobenius_inner(a, b) -> float:
    """Real inner product ``Re tr(b* a)`` on the space of complex matrices."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise MatrixError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.real(np.vdot(b, a)))


def frobenius_norm(a) -> float:
    return float(np.linalg.norm(a))


def _scale(t: np.ndarray) -> float:
    return 1.0 + frobenius_norm(t)


def is_hermitian(t, tol: float = DEFAULT_TOL) -> bool:
    t = as_matrix(t)
    return frobenius_norm(t - adjoint(t)) <= tol * _scale(t)


def is_unitary(t, tol: float = DEFAULT_TOL) -> bool:
    t = as_matrix(t)
    r = t.shape[0]
    return frobenius_norm(adjoint(t) @ t - np.eye(r)) <= tol * (1.0 + np.sqrt(r))


def normality_defect(t) -> float:
    """Frobenius norm of the self-commutator ``T T* - T* T``."""
    t = as_matrix(t)
    return frobenius_norm(t @ adjoint(t) - adjoint(t) @ t)


def is_normal(t, tol: float = DEFAULT_TOL) -> bool:
    t = as_matrix(t)
    return normality_defect(t) <= tol * _scale(t) ** 2


def is_psd(t, tol: float = DEFAULT_TOL) -> bool:
    t = as_matrix(t)
    if not is_hermitian(t, tol):
        return False
    w = np.linalg.eigvalsh((t + adjoint(t)) / 2)
    return bool(w.min() >= -tol * _scale(t))


@dataclass(frozen=True)
class PolarFactors:
    """``t = unitary @ modulus`` with ``modulus = (t* t)^{1/2}``."""

    unitary: np.ndarray
    modulus: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "unitary", _frozen(self.unitary))
        object.__setattr__(self, "modulus", _frozen(self.modulus))

    def reconstruct(self) -> np.ndarray:
        return self.unitary @ self.modulus


def polar_decompose(t) -> PolarFactors:
    """Right polar decomposition through the SVD ``t = W S V*``.

    The unitary factor is ``W V*`` and the modulus is ``V S V*``.  For
    singular ``t`` this fixes one unitary extension of the partial isometry;
    the Aluthge transform does not depend on that choice.
    """
    t = as_matrix(t)
    w, s, vh = np.linalg.svd(t)
    v = adjoint(vh)
    modulus = (v * s) @ vh
    modulus = (modulus + adjoint(modulus)) / 2
    return PolarFactors(unitary=w @ vh, modulus=modulus)


def herm_power(p, s: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Fractional power ``p^s`` of a Hermitian positive semidefinite matrix.

    Eigenvalues that are negative only by round-off (within ``tol`` relative
    to ``1 + ||p||``) are clamped to zero before taking the power, as are
    positive ones below the numerical rank threshold ``r * eps * max``.
    """
    p = as_matrix(p, "p")
    if not 0.0 < s <= 1.0:
        raise ValueError(f"exponent must lie in (0, 1], got {s}")
    scale = _scale(p)
    if frobenius_norm(p - adjoint(p)) > tol * scale:
        raise MatrixError("herm_power needs a Hermitian input")
    w, q = np.linalg.eigh((p + adjoint(p)) / 2)
    if w.min() < -tol * scale:
        raise MatrixError(f"herm_power needs a PSD input (min eigenvalue {w.min():.3e})")
    # zero out round-off eigenvalues too: a fractional power would amplify them
    w = np.where(w > p.shape[0] * np.finfo(float).eps * max(w.max(), 0.0), w, 0.0)
    out = (q * w**s) @ adjoint(q)
    return (out + adjoint(out)) / 2


def canonical_order(values, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Sort complex numbers by (real, imag) after rounding to a grid.

    The grid spacing is ``tol * (1 + max |value|)`` so that values equal up
    to round-off compare equal on the leading key.
    """
    values = np.asarray(values, dtype=complex).ravel()
    if values.size == 0:
        return values
    q = tol * (1.0 + np.abs(values).max())
    key_re = np.round(values.real / q)
    key_im = np.round(values.imag / q)
    return values[np.lexsort((key_im, key_re))]


def eigenvalues(t, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Eigenvalues with multiplicity, in canonical order."""
    t = as_matrix(t)
    return canonical_order(np.linalg.eigvals(t), tol)


def char_poly(t) -> np.ndarray:
    """Monic characteristic polynomial coefficients, highest degree first."""
    t = as_matrix(t)
    return np.poly(np.linalg.eigvals(t)).astype(complex)


def spectrum_distance(a, b) -> float:
    """Largest error of the minimal-cost assignment between two multisets."""
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    if a.size != b.size:
        raise ValueError(f"multisets differ in size: {a.size} vs {b.size}")
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def haar_unitary(r: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))) / np.sqrt(2)
    q, rr = np.linalg.qr(z)
    d = np.diag(rr)
    return q * (d / np.abs(d))
