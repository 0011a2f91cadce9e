"""Derivative of the transform at a point and its invariant splitting.

Complex r x r matrices are identified with R^(2r^2) through
``x -> [Re vec(x), Im vec(x)]`` (row-major ``vec``).  This identification is
an isometry for the real inner product ``Re tr(b* a)``, so Euclidean norms
and orthonormality on the real side match Frobenius ones on the matrix side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .linalg import MatrixError, as_matrix, frobenius_norm
from .spectral import ProjectionSystem
from .transform import _aluthge, _check_lambda

FD_STEP_SCALE = 1e-5
SPLIT_DELTA = 0.02
ORTHOGONALITY_TOL = 1e-8


class SplitError(RuntimeError):
    """The derivative spectrum does not separate into neutral and stable groups."""


def to_real(x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    return np.concatenate([x.real.ravel(), x.imag.ravel()])


def from_real(v, r: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    half = r * r
    return (v[:half] + 1j * v[half:]).reshape(r, r)


def real_representation(m) -> np.ndarray:
    """Real 2n x 2n matrix of the complex-linear map ``z -> m z``."""
    m = np.asarray(m, dtype=complex)
    return np.block([[m.real, -m.imag], [m.imag, m.real]])


def conjugation_action(v) -> np.ndarray:
    """Real matrix of ``x -> v x v*`` on the real matrix space."""
    v = as_matrix(v, "v")
    # row-major vec(A X B) = (A kron B^T) vec(X)
    return real_representation(np.kron(v, v.conj()))


def contraction_constant(spectrum) -> float:
    """Largest pairwise factor ``|1 + e^{i(arg d_j - arg d_i)}| sqrt|d_i d_j| / (|d_i| + |d_j|)``.

    The max ranges over pairs of distinct entries; it is 0 when all entries
    coincide.
    """
    d = np.asarray(spectrum, dtype=complex).ravel()
    if d.size == 0:
        raise ValueError("empty spectrum")
    if np.any(d == 0):
        raise ValueError("contraction constant needs nonzero eigenvalues")
    mod, arg = np.abs(d), np.angle(d)
    phase = np.abs(1.0 + np.exp(1j * (arg[None, :] - arg[:, None])))
    vals = phase * np.sqrt(mod[:, None] * mod[None, :]) / (mod[:, None] + mod[None, :])
    distinct = d[:, None] != d[None, :]
    if not distinct.any():
        return 0.0
    return float(vals[distinct].max())


@dataclass(frozen=True)
class DerivativeOperator:
    matrix: np.ndarray
    base_point: np.ndarray
    fd_step: float
    lambda_param: float = 0.5

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def r(self) -> int:
        return self.base_point.shape[0]

    def apply(self, x) -> np.ndarray:
        x = as_matrix(x, "x")
        return from_real(self.matrix @ to_real(x), self.r)


def numerical_derivative(t, fd_step: float | None = None,
                         lambda_param: float = 0.5) -> DerivativeOperator:
    """Central-difference Jacobian of the transform at ``t`` as a real operator.

    Column ``j`` is ``(D(t + h X_j) - D(t - h X_j)) / 2h`` for the real
    basis ``X_j`` in ``{e_pq} + {i e_pq}``.  The default step is
    ``1e-5 * (1 + ||t||)``.
    """
    t = as_matrix(t)
    lam = _check_lambda(lambda_param)
    scale = 1.0 + frobenius_norm(t)
    h = FD_STEP_SCALE * scale if fd_step is None else float(fd_step)
    if h <= 0:
        raise ValueError("fd_step must be positive")
    smin = np.linalg.svd(t, compute_uv=False).min()
    if smin <= max(1e-8 * scale, 10 * h):
        raise MatrixError(
            f"derivative needs an invertible base point (smallest singular value {smin:.3e})"
        )
    r = t.shape[0]
    n = 2 * r * r
    cols = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        x = from_real(e, r)
        cols[:, j] = to_real(_aluthge(t + h * x, lam) - _aluthge(t - h * x, lam)) / (2 * h)
    cols.flags.writeable = False
    base = np.array(t)
    base.flags.writeable = False
    return DerivativeOperator(matrix=cols, base_point=base, fd_step=h, lambda_param=lam)


@dataclass(frozen=True)
class SubspaceSplit:
    neutral_basis: np.ndarray  # columns, orthonormal in R^(2r^2)
    stable_basis: np.ndarray
    stable_contraction: float
    k_reference: float
    delta: float
    eigenvalues: np.ndarray

    @property
    def neutral_dim(self) -> int:
        return self.neutral_basis.shape[1]

    @property
    def stable_dim(self) -> int:
        return self.stable_basis.shape[1]

    def min_angle(self) -> float:
        """Smallest principal angle between the two subspaces."""
        if self.neutral_dim == 0 or self.stable_dim == 0:
            return np.pi / 2
        return float(scipy.linalg.subspace_angles(self.neutral_basis, self.stable_basis).min())


def default_delta(k_bound: float) -> float:
    # the fixed 0.02 cannot separate spectra whose constant is within 0.04 of 1
    return min(SPLIT_DELTA, (1.0 - k_bound) / 2.0)


def split_subspaces(op: DerivativeOperator, k_bound: float,
                    delta: float | None = None) -> SubspaceSplit:
    """Neutral (eigenvalues near 1) and stable (modulus at most ``k_bound + delta``) subspaces.

    Both are invariant subspaces read off reordered real Schur forms.  The
    contraction is the largest singular value of the operator compressed to
    an orthonormal basis of the stable subspace.
    """
    if not 0.0 <= k_bound < 1.0:
        raise ValueError(f"k_bound must lie in [0, 1), got {k_bound}")
    delta = default_delta(k_bound) if delta is None else float(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    a = np.asarray(op.matrix, dtype=float)
    ev = np.linalg.eigvals(a)
    neutral = np.abs(ev - 1.0) < delta
    stable = np.abs(ev) <= k_bound + delta
    bad = ~(neutral ^ stable)
    if bad.any():
        raise SplitError(
            f"derivative eigenvalues {ev[bad]} are neither within {delta:g} of 1 "
            f"nor of modulus <= {k_bound + delta:g}"
        )

    def near_one(re, im):
        return abs(complex(re, im) - 1.0) < delta

    def in_disk(re, im):
        return abs(complex(re, im)) <= k_bound + delta

    _, zn, sn = scipy.linalg.schur(a, output="real", sort=near_one)
    _, zs, ss = scipy.linalg.schur(a, output="real", sort=in_disk)
    if sn != neutral.sum() or ss != stable.sum():
        raise SplitError("Schur reordering disagrees with the eigenvalue count")
    qn, qs = zn[:, :sn], zs[:, :ss]
    contraction = float(np.linalg.norm(qs.T @ a @ qs, 2)) if ss else 0.0
    return SubspaceSplit(
        neutral_basis=qn,
        stable_basis=qs,
        stable_contraction=contraction,
        k_reference=float(k_bound),
        delta=delta,
        eigenvalues=ev,
    )


def _check_orthogonal(system: ProjectionSystem, tol: float):
    if system.orthogonality_defect >= tol:
        raise ValueError(
            f"projector system is not orthogonal (defect {system.orthogonality_defect:.3e})"
        )


def _null_basis(blocks, r: int) -> list:
    a = np.vstack([real_representation(b) for b in blocks])
    q = scipy.linalg.null_space(a, rcond=1e-10)
    return [from_real(q[:, j], r) for j in range(q.shape[1])]


def tangent_basis_orbit(n, system: ProjectionSystem, tol: float = ORTHOGONALITY_TOL) -> list:
    """Orthonormal real basis of ``{X : E_i X E_i = 0 for all i}``."""
    n = as_matrix(n)
    _check_orthogonal(system, tol)
    r = n.shape[0]
    return _null_basis([np.kron(e, e.T) for e in system.projectors], r)


def commutant_basis(n, system: ProjectionSystem, tol: float = ORTHOGONALITY_TOL) -> list:
    """Orthonormal real basis of the matrices commuting with every ``E_i``."""
    n = as_matrix(n)
    _check_orthogonal(system, tol)
    r = n.shape[0]
    eye = np.eye(r)
    return _null_basis([np.kron(e, eye) - np.kron(eye, e.T) for e in system.projectors], r)
