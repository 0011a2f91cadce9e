"""Eigenvalue clusters, Riesz spectral projectors and the retraction they define.

A cluster system is described by a :class:`SpectrumInfo`: distinct centers
``mu_i`` with multiplicities and the separation radius (one third of the
smallest gap between centers).  Projectors are computed twice, once from a
reordered Schur form and once by trapezoidal quadrature of the resolvent on
circles around the centers, and the two results are cross-checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .linalg import (
    adjoint,
    as_matrix,
    canonical_order,
    eigenvalues,
    frobenius_norm,
)

CONTOUR_NODES = 64
CROSS_CHECK_TOL = 1e-6
RANK_TOL = 1e-8
MAX_PROJECTOR_CONDITION = 1e6


class SpectrumEscapeError(ValueError):
    """An eigenvalue lies outside every separation disk of the reference."""


class ProjectorMismatchError(RuntimeError):
    """The Schur and contour backends disagree beyond the cross-check tolerance."""


@dataclass(frozen=True)
class SpectrumInfo:
    eigenvalues: np.ndarray
    centers: np.ndarray
    multiplicities: tuple[int, ...]
    radius: float  # math.inf when there is a single cluster

    @property
    def k(self) -> int:
        return len(self.centers)

    @property
    def r(self) -> int:
        return int(sum(self.multiplicities))

    @property
    def disk_radius(self) -> float:
        """Radius of the admissible disk around each center."""
        if math.isinf(self.radius):
            return 1.0 + abs(self.centers[0])
        return self.radius

    def assign(self, values) -> np.ndarray:
        """Index of the disk containing each value; raises if one escapes."""
        values = np.asarray(values, dtype=complex).ravel()
        dist = np.abs(values[:, None] - self.centers[None, :])
        idx = dist.argmin(axis=1)
        escaped = dist[np.arange(values.size), idx] >= self.disk_radius
        if np.any(escaped):
            raise SpectrumEscapeError(
                f"eigenvalues {values[escaped]} lie outside the separation disks "
                f"(radius {self.disk_radius:.3e}) of centers {self.centers}"
            )
        return idx


def _merge_tol(values: np.ndarray, merge_tol: float | None) -> float:
    base = 1e-8 * (1.0 + (np.abs(values).max() if values.size else 0.0))
    return base if merge_tol is None else max(base, merge_tol)


def _single_linkage(values: np.ndarray, threshold: float) -> np.ndarray:
    close = np.abs(values[:, None] - values[None, :]) < threshold
    _, labels = connected_components(csr_matrix(close), directed=False)
    return labels


def _info_from_labels(values: np.ndarray, labels: np.ndarray) -> SpectrumInfo:
    groups = [values[labels == lab] for lab in np.unique(labels)]
    centers = np.array([g.mean() for g in groups], dtype=complex)
    mults = np.array([g.size for g in groups])
    sorted_centers = canonical_order(centers)
    order = [int(np.argmin(np.abs(centers - c))) for c in sorted_centers]
    centers = centers[order]
    mults = mults[order]
    if centers.size == 1:
        radius = math.inf
    else:
        gaps = np.abs(centers[:, None] - centers[None, :])
        radius = float(gaps[~np.eye(centers.size, dtype=bool)].min() / 3.0)
    return SpectrumInfo(
        eigenvalues=canonical_order(values),
        centers=centers,
        multiplicities=tuple(int(m) for m in mults),
        radius=radius,
    )


def cluster_spectrum(values, merge_tol: float | None = None) -> SpectrumInfo:
    """Group eigenvalues by single linkage and compute the separation radius.

    Values closer than ``max(1e-8 * (1 + max|value|), merge_tol)`` belong to
    the same cluster; each cluster is represented by its mean.
    """
    values = canonical_order(np.asarray(values, dtype=complex).ravel())
    if values.size == 0:
        raise ValueError("cannot cluster an empty spectrum")
    labels = _single_linkage(values, _merge_tol(values, merge_tol))
    return _info_from_labels(values, labels)


def _schur_projector(t: np.ndarray, select, m: int) -> np.ndarray:
    """Projector onto the invariant subspace of the selected eigenvalues."""
    r = t.shape[0]
    if m == r:
        return np.eye(r, dtype=complex)
    if m == 0:
        return np.zeros((r, r), dtype=complex)
    a, z, sdim = scipy.linalg.schur(t, output="complex", sort=select)
    if sdim != m:
        raise ProjectorMismatchError(f"Schur reordering selected {sdim} eigenvalues, expected {m}")
    a11, a12, a22 = a[:m, :m], a[:m, m:], a[m:, m:]
    # a11 R - R a22 = -a12 block-diagonalises the Schur form
    rr = scipy.linalg.solve_sylvester(a11, -a22, -a12)
    block = np.zeros((r, r), dtype=complex)
    block[:m, :m] = np.eye(m)
    block[:m, m:] = -rr
    return z @ block @ adjoint(z)


def _contour_projector(t: np.ndarray, center: complex, radius: float,
                       nodes: int = CONTOUR_NODES) -> np.ndarray:
    r = t.shape[0]
    eye = np.eye(r, dtype=complex)
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    acc = np.zeros((r, r), dtype=complex)
    for w in radius * np.exp(1j * theta):
        lu = scipy.linalg.lu_factor((center + w) * eye - t)
        acc += w * scipy.linalg.lu_solve(lu, eye)
    return acc / nodes


def _numerical_rank(p: np.ndarray, tol: float = RANK_TOL) -> int:
    s = np.linalg.svd(p, compute_uv=False)
    return int(np.sum(s > tol * max(frobenius_norm(p), 1e-300)))


@dataclass(frozen=True)
class ProjectionSystem:
    projectors: tuple
    centers: np.ndarray
    ranks: tuple[int, ...]
    orthogonality_defect: float
    backend_discrepancy: float = field(default=0.0)

    @property
    def k(self) -> int:
        return len(self.projectors)

    def idempotence_defect(self) -> float:
        return max(frobenius_norm(e @ e - e) for e in self.projectors)

    def completeness_defect(self) -> float:
        r = self.projectors[0].shape[0]
        return frobenius_norm(sum(self.projectors) - np.eye(r))

    def disjointness_defect(self) -> float:
        worst = 0.0
        for i, ei in enumerate(self.projectors):
            for j, ej in enumerate(self.projectors):
                if i != j:
                    worst = max(worst, frobenius_norm(ei @ ej))
        return worst

    def commutation_defect(self, t) -> float:
        t = as_matrix(t)
        return max(frobenius_norm(e @ t - t @ e) for e in self.projectors)


def _make_system(projectors, centers, discrepancy=0.0) -> ProjectionSystem:
    projectors = tuple(projectors)
    for e in projectors:
        e.flags.writeable = False
    return ProjectionSystem(
        projectors=projectors,
        centers=np.asarray(centers, dtype=complex),
        ranks=tuple(_numerical_rank(e) for e in projectors),
        orthogonality_defect=max(frobenius_norm(e - adjoint(e)) for e in projectors),
        backend_discrepancy=discrepancy,
    )


def spectral_projections(t, info: SpectrumInfo, backend: str = "both",
                         cross_check_tol: float = CROSS_CHECK_TOL) -> ProjectionSystem:
    """Riesz projectors of ``t`` for the disks of ``info``.

    ``backend`` is ``"schur"``, ``"contour"`` or ``"both"``; the latter
    returns the Schur projectors after checking that the contour quadrature
    agrees entrywise within ``cross_check_tol``.
    """
    t = as_matrix(t)
    if t.shape[0] != info.r:
        raise ValueError(f"matrix dimension {t.shape[0]} does not match spectrum size {info.r}")
    if backend not in ("schur", "contour", "both"):
        raise ValueError(f"unknown projector backend {backend!r}")
    vals = np.linalg.eigvals(t)
    idx = info.assign(vals)
    r = t.shape[0]
    if info.k == 1:
        return _make_system([np.eye(r, dtype=complex)], info.centers)

    counts = np.bincount(idx, minlength=info.k)
    schur = contour = None
    if backend in ("schur", "both"):
        schur = []
        for i, c in enumerate(info.centers):
            schur.append(_schur_projector(
                t, lambda z, c=c: abs(z - c) < info.disk_radius, int(counts[i])))
    if backend in ("contour", "both"):
        contour = [_contour_projector(t, c, info.disk_radius) for c in info.centers]
    discrepancy = 0.0
    if schur is not None and contour is not None:
        discrepancy = max(float(np.abs(a - b).max()) for a, b in zip(schur, contour))
        if discrepancy > cross_check_tol:
            raise ProjectorMismatchError(
                f"Schur and contour projectors differ by {discrepancy:.3e} (> {cross_check_tol:.1e})"
            )
    return _make_system(schur if schur is not None else contour, info.centers, discrepancy)


def spectral_retraction(t, info: SpectrumInfo, system: ProjectionSystem | None = None) -> np.ndarray:
    """``sum_i mu_i E_i(t)``: the point of the similarity orbit of the model."""
    if system is None:
        system = spectral_projections(t, info)
    return sum(c * e for c, e in zip(info.centers, system.projectors))


def block_diagonal_part(t, system: ProjectionSystem) -> np.ndarray:
    """Compression ``sum_i E_i t E_i`` onto the algebra commuting with every E_i."""
    t = as_matrix(t)
    return sum(e @ t @ e for e in system.projectors)


def spectrum_defect(t, info: SpectrumInfo, system: ProjectionSystem) -> float:
    """How far ``t`` is from having exactly the eigenvalues of ``info``.

    Uses ``(t - mu_i)^{m_i} E_i(t) = 0``, which holds iff the only eigenvalue
    in the i-th disk is ``mu_i``.  Unlike comparing computed eigenvalues this
    stays accurate for defective matrices.
    """
    t = as_matrix(t)
    r = t.shape[0]
    scale = 1.0 + frobenius_norm(t)
    worst = 0.0
    for c, m, e in zip(info.centers, info.multiplicities, system.projectors):
        shifted = np.linalg.matrix_power(t - c * np.eye(r), m) @ e
        worst = max(worst, frobenius_norm(shifted) / scale**m)
    return worst


def in_spectral_component(t, reference: SpectrumInfo) -> bool:
    """Spectrum inside the separation disks with the reference projector ranks."""
    try:
        system = spectral_projections(t, reference)
    except (SpectrumEscapeError, ProjectorMismatchError, np.linalg.LinAlgError, ValueError):
        return False
    return tuple(system.ranks) == tuple(reference.multiplicities)


@dataclass(frozen=True)
class BasinMembership:
    is_member: bool
    defect: float
    spectrum_defect: float
    projected: np.ndarray | None


def orthogonal_basin_membership(t, reference: SpectrumInfo, tol: float = 1e-8,
                                spectrum_tol: float = 1e-8) -> BasinMembership:
    """Does ``t`` share the reference spectrum and have selfadjoint projectors?

    ``defect`` is the orthogonality defect of the projector system and
    ``projected`` the retraction ``sum_i mu_i E_i(t)``.
    """
    t = as_matrix(t)
    try:
        system = spectral_projections(t, reference)
    except (SpectrumEscapeError, ProjectorMismatchError, np.linalg.LinAlgError):
        return BasinMembership(False, math.inf, math.inf, None)
    sdef = spectrum_defect(t, reference, system)
    projected = spectral_retraction(t, reference, system)
    member = (
        tuple(system.ranks) == tuple(reference.multiplicities)
        and sdef < spectrum_tol
        and system.orthogonality_defect < tol
    )
    return BasinMembership(bool(member), system.orthogonality_defect, sdef, projected)


def spectrum_of(t, merge_tol: float | None = None,
                max_condition: float = MAX_PROJECTOR_CONDITION) -> SpectrumInfo:
    """Cluster the eigenvalues of a matrix, merging numerically defective splits.

    Starts from :func:`cluster_spectrum` and repeatedly merges a cluster into
    its nearest neighbour while its spectral projector has 2-norm above
    ``max_condition``.  Computed eigenvalues of a Jordan block scatter far
    beyond the merge tolerance, but the projectors of such a split are huge,
    so this recovers the block as one cluster.
    """
    t = as_matrix(t)
    vals = eigenvalues(t)
    labels = _single_linkage(vals, _merge_tol(vals, merge_tol))
    while np.unique(labels).size > 1:
        uniq = np.unique(labels)
        centers = np.array([vals[labels == u].mean() for u in uniq])
        worst, worst_norm = None, max_condition
        for u in uniq:
            members = labels == u

            def select(z, members=members):
                return bool(members[np.argmin(np.abs(vals - z))])

            try:
                p = _schur_projector(t, select, int(members.sum()))
                pnorm = np.linalg.norm(p, 2)
            except (ProjectorMismatchError, np.linalg.LinAlgError, scipy.linalg.LinAlgError):
                pnorm = math.inf
            if not np.isfinite(pnorm) or pnorm > worst_norm:
                worst, worst_norm = u, pnorm
        if worst is None:
            break
        here = centers[uniq == worst][0]
        others = uniq[uniq != worst]
        other_centers = centers[uniq != worst]
        target = others[np.argmin(np.abs(other_centers - here))]
        labels[labels == worst] = target
    return _info_from_labels(vals, labels)
