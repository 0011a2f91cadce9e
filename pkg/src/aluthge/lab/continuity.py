"""Empirical continuity of the limit map at normal invertible points."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..linalg import as_matrix, frobenius_norm, is_normal
from ..spectral import SpectrumInfo, cluster_spectrum, spectral_projections
from ..transform import _run, limit
from .ensembles import stream


@dataclass(frozen=True)
class ProbeSample:
    delta: float
    distance: float  # exact distance, an upper bound, or NaN when unavailable
    method: str  # "limit", "block_bound" or "failed"


@dataclass(frozen=True)
class ContinuityReport:
    deltas: tuple
    m: tuple  # max distance per delta over usable samples
    samples: tuple = field(repr=False)
    target: float = 1e-2

    @property
    def monotone(self) -> bool:
        m = [x for x in self.m if not math.isnan(x)]
        return all(b <= a for a, b in zip(m, m[1:]))

    @property
    def passed(self) -> bool:
        return self.monotone and self.m[-1] < self.target


def sphere_sample(r: int, radius: float, rng) -> np.ndarray:
    """Uniform point on the Frobenius sphere of the given radius."""
    g = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    return radius * g / frobenius_norm(g)


def _orthonormal_ranges(system):
    blocks = []
    for e, m in zip(system.projectors, system.ranks):
        u, _, _ = np.linalg.svd(e)
        blocks.append(u[:, :m])
    y = np.hstack(blocks)
    w, _, vh = np.linalg.svd(y)
    y = w @ vh
    out, i = [], 0
    for m in system.ranks:
        q = y[:, i:i + m]
        out.append(q @ q.conj().T)
        i += m
    return out


def block_bound(t, n0, info: SpectrumInfo, tol: float = 1e-11, max_iter: int = 20_000):
    """Upper bound on ``||lim(t) - n0||`` from the cluster blocks of ``n0``.

    Iterates until the projectors of ``t`` for the clusters of ``n0`` are
    orthogonal.  The iteration then acts independently on the blocks, so the
    limit is ``sum_i N_i`` with ``N_i`` normal on block ``i`` with that
    block's eigenvalues, and
    ``||lim - n0|| <= ||sum_i mu_i P_i - n0|| + sqrt(sum_j |lambda_j - mu(j)|^2)``.
    The bound is exact when ``n0`` is scalar.  Returns NaN if the blocks do
    not decouple within ``max_iter``.
    """

    def hook(cur):
        try:
            system = spectral_projections(cur, info, backend="schur")
        except Exception:
            return None
        if system.orthogonality_defect >= tol or tuple(system.ranks) != info.multiplicities:
            return None
        return system

    _, system = _run(t, 0.5, 1e-300, max_iter, False, hook, check_every=16)
    if system is None:
        return math.nan
    proj = _orthonormal_ranges(system)
    retraction = sum(c * p for c, p in zip(info.centers, proj))
    vals = np.linalg.eigvals(t)
    offsets = vals - info.centers[info.assign(vals)]
    return frobenius_norm(retraction - n0) + float(np.sqrt(np.sum(np.abs(offsets) ** 2)))


def continuity_probe(n0, deltas=(1e-1, 1e-2, 1e-3, 1e-4), samples_per_delta: int = 5,
                     seed: int = 0, tol: float = 1e-10, max_iter: int = 2_000,
                     target: float = 1e-2) -> ContinuityReport:
    """``m(delta) = max ||lim(n0 + P) - lim(n0)||`` over random ``||P|| = delta``.

    Samples whose iteration does not reach ``tol`` within ``max_iter`` (near
    repeated eigenvalues the rate tends to 1) fall back to
    :func:`block_bound`, which can only overestimate ``m``.  Samples with
    no usable value are kept with NaN and excluded from the max.
    """
    n0 = as_matrix(n0, "n0")
    if not is_normal(n0):
        raise ValueError("continuity probe needs a normal base point")
    if np.linalg.svd(n0, compute_uv=False).min() < 1e-8:
        raise ValueError("continuity probe needs an invertible base point")
    deltas = tuple(float(d) for d in deltas)
    if any(d <= 0 for d in deltas) or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be positive and strictly decreasing")
    r = n0.shape[0]
    info = cluster_spectrum(np.linalg.eigvals(n0))
    samples, m = [], []
    for i, delta in enumerate(deltas):
        worst = math.nan
        for j in range(samples_per_delta):
            rng = stream(seed, i * samples_per_delta + j)
            t = n0 + sphere_sample(r, delta, rng)
            res = limit(t, tol=tol, max_iter=max_iter)
            if res.converged:
                dist, method = frobenius_norm(res.limit - n0), "limit"
            else:
                dist = block_bound(t, n0, info)
                method = "failed" if math.isnan(dist) else "block_bound"
            samples.append(ProbeSample(delta, dist, method))
            if not math.isnan(dist):
                worst = dist if math.isnan(worst) else max(worst, dist)
        m.append(worst)
    return ContinuityReport(deltas, tuple(m), tuple(samples), target)
