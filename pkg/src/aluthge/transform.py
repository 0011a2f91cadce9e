"""The (lambda-)Aluthge transform, its iteration, and the limit map."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .linalg import (
    DEFAULT_TOL,
    PolarFactors,
    adjoint,
    as_matrix,
    frobenius_norm,
    herm_power,
    normality_defect,
)
from .spectral import ProjectorMismatchError, SpectrumEscapeError, spectral_projections, spectrum_of

DEFAULT_MAX_ITER = 100_000
DECIMATE_AFTER = 10_000


def _check_lambda(lambda_param: float) -> float:
    lam = float(lambda_param)
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lambda_param}")
    return lam


def _aluthge(t: np.ndarray, lam: float) -> np.ndarray:
    # |T|^lam U |T|^(1-lam) = V S^lam (V* W) S^(1-lam) V*  for  T = W S V*
    w, s, vh = np.linalg.svd(t)
    # round-off singular values would be amplified by the fractional powers
    s = np.where(s > t.shape[0] * np.finfo(float).eps * s[0], s, 0.0)
    return (adjoint(vh) * s**lam) @ (vh @ w) @ ((s ** (1.0 - lam))[:, None] * vh)


def aluthge(t, lambda_param: float = 0.5) -> np.ndarray:
    """``|T|^lambda U |T|^(1-lambda)`` where ``T = U|T|``.

    Computed from one SVD; singular directions of ``T`` are annihilated by
    the right factor, so the result does not depend on how ``U`` is extended
    on the kernel.
    """
    return _aluthge(as_matrix(t), _check_lambda(lambda_param))


def aluthge_from_polar(polar: PolarFactors, lambda_param: float = 0.5) -> np.ndarray:
    """Same transform, assembled from explicitly supplied polar factors."""
    lam = _check_lambda(lambda_param)
    return herm_power(polar.modulus, lam) @ polar.unitary @ herm_power(polar.modulus, 1.0 - lam)


def excess(t) -> float:
    """``||T||^2 - sum |lambda_i(T)|^2``; zero exactly for normal matrices."""
    t = as_matrix(t)
    return frobenius_norm(t) ** 2 - float(np.sum(np.abs(np.linalg.eigvals(t)) ** 2))


def direct_sum(a, b) -> np.ndarray:
    return scipy.linalg.block_diag(as_matrix(a, "a"), as_matrix(b, "b")).astype(complex)


class StopReason(str, enum.Enum):
    TOLERANCE_MET = "tolerance_met"
    MAX_ITERATIONS = "max_iterations"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class StepRecord:
    n: int
    norm: float
    excess: float
    normality_defect: float
    step_size: float


@dataclass(frozen=True)
class IterationTrace:
    lambda_param: float
    steps: tuple
    final: np.ndarray
    converged: bool
    stop_reason: StopReason
    iterates: tuple | None = None  # matrices aligned with ``steps`` when kept

    @property
    def n_final(self) -> int:
        return self.steps[-1].n if self.steps else 0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.steps])


def _keep(n: int) -> bool:
    if n <= DECIMATE_AFTER:
        return True
    stride = 2 ** math.ceil(math.log2(n / DECIMATE_AFTER))
    return n % stride == 0


def _run(t, lam, tol, max_iter, keep_iterates, hook=None, check_every=64):
    t = as_matrix(t)
    lam = _check_lambda(lam)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    steps, iterates = [], []
    cur, n = t, 0
    stop, converged, hooked = StopReason.MAX_ITERATIONS, False, None
    while True:
        if hook is not None and (n % check_every == 0 or n == max_iter):
            hooked = hook(cur)
        try:
            nxt = _aluthge(cur, lam)
            if not np.all(np.isfinite(nxt)):
                raise np.linalg.LinAlgError("non-finite iterate")
            rec = StepRecord(
                n=n,
                norm=frobenius_norm(cur),
                excess=excess(cur),
                normality_defect=normality_defect(cur),
                step_size=frobenius_norm(nxt - cur),
            )
        except np.linalg.LinAlgError:
            stop = StopReason.NUMERICAL_FAILURE
            break
        done = rec.step_size < tol and rec.normality_defect < tol and rec.excess < tol
        last = done or n >= max_iter or hooked is not None
        if _keep(n) or last:
            steps.append(rec)
            if keep_iterates:
                iterates.append(cur)
        if done:
            stop, converged = StopReason.TOLERANCE_MET, True
            break
        if last:
            break
        cur, n = nxt, n + 1
    cur = np.array(cur)
    cur.flags.writeable = False
    trace = IterationTrace(
        lambda_param=lam,
        steps=tuple(steps),
        final=cur,
        converged=converged,
        stop_reason=stop,
        iterates=tuple(iterates) if keep_iterates else None,
    )
    return trace, hooked


def iterate(t, lambda_param: float = 0.5, tol: float = DEFAULT_TOL,
            max_iter: int = DEFAULT_MAX_ITER, keep_iterates: bool = False) -> IterationTrace:
    """Apply the transform repeatedly, recording per-step diagnostics.

    Stops at the first ``n`` where the step size, the normality defect and
    the excess of ``Delta^n(T)`` are all below ``tol``, or after
    ``max_iter`` transforms.  ``final`` is the last recorded iterate.
    Records past 10000 steps are thinned to every ``2^j``-th step.
    """
    trace, _ = _run(t, lambda_param, tol, max_iter, keep_iterates)
    return trace


@dataclass(frozen=True)
class LimitResult:
    limit: np.ndarray
    iterations_used: int
    converged: bool
    method: str | None  # "iteration", "spectral" or None when not converged
    trace: IterationTrace | None = None


def normal_from_projectors(t, system) -> np.ndarray:
    """Normal matrix ``sum_i c_i P_i`` built from a nearly orthogonal projector system.

    ``P_i`` are the orthogonal projectors onto jointly orthonormalised
    ranges of the ``E_i`` and ``c_i = tr(E_i t) / rank(E_i)``.
    """
    t = as_matrix(t)
    blocks, values = [], []
    for e, m in zip(system.projectors, system.ranks):
        u, _, _ = np.linalg.svd(e)
        blocks.append(u[:, :m])
        values.extend([np.trace(e @ t) / m] * m)
    y = np.hstack(blocks)
    if y.shape[1] != t.shape[0]:
        raise ValueError("projector ranks do not add up to the dimension")
    w, _, vh = np.linalg.svd(y)
    y = w @ vh
    out = (y * np.asarray(values)) @ adjoint(y)
    out.flags.writeable = False
    return out


def _spectral_finalizer(t: np.ndarray, tol: float):
    # the cluster structure is read off the input once: the spectrum is
    # invariant along the iteration, while round-off in late iterates splits
    # defective eigenvalues into spurious clusters
    try:
        info = spectrum_of(t)
    except (ProjectorMismatchError, np.linalg.LinAlgError, ValueError):
        return None

    def hook(cur):
        try:
            system = spectral_projections(cur, info)
        except (SpectrumEscapeError, ProjectorMismatchError, np.linalg.LinAlgError, ValueError):
            return None
        if system.orthogonality_defect >= tol or tuple(system.ranks) != info.multiplicities:
            return None
        return normal_from_projectors(cur, system)

    return hook


def limit(t, lambda_param: float = 0.5, tol: float = DEFAULT_TOL,
          max_iter: int = DEFAULT_MAX_ITER, finalize: bool = True,
          check_every: int = 64, keep_iterates: bool = False) -> LimitResult:
    """Limit of the iterated transform.

    Plain iteration is used until the stopping criteria of :func:`iterate`
    hold.  With ``finalize`` the iterate is also inspected every
    ``check_every`` steps: once its eigenvalue clusters have an orthogonal
    projector system (within ``tol``), the iteration acts blockwise on
    reducing subspaces with a single eigenvalue each, and the limit is the
    normal matrix ``sum_i mu_i E_i``.  This is what makes defective inputs,
    whose matrix-level convergence is only algebraic, tractable.
    """
    hook = _spectral_finalizer(as_matrix(t), tol) if finalize else None
    trace, finalized = _run(t, lambda_param, tol, max_iter, keep_iterates, hook, check_every)
    n = trace.n_final
    if finalized is not None:
        return LimitResult(finalized, n, True, "spectral", trace)
    if trace.converged:
        return LimitResult(trace.final, n, True, "iteration", trace)
    return LimitResult(trace.final, n, False, None, trace)
