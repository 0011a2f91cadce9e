"""Exponential rate fits for the iteration and for its spectral projectors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..dynamics import contraction_constant
from ..linalg import as_matrix, frobenius_norm
from ..spectral import SpectrumInfo, spectral_projections, spectrum_of
from ..transform import _run

FLOOR_SCALE = 1e-12
MIN_POINTS = 8
# the window opens once the distance has dropped by one of these factors,
# the first that still leaves enough points; the first transforms of a badly
# conditioned input shrink it abruptly and bend the fit
TRANSIENT_DROPS = (1e-3, 1e-1)


class RateFitError(ValueError):
    """Not enough usable points for a log-linear fit."""


@dataclass(frozen=True)
class RateReport:
    fitted_gamma: float
    fitted_C: float
    k_D_reference: float
    residual: float  # RMS of log residuals over the window
    floor_reached: bool
    n_range: tuple
    n_points: int
    terminal: float | None = None  # projection fits: estimated distance to the limit at the last step
    reference_defect: float | None = None  # projection fits: orthogonality defect of the reference system


def reference_constant(t) -> float:
    """Contraction constant of the clustered spectrum, NaN for singular inputs."""
    info = spectrum_of(t)
    try:
        return contraction_constant(info.centers)
    except ValueError:
        return math.nan


def _window(ns, dist, floor, min_points, drop):
    ns = np.asarray(ns)
    dist = np.asarray(dist)
    if dist.size == 0 or dist[0] < 100 * floor:
        raise RateFitError("distances are below the numerical floor from the start")
    ok = (dist >= 100 * floor) & (dist <= dist[0] * drop)
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        raise RateFitError("no point lies inside the fit window")
    # last contiguous run of admissible points
    breaks = np.flatnonzero(np.diff(idx) != 1)
    start = idx[breaks[-1] + 1] if breaks.size else idx[0]
    run = np.arange(start, idx[-1] + 1)
    if run.size < min_points:
        raise RateFitError(f"only {run.size} usable points, need {min_points}")
    return ns[run], dist[run]


def _fit(ns, dist):
    logs = np.log(dist)
    slope, icpt = np.polyfit(ns, logs, 1)
    resid = logs - (slope * ns + icpt)
    return math.exp(slope), math.exp(icpt), float(np.sqrt(np.mean(resid**2)))


def fit_exponential(ns, dist, scale: float, min_points: int = MIN_POINTS,
                    drops=TRANSIENT_DROPS):
    """Least-squares line through ``(n, log dist)`` on the admissible window.

    The window is the last contiguous run with ``100 * floor <= dist <= drop * dist[0]``,
    ``floor = 1e-12 * scale``, for the first ``drop`` in ``drops`` that
    leaves ``min_points`` points.

    Returns ``(gamma, C, residual, floor_reached, (n_start, n_end), n_points)``.
    """
    floor = FLOOR_SCALE * scale
    for i, drop in enumerate(drops):
        try:
            wn, wd = _window(ns, dist, floor, min_points, drop)
            break
        except RateFitError:
            if i == len(drops) - 1:
                raise
    gamma, c, resid = _fit(wn.astype(float), wd)
    reached = bool(np.min(dist) < 100 * floor)
    return gamma, c, resid, reached, (int(wn[0]), int(wn[-1])), int(wn.size)


def rate_fit(trace, limit, min_points: int = MIN_POINTS) -> RateReport:
    """Fit ``||Delta^n(T) - limit|| ~ C gamma^n`` on a trace with stored iterates."""
    if trace.iterates is None:
        raise ValueError("rate_fit needs a trace recorded with keep_iterates=True")
    limit = as_matrix(limit, "limit")
    ns = np.array([s.n for s in trace.steps])
    dist = np.array([frobenius_norm(x - limit) for x in trace.iterates])
    t0 = trace.iterates[0]
    if dist.size == 0 or dist[0] < 100 * FLOOR_SCALE * (1 + frobenius_norm(t0)):
        raise RateFitError("input is already at its limit: nothing to fit")
    gamma, c, resid, reached, window, npts = fit_exponential(
        ns, dist, 1.0 + frobenius_norm(t0), min_points)
    return RateReport(gamma, c, reference_constant(limit), resid, reached, window, npts)


def measure_rate(t, lambda_param: float = 0.5, tol: float = 1e-13,
                 max_iter: int = 20_000, min_points: int = MIN_POINTS) -> RateReport:
    """Iterate ``t`` and fit its rate against the final iterate.

    A tolerance well below the fit floor keeps the limit estimate from
    biasing the bottom of the window.
    """
    trace, _ = _run(as_matrix(t), lambda_param, tol, max_iter, keep_iterates=True)
    return rate_fit(trace, trace.final, min_points)


def _system_distance(a, b) -> float:
    return max(frobenius_norm(x - y) for x, y in zip(a.projectors, b.projectors))


def projection_convergence(t, reference: SpectrumInfo | None = None, tol: float = 1e-14,
                           lambda_param: float = 0.5, max_iter: int = 20_000,
                           backend: str = "schur", stall_checks: int = 8,
                           min_points: int = MIN_POINTS) -> RateReport:
    """Exponential fit of ``d_n = max_i ||E_i(Delta^n t) - E_i(ref)||`` along the iteration.

    The projectors are tracked every step until they move by less than
    ``tol`` for ``stall_checks`` consecutive steps (or ``max_iter``); the
    last system serves as the reference.  ``terminal`` is ``C gamma^N`` at
    the last step ``N``, a geometric estimate of its remaining distance to
    the limit.  If the projectors never move, gamma is reported as 0.
    """
    t = as_matrix(t)
    if reference is None:
        reference = spectrum_of(t)
    systems = []
    quiet = [0]

    def hook(cur):
        sys_ = spectral_projections(cur, reference, backend=backend)
        if systems and _system_distance(sys_, systems[-1]) < tol:
            quiet[0] += 1
        else:
            quiet[0] = 0
        systems.append(sys_)
        return True if quiet[0] >= stall_checks else None

    trace, _ = _run(t, lambda_param, 1e-300, max_iter, False, hook, check_every=1)
    if trace.stop_reason.value == "numerical_failure":
        raise RateFitError("numerical failure along the trace")
    ref = systems[-1]
    dist = np.array([_system_distance(s, ref) for s in systems])
    ns = np.arange(dist.size)
    scale = 1.0 + frobenius_norm(t)
    kref = reference_constant(t)
    n_last = int(ns[-1])
    if dist.max() < 100 * FLOOR_SCALE * scale:
        return RateReport(0.0, float(dist.max()), kref, 0.0, True, (0, n_last), int(dist.size),
                          terminal=float(dist.max()), reference_defect=ref.orthogonality_defect)
    gamma, c, resid, reached, window, npts = fit_exponential(ns, dist, scale, min_points)
    return RateReport(gamma, c, kref, resid, reached, window, npts,
                      terminal=c * gamma**n_last, reference_defect=ref.orthogonality_defect)
