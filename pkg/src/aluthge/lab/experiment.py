"""Batch experiments driven by a JSON configuration.

A configuration lists suites; each suite names an ensemble and the analyses
to run on every matrix of it.  The report echoes the configuration (with
defaults filled in), holds one record per matrix and a pass/fail verdict
per suite.  Apart from ``timestamp`` it is a function of the configuration
alone, whatever the number of workers.
"""

from __future__ import annotations

import datetime
import json
import math
from concurrent.futures import ProcessPoolExecutor

import jsonschema
import numpy as np

from ..dynamics import contraction_constant, numerical_derivative, split_subspaces
from ..io import dumps
from ..linalg import normality_defect, spectrum_distance
from ..spectral import cluster_spectrum, spectral_projections, spectrum_of
from ..transform import DEFAULT_MAX_ITER, limit
from .ensembles import EnsembleKind, EnsembleSpec, draw
from .rates import RateFitError, measure_rate, projection_convergence

ANALYSES = ("limit", "rate", "projection", "spectral", "dynamics")

# suite-level thresholds, shared with the acceptance tests
THRESHOLDS = {
    "limit_normality": 1e-8,
    "limit_spectrum": 1e-6,
    "rate_margin": 0.05,
    "rate_residual": 0.1,
    "projection_terminal": 1e-7,
    "backend_agreement": 1e-8,
    "system_algebra": 1e-9,
    "split_margin": 0.01,
    "slow_k": 0.99,
}

_complex = {
    "oneOf": [
        {"type": "number"},
        {"type": "object", "properties": {"re": {"type": "number"}, "im": {"type": "number"}},
         "required": ["re"], "additionalProperties": False},
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "seed": {"type": "integer"},
        "workers": {"type": "integer", "minimum": 1},
        "lambda": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": {"type": "integer", "minimum": 1},
        "suites": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string"},
                    "kind": {"enum": [k.value for k in EnsembleKind]},
                    "r": {"type": "integer", "minimum": 1, "maximum": 50},
                    "count": {"type": "integer", "minimum": 0},
                    "seed": {"type": "integer"},
                    "spectrum": {"type": "array", "items": _complex},
                    "jordan_blocks": {
                        "type": "array",
                        "items": {"type": "array", "prefixItems": [_complex, {"type": "integer", "minimum": 1}],
                                  "minItems": 2, "maxItems": 2},
                    },
                    "condition_cap": {"type": "number", "minimum": 1},
                    "min_separation": {"type": "number", "exclusiveMinimum": 0},
                    "lambda": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                    "analyses": {"type": "array", "items": {"enum": list(ANALYSES)}, "uniqueItems": True},
                },
                "required": ["name", "kind", "r", "count"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["suites"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


def _to_complex(z) -> complex:
    if isinstance(z, dict):
        return complex(z["re"], z.get("im", 0.0))
    return complex(z)


def normalize_config(config) -> dict:
    """Validate a configuration and fill in defaults."""
    if isinstance(config, str):
        try:
            config = json.loads(config)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"configuration is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"configuration error at {list(exc.absolute_path)}: {exc.message}") from exc
    out = {
        "seed": config.get("seed", 0),
        "workers": config.get("workers", 1),
        "lambda": config.get("lambda", 0.5),
        "tol": config.get("tol", 1e-10),
        "max_iter": config.get("max_iter", DEFAULT_MAX_ITER),
        "suites": [],
    }
    for i, s in enumerate(config["suites"]):
        suite = {
            "name": s["name"],
            "kind": s["kind"],
            "r": s["r"],
            "count": s["count"],
            "seed": s.get("seed", out["seed"] + i),
            "condition_cap": s.get("condition_cap", 10.0),
            "min_separation": s.get("min_separation", 0.2),
            "lambda": s.get("lambda", out["lambda"]),
            "analyses": s.get("analyses", ["limit"]),
        }
        if "spectrum" in s:
            suite["spectrum"] = s["spectrum"]
        if "jordan_blocks" in s:
            suite["jordan_blocks"] = s["jordan_blocks"]
        try:
            _ensemble(suite)
        except ValueError as exc:
            raise ConfigError(f"suite {s['name']!r}: {exc}") from exc
        out["suites"].append(suite)
    return out


def _ensemble(suite) -> EnsembleSpec:
    spectrum = suite.get("spectrum")
    blocks = suite.get("jordan_blocks")
    return EnsembleSpec(
        kind=suite["kind"],
        r=suite["r"],
        spectrum=None if spectrum is None else tuple(_to_complex(z) for z in spectrum),
        jordan_blocks=None if blocks is None else tuple((_to_complex(z), m) for z, m in blocks),
        condition_cap=suite["condition_cap"],
        count=suite["count"],
        seed=suite["seed"],
        min_separation=suite["min_separation"],
    )


def _k_of(spectrum) -> float:
    try:
        return contraction_constant(cluster_spectrum(spectrum).centers)
    except ValueError:
        return math.nan


def _record(args) -> dict:
    suite, index, tol, max_iter = args
    spec = _ensemble(suite)
    lam = suite["lambda"]
    t, exact = draw(spec, index)
    rec = {"index": index, "k_D": _k_of(exact)}
    try:
        if "limit" in suite["analyses"]:
            res = limit(t, lambda_param=lam, tol=tol, max_iter=max_iter)
            norms = res.trace.column("norm")
            rec["limit"] = {
                "converged": res.converged,
                "method": res.method,
                "iterations": res.iterations_used,
                "normality_defect": normality_defect(res.limit),
                "spectrum_error": spectrum_distance(np.linalg.eigvals(res.limit), exact),
                "norm_monotone": bool(np.all(np.diff(norms) <= 1e-12)),
            }
        if "rate" in suite["analyses"]:
            rep = measure_rate(t, lambda_param=lam)
            rec["rate"] = {"gamma": rep.fitted_gamma, "C": rep.fitted_C, "residual": rep.residual,
                           "n_range": list(rep.n_range)}
        if "projection" in suite["analyses"]:
            rep = projection_convergence(t, lambda_param=lam)
            rec["projection"] = {"gamma": rep.fitted_gamma, "terminal": rep.terminal,
                                 "residual": rep.residual}
        if "spectral" in suite["analyses"]:
            info = spectrum_of(t)
            system = spectral_projections(t, info, backend="both")
            rec["spectral"] = {
                "k": info.k,
                "backend_discrepancy": system.backend_discrepancy,
                "idempotence": system.idempotence_defect(),
                "completeness": system.completeness_defect(),
                "disjointness": system.disjointness_defect(),
            }
        if "dynamics" in suite["analyses"]:
            mults = cluster_spectrum(exact).multiplicities
            r = spec.r
            split = split_subspaces(numerical_derivative(t, lambda_param=lam), rec["k_D"])
            rec["dynamics"] = {
                "neutral_dim": split.neutral_dim,
                "stable_dim": split.stable_dim,
                "expected_neutral": r * r + sum(m * m for m in mults),
                "expected_stable": r * r - sum(m * m for m in mults),
                "stable_contraction": split.stable_contraction,
            }
    except (RateFitError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def _failures(rec, kind) -> list:
    th = THRESHOLDS
    out = []
    if "error" in rec:
        out.append("error")
    lim = rec.get("limit")
    if lim is not None:
        if lim["converged"]:
            if lim["normality_defect"] >= th["limit_normality"]:
                out.append("limit_normality")
            if lim["spectrum_error"] >= th["limit_spectrum"]:
                out.append("limit_spectrum")
        elif kind != EnsembleKind.JORDAN.value and not rec["k_D"] > th["slow_k"]:
            # slow convergence is only excused for defective or near-degenerate spectra
            out.append("limit_not_converged")
        if not lim["norm_monotone"]:
            out.append("norm_monotone")
    rate = rec.get("rate")
    if rate is not None and (rate["gamma"] > rec["k_D"] + th["rate_margin"]
                             or rate["residual"] >= th["rate_residual"]):
        out.append("rate")
    proj = rec.get("projection")
    if proj is not None and not (proj["gamma"] < 1 and proj["terminal"] < th["projection_terminal"]):
        out.append("projection")
    sp = rec.get("spectral")
    if sp is not None and (sp["backend_discrepancy"] >= th["backend_agreement"]
                           or max(sp["idempotence"], sp["completeness"], sp["disjointness"])
                           >= th["system_algebra"]):
        out.append("spectral")
    dyn = rec.get("dynamics")
    if dyn is not None and (dyn["neutral_dim"] != dyn["expected_neutral"]
                            or dyn["stable_dim"] != dyn["expected_stable"]
                            or dyn["stable_contraction"] > rec["k_D"] + th["split_margin"]):
        out.append("dynamics")
    return out


def _summary(records) -> dict:
    out = {"count": len(records), "failed": sum(1 for r in records if r["failures"])}
    lims = [r["limit"] for r in records if "limit" in r]
    if lims:
        out["converged"] = sum(1 for x in lims if x["converged"])
        out["max_iterations_used"] = max(x["iterations"] for x in lims)
    rates = [r["rate"]["gamma"] - r["k_D"] for r in records if "rate" in r]
    if rates:
        out["max_gamma_minus_k"] = max(rates)
    return out


def run_experiment(config, workers: int | None = None) -> dict:
    """Run every suite of ``config`` and return the report document."""
    cfg = normalize_config(config)
    nworkers = workers if workers is not None else cfg["workers"]
    jobs = [(s, i, cfg["tol"], cfg["max_iter"]) for s in cfg["suites"] for i in range(s["count"])]
    if nworkers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(nworkers) as pool:
            records = list(pool.map(_record, jobs))
    else:
        records = [_record(j) for j in jobs]
    suites, pos = [], 0
    for s in cfg["suites"]:
        recs = records[pos:pos + s["count"]]
        pos += s["count"]
        for r in recs:
            r["failures"] = _failures(r, s["kind"])
        suites.append({"name": s["name"], "records": recs, "summary": _summary(recs),
                       "passed": all(not r["failures"] for r in recs)})
    cfg_echo = dict(cfg)
    cfg_echo.pop("workers")  # scheduling only; not part of the result
    return {
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": cfg_echo,
        "suites": suites,
        "passed": all(s["passed"] for s in suites),
    }


def report_text(report) -> str:
    return dumps(report)


def strip_timestamp(report_json: str) -> str:
    doc = json.loads(report_json)
    doc.pop("timestamp", None)
    return json.dumps(doc, sort_keys=True)
