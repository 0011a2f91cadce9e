"""Matrix documents, trace tables and report serialisation."""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import json
import math

import numpy as np
import scipy.linalg

from .linalg import MatrixError, as_matrix

TRACE_COLUMNS = ("n", "norm", "excess", "normality_defect", "step_size")


def matrix_to_doc(t) -> dict:
    t = as_matrix(t)
    return {
        "r": int(t.shape[0]),
        "entries": [[{"re": float(z.real), "im": float(z.imag)} for z in row] for row in t],
    }


def matrix_from_doc(doc) -> np.ndarray:
    try:
        r = int(doc["r"])
        rows = doc["entries"]
        if len(rows) != r or any(len(row) != r for row in rows):
            raise MatrixError(f"entries must be a {r}x{r} array")
        t = np.array([[complex(float(z["re"]), float(z.get("im", 0.0))) for z in row]
                      for row in rows])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MatrixError):
            raise
        raise MatrixError(f"malformed matrix document: {exc}") from exc
    return as_matrix(t)


def read_matrix(path) -> np.ndarray:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MatrixError(f"{path}: not a JSON document ({exc})") from exc
    return matrix_from_doc(doc)


def write_matrix(path, t):
    with open(path, "w") as fh:
        json.dump(matrix_to_doc(t), fh, indent=1)
        fh.write("\n")


def to_jsonable(obj):
    """Recursively convert arrays, complex numbers, enums and dataclasses."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        if obj.ndim == 2 and obj.shape[0] == obj.shape[1] and obj.size:
            return matrix_to_doc(obj)
        return [to_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _num(obj.real), "im": _num(obj.imag)}
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return _num(obj)
    return obj


def _num(x):
    # JSON has no inf/nan; keep them as strings
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=1, sort_keys=True)


def trace_table(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for s in trace.steps:
        w.writerow([s.n] + [repr(float(getattr(s, c))) for c in TRACE_COLUMNS[1:]])
    return buf.getvalue()


def rows_table(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
    return buf.getvalue()


def projection_system_doc(system) -> dict:
    return {
        "k": system.k,
        "centers": to_jsonable(system.centers),
        "ranks": list(system.ranks),
        "orthogonality_defect": _num(system.orthogonality_defect),
        "projectors": [matrix_to_doc(e) for e in system.projectors],
    }


def split_doc(split) -> dict:
    angles = []
    if split.neutral_dim and split.stable_dim:
        angles = [float(a) for a in scipy.linalg.subspace_angles(split.neutral_basis, split.stable_basis)]
    return {
        "neutral_dim": split.neutral_dim,
        "stable_dim": split.stable_dim,
        "stable_contraction": _num(split.stable_contraction),
        "k_D_reference": _num(split.k_reference),
        "delta": split.delta,
        "principal_angles": angles,
    }
