"""JSON and CSV encodings with deterministic number formatting.

Layouts
-------
Subspace::

    {"type": "subspace", "ambient_dim": n, "dim": k, "tol": t,
     "basis": [[...n numbers...], ...k rows...],
     "basis_imag": [...]}            # only when complex

The basis is stored row-major, one basis vector per row.  A relation is
``{"type": "relation", "dim_g": .., "dim_h": .., "graph": <subspace>}``
and a spectrum stores eigenvalues, eigenvectors (row-major, sign-fixed),
``mul_dim`` and the carrier subspace.

Numbers are rounded to 12 significant digits and values below
``CHOP`` in magnitude are written as 0, so repeated runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .relcore import LinearRelation, Spectrum, Subspace, fix_signs

CHOP = 1e-13
DIGITS = 12


def clean(x: float) -> float:
    """Round to ``DIGITS`` significant digits, mapping tiny values and -0 to 0."""
    x = float(x)
    if not math.isfinite(x):
        return x
    if abs(x) < CHOP:
        return 0.0
    return float(f"{x:.{DIGITS}g}")


def fmt(x) -> str:
    """Text form used in CSV cells."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{clean(x):.{DIGITS}g}"
    if isinstance(x, complex):
        return f"{fmt(x.real)}{'+' if clean(x.imag) >= 0 else '-'}{fmt(abs(x.imag))}j"
    return str(x)


def to_plain(obj):
    """Recursively convert numpy/complex content into JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = clean(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_plain(obj.real), "im": to_plain(obj.imag)}
    return obj


def dumps(obj) -> str:
    return json.dumps(to_plain(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    """RFC-4180 style CSV (minimal quoting, ``\\r\\n`` line ends)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(c) for c in row])
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# relcore objects
# ---------------------------------------------------------------------------


def subspace_to_dict(U: Subspace) -> dict:
    rows = fix_signs(U.basis).T if U.dim else np.zeros((0, U.ambient_dim))
    out = {
        "type": "subspace",
        "ambient_dim": U.ambient_dim,
        "dim": U.dim,
        "tol": U.tol,
        "basis": np.real(rows),
    }
    if U.is_complex:
        out["basis_imag"] = np.imag(rows)
    return out


def subspace_from_dict(d: dict) -> Subspace:
    n = int(d["ambient_dim"])
    rows = np.asarray(d["basis"], dtype=float).reshape(-1, n)
    if "basis_imag" in d:
        rows = rows + 1j * np.asarray(d["basis_imag"], dtype=float).reshape(-1, n)
    return Subspace(n, rows.T, float(d["tol"]))


def relation_to_dict(S: LinearRelation) -> dict:
    return {"type": "relation", "dim_g": S.dim_g, "dim_h": S.dim_h, "graph": subspace_to_dict(S.graph)}


def relation_from_dict(d: dict) -> LinearRelation:
    return LinearRelation(int(d["dim_g"]), int(d["dim_h"]), subspace_from_dict(d["graph"]))


def spectrum_to_dict(spec: Spectrum) -> dict:
    vecs = spec.eigenvectors
    out = {
        "type": "spectrum",
        "eigenvalues": spec.eigenvalues,
        "eigenvectors": np.real(vecs.T),
        "mul_dim": spec.mul_dim,
        "carrier": subspace_to_dict(spec.carrier),
    }
    if np.iscomplexobj(vecs):
        out["eigenvectors_imag"] = np.imag(vecs.T)
    return out
