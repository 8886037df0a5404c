"""Artifact serialization: trial CSVs, JSON with fixed float formatting,
atomic writes, manifests and tidy plot-data series.

Every float in persisted artifacts is rendered with 17 significant digits,
which round-trips IEEE doubles exactly, so reruns with the same seed can be
compared byte for byte.  Writes go through a create-or-verify gate: a file
is only replaced when the new content is identical, otherwise the write is
refused (artifacts are never mutated).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from pathlib import Path

import numpy as np

from .errors import ArtifactConflictError, ValidationError

try:
    from importlib.metadata import version as _pkg_version

    PACKAGE_VERSION = _pkg_version("deltatorus")
except Exception:  # not installed, e.g. run from a checkout
    PACKAGE_VERSION = "unknown"


def fmt_float(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"
    return str(x)


def dumps_json(obj, indent: int = 1) -> str:
    """JSON text with floats at 17 significant digits, keys in given order."""

    def render(o, level):
        pad = " " * (indent * level)
        pad_in = " " * (indent * (level + 1))
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [
                f"{pad_in}{json.dumps(str(k))}: {render(v, level + 1)}"
                for k, v in o.items()
            ]
            return "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            items = [f"{pad_in}{render(v, level + 1)}" for v in o]
            return "[\n" + ",\n".join(items) + "\n" + pad + "]"
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, float):
            if math.isnan(o) or math.isinf(o):
                return json.dumps(fmt_float(o))
            return fmt_float(o)
        if isinstance(o, int):
            return str(o)
        return json.dumps(o)

    return render(obj, 0) + "\n"


def write_atomic(path, text: str) -> bool:
    """Create path with text; no-op if identical content exists already.

    Returns True when the file was written, False on a cache hit.  Raises
    ArtifactConflictError when the file exists with different content.
    """
    path = Path(path)
    if path.exists():
        old = path.read_text(encoding="utf-8")
        if old == text:
            return False
        raise ArtifactConflictError(f"{path} exists with different content")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
    return True


def params_digest(obj: dict) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def build_manifest(kind: str, params: dict, outputs: dict | None = None) -> dict:
    return {
        "kind": kind,
        "package": "deltatorus",
        "version": PACKAGE_VERSION,
        "numpy": np.__version__,
        "params": params,
        "params_sha256": params_digest(params),
        "outputs": outputs or {},
    }


# -- trial results ----------------------------------------------------------


def trials_csv_text(results, zetas) -> str:
    """One row per trial, fixed column order, 17-digit floats."""
    zcols = [f"A_{'_'.join(str(c) for c in z)}" for z in zetas]
    header = (
        ["trial_index", "no_root", "root_count", "lambda_norm", "residual", "b_val", "c_val"]
        + zcols
        + [
            "a_weighted",
            "norm_sq",
            "annulus_sq",
            "remainder_sq",
            "err",
            "envelope",
            "chain_c_ok",
            "chain_b_ok",
            "chain_ratio_ok",
            "pair_one_exact",
            "near_degenerate",
            "endpoint_landing",
            "event_a_running",
            "event_b_running",
        ]
    )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in results:
        if r.no_root:
            row = [r.trial_index, 1, 0] + [""] * (len(header) - 3)
        else:
            row = (
                [
                    r.trial_index,
                    0,
                    r.root_count,
                    fmt_float(r.lambda_norm),
                    fmt_float(r.residual),
                    fmt_float(r.b_val),
                    fmt_float(r.c_val),
                ]
                + [fmt_float(r.a_vals.get(z, math.nan)) for z in zetas]
                + [
                    fmt_float(r.a_weighted),
                    fmt_float(r.norm_sq),
                    fmt_float(r.annulus_sq),
                    fmt_float(r.remainder_sq),
                    fmt_float(r.err),
                    fmt_float(r.envelope),
                    int(r.chain_c_ok),
                    int(r.chain_b_ok),
                    int(r.chain_ratio_ok),
                    int(r.pair_one_exact),
                    int(r.near_degenerate),
                    int(r.endpoint_landing),
                    int(r.event_a_running),
                    int(r.event_b_running),
                ]
            )
        w.writerow(row)
    return buf.getvalue()


PLOTDATA_SCHEMAS = {
    "err_vs_lambda": ["m_k", "median_err", "q10", "q90"],
    "density_vs_window": ["X", "density"],
    "freq_vs_c0": ["C0", "freq", "stderr", "bound"],
}


def plotdata_text(kind: str, rows) -> str:
    """Tidy CSV series for external plotting; schema is fixed per kind."""
    if kind not in PLOTDATA_SCHEMAS:
        raise ValidationError(
            f"unknown plot kind {kind!r}; known: {sorted(PLOTDATA_SCHEMAS)}"
        )
    cols = PLOTDATA_SCHEMAS[kind]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([fmt_float(row[c]) for c in cols])
    return buf.getvalue()
