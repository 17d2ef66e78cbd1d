"""CSV, VTK and manifest writers.

All numbers are written with 17 significant digits so a float64 survives a
write/read round trip exactly, and nothing time-dependent goes into the CSV
or VTK files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
from pathlib import Path

import numpy as np

from .grid import Domain

SERIES_COLUMNS = ("step", "t", "dt", "sup_F2", "energy", "contraction_sup", "contraction_l2", "sigma_sup")
REPORT_COLUMNS = ("name", "passed", "worst_margin", "location", "tolerance", "message")
FIELD_GROUPS = ("xi", "F", "a", "w")


def fmt(v) -> str:
    """17-significant-digit decimal; integers and booleans verbatim, ``None`` empty."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def field_header(domain: Domain, r: int) -> list[str]:
    coords = ["x", "y"][: domain.ndim]
    return coords + [f"{g}_{j}" for g in FIELD_GROUPS for j in range(1, r + 1)]


def _open(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # newline="" and "\n" terminators keep bytes identical across platforms
    return path.open("w", newline="", encoding="ascii")


def write_field_csv(path, domain: Domain, xi, F, a, w) -> Path:
    """One node per line in row-major (C) order of the node grid."""
    fields = [domain.check_field(np.asarray(u, dtype=float)) for u in (xi, F, a, w)]
    r = fields[0].shape[-1]
    if any(u.shape[-1] != r for u in fields):
        raise ValueError("fields have different component counts")
    coords = [c.ravel() for c in domain.coordinates()]
    flat = [u.reshape(-1, r) for u in fields]
    with _open(path) as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(field_header(domain, r))
        for k in range(domain.n_nodes):
            row = [fmt(c[k]) for c in coords]
            for u in flat:
                row.extend(fmt(v) for v in u[k])
            wr.writerow(row)
    return Path(path)


def read_field_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and data matrix of a field CSV."""
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in row] for row in rows[1:]])


def write_series_csv(path, series: list) -> Path:
    """Flow time series; monitors missing from a record become empty cells."""
    with _open(path) as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(SERIES_COLUMNS)
        for rec in series:
            wr.writerow([fmt(rec.get(k)) for k in SERIES_COLUMNS])
    return Path(path)


def write_table_csv(path, columns, rows) -> Path:
    with _open(path) as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for row in rows:
            wr.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return Path(path)


def write_report_csv(path, reports) -> Path:
    rows = [(rep.name, rep.passed, rep.worst_margin, str(rep.location), rep.tolerance, rep.message)
            for rep in reports]
    return write_table_csv(path, REPORT_COLUMNS, rows)


def write_vtk(path, domain: Domain, fields: dict, title: str = "cyclic_toda fields") -> Path:
    """Legacy ASCII structured-points file.

    Each entry of ``fields`` is a scalar field (grid shape) or a field with up
    to four components per node, written as one ``SCALARS`` attribute.
    Wider fields go into a ``FIELD`` block instead, since legacy ``SCALARS``
    allow at most four components.
    """
    dims = list(domain.shape) + [1] * (3 - domain.ndim)
    origin = list(domain.origin) + [0.0] * (3 - domain.ndim)
    spacing = list(domain.spacing) + [1.0] * (3 - domain.ndim)
    wide = {}
    with _open(path) as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET STRUCTURED_POINTS\n")
        fh.write("DIMENSIONS " + " ".join(str(d) for d in dims) + "\n")
        fh.write("ORIGIN " + " ".join(fmt(v) for v in origin) + "\n")
        fh.write("SPACING " + " ".join(fmt(v) for v in spacing) + "\n")
        fh.write(f"POINT_DATA {domain.n_nodes}\n")
        for name, u in fields.items():
            u = np.asarray(u, dtype=float)
            if u.shape == domain.shape:
                u = u[..., None]
            elif u.shape[:-1] != domain.shape:
                raise ValueError(f"field {name!r} has shape {u.shape}, grid is {domain.shape}")
            # VTK orders points with x varying fastest
            if domain.ndim == 2:
                u = np.transpose(u, (1, 0, 2))
            data = u.reshape(-1, u.shape[-1])
            if data.shape[1] > 4:
                wide[name] = data
                continue
            fh.write(f"SCALARS {name} double {data.shape[1]}\nLOOKUP_TABLE default\n")
            for row in data:
                fh.write(" ".join(fmt(v) for v in row) + "\n")
        if wide:
            fh.write(f"FIELD FieldData {len(wide)}\n")
            for name, data in wide.items():
                fh.write(f"{name} {data.shape[1]} {data.shape[0]} double\n")
                for row in data:
                    fh.write(" ".join(fmt(v) for v in row) + "\n")
    return Path(path)


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    import scipy

    from . import __version__

    return {"cyclic_toda": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(path, config: dict, outputs, timings: dict, extra: dict | None = None) -> Path:
    """Config echo, library versions, wall-clock timings and output checksums."""
    outputs = [Path(p) for p in outputs]
    doc = {
        "config": config,
        "versions": versions(),
        "timings": timings,
        "outputs": {p.name: sha256(p) for p in outputs},
    }
    if extra:
        doc.update(extra)
    with _open(path) as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return Path(path)


def field_bundle(problem, xi, F) -> dict:
    """Named fields for :func:`write_vtk`."""
    return {"xi": xi, "F": F, "a": problem.a, "w": problem.w}


__all__ = [
    "FIELD_GROUPS",
    "REPORT_COLUMNS",
    "SERIES_COLUMNS",
    "field_bundle",
    "field_header",
    "fmt",
    "read_field_csv",
    "write_field_csv",
    "write_manifest",
    "write_report_csv",
    "write_series_csv",
    "write_table_csv",
    "write_vtk",
]
