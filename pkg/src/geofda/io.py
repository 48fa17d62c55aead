"""CSV and JSON interchange files.

Floats are written with ``repr`` so a written file can be read back and
rewritten byte for byte. Every CSV has a header row and ``\\n`` line endings.
Metadata lives in a JSON sidecar next to the CSV (``<name>.json``).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .basis import BasisSystem
from .dataset import SpatialFunctionalDataset
from .errors import ValidationError
from .far import SurfaceTimeSeries
from .spatial import LocationSet
from .surface import basis_from_descriptor


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def read_csv(path, required: Sequence[str], text: Sequence[str] = ()) -> tuple[list[str], list[tuple[int, dict]]]:
    """Read a header CSV; returns the header and ``(line_number, row)`` pairs.

    Columns in ``required`` must exist; all columns except those listed in
    ``text`` must parse as finite floats. Errors name the offending line.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path}: file not found")
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file (no header row)") from None
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise ValidationError(f"{path}:1: missing columns {missing}")
        rows = []
        for fields in reader:
            line = reader.line_num
            if not fields or all(not f.strip() for f in fields):
                continue
            if len(fields) != len(header):
                raise ValidationError(
                    f"{path}:{line}: expected {len(header)} fields, found {len(fields)}"
                )
            row = {}
            for name, raw in zip(header, fields):
                raw = raw.strip()
                if name in text:
                    row[name] = raw
                    continue
                try:
                    val = float(raw)
                except ValueError:
                    raise ValidationError(f"{path}:{line}: column {name!r} is not a number: {raw!r}") from None
                if not math.isfinite(val):
                    raise ValidationError(f"{path}:{line}: column {name!r} is not finite")
                row[name] = val
            rows.append((line, row))
    return header, rows


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path}: file not found")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def sidecar(path) -> Path:
    path = Path(path)
    return path.with_suffix(".json")


def _coef_columns(header: list[str], prefix: str) -> list[str]:
    cols = [h for h in header if h.startswith(prefix) and h[len(prefix):].isdigit()]
    expected = [f"{prefix}{k}" for k in range(1, len(cols) + 1)]
    if cols != expected or not cols:
        raise ValidationError(f"coefficient columns must be {prefix}1..{prefix}K in order")
    return cols


# Curve datasets: site_id,s1,s2,z1..zK plus {"basis": ..., "v_range": [a, b]}


def write_dataset(path, ds: SpatialFunctionalDataset, site_ids: Sequence[str], v_range=(0.0, 1.0)) -> None:
    K = ds.basis.K
    header = ["site_id", "s1", "s2"] + [f"z{k}" for k in range(1, K + 1)]
    rows = ([sid, *pt, *z] for sid, pt, z in zip(site_ids, ds.locs.points, ds.Z))
    write_csv(path, header, rows)
    write_json(sidecar(path), {"basis": ds.basis.descriptor(), "v_range": [float(v) for v in v_range]})


def read_dataset(path) -> tuple[SpatialFunctionalDataset, list[str], tuple[float, float]]:
    meta = read_json(sidecar(path))
    unknown = set(meta) - {"basis", "v_range"}
    if unknown or "basis" not in meta:
        raise ValidationError(f"{sidecar(path)}: expected keys 'basis' and 'v_range'")
    try:
        basis = BasisSystem.from_descriptor(meta["basis"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{sidecar(path)}: invalid basis descriptor") from exc
    header, rows = read_csv(path, ["site_id", "s1", "s2"], text=["site_id"])
    cols = _coef_columns(header, "z")
    if len(cols) != basis.K:
        raise ValidationError(f"{path}: basis has K={basis.K} but file has {len(cols)} coefficient columns")
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    ids = [r["site_id"] for _, r in rows]
    pts = np.array([[r["s1"], r["s2"]] for _, r in rows])
    Z = np.array([[r[c] for c in cols] for _, r in rows])
    v_range = tuple(float(v) for v in meta.get("v_range", (0.0, 1.0)))
    return SpatialFunctionalDataset(LocationSet(pts), basis, Z), ids, v_range


# Surface series: t,b1..bM plus {"basis": ...}


def write_surfaces(path, sts: SurfaceTimeSeries, times: Sequence) -> None:
    M = sts.basis.M
    header = ["t"] + [f"b{m}" for m in range(1, M + 1)]
    write_csv(path, header, ([t, *b] for t, b in zip(times, sts.coeffs)))
    write_json(sidecar(path), {"basis": sts.basis.descriptor()})


def read_surfaces(path) -> tuple[SurfaceTimeSeries, list[float]]:
    meta = read_json(sidecar(path))
    if set(meta) != {"basis"}:
        raise ValidationError(f"{sidecar(path)}: expected exactly the key 'basis'")
    try:
        basis = basis_from_descriptor(meta["basis"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{sidecar(path)}: invalid surface basis descriptor") from exc
    header, rows = read_csv(path, ["t"])
    cols = _coef_columns(header, "b")
    if len(cols) != basis.M:
        raise ValidationError(f"{path}: basis has M={basis.M} but file has {len(cols)} coefficient columns")
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    times = [r["t"] for _, r in rows]
    B = np.array([[r[c] for c in cols] for _, r in rows])
    return SurfaceTimeSeries(basis, B), times
