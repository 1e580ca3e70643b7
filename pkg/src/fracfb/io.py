"""On-disk formats: field checkpoints, atomic text output and number formatting.

A checkpoint is a pair of files ``<stem>.json`` / ``<stem>.bin``. The JSON
header holds the grid (``nx, ny, h, origin, upsilon``) and a list of sections
``{name, encoding, offset, nbytes}``; the binary file is the concatenation of
the sections. ``float64`` sections are little-endian and row-major over
``[ix, iy]``; ``bits`` sections are ``numpy.packbits`` of the row-major
boolean array.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .field import AdmissiblePair, Grid, IndicatorSet, ScalarField

FORMAT_VERSION = 1


def fmt(x) -> str:
    """Shortest round-trip-safe text for a float, at most 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            return None if np.isnan(x) else ("inf" if x > 0 else "-inf")
        return x
    return obj


class _Encoder(json.JSONEncoder):
    def iterencode(self, o, _one_shot=False):
        # the C encoder hard-codes float.__repr__, so use the pure-python one
        return json.encoder._make_iterencode(
            {} if self.check_circular else None,
            self.default,
            json.encoder.py_encode_basestring_ascii,
            self.indent,
            fmt,
            self.key_separator,
            self.item_separator,
            self.sort_keys,
            self.skipkeys,
            _one_shot,
        )(o, 0)


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), cls=_Encoder, indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    atomic_write_text(path, dumps_json(obj))


def write_csv(path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (int, float, np.integer, np.floating)) else v for v in row])
    atomic_write_text(path, buf.getvalue())


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# ---------------------------------------------------------------- checkpoints


def _encode_sections(sections):
    blobs, meta, offset = [], [], 0
    for name, enc, arr in sections:
        if enc == "float64":
            blob = np.ascontiguousarray(arr, dtype="<f8").tobytes(order="C")
        elif enc == "bits":
            blob = np.packbits(np.ascontiguousarray(arr, dtype=bool).ravel(order="C")).tobytes()
        else:  # pragma: no cover
            raise ValueError(enc)
        meta.append({"name": name, "encoding": enc, "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    return b"".join(blobs), meta


def _stem(path) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".json", ".bin") else p


def _with(stem: Path, ext: str) -> Path:
    # append rather than replace, so stems such as "run_0.5" keep their dot
    return stem.with_name(stem.name + ext)


def save_checkpoint(path, obj) -> None:
    """Write a :class:`ScalarField`, :class:`IndicatorSet` or :class:`AdmissiblePair`."""
    if isinstance(obj, ScalarField):
        kind, grid = "scalar_field", obj.grid
        sections = [("values", "float64", obj.values), ("frozen", "bits", obj.frozen)]
    elif isinstance(obj, IndicatorSet):
        kind, grid = "indicator_set", obj.grid
        sections = [("inside", "bits", obj.inside), ("frozen", "bits", obj.frozen)]
    elif isinstance(obj, AdmissiblePair):
        kind, grid = "admissible_pair", obj.grid
        sections = [
            ("u.values", "float64", obj.u.values),
            ("u.frozen", "bits", obj.u.frozen),
            ("e.inside", "bits", obj.e.inside),
            ("e.frozen", "bits", obj.e.frozen),
        ]
    else:
        raise TypeError(f"cannot checkpoint {type(obj).__name__}")
    payload, meta = _encode_sections(sections)
    header = {"format_version": FORMAT_VERSION, "kind": kind, **grid.header(), "sections": meta}
    stem = _stem(path)
    atomic_write_bytes(_with(stem, ".bin"), payload)
    write_json(_with(stem, ".json"), header)


def load_checkpoint(path):
    stem = _stem(path)
    header = json.loads(_with(stem, ".json").read_text())
    payload = _with(stem, ".bin").read_bytes()
    grid = Grid(int(header["nx"]), int(header["ny"]), float(header["h"]),
                (float(header["origin"][0]), float(header["origin"][1])), float(header["upsilon"]))
    n = grid.nx * grid.ny
    arrays = {}
    for sec in header["sections"]:
        blob = payload[sec["offset"]: sec["offset"] + sec["nbytes"]]
        if sec["encoding"] == "float64":
            arr = np.frombuffer(blob, dtype="<f8").astype(np.float64)
        else:
            arr = np.unpackbits(np.frombuffer(blob, dtype=np.uint8), count=n).astype(bool)
        if arr.size != n:
            raise ValueError(f"section {sec['name']} has {arr.size} entries, expected {n}")
        arrays[sec["name"]] = arr.reshape(grid.shape)
    kind = header["kind"]
    if kind == "scalar_field":
        return ScalarField(grid, arrays["values"], arrays["frozen"])
    if kind == "indicator_set":
        return IndicatorSet(grid, arrays["inside"], arrays["frozen"])
    if kind == "admissible_pair":
        return AdmissiblePair(
            ScalarField(grid, arrays["u.values"], arrays["u.frozen"]),
            IndicatorSet(grid, arrays["e.inside"], arrays["e.frozen"]),
        )
    raise ValueError(f"unknown checkpoint kind {kind!r}")
