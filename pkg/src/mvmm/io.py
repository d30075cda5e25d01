"""Reading view CSVs and (de)serializing fitted models as JSON."""
import csv
import json
import math
from pathlib import Path

import numpy as np

from .mixtures import ViewModel
from .mvmm import MvmmModel

MODEL_FORMAT = "mvmm-model"
FORMAT_VERSION = 1


class InputError(ValueError):
    """Malformed input file; the message names the offending location."""


def read_matrix_csv(path, header=True):
    """Numeric CSV as a float array.

    Raises
    ------
    InputError
        On ragged rows or non-numeric / missing cells, naming the line and
        column.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if header:
        if not rows:
            raise InputError(f"{path}: empty file, expected a header row")
        names, rows, first = rows[0], rows[1:], 2
    else:
        names, first = None, 1
    rows = [r for r in rows if r]
    if not rows:
        raise InputError(f"{path}: no data rows")
    width = len(names) if names is not None else len(rows[0])
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        line = i + first
        if len(row) != width:
            raise InputError(f"{path}: line {line} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            col = names[j] if names else str(j + 1)
            try:
                value = float(cell)
            except ValueError:
                raise InputError(
                    f"{path}: line {line}, column {col!r}: non-numeric value {cell!r}"
                ) from None
            if not math.isfinite(value):
                raise InputError(f"{path}: line {line}, column {col!r}: missing or infinite value")
            out[i, j] = value
    return out


def read_views(paths):
    """One CSV per view, aligned by row."""
    views = [read_matrix_csv(p) for p in paths]
    counts = [v.shape[0] for v in views]
    if len(set(counts)) != 1:
        detail = ", ".join(f"{p}: {c}" for p, c in zip(paths, counts))
        raise InputError(f"views have different row counts ({detail})")
    return views


def write_matrix_csv(path, x, names=None, fmt=repr):
    x = np.atleast_2d(np.asarray(x))
    names = names or [f"x{j}" for j in range(x.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in x:
            writer.writerow(fmt(v.item()) for v in row)


def model_to_dict(model, method=None, extra=None):
    """JSON-ready description of an :class:`MvmmModel`."""
    return {
        "format": MODEL_FORMAT,
        "version": FORMAT_VERSION,
        "method": method,
        "n_view_components": [int(k) for k in model.pi.shape],
        "view_dims": [int(d) for d in model.view_dims],
        "views": [
            {"means": vm.means.tolist(), "variances": vm.variances.tolist()}
            for vm in model.views
        ],
        "pi": model.pi.tolist(),
        "extra": _jsonable(extra or {}),
    }


def model_from_dict(doc):
    if doc.get("format") != MODEL_FORMAT:
        raise InputError(f"not a model document (format={doc.get('format')!r})")
    if doc.get("version") != FORMAT_VERSION:
        raise InputError(f"unsupported model version {doc.get('version')!r}")
    views = [
        ViewModel(np.asarray(v["means"], dtype=float), np.asarray(v["variances"], dtype=float))
        for v in doc["views"]
    ]
    return MvmmModel(views, np.asarray(doc["pi"], dtype=float))


def save_model(path, model, method=None, extra=None):
    Path(path).write_text(dumps(model_to_dict(model, method, extra)))


def load_model(path):
    """Returns ``(model, document)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise InputError(f"{path}: cannot read model JSON: {err}") from None
    return model_from_dict(doc), doc


def dumps(obj):
    """Deterministic JSON text (sorted keys, shortest round-trip floats)."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj
