"""Small JSON and CSV helpers (LF line endings, mandatory headers)."""

import csv
import json
from pathlib import Path


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")


def _default(o):
    try:
        import numpy as np
    except ImportError:  # pragma: no cover
        raise TypeError(type(o))
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def fmt(v):
    """Format one CSV cell; floats use ``repr`` so they round-trip."""
    if hasattr(v, "dtype"):
        v = v.item()
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]
