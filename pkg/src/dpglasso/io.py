"""File formats: headerless full-precision CSV for matrices and edges, JSON for metadata."""

import json
import math
from pathlib import Path

import numpy as np

from .graph_model import EdgeSet
from .privacy import EncryptedRelease

FLOAT_FMT = "%.17g"


def write_matrix(path, M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    np.savetxt(path, M, fmt=FLOAT_FMT, delimiter=",")


def read_matrix(path):
    M = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    return M


def write_edges(path, edges):
    with open(path, "w") as fh:
        for i, j in edges.sorted():
            fh.write(f"{i},{j}\n")


def read_edges(path, p):
    pairs = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                i, j = line.split(",")
                pairs.append((int(i), int(j)))
    return EdgeSet(p, frozenset(pairs))


def _clean(obj):
    """Make numpy scalars/arrays and non-finite floats JSON-friendly."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if hasattr(obj, "value") and not isinstance(obj, (int, float, str)):  # enums
        return obj.value
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_release(out_dir, release, data_name="encrypted.csv", sidecar_name="release.json"):
    out = Path(out_dir)
    write_matrix(out / data_name, release.data)
    write_json(out / sidecar_name, release.sidecar())


class MissingNoiseScale(ValueError):
    pass


def read_release(data_path, sidecar_path):
    meta = read_json(sidecar_path)
    if "sigma" not in meta or meta["sigma"] is None:
        raise MissingNoiseScale(
            f"{sidecar_path} has no 'sigma': the noise scale is the one extra piece of "
            "information needed to debias the released covariance"
        )
    family = meta.get("family", "continuous")
    return EncryptedRelease(read_matrix(data_path), family, float(meta["sigma"]), meta.get("sigma_bar"))


def write_csv_rows(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if v is None:
        return "nan"
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FMT % float(v)
