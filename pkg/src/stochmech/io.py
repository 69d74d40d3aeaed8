"""Plain-text exports: sparse triplets, dense CSV kernels, density files."""

from __future__ import annotations

import csv
import json

import numpy as np
import scipy.sparse as sp

from . import __version__

__all__ = [
    "provenance",
    "write_triplets",
    "read_triplets",
    "write_matrix_csv",
    "read_matrix_csv",
    "write_joint_csv",
    "write_json",
]


def provenance(model=None) -> str:
    h = model.model_hash() if model is not None else "none"
    return f"stochmech {__version__} model-hash {h}"


def write_triplets(path, op, model=None):
    """Write ``row col value`` lines (``row col re im`` for complex operators).

    Two comment lines lead: provenance, then ``dimension N tag T dtype D``.
    """
    M = sp.coo_matrix(op.matrix)
    tag = getattr(op, "state_space", None) or getattr(op, "tag", "operator")
    is_complex = np.iscomplexobj(M.data)
    with open(path, "w") as fh:
        fh.write(f"# {provenance(model)}\n")
        fh.write(f"# dimension {M.shape[0]} tag {tag} dtype {'complex' if is_complex else 'real'}\n")
        order = np.lexsort((M.col, M.row))
        for k in order:
            r, c, v = int(M.row[k]), int(M.col[k]), M.data[k]
            if is_complex:
                fh.write(f"{r} {c} {float(v.real)!r} {float(v.imag)!r}\n")
            else:
                fh.write(f"{r} {c} {float(v)!r}\n")


def read_triplets(path):
    """Return ``(csr_matrix, tag)`` from a triplet file."""
    dim = tag = None
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "dimension":
                    meta = dict(zip(parts[::2], parts[1::2]))
                    dim, tag = int(meta["dimension"]), meta["tag"]
                continue
            parts = line.split()
            if not parts:
                continue
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            vals.append(complex(float(parts[2]), float(parts[3])) if len(parts) == 4 else float(parts[2]))
    if dim is None:
        raise ValueError(f"{path}: missing dimension header")
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim)), tag


def write_matrix_csv(path, matrix, model=None):
    """Dense row-major CSV; complex entries become ``re,im`` column pairs."""
    M = np.asarray(matrix)
    with open(path, "w", newline="") as fh:
        fh.write(f"# {provenance(model)}\n")
        writer = csv.writer(fh)
        for row in M:
            if np.iscomplexobj(M):
                writer.writerow([repr(float(x)) for z in row for x in (z.real, z.imag)])
            else:
                writer.writerow([repr(float(x)) for x in row])


def read_matrix_csv(path, complex_values: bool = True) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if complex_values:
        return data[:, 0::2] + 1j * data[:, 1::2]
    return data


def write_joint_csv(path, joint, model=None, threshold: float = 0.0):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {provenance(model)}\n")
        writer = csv.writer(fh)
        writer.writerow(["xi", "nu", "x", "n", "value"])
        for row in joint.to_sparse_rows(threshold):
            writer.writerow([*row[:4], repr(row[4])])


def write_json(path, payload, model=None):
    record = {"provenance": provenance(model), **payload}
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"cannot serialise {type(obj).__name__}")
