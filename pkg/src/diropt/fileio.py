"""Plain-text formats: graphs, matrices, instance directories and traces."""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .graph import DirectedNetwork
from .problems import (
    Reference,
    geometric_median_from_points,
    least_squares_from_data,
    qp_from_data,
)

TRACE_FIELDS = ("t", "dist_to_ref", "consensus_error", "optimality_residual", "objective", "lyapunov")


def fmt(x):
    """17 significant digits, enough to round-trip a double."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


# ---------------------------------------------------------------- graphs


def graph_to_text(net):
    lines = [str(net.n)]
    lines += [f"{i} {j}" for i, j in sorted(net.edges)]
    return "\n".join(lines) + "\n"


def graph_from_text(text):
    rows = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    rows = [r for r in rows if r]
    if not rows:
        raise ValueError("empty graph file")
    n = int(rows[0])
    edges = []
    for k, r in enumerate(rows[1:], start=2):
        parts = r.split()
        if len(parts) != 2:
            raise ValueError(f"line {k}: expected 'i j', got {r!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return DirectedNetwork(n, frozenset(edges))


def write_graph(net, path):
    Path(path).write_text(graph_to_text(net))


def read_graph(path):
    return graph_from_text(Path(path).read_text())


# ---------------------------------------------------------------- matrices


def matrix_to_csv(M):
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    return "".join(",".join(fmt(v) for v in row) + "\n" for row in M)


def write_matrix(M, path):
    Path(path).write_text(matrix_to_csv(M))


def read_matrix(path):
    rows = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    return np.array([[float(v) for v in ln.split(",")] for ln in rows], dtype=np.float64)


# ---------------------------------------------------------------- instances


def export_instance(inst, directory):
    """Write ``meta.json`` plus one CSV per data matrix (per-agent blocks as ``NAME_i.csv``)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {"family": inst.family, "n": inst.n, "p": inst.p, "seed": inst.seed,
            "params": inst.params, "resamples": inst.resamples, "arrays": {}}
    for name, arr in inst.data.items():
        arr = np.asarray(arr)
        if arr.ndim == 3:
            for i in range(arr.shape[0]):
                write_matrix(arr[i], d / f"{name}_{i}.csv")
            meta["arrays"][name] = {"ndim": 3, "count": int(arr.shape[0])}
        else:
            write_matrix(arr.reshape(arr.shape[0], -1) if arr.ndim == 2 else arr[:, None],
                         d / f"{name}.csv")
            meta["arrays"][name] = {"ndim": int(arr.ndim)}
    if inst.reference is not None:
        write_matrix(inst.reference.x[None, :], d / "reference.csv")
        ref = inst.reference
        meta["reference"] = {"residual": ref.residual, "certified": ref.certified,
                             "method": ref.method, "label": ref.label}
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def import_instance(directory):
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    data = {}
    for name, info in meta["arrays"].items():
        if info["ndim"] == 3:
            data[name] = np.stack([read_matrix(d / f"{name}_{i}.csv") for i in range(info["count"])])
        elif info["ndim"] == 1:
            data[name] = read_matrix(d / f"{name}.csv")[:, 0]
        else:
            data[name] = read_matrix(d / f"{name}.csv")
    fam, seed, params = meta["family"], meta["seed"], meta["params"]
    if fam == "geometric_median":
        inst = geometric_median_from_points(data["b"], seed, reference=False)
    elif fam in ("l1_ls", "lq_ls"):
        q = params.get("q") if fam == "lq_ls" else None
        inst = least_squares_from_data(data["B"], data["b"], params["lambda"], q, seed, False)
        inst.params.update(params)
    elif fam == "qp":
        inst = qp_from_data(data["Q"], data["h"], data["a"], data["bq"], seed, False)
        inst.params.update(params)
    else:
        raise ValueError(f"unknown family {fam!r}")
    inst.resamples = meta.get("resamples", 0)
    if "reference" in meta:
        r = meta["reference"]
        x = read_matrix(d / "reference.csv")[0]
        inst.reference = Reference(x, r["residual"], r["certified"], r["method"], r["label"])
    return inst


# ---------------------------------------------------------------- traces


def trace_to_csv(trace):
    lines = [",".join(TRACE_FIELDS)]
    for r in trace:
        lines.append(",".join([str(int(r.t))] + [fmt(getattr(r, k)) for k in TRACE_FIELDS[1:]]))
    return "\n".join(lines) + "\n"


def write_trace(trace, path):
    Path(path).write_text(trace_to_csv(trace))


def read_trace(path):
    """Columns of a trace CSV as a dict of numpy arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in TRACE_FIELDS}
