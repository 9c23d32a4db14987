"""Time-ordered run records and their delimited serialization.

A trace row k (0-based outer iteration) holds the pre-step iterate x^k, the
inner/adjoint outputs u^{k+1} and w^{k+1}, the gradient estimate at x^k, and
the ledger/diagnostic scalars of that iteration.  Floats are serialized with
17 significant digits so identical runs are byte-identical on disk.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = ["IterateTrace", "write_trace_csv", "read_trace_csv"]

SCALAR_COLUMNS = [
    "grad_err",
    "e_pk",
    "e_lip",
    "errDesc",
    "errMono",
    "gap",
    "step_norm_M",
    "dist_to_xbar_M",
    "residual",
]


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class IterateTrace:
    """Record of a single run: iterates, estimates, and ledger scalars.

    ``xs`` has one more row than the number of outer iterations; ``us`` and
    ``ws`` are aligned so that us[k+1] is the inner output of iteration k
    (ws holds the flattened sensitivity matrix for the basic adjoint).
    """

    xs: np.ndarray
    us: np.ndarray
    ws: np.ndarray
    grad_est: np.ndarray
    qtil: np.ndarray
    subgrad: np.ndarray
    scalars: dict  # name -> (N,) array, keys SCALAR_COLUMNS
    method: str
    status: str
    config: dict
    xbar: Optional[np.ndarray] = None
    counters: dict = field(default_factory=dict)
    instance: object = None
    ledger: object = None
    constants: object = None
    M: object = None
    Xi: object = None
    certificates: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def __post_init__(self):
        n = self.n_iterations
        for name in SCALAR_COLUMNS:
            arr = np.asarray(self.scalars.get(name, np.zeros(n)), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"scalar column {name} has shape {arr.shape}, expected ({n},)")
            self.scalars[name] = arr

    @property
    def n_iterations(self) -> int:
        return self.xs.shape[0] - 1

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    def header(self) -> list[str]:
        dx = self.xs.shape[1]
        du = self.us.shape[1]
        dw = self.ws.shape[1]
        dg = self.grad_est.shape[1]
        cols = ["k"]
        cols += [f"x{i}" for i in range(dx)]
        cols += [f"u{i}" for i in range(du)]
        cols += [f"w{i}" for i in range(dw)]
        cols += [f"g{i}" for i in range(dg)]
        cols += SCALAR_COLUMNS
        return cols

    def row(self, k: int) -> list[float]:
        vals: list[float] = [float(k)]
        vals += self.xs[k].tolist()
        vals += self.us[k + 1].tolist()
        vals += self.ws[k + 1].tolist()
        vals += self.grad_est[k].tolist()
        vals += [float(self.scalars[name][k]) for name in SCALAR_COLUMNS]
        return vals


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write_trace_csv(trace: IterateTrace, path) -> None:
    lines = [",".join(trace.header())]
    for k in range(trace.n_iterations):
        lines.append(",".join(_fmt(v) for v in trace.row(k)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace_csv(path) -> dict:
    """Load a trace CSV back into named arrays (header-driven)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        body = fh.read()
    if not body.strip():
        raise ValueError(f"empty trace file {path}")
    data = np.loadtxt(body.splitlines(), delimiter=",", ndmin=2)
    out: dict = {}
    groups: dict[str, list[int]] = {}
    for idx, name in enumerate(header):
        if name in ("k", *SCALAR_COLUMNS):
            out[name] = data[:, idx]
        else:
            groups.setdefault(name[0], []).append(idx)
    for prefix, cols in groups.items():
        key = {"x": "xs", "u": "us", "w": "ws", "g": "grad_est"}[prefix]
        out[key] = data[:, cols]
    return out
