"""Snapshot collection and bit-exact persistence.

State snapshots come in three variants (increments from the initial
condition, per-step increments, raw states).  Residual and Jacobian-action
snapshots are gathered through collector hooks that the solvers invoke at
every nonlinear iteration; the collection procedure id (0..3) decides which
solver tier feeds the hooks and what is stored per iteration:

    procedure 0: tier-I Newton residuals (one matrix, used for both bases)
    procedure 1: tier-II residuals (one matrix, used for both bases)
    procedure 2: tier-II residuals + Jacobian-basis-step products
    procedure 3: tier-II residuals + all Jacobian-basis columns

Matrices persist in a fixed binary layout (column-major float64 plus a JSON
provenance trailer) whose round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"GNATSNAP"
FORMAT_VERSION = 1

KIND_TAGS = {
    "state-increment-from-initial": 1,
    "state-increment-per-step": 2,
    "raw-state": 3,
    "residual-tierI": 4,
    "residual-tierII": 5,
    "jacobian-action-tierII": 6,
    "jacobian-columns-tierII": 7,
    "basis": 8,
    "trajectory-full": 9,
    "trajectory-reduced": 10,
    "operator": 11,
}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}

STATE_VARIANTS = ("from-initial", "per-step-increment", "raw")
_VARIANT_KIND = {
    "from-initial": "state-increment-from-initial",
    "per-step-increment": "state-increment-per-step",
    "raw": "raw-state",
}


class SnapshotFormatError(IOError):
    """Corrupt, truncated, or foreign snapshot file."""


class CollectionError(RuntimeError):
    """A collector hook was driven by the wrong solver tier."""


def column_source(mu, step, iteration=None) -> dict:
    """Provenance record for one snapshot column."""
    mu_rec = None if mu is None else [float(mu.a), float(mu.b)]
    return {"mu": mu_rec, "step": int(step),
            "iter": None if iteration is None else int(iteration)}


@dataclass(frozen=True)
class SnapshotMatrix:
    """Dense snapshot columns with per-column provenance."""

    columns: np.ndarray          # (N, n_snap)
    kind: str
    provenance: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KIND_TAGS:
            raise ValueError(f"unknown snapshot kind {self.kind!r}")
        if self.columns.ndim != 2:
            raise ValueError("snapshot columns must form a 2-d matrix")
        if self.provenance and len(self.provenance) != self.columns.shape[1]:
            raise ValueError("one provenance record per column required")

    @property
    def n_snapshots(self) -> int:
        return self.columns.shape[1]


def collect_state_snapshots(trajectory, variant: str,
                            mu=None) -> SnapshotMatrix:
    """Build a state-snapshot matrix from a stored full-order trajectory.

    ``from-initial`` stores w^n - w^0 and ``per-step-increment`` stores
    w^n - w^{n-1}, both for n = 1..nt; ``raw`` keeps every state as is.
    """
    if variant not in STATE_VARIANTS:
        raise ValueError(f"unknown snapshot variant {variant!r}")
    states = np.asarray(trajectory.states if hasattr(trajectory, "states")
                        else trajectory)
    if states.shape[0] < 1 or (variant != "raw" and states.shape[0] < 2):
        raise ValueError("trajectory too short for snapshot collection")
    mu = mu if mu is not None else getattr(trajectory, "mu", None)
    if variant == "from-initial":
        cols = (states[1:] - states[0]).T
        steps = range(1, states.shape[0])
    elif variant == "per-step-increment":
        cols = (states[1:] - states[:-1]).T
        steps = range(1, states.shape[0])
    else:
        cols = states.T
        steps = range(states.shape[0])
    prov = tuple(column_source(mu, n) for n in steps)
    return SnapshotMatrix(columns=np.ascontiguousarray(cols),
                          kind=_VARIANT_KIND[variant], provenance=prov)


class HyperReductionCollector:
    """Accumulates residual / Jacobian-action snapshots per procedure id.

    Solvers call :meth:`on_tier1_iteration` or :meth:`on_tier2_iteration`
    once per nonlinear iteration that produces a step.  ``matrices()``
    returns the (residual-basis, Jacobian-basis) snapshot pair.
    """

    def __init__(self, procedure: int):
        if procedure not in (0, 1, 2, 3):
            raise ValueError("procedure id must be one of 0, 1, 2, 3")
        self.procedure = procedure
        self._res_cols = []
        self._jac_cols = []
        self._res_prov = []
        self._jac_prov = []

    def on_tier1_iteration(self, mu, step, iteration, residual):
        if self.procedure != 0:
            raise CollectionError(
                f"procedure {self.procedure} collects from tier-II solves")
        self._res_cols.append(np.array(residual))
        self._res_prov.append(column_source(mu, step, iteration))

    def on_tier2_iteration(self, mu, step, iteration, residual,
                           jacobian_basis_product, step_vector):
        if self.procedure == 0:
            raise CollectionError("procedure 0 collects from tier-I solves")
        src = column_source(mu, step, iteration)
        self._res_cols.append(np.array(residual))
        self._res_prov.append(src)
        if self.procedure == 2:
            self._jac_cols.append(
                np.asarray(jacobian_basis_product) @ np.asarray(step_vector))
            self._jac_prov.append(src)
        elif self.procedure == 3:
            for col in np.asarray(jacobian_basis_product).T:
                self._jac_cols.append(np.array(col))
                self._jac_prov.append(src)

    def matrices(self) -> tuple[SnapshotMatrix, SnapshotMatrix]:
        if not self._res_cols:
            raise CollectionError("no snapshots were collected")
        res_kind = "residual-tierI" if self.procedure == 0 else "residual-tierII"
        res = SnapshotMatrix(columns=np.array(self._res_cols).T, kind=res_kind,
                             provenance=tuple(self._res_prov))
        if self.procedure in (0, 1):
            jac = SnapshotMatrix(columns=res.columns.copy(), kind=res_kind,
                                 provenance=tuple(self._res_prov))
        else:
            kind = ("jacobian-action-tierII" if self.procedure == 2
                    else "jacobian-columns-tierII")
            jac = SnapshotMatrix(columns=np.array(self._jac_cols).T, kind=kind,
                                 provenance=tuple(self._jac_prov))
        return res, jac


def normalize_columns(matrix: SnapshotMatrix) -> SnapshotMatrix:
    """Scale every column to unit Euclidean norm, dropping zero columns."""
    norms = np.linalg.norm(matrix.columns, axis=0)
    keep = norms > 0.0
    cols = matrix.columns[:, keep] / norms[keep]
    prov = tuple(p for p, k in zip(matrix.provenance, keep) if k) \
        if matrix.provenance else ()
    return SnapshotMatrix(columns=cols, kind=matrix.kind, provenance=prov,
                          meta=dict(matrix.meta))


# -- persistence -------------------------------------------------------------

_HEADER = struct.Struct("<IIQQ")  # version, kind tag, rows, cols


def persist(matrix: SnapshotMatrix, path) -> None:
    """Write a snapshot matrix; the round trip through ``load`` is bit-exact."""
    payload = np.asfortranarray(matrix.columns.astype("<f8", copy=False))
    rows, cols = payload.shape
    trailer = json.dumps(
        {"columns": list(matrix.provenance), "meta": matrix.meta},
        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(FORMAT_VERSION, KIND_TAGS[matrix.kind],
                              rows, cols))
        fh.write(payload.tobytes(order="F"))
        fh.write(struct.pack("<Q", len(trailer)))
        fh.write(trailer)


def load(path) -> SnapshotMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise SnapshotFormatError(f"{path}: truncated header")
        version, tag, rows, cols = _HEADER.unpack(head)
        if version != FORMAT_VERSION:
            raise SnapshotFormatError(f"{path}: unsupported version {version}")
        if tag not in TAG_KINDS:
            raise SnapshotFormatError(f"{path}: unknown kind tag {tag}")
        nbytes = 8 * rows * cols
        raw = fh.read(nbytes)
        if len(raw) != nbytes:
            raise SnapshotFormatError(f"{path}: truncated payload")
        columns = np.frombuffer(raw, dtype="<f8").reshape((rows, cols),
                                                          order="F").copy()
        size_raw = fh.read(8)
        if len(size_raw) != 8:
            raise SnapshotFormatError(f"{path}: missing provenance trailer")
        (tr_len,) = struct.unpack("<Q", size_raw)
        trailer = fh.read(tr_len)
        if len(trailer) != tr_len:
            raise SnapshotFormatError(f"{path}: truncated provenance trailer")
    doc = json.loads(trailer.decode("utf-8"))
    return SnapshotMatrix(columns=columns, kind=TAG_KINDS[tag],
                          provenance=tuple(doc.get("columns", ())),
                          meta=doc.get("meta", {}))
