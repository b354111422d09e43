"""Sample-node selection and offline assembly of the online operators.

The greedy algorithm grows a sample-node set by repeatedly reconstructing
the not-yet-used residual/Jacobian basis columns from the rows already
sampled (a gappy least-squares fit restricted to the current sample rows)
and adding the nodes where the reconstruction error is largest.  The
resulting index sets drive row gathering, never a materialized selection
matrix.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


class SamplingError(ValueError):
    """Infeasible greedy configuration or inconsistent index sets."""


class RankDeficiencyError(np.linalg.LinAlgError):
    """A sampled basis lost full column rank where uniqueness requires it."""


def _as_matrix(basis) -> np.ndarray:
    return np.asarray(getattr(basis, "basis", basis), dtype=float)


@dataclass(frozen=True)
class OutputSpec:
    """Which state entries the output functional reads."""

    probes: tuple = ()
    global_output: bool = False


def output_index_set(spec: OutputSpec, num_unknowns: int) -> np.ndarray:
    """State indices needed to evaluate the outputs."""
    if spec.global_output:
        return np.arange(num_unknowns)
    probes = np.unique(np.asarray(spec.probes, dtype=int))
    if probes.size and (probes.min() < 0 or probes.max() >= num_unknowns):
        raise SamplingError("output probe index out of range")
    return probes


@dataclass(frozen=True)
class SampleSets:
    """Node set and the index sets derived from it."""

    nodes: np.ndarray             # sample nodes, sorted
    residual_indices: np.ndarray  # sampled residual rows, sorted
    state_indices: np.ndarray     # stencil closure of the residual rows
    output_indices: np.ndarray
    num_unknowns: int
    unknowns_per_node: int = 1
    global_output: bool = False
    selection_order: tuple = ()

    def __post_init__(self):
        if len(self.residual_indices) != \
                self.unknowns_per_node * len(self.nodes):
            raise SamplingError("|I| must equal n_u * |N|")
        if not np.isin(self.residual_indices, self.state_indices).all():
            raise SamplingError("residual rows must lie inside the closure")

    @property
    def n_samples(self) -> int:
        return len(self.residual_indices)


@dataclass(frozen=True)
class GreedyConfig:
    target_nodes: int
    working_columns: int | None = None  # defaults to min(n_R, n_J, n_u*n_s)
    seed_nodes: tuple = ()
    unknowns_per_node: int = 1


@dataclass
class GreedyTrace:
    """Audit log of the per-iteration arithmetic of the greedy selection."""

    iterations: list = field(default_factory=list)
    rank_warnings: list = field(default_factory=list)


def _node_dofs(nodes, n_u):
    nodes = np.asarray(sorted(nodes), dtype=int)
    return (nodes[:, None] * n_u + np.arange(n_u)[None, :]).ravel()


def _restricted_fit(basis, rows, q_used, col, trace, label):
    """Gappy reconstruction error of one basis column on the sampled rows."""
    sampled = basis[rows, :q_used]
    target = basis[rows, q_used + col]
    coeff, _, rank, _ = np.linalg.lstsq(sampled, target, rcond=None)
    if rank < min(sampled.shape):
        trace.rank_warnings.append(
            f"{label}: rank {rank} < {min(sampled.shape)} at q={q_used + col}")
    return basis[:, q_used + col] - basis[:, :q_used] @ coeff


def greedy_select(phi_R, phi_J, config: GreedyConfig, *, closure,
                  output_indices: np.ndarray | None = None,
                  return_trace: bool = False):
    """Greedy sample-node selection.

    Parameters
    ----------
    phi_R, phi_J : array or PodBasis
        Residual and Jacobian-action bases (rows are degrees of freedom).
    config : GreedyConfig
        Target node count, number of working basis columns, seeds.
    closure : callable
        Maps residual row indices to the state index set they read
        (the model's stencil closure).
    output_indices : array, optional
        State indices required for outputs; defaults to all rows
        (global output).

    Returns the populated :class:`SampleSets` (and the trace when asked).
    """
    R = _as_matrix(phi_R)
    J = _as_matrix(phi_J)
    if R.shape[0] != J.shape[0]:
        raise SamplingError("bases must share their row dimension")
    n_u = config.unknowns_per_node
    if R.shape[0] % n_u:
        raise SamplingError("row count is not divisible by unknowns per node")
    num_nodes = R.shape[0] // n_u
    n_s = config.target_nodes
    if n_s > num_nodes:
        raise SamplingError("cannot sample more nodes than the mesh has")

    seeds = list(dict.fromkeys(int(s) for s in config.seed_nodes))
    if seeds and (min(seeds) < 0 or max(seeds) >= num_nodes):
        raise SamplingError("seed node out of range")
    if len(seeds) > n_s:
        raise SamplingError("more seed nodes than target nodes")

    n_c = config.working_columns
    if n_c is None:
        n_c = min(R.shape[1], J.shape[1], n_u * n_s)
    if not 1 <= n_c <= min(R.shape[1], J.shape[1], n_u * n_s):
        raise SamplingError(
            "working column count must satisfy 1 <= n_c <= min(n_R, n_J, n_u*n_s)")

    trace = GreedyTrace()
    nodes = list(seeds)
    order = list(seeds)
    n_add_total = n_s - len(nodes)

    if n_add_total > 0:
        n_it = min(n_c, n_add_total)
        n_rhs_max = math.ceil(n_c / n_add_total)
        n_cols_min = n_c // n_it
        n_add_min = (n_add_total * n_rhs_max) // n_c
        q_used = 0
        for it in range(1, n_it + 1):
            n_cols_it = n_cols_min + (1 if it <= n_c % n_it else 0)
            n_add_it = n_add_min + (
                1 if (n_rhs_max == 1 and it <= n_add_total % n_c) else 0)
            if it == 1:
                r_work = R[:, :n_cols_it]
                j_work = J[:, :n_cols_it]
            else:
                rows = _node_dofs(nodes, n_u)
                r_work = np.column_stack([
                    _restricted_fit(R, rows, q_used, q, trace, "residual")
                    for q in range(n_cols_it)])
                j_work = np.column_stack([
                    _restricted_fit(J, rows, q_used, q, trace, "jacobian")
                    for q in range(n_cols_it)])
            err_dof = np.sum(r_work * r_work, axis=1) \
                + np.sum(j_work * j_work, axis=1)
            err_node = err_dof.reshape(num_nodes, n_u).sum(axis=1)
            err_node[np.asarray(nodes, dtype=int)] = -np.inf
            for _ in range(n_add_it):
                pick = int(np.argmax(err_node))  # ties break to lowest index
                nodes.append(pick)
                order.append(pick)
                err_node[pick] = -np.inf
            trace.iterations.append({"iteration": it,
                                     "working_columns": n_cols_it,
                                     "nodes_added": n_add_it})
            q_used += n_cols_it

    if trace.rank_warnings:
        warnings.warn("greedy selection hit rank-deficient restricted bases; "
                      "minimum-norm fits were used", RuntimeWarning)

    node_arr = np.array(sorted(nodes), dtype=int)
    res_idx = _node_dofs(node_arr, n_u)
    state_idx = np.asarray(closure(res_idx), dtype=int)
    if output_indices is None:
        out_idx = np.arange(R.shape[0])
        global_out = True
    else:
        out_idx = np.asarray(output_indices, dtype=int)
        global_out = bool(len(out_idx) == R.shape[0])
    sets = SampleSets(nodes=node_arr, residual_indices=res_idx,
                      state_indices=state_idx, output_indices=out_idx,
                      num_unknowns=R.shape[0], unknowns_per_node=n_u,
                      global_output=global_out,
                      selection_order=tuple(order))
    return (sets, trace) if return_trace else sets


class SampleMatrix:
    """Row selection operator acting by gather/scatter; never materialized."""

    def __init__(self, indices, num_unknowns: int):
        self.indices = np.asarray(indices, dtype=int)
        self.num_unknowns = int(num_unknowns)

    def gather(self, v: np.ndarray) -> np.ndarray:
        """Z v: pick the sampled rows."""
        return np.asarray(v)[self.indices]

    def scatter(self, u: np.ndarray) -> np.ndarray:
        """Z^T u: place sampled values back into a zero vector."""
        u = np.asarray(u)
        if u.shape[0] != len(self.indices):
            raise SamplingError("scatter input does not match sample count")
        out = np.zeros((self.num_unknowns,) + u.shape[1:])
        out[self.indices] = u
        return out


def build_sample_matrix_action(sets: SampleSets) -> SampleMatrix:
    return SampleMatrix(sets.residual_indices, sets.num_unknowns)


def pinv_via_pivoted_qr(M: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a full-column-rank matrix.

    Column-pivoted QR; raises :class:`RankDeficiencyError` when the
    triangular factor signals rank below the column count.
    """
    M = np.asarray(M, dtype=float)
    q, r, piv = sla.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0 or np.any(diag < rtol * diag[0]):
        raise RankDeficiencyError(
            f"matrix of shape {M.shape} is rank deficient on the sample rows")
    x = sla.solve_triangular(r, q.T)
    out = np.empty_like(x)
    out[piv, :] = x
    return out


@dataclass(frozen=True)
class OnlineOperators:
    """Everything the hyper-reduced online stage needs, precomputed offline.

    The ``full_*`` fields are references kept for offline diagnostics (error
    bounds, output reconstruction); the online iteration itself reads only
    the masked and sampled arrays.
    """

    A: np.ndarray                       # (Z Phi_J)^+
    B: np.ndarray                       # Phi_J^T Phi_R (Z Phi_R)^+
    masked_state_basis: np.ndarray      # rows of Phi_w on the closure
    masked_initial_condition: np.ndarray
    output_basis: np.ndarray            # rows of Phi_w on the output set
    output_initial_condition: np.ndarray
    sampled_residual_basis: np.ndarray  # Z Phi_R
    sampled_residual_pinv: np.ndarray   # (Z Phi_R)^+
    sets: SampleSets
    full_state_basis: np.ndarray
    full_residual_basis: np.ndarray


def compute_online_operators(phi_w, phi_R, phi_J, sets: SampleSets,
                             initial_condition) -> OnlineOperators:
    """Assemble the gappy least-squares operators and masked rows."""
    W = _as_matrix(phi_w)
    R = _as_matrix(phi_R)
    J = _as_matrix(phi_J)
    w0 = np.asarray(initial_condition, dtype=float)
    n_i = sets.n_samples
    if n_i < R.shape[1] or n_i < J.shape[1]:
        raise SamplingError(
            "need at least as many sample rows as basis columns "
            f"(n_i={n_i}, n_R={R.shape[1]}, n_J={J.shape[1]})")
    if J.shape[1] < W.shape[1]:
        raise SamplingError(
            f"Jacobian basis too small: n_J={J.shape[1]} < n_w={W.shape[1]}")

    rows = sets.residual_indices
    sampled_J = J[rows]
    try:
        A = pinv_via_pivoted_qr(sampled_J)
    except RankDeficiencyError as exc:
        raise RankDeficiencyError(
            "sampled Jacobian basis is rank deficient; the hyper-reduced "
            "least-squares step would be singular") from exc
    sampled_R = R[rows]
    pinv_R = pinv_via_pivoted_qr(sampled_R)
    B = (J.T @ R) @ pinv_R

    return OnlineOperators(
        A=A, B=B,
        masked_state_basis=np.ascontiguousarray(W[sets.state_indices]),
        masked_initial_condition=w0[sets.state_indices],
        output_basis=W[sets.output_indices],
        output_initial_condition=w0[sets.output_indices],
        sampled_residual_basis=sampled_R,
        sampled_residual_pinv=pinv_R,
        sets=sets,
        full_state_basis=W,
        full_residual_basis=R)
