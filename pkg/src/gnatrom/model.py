"""Discrete full-order model: parameterized 1D inviscid Burgers equation.

The conservation law

    U_t + (U^2/2)_x = 0.02 exp(b x),   U(0, t) = a,   U(x, 0) = 1

is discretized by a first-order Godunov finite-volume scheme on a uniform
grid and advanced by backward Euler.  Node 0 carries the Dirichlet inflow
value and is eliminated, so the unknown vector has one entry per remaining
node.  Everything here is a pure function of its inputs; the same row-wise
kernel evaluates the full system and arbitrary masked (sample-index)
subsets so that masked evaluation is bitwise identical to restricting the
full evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


class DimensionError(ValueError):
    """An input array does not match the model dimension."""


class MaskCoverageError(ValueError):
    """A masked evaluation was handed state values that do not cover the
    stencil closure of the requested sample rows."""


@dataclass(frozen=True)
class ParameterPoint:
    """Model inputs: inflow value ``a`` and source exponent rate ``b``."""

    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("parameters must be finite")


@dataclass(frozen=True)
class Grid1D:
    """Uniform node grid; node 0 is the eliminated Dirichlet inflow node."""

    num_nodes: int = 4001
    domain_length: float = 100.0

    def __post_init__(self):
        if self.num_nodes < 3:
            raise ValueError("need at least 3 grid nodes")
        if self.domain_length <= 0:
            raise ValueError("domain length must be positive")

    @property
    def dx(self) -> float:
        return self.domain_length / (self.num_nodes - 1)

    @property
    def num_unknowns(self) -> int:
        return self.num_nodes - 1

    def unknown_coords(self) -> np.ndarray:
        """Coordinates x_i of the unknown nodes (nodes 1..num_nodes-1)."""
        return np.arange(1, self.num_nodes) * self.dx


@dataclass(frozen=True)
class TimeDiscretization:
    dt: float = 0.05
    num_steps: int = 1000
    scheme: str = "backward-euler"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.num_steps < 1:
            raise ValueError("need at least one time step")
        if self.scheme != "backward-euler":
            raise ValueError(f"unsupported time scheme {self.scheme!r}")

    def times(self) -> np.ndarray:
        return np.arange(self.num_steps + 1) * self.dt


@dataclass(frozen=True)
class MaskedState:
    """State entries restricted to a sorted index set."""

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise DimensionError("masked indices/values length mismatch")


@dataclass(frozen=True)
class TridiagonalMatrix:
    """Bandwidth-1 Jacobian in (sub, diag, sup) form."""

    sub: np.ndarray   # length N-1, entry i couples row i+1 to column i
    diag: np.ndarray  # length N
    sup: np.ndarray   # length N-1, entry i couples row i to column i+1

    @property
    def n(self) -> int:
        return len(self.diag)

    def to_banded(self) -> np.ndarray:
        """LAPACK (1,1) banded storage for ``scipy.linalg.solve_banded``."""
        ab = np.zeros((3, self.n))
        ab[0, 1:] = self.sup
        ab[1, :] = self.diag
        ab[2, :-1] = self.sub
        return ab

    def to_dense(self) -> np.ndarray:
        return (np.diag(self.diag) + np.diag(self.sub, -1)
                + np.diag(self.sup, 1))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[1:] += self.sub * v[:-1]
        out[:-1] += self.sup * v[1:]
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return sla.solve_banded((1, 1), self.to_banded(), rhs)


def godunov_flux(u_left, u_right):
    """Exact-Riemann (Godunov) interface flux for f(u) = u^2/2.

    Shock branch takes the larger endpoint flux; rarefaction takes the
    smaller one, or zero when the fan spans the sonic point u = 0.
    Accepts scalars or arrays.
    """
    u_left = np.asarray(u_left, dtype=float)
    u_right = np.asarray(u_right, dtype=float)
    f_left = 0.5 * u_left * u_left
    f_right = 0.5 * u_right * u_right
    shock = u_left > u_right
    rare = np.where(u_left >= 0.0, f_left,
                    np.where(u_right <= 0.0, f_right, 0.0))
    out = np.where(shock, np.maximum(f_left, f_right), rare)
    return out if out.ndim else float(out)


def godunov_flux_derivatives(u_left, u_right):
    """One-sided derivatives (dF/du_left, dF/du_right) of the Godunov flux.

    At the kinks (equal states, equal endpoint fluxes, sonic interface) the
    currently active Riemann branch is frozen, which keeps Newton
    directions well defined.
    """
    u_left = np.asarray(u_left, dtype=float)
    u_right = np.asarray(u_right, dtype=float)
    f_left = 0.5 * u_left * u_left
    f_right = 0.5 * u_right * u_right
    shock = u_left > u_right
    left_wins = f_left >= f_right
    d_left = np.where(shock, np.where(left_wins, u_left, 0.0),
                      np.where(u_left >= 0.0, u_left, 0.0))
    d_right = np.where(shock, np.where(left_wins, 0.0, u_right),
                       np.where(u_left >= 0.0, 0.0,
                                np.where(u_right <= 0.0, u_right, 0.0)))
    if d_left.ndim:
        return d_left, d_right
    return float(d_left), float(d_right)


@dataclass(frozen=True)
class SampleLocality:
    """Precomputed gather positions for masked row evaluation.

    For each sample row i the residual touches u_{i-1}, u_i, u_{i+1}.
    ``pos_*`` index into the stencil-closure set; boundary rows flag the
    Dirichlet inflow ghost, edge rows fold the outflow ghost (copy of the
    last unknown) into the diagonal.
    """

    rows: np.ndarray          # sample indices, sorted
    closure: np.ndarray       # stencil-closure index set, sorted
    pos_left: np.ndarray      # position of i-1 in closure (0 where boundary)
    pos_center: np.ndarray    # position of i in closure
    pos_right: np.ndarray     # position of i+1 in closure (0 where edge)
    left_boundary: np.ndarray  # rows i == 0
    right_edge: np.ndarray     # rows i == N-1


class BurgersModel:
    """Godunov finite-volume Burgers model with masked evaluation support."""

    def __init__(self, grid: Grid1D = Grid1D()):
        self.grid = grid
        self._x = grid.unknown_coords()

    @property
    def dim(self) -> int:
        return self.grid.num_unknowns

    def initial_condition(self) -> np.ndarray:
        return np.ones(self.dim)

    def source(self, mu: ParameterPoint,
               rows: np.ndarray | None = None) -> np.ndarray:
        x = self._x if rows is None else self._x[rows]
        return 0.02 * np.exp(mu.b * x)

    # -- full-system evaluation -------------------------------------------

    def _check_dim(self, *arrays):
        for arr in arrays:
            if len(arr) != self.dim:
                raise DimensionError(
                    f"expected state of length {self.dim}, got {len(arr)}")

    def _neighbor_states(self, state: np.ndarray, a: float):
        """Left/right neighbor values seen by every row (ghosts applied)."""
        u_lm = np.empty(self.dim)
        u_lm[0] = a
        u_lm[1:] = state[:-1]
        u_rp = np.empty(self.dim)
        u_rp[:-1] = state[1:]
        u_rp[-1] = state[-1]
        return u_lm, u_rp

    def semi_discrete_rhs(self, state: np.ndarray,
                          mu: ParameterPoint) -> np.ndarray:
        """Flux-difference plus source right-hand side F(w; mu)."""
        state = np.asarray(state, dtype=float)
        self._check_dim(state)
        u_lm, u_rp = self._neighbor_states(state, mu.a)
        flux_left = godunov_flux(u_lm, state)
        flux_right = godunov_flux(state, u_rp)
        return -(flux_right - flux_left) / self.grid.dx + self.source(mu)

    def residual(self, state_next: np.ndarray, state_prev: np.ndarray,
                 mu: ParameterPoint, dt: float,
                 source_values: np.ndarray | None = None) -> np.ndarray:
        """Backward-Euler residual w_next - w_prev - dt F(w_next).

        ``source_values`` lets a time-stepping loop hoist the (constant)
        source evaluation out of its Newton iterations.
        """
        state_next = np.asarray(state_next, dtype=float)
        state_prev = np.asarray(state_prev, dtype=float)
        self._check_dim(state_next, state_prev)
        u_lm, u_rp = self._neighbor_states(state_next, mu.a)
        src = self.source(mu) if source_values is None else source_values
        return self._rows_residual(state_next, state_prev, u_lm, u_rp, src, dt)

    def residual_jacobian(self, state_next: np.ndarray, mu: ParameterPoint,
                          dt: float) -> TridiagonalMatrix:
        """dR/dw_next = I - dt dF/dw as a tridiagonal matrix."""
        state_next = np.asarray(state_next, dtype=float)
        self._check_dim(state_next)
        u_lm, u_rp = self._neighbor_states(state_next, mu.a)
        left_bc = np.zeros(self.dim, dtype=bool)
        left_bc[0] = True
        right_edge = np.zeros(self.dim, dtype=bool)
        right_edge[-1] = True
        c_sub, c_diag, c_sup = self._jacobian_coefficients(
            u_lm, state_next, u_rp, left_bc, right_edge, dt)
        return TridiagonalMatrix(sub=c_sub[1:], diag=c_diag, sup=c_sup[:-1])

    def jacobian_times_basis(self, state_next: np.ndarray, mu: ParameterPoint,
                             dt: float, basis: np.ndarray) -> np.ndarray:
        """All rows of (dR/dw) @ basis via the same kernel as masked rows."""
        state_next = np.asarray(state_next, dtype=float)
        self._check_dim(state_next)
        u_lm, u_rp = self._neighbor_states(state_next, mu.a)
        left_bc = np.zeros(self.dim, dtype=bool)
        left_bc[0] = True
        right_edge = np.zeros(self.dim, dtype=bool)
        right_edge[-1] = True
        c_sub, c_diag, c_sup = self._jacobian_coefficients(
            u_lm, state_next, u_rp, left_bc, right_edge, dt)
        basis = np.asarray(basis)
        lower = np.empty_like(basis)
        lower[0] = basis[0]   # multiplied by c_sub = 0 on the boundary row
        lower[1:] = basis[:-1]
        upper = np.empty_like(basis)
        upper[:-1] = basis[1:]
        upper[-1] = basis[-1]  # multiplied by c_sup = 0 on the edge row
        return (c_sub[:, None] * lower + c_diag[:, None] * basis
                + c_sup[:, None] * upper)

    # -- masked evaluation --------------------------------------------------

    def stencil_closure(self, sample_indices) -> np.ndarray:
        """Minimal state-index set that the given residual rows read."""
        idx = np.asarray(sample_indices, dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= self.dim):
            raise IndexError("sample index out of range")
        stacked = np.concatenate([idx - 1, idx, idx + 1])
        return np.unique(stacked[(stacked >= 0) & (stacked < self.dim)])

    def sample_locality(self, sample_indices) -> SampleLocality:
        rows = np.unique(np.asarray(sample_indices, dtype=int))
        closure = self.stencil_closure(rows)
        pos = {j: p for p, j in enumerate(closure)}
        left_bc = rows == 0
        right_edge = rows == self.dim - 1
        pos_center = np.array([pos[i] for i in rows], dtype=np.int64)
        pos_left = np.array([pos.get(i - 1, 0) for i in rows], dtype=np.int64)
        pos_right = np.array([pos.get(i + 1, 0) for i in rows], dtype=np.int64)
        return SampleLocality(rows=rows, closure=closure, pos_left=pos_left,
                              pos_center=pos_center, pos_right=pos_right,
                              left_boundary=left_bc, right_edge=right_edge)

    def masked_residual_and_jacobian_basis(
            self, sample_indices, masked_next: MaskedState,
            masked_prev: MaskedState, masked_basis: np.ndarray,
            mu: ParameterPoint, dt: float):
        """Sampled residual rows and sampled rows of (dR/dw) @ basis.

        ``masked_next`` must cover the stencil closure of the sample rows;
        ``masked_prev`` needs only the sample rows themselves.  Touches no
        state entry outside the closure, and reproduces the corresponding
        rows of the full evaluation bitwise.
        """
        loc = self.sample_locality(sample_indices)
        next_idx = np.asarray(masked_next.indices)
        if not np.isin(loc.closure, next_idx).all():
            raise MaskCoverageError("masked state does not cover the closure")
        lookup = {j: p for p, j in enumerate(next_idx)}
        take = np.array([lookup[j] for j in loc.closure])
        u_closure = np.asarray(masked_next.values)[take]
        basis_closure = np.asarray(masked_basis)[take]

        prev_idx = np.asarray(masked_prev.indices)
        if not np.isin(loc.rows, prev_idx).all():
            raise MaskCoverageError("previous state does not cover sample rows")
        plookup = {j: p for p, j in enumerate(prev_idx)}
        prev_rows = np.asarray(masked_prev.values)[
            np.array([plookup[i] for i in loc.rows])]

        return self.masked_rows(loc, u_closure, prev_rows, basis_closure,
                                mu, dt)

    def masked_rows(self, loc: SampleLocality, u_closure: np.ndarray,
                    prev_rows: np.ndarray, basis_closure: np.ndarray | None,
                    mu: ParameterPoint, dt: float,
                    source_rows: np.ndarray | None = None):
        """Row kernel on precomputed locality (the hot masked path)."""
        u_c = u_closure[loc.pos_center]
        u_lm = np.where(loc.left_boundary, mu.a, u_closure[loc.pos_left])
        u_rp = np.where(loc.right_edge, u_c, u_closure[loc.pos_right])
        if source_rows is None:
            source_rows = self.source(mu, loc.rows)
        res = self._rows_residual(u_c, prev_rows, u_lm, u_rp, source_rows, dt)
        if basis_closure is None:
            return res, None
        c_sub, c_diag, c_sup = self._jacobian_coefficients(
            u_lm, u_c, u_rp, loc.left_boundary, loc.right_edge, dt)
        prod = (c_sub[:, None] * basis_closure[loc.pos_left]
                + c_diag[:, None] * basis_closure[loc.pos_center]
                + c_sup[:, None] * basis_closure[loc.pos_right])
        return res, prod

    # -- shared row kernel (identical op order for full and masked) ---------

    def _rows_residual(self, u_center, u_prev, u_lm, u_rp, src, dt):
        flux_left = godunov_flux(u_lm, u_center)
        flux_right = godunov_flux(u_center, u_rp)
        return u_center - u_prev - dt * (
            -(flux_right - flux_left) / self.grid.dx + src)

    def _jacobian_coefficients(self, u_lm, u_center, u_rp, left_bc,
                               right_edge, dt):
        dfl_dl, dfl_dr = godunov_flux_derivatives(u_lm, u_center)
        dfr_dl, dfr_dr = godunov_flux_derivatives(u_center, u_rp)
        r = dt / self.grid.dx
        c_sub = np.where(left_bc, 0.0, -r * dfl_dl)
        c_diag = (1.0 + r * (dfr_dl - dfl_dr)
                  + np.where(right_edge, r * dfr_dr, 0.0))
        c_sup = np.where(right_edge, 0.0, r * dfr_dr)
        return c_sub, c_diag, c_sup
