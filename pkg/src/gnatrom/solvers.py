"""Time-stepping solvers for the three model tiers plus baseline methods.

Tier I solves the full nonlinear system each step with a banded Newton
method.  Tier II performs Gauss-Newton residual minimization over an
affine trial subspace.  Tier III runs the hyper-reduced iteration on the
sample mesh only.  All reduced solvers share one composite convergence
test: residual-norm drop, relative gradient, stall detection (two
consecutive iterations without measurable decrease, which is the noise
floor imposed by the flux kinks), and an iteration budget.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import _gnat_kernels as _gk
from .model import BurgersModel, ParameterPoint, TimeDiscretization
from .sampling import OnlineOperators, SampleSets, compute_online_operators

STATUS_LABELS = {
    _gk.STATUS_RESIDUAL: "residual",
    _gk.STATUS_GRADIENT: "gradient",
    _gk.STATUS_STALLED: "stalled",
    _gk.STATUS_MAXITER: "max-iterations",
    _gk.STATUS_DIVERGED: "diverged",
    _gk.STATUS_SINGULAR: "singular",
}


class StepFailureError(RuntimeError):
    """A time step could not be completed; carries diagnostics."""

    def __init__(self, message, step=None, iterations=None, norm=None,
                 iterates=None):
        super().__init__(message)
        self.step = step
        self.iterations = iterations
        self.norm = norm
        self.iterates = iterates


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and step-length policy shared by all tiers."""

    newton_abs_tol: float = 1e-8
    newton_rel_tol: float = 1e-6
    max_newton_iters: int = 20
    step_policy: str = "unit"            # "unit" | "backtracking"
    armijo_c: float = 1e-4
    backtrack_ratio: float = 0.5
    max_halvings: int = 10
    gn_gradient_tol: float = 1e-12       # absolute floor
    gn_gradient_rel: float = 1e-4        # relative to first-iteration gradient
    gn_max_iters: int = 20
    stall_ratio: float = 0.999
    stall_strikes: int = 2

    def __post_init__(self):
        if min(self.newton_abs_tol, self.newton_rel_tol,
               self.gn_gradient_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if min(self.max_newton_iters, self.gn_max_iters) < 1:
            raise ValueError("iteration budgets must be at least 1")
        if self.step_policy not in ("unit", "backtracking"):
            raise ValueError(f"unknown step policy {self.step_policy!r}")


@dataclass
class Trajectory:
    """Solution of one run: states or reduced coordinates over time."""

    states: np.ndarray            # (nt+1, N) full or (nt+1, n_w) reduced
    times: np.ndarray
    iterations: np.ndarray        # per-step nonlinear iteration counts
    residual_norms: np.ndarray    # per-step final residual(-proxy) norm
    gradient_norms: np.ndarray
    statuses: np.ndarray          # per-step convergence status code
    kind: str                     # "full" | "reduced"
    mu: ParameterPoint
    basis: np.ndarray | None = None
    initial_condition: np.ndarray | None = None
    counters: dict = field(default_factory=dict)
    iterates: list | None = None  # per-step iterate stacks when recorded

    @property
    def num_steps(self) -> int:
        return len(self.states) - 1

    @property
    def converged(self) -> np.ndarray:
        return self.statuses <= _gk.STATUS_STALLED

    def reconstruct(self) -> np.ndarray:
        """Full state trajectory; identity for tier-I runs."""
        if self.kind == "full":
            return self.states
        return self.initial_condition[None, :] + self.states @ self.basis.T


def _as_matrix(basis) -> np.ndarray:
    return np.asarray(getattr(basis, "basis", basis), dtype=float)


# -- tier I ------------------------------------------------------------------

def solve_fom(mu: ParameterPoint, model: BurgersModel,
              time: TimeDiscretization, config: SolverConfig = SolverConfig(),
              collector=None, initial_state=None) -> Trajectory:
    """Full-order implicit solve; Newton with the tridiagonal Jacobian.

    A step that exhausts the Newton budget aborts the run with diagnostics.
    ``collector`` receives every residual iterate (procedure-0 snapshots).
    ``initial_state`` overrides the model's initial condition (restarts).
    """
    dt = time.dt
    src = model.source(mu)
    w = (model.initial_condition() if initial_state is None
         else np.asarray(initial_state, dtype=float).copy())
    states = np.empty((time.num_steps + 1, model.dim))
    states[0] = w
    iters = np.zeros(time.num_steps, dtype=int)
    res_norms = np.zeros(time.num_steps)
    statuses = np.zeros(time.num_steps, dtype=int)

    for n in range(time.num_steps):
        w_prev = w
        w_next = w_prev.copy()
        r = model.residual(w_next, w_prev, mu, dt, source_values=src)
        norm0 = np.linalg.norm(r)
        k = 0
        while True:
            norm_r = np.linalg.norm(r)
            if not np.isfinite(norm_r):
                raise StepFailureError(
                    f"tier-I step {n} diverged at iteration {k}",
                    step=n, iterations=k, norm=norm_r)
            if norm_r <= max(config.newton_abs_tol,
                             config.newton_rel_tol * norm0):
                break
            if k >= config.max_newton_iters:
                raise StepFailureError(
                    f"tier-I step {n} failed: |R| = {norm_r:.3e} after "
                    f"{k} Newton iterations (start |R| = {norm0:.3e})",
                    step=n, iterations=k, norm=norm_r)
            if collector is not None:
                collector.on_tier1_iteration(mu, n, k, r)
            jac = model.residual_jacobian(w_next, mu, dt)
            step = jac.solve(-r)
            alpha = 1.0
            if config.step_policy == "backtracking":
                for _ in range(config.max_halvings):
                    trial = model.residual(w_next + alpha * step, w_prev, mu,
                                           dt, source_values=src)
                    if np.linalg.norm(trial) <= \
                            (1.0 - config.armijo_c * alpha) * norm_r:
                        break
                    alpha *= config.backtrack_ratio
            w_next = w_next + alpha * step
            r = model.residual(w_next, w_prev, mu, dt, source_values=src)
            k += 1
        iters[n] = k
        res_norms[n] = np.linalg.norm(r)
        statuses[n] = _gk.STATUS_RESIDUAL
        w = w_next
        states[n + 1] = w

    return Trajectory(states=states, times=time.times(), iterations=iters,
                      residual_norms=res_norms,
                      gradient_norms=np.zeros(time.num_steps),
                      statuses=statuses, kind="full", mu=mu,
                      counters={"newton_iterations": int(iters.sum())})


# -- shared reduced-solver convergence bookkeeping ----------------------------

class _Convergence:
    """Composite convergence test mirrored by the jitted online kernel."""

    def __init__(self, config: SolverConfig):
        self.cfg = config
        self.norm0 = None
        self.grad0 = None
        self.prev = None
        self.strikes = 0

    def check_residual(self, norm_r, k):
        cfg = self.cfg
        if not np.isfinite(norm_r):
            return _gk.STATUS_DIVERGED
        if k == 0:
            self.norm0 = norm_r
        if norm_r <= max(cfg.newton_abs_tol, cfg.newton_rel_tol * self.norm0):
            return _gk.STATUS_RESIDUAL
        if k >= 1:
            if norm_r > cfg.stall_ratio * self.prev:
                self.strikes += 1
                if self.strikes >= cfg.stall_strikes:
                    return _gk.STATUS_STALLED
            else:
                self.strikes = 0
        self.prev = norm_r
        if k >= cfg.gn_max_iters:
            return _gk.STATUS_MAXITER
        return None

    def check_gradient(self, norm_g, k):
        if k == 0:
            self.grad0 = norm_g
        if norm_g <= max(self.cfg.gn_gradient_tol,
                         self.cfg.gn_gradient_rel * self.grad0):
            return _gk.STATUS_GRADIENT
        return None


def _finish_reduced(step, status, norm_r):
    """Raise on fatal statuses; non-convergence is recorded, not fatal."""
    if status == _gk.STATUS_DIVERGED:
        raise StepFailureError(
            f"reduced step {step} diverged (|residual| = {norm_r:.3e})",
            step=step, norm=norm_r)
    if status == _gk.STATUS_SINGULAR:
        raise StepFailureError(
            f"reduced step {step}: singular reduced least-squares system",
            step=step, norm=norm_r)


def _line_search(config, merit, norm_r, y, s):
    """Step length by simple backtracking on the given merit function."""
    alpha = 1.0
    if config.step_policy != "backtracking":
        return alpha
    for _ in range(config.max_halvings):
        if merit(y + alpha * s) <= (1.0 - config.armijo_c * alpha) * norm_r:
            break
        alpha *= config.backtrack_ratio
    return alpha


# -- tier II -------------------------------------------------------------------

def solve_tier2_pg(mu: ParameterPoint, model: BurgersModel, phi_w,
                   initial_condition, time: TimeDiscretization,
                   config: SolverConfig = SolverConfig(), collector=None,
                   record_iterates: bool = False) -> Trajectory:
    """Gauss-Newton minimization of the full residual over w0 + range(phi_w).

    Each step starts from the previous step's generalized coordinates and
    solves the linearized least-squares problem by QR.  ``collector``
    receives (residual, Jacobian-basis product, step) per iteration.
    """
    Phi = _as_matrix(phi_w)
    w0 = np.asarray(initial_condition, dtype=float)
    dt = time.dt
    src = model.source(mu)
    n_w = Phi.shape[1]
    y = np.zeros(n_w)
    coords = np.empty((time.num_steps + 1, n_w))
    coords[0] = y
    iters = np.zeros(time.num_steps, dtype=int)
    res_norms = np.zeros(time.num_steps)
    grad_norms = np.zeros(time.num_steps)
    statuses = np.zeros(time.num_steps, dtype=int)
    all_iterates = [] if record_iterates else None

    for n in range(time.num_steps):
        w_prev = w0 + Phi @ y
        conv = _Convergence(config)
        k = 0
        step_iterates = [y.copy()]
        norm_g = 0.0
        while True:
            w = w0 + Phi @ y
            r = model.residual(w, w_prev, mu, dt, source_values=src)
            norm_r = np.linalg.norm(r)
            status = conv.check_residual(norm_r, k)
            if status is not None:
                break
            jac_phi = model.jacobian_times_basis(w, mu, dt, Phi)
            grad = jac_phi.T @ r
            norm_g = np.linalg.norm(grad)
            status = conv.check_gradient(norm_g, k)
            if status is not None:
                break
            s = sla.lstsq(jac_phi, -r, lapack_driver="gelsy")[0]
            if collector is not None:
                collector.on_tier2_iteration(mu, n, k, r, jac_phi, s)
            alpha = _line_search(
                config,
                lambda yt: np.linalg.norm(model.residual(
                    w0 + Phi @ yt, w_prev, mu, dt, source_values=src)),
                norm_r, y, s)
            y = y + alpha * s
            step_iterates.append(y.copy())
            k += 1
        _finish_reduced(n, status, norm_r)
        iters[n] = k
        res_norms[n] = norm_r
        grad_norms[n] = norm_g
        statuses[n] = status
        coords[n + 1] = y
        if record_iterates:
            all_iterates.append(np.array(step_iterates))

    return Trajectory(states=coords, times=time.times(), iterations=iters,
                      residual_norms=res_norms, gradient_norms=grad_norms,
                      statuses=statuses, kind="reduced", mu=mu, basis=Phi,
                      initial_condition=w0,
                      counters={"gauss_newton_iterations": int(iters.sum())},
                      iterates=all_iterates)


# -- tier III ------------------------------------------------------------------

def warm_up_kernels():
    """Compile the jitted online kernel on a tiny dummy problem."""
    n_rows, n_w, n_mask = 3, 2, 5
    rng = np.random.default_rng(0)
    iterates = np.empty((4, n_w))
    _gk.gnat_step(np.zeros(n_w), np.ones(n_rows),
                  rng.normal(size=(n_w, n_rows)),
                  rng.normal(size=(n_w, n_rows)),
                  np.ascontiguousarray(rng.normal(size=(n_mask, n_w))),
                  np.ones(n_mask),
                  np.array([0, 1, 2], dtype=np.int64),
                  np.array([1, 2, 3], dtype=np.int64),
                  np.array([2, 3, 4], dtype=np.int64),
                  np.zeros(n_rows, dtype=np.bool_),
                  np.zeros(n_rows, dtype=np.bool_),
                  np.zeros(n_rows), 1.0, 0.1, 0.5,
                  1e-12, 1e-6, 1e-12, 1e-4, 0.999, 2, 1,
                  False, 1e-4, 0.5, 10, iterates)


def solve_gnat_online(mu: ParameterPoint, model: BurgersModel,
                      operators: OnlineOperators, time: TimeDiscretization,
                      config: SolverConfig = SolverConfig(),
                      record_iterates: bool = False) -> Trajectory:
    """Hyper-reduced online solve on the sample mesh.

    Per iteration the kernel updates the stencil-closure state entries,
    evaluates the sampled residual rows and Jacobian-basis rows, and solves
    the reduced least-squares problem built from the precomputed gappy
    operators.  No array in the loop is sized by the full dimension.
    """
    sets = operators.sets
    loc = model.sample_locality(sets.residual_indices)
    if not np.array_equal(loc.closure, sets.state_indices):
        raise ValueError("operators and model disagree on the stencil closure")
    dt = time.dt
    src_rows = model.source(mu, loc.rows)
    phi_closure = np.ascontiguousarray(operators.masked_state_basis)
    w0_closure = np.ascontiguousarray(operators.masked_initial_condition)
    A = np.ascontiguousarray(operators.A)
    B = np.ascontiguousarray(operators.B)
    n_w = phi_closure.shape[1]
    backtracking = config.step_policy == "backtracking"

    y = np.zeros(n_w)
    coords = np.empty((time.num_steps + 1, n_w))
    coords[0] = y
    iters = np.zeros(time.num_steps, dtype=int)
    res_norms = np.zeros(time.num_steps)
    grad_norms = np.zeros(time.num_steps)
    statuses = np.zeros(time.num_steps, dtype=int)
    iter_buf = np.empty((config.gn_max_iters + 2, n_w))
    all_iterates = [] if record_iterates else None
    total_evals = 0

    for n in range(time.num_steps):
        u_prev_rows = (w0_closure + phi_closure @ y)[loc.pos_center]
        k, status, norm_bd, norm_g, n_evals = _gk.gnat_step(
            y, u_prev_rows, A, B, phi_closure, w0_closure,
            loc.pos_left, loc.pos_center, loc.pos_right,
            loc.left_boundary, loc.right_edge, src_rows,
            mu.a, dt, model.grid.dx,
            config.newton_abs_tol, config.newton_rel_tol,
            config.gn_gradient_tol, config.gn_gradient_rel,
            config.stall_ratio, config.stall_strikes, config.gn_max_iters,
            backtracking, config.armijo_c, config.backtrack_ratio,
            config.max_halvings, iter_buf)
        if status in (_gk.STATUS_DIVERGED, _gk.STATUS_SINGULAR):
            raise StepFailureError(
                f"online step {n} {STATUS_LABELS[status]} after {k} "
                f"iterations (|B D| = {norm_bd:.3e})",
                step=n, iterations=k, norm=norm_bd,
                iterates=iter_buf[:k + 1].copy())
        total_evals += n_evals
        iters[n] = k
        res_norms[n] = norm_bd
        grad_norms[n] = norm_g
        statuses[n] = status
        coords[n + 1] = y
        if record_iterates:
            all_iterates.append(iter_buf[:k + 1].copy())

    counters = {
        "gauss_newton_iterations": int(iters.sum()),
        "sampled_residual_evaluations": int(total_evals),
        "residual_rows_per_iteration": int(len(loc.rows)),
        "state_entries_per_iteration": int(len(loc.closure)),
    }
    return Trajectory(states=coords, times=time.times(), iterations=iters,
                      residual_norms=res_norms, gradient_norms=grad_norms,
                      statuses=statuses, kind="reduced", mu=mu,
                      basis=operators.full_state_basis,
                      initial_condition=_reconstruct_ic(operators),
                      counters=counters, iterates=all_iterates)


def _reconstruct_ic(operators: OnlineOperators):
    # full initial condition is only needed for post-hoc reconstruction;
    # for the global-output benchmark the output rows carry all of it
    if operators.sets.global_output:
        return operators.output_initial_condition
    return None


# -- output post-processing ----------------------------------------------------

def compute_outputs(trajectory: Trajectory,
                    operators: OnlineOperators) -> np.ndarray:
    """Output-row state series reconstructed from generalized coordinates.

    Touches only the output-index rows of the state basis: the result row n
    is w0 + phi_w @ y_n restricted to those rows.
    """
    if trajectory.kind != "reduced":
        return trajectory.states[:, operators.sets.output_indices]
    return (operators.output_initial_condition[None, :]
            + trajectory.states @ operators.output_basis.T)


# -- baseline hyper-reduction methods -------------------------------------------

def _masked_setup(model, phi_w, sets, mu, initial_condition):
    Phi = _as_matrix(phi_w)
    w0 = (model.initial_condition() if initial_condition is None
          else np.asarray(initial_condition, dtype=float))
    loc = model.sample_locality(sets.residual_indices)
    phi_closure = Phi[loc.closure]
    w0_closure = w0[loc.closure]
    src_rows = model.source(mu, loc.rows)
    sampled_phi = Phi[loc.rows]
    return Phi, w0, loc, phi_closure, w0_closure, src_rows, sampled_phi


def _collocation_solve(mu, model, phi_w, sets, time, config,
                       initial_condition, galerkin: bool) -> Trajectory:
    Phi, w0, loc, phi_closure, w0_closure, src_rows, sampled_phi = \
        _masked_setup(model, phi_w, sets, mu, initial_condition)
    dt = time.dt
    n_w = Phi.shape[1]
    y = np.zeros(n_w)
    coords = np.empty((time.num_steps + 1, n_w))
    coords[0] = y
    iters = np.zeros(time.num_steps, dtype=int)
    res_norms = np.zeros(time.num_steps)
    grad_norms = np.zeros(time.num_steps)
    statuses = np.zeros(time.num_steps, dtype=int)

    for n in range(time.num_steps):
        u_prev_rows = (w0_closure + phi_closure @ y)[loc.pos_center]
        conv = _Convergence(config)
        k = 0
        norm_g = 0.0
        while True:
            u_closure = w0_closure + phi_closure @ y
            sampled_r, sampled_jac = model.masked_rows(
                loc, u_closure, u_prev_rows, phi_closure, mu, dt,
                source_rows=src_rows)
            if galerkin:
                # projected square system (Z Phi)^T Z R = 0
                proj_r = sampled_phi.T @ sampled_r
                norm_r = np.linalg.norm(proj_r)
            else:
                norm_r = np.linalg.norm(sampled_r)
            status = conv.check_residual(norm_r, k)
            if status is not None:
                break
            if galerkin:
                grad = (sampled_phi.T @ sampled_jac).T @ proj_r
            else:
                grad = sampled_jac.T @ sampled_r
            norm_g = np.linalg.norm(grad)
            status = conv.check_gradient(norm_g, k)
            if status is not None:
                break
            try:
                if galerkin:
                    s = sla.solve(sampled_phi.T @ sampled_jac, -proj_r)
                else:
                    s = sla.lstsq(sampled_jac, -sampled_r,
                                  lapack_driver="gelsy")[0]
            except np.linalg.LinAlgError as exc:
                raise StepFailureError(
                    f"collocation step {n}: singular reduced system",
                    step=n, iterations=k, norm=norm_r) from exc

            def merit(yt):
                ut = w0_closure + phi_closure @ yt
                rt, _ = model.masked_rows(loc, ut, u_prev_rows, None, mu, dt,
                                          source_rows=src_rows)
                return np.linalg.norm(sampled_phi.T @ rt if galerkin else rt)

            alpha = _line_search(config, merit, norm_r, y, s)
            y = y + alpha * s
            k += 1
        _finish_reduced(n, status, norm_r)
        iters[n] = k
        res_norms[n] = norm_r
        grad_norms[n] = norm_g
        statuses[n] = status
        coords[n + 1] = y

    return Trajectory(states=coords, times=time.times(), iterations=iters,
                      residual_norms=res_norms, gradient_norms=grad_norms,
                      statuses=statuses, kind="reduced", mu=mu, basis=Phi,
                      initial_condition=w0,
                      counters={"gauss_newton_iterations": int(iters.sum())})


def baseline_collocation_galerkin(mu, model, phi_w, sets: SampleSets,
                                  time: TimeDiscretization,
                                  config: SolverConfig = SolverConfig(),
                                  initial_condition=None) -> Trajectory:
    """Collocate the equations on the sample rows, close with a Galerkin
    projection onto the state basis (square reduced Newton system)."""
    return _collocation_solve(mu, model, phi_w, sets, time, config,
                              initial_condition, galerkin=True)


def baseline_collocation_least_squares(mu, model, phi_w, sets: SampleSets,
                                       time: TimeDiscretization,
                                       config: SolverConfig = SolverConfig(),
                                       initial_condition=None) -> Trajectory:
    """Collocate the equations on the sample rows and take the least-squares
    solution of the overdetermined system (Gauss-Newton)."""
    return _collocation_solve(mu, model, phi_w, sets, time, config,
                              initial_condition, galerkin=False)


def baseline_deim_like(mu, model, phi_w, phi_R_proc0, sets: SampleSets,
                       time: TimeDiscretization,
                       config: SolverConfig = SolverConfig(),
                       initial_condition=None) -> Trajectory:
    """Interpolatory hyper-reduction: one tier-I-snapshot basis for both the
    residual and the Jacobian action, with as many sample rows as basis
    columns, solved through the same overdetermined reduced iteration."""
    R = _as_matrix(phi_R_proc0)
    if not (R.shape[1] == sets.n_samples):
        raise ValueError(
            "interpolatory baseline requires n_R = n_J = n_i "
            f"(got n_R={R.shape[1]}, n_i={sets.n_samples})")
    w0 = (model.initial_condition() if initial_condition is None
          else np.asarray(initial_condition, dtype=float))
    operators = compute_online_operators(phi_w, R, R, sets, w0)
    return solve_gnat_online(mu, model, operators, time, config)


# -- timing helper ---------------------------------------------------------------

def timed(fn, *args, **kwargs):
    """Run fn and return (result, elapsed seconds)."""
    start = _time.perf_counter()
    result = fn(*args, **kwargs)
    return result, _time.perf_counter() - start
