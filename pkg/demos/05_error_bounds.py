"""A-posteriori error bounds for a reduced backward-Euler trajectory.

On a small instance the three nested per-step bound terms and their
geometric accumulations can be compared directly with the true reduction
error.  The inverse-Lipschitz factor is over-estimated by dense sampling
around the realized trajectories, which makes the accumulated bound valid
for exactly these runs.
"""

import numpy as np

from gnatrom import (BurgersModel, Grid1D, ParameterPoint, SolverConfig,
                     TimeDiscretization, bound_terms, collect_state_snapshots,
                     compute_online_operators, compute_pod, global_bounds,
                     lipschitz_a_dense, solve_fom, solve_tier2_pg)
from gnatrom.sampling import SampleSets

model = BurgersModel(Grid1D(num_nodes=17, domain_length=4.0))
mu = ParameterPoint(a=2.0, b=0.3)
time = TimeDiscretization(dt=0.08, num_steps=5)
eps_newton = 1e-10
cfg = SolverConfig(newton_abs_tol=eps_newton, newton_rel_tol=1e-14,
                   max_newton_iters=60)

fom = solve_fom(mu, model, time, cfg)
phi_w = compute_pod(collect_state_snapshots(fom, "from-initial"),
                    num_modes=2).basis
reduced = solve_tier2_pg(mu, model, phi_w, model.initial_condition(), time,
                         cfg)
recon = reduced.reconstruct()

rng = np.random.default_rng(0)
phi_r = np.linalg.qr(rng.normal(size=(model.dim, 6)))[0]
idx = np.arange(model.dim)
sets = SampleSets(nodes=idx, residual_indices=idx,
                  state_indices=model.stencil_closure(idx),
                  output_indices=idx, num_unknowns=model.dim,
                  global_output=True)
ops = compute_online_operators(phi_w, phi_r, phi_r[:, :3], sets,
                               model.initial_condition())

anchors = np.vstack([fom.states, recon])
a_factor = lipschitz_a_dense(model, mu, time, anchors, num_box_samples=300)
print(f"inverse-Lipschitz over-estimate a = {a_factor:.4f}")

trace = bound_terms(reduced, model, ops, eps_newton, lipschitz_a=a_factor)
true_err = np.linalg.norm(fom.states - recon, axis=1)
print(f"{'step':>4} {'true error':>12} {'b-bound':>12} {'c-bound':>12} "
      f"{'d-bound':>12}")
for n in range(1, time.num_steps + 1):
    bound_b, bound_c, bound_d = global_bounds(trace, n)
    print(f"{n:>4} {true_err[n]:>12.4e} {bound_b:>12.4e} {bound_c:>12.4e} "
          f"{bound_d:>12.4e}")
print("per-step terms satisfy b <= c <= d:",
      bool(np.all(trace.b <= trace.c) and np.all(trace.c <= trace.d)))
