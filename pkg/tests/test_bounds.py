"""Error-bound diagnostics: Lipschitz estimators, bound chain, gappy factor."""

import numpy as np
import pytest

from gnatrom.bounds import (BoundTrace, bound_terms, estimate_lipschitz_a,
                            gappy_bound_factor, global_bounds,
                            lipschitz_a_dense, projection_error_estimate)
from gnatrom.model import ParameterPoint, TimeDiscretization
from gnatrom.sampling import (RankDeficiencyError, SampleSets,
                              compute_online_operators)
from gnatrom.snapshots import collect_state_snapshots
from gnatrom.solvers import SolverConfig, Trajectory, solve_fom, solve_tier2_pg
from gnatrom.pod import compute_pod

from conftest import toy_model
from test_model import steady_state


class _StubModel:
    """Minimal model stand-in with a prescribed right-hand side."""

    def __init__(self, rhs):
        self._rhs = rhs

    def semi_discrete_rhs(self, state, mu):
        return self._rhs(np.asarray(state))

    def residual(self, state_next, state_prev, mu, dt):
        return state_next - state_prev - dt * self._rhs(np.asarray(state_next))


# -- Lipschitz estimators ---------------------------------------------------------

def test_lipschitz_zero_rhs_gives_one(rng):
    model = _StubModel(lambda u: np.zeros_like(u))
    probes = rng.normal(size=(6, 4))
    time = TimeDiscretization(dt=0.2, num_steps=1)
    a = estimate_lipschitz_a(model, None, probes, time)
    assert a == pytest.approx(1.0, abs=1e-12)


def test_lipschitz_linear_rhs_closed_form(rng):
    lam = -3.0
    dt = 0.1
    model = _StubModel(lambda u: lam * u)
    probes = rng.normal(size=(5, 3))
    time = TimeDiscretization(dt=dt, num_steps=1)
    a = estimate_lipschitz_a(model, None, probes, time)
    assert a == pytest.approx(1.0 / abs(1.0 - dt * lam), rel=1e-12)


def test_lipschitz_monotone_in_probes(rng):
    model = toy_model(8)
    mu = ParameterPoint(1.5, 0.1)
    time = TimeDiscretization(dt=0.05, num_steps=1)
    probes = list(rng.uniform(0.5, 3.0, size=(3, 8)))
    prev = estimate_lipschitz_a(model, mu, probes, time)
    for _ in range(4):
        probes.append(rng.uniform(0.5, 3.0, size=8))
        cur = estimate_lipschitz_a(model, mu, probes, time)
        assert cur >= prev - 1e-15
        prev = cur


def test_lipschitz_validation(rng):
    model = _StubModel(lambda u: np.zeros_like(u))
    time = TimeDiscretization(dt=0.1, num_steps=1)
    with pytest.raises(ValueError):
        estimate_lipschitz_a(model, None, [np.ones(3)], time)
    with pytest.raises(ValueError):
        estimate_lipschitz_a(model, None, [np.ones(3), np.ones(3)], time)


def test_lipschitz_dense_includes_anchors(rng):
    model = toy_model(6)
    mu = ParameterPoint(1.2, 0.2)
    time = TimeDiscretization(dt=0.05, num_steps=1)
    anchors = rng.uniform(0.8, 2.0, size=(5, 6))
    dense = lipschitz_a_dense(model, mu, time, anchors, num_box_samples=50)
    plain = estimate_lipschitz_a(model, mu, anchors, time)
    assert dense >= plain - 1e-15


# -- gappy bound factor -------------------------------------------------------------

def _operators_for(model, phi_r, nodes, phi_w=None):
    nodes = np.asarray(sorted(nodes))
    sets = SampleSets(nodes=nodes, residual_indices=nodes,
                      state_indices=model.stencil_closure(nodes),
                      output_indices=np.arange(model.dim),
                      num_unknowns=model.dim, global_output=True)
    if phi_w is None:
        phi_w = phi_r[:, : min(2, phi_r.shape[1])]
    return compute_online_operators(phi_w, phi_r, phi_r, sets,
                                    model.initial_condition())


def test_gappy_factor_identity_sampling(rng):
    model = toy_model(8)
    phi = np.linalg.qr(rng.normal(size=(8, 3)))[0]
    ops = _operators_for(model, phi, np.arange(8))
    assert gappy_bound_factor(ops) == pytest.approx(1.0, rel=1e-12)


def test_gappy_factor_diagonal_case():
    class Ops:
        sampled_residual_basis = np.diag([2.0, 0.5])

    assert gappy_bound_factor(Ops()) == pytest.approx(2.0)

    class Bad:
        sampled_residual_basis = np.zeros((3, 2))

    with pytest.raises(RankDeficiencyError):
        gappy_bound_factor(Bad())


def test_gappy_projection_inequality_randomized(rng):
    """||(I - Pcheck) g|| <= ||R^-1|| ||(I - P) g|| for random draws."""
    n = 40
    model = toy_model(n)
    for _ in range(5):
        n_r = int(rng.integers(3, 8))
        phi = np.linalg.qr(rng.normal(size=(n, n_r)))[0]
        n_i = int(rng.integers(n_r, 2 * n_r + 4))
        nodes = np.sort(rng.choice(n, size=n_i, replace=False))
        ops = _operators_for(model, phi, nodes)
        factor = gappy_bound_factor(ops)
        for _ in range(200):
            g = rng.normal(size=n)
            gappy = phi @ (ops.sampled_residual_pinv @ g[nodes])
            left = np.linalg.norm(g - gappy)
            right = factor * np.linalg.norm(g - phi @ (phi.T @ g))
            assert left <= right * (1 + 1e-10) + 1e-12


# -- bound terms ----------------------------------------------------------------------

def _steady_reduced_trajectory(model, mu, nt):
    """A 'reduced' trajectory that reconstructs to the exact steady state,
    so every step residual vanishes identically."""
    w_star = steady_state(model, mu)
    coords = np.zeros((nt + 1, 1))
    basis = np.zeros((model.dim, 1))
    basis[0, 0] = 1.0
    return Trajectory(states=coords, times=np.arange(nt + 1) * 0.1,
                      iterations=np.zeros(nt, dtype=int),
                      residual_norms=np.zeros(nt),
                      gradient_norms=np.zeros(nt),
                      statuses=np.zeros(nt, dtype=int), kind="reduced",
                      mu=mu, basis=basis, initial_condition=w_star)


def test_bound_terms_exact_rom_gives_eps(rng):
    model = toy_model(10)
    mu = ParameterPoint(1.0, 0.2)
    traj = _steady_reduced_trajectory(model, mu, nt=4)
    phi = np.linalg.qr(rng.normal(size=(10, 3)))[0]
    ops = _operators_for(model, phi, np.arange(10))
    eps = 1e-8
    trace = bound_terms(traj, model, ops, eps, lipschitz_a=1.5)
    # steady construction leaves only roundoff-level residual on top of eps
    assert np.allclose(trace.b, eps, rtol=1e-6, atol=0)


def test_bound_terms_complete_sampling_collapses_c(rng):
    # square orthonormal residual basis + full sampling: the gappy
    # reconstruction is exact, so the left-over term of c vanishes
    model = toy_model(8)
    mu = ParameterPoint(1.4, 0.3)
    time = TimeDiscretization(dt=0.1, num_steps=4)
    fom = solve_fom(mu, model, time)
    phi_w = compute_pod(collect_state_snapshots(fom, "from-initial"),
                        num_modes=2).basis
    reduced = solve_tier2_pg(mu, model, phi_w, model.initial_condition(),
                             time)
    phi_r = np.linalg.qr(rng.normal(size=(8, 8)))[0]
    ops = _operators_for(model, phi_r, np.arange(8), phi_w=phi_w)
    trace = bound_terms(reduced, model, ops, 1e-8, lipschitz_a=1.0)
    assert np.allclose(trace.c, trace.b, rtol=1e-10, atol=1e-14)


def test_bound_terms_ordering_random_case(rng):
    model = toy_model(16)
    mu = ParameterPoint(1.8, 0.25)
    time = TimeDiscretization(dt=0.08, num_steps=5)
    fom = solve_fom(mu, model, time)
    phi_w = compute_pod(collect_state_snapshots(fom, "from-initial"),
                        num_modes=2).basis
    reduced = solve_tier2_pg(mu, model, phi_w, model.initial_condition(),
                             time)
    phi_r = np.linalg.qr(rng.normal(size=(16, 5)))[0]
    nodes = np.sort(rng.choice(16, size=9, replace=False))
    ops = _operators_for(model, phi_r, nodes, phi_w=phi_w)
    sigma = rng.uniform(0.1, 1.0, size=12)
    trace = bound_terms(reduced, model, ops, 1e-8, lipschitz_a=1.2,
                        residual_singular_values=np.sort(sigma)[::-1],
                        n_R=5)
    assert np.all(trace.b <= trace.c + 1e-12)
    assert np.all(trace.c <= trace.d + 1e-12)
    assert np.all(trace.cum_b <= trace.cum_c + 1e-12)
    assert np.all(trace.cum_c <= trace.cum_d + 1e-12)
    assert trace.projection_alt_estimate is not None


# -- global bounds ---------------------------------------------------------------------

def test_global_bounds_small_cases():
    trace = BoundTrace(lipschitz_a=2.0, b=np.array([1.0, 3.0]),
                       c=np.array([1.5, 3.5]), d=np.array([2.0, 4.0]),
                       r_inv_norm=1.0)
    b1, c1, d1 = global_bounds(trace, 1)
    assert (b1, c1, d1) == (2.0, 3.0, 4.0)           # a * first term
    b2, _, _ = global_bounds(trace, 2)
    assert b2 == pytest.approx(2.0 * 3.0 + 4.0 * 1.0)  # a b_1 + a^2 b_0
    with pytest.raises(ValueError):
        global_bounds(trace, 3)

    flat = BoundTrace(lipschitz_a=1.0, b=np.full(5, 0.7),
                      c=np.full(5, 0.7), d=np.full(5, 0.7), r_inv_norm=1.0)
    for n in range(1, 6):
        bb, cc, dd = global_bounds(flat, n)
        assert bb == pytest.approx(0.7 * n)
        assert cc == pytest.approx(0.7 * n)


# -- projection error estimate ------------------------------------------------------------

def test_projection_estimate_zero_for_spanned_residual(rng):
    model = toy_model(20)
    phi_ext = np.linalg.qr(rng.normal(size=(20, 8)))[0]
    phi = phi_ext[:, :5]
    nodes = np.sort(rng.choice(20, size=10, replace=False))
    ops = _operators_for(model, phi, nodes)
    g = phi @ rng.normal(size=5)
    est = projection_error_estimate(phi_ext, ops, g[nodes])
    assert est <= 1e-10


def test_projection_estimate_matches_dense_difference(rng):
    model = toy_model(20)
    phi_ext = np.linalg.qr(rng.normal(size=(20, 8)))[0]
    phi = phi_ext[:, :5]
    nodes = np.sort(rng.choice(20, size=12, replace=False))
    ops = _operators_for(model, phi, nodes)
    g = rng.normal(size=20)
    est = projection_error_estimate(phi_ext, ops, g[nodes])
    rec_ext = phi_ext @ (np.linalg.pinv(phi_ext[nodes]) @ g[nodes])
    rec_nom = phi @ (np.linalg.pinv(phi[nodes]) @ g[nodes])
    dense = np.linalg.norm(rec_ext - rec_nom)
    assert est == pytest.approx(dense, rel=1e-9)
    true_leftover = np.linalg.norm(
        g - phi @ (np.linalg.pinv(phi[nodes]) @ g[nodes]))
    # informational: the estimate approximates the true left-over error
    print(f"eq-18 estimate {est:.3e} vs true gappy error {true_leftover:.3e}")


def test_projection_estimate_validation(rng):
    model = toy_model(10)
    phi_ext = np.linalg.qr(rng.normal(size=(10, 4)))[0]
    phi = phi_ext[:, :2]
    nodes = np.arange(0, 10, 2)
    ops = _operators_for(model, phi, nodes)
    with pytest.raises(ValueError):
        projection_error_estimate(phi, ops, np.zeros(len(nodes)))
    with pytest.raises(ValueError):
        projection_error_estimate(np.roll(phi_ext, 1, axis=1), ops,
                                  np.zeros(len(nodes)))


# -- end-to-end toy bound validity ---------------------------------------------------------

def test_global_bound_dominates_true_error_toy():
    """Toy full pipeline: the cumulative b-bound with the realized-pair
    Lipschitz factor dominates the true reduction error at every step."""
    model = toy_model(16, length=4.0)
    mu = ParameterPoint(2.0, 0.3)
    time = TimeDiscretization(dt=0.08, num_steps=5)
    eps = 1e-10
    cfg = SolverConfig(newton_abs_tol=eps, newton_rel_tol=1e-14,
                       max_newton_iters=50)
    fom = solve_fom(mu, model, time, cfg)
    phi_w = compute_pod(collect_state_snapshots(fom, "from-initial"),
                        num_modes=2).basis
    reduced = solve_tier2_pg(mu, model, phi_w, model.initial_condition(),
                             time, cfg)
    recon = reduced.reconstruct()
    phi_r = np.linalg.qr(np.random.default_rng(0).normal(size=(16, 6)))[0]
    ops = _operators_for(model, phi_r, np.arange(16), phi_w=phi_w)
    anchors = np.vstack([fom.states, recon])
    a_cert = lipschitz_a_dense(model, mu, time, anchors, num_box_samples=100)
    trace = bound_terms(reduced, model, ops, eps, lipschitz_a=a_cert)
    true_err = np.linalg.norm(fom.states - recon, axis=1)
    for n in range(1, time.num_steps + 1):
        bound_b, bound_c, bound_d = global_bounds(trace, n)
        assert true_err[n] <= bound_b * (1 + 1e-10)
        assert bound_b <= bound_c <= bound_d
