"""Greedy sampling, sample-matrix action, and online operator assembly."""

import numpy as np
import pytest

from gnatrom.model import ParameterPoint
from gnatrom.pod import compute_pod
from gnatrom.sampling import (GreedyConfig, OutputSpec, RankDeficiencyError,
                              SamplingError, build_sample_matrix_action,
                              compute_online_operators, greedy_select,
                              output_index_set, pinv_via_pivoted_qr)

from conftest import toy_model
from greedy_oracle import greedy_oracle


def _closure(n):
    return toy_model(n).stencil_closure


# -- greedy selection -----------------------------------------------------------

def test_greedy_single_canonical_vector():
    e3 = np.zeros((8, 1))
    e3[3, 0] = 1.0
    sets = greedy_select(e3, e3, GreedyConfig(target_nodes=1),
                         closure=_closure(8))
    assert list(sets.nodes) == [3]
    assert list(sets.residual_indices) == [3]
    assert list(sets.state_indices) == [2, 3, 4]


def test_greedy_matches_bruteforce_oracle(rng):
    n, n_cols = 12, 4
    for trial in range(8):
        phi_r = compute_pod(rng.normal(size=(n, n_cols)),
                            num_modes=n_cols).basis
        phi_j = compute_pod(rng.normal(size=(n, n_cols)),
                            num_modes=n_cols).basis
        for seeds in ((), (5,)):
            for n_s in (2, 3, 4):
                n_c = min(n_cols, n_s)
                sets = greedy_select(
                    phi_r, phi_j,
                    GreedyConfig(target_nodes=n_s, working_columns=n_c,
                                 seed_nodes=seeds),
                    closure=_closure(n))
                expected_nodes, expected_order = greedy_oracle(
                    phi_r, phi_j, n_s, list(seeds), n_c)
                assert list(sets.nodes) == expected_nodes
                assert list(sets.selection_order) == expected_order


def test_greedy_deterministic_and_seeded(rng):
    phi_r = rng.normal(size=(20, 6))
    phi_j = rng.normal(size=(20, 5))
    cfg = GreedyConfig(target_nodes=8, working_columns=5, seed_nodes=(0, 13))
    s1 = greedy_select(phi_r, phi_j, cfg, closure=_closure(20))
    s2 = greedy_select(phi_r.copy(), phi_j.copy(), cfg, closure=_closure(20))
    assert np.array_equal(s1.nodes, s2.nodes)
    assert s1.selection_order == s2.selection_order
    assert {0, 13} <= set(s1.nodes)          # seeds always retained
    assert s1.selection_order[:2] == (0, 13)
    assert len(s1.nodes) == 8
    assert np.all(np.diff(s1.nodes) > 0)     # sorted, unique


def test_greedy_node_counts_exhaust_target(rng):
    # exercise both branches of the per-iteration node-count arithmetic,
    # including seeded runs where fewer nodes remain than working columns
    for n_s, n_c, seeds in ((9, 4, ()), (6, 6, (0, 1, 2)), (7, 7, ()),
                            (10, 3, ()), (8, 6, (0, 5, 9, 15))):
        phi_r = rng.normal(size=(16, 8))
        phi_j = rng.normal(size=(16, 8))
        sets, trace = greedy_select(
            phi_r, phi_j, GreedyConfig(target_nodes=n_s, working_columns=n_c,
                                       seed_nodes=seeds),
            closure=_closure(16), return_trace=True)
        assert len(sets.nodes) == n_s
        added = sum(rec["nodes_added"] for rec in trace.iterations)
        assert added == n_s - len(seeds)
        assert sum(rec["working_columns"] for rec in trace.iterations) == n_c


def test_greedy_unknowns_per_node(rng):
    n_nodes, n_u = 10, 2
    phi = rng.normal(size=(n_nodes * n_u, 6))

    def closure(rows):
        return np.unique(np.clip(np.concatenate(
            [rows - 1, rows, rows + 1]), 0, n_nodes * n_u - 1))

    sets = greedy_select(phi, phi,
                         GreedyConfig(target_nodes=4, working_columns=4,
                                      unknowns_per_node=n_u),
                         closure=closure)
    assert len(sets.nodes) == 4
    assert len(sets.residual_indices) == 8
    for node in sets.nodes:
        assert {2 * node, 2 * node + 1} <= set(sets.residual_indices)


def test_greedy_infeasible_configs(rng):
    phi = rng.normal(size=(10, 3))
    with pytest.raises(SamplingError):
        greedy_select(phi, phi, GreedyConfig(target_nodes=11),
                      closure=_closure(10))
    with pytest.raises(SamplingError):
        greedy_select(phi, phi,
                      GreedyConfig(target_nodes=4, working_columns=5),
                      closure=_closure(10))
    with pytest.raises(SamplingError):
        greedy_select(phi, phi,
                      GreedyConfig(target_nodes=2, seed_nodes=(0, 1, 2)),
                      closure=_closure(10))


# -- sample matrix action ----------------------------------------------------------

def test_sample_matrix_gather_scatter(rng):
    class Sets:
        residual_indices = np.array([2, 5, 7])
        num_unknowns = 9

    z = build_sample_matrix_action(Sets())
    v = rng.normal(size=9)
    assert np.array_equal(z.gather(v), v[[2, 5, 7]])
    u = rng.normal(size=3)
    out = z.scatter(u)
    assert np.array_equal(out[[2, 5, 7]], u)
    assert np.count_nonzero(out) <= 3
    # gather of scatter restores the sampled vector exactly (Z Z^T = I)
    assert np.array_equal(z.gather(z.scatter(u)), u)
    e2 = np.zeros(9)
    e2[2] = 1.0
    assert np.array_equal(z.gather(e2), [1.0, 0.0, 0.0])

    class All:
        residual_indices = np.arange(9)
        num_unknowns = 9

    assert np.array_equal(build_sample_matrix_action(All()).gather(v), v)


def test_output_index_set():
    assert list(output_index_set(OutputSpec(probes=(10, 20)), 30)) == [10, 20]
    assert list(output_index_set(OutputSpec(probes=(5, 5)), 8)) == [5]
    assert np.array_equal(output_index_set(OutputSpec(global_output=True), 6),
                          np.arange(6))
    with pytest.raises(SamplingError):
        output_index_set(OutputSpec(probes=(9,)), 8)


# -- pseudo-inverse ------------------------------------------------------------------

def test_pinv_left_inverse(rng):
    M = rng.normal(size=(12, 6))
    pinv = pinv_via_pivoted_qr(M)
    assert np.allclose(pinv @ M, np.eye(6), atol=1e-10)
    assert np.allclose(pinv, np.linalg.pinv(M), atol=1e-10)


def test_pinv_rank_deficiency_raises(rng):
    M = rng.normal(size=(8, 3))
    M[:, 2] = M[:, 0] + M[:, 1]
    with pytest.raises(RankDeficiencyError):
        pinv_via_pivoted_qr(M)


# -- online operators -----------------------------------------------------------------

def _make_sets(model, nodes, num_unknowns):
    nodes = np.asarray(nodes)
    from gnatrom.sampling import SampleSets
    return SampleSets(nodes=nodes, residual_indices=nodes,
                      state_indices=model.stencil_closure(nodes),
                      output_indices=np.arange(num_unknowns),
                      num_unknowns=num_unknowns, global_output=True)


def test_operators_square_nonsingular_case(rng):
    n = 10
    model = toy_model(n)
    phi = np.linalg.qr(rng.normal(size=(n, 4)))[0]
    sets = _make_sets(model, [1, 4, 6, 8], n)
    ops = compute_online_operators(phi, phi, phi, sets, np.ones(n))
    z_phi = phi[sets.residual_indices]
    inv = np.linalg.inv(z_phi)
    assert np.allclose(ops.A, inv, atol=1e-10)
    assert np.allclose(ops.B, inv, atol=1e-10)


def test_operators_full_sampling_dense_oracle(rng):
    n = 30
    model = toy_model(n)
    phi_w = np.linalg.qr(rng.normal(size=(n, 3)))[0]
    phi_r = np.linalg.qr(rng.normal(size=(n, 8)))[0]
    phi_j = np.linalg.qr(rng.normal(size=(n, 6)))[0]
    sets = _make_sets(model, np.arange(n), n)
    ops = compute_online_operators(phi_w, phi_r, phi_j, sets, np.ones(n))
    assert np.allclose(ops.A, np.linalg.pinv(phi_j), atol=1e-10)
    assert np.allclose(ops.B, phi_j.T @ phi_r @ np.linalg.pinv(phi_r),
                       atol=1e-10)
    assert np.array_equal(ops.masked_state_basis, phi_w)


def test_operators_left_inverse_property(rng):
    n = 30
    model = toy_model(n)
    phi_j = np.linalg.qr(rng.normal(size=(n, 6)))[0]
    phi_r = np.linalg.qr(rng.normal(size=(n, 9)))[0]
    phi_w = np.linalg.qr(rng.normal(size=(n, 5)))[0]
    nodes = np.sort(rng.choice(n, size=12, replace=False))
    sets = _make_sets(model, nodes, n)
    ops = compute_online_operators(phi_w, phi_r, phi_j, sets, np.ones(n))
    assert np.allclose(ops.A @ phi_j[nodes], np.eye(6), atol=1e-10)
    assert np.allclose(ops.sampled_residual_pinv @ phi_r[nodes], np.eye(9),
                       atol=1e-10)


def test_operators_invariant_violations(rng):
    n = 20
    model = toy_model(n)
    phi_w = np.linalg.qr(rng.normal(size=(n, 5)))[0]
    phi_r = np.linalg.qr(rng.normal(size=(n, 8)))[0]
    phi_j = np.linalg.qr(rng.normal(size=(n, 6)))[0]
    small = _make_sets(model, [2, 5, 9], n)     # n_i < n_R, n_J
    with pytest.raises(SamplingError):
        compute_online_operators(phi_w, phi_r, phi_j, small, np.ones(n))
    sets = _make_sets(model, np.arange(10), n)
    with pytest.raises(SamplingError):
        # n_J < n_w
        compute_online_operators(phi_r, phi_r, phi_j[:, :4], sets,
                                 np.ones(n))


def test_operators_rank_deficient_sampling(rng):
    n = 20
    model = toy_model(n)
    phi_j = np.zeros((n, 3))
    phi_j[:3, :] = np.eye(3)     # supported only on rows 0..2
    sets = _make_sets(model, [10, 12, 14, 16], n)
    with pytest.raises(RankDeficiencyError):
        compute_online_operators(phi_j, phi_j, phi_j, sets, np.ones(n))


# -- gappy reconstruction monotonicity ------------------------------------------------

def test_gappy_error_monotone_in_columns(rng):
    n, n_r, n_i = 40, 8, 14
    phi = np.linalg.qr(rng.normal(size=(n, n_r)))[0]
    rows = np.sort(rng.choice(n, size=n_i, replace=False))
    vectors = rng.normal(size=(25, n))
    for v in vectors:
        prev = None
        for k in range(1, n_r + 1):
            sampled = phi[rows, :k]
            coeff = np.linalg.lstsq(sampled, v[rows], rcond=None)[0]
            err = np.linalg.norm(v[rows] - sampled @ coeff)
            if prev is not None:
                assert err <= prev + 1e-12
            prev = err
