"""Jitted kernels for the hyper-reduced online iteration.

The masked time-step loop works on arrays sized by the sample-index sets
only (sampled residual rows, stencil-closure state rows, reduced
coordinates), so a step physically cannot read state outside the sample
mesh.  The scalar flux/derivative branches mirror the vectorized versions
in :mod:`gnatrom.model`.

Step status codes: 0 residual criterion, 1 gradient criterion, 2 stalled
(no further decrease available), 3 iteration budget exhausted, 4 diverged
(non-finite), 5 singular reduced least-squares matrix.
"""

import numpy as np
from numba import njit

STATUS_RESIDUAL = 0
STATUS_GRADIENT = 1
STATUS_STALLED = 2
STATUS_MAXITER = 3
STATUS_DIVERGED = 4
STATUS_SINGULAR = 5


@njit(cache=True)
def _sampled_residual(u_closure, u_prev_rows, pos_left, pos_center,
                      pos_right, left_bc, right_edge, src_rows, a, dt, dx,
                      out):
    n_rows = pos_center.shape[0]
    for q in range(n_rows):
        u_c = u_closure[pos_center[q]]
        u_lm = a if left_bc[q] else u_closure[pos_left[q]]
        u_rp = u_c if right_edge[q] else u_closure[pos_right[q]]
        # left interface flux
        f_l = 0.5 * u_lm * u_lm
        f_c = 0.5 * u_c * u_c
        if u_lm > u_c:
            flux_left = f_l if f_l >= f_c else f_c
        else:
            if u_lm >= 0.0:
                flux_left = f_l
            elif u_c <= 0.0:
                flux_left = f_c
            else:
                flux_left = 0.0
        # right interface flux
        f_r = 0.5 * u_rp * u_rp
        if u_c > u_rp:
            flux_right = f_c if f_c >= f_r else f_r
        else:
            if u_c >= 0.0:
                flux_right = f_c
            elif u_rp <= 0.0:
                flux_right = f_r
            else:
                flux_right = 0.0
        out[q] = u_c - u_prev_rows[q] - dt * (
            -(flux_right - flux_left) / dx + src_rows[q])


@njit(cache=True)
def _jacobian_coefficients(u_closure, pos_left, pos_center, pos_right,
                           left_bc, right_edge, a, dt, dx,
                           c_sub, c_diag, c_sup):
    r = dt / dx
    n_rows = pos_center.shape[0]
    for q in range(n_rows):
        u_c = u_closure[pos_center[q]]
        u_lm = a if left_bc[q] else u_closure[pos_left[q]]
        u_rp = u_c if right_edge[q] else u_closure[pos_right[q]]
        # d flux / d(u_left), d flux / d(u_right) at both interfaces
        f_l = 0.5 * u_lm * u_lm
        f_c = 0.5 * u_c * u_c
        if u_lm > u_c:
            if f_l >= f_c:
                dfl_dl = u_lm
                dfl_dr = 0.0
            else:
                dfl_dl = 0.0
                dfl_dr = u_c
        else:
            if u_lm >= 0.0:
                dfl_dl = u_lm
                dfl_dr = 0.0
            elif u_c <= 0.0:
                dfl_dl = 0.0
                dfl_dr = u_c
            else:
                dfl_dl = 0.0
                dfl_dr = 0.0
        f_r = 0.5 * u_rp * u_rp
        if u_c > u_rp:
            if f_c >= f_r:
                dfr_dl = u_c
                dfr_dr = 0.0
            else:
                dfr_dl = 0.0
                dfr_dr = u_rp
        else:
            if u_c >= 0.0:
                dfr_dl = u_c
                dfr_dr = 0.0
            elif u_rp <= 0.0:
                dfr_dl = 0.0
                dfr_dr = u_rp
            else:
                dfr_dl = 0.0
                dfr_dr = 0.0
        c_sub[q] = 0.0 if left_bc[q] else -r * dfl_dl
        c_diag[q] = 1.0 + r * (dfr_dl - dfl_dr) + (r * dfr_dr
                                                   if right_edge[q] else 0.0)
        c_sup[q] = 0.0 if right_edge[q] else r * dfr_dr


@njit(cache=True)
def _norm(v):
    acc = 0.0
    for i in range(v.shape[0]):
        acc += v[i] * v[i]
    return np.sqrt(acc)


@njit(cache=True)
def gnat_step(y, u_prev_rows, A, B, phi_closure, w0_closure,
              pos_left, pos_center, pos_right, left_bc, right_edge,
              src_rows, a, dt, dx,
              res_abs, res_rel, grad_abs, grad_rel,
              stall_ratio, stall_strikes, max_iters,
              backtracking, armijo_c, backtrack_ratio, max_halvings,
              iterates):
    """One hyper-reduced implicit time step.

    Updates ``y`` in place, records every accepted iterate in ``iterates``
    (row k holds the coordinates after k updates) and returns
    (updates, status, final residual-proxy norm, final gradient norm,
    sampled-residual evaluations).
    """
    n_rows = pos_center.shape[0]
    n_w = y.shape[0]
    D = np.empty(n_rows)
    c_sub = np.empty(n_rows)
    c_diag = np.empty(n_rows)
    c_sup = np.empty(n_rows)
    C = np.empty((n_rows, n_w))
    y_trial = np.empty(n_w)

    k = 0
    n_evals = 0
    bd0 = 0.0
    g0 = 0.0
    prev_nbd = 0.0
    strikes = 0
    status = STATUS_MAXITER
    nbd = 0.0
    ng = 0.0
    iterates[0, :] = y

    while True:
        u_closure = w0_closure + phi_closure @ y
        _sampled_residual(u_closure, u_prev_rows, pos_left, pos_center,
                          pos_right, left_bc, right_edge, src_rows,
                          a, dt, dx, D)
        n_evals += 1
        BD = B @ D
        nbd = _norm(BD)
        if not np.isfinite(nbd):
            status = STATUS_DIVERGED
            break
        if k == 0:
            bd0 = nbd
        if nbd <= max(res_abs, res_rel * bd0):
            status = STATUS_RESIDUAL
            break
        if k >= 1:
            if nbd > stall_ratio * prev_nbd:
                strikes += 1
                if strikes >= stall_strikes:
                    status = STATUS_STALLED
                    break
            else:
                strikes = 0
        prev_nbd = nbd
        if k >= max_iters:
            status = STATUS_MAXITER
            break

        _jacobian_coefficients(u_closure, pos_left, pos_center, pos_right,
                               left_bc, right_edge, a, dt, dx,
                               c_sub, c_diag, c_sup)
        for q in range(n_rows):
            pl = pos_left[q]
            pc = pos_center[q]
            pr = pos_right[q]
            sq = c_sub[q]
            dq = c_diag[q]
            uq = c_sup[q]
            for l in range(n_w):
                C[q, l] = (sq * phi_closure[pl, l] + dq * phi_closure[pc, l]
                           + uq * phi_closure[pr, l])
        AC = A @ C
        g = AC.T @ BD
        ng = _norm(g)
        if k == 0:
            g0 = ng
        if ng <= max(grad_abs, grad_rel * g0):
            status = STATUS_GRADIENT
            break

        Q, R = np.linalg.qr(AC)
        rmax = 0.0
        rmin = 1.0e300
        for i in range(n_w):
            d = abs(R[i, i])
            if d > rmax:
                rmax = d
            if d < rmin:
                rmin = d
        if rmax == 0.0 or rmin <= 1e-14 * rmax:
            status = STATUS_SINGULAR
            break
        s = np.linalg.solve(R, -(np.ascontiguousarray(Q.T) @ BD))

        alpha = 1.0
        if backtracking:
            target = (1.0 - armijo_c * alpha) * nbd
            for _ in range(max_halvings):
                for l in range(n_w):
                    y_trial[l] = y[l] + alpha * s[l]
                u_trial = w0_closure + phi_closure @ y_trial
                _sampled_residual(u_trial, u_prev_rows, pos_left, pos_center,
                                  pos_right, left_bc, right_edge, src_rows,
                                  a, dt, dx, D)
                n_evals += 1
                if _norm(B @ D) <= target:
                    break
                alpha *= backtrack_ratio
                target = (1.0 - armijo_c * alpha) * nbd

        for l in range(n_w):
            y[l] = y[l] + alpha * s[l]
        k += 1
        iterates[k, :] = y

    return k, status, nbd, ng, n_evals
