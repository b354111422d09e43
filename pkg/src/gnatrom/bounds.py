"""A-posteriori error bounds for backward-Euler reduced solutions.

For the implicit map f(x) = x - dt F(x) with inverse-Lipschitz factor
``a`` (an upper bound on ||x - y|| / ||f(x) - f(y)||), the state error of
any approximate trajectory obeys a geometric accumulation of per-step
terms.  Three nested per-step terms are tracked:

    b_n = eps_newton + ||Rbar_n||                       (full residual)
    c_n = b_n split into gappy-reconstructed and left-over parts
    d_n = like c_n but with the left-over part bounded through the
          orthogonal projector and the triangular factor of the sampled
          residual basis

which satisfy b_n <= c_n <= d_n, and cumulative bounds
sum_k a^k {b,c,d}_{n-k}.  Everything here is an offline diagnostic; it may
touch all state entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sampling import OnlineOperators, RankDeficiencyError, pinv_via_pivoted_qr


@dataclass
class BoundTrace:
    """Per-step bound ingredients and their cumulative sums."""

    lipschitz_a: float
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    r_inv_norm: float
    cum_b: np.ndarray = field(init=False)
    cum_c: np.ndarray = field(init=False)
    cum_d: np.ndarray = field(init=False)
    projection_alt_estimate: np.ndarray | None = None

    def __post_init__(self):
        self.cum_b = _accumulate(self.lipschitz_a, self.b)
        self.cum_c = _accumulate(self.lipschitz_a, self.c)
        self.cum_d = _accumulate(self.lipschitz_a, self.d)

    @property
    def num_steps(self) -> int:
        return len(self.b)


def _accumulate(a: float, terms: np.ndarray) -> np.ndarray:
    """Cumulative bounds S_n = sum_{k=1..n} a^k terms_{n-k} via the
    recursion S_{n+1} = a (terms_n + S_n)."""
    out = np.empty(len(terms))
    running = 0.0
    for n, t in enumerate(terms):
        running = a * (t + running)
        out[n] = running
    return out


def global_bounds(trace: BoundTrace, n: int):
    """Cumulative (b, c, d) bounds on ||w_n - w~_n|| at time step n."""
    if not 1 <= n <= trace.num_steps:
        raise ValueError(f"trace covers steps 1..{trace.num_steps}, got {n}")
    return (trace.cum_b[n - 1], trace.cum_c[n - 1], trace.cum_d[n - 1])


def estimate_lipschitz_a(model, mu, probe_states, time) -> float:
    """Sampled estimate of sup ||x - y|| / ||f(x) - f(y)||, f = x - dt F(x).

    The maximum runs over all probe pairs; coincident probes are skipped.
    This is a lower estimate of the true supremum: it certifies the bound
    chain only for trajectories whose states appear among the probes.
    """
    probes = [np.asarray(p, dtype=float) for p in probe_states]
    if len(probes) < 2:
        raise ValueError("need at least two probe states")
    dt = time.dt
    mapped = [p - dt * model.semi_discrete_rhs(p, mu) for p in probes]
    best = -np.inf
    for i in range(len(probes)):
        for j in range(i + 1, len(probes)):
            dx = np.linalg.norm(probes[i] - probes[j])
            if dx == 0.0:
                continue
            df = np.linalg.norm(mapped[i] - mapped[j])
            if df == 0.0:
                return np.inf
            best = max(best, dx / df)
    if best < 0:
        raise ValueError("all probe states coincide")
    return float(best)


def lipschitz_a_dense(model, mu, time, anchor_states, num_box_samples: int = 200,
                      seed: int = 0, margin: float = 0.0) -> float:
    """Dense-sampling over-estimator of the inverse-Lipschitz factor.

    Augments the anchor states with segment midpoints and random samples
    from their bounding box, then takes the pairwise maximum.  Because the
    anchors themselves are probed pairwise, a bound assembled with this
    factor is valid for any trajectory pair whose states are all anchors.
    """
    anchors = np.asarray(anchor_states, dtype=float)
    probes = list(anchors)
    for i in range(len(anchors) - 1):
        probes.append(0.5 * (anchors[i] + anchors[i + 1]))
    lo = anchors.min(axis=0)
    hi = anchors.max(axis=0)
    rng = np.random.default_rng(seed)
    span = hi - lo
    for _ in range(num_box_samples):
        probes.append(lo + rng.random(anchors.shape[1]) * span)
    return (1.0 + margin) * estimate_lipschitz_a(model, mu, probes, time)


def gappy_bound_factor(operators: OnlineOperators) -> float:
    """Spectral norm of the inverse triangular factor of the sampled
    residual basis, i.e. 1 / sigma_min(Z Phi_R)."""
    sigma = np.linalg.svd(operators.sampled_residual_basis, compute_uv=False)
    if sigma.size == 0 or sigma[-1] <= 0.0:
        raise RankDeficiencyError("sampled residual basis is rank deficient")
    return float(1.0 / sigma[-1])


def bound_terms(rom_trajectory, model, operators: OnlineOperators,
                eps_newton: float, lipschitz_a: float,
                residual_singular_values: np.ndarray | None = None,
                n_R: int | None = None) -> BoundTrace:
    """Per-step bound ingredients along a reduced trajectory.

    Needs the full residual, so this reconstructs full states (diagnostic
    use only).  When the residual POD spectrum is supplied, the neglected-
    energy surrogate for the orthogonal projection error is logged
    alongside (it is an average-case estimate, not a bound).
    """
    states = rom_trajectory.reconstruct()
    mu = rom_trajectory.mu
    dt = float(rom_trajectory.times[1] - rom_trajectory.times[0])
    phi_R = operators.full_residual_basis
    rows = operators.sets.residual_indices
    pinv_R = operators.sampled_residual_pinv
    r_inv = gappy_bound_factor(operators)

    nt = len(states) - 1
    b = np.empty(nt)
    c = np.empty(nt)
    d = np.empty(nt)
    alt = np.empty(nt) if residual_singular_values is not None else None
    if alt is not None:
        if n_R is None:
            n_R = phi_R.shape[1]
        neglected = float(np.sqrt(np.sum(residual_singular_values[n_R:] ** 2)))

    for n in range(nt):
        rbar = model.residual(states[n + 1], states[n], mu, dt)
        norm_rbar = np.linalg.norm(rbar)
        coeff = pinv_R @ rbar[rows]
        norm_gappy = np.linalg.norm(coeff)          # = ||P-check Rbar||
        leftover = rbar - phi_R @ coeff             # (I - P-check) Rbar
        orth_leftover = rbar - phi_R @ (phi_R.T @ rbar)
        b[n] = eps_newton + norm_rbar
        c[n] = eps_newton + norm_gappy + np.linalg.norm(leftover)
        d[n] = eps_newton + norm_gappy + r_inv * np.linalg.norm(orth_leftover)
        if alt is not None:
            alt[n] = eps_newton + norm_gappy + r_inv * neglected

    return BoundTrace(lipschitz_a=lipschitz_a, b=b, c=c, d=d,
                      r_inv_norm=r_inv, projection_alt_estimate=alt)


def projection_error_estimate(phi_R_extended, operators: OnlineOperators,
                              residual_sample: np.ndarray) -> float:
    """Estimate of the gappy projection error from an enlarged basis.

    Compares the sampled-row reconstruction coefficients under the nominal
    basis (zero-padded) and under an extension of it with extra columns;
    the norm of the difference estimates the part of the sampled residual
    the nominal basis misses.
    """
    ext = np.asarray(getattr(phi_R_extended, "basis", phi_R_extended),
                     dtype=float)
    nominal = operators.full_residual_basis
    n_R = nominal.shape[1]
    if ext.shape[1] <= n_R:
        raise ValueError("extended basis must have more columns than nominal")
    if not np.allclose(ext[:, :n_R], nominal, rtol=0, atol=1e-12):
        raise ValueError("extended basis must contain the nominal basis "
                         "as its leading columns")
    rows = operators.sets.residual_indices
    d = np.asarray(residual_sample, dtype=float)
    if len(d) != len(rows):
        raise ValueError("residual sample length must match the sample rows")
    coeff_ext = pinv_via_pivoted_qr(ext[rows]) @ d
    coeff_nom = operators.sampled_residual_pinv @ d
    padded = np.zeros(ext.shape[1])
    padded[:n_R] = coeff_nom
    return float(np.linalg.norm(coeff_ext - padded))
