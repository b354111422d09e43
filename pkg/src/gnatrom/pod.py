"""Truncated proper orthogonal decomposition of snapshot matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PodBasis:
    """Leading left singular vectors with the full singular spectrum.

    ``energy_fraction`` is the retained share of the squared singular
    values; ``clamped`` records that a requested fixed size exceeded the
    numerical rank and was reduced.
    """

    basis: np.ndarray
    singular_values: np.ndarray
    energy_fraction: float
    clamped: bool = False

    @property
    def n_modes(self) -> int:
        return self.basis.shape[1]

    @property
    def dim(self) -> int:
        return self.basis.shape[0]


def _as_matrix(snapshots) -> np.ndarray:
    return np.asarray(getattr(snapshots, "columns", snapshots), dtype=float)


def compute_pod(snapshots, energy: float | None = None,
                num_modes: int | None = None) -> PodBasis:
    """POD basis via thin SVD with an energy or fixed-size truncation.

    Exactly one of ``energy`` (fraction in (0, 1]) or ``num_modes`` must be
    given.  A fixed size larger than the numerical rank is clamped.  Each
    basis column is sign-fixed so its largest-magnitude entry is positive,
    making the output deterministic.
    """
    W = _as_matrix(snapshots)
    if W.ndim != 2 or W.size == 0:
        raise ValueError("snapshot matrix must be a nonempty 2-d array")
    if not np.any(W):
        raise ValueError("snapshot matrix is identically zero")
    if (energy is None) == (num_modes is None):
        raise ValueError("specify exactly one of energy= or num_modes=")

    U, sigma, _ = np.linalg.svd(W, full_matrices=False)
    total = float(np.sum(sigma**2))

    if energy is not None:
        if not 0.0 < energy <= 1.0:
            raise ValueError("energy fraction must lie in (0, 1]")
        running = np.cumsum(sigma**2) / total
        n_phi = int(np.searchsorted(running, energy) + 1)
        n_phi = min(n_phi, len(sigma))
        clamped = False
    else:
        if num_modes < 1:
            raise ValueError("num_modes must be at least 1")
        rank = int(np.sum(sigma > max(W.shape) * np.finfo(float).eps * sigma[0]))
        rank = max(rank, 1)
        n_phi = min(num_modes, len(sigma))
        clamped = n_phi > rank
        if clamped:
            n_phi = rank

    basis = U[:, :n_phi].copy()
    for j in range(n_phi):
        lead = np.argmax(np.abs(basis[:, j]))
        if basis[lead, j] < 0:
            basis[:, j] = -basis[:, j]

    retained = float(np.sum(sigma[:n_phi]**2)) / total
    return PodBasis(basis=basis, singular_values=sigma,
                    energy_fraction=retained, clamped=clamped)
