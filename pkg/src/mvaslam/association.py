"""Scalable loopy-BP probabilistic data association.

One instance solves the association problem of a single anchor at a single
time step: feature-oriented association variables (one per candidate path,
including the anchor's own LOS row) against measurement-oriented ones.
Joint events are valid when the two descriptions agree (a feature claims a
measurement iff that measurement claims the feature); message passing on
the consistency factors yields approximate marginal messages without
enumerating joint events.

Message tables are row-normalized after every sweep; outputs are defined up
to per-variable scale, which all downstream uses are invariant to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite

_TINY = 1e-300


@dataclass
class AssociationInput:
    """Input evidence tables.

    ``beta``: (K, M+1), row per candidate path, column 0 for "no
    measurement", column m for measurement m.  ``xi``: (M, K+1), row per
    measurement, column 0 for "not from any tracked path" (new feature or
    clutter), column k for path k in ``beta``'s row order.
    """

    beta: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        if self.beta.ndim != 2 or self.xi.ndim != 2:
            raise ValueError("beta and xi must be 2-D tables")
        k, m1 = self.beta.shape
        m, k1 = self.xi.shape
        if m1 != m + 1 or k1 != k + 1:
            raise ValueError(f"inconsistent table shapes beta {self.beta.shape}, xi {self.xi.shape}")
        if not (np.all(np.isfinite(self.beta)) and np.all(np.isfinite(self.xi))):
            raise NonFinite("association inputs must be finite")
        if np.any(self.beta < 0) or np.any(self.xi < 0):
            raise ValueError("association inputs must be non-negative")
        if k and np.any(self.beta[:, 0] <= 0):
            raise ValueError("beta[:, 0] must be strictly positive")


@dataclass
class AssociationOutput:
    """Marginal messages: ``eta`` per path row, ``sigma_out`` per measurement."""

    eta: np.ndarray        # (K, M+1), rows sum to 1
    sigma_out: np.ndarray  # (M, K+1), rows sum to 1
    iterations_used: int


def run_association(inp: AssociationInput, max_iters: int = 20, tol: float = 1e-6) -> AssociationOutput:
    """Iterate the two message families to a fixed point (or ``max_iters``).

    Each message has only two distinct values ("claims this partner" vs.
    "anything else"), so a sweep reduces to ratio updates with a
    sum-minus-self trick: O(K*M) per sweep.
    """
    beta = inp.beta
    xi = inp.xi
    n_paths, m1 = beta.shape
    n_meas = m1 - 1

    if n_meas == 0 or n_paths == 0:
        eta = np.ones((n_paths, n_meas + 1)) / (n_meas + 1)
        sigma_out = np.ones((n_meas, n_paths + 1)) / (n_paths + 1)
        return AssociationOutput(eta=eta, sigma_out=sigma_out, iterations_used=0)

    beta_miss = beta[:, 0][:, None]        # (K, 1)
    beta_hit = beta[:, 1:]                 # (K, M)
    xi_new = xi[:, 0][None, :]             # (1, M)
    xi_hit = xi[:, 1:].T                   # (K, M): xi_hit[k, m] = xi[m, k+1]

    # z[k, m]: path-to-measurement ratio; v[k, m]: measurement-to-path ratio
    row_sum = beta_miss + beta_hit.sum(axis=1, keepdims=True)
    z = beta_hit / np.maximum(row_sum - beta_hit, _TINY)

    v = np.zeros_like(z)
    iterations = 0
    for iterations in range(1, max_iters + 1):
        t_m = xi_new + (xi_hit * z).sum(axis=0, keepdims=True)          # (1, M)
        v = xi_hit / np.maximum(t_m - xi_hit * z, _TINY)
        u_k = beta_miss + (beta_hit * v).sum(axis=1, keepdims=True)     # (K, 1)
        z_next = beta_hit / np.maximum(u_k - beta_hit * v, _TINY)
        delta = np.max(np.abs(z_next - z) / np.maximum(np.abs(z), 1e-12)) if z.size else 0.0
        z = z_next
        if delta < tol:
            break

    eta = np.concatenate([np.ones((n_paths, 1)), v], axis=1)
    sigma_out = np.concatenate([np.ones((n_meas, 1)), z.T], axis=1)
    if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(sigma_out))):
        raise NonFinite("association messages overflowed")
    eta /= eta.sum(axis=1, keepdims=True)
    sigma_out /= sigma_out.sum(axis=1, keepdims=True)
    return AssociationOutput(eta=eta, sigma_out=sigma_out, iterations_used=iterations)
