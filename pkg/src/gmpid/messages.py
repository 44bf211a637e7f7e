"""Edge messages and one-sweep updates for the bipartite detection graph.

The graph has K variable nodes (users) and M sum nodes (antennas), one edge
per (user, antenna) pair. Each direction carries a Gaussian message as a
(mean, variance) pair, stored as dense arrays:

    mean_v2s, var_v2s : (K, M)   variable k -> sum m
    mean_s2v, var_s2v : (M, K)   sum m -> variable k

Variances may be +inf at initialization ("uninformative"); the reciprocal of
+inf is taken to be exactly 0 and 0 * inf contributions count as 0. After one
full sweep no infinities remain.

Update structure: the sum-node update excludes the destination edge's own
contribution (cavity form), while the variable-node update sums over all
incident edges including the destination — deliberately, matching the
detector family this package implements. A consequence worth knowing:
variable-to-sum messages do not depend on the destination sum node, so the
whole variable side collapses to per-user values. The detectors module
exploits that; this module keeps full edge arrays so naive per-edge oracles
can check every term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemInstance
from .validation import as_variance_vector

__all__ = [
    "MessageState",
    "DegenerateInstanceError",
    "gmpid_sum_update",
    "gmpid_var_update",
    "state_from_user_values",
]


class DegenerateInstanceError(RuntimeError):
    """A message variance hit zero or below; the instance cannot be iterated."""


@dataclass
class MessageState:
    mean_v2s: np.ndarray  # (K, M)
    var_v2s: np.ndarray   # (K, M), entries in (0, +inf]
    mean_s2v: np.ndarray  # (M, K)
    var_s2v: np.ndarray   # (M, K), entries in (0, +inf]

    @property
    def shape(self) -> tuple[int, int]:
        return self.mean_v2s.shape

    @classmethod
    def initial_infinite(cls, num_users: int, num_antennas: int) -> "MessageState":
        """Fully uninformative start: variable messages have infinite variance."""
        K, M = num_users, num_antennas
        return cls(
            mean_v2s=np.zeros((K, M)),
            var_v2s=np.full((K, M), np.inf),
            mean_s2v=np.zeros((M, K)),
            var_s2v=np.full((M, K), np.inf),
        )

    @classmethod
    def initial_prior(cls, num_users: int, num_antennas: int, source_vars) -> "MessageState":
        """Prior start: variable messages carry (0, source variance).

        This equals the state reached after one sweep from the infinite init,
        so the two modes trace the same trajectory shifted by one iteration.
        """
        K, M = num_users, num_antennas
        source_vars = as_variance_vector(source_vars, "source_vars", K)
        return cls(
            mean_v2s=np.zeros((K, M)),
            var_v2s=np.broadcast_to(source_vars[:, None], (K, M)).copy(),
            mean_s2v=np.zeros((M, K)),
            var_s2v=np.full((M, K), np.inf),
        )


def state_from_user_values(
    estimates: np.ndarray, variances: np.ndarray, num_antennas: int
) -> MessageState:
    """Expand per-user variable-message values to a full edge state.

    Because variable updates are destination-independent, a detector's final
    per-user (mean, variance) pair determines the entire variable side.
    Sum-side arrays are left uninformative; run one sum update to fill them.
    """
    K = estimates.size
    return MessageState(
        mean_v2s=np.broadcast_to(np.asarray(estimates, float)[:, None], (K, num_antennas)).copy(),
        var_v2s=np.broadcast_to(np.asarray(variances, float)[:, None], (K, num_antennas)).copy(),
        mean_s2v=np.zeros((num_antennas, K)),
        var_s2v=np.full((num_antennas, K), np.inf),
    )


def gmpid_sum_update(state: MessageState, inst: SystemInstance) -> tuple[np.ndarray, np.ndarray]:
    """One flooding sweep of all sum-node messages.

    For edge (m, k):

        mean = y_m - sum_{i != k} h_mi * mean_v2s[i, m]
        var  = sum_{i != k} h_mi^2 * var_v2s[i, m] + noise_var

    Computed as the all-i sum minus the own term, O(KM) total.
    """
    H = inst.H
    H2 = H * H
    mv = state.mean_v2s.T  # (M, K)
    vv = state.var_v2s.T   # (M, K)

    total_mean = (H * mv).sum(axis=1)
    mean_s2v = (inst.y - total_mean)[:, None] + H * mv

    if np.isinf(vv).any():
        # Extended arithmetic: an infinite-variance contribution makes the
        # cavity variance infinite unless its channel weight is exactly zero.
        inf_contrib = np.isinf(vv) & (H != 0.0)
        finite_vv = np.where(np.isinf(vv), 0.0, vv)
        finite_total = (H2 * finite_vv).sum(axis=1)
        cavity = np.maximum(finite_total[:, None] - H2 * finite_vv, 0.0)
        others_infinite = (inf_contrib.sum(axis=1)[:, None] - inf_contrib) > 0
        var_s2v = np.where(others_infinite, np.inf, cavity + inst.noise_var)
    else:
        total_var = (H2 * vv).sum(axis=1)
        cavity = np.maximum(total_var[:, None] - H2 * vv, 0.0)
        var_s2v = cavity + inst.noise_var

    return mean_s2v, var_s2v


def gmpid_var_update(state: MessageState, inst: SystemInstance) -> tuple[np.ndarray, np.ndarray]:
    """One flooding sweep of all variable-node messages.

    For edge (k, m), with sums over ALL incident sum nodes i (the destination
    is not excluded):

        var  = ( sum_i h_ik^2 / var_s2v[i, k] + 1/source_var_k )^-1
        mean = var * sum_i h_ik * mean_s2v[i, k] / var_s2v[i, k]

    so the result is the same for every destination m.
    """
    H = inst.H
    vs = state.var_s2v  # (M, K)
    if (vs <= 0.0).any():
        raise DegenerateInstanceError("sum-node message variance <= 0; instance is degenerate")

    inv_vs = np.where(np.isinf(vs), 0.0, 1.0 / vs)
    weight = (H * H * inv_vs).sum(axis=0)                      # (K,)
    signal = (H * (state.mean_s2v * inv_vs)).sum(axis=0)       # (K,)

    var_k = 1.0 / (weight + 1.0 / inst.source_vars)
    mean_k = var_k * signal

    M = H.shape[0]
    K = H.shape[1]
    mean_v2s = np.broadcast_to(mean_k[:, None], (K, M)).copy()
    var_v2s = np.broadcast_to(var_k[:, None], (K, M)).copy()
    return mean_v2s, var_v2s
