"""Closed-form asymptotics and convergence predicates for the detectors.

Everything here is pure computation on (K, M, sigma_x2, sigma_n2) parameter
sets plus optional channel matrices. Conventions:

* load factor beta = K/M; all asymptotic formulas require beta < 1.
* snr s = sigma_x2 / sigma_n2 (a linear ratio, not dB).
* "gamma" is the converged ratio of variable-message variance to sum-message
  variance; the mean iteration of the message-passing detector is governed by
  the matrix gamma * (H^T H - diag(H^T H)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .validation import check_positive_float, check_positive_int, require_uniform_variances

__all__ = [
    "AsymptoticParams",
    "ConvergenceReport",
    "mmse_asymptotic_mse",
    "gmpid_variance_fixed_point",
    "gmpid_asymptotic_mse",
    "gamma_value",
    "gamma_approx",
    "gamma_empirical",
    "load_guarantees_convergence",
    "predicted_radius",
    "sagmpid_asymptotic_radius",
    "mp_eigen_bounds",
    "iteration_matrix_extremes",
    "optimal_relaxation",
    "spectral_radius",
    "check_mean_convergence",
]

CONVERGENCE_LOAD_LIMIT = 3.0 - 2.0 * math.sqrt(2.0)  # (sqrt(2) - 1)^2


@dataclass(frozen=True)
class AsymptoticParams:
    """Problem parameters for the closed-form results."""

    num_users: int
    num_antennas: int
    sigma_x2: float = 1.0
    sigma_n2: float = 1.0

    def __post_init__(self):
        check_positive_int(self.num_users, "num_users")
        check_positive_int(self.num_antennas, "num_antennas")
        check_positive_float(self.sigma_x2, "sigma_x2")
        check_positive_float(self.sigma_n2, "sigma_n2")

    @property
    def beta(self) -> float:
        return self.num_users / self.num_antennas

    @property
    def snr(self) -> float:
        return self.sigma_x2 / self.sigma_n2

    @classmethod
    def from_snr(cls, num_users, num_antennas, snr, sigma_x2=1.0):
        snr = check_positive_float(snr, "snr")
        sigma_x2 = check_positive_float(sigma_x2, "sigma_x2")
        return cls(num_users, num_antennas, sigma_x2, sigma_x2 / snr)

    @classmethod
    def from_instance(cls, inst):
        sigma_x2 = require_uniform_variances(inst.source_vars, "asymptotic analysis")
        return cls(
            inst.dims.num_users,
            inst.dims.num_antennas,
            sigma_x2,
            check_positive_float(inst.noise_var, "noise_var"),
        )


def _require_subunit_load(params: AsymptoticParams, what: str) -> None:
    if params.beta >= 1.0:
        raise ValueError(
            f"{what} requires load K/M < 1, got K={params.num_users}, M={params.num_antennas}"
        )


def mmse_asymptotic_mse(params: AsymptoticParams) -> float:
    """Large-system per-user MSE of the exact MMSE detector: sigma_n2/(M-K)."""
    _require_subunit_load(params, "mmse_asymptotic_mse")
    return params.sigma_n2 / (params.num_antennas - params.num_users)


def gmpid_variance_fixed_point(params: AsymptoticParams) -> float:
    """Stable root of the variance recursion's fixed-point quadratic.

    The converged variable-message variance v solves

        (K/sigma_x2) v^2 + (sigma_n2/sigma_x2 + M - K) v - sigma_n2 = 0,

    and the returned root is the positive one, computed in the
    cancellation-free form 2*sigma_n2 / (b + sqrt(b^2 + 4*a*sigma_n2)).
    """
    _require_subunit_load(params, "gmpid_variance_fixed_point")
    a = params.num_users / params.sigma_x2
    b = params.sigma_n2 / params.sigma_x2 + params.num_antennas - params.num_users
    v = 2.0 * params.sigma_n2 / (b + math.sqrt(b * b + 4.0 * a * params.sigma_n2))
    residual = a * v * v + b * v - params.sigma_n2
    if abs(residual) > 1e-10 * params.sigma_n2:
        raise AssertionError(f"fixed-point residual {residual:.3e} exceeds tolerance")
    return v


def gmpid_asymptotic_mse(params: AsymptoticParams) -> float:
    """Large-system limit of the converged posterior variance: sigma_n2/(M-K+1/s)."""
    _require_subunit_load(params, "gmpid_asymptotic_mse")
    return params.sigma_n2 / (params.num_antennas - params.num_users + 1.0 / params.snr)


def gamma_value(params: AsymptoticParams) -> float:
    """Converged variance ratio gamma = 1 / (K + sigma_n2 / v).

    v is the variance fixed point, so equivalently
    gamma = 1 / (M + (K*v + sigma_n2)/sigma_x2).
    """
    _require_subunit_load(params, "gamma_value")
    v = gmpid_variance_fixed_point(params)
    return 1.0 / (params.num_users + params.sigma_n2 / v)


def gamma_approx(params: AsymptoticParams) -> float:
    """Large-system shortcut gamma ~ 1/(M + 1/s).

    Agrees with gamma_value to within K*v/sigma_x2 absolute in the inverse,
    i.e. closely at high snr or small load; convergence predicates default to
    this form.
    """
    _require_subunit_load(params, "gamma_approx")
    return 1.0 / (params.num_antennas + 1.0 / params.snr)


def gamma_empirical(posterior_vars, sum_vars) -> float:
    """gamma from a converged run: mean variable variance / mean sum variance."""
    pv = np.asarray(posterior_vars, float)
    sv = np.asarray(sum_vars, float)
    if pv.size == 0 or sv.size == 0 or not (np.isfinite(pv).all() and np.isfinite(sv).all()):
        raise ValueError("gamma_empirical needs finite converged variances")
    return float(pv.mean() / sv.mean())


def load_guarantees_convergence(beta: float) -> bool:
    """Whether the load alone guarantees mean convergence of the plain detector.

    True iff beta < (sqrt(2)-1)^2 = 3 - 2*sqrt(2). Sufficient, not necessary:
    heavy noise damps the iteration and can rescue loads above the limit.
    """
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    return beta < CONVERGENCE_LOAD_LIMIT


def predicted_radius(beta: float) -> float:
    """High-snr large-system spectral radius of the mean iteration: beta + 2*sqrt(beta)."""
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    return beta + 2.0 * math.sqrt(beta)


def sagmpid_asymptotic_radius(beta: float) -> float:
    """Minimized spectral radius of the relaxed iteration: 2*sqrt(beta)/(1+beta).

    Strictly below 1 for any beta in (0, 1), which is the relaxed detector's
    whole point.
    """
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    return 2.0 * math.sqrt(beta) / (1.0 + beta)


def mp_eigen_bounds(params: AsymptoticParams, gamma: float | None = None) -> tuple[float, float]:
    """Extreme-eigenvalue estimates of the relaxed iteration matrix A.

    Uses the limiting spectrum edges (1 -+ sqrt(beta))^2 of H^T H / M:
    lambda_{min,max} = 1 + gamma*M*((1 -+ sqrt(beta))^2 - 1).
    """
    _require_subunit_load(params, "mp_eigen_bounds")
    if gamma is None:
        gamma = gamma_approx(params)
    gM = gamma * params.num_antennas
    rb = math.sqrt(params.beta)
    lam_min = 1.0 + gM * ((1.0 - rb) ** 2 - 1.0)
    lam_max = 1.0 + gM * ((1.0 + rb) ** 2 - 1.0)
    return lam_min, lam_max


def iteration_matrix_extremes(
    H: np.ndarray, params: AsymptoticParams, gamma: float | None = None
) -> tuple[float, float]:
    """Exact extreme eigenvalues of A = gamma*(H^T H - diag) + I by dense solve."""
    if gamma is None:
        gamma = gamma_approx(params)
    G = H.T @ H
    B = gamma * (G - np.diag(np.diag(G)))
    eigs = np.linalg.eigvalsh(B + np.eye(B.shape[0]))
    return float(eigs[0]), float(eigs[-1])


def optimal_relaxation(params: AsymptoticParams, mode: str = "mp", H: np.ndarray | None = None) -> float:
    """Relaxation factor w for the relaxed detector.

    mode="exact": w = 2/(lambda_min + lambda_max) of A from an eigen-solve
    (H required). mode="mp": the closed-form limit w = 1/(1 + beta). Either
    way, when H is available the admissibility 0 < w < 2/lambda_max is
    verified.
    """
    if mode not in ("mp", "exact"):
        raise ValueError(f"mode must be 'mp' or 'exact', got {mode!r}")
    lam_max = None
    if H is not None:
        lam_min, lam_max = iteration_matrix_extremes(H, params)
    if mode == "exact":
        if lam_max is None:
            raise ValueError("mode='exact' needs the channel matrix H")
        w = 2.0 / (lam_min + lam_max)
    else:
        _require_subunit_load(params, "optimal_relaxation")
        w = 1.0 / (1.0 + params.beta)
    if lam_max is not None and not 0.0 < w < 2.0 / lam_max:
        raise ValueError(
            f"derived w={w:.6g} falls outside the admissible (0, {2.0 / lam_max:.6g}); "
            "the iteration matrix of this channel is not positive definite"
        )
    return w


def spectral_radius(matrix: np.ndarray) -> float:
    """Largest absolute eigenvalue of a square symmetric matrix (dense solve)."""
    a = np.asarray(matrix, float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError("matrix must be symmetric")
    if a.shape[0] == 0:
        return 0.0
    eigs = np.linalg.eigvalsh((a + a.T) / 2.0)
    return float(max(abs(eigs[0]), abs(eigs[-1])))


@dataclass
class ConvergenceReport:
    """Convergence diagnostics for one channel realization."""

    num_users: int
    num_antennas: int
    load_factor: float
    gamma: float
    spectral_radius: float
    predicted_radius: float
    strictly_dominant: bool
    irreducibly_dominant: bool
    radius_below_one: bool
    convergence_guaranteed: bool
    lambda_min: float
    lambda_max: float
    lambda_min_mp: float
    lambda_max_mp: float
    w_exact: float
    w_asymptotic: float
    sagmpid_radius_exact: float
    sagmpid_radius_asymptotic: float

    _FIELDS = (
        "num_users", "num_antennas", "load_factor", "gamma", "spectral_radius",
        "predicted_radius", "strictly_dominant", "irreducibly_dominant",
        "radius_below_one", "convergence_guaranteed", "lambda_min", "lambda_max",
        "lambda_min_mp", "lambda_max_mp", "w_exact", "w_asymptotic",
        "sagmpid_radius_exact", "sagmpid_radius_asymptotic",
    )

    @staticmethod
    def _fmt(value) -> str:
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, int):
            return str(value)
        return f"{value:.12g}"

    def to_text(self) -> str:
        return "\n".join(f"{name} = {self._fmt(getattr(self, name))}" for name in self._FIELDS) + "\n"

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(cls._FIELDS)

    def to_csv_row(self) -> str:
        return ",".join(self._fmt(getattr(self, name)) for name in self._FIELDS)


def _diagonal_dominance(B: np.ndarray) -> tuple[bool, bool]:
    """Dominance of I + B where B has a zero diagonal.

    Returns (strict, irreducible): strict means every row satisfies
    1 > sum_j |B_ij|; irreducible means the off-diagonal pattern is strongly
    connected, every row is weakly dominant and at least one strictly.
    """
    off = np.abs(B).sum(axis=1)
    strict = bool((off < 1.0).all())
    K = B.shape[0]
    if K == 1:
        return strict, True
    pattern = csr_matrix((np.abs(B) > 0.0).astype(np.int8))
    n_comp, _ = connected_components(pattern, directed=True, connection="strong")
    weakly = bool((off <= 1.0).all())
    irreducible = bool(n_comp == 1 and weakly and (off < 1.0).any())
    return strict, irreducible


def check_mean_convergence(
    H: np.ndarray, params: AsymptoticParams, gamma: float | None = None
) -> ConvergenceReport:
    """Evaluate the sufficient mean-convergence conditions on one channel.

    Either strict/irreducible diagonal dominance of I + gamma*(H^T H - diag)
    or a spectral radius of gamma*(H^T H - diag) below one guarantees that the
    plain detector's means converge. gamma defaults to the large-system
    shortcut gamma_approx(params).
    """
    H = np.asarray(H, float)
    if H.shape != (params.num_antennas, params.num_users):
        raise ValueError(
            f"H has shape {H.shape}, expected {(params.num_antennas, params.num_users)}"
        )
    if gamma is None:
        gamma = gamma_approx(params)
    gamma = check_positive_float(gamma, "gamma")

    G = H.T @ H
    B = gamma * (G - np.diag(np.diag(G)))
    B = (B + B.T) / 2.0
    radius = spectral_radius(B)
    strict, irreducible = _diagonal_dominance(B)
    radius_ok = bool(radius < 1.0)

    eigs = np.linalg.eigvalsh(B + np.eye(params.num_users))
    lam_min, lam_max = float(eigs[0]), float(eigs[-1])
    mp_lo, mp_hi = mp_eigen_bounds(params, gamma)
    beta = params.beta
    w_exact = 2.0 / (lam_min + lam_max)

    return ConvergenceReport(
        num_users=params.num_users,
        num_antennas=params.num_antennas,
        load_factor=beta,
        gamma=gamma,
        spectral_radius=radius,
        predicted_radius=predicted_radius(beta),
        strictly_dominant=strict,
        irreducibly_dominant=irreducible,
        radius_below_one=radius_ok,
        convergence_guaranteed=bool(strict or irreducible or radius_ok),
        lambda_min=lam_min,
        lambda_max=lam_max,
        lambda_min_mp=mp_lo,
        lambda_max_mp=mp_hi,
        w_exact=w_exact,
        w_asymptotic=1.0 / (1.0 + beta),
        sagmpid_radius_exact=(lam_max - lam_min) / (lam_max + lam_min),
        sagmpid_radius_asymptotic=sagmpid_asymptotic_radius(beta),
    )
