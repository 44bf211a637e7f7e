"""Detection algorithms: exact linear MMSE, message-passing iterative
detection (plain and relaxed), and Jacobi/Richardson solver baselines.

All iterative detectors share one result contract: per-iteration trace rows
(mse vs truth, relative mean change, mean variance), a verdict in
{converged, max-iters, diverged}, and final per-user estimates/variances.

The message-passing hot loop exploits the collapse described in
:mod:`gmpid.messages`: variable-to-sum messages are identical across
destinations, so the state reduces to two K-vectors. The loop still forms
the (M, K) cavity arrays each sweep, costing O(KM) time and memory per
iteration. Equivalence with the full edge-array sweeps is covered by tests.

A property of the cavity-free variable update worth knowing: the fixed point
these detectors reach is a weighted ridge estimate whose weights come from
the converged sum-message variances, not the exact MMSE solution. The two
coincide as the noise variance shrinks or the load K/M becomes small; at
moderate noise there is a small systematic offset even after full
convergence. Tests and the README quantify this.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import analysis
from .messages import (
    DegenerateInstanceError,
    MessageState,
    gmpid_sum_update,
    gmpid_var_update,
)
from .model import SystemInstance
from .validation import (
    as_matrix,
    as_variance_vector,
    as_vector,
    check_nonnegative_float,
    check_positive_float,
    check_positive_int,
)

__all__ = [
    "DetectorConfig",
    "DetectionResult",
    "DegenerateInstanceError",
    "mmse_detect",
    "gmpid_run",
    "sagmpid_run",
    "jacobi_run",
    "richardson_run",
    "run_detector",
    "DETECTOR_NAMES",
    "MMSEDetector",
    "GMPIDetector",
    "SAGMPIDetector",
    "JacobiDetector",
    "RichardsonDetector",
    "gmpid_sum_update",
    "gmpid_var_update",
]

INIT_MODES = ("prior", "infinite")
W_MODES = ("mp", "exact")


@dataclass
class DetectorConfig:
    """Knobs shared by every iterative detector.

    init_mode: "prior" starts variable messages at (0, source variance);
    "infinite" starts them fully uninformative, which reaches the prior state
    after one (counted) sweep. relaxation_w applies to the relaxed detectors;
    when None it is derived per w_mode: "mp" uses the closed-form 1/(1+K/M),
    "exact" solves for the iteration matrix's extreme eigenvalues.
    """

    max_iters: int = 1000
    tol_mean: float = 1e-10
    divergence_bound: float = 1e12
    init_mode: str = "prior"
    relaxation_w: float | None = None
    w_mode: str = "mp"

    def validate(self) -> "DetectorConfig":
        check_positive_int(self.max_iters, "max_iters")
        check_nonnegative_float(self.tol_mean, "tol_mean")
        # +inf is a legitimate bound (benchmarks time fixed sweeps with the
        # divergence stop disabled), so only NaN and <= 0 are rejected.
        if not (float(self.divergence_bound) > 0.0):
            raise ValueError(f"divergence_bound must be > 0, got {self.divergence_bound}")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}, got {self.init_mode!r}")
        if self.w_mode not in W_MODES:
            raise ValueError(f"w_mode must be one of {W_MODES}, got {self.w_mode!r}")
        if self.relaxation_w is not None and not (float(self.relaxation_w) > 0.0):
            raise ValueError(f"relaxation_w must be > 0, got {self.relaxation_w}")
        return self


@dataclass
class DetectionResult:
    """Output of one detector run.

    trace has one row per iteration run: (mse_vs_truth, mean_delta,
    mean_variance). mse_vs_truth is NaN when the instance carries no truth.
    """

    estimates: np.ndarray
    posterior_vars: np.ndarray
    iterations_run: int
    verdict: str
    trace: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))

    def trace_csv(self) -> str:
        """Render the trace as CSV text: iter,mse,mean_delta,mean_var."""
        buf = io.StringIO()
        buf.write("iter,mse,mean_delta,mean_var\n")
        for i, (mse, delta, var) in enumerate(self.trace, start=1):
            buf.write(f"{i},{mse:.15g},{delta:.15g},{var:.15g}\n")
        return buf.getvalue()

    def write_trace_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.trace_csv())


def _require_noise(inst: SystemInstance) -> None:
    if inst.noise_var <= 0.0:
        raise ValueError("detector requires noise_var > 0")


def mmse_detect(inst: SystemInstance) -> tuple[np.ndarray, np.ndarray]:
    """Exact linear MMSE estimate and the diagonal of its error covariance.

    Solves (H^T H + noise_var * diag(1/source_vars)) xhat = H^T y directly;
    the error covariance is noise_var times that system matrix's inverse.
    """
    _require_noise(inst)
    H = inst.H
    A = H.T @ H + inst.noise_var * np.diag(1.0 / inst.source_vars)
    xhat = np.linalg.solve(A, H.T @ inst.y)
    cov_diag = inst.noise_var * np.diag(np.linalg.inv(A))
    return xhat, cov_diag


def _trace_row(E, E_prev, Vv, x_true):
    delta = np.abs(E - E_prev).max() / max(1.0, np.abs(E).max())
    mse = float(np.mean((E - x_true) ** 2)) if x_true is not None else np.nan
    return mse, float(delta), float(Vv.mean())


def _message_passing_run(inst: SystemInstance, cfg: DetectorConfig, w: float) -> DetectionResult:
    """Shared engine for the plain (w=1) and relaxed (w!=1) detectors."""
    _require_noise(inst)
    H = inst.H
    M, K = H.shape
    H2 = H * H
    y = inst.y
    nv = inst.noise_var
    inv_source = 1.0 / inst.source_vars
    sqw = np.sqrt(w)
    x_true = inst.x

    trace = np.empty((cfg.max_iters, 3))
    verdict = "max-iters"
    iterations = 0
    skip_check_first = False

    if cfg.init_mode == "infinite":
        # First sweep from the uninformative init, through the full edge-array
        # ops (they carry the extended +inf arithmetic). Counted as iteration 1.
        # Mean change is trivially uninformative here, so the stop test is
        # skipped for this iteration.
        if cfg.max_iters < 1:  # pragma: no cover - config validation forbids
            raise ValueError("max_iters must be >= 1")
        state = MessageState.initial_infinite(K, M)
        state.mean_s2v, state.var_s2v = gmpid_sum_update(state, inst)
        state.mean_v2s, state.var_v2s = gmpid_var_update(state, inst)
        E = state.mean_v2s[:, 0].copy()
        Vv = state.var_v2s[:, 0].copy()
        # Relaxation memory term: previous means were zero, so no correction.
        if w != 1.0:
            E = w * E
        trace[0] = _trace_row(E, np.zeros(K), Vv, x_true)
        iterations = 1
        skip_check_first = True
    else:
        E = np.zeros(K)
        Vv = inst.source_vars.astype(float).copy()

    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(iterations + 1, cfg.max_iters + 1):
            E_prev = E
            HE = H @ E
            Sv = H2 @ Vv
            # Cavity arrays, (M, K): all-i sums minus the own edge's term.
            Es = (y - HE)[:, None] + H * E[None, :]
            Vs = np.maximum(Sv[:, None] - H2 * Vv[None, :], 0.0) + nv
            inv_Vs = 1.0 / Vs
            weight = np.einsum("mk,mk->k", H2, inv_Vs)
            signal = np.einsum("mk,mk->k", H, Es * inv_Vs)
            Vv = 1.0 / (weight + inv_source)
            if w == 1.0:
                E = Vv * signal
            else:
                # Mean path uses sqrt(w)-scaled channel and observations, plus
                # the (w-1)-weighted memory of the previous means. Variances
                # are never scaled.
                E = w * (Vv * signal) - (w - 1.0) * E_prev

            iterations = t
            trace[t - 1] = _trace_row(E, E_prev, Vv, x_true)

            if not np.isfinite(E).all() or np.abs(E).max() > cfg.divergence_bound:
                verdict = "diverged"
                break
            if trace[t - 1, 1] <= cfg.tol_mean and not (skip_check_first and t == 1):
                verdict = "converged"
                break

    # The cavity-free variable update makes the full-sum per-user output
    # identical to the final variable-message values, so they are the result.
    if not np.isfinite(E).all():
        E = np.where(np.isfinite(E), E, np.sign(np.nan_to_num(E, nan=0.0)) * cfg.divergence_bound)
    return DetectionResult(
        estimates=E,
        posterior_vars=Vv,
        iterations_run=iterations,
        verdict=verdict,
        trace=trace[:iterations].copy(),
    )


def gmpid_run(inst: SystemInstance, cfg: DetectorConfig | None = None) -> DetectionResult:
    """Run the plain message-passing detector."""
    cfg = (cfg or DetectorConfig()).validate()
    return _message_passing_run(inst, cfg, w=1.0)


def resolve_relaxation(inst: SystemInstance, cfg: DetectorConfig) -> float:
    """Determine the relaxation factor for a run, validating admissibility.

    With w_mode="exact" the admissible range 0 < w < 2/lambda_max of the
    iteration matrix is enforced by an eigen-solve; "mp" uses the closed-form
    limit 1/(1 + K/M) and skips the eigen check.
    """
    dims = inst.dims
    if cfg.relaxation_w is not None:
        w = check_positive_float(cfg.relaxation_w, "relaxation_w")
    elif cfg.w_mode == "exact":
        w = analysis.optimal_relaxation(
            analysis.AsymptoticParams.from_instance(inst), mode="exact", H=inst.H
        )
    else:
        if dims.load_factor >= 1.0:
            raise ValueError(
                "closed-form relaxation needs load K/M < 1; pass relaxation_w explicitly"
            )
        w = 1.0 / (1.0 + dims.load_factor)
    if cfg.w_mode == "exact":
        params = analysis.AsymptoticParams.from_instance(inst)
        _, lam_max = analysis.iteration_matrix_extremes(inst.H, params)
        if w >= 2.0 / lam_max:
            raise ValueError(
                f"relaxation_w={w:.6g} is inadmissible: must be < 2/lambda_max "
                f"= {2.0 / lam_max:.6g} for the mean iteration to contract"
            )
    return w


def sagmpid_run(inst: SystemInstance, cfg: DetectorConfig | None = None) -> DetectionResult:
    """Run the relaxed (scaled-and-added) message-passing detector.

    The final output applies the (w-1) memory correction exactly as the
    in-loop mean update does — in particular NOT scaled by the posterior
    variance. Scaling the correction by the posterior variance would leave a
    fixed point w times smaller than the exact detector's estimate.
    """
    cfg = (cfg or DetectorConfig()).validate()
    w = resolve_relaxation(inst, cfg)
    return _message_passing_run(inst, cfg, w=w)


def _linear_solver_run(
    inst: SystemInstance, cfg: DetectorConfig, step: str
) -> DetectionResult:
    """Shared driver for the Jacobi and Richardson baselines.

    Both iterate on the exact normal equations A x = b with
    A = noise_var^-1 H^T H + diag(1/source_vars), b = noise_var^-1 H^T y,
    whose solution is the exact MMSE estimate. Reported posterior variances
    are the crude diagonal proxy 1/diag(A) (documented as approximate; these
    baselines carry no variance semantics).
    """
    _require_noise(inst)
    H = inst.H
    K = H.shape[1]
    A = H.T @ H / inst.noise_var + np.diag(1.0 / inst.source_vars)
    b = H.T @ inst.y / inst.noise_var
    diag = np.diag(A).copy()
    if (diag == 0.0).any():
        raise DegenerateInstanceError("zero diagonal in the normal-equation matrix")

    if step == "richardson":
        if cfg.relaxation_w is not None:
            w_r = check_positive_float(cfg.relaxation_w, "relaxation_w")
        else:
            eigs = np.linalg.eigvalsh(A)
            w_r = 2.0 / (eigs[0] + eigs[-1])

    x = np.zeros(K)
    x_true = inst.x
    post = 1.0 / diag
    trace = np.empty((cfg.max_iters, 3))
    verdict = "max-iters"
    iterations = 0

    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, cfg.max_iters + 1):
            residual = b - A @ x
            if step == "jacobi":
                x_new = x + residual / diag
            else:
                x_new = x + w_r * residual
            iterations = t
            trace[t - 1] = _trace_row(x_new, x, post, x_true)
            x = x_new
            if not np.isfinite(x).all() or np.abs(x).max() > cfg.divergence_bound:
                verdict = "diverged"
                break
            if trace[t - 1, 1] <= cfg.tol_mean:
                verdict = "converged"
                break

    if not np.isfinite(x).all():
        x = np.nan_to_num(x, nan=0.0, posinf=cfg.divergence_bound, neginf=-cfg.divergence_bound)
    return DetectionResult(
        estimates=x,
        posterior_vars=post,
        iterations_run=iterations,
        verdict=verdict,
        trace=trace[:iterations].copy(),
    )


def jacobi_run(inst: SystemInstance, cfg: DetectorConfig | None = None) -> DetectionResult:
    """Jacobi splitting on the MMSE normal equations."""
    cfg = (cfg or DetectorConfig()).validate()
    return _linear_solver_run(inst, cfg, "jacobi")


def richardson_run(inst: SystemInstance, cfg: DetectorConfig | None = None) -> DetectionResult:
    """Richardson (fixed-step gradient) iteration on the MMSE normal equations."""
    cfg = (cfg or DetectorConfig()).validate()
    return _linear_solver_run(inst, cfg, "richardson")


def _mmse_as_result(inst: SystemInstance, cfg: DetectorConfig | None = None) -> DetectionResult:
    xhat, cov = mmse_detect(inst)
    return DetectionResult(
        estimates=xhat, posterior_vars=cov, iterations_run=0, verdict="converged"
    )


_RUNNERS = {
    "mmse": _mmse_as_result,
    "gmpid": gmpid_run,
    "sagmpid": sagmpid_run,
    "jacobi": jacobi_run,
    "richardson": richardson_run,
}
DETECTOR_NAMES = tuple(_RUNNERS)


def run_detector(name: str, inst: SystemInstance, cfg: DetectorConfig | None = None) -> DetectionResult:
    if name not in _RUNNERS:
        raise ValueError(f"unknown detector {name!r}; choices: {DETECTOR_NAMES}")
    return _RUNNERS[name](inst, cfg)


class _FittedDetectorMixin:
    """Estimator plumbing shared by all detector classes.

    fit(X, y) treats X as the (M, K) channel/design matrix and y as the
    received M-vector; the recovered per-user symbols land in coef_.
    """

    def _instance(self, X, y, x_true):
        X = as_matrix(X, "X")
        y = as_vector(y, "y", X.shape[0])
        source_vars = as_variance_vector(self.source_var, "source_var", X.shape[1])
        return SystemInstance(
            H=X, y=y, noise_var=self.noise_var, source_vars=source_vars,
            x=None if x_true is None else as_vector(x_true, "x_true", X.shape[1]),
        )

    def fit(self, X, y, x_true=None):
        inst = self._instance(X, y, x_true)
        result = self._run(inst)
        self.coef_ = result.estimates
        self.posterior_var_ = result.posterior_vars
        self.n_iter_ = result.iterations_run
        self.verdict_ = result.verdict
        self.result_ = result
        return self

    def predict(self, X):
        """Reconstruct noiseless observations X @ coef_ for a channel matrix X."""
        if not hasattr(self, "coef_"):
            raise RuntimeError("detector is not fitted; call fit(X, y) first")
        X = as_matrix(X, "X")
        return X @ self.coef_


class MMSEDetector(_FittedDetectorMixin, BaseEstimator):
    """Exact linear MMSE detector (direct solve)."""

    def __init__(self, noise_var=1.0, source_var=1.0):
        self.noise_var = noise_var
        self.source_var = source_var

    def _run(self, inst):
        return _mmse_as_result(inst)


class _IterativeDetector(_FittedDetectorMixin, BaseEstimator):
    def __init__(self, noise_var=1.0, source_var=1.0, max_iters=1000, tol=1e-10,
                 divergence_bound=1e12, init="prior"):
        self.noise_var = noise_var
        self.source_var = source_var
        self.max_iters = max_iters
        self.tol = tol
        self.divergence_bound = divergence_bound
        self.init = init

    def _config(self) -> DetectorConfig:
        return DetectorConfig(
            max_iters=self.max_iters, tol_mean=self.tol,
            divergence_bound=self.divergence_bound, init_mode=self.init,
        )


class GMPIDetector(_IterativeDetector):
    """Plain message-passing iterative detector."""

    def _run(self, inst):
        return gmpid_run(inst, self._config())


class SAGMPIDetector(_IterativeDetector):
    """Relaxed message-passing detector; converges for any load K/M < 1."""

    def __init__(self, noise_var=1.0, source_var=1.0, max_iters=1000, tol=1e-10,
                 divergence_bound=1e12, init="prior", w=None, w_mode="mp"):
        super().__init__(noise_var, source_var, max_iters, tol, divergence_bound, init)
        self.w = w
        self.w_mode = w_mode

    def _run(self, inst):
        cfg = self._config()
        cfg.relaxation_w = self.w
        cfg.w_mode = self.w_mode
        return sagmpid_run(inst, cfg)


class JacobiDetector(_IterativeDetector):
    """Jacobi iteration on the MMSE normal equations."""

    def _run(self, inst):
        return jacobi_run(inst, self._config())


class RichardsonDetector(_IterativeDetector):
    """Richardson iteration on the MMSE normal equations."""

    def __init__(self, noise_var=1.0, source_var=1.0, max_iters=1000, tol=1e-10,
                 divergence_bound=1e12, init="prior", w=None):
        super().__init__(noise_var, source_var, max_iters, tol, divergence_bound, init)
        self.w = w

    def _run(self, inst):
        cfg = self._config()
        cfg.relaxation_w = self.w
        return richardson_run(inst, cfg)
