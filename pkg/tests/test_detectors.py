"""Detector tests: MMSE oracles, convergence/divergence regimes, baselines,
result contract, trace CSV, and the estimator wrappers."""

import numpy as np
import pytest
from sklearn.base import clone

from gmpid.detectors import (
    DETECTOR_NAMES,
    DetectorConfig,
    GMPIDetector,
    JacobiDetector,
    MMSEDetector,
    RichardsonDetector,
    SAGMPIDetector,
    gmpid_run,
    jacobi_run,
    mmse_detect,
    richardson_run,
    run_detector,
    sagmpid_run,
)
from gmpid.model import Dimensions, SystemInstance, make_instance


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def textbook_mmse(inst):
    """Independent oracle: posterior-mean form with the M-side inverse.

    xhat = S H^T (H S H^T + nv I)^-1 y,  cov = S - S H^T (H S H^T + nv I)^-1 H S
    """
    H, nv = inst.H, inst.noise_var
    S = np.diag(inst.source_vars)
    G = H @ S @ H.T + nv * np.eye(H.shape[0])
    Ginv = np.linalg.inv(G)
    xhat = S @ H.T @ Ginv @ inst.y
    cov = S - S @ H.T @ Ginv @ H @ S
    return xhat, np.diag(cov)


class TestMMSEDetect:
    def test_scalar_case(self):
        """One user, one antenna, unit channel and variances: the estimate is
        y/2 with posterior variance 1/2."""
        inst = SystemInstance(H=np.array([[1.0]]), y=np.array([2.0]),
                              noise_var=1.0, source_vars=1.0)
        xhat, cov = mmse_detect(inst)
        np.testing.assert_allclose(xhat, [1.0], rtol=1e-15)
        np.testing.assert_allclose(cov, [0.5], rtol=1e-15)

    def test_noiseless_limit_inverts_square_channel(self):
        inst = make_instance(Dimensions(8, 8), 1e-12, 1.0, 4)
        xhat, _ = mmse_detect(inst)
        direct = np.linalg.solve(inst.H, inst.y)
        assert rel_err(xhat, direct) <= 1e-6

    def test_matches_textbook_form(self):
        inst = make_instance(Dimensions(2, 4), 0.3, [1.0, 2.5], 9)
        xhat, cov = mmse_detect(inst)
        ref_xhat, ref_cov = textbook_mmse(inst)
        np.testing.assert_allclose(xhat, ref_xhat, rtol=1e-12)
        np.testing.assert_allclose(cov, ref_cov, rtol=1e-12)

    def test_requires_noise(self):
        inst = make_instance(Dimensions(2, 4), 0.0, 1.0, 0)
        with pytest.raises(ValueError):
            mmse_detect(inst)


class TestGMPIDRun:
    def test_converges_to_mmse_at_low_load(self):
        """Load 1/8 at high snr: the iteration reaches the direct solve."""
        inst = make_instance(Dimensions(50, 400), 1e-8, 1.0, 3)
        xm, _ = mmse_detect(inst)
        res = gmpid_run(inst, DetectorConfig(max_iters=200, tol_mean=1e-13))
        assert res.verdict == "converged"
        assert res.iterations_run <= 200
        assert rel_err(res.estimates, xm) <= 1e-6

    def test_fails_at_two_thirds_load(self):
        """Load 2/3 exceeds the convergence region; runs must not report
        converged (a majority is required, every seed does it in practice)."""
        bad = 0
        for seed in range(10):
            inst = make_instance(Dimensions(200, 300), 0.01, 1.0, seed)
            res = gmpid_run(inst, DetectorConfig(max_iters=1000))
            bad += res.verdict != "converged"
        assert bad >= 6

    def test_posterior_variance_matches_mmse_covariance(self):
        """Mean posterior variance within 5% of the mean MMSE covariance
        diagonal, even on instances whose means diverge."""
        ratios = []
        for seed in range(5):
            inst = make_instance(Dimensions(100, 300), 0.1, 1.0, seed)
            _, cov = mmse_detect(inst)
            res = gmpid_run(inst, DetectorConfig(max_iters=1000))
            ratios.append(res.posterior_vars.mean() / cov.mean())
        assert all(abs(r - 1.0) < 0.05 for r in ratios)

    def test_trace_contract(self):
        inst = make_instance(Dimensions(10, 40), 0.1, 1.0, 5)
        res = gmpid_run(inst, DetectorConfig(max_iters=30, tol_mean=0.0))
        assert res.trace.shape == (res.iterations_run, 3)
        assert res.iterations_run == 30
        assert np.isfinite(res.trace).all()
        assert (res.trace[:, 2] > 0).all()
        assert res.verdict == "max-iters"

    def test_trace_mse_nan_without_truth(self):
        src = make_instance(Dimensions(4, 12), 0.1, 1.0, 2)
        blind = SystemInstance(H=src.H, y=src.y, noise_var=0.1, source_vars=1.0)
        res = gmpid_run(blind, DetectorConfig(max_iters=5, tol_mean=0.0))
        assert np.isnan(res.trace[:, 0]).all()
        assert np.isfinite(res.trace[:, 1:]).all()

    def test_diverged_runs_report_finite_estimates(self):
        inst = make_instance(Dimensions(200, 300), 0.01, 1.0, 0)
        res = gmpid_run(inst, DetectorConfig(max_iters=500))
        assert res.verdict == "diverged"
        assert np.isfinite(res.estimates).all()
        assert np.isfinite(res.posterior_vars).all()
        assert res.trace.shape[0] == res.iterations_run

    def test_config_validation(self):
        inst = make_instance(Dimensions(2, 6), 0.1, 1.0, 0)
        with pytest.raises(ValueError):
            gmpid_run(inst, DetectorConfig(max_iters=0))
        with pytest.raises(ValueError):
            gmpid_run(inst, DetectorConfig(tol_mean=-1.0))
        with pytest.raises(ValueError):
            gmpid_run(inst, DetectorConfig(init_mode="warm"))
        with pytest.raises(ValueError):
            gmpid_run(inst, DetectorConfig(divergence_bound=0.0))


class TestSAGMPIDRun:
    def test_w_equal_one_reduces_to_plain(self):
        inst = make_instance(Dimensions(30, 100), 0.05, 1.0, 9)
        a = gmpid_run(inst, DetectorConfig(max_iters=50, tol_mean=0.0))
        b = sagmpid_run(inst, DetectorConfig(max_iters=50, tol_mean=0.0, relaxation_w=1.0))
        assert np.abs(a.trace - b.trace).max() <= 1e-12
        np.testing.assert_allclose(b.estimates, a.estimates, rtol=1e-12)
        np.testing.assert_allclose(b.posterior_vars, a.posterior_vars, rtol=1e-12)

    def test_converges_where_plain_fails(self):
        """Load 2/3 with the closed-form relaxation 0.6: reaches the direct
        MMSE solve while the unrelaxed iteration diverges."""
        inst = make_instance(Dimensions(200, 300), 1e-9, 1.0, 5)
        xm, _ = mmse_detect(inst)
        plain = gmpid_run(inst, DetectorConfig(max_iters=800))
        assert plain.verdict == "diverged"
        res = sagmpid_run(inst, DetectorConfig(max_iters=800, tol_mean=0.0, relaxation_w=0.6))
        assert rel_err(res.estimates, xm) <= 1e-6

    def test_default_w_comes_from_load(self):
        inst = make_instance(Dimensions(100, 300), 0.01, 1.0, 7)
        auto = sagmpid_run(inst, DetectorConfig(max_iters=60, tol_mean=0.0))
        manual = sagmpid_run(inst, DetectorConfig(max_iters=60, tol_mean=0.0,
                                                  relaxation_w=0.75))
        np.testing.assert_array_equal(auto.estimates, manual.estimates)

    def test_exact_eigen_w_mode(self):
        inst = make_instance(Dimensions(50, 200), 0.1, 1.0, 3)
        xm, _ = mmse_detect(inst)
        res = sagmpid_run(inst, DetectorConfig(max_iters=400, w_mode="exact"))
        assert res.verdict == "converged"
        assert rel_err(res.estimates, xm) <= 1e-3

    def test_inadmissible_w_rejected(self):
        inst = make_instance(Dimensions(50, 200), 0.1, 1.0, 3)
        with pytest.raises(ValueError, match="inadmissible"):
            sagmpid_run(inst, DetectorConfig(max_iters=10, relaxation_w=5.0,
                                             w_mode="exact"))
        with pytest.raises(ValueError):
            sagmpid_run(inst, DetectorConfig(max_iters=10, relaxation_w=-0.5))

    def test_closed_form_w_needs_subunit_load(self):
        inst = make_instance(Dimensions(8, 8), 0.1, 1.0, 0)
        with pytest.raises(ValueError, match="load"):
            sagmpid_run(inst, DetectorConfig(max_iters=10))

    def test_reaches_target_faster_than_plain(self):
        """At load 1/3 the relaxed iteration hits 1e-4 distance to the direct
        solve in a few dozen sweeps; the plain iteration never does."""
        from dataclasses import replace

        def iters_to_target(runner, inst, xm, w):
            cfg = DetectorConfig(max_iters=10, tol_mean=0.0, relaxation_w=w)
            for budget in (10, 20, 40, 80, 160):
                res = runner(inst, replace(cfg, max_iters=budget))
                if float(np.mean((res.estimates - xm) ** 2)) <= 1e-4:
                    return budget
            return np.inf

        wins = 0
        for seed in range(5):
            inst = make_instance(Dimensions(100, 300), 0.01, 1.0, seed)
            xm, _ = mmse_detect(inst)
            n_sa = iters_to_target(sagmpid_run, inst, xm, None)
            n_plain = iters_to_target(gmpid_run, inst, xm, 1.0)
            wins += n_sa < n_plain
        assert wins >= 4


class TestLinearBaselines:
    def test_jacobi_identity_system_converges_in_one_step(self):
        """Constructed so the normal-equation matrix is the identity: the
        first sweep lands exactly on the solution."""
        nv = 2.0
        c = 0.5 * nv  # column Gram = c I, so A = c/nv I + 1/sx2 I = I
        H = np.zeros((4, 2))
        H[0, 0] = H[1, 1] = np.sqrt(c)
        inst = SystemInstance(H=H, y=np.array([1.0, 2.0, 0.0, 0.0]),
                              noise_var=nv, source_vars=2.0)
        b = H.T @ inst.y / nv
        res = jacobi_run(inst, DetectorConfig(max_iters=5, tol_mean=1e-15))
        np.testing.assert_allclose(res.estimates, b, rtol=1e-15)
        assert res.verdict == "converged"
        assert res.iterations_run <= 2

    def test_jacobi_converges_at_tiny_load(self):
        inst = make_instance(Dimensions(10, 200), 1e-6, 1.0, 1)
        xm, _ = mmse_detect(inst)
        res = jacobi_run(inst, DetectorConfig(max_iters=200, tol_mean=1e-14))
        assert res.verdict == "converged"
        assert rel_err(res.estimates, xm) <= 1e-8

    def test_jacobi_diverges_at_one_third_load(self):
        div = 0
        for seed in range(10):
            inst = make_instance(Dimensions(100, 300), 0.01, 1.0, seed)
            res = jacobi_run(inst, DetectorConfig(max_iters=500))
            div += res.verdict == "diverged"
        assert div >= 6

    def test_richardson_converges_at_two_thirds_load(self):
        inst = make_instance(Dimensions(200, 300), 0.01, 1.0, 2)
        xm, _ = mmse_detect(inst)
        res = richardson_run(inst, DetectorConfig(max_iters=2000, tol_mean=1e-13))
        assert res.verdict == "converged"
        assert rel_err(res.estimates, xm) <= 1e-6

    def test_richardson_iteration_matrix_contracts(self):
        """With the eigen-derived step, rho(I - w A) < 1 on any instance."""
        for seed in range(3):
            inst = make_instance(Dimensions(40, 60), 0.5, 1.0, seed)
            A = inst.H.T @ inst.H / inst.noise_var + np.diag(1.0 / inst.source_vars)
            eigs = np.linalg.eigvalsh(A)
            w = 2.0 / (eigs[0] + eigs[-1])
            contraction = np.abs(np.linalg.eigvalsh(np.eye(40) - w * A)).max()
            assert contraction < 1.0

    def test_baseline_posterior_vars_are_diagonal_proxy(self):
        inst = make_instance(Dimensions(6, 20), 0.2, 1.0, 8)
        A = inst.H.T @ inst.H / inst.noise_var + np.diag(1.0 / inst.source_vars)
        res = jacobi_run(inst, DetectorConfig(max_iters=50))
        np.testing.assert_allclose(res.posterior_vars, 1.0 / np.diag(A), rtol=1e-12)


class TestRunDetectorRegistry:
    def test_known_names(self):
        assert set(DETECTOR_NAMES) == {"mmse", "gmpid", "sagmpid", "jacobi", "richardson"}

    def test_unknown_name_rejected(self):
        inst = make_instance(Dimensions(2, 4), 0.1, 1.0, 0)
        with pytest.raises(ValueError, match="unknown detector"):
            run_detector("zf", inst)

    def test_mmse_result_shape(self):
        inst = make_instance(Dimensions(3, 9), 0.1, 1.0, 0)
        res = run_detector("mmse", inst)
        assert res.verdict == "converged"
        assert res.iterations_run == 0
        assert res.trace.shape == (0, 3)

    def test_all_detectors_share_result_contract(self):
        inst = make_instance(Dimensions(8, 40), 0.05, 1.0, 31)
        for name in DETECTOR_NAMES:
            res = run_detector(name, inst, DetectorConfig(max_iters=200))
            assert res.verdict in ("converged", "max-iters", "diverged")
            assert res.estimates.shape == (8,)
            assert res.posterior_vars.shape == (8,)
            assert (res.posterior_vars > 0).all()
            assert np.isfinite(res.posterior_vars).all()
            assert res.trace.shape[0] == res.iterations_run


class TestTraceCSV:
    def test_header_and_row_count(self):
        inst = make_instance(Dimensions(5, 20), 0.1, 1.0, 6)
        res = gmpid_run(inst, DetectorConfig(max_iters=12, tol_mean=0.0))
        lines = res.trace_csv().strip().split("\n")
        assert lines[0] == "iter,mse,mean_delta,mean_var"
        assert len(lines) == 1 + res.iterations_run
        assert lines[1].split(",")[0] == "1"

    def test_values_round_trip_with_high_precision(self):
        inst = make_instance(Dimensions(5, 20), 0.1, 1.0, 6)
        res = gmpid_run(inst, DetectorConfig(max_iters=8, tol_mean=0.0))
        lines = res.trace_csv().strip().split("\n")[1:]
        parsed = np.array([[float(tok) for tok in ln.split(",")[1:]] for ln in lines])
        np.testing.assert_allclose(parsed, res.trace, rtol=1e-12)

    def test_write_to_file(self, tmp_path):
        inst = make_instance(Dimensions(3, 12), 0.1, 1.0, 1)
        res = gmpid_run(inst, DetectorConfig(max_iters=4, tol_mean=0.0))
        path = tmp_path / "trace.csv"
        res.write_trace_csv(path)
        text = path.read_text(encoding="utf-8")
        assert text == res.trace_csv()
        assert "\r" not in text


class TestEstimatorWrappers:
    def make_data(self, K=20, M=80, nv=0.01, seed=0):
        inst = make_instance(Dimensions(K, M), nv, 1.0, seed)
        return inst

    def test_get_params_round_trip(self):
        est = SAGMPIDetector(noise_var=0.2, max_iters=50, w=0.7)
        params = est.get_params()
        assert params["noise_var"] == 0.2
        assert params["w"] == 0.7
        cloned = clone(est)
        assert cloned.get_params() == params

    def test_set_params(self):
        est = GMPIDetector().set_params(noise_var=0.5, tol=1e-8)
        assert est.noise_var == 0.5
        assert est.tol == 1e-8

    def test_mmse_estimator_matches_function(self):
        inst = self.make_data()
        xm, cov = mmse_detect(inst)
        est = MMSEDetector(noise_var=inst.noise_var).fit(inst.H, inst.y)
        np.testing.assert_allclose(est.coef_, xm, rtol=1e-12)
        np.testing.assert_allclose(est.posterior_var_, cov, rtol=1e-12)
        assert est.verdict_ == "converged"

    def test_fit_predict_shapes(self):
        inst = self.make_data()
        est = GMPIDetector(noise_var=inst.noise_var, max_iters=200).fit(inst.H, inst.y)
        assert est.coef_.shape == (20,)
        pred = est.predict(inst.H)
        assert pred.shape == (80,)
        np.testing.assert_allclose(pred, inst.H @ est.coef_, rtol=1e-15)

    def test_iterative_estimator_exposes_run_metadata(self):
        inst = self.make_data(K=20, M=200)
        est = GMPIDetector(noise_var=inst.noise_var, max_iters=300, tol=1e-12)
        est.fit(inst.H, inst.y, x_true=inst.x)
        assert est.verdict_ == "converged"
        assert est.n_iter_ == est.result_.iterations_run
        assert np.isfinite(est.result_.trace[:, 0]).all()  # truth-referenced mse

    def test_relaxed_estimator_uses_w(self):
        inst = self.make_data(K=60, M=90, nv=0.01, seed=4)
        run = sagmpid_run(inst, DetectorConfig(max_iters=150, tol_mean=1e-10,
                                               relaxation_w=0.6))
        est = SAGMPIDetector(noise_var=inst.noise_var, max_iters=150, tol=1e-10,
                             w=0.6).fit(inst.H, inst.y)
        np.testing.assert_array_equal(est.coef_, run.estimates)

    def test_unfitted_predict_raises(self):
        with pytest.raises(RuntimeError, match="not fitted"):
            JacobiDetector().predict(np.eye(3))

    def test_richardson_estimator_runs(self):
        inst = self.make_data(K=10, M=50, nv=0.1, seed=2)
        est = RichardsonDetector(noise_var=0.1, max_iters=500).fit(inst.H, inst.y)
        xm, _ = mmse_detect(inst)
        assert rel_err(est.coef_, xm) <= 1e-6
