import math

import numpy as np
import pytest
import scipy.special

from etvbf.distributions import SeededRng
from etvbf.filter import (
    FilterConfig,
    FilterState,
    check_convergence,
    etvbf_step,
    init_iteration,
    initial_state,
    predict,
    update_joint_no_meas,
    update_meas_cov,
    update_mixture,
    update_predicted_cov,
    update_state_meas,
)
from etvbf.model import build_cv_scenario, scenario_defaults, simulate_truth
from etvbf.numerics import spd_factor
from etvbf.trigger import TriggerConfig, TriggerOutcome
from helpers import dense_theta, random_spd


def make_config(
    n=2,
    m=2,
    q_scales=(1.0, 2.0),
    dof=10.0,
    r_scale=1.0,
    s0=5.0,
    rho=1.0,
    y_scale=1.0,
    tol=1e-8,
):
    m_size = len(q_scales)
    return FilterConfig(
        nominal_q=tuple(s * np.eye(n) for s in q_scales),
        dof_g=np.full(m_size, dof),
        r0=r_scale * np.eye(m),
        s0=s0,
        alpha0=np.ones(m_size),
        rho=rho,
        trigger=TriggerConfig(Y=y_scale * np.eye(m)),
        tol=tol,
    )


def scalar_config(**kwargs):
    return make_config(n=1, m=1, **kwargs)


class TestPredict:
    def test_covariance_bank(self):
        cfg = make_config(q_scales=(1.0, 2.0, 3.0))
        state = FilterState(
            x_hat=np.zeros(2), P=np.eye(2), s=4.0, S=4.0 * np.eye(2), alpha=np.full(3, 2.0)
        )
        pred = predict(state, np.eye(2), cfg)
        for j, p_j in enumerate(pred.P_j, start=1):
            assert np.allclose(p_j, (1 + j) * np.eye(2))
            assert np.allclose(pred.G_j[j - 1], cfg.dof_g[j - 1] * p_j)

    def test_rho_one_keeps_priors(self):
        cfg = make_config(rho=1.0)
        state = FilterState(
            x_hat=np.ones(2), P=np.eye(2), s=4.0, S=4.0 * np.eye(2), alpha=np.array([2.0, 2.0])
        )
        pred = predict(state, np.eye(2), cfg)
        assert pred.s_prior == 4.0
        assert np.allclose(pred.S_prior, state.S)
        assert np.allclose(pred.alpha_prior, state.alpha)

    def test_forgetting(self):
        cfg = make_config(rho=0.5)
        state = FilterState(
            x_hat=np.zeros(2), P=np.eye(2), s=4.0, S=4.0 * np.eye(2), alpha=np.array([2.0, 2.0])
        )
        pred = predict(state, np.eye(2), cfg)
        assert pred.s_prior == 2.0
        assert np.allclose(pred.alpha_prior, [1.0, 1.0])
        assert np.allclose(pred.S_prior, 2.0 * np.eye(2))


class TestInitIteration:
    def test_uniform_prior_with_equal_dofs(self):
        cfg = make_config(q_scales=(1.0,) * 5, dof=10.0)
        state = FilterState(
            x_hat=np.zeros(2), P=np.eye(2), s=5.0, S=5.0 * np.eye(2), alpha=np.ones(5)
        )
        pred = predict(state, np.eye(2), cfg)
        it = init_iteration(pred, cfg)
        assert it.g == pytest.approx(10.0)
        assert np.allclose(it.chi.probabilities, 0.2)
        assert np.allclose(it.x, pred.x_pred)

    def test_single_component(self):
        cfg = make_config(q_scales=(2.0,))
        state = FilterState(
            x_hat=np.zeros(2), P=np.eye(2), s=5.0, S=5.0 * np.eye(2), alpha=np.ones(1)
        )
        pred = predict(state, np.eye(2), cfg)
        it = init_iteration(pred, cfg)
        assert np.allclose(it.chi.probabilities, [1.0])
        assert np.allclose(it.p_tilde, pred.P_j[0])

    def test_equal_bank_convexity(self):
        cfg = make_config(q_scales=(3.0, 3.0, 3.0))
        state = FilterState(
            x_hat=np.zeros(2), P=np.eye(2), s=5.0, S=5.0 * np.eye(2),
            alpha=np.array([0.2, 1.0, 3.0]),
        )
        pred = predict(state, np.eye(2), cfg)
        it = init_iteration(pred, cfg)
        assert np.allclose(it.p_tilde, pred.P_j[0], atol=1e-12)

    def test_r_tilde_from_prior_ratio(self):
        cfg = make_config(rho=0.5)
        state = FilterState(
            x_hat=np.zeros(2), P=np.eye(2), s=4.0, S=8.0 * np.eye(2), alpha=np.ones(2)
        )
        pred = predict(state, np.eye(2), cfg)
        it = init_iteration(pred, cfg)
        assert np.allclose(it.r_tilde, 2.0 * np.eye(2))


def scalar_iteration(p_tilde=1.0, r_tilde=1.0):
    cfg = scalar_config(q_scales=(1.0,))
    state = FilterState(
        x_hat=np.zeros(1), P=np.eye(1), s=1.0, S=np.eye(1), alpha=np.ones(1)
    )
    pred = predict(state, np.eye(1), cfg)
    it = init_iteration(pred, cfg)
    it.p_tilde = np.array([[p_tilde]])
    it.r_tilde = np.array([[r_tilde]])
    return it


class TestJointUpdateNoMeasurement:
    def test_scalar_reference(self):
        it = scalar_iteration(p_tilde=1.0, r_tilde=1.0)
        update_joint_no_meas(it, np.zeros(1), np.eye(1), np.eye(1))
        assert it.P[0, 0] == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert it.Pzz[0, 0] == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert it.Pxz[0, 0] == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_vanishing_trigger_information(self):
        it = scalar_iteration(p_tilde=2.0, r_tilde=1.0)
        update_joint_no_meas(it, np.zeros(1), np.eye(1), 1e-12 * np.eye(1))
        assert it.P[0, 0] == pytest.approx(2.0, abs=1e-9)

    def test_blocks_match_dense_inverse(self):
        rng = np.random.default_rng(12)
        n, m = 4, 2
        cfg = make_config(n=n, m=m, q_scales=(1.0,))
        for _ in range(100):
            state = FilterState(
                x_hat=np.zeros(n), P=random_spd(rng, n), s=5.0,
                S=5.0 * random_spd(rng, m), alpha=np.ones(1),
            )
            pred = predict(state, np.eye(n), cfg)
            it = init_iteration(pred, cfg)
            it.p_tilde = random_spd(rng, n)
            it.r_tilde = random_spd(rng, m)
            h = rng.standard_normal((m, n))
            y = random_spd(rng, m, scale=0.5)
            update_joint_no_meas(it, np.zeros(n), h, y)
            theta = dense_theta(it.p_tilde, it.r_tilde, h, y)
            assert np.linalg.norm(it.P - theta[:n, :n]) < 1e-9
            assert np.linalg.norm(it.Pxz - theta[:n, n:]) < 1e-9
            assert np.linalg.norm(it.Pzz - theta[n:, n:]) < 1e-9

    def test_state_pinned_to_prediction(self):
        it = scalar_iteration()
        x_pred = np.array([3.7])
        update_joint_no_meas(it, x_pred, np.eye(1), np.eye(1))
        assert np.array_equal(it.x, x_pred)


class TestStateUpdateWithMeasurement:
    def test_scalar_gain_half(self):
        it = scalar_iteration(p_tilde=1.0, r_tilde=1.0)
        update_state_meas(it, np.zeros(1), np.array([1.0]), np.eye(1))
        assert it.x[0] == pytest.approx(0.5)
        assert it.P[0, 0] == pytest.approx(0.5)

    def test_uninformative_measurement(self):
        it = scalar_iteration(p_tilde=1.0, r_tilde=1e12)
        update_state_meas(it, np.zeros(1), np.array([5.0]), np.eye(1))
        assert abs(it.x[0]) < 1e-9

    def test_unobservable(self):
        it = scalar_iteration(p_tilde=2.0, r_tilde=1.0)
        update_state_meas(it, np.array([1.0]), np.array([5.0]), np.zeros((1, 1)))
        assert it.x[0] == pytest.approx(1.0)
        assert it.P[0, 0] == pytest.approx(2.0)


class TestPredictedCovarianceUpdate:
    def test_no_shift_when_state_at_prediction(self):
        cfg = make_config(q_scales=(1.0,) * 5, dof=10.0)
        state = FilterState(
            x_hat=np.zeros(2), P=np.eye(2), s=5.0, S=5.0 * np.eye(2), alpha=np.ones(5)
        )
        pred = predict(state, np.eye(2), cfg)
        it = init_iteration(pred, cfg)
        update_joint_no_meas(it, pred.x_pred, np.eye(2), np.eye(2))
        p_before = it.P.copy()
        update_predicted_cov(it, pred.x_pred, cfg, pred)
        assert it.g == pytest.approx(11.0)
        expected_g = sum(0.2 * g for g in pred.G_j) + p_before
        assert np.allclose(it.G, expected_g, atol=1e-12)

    def test_weighted_sum_identity(self):
        cfg = make_config(q_scales=(1.0, 4.0), dof=7.0)
        state = FilterState(
            x_hat=np.ones(2), P=2.0 * np.eye(2), s=5.0, S=5.0 * np.eye(2),
            alpha=np.array([1.0, 3.0]),
        )
        pred = predict(state, np.eye(2), cfg)
        it = init_iteration(pred, cfg)
        update_state_meas(it, pred.x_pred, np.array([2.0, 0.0]), np.eye(2))
        update_predicted_cov(it, pred.x_pred, cfg, pred)
        chi = it.chi.probabilities
        shift = it.x - pred.x_pred
        a_mat = it.P + np.outer(shift, shift)
        numerator = sum(
            c * g * p for c, g, p in zip(chi, cfg.dof_g, pred.P_j)
        ) + a_mat
        denominator = float(chi @ cfg.dof_g) + 1.0
        assert np.allclose(it.p_tilde, numerator / denominator, atol=1e-10)


class TestMeasurementCovarianceUpdate:
    def test_transmitted_zero_residual(self):
        it = scalar_iteration()
        cfg = scalar_config(q_scales=(1.0,))
        state = FilterState(
            x_hat=np.zeros(1), P=np.eye(1), s=5.0, S=5.0 * np.eye(1), alpha=np.ones(1)
        )
        pred = predict(state, np.eye(1), cfg)
        it.x = np.array([2.0])
        it.P = np.array([[0.5]])
        update_meas_cov(it, 1, np.array([2.0]), np.eye(1), pred)
        assert it.S[0, 0] == pytest.approx(pred.S_prior[0, 0] + 0.5)
        assert it.s == pytest.approx(pred.s_prior + 1.0)

    def test_silent_scalar_reference(self):
        cfg = scalar_config(q_scales=(1.0,))
        state = FilterState(
            x_hat=np.zeros(1), P=np.eye(1), s=5.0, S=5.0 * np.eye(1), alpha=np.ones(1)
        )
        pred = predict(state, np.eye(1), cfg)
        it = init_iteration(pred, cfg)
        it.p_tilde = np.eye(1)
        it.r_tilde = np.eye(1)
        update_joint_no_meas(it, np.zeros(1), np.eye(1), np.eye(1))
        update_meas_cov(it, 0, None, np.eye(1), pred)
        # B = 2/3 - 2/3 + 2/3
        assert it.S[0, 0] == pytest.approx(pred.S_prior[0, 0] + 2.0 / 3.0, abs=1e-10)

    def test_dof_increment_is_idempotent_across_sweeps(self):
        cfg = scalar_config(q_scales=(1.0,), s0=5.0)
        state = FilterState(
            x_hat=np.zeros(1), P=np.eye(1), s=5.0, S=5.0 * np.eye(1), alpha=np.ones(1)
        )
        pred = predict(state, np.eye(1), cfg)
        it = init_iteration(pred, cfg)
        for _ in range(4):
            update_joint_no_meas(it, np.zeros(1), np.eye(1), np.eye(1))
            update_meas_cov(it, 0, None, np.eye(1), pred)
            assert it.s == pytest.approx(pred.s_prior + 1.0)


class TestMixtureUpdate:
    def test_single_component(self):
        cfg = make_config(q_scales=(2.0,))
        state = FilterState(
            x_hat=np.zeros(2), P=np.eye(2), s=5.0, S=5.0 * np.eye(2), alpha=np.ones(1)
        )
        pred = predict(state, np.eye(2), cfg)
        it = init_iteration(pred, cfg)
        update_joint_no_meas(it, pred.x_pred, np.eye(2), np.eye(2))
        update_predicted_cov(it, pred.x_pred, cfg, pred)
        update_mixture(it, pred, cfg)
        assert np.allclose(it.chi.probabilities, [1.0])
        assert np.allclose(it.alpha, pred.alpha_prior + 1.0)

    def test_identical_components_stay_uniform(self):
        cfg = make_config(q_scales=(2.0, 2.0, 2.0))
        state = FilterState(
            x_hat=np.zeros(2), P=np.eye(2), s=5.0, S=5.0 * np.eye(2), alpha=np.ones(3)
        )
        pred = predict(state, np.eye(2), cfg)
        it = init_iteration(pred, cfg)
        update_joint_no_meas(it, pred.x_pred, np.eye(2), np.eye(2))
        update_predicted_cov(it, pred.x_pred, cfg, pred)
        update_mixture(it, pred, cfg)
        assert np.allclose(it.chi.probabilities, 1.0 / 3.0, atol=1e-12)

    def test_two_component_scalar_against_direct_formula(self):
        cfg = scalar_config(q_scales=(0.5, 4.0), dof=6.0)
        state = FilterState(
            x_hat=np.zeros(1), P=np.eye(1), s=5.0, S=5.0 * np.eye(1),
            alpha=np.array([1.0, 2.0]),
        )
        pred = predict(state, np.eye(1), cfg)
        it = init_iteration(pred, cfg)
        update_state_meas(it, pred.x_pred, np.array([1.5]), np.eye(1))
        update_predicted_cov(it, pred.x_pred, cfg, pred)
        alpha_before = it.alpha.copy()
        update_mixture(it, pred, cfg)

        # Direct evaluation with scipy special functions.
        n = 1
        e_p_inv = it.g / it.G[0, 0]
        e_logdet = (
            math.log(it.G[0, 0])
            - n * math.log(2.0)
            - float(scipy.special.digamma(0.5 * it.g))
        )
        log_w = []
        for g_j, big_g in zip(cfg.dof_g, pred.G_j):
            log_w.append(
                0.5 * g_j * math.log(big_g[0, 0])
                - 0.5 * big_g[0, 0] * e_p_inv
                - 0.5 * (g_j + n + 1) * e_logdet
                - 0.5 * n * g_j * math.log(2.0)
                - float(scipy.special.gammaln(0.5 * g_j))
            )
        log_w = np.array(log_w) + (
            scipy.special.digamma(alpha_before) - scipy.special.digamma(alpha_before.sum())
        )
        expected = np.exp(log_w - log_w.max())
        expected /= expected.sum()
        assert np.allclose(it.chi.probabilities, expected, atol=1e-10)
        assert np.allclose(it.alpha, pred.alpha_prior + expected, atol=1e-10)


class TestConvergence:
    def test_identical_states(self):
        x = np.array([1.0, 2.0])
        assert check_convergence(x, x, 1e-8)

    def test_relative_threshold(self):
        delta = 1e-3
        x_old = np.array([1.0, 0.0])
        x_new = np.array([1.0 + 2 * delta, 0.0])
        assert not check_convergence(x_new, x_old, delta)
        assert check_convergence(np.array([1.0 + 0.5 * delta, 0.0]), x_old, delta)

    def test_zero_guard(self):
        zero = np.zeros(2)
        assert check_convergence(zero, zero, 1e-8)
        assert not check_convergence(np.array([1.0, 0.0]), zero, 1e-8)


class TestDecouplingIdentities:
    def test_quadratic_form_and_determinant(self):
        rng = np.random.default_rng(13)
        n, m = 4, 2
        for _ in range(100):
            p = random_spd(rng, n)
            r = random_spd(rng, m)
            h = rng.standard_normal((m, n))
            phi = np.block([[p, p @ h.T], [h @ p, h @ p @ h.T + r]])
            dx = rng.standard_normal(n)
            dz = rng.standard_normal(m)
            full = np.concatenate([dx, dz])
            dense = 0.5 * full @ np.linalg.solve(phi, full)
            rho_z = dz - h @ dx
            decoupled = 0.5 * (
                dx @ np.linalg.solve(p, dx) + rho_z @ np.linalg.solve(r, rho_z)
            )
            assert abs(dense - decoupled) < 1e-9 * max(1.0, abs(dense))
            sign, logdet = np.linalg.slogdet(phi)
            assert sign > 0
            assert abs(
                logdet - spd_factor(p).log_det() - spd_factor(r).log_det()
            ) < 1e-10 * max(1.0, abs(logdet))


class TestStepOrchestration:
    def test_silent_step_with_vanishing_trigger_is_pure_prediction(self):
        cfg = make_config(n=4, m=2, q_scales=(1.0, 2.0), y_scale=1e-12)
        model = build_cv_scenario(1.0, 500)
        state = FilterState(
            x_hat=np.array([1.0, 2.0, 0.5, -0.5]),
            P=np.eye(4),
            s=5.0,
            S=5.0 * np.eye(2),
            alpha=np.ones(2),
        )
        f, h = model.F(1), model.H(1)
        new_state, diag = etvbf_step(state, f, h, TriggerOutcome(gamma=0), cfg)
        assert np.allclose(new_state.x_hat, f @ state.x_hat, atol=1e-12)
        assert np.linalg.norm(new_state.P - diag.p_tilde) < 1e-6

    def test_iteration_budget_and_chi_normalization(self):
        cfg = make_config(n=4, m=2, q_scales=(1.0, 2.0, 3.0, 9.0, 10.0), tol=1e-8)
        model = build_cv_scenario(1.0, 500)
        x0, p0, _ = scenario_defaults()
        rng = SeededRng(3)
        traj = simulate_truth(model, x0, 20, rng)
        state = initial_state(x0, p0, cfg)
        for k in range(1, 21):
            outcome = TriggerOutcome(gamma=1, measurement=traj.measurements[k - 1])
            state, diag = etvbf_step(state, model.F(k), model.H(k), outcome, cfg)
            assert diag.iterations <= cfg.max_iterations
            chi = diag.chi.probabilities
            assert abs(chi.sum() - 1.0) <= 1e-12
            assert np.all(chi >= 0) and np.all(chi <= 1)
            # SPD persistence of the recursive quantities
            spd_factor(state.P)
            spd_factor(state.S)
            spd_factor(diag.p_tilde)
            spd_factor(diag.r_tilde)

    def test_s_dof_advances_by_one_per_step(self):
        cfg = make_config(n=4, m=2, q_scales=(1.0, 2.0), rho=1.0, s0=5.0)
        model = build_cv_scenario(1.0, 500)
        x0, p0, _ = scenario_defaults()
        traj = simulate_truth(model, x0, 5, SeededRng(4))
        state = initial_state(x0, p0, cfg)
        for k in range(1, 6):
            outcome = TriggerOutcome(gamma=1, measurement=traj.measurements[k - 1])
            state, _ = etvbf_step(state, model.F(k), model.H(k), outcome, cfg)
            assert state.s == pytest.approx(5.0 + k)

    def test_s_scale_loewner_nondecreasing_without_forgetting(self):
        cfg = make_config(n=4, m=2, q_scales=(1.0, 2.0), rho=1.0)
        model = build_cv_scenario(1.0, 500)
        x0, p0, _ = scenario_defaults()
        traj = simulate_truth(model, x0, 15, SeededRng(5))
        state = initial_state(x0, p0, cfg)
        prev_s = state.S
        for k in range(1, 16):
            outcome = TriggerOutcome(gamma=1, measurement=traj.measurements[k - 1])
            state, _ = etvbf_step(state, model.F(k), model.H(k), outcome, cfg)
            assert np.all(np.linalg.eigvalsh(state.S - prev_s) > -1e-9)
            prev_s = state.S
