import numpy as np
import pytest

from privgame.equilibrium import (EquilibriumResult, accuracy_check, best_response_dynamics,
                                  gamma_realized, gamma_worst_case, projected_gradient_ne,
                                  solve_lq_ne, solve_perturbed_lq_ne)
from privgame.game import LQGame, MonotoneGameOracle, as_oracle, monotonicity_constant
from privgame.llqfp import draw, perturb
from privgame.network import ring_lattice
from privgame.trunc_laplace import NoiseParams

from oracles import best_response_gap

S1 = NoiseParams(a=0.034, lam=0.013)


def pg_step(game) -> float:
    lips = float(np.linalg.norm(np.eye(game.n) - game.net.weights, 2))
    return monotonicity_constant(game) / lips**2


class TestClosedForm:
    def test_benchmark_solution(self, benchmark_game):
        res = solve_lq_ne(benchmark_game)
        assert res.method == "closed_form"
        assert res.iterations == 0
        assert res.converged
        assert res.interior
        assert np.allclose(res.x_star, 14.705882352941174, atol=1e-12)
        assert float(np.linalg.norm(res.x_star)) == pytest.approx(46.50408323777028,
                                                                  rel=1e-14)
        assert res.residual < 1e-12

    def test_solution_is_a_best_response_fixed_point(self, benchmark_game):
        res = solve_lq_ne(benchmark_game)
        assert best_response_gap(benchmark_game, res.x_star) < 1e-12

    def test_boundary_solution_flagged_not_projected(self):
        g = LQGame(net=ring_lattice(10, 4, 0.08), b=np.full(10, 10.0),
                   action_box=(0.0, 10.0))
        res = solve_lq_ne(g)
        assert not res.interior
        assert res.x_star[0] == pytest.approx(14.705882352941174)

    def test_result_is_frozen(self, benchmark_game):
        res = solve_lq_ne(benchmark_game)
        with pytest.raises(AttributeError):
            res.method = "other"


class TestPerturbedClosedForm:
    def test_solves_the_shifted_system(self, benchmark_game):
        drw = draw(benchmark_game.net, S1, seed=3)
        res = solve_perturbed_lq_ne(benchmark_game, drw)
        pg = perturb(benchmark_game, drw)
        assert np.max(np.abs(pg.intercept - pg.jacobian @ res.x_star)) < 1e-12
        assert res.interior

    def test_transpose_variant_differs_for_asymmetric_draws(self, benchmark_game):
        drw = draw(benchmark_game.net, S1, seed=3)
        default = solve_perturbed_lq_ne(benchmark_game, drw)
        variant = solve_perturbed_lq_ne(benchmark_game, drw, transpose=False)
        gap = float(np.linalg.norm(default.x_star - variant.x_star))
        assert gap > 0.0
        matrix = np.eye(10) - benchmark_game.net.weights + drw.d
        assert np.max(np.abs((benchmark_game.b - drw.beta) - matrix @ variant.x_star)) < 1e-12

    def test_displacement_is_small_for_small_noise(self, benchmark_game):
        base = solve_lq_ne(benchmark_game).x_star
        for seed in range(10):
            drw = draw(benchmark_game.net, S1, seed=seed)
            x_hat = solve_perturbed_lq_ne(benchmark_game, drw).x_star
            assert float(np.linalg.norm(base - x_hat)) < 25.0


class TestProjectedGradient:
    def test_converges_to_closed_form(self, benchmark_game):
        res = projected_gradient_ne(benchmark_game, step=pg_step(benchmark_game),
                                    tol=1e-9, max_iter=100000)
        exact = solve_lq_ne(benchmark_game).x_star
        assert res.method == "projected_gradient"
        assert res.converged
        assert res.iterations > 0
        assert np.max(np.abs(res.x_star - exact)) < 1e-7
        assert res.residual < 1e-8

    def test_residual_shrinks_monotonically_under_safe_step(self, benchmark_game):
        res = projected_gradient_ne(benchmark_game, step=pg_step(benchmark_game),
                                    tol=1e-9, max_iter=100000)
        assert res.residual_monotone is True

    def test_boundary_fixed_point(self):
        g = LQGame(net=ring_lattice(10, 4, 0.08), b=np.full(10, 10.0),
                   action_box=(0.0, 10.0))
        res = projected_gradient_ne(g, step=pg_step(g), tol=1e-10, max_iter=50000)
        assert res.converged
        assert np.allclose(res.x_star, 10.0, atol=1e-9)
        assert not res.interior
        assert res.residual < 1e-9

    def test_zero_step_reports_stall(self, benchmark_game):
        res = projected_gradient_ne(benchmark_game, step=0.0, tol=1e-6, max_iter=25)
        assert not res.converged
        assert res.iterations == 25

    def test_start_point_is_clipped_into_the_box(self, benchmark_game):
        res = projected_gradient_ne(benchmark_game, step=pg_step(benchmark_game),
                                    tol=1e-9, max_iter=100000,
                                    x0=np.full(10, 1e6))
        assert np.max(np.abs(res.x_star - 14.705882352941174)) < 1e-7

    def test_works_through_the_opaque_interface(self, benchmark_game):
        res = projected_gradient_ne(as_oracle(benchmark_game),
                                    step=pg_step(benchmark_game),
                                    tol=1e-9, max_iter=100000)
        assert np.max(np.abs(res.x_star - 14.705882352941174)) < 1e-7

    def test_non_lq_monotone_map(self):
        oracle = MonotoneGameOracle(n=3, pseudo_gradient=lambda x: -2.0 * x,
                                    l_m=2.0, action_box=(-5.0, 5.0))
        res = projected_gradient_ne(oracle, step=0.4, tol=1e-10, max_iter=10000,
                                    x0=np.array([4.0, -3.0, 1.0]))
        assert np.max(np.abs(res.x_star)) < 1e-9

    @pytest.mark.parametrize("kwargs", [
        {"step": -0.1, "tol": 1e-6, "max_iter": 10},
        {"step": 0.1, "tol": 0.0, "max_iter": 10},
        {"step": 0.1, "tol": 1e-6, "max_iter": 0},
    ])
    def test_invalid_arguments_rejected(self, benchmark_game, kwargs):
        with pytest.raises(ValueError):
            projected_gradient_ne(benchmark_game, **kwargs)


class TestBestResponse:
    def test_full_trajectory_returned(self, benchmark_game):
        x0 = np.zeros(10)
        traj = best_response_dynamics(benchmark_game, x0, rounds=100)
        assert traj.shape == (101, 10)
        assert np.array_equal(traj[0], x0)
        assert np.max(np.abs(traj[-1] - 14.705882352941174)) < 1e-10

    def test_zero_rounds_returns_start_only(self, benchmark_game):
        traj = best_response_dynamics(benchmark_game, np.full(10, 2.0), rounds=0)
        assert traj.shape == (1, 10)

    def test_each_round_is_a_clipped_best_response(self, benchmark_game):
        traj = best_response_dynamics(benchmark_game, np.zeros(10), rounds=5)
        g = benchmark_game
        for t in range(1, 6):
            expected = np.clip(g.b + g.net.weights @ traj[t - 1], g.box_lo, g.box_hi)
            assert np.allclose(traj[t], expected, atol=0)

    def test_converges_on_perturbed_game(self, benchmark_game):
        drw = draw(benchmark_game.net, S1, seed=6)
        pg = perturb(benchmark_game, drw)
        traj = best_response_dynamics(pg, np.zeros(10), rounds=200)
        exact = solve_perturbed_lq_ne(benchmark_game, drw).x_star
        assert np.max(np.abs(traj[-1] - exact)) < 1e-10

    def test_boundary_absorption(self):
        g = LQGame(net=ring_lattice(10, 4, 0.08), b=np.full(10, 10.0),
                   action_box=(0.0, 10.0))
        traj = best_response_dynamics(g, np.zeros(10), rounds=100)
        assert np.allclose(traj[-1], 10.0, atol=1e-12)

    def test_negative_rounds_rejected(self, benchmark_game):
        with pytest.raises(ValueError):
            best_response_dynamics(benchmark_game, np.zeros(10), rounds=-1)


class TestAccuracyRadii:
    def test_realized_radius_formula(self, benchmark_game):
        drw = draw(benchmark_game.net, S1, seed=1)
        x_star = solve_lq_ne(benchmark_game).x_star
        l_m = monotonicity_constant(benchmark_game)
        expected = (float(np.linalg.norm(drw.beta))
                    + float(np.linalg.norm(drw.d, 2)) * float(np.linalg.norm(x_star))) / l_m
        assert gamma_realized(drw, x_star, l_m) == pytest.approx(expected, rel=1e-15)

    def test_frobenius_never_smaller_than_spectral(self, benchmark_game):
        x_star = solve_lq_ne(benchmark_game).x_star
        l_m = monotonicity_constant(benchmark_game)
        for seed in range(10):
            drw = draw(benchmark_game.net, S1, seed=seed)
            spectral = gamma_realized(drw, x_star, l_m)
            fro = gamma_realized(drw, x_star, l_m, matrix_norm="frobenius")
            assert fro >= spectral

    def test_unknown_norm_rejected(self, benchmark_game):
        drw = draw(benchmark_game.net, S1, seed=1)
        with pytest.raises(ValueError, match="norm"):
            gamma_realized(drw, np.ones(10), 0.5, matrix_norm="nuclear")
        with pytest.raises(ValueError, match="modulus"):
            gamma_realized(drw, np.ones(10), 0.0)

    def test_worst_case_radius_frozen_values(self, benchmark_game):
        net = benchmark_game.net
        x_norm = 46.50408323777028
        l_m = monotonicity_constant(benchmark_game)
        assert gamma_worst_case(net, 0.034, x_norm, l_m) == \
            pytest.approx(69.13481623335298, rel=1e-14)
        assert gamma_worst_case(net, 0.034, x_norm, l_m, tight=True) == \
            pytest.approx(46.66219712077871, rel=1e-14)

    def test_worst_dominates_realized_dominates_distance(self, benchmark_game):
        x_star = solve_lq_ne(benchmark_game).x_star
        x_norm = float(np.linalg.norm(x_star))
        l_m = monotonicity_constant(benchmark_game)
        g_worst = gamma_worst_case(benchmark_game.net, S1.a, x_norm, l_m)
        g_tight = gamma_worst_case(benchmark_game.net, S1.a, x_norm, l_m, tight=True)
        assert g_tight <= g_worst
        for seed in range(50):
            drw = draw(benchmark_game.net, S1, seed=seed)
            x_hat = solve_perturbed_lq_ne(benchmark_game, drw).x_star
            dist = float(np.linalg.norm(x_star - x_hat))
            g_real = gamma_realized(drw, x_star, l_m)
            assert dist <= g_real
            assert g_real <= g_tight

    def test_radius_scales_linearly_with_truncation(self, benchmark_game):
        net = benchmark_game.net
        one = gamma_worst_case(net, 1.0, 10.0, 0.5)
        assert gamma_worst_case(net, 2.0, 10.0, 0.5) == pytest.approx(2.0 * one)
        assert gamma_worst_case(net, 0.0, 10.0, 0.5) == 0.0
        with pytest.raises(ValueError):
            gamma_worst_case(net, -1.0, 10.0, 0.5)
        with pytest.raises(ValueError):
            gamma_worst_case(net, 1.0, 10.0, 0.0)

    def test_accuracy_check(self):
        a = np.zeros(3)
        b = np.array([3.0, 0.0, 4.0])
        assert accuracy_check(a, b, 5.0)
        assert accuracy_check(a, b, 5.0 + 1e-12)
        assert not accuracy_check(a, b, 4.999)
        with pytest.raises(ValueError, match="shape"):
            accuracy_check(np.zeros(3), np.zeros(4), 1.0)
