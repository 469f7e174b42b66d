import numpy as np
import pytest

from privgame.game import LQGame, payoff
from privgame.llqfp import (PerturbationDraw, check_psd, d_matrix, draw, draw_from_dict,
                            draw_to_dict, perturb, perturbed_payoff,
                            perturbed_pseudo_gradient)
from privgame.network import Network, neighbors, path, random_symmetric, ring_lattice, star
from privgame.trunc_laplace import NoiseParams

from oracles import central_difference, second_difference

S1 = NoiseParams(a=0.034, lam=0.013)
WIDE = NoiseParams(a=1.0, lam=0.4)


class TestDraw:
    def test_noise_budget_per_player(self):
        net = ring_lattice(10, 4, 0.08)
        drw = draw(net, S1, seed=1)
        assert drw.noise_count == 60
        assert all(len(w) == 6 for w in drw.omega)
        assert drw.n == 10
        assert drw.seed == 1
        assert drw.params == S1

    def test_noises_respect_truncation(self):
        drw = draw(ring_lattice(10, 4, 0.08), S1, seed=2)
        for w in drw.omega:
            assert np.max(np.abs(w)) <= S1.a
        assert np.max(np.abs(drw.beta)) <= S1.a

    def test_coefficient_layout(self):
        net = star(7, 0.05)
        drw = draw(net, WIDE, seed=3)
        for i in range(net.n):
            nb = np.array(neighbors(net, i + 1)) - 1
            k = len(nb)
            # neighbor coefficients come first, in ascending neighbor order
            assert np.array_equal(drw.q[i, nb], drw.omega[i][:k])
            # self coefficient is the shifted (k+1)-th noise
            assert drw.q[i, i] == pytest.approx(
                drw.omega[i][k] / 2.0 + WIDE.a * (k + 1) / 2.0, abs=1e-15)
            # linear offset is the last noise
            assert drw.beta[i] == drw.omega[i][k + 1]
            # nothing outside the neighborhood is touched
            untouched = np.setdiff1d(np.arange(net.n), np.append(nb, i))
            assert np.all(drw.q[i, untouched] == 0.0)

    def test_self_coefficient_band(self):
        for seed in range(30):
            drw = draw(path(9, 0.1), WIDE, seed=seed)
            for i in range(9):
                k = len(drw.omega[i]) - 2
                assert WIDE.a * k / 2 <= drw.q[i, i] <= WIDE.a * (k + 2) / 2

    def test_seed_reproducibility(self):
        net = ring_lattice(8, 2, 0.1)
        a = draw(net, S1, seed=11)
        b = draw(net, S1, seed=11)
        c = draw(net, S1, seed=12)
        assert np.array_equal(a.q, b.q) and np.array_equal(a.beta, b.beta)
        assert not np.array_equal(a.q, c.q)

    def test_player_streams_do_not_depend_on_network_size(self):
        # player 1 keeps 4 neighbors in both rings, so her substream and
        # noise count are unchanged when unrelated players are added
        small = draw(ring_lattice(10, 4, 0.08), S1, seed=21)
        large = draw(ring_lattice(12, 4, 0.08), S1, seed=21)
        assert np.array_equal(small.omega[0], large.omega[0])
        assert small.beta[0] == large.beta[0]


class TestDerivedMatrix:
    def test_definition(self):
        drw = draw(ring_lattice(6, 2, 0.1), WIDE, seed=4)
        expected = drw.q.T + np.diag(np.diag(drw.q))
        assert np.array_equal(drw.d, expected)
        assert np.array_equal(d_matrix(drw), expected)

    def test_row_dominance_every_draw(self):
        nets = [ring_lattice(10, 4, 0.08), star(10, 0.05), path(10, 0.1)]
        for net in nets:
            for seed in range(25):
                drw = draw(net, WIDE, seed=seed)
                for i in range(net.n):
                    off = np.abs(drw.q[i]).sum() - abs(drw.q[i, i])
                    assert 2 * drw.q[i, i] >= off - 1e-12

    def test_symmetric_part_nonnegative(self):
        for seed in range(25):
            net = random_symmetric(9, 0.5, 0.05, 1.0, seed=seed, spectral_cap=0.9)
            drw = draw(net, WIDE, seed=seed + 100)
            assert check_psd(drw.d.T) >= -1e-10

    def test_worst_case_draw_sits_on_psd_boundary(self):
        # all noises at -a puts every row exactly at the dominance threshold
        a = WIDE.a
        net = ring_lattice(6, 2, 0.1)
        q = np.zeros((6, 6))
        omega = []
        for i in range(6):
            nb = np.flatnonzero(net.weights[i])
            q[i, nb] = -a
            q[i, i] = a  # -a/2 + a*3/2
            omega.append(np.full(4, -a))
        drw = PerturbationDraw(omega=tuple(omega), q=q, beta=np.full(6, -a),
                               params=WIDE, seed=0)
        eig = check_psd(drw.d.T)
        assert -1e-12 <= eig < 1e-10

    def test_check_psd_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            check_psd(np.zeros((2, 3)))

    def test_check_psd_flags_indefinite_input(self):
        assert check_psd(np.array([[0.0, 2.0], [0.0, 0.0]])) < 0.0


class TestValidation:
    def _pieces(self):
        drw = draw(ring_lattice(6, 2, 0.1), WIDE, seed=5)
        return [np.array(w) for w in drw.omega], np.array(drw.q), np.array(drw.beta)

    def test_tampered_self_coefficient_rejected(self):
        omega, q, beta = self._pieces()
        q[2, 2] = 5.0 * WIDE.a
        with pytest.raises(ValueError, match="self coefficient"):
            PerturbationDraw(omega=tuple(omega), q=q, beta=beta, params=WIDE, seed=5)

    def test_tampered_offset_rejected(self):
        omega, q, beta = self._pieces()
        beta[0] = 2.0 * WIDE.a
        with pytest.raises(ValueError, match="offset"):
            PerturbationDraw(omega=tuple(omega), q=q, beta=beta, params=WIDE, seed=5)

    def test_escaped_noise_rejected(self):
        omega, q, beta = self._pieces()
        omega[1][0] = 3.0 * WIDE.a
        with pytest.raises(ValueError, match="escapes"):
            PerturbationDraw(omega=tuple(omega), q=q, beta=beta, params=WIDE, seed=5)

    def test_extra_neighbor_coefficient_rejected(self):
        omega, q, beta = self._pieces()
        q[0, 3] = 0.01  # player 1 on this ring has only players 2 and 6
        with pytest.raises(ValueError, match="more neighbor coefficients"):
            PerturbationDraw(omega=tuple(omega), q=q, beta=beta, params=WIDE, seed=5)

    def test_inconsistent_shapes_rejected(self):
        omega, q, beta = self._pieces()
        with pytest.raises(ValueError, match="shapes"):
            PerturbationDraw(omega=tuple(omega[:-1]), q=q, beta=beta, params=WIDE, seed=5)

    def test_draw_is_frozen(self):
        drw = draw(ring_lattice(6, 2, 0.1), WIDE, seed=5)
        with pytest.raises(ValueError):
            drw.q[0, 0] = 1.0


class TestPerturbedGame:
    def make(self):
        net = ring_lattice(8, 2, 0.1)
        g = LQGame(net=net, b=np.full(8, 6.0), action_box=(0.0, 40.0))
        return g, draw(net, WIDE, seed=9)

    def test_affine_pieces(self):
        g, drw = self.make()
        pg = perturb(g, drw)
        assert np.allclose(pg.jacobian, np.eye(8) - g.net.weights + drw.d.T, atol=0)
        assert np.allclose(pg.intercept, g.b - drw.beta, atol=0)
        assert pg.n == 8
        assert np.array_equal(pg.box_lo, g.box_lo)

    def test_payoff_modification_formula(self):
        g, drw = self.make()
        rng = np.random.Generator(np.random.PCG64(31))
        for _ in range(10):
            x = rng.uniform(0.0, 40.0, size=8)
            for i in (1, 4, 8):
                expected = payoff(g, i, x) - x[i - 1] * float(drw.q[i - 1] @ x) \
                    - drw.beta[i - 1] * x[i - 1]
                assert perturbed_payoff(g, drw, i, x) == pytest.approx(expected, abs=1e-12)

    def test_gradient_matches_central_differences(self):
        g, drw = self.make()
        rng = np.random.Generator(np.random.PCG64(32))
        for _ in range(10):
            x = rng.uniform(1.0, 39.0, size=8)
            grad = perturbed_pseudo_gradient(g, drw, x)
            for i in range(8):
                fd = central_difference(lambda y: perturbed_payoff(g, drw, i + 1, y), x, i)
                assert grad[i] == pytest.approx(fd, abs=1e-7)

    def test_gradient_affine_identity(self):
        g, drw = self.make()
        pg = perturb(g, drw)
        x = np.linspace(1.0, 5.0, 8)
        assert np.allclose(perturbed_pseudo_gradient(g, drw, x),
                           pg.intercept - pg.jacobian @ x, atol=1e-13)

    def test_own_curvature_is_strictly_concave(self):
        g, drw = self.make()
        x = np.full(8, 10.0)
        for i in range(8):
            curv = second_difference(lambda y: perturbed_payoff(g, drw, i + 1, y), x, i)
            assert curv == pytest.approx(-1.0 - 2.0 * drw.q[i, i], abs=1e-5)
            assert curv < 0.0

    def test_mismatched_network_rejected(self):
        g, _ = self.make()
        other = draw(ring_lattice(10, 2, 0.1), WIDE, seed=9)
        with pytest.raises(ValueError, match="players"):
            perturb(g, other)

    def test_mismatched_degrees_rejected(self):
        net = star(8, 0.05)
        g = LQGame(net=net, b=np.full(8, 6.0), action_box=(0.0, 40.0))
        ring_draw = draw(ring_lattice(8, 2, 0.1), WIDE, seed=9)
        with pytest.raises(ValueError, match="mismatches"):
            perturb(g, ring_draw)


class TestSerialization:
    def test_round_trip_is_exact(self):
        drw = draw(ring_lattice(10, 4, 0.08), S1, seed=77)
        rebuilt = draw_from_dict(draw_to_dict(drw))
        assert np.array_equal(rebuilt.q, drw.q)
        assert np.array_equal(rebuilt.beta, drw.beta)
        assert all(np.array_equal(a, b) for a, b in zip(rebuilt.omega, drw.omega))
        assert rebuilt.params == drw.params
        assert rebuilt.seed == drw.seed

    def test_record_is_json_safe(self):
        import json
        record = draw_to_dict(draw(path(5, 0.1), S1, seed=8))
        assert json.loads(json.dumps(record)) == record
        assert record["kind"] == "perturbation-draw"
        assert record["generator"] == "numpy-pcg64"
        assert record["format_version"] == 1

    def test_wrong_kind_or_version_rejected(self):
        record = draw_to_dict(draw(path(5, 0.1), S1, seed=8))
        bad_kind = dict(record, kind="other")
        with pytest.raises(ValueError, match="kind"):
            draw_from_dict(bad_kind)
        bad_version = dict(record, format_version=99)
        with pytest.raises(ValueError, match="version"):
            draw_from_dict(bad_version)

    def test_tampered_record_fails_validation(self):
        record = draw_to_dict(draw(path(5, 0.1), S1, seed=8))
        record["beta"][0] = 40.0 * S1.a
        with pytest.raises(ValueError, match="offset"):
            draw_from_dict(record)
