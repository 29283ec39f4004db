import numpy as np
import pytest

from svi.convex import HalfLine, indicator, quadratic
from svi.drivers import RngStream
from svi.galerkin import (
    LumpedPotential,
    SpdeConfig,
    build_spectral_problem,
    collocation,
    eigenvalues,
    field_eval,
    project_function,
    simulate_spde,
    snapshot_table,
)
from svi.integrator import generate_noise, simulate, simulate_ensemble
from svi.paths import CadlagPath, DelayFunction


class TestOperator:
    def test_single_mode(self):
        spec = build_spectral_problem(SpdeConfig(modes=1))
        assert spec.operator_A == pytest.approx(np.array([[-np.pi**2]]))

    def test_third_eigenvalue(self):
        assert eigenvalues(3)[2] == pytest.approx(9 * np.pi**2)
        assert eigenvalues(3)[2] == pytest.approx(88.826, abs=5e-4)

    def test_v_weights(self):
        spec = build_spectral_problem(SpdeConfig(modes=4, m0=2.0))
        assert spec.metadata["v_weights"] == pytest.approx(1 + eigenvalues(4))
        assert np.diag(spec.operator_A) == pytest.approx(-2.0 * eigenvalues(4))

    def test_constant_projection(self):
        assert project_function(lambda x: 1.0, 1)[0] == pytest.approx(2 * np.sqrt(2) / np.pi, rel=1e-13)

    def test_collocation_exact_for_products(self):
        x, E, w = collocation(6)
        assert x.size == 13
        assert w * E.T @ E == pytest.approx(np.eye(6), abs=1e-13)

    def test_reaction_is_projected(self):
        # g(u) = u: the projected reaction is exactly -c
        cfg = SpdeConfig(modes=3, reaction=(0.0, 1.0))
        spec = build_spectral_problem(cfg)
        c = np.array([[0.3, -0.2, 0.1]])
        lam = eigenvalues(3)
        assert spec.apply_A(c) == pytest.approx(-(lam + 1) * c)


class TestValidation:
    def test_modes(self):
        with pytest.raises(ValueError):
            SpdeConfig(modes=0)

    def test_m0(self):
        with pytest.raises(ValueError):
            SpdeConfig(modes=2, m0=0.0)

    def test_flux(self):
        with pytest.raises(ValueError):
            SpdeConfig(modes=2, flux="porous")

    def test_reaction_one_sided(self):
        with pytest.raises(ValueError):
            SpdeConfig(modes=2, reaction=(0.0, 1.0, 0.0, -1.0))
        with pytest.raises(ValueError):
            SpdeConfig(modes=2, reaction=(0.0, 0.0, 1.0))
        with pytest.raises(ValueError):
            SpdeConfig(modes=2, reaction=(0, 0, 0, 0, 1.0))

    def test_allen_cahn_bound(self):
        assert SpdeConfig(modes=2, reaction=(0.0, -1.0, 0.0, 1.0)).beta == pytest.approx(1.0)
        assert SpdeConfig(modes=2, reaction=(0.0, 2.0)).beta == 0.0

    def test_noise_length(self):
        with pytest.raises(ValueError):
            SpdeConfig(modes=3, noise_q=(1.0, 1.0))

    def test_unstable_step(self):
        with pytest.raises(ValueError):
            simulate_spde(SpdeConfig(modes=20, initial=[1.0]), 1e-2)


class TestFieldEval:
    def test_midpoint(self):
        assert field_eval([1.0, 0.0, 0.0], 0.5) == pytest.approx(np.sqrt(2))

    def test_second_mode_node(self):
        assert field_eval([0.0, 1.0, 0.0], 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_dirichlet(self):
        c = np.random.default_rng(0).standard_normal(7)
        assert abs(field_eval(c, 1e-12)) < 1e-9

    def test_batched(self):
        c = np.array([[1.0, 0.0], [0.0, 1.0]])
        u = field_eval(c, np.array([0.25, 0.5]))
        assert u.shape == (2, 2)
        assert u[0, 1] == pytest.approx(np.sqrt(2))


class TestSimulate:
    def test_heat_decay(self):
        dt = 1e-3
        cfg = SpdeConfig(modes=4, initial=[1.0], T=0.1)
        sol, _ = simulate_spde(cfg, dt)
        exact = np.exp(-np.pi**2 * 0.1)
        assert abs(sol.nodes[-1, 0] / exact - 1) <= 2 * dt * np.pi**2
        assert np.all(sol.nodes[-1, 1:] == 0.0)

    def test_zero_field(self):
        sol, (t, x, u) = simulate_spde(SpdeConfig(modes=3, T=0.2), 1e-3, snapshot_every=50)
        assert np.all(u == 0.0)
        assert t[-1] == pytest.approx(0.2)

    def test_snapshot_table(self):
        sol, snaps = simulate_spde(SpdeConfig(modes=2, initial=[1.0], T=0.1), 1e-2, snapshot_every=5,
                                   x_grid=np.linspace(0, 1, 5))
        rows = snapshot_table(snaps)
        assert rows.shape == (3 * 5, 3)
        assert rows[0, 2] == 0.0 and rows[2, 2] == pytest.approx(np.sqrt(2))

    def test_discrete_ou_variance(self):
        # Euler OU from 0: Var X_N = q dt sum_j (1 - lam dt)^{2j}
        dt, T = 1e-2, 1.0
        lam = np.pi**2
        spec = build_spectral_problem(SpdeConfig(modes=1, noise_q=(1.0,), T=T))
        r = simulate_ensemble(spec, dt, 4000, 12, statistic=lambda s: s.nodes[:, -1, 0])
        N = int(T / dt)
        exact = dt * np.sum((1 - lam * dt) ** (2 * np.arange(N)))
        assert abs(r.values.var(ddof=1) / exact - 1) < 4 * np.sqrt(2 / 4000)

    def test_spectral_consistency(self):
        # linear problem: mode 1 does not see how many modes are carried
        out = []
        for N in (4, 8):
            spec = build_spectral_problem(SpdeConfig(modes=N, noise_q=(1.0,) * N, initial=[0.5], T=0.5))
            out.append(simulate(spec, 1e-3, rng=RngStream(4, 0)).nodes[-1, 0])
        assert abs(out[0] - out[1]) < 1e-10

    def test_contraction_rate(self):
        cfg = SpdeConfig(modes=3, reaction=(0.0, -1.0, 0.0, 1.0), noise_q=(0.5, 0.5, 0.5), T=0.5)
        spec = build_spectral_problem(cfg)
        dt = 1e-3
        noise = generate_noise(spec, dt, streams=[RngStream(7, 0)])
        a = simulate(spec.replace(initial=[0.2, 0.0, 0.1]), dt, noise=noise)
        b = simulate(spec.replace(initial=[0.6, 0.1, 0.0]), dt, noise=noise)
        dist = np.linalg.norm(a.nodes - b.nodes, axis=-1)
        slope = np.polyfit(a.times, np.log(dist), 1)[0]
        assert -slope >= np.pi**2 - cfg.beta

    def test_delay_time_invariance(self):
        dt, gap = 1e-3, 0.2
        cfg = SpdeConfig(modes=2, b=(None, lambda t, x, u: -2.0 * u, None), delta1=DelayFunction.constant(gap),
                         initial=[1.0, 0.3], h=gap, T=1.0)
        spec = build_spectral_problem(cfg)
        first = simulate(spec, dt)
        shift = 0.3
        g, v = first.X.restrict(shift - gap, shift)
        hist = CadlagPath(g - shift, v, h=gap, T=0.0)
        second = simulate(spec.replace(initial=hist, T=1.0 - shift), dt)
        k = int(round(shift / dt))
        assert np.max(np.abs(second.nodes - first.nodes[k:])) < 1e-10

    def test_obstacle_shrinks_negative_part(self):
        # lumping projects the pointwise prox back onto N modes, so the field
        # is not exactly nonnegative, but its negative part is much smaller
        _, E, w = collocation(4)
        neg = []
        for pot in (indicator(HalfLine(0.0)), None):
            cfg = SpdeConfig(modes=4, potential=pot, noise_q=(1.0,) * 4, initial=[0.2], T=0.2)
            sol, _ = simulate_spde(cfg, 1e-3, rng=RngStream(3, 0))
            u = sol.nodes @ E.T
            neg.append(np.mean(np.sum(w * np.minimum(u, 0.0) ** 2, axis=-1)))
        assert neg[0] < 0.05 * neg[1]


class TestLumpedPotential:
    def test_nonexpansive(self):
        pot = LumpedPotential(indicator(HalfLine(0.0)), 5)
        rng = np.random.default_rng(1)
        u, v = rng.standard_normal((2, 500, 5))
        d = np.linalg.norm(pot.resolvent(0.1, u) - pot.resolvent(0.1, v), axis=-1)
        assert np.all(d <= np.linalg.norm(u - v, axis=-1) + 1e-12)

    def test_quadratic_is_linear_shrink(self):
        pot = LumpedPotential(quadratic([1.0]), 3)
        c = np.array([0.3, -0.1, 0.2])
        assert pot.resolvent(1.0, c) == pytest.approx(c / 2)

    def test_scalar_only(self):
        with pytest.raises(ValueError):
            LumpedPotential(quadratic([1.0, 1.0]), 3)
