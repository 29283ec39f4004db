import numpy as np
import pytest

from svi.drivers import (
    JumpEvents,
    LevyConfig,
    MarkSampler,
    RngStream,
    WienerSpec,
    compensator_integral,
    sample_jump_events,
    sample_wiener_increments,
    seed_from_env,
)

coin = MarkSampler("atoms", {"atoms": [[1.0], [-1.0]], "weights": [0.5, 0.5]})


def test_increment_variance():
    z = sample_wiener_increments(WienerSpec((1.0,)), np.arange(100_001) * 0.01, RngStream(1, 0))
    assert z.shape == (100_000, 1)
    assert abs(z.var() / 0.01 - 1) < 0.03


def test_degenerate_mode_is_zero():
    z = sample_wiener_increments(WienerSpec((1.0, 0.0)), np.linspace(0, 1, 11), RngStream(1, 0))
    assert np.all(z[:, 1] == 0.0)


def test_brownian_endpoint_variance():
    grid = np.linspace(0, 1, 101)
    spec = WienerSpec((1.0,))
    ends = np.array([sample_wiener_increments(spec, grid, RngStream(9, p)).sum() for p in range(100_000)])
    assert abs(ends.var() - 1) < 0.03


def test_mode_paths_do_not_depend_on_mode_count():
    grid = np.linspace(0, 1, 51)
    one = sample_wiener_increments(WienerSpec((1.0,)), grid, RngStream(4, 2))
    three = sample_wiener_increments(WienerSpec((1.0, 2.0, 3.0)), grid, RngStream(4, 2))
    assert np.array_equal(one[:, 0], three[:, 0])


def test_bad_grids():
    with pytest.raises(ValueError):
        sample_wiener_increments(WienerSpec(), [0.0], RngStream(0))
    with pytest.raises(ValueError):
        sample_wiener_increments(WienerSpec(), [0.0, 0.5, 0.5], RngStream(0))


def test_negative_covariance_rejected():
    with pytest.raises(ValueError):
        WienerSpec((1.0, -0.1))


class TestJumps:
    counts = None

    @classmethod
    def setup_class(cls):
        cfg = LevyConfig(2.0, coin)
        cls.counts = np.array([len(sample_jump_events(cfg, 3.0, RngStream(42, p))) for p in range(100_000)])

    def test_mean_count(self):
        assert abs(self.counts.mean() / 6 - 1) < 0.02

    def test_count_variance(self):
        assert abs(self.counts.var() / 6 - 1) < 0.05

    def test_deterministic(self):
        cfg = LevyConfig(2.0, coin)
        a = sample_jump_events(cfg, 3.0, RngStream(42, 0))
        b = sample_jump_events(cfg, 3.0, RngStream(42, 0))
        assert a == b

    def test_sorted_in_horizon(self):
        ev = sample_jump_events(LevyConfig(50.0, coin), 2.0, RngStream(1, 3))
        assert np.all(np.diff(ev.times) >= 0)
        assert np.all((ev.times >= 0) & (ev.times <= 2.0))
        assert set(np.unique(ev.marks)) <= {-1.0, 1.0}

    def test_nonpositive_horizon(self):
        with pytest.raises(ValueError):
            sample_jump_events(LevyConfig(1.0, coin), 0.0, RngStream(0))

    def test_scaled(self):
        ev = sample_jump_events(LevyConfig(5.0, coin), 1.0, RngStream(3))
        assert np.allclose(ev.scaled(10.0).times, 10 * ev.times)

    def test_empty(self):
        assert len(JumpEvents.empty(2, 3)) == 0


class TestCompensator:
    def test_constant_integrand(self):
        cfg = LevyConfig(1.7, coin)
        assert compensator_integral(cfg, lambda u: np.full(u.shape[0], 3.0), (0.5, 2.5)) == pytest.approx(3.0 * 1.7 * 2.0)

    def test_symmetric_atoms(self):
        cfg = LevyConfig(2.0, coin)
        assert compensator_integral(cfg, lambda u: u[:, 0], (0.0, 1.0)) == pytest.approx(0.0, abs=1e-15)

    def test_uniform_quadrature_is_exact_for_polynomials(self):
        cfg = LevyConfig(1.0, MarkSampler("uniform", {"low": [0.0], "high": [2.0]}))
        # E[u^3] for u ~ U(0, 2) is 2
        assert compensator_integral(cfg, lambda u: u[:, 0] ** 3, (0.0, 1.0)) == pytest.approx(2.0, rel=1e-13)

    def test_gaussian_quadrature(self):
        cfg = LevyConfig(1.0, MarkSampler("gaussian", {"mean": [1.0], "std": [2.0]}))
        assert compensator_integral(cfg, lambda u: u[:, 0] ** 2, (0.0, 1.0)) == pytest.approx(5.0, rel=1e-12)

    def test_compensated_sum_has_mean_zero(self):
        cfg = LevyConfig(2.0, MarkSampler("uniform", {"low": [0.0], "high": [1.0]}))
        f = lambda u: u[:, 0] ** 2  # noqa: E731
        comp = compensator_integral(cfg, f, (0.0, 1.0))
        vals = np.empty(100_000)
        for p in range(vals.size):
            ev = sample_jump_events(cfg, 1.0, RngStream(17, p))
            vals[p] = f(ev.marks).sum() - comp
        se = vals.std() / np.sqrt(vals.size)
        assert abs(vals.mean()) < 3 * se


class TestStreams:
    def test_distinct_streams_uncorrelated(self):
        a = RngStream(5, 0).generator().standard_normal(100_000)
        b = RngStream(5, 1).generator().standard_normal(100_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.01

    def test_purposes_independent(self):
        s = RngStream(5, 0)
        assert not np.array_equal(s.generator(0).random(5), s.generator(1).random(5))

    def test_bitwise_reproducible(self):
        assert np.array_equal(RngStream(2**63, 7).generator().random(10), RngStream(2**63, 7).generator().random(10))

    def test_child(self):
        assert RngStream(1, 2).child(3) == RngStream(1, 5)

    def test_invalid(self):
        with pytest.raises(ValueError):
            RngStream(-1)
        with pytest.raises(ValueError):
            RngStream(2**64)

    def test_thinning(self):
        # two independent lambda/2 streams merged vs one lambda stream
        full = LevyConfig(4.0, coin)
        half = LevyConfig(2.0, coin)
        n = 20_000
        one = np.array([len(sample_jump_events(full, 1.0, RngStream(8, p))) for p in range(n)])
        two = np.array([len(sample_jump_events(half, 1.0, RngStream(9, 2 * p)))
                        + len(sample_jump_events(half, 1.0, RngStream(9, 2 * p + 1))) for p in range(n)])
        assert abs(one.mean() - two.mean()) < 4 * np.sqrt(8.0 / n)
        assert abs(one.var() / two.var() - 1) < 0.05


def test_seed_from_env(monkeypatch):
    monkeypatch.delenv("SVI_SEED", raising=False)
    assert seed_from_env(12) == 12
    monkeypatch.setenv("SVI_SEED", "99")
    assert seed_from_env(12) == 99
    monkeypatch.setenv("SVI_SEED", "-3")
    with pytest.raises(ValueError):
        seed_from_env(0)
