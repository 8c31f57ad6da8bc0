import numpy as np
import pytest

from posediff.errors import OutOfRange
from posediff.sde import GmmOracle, NoiseSchedule, dsm_loss, dsm_loss_grad, perturb

S = NoiseSchedule()


def central_diff(f, x, h):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def random_mixture(seed, dim=9, k=3):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.2, 1.0, k)
    return GmmOracle(rng.standard_normal((k, dim)), rng.uniform(0.1, 0.6, k), w / w.sum())


class TestSchedule:
    def test_endpoints_exact(self):
        assert S.sigma(0.0) == 0.01
        assert S.sigma(1.0) == 50.0

    def test_midpoint(self):
        assert S.sigma(0.5) == pytest.approx(np.sqrt(0.5), rel=1e-12)

    def test_monotone_and_log_linear(self):
        t = np.linspace(0, 1, 101)
        s = S.sigma(t)
        assert np.all(np.diff(s) > 0)
        np.testing.assert_allclose(np.diff(np.log(s), 2), 0.0, atol=1e-12)

    def test_rate_at_zero(self):
        assert S.sigma_sq_rate(0.0) == pytest.approx(0.01 ** 2 * np.log(5000), rel=1e-12)
        assert S.sigma_sq_rate(0.0) == pytest.approx(8.5172e-4, rel=1e-4)

    @pytest.mark.parametrize("t", [0.01, 0.2, 0.5, 0.77, 0.99])
    def test_rate_matches_finite_differences(self, t):
        h = 1e-5
        fd = 0.5 * (S.sigma(t + h) ** 2 - S.sigma(t - h) ** 2) / (2 * h)
        assert S.sigma_sq_rate(t) == pytest.approx(fd, rel=1e-6)
        assert S.sigma_sq_rate(t) > 0

    @pytest.mark.parametrize("t", [-0.1, 1.5, np.nan])
    def test_out_of_range(self, t):
        with pytest.raises(OutOfRange):
            S.sigma(t)
        with pytest.raises(OutOfRange):
            S.sigma_sq_rate(t)

    def test_invalid_schedule(self):
        with pytest.raises(ValueError):
            NoiseSchedule(1.0, 0.5)
        with pytest.raises(ValueError):
            NoiseSchedule(eps_min=0.0)


class TestPerturb:
    def test_fixed_noise_target(self):
        z = np.arange(9.0) - 4
        tgt = perturb(S, np.zeros(9), 0.3, None, z=z)
        np.testing.assert_array_equal(tgt.target_score, -z / S.sigma(0.3))
        assert tgt.weight == pytest.approx(S.sigma(0.3) ** 2)

    def test_reconstruction_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p0, t = rng.standard_normal(9), rng.uniform(S.eps_min, 1)
            tgt = perturb(S, p0, t, rng)
            np.testing.assert_allclose(tgt.perturbed_pose + S.sigma(t) ** 2 * tgt.target_score, p0, atol=1e-12)

    def test_variance_monte_carlo(self):
        rng = np.random.default_rng(1)
        p0 = np.ones(9)
        d = np.stack([perturb(S, p0, 0.5, rng).perturbed_pose - p0 for _ in range(100_000)])
        ratio = d.var(axis=0) / S.sigma(0.5) ** 2
        assert np.all(np.abs(ratio - 1) < 0.02)

    def test_min_noise_norm(self):
        rng = np.random.default_rng(2)
        norms = np.linalg.norm(rng.standard_normal((100_000, 9)) * S.sigma(S.eps_min), axis=1)
        # chi(9) mean is sqrt(2) Gamma(5) / Gamma(4.5)
        from scipy.special import gamma
        chi_mean = np.sqrt(2) * gamma(5) / gamma(4.5) * S.sigma(S.eps_min)
        assert np.mean(norms) == pytest.approx(chi_mean, rel=0.05)
        assert np.mean(norms) == pytest.approx(0.03, rel=0.05)
        tgt = perturb(S, np.zeros(9), S.eps_min, rng)
        assert np.linalg.norm(tgt.perturbed_pose) < 0.2

    def test_t_below_eps_rejected(self):
        with pytest.raises(OutOfRange):
            perturb(S, np.zeros(9), 0.0, np.random.default_rng(0))


class TestDsmLoss:
    def test_zero_at_target(self):
        tgt = perturb(S, np.zeros(9), 0.4, np.random.default_rng(0))
        assert dsm_loss(tgt.target_score, tgt) == 0.0

    def test_unit_offset(self):
        tgt = perturb(S, np.zeros(9), 0.4, np.random.default_rng(0))
        e1 = np.eye(9)[0]
        assert dsm_loss(tgt.target_score + e1, tgt) == pytest.approx(S.sigma(0.4) ** 2, rel=1e-12)

    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(3)
        tgt = perturb(S, rng.standard_normal(9), 0.6, rng)
        x = rng.standard_normal(9)
        fd = central_diff(lambda v: dsm_loss(v, tgt), x, 1e-4)
        np.testing.assert_allclose(dsm_loss_grad(x, tgt), fd, rtol=1e-5)

    def test_true_score_minimizes_expected_loss(self):
        rng = np.random.default_rng(4)
        orc = random_mixture(5)
        n = 20_000
        p0 = orc.sample(None, 0.0, n, rng)
        t = rng.uniform(S.eps_min, 1, n)
        z = rng.standard_normal((n, 9))
        sig = S.sigma(t)[:, None]
        pt = p0 + sig * z
        true = orc.score(S, pt, t)
        target = -z / sig

        def losses(est):
            return np.sum(sig ** 2 * (est - target) ** 2, axis=1)

        base = losses(true)
        for scale, shift in [(1.1, 0.0), (0.9, 0.0), (1.0, 0.05)]:
            diff = losses(scale * true + shift / sig) - base
            # paired difference must be positive beyond 3 standard errors
            assert diff.mean() - 3 * diff.std() / np.sqrt(n) > 0


class TestGmmOracle:
    def test_single_component_score(self):
        mu, s = np.arange(9.0) / 9, 0.4
        orc = GmmOracle.single(mu, s)
        p = np.full(9, 0.3)
        for t in (S.eps_min, 0.3, 1.0):
            np.testing.assert_allclose(orc.score(S, p, t), (mu - p) / (s ** 2 + S.sigma(t) ** 2), rtol=1e-12)

    def test_symmetric_midpoint(self):
        mu = np.ones(9)
        orc = GmmOracle(np.stack([mu, -mu]), [0.3, 0.3], [0.5, 0.5])
        np.testing.assert_allclose(orc.score(S, np.zeros(9), 0.2), 0.0, atol=1e-15)

    def test_standard_normal_density(self):
        sig = S.sigma(0.5)
        orc = GmmOracle.single(np.zeros(9), 0.0)
        p = np.full(9, 0.2)
        expected = -0.5 * np.sum(p ** 2) / sig ** 2 - 4.5 * np.log(2 * np.pi * sig ** 2)
        assert orc.log_density(S, p, 0.5) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    @pytest.mark.parametrize("t", [1e-5, 0.3, 0.9])
    def test_score_matches_fd_of_log_density(self, seed, t):
        orc = random_mixture(seed)
        p = np.random.default_rng(seed + 10).standard_normal(9) * 0.5
        fd = central_diff(lambda x: orc.log_density(S, x, t), p, 1e-5 * max(1, S.sigma(t)))
        np.testing.assert_allclose(orc.score(S, p, t), fd, rtol=1e-6, atol=1e-6 * np.abs(fd).max())

    def test_divergence_matches_fd_of_score(self):
        orc = random_mixture(7)
        p = np.random.default_rng(0).standard_normal(9) * 0.5
        t = 0.25
        h = 1e-6
        fd = sum((orc.score(S, p + h * e, t)[i] - orc.score(S, p - h * e, t)[i]) / (2 * h)
                 for i, e in enumerate(np.eye(9)))
        assert orc.divergence(S, p, t) == pytest.approx(fd, rel=1e-6)

    def test_density_integrates_to_one_in_2d(self):
        rng = np.random.default_rng(0)
        orc = GmmOracle(rng.standard_normal((3, 2)), [0.2, 0.5, 0.3], [0.2, 0.5, 0.3])
        g = np.linspace(-6, 6, 801)
        X, Y = np.meshgrid(g, g)
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        dens = np.exp(orc.log_density(S, pts, 0.1))
        total = dens.sum() * (g[1] - g[0]) ** 2
        assert total == pytest.approx(1.0, rel=1e-3)

    def test_score_at_eps_approaches_clean_mixture(self):
        orc = random_mixture(3)
        p = orc.means[0] + 0.05
        # sigma(eps)^2 ~ 1e-4 against component variances >= 0.01
        zero_noise = NoiseSchedule(1e-12, 50.0)
        np.testing.assert_allclose(orc.score(S, p, S.eps_min), orc.score(zero_noise, p, 0.0), rtol=2e-3)

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            GmmOracle(np.zeros((2, 9)), [0.1, 0.1], [0.5, 0.6])
