import numpy as np
import pytest

from posediff import ode
from posediff.errors import ConfigError, NonFinite, OdeStepUnderflow
from posediff.sampler import (AnalyticScore, OdeConfig, ZeroScore, log_likelihood_ode, sample_candidates,
                              sample_candidates_warm)
from posediff.sde import GmmOracle, NoiseSchedule

S = NoiseSchedule()
CLOUD = np.zeros((32, 3))
MU = np.linspace(-1, 1, 9)


def two_modes():
    return GmmOracle(np.stack([MU, -MU]), [0.3, 0.4], [0.4, 0.6])


def energy_distance(x, y):
    def mean_dist(a, b):
        return np.mean(np.linalg.norm(a[:, None] - b[None], axis=-1))
    return 2 * mean_dist(x, y) - mean_dist(x, x) - mean_dist(y, y)


class TestOdeSolvers:
    def test_exponential_decay(self):
        y, st = ode.dopri5(lambda y, t: -y, np.ones((3, 1)), 0.0, 2.0, 1e-9, 1e-9)
        np.testing.assert_allclose(y, np.exp(-2.0), rtol=1e-7)
        assert st.t_start == 0.0 and st.t_end == 2.0
        assert np.all(st.accepted > 0)

    def test_backward_integration(self):
        y, _ = ode.dopri5(lambda y, t: y * t[:, None], np.ones((1, 1)), 1.0, 0.0, 1e-10, 1e-10)
        np.testing.assert_allclose(y, np.exp(-0.5), rtol=1e-8)

    def test_per_row_step_counts(self):
        rates = np.array([[1.0], [30.0]])
        _, st = ode.dopri5(lambda y, t: -rates[: len(y)] * y if len(y) == 2 else -y * 30.0, np.ones((2, 1)),
                           0.0, 1.0, 1e-8, 1e-8)
        assert st.accepted[1] > st.accepted[0]

    def test_euler_exact_for_linear_in_time(self):
        y, st = ode.euler(lambda y, t: np.ones_like(y), np.zeros((2, 3)), 0.0, 1.0, 10)
        np.testing.assert_allclose(y, 1.0, rtol=1e-12)
        assert st.accepted.tolist() == [10, 10]

    def test_non_finite_raises(self):
        with pytest.raises(NonFinite):
            ode.dopri5(lambda y, t: np.full_like(y, np.nan), np.ones((1, 1)), 0.0, 1.0)

    def test_step_underflow_reports_state(self):
        def blowup(y, t):
            return 1e12 * np.sign(np.sin(1e9 * t))[:, None] * np.ones_like(y)

        with pytest.raises(OdeStepUnderflow) as exc:
            ode.dopri5(blowup, np.ones((1, 1)), 0.0, 1.0, 1e-12, 1e-12)
        assert exc.value.state is not None


class TestTransport:
    def test_single_gaussian_marginal(self):
        s = 0.5
        orc = GmmOracle.single(MU, s)
        K = 2000
        out = sample_candidates(AnalyticScore(orc), CLOUD, K, seed=0, canonicalize=False)
        x = out.candidates
        target_var = s ** 2 + S.sigma(S.eps_min) ** 2
        assert np.all(np.abs(x.mean(axis=0) - MU) < 3 * np.sqrt(target_var) / np.sqrt(K))
        assert np.all(np.abs(x.var(axis=0) / target_var - 1) < 0.10)

    def test_rk45_and_euler_agree_as_steps_grow(self):
        orc = two_modes()
        init = S.sigma_max * np.random.default_rng(1).standard_normal((20, 9))
        a = sample_candidates(AnalyticScore(orc), CLOUD, 20, p_init=init, canonicalize=False)
        errs = []
        for n in (5000, 20000):
            b = sample_candidates(AnalyticScore(orc), CLOUD, 20, OdeConfig("euler-fixed", euler_steps=n),
                                  p_init=init, canonicalize=False)
            errs.append(np.max(np.abs(a.candidates - b.candidates)))
        # first-order Euler: four times the steps, a quarter of the gap
        assert errs[1] < 1.5e-3 and 3.2 < errs[0] / errs[1] < 4.8

    def test_euler_is_first_order(self):
        orc = GmmOracle.single(MU, 0.5)
        init = S.sigma_max * np.random.default_rng(2).standard_normal((5, 9))
        ref = sample_candidates(AnalyticScore(orc), CLOUD, 5, OdeConfig(abs_tol=1e-10, rel_tol=1e-10),
                                p_init=init, canonicalize=False).candidates
        errs = []
        for n in (200, 400, 800):
            x = sample_candidates(AnalyticScore(orc), CLOUD, 5, OdeConfig("euler-fixed", euler_steps=n),
                                  p_init=init, canonicalize=False).candidates
            errs.append(np.max(np.abs(x - ref)))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all((ratios > 1.7) & (ratios < 2.3)), ratios

    def test_tolerance_invariance(self):
        orc = two_modes()
        init = S.sigma_max * np.random.default_rng(3).standard_normal((10, 9))
        loose = sample_candidates(AnalyticScore(orc), CLOUD, 10, OdeConfig(abs_tol=1e-5, rel_tol=1e-5),
                                  p_init=init, canonicalize=False)
        tight = sample_candidates(AnalyticScore(orc), CLOUD, 10, OdeConfig(abs_tol=1e-8, rel_tol=1e-8),
                                  p_init=init, canonicalize=False)
        assert np.max(np.abs(loose.candidates - tight.candidates)) < 1e-3
        assert tight.telemetry["mean_accepted"] > loose.telemetry["mean_accepted"]

    def test_mixture_samples_pass_energy_distance_test(self):
        orc = two_modes()
        K = 300
        x = sample_candidates(AnalyticScore(orc), CLOUD, K, seed=4, canonicalize=False).candidates
        y = orc.sample(None, 0.0, K, np.random.default_rng(5))
        stat = energy_distance(x, y)
        rng = np.random.default_rng(6)
        both = np.concatenate([x, y])
        null = []
        for _ in range(100):
            perm = rng.permutation(2 * K)
            null.append(energy_distance(both[perm[:K]], both[perm[K:]]))
        assert np.mean(np.array(null) >= stat) > 0.01

    def test_zero_score_returns_initial_noise(self):
        out = sample_candidates(ZeroScore(), CLOUD, 7, seed=3, canonicalize=False)
        again = sample_candidates(ZeroScore(), CLOUD, 7, seed=3, canonicalize=False)
        np.testing.assert_array_equal(out.candidates, again.candidates)
        assert np.std(out.candidates) > 10  # still at the sigma_max = 50 prior scale

    def test_seeds_are_per_candidate(self):
        a = sample_candidates(ZeroScore(), CLOUD, 3, seed=9, canonicalize=False).candidates
        b = sample_candidates(ZeroScore(), CLOUD, 5, seed=9, canonicalize=False).candidates
        np.testing.assert_array_equal(a, b[:3])

    def test_canonical_output(self):
        from posediff.geometry import is_canonical
        out = sample_candidates(AnalyticScore(two_modes()), CLOUD, 4, seed=0)
        assert all(is_canonical(c) for c in out.candidates)


class TestWarmStart:
    def test_zero_score_mean_near_previous(self):
        prev = np.concatenate([[1, 0, 0, 0, 1, 0], [0.1, 0.2, 0.3]]).astype(float)
        K = 400
        out = sample_candidates_warm(ZeroScore(), CLOUD, prev, K, seed=1, canonicalize=False)
        np.testing.assert_array_equal(out.candidates, out.telemetry["init"])
        sig = S.sigma(0.1)
        assert np.all(np.abs(out.candidates.mean(axis=0) - prev) < 3 * sig / np.sqrt(K))
        assert out.telemetry["t_start"] == 0.1 and out.telemetry["t_end"] == S.eps_min

    def test_fewer_steps_than_cold(self):
        orc = GmmOracle.single(MU, 0.3)
        cold = sample_candidates(AnalyticScore(orc), CLOUD, 10, seed=0, canonicalize=False)
        warm = sample_candidates_warm(AnalyticScore(orc), CLOUD, MU, 10, seed=0, canonicalize=False)
        assert warm.telemetry["mean_accepted"] < cold.telemetry["mean_accepted"]

    def test_invalid_config(self):
        with pytest.raises(ConfigError) as exc:
            OdeConfig(method="rk4", abs_tol=-1).validate(S)
        assert len(exc.value.problems) == 2


class TestLikelihood:
    def exact_prior(self, orc):
        return lambda p: orc.log_density(S, p, 1.0)

    def test_matches_mixture_density(self):
        orc = two_modes()
        p = orc.sample(None, 0.0, 6, np.random.default_rng(0)) + 0.1
        got = log_likelihood_ode(AnalyticScore(orc), CLOUD, p, OdeConfig(abs_tol=1e-8, rel_tol=1e-8),
                                 prior_logpdf=self.exact_prior(orc))
        np.testing.assert_allclose(got, orc.log_density(S, p, S.eps_min), atol=1e-3)

    def test_default_prior_for_centered_gaussian(self):
        orc = GmmOracle.single(np.zeros(9), 0.5)
        p = np.random.default_rng(1).standard_normal((4, 9)) * 0.5
        got = log_likelihood_ode(AnalyticScore(orc), CLOUD, p, OdeConfig(abs_tol=1e-8, rel_tol=1e-8))
        # N(0, sigma_max^2) versus the true N(0, sigma_max^2 + 0.25) prior differs by < 1e-3
        np.testing.assert_allclose(got, orc.log_density(S, p, S.eps_min), atol=1e-3)

    def test_ordering_agreement_100_pairs(self):
        orc = two_modes()
        rng = np.random.default_rng(2)
        a = orc.sample(None, 0.0, 100, rng) + 0.3 * rng.standard_normal((100, 9))
        b = orc.sample(None, 0.0, 100, rng) + 0.3 * rng.standard_normal((100, 9))
        field = AnalyticScore(orc)
        la = log_likelihood_ode(field, CLOUD, a, prior_logpdf=self.exact_prior(orc))
        lb = log_likelihood_ode(field, CLOUD, b, prior_logpdf=self.exact_prior(orc))
        ta, tb = orc.log_density(S, a, S.eps_min), orc.log_density(S, b, S.eps_min)
        assert np.sum(np.sign(la - lb) == np.sign(ta - tb)) == 100

    def test_hutchinson_close_to_exact_and_seeded(self):
        orc = two_modes()
        p = orc.sample(None, 0.0, 3, np.random.default_rng(3))
        field = AnalyticScore(orc)
        exact = log_likelihood_ode(field, CLOUD, p, prior_logpdf=self.exact_prior(orc))
        h1 = log_likelihood_ode(field, CLOUD, p, divergence="hutchinson", seed=1, prior_logpdf=self.exact_prior(orc))
        h2 = log_likelihood_ode(field, CLOUD, p, divergence="hutchinson", seed=1, prior_logpdf=self.exact_prior(orc))
        np.testing.assert_array_equal(h1, h2)
        assert np.max(np.abs(h1 - exact)) < 0.5

    def test_needs_enough_probes(self):
        with pytest.raises(ValueError):
            log_likelihood_ode(AnalyticScore(two_modes()), CLOUD, np.zeros(9), divergence="hutchinson", n_probes=8)
