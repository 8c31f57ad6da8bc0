"""Variance-exploding noise schedule, denoising targets and Gaussian-mixture oracles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import OutOfRange

POSE_DIM = 9


@dataclass(frozen=True)
class NoiseSchedule:
    sigma_min: float = 0.01
    sigma_max: float = 50.0
    eps_min: float = 1e-5

    def __post_init__(self):
        if not 0.0 < self.sigma_min < self.sigma_max:
            raise ValueError("need 0 < sigma_min < sigma_max")
        if not 0.0 < self.eps_min < 1.0:
            raise ValueError("need 0 < eps_min < 1")

    @property
    def log_ratio(self) -> float:
        return float(np.log(self.sigma_max / self.sigma_min))

    def _check_t(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > 1.0) or not np.all(np.isfinite(t)):
            raise OutOfRange(f"t must lie in [0, 1], got {t}")
        return t

    def sigma(self, t):
        t = self._check_t(t)
        return self.sigma_min * (self.sigma_max / self.sigma_min) ** t

    def sigma_sq_rate(self, t):
        """sigma(t) * dsigma/dt = sigma(t)^2 * ln(sigma_max / sigma_min)."""
        return self.sigma(t) ** 2 * self.log_ratio

    def weight(self, t):
        """DSM weighting lambda(t) = sigma(t)^2."""
        return self.sigma(t) ** 2

    def sample_t(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.eps_min, 1.0, size=size)

    def prior_logpdf(self, p):
        """log N(p; 0, sigma_max^2 I) for rows of ``p``."""
        p = np.asarray(p, dtype=float)
        v = self.sigma_max ** 2
        d = p.shape[-1]
        return -0.5 * np.sum(p * p, axis=-1) / v - 0.5 * d * np.log(2 * np.pi * v)


@dataclass
class DsmTarget:
    perturbed_pose: np.ndarray
    target_score: np.ndarray
    t: float
    weight: float
    clean_pose: np.ndarray


def perturb(schedule: NoiseSchedule, p0, t: float, rng: np.random.Generator, z=None) -> DsmTarget:
    if not schedule.eps_min <= t <= 1.0:
        raise OutOfRange(f"perturbation time must lie in [eps, 1], got {t}")
    p0 = np.asarray(p0, dtype=float)
    if z is None:
        z = rng.standard_normal(p0.shape)
    s = float(schedule.sigma(t))
    pt = p0 + s * z
    return DsmTarget(pt, -z / s, float(t), float(schedule.weight(t)), p0)


def dsm_loss(score_out, target: DsmTarget) -> float:
    diff = np.asarray(score_out, dtype=float) - target.target_score
    return float(target.weight * np.sum(diff * diff))


def dsm_loss_grad(score_out, target: DsmTarget) -> np.ndarray:
    return 2.0 * target.weight * (np.asarray(score_out, dtype=float) - target.target_score)


# ---------------------------------------------------------------- GMM oracle

@dataclass
class GmmOracle:
    """Isotropic Gaussian mixture standing in for p_data(p | O)."""

    means: np.ndarray
    stds: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.stds = np.atleast_1d(np.asarray(self.stds, dtype=float))
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        k = len(self.means)
        if len(self.stds) != k or len(self.weights) != k:
            raise ValueError("means, stds and weights must have equal length")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")
        if np.any(self.stds < 0):
            raise ValueError("component stds must be non-negative")

    @classmethod
    def single(cls, mean, std: float) -> "GmmOracle":
        return cls(np.asarray(mean, dtype=float)[None], [std], [1.0])

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _variances(self, schedule: NoiseSchedule, t):
        s2 = np.asarray(schedule.sigma(t), dtype=float) ** 2
        return self.stds[None, :] ** 2 + np.reshape(s2, (-1, 1))

    def _terms(self, schedule: NoiseSchedule, p, t):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (len(p),))
        v = self._variances(schedule, t)  # (B, K)
        diff = self.means[None, :, :] - p[:, None, :]  # (B, K, D)
        sq = np.sum(diff * diff, axis=-1)
        logc = np.log(self.weights)[None] - 0.5 * sq / v - 0.5 * self.dim * np.log(2 * np.pi * v)
        return diff, v, logc

    def log_density(self, schedule: NoiseSchedule, p, t):
        _, _, logc = self._terms(schedule, p, t)
        out = logsumexp(logc, axis=1)
        return out if np.ndim(p) > 1 else float(out[0])

    def score(self, schedule: NoiseSchedule, p, t):
        diff, v, logc = self._terms(schedule, p, t)
        r = np.exp(logc - logsumexp(logc, axis=1, keepdims=True))
        out = np.einsum("bk,bkd->bd", r / v, diff)
        return out if np.ndim(p) > 1 else out[0]

    def divergence(self, schedule: NoiseSchedule, p, t):
        """Exact trace of the score Jacobian."""
        diff, v, logc = self._terms(schedule, p, t)
        r = np.exp(logc - logsumexp(logc, axis=1, keepdims=True))
        d = diff / v[..., None]
        mean_d = np.einsum("bk,bkd->bd", r, d)
        out = (-np.sum(r * self.dim / v, axis=1) + np.sum(r * np.sum(d * d, axis=-1), axis=1)
               - np.sum(mean_d * mean_d, axis=1))
        return out if np.ndim(p) > 1 else float(out[0])

    def sample(self, schedule: NoiseSchedule | None, t: float, n: int, rng: np.random.Generator):
        """Draws from the perturbed mixture at time ``t`` (unperturbed if schedule is None)."""
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        s2 = 0.0 if schedule is None else float(schedule.sigma(t)) ** 2
        std = np.sqrt(self.stds[comp] ** 2 + s2)
        return self.means[comp] + std[:, None] * rng.standard_normal((n, self.dim))


def gmm_perturbed_score(oracle: GmmOracle, p, t, schedule: NoiseSchedule | None = None):
    return oracle.score(schedule or NoiseSchedule(), p, t)


def gmm_log_density(oracle: GmmOracle, p, t, schedule: NoiseSchedule | None = None):
    return oracle.log_density(schedule or NoiseSchedule(), p, t)
