"""Probability-flow ODE sampling of pose candidates and the ODE likelihood oracle.

A *score field* is any callable ``f(p, t) -> (B, 9)`` on numpy batches. Fields
that also provide ``divergence(p, t)`` (and optionally
``probe_quadratic(p, t, probes)``) can be used for likelihood evaluation.
Network fields are obtained with :func:`bind`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ode, seeding
from .errors import ConfigError, NonFinite
from .geometry import canonicalize_pose
from .sde import GmmOracle, NoiseSchedule

WARM_START_T = 0.1
METHODS = ("rk45-adaptive", "euler-fixed")


@dataclass
class OdeConfig:
    method: str = "rk45-adaptive"
    abs_tol: float = 1e-5
    rel_tol: float = 1e-5
    euler_steps: int = 500
    t_start: float = 1.0
    t_end: float | None = None  # defaults to the schedule's eps

    def resolved_t_end(self, schedule: NoiseSchedule) -> float:
        return schedule.eps_min if self.t_end is None else float(self.t_end)

    def validate(self, schedule: NoiseSchedule) -> "OdeConfig":
        problems = []
        if self.method not in METHODS:
            problems.append(f"method must be one of {METHODS}")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            problems.append("tolerances must be positive")
        if self.euler_steps <= 0:
            problems.append("euler_steps must be positive")
        t_end = self.resolved_t_end(schedule)
        if t_end < schedule.eps_min:
            problems.append("t_end must be >= eps")
        if not self.t_start > t_end:
            problems.append("t_start must exceed t_end")
        if problems:
            raise ConfigError(problems)
        return self


@dataclass
class CandidateSet:
    candidates: np.ndarray
    energies: np.ndarray | None = None
    ranking: np.ndarray | None = None
    flags: np.ndarray | None = None
    telemetry: dict = field(default_factory=dict)
    raw: np.ndarray | None = None

    def __post_init__(self):
        self.candidates = np.atleast_2d(np.asarray(self.candidates, dtype=float))
        if len(self.candidates) < 1:
            raise ValueError("a candidate set needs K >= 1")

    @property
    def K(self) -> int:
        return len(self.candidates)

    def subset(self, idx) -> "CandidateSet":
        idx = np.asarray(idx)
        return CandidateSet(self.candidates[idx].copy(), telemetry=dict(self.telemetry),
                            raw=None if self.raw is None else self.raw[idx].copy())

    def check(self) -> None:
        if self.ranking is not None:
            r = np.asarray(self.ranking)
            if sorted(r.tolist()) != list(range(self.K)):
                raise ValueError("ranking is not a permutation of 0..K-1")
            if self.energies is not None:
                e = np.where(np.isfinite(self.energies), self.energies, -np.inf)[r]
                if np.any(e[1:] > e[:-1]):
                    raise ValueError("energies are not non-increasing along the ranking")


# --------------------------------------------------------------- score fields

class AnalyticScore:
    """Exact score of a perturbed Gaussian mixture, usable as a score field."""

    def __init__(self, oracle: GmmOracle, schedule: NoiseSchedule | None = None):
        self.oracle = oracle
        self.schedule = schedule or NoiseSchedule()

    def __call__(self, p, t):
        return self.oracle.score(self.schedule, p, t)

    def divergence(self, p, t):
        return self.oracle.divergence(self.schedule, p, t)

    def probe_quadratic(self, p, t, probes):
        s = self.schedule
        diff, v, logc = self.oracle._terms(s, p, t)
        r = np.exp(logc - logc.max(axis=1, keepdims=True))
        r /= r.sum(axis=1, keepdims=True)
        d = diff / v[..., None]  # (B, K, D)
        probes = np.asarray(probes)  # (B, P, D)
        vv = np.sum(probes ** 2, axis=-1)  # (B, P)
        dv = np.einsum("bkd,bpd->bkp", d, probes)
        mdv = np.einsum("bk,bkp->bp", r, dv)
        return (-np.einsum("bk,bp->bp", r / v, vv) + np.einsum("bk,bkp->bp", r, dv ** 2) - mdv ** 2)

    def log_density(self, p, t):
        return self.oracle.log_density(self.schedule, p, t)


class ZeroScore:
    def __call__(self, p, t):
        return np.zeros_like(np.asarray(p, dtype=float))

    def divergence(self, p, t):
        return np.zeros(len(p))


def bind(score, cloud):
    """Attach a point cloud to a network; plain callables pass through unchanged."""
    from .net import BoundField, PoseNet

    if isinstance(score, PoseNet):
        return BoundField(score, cloud)
    return score


def _schedule_of(score, schedule):
    if schedule is not None:
        return schedule
    for obj in (score, getattr(score, "net", None)):
        s = getattr(obj, "schedule", None)
        if isinstance(s, NoiseSchedule):
            return s
    return NoiseSchedule()


# ------------------------------------------------------------------ sampling

def _flow(field_fn, schedule: NoiseSchedule):
    def f(p, t):
        return -schedule.sigma_sq_rate(t)[:, None] * field_fn(p, t)
    return f


def integrate_pf_ode(field_fn, p_init, t_start: float, cfg: OdeConfig, schedule: NoiseSchedule):
    t_end = cfg.resolved_t_end(schedule)
    f = _flow(field_fn, schedule)
    if cfg.method == "rk45-adaptive":
        return ode.dopri5(f, p_init, t_start, t_end, cfg.abs_tol, cfg.rel_tol)
    return ode.euler(f, p_init, t_start, t_end, cfg.euler_steps)


def _initial_noise(seed: int, K: int, tag: str) -> np.ndarray:
    return np.stack([seeding.stream(seed, tag, i).standard_normal(9) for i in range(K)])


def _finish(raw: np.ndarray, stats, canonicalize: bool, extra: dict) -> CandidateSet:
    if not np.all(np.isfinite(raw)):
        raise NonFinite("PF-ODE produced non-finite candidates")
    cands = canonicalize_pose(raw) if canonicalize else raw.copy()
    tel = stats.to_dict()
    tel.update(extra)
    return CandidateSet(cands, telemetry=tel, raw=raw)


def sample_candidates(score, cloud, K: int, cfg: OdeConfig | None = None, seed: int = 0,
                      schedule: NoiseSchedule | None = None, canonicalize: bool = True,
                      p_init=None) -> CandidateSet:
    """Cold start: p(1) ~ N(0, sigma_max^2 I), integrated from t=1 down to eps."""
    if K < 1:
        raise ValueError("K must be >= 1")
    cfg = cfg or OdeConfig()
    schedule = _schedule_of(score, schedule)
    cfg.validate(schedule)
    field_fn = bind(score, cloud)
    if p_init is None:
        p_init = float(schedule.sigma(cfg.t_start)) * _initial_noise(seed, K, "cold")
    raw, stats = integrate_pf_ode(field_fn, p_init, cfg.t_start, cfg, schedule)
    return _finish(raw, stats, canonicalize, {"start": "cold", "K": K})


def sample_candidates_warm(score, cloud, p_prev, K: int, cfg: OdeConfig | None = None, seed: int = 0,
                           schedule: NoiseSchedule | None = None, t_start: float = WARM_START_T,
                           canonicalize: bool = True) -> CandidateSet:
    """Warm start: p(0.1) ~ N(p_prev, sigma(0.1)^2 I), integrated from 0.1 down to eps."""
    if K < 1:
        raise ValueError("K must be >= 1")
    cfg = cfg or OdeConfig()
    schedule = _schedule_of(score, schedule)
    warm_cfg = OdeConfig(cfg.method, cfg.abs_tol, cfg.rel_tol, cfg.euler_steps, t_start, cfg.t_end)
    warm_cfg.validate(schedule)
    field_fn = bind(score, cloud)
    p_prev = np.asarray(p_prev, dtype=float)
    p_init = p_prev[None] + float(schedule.sigma(t_start)) * _initial_noise(seed, K, "warm")
    raw, stats = integrate_pf_ode(field_fn, p_init, t_start, warm_cfg, schedule)
    return _finish(raw, stats, canonicalize, {"start": "warm", "K": K, "init": p_init})


# ----------------------------------------------------------------- likelihood

def log_likelihood_ode(score, cloud, p, cfg: OdeConfig | None = None, divergence: str = "exact",
                       n_probes: int = 64, seed: int = 0, schedule: NoiseSchedule | None = None,
                       prior_logpdf=None, return_stats: bool = False):
    """log p_eps(p | O) by integrating the augmented PF-ODE from eps to 1.

    The accumulator integrates -sigma * dsigma/dt * div(score) along the flow;
    the result is ``log p_1(p(1)) + accumulator``. ``prior_logpdf`` defaults to
    the N(0, sigma_max^2 I) prior used by the sampler.
    """
    cfg = cfg or OdeConfig()
    schedule = _schedule_of(score, schedule)
    if divergence not in ("exact", "hutchinson"):
        raise ValueError("divergence must be 'exact' or 'hutchinson'")
    if divergence == "hutchinson" and n_probes < 64:
        raise ValueError("Hutchinson estimation needs at least 64 probes")
    field_fn = bind(score, cloud)
    p = np.atleast_2d(np.asarray(p, dtype=float))
    B = len(p)
    t0 = cfg.resolved_t_end(schedule)
    t1 = 1.0
    if divergence == "hutchinson":
        rng = seeding.stream(seed, "hutchinson")
        probes = rng.choice(np.array([-1.0, 1.0]), size=(B, n_probes, 9))

    def f(y, t, rows=None):
        x = y[:, :9]
        rate = schedule.sigma_sq_rate(t)
        dx = -rate[:, None] * field_fn(x, t)
        if divergence == "exact":
            div = field_fn.divergence(x, t)
        else:
            div = np.mean(field_fn.probe_quadratic(x, t, probes[rows]), axis=1)
        if not np.all(np.isfinite(div)):
            raise NonFinite("divergence estimate is non-finite")
        return np.concatenate([dx, (-rate * div)[:, None]], axis=1)

    y0 = np.concatenate([p, np.zeros((B, 1))], axis=1)
    if divergence == "hutchinson":
        # probes are fixed per trajectory, so integrate rows one at a time
        outs, steps = [], []
        for i in range(B):
            yi, st = _integrate_aug(lambda y, t, i=i: f(y, t, rows=np.full(len(y), i)), y0[i:i + 1], t0, t1, cfg)
            outs.append(yi[0])
            steps.append(st.accepted[0])
        y1 = np.stack(outs)
        stats = {"accepted": steps}
    else:
        y1, st = _integrate_aug(f, y0, t0, t1, cfg)
        stats = st.to_dict()
    prior = (prior_logpdf or schedule.prior_logpdf)(y1[:, :9])
    out = prior + y1[:, 9]
    if return_stats:
        return out, stats
    return out


def _integrate_aug(f, y0, t0, t1, cfg: OdeConfig):
    if cfg.method == "rk45-adaptive":
        return ode.dopri5(f, y0, t0, t1, cfg.abs_tol, cfg.rel_tol)
    return ode.euler(f, y0, t0, t1, cfg.euler_steps)
