"""Energy ranking, top-fraction filtering and mean-pooling of pose candidates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as G
from . import seeding
from .errors import ConfigError, EmptyAfterFilter
from .sampler import CandidateSet, OdeConfig, bind, sample_candidates
from .sde import NoiseSchedule
from .synth import denormalize

RANKINGS = ("energy", "random", "gt-oracle")


@dataclass
class AggregationConfig:
    K: int = 50
    delta: float = 0.6
    ranking: str = "energy"

    @property
    def M(self) -> int:
        return math.floor(self.delta * self.K)

    def validate(self) -> "AggregationConfig":
        problems = []
        if self.K < 1:
            problems.append("K must be >= 1")
        if not 0 < self.delta <= 1:
            problems.append("delta must lie in (0, 1]")
        elif not 1 <= self.M <= self.K:
            problems.append(f"floor(delta*K) = {self.M} must be >= 1")
        if self.ranking not in RANKINGS:
            problems.append(f"ranking must be one of {RANKINGS}")
        if problems:
            raise ConfigError(problems)
        return self


@dataclass
class Estimate:
    pose: np.ndarray
    candidates: CandidateSet
    telemetry: dict = field(default_factory=dict)


def pose_errors(pose, gt, sym: G.SymmetrySpec | None = None) -> tuple[float, float]:
    """(symmetry-aware rotation error in degrees, translation error in cm) for normalized poses."""
    pose, gt = np.asarray(pose, dtype=float), np.asarray(gt, dtype=float)
    r = G.symmetry_aware_rotation_error(G.pose_rotation(pose), G.pose_rotation(gt), sym)
    t = G.translation_error(denormalize(pose[6:]), denormalize(gt[6:]))
    return r, t


def composite_distance(pose, gt, sym: G.SymmetrySpec | None = None) -> float:
    """Degrees plus centimeters, weighted 1:1."""
    r, t = pose_errors(pose, gt, sym)
    return r + t


def _energy_fn(energy, cloud):
    f = bind(energy, cloud)
    if not hasattr(f, "energy"):
        raise TypeError("energy ranking needs a field with an .energy(p, t) method")
    return f


def descending_order(values) -> tuple[np.ndarray, np.ndarray]:
    """Stable descending order with non-finite values demoted to the end; returns (order, flags)."""
    v = np.asarray(values, dtype=float)
    bad = ~np.isfinite(v)
    key = np.where(bad, 0.0, -v)
    order = np.lexsort((np.arange(len(v)), key, bad))
    return order, bad


def rank_candidates(cands: CandidateSet, cloud=None, energy=None, ranking: str = "energy", seed: int = 0,
                    gt=None, sym: G.SymmetrySpec | None = None,
                    schedule: NoiseSchedule | None = None) -> CandidateSet:
    """Attach energies (at t = eps) and a ranking permutation to ``cands``."""
    out = CandidateSet(cands.candidates, telemetry=dict(cands.telemetry), raw=cands.raw)
    K = cands.K
    if ranking == "energy":
        f = _energy_fn(energy, cloud)
        schedule = schedule or getattr(f, "schedule", None) or getattr(getattr(f, "net", None), "schedule", None) \
            or NoiseSchedule()
        t = np.full(K, schedule.eps_min)
        with np.errstate(all="ignore"):
            e = np.asarray(f.energy(cands.candidates, t), dtype=float)
        order, bad = descending_order(e)
        out.energies, out.ranking, out.flags = e, order, bad
        out.telemetry["nonfinite_energies"] = int(bad.sum())
    elif ranking == "random":
        out.ranking = seeding.stream(seed, "random-ranking").permutation(K)
        out.flags = np.zeros(K, dtype=bool)
    elif ranking == "gt-oracle":
        if gt is None:
            raise ValueError("gt-oracle ranking needs the ground-truth pose")
        d = np.array([composite_distance(c, gt, sym) for c in cands.candidates])
        # closest first: rank by negated distance
        out.ranking, out.flags = descending_order(-d)
        out.telemetry["gt_distances"] = d
    else:
        raise ValueError(f"ranking must be one of {RANKINGS}")
    out.check()
    return out


def kept_indices(cands: CandidateSet, delta: float) -> np.ndarray:
    if cands.ranking is None:
        raise ValueError("candidates must be ranked before filtering")
    M = math.floor(delta * cands.K)
    if M < 1:
        raise EmptyAfterFilter(f"floor({delta} * {cands.K}) = 0 candidates kept")
    return np.asarray(cands.ranking)[:M]


def aggregate_poses(poses) -> np.ndarray:
    """Arithmetic-mean translation and eigenvector-mean rotation; canonical output."""
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    if len(poses) == 0:
        raise EmptyAfterFilter("no poses to aggregate")
    if np.all(poses == poses[0]):
        return poses[0].copy() if G.is_canonical(poses[0]) else G.canonicalize_pose(poses[0])
    R = G.average_rotations(G.sixd_to_rotation(poses[:, :6]))
    return G.make_pose(R, poses[:, 6:].mean(axis=0))


def rotation_dispersion(poses, center) -> float:
    """Largest angle (degrees) between a pose's rotation and the center rotation."""
    Rc = G.pose_rotation(center)
    return max(G.geodesic_angle(G.pose_rotation(p), Rc) for p in np.atleast_2d(poses))


def filter_and_aggregate(cands: CandidateSet, delta: float = 0.6) -> np.ndarray:
    kept = cands.candidates[kept_indices(cands, delta)]
    return aggregate_poses(kept)


def best_of_k(cands, gt, sym: G.SymmetrySpec | None = None) -> np.ndarray:
    """Candidate with the smallest composite distance to ``gt`` (evaluation only)."""
    arr = cands.candidates if isinstance(cands, CandidateSet) else np.atleast_2d(cands)
    d = [composite_distance(c, gt, sym) for c in arr]
    return arr[int(np.argmin(d))].copy()


def estimate(cloud, score, energy, cfg: AggregationConfig | None = None, ode_cfg: OdeConfig | None = None,
             seed: int = 0, gt=None, sym: G.SymmetrySpec | None = None, cands: CandidateSet | None = None) -> Estimate:
    """Sample, rank, filter and aggregate. Passing ``cands`` skips sampling."""
    cfg = (cfg or AggregationConfig()).validate()
    if cands is None:
        cands = sample_candidates(score, cloud, cfg.K, ode_cfg, seed=seed)
    ranked = rank_candidates(cands, cloud, energy, cfg.ranking, seed, gt, sym)
    idx = kept_indices(ranked, cfg.delta)
    pose = aggregate_poses(ranked.candidates[idx])
    tel = dict(ranked.telemetry)
    tel.update({"K": ranked.K, "M": len(idx), "delta": cfg.delta, "ranking": cfg.ranking,
                "kept_dispersion_deg": rotation_dispersion(ranked.candidates[idx], pose)})
    if ranked.energies is not None:
        tel["energies"] = ranked.energies.tolist()
    return Estimate(pose, ranked, tel)
