"""Symmetry-aware accuracy, ranking ablations, energy-error correlation and SO(3) exports.

Every CSV written here starts with a ``# format_version=<n>`` comment line,
followed by a header row.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import geometry as G
from . import seeding
from .errors import DegenerateVariance, EmptyResults
from .estimator import aggregate_poses, best_of_k, composite_distance, descending_order, pose_errors, \
    rank_candidates
from .sampler import CandidateSet, OdeConfig, sample_candidates

CSV_FORMAT_VERSION = 1
GIMBAL_PITCH_DEG = 89.9


@dataclass(frozen=True)
class MetricThreshold:
    rot_deg: float
    trans_cm: float

    def __post_init__(self):
        if not (self.rot_deg > 0 and self.trans_cm > 0):
            raise ValueError("thresholds must be positive")

    @property
    def label(self) -> str:
        return f"{self.rot_deg:g}deg{self.trans_cm:g}cm"

    @classmethod
    def parse(cls, text: str) -> "MetricThreshold":
        rot, trans = text.replace("cm", "").split("deg")
        return cls(float(rot), float(trans))


STANDARD_THRESHOLDS = (MetricThreshold(5, 2), MetricThreshold(5, 5), MetricThreshold(10, 2), MetricThreshold(10, 5))


@dataclass
class PoseResult:
    pred: np.ndarray
    gt: np.ndarray
    sym: G.SymmetrySpec | None = None
    category: str = "all"

    def errors(self) -> tuple[float, float]:
        return pose_errors(self.pred, self.gt, self.sym)


def _as_results(results) -> list[PoseResult]:
    out = [r if isinstance(r, PoseResult) else PoseResult(*r) for r in results]
    if not out:
        raise EmptyResults("no results to evaluate")
    return out


def _hits(errs, th: MetricThreshold) -> np.ndarray:
    e = np.asarray(errs, dtype=float).reshape(-1, 2)
    return (e[:, 0] < th.rot_deg) & (e[:, 1] < th.trans_cm)


def per_category_accuracy(results, th: MetricThreshold, errors=None) -> dict[str, float]:
    results = _as_results(results)
    errs = np.array([r.errors() for r in results]) if errors is None else np.asarray(errors)
    hits = _hits(errs, th)
    cats = sorted({r.category for r in results})
    return {c: float(np.mean([h for h, r in zip(hits, results) if r.category == c])) for c in cats}


def accuracy_at(results, th: MetricThreshold, errors=None) -> float:
    """Fraction with rotation error < rot_deg and translation error < trans_cm, macro-averaged over categories."""
    return float(np.mean(list(per_category_accuracy(results, th, errors).values())))


@dataclass
class CorrelationReport:
    rho_rot: float
    rho_trans: float
    n: int
    binned: list[tuple[float, float, float, int]] = field(default_factory=list)


@dataclass
class EvalReport:
    per_category: dict[str, dict[str, float]]
    mean: dict[str, float]
    rot_err_mean: float
    rot_err_median: float
    trans_err_mean: float
    trans_err_median: float
    correlation: CorrelationReport | None = None
    config: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        labels = list(self.mean)
        rows = [{"category": c, **{k: f"{v[k]:.6f}" for k in labels}} for c, v in self.per_category.items()]
        rows.append({"category": "mean", **{k: f"{self.mean[k]:.6f}" for k in labels}})
        return rows

    def to_csv(self, path) -> None:
        rows = self.rows()
        extra = [("rot_err_mean_deg", self.rot_err_mean), ("rot_err_median_deg", self.rot_err_median),
                 ("trans_err_mean_cm", self.trans_err_mean), ("trans_err_median_cm", self.trans_err_median)]
        if self.correlation is not None:
            extra += [("spearman_rot", self.correlation.rho_rot), ("spearman_trans", self.correlation.rho_trans)]
        buf = io.StringIO()
        buf.write(f"# format_version={CSV_FORMAT_VERSION}\n")
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        buf.write("\nstatistic,value\n")
        for k, v in extra:
            buf.write(f"{k},{v:.6f}\n")
        Path(path).write_text(buf.getvalue())


def evaluate_results(results, thresholds=STANDARD_THRESHOLDS, correlation: CorrelationReport | None = None,
                     config: dict | None = None) -> EvalReport:
    results = _as_results(results)
    errs = np.array([r.errors() for r in results])
    per_cat: dict[str, dict[str, float]] = {}
    mean = {}
    for th in thresholds:
        pc = per_category_accuracy(results, th, errs)
        for c, v in pc.items():
            per_cat.setdefault(c, {})[th.label] = v
        mean[th.label] = float(np.mean(list(pc.values())))
    return EvalReport(per_cat, mean, float(errs[:, 0].mean()), float(np.median(errs[:, 0])),
                      float(errs[:, 1].mean()), float(np.median(errs[:, 1])), correlation, dict(config or {}))


# ------------------------------------------------------------- correlation

def _spearman(x, y) -> float:
    return float(stats.spearmanr(x, y).statistic)


def energy_error_correlation(energies, rot_err, trans_err=None, csv_path=None, n_bins: int = 10,
                             min_samples: int = 30) -> CorrelationReport:
    e = np.asarray(energies, dtype=float)
    r = np.asarray(rot_err, dtype=float)
    tr = np.zeros_like(r) if trans_err is None else np.asarray(trans_err, dtype=float)
    if len(e) < min_samples:
        raise EmptyResults(f"need at least {min_samples} samples, got {len(e)}")
    if np.all(e == e[0]):
        raise DegenerateVariance("all energies are equal")
    rho_r = _spearman(e, r) if np.ptp(r) > 0 else float("nan")
    rho_t = _spearman(e, tr) if np.ptp(tr) > 0 else float("nan")
    edges = np.quantile(e, np.linspace(0, 1, n_bins + 1))
    which = np.clip(np.searchsorted(edges, e, side="right") - 1, 0, n_bins - 1)
    binned = []
    for b in range(n_bins):
        m = which == b
        if m.any():
            binned.append((float(e[m].mean()), float(r[m].mean()), float(tr[m].mean()), int(m.sum())))
    if csv_path is not None:
        lines = [f"# format_version={CSV_FORMAT_VERSION}", "kind,energy,rot_err_deg,trans_err_cm,count"]
        lines += [f"raw,{a:.9g},{b:.9g},{c:.9g},1" for a, b, c in zip(e, r, tr)]
        lines += [f"bin,{a:.9g},{b:.9g},{c:.9g},{n}" for a, b, c, n in binned]
        Path(csv_path).write_text("\n".join(lines) + "\n")
    return CorrelationReport(rho_r, rho_t, len(e), binned)


# ------------------------------------------------------------ SO(3) export

def so3_rows(rotations, gt) -> list[tuple[float, float, float, int, int]]:
    rows = []
    for R, is_gt in [(R, 0) for R in rotations] + [(gt, 1)]:
        yaw, pitch, roll = G.euler_zyx(G.check_rotation(R))
        rows.append((yaw, pitch, roll, is_gt, int(abs(pitch) > GIMBAL_PITCH_DEG)))
    return rows


def _svg(rows, size: int = 480) -> str:
    pad = 40
    w, h = size, size // 2

    def xy(yaw, pitch):
        # pitch as longitude (x), yaw as latitude (y)
        return pad + (pitch + 90) / 180 * w, pad + (180 - yaw) / 360 * h

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w + 2 * pad}" height="{h + 2 * pad}">',
             f'<rect x="{pad}" y="{pad}" width="{w}" height="{h}" fill="none" stroke="black"/>',
             f'<text x="{pad}" y="{pad - 10}" font-size="12">yaw (vertical) vs pitch (horizontal); '
             f'color = roll</text>']
    for yaw, pitch, roll, is_gt, _ in rows:
        x, y = xy(yaw, pitch)
        if is_gt:
            parts.append(f'<path d="M{x - 6:.1f},{y:.1f}h12M{x:.1f},{y - 6:.1f}v12" stroke="black" stroke-width="2"/>')
        else:
            hue = (roll + 180) % 360
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="hsl({hue:.0f},80%,45%)"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_so3_scatter(rotations, gt, path, svg_path=None) -> list[tuple]:
    """CSV of ZYX Euler angles (degrees) for sampled rotations plus the ground truth, and an SVG plot."""
    rows = so3_rows(rotations, gt)
    lines = [f"# format_version={CSV_FORMAT_VERSION}", "yaw_deg,pitch_deg,roll_deg,is_gt,gimbal"]
    lines += [f"{a:.6f},{b:.6f},{c:.6f},{d},{g}" for a, b, c, d, g in rows]
    Path(path).write_text("\n".join(lines) + "\n")
    svg_path = Path(path).with_suffix(".svg") if svg_path is None else Path(svg_path)
    svg_path.write_text(_svg(rows))
    return rows


def orbit_coverage(rotations, gt, axis=(0.0, 0.0, 1.0)) -> tuple[float, float]:
    """(span, largest gap) in degrees of twist angles about the symmetry axis relative to ``gt``."""
    tw = np.sort([G.twist_angle(G.check_rotation(gt).T @ G.check_rotation(R), axis) for R in rotations])
    gaps = np.diff(np.concatenate([tw, [tw[0] + 360.0]]))
    max_gap = float(gaps.max())
    return 360.0 - max_gap, max_gap


# -------------------------------------------------------------- ablations

@dataclass
class SceneCandidates:
    """A scene with a fixed, energy-scored candidate pool reused across ablation cells."""

    candidates: np.ndarray
    energies: np.ndarray
    gt: np.ndarray
    sym: G.SymmetrySpec | None
    category: str
    seed: int

    def first(self, K: int) -> CandidateSet:
        return CandidateSet(self.candidates[:K], energies=self.energies[:K])


def collect_candidates(scenes, score, energy, K: int, ode_cfg: OdeConfig | None = None, seed: int = 0,
                       on_scene=None) -> list[SceneCandidates]:
    """``scenes`` are SceneSample-like objects with cloud, gt_pose, symmetry and category."""
    out = []
    for i, s in enumerate(scenes):
        sseed = seeding.child_seed(seed, "scene", i)
        cands = sample_candidates(score, s.cloud, K, ode_cfg, seed=sseed)
        ranked = rank_candidates(cands, s.cloud, energy, "energy")
        out.append(SceneCandidates(cands.candidates, ranked.energies, s.gt_pose, s.symmetry, s.category, sseed))
        if on_scene is not None:
            on_scene(i, cands)
    return out


def select(sc: SceneCandidates, K: int, delta: float, ranking: str) -> np.ndarray:
    cands = sc.candidates[:K]
    if ranking == "energy":
        order, _ = descending_order(sc.energies[:K])
    elif ranking == "random":
        order = seeding.stream(sc.seed, "random-ranking", K).permutation(K)
    elif ranking == "gt-oracle":
        order, _ = descending_order([-composite_distance(c, sc.gt, sc.sym) for c in cands])
    else:
        raise ValueError(f"unknown ranking {ranking!r}")
    M = math.floor(delta * K)
    if M < 1:
        raise ValueError("floor(delta*K) must be >= 1")
    return aggregate_poses(cands[order[:M]])


def _acc(pool, poses, th) -> float:
    return accuracy_at([PoseResult(p, sc.gt, sc.sym, sc.category) for p, sc in zip(poses, pool)], th)


@dataclass
class AblationTable:
    Ks: tuple[int, ...]
    deltas: tuple[float, ...]
    cells: dict[tuple[int, float], float]
    threshold: MetricThreshold

    def to_csv(self, path) -> None:
        lines = [f"# format_version={CSV_FORMAT_VERSION}",
                 "K," + ",".join(f"delta={d:g}" for d in self.deltas)]
        for K in self.Ks:
            lines.append(f"{K}," + ",".join(f"{self.cells[(K, d)]:.6f}" for d in self.deltas))
        Path(path).write_text("\n".join(lines) + "\n")


def ablation_grid(pool: list[SceneCandidates], Ks=(10, 50, 100), deltas=(0.2, 0.4, 0.6, 0.8, 1.0),
                  threshold: MetricThreshold = MetricThreshold(10, 2), ranking: str = "energy") -> AblationTable:
    """Accuracy per (K, delta) cell on nested candidate pools (first K of each scene's pool)."""
    if not pool:
        raise EmptyResults("no scenes")
    kmax = min(len(sc.candidates) for sc in pool)
    if max(Ks) > kmax:
        raise ValueError(f"candidate pools hold {kmax} candidates, fewer than K={max(Ks)}")
    cells = {}
    for K in Ks:
        for d in deltas:
            cells[(K, d)] = _acc(pool, [select(sc, K, d, ranking) for sc in pool], threshold)
    return AblationTable(tuple(Ks), tuple(deltas), cells, threshold)


def ranking_comparison(pool: list[SceneCandidates], K: int = 50, delta: float = 0.6,
                       threshold: MetricThreshold = MetricThreshold(10, 2)) -> dict[str, float]:
    """Accuracy of ranking and selection modes on identical candidate sets."""
    out = {
        "random-single": _acc(pool, [select(sc, K, 1.0 / K, "random") for sc in pool], threshold),
        "random-mean": _acc(pool, [select(sc, K, delta, "random") for sc in pool], threshold),
        "energy-mean": _acc(pool, [select(sc, K, delta, "energy") for sc in pool], threshold),
        "gt-oracle-mean": _acc(pool, [select(sc, K, delta, "gt-oracle") for sc in pool], threshold),
        "mean-all": _acc(pool, [select(sc, K, 1.0, "energy") for sc in pool], threshold),
    }
    for k in sorted({10, K}):
        out[f"best-of-{k}"] = _acc(pool, [best_of_k(sc.candidates[:k], sc.gt, sc.sym) for sc in pool], threshold)
    return out


def write_comparison_csv(rows: dict[str, float], path) -> None:
    lines = [f"# format_version={CSV_FORMAT_VERSION}", "mode,accuracy"]
    lines += [f"{k},{v:.6f}" for k, v in rows.items()]
    Path(path).write_text("\n".join(lines) + "\n")
