"""Synthetic partial-view point clouds of parametric shapes with known symmetry.

Shapes are built as triangle meshes in an object frame whose z-axis is the
symmetry axis (when there is one), sampled densely by area, posed, culled with
spherical-flip hidden point removal, and reduced to exactly N points with
farthest point sampling. All lengths are meters until :func:`normalize`.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

from . import geometry as G
from . import seeding
from .errors import DatasetError, InsufficientVisible, UnknownCategory

FORMAT_VERSION = 1
SCENE_HALF_EXTENT = 0.3  # meters; maps to [-1, 1] normalized units
NOISE_STD = 0.002  # normalized units
HANDLE_MIN_POINTS = 5
CAMERA_POSITION = (0.0, 0.0, 0.8)  # meters, scene frame
HPR_EXPONENT = 2.0
CATEGORIES = ("cylinder", "bowl", "box", "mug")

PARAM_RANGES: dict[str, dict[str, tuple[float, float]]] = {
    # capped bottle: cylinder body, conical shoulder, narrow neck
    "cylinder": {"radius": (0.03, 0.05), "height": (0.12, 0.22), "shoulder": (0.6, 0.75),
                 "neck_ratio": (0.3, 0.45)},
    "bowl": {"radius": (0.06, 0.09), "depth_ratio": (0.45, 0.7), "foot_ratio": (0.3, 0.45)},
    # open tray with a lid hinged on the +y top edge
    "box": {"width": (0.08, 0.14), "depth": (0.06, 0.1), "height": (0.03, 0.06),
            "lid_angle_deg": (100.0, 130.0)},
    "mug": {"radius": (0.035, 0.05), "height": (0.08, 0.12), "flare": (1.05, 1.2),
            "handle_major": (0.022, 0.032), "handle_minor": (0.005, 0.009)},
}


def normalize(t_metric):
    return np.asarray(t_metric, dtype=float) / SCENE_HALF_EXTENT


def denormalize(t_norm):
    return np.asarray(t_norm, dtype=float) * SCENE_HALF_EXTENT


@dataclass
class ShapeTemplate:
    category: str
    params: dict[str, float]

    @property
    def symmetry(self) -> G.SymmetrySpec:
        """Symmetry of the full shape; mugs resolve per view (see render_partial)."""
        if self.category in ("cylinder", "bowl"):
            return G.SymmetrySpec.about_z()
        return G.SymmetrySpec.none()


@dataclass
class SceneSample:
    cloud: np.ndarray
    gt_pose: np.ndarray
    symmetry: G.SymmetrySpec
    category: str
    handle_visible: bool
    seed: int
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        rec = {
            "category": self.category,
            "points": self.cloud.tolist(),
            "gt_rot6d": self.gt_pose[:6].tolist(),
            "gt_trans": self.gt_pose[6:].tolist(),
            "sym": self.symmetry.to_dict(),
            "handle_visible": bool(self.handle_visible),
            "seed": int(self.seed),
        }
        rec.update(self.extra)
        return json.dumps(rec, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "SceneSample":
        d = json.loads(line)
        extra = {k: v for k, v in d.items()
                 if k not in ("category", "points", "gt_rot6d", "gt_trans", "sym", "handle_visible", "seed")}
        return cls(np.asarray(d["points"], dtype=float),
                   np.asarray(d["gt_rot6d"] + d["gt_trans"], dtype=float),
                   G.SymmetrySpec.from_dict(d["sym"]), d["category"], bool(d["handle_visible"]),
                   int(d["seed"]), extra)

    @property
    def rotation(self) -> np.ndarray:
        return G.sixd_to_rotation(self.gt_pose[:6])


# --------------------------------------------------------------------- meshes

def sample_instance(category: str, rng: np.random.Generator) -> ShapeTemplate:
    if category not in PARAM_RANGES:
        raise UnknownCategory(f"unknown category {category!r}; expected one of {CATEGORIES}")
    params = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in PARAM_RANGES[category].items()}
    return ShapeTemplate(category, params)


def _revolve(profile, segments: int = 512):
    """Triangles of a surface of revolution about z from an (r, z) polyline."""
    profile = np.asarray(profile, dtype=float)
    th = np.linspace(0.0, 2 * np.pi, segments + 1)
    ring = np.stack([profile[:, 0:1] * np.cos(th), profile[:, 0:1] * np.sin(th),
                     np.repeat(profile[:, 1:2], segments + 1, axis=1)], axis=-1)  # (P, S+1, 3)
    a, b = ring[:-1, :-1], ring[:-1, 1:]
    c, d = ring[1:, :-1], ring[1:, 1:]
    tris = np.concatenate([np.stack([a, b, d], -2).reshape(-1, 3, 3),
                           np.stack([a, d, c], -2).reshape(-1, 3, 3)])
    return tris


def _quad(p0, p1, p2, p3):
    return np.array([[p0, p1, p2], [p0, p2, p3]], dtype=float)


def _torus_arc(center, major, minor, phi0, phi1, nu=24, nv=12):
    """Half-torus in the xz-plane (handle), swept over angle [phi0, phi1]."""
    u = np.linspace(phi0, phi1, nu + 1)
    v = np.linspace(0, 2 * np.pi, nv + 1)
    U, V = np.meshgrid(u, v, indexing="ij")
    x = center[0] + (major + minor * np.cos(V)) * np.cos(U)
    y = center[1] + minor * np.sin(V)
    z = center[2] + (major + minor * np.cos(V)) * np.sin(U)
    grid = np.stack([x, y, z], axis=-1)
    a, b, c, d = grid[:-1, :-1], grid[:-1, 1:], grid[1:, :-1], grid[1:, 1:]
    return np.concatenate([np.stack([a, b, d], -2).reshape(-1, 3, 3),
                           np.stack([a, d, c], -2).reshape(-1, 3, 3)])


def build_mesh(template: ShapeTemplate) -> tuple[np.ndarray, np.ndarray]:
    """Triangles (T, 3, 3) in the object frame and a per-triangle part label (1 = handle)."""
    p = template.params
    cat = template.category
    if cat == "cylinder":
        r, h = p["radius"], p["height"]
        zs = -h / 2 + p["shoulder"] * h
        rn = p["neck_ratio"] * r
        zn = zs + 0.6 * (h / 2 - zs)
        profile = [(0.0, -h / 2), (r, -h / 2), (r, zs), (rn, zn), (rn, h / 2), (0.0, h / 2)]
        tris = _revolve(profile)
    elif cat == "bowl":
        R = p["radius"]
        depth = p["depth_ratio"] * R
        phi = np.linspace(0.0, np.pi / 2, 12)
        foot = p["foot_ratio"] * R
        # shell from the foot rim up to the open top rim; flat foot disk at the bottom
        rs = foot + (R - foot) * np.sin(phi)
        zs = -depth / 2 + depth * (1 - np.cos(phi))
        profile = [(0.0, -depth / 2)] + list(zip(rs, zs))
        tris = _revolve(profile)
    elif cat == "box":
        w, d, h = p["width"], p["depth"], p["height"]
        x0, x1, y0, y1, z0, z1 = -w / 2, w / 2, -d / 2, d / 2, -h / 2, h / 2
        faces = [
            _quad((x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0)),  # bottom
            _quad((x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1)),  # -y wall
            _quad((x0, y1, z0), (x1, y1, z0), (x1, y1, z1), (x0, y1, z1)),  # +y wall
            _quad((x0, y0, z0), (x0, y1, z0), (x0, y1, z1), (x0, y0, z1)),  # -x wall
            _quad((x1, y0, z0), (x1, y1, z0), (x1, y1, z1), (x1, y0, z1)),  # +x wall
        ]
        a = np.radians(p["lid_angle_deg"])
        # lid rotated about the hinge line y=y1, z=z1; closed lid would cover the tray
        tip = (y1 - d * np.cos(a), z1 + d * np.sin(a))
        faces.append(_quad((x0, y1, z1), (x1, y1, z1), (x1, tip[0], tip[1]), (x0, tip[0], tip[1])))
        tris = np.concatenate(faces)
    elif cat == "mug":
        r, h = p["radius"], p["height"]
        rt = r * p["flare"]
        profile = [(0.0, -h / 2), (r, -h / 2), (rt, h / 2)]
        body = _revolve(profile)
        a, b = p["handle_major"], p["handle_minor"]
        rmid = 0.5 * (r + rt)
        handle = _torus_arc((rmid, 0.0, 0.0), a, b, -np.pi / 2, np.pi / 2)
        tris = np.concatenate([body, handle])
        labels = np.concatenate([np.zeros(len(body), dtype=int), np.ones(len(handle), dtype=int)])
        return tris, labels
    else:
        raise UnknownCategory(cat)
    return tris, np.zeros(len(tris), dtype=int)


def sample_surface(tris: np.ndarray, labels: np.ndarray, n: int, rng: np.random.Generator):
    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    area = 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)
    idx = rng.choice(len(tris), size=n, p=area / area.sum())
    u, v = rng.random(n), rng.random(n)
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    pts = v0[idx] + u[:, None] * (v1[idx] - v0[idx]) + v[:, None] * (v2[idx] - v0[idx])
    return pts, labels[idx]


def hidden_point_removal(points: np.ndarray, camera: np.ndarray, exponent: float = HPR_EXPONENT) -> np.ndarray:
    """Indices of points visible from ``camera`` (spherical flip + convex hull)."""
    P = points - camera
    norms = np.linalg.norm(P, axis=1)
    R = norms.max() * 10.0 ** exponent
    flipped = P + 2.0 * (R - norms)[:, None] * P / norms[:, None]
    hull = ConvexHull(np.vstack([flipped, np.zeros((1, 3))]))
    verts = hull.vertices
    return np.sort(verts[verts < len(points)])


def farthest_point_sampling(points: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    m = len(points)
    chosen = np.empty(n, dtype=int)
    chosen[0] = int(rng.integers(m))
    dist = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for i in range(1, n):
        chosen[i] = int(np.argmax(dist))
        dist = np.minimum(dist, np.sum((points - points[chosen[i]]) ** 2, axis=1))
    return chosen


@dataclass
class RenderConfig:
    n_points: int = 1024
    dense_factor: int = 16
    noise_std: float = NOISE_STD
    handle_min_points: int = HANDLE_MIN_POINTS
    camera_distance: float = 0.5

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def visible_surface(template: ShapeTemplate, gt_pose, viewpoint, rng: np.random.Generator, n_dense: int,
                    camera_distance: float = 0.5):
    """Noise-free dense visible surface points (normalized units) and their part labels."""
    viewpoint = np.asarray(viewpoint, dtype=float)
    if abs(np.linalg.norm(viewpoint) - 1.0) > 1e-6:
        raise ValueError("viewpoint must be a unit vector")
    gt_pose = np.asarray(gt_pose, dtype=float)
    R = G.sixd_to_rotation(gt_pose[:6])
    t_metric = denormalize(gt_pose[6:])
    tris, labels = build_mesh(template)
    pts_obj, lab = sample_surface(tris, labels, n_dense, rng)
    pts = pts_obj @ R.T + t_metric
    vis = hidden_point_removal(pts, t_metric + camera_distance * viewpoint)
    return normalize(pts[vis]), lab[vis]


def render_partial(template: ShapeTemplate, gt_pose, viewpoint, rng: np.random.Generator,
                   cfg: RenderConfig | None = None, noise: bool = True, dense: int | None = None):
    """Partial cloud (N, 3) in normalized units, the handle visibility flag and render info.

    ``gt_pose`` is a 9D pose with normalized translation; ``viewpoint`` is the
    unit direction from the object origin to the camera.
    """
    cfg = cfg or RenderConfig()
    N = cfg.n_points
    vis_pts, vis_lab = visible_surface(template, gt_pose, viewpoint, rng, dense or cfg.dense_factor * N,
                                       cfg.camera_distance)
    if len(vis_pts) < N / 4:
        raise InsufficientVisible(f"only {len(vis_pts)} visible points for N={N}")
    if len(vis_pts) >= N:
        sel = farthest_point_sampling(vis_pts, N, rng)
    else:
        # too few visible points for a full FPS: repeat the FPS order cyclically
        order = farthest_point_sampling(vis_pts, len(vis_pts), rng)
        sel = np.resize(order, N)
    cloud = vis_pts[sel]
    if noise and cfg.noise_std > 0:
        cloud = cloud + cfg.noise_std * rng.standard_normal(cloud.shape)
    # visibility judged on what the network observes
    handle_pts = int(np.sum(vis_lab[sel] == 1))
    handle_visible = template.category == "mug" and handle_pts >= cfg.handle_min_points
    return cloud, handle_visible, {"visible_dense": int(len(vis_pts)), "handle_points": handle_pts}


def resolve_symmetry(template: ShapeTemplate, handle_visible: bool) -> G.SymmetrySpec:
    if template.category == "mug":
        return G.SymmetrySpec.none() if handle_visible else G.SymmetrySpec.about_z()
    return template.symmetry


# -------------------------------------------------------------------- dataset

@dataclass
class DatasetSpec:
    counts: dict[str, int]
    seed: int = 0
    render: RenderConfig = field(default_factory=RenderConfig)
    camera_position: tuple[float, float, float] = CAMERA_POSITION

    def validate(self):
        bad = [c for c in self.counts if c not in CATEGORIES]
        if bad:
            raise UnknownCategory(f"unknown categories {bad}")
        if any(v < 1 for v in self.counts.values()):
            raise ValueError("per-category counts must be >= 1")
        return self

    def manifest(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "seed": self.seed,
            "counts": dict(self.counts),
            "param_ranges": {k: {p: list(r) for p, r in v.items()} for k, v in PARAM_RANGES.items()},
            "scene_half_extent_m": SCENE_HALF_EXTENT,
            "camera_position_m": list(self.camera_position),
            "render": self.render.to_dict(),
            "rotation_sampling": "haar-quaternion",
        }


def random_translation(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-SCENE_HALF_EXTENT, SCENE_HALF_EXTENT, 3)


def make_scene(category: str, seed: int, render: RenderConfig | None = None,
               camera_position=CAMERA_POSITION, R=None, t_metric=None, template=None,
               max_tries: int = 20) -> SceneSample:
    """One SceneSample; the camera sits at a fixed scene position."""
    rng = seeding.stream(seed, "scene")
    template = template or sample_instance(category, rng)
    for _ in range(max_tries):
        R_i = G.random_rotation(rng) if R is None else np.asarray(R, dtype=float)
        t_i = random_translation(rng) if t_metric is None else np.asarray(t_metric, dtype=float)
        view = np.asarray(camera_position) - t_i
        dist = float(np.linalg.norm(view))
        cfg = render or RenderConfig()
        cfg = RenderConfig(cfg.n_points, cfg.dense_factor, cfg.noise_std, cfg.handle_min_points, dist)
        pose = np.concatenate([G.rotation_to_sixd(R_i), normalize(t_i)])
        try:
            cloud, hv, info = render_partial(template, pose, view / dist, rng, cfg)
        except InsufficientVisible:
            if R is not None and t_metric is not None:
                raise
            continue
        cloud = np.round(cloud, 6)
        sym = resolve_symmetry(template, hv)
        return SceneSample(cloud, pose, sym, category, hv, seed)
    raise InsufficientVisible(f"no valid view after {max_tries} attempts (seed {seed})")


def _record(args) -> str:
    category, seed, render, cam = args
    return make_scene(category, seed, render, cam).to_json()


def record_plan(spec: DatasetSpec) -> list[tuple[str, int]]:
    cats = [c for c in CATEGORIES if c in spec.counts for _ in range(spec.counts[c])]
    order = seeding.stream(spec.seed, "order").permutation(len(cats))
    return [(cats[j], seeding.child_seed(spec.seed, "record", i)) for i, j in enumerate(order)]


def generate_records(spec: DatasetSpec, workers: int = 1) -> list[str]:
    spec.validate()
    jobs = [(c, s, spec.render, spec.camera_position) for c, s in record_plan(spec)]
    if workers <= 1:
        return [_record(j) for j in jobs]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(_record, jobs, chunksize=16))


def generate_dataset(spec: DatasetSpec, out_path, workers: int = 1) -> dict:
    """Write JSON-lines records and ``<out>.manifest.json``; returns the manifest."""
    out_path = Path(out_path)
    lines = generate_records(spec, workers)
    data = ("\n".join(lines) + "\n").encode("utf-8")
    out_path.write_bytes(data)
    manifest = spec.manifest()
    manifest["records"] = len(lines)
    manifest["sha256"] = hashlib.sha256(data).hexdigest()
    manifest_path(out_path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def manifest_path(out_path) -> Path:
    out_path = Path(out_path)
    return out_path.with_name(out_path.name + ".manifest.json")


def spec_from_manifest(manifest: dict) -> DatasetSpec:
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetError(f"unsupported dataset format_version {manifest.get('format_version')}")
    return DatasetSpec(dict(manifest["counts"]), int(manifest["seed"]), RenderConfig(**manifest["render"]),
                       tuple(manifest["camera_position_m"]))


def load_dataset(path) -> list[SceneSample]:
    path = Path(path)
    out = []
    try:
        with path.open() as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    out.append(SceneSample.from_json(line))
                except (ValueError, KeyError, TypeError) as exc:
                    raise DatasetError(f"{path}:{lineno}: malformed record ({exc})") from exc
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    return out


def write_samples(samples, path) -> None:
    Path(path).write_text("".join(s.to_json() + "\n" for s in samples))


# ----------------------------------------------------------------- trajectories

def make_trajectory(category: str, seed: int, n_frames: int = 50, render: RenderConfig | None = None,
                    deg_per_frame: float = 2.0, trans_per_frame: float = 0.004, static: bool = False):
    """Smoothly moving (or static) object; translation step in normalized units."""
    rng = seeding.stream(seed, "trajectory")
    template = sample_instance(category, rng)
    R0 = G.random_rotation(rng)
    t0 = rng.uniform(-0.15, 0.15, 3)
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    vel = rng.standard_normal(3)
    vel *= trans_per_frame / np.linalg.norm(vel)
    frames = []
    for k in range(n_frames):
        if static:
            R_k, t_k = R0, t0
        else:
            R_k = G.axis_angle_to_rotation(axis, np.radians(deg_per_frame * k)) @ R0
            t_k = t0 + vel * k
        s = make_scene(category, seeding.child_seed(seed, "frame", k), render, R=R_k,
                       t_metric=denormalize(t_k), template=template)
        s.extra["frame"] = k
        frames.append(s)
    return frames


def write_trajectory(frames, path) -> None:
    lines = []
    for k, s in enumerate(frames):
        lines.append(json.dumps({"frame": k, "points": s.cloud.tolist(), "gt_rot6d": s.gt_pose[:6].tolist(),
                                 "gt_trans": s.gt_pose[6:].tolist(), "category": s.category,
                                 "sym": s.symmetry.to_dict()}, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trajectory(path) -> list[SceneSample]:
    frames = []
    path = Path(path)
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                frames.append(SceneSample(np.asarray(d["points"], dtype=float),
                                          np.asarray(d["gt_rot6d"] + d["gt_trans"], dtype=float),
                                          G.SymmetrySpec.from_dict(d["sym"]), d["category"], False,
                                          int(d["frame"]), {"frame": int(d["frame"])}))
            except (ValueError, KeyError, TypeError) as exc:
                raise DatasetError(f"{path}:{lineno}: malformed frame ({exc})") from exc
    return frames
