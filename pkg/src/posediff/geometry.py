"""Rotation representations, quaternion averaging and pose error metrics.

Poses are plain ``numpy`` 9-vectors ``[a1 | a2 | t]`` where ``a1``, ``a2`` are
the first two columns of a rotation-like matrix and ``t`` the translation.
Quaternions use ``(w, x, y, z)`` ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput, EigenFailure, EmptyInput, InvalidRotation

DEGENERATE_TOL = 1e-8
ORTHO_TOL = 1e-4


@dataclass(frozen=True)
class SymmetrySpec:
    kind: str = "none"
    axis: tuple[float, float, float] | None = field(default=None)

    def __post_init__(self):
        if self.kind not in ("none", "continuous-axis"):
            raise ValueError(f"unknown symmetry kind {self.kind!r}")
        if self.kind == "continuous-axis":
            if self.axis is None:
                raise ValueError("continuous-axis symmetry requires an axis")
            a = np.asarray(self.axis, dtype=float)
            n = np.linalg.norm(a)
            if abs(n - 1.0) > 1e-9:
                raise ValueError(f"symmetry axis must be unit norm, got |a|={n}")
            object.__setattr__(self, "axis", tuple(float(v) for v in a))
        elif self.axis is not None:
            raise ValueError("axis is only allowed for continuous-axis symmetry")

    @classmethod
    def none(cls) -> "SymmetrySpec":
        return cls("none")

    @classmethod
    def about_z(cls) -> "SymmetrySpec":
        return cls("continuous-axis", (0.0, 0.0, 1.0))

    @property
    def symmetric(self) -> bool:
        return self.kind == "continuous-axis"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "axis": None if self.axis is None else list(self.axis)}

    @classmethod
    def from_dict(cls, d: dict) -> "SymmetrySpec":
        axis = d.get("axis")
        return cls(d["kind"], None if axis is None else tuple(axis))


# ---------------------------------------------------------------- 6D <-> SO(3)

def sixd_to_rotation(r6) -> np.ndarray:
    """Gram-Schmidt map from a 6D representation to a rotation matrix.

    Accepts a single 6-vector or any ``(..., 6)`` batch.
    """
    r6 = np.asarray(r6, dtype=float)
    a1, a2 = r6[..., :3], r6[..., 3:6]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    if np.any(n1 <= DEGENERATE_TOL):
        raise DegenerateInput("first 6D column has (near) zero norm")
    b1 = a1 / n1
    u2 = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(u2, axis=-1, keepdims=True)
    if np.any(n2 <= DEGENERATE_TOL):
        raise DegenerateInput("second 6D column is (near) parallel to the first")
    b2 = u2 / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def check_rotation(R, tol: float = ORTHO_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape[-2:] != (3, 3):
        raise InvalidRotation(f"expected (..., 3, 3) matrix, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise InvalidRotation("rotation contains non-finite entries")
    RtR = np.swapaxes(R, -1, -2) @ R
    if np.max(np.abs(RtR - np.eye(3))) > tol:
        raise InvalidRotation("matrix columns are not orthonormal")
    if np.max(np.abs(np.linalg.det(R) - 1.0)) > tol:
        raise InvalidRotation("matrix determinant is not +1")
    return R


def rotation_to_sixd(R) -> np.ndarray:
    R = check_rotation(R)
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def make_pose(R, t) -> np.ndarray:
    return np.concatenate([rotation_to_sixd(R), np.asarray(t, dtype=float)], axis=-1)


def pose_rotation(p) -> np.ndarray:
    return sixd_to_rotation(np.asarray(p)[..., :6])


def pose_translation(p) -> np.ndarray:
    return np.asarray(p, dtype=float)[..., 6:9]


def canonicalize_pose(p) -> np.ndarray:
    """Project the rotation block through f_GS then g_GS; translation untouched."""
    p = np.asarray(p, dtype=float)
    R = sixd_to_rotation(p[..., :6])
    out = p.copy()
    out[..., :3] = R[..., :, 0]
    out[..., 3:6] = R[..., :, 1]
    return out


def is_canonical(p, tol: float = 1e-6) -> bool:
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        return False
    try:
        return bool(np.max(np.abs(canonicalize_pose(p) - p)) <= tol)
    except DegenerateInput:
        return False


# ----------------------------------------------------------- basic rotations

def axis_angle_to_rotation(axis, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle_rad) * K + (1.0 - np.cos(angle_rad)) * (K @ K)


def rot_x(deg: float) -> np.ndarray:
    return axis_angle_to_rotation((1.0, 0.0, 0.0), np.deg2rad(deg))


def rot_y(deg: float) -> np.ndarray:
    return axis_angle_to_rotation((0.0, 1.0, 0.0), np.deg2rad(deg))


def rot_z(deg: float) -> np.ndarray:
    return axis_angle_to_rotation((0.0, 0.0, 1.0), np.deg2rad(deg))


def random_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform unit quaternion (Shoemake's subgroup algorithm)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    q = np.array([
        b * np.cos(2 * np.pi * u3),
        a * np.sin(2 * np.pi * u2),
        a * np.cos(2 * np.pi * u2),
        b * np.sin(2 * np.pi * u3),
    ])
    return canonical_quaternion(q)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return quaternion_to_rotation(random_quaternion(rng))


# ---------------------------------------------------------------- quaternions

def canonical_quaternion(q) -> np.ndarray:
    """Sign convention w >= 0 (first non-zero component positive on ties)."""
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    for c in q:
        if abs(c) > 1e-15:
            return q if c > 0 else -q
    return q


def quaternion_to_rotation(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotation_to_quaternion(R) -> np.ndarray:
    """Shepperd's method; returns a canonical (w >= 0) unit quaternion."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    diag = np.array([tr, R[0, 0], R[1, 1], R[2, 2]])
    k = int(np.argmax(diag))
    if k == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + 2 * R[0, 0] - tr)
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * np.sqrt(1.0 + 2 * R[1, 1] - tr)
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + 2 * R[2, 2] - tr)
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return canonical_quaternion(q)


def quaternion_multiply(a, b) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def jacobi_eigh(A, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigen-decomposition of a small symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors in columns, sorted
    by descending eigenvalue. Raises ``EigenFailure`` if the off-diagonal mass
    does not fall below ``tol`` times the Frobenius norm.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T, atol=1e-12):
        raise EigenFailure("Jacobi solver requires a square symmetric matrix")
    if not np.all(np.isfinite(A)):
        raise EigenFailure("matrix contains non-finite entries")
    V = np.eye(n)
    scale = max(np.linalg.norm(A), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
                V = V @ J
    else:
        raise EigenFailure(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def quaternion_objective(q, qs, weights=None) -> float:
    """Value of q^T (mean of q_i q_i^T) q, the quantity maximized by averaging."""
    M = _outer_mean(np.asarray(qs, dtype=float), weights)
    q = np.asarray(q, dtype=float)
    return float(q @ M @ q)


def _outer_mean(qs: np.ndarray, weights) -> np.ndarray:
    if weights is None:
        w = np.full(len(qs), 1.0 / len(qs))
    else:
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
    return np.einsum("i,ij,ik->jk", w, qs, qs)


def average_quaternions(qs, weights=None) -> np.ndarray:
    """Dominant eigenvector of the mean quaternion outer-product matrix."""
    qs = np.asarray(qs, dtype=float)
    if qs.ndim == 1:
        qs = qs[None]
    if len(qs) == 0:
        raise EmptyInput("cannot average an empty set of quaternions")
    norms = np.linalg.norm(qs, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("all quaternions must have unit norm")
    if weights is not None and len(weights) != len(qs):
        raise ValueError("weights must match the number of quaternions")
    _, V = jacobi_eigh(_outer_mean(qs, weights))
    return canonical_quaternion(V[:, 0])


def average_rotations(Rs, weights=None) -> np.ndarray:
    qs = np.array([rotation_to_quaternion(R) for R in Rs])
    return quaternion_to_rotation(average_quaternions(qs, weights))


# --------------------------------------------------------------------- errors

def geodesic_angle(R1, R2) -> float:
    """Angle of the relative rotation R1^T R2, in degrees."""
    R1, R2 = check_rotation(R1), check_rotation(R2)
    c = (np.trace(R1.T @ R2) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def symmetry_aware_rotation_error(R_pred, R_gt, sym: SymmetrySpec | None = None) -> float:
    if sym is None or not sym.symmetric:
        return geodesic_angle(R_pred, R_gt)
    R_pred, R_gt = check_rotation(R_pred), check_rotation(R_gt)
    a = np.asarray(sym.axis)
    u, v = R_pred @ a, R_gt @ a
    # atan2 form: exactly zero when the mapped axes coincide, and accurate for small tilts
    return float(np.degrees(np.arctan2(np.linalg.norm(np.cross(u, v)), np.dot(u, v))))


def translation_error(t_pred, t_gt) -> float:
    """Euclidean distance between metric translations, in centimeters."""
    d = np.asarray(t_pred, dtype=float) - np.asarray(t_gt, dtype=float)
    return float(np.linalg.norm(d) * 100.0)


def twist_angle(R_rel, axis) -> float:
    """Rotation angle of R_rel about ``axis`` (swing-twist decomposition), degrees in [0, 360)."""
    q = rotation_to_quaternion(R_rel)
    a = np.asarray(axis, dtype=float)
    proj = float(np.dot(q[1:], a))
    ang = 2.0 * np.degrees(np.arctan2(proj, q[0]))
    return float(ang % 360.0)


def euler_zyx(R) -> tuple[float, float, float]:
    """(yaw, pitch, roll) in degrees for R = Rz(yaw) Ry(pitch) Rx(roll)."""
    R = np.asarray(R, dtype=float)
    pitch = np.degrees(np.arcsin(np.clip(-R[2, 0], -1.0, 1.0)))
    if abs(R[2, 0]) < 1.0 - 1e-12:
        yaw = np.degrees(np.arctan2(R[1, 0], R[0, 0]))
        roll = np.degrees(np.arctan2(R[2, 1], R[2, 2]))
    else:
        yaw = np.degrees(np.arctan2(-R[0, 1], R[1, 1]))
        roll = 0.0
    return float(yaw), float(pitch), float(roll)
