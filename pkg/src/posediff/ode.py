"""Batched explicit integrators with independent step control per trajectory.

``f(y, t)`` receives the active rows ``y`` of shape ``(b, D)`` and their times
``t`` of shape ``(b,)`` and must return ``(b, D)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFinite, OdeStepUnderflow

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

SAFETY = 0.9
FAC_MIN, FAC_MAX = 0.2, 5.0
# PI controller exponents for a 5(4) pair
_ALPHA = 0.17
_BETA = 0.04
MIN_STEP = 1e-12


@dataclass
class StepStats:
    accepted: np.ndarray
    rejected: np.ndarray
    nfev: int = 0
    t_start: float = 0.0
    t_end: float = 0.0
    method: str = "rk45-adaptive"
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "nfev": int(self.nfev),
            "mean_accepted": float(np.mean(self.accepted)),
            "mean_rejected": float(np.mean(self.rejected)),
            "accepted": [int(a) for a in self.accepted],
        }


def _check(k: np.ndarray, t: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(k)):
        raise NonFinite(f"vector field returned non-finite values near t={float(np.min(t)):.6g}")
    return k


def dopri5(f, y0, t0: float, t1: float, atol: float = 1e-5, rtol: float = 1e-5,
           h0: float | None = None) -> tuple[np.ndarray, StepStats]:
    """Integrate every row of ``y0`` from ``t0`` to ``t1`` (either direction)."""
    y = np.array(y0, dtype=float, copy=True)
    B = y.shape[0]
    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)
    t = np.full(B, float(t0))
    h = np.full(B, direction * (span / 100.0 if h0 is None else abs(h0)))
    err_prev = np.full(B, 1e-4)
    done = np.zeros(B, dtype=bool)
    accepted = np.zeros(B, dtype=int)
    rejected = np.zeros(B, dtype=int)
    k1 = _check(f(y, t), t)
    nfev = 1
    while not np.all(done):
        idx = np.flatnonzero(~done)
        ya, ta = y[idx], t[idx]
        # do not step past the end point
        ha = np.where(direction * (ta + h[idx] - t1) > 0, t1 - ta, h[idx])
        ks = [k1[idx]]
        for s in range(1, 7):
            yi = ya + ha[:, None] * sum(a * ks[j] for j, a in enumerate(_A[s]) if a != 0.0)
            ks.append(_check(f(yi, ta + _C[s] * ha), ta))
        nfev += 6
        K = np.stack(ks, axis=0)
        y5 = ya + ha[:, None] * np.einsum("s,sbd->bd", _B5, K)
        err_vec = ha[:, None] * np.einsum("s,sbd->bd", _E, K)
        scale = atol + rtol * np.maximum(np.abs(ya), np.abs(y5))
        err = np.sqrt(np.mean((err_vec / scale) ** 2, axis=1))
        err = np.where(np.isfinite(err), err, np.inf)
        ok = err <= 1.0

        acc = idx[ok]
        y[acc] = y5[ok]
        t_new = ta[ok] + ha[ok]
        hit_end = ha[ok] == (t1 - ta[ok])
        t[acc] = np.where(hit_end, t1, t_new)
        k1[acc] = K[6][ok]
        accepted[acc] += 1
        done[acc[hit_end]] = True

        e_safe = np.maximum(err, 1e-10)
        fac_acc = SAFETY * e_safe ** (-_ALPHA) * err_prev[idx] ** _BETA
        fac_rej = np.minimum(1.0, SAFETY * e_safe ** (-0.2))
        fac = np.clip(np.where(ok, fac_acc, fac_rej), FAC_MIN, FAC_MAX)
        fac = np.where(np.isfinite(err), fac, FAC_MIN)
        h_new = ha * fac
        err_prev[acc] = np.maximum(err[ok], 1e-4)
        rejected[idx[~ok]] += 1
        h[idx] = h_new
        still = ~done[idx]
        if np.any(np.abs(h_new[still]) < MIN_STEP):
            bad = idx[still][np.argmin(np.abs(h_new[still]))]
            raise OdeStepUnderflow(
                f"adaptive step fell below {MIN_STEP} at t={t[bad]:.6g}", t=float(t[bad]), state=y[bad].copy())
    stats = StepStats(accepted, rejected, nfev, float(t0), float(t1), "rk45-adaptive")
    return y, stats


def euler(f, y0, t0: float, t1: float, steps: int) -> tuple[np.ndarray, StepStats]:
    y = np.array(y0, dtype=float, copy=True)
    B = y.shape[0]
    h = (t1 - t0) / steps
    for i in range(steps):
        t = np.full(B, t0 + i * h)
        y = y + h * _check(f(y, t), t)
    stats = StepStats(np.full(B, steps), np.zeros(B, dtype=int), steps, float(t0), float(t1), "euler-fixed")
    return y, stats
