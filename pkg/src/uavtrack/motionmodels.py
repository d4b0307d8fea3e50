"""Kinematic motion models: CV, CA, and CT.

Each model provides its state transition, transition Jacobian,
process-noise covariance, and the position-selecting measurement matrix.
State layouts (SI units throughout):

    CV: [x, y, vx, vy]
    CA: [x, y, vx, vy, ax, ay]
    CT: [x, y, vx, vy, omega]
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# below this rotation angle the CT update switches to its series expansion
_SMALL_TURN = 1e-6


class ModelError(ValueError):
    """Dimension or parameter contract violation."""


class EstimationError(ValueError):
    """Not enough data to estimate noise parameters."""


class ModelKind(str, enum.Enum):
    CV = "CV"
    CA = "CA"
    CT = "CT"

    @property
    def state_dim(self) -> int:
        return {ModelKind.CV: 4, ModelKind.CA: 6, ModelKind.CT: 5}[self]


@dataclass(frozen=True)
class NoiseSigmas:
    """Process-noise standard deviations.

    ``accel`` (m/s^2) drives CV and CT position/velocity diffusion,
    ``jerk`` (m/s^3) drives CA, ``omega`` (rad/s) is the CT turn-rate
    random walk per step.
    """

    accel: float = 0.0
    jerk: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if self.accel < 0 or self.jerk < 0 or self.omega < 0:
            raise ModelError(f"negative noise sigma: {self}")


def _check_state(mm: ModelKind, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape != (mm.state_dim,):
        raise ModelError(f"{mm.value} expects state of length {mm.state_dim}, got shape {s.shape}")
    return s


def _check_dt(T: float) -> float:
    if not T > 0:
        raise ModelError(f"time step must be positive, got {T}")
    return float(T)


def _linear_matrix(mm: ModelKind, T: float) -> np.ndarray:
    if mm is ModelKind.CV:
        return np.array(
            [[1, 0, T, 0],
             [0, 1, 0, T],
             [0, 0, 1, 0],
             [0, 0, 0, 1]], dtype=float)
    h = 0.5 * T * T
    return np.array(
        [[1, 0, T, 0, h, 0],
         [0, 1, 0, T, 0, h],
         [0, 0, 1, 0, T, 0],
         [0, 0, 0, 1, 0, T],
         [0, 0, 0, 0, 1, 0],
         [0, 0, 0, 0, 0, 1]], dtype=float)


def _turn_coeffs(w: float, T: float) -> tuple[float, float, float, float]:
    """(sin(wT)/w, (1-cos(wT))/w, cos(wT), sin(wT)) with small-angle series."""
    a = w * T
    c, s = math.cos(a), math.sin(a)
    if abs(a) < _SMALL_TURN:
        # second-order series; limit is the CV update
        swt_w = T - w * w * T**3 / 6.0
        cwt_w = w * T * T / 2.0 - w**3 * T**4 / 24.0
    else:
        swt_w = s / w
        cwt_w = (1.0 - c) / w
    return swt_w, cwt_w, c, s


def transition(mm: ModelKind, s: Sequence[float], T: float) -> np.ndarray:
    """Propagate state ``s`` over ``T`` seconds under model ``mm``."""
    s = _check_state(mm, s)
    T = _check_dt(T)
    if mm is not ModelKind.CT:
        return _linear_matrix(mm, T) @ s

    x, y, vx, vy, w = s
    swt_w, cwt_w, c, sn = _turn_coeffs(w, T)
    return np.array([
        x + vx * swt_w - vy * cwt_w,
        y + vx * cwt_w + vy * swt_w,
        vx * c - vy * sn,
        vx * sn + vy * c,
        w,
    ])


def jacobian(mm: ModelKind, s: Sequence[float], T: float) -> np.ndarray:
    """Transition Jacobian df/ds evaluated at ``s``."""
    s = _check_state(mm, s)
    T = _check_dt(T)
    if mm is not ModelKind.CT:
        return _linear_matrix(mm, T)

    _, _, vx, vy, w = s
    swt_w, cwt_w, c, sn = _turn_coeffs(w, T)
    a = w * T
    if abs(a) < _SMALL_TURN:
        dswt_dw = -w * T**3 / 3.0
        dcwt_dw = T * T / 2.0 - w * w * T**4 / 8.0
    else:
        dswt_dw = (a * c - sn) / (w * w)
        dcwt_dw = (a * sn - (1.0 - c)) / (w * w)

    J = np.zeros((5, 5))
    J[0, 0] = J[1, 1] = J[4, 4] = 1.0
    J[0, 2] = swt_w
    J[0, 3] = -cwt_w
    J[0, 4] = vx * dswt_dw - vy * dcwt_dw
    J[1, 2] = cwt_w
    J[1, 3] = swt_w
    J[1, 4] = vx * dcwt_dw + vy * dswt_dw
    J[2, 2] = c
    J[2, 3] = -sn
    J[2, 4] = T * (-vx * sn - vy * c)
    J[3, 2] = sn
    J[3, 3] = c
    J[3, 4] = T * (vx * c - vy * sn)
    return J


def process_noise(mm: ModelKind, T: float, sig: NoiseSigmas) -> np.ndarray:
    """Process-noise covariance Q for one step of length ``T``.

    Piecewise-constant white-noise construction: per-axis outer products,
    no cross-axis correlation.
    """
    T = _check_dt(T)
    if mm is ModelKind.CA:
        g = np.array([0.5 * T * T, T, 1.0])
        block = sig.jerk**2 * np.outer(g, g)  # [pos, vel, acc] per axis
        Q = np.zeros((6, 6))
        for i in range(3):
            for j in range(3):
                Q[2 * i, 2 * j] = block[i, j]
                Q[2 * i + 1, 2 * j + 1] = block[i, j]
        return Q

    g = np.array([0.5 * T * T, T])
    block = sig.accel**2 * np.outer(g, g)  # [pos, vel] per axis
    n = mm.state_dim
    Q = np.zeros((n, n))
    for i in range(2):
        for j in range(2):
            Q[2 * i, 2 * j] = block[i, j]
            Q[2 * i + 1, 2 * j + 1] = block[i, j]
    if mm is ModelKind.CT:
        Q[4, 4] = sig.omega**2 * T * T
    return Q


def measurement_matrix(mm: ModelKind) -> np.ndarray:
    """2 x state_dim selector of the (x, y) position components."""
    H = np.zeros((2, mm.state_dim))
    H[0, 0] = 1.0
    H[1, 1] = 1.0
    return H


def estimate_process_sigmas(
    t_s: Sequence[float], pos: Sequence[Sequence[float]], mm: ModelKind
) -> NoiseSigmas:
    """Estimate process-noise sigmas from a ground-truth segment.

    ``t_s``: sample times in seconds; ``pos``: matching (x, y) positions.
    Finite-difference velocities (and accelerations / heading rates as the
    model requires), then the spread of their per-step changes scaled by
    the mean step duration.
    """
    t = np.asarray(t_s, dtype=float)
    p = np.asarray(pos, dtype=float)
    if t.ndim != 1 or p.shape != (t.size, 2):
        raise ModelError("expected 1-D times and matching (n, 2) positions")
    if t.size < 3:
        raise EstimationError(f"need at least 3 samples, got {t.size}")

    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ModelError("sample times must be strictly increasing")
    mean_dt = float(dt.mean())
    v = np.diff(p, axis=0) / dt[:, None]

    def _axis_rms_std(x: np.ndarray) -> float:
        return float(np.sqrt(np.mean(np.var(x, axis=0))))

    if mm is ModelKind.CA:
        if t.size < 4:
            raise EstimationError("CA estimation needs at least 4 samples")
        dt_mid = 0.5 * (dt[1:] + dt[:-1])
        a = np.diff(v, axis=0) / dt_mid[:, None]
        if a.shape[0] < 2:
            raise EstimationError("CA estimation needs at least 2 acceleration samples")
        da = np.diff(a, axis=0)
        return NoiseSigmas(jerk=_axis_rms_std(da) / mean_dt)

    dv = np.diff(v, axis=0)
    accel = _axis_rms_std(dv) / mean_dt
    if mm is ModelKind.CV:
        return NoiseSigmas(accel=accel)

    heading = np.unwrap(np.arctan2(v[:, 1], v[:, 0]))
    rate = np.diff(heading) / (0.5 * (dt[1:] + dt[:-1]))
    return NoiseSigmas(accel=accel, omega=float(np.std(rate)))
