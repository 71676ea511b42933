"""Kinematic bicycle model shared by the simulator and the planner.

The numeric kernels (``rk4_step``, ``rk4_step_jac``) are numba-compiled and
called from both sides so that simulated and predicted ego motion agree bit
for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

DT = 0.1  # 1.5 s horizon over 15 stages


def wrap_angle(psi: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(psi, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    psi: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.v], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "VehicleState":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]), float(arr[3]))


@dataclass(frozen=True)
class ControlInput:
    a: float
    delta: float


@dataclass(frozen=True)
class VehicleLimits:
    a_lo: float = -5.0
    a_hi: float = 3.0
    delta_max: float = 0.5
    v_max: float = 8.0
    l_r: float = 1.25
    l_f: float = 1.25

    def __post_init__(self):
        if not (self.a_lo < 0.0 < self.a_hi):
            raise ValueError("acceleration bounds must bracket zero")
        if self.delta_max <= 0 or self.v_max <= 0 or self.l_r <= 0 or self.l_f <= 0:
            raise ValueError("limits must be positive")

    def clip(self, u: ControlInput) -> ControlInput:
        return ControlInput(
            min(max(u.a, self.a_lo), self.a_hi),
            min(max(u.delta, -self.delta_max), self.delta_max),
        )

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.a_lo, self.a_hi, self.delta_max, self.v_max, self.l_r, self.l_f]
        )


@njit(cache=True)
def bicycle_rhs(s, a, delta, l_r, l_f):
    beta = math.atan(l_r / (l_f + l_r) * math.tan(delta))
    out = np.empty(4)
    out[0] = s[3] * math.cos(s[2] + beta)
    out[1] = s[3] * math.sin(s[2] + beta)
    out[2] = s[3] / l_r * math.sin(beta)
    out[3] = a
    return out


@njit(cache=True)
def _rhs_jac(s, a, delta, l_r, l_f, fs, fu):
    """Right-hand side plus its state (4x4) and control (4x2) Jacobians."""
    kappa = l_r / (l_f + l_r)
    td = math.tan(delta)
    beta = math.atan(kappa * td)
    dbeta = kappa * (1.0 + td * td) / (1.0 + kappa * kappa * td * td)
    c = math.cos(s[2] + beta)
    sn = math.sin(s[2] + beta)
    v = s[3]
    out = np.empty(4)
    out[0] = v * c
    out[1] = v * sn
    out[2] = v / l_r * math.sin(beta)
    out[3] = a
    fs[:, :] = 0.0
    fs[0, 2] = -v * sn
    fs[0, 3] = c
    fs[1, 2] = v * c
    fs[1, 3] = sn
    fs[2, 3] = math.sin(beta) / l_r
    fu[:, :] = 0.0
    fu[0, 1] = -v * sn * dbeta
    fu[1, 1] = v * c * dbeta
    fu[2, 1] = v / l_r * math.cos(beta) * dbeta
    fu[3, 0] = 1.0
    return out


@njit(cache=True)
def rk4_step(s, a, delta, h, l_r, l_f):
    k1 = bicycle_rhs(s, a, delta, l_r, l_f)
    k2 = bicycle_rhs(s + 0.5 * h * k1, a, delta, l_r, l_f)
    k3 = bicycle_rhs(s + 0.5 * h * k2, a, delta, l_r, l_f)
    k4 = bicycle_rhs(s + h * k3, a, delta, l_r, l_f)
    return s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def rk4_step_jac(s, a, delta, h, l_r, l_f, A, B):
    """RK4 step; writes d(next)/ds into A (4x4) and d(next)/du into B (4x2)."""
    f1s = np.empty((4, 4))
    f1u = np.empty((4, 2))
    f2s = np.empty((4, 4))
    f2u = np.empty((4, 2))
    f3s = np.empty((4, 4))
    f3u = np.empty((4, 2))
    f4s = np.empty((4, 4))
    f4u = np.empty((4, 2))
    eye = np.eye(4)

    k1 = _rhs_jac(s, a, delta, l_r, l_f, f1s, f1u)
    k1s = f1s
    k1u = f1u

    k2 = _rhs_jac(s + 0.5 * h * k1, a, delta, l_r, l_f, f2s, f2u)
    k2s = f2s @ (eye + 0.5 * h * k1s)
    k2u = f2s @ (0.5 * h * k1u) + f2u

    k3 = _rhs_jac(s + 0.5 * h * k2, a, delta, l_r, l_f, f3s, f3u)
    k3s = f3s @ (eye + 0.5 * h * k2s)
    k3u = f3s @ (0.5 * h * k2u) + f3u

    k4 = _rhs_jac(s + h * k3, a, delta, l_r, l_f, f4s, f4u)
    k4s = f4s @ (eye + h * k3s)
    k4u = f4s @ (h * k3u) + f4u

    A[:, :] = eye + h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
    B[:, :] = h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    return s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def derivative(s: VehicleState, u: ControlInput, limits: VehicleLimits) -> tuple:
    """Time derivative (dx, dy, dpsi, dv) of the kinematic bicycle model."""
    d = bicycle_rhs(s.as_array(), float(u.a), float(u.delta), limits.l_r, limits.l_f)
    return tuple(float(c) for c in d)


def step_array(s: np.ndarray, a: float, delta: float, dt: float, limits: VehicleLimits) -> np.ndarray:
    """Array form of :func:`step` (no wrapping of the returned heading)."""
    v = s[3]
    # Saturate acceleration so speed lands exactly on the [0, v_max] band
    # instead of integrating through reverse motion.
    a_eff = min(max(a, -v / dt), (limits.v_max - v) / dt)
    out = rk4_step(s, a_eff, delta, dt, limits.l_r, limits.l_f)
    out[3] = min(max(out[3], 0.0), limits.v_max)
    return out


def step(s: VehicleState, u: ControlInput, dt: float, limits: VehicleLimits) -> VehicleState:
    """Advance one vehicle by ``dt`` seconds with a single RK4 step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = step_array(s.as_array(), float(u.a), float(u.delta), dt, limits)
    return VehicleState(float(out[0]), float(out[1]), wrap_angle(float(out[2])), float(out[3]))
