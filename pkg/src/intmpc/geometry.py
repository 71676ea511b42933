"""Reference paths parameterized by cumulative chord length.

Each coordinate is a natural cubic spline in the progress variable ``lam``.
Contour error is the signed lateral offset (positive to the left of the
path), lag error the signed offset along the tangent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.interpolate import CubicSpline


class DegeneratePath(ValueError):
    """Raised when a waypoint list cannot define a path."""


@dataclass(frozen=True)
class PathFrame:
    point: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray


@njit(cache=True)
def _segment(knots, lam):
    n = knots.shape[0] - 1
    i = np.searchsorted(knots, lam, side="right") - 1
    if i < 0:
        i = 0
    elif i > n - 1:
        i = n - 1
    return i


@njit(cache=True)
def spline_eval(knots, cx, cy, lam):
    """Position, first and second derivative of the path at ``lam``."""
    if lam < knots[0]:
        lam = knots[0]
    elif lam > knots[-1]:
        lam = knots[-1]
    i = _segment(knots, lam)
    t = lam - knots[i]
    px = ((cx[i, 0] * t + cx[i, 1]) * t + cx[i, 2]) * t + cx[i, 3]
    py = ((cy[i, 0] * t + cy[i, 1]) * t + cy[i, 2]) * t + cy[i, 3]
    dpx = (3.0 * cx[i, 0] * t + 2.0 * cx[i, 1]) * t + cx[i, 2]
    dpy = (3.0 * cy[i, 0] * t + 2.0 * cy[i, 1]) * t + cy[i, 2]
    ddpx = 6.0 * cx[i, 0] * t + 2.0 * cx[i, 1]
    ddpy = 6.0 * cy[i, 0] * t + 2.0 * cy[i, 1]
    return px, py, dpx, dpy, ddpx, ddpy


@njit(cache=True)
def path_errors(knots, cx, cy, lam, X, Y, out):
    """Contour/lag errors at (X, Y) against the frame at ``lam``.

    ``out`` receives [e_c, e_l, de_c/dX, de_c/dY, de_l/dX, de_l/dY,
    de_c/dlam, de_l/dlam]. Outside the path domain the frame is frozen at the
    end point, so the lam-derivatives vanish there.
    """
    inside = knots[0] <= lam <= knots[-1]
    px, py, dpx, dpy, ddpx, ddpy = spline_eval(knots, cx, cy, lam)
    speed = math.sqrt(dpx * dpx + dpy * dpy)
    tx = dpx / speed
    ty = dpy / speed
    nx = -ty
    ny = tx
    rx = X - px
    ry = Y - py
    out[0] = nx * rx + ny * ry
    out[1] = tx * rx + ty * ry
    out[2] = nx
    out[3] = ny
    out[4] = tx
    out[5] = ty
    if inside:
        proj = tx * ddpx + ty * ddpy
        dtx = (ddpx - tx * proj) / speed
        dty = (ddpy - ty * proj) / speed
        out[6] = -dty * rx + dtx * ry
        out[7] = dtx * rx + dty * ry - speed
    else:
        out[6] = 0.0
        out[7] = 0.0


@njit(cache=True)
def _project(knots, cx, cy, X, Y, lo, hi):
    n = max(2, int((hi - lo) / 0.25) + 1)
    best = lo
    best_d2 = np.inf
    for i in range(n):
        lam = lo + (hi - lo) * i / (n - 1)
        px, py, _, _, _, _ = spline_eval(knots, cx, cy, lam)
        d2 = (px - X) ** 2 + (py - Y) ** 2
        if d2 < best_d2:
            best_d2 = d2
            best = lam
    lam = best
    buf = np.empty(8)
    for _ in range(4):
        path_errors(knots, cx, cy, lam, X, Y, buf)
        if buf[7] == 0.0:
            break
        lam = min(max(lam - buf[1] / buf[7], lo), hi)
    return lam


class ReferencePath:
    """Immutable planar path through a list of waypoints."""

    def __init__(self, waypoints):
        pts = np.asarray(waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DegeneratePath("waypoints must be an (M, 2) array")
        if len(pts) < 2:
            raise DegeneratePath("need at least two distinct waypoints")
        if not np.all(np.isfinite(pts)):
            raise DegeneratePath("waypoints must be finite")
        seg = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(seg == 0.0):
            raise DegeneratePath("duplicate consecutive waypoints")
        knots = np.concatenate([[0.0], np.cumsum(seg)])
        if len(pts) == 2:
            # natural spline through two points is the straight segment
            cx = np.array([[0.0, 0.0, (pts[1, 0] - pts[0, 0]) / seg[0], pts[0, 0]]])
            cy = np.array([[0.0, 0.0, (pts[1, 1] - pts[0, 1]) / seg[0], pts[0, 1]]])
        else:
            sx = CubicSpline(knots, pts[:, 0], bc_type="natural")
            sy = CubicSpline(knots, pts[:, 1], bc_type="natural")
            cx = np.ascontiguousarray(sx.c.T)
            cy = np.ascontiguousarray(sy.c.T)
        self.waypoints = pts
        self.knots = knots
        self.cx = cx
        self.cy = cy
        self.total_length = float(knots[-1])
        for arr in (self.waypoints, self.knots, self.cx, self.cy):
            arr.flags.writeable = False

    def point(self, lam: float) -> np.ndarray:
        px, py, *_ = spline_eval(self.knots, self.cx, self.cy, float(lam))
        return np.array([px, py])

    def frame(self, lam: float) -> PathFrame:
        px, py, dpx, dpy, _, _ = spline_eval(self.knots, self.cx, self.cy, float(lam))
        t = np.array([dpx, dpy]) / math.hypot(dpx, dpy)
        return PathFrame(np.array([px, py]), t, np.array([-t[1], t[0]]))

    def heading(self, lam: float) -> float:
        f = self.frame(lam)
        return math.atan2(f.tangent[1], f.tangent[0])

    def curvature(self, lam: float) -> float:
        _, _, dpx, dpy, ddpx, ddpy = spline_eval(self.knots, self.cx, self.cy, float(lam))
        return (dpx * ddpy - dpy * ddpx) / math.hypot(dpx, dpy) ** 3

    def project(self, pos, guess: float, back: float = 5.0, ahead: float = 10.0) -> float:
        """Progress of the path point closest to ``pos`` near ``guess``.

        Coarse sampling over [guess - back, guess + ahead] followed by a few
        Newton iterations that drive the lag error to zero.
        """
        lo = max(0.0, guess - back)
        hi = min(self.total_length, guess + ahead)
        return float(_project(self.knots, self.cx, self.cy, float(pos[0]), float(pos[1]), lo, hi))


def build_path(waypoints) -> ReferencePath:
    return ReferencePath(waypoints)


def errors_at(path: ReferencePath, lam: float, pos) -> tuple[float, float]:
    """Signed (contour, lag) errors of ``pos`` w.r.t. the frame at ``lam``."""
    buf = np.empty(8)
    path_errors(path.knots, path.cx, path.cy, float(lam), float(pos[0]), float(pos[1]), buf)
    return float(buf[0]), float(buf[1])


def progress_update(lam: float, v: float, dt: float, total_length: float = math.inf) -> float:
    return min(max(lam + v * dt, 0.0), total_length)
