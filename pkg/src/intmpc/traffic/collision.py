"""Vehicle footprints: oriented-rectangle overlap and clearance queries."""
from __future__ import annotations

import math

import numpy as np

VEHICLE_LENGTH = 5.0
VEHICLE_WIDTH = 2.0


def corners(x: float, y: float, psi: float, length: float = VEHICLE_LENGTH,
            width: float = VEHICLE_WIDTH) -> np.ndarray:
    c, s = math.cos(psi), math.sin(psi)
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


def _overlap_on_axis(ca: np.ndarray, cb: np.ndarray, axis: np.ndarray) -> bool:
    pa = ca @ axis
    pb = cb @ axis
    return pa.max() >= pb.min() and pb.max() >= pa.min()


def check_collision(a, b, length: float = VEHICLE_LENGTH, width: float = VEHICLE_WIDTH) -> bool:
    """Separating-axis test for two vehicle rectangles (touching counts)."""
    dx, dy = b.x - a.x, b.y - a.y
    if dx * dx + dy * dy > length * length + width * width:
        return False
    ca = corners(a.x, a.y, a.psi, length, width)
    cb = corners(b.x, b.y, b.psi, length, width)
    for psi in (a.psi, b.psi):
        c, s = math.cos(psi), math.sin(psi)
        for axis in (np.array([c, s]), np.array([-s, c])):
            if not _overlap_on_axis(ca, cb, axis):
                return False
    return True


def clearance_to_boxes(px: float, py: float, xs: np.ndarray, ys: np.ndarray,
                       psis: np.ndarray, length: float = VEHICLE_LENGTH,
                       width: float = VEHICLE_WIDTH) -> np.ndarray:
    """Distance from point (px, py) to each rectangle boundary, 0 inside."""
    dx = px - xs
    dy = py - ys
    c = np.cos(psis)
    s = np.sin(psis)
    lx = np.abs(c * dx + s * dy) - 0.5 * length
    ly = np.abs(-s * dx + c * dy) - 0.5 * width
    return np.hypot(np.maximum(lx, 0.0), np.maximum(ly, 0.0))
