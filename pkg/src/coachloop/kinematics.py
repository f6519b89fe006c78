"""Pure 2D geometry over landmark frames.

Only x and y are used; a single side-view camera makes depth unreliable,
and the planar angles are enough for the supported exercises. Image y
grows downward, so "above the line" means toward smaller y.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .core.types import LANDMARK_COUNT, LandmarkFrame
from .errors import DegenerateAngle, DegenerateLine, IndexOutOfRange

_EPS = 1e-9


@dataclass(frozen=True)
class Point2:
    x: float
    y: float


def joint_angle(a: Point2, b: Point2, c: Point2) -> float:
    """Interior angle at vertex b between rays b->a and b->c, in degrees [0, 180]."""
    ux, uy = a.x - b.x, a.y - b.y
    vx, vy = c.x - b.x, c.y - b.y
    nu = math.hypot(ux, uy)
    nv = math.hypot(vx, vy)
    if nu < _EPS or nv < _EPS:
        raise DegenerateAngle(f"zero-length ray at vertex ({b.x}, {b.y})")
    cos = (ux * vx + uy * vy) / (nu * nv)
    return math.degrees(math.acos(max(-1.0, min(1.0, cos))))


def signed_offset(p: Point2, line_a: Point2, line_b: Point2) -> float:
    """Perpendicular distance of p from the line a-b.

    Positive when p lies above the directed line (toward -y, image-up).
    """
    dx, dy = line_b.x - line_a.x, line_b.y - line_a.y
    norm = math.hypot(dx, dy)
    if norm < _EPS:
        raise DegenerateLine("line endpoints coincide")
    return (dy * (p.x - line_a.x) - dx * (p.y - line_a.y)) / norm


def landmark_at(frame: LandmarkFrame, index: int, min_visibility: float = 0.5) -> Optional[Point2]:
    """The (x, y) of one landmark, or None when it is occluded."""
    if not (0 <= index < LANDMARK_COUNT):
        raise IndexOutOfRange(f"landmark index {index} not in [0, {LANDMARK_COUNT})")
    x, y, _z, vis = frame.landmarks[index]
    if vis < min_visibility:
        return None
    return Point2(x, y)


def landmarks_at(frame: LandmarkFrame, indices, min_visibility: float = 0.5):
    """All requested landmarks, or None if any one of them is occluded."""
    pts = []
    for i in indices:
        p = landmark_at(frame, i, min_visibility)
        if p is None:
            return None
        pts.append(p)
    return pts


def mean_visibility(frame: LandmarkFrame, indices) -> float:
    return sum(frame.landmarks[i][3] for i in indices) / len(indices)
