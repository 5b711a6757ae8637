"""
Planar convex obstacles: hull distance, margin membership and the closest hull vertex.
Obstacles live in a 2-D coordinate projection of the state (positions by default).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from errors import RejectedInputError

POSITION_PROJECTION = (0, 1)


def _hull_polygon(vertices: np.ndarray) -> np.ndarray:
    """Hull corners in counter-clockwise order; degenerate inputs collapse to a point or segment."""
    unique = np.unique(vertices, axis=0)
    if len(unique) == 1:
        return unique
    if len(unique) >= 3:
        try:
            return unique[ConvexHull(unique).vertices]
        except QhullError:
            pass
    # Collinear: keep the two extreme points along the principal direction
    direction = unique[-1] - unique[0]
    proj = (unique - unique[0]) @ direction
    return unique[[int(np.argmin(proj)), int(np.argmax(proj))]]


def _segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from points (N, 2) to segments a[e]-b[e] (E, 2); shape (N, E)."""
    d = b - a
    rel = points[:, None, :] - a[None, :, :]
    length2 = np.einsum("ij,ij->i", d, d)
    safe = np.where(length2 > 0.0, length2, 1.0)
    s = np.clip(np.einsum("nej,ej->ne", rel, d) / safe, 0.0, 1.0)
    s = np.where(length2 > 0.0, s, 0.0)
    closest = a[None, :, :] + s[..., None] * d[None, :, :]
    return np.linalg.norm(points[:, None, :] - closest, axis=-1)


@dataclass(frozen=True, eq=False)
class ConvexObstacle:
    vertices: np.ndarray
    margin: float = 0.0
    projection: tuple[int, ...] = POSITION_PROJECTION
    _hull: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        vertices = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        projection = tuple(int(i) for i in self.projection)
        if len(projection) != 2 or len(set(projection)) != 2 or min(projection) < 0:
            raise RejectedInputError(f"obstacle projection must name two distinct coordinates, got {self.projection}")
        if vertices.size == 0 or vertices.shape[1] != 2:
            raise RejectedInputError(f"obstacle vertices must be a nonempty (k, 2) array, got {vertices.shape}")
        if not np.all(np.isfinite(vertices)):
            raise RejectedInputError("obstacle vertices contain non-finite entries")
        if not self.margin >= 0.0:
            raise RejectedInputError(f"obstacle margin must be nonnegative, got {self.margin}")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "margin", float(self.margin))
        object.__setattr__(self, "projection", projection)
        object.__setattr__(self, "_hull", _hull_polygon(vertices))

    @classmethod
    def box(
        cls,
        lower: tuple[float, float],
        upper: tuple[float, float],
        margin: float = 0.0,
        projection: tuple[int, ...] = POSITION_PROJECTION,
    ) -> "ConvexObstacle":
        (x0, y0), (x1, y1) = lower, upper
        return cls(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]]), margin, projection)

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if max(self.projection) >= x.shape[-1]:
            raise RejectedInputError(f"projection {self.projection} invalid for state dimension {x.shape[-1]}")
        return x[..., list(self.projection)]

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance from projected points (..., 2) to the hull; 0 inside."""
        points = np.asarray(points, dtype=float)
        flat = points.reshape(-1, 2)
        hull = self._hull
        if len(hull) == 1:
            dist = np.linalg.norm(flat - hull[0], axis=1)
        elif len(hull) == 2:
            dist = _segment_distances(flat, hull[:1], hull[1:])[:, 0]
        else:
            a, b = hull, np.roll(hull, -1, axis=0)
            dist = _segment_distances(flat, a, b).min(axis=1)
            edge = b - a
            rel = flat[:, None, :] - a[None, :, :]
            cross = edge[None, :, 0] * rel[..., 1] - edge[None, :, 1] * rel[..., 0]
            dist = np.where(np.all(cross >= 0.0, axis=1), 0.0, dist)
        return dist.reshape(points.shape[:-1])

    def contains(self, x: np.ndarray, margin: float | None = None) -> np.ndarray:
        """Membership of full states x (..., n) in the hull inflated by margin (own margin by default)."""
        margin = self.margin if margin is None else margin
        return self.distance(self.project(x)) <= margin


def point_in_obstacle(x: np.ndarray, obs: ConvexObstacle) -> bool:
    """True iff the projected state lies within obs.margin of the obstacle hull."""
    return bool(obs.contains(x))


def penetrates(x: np.ndarray, obs: ConvexObstacle) -> bool:
    """Physical penetration: inside the bare hull, margin ignored."""
    return bool(obs.contains(x, margin=0.0))


def closest_vertex(obs: ConvexObstacle, point: np.ndarray) -> np.ndarray:
    """Vertex nearest to the projected point; the lowest index wins ties."""
    point = np.asarray(point, dtype=float)
    if point.shape != (2,):
        raise RejectedInputError(f"projected point must have shape (2,), got {point.shape}")
    diff = obs.vertices - point
    return obs.vertices[int(np.argmin(np.einsum("ij,ij->i", diff, diff)))].copy()
