"""Planar geometry kernels for mapping water mains to street blocks.

Coordinates are projected feet; nothing here is geodetic. Every function is pure
and safe to call from any number of threads.
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np

from .error import ConfigurationError, GeometryError


logger = logging.getLogger(__name__)

# Subdivision stops below this piece length (feet); such pieces are classified
# by their midpoint, so the error per buffer boundary crossing is at most half of it
SUBDIVISION_TOLERANCE = 0.05


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"Non-finite coordinate ({self.x}, {self.y})")


@dataclass(frozen=True)
class Polyline:
    """An open chain of at least two vertices with no zero-length segment."""
    vertices: tuple
    coords: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vertices = tuple(v if isinstance(v, Point2) else Point2(float(v[0]), float(v[1]))
                         for v in self.vertices)
        if len(vertices) < 2:
            raise GeometryError(f"Polyline needs at least 2 vertices, got {len(vertices)}")
        coords = np.array([[v.x, v.y] for v in vertices], dtype=float)
        steps = np.diff(coords, axis=0)
        if np.any(np.hypot(steps[:, 0], steps[:, 1]) == 0):
            raise GeometryError("Polyline has a zero-length segment")
        coords.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "coords", coords)

    @property
    def starts(self):
        return self.coords[:-1]

    @property
    def ends(self):
        return self.coords[1:]

    def bounds(self):
        """Return (min_x, min_y, max_x, max_y)."""
        lo = self.coords.min(axis=0)
        hi = self.coords.max(axis=0)
        return (lo[0], lo[1], hi[0], hi[1])

    def translated(self, dx, dy):
        return Polyline(tuple((v.x + dx, v.y + dy) for v in self.vertices))


def parse_polyline(text):
    """Parse semicolon-separated "x y" vertex pairs into a Polyline.

    Raises GeometryError on any malformed vertex.
    """
    vertices = []
    for pair in text.split(";"):
        parts = pair.split()
        if len(parts) != 2:
            raise GeometryError(f"Malformed vertex '{pair.strip()}'")
        try:
            vertices.append(Point2(float(parts[0]), float(parts[1])))
        except ValueError:
            raise GeometryError(f"Non-numeric vertex '{pair.strip()}'")
    return Polyline(tuple(vertices))


def format_polyline(line):
    return ";".join(f"{v.x!r} {v.y!r}" for v in line.vertices)


def _segment_distances(points, starts, ends):
    """Distances from each of n points to each of m segments, shape (n, m)."""
    steps = ends - starts
    len2 = np.einsum("ij,ij->i", steps, steps)
    rel = points[:, None, :] - starts[None, :, :]
    t = np.clip(np.einsum("nmk,mk->nm", rel, steps) / len2, 0.0, 1.0)
    closest = starts[None, :, :] + t[..., None] * steps[None, :, :]
    diff = points[:, None, :] - closest
    return np.hypot(diff[..., 0], diff[..., 1])


def points_to_polyline_distances(points, line):
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if points.shape[0] == 0:
        return np.zeros(0)
    return _segment_distances(points, line.starts, line.ends).min(axis=1)


def point_to_polyline_distance(p, line):
    """Euclidean distance from p to the nearest point of line."""
    return float(points_to_polyline_distances([[p.x, p.y]], line)[0])


def polyline_length(line):
    steps = np.diff(line.coords, axis=0)
    return float(np.sum(np.hypot(steps[:, 0], steps[:, 1])))


def point_along(line, fraction):
    """Return the point at the given fraction (0..1) of the line's arc length."""
    steps = np.diff(line.coords, axis=0)
    lengths = np.hypot(steps[:, 0], steps[:, 1])
    target = min(max(fraction, 0.0), 1.0) * lengths.sum()
    cumulative = np.concatenate([[0.0], np.cumsum(lengths)])
    idx = min(int(np.searchsorted(cumulative, target, side="right")) - 1, len(lengths) - 1)
    t = (target - cumulative[idx]) / lengths[idx]
    x, y = line.coords[idx] + t * steps[idx]
    return Point2(float(x), float(y))


def _cross(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) \
        - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0])


def _piece_clear_of(p, q, end_dists, starts, ends, halfwidth):
    """True when segment pq keeps more than halfwidth from every street segment."""
    piece = np.stack([p, q])
    street_ends = _segment_distances(np.concatenate([starts, ends]),
                                     piece[:1], piece[1:]).reshape(2, -1)
    nearest = np.minimum(end_dists.min(axis=0), street_ends.min(axis=0))
    # Proper crossings; touching and collinear cases are covered by endpoint distances
    crosses = ((_cross(p, q, starts) * _cross(p, q, ends) < 0)
               & (_cross(starts, ends, p[None]) * _cross(starts, ends, q[None]) < 0))
    nearest = np.where(crosses, 0.0, nearest)
    return bool(np.all(nearest > halfwidth))


def _segment_overlap(a, b, starts, ends, halfwidth, tolerance):
    inside = 0.0
    stack = [(a, b)]
    while stack:
        p, q = stack.pop()
        length = math.hypot(q[0] - p[0], q[1] - p[1])
        end_dists = _segment_distances(np.stack([p, q]), starts, ends)
        # The buffer of one straight segment is convex
        if np.any((end_dists[0] <= halfwidth) & (end_dists[1] <= halfwidth)):
            inside += length
            continue
        if _piece_clear_of(p, q, end_dists, starts, ends, halfwidth):
            continue
        mid = (p + q) / 2.0
        if length < tolerance:
            if _segment_distances(mid[None], starts, ends).min() <= halfwidth:
                inside += length
            continue
        stack.append((mid, q))
        stack.append((p, mid))
    return inside


def overlap_length(main, street, halfwidth, tolerance=SUBDIVISION_TOLERANCE):
    """Length of main lying within halfwidth of street (the buffered street).

    Arguments:
        main (Polyline): The water main.
        street (Polyline): The street line of one block.
        halfwidth (float): Buffer half-width in feet. Must be positive.
        tolerance (float): Pieces shorter than this are classified by their midpoint.
                Default SUBDIVISION_TOLERANCE.

    Returns:
        float: Overlap in feet, never more than the main's length.
    """
    if halfwidth <= 0:
        raise ConfigurationError(f"Buffer half-width must be positive, got {halfwidth}")
    total = 0.0
    for a, b in zip(main.starts, main.ends):
        total += _segment_overlap(np.array(a), np.array(b), street.starts, street.ends,
                                  halfwidth, tolerance)
    return min(total, polyline_length(main))


@dataclass(frozen=True)
class MainAssignment:
    blocks: dict  # main_id -> block_id
    overlaps: dict  # main_id -> overlap length (feet) on the chosen block
    unmapped: tuple  # main_ids with no overlap anywhere


def _boxes_touch(a, b, margin):
    return not (a[2] + margin < b[0] or b[2] + margin < a[0]
                or a[3] + margin < b[1] or b[3] + margin < a[1])


def assign_mains_to_blocks(mains, blocks, halfwidth):
    """Map each main to the block whose buffered street it overlaps most.

    Arguments:
        mains (list): (main_id, Polyline) pairs.
        blocks (list): (block_id, Polyline) pairs. Must not be empty.
        halfwidth (float): Buffer half-width in feet.

    Returns:
        MainAssignment: Ties go to the smallest block_id; mains overlapping
            no block are listed in unmapped.
    """
    if not blocks:
        raise ConfigurationError("Cannot assign mains: no blocks given")
    if halfwidth <= 0:
        raise ConfigurationError(f"Buffer half-width must be positive, got {halfwidth}")
    ordered_blocks = sorted(blocks, key=lambda b: b[0])
    block_bounds = [(block_id, line, line.bounds()) for block_id, line in ordered_blocks]

    assigned = {}
    overlaps = {}
    unmapped = []
    for main_id, main in sorted(mains, key=lambda m: m[0]):
        main_bounds = main.bounds()
        best_id, best_overlap = None, 0.0
        for block_id, street, street_bounds in block_bounds:
            if not _boxes_touch(main_bounds, street_bounds, halfwidth):
                continue
            overlap = overlap_length(main, street, halfwidth)
            if overlap > best_overlap:
                best_id, best_overlap = block_id, overlap
        if best_id is None:
            unmapped.append(main_id)
        else:
            assigned[main_id] = best_id
            overlaps[main_id] = best_overlap
    if unmapped:
        logger.info(f"{len(unmapped)} of {len(mains)} mains overlap no block")
    return MainAssignment(blocks=assigned, overlaps=overlaps, unmapped=tuple(unmapped))


def breaks_within_radius(breaks, block_line, radius, exclude=frozenset()):
    """Count break events within radius (inclusive) of block_line.

    Arguments:
        breaks (list): (event_id, Point2) pairs.
        block_line (Polyline): The block's street line.
        radius (float): Search radius in feet. Must be positive.
        exclude (set): event_ids left out of the count.
                Default empty.

    Returns:
        int: The number of events at distance <= radius.
    """
    if radius <= 0:
        raise ConfigurationError(f"Radius must be positive, got {radius}")
    points = [(p.x, p.y) for event_id, p in breaks if event_id not in exclude]
    if not points:
        return 0
    return int(np.count_nonzero(points_to_polyline_distances(points, block_line) <= radius))


def nearest_line(point, lines):
    """Return the id of the line nearest to point; ties go to the smallest id.

    Arguments:
        point (Point2): The query point.
        lines (list): (id, Polyline) pairs. Must not be empty.
    """
    if not lines:
        raise ConfigurationError("Cannot find the nearest line among none")
    ordered = sorted(lines, key=lambda item: item[0])
    owners = np.concatenate([np.full(len(line.starts), i) for i, (_, line) in enumerate(ordered)])
    starts = np.concatenate([line.starts for _, line in ordered])
    ends = np.concatenate([line.ends for _, line in ordered])
    dists = _segment_distances(np.array([[point.x, point.y]]), starts, ends)[0]
    # argmin takes the first minimum, and owners are in id order
    return ordered[int(owners[int(np.argmin(dists))])][0]
