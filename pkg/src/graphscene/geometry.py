"""Point-cloud and box geometry: oriented-box extraction, canonical fronts,
support refinement, RANSAC plane fitting, box IoU and chamfer distance."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, replace

import numpy as np

# Degenerate extents are clamped to 1 mm so every box stays a valid volume.
MIN_EXTENT = 1e-3

POINTCLOUD_MAGIC = b"G23DPC1"


class GeometryError(ValueError):
    pass


def rot_z(alpha_deg):
    """3x3 counter-clockwise rotation about the z-axis, angle in degrees."""
    a = math.radians(alpha_deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class OrientedBox:
    """7DoF box: extents (w, l, h) in meters, centroid (cx, cy, cz), yaw
    alpha in degrees within [0, 360)."""

    w: float
    l: float
    h: float
    cx: float
    cy: float
    cz: float
    alpha: float = 0.0

    def __post_init__(self):
        if not (self.w > 0 and self.l > 0 and self.h > 0):
            raise GeometryError(f"box extents must be positive, got {(self.w, self.l, self.h)}")
        object.__setattr__(self, "alpha", float(self.alpha) % 360.0)

    @property
    def centroid(self):
        return np.array([self.cx, self.cy, self.cz])

    @property
    def size(self):
        return np.array([self.w, self.l, self.h])

    @property
    def bottom(self):
        return self.cz - self.h / 2.0

    @property
    def top(self):
        return self.cz + self.h / 2.0

    @property
    def volume(self):
        return self.w * self.l * self.h

    def footprint(self):
        """Corners of the top-down rectangle, counter-clockwise, shape (4, 2)."""
        hw, hl = self.w / 2.0, self.l / 2.0
        local = np.array([[-hw, -hl], [hw, -hl], [hw, hl], [-hw, hl]])
        a = math.radians(self.alpha)
        c, s = math.cos(a), math.sin(a)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.cx, self.cy])

    def corners(self):
        """All 8 corners, shape (8, 3)."""
        foot = self.footprint()
        lo = np.column_stack([foot, np.full(4, self.bottom)])
        hi = np.column_stack([foot, np.full(4, self.top)])
        return np.vstack([lo, hi])

    def as_vector(self):
        """(w, l, h, cx, cy, cz, alpha) as a 7-vector."""
        return np.array([self.w, self.l, self.h, self.cx, self.cy, self.cz, self.alpha])

    def to_dict(self):
        return {
            "w": self.w, "l": self.l, "h": self.h,
            "cx": self.cx, "cy": self.cy, "cz": self.cz,
            "alpha_deg": self.alpha,
        }

    @staticmethod
    def from_dict(d):
        return OrientedBox(
            w=float(d["w"]), l=float(d["l"]), h=float(d["h"]),
            cx=float(d["cx"]), cy=float(d["cy"]), cz=float(d["cz"]),
            alpha=float(d.get("alpha_deg", 0.0)),
        )


@dataclass(frozen=True)
class Plane:
    """Plane n.x + d = 0 with unit normal n."""

    nx: float
    ny: float
    nz: float
    d: float

    @property
    def normal(self):
        return np.array([self.nx, self.ny, self.nz])

    def distance(self, points):
        pts = as_points(points)
        return np.abs(pts @ self.normal + self.d)


def as_points(points):
    """Coerce to an (n, 3) float64 array and validate finiteness."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise GeometryError(f"expected an (n, 3) point array, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise GeometryError("point cloud contains non-finite coordinates")
    return pts


def min_area_obb(points):
    """Minimum top-down-area oriented box via a 1-degree yaw sweep.

    Rotates the cloud by each angle in {0, ..., 89} degrees, takes the
    axis-aligned extrema box of the rotated points and measures its xy
    area. Returns (alpha_hat, box) where alpha_hat is the sweep angle with
    the smallest area (ties broken toward the smaller angle) and box is
    expressed in the original coordinates.
    """
    pts = as_points(points)
    if pts.shape[0] < 2:
        raise GeometryError("need at least 2 points for an oriented box")
    xy = pts[:, :2]
    if np.max(np.ptp(xy, axis=0)) < 1e-12:
        raise GeometryError("points are coincident in the xy-plane")

    angles = np.arange(90)
    rad = np.radians(angles)
    c, s = np.cos(rad), np.sin(rad)
    # rotated coordinates for every sweep angle at once: (90, n)
    xr = np.outer(c, xy[:, 0]) - np.outer(s, xy[:, 1])
    yr = np.outer(s, xy[:, 0]) + np.outer(c, xy[:, 1])
    areas = np.ptp(xr, axis=1) * np.ptp(yr, axis=1)
    best = int(np.argmin(areas))  # argmin returns the first (smallest) angle on ties

    xb, yb = xr[best], yr[best]
    z = pts[:, 2]
    w = max(float(np.ptp(xb)), MIN_EXTENT)
    l = max(float(np.ptp(yb)), MIN_EXTENT)
    h = max(float(np.ptp(z)), MIN_EXTENT)
    center_rot = np.array([
        (xb.min() + xb.max()) / 2.0,
        (yb.min() + yb.max()) / 2.0,
        (z.min() + z.max()) / 2.0,
    ])
    # points were rotated by R(best); the box lives at yaw -best in the original frame
    center = rot_z(best).T @ center_rot
    box = OrientedBox(w=w, l=l, h=h, cx=center[0], cy=center[1], cz=center[2],
                      alpha=(360.0 - best) % 360.0)
    return best, box


def quarter_turn(box, k):
    """Rotate a box by k quarter turns about its own z-axis; w/l swap on odd k."""
    k = int(k) % 4
    w, l = (box.l, box.w) if k % 2 == 1 else (box.w, box.l)
    return replace(box, w=w, l=l, alpha=(box.alpha + 90.0 * k) % 360.0)


def canonical_front(box, points, category, manual_choice=None):
    """Resolve the four-fold yaw ambiguity of a minimum-area box.

    category 1: objects with two symmetry axes; the front is the largest
    of (w, l), so the long horizontal extent ends up along the box +y axis.
    category 2: apply the category-1 rule to find the front axis, then pick
    the direction the center of mass leans towards.
    category 3: manual annotation; manual_choice in {0, 1, 2, 3} quarter turns.
    """
    if category not in (1, 2, 3):
        raise GeometryError(f"unknown annotation category {category}")
    if category == 3:
        if manual_choice is None:
            raise GeometryError("category 3 requires a manual front choice")
        if int(manual_choice) not in (0, 1, 2, 3):
            raise GeometryError(f"manual_choice must be 0-3, got {manual_choice}")
        return quarter_turn(box, int(manual_choice))

    k = 0 if box.l >= box.w else 1
    if category == 1:
        return quarter_turn(box, k)

    turned = quarter_turn(box, k)
    pts = as_points(points)
    local = (pts - turned.centroid) @ rot_z(turned.alpha)  # R^T applied row-wise
    lean = float(np.mean(local[:, 1]))
    if lean < -1e-9:
        turned = quarter_turn(turned, 2)
    return turned


def refine_support(child, support_top_z):
    """Extend a floating box down to its support when the gap exceeds 10 cm.

    The box top never moves; only positive gaps beyond the threshold are
    repaired.
    """
    gap = child.bottom - float(support_top_z)
    if gap <= 0.10:
        return child
    return replace(child, h=child.h + gap, cz=child.cz - gap / 2.0)


def ransac_plane(points, iterations=256, inlier_threshold=0.02, rng=None):
    """RANSAC plane fit: best 3-point hypothesis by inlier count, refit by
    least squares on the inliers. Deterministic given the rng seed."""
    pts = as_points(points)
    n = pts.shape[0]
    if n < 3:
        raise GeometryError("need at least 3 points to fit a plane")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng

    best_count = 0
    best_inliers = None
    for _ in range(int(iterations)):
        idx = rng.choice(n, size=3, replace=False)
        p0, p1, p2 = pts[idx]
        normal = np.cross(p1 - p0, p2 - p0)
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue  # collinear sample
        normal = normal / norm
        d = -float(normal @ p0)
        dist = np.abs(pts @ normal + d)
        inliers = dist < inlier_threshold
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
    if best_inliers is None:
        raise GeometryError("all sampled hypotheses were collinear")

    sel = pts[best_inliers]
    centroid = sel.mean(axis=0)
    cov = (sel - centroid).T @ (sel - centroid)
    eigvals, eigvecs = np.linalg.eigh(cov)
    normal = eigvecs[:, 0]  # smallest-eigenvalue direction
    # canonical sign: largest-magnitude component positive
    lead = int(np.argmax(np.abs(normal)))
    if normal[lead] < 0:
        normal = -normal
    d = -float(normal @ centroid)
    return Plane(nx=float(normal[0]), ny=float(normal[1]), nz=float(normal[2]), d=d)


def _clip_polygon(poly, a, b):
    """Clip a convex polygon by the half-plane left of the directed edge a->b."""
    ex, ey = b[0] - a[0], b[1] - a[1]

    def inside(p):
        return ex * (p[1] - a[1]) - ey * (p[0] - a[0]) >= 0.0

    out = []
    m = len(poly)
    for i in range(m):
        cur, nxt = poly[i], poly[(i + 1) % m]
        cur_in, nxt_in = inside(cur), inside(nxt)
        if cur_in:
            out.append(cur)
        if cur_in != nxt_in:
            # intersection of segment cur->nxt with the clip line
            dx, dy = nxt[0] - cur[0], nxt[1] - cur[1]
            denom = ex * dy - ey * dx
            if abs(denom) < 1e-15:
                continue
            t = (ex * (a[1] - cur[1]) - ey * (a[0] - cur[0])) / denom
            out.append((cur[0] + t * dx, cur[1] + t * dy))
    return out


def _polygon_area(poly):
    if len(poly) < 3:
        return 0.0
    area = 0.0
    m = len(poly)
    for i in range(m):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % m]
        area += x0 * y1 - x1 * y0
    return abs(area) / 2.0


def footprint_intersection_area(a, b):
    """Exact intersection area of two yaw-only box footprints."""
    poly = [tuple(p) for p in a.footprint()]
    clip = [tuple(p) for p in b.footprint()]
    for i in range(4):
        poly = _clip_polygon(poly, clip[i], clip[(i + 1) % 4])
        if not poly:
            return 0.0
    return _polygon_area(poly)


def footprint_iou(a, b):
    """Top-down IoU of two boxes."""
    inter = footprint_intersection_area(a, b)
    union = a.w * a.l + b.w * b.l - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def box_iou(a, b, zero_centered=False):
    """Exact IoU of two yaw-only boxes: rotated-rectangle clipping in the
    xy-plane times the z-interval overlap. zero_centered moves both
    centroids to the origin first."""
    if zero_centered:
        a = replace(a, cx=0.0, cy=0.0, cz=0.0)
        b = replace(b, cx=0.0, cy=0.0, cz=0.0)
    z_overlap = min(a.top, b.top) - max(a.bottom, b.bottom)
    if z_overlap <= 0.0:
        return 0.0
    inter = footprint_intersection_area(a, b) * z_overlap
    union = a.volume + b.volume - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def _nearest_sq(a, b, chunk=256):
    out = np.empty(a.shape[0])
    for i in range(0, a.shape[0], chunk):
        d = a[i:i + chunk, None, :] - b[None, :, :]
        out[i:i + chunk] = np.einsum("ijk,ijk->ij", d, d).min(axis=1)
    return out


def chamfer(a, b):
    """Symmetric chamfer distance: mean squared nearest-neighbor distance
    from a to b plus the same from b to a."""
    pa, pb = as_points(a), as_points(b)
    return float(_nearest_sq(pa, pb).mean() + _nearest_sq(pb, pa).mean())


def transform_cloud(points, box, canonical_half_extents):
    """Map a canonical cloud into scene coordinates through a box: scale each
    axis so the canonical half-extent matches the box extent, rotate by the
    box yaw, then translate to the centroid."""
    pts = as_points(points)
    half = np.asarray(canonical_half_extents, dtype=np.float64)
    if np.any(half <= 0):
        raise GeometryError("canonical half-extents must be positive")
    scale = box.size / (2.0 * half)
    return (pts * scale) @ rot_z(box.alpha).T + box.centroid


def write_pointcloud(points, binary=False):
    """Serialize a cloud as a JSON array of [x, y, z] or the binary blob
    (magic, LE u64 count, count x 3 LE f32)."""
    pts = as_points(points)
    if not binary:
        return json.dumps([[float(v) for v in p] for p in pts]).encode("utf-8")
    header = POINTCLOUD_MAGIC + struct.pack("<Q", pts.shape[0])
    return header + pts.astype("<f4").tobytes()


def read_pointcloud(data):
    """Inverse of write_pointcloud; format detected from the magic prefix."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    if data[: len(POINTCLOUD_MAGIC)] == POINTCLOUD_MAGIC:
        off = len(POINTCLOUD_MAGIC)
        if len(data) < off + 8:
            raise GeometryError("truncated point-cloud blob: missing count")
        (count,) = struct.unpack_from("<Q", data, off)
        off += 8
        need = count * 12
        if len(data) < off + need:
            raise GeometryError(
                f"truncated point-cloud blob: expected {need} payload bytes, got {len(data) - off}")
        pts = np.frombuffer(data, dtype="<f4", count=count * 3, offset=off)
        return as_points(pts.reshape(count, 3).astype(np.float64))
    try:
        raw = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise GeometryError(f"unrecognized point-cloud payload: {err}") from err
    return as_points(raw)
