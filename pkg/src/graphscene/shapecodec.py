"""Parametric shape codec: a deterministic, invertible stand-in for a learned
canonical shape space. Encodes superquadric primitives into 128-dim codes and
decodes codes back to canonical-pose point clouds.

The rest of the system only sees the encode / decode / nearest contract over
128-vectors, so a learned codec can be swapped in behind the same surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CODE_WIDTH = 128
EXPONENT_RANGE = (0.2, 2.0)
# canonical half-extents: shapes are size-normalized, boxes carry real scale
EXTENT_RANGE = (0.01, 0.5)
ONE_HOT_GAIN = 0.1
GOLDEN = 0.6180339887498949


class CodecError(ValueError):
    pass


@dataclass(frozen=True)
class PrimitiveParams:
    """Superquadric primitive: half-extents plus the two shape exponents."""

    category_id: int
    ax: float
    ay: float
    az: float
    e1: float
    e2: float

    @property
    def half_extents(self):
        return np.array([self.ax, self.ay, self.az])


class ShapeCodec:
    """Deterministic injective packing of primitive parameters into unit-norm
    128-vectors: dims 0-4 hold the range-normalized (ax, ay, az, e1, e2),
    the next num_categories dims a scaled one-hot, and the tail a fixed
    category-keyed pattern that spreads codes across the full space."""

    def __init__(self, num_categories, code_width=CODE_WIDTH):
        if num_categories < 1 or 5 + num_categories >= code_width:
            raise CodecError(f"cannot fit {num_categories} categories into width {code_width}")
        self.num_categories = int(num_categories)
        self.code_width = int(code_width)
        tail = self.code_width - 5 - self.num_categories
        self._patterns = np.stack([
            np.random.default_rng(1000 + c).normal(0.0, 0.05, size=tail)
            for c in range(self.num_categories)
        ])

    def _check_params(self, p):
        if not (0 <= p.category_id < self.num_categories):
            raise CodecError(f"category_id {p.category_id} out of range")
        lo, hi = EXTENT_RANGE
        for name, v in (("ax", p.ax), ("ay", p.ay), ("az", p.az)):
            if not (lo <= v <= hi):
                raise CodecError(f"half-extent {name}={v} outside [{lo}, {hi}]")
        lo, hi = EXPONENT_RANGE
        for name, v in (("e1", p.e1), ("e2", p.e2)):
            if not (lo <= v <= hi):
                raise CodecError(f"exponent {name}={v} outside [{lo}, {hi}]")

    @staticmethod
    def _to_unit(v, rng):
        return (v - rng[0]) / (rng[1] - rng[0])

    @staticmethod
    def _from_unit(u, rng):
        return rng[0] + u * (rng[1] - rng[0])

    def encode(self, params):
        """Pack valid primitive params into a unit-norm shape code."""
        self._check_params(params)
        raw = np.zeros(self.code_width)
        raw[0] = self._to_unit(params.ax, EXTENT_RANGE)
        raw[1] = self._to_unit(params.ay, EXTENT_RANGE)
        raw[2] = self._to_unit(params.az, EXTENT_RANGE)
        raw[3] = self._to_unit(params.e1, EXPONENT_RANGE)
        raw[4] = self._to_unit(params.e2, EXPONENT_RANGE)
        raw[5 + params.category_id] = ONE_HOT_GAIN
        raw[5 + self.num_categories:] = self._patterns[params.category_id]
        return raw / np.linalg.norm(raw)

    def unpack(self, code):
        """Nearest valid primitive params for an arbitrary 128-vector."""
        code = np.asarray(code, dtype=np.float64)
        if code.shape != (self.code_width,):
            raise CodecError(f"expected a {self.code_width}-vector, got shape {code.shape}")
        if not np.all(np.isfinite(code)):
            raise CodecError("shape code contains non-finite values")
        onehot = code[5:5 + self.num_categories]
        cat = int(np.argmax(onehot))
        peak = onehot[cat]
        scl = ONE_HOT_GAIN / peak if peak > 1e-9 else 1.0
        u = np.clip(code[:5] * scl, 0.0, 1.0)
        return PrimitiveParams(
            category_id=cat,
            ax=self._from_unit(u[0], EXTENT_RANGE),
            ay=self._from_unit(u[1], EXTENT_RANGE),
            az=self._from_unit(u[2], EXTENT_RANGE),
            e1=self._from_unit(u[3], EXPONENT_RANGE),
            e2=self._from_unit(u[4], EXPONENT_RANGE),
        )

    def nearest(self, code):
        """Project an arbitrary vector onto the valid code manifold
        (clamped parameter block, canonical category blocks, unit norm).
        Idempotent, and the identity on already-valid codes."""
        return self.encode(self.unpack(code))

    def decode(self, code, n_points=256):
        """Decode to a canonical-pose point cloud on the superquadric surface."""
        if n_points < 1:
            raise CodecError("n_points must be >= 1")
        p = self.unpack(code)
        return sample_superquadric(p, n_points)


def sample_superquadric(params, n_points):
    """Deterministic surface sampling by stratified spherical angles.

    Points come in quadruples reflected in x and z so the cloud's centroid is
    exactly centred along those axes; remainder points sit on the y-axis
    poles, which are on-surface and x/z-neutral.
    """
    a = params.half_extents
    e1, e2 = params.e1, params.e2
    m, r = divmod(int(n_points), 4)
    pts = []
    if m > 0:
        k = np.arange(m)
        eta = np.arcsin((k + 0.5) / m)              # (0, pi/2): z >= 0
        omega = np.pi * ((k * GOLDEN + 0.25) % 1.0) - np.pi / 2  # (-pi/2, pi/2): x > 0
        ce, se = np.cos(eta), np.sin(eta)
        co, so = np.cos(omega), np.sin(omega)
        x = a[0] * ce ** e1 * np.abs(co) ** e2
        y = a[1] * ce ** e1 * np.sign(so) * np.abs(so) ** e2
        z = a[2] * se ** e1
        quad = np.column_stack([x, y, z])
        pts.append(quad)
        pts.append(quad * np.array([-1.0, 1.0, 1.0]))
        pts.append(quad * np.array([1.0, 1.0, -1.0]))
        pts.append(quad * np.array([-1.0, 1.0, -1.0]))
    for i in range(r):
        sign = 1.0 if i % 2 == 0 else -1.0
        pts.append(np.array([[0.0, sign * a[1], 0.0]]))
    return np.vstack(pts)


def implicit_surface(params, points):
    """Superquadric implicit function; 1.0 everywhere on the surface."""
    p = np.asarray(points, dtype=np.float64)
    a = params.half_extents
    e1, e2 = params.e1, params.e2
    fx = np.abs(p[:, 0] / a[0]) ** (2.0 / e2)
    fy = np.abs(p[:, 1] / a[1]) ** (2.0 / e2)
    fz = np.abs(p[:, 2] / a[2]) ** (2.0 / e1)
    return (fx + fy) ** (e2 / e1) + fz
