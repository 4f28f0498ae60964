import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphscene.geometry import (
    GeometryError,
    MIN_EXTENT,
    OrientedBox,
    box_iou,
    canonical_front,
    chamfer,
    footprint_iou,
    min_area_obb,
    quarter_turn,
    ransac_plane,
    read_pointcloud,
    refine_support,
    rot_z,
    transform_cloud,
    write_pointcloud,
)


def brute_force_obb(points):
    """Independent oracle: evaluate the top-down area at every integer sweep
    angle by projecting onto the rotated axes instead of rotating the cloud."""
    pts = np.asarray(points, dtype=np.float64)
    best_angle, best_area = None, math.inf
    for angle in range(90):
        a = math.radians(angle)
        u = np.array([math.cos(a), -math.sin(a)])  # image of x under R(angle)
        v = np.array([math.sin(a), math.cos(a)])
        du = pts[:, :2] @ u
        dv = pts[:, :2] @ v
        area = (du.max() - du.min()) * (dv.max() - dv.min())
        if area < best_area - 1e-15:
            best_area, best_angle = area, angle
    return best_angle, best_area


def monte_carlo_iou(a, b, n=200_000, seed=0):
    """Volume-sampling oracle for box IoU."""
    rng = np.random.default_rng(seed)
    lo = np.minimum(a.corners().min(axis=0), b.corners().min(axis=0))
    hi = np.maximum(a.corners().max(axis=0), b.corners().max(axis=0))
    pts = rng.uniform(lo, hi, size=(n, 3))

    def inside(box):
        local = (pts - box.centroid) @ rot_z(box.alpha)
        return np.all(np.abs(local) <= box.size / 2.0 + 1e-12, axis=1)

    ina, inb = inside(a), inside(b)
    inter = np.count_nonzero(ina & inb)
    union = np.count_nonzero(ina | inb)
    return inter / union if union else 0.0


def rect_cloud(w, l, alpha_deg, center=(0.0, 0.0, 0.0), n=40):
    """Dense rectangle outline rotated by alpha, for OBB tests."""
    ts = np.linspace(-0.5, 0.5, n)
    edges = [np.column_stack([ts * w, np.full(n, s * l / 2)]) for s in (-1, 1)]
    edges += [np.column_stack([np.full(n, s * w / 2), ts * l]) for s in (-1, 1)]
    xy = np.vstack(edges)
    pts = np.column_stack([xy, np.zeros(len(xy))])
    return pts @ rot_z(alpha_deg).T + np.asarray(center)


class TestMinAreaObb:
    def test_axis_aligned_unit_square(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
        alpha_hat, box = min_area_obb(pts)
        assert alpha_hat == 0
        assert box.w * box.l == pytest.approx(1.0)
        assert (box.w, box.l) == pytest.approx((1.0, 1.0))

    def test_square_rotated_30_degrees(self):
        pts = rect_cloud(1.0, 1.0, 30.0)
        alpha_hat, box = min_area_obb(pts)
        assert alpha_hat == 60  # 30 + 60 is 0 mod 90
        assert box.w == pytest.approx(1.0, abs=1e-9)
        assert box.l == pytest.approx(1.0, abs=1e-9)

    def test_two_diagonal_points_clamped(self):
        pts = np.array([[0, 0, 0], [1, 1, 0]], dtype=float)
        alpha_hat, box = min_area_obb(pts)
        # the diagonal aligns at 45 degrees; one extent collapses to the clamp
        assert alpha_hat == 45
        assert min(box.w, box.l) == MIN_EXTENT
        assert max(box.w, box.l) == pytest.approx(math.sqrt(2.0), abs=1e-9)

    def test_matches_brute_force_on_random_rectangles(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            w, l = rng.uniform(0.3, 3.0, size=2)
            alpha = rng.uniform(0, 360)
            center = rng.uniform(-2, 2, size=3)
            pts = rect_cloud(w, l, alpha, center, n=25)
            alpha_hat, box = min_area_obb(pts)
            oracle_angle, oracle_area = brute_force_obb(pts)
            assert abs(alpha_hat - oracle_angle) <= 1
            assert box.w * box.l == pytest.approx(oracle_area, abs=1e-9)

    def test_area_never_exceeds_aabb(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(60, 3))
        _, box = min_area_obb(pts)
        aabb = np.ptp(pts[:, 0]) * np.ptp(pts[:, 1])
        assert box.w * box.l <= aabb + 1e-12

    def test_translation_invariance(self):
        rng = np.random.default_rng(11)
        pts = rng.normal(size=(50, 3))
        shift = np.array([5.0, -3.0, 2.0])
        a1, b1 = min_area_obb(pts)
        a2, b2 = min_area_obb(pts + shift)
        assert a1 == a2
        np.testing.assert_allclose(b2.centroid, b1.centroid + shift, atol=1e-9)
        assert (b2.w, b2.l, b2.h) == pytest.approx((b1.w, b1.l, b1.h))

    def test_degenerate_input_rejected(self):
        pts = np.array([[1.0, 2.0, 0.0], [1.0, 2.0, 5.0]])
        with pytest.raises(GeometryError):
            min_area_obb(pts)


class TestCanonicalFront:
    def test_category1_long_axis_becomes_front(self):
        box = OrientedBox(w=2.0, l=1.0, h=1.0, cx=0, cy=0, cz=0, alpha=0)
        out = canonical_front(box, rect_cloud(2, 1, 0), category=1)
        assert (out.w, out.l) == (1.0, 2.0)
        assert out.alpha == 90.0

    def test_category1_already_canonical(self):
        box = OrientedBox(w=1.0, l=2.0, h=1.0, cx=0, cy=0, cz=0, alpha=0)
        out = canonical_front(box, rect_cloud(1, 2, 0), category=1)
        assert out == box

    def test_category2_symmetric_falls_back(self):
        box = OrientedBox(w=1.0, l=2.0, h=1.0, cx=0, cy=0, cz=0, alpha=0)
        pts = rect_cloud(1, 2, 0)
        out = canonical_front(box, pts, category=2)
        assert out == canonical_front(box, pts, category=1)

    def test_category2_leans_toward_mass(self):
        box = OrientedBox(w=1.0, l=2.0, h=1.0, cx=0, cy=0, cz=0, alpha=0)
        # all mass on the -y side: front must flip by 180
        pts = np.array([[0.1, -0.9, 0.0], [-0.1, -0.8, 0.0], [0.0, -0.95, 0.4]])
        out = canonical_front(box, pts, category=2)
        assert out.alpha == 180.0
        assert (out.w, out.l) == (1.0, 2.0)

    def test_category3_manual_choice(self):
        box = OrientedBox(w=1.0, l=2.0, h=1.0, cx=0, cy=0, cz=0, alpha=10.0)
        out = canonical_front(box, None, category=3, manual_choice=2)
        assert out.alpha == pytest.approx(190.0)
        assert (out.w, out.l) == (1.0, 2.0)

    def test_category3_requires_choice(self):
        box = OrientedBox(w=1, l=1, h=1, cx=0, cy=0, cz=0)
        with pytest.raises(GeometryError):
            canonical_front(box, None, category=3)

    def test_quarter_turn_swaps_extents(self):
        box = OrientedBox(w=1.0, l=2.0, h=3.0, cx=0, cy=0, cz=0, alpha=350.0)
        out = quarter_turn(box, 1)
        assert (out.w, out.l) == (2.0, 1.0)
        assert out.alpha == pytest.approx(80.0)


class TestRefineSupport:
    def test_floating_box_dropped_to_support(self):
        box = OrientedBox(w=1, l=1, h=0.4, cx=0, cy=0, cz=0.4)  # bottom at 0.2
        out = refine_support(box, 0.0)
        assert out.bottom == pytest.approx(0.0)
        assert out.h == pytest.approx(0.6)
        assert out.top == pytest.approx(box.top)

    def test_small_gap_untouched(self):
        box = OrientedBox(w=1, l=1, h=0.4, cx=0, cy=0, cz=0.25)  # gap 0.05
        assert refine_support(box, 0.0) == box

    def test_interpenetration_untouched(self):
        box = OrientedBox(w=1, l=1, h=0.4, cx=0, cy=0, cz=0.1)  # bottom below support
        assert refine_support(box, 0.0) == box


class TestRansacPlane:
    def test_noiseless_floor(self):
        rng = np.random.default_rng(0)
        pts = np.column_stack([rng.uniform(-1, 1, size=(100, 2)), np.zeros(100)])
        plane = ransac_plane(pts, rng=1)
        assert abs(plane.nz) == pytest.approx(1.0, abs=1e-9)
        assert plane.d == pytest.approx(0.0, abs=1e-9)

    def test_recovers_plane_among_outliers(self):
        rng = np.random.default_rng(5)
        inliers = np.column_stack([rng.uniform(-1, 1, size=(70, 2)), np.full(70, 1.0)])
        outliers = rng.uniform(-1, 2, size=(30, 3))
        pts = np.vstack([inliers, outliers])
        plane = ransac_plane(pts, inlier_threshold=0.02, rng=2)
        # all true inliers must be within the threshold of the fit
        assert np.all(plane.distance(inliers) < 0.02)

    def test_three_points_exact(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 1]], dtype=float)
        plane = ransac_plane(pts, rng=3)
        assert np.all(plane.distance(pts) < 1e-12)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(8)
        pts = rng.normal(size=(50, 3))
        assert ransac_plane(pts, rng=4) == ransac_plane(pts, rng=4)

    def test_collinear_rejected(self):
        pts = np.array([[float(i), 0.0, 0.0] for i in range(10)])
        with pytest.raises(GeometryError):
            ransac_plane(pts, iterations=16, rng=0)


class TestBoxIou:
    def test_identical_boxes(self):
        box = OrientedBox(w=1, l=2, h=3, cx=0.5, cy=-1, cz=2, alpha=33)
        assert box_iou(box, box) == pytest.approx(1.0)

    def test_disjoint_boxes(self):
        a = OrientedBox(w=1, l=1, h=1, cx=0, cy=0, cz=0)
        b = OrientedBox(w=1, l=1, h=1, cx=5, cy=0, cz=0)
        assert box_iou(a, b) == 0.0

    def test_half_offset_unit_cubes(self):
        a = OrientedBox(w=1, l=1, h=1, cx=0, cy=0, cz=0)
        b = OrientedBox(w=1, l=1, h=1, cx=0.5, cy=0, cz=0)
        assert box_iou(a, b) == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert monte_carlo_iou(a, b) == pytest.approx(1.0 / 3.0, abs=3e-3)

    def test_matches_monte_carlo_on_random_pairs(self):
        rng = np.random.default_rng(21)
        for i in range(10):
            a = OrientedBox(*rng.uniform(0.5, 2.0, 3), *rng.uniform(-0.5, 0.5, 3),
                            alpha=rng.uniform(0, 360))
            b = OrientedBox(*rng.uniform(0.5, 2.0, 3), *rng.uniform(-0.5, 0.5, 3),
                            alpha=rng.uniform(0, 360))
            exact = box_iou(a, b)
            approx = monte_carlo_iou(a, b, seed=i)
            assert exact == pytest.approx(approx, abs=0.01)

    def test_symmetry(self):
        a = OrientedBox(w=1, l=2, h=1, cx=0, cy=0, cz=0, alpha=15)
        b = OrientedBox(w=2, l=1, h=2, cx=0.7, cy=0.3, cz=0.2, alpha=80)
        assert box_iou(a, b) == pytest.approx(box_iou(b, a), abs=1e-12)

    def test_rigid_transform_invariance(self):
        a = OrientedBox(w=1, l=2, h=1, cx=0, cy=0, cz=0, alpha=15)
        b = OrientedBox(w=2, l=1, h=2, cx=0.7, cy=0.3, cz=0.2, alpha=80)
        base = box_iou(a, b)
        rot, shift = 57.0, np.array([3.0, -1.0, 0.5])

        def moved(box):
            c = rot_z(rot) @ box.centroid + shift
            return OrientedBox(w=box.w, l=box.l, h=box.h,
                               cx=c[0], cy=c[1], cz=c[2],
                               alpha=(box.alpha + rot) % 360.0)

        assert box_iou(moved(a), moved(b)) == pytest.approx(base, abs=1e-9)

    def test_zero_centered_ignores_position(self):
        a = OrientedBox(w=1, l=1, h=1, cx=0, cy=0, cz=0)
        b = OrientedBox(w=1, l=1, h=1, cx=10, cy=10, cz=10)
        assert box_iou(a, b, zero_centered=True) == pytest.approx(1.0)

    def test_footprint_iou_ignores_z(self):
        a = OrientedBox(w=1, l=1, h=1, cx=0, cy=0, cz=0)
        b = OrientedBox(w=1, l=1, h=5, cx=0, cy=0, cz=30)
        assert footprint_iou(a, b) == pytest.approx(1.0)


class TestChamfer:
    def test_identical_clouds(self):
        pts = np.random.default_rng(0).normal(size=(20, 3))
        assert chamfer(pts, pts) == 0.0

    def test_single_points_distance_one(self):
        a = np.array([[0.0, 0.0, 0.0]])
        b = np.array([[1.0, 0.0, 0.0]])
        assert chamfer(a, b) == pytest.approx(2.0)  # squared distance both ways

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=(15, 3)), rng.normal(size=(25, 3))
        assert chamfer(a, b) == pytest.approx(chamfer(b, a))

    def test_empty_rejected(self):
        with pytest.raises(GeometryError):
            chamfer(np.zeros((0, 3)), np.zeros((1, 3)))


class TestTransformCloud:
    def test_unit_cube_fills_box(self):
        # canonical points at the half-extent corners
        canon = np.array([[0.5, 0.5, 0.5], [-0.5, -0.5, -0.5]])
        box = OrientedBox(w=2, l=4, h=6, cx=1, cy=2, cz=3, alpha=0)
        out = transform_cloud(canon, box, (0.5, 0.5, 0.5))
        np.testing.assert_allclose(out[0], [2.0, 4.0, 6.0])
        np.testing.assert_allclose(out[1], [0.0, 0.0, 0.0])

    def test_rotation_applied(self):
        canon = np.array([[0.5, 0.0, 0.0]])
        box = OrientedBox(w=2, l=2, h=2, cx=0, cy=0, cz=0, alpha=90)
        out = transform_cloud(canon, box, (0.5, 0.5, 0.5))
        np.testing.assert_allclose(out[0], [0.0, 1.0, 0.0], atol=1e-12)


class TestPointcloudIo:
    @given(st.integers(min_value=1, max_value=64), st.booleans())
    @settings(max_examples=25, deadline=None)
    def test_round_trip(self, n, binary):
        rng = np.random.default_rng(n)
        pts = rng.normal(size=(n, 3))
        if binary:
            out = read_pointcloud(write_pointcloud(pts, binary=True))
            np.testing.assert_allclose(out, pts, atol=1e-6)  # f32 payload
        else:
            out = read_pointcloud(write_pointcloud(pts))
            np.testing.assert_allclose(out, pts)

    def test_truncated_binary_rejected(self):
        blob = write_pointcloud(np.ones((4, 3)), binary=True)
        with pytest.raises(GeometryError):
            read_pointcloud(blob[:-5])

    def test_garbage_rejected(self):
        with pytest.raises(GeometryError):
            read_pointcloud(b"not a cloud")
