import math

import numpy as np
import pytest

from miqplan.regions import (
    DrivingLimits,
    InvalidCount,
    OriginUndefined,
    Region,
    build_regions,
    classify,
    compute_region_mask,
    rotate_limits,
)

TWO_PI = 2 * math.pi


class TestBuildRegions:
    def test_quadrant_split(self):
        regions = build_regions(4)
        r0 = regions[0]
        assert r0.theta_min == 0.0
        assert r0.theta_max == pytest.approx(math.pi / 2)
        assert (r0.alpha, r0.beta) == pytest.approx((1.0, 0.0))
        assert (r0.gamma, r0.delta) == pytest.approx((0.0, 1.0), abs=1e-15)

    def test_32_region_width(self):
        regions = build_regions(32)
        for r in regions:
            assert math.degrees(r.theta_max - r.theta_min) == pytest.approx(11.25)

    def test_16_region_last_span(self):
        regions = build_regions(16)
        assert math.degrees(regions[15].theta_min) == pytest.approx(337.5)
        assert math.degrees(regions[15].theta_max) == pytest.approx(360.0)

    def test_invalid_counts(self):
        for bad in (0, 3, 12, 33, -8):
            with pytest.raises(InvalidCount):
                build_regions(bad)

    def test_borderlines_are_unit_and_consistent(self):
        for n in (4, 8, 32):
            for r in build_regions(n):
                assert math.hypot(r.alpha, r.beta) == pytest.approx(1.0)
                assert math.hypot(r.gamma, r.delta) == pytest.approx(1.0)
                assert math.atan2(r.beta, r.alpha) % TWO_PI == pytest.approx(
                    r.theta_min % TWO_PI, abs=1e-12
                )


class TestRotateLimits:
    def test_zero_rotation_identity(self):
        region = Region(0, 1.0, 0.0, 1.0, 0.0, -0.0, 0.0)
        lim = rotate_limits(DrivingLimits(), region)
        assert (lim.ax_lo, lim.ax_hi) == pytest.approx((-8.0, 5.0))
        assert (lim.ay_lo, lim.ay_hi) == pytest.approx((-4.0, 4.0))

    def test_quarter_turn_swaps_axes(self):
        hp = math.pi / 2
        region = Region(0, math.cos(hp), math.sin(hp), math.cos(hp), math.sin(hp), hp, hp)
        lim = rotate_limits(DrivingLimits(), region)
        assert (lim.ax_lo, lim.ax_hi) == pytest.approx((-4.0, 4.0))
        assert (lim.ay_lo, lim.ay_hi) == pytest.approx((-8.0, 5.0))

    def test_45_degree_bounding_box(self):
        q = math.pi / 4
        region = Region(0, math.cos(q), math.sin(q), math.cos(q), math.sin(q), q, q)
        lim = rotate_limits(DrivingLimits(), region)
        assert lim.ax_lo == pytest.approx(-12 / math.sqrt(2), abs=1e-3)  # -8.485
        assert lim.ax_hi == pytest.approx(9 / math.sqrt(2), abs=1e-3)  # 6.364

    def test_rotated_box_contained_at_theta_mid(self):
        rng = np.random.default_rng(5)
        driving = DrivingLimits()
        for region in build_regions(16):
            lim = rotate_limits(driving, region)
            c, s = math.cos(region.theta_mid), math.sin(region.theta_mid)
            for _ in range(50):
                lon = rng.uniform(driving.a_lon_lo, driving.a_lon_hi)
                lat = rng.uniform(driving.a_lat_lo, driving.a_lat_hi)
                gx, gy = c * lon - s * lat, s * lon + c * lat
                assert lim.ax_lo - 1e-12 <= gx <= lim.ax_hi + 1e-12
                assert lim.ay_lo - 1e-12 <= gy <= lim.ay_hi + 1e-12


class TestRegionMask:
    def test_zero_reach_single_region(self):
        regions = build_regions(32)
        mask = compute_region_mask(0.0, 0.0, 0.5, regions)
        assert mask.allowed_indices() == [0]

    def test_full_circle(self):
        regions = build_regions(32)
        mask = compute_region_mask(0.0, 10.0, 0.5, regions)
        assert all(mask.allowed)

    def test_interval_intersection_oracle(self):
        regions = build_regions(32)
        heading = math.radians(45)
        reach = 0.5 * 2.0
        mask = compute_region_mask(heading, 2.0, 0.5, regions)
        # oracle: densely sample the reach interval, bin each angle
        width = TWO_PI / 32
        expect = set()
        for t in np.linspace(heading - reach, heading + reach, 200001):
            expect.add(int((t % TWO_PI) // width) % 32)
        assert set(mask.allowed_indices()) == expect
        assert len(mask.allowed_indices()) in (11, 12)

    def test_wraparound_heading(self):
        regions = build_regions(16)
        mask = compute_region_mask(math.radians(350), 1.0, 0.3, regions)
        idx = set(mask.allowed_indices())
        assert 15 in idx and 0 in idx  # straddles 0


class TestClassify:
    def test_axis_direction(self):
        regions = build_regions(4)
        assert classify(1.0, 0.0, regions) == 0

    def test_negative_y_axis(self):
        regions = build_regions(4)
        # atan2 = -90 deg == 270 deg, in [270, 360)
        assert classify(0.0, -1.0, regions) == 3

    def test_diagonal_32(self):
        regions = build_regions(32)
        # 45 deg lies in [45, 56.25)
        assert classify(1.0, 1.0, regions) == 4

    def test_origin_rejected(self):
        with pytest.raises(OriginUndefined):
            classify(0.0, 0.0, build_regions(4))

    def test_partition_property(self):
        regions = build_regions(32)
        width = TWO_PI / 32
        rng = np.random.default_rng(123)
        v = rng.normal(size=(100_000, 2)) * 10
        for vx, vy in v:
            if vx == 0 and vy == 0:
                continue
            idx = classify(vx, vy, regions)
            # oracle: atan2 angular binning
            assert idx == int((math.atan2(vy, vx) % TWO_PI) // width) % 32
            # exactly one region's half-plane pair accepts strictly interior points
            hits = [
                r.index
                for r in regions
                if r.alpha * vy - r.beta * vx >= 0 and r.gamma * vy - r.delta * vx <= 0
            ]
            assert idx in hits
            assert len(hits) <= 2  # 2 only on borderlines

    def test_halfplane_membership_on_borderline(self):
        regions = build_regions(8)
        for i, r in enumerate(regions):
            vx, vy = 3 * r.alpha, 3 * r.beta
            assert classify(vx, vy, regions) == i
