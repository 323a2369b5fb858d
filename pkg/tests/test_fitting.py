import math

import numpy as np
import pytest

from miqplan.fitting import (
    FitConfig,
    LinearPoly2,
    SpansQuadrants,
    build_region_table,
    fit_kappa_bounds,
    fit_trig_bounds,
    fit_trig_const,
    front_axle_bounds_error,
    kappa_target,
    load_region_table,
    max_orientation_errors,
    orientation_error,
    save_region_table,
)
from miqplan.regions import Region, build_regions


def make_region(lo_deg: float, hi_deg: float, index: int = 0) -> Region:
    lo, hi = math.radians(lo_deg), math.radians(hi_deg)
    return Region(index, math.cos(lo), math.sin(lo), math.cos(hi), math.sin(hi), lo, hi)


class TestTrigConst:
    def test_first_region_32(self):
        region = make_region(0.0, 11.25)
        s_ub, s_lb, c_ub, c_lb = fit_trig_const(region)
        assert s_ub == pytest.approx(math.sin(math.radians(11.25)), abs=1e-12)
        assert s_lb == 0.0
        assert c_ub == pytest.approx(1.0)
        assert c_lb == pytest.approx(math.cos(math.radians(11.25)), abs=1e-12)

    def test_full_quadrant_valid(self):
        region = make_region(0.0, 90.0)
        s_ub, s_lb, c_ub, c_lb = fit_trig_const(region)
        assert (s_ub, s_lb) == pytest.approx((1.0, 0.0), abs=1e-12)
        assert (c_ub, c_lb) == pytest.approx((1.0, 0.0), abs=1e-12)

    def test_quadrant_crossing_rejected(self):
        with pytest.raises(SpansQuadrants):
            fit_trig_const(make_region(80.0, 100.0))

    def test_brackets_whole_region(self):
        # within one quadrant the constants bracket sin/cos at every angle
        for lo, hi in ((0, 22.5), (45, 67.5), (90, 112.5), (247.5, 270)):
            region = make_region(lo, hi)
            s_ub, s_lb, c_ub, c_lb = fit_trig_const(region)
            for th in np.linspace(region.theta_min, region.theta_max, 100):
                assert s_lb - 1e-12 <= math.sin(th) <= s_ub + 1e-12
                assert c_lb - 1e-12 <= math.cos(th) <= c_ub + 1e-12


class TestTrigBounds:
    def test_bound_property_random_oracle(self):
        cfg = FitConfig(region_count=16)
        rng = np.random.default_rng(17)
        for region in build_regions(16)[:4]:
            sin_ub, sin_lb, cos_ub, cos_lb = fit_trig_bounds(region, cfg)
            # random points anywhere in the wedge annulus, denser than any
            # fit grid and independent of it
            th = rng.uniform(region.theta_min, region.theta_max, 4000)
            r = rng.uniform(cfg.v_min_bound, cfg.v_max, 4000)
            vx, vy = r * np.cos(th), r * np.sin(th)
            assert np.all(sin_ub(vx, vy) >= np.sin(th) - 1e-9)
            assert np.all(sin_lb(vx, vy) <= np.sin(th) + 1e-9)
            assert np.all(cos_ub(vx, vy) >= np.cos(th) - 1e-9)
            assert np.all(cos_lb(vx, vy) <= np.cos(th) + 1e-9)

    def test_degenerate_region_constant(self):
        region = make_region(30.0, 30.0 + 1e-8)
        sin_ub, sin_lb, cos_ub, cos_lb = fit_trig_bounds(region, FitConfig())
        assert sin_ub.p10 == sin_ub.p01 == 0.0
        assert sin_ub.p00 == pytest.approx(0.5, abs=1e-6)
        assert sin_ub.coeffs() == sin_lb.coeffs()

    def test_diagonal_sample_bracketed(self):
        # n=4 first region at the 45-degree sample
        region = build_regions(4)[0]
        sin_ub, sin_lb, _, _ = fit_trig_bounds(region, FitConfig(region_count=4))
        s = math.sin(math.pi / 4)
        assert sin_lb(1.0, 1.0) <= s + 1e-9
        assert sin_ub(1.0, 1.0) >= s - 1e-9


class TestKappaBounds:
    def test_target_plugin(self):
        # straight-line motion in region 0: (kmax / vx) * |v|^3
        assert kappa_target(0.1, 10.0, 0.0) == pytest.approx(10.0)
        assert kappa_target(0.2, 10.0, 0.0) == pytest.approx(20.0)

    def test_symmetric_kappa_mirrors(self):
        region = build_regions(32)[3]
        ub, lb = fit_kappa_bounds(region, -0.15, 0.15, FitConfig())
        assert lb.coeffs() == pytest.approx([-c for c in ub.coeffs()], rel=1e-12)

    def test_relative_rms_regression(self, table32):
        # frozen fit-quality level for regions away from vertical motion
        worst = 0.0
        for region in table32.regions:
            if abs(math.cos(region.theta_mid)) < 0.5:
                continue
            fit = table32.fits[region.index]
            phis = np.linspace(region.theta_min, region.theta_max, 64)
            phis = phis[np.abs(np.cos(phis)) >= 0.05]
            radii = np.linspace(table32.v_min_fit, table32.v_hi, 100)
            ph, rr = np.meshgrid(phis, radii, indexing="ij")
            vx, vy = (rr * np.cos(ph)).ravel(), (rr * np.sin(ph)).ravel()
            target = kappa_target(table32.kappa_max, vx, vy)
            pred = fit.kappa_ub(vx, vy)
            rel = np.sqrt(np.mean((pred - target) ** 2) / np.mean(target**2))
            worst = max(worst, rel)
        assert worst <= 0.40

    def test_invalid_kappa_signs(self):
        with pytest.raises(ValueError):
            fit_kappa_bounds(build_regions(8)[0], 0.1, 0.2, FitConfig())


class TestFrontAxleErrors:
    def test_sign_property_everywhere(self, table32):
        rng = np.random.default_rng(4)
        for _ in range(200):
            theta = rng.uniform(0, 2 * math.pi)
            mode = "const" if rng.uniform() < 0.5 else "velocity"
            speed = rng.uniform(table32.v_min_bound, table32.v_hi)
            ex_lo, ex_hi, ey_lo, ey_hi = front_axle_bounds_error(
                table32, theta, speed, mode
            )
            assert ex_lo >= -1e-9 and ey_lo >= -1e-9
            assert ex_hi <= 1e-9 and ey_hi <= 1e-9

    def test_paper_const_cell_32(self, table32):
        # theta=0, const mode: y errors (0.00, -l*sin(11.25 deg))
        _, _, ey_lo, ey_hi = front_axle_bounds_error(table32, 0.0, 0.0, "const")
        assert ey_lo == pytest.approx(0.0, abs=1e-12)
        assert ey_hi == pytest.approx(-2.7 * math.sin(math.radians(11.25)), abs=1e-9)

    def test_border_angle_uses_lower_indexed_region(self, table32):
        # 45 deg ties regions 3 and 4; the lower index ([33.75, 45]) wins,
        # so sin_ub equals sin(45 deg) there and the y upper error vanishes
        _, _, ey_lo, ey_hi = front_axle_bounds_error(
            table32, math.radians(45), 0.0, "const"
        )
        assert ey_hi == pytest.approx(0.0, abs=1e-12)
        assert ey_lo == pytest.approx(
            2.7 * (math.sin(math.radians(45)) - math.sin(math.radians(33.75))), abs=1e-9
        )

    def test_near_origin_gap_exceeds_high_speed_gap(self, table32):
        for theta in (0.03, 0.8, 2.0):
            e_slow = front_axle_bounds_error(table32, theta, 0.1, "velocity")
            e_fast = front_axle_bounds_error(table32, theta, 20.0, "velocity")
            gap_slow = max(e_slow[0] - e_slow[1], e_slow[2] - e_slow[3])
            gap_fast = max(e_fast[0] - e_fast[1], e_fast[2] - e_fast[3])
            assert gap_slow > gap_fast


class TestMonotoneImprovement:
    def test_gap_shrinks_with_region_count(self, table16, table32, table64):
        for theta_deg in (0, 45, 90):
            gaps = []
            for table in (table16, table32, table64):
                e = front_axle_bounds_error(
                    table, math.radians(theta_deg), 20.0, "velocity"
                )
                gaps.append(max(e[0] - e[1], e[2] - e[3]))
            assert gaps[2] <= gaps[1] + 1e-12
            assert gaps[1] <= gaps[0] + 1e-12


class TestOrientationError:
    def test_exact_value_zero_error(self):
        assert orientation_error(math.sin(0.3), 0.3, "sin") == pytest.approx(0.0, abs=1e-9)
        assert orientation_error(math.cos(0.3), 0.3, "cos") == pytest.approx(0.0, abs=1e-9)

    def test_known_offsets(self):
        assert orientation_error(math.sin(0.5), 0.4, "sin") == pytest.approx(0.1, abs=1e-9)
        # clipping: bound beyond 1 maps to the nearest right angle
        assert orientation_error(1.3, math.pi / 2, "sin") == pytest.approx(0.0, abs=1e-12)

    def test_reflected_branch(self):
        # sin(2.8) == sin(pi - 2.8); nearest branch to 2.8 must be chosen
        assert orientation_error(math.sin(2.8), 2.8, "sin") == pytest.approx(0.0, abs=1e-9)

    def test_max_errors_near_region_width(self, table32):
        errs = max_orientation_errors(table32)
        width = 2 * math.pi / 32
        assert errs.max() <= width + 0.01
        assert errs.max() > 0.1  # inner-radius corners dominate


class TestPersistence:
    def test_round_trip_value_exact(self, tmp_path, table16):
        path = tmp_path / "table.json"
        save_region_table(table16, path)
        loaded = load_region_table(path)
        assert loaded.region_count == table16.region_count
        assert loaded.kappa_max == table16.kappa_max
        for a, b in zip(table16.fits, loaded.fits):
            assert a.sin_ub.coeffs() == b.sin_ub.coeffs()
            assert a.kappa_lb.coeffs() == b.kappa_lb.coeffs()
            assert a.cos_lb_const == b.cos_lb_const
        for a, b in zip(table16.regions, loaded.regions):
            assert a == b
        for a, b in zip(table16.limits, loaded.limits):
            assert a == b

    def test_parallel_build_matches_serial(self):
        cfg_serial = FitConfig(region_count=8)
        cfg_par = FitConfig(region_count=8, workers=4)
        t1 = build_region_table(cfg_serial)
        t2 = build_region_table(cfg_par)
        for a, b in zip(t1.fits, t2.fits):
            assert a.sin_ub.coeffs() == b.sin_ub.coeffs()
            assert a.kappa_ub.coeffs() == b.kappa_ub.coeffs()
