"""Orientation regions: wedges of the (v_x, v_y) plane.

Each region is bounded by two unit borderline directions through the
origin.  A velocity vector lies in the region when it is on or left of
the lower borderline and on or right of the upper one:

    alpha * v_y - beta  * v_x >= 0      (lower borderline)
    gamma * v_y - delta * v_x <= 0      (upper borderline)

which is the half-plane form of the two borderline cross products.
Acceleration and jerk limits given in the driving frame are rotated into
the global frame using the mean angle of each region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


class InvalidCount(ValueError):
    pass


class OriginUndefined(ValueError):
    pass


@dataclass(frozen=True)
class Region:
    index: int
    alpha: float
    beta: float
    gamma: float
    delta: float
    theta_min: float
    theta_max: float

    @property
    def theta_mid(self) -> float:
        return 0.5 * (self.theta_min + self.theta_max)

    def contains_angle(self, theta: float) -> bool:
        """Closed-wedge membership of an angle (wrapped to [0, 2pi))."""
        t = theta % TWO_PI
        lo = self.theta_min % TWO_PI
        hi = self.theta_max
        width = self.theta_max - self.theta_min
        d = (t - lo) % TWO_PI
        return d <= width + 1e-12 or d >= TWO_PI - 1e-12


@dataclass(frozen=True)
class RegionLimits:
    ax_lo: float
    ax_hi: float
    ay_lo: float
    ay_hi: float
    ux_lo: float
    ux_hi: float
    uy_lo: float
    uy_hi: float

    def __post_init__(self):
        for lo, hi in ((self.ax_lo, self.ax_hi), (self.ay_lo, self.ay_hi),
                       (self.ux_lo, self.ux_hi), (self.uy_lo, self.uy_hi)):
            if not lo < hi:
                raise ValueError(f"limit pair not ordered: [{lo}, {hi}]")


@dataclass(frozen=True)
class DrivingLimits:
    """Comfort limits in the vehicle's driving frame (lon = forward)."""

    a_lon_lo: float = -8.0
    a_lon_hi: float = 5.0
    a_lat_lo: float = -4.0
    a_lat_hi: float = 4.0
    j_lon_lo: float = -10.0
    j_lon_hi: float = 10.0
    j_lat_lo: float = -10.0
    j_lat_hi: float = 10.0


@dataclass(frozen=True)
class RegionMask:
    allowed: tuple[bool, ...]

    def __post_init__(self):
        if not any(self.allowed):
            raise ValueError("mask disables every region")

    def allowed_indices(self) -> list[int]:
        return [i for i, a in enumerate(self.allowed) if a]


def build_regions(region_count: int) -> list[Region]:
    """Equal angular tiling of [0, 2pi) anchored at 0 rad."""
    if region_count < 4 or region_count & (region_count - 1) != 0:
        raise InvalidCount(f"region count must be a power of two >= 4, got {region_count}")
    width = TWO_PI / region_count
    regions = []
    for i in range(region_count):
        lo = i * width
        hi = (i + 1) * width
        regions.append(
            Region(
                index=i,
                alpha=math.cos(lo),
                beta=math.sin(lo),
                gamma=math.cos(hi),
                delta=math.sin(hi),
                theta_min=lo,
                theta_max=hi,
            )
        )
    return regions


def rotate_limits(driving: DrivingLimits, region: Region) -> RegionLimits:
    """Rotate the driving-frame limit box by the region's mean angle and
    take the axis-aligned bounding box of the rotated corners."""
    c = math.cos(region.theta_mid)
    s = math.sin(region.theta_mid)

    def box(lon_lo, lon_hi, lat_lo, lat_hi):
        xs, ys = [], []
        for lon in (lon_lo, lon_hi):
            for lat in (lat_lo, lat_hi):
                xs.append(c * lon - s * lat)
                ys.append(s * lon + c * lat)
        return min(xs), max(xs), min(ys), max(ys)

    ax_lo, ax_hi, ay_lo, ay_hi = box(
        driving.a_lon_lo, driving.a_lon_hi, driving.a_lat_lo, driving.a_lat_hi
    )
    ux_lo, ux_hi, uy_lo, uy_hi = box(
        driving.j_lon_lo, driving.j_lon_hi, driving.j_lat_lo, driving.j_lat_hi
    )
    return RegionLimits(ax_lo, ax_hi, ay_lo, ay_hi, ux_lo, ux_hi, uy_lo, uy_hi)


def compute_region_mask(
    initial_heading: float,
    horizon: float,
    max_yaw_rate: float,
    regions: list[Region],
) -> RegionMask:
    """Allow only regions reachable by yawing for the whole horizon.

    A region is allowed iff its half-open angular interval intersects
    [initial_heading - max_yaw_rate*horizon, initial_heading + ...].
    """
    if max_yaw_rate <= 0:
        raise ValueError("max_yaw_rate must be positive")
    reach = max_yaw_rate * horizon
    if reach >= math.pi:
        return RegionMask(tuple(True for _ in regions))
    lo = (initial_heading - reach) % TWO_PI
    span = 2.0 * reach
    allowed = []
    for r in regions:
        # shift so the region occupies [0, width); the closed reach
        # interval then occupies [start, start + span] and intersects the
        # region iff it starts inside it or wraps past 0 (= theta_min)
        start = (lo - r.theta_min) % TWO_PI
        width = r.theta_max - r.theta_min
        allowed.append(start < width or start + span >= TWO_PI)
    return RegionMask(tuple(allowed))


def classify(vx: float, vy: float, regions: list[Region]) -> int:
    """Index of the region containing velocity (vx, vy).

    Uses half-open angular binning [theta_min, theta_max), equivalent to
    the borderline half-plane tests with borderline angles assigned to
    the region they open."""
    if vx == 0.0 and vy == 0.0:
        raise OriginUndefined("region of the zero velocity vector is undefined")
    theta = math.atan2(vy, vx) % TWO_PI
    width = TWO_PI / len(regions)
    d = theta / width
    idx = int(d)
    if d - idx >= 1.0 - 1e-9:
        # angles a rounding error below a borderline belong to the region
        # the borderline opens (half-open binning)
        idx += 1
    return idx % len(regions)
