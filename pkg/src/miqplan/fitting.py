"""Region-wise linear bounds for sin/cos of the velocity direction and
for the curvature-induced acceleration limits.

For every orientation region we fit first-order polynomials
``p00 + p10*vx + p01*vy`` that

* upper/lower bound ``sin(theta(v))`` and ``cos(theta(v))`` over the
  region's velocity wedge (constrained least squares, the bound side
  enforced at sample arcs and then certified analytically), and
* approximate the curvature targets ``(kappa/vx) * |v|^3`` used by the
  non-holonomy constraints (weighted unconstrained least squares).

Constant fallback bounds take the min/max of sin/cos at the two region
border angles, valid while a region stays within one quadrant.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .qp import QpProblem, QpStatus, solve_qp
from .regions import (
    DrivingLimits,
    Region,
    RegionLimits,
    build_regions,
    rotate_limits,
)

TWO_PI = 2.0 * math.pi
TABLE_VERSION = 1


class FitError(RuntimeError):
    pass


class IllConditioned(FitError):
    pass


class InfeasibleFit(FitError):
    pass


class SpansQuadrants(FitError):
    pass


@dataclass(frozen=True)
class LinearPoly2:
    p00: float
    p10: float
    p01: float

    def __call__(self, vx, vy):
        return self.p00 + self.p10 * vx + self.p01 * vy

    def coeffs(self) -> list[float]:
        return [self.p00, self.p10, self.p01]


@dataclass(frozen=True)
class RegionFit:
    sin_ub: LinearPoly2
    sin_lb: LinearPoly2
    cos_ub: LinearPoly2
    cos_lb: LinearPoly2
    kappa_ub: LinearPoly2
    kappa_lb: LinearPoly2
    sin_ub_const: float
    sin_lb_const: float
    cos_ub_const: float
    cos_lb_const: float


@dataclass(frozen=True)
class FitConfig:
    region_count: int = 32
    v_max: float = 20.0         # outer fit radius; also the per-axis speed bound
    v_min_fit: float = 0.3      # inner radius of the least-squares annulus
    v_min_bound: float = 0.1    # innermost radius where the bound side is enforced
    kappa_min: float = -0.2
    kappa_max: float = 0.2
    wheelbase: float = 2.7
    disk_radius: float = 1.0
    n_angles: int = 12
    n_radii: int = 25
    kappa_exponent: str = "three_halves"  # or "cube_root"
    driving_limits: DrivingLimits = field(default_factory=DrivingLimits)
    workers: int = 1


@dataclass(frozen=True)
class RegionTable:
    region_count: int
    v_lo: float
    v_hi: float
    v_min_fit: float
    v_min_bound: float
    kappa_min: float
    kappa_max: float
    wheelbase: float
    disk_radius: float
    regions: tuple[Region, ...]
    limits: tuple[RegionLimits, ...]
    fits: tuple[RegionFit, ...]

    def region_for_angle(self, theta: float) -> int:
        """Lowest-index region whose closed wedge contains the angle."""
        candidates = [r.index for r in self.regions if r.contains_angle(theta)]
        if not candidates:
            raise ValueError(f"no region contains angle {theta}")
        return min(candidates)


def _kappa_power(v_sq: np.ndarray, mode: str) -> np.ndarray:
    if mode == "three_halves":
        return v_sq ** 1.5
    if mode == "cube_root":
        return v_sq ** (1.0 / 3.0)
    raise ValueError(f"unknown kappa exponent mode {mode!r}")


def _sample_angles(region: Region, count: int) -> np.ndarray:
    return np.linspace(region.theta_min, region.theta_max, count)


def _design(phis: np.ndarray, radii: np.ndarray):
    """Cartesian design matrix [1, vx, vy] over an angle x radius grid."""
    ph, rr = np.meshgrid(phis, radii, indexing="ij")
    vx = (rr * np.cos(ph)).ravel()
    vy = (rr * np.sin(ph)).ravel()
    X = np.column_stack([np.ones_like(vx), vx, vy])
    return X, ph.ravel(), vx, vy


def _constrained_fit(X, y, Xc, yc, upper: bool) -> np.ndarray:
    """Least squares min ||Xp - y||^2 with p bounded one-sided at the
    constraint samples: X_c p >= y_c (upper) or <= y_c (lower)."""
    gram = X.T @ X
    cond = np.linalg.cond(gram)
    if cond > 1e12:
        raise IllConditioned(f"normal equation condition number {cond:.3e}")
    Q = 2.0 * gram
    c = -2.0 * (X.T @ y)
    if upper:
        A_in, b_in = -Xc, -yc
    else:
        A_in, b_in = Xc, yc
    sol = solve_qp(QpProblem(Q, c, A_in=A_in, b_in=b_in))
    if sol.status == QpStatus.INFEASIBLE:
        raise InfeasibleFit("bound-side constraints infeasible")
    if sol.status != QpStatus.OPTIMAL:
        raise FitError(f"constrained fit did not converge: {sol.status}")
    return sol.primal


def _certify_lift(p: np.ndarray, region: Region, f, r_lo: float, r_hi: float,
                  upper: bool) -> float:
    """Shift p00 so the bound holds on the whole wedge annulus.

    The gap poly - f is linear in the radius, so it attains its minimum
    on one of the two extreme arcs; a dense sweep plus a second
    derivative margin makes the certificate grid-independent."""
    sweep = 1024
    phis = np.linspace(region.theta_min, region.theta_max, sweep)
    h = (region.theta_max - region.theta_min) / (sweep - 1)
    slope = math.hypot(p[1], p[2])
    worst = 0.0
    for r in (r_lo, r_hi):
        vals = p[0] + r * (p[1] * np.cos(phis) + p[2] * np.sin(phis))
        gap = (vals - f(phis)) if upper else (f(phis) - vals)
        margin = h * h / 8.0 * (1.0 + r * slope)
        worst = max(worst, float(-(gap.min())) + margin)
    return worst + 1e-12


def fit_trig_bounds(region: Region, config: FitConfig) -> tuple[LinearPoly2, ...]:
    """Velocity-dependent sin/cos bounds for one region."""
    width = region.theta_max - region.theta_min
    if width < 1e-8:
        s, c = math.sin(region.theta_mid), math.cos(region.theta_mid)
        sp = LinearPoly2(s, 0.0, 0.0)
        cp = LinearPoly2(c, 0.0, 0.0)
        return sp, sp, cp, cp

    phis = _sample_angles(region, config.n_angles)
    radii = np.linspace(config.v_min_fit, config.v_max, config.n_radii)
    X, ph, _, _ = _design(phis, radii)
    Xc, phc, _, _ = _design(phis, np.array([config.v_min_bound, config.v_max]))

    out = []
    for f in (np.sin, np.cos):
        y, yc = f(ph), f(phc)
        for upper in (True, False):
            p = _constrained_fit(X, y, Xc, yc, upper)
            lift = _certify_lift(p, region, f, config.v_min_bound, config.v_max, upper)
            p0 = p[0] + lift if upper else p[0] - lift
            out.append(LinearPoly2(float(p0), float(p[1]), float(p[2])))
    return tuple(out)  # sin_ub, sin_lb, cos_ub, cos_lb


def fit_trig_const(region: Region) -> tuple[float, float, float, float]:
    """Constant sin/cos bounds from the two border angles (valid within a
    single quadrant where both functions are monotonic)."""
    quarter = math.pi / 2
    q = math.floor(region.theta_min / quarter + 1e-9)
    if region.theta_max > (q + 1) * quarter + 1e-9:
        raise SpansQuadrants(
            f"region [{region.theta_min}, {region.theta_max}] crosses a quadrant border"
        )
    lo = math.atan2(region.beta, region.alpha)
    hi = math.atan2(region.delta, region.gamma)
    sins = (math.sin(lo), math.sin(hi))
    coss = (math.cos(lo), math.cos(hi))
    return max(sins), min(sins), max(coss), min(coss)


def fit_kappa_bounds(
    region: Region, kappa_min: float, kappa_max: float, config: FitConfig
) -> tuple[LinearPoly2, LinearPoly2]:
    """Linear approximations of the curvature targets (kappa/vx)*|v|^3.

    Unconstrained weighted least squares; weights 1/r^2 keep the fit
    accurate in relative terms across the speed range (the target grows
    like r^2).  Samples too close to vertical motion are excluded, where
    the 1/vx transform degenerates."""
    if not kappa_min < 0 < kappa_max:
        raise ValueError("need kappa_min < 0 < kappa_max")
    width = region.theta_max - region.theta_min
    phis = _sample_angles(region, max(config.n_angles, 16))
    cos_guard = min(0.05, math.sin(width / 4.0))
    keep = np.abs(np.cos(phis)) >= cos_guard
    phis = phis[keep]
    if phis.size < 4:
        raise FitError("region too close to vertical motion for a curvature fit")
    radii = np.linspace(config.v_min_fit, config.v_max, config.n_radii)
    X, ph, vx, vy = _design(phis, radii)
    v_sq = vx * vx + vy * vy
    base = _kappa_power(v_sq, config.kappa_exponent) / vx
    w = 1.0 / v_sq
    Xw = X * np.sqrt(w)[:, None]
    gram = Xw.T @ Xw
    if np.linalg.cond(gram) > 1e12:
        raise IllConditioned("curvature fit normal equations ill conditioned")
    out = []
    for kappa in (kappa_max, kappa_min):
        target = kappa * base
        p, *_ = np.linalg.lstsq(Xw, target * np.sqrt(w), rcond=None)
        out.append(LinearPoly2(float(p[0]), float(p[1]), float(p[2])))
    return out[0], out[1]


def kappa_target(kappa: float, vx, vy, mode: str = "three_halves"):
    """The transformed curvature bound (kappa/vx)*|v|^3 being fitted."""
    v_sq = np.asarray(vx) ** 2 + np.asarray(vy) ** 2
    return kappa * _kappa_power(v_sq, mode) / np.asarray(vx)


def _fit_region(region: Region, config: FitConfig) -> RegionFit:
    sin_ub, sin_lb, cos_ub, cos_lb = fit_trig_bounds(region, config)
    kap_ub, kap_lb = fit_kappa_bounds(region, config.kappa_min, config.kappa_max, config)
    s_ub, s_lb, c_ub, c_lb = fit_trig_const(region)
    return RegionFit(sin_ub, sin_lb, cos_ub, cos_lb, kap_ub, kap_lb,
                     s_ub, s_lb, c_ub, c_lb)


def build_region_table(config: FitConfig) -> RegionTable:
    """Fit every region and collect the results.

    Per-region fits are independent; with ``config.workers > 1`` they run
    concurrently and are merged by region index."""
    regions = build_regions(config.region_count)
    limits = tuple(rotate_limits(config.driving_limits, r) for r in regions)
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_fit_region, r, config) for r in regions]
            fits = tuple(f.result() for f in futures)
    else:
        fits = tuple(_fit_region(r, config) for r in regions)
    return RegionTable(
        region_count=config.region_count,
        v_lo=-config.v_max,
        v_hi=config.v_max,
        v_min_fit=config.v_min_fit,
        v_min_bound=config.v_min_bound,
        kappa_min=config.kappa_min,
        kappa_max=config.kappa_max,
        wheelbase=config.wheelbase,
        disk_radius=config.disk_radius,
        regions=tuple(regions),
        limits=limits,
        fits=fits,
    )


def front_axle_bounds_error(
    table: RegionTable, theta: float, speed: float, mode: str
) -> tuple[float, float, float, float]:
    """Errors of the four front-axle bound evaluations against the true
    offset (l cos, l sin) at orientation theta.

    Returns (fx - fx_lb, fx - fx_ub, fy - fy_lb, fy - fy_ub); the bound
    property makes the first of each pair >= 0 and the second <= 0.
    Border angles evaluate in the lowest-index adjacent region."""
    idx = table.region_for_angle(theta)
    fit = table.fits[idx]
    l = table.wheelbase
    if mode == "const":
        cos_ub, cos_lb = fit.cos_ub_const, fit.cos_lb_const
        sin_ub, sin_lb = fit.sin_ub_const, fit.sin_lb_const
    elif mode == "velocity":
        vx, vy = speed * math.cos(theta), speed * math.sin(theta)
        cos_ub, cos_lb = fit.cos_ub(vx, vy), fit.cos_lb(vx, vy)
        sin_ub, sin_lb = fit.sin_ub(vx, vy), fit.sin_lb(vx, vy)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    fx, fy = l * math.cos(theta), l * math.sin(theta)
    return (fx - l * cos_lb, fx - l * cos_ub, fy - l * sin_lb, fy - l * sin_ub)


def orientation_error(bound_value: float, theta: float, trig: str) -> float:
    """Angular distance from theta to the nearest angle whose sin (or
    cos) equals the clipped bound value."""
    b = min(1.0, max(-1.0, bound_value))
    if trig == "sin":
        base = math.asin(b)
        candidates = (base, math.pi - base)
    elif trig == "cos":
        base = math.acos(b)
        candidates = (base, -base)
    else:
        raise ValueError(trig)
    best = math.inf
    for cand in candidates:
        d = (cand - theta) % TWO_PI
        best = min(best, d, TWO_PI - d)
    return best


def max_orientation_errors(
    table: RegionTable, angle_factor: int = 4, radius_factor: int = 4,
    n_angles: int = 12, n_radii: int = 25,
) -> np.ndarray:
    """Per-region max orientation error of the four trig bounds over a
    verification grid denser than the fit grid by the given factors."""
    out = np.zeros(table.region_count)
    radii = np.linspace(table.v_min_fit, table.v_hi, n_radii * radius_factor)
    for r in table.regions:
        fit = table.fits[r.index]
        phis = _sample_angles(r, n_angles * angle_factor)
        worst = 0.0
        for rad in radii:
            vx, vy = rad * np.cos(phis), rad * np.sin(phis)
            for poly, trig in (
                (fit.sin_ub, "sin"), (fit.sin_lb, "sin"),
                (fit.cos_ub, "cos"), (fit.cos_lb, "cos"),
            ):
                vals = poly(vx, vy)
                for v, th in zip(vals, phis):
                    worst = max(worst, orientation_error(float(v), float(th), trig))
        out[r.index] = worst
    return out


def _poly_to_json(p: LinearPoly2) -> list[float]:
    return p.coeffs()


def _poly_from_json(coeffs) -> LinearPoly2:
    return LinearPoly2(float(coeffs[0]), float(coeffs[1]), float(coeffs[2]))


def save_region_table(table: RegionTable, path) -> None:
    doc = {
        "version": TABLE_VERSION,
        "region_count": table.region_count,
        "v_lo": table.v_lo,
        "v_hi": table.v_hi,
        "v_min_fit": table.v_min_fit,
        "v_min_bound": table.v_min_bound,
        "kappa_min": table.kappa_min,
        "kappa_max": table.kappa_max,
        "wheelbase": table.wheelbase,
        "disk_radius": table.disk_radius,
        "regions": [
            {
                "index": r.index,
                "alpha": r.alpha,
                "beta": r.beta,
                "gamma": r.gamma,
                "delta": r.delta,
                "theta_min": r.theta_min,
                "theta_max": r.theta_max,
                "limits": {
                    "ax_lo": lim.ax_lo, "ax_hi": lim.ax_hi,
                    "ay_lo": lim.ay_lo, "ay_hi": lim.ay_hi,
                    "ux_lo": lim.ux_lo, "ux_hi": lim.ux_hi,
                    "uy_lo": lim.uy_lo, "uy_hi": lim.uy_hi,
                },
                "fits": {
                    "sin_ub": _poly_to_json(fit.sin_ub),
                    "sin_lb": _poly_to_json(fit.sin_lb),
                    "cos_ub": _poly_to_json(fit.cos_ub),
                    "cos_lb": _poly_to_json(fit.cos_lb),
                    "kappa_ub": _poly_to_json(fit.kappa_ub),
                    "kappa_lb": _poly_to_json(fit.kappa_lb),
                    "sin_ub_const": fit.sin_ub_const,
                    "sin_lb_const": fit.sin_lb_const,
                    "cos_ub_const": fit.cos_ub_const,
                    "cos_lb_const": fit.cos_lb_const,
                },
            }
            for r, lim, fit in zip(table.regions, table.limits, table.fits)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_region_table(path) -> RegionTable:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != TABLE_VERSION:
        raise ValueError(f"unsupported table version {doc.get('version')}")
    regions, limits, fits = [], [], []
    for entry in sorted(doc["regions"], key=lambda e: e["index"]):
        regions.append(Region(
            index=entry["index"], alpha=entry["alpha"], beta=entry["beta"],
            gamma=entry["gamma"], delta=entry["delta"],
            theta_min=entry["theta_min"], theta_max=entry["theta_max"],
        ))
        lm = entry["limits"]
        limits.append(RegionLimits(
            lm["ax_lo"], lm["ax_hi"], lm["ay_lo"], lm["ay_hi"],
            lm["ux_lo"], lm["ux_hi"], lm["uy_lo"], lm["uy_hi"],
        ))
        ft = entry["fits"]
        fits.append(RegionFit(
            sin_ub=_poly_from_json(ft["sin_ub"]), sin_lb=_poly_from_json(ft["sin_lb"]),
            cos_ub=_poly_from_json(ft["cos_ub"]), cos_lb=_poly_from_json(ft["cos_lb"]),
            kappa_ub=_poly_from_json(ft["kappa_ub"]),
            kappa_lb=_poly_from_json(ft["kappa_lb"]),
            sin_ub_const=ft["sin_ub_const"], sin_lb_const=ft["sin_lb_const"],
            cos_ub_const=ft["cos_ub_const"], cos_lb_const=ft["cos_lb_const"],
        ))
    return RegionTable(
        region_count=doc["region_count"],
        v_lo=doc["v_lo"], v_hi=doc["v_hi"],
        v_min_fit=doc["v_min_fit"], v_min_bound=doc["v_min_bound"],
        kappa_min=doc["kappa_min"], kappa_max=doc["kappa_max"],
        wheelbase=doc["wheelbase"], disk_radius=doc["disk_radius"],
        regions=tuple(regions), limits=tuple(limits), fits=tuple(fits),
    )
