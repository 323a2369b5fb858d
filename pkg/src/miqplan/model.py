"""Assembly of the mixed-integer quadratic planning problem.

Variables per time step (time-major, kind-minor column order): positions,
velocities, accelerations, jerks, the four front-axle bound coordinates,
one binary per orientation region, the low-speed lock binary with its
four per-axis side indicators, one binary per environment sub-polygon,
and one binary per (obstacle, collision point, edge) separation choice.

Sign conventions (all polygons stored counter-clockwise):

* environment rows use the negated edge cross product, so a point is
  inside a sub-polygon iff every row expression is <= 0; the sub-polygon
  flag e = 0 certifies containment of all five collision points,
* obstacle rows use the plain edge cross product, so expression <= 0
  means the point lies outside that edge's half-plane; flag o = 0
  selects the edge as a separator,
* collision row coefficients use unit-length edge directions, which
  scales each row without changing its meaning and keeps the big-M
  constants commensurate across edges.

Every big-M is computed per constraint family by interval arithmetic
over the variable bounds and doubled, so a released row can never bind.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fitting import LinearPoly2, RegionTable
from .geometry import ConvexPolygon, PolygonSet, convex_decompose, inflate, offset_simple_polygon
from .regions import RegionMask, compute_region_mask

CONTINUOUS_KINDS = (
    "px", "py", "vx", "vy", "ax", "ay", "ux", "uy",
    "fx_ub", "fx_lb", "fy_ub", "fy_lb",
)
PSI_AUX_COUNT = 5  # 0: lock, 1: x+, 2: x-, 3: y+, 4: y-


@dataclass(frozen=True)
class VariableRef:
    kind: str
    time_index: int  # 1-based
    aux_index: int = 0


@dataclass(frozen=True)
class Weights:
    q_p: float
    q_v: float
    q_a: float
    q_u: float

    def __post_init__(self):
        vals = (self.q_p, self.q_v, self.q_a, self.q_u)
        if any(v < 0 for v in vals):
            raise ValueError("weights must be nonnegative")
        if all(v == 0 for v in vals):
            raise ValueError("at least one weight must be positive")


@dataclass
class ReferenceTrajectory:
    px: np.ndarray
    py: np.ndarray
    vx: np.ndarray
    vy: np.ndarray

    def __post_init__(self):
        self.px = np.asarray(self.px, float)
        self.py = np.asarray(self.py, float)
        self.vx = np.asarray(self.vx, float)
        self.vy = np.asarray(self.vy, float)
        n = self.px.size
        if not (self.py.size == self.vx.size == self.vy.size == n):
            raise ValueError("reference component lengths differ")

    def __len__(self) -> int:
        return self.px.size


@dataclass
class MiqpProblem:
    num_vars: int
    q_diag: np.ndarray
    c: np.ndarray
    obj_const: float
    A: sp.csr_matrix
    senses: np.ndarray  # '<', '=', '>'
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binaries: np.ndarray
    var_refs: list[VariableRef]
    col_of: dict[tuple[str, int, int], int]
    meta: dict
    m_structure: list = field(default_factory=list)
    env_parts: PolygonSet | None = None
    inflated_obstacles: list | None = None
    mask: RegionMask | None = None

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.q_diag @ (x * x) * 0.5 + self.c @ x + self.obj_const)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.q_diag, self.c, self.rhs, self.lb, self.ub,
                    self.A.data, self.A.indices.astype(np.int64),
                    self.A.indptr.astype(np.int64), self.binaries.astype(np.int64)):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(self.senses.tobytes())
        h.update(repr(self.obj_const).encode())
        h.update(json.dumps(self.meta, sort_keys=True, default=str).encode())
        return h.hexdigest()


class _Interval:
    """Closed-interval arithmetic over variable bounds."""

    def __init__(self, lb: np.ndarray, ub: np.ndarray):
        self.lb = lb
        self.ub = ub

    def of_expr(self, cols: list[int], coefs: list[float]) -> tuple[float, float]:
        lo = hi = 0.0
        for col, coef in zip(cols, coefs):
            a, b = coef * self.lb[col], coef * self.ub[col]
            lo += min(a, b)
            hi += max(a, b)
        return lo, hi


def poly_range(poly: LinearPoly2, v_lo: float, v_hi: float) -> tuple[float, float]:
    lo = poly.p00 + min(poly.p10 * v_lo, poly.p10 * v_hi) + min(poly.p01 * v_lo, poly.p01 * v_hi)
    hi = poly.p00 + max(poly.p10 * v_lo, poly.p10 * v_hi) + max(poly.p01 * v_lo, poly.p01 * v_hi)
    return lo, hi


@dataclass
class _Row:
    cols: list[int]
    coefs: list[float]
    sense: str
    rhs: float
    # big-M structure: final coefficient of column = coef + m_scale * M
    m_cols: list[int] = field(default_factory=list)
    m_scales: list[float] = field(default_factory=list)
    m_rhs_scale: float = 0.0  # rhs gains m_rhs_scale * M


class _Builder:
    def __init__(self, num_vars, lb, ub):
        self.num_vars = num_vars
        self.lb = lb
        self.ub = ub
        self.interval = _Interval(lb, ub)
        self.families: list[tuple[str, list[_Row], float]] = []

    def family(self, name: str, rows: list[_Row]) -> None:
        """Close a constraint family, sizing its shared big-M at twice the
        worst possible released-row violation."""
        m_need = 0.0
        for row in rows:
            if not row.m_cols:
                continue
            lo, hi = self.interval.of_expr(row.cols, row.coefs)
            if row.sense == "<":
                m_need = max(m_need, hi - row.rhs)
            elif row.sense == ">":
                m_need = max(m_need, row.rhs - lo)
            else:
                raise ValueError("big-M rows must be inequalities")
        m_val = 2.0 * max(m_need, 0.0)
        self.families.append((name, rows, m_val))

    def materialize(self):
        data, indices, indptr = [], [], [0]
        senses, rhs = [], []
        meta_rows = {}
        m_structure = []
        row_idx = 0
        for name, rows, m_val in self.families:
            start = row_idx
            for row in rows:
                col_map: dict[int, float] = {}
                for c, v in zip(row.cols, row.coefs):
                    col_map[c] = col_map.get(c, 0.0) + v
                for c, s in zip(row.m_cols, row.m_scales):
                    col_map[c] = col_map.get(c, 0.0) + s * m_val
                cols = sorted(col_map)
                indices.extend(cols)
                data.extend(col_map[c] for c in cols)
                indptr.append(len(indices))
                senses.append(row.sense)
                rhs.append(row.rhs + row.m_rhs_scale * m_val)
                if row.m_cols:
                    m_structure.append((row.m_cols, row.m_scales, row.m_rhs_scale, m_val))
                else:
                    m_structure.append(None)
                row_idx += 1
            meta_rows[name] = {"start": start, "count": row_idx - start, "big_m": m_val}
        A = sp.csr_matrix(
            (np.array(data), np.array(indices, dtype=np.int32), np.array(indptr, dtype=np.int32)),
            shape=(row_idx, self.num_vars),
        )
        return A, np.array(senses, dtype="U1"), np.array(rhs), meta_rows, m_structure


def verify_big_m(problem: MiqpProblem, factor: float = 2.0) -> None:
    """Re-check from the variable bounds that every big-M exceeds its
    row's maximum possible released violation by the required factor."""
    interval = _Interval(problem.lb, problem.ub)
    for r, struct in enumerate(problem.m_structure):
        if struct is None:
            continue
        m_cols, m_scales, m_rhs_scale, m_val = struct
        sl = slice(problem.A.indptr[r], problem.A.indptr[r + 1])
        cols = [int(c) for c in problem.A.indices[sl]]
        coefs = [float(v) for v in problem.A.data[sl]]
        # strip the big-M contributions to recover the core row
        for mc, ms in zip(m_cols, m_scales):
            k = cols.index(mc)
            coefs[k] -= ms * m_val
        rhs_core = problem.rhs[r] - m_rhs_scale * m_val
        lo, hi = interval.of_expr(cols, coefs)
        if problem.senses[r] == "<":
            need = hi - rhs_core
        else:
            need = rhs_core - lo
        if need > 0 and m_val + 1e-6 < factor * need:
            raise AssertionError(
                f"row {r}: big-M {m_val:.6g} below {factor} x violation {need:.6g}"
            )


def build_objective(ref: ReferenceTrajectory, w: Weights, col_of, n_steps: int,
                    num_vars: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Diagonal quadratic cost: reference tracking for p and v, magnitude
    penalties for a and u.  Returns (q_diag, c, constant)."""
    q_diag = np.zeros(num_vars)
    c = np.zeros(num_vars)
    const = 0.0
    for t in range(1, n_steps + 1):
        i = t - 1
        for kind, weight, ref_val in (
            ("px", w.q_p, ref.px[i]), ("py", w.q_p, ref.py[i]),
            ("vx", w.q_v, ref.vx[i]), ("vy", w.q_v, ref.vy[i]),
        ):
            col = col_of[(kind, t, 0)]
            q_diag[col] += 2.0 * weight
            c[col] += -2.0 * weight * ref_val
            const += weight * ref_val * ref_val
        for kind, weight in (("ax", w.q_a), ("ay", w.q_a), ("ux", w.q_u), ("uy", w.q_u)):
            col = col_of[(kind, t, 0)]
            q_diag[col] += 2.0 * weight
    return q_diag, c, const


def reference_objective(solution_states: dict, ref: ReferenceTrajectory, w: Weights) -> float:
    """Re-evaluate the tracking cost from a solved trajectory; used as an
    independent check of the solver's reported objective."""
    total = 0.0
    for i in range(len(ref)):
        total += w.q_p * ((solution_states["px"][i] - ref.px[i]) ** 2
                          + (solution_states["py"][i] - ref.py[i]) ** 2)
        total += w.q_v * ((solution_states["vx"][i] - ref.vx[i]) ** 2
                          + (solution_states["vy"][i] - ref.vy[i]) ** 2)
        total += w.q_a * (solution_states["ax"][i] ** 2 + solution_states["ay"][i] ** 2)
        total += w.q_u * (solution_states["ux"][i] ** 2 + solution_states["uy"][i] ** 2)
    return total


def _reach_bounds(scenario, table: RegionTable, allowed: list[int],
                  env_bbox: tuple[float, float, float, float]):
    """Per-step interval propagation of the triple integrator from the
    fixed initial state, intersected with the global boxes."""
    n, dt = scenario.horizon_n, scenario.horizon_dt
    ax_lo = min(table.limits[i].ax_lo for i in allowed)
    ax_hi = max(table.limits[i].ax_hi for i in allowed)
    ay_lo = min(table.limits[i].ay_lo for i in allowed)
    ay_hi = max(table.limits[i].ay_hi for i in allowed)
    ux_lo = min(table.limits[i].ux_lo for i in allowed)
    ux_hi = max(table.limits[i].ux_hi for i in allowed)
    uy_lo = min(table.limits[i].uy_lo for i in allowed)
    uy_hi = max(table.limits[i].uy_hi for i in allowed)
    margin = 1e-7
    px_box = (env_bbox[0] - margin, env_bbox[2] + margin)
    py_box = (env_bbox[1] - margin, env_bbox[3] + margin)
    v_box = (table.v_lo, table.v_hi)

    init = scenario.initial_state
    bounds = {}
    state = {
        "px": (init["px"], init["px"]), "py": (init["py"], init["py"]),
        "vx": (init["vx"], init["vx"]), "vy": (init["vy"], init["vy"]),
        "ax": (init["ax"], init["ax"]), "ay": (init["ay"], init["ay"]),
    }
    boxes = {
        "px": px_box, "py": py_box, "vx": v_box, "vy": v_box,
        "ax": (ax_lo, ax_hi), "ay": (ay_lo, ay_hi),
    }
    u_boxes = {"x": (ux_lo, ux_hi), "y": (uy_lo, uy_hi)}
    for t in range(1, n + 1):
        for key in state:
            bounds[(key, t)] = state[key]
        bounds[("ux", t)] = u_boxes["x"]
        bounds[("uy", t)] = u_boxes["y"]
        if t == n:
            break
        new_state = {}
        for axis in ("x", "y"):
            p_lo, p_hi = state[f"p{axis}"]
            v_lo, v_hi = state[f"v{axis}"]
            a_lo, a_hi = state[f"a{axis}"]
            u_lo, u_hi = u_boxes[axis]
            p2 = (p_lo + dt * v_lo + dt**2 / 2 * a_lo + dt**3 / 6 * u_lo,
                  p_hi + dt * v_hi + dt**2 / 2 * a_hi + dt**3 / 6 * u_hi)
            v2 = (v_lo + dt * a_lo + dt**2 / 2 * u_lo, v_hi + dt * a_hi + dt**2 / 2 * u_hi)
            a2 = (a_lo + dt * u_lo, a_hi + dt * u_hi)
            box_p, box_v, box_a = boxes[f"p{axis}"], boxes[f"v{axis}"], boxes[f"a{axis}"]
            new_state[f"p{axis}"] = (max(p2[0], box_p[0]), min(p2[1], box_p[1]))
            new_state[f"v{axis}"] = (max(v2[0], box_v[0]), min(v2[1], box_v[1]))
            new_state[f"a{axis}"] = (max(a2[0], box_a[0]), min(a2[1], box_a[1]))
        state = new_state
    return bounds


def _prepare_environment(scenario) -> PolygonSet:
    deflated = offset_simple_polygon(scenario.environment, -scenario.vehicle["disk_radius"])
    return convex_decompose(deflated)


def _prepare_obstacles(scenario) -> list[list[ConvexPolygon]]:
    """Inflate every obstacle frame by the collision disk radius."""
    out = []
    r = scenario.vehicle["disk_radius"]
    for obstacle in scenario.obstacles:
        frames = []
        for frame in obstacle["frames"]:
            frames.append(inflate(ConvexPolygon(tuple((p[0], p[1]) for p in frame)), r))
        out.append(frames)
    return out


COLLISION_POINTS = (
    ("px", "py"), ("fx_lb", "fy_lb"), ("fx_lb", "fy_ub"),
    ("fx_ub", "fy_lb"), ("fx_ub", "fy_ub"),
)


def assemble(scenario, table: RegionTable) -> MiqpProblem:
    """Build the full planning MIQP for a scenario against a fitted
    region table."""
    veh = scenario.vehicle
    for key, table_val in (("wheelbase", table.wheelbase), ("disk_radius", table.disk_radius),
                           ("kappa_min", table.kappa_min), ("kappa_max", table.kappa_max)):
        if abs(veh[key] - table_val) > 1e-12:
            raise ValueError(f"scenario {key}={veh[key]} incompatible with table {table_val}")

    n, dt = scenario.horizon_n, scenario.horizon_dt
    if n < 2 or dt <= 0:
        raise ValueError("need at least two steps and a positive step size")
    init = scenario.initial_state
    for key in ("vx", "vy"):
        if not table.v_lo <= init[key] <= table.v_hi:
            raise ValueError(
                f"initial {key}={init[key]} outside the table's velocity box "
                f"[{table.v_lo}, {table.v_hi}]"
            )
    ref_speed = max(float(np.max(np.abs(scenario.reference.vx))),
                    float(np.max(np.abs(scenario.reference.vy))))
    if ref_speed > table.v_hi:
        raise ValueError(
            f"reference velocity {ref_speed} exceeds the table's velocity box {table.v_hi}"
        )
    heading = math.atan2(init["vy"], init["vx"])
    mask = compute_region_mask(heading, (n - 1) * dt, scenario.max_yaw_rate, list(table.regions))
    allowed = mask.allowed_indices()

    env_parts = _prepare_environment(scenario)
    obstacles = _prepare_obstacles(scenario)
    env_bbox = env_parts.bbox()

    # ---- column layout (time-major, kind-minor) ----
    col_of: dict[tuple[str, int, int], int] = {}
    var_refs: list[VariableRef] = []

    def add_var(kind: str, t: int, aux: int = 0) -> int:
        col = len(var_refs)
        col_of[(kind, t, aux)] = col
        var_refs.append(VariableRef(kind, t, aux))
        return col

    n_regions = table.region_count
    obs_edge_counts = [len(frames[0].vertices) for frames in obstacles]
    for t in range(1, n + 1):
        for kind in CONTINUOUS_KINDS:
            add_var(kind, t)
        for r in range(n_regions):
            add_var("region", t, r)
        for aux in range(PSI_AUX_COUNT):
            add_var("psi", t, aux)
        for lam in range(len(env_parts.parts)):
            add_var("env", t, lam)
        aux = 0
        for o_idx, frames in enumerate(obstacles):
            for point_idx in range(len(COLLISION_POINTS)):
                for edge_idx in range(obs_edge_counts[o_idx]):
                    add_var("obs", t, aux)
                    aux += 1
    num_vars = len(var_refs)

    # ---- bounds ----
    lb = np.full(num_vars, -np.inf)
    ub = np.full(num_vars, np.inf)
    reach = _reach_bounds(scenario, table, allowed, env_bbox)
    for t in range(1, n + 1):
        for kind in ("px", "py", "vx", "vy", "ax", "ay", "ux", "uy"):
            col = col_of[(kind, t, 0)]
            lb[col], ub[col] = reach[(kind, t)]
    # fix the initial state exactly
    for kind in ("px", "py", "vx", "vy", "ax", "ay"):
        col = col_of[(kind, 1, 0)]
        lb[col] = ub[col] = init[kind]

    # front-axle coordinates: position reach plus the wheelbase times the
    # extreme of the fitted polynomials, clipped to the environment box
    l_wb = table.wheelbase
    rng_cos = [poly_range(table.fits[i].cos_ub, table.v_lo, table.v_hi) for i in allowed]
    rng_cos += [poly_range(table.fits[i].cos_lb, table.v_lo, table.v_hi) for i in allowed]
    rng_sin = [poly_range(table.fits[i].sin_ub, table.v_lo, table.v_hi) for i in allowed]
    rng_sin += [poly_range(table.fits[i].sin_lb, table.v_lo, table.v_hi) for i in allowed]
    cos_lo, cos_hi = min(r[0] for r in rng_cos), max(r[1] for r in rng_cos)
    sin_lo, sin_hi = min(r[0] for r in rng_sin), max(r[1] for r in rng_sin)
    for t in range(1, n + 1):
        px_lo, px_hi = reach[("px", t)]
        py_lo, py_hi = reach[("py", t)]
        for kind in ("fx_ub", "fx_lb"):
            col = col_of[(kind, t, 0)]
            lb[col] = max(px_lo + l_wb * cos_lo, env_bbox[0] - 1e-7)
            ub[col] = min(px_hi + l_wb * cos_hi, env_bbox[2] + 1e-7)
        for kind in ("fy_ub", "fy_lb"):
            col = col_of[(kind, t, 0)]
            lb[col] = max(py_lo + l_wb * sin_lo, env_bbox[1] - 1e-7)
            ub[col] = min(py_hi + l_wb * sin_hi, env_bbox[3] + 1e-7)

    binaries = []
    for ref in var_refs:
        if ref.kind in ("region", "psi", "env", "obs"):
            col = col_of[(ref.kind, ref.time_index, ref.aux_index)]
            binaries.append(col)
            lb[col], ub[col] = 0.0, 1.0
    binaries = np.array(sorted(binaries), dtype=np.int64)

    # region mask: non-allowed regions are excluded by bound fixing
    for t in range(1, n + 1):
        for r in range(n_regions):
            if not mask.allowed[r]:
                col = col_of[("region", t, r)]
                ub[col] = 0.0

    # obstacle flags decided by the reachable box: when one edge separates
    # the whole box, pin that edge as the separator and release the rest
    interval = _Interval(lb, ub)
    obs_fixed = 0
    for t in range(1, n + 1):
        aux = 0
        for o_idx, frames in enumerate(obstacles):
            poly = frames[t - 1]
            edges = poly.edges()
            for point_idx, (kx, ky) in enumerate(COLLISION_POINTS):
                cx, cy = col_of[(kx, t, 0)], col_of[(ky, t, 0)]
                sep_edge = -1
                sep_val = -1e-9
                for e_idx, e in enumerate(edges):
                    ex, ey = e.direction()
                    norm = math.hypot(ex, ey)
                    ex, ey = ex / norm, ey / norm
                    # cross = ex*(Y - ay) - ey*(X - ax) <= 0 outside
                    _, hi = interval.of_expr([cx, cy], [-ey, ex])
                    hi -= ex * e.a.y - ey * e.a.x
                    if hi <= sep_val:
                        sep_val = hi
                        sep_edge = e_idx
                if sep_edge >= 0:
                    for e_idx in range(len(edges)):
                        col = col_of[("obs", t, aux + e_idx)]
                        if e_idx == sep_edge:
                            ub[col] = 0.0
                        else:
                            lb[col] = 1.0
                    obs_fixed += len(edges)
                aux += len(edges)

    builder = _Builder(num_vars, lb, ub)

    # ---- dynamics ----
    rows = []
    for t in range(1, n):
        for axis in ("x", "y"):
            p0, v0, a0, u0 = (col_of[(k + axis, t, 0)] for k in ("p", "v", "a", "u"))
            p1, v1, a1 = (col_of[(k + axis, t + 1, 0)] for k in ("p", "v", "a"))
            rows.append(_Row([p1, p0, v0, a0, u0],
                             [1.0, -1.0, -dt, -dt * dt / 2, -dt**3 / 6], "=", 0.0))
            rows.append(_Row([v1, v0, a0, u0], [1.0, -1.0, -dt, -dt * dt / 2], "=", 0.0))
            rows.append(_Row([a1, a0, u0], [1.0, -1.0, -dt], "=", 0.0))
    builder.family("dynamics", rows)

    # ---- exactly one region ----
    rows = []
    for t in range(1, n + 1):
        cols = [col_of[("region", t, r)] for r in range(n_regions)]
        rows.append(_Row(cols, [1.0] * n_regions, "=", 1.0))
    builder.family("region_exclusive", rows)

    # ---- region selection half-planes ----
    rows = []
    for t in range(1, n + 1):
        vx, vy = col_of[("vx", t, 0)], col_of[("vy", t, 0)]
        for r in allowed:
            reg = table.regions[r]
            rho = col_of[("region", t, r)]
            # alpha*vy - beta*vx >= -M(1-rho)
            rows.append(_Row([vy, vx], [reg.alpha, -reg.beta], ">", 0.0,
                             m_cols=[rho], m_scales=[-1.0], m_rhs_scale=-1.0))
            # gamma*vy - delta*vx <= M(1-rho)
            rows.append(_Row([vy, vx], [reg.gamma, -reg.delta], "<", 0.0,
                             m_cols=[rho], m_scales=[1.0], m_rhs_scale=1.0))
    builder.family("region_select", rows)

    # ---- region-dependent acceleration and jerk limits ----
    rows = []
    for t in range(1, n + 1):
        for r in allowed:
            lim = table.limits[r]
            rho = col_of[("region", t, r)]
            for kind, lo_hi in (("ax", (lim.ax_lo, lim.ax_hi)), ("ay", (lim.ay_lo, lim.ay_hi)),
                                ("ux", (lim.ux_lo, lim.ux_hi)), ("uy", (lim.uy_lo, lim.uy_hi))):
                col = col_of[(kind, t, 0)]
                rows.append(_Row([col], [1.0], "<", lo_hi[1],
                                 m_cols=[rho], m_scales=[1.0], m_rhs_scale=1.0))
                rows.append(_Row([col], [1.0], ">", lo_hi[0],
                                 m_cols=[rho], m_scales=[-1.0], m_rhs_scale=-1.0))
    builder.family("state_limits", rows)

    # ---- curvature (non-holonomy) ----
    # rows are scaled by cos(theta_mid): c*ay - s*ax within [c*P_lo, c*P_hi],
    # which keeps coefficients finite for near-vertical regions and makes
    # one row pair valid in every half-plane
    rows = []
    for t in range(1, n + 1):
        vx, vy = col_of[("vx", t, 0)], col_of[("vy", t, 0)]
        ax, ay = col_of[("ax", t, 0)], col_of[("ay", t, 0)]
        psi = col_of[("psi", t, 0)]
        for r in allowed:
            reg = table.regions[r]
            fit = table.fits[r]
            rho = col_of[("region", t, r)]
            c_mid = math.cos(reg.theta_mid)
            s_mid = math.sin(reg.theta_mid)
            p_hi, p_lo = fit.kappa_ub, fit.kappa_lb
            # c*ay - s*ax - c*(p00 + p10 vx + p01 vy) <= M(1-rho) + M psi
            rows.append(_Row(
                [ay, ax, vx, vy],
                [c_mid, -s_mid, -c_mid * p_hi.p10, -c_mid * p_hi.p01],
                "<", c_mid * p_hi.p00,
                m_cols=[rho, psi], m_scales=[1.0, -1.0], m_rhs_scale=1.0))
            rows.append(_Row(
                [ay, ax, vx, vy],
                [c_mid, -s_mid, -c_mid * p_lo.p10, -c_mid * p_lo.p01],
                ">", c_mid * p_lo.p00,
                m_cols=[rho, psi], m_scales=[-1.0, 1.0], m_rhs_scale=-1.0))
    builder.family("curvature", rows)

    # ---- low-speed lock: no region change while locked ----
    rows = []
    for t in range(2, n + 1):
        psi = col_of[("psi", t, 0)]
        for r in allowed:
            now, prev = col_of[("region", t, r)], col_of[("region", t - 1, r)]
            rows.append(_Row([now, prev, psi], [1.0, -1.0, 1.0], "<", 1.0))
            rows.append(_Row([now, prev, psi], [1.0, -1.0, -1.0], ">", -1.0))
    builder.family("low_speed_lock", rows)

    # ---- lock trigger: psi == 1 iff |vx| or |vy| below the threshold ----
    v_th = scenario.v_threshold
    rows = []
    for t in range(1, n + 1):
        psi = col_of[("psi", t, 0)]
        side = {("x", "+"): col_of[("psi", t, 1)], ("x", "-"): col_of[("psi", t, 2)],
                ("y", "+"): col_of[("psi", t, 3)], ("y", "-"): col_of[("psi", t, 4)]}
        for axis in ("x", "y"):
            v = col_of[(f"v{axis}", t, 0)]
            plus, minus = side[(axis, "+")], side[(axis, "-")]
            # side claimed -> the velocity really is on that side
            rows.append(_Row([v], [1.0], ">", v_th,
                             m_cols=[plus], m_scales=[-1.0], m_rhs_scale=-1.0))
            rows.append(_Row([v], [1.0], "<", -v_th,
                             m_cols=[minus], m_scales=[1.0], m_rhs_scale=1.0))
            # side not claimed -> the velocity is not beyond it
            rows.append(_Row([v], [1.0], "<", v_th,
                             m_cols=[plus], m_scales=[-1.0]))
            rows.append(_Row([v], [1.0], ">", -v_th,
                             m_cols=[minus], m_scales=[1.0]))
        # psi forced by an unclaimed axis, cleared when both axes are fast
        rows.append(_Row([psi, side[("x", "+")], side[("x", "-")]], [1.0, 1.0, 1.0], ">", 1.0))
        rows.append(_Row([psi, side[("y", "+")], side[("y", "-")]], [1.0, 1.0, 1.0], ">", 1.0))
        rows.append(_Row([psi, side[("x", "+")], side[("x", "-")],
                          side[("y", "+")], side[("y", "-")]],
                         [1.0, 1.0, 1.0, 1.0, 1.0], "<", 2.0))
    builder.family("lock_trigger", rows)

    # ---- front axle bound coordinates pinned to the active region's fit ----
    rows = []
    for t in range(1, n + 1):
        vx, vy = col_of[("vx", t, 0)], col_of[("vy", t, 0)]
        px, py = col_of[("px", t, 0)], col_of[("py", t, 0)]
        for r in allowed:
            fit = table.fits[r]
            rho = col_of[("region", t, r)]
            for f_kind, p_col, poly in (
                ("fx_ub", px, fit.cos_ub), ("fx_lb", px, fit.cos_lb),
                ("fy_ub", py, fit.sin_ub), ("fy_lb", py, fit.sin_lb),
            ):
                f_col = col_of[(f_kind, t, 0)]
                core_cols = [f_col, p_col, vx, vy]
                core_coefs = [1.0, -1.0, -l_wb * poly.p10, -l_wb * poly.p01]
                rows.append(_Row(core_cols, core_coefs, "<", l_wb * poly.p00,
                                 m_cols=[rho], m_scales=[1.0], m_rhs_scale=1.0))
                rows.append(_Row(core_cols, core_coefs, ">", l_wb * poly.p00,
                                 m_cols=[rho], m_scales=[-1.0], m_rhs_scale=-1.0))
    builder.family("front_axle", rows)

    # ---- environment containment ----
    rows = []
    for t in range(1, n + 1):
        for lam, part in enumerate(env_parts.parts):
            e_col = col_of[("env", t, lam)]
            for edge in part.edges():
                ex, ey = edge.direction()
                norm = math.hypot(ex, ey)
                ex, ey = ex / norm, ey / norm
                rhs_val = ey * edge.a.x - ex * edge.a.y
                for kx, ky in COLLISION_POINTS:
                    cx, cy = col_of[(kx, t, 0)], col_of[(ky, t, 0)]
                    # inside iff ey*X - ex*Y - rhs <= 0 for all edges
                    rows.append(_Row([cx, cy], [ey, -ex], "<", rhs_val,
                                     m_cols=[e_col], m_scales=[-1.0]))
    for t in range(1, n + 1):
        cols = [col_of[("env", t, lam)] for lam in range(len(env_parts.parts))]
        rows.append(_Row(cols, [1.0] * len(cols), "<", float(len(cols) - 1)))
    builder.family("environment", rows)

    # ---- obstacle avoidance ----
    rows = []
    for t in range(1, n + 1):
        aux = 0
        for o_idx, frames in enumerate(obstacles):
            poly = frames[t - 1]
            edges = poly.edges()
            for point_idx, (kx, ky) in enumerate(COLLISION_POINTS):
                cx, cy = col_of[(kx, t, 0)], col_of[(ky, t, 0)]
                flag_cols = []
                for e_idx, edge in enumerate(edges):
                    ex, ey = edge.direction()
                    norm = math.hypot(ex, ey)
                    ex, ey = ex / norm, ey / norm
                    o_col = col_of[("obs", t, aux + e_idx)]
                    flag_cols.append(o_col)
                    rhs_val = ex * edge.a.y - ey * edge.a.x
                    # outside edge iff -ey*X + ex*Y - rhs <= 0
                    rows.append(_Row([cx, cy], [-ey, ex], "<", rhs_val,
                                     m_cols=[o_col], m_scales=[-1.0]))
                rows.append(_Row(flag_cols, [1.0] * len(flag_cols), "<",
                                 float(len(flag_cols) - 1)))
                aux += len(edges)
    builder.family("obstacles", rows)

    A, senses, rhs, meta_rows, m_structure = builder.materialize()
    q_diag, c, const = build_objective(scenario.reference, scenario.weights, col_of, n, num_vars)

    meta = {
        "n_steps": n,
        "dt": dt,
        "region_count": n_regions,
        "v_threshold": v_th,
        "allowed_regions": allowed,
        "num_vars": num_vars,
        "num_rows": int(A.shape[0]),
        "num_binaries": int(binaries.size),
        "env_parts": len(env_parts.parts),
        "obstacle_edges": obs_edge_counts,
        "obs_flags_prefixed": obs_fixed,
        "families": meta_rows,
    }
    return MiqpProblem(
        num_vars=num_vars, q_diag=q_diag, c=c, obj_const=const,
        A=A, senses=senses, rhs=rhs, lb=lb, ub=ub, binaries=binaries,
        var_refs=var_refs, col_of=col_of, meta=meta,
        m_structure=m_structure, env_parts=env_parts,
        inflated_obstacles=obstacles, mask=mask,
    )
