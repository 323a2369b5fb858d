"""Exact solution of the planning MIQP.

Branch and bound over the binary variables with convex QP relaxations:

* presolve propagates fixings, tightens bounds (rounding binary bounds
  to integers), drops redundant rows, and detects infeasibility early,
* node relaxations are solved by the interior-point engine,
* node selection is best-bound-first with plunging (dive on the last
  branched variable) until a first incumbent exists,
* branching picks the most fractional binary, preferring region binaries
  of earlier time steps over flag binaries; fixing a region binary to 1
  also fixes its time step's siblings to 0,
* a rounding heuristic derives a full binary assignment from each
  relaxation (region from the velocity direction, separating edges from
  the geometry) and solves the resulting QP for incumbents.

Determinism: single-threaded evaluation order is fully specified, so a
repeated run produces the identical tree, incumbent, and node count.
"""

from __future__ import annotations

import enum
import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import COLLISION_POINTS, MiqpProblem
from .qp import QpConfig, QpProblem, QpStatus, solve_qp
from .regions import classify

INT_TOL = 1e-6


class MiqpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    TIME_LIMIT_INCUMBENT = "TimeLimit-Incumbent"
    TIME_LIMIT_NO_INCUMBENT = "TimeLimit-NoIncumbent"


@dataclass
class SolveLimits:
    time_limit: float = math.inf
    node_limit: int = 1_000_000
    abs_gap: float = 1e-6
    rel_gap: float = 1e-6


@dataclass
class MiqpSolution:
    status: MiqpStatus
    primal: np.ndarray | None
    objective: float
    binaries: dict[int, float]
    node_count: int
    wall_time: float
    gap: float
    best_bound: float
    log: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "status": self.status.value,
            "objective": self.objective if self.primal is not None else None,
            "gap": self.gap,
            "node_count": self.node_count,
            "best_bound": self.best_bound,
        }


class _Infeasible(Exception):
    pass


@dataclass
class _Reduced:
    qp: QpProblem | None
    keep_cols: np.ndarray
    fixed: np.ndarray
    obj_shift: float


def presolve(problem: MiqpProblem, fixings: dict[int, float] | None = None,
             max_passes: int = 25) -> _Reduced:
    """Bound propagation and reduction.  Raises _Infeasible on a provable
    contradiction."""
    lb = problem.lb.copy()
    ub = problem.ub.copy()
    if fixings:
        for col, val in fixings.items():
            if val < lb[col] - 1e-9 or val > ub[col] + 1e-9:
                raise _Infeasible(f"fixing column {col} outside bounds")
            lb[col] = ub[col] = val

    A = problem.A
    m, n = A.shape
    is_binary = np.zeros(n, dtype=bool)
    is_binary[problem.binaries] = True
    senses = problem.senses
    rhs = problem.rhs
    active = np.ones(m, dtype=bool)
    tol = 1e-9

    indptr, indices, data = A.indptr, A.indices, A.data
    small_rows = [r for r in range(m) if indptr[r + 1] - indptr[r] <= 8]

    for _ in range(max_passes):
        changed = False
        lo_c = np.where(data >= 0, lb[indices] * data, ub[indices] * data)
        hi_c = np.where(data >= 0, ub[indices] * data, lb[indices] * data)
        act_lo = np.add.reduceat(lo_c, indptr[:-1])
        act_hi = np.add.reduceat(hi_c, indptr[:-1])
        empty = indptr[:-1] == indptr[1:]
        act_lo[empty] = 0.0
        act_hi[empty] = 0.0

        for r in np.nonzero(active)[0]:
            s = senses[r]
            if s == "<":
                if act_lo[r] > rhs[r] + 1e-7:
                    raise _Infeasible(f"row {r} min activity {act_lo[r]} > rhs {rhs[r]}")
                if act_hi[r] <= rhs[r] + tol:
                    active[r] = False
                    continue
                if act_lo[r] >= rhs[r] - tol:
                    # forcing row: every variable pinned at its minimizing bound
                    for k in range(indptr[r], indptr[r + 1]):
                        j = indices[k]
                        val = lb[j] if data[k] >= 0 else ub[j]
                        if ub[j] - lb[j] > tol:
                            lb[j] = ub[j] = val
                            changed = True
                    active[r] = False
                    continue
            elif s == ">":
                if act_hi[r] < rhs[r] - 1e-7:
                    raise _Infeasible(f"row {r} max activity {act_hi[r]} < rhs {rhs[r]}")
                if act_lo[r] >= rhs[r] - tol:
                    active[r] = False
                    continue
                if act_hi[r] <= rhs[r] + tol:
                    for k in range(indptr[r], indptr[r + 1]):
                        j = indices[k]
                        val = ub[j] if data[k] >= 0 else lb[j]
                        if ub[j] - lb[j] > tol:
                            lb[j] = ub[j] = val
                            changed = True
                    active[r] = False
                    continue
            else:  # equality
                if act_lo[r] > rhs[r] + 1e-7 or act_hi[r] < rhs[r] - 1e-7:
                    raise _Infeasible(f"row {r} activity [{act_lo[r]}, {act_hi[r]}] misses {rhs[r]}")
                if act_hi[r] - act_lo[r] <= tol:
                    active[r] = False
                    continue
                if act_lo[r] >= rhs[r] - tol:
                    for k in range(indptr[r], indptr[r + 1]):
                        j = indices[k]
                        val = lb[j] if data[k] >= 0 else ub[j]
                        if ub[j] - lb[j] > tol:
                            lb[j] = ub[j] = val
                            changed = True
                    active[r] = False
                    continue
                if act_hi[r] <= rhs[r] + tol:
                    for k in range(indptr[r], indptr[r + 1]):
                        j = indices[k]
                        val = ub[j] if data[k] >= 0 else lb[j]
                        if ub[j] - lb[j] > tol:
                            lb[j] = ub[j] = val
                            changed = True
                    active[r] = False
                    continue

        # per-variable tightening on short rows
        for r in small_rows:
            if not active[r]:
                continue
            s = senses[r]
            for k in range(indptr[r], indptr[r + 1]):
                j = indices[k]
                a = data[k]
                if a == 0.0 or ub[j] - lb[j] <= tol:
                    continue
                self_lo = lb[j] * a if a >= 0 else ub[j] * a
                self_hi = ub[j] * a if a >= 0 else lb[j] * a
                # residual activity of the other terms
                lo_c2 = np.where(data[indptr[r]:indptr[r+1]] >= 0,
                                 lb[indices[indptr[r]:indptr[r+1]]] * data[indptr[r]:indptr[r+1]],
                                 ub[indices[indptr[r]:indptr[r+1]]] * data[indptr[r]:indptr[r+1]])
                hi_c2 = np.where(data[indptr[r]:indptr[r+1]] >= 0,
                                 ub[indices[indptr[r]:indptr[r+1]]] * data[indptr[r]:indptr[r+1]],
                                 lb[indices[indptr[r]:indptr[r+1]]] * data[indptr[r]:indptr[r+1]])
                rest_lo = lo_c2.sum() - self_lo
                rest_hi = hi_c2.sum() - self_hi
                new_lb, new_ub = lb[j], ub[j]
                if s in ("<", "="):
                    cap = rhs[r] - rest_lo
                    if a > 0:
                        new_ub = min(new_ub, cap / a)
                    else:
                        new_lb = max(new_lb, cap / a)
                if s in (">", "="):
                    floor_val = rhs[r] - rest_hi
                    if a > 0:
                        new_lb = max(new_lb, floor_val / a)
                    else:
                        new_ub = min(new_ub, floor_val / a)
                if is_binary[j]:
                    new_lb = math.ceil(new_lb - 1e-7) if new_lb > tol else new_lb
                    new_ub = math.floor(new_ub + 1e-7) if new_ub < 1 - tol else new_ub
                if new_lb > ub[j] + 1e-7 or new_ub < lb[j] - 1e-7:
                    raise _Infeasible(f"row {r} empties the domain of column {j}")
                if new_lb > lb[j] + tol:
                    lb[j] = new_lb
                    changed = True
                if new_ub < ub[j] - tol:
                    ub[j] = new_ub
                    changed = True
        if not changed:
            break

    if np.any(lb > ub + 1e-7):
        raise _Infeasible("contradictory bounds after propagation")

    fixed_mask = (ub - lb) <= 1e-9
    fixed = np.where(fixed_mask, 0.5 * (lb + ub), 0.0)
    keep = np.nonzero(~fixed_mask)[0]
    obj_shift = float(problem.c[fixed_mask] @ fixed[fixed_mask]
                      + 0.5 * problem.q_diag[fixed_mask] @ fixed[fixed_mask] ** 2)

    rows_keep = np.nonzero(active)[0]
    if rows_keep.size:
        A_act = A[rows_keep][:, keep]
        rhs_adj = rhs[rows_keep] - A[rows_keep][:, fixed_mask] @ fixed[fixed_mask]
        s_act = senses[rows_keep]
        nonempty = np.diff(A_act.indptr) > 0
        # empty rows were verified by the activity checks above
        A_act = A_act[nonempty]
        rhs_adj = rhs_adj[nonempty]
        s_act = s_act[nonempty]
    else:
        A_act = sp.csr_matrix((0, keep.size))
        rhs_adj = np.zeros(0)
        s_act = np.zeros(0, dtype="U1")

    if keep.size == 0:
        return _Reduced(None, keep, fixed, obj_shift)

    eq = s_act == "="
    le = s_act == "<"
    ge = s_act == ">"
    A_in = sp.vstack([A_act[le], -A_act[ge]], format="csr") if (le.any() or ge.any()) else None
    b_in = np.concatenate([rhs_adj[le], -rhs_adj[ge]]) if A_in is not None else None
    qp = QpProblem(
        Q=sp.diags(problem.q_diag[keep]).tocsr(),
        c=problem.c[keep] + 0.0,
        A_eq=A_act[eq] if eq.any() else None,
        b_eq=rhs_adj[eq] if eq.any() else None,
        A_in=A_in,
        b_in=b_in,
        lb=lb[keep],
        ub=ub[keep],
    )
    return _Reduced(qp, keep, fixed, obj_shift)


def _lift(problem: MiqpProblem, red: _Reduced, x_red: np.ndarray | None) -> np.ndarray:
    full = red.fixed.copy()
    if x_red is not None and red.keep_cols.size:
        full[red.keep_cols] = x_red
    return full


def solve_relaxation(problem: MiqpProblem, fixings: dict[int, float] | None = None,
                     qp_config: QpConfig | None = None):
    """Continuous relaxation under extra fixings.  Returns (status,
    objective-including-constant, full primal or None)."""
    try:
        red = presolve(problem, fixings)
    except _Infeasible:
        return QpStatus.INFEASIBLE, math.inf, None
    if red.qp is None:
        x = _lift(problem, red, None)
        return QpStatus.OPTIMAL, red.obj_shift + problem.obj_const, x
    sol = solve_qp(red.qp, config=qp_config)
    if sol.status == QpStatus.INFEASIBLE:
        return QpStatus.INFEASIBLE, math.inf, None
    if sol.status in (QpStatus.OPTIMAL, QpStatus.ITER_LIMIT):
        x = _lift(problem, red, sol.primal)
        return sol.status, sol.objective + red.obj_shift + problem.obj_const, x
    return sol.status, math.inf, None


def solution_states(problem: MiqpProblem, x: np.ndarray) -> dict:
    """Per-step state arrays plus the active region and lock indicator."""
    n = problem.meta["n_steps"]
    out = {kind: np.array([x[problem.col_of[(kind, t, 0)]] for t in range(1, n + 1)])
           for kind in ("px", "py", "vx", "vy", "ax", "ay", "ux", "uy",
                        "fx_ub", "fx_lb", "fy_ub", "fy_lb")}
    region_count = problem.meta["region_count"]
    active = []
    for t in range(1, n + 1):
        vals = [x[problem.col_of[("region", t, r)]] for r in range(region_count)]
        active.append(int(np.argmax(vals)))
    out["active_region"] = np.array(active)
    out["psi"] = np.array([x[problem.col_of[("psi", t, 0)]] for t in range(1, n + 1)])
    return out


def derive_assignment(problem: MiqpProblem, x: np.ndarray, regions) -> dict[int, float]:
    """Round a relaxation point to a structurally consistent binary
    assignment: regions from the velocity direction, lock flags from the
    speed threshold, separators and containment flags from geometry."""
    n = problem.meta["n_steps"]
    allowed = problem.meta["allowed_regions"]
    fix: dict[int, float] = {}
    region_count = problem.meta["region_count"]

    v_th = problem.meta["v_threshold"]
    prev_region = None
    for t in range(1, n + 1):
        vx = x[problem.col_of[("vx", t, 0)]]
        vy = x[problem.col_of[("vy", t, 0)]]
        xp = 1.0 if vx >= v_th else 0.0
        xm = 1.0 if vx <= -v_th else 0.0
        yp = 1.0 if vy >= v_th else 0.0
        ym = 1.0 if vy <= -v_th else 0.0
        psi = 1.0 if (xp + xm == 0.0 or yp + ym == 0.0) else 0.0
        fix[problem.col_of[("psi", t, 0)]] = psi
        fix[problem.col_of[("psi", t, 1)]] = xp
        fix[problem.col_of[("psi", t, 2)]] = xm
        fix[problem.col_of[("psi", t, 3)]] = yp
        fix[problem.col_of[("psi", t, 4)]] = ym

        if vx == 0.0 and vy == 0.0:
            idx = prev_region if prev_region is not None else allowed[0]
        else:
            idx = classify(vx, vy, regions)
        if idx not in allowed:
            mid = math.atan2(vy, vx)
            idx = min(allowed, key=lambda r: abs(
                (regions[r].theta_mid - mid + math.pi) % (2 * math.pi) - math.pi))
        if psi == 1.0 and prev_region is not None and idx != prev_region:
            idx = prev_region
        for r in range(region_count):
            fix[problem.col_of[("region", t, r)]] = 1.0 if r == idx else 0.0
        prev_region = idx

    env_parts = problem.env_parts
    if env_parts is not None:
        from .geometry import Point2, point_in_convex, signed_side

        for t in range(1, n + 1):
            pts = [Point2(x[problem.col_of[(kx, t, 0)]], x[problem.col_of[(ky, t, 0)]])
                   for kx, ky in COLLISION_POINTS]
            best_lam, best_margin = 0, -math.inf
            for lam, part in enumerate(env_parts.parts):
                margin = min(signed_side(e, p) for e in part.edges() for p in pts)
                if margin > best_margin:
                    best_margin, best_lam = margin, lam
            for lam in range(len(env_parts.parts)):
                inside = all(point_in_convex(env_parts.parts[lam], p) for p in pts)
                val = 0.0 if (lam == best_lam or inside) else 1.0
                fix[problem.col_of[("env", t, lam)]] = val

    obstacles = problem.inflated_obstacles or []
    if obstacles:
        from .geometry import Point2, signed_side

        for t in range(1, n + 1):
            aux = 0
            for frames in obstacles:
                poly = frames[t - 1]
                edges = poly.edges()
                for kx, ky in COLLISION_POINTS:
                    p = Point2(x[problem.col_of[(kx, t, 0)]], x[problem.col_of[(ky, t, 0)]])
                    # pre-fixed separators (upper bound 0) win; otherwise the
                    # deepest separating edge
                    chosen = None
                    for e_idx in range(len(edges)):
                        col = problem.col_of[("obs", t, aux + e_idx)]
                        if problem.ub[col] <= 0.0:
                            chosen = e_idx
                            break
                    if chosen is None:
                        vals = [signed_side(e, p) / math.hypot(*e.direction())
                                for e in edges]
                        order = sorted(range(len(edges)), key=lambda i: (vals[i], i))
                        # deepest separating edge not pinned to 1
                        chosen = next(
                            (i for i in order
                             if problem.lb[problem.col_of[("obs", t, aux + i)]] < 1.0),
                            order[0],
                        )
                    for e_idx in range(len(edges)):
                        col = problem.col_of[("obs", t, aux + e_idx)]
                        fix[col] = 0.0 if e_idx == chosen else 1.0
                    aux += len(edges)
    return fix


def _integral(problem: MiqpProblem, x: np.ndarray) -> bool:
    vals = x[problem.binaries]
    return bool(np.all(np.abs(vals - np.round(vals)) <= INT_TOL))


def branch_select(problem: MiqpProblem, x: np.ndarray) -> int:
    """Most fractional binary; region binaries of earlier steps take
    priority over flag binaries, ties break on the lowest column index."""
    best = None
    best_key = None
    for col in problem.binaries:
        if problem.ub[col] - problem.lb[col] <= 1e-12:
            continue
        val = x[col]
        frac = abs(val - round(val))
        if frac <= INT_TOL:
            continue
        ref = problem.var_refs[col]
        klass = 0 if ref.kind == "region" else 1
        key = (klass, ref.time_index, -frac, int(col))
        if best_key is None or key < best_key:
            best_key = key
            best = int(col)
    return best if best is not None else -1


def _sibling_fixings(problem: MiqpProblem, col: int, value: float) -> dict[int, float]:
    fix = {col: value}
    ref = problem.var_refs[col]
    if value == 1.0 and ref.kind == "region":
        for r in range(problem.meta["region_count"]):
            if r != ref.aux_index:
                fix[problem.col_of[("region", ref.time_index, r)]] = 0.0
    return fix


def solve_miqp(problem: MiqpProblem, limits: SolveLimits | None = None,
               regions=None, qp_config: QpConfig | None = None,
               heuristic_every: int = 4) -> MiqpSolution:
    """Best-first branch and bound with plunging and rounding incumbents."""
    limits = limits or SolveLimits()
    t0 = time.monotonic()
    log: list[str] = []
    incumbent_x = None
    incumbent_obj = math.inf
    node_count = 0
    next_id = 0

    def cutoff() -> float:
        if incumbent_x is None:
            return math.inf
        return incumbent_obj - max(limits.abs_gap, limits.rel_gap * abs(incumbent_obj)) * 0.5

    def out_of_budget() -> bool:
        return (time.monotonic() - t0 > limits.time_limit
                or node_count >= limits.node_limit)

    def try_heuristic(x: np.ndarray) -> None:
        nonlocal incumbent_x, incumbent_obj
        if regions is None:
            return
        fix = derive_assignment(problem, x, regions)
        status, obj, x_fix = solve_relaxation(problem, fix, qp_config)
        if status == QpStatus.OPTIMAL and x_fix is not None and _integral(problem, x_fix):
            if obj < incumbent_obj - 1e-12:
                incumbent_obj, incumbent_x = obj, x_fix

    # root
    status, bound, x_root = solve_relaxation(problem, None, qp_config)
    node_count += 1
    if status == QpStatus.INFEASIBLE:
        return MiqpSolution(MiqpStatus.INFEASIBLE, None, math.inf, {}, node_count,
                            time.monotonic() - t0, math.inf, math.inf, log)
    best_bound = bound
    log.append(f"node 0 depth 0 bound {bound:.9g} incumbent - gap -")
    if x_root is not None and _integral(problem, x_root):
        sol = MiqpSolution(MiqpStatus.OPTIMAL, x_root, bound,
                           _binary_values(problem, x_root), node_count,
                           time.monotonic() - t0, 0.0, bound, log)
        return sol
    try_heuristic(x_root)

    heap: list[tuple[float, int, dict, int]] = []
    dive: list[tuple[float, int, dict, int]] = []

    def push(bound_est: float, fixings: dict, depth: int) -> None:
        nonlocal next_id
        next_id += 1
        entry = (bound_est, next_id, fixings, depth)
        if incumbent_x is None:
            dive.append(entry)
        else:
            heapq.heappush(heap, entry)

    col = branch_select(problem, x_root)
    if col >= 0:
        push(bound, _sibling_fixings(problem, col, 1.0), 1)
        push(bound, {col: 0.0}, 1)

    timed_out = False
    while heap or dive:
        if out_of_budget():
            timed_out = True
            break
        if dive:
            entry = dive.pop()
            if incumbent_x is not None:
                # switch to best-first: drain the dive stack into the heap
                for e in dive:
                    heapq.heappush(heap, e)
                dive.clear()
        else:
            entry = heapq.heappop(heap)
        parent_bound, _, fixings, depth = entry
        frontier = [parent_bound] + [e[0] for e in heap] + [e[0] for e in dive]
        best_bound = min(frontier)
        if incumbent_x is not None:
            gap_abs = incumbent_obj - best_bound
            if gap_abs <= max(limits.abs_gap, limits.rel_gap * abs(incumbent_obj)):
                break
        if parent_bound >= cutoff():
            continue

        status, bound, x_node = solve_relaxation(problem, fixings, qp_config)
        node_count += 1
        gap_txt = "-"
        if incumbent_x is not None and best_bound > -math.inf:
            gap_txt = f"{incumbent_obj - best_bound:.3g}"
        log.append(
            f"node {node_count - 1} depth {depth} bound "
            f"{bound if bound < math.inf else float('inf'):.9g} "
            f"incumbent {incumbent_obj if incumbent_x is not None else '-'} gap {gap_txt}"
        )
        if status == QpStatus.INFEASIBLE or bound >= cutoff():
            continue
        if x_node is None:
            continue
        if _integral(problem, x_node):
            if bound < incumbent_obj - 1e-12:
                incumbent_obj, incumbent_x = bound, x_node
            continue
        if node_count % heuristic_every == 0:
            try_heuristic(x_node)
        col = branch_select(problem, x_node)
        if col < 0:
            continue
        child1 = dict(fixings)
        child1.update(_sibling_fixings(problem, col, 1.0))
        child0 = dict(fixings)
        child0[col] = 0.0
        push(bound, child1, depth + 1)
        push(bound, child0, depth + 1)

    wall = time.monotonic() - t0
    remaining = [e[0] for e in heap] + [e[0] for e in dive]
    if incumbent_x is not None:
        best_bound = min(remaining) if (timed_out and remaining) else min(
            remaining + [incumbent_obj])
        gap = max(0.0, incumbent_obj - best_bound)
        status_out = (MiqpStatus.TIME_LIMIT_INCUMBENT if timed_out and gap >
                      max(limits.abs_gap, limits.rel_gap * abs(incumbent_obj))
                      else MiqpStatus.OPTIMAL)
        return MiqpSolution(status_out, incumbent_x, incumbent_obj,
                            _binary_values(problem, incumbent_x), node_count, wall,
                            gap, best_bound, log)
    if timed_out:
        return MiqpSolution(MiqpStatus.TIME_LIMIT_NO_INCUMBENT, None, math.inf, {},
                            node_count, wall, math.inf, min(remaining, default=math.inf), log)
    return MiqpSolution(MiqpStatus.INFEASIBLE, None, math.inf, {}, node_count, wall,
                        math.inf, math.inf, log)


def _binary_values(problem: MiqpProblem, x: np.ndarray) -> dict[int, float]:
    return {int(col): float(round(x[col])) for col in problem.binaries}


def _exactly_one_groups(problem: MiqpProblem, free: list[int]) -> tuple[list[list[int]], list[int]]:
    """Detect rows sum(binaries) == 1 over free binaries only."""
    free_set = set(free)
    groups: list[list[int]] = []
    used: set[int] = set()
    A = problem.A
    for r in range(A.shape[0]):
        if problem.senses[r] != "=":
            continue
        sl = slice(A.indptr[r], A.indptr[r + 1])
        cols = A.indices[sl]
        coefs = A.data[sl]
        cand = [int(c) for c, v in zip(cols, coefs)
                if abs(v - 1.0) < 1e-12 and int(c) in free_set]
        others = [(int(c), v) for c, v in zip(cols, coefs) if int(c) not in free_set]
        if len(cand) < 2 or any(abs(v - 1.0) > 1e-12 for c, v in zip(cols, coefs) if int(c) in free_set):
            continue
        fixed_sum = sum(v * 0.5 * (problem.lb[c] + problem.ub[c]) for c, v in others
                        if problem.ub[c] - problem.lb[c] <= 1e-9)
        if len(others) and any(problem.ub[c] - problem.lb[c] > 1e-9 for c, _ in others):
            continue
        if abs(problem.rhs[r] - fixed_sum - 1.0) > 1e-9:
            continue
        if any(c in used for c in cand):
            continue
        groups.append(cand)
        used.update(cand)
    loose = [c for c in free if c not in used]
    return groups, loose


def brute_force_miqp(problem: MiqpProblem, max_binaries: int = 16,
                     qp_config: QpConfig | None = None) -> MiqpSolution:
    """Exhaustive enumeration oracle.  Enumerates assignments consistent
    with detected exactly-one groups, solving a QP for each."""
    t0 = time.monotonic()
    free = [int(c) for c in problem.binaries
            if problem.ub[c] - problem.lb[c] > 1e-12]
    if len(free) > max_binaries:
        raise ValueError(f"{len(free)} unfixed binaries exceed the oracle cap {max_binaries}")
    groups, loose = _exactly_one_groups(problem, free)

    best_obj = math.inf
    best_x = None
    count = 0

    def recurse(idx: int, fixings: dict[int, float]):
        nonlocal best_obj, best_x, count
        if idx < len(groups):
            for chosen in groups[idx]:
                f2 = dict(fixings)
                for c in groups[idx]:
                    f2[c] = 1.0 if c == chosen else 0.0
                recurse(idx + 1, f2)
            return
        k = idx - len(groups)
        if k < len(loose):
            for val in (0.0, 1.0):
                f2 = dict(fixings)
                f2[loose[k]] = val
                recurse(idx + 1, f2)
            return
        status, obj, x = solve_relaxation(problem, fixings, qp_config)
        count += 1
        if status == QpStatus.OPTIMAL and x is not None and obj < best_obj - 1e-15:
            best_obj, best_x = obj, x

    recurse(0, {})
    wall = time.monotonic() - t0
    if best_x is None:
        return MiqpSolution(MiqpStatus.INFEASIBLE, None, math.inf, {}, count, wall,
                            math.inf, math.inf, [])
    return MiqpSolution(MiqpStatus.OPTIMAL, best_x, best_obj,
                        _binary_values(problem, best_x), count, wall, 0.0, best_obj, [])
