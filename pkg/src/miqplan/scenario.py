"""Scenario definition, persistence, and the bundled benchmark setups:
two 90-degree-turn references (one trackable, one whose curvature exceeds
the vehicle limit) and an overtaking maneuver with oncoming traffic."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .fitting import FitConfig
from .geometry import ConvexPolygon, PolygonSet, convex_decompose, offset_simple_polygon, point_in_simple, _as_points
from .model import ReferenceTrajectory, Weights
from .regions import DrivingLimits

SCENARIO_VERSION = 1


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ScenarioGeometryError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    environment: list[tuple[float, float]]
    obstacles: list[dict]  # each {"frames": [vertex list per step]}
    initial_state: dict
    reference: ReferenceTrajectory
    weights: Weights
    horizon_n: int
    horizon_dt: float
    vehicle: dict  # wheelbase, disk_radius, kappa_min, kappa_max
    max_yaw_rate: float = 0.5
    v_threshold: float = 0.1
    fit_params: dict = field(default_factory=dict)  # v_max, a_lat override
    table_path: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        n = self.horizon_n
        if len(self.reference) != n:
            raise ScenarioGeometryError(
                f"reference length {len(self.reference)} != horizon {n}"
            )
        for i, obstacle in enumerate(self.obstacles):
            frames = obstacle["frames"]
            if len(frames) != n:
                raise ScenarioGeometryError(
                    f"obstacles[{i}] has {len(frames)} frames, expected {n}"
                )
            counts = {len(fr) for fr in frames}
            if len(counts) != 1:
                raise ScenarioGeometryError(
                    f"obstacles[{i}] changes vertex count over time: {sorted(counts)}"
                )
            for k, fr in enumerate(frames):
                ConvexPolygon(tuple((p[0], p[1]) for p in fr))  # validates shape
        deflated = offset_simple_polygon(
            self.environment, -self.vehicle["disk_radius"]
        )
        p0 = (self.initial_state["px"], self.initial_state["py"])
        if not point_in_simple(_as_points(deflated), _as_points([p0])[0]):
            raise ScenarioGeometryError(
                f"initial position {p0} outside the deflated environment"
            )


def fit_config_for(scenario: Scenario, region_count: int = 32,
                   workers: int = 1) -> FitConfig:
    """Fit configuration matched to a scenario's vehicle and speed range."""
    veh = scenario.vehicle
    fp = scenario.fit_params
    driving = DrivingLimits()
    if "a_lat" in fp:
        a = float(fp["a_lat"])
        driving = DrivingLimits(a_lat_lo=-a, a_lat_hi=a)
    return FitConfig(
        region_count=region_count,
        v_max=float(fp.get("v_max", 20.0)),
        kappa_min=veh["kappa_min"],
        kappa_max=veh["kappa_max"],
        wheelbase=veh["wheelbase"],
        disk_radius=veh["disk_radius"],
        driving_limits=driving,
        workers=workers,
    )


def gen_circle_reference(radius: float, speed: float, arc: float,
                         n: int, dt: float) -> ReferenceTrajectory:
    """Left-turning circular arc at constant speed, starting at the origin
    heading +x; once the arc completes the reference continues straight.
    Radii >= 1e5 m degenerate to uniform straight-line motion."""
    ts = np.arange(n) * dt
    if radius >= 1e5:
        return ReferenceTrajectory(
            px=speed * ts, py=np.zeros(n),
            vx=np.full(n, speed), vy=np.zeros(n),
        )
    omega = speed / radius
    t_arc = arc / omega
    ang = np.minimum(ts, t_arc) * omega
    px = radius * np.sin(ang)
    py = radius * (1.0 - np.cos(ang))
    extra = np.maximum(ts - t_arc, 0.0)
    px = px + extra * speed * np.cos(arc) * (ts > t_arc)
    py = py + extra * speed * np.sin(arc) * (ts > t_arc)
    heading = np.where(ts < t_arc, ang, arc)
    return ReferenceTrajectory(
        px=px, py=py, vx=speed * np.cos(heading), vy=speed * np.sin(heading)
    )


def gen_circle_scenario(feasible: bool = True, n: int = 20, dt: float = 0.25) -> Scenario:
    """The 90-degree-turn benchmark.  The feasible variant tracks a wide
    circle well inside the curvature limit; the infeasible variant's
    reference curvature exceeds it, forcing the plan off the reference."""
    kappa_max = 0.1
    if feasible:
        radius = 25.0
        speed = radius * (math.pi / 2) / ((n - 1) * dt)  # arc ends at the horizon
        name = "feasible-circle"
    else:
        radius = 9.0  # reference curvature 1/9 > kappa_max
        speed = 7.5
        name = "infeasible-circle"
    reference = gen_circle_reference(radius, speed, math.pi / 2, n, dt)
    env = [(-20.0, -20.0), (45.0, -20.0), (45.0, 45.0), (-20.0, 45.0)]
    return Scenario(
        name=name,
        environment=env,
        obstacles=[],
        initial_state={"px": 0.0, "py": 0.0, "vx": speed, "vy": 0.0,
                       "ax": 0.0, "ay": 0.0},
        reference=reference,
        weights=Weights(q_p=1.0, q_v=0.1, q_a=0.01, q_u=0.001),
        horizon_n=n,
        horizon_dt=dt,
        vehicle={"wheelbase": 2.7, "disk_radius": 1.0,
                 "kappa_min": -kappa_max, "kappa_max": kappa_max},
        max_yaw_rate=0.5,
        fit_params={"v_max": 10.0, "a_lat": 6.0},
    )


def _box_frames(cx0: float, cy: float, vx: float, half_len: float,
                half_wid: float, n: int, dt: float) -> list[list[list[float]]]:
    frames = []
    for k in range(n):
        cx = cx0 + vx * k * dt
        frames.append([
            [cx - half_len, cy - half_wid], [cx + half_len, cy - half_wid],
            [cx + half_len, cy + half_wid], [cx - half_len, cy + half_wid],
        ])
    return frames


def gen_overtake_scenario(n: int = 20, dt: float = 0.25) -> Scenario:
    """Two-lane road: the ego at 30 km/h approaches a 10 km/h vehicle in
    its lane while 30 km/h oncoming traffic occupies the other lane; the
    reference is the right-lane center line at the ego speed."""
    lane = 3.5
    ego_speed = 30.0 / 3.6
    lead_speed = 10.0 / 3.6
    oncoming_speed = -30.0 / 3.6
    env = [(0.0, 0.0), (150.0, 0.0), (150.0, 2 * lane), (0.0, 2 * lane)]
    right_center = lane / 2
    left_center = 1.5 * lane
    ts = np.arange(n) * dt
    reference = ReferenceTrajectory(
        px=5.0 + ego_speed * ts, py=np.full(n, right_center),
        vx=np.full(n, ego_speed), vy=np.zeros(n),
    )
    obstacles = [
        {"frames": _box_frames(18.0, right_center, lead_speed, 2.25, 1.0, n, dt)},
        {"frames": _box_frames(95.0, left_center, oncoming_speed, 2.25, 1.0, n, dt)},
    ]
    return Scenario(
        name="overtake",
        environment=env,
        obstacles=obstacles,
        initial_state={"px": 5.0, "py": right_center, "vx": ego_speed,
                       "vy": 0.0, "ax": 0.0, "ay": 0.0},
        reference=reference,
        weights=Weights(q_p=1.0, q_v=0.1, q_a=0.01, q_u=0.001),
        horizon_n=n,
        horizon_dt=dt,
        vehicle={"wheelbase": 2.7, "disk_radius": 1.0,
                 "kappa_min": -0.2, "kappa_max": 0.2},
        max_yaw_rate=0.5,
        fit_params={"v_max": 12.0},
    )


BUILTIN_SCENARIOS = {
    "feasible-circle": lambda: gen_circle_scenario(feasible=True),
    "infeasible-circle": lambda: gen_circle_scenario(feasible=False),
    "overtake": gen_overtake_scenario,
}


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise SchemaError(f"{path}.{key}" if path else key, "missing required field")
    return doc[key]


def _number(value, path: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise SchemaError(path, f"expected a number, got {type(value).__name__}")
    return float(value)


def save_scenario(scenario: Scenario, path) -> None:
    doc = {
        "version": SCENARIO_VERSION,
        "name": scenario.name,
        "horizon": {"n": scenario.horizon_n, "dt": scenario.horizon_dt},
        "vehicle": dict(scenario.vehicle),
        "weights": {"qp": scenario.weights.q_p, "qv": scenario.weights.q_v,
                    "qa": scenario.weights.q_a, "qu": scenario.weights.q_u},
        "environment": {"vertices": [[float(x), float(y)] for x, y in scenario.environment]},
        "obstacles": [
            {"frames": [[[float(x), float(y)] for x, y in frame]
                        for frame in obstacle["frames"]]}
            for obstacle in scenario.obstacles
        ],
        "initial": {k: float(v) for k, v in scenario.initial_state.items()},
        "reference": {"frames": [
            {"px": float(scenario.reference.px[i]), "py": float(scenario.reference.py[i]),
             "vx": float(scenario.reference.vx[i]), "vy": float(scenario.reference.vy[i])}
            for i in range(len(scenario.reference))
        ]},
        "max_yaw_rate": scenario.max_yaw_rate,
        "v_threshold": scenario.v_threshold,
        "fit": dict(scenario.fit_params),
    }
    if scenario.table_path:
        doc["table_path"] = scenario.table_path
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != SCENARIO_VERSION:
        raise SchemaError("version", f"unsupported version {doc.get('version')!r}")
    horizon = _require(doc, "horizon", "")
    n = horizon.get("n")
    if not isinstance(n, int) or n < 2:
        raise SchemaError("horizon.n", f"expected an integer >= 2, got {n!r}")
    dt = _number(_require(horizon, "dt", "horizon"), "horizon.dt")
    vehicle = _require(doc, "vehicle", "")
    for key in ("wheelbase", "disk_radius", "kappa_min", "kappa_max"):
        _number(_require(vehicle, key, "vehicle"), f"vehicle.{key}")
    weights_doc = _require(doc, "weights", "")
    weights = Weights(
        q_p=_number(_require(weights_doc, "qp", "weights"), "weights.qp"),
        q_v=_number(_require(weights_doc, "qv", "weights"), "weights.qv"),
        q_a=_number(_require(weights_doc, "qa", "weights"), "weights.qa"),
        q_u=_number(_require(weights_doc, "qu", "weights"), "weights.qu"),
    )
    env_doc = _require(doc, "environment", "")
    vertices = _require(env_doc, "vertices", "environment")
    if not isinstance(vertices, list) or len(vertices) < 3:
        raise SchemaError("environment.vertices", "need at least 3 vertices")
    environment = []
    for i, v in enumerate(vertices):
        if not (isinstance(v, list) and len(v) == 2):
            raise SchemaError(f"environment.vertices[{i}]", "expected [x, y]")
        environment.append((_number(v[0], f"environment.vertices[{i}][0]"),
                            _number(v[1], f"environment.vertices[{i}][1]")))
    obstacles = []
    for i, obstacle in enumerate(doc.get("obstacles", [])):
        frames_doc = _require(obstacle, "frames", f"obstacles[{i}]")
        if len(frames_doc) != n:
            raise SchemaError(f"obstacles[{i}].frames",
                              f"expected length {n}, got {len(frames_doc)}")
        frames = []
        for k, frame in enumerate(frames_doc):
            if not isinstance(frame, list) or len(frame) < 3:
                raise SchemaError(f"obstacles[{i}].frames[{k}]",
                                  "polygon needs at least 3 vertices")
            frames.append([[ _number(p[0], f"obstacles[{i}].frames[{k}][{j}][0]"),
                             _number(p[1], f"obstacles[{i}].frames[{k}][{j}][1]")]
                           for j, p in enumerate(frame)])
        obstacles.append({"frames": frames})
    initial_doc = _require(doc, "initial", "")
    initial = {}
    for key in ("px", "py", "vx", "vy", "ax", "ay"):
        initial[key] = _number(_require(initial_doc, key, "initial"), f"initial.{key}")
    ref_doc = _require(doc, "reference", "")
    frames = _require(ref_doc, "frames", "reference")
    if len(frames) != n:
        raise SchemaError("reference.frames", f"expected length {n}, got {len(frames)}")
    ref_cols = {key: [] for key in ("px", "py", "vx", "vy")}
    for i, frame in enumerate(frames):
        for key in ref_cols:
            ref_cols[key].append(_number(_require(frame, key, f"reference.frames[{i}]"),
                                         f"reference.frames[{i}].{key}"))
    reference = ReferenceTrajectory(**{k: np.array(v) for k, v in ref_cols.items()})
    try:
        return Scenario(
            name=doc.get("name", "scenario"),
            environment=environment,
            obstacles=obstacles,
            initial_state=initial,
            reference=reference,
            weights=weights,
            horizon_n=n,
            horizon_dt=dt,
            vehicle={k: float(vehicle[k]) for k in
                     ("wheelbase", "disk_radius", "kappa_min", "kappa_max")},
            max_yaw_rate=float(doc.get("max_yaw_rate", 0.5)),
            v_threshold=float(doc.get("v_threshold", 0.1)),
            fit_params=dict(doc.get("fit", {})),
            table_path=doc.get("table_path"),
        )
    except ScenarioGeometryError:
        raise
    except ValueError as exc:
        raise SchemaError("", str(exc)) from exc
