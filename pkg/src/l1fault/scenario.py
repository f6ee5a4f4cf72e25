"""Scenario files: a TOML tree describing one closed-loop experiment.

Schema (all tables optional unless marked)::

    name = "fig1_left"
    horizon = 41                       # required; steps k = 0 .. horizon-1
    seed = 0
    estimators = ["l1", "kalman"]      # or estimator = "l1"
    w_max = 0.0                        # measurement noise radius (l2)
    v_max = 0.0                        # process noise radius (l1)
    initial_state = [2.0, 4.0, 6.0]    # node-major; default: formation or zeros
    control_from_estimate = false

    [graph]                            # required
    nodes = 3
    edges = [[1, 2], [2, 3]]           # or grid = [rows, cols]

    [dynamics]
    preset = "integrator"              # "integrator" | "double_integrator" | "custom"
    n = 1                              # integrator state size
    dt = 0.05                          # double integrator step
    # A = [[...]], B = [[...]] for "custom"

    [control]
    law = "zero"                       # zero | platoon | relative_feedback
    c1 = 1.5
    c2 = 1.5
    leader_velocity = 1.0
    spacing = 2.0

    [[leader_mode]]
    k_start = 20
    k_end = 40
    a1 = 0

    [[faults]]
    node = 1                           # or nodes = [2, 4]
    k_start = 30
    k_end = 30
    vector = [-3.0]                    # or random_uniform = [-10, 10] with coords = [3, 4]

    [kalman]
    p_scale = 1e-4
    v_scale = 1e-4

    [solver]                           # any SolverConfig field

    [distributed]
    enabled = false
    zeta = 1.0
    lmax = 500
    detect_eps = 0.5

    [bounds]
    d0 = 0.0
    d_bar = 1e-6
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .distributed import RoundConfig
from .errors import ValidationError
from .estimators import ESTIMATOR_KINDS
from .graph import Graph, build_graph, grid_graph
from .plant import (
    AgentDynamics,
    ControlLaw,
    FaultSchedule,
    LeaderSchedule,
    double_integrator,
    formation_offsets,
    integrator,
    line_formation,
)
from .solvers import SolverConfig

BUNDLED = ("fig1_left", "fig1_right", "platoon9", "noise9")


@dataclass(frozen=True)
class FaultSpec:
    nodes: tuple[int, ...]
    k_start: int
    k_end: int
    vector: tuple[float, ...] | None = None
    uniform: tuple[float, float] | None = None
    coords: tuple[int, ...] | None = None  # 1-based, within an agent block


@dataclass(frozen=True)
class DistributedSpec:
    enabled: bool = False
    zeta: float = 1.0
    lmax: int = 500
    detect_eps: float | None = None
    stop_tol: float = 1e-6


@dataclass
class Scenario:
    name: str
    graph: Graph
    dynamics: AgentDynamics
    horizon: int
    estimators: tuple[str, ...] = ("l1",)
    leader: LeaderSchedule = field(default_factory=LeaderSchedule)
    faults: tuple[FaultSpec, ...] = ()
    control: ControlLaw = field(default_factory=ControlLaw)
    control_from_estimate: bool = False
    initial_state: np.ndarray | None = None
    seed: int = 0
    w_max: float = 0.0
    v_max: float = 0.0
    p_scale: float = 1e-4
    v_scale: float = 1e-4
    solver: SolverConfig = field(default_factory=SolverConfig)
    distributed: DistributedSpec = field(default_factory=DistributedSpec)
    d0: float = 0.0
    d_bar: float = 1e-6
    source: Path | None = None

    @property
    def M(self) -> int:
        return self.graph.M

    @property
    def n(self) -> int:
        return self.dynamics.n

    def round_config(self) -> RoundConfig:
        d = self.distributed
        return RoundConfig(zeta=d.zeta, lmax=d.lmax, stop_tol=d.stop_tol)

    def x0(self) -> np.ndarray:
        if self.initial_state is not None:
            return np.asarray(self.initial_state, dtype=float)
        x = np.zeros(self.n * self.M)
        if self.control.tag in ("platoon", "relative_feedback") and self.control.offsets is not None:
            # start in formation: r_j = r_1 + offsets[0, j]
            for j in range(self.M):
                x[j * self.n:j * self.n + 2] = self.control.offsets[0, j]
        return x

    def fault_schedule(self, seed: int | None = None) -> FaultSchedule:
        """Realise the fault specs; random entries are drawn in file order from ``seed``."""
        rng = np.random.default_rng(self.seed if seed is None else seed)
        sched = FaultSchedule(self.M, self.n)
        for spec in self.faults:
            for k in range(spec.k_start, min(spec.k_end, self.horizon - 1) + 1):
                for node in spec.nodes:
                    vec = np.zeros(self.n)
                    if spec.vector is not None:
                        vec[:] = spec.vector
                    else:
                        lo, hi = spec.uniform
                        idx = [c - 1 for c in spec.coords] if spec.coords else list(range(self.n))
                        vec[idx] = rng.uniform(lo, hi, size=len(idx))
                    sched.add(k, node, vec)
        return sched

    def replace(self, **changes: Any) -> "Scenario":
        return dataclasses.replace(self, **changes)


def _err(path: Path | str, msg: str) -> ValidationError:
    return ValidationError(f"{path}: {msg}")


def _int(tbl: dict, key: str, where: str, default: Any = ..., minimum: int | None = None) -> int:
    if key not in tbl:
        if default is ...:
            raise ValidationError(f"{where}: missing required key {key!r}")
        return default
    v = tbl[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidationError(f"{where}: {key!r} must be an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ValidationError(f"{where}: {key!r} must be >= {minimum}, got {v}")
    return v


def _float(tbl: dict, key: str, where: str, default: float) -> float:
    v = tbl.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{where}: {key!r} must be a number, got {v!r}")
    return float(v)


def _parse_graph(tbl: dict, where: str) -> Graph:
    if "grid" in tbl:
        rows, cols = tbl["grid"]
        g = grid_graph(int(rows), int(cols))
        if "nodes" in tbl and tbl["nodes"] != g.M:
            raise ValidationError(f"{where}: nodes = {tbl['nodes']} disagrees with grid {rows}x{cols}")
        return g
    M = _int(tbl, "nodes", where, minimum=1)
    edges = tbl.get("edges", [])
    return build_graph(M, [tuple(e) for e in edges])


def _parse_dynamics(tbl: dict, where: str) -> AgentDynamics:
    preset = tbl.get("preset", "integrator")
    if preset == "integrator":
        n = _int(tbl, "n", where, 1, minimum=1)
        return integrator(n, _int(tbl, "m", where, n, minimum=1))
    if preset == "double_integrator":
        return double_integrator(_float(tbl, "dt", where, 0.05), _int(tbl, "dims", where, 2, minimum=1))
    if preset == "custom":
        if "A" not in tbl or "B" not in tbl:
            raise ValidationError(f"{where}: custom dynamics need A and B")
        return AgentDynamics(np.array(tbl["A"], dtype=float), np.array(tbl["B"], dtype=float))
    raise ValidationError(f"{where}: unknown dynamics preset {preset!r}")


def _parse_faults(items: list, M: int, n: int, where: str) -> tuple[FaultSpec, ...]:
    out = []
    for t, f in enumerate(items):
        w = f"{where}[{t}]"
        if "nodes" in f:
            nodes = tuple(int(i) for i in f["nodes"])
        else:
            nodes = (_int(f, "node", w),)
        for i in nodes:
            if not 1 <= i <= M:
                raise ValidationError(f"{w}: node {i} does not exist (graph has {M} nodes)")
        k0 = _int(f, "k_start", w, minimum=0)
        k1 = _int(f, "k_end", w, k0)
        if k1 < k0:
            raise ValidationError(f"{w}: k_end < k_start")
        if ("vector" in f) == ("random_uniform" in f):
            raise ValidationError(f"{w}: give exactly one of 'vector' or 'random_uniform'")
        if "vector" in f:
            vec = tuple(float(v) for v in f["vector"])
            if len(vec) != n:
                raise ValidationError(f"{w}: vector must have {n} entries")
            out.append(FaultSpec(nodes, k0, k1, vector=vec))
        else:
            lo, hi = (float(v) for v in f["random_uniform"])
            coords = tuple(int(c) for c in f.get("coords", range(1, n + 1)))
            if any(not 1 <= c <= n for c in coords):
                raise ValidationError(f"{w}: coords must lie in 1..{n}")
            out.append(FaultSpec(nodes, k0, k1, uniform=(lo, hi), coords=coords))
    return tuple(out)


def _parse_control(tbl: dict, M: int, where: str) -> ControlLaw:
    law = tbl.get("law", "zero")
    if law in ("zero",):
        return ControlLaw("zero")
    offsets = formation_offsets(line_formation(M, _float(tbl, "spacing", where, 2.0)))
    return ControlLaw(
        law,
        c1=_float(tbl, "c1", where, 1.5),
        c2=_float(tbl, "c2", where, 1.5),
        leader_velocity=_float(tbl, "leader_velocity", where, 1.0),
        offsets=offsets,
    )


def parse_scenario(data: dict, source: Path | str = "<scenario>") -> Scenario:
    where = str(source)
    if "graph" not in data:
        raise _err(source, "missing [graph] table")
    g = _parse_graph(data["graph"], f"{where} [graph]")
    dyn = _parse_dynamics(data.get("dynamics", {}), f"{where} [dynamics]")
    horizon = _int(data, "horizon", where, minimum=1)

    est = data.get("estimators", data.get("estimator", "l1"))
    est = (est,) if isinstance(est, str) else tuple(est)
    for e in est:
        if e not in ESTIMATOR_KINDS:
            raise _err(source, f"unknown estimator {e!r}; expected one of {ESTIMATOR_KINDS}")

    modes = []
    for t, m in enumerate(data.get("leader_mode", [])):
        w = f"{where} [[leader_mode]][{t}]"
        modes.append((_int(m, "k_start", w, minimum=0), _int(m, "k_end", w), _int(m, "a1", w)))

    x0 = data.get("initial_state")
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (g.M * dyn.n,):
            raise _err(source, f"initial_state must have {g.M * dyn.n} entries")

    kal = data.get("kalman", {})
    dist = data.get("distributed", {})
    bounds = data.get("bounds", {})
    eps = dist.get("detect_eps")
    sc = Scenario(
        name=str(data.get("name", Path(where).stem)),
        graph=g,
        dynamics=dyn,
        horizon=horizon,
        estimators=est,
        leader=LeaderSchedule(tuple(modes)),
        faults=_parse_faults(data.get("faults", []), g.M, dyn.n, f"{where} [[faults]]"),
        control=_parse_control(data.get("control", {}), g.M, f"{where} [control]"),
        control_from_estimate=bool(data.get("control_from_estimate", False)),
        initial_state=x0,
        seed=_int(data, "seed", where, 0),
        w_max=_float(data, "w_max", where, 0.0),
        v_max=_float(data, "v_max", where, 0.0),
        p_scale=_float(kal, "p_scale", f"{where} [kalman]", 1e-4),
        v_scale=_float(kal, "v_scale", f"{where} [kalman]", 1e-4),
        solver=SolverConfig(**data.get("solver", {})),
        distributed=DistributedSpec(
            enabled=bool(dist.get("enabled", False)),
            zeta=_float(dist, "zeta", f"{where} [distributed]", 1.0),
            lmax=_int(dist, "lmax", f"{where} [distributed]", 500, minimum=1),
            detect_eps=None if eps is None else float(eps),
            stop_tol=_float(dist, "stop_tol", f"{where} [distributed]", 1e-6),
        ),
        d0=_float(bounds, "d0", f"{where} [bounds]", 0.0),
        d_bar=_float(bounds, "d_bar", f"{where} [bounds]", 1e-6),
        source=Path(source) if not isinstance(source, Path) else source,
    )
    if sc.w_max < 0 or sc.v_max < 0:
        raise _err(source, "w_max and v_max must be non-negative")
    if sc.w_max > 0 and "l1" in sc.estimators:
        raise _err(source, "noisy measurements need estimator 'l1_denoise' instead of 'l1'")
    return sc


def bundled_path(name: str) -> Path:
    ref = resources.files("l1fault.scenarios").joinpath(f"{name}.toml")
    return Path(str(ref))


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario file, or a bundled scenario by name (``fig1_left``)."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        p = bundled_path(str(path))
    if not p.exists():
        raise ValidationError(f"scenario file not found: {path}")
    try:
        data = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{p}: {exc}") from None
    return parse_scenario(data, p)
