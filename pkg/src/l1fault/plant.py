"""Stacked multi-agent LTI plant with relative-state measurements.

State layout is node-major: ``x = [x_1; x_2; ...; x_M]`` with ``x_i`` in
``R^n``. Every oriented edge ``(i, j)`` yields the measurement block
``x_i - x_j`` owned by node ``i``. The leader (node 1) additionally measures
``x_1`` when it is in active mode.

Measurement rows are ordered node-major; inside a node the leader's absolute
block comes first, then one block per owned edge in ascending tail id.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import block_diag

from .errors import GraphError, ValidationError
from .graph import Graph, check_weak_connectivity, neighbors

DEFAULT_DT = 0.05
DEFAULT_GAIN = 1.5


@dataclass(frozen=True)
class AgentDynamics:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(A.shape[0], -1)
        if A.shape[0] != A.shape[1]:
            raise ValidationError(f"A_i must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValidationError(f"B_i must have {A.shape[0]} rows, got {B.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


def integrator(n: int = 1, m: int = 1) -> AgentDynamics:
    """``x(k) = x(k-1) + f(k)``; the input has no effect."""
    return AgentDynamics(np.eye(n), np.zeros((n, m)))


def double_integrator(dt: float = DEFAULT_DT, dims: int = 2) -> AgentDynamics:
    """Zero-order-hold discretisation of a planar double integrator.

    State is ``[p; v]`` with ``dims`` position and velocity coordinates, input
    is an acceleration. The closed form is exact since the continuous
    generator is nilpotent.
    """
    I = np.eye(dims)
    Z = np.zeros((dims, dims))
    A = np.block([[I, dt * I], [Z, I]])
    B = np.vstack([0.5 * dt * dt * I, dt * I])
    return AgentDynamics(A, B)


@dataclass(frozen=True)
class LeaderSchedule:
    """Piecewise-constant leader mode; steps not covered by an interval are active.

    Later intervals win where intervals overlap.
    """

    intervals: tuple[tuple[int, int, int], ...] = ()
    default: int = 1

    def __post_init__(self) -> None:
        for k0, k1, a in self.intervals:
            if a not in (0, 1):
                raise ValidationError(f"leader mode must be 0 or 1, got {a!r}")
            if k1 < k0:
                raise ValidationError(f"leader mode interval [{k0}, {k1}] is empty")

    def __call__(self, k: int) -> int:
        a1 = self.default
        for k0, k1, a in self.intervals:
            if k0 <= k <= k1:
                a1 = a
        return a1


def measurement_layout(g: Graph, active: bool) -> list[tuple[int, int]]:
    """Row blocks as ``(owner, other)`` pairs; ``other == 0`` marks the absolute block."""
    layout: list[tuple[int, int]] = []
    for i in g.nodes:
        if i == 1 and active:
            layout.append((1, 0))
        layout.extend((i, j) for j in g.out_neighbors(i))
    return layout


def _rows_from_layout(layout: Sequence[tuple[int, int]], M: int, n: int) -> np.ndarray:
    C = np.zeros((n * len(layout), n * M))
    eye = np.eye(n)
    for b, (i, j) in enumerate(layout):
        r = slice(b * n, (b + 1) * n)
        C[r, (i - 1) * n:i * n] = eye
        if j:
            C[r, (j - 1) * n:j * n] = -eye
    return C


def build_output_matrices(g: Graph, n: int) -> tuple[np.ndarray, np.ndarray]:
    connected, _ = check_weak_connectivity(g)
    if not connected:
        raise GraphError("output matrices need a weakly connected graph")
    C0 = _rows_from_layout(measurement_layout(g, False), g.M, n)
    C1 = _rows_from_layout(measurement_layout(g, True), g.M, n)
    return C0, C1


def node_output_rows(g: Graph, n: int, i: int, active: bool) -> np.ndarray:
    """The rows of ``C_0`` (or ``C_1``) measured by node ``i``."""
    layout = [blk for blk in measurement_layout(g, active and i == 1) if blk[0] == i]
    return _rows_from_layout(layout, g.M, n)


@dataclass(frozen=True)
class NetworkPlant:
    graph: Graph
    agents: tuple[AgentDynamics, ...]
    leader_mode: LeaderSchedule = field(default_factory=LeaderSchedule)
    A: np.ndarray = field(init=False, repr=False)
    B: np.ndarray = field(init=False, repr=False)
    C0: np.ndarray = field(init=False, repr=False)
    C1: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.agents) != self.graph.M:
            raise ValidationError(f"expected {self.graph.M} agents, got {len(self.agents)}")
        n, m = self.agents[0].n, self.agents[0].m
        if any(a.n != n or a.m != m for a in self.agents):
            raise ValidationError("all agents must share the same state and input dimensions")
        C0, C1 = build_output_matrices(self.graph, n)
        object.__setattr__(self, "A", block_diag(*[a.A for a in self.agents]))
        object.__setattr__(self, "B", block_diag(*[a.B for a in self.agents]))
        object.__setattr__(self, "C0", C0)
        object.__setattr__(self, "C1", C1)

    @property
    def M(self) -> int:
        return self.graph.M

    @property
    def n(self) -> int:
        return self.agents[0].n

    @property
    def m(self) -> int:
        return self.agents[0].m

    @property
    def dim(self) -> int:
        return self.n * self.M

    def C(self, a1: int) -> np.ndarray:
        return self.C1 if a1 else self.C0

    def node_rows(self, i: int, a1: int) -> np.ndarray:
        return node_output_rows(self.graph, self.n, i, bool(a1))


def build_plant(
    g: Graph,
    dynamics: AgentDynamics | Sequence[AgentDynamics],
    leader_mode: LeaderSchedule | None = None,
) -> NetworkPlant:
    agents = (dynamics,) * g.M if isinstance(dynamics, AgentDynamics) else tuple(dynamics)
    return NetworkPlant(g, agents, leader_mode or LeaderSchedule())


def step_truth(
    plant: NetworkPlant,
    x_prev: np.ndarray,
    u_prev: np.ndarray,
    f_k: np.ndarray,
    v: np.ndarray | None = None,
) -> np.ndarray:
    """``x(k) = A x(k-1) + B u(k-1) [+ v(k-1)] + f(k)``."""
    x_prev = np.asarray(x_prev, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float)
    f_k = np.asarray(f_k, dtype=float)
    if x_prev.shape != (plant.dim,) or f_k.shape != (plant.dim,):
        raise ValidationError(f"state and fault must have length {plant.dim}")
    if u_prev.shape != (plant.m * plant.M,):
        raise ValidationError(f"input must have length {plant.m * plant.M}")
    x = plant.A @ x_prev + plant.B @ u_prev + f_k
    if v is not None:
        x = x + v
    return x


def measure(plant: NetworkPlant, x: np.ndarray, a1: int, w: np.ndarray | None = None) -> np.ndarray:
    y = plant.C(a1) @ np.asarray(x, dtype=float)
    if w is not None:
        y = y + w
    return y


def sample_l1_ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    """Random vector with ``||v||_1 <= radius`` (random direction and radius)."""
    if radius <= 0 or dim == 0:
        return np.zeros(dim)
    d = rng.laplace(size=dim)
    return d / np.abs(d).sum() * radius * rng.uniform()


def sample_l2_ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    """Random vector with ``||w||_2 <= radius`` (random direction and radius)."""
    if radius <= 0 or dim == 0:
        return np.zeros(dim)
    d = rng.standard_normal(dim)
    return d / np.linalg.norm(d) * radius * rng.uniform()


# -- control laws ------------------------------------------------------------

CONTROL_TAGS = ("zero", "platoon", "relative_feedback", "custom")


@dataclass(frozen=True)
class ControlLaw:
    """Shared control law ``u = kappa(x)``.

    ``platoon`` is the leader-tracking law on node 1 plus relative position
    feedback on the followers; it expects the ``[p_x, p_y, v_x, v_y]`` state of
    :func:`double_integrator`. ``relative_feedback`` applies the follower law
    to every node. ``custom`` is the affine law ``u = K x + u0``.
    """

    tag: str = "zero"
    c1: float = DEFAULT_GAIN
    c2: float = DEFAULT_GAIN
    leader_velocity: float = 1.0
    offsets: np.ndarray | None = None  # (M, M, 2); offsets[i, j] = desired p_j - p_i
    K: np.ndarray | None = None
    u0: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.tag not in CONTROL_TAGS:
            raise ValidationError(f"unknown control law {self.tag!r}; expected one of {CONTROL_TAGS}")
        if self.tag == "custom" and self.K is None:
            raise ValidationError("custom control law needs a gain matrix K")


def formation_offsets(positions: np.ndarray) -> np.ndarray:
    """``offsets[i, j] = r_j - r_i`` for formation positions ``r`` (M x 2)."""
    r = np.asarray(positions, dtype=float)
    return r[None, :, :] - r[:, None, :]


def line_formation(M: int, spacing: float = 2.0) -> np.ndarray:
    """Vehicles queued behind the leader along the x axis."""
    r = np.zeros((M, 2))
    r[:, 0] = -spacing * np.arange(M)
    return r


def eval_control(law: ControlLaw, plant: NetworkPlant, x: np.ndarray) -> np.ndarray:
    M, n, m = plant.M, plant.n, plant.m
    if law.tag == "zero":
        return np.zeros(m * M)
    if law.tag == "custom":
        u = np.asarray(law.K, dtype=float) @ x
        return u if law.u0 is None else u + law.u0
    if n != 4 or m != 2:
        raise ValidationError(f"{law.tag!r} control needs planar double-integrator agents (n=4, m=2)")
    X = np.asarray(x, dtype=float).reshape(M, n)
    offsets = law.offsets if law.offsets is not None else np.zeros((M, M, 2))
    gains = np.array([law.c1, law.c2])
    U = np.zeros((M, m))
    for i in range(1, M + 1):
        if i == 1 and law.tag == "platoon":
            U[0] = [-X[0, 2] + law.leader_velocity, 0.0]
            continue
        for j in neighbors(plant.graph, i):
            U[i - 1] -= gains * (X[i - 1, :2] - X[j - 1, :2] + offsets[i - 1, j - 1])
    return U.ravel()


# -- faults ------------------------------------------------------------------


class FaultSchedule:
    """Realised faults: step ``k`` -> list of ``(node, f_i(k))``."""

    def __init__(self, M: int, n: int, events: Mapping[int, Sequence[tuple[int, Sequence[float]]]] | None = None):
        self.M = M
        self.n = n
        self.events: dict[int, list[tuple[int, np.ndarray]]] = {}
        for k, entries in (events or {}).items():
            for node, vec in entries:
                self.add(k, node, vec)

    def add(self, k: int, node: int, vec: Sequence[float]) -> None:
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if vec.shape != (self.n,):
            raise ValidationError(f"fault vector for node {node} at k={k} must have length {self.n}")
        self.events.setdefault(int(k), []).append((int(node), vec))

    def steps(self) -> list[int]:
        return sorted(self.events)

    def faulty_nodes(self, k: int) -> frozenset[int]:
        return fault_vector(self, k)[1]


def fault_vector(s: FaultSchedule, k: int) -> tuple[np.ndarray, frozenset[int]]:
    f = np.zeros(s.n * s.M)
    for node, vec in s.events.get(k, ()):
        if not (1 <= node <= s.M):
            raise ValidationError(f"fault schedule references node {node} outside 1..{s.M}")
        f[(node - 1) * s.n:node * s.n] += vec
    blocks = f.reshape(s.M, s.n)
    faulty = frozenset(int(i) + 1 for i in np.flatnonzero(np.any(blocks != 0.0, axis=1)))
    return f, faulty
