"""Distributed basis pursuit over a bipartite network.

Every node keeps its own copy ``chi_i`` of the full stacked state. One round
of the algorithm is

1. every node of class one solves its local problem and posts the result to
   its neighbours' mailboxes;
2. every node of class two does the same (reading the fresh class-one
   iterates);
3. every node updates its dual variable from its mailbox.

Messages only travel through mailboxes and a node's update reads nothing but
its own state and mailbox, so the order in which nodes of one class are
processed cannot change the result.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import SolverError, ValidationError
from .graph import Bipartition, bipartition, neighbors
from .plant import ControlLaw, FaultSchedule, NetworkPlant, eval_control, fault_vector, step_truth
from .solvers import (
    NODE_METHODS,
    AffineProjector,
    BpProblem,
    NodeSubproblem,
    NodeWarmStart,
    SolverConfig,
    solve_bp,
)

DEFAULT_INNER = SolverConfig(feas_tol=1e-9, step_tol=1e-10, max_iter=20000)
# "mailbox" is the readable reference; "fused" runs every round inside one kernel call
ENGINES = ("fused", "mailbox")


@dataclass(frozen=True)
class RoundConfig:
    zeta: float = 1.0
    lmax: int = 500
    inner: SolverConfig = DEFAULT_INNER
    stop_tol: float = 1e-6
    early_stop: bool = True
    node_method: str = "newton"
    engine: str = "fused"

    def __post_init__(self) -> None:
        if not self.zeta > 0:
            raise ValidationError(f"zeta must be positive, got {self.zeta}")
        if self.lmax < 1:
            raise ValidationError(f"L_max must be at least 1, got {self.lmax}")
        if self.node_method not in NODE_METHODS:
            raise ValidationError(f"unknown node method {self.node_method!r}")
        if self.engine not in ENGINES:
            raise ValidationError(f"unknown engine {self.engine!r}; expected one of {ENGINES}")
        if self.engine == "fused" and self.node_method != "newton":
            raise ValidationError("the fused engine only supports the newton node method")


@dataclass
class NodeState:
    i: int
    cls: int
    degree: int
    neighbors: tuple[int, ...]
    prior: np.ndarray
    chi: np.ndarray
    mu: np.ndarray
    mailbox: dict[int, np.ndarray] = field(default_factory=dict)
    shift: np.ndarray | None = None
    problem: NodeSubproblem | None = None
    warm: NodeWarmStart | None = None
    inner_iterations: int = 0

    def neighbor_sum(self) -> np.ndarray:
        total = np.zeros_like(self.chi)
        for j in self.neighbors:
            if j in self.mailbox:
                total += self.mailbox[j]
        return total


class DistributedEstimator:
    """Holds per-node state across time steps for one network."""

    def __init__(self, plant: NetworkPlant, law: ControlLaw | None = None, cfg: RoundConfig | None = None):
        self.plant = plant
        self.law = law or ControlLaw("zero")
        self.cfg = cfg or RoundConfig()
        self.parts: Bipartition = bipartition(plant.graph)
        g = plant.graph
        self.nodes: dict[int, NodeState] = {}
        for i in g.nodes:
            nb = tuple(sorted(neighbors(g, i)))
            self.nodes[i] = NodeState(
                i, self.parts.class_of(i), len(nb), nb,
                prior=np.zeros(plant.dim), chi=np.zeros(plant.dim), mu=np.zeros(plant.dim),
            )
        self.steps_done = 0
        self._projectors: dict[tuple[int, int], AffineProjector] = {}
        self._row_slices = {a1: _node_row_slices(plant, a1) for a1 in (0, 1)}

    def kappa(self, chi: np.ndarray) -> np.ndarray:
        return eval_control(self.law, self.plant, chi)

    def node_shift(self, i: int) -> np.ndarray:
        """``A chi_i(k-1) + B kappa(chi_i(k-1))``; zero before the first step (no input has acted yet)."""
        if self.steps_done == 0:
            return np.zeros(self.plant.dim)
        prior = self.nodes[i].prior
        return self.plant.A @ prior + self.plant.B @ self.kappa(prior)

    def projector(self, i: int, a1: int) -> AffineProjector:
        key = (i, a1 if i == 1 else 0)
        if key not in self._projectors:
            self._projectors[key] = AffineProjector(self.plant.node_rows(i, a1))
        return self._projectors[key]

    def class_members(self, cls: int) -> list[int]:
        return sorted(self.parts.class_one if cls == 1 else self.parts.class_two)


def _node_row_slices(plant: NetworkPlant, a1: int) -> dict[int, slice]:
    out, start = {}, 0
    for i in plant.graph.nodes:
        rows = plant.node_rows(i, a1).shape[0]
        out[i] = slice(start, start + rows)
        start += rows
    return out


def init_round(est: DistributedEstimator, y: np.ndarray, a1: int) -> list[NodeState]:
    """Zero iterates and duals, clear mailboxes and load this step's local data."""
    M = est.plant.M
    for i, node in est.nodes.items():
        node.chi = np.zeros(est.plant.dim)
        node.mu = np.zeros(est.plant.dim)
        node.mailbox = {}
        node.shift = est.node_shift(i)
        C_i = est.plant.node_rows(i, a1)
        y_i = np.asarray(y, dtype=float)[est._row_slices[a1][i]]
        node.problem = NodeSubproblem(
            C_i, y_i, node.shift, 1.0 / M, est.cfg.inner, est.projector(i, a1), est.cfg.node_method
        )
        node.warm = node.problem.start()
        node.inner_iterations = 0
    return list(est.nodes.values())


def class_update(est: DistributedEstimator, members: Iterable[int]) -> None:
    """Local solves for one class, then post the new iterates to neighbours."""
    zeta = est.cfg.zeta
    fresh: dict[int, np.ndarray] = {}
    for i in members:
        node = est.nodes[i]
        if node.degree == 0:
            # isolated node (single-node network): no coupling, so plain basis pursuit
            sol = solve_bp(BpProblem(node.problem.C, node.problem.y, c=node.shift), est.cfg.inner, node.problem.proj)
        else:
            v = node.mu - zeta * node.neighbor_sum()
            sol = node.problem.solve(v, node.degree * zeta, node.warm)
        if not sol.converged:
            raise SolverError(f"node {i}: local problem did not converge (residual {sol.residual:.3e})")
        node.inner_iterations += sol.iterations
        fresh[i] = sol.z
    for i, chi in fresh.items():
        node = est.nodes[i]
        node.chi = chi
        for j in node.neighbors:
            est.nodes[j].mailbox[i] = chi


def dual_update(est: DistributedEstimator) -> None:
    zeta = est.cfg.zeta
    for node in est.nodes.values():
        acc = np.zeros_like(node.chi)
        for j in node.neighbors:
            acc += node.chi - node.mailbox.get(j, 0.0)
        node.mu = node.mu + zeta * acc


def disagreement(est: DistributedEstimator) -> float:
    chis = np.array([n.chi for n in est.nodes.values()])
    return float((chis.max(axis=0) - chis.min(axis=0)).max()) if len(chis) else 0.0


def constraint_residual(est: DistributedEstimator) -> float:
    worst = 0.0
    for node in est.nodes.values():
        p = node.problem
        if p.C.shape[0]:
            worst = max(worst, float(np.abs(p.C @ node.chi - p.y).max()))
    return worst


@dataclass
class RoundResult:
    chi_hat: dict[int, np.ndarray]
    fault_hat: dict[int, np.ndarray]
    rounds: int
    converged: bool
    disagreement: float
    residual: float


def finalize_round(est: DistributedEstimator, rounds: int, converged: bool) -> RoundResult:
    chi_hat, fault_hat = {}, {}
    for i, node in est.nodes.items():
        chi_hat[i] = node.chi.copy()
        fault_hat[i] = node.chi - node.shift
        node.prior = chi_hat[i]
    est.steps_done += 1
    return RoundResult(chi_hat, fault_hat, rounds, converged, disagreement(est), constraint_residual(est))


def _run_rounds_mailbox(est: DistributedEstimator) -> tuple[int, bool]:
    cfg = est.cfg
    one, two = est.class_members(1), est.class_members(2)
    L = 1
    while L < cfg.lmax:
        before = {i: n.chi for i, n in est.nodes.items()}
        class_update(est, one)
        class_update(est, two)
        dual_update(est)
        L += 1
        if cfg.early_stop:
            moved = max(float(np.abs(n.chi - before[i]).max()) for i, n in est.nodes.items())
            if (
                moved <= cfg.stop_tol
                and disagreement(est) <= cfg.stop_tol
                and constraint_residual(est) <= cfg.stop_tol
            ):
                return L, True
    return L, False


def _run_rounds_fused(est: DistributedEstimator) -> tuple[int, bool]:
    cfg, plant = est.cfg, est.plant
    M, q = plant.M, plant.dim
    order = list(est.nodes)
    index = {i: t for t, i in enumerate(order)}
    pmax = max(1, max(n.problem._Cr.shape[0] for n in est.nodes.values()))
    dmax = max(1, max(n.degree for n in est.nodes.values()))
    Cs = np.zeros((M, pmax, q))
    ys = np.zeros((M, pmax))
    rows = np.zeros(M, dtype=np.int64)
    nbr = np.zeros((M, dmax), dtype=np.int64)
    deg = np.zeros(M, dtype=np.int64)
    shifts = np.zeros((M, q))
    for t, i in enumerate(order):
        node = est.nodes[i]
        r = node.problem._Cr.shape[0]
        Cs[t, :r], ys[t, :r], rows[t] = node.problem._Cr, node.problem._yr, r
        deg[t] = node.degree
        nbr[t, : node.degree] = [index[j] for j in node.neighbors]
        shifts[t] = node.shift
    order_one = np.array([index[i] for i in est.class_members(1)], dtype=np.int64)
    order_two = np.array([index[i] for i in est.class_members(2)], dtype=np.int64)
    chi = np.zeros((M, q))
    mu = np.zeros((M, q))
    lam = np.zeros((M, pmax))
    L, converged, failed = _kernels.dbp_rounds(
        Cs, ys, rows, shifts, nbr, deg, order_one, order_two, float(cfg.zeta), 1.0 / M,
        cfg.inner.feas_tol, cfg.inner.max_iter, cfg.lmax, cfg.stop_tol, cfg.early_stop, chi, mu, lam,
    )
    if failed >= 0:
        raise SolverError(f"node {order[failed]}: local problem did not converge in round {L}")
    for t, i in enumerate(order):
        node = est.nodes[i]
        node.chi, node.mu = chi[t].copy(), mu[t].copy()
        node.mailbox = {j: chi[index[j]].copy() for j in node.neighbors} if L > 1 else {}
    return int(L), bool(converged)


def run_step(est: DistributedEstimator, y: np.ndarray, a1: int) -> RoundResult:
    """All rounds of the algorithm for one time step."""
    init_round(est, y, a1)
    if est.cfg.engine == "fused" and est.plant.M > 1:
        L, converged = _run_rounds_fused(est)
    else:
        L, converged = _run_rounds_mailbox(est)
    return finalize_round(est, L, converged)


def detect_faults(fault_hat: np.ndarray, eps: float, n: int) -> frozenset[int]:
    """Nodes ``j`` whose block of the local fault estimate has norm above ``eps``."""
    if eps <= 0:
        raise ValidationError("detection threshold must be positive")
    blocks = np.asarray(fault_hat, dtype=float).reshape(-1, n)
    return frozenset(int(j) + 1 for j in np.flatnonzero(np.linalg.norm(blocks, axis=1) > eps))


@dataclass
class DistributedStep:
    k: int
    a1: int
    x: np.ndarray
    f: np.ndarray
    faulty: frozenset[int]
    result: RoundResult
    flagged: dict[int, frozenset[int]]


def run_distributed_trajectory(
    plant: NetworkPlant,
    schedule: FaultSchedule,
    horizon: int,
    x0: np.ndarray,
    law: ControlLaw | None = None,
    cfg: RoundConfig | None = None,
    detect_eps: float | None = None,
    measurement_noise: Sequence[np.ndarray] | None = None,
    process_noise: Sequence[np.ndarray] | None = None,
    control_from_estimate: bool = True,
) -> list[DistributedStep]:
    """Closed loop over ``horizon`` steps.

    With ``control_from_estimate`` node ``i`` applies its own block of
    ``kappa(chi_hat_i)``; otherwise the plant uses exact state feedback.
    """
    est = DistributedEstimator(plant, law, cfg)
    M, m = plant.M, plant.m
    steps: list[DistributedStep] = []
    x = np.asarray(x0, dtype=float)
    u = np.zeros(m * M)
    for k in range(horizon):
        f, faulty = fault_vector(schedule, k)
        if k == 0:
            x = x + f
        else:
            x = step_truth(plant, x, u, f, None if process_noise is None else process_noise[k - 1])
        a1 = plant.leader_mode(k)
        y = plant.C(a1) @ x
        if measurement_noise is not None:
            y = y + measurement_noise[k][: y.shape[0]]
        try:
            res = run_step(est, y, a1)
        except SolverError as exc:
            raise SolverError(f"k={k}: {exc}") from exc
        flagged = {}
        if detect_eps is not None:
            flagged = {i: detect_faults(fh, detect_eps, plant.n) for i, fh in res.fault_hat.items()}
        steps.append(DistributedStep(k, a1, x.copy(), f, faulty, res, flagged))
        if control_from_estimate:
            u = np.concatenate([est.kappa(res.chi_hat[i])[(i - 1) * m:i * m] for i in plant.graph.nodes])
        else:
            u = est.kappa(x)
    return steps
