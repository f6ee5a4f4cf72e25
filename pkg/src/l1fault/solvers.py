"""l1 minimisation engines built on ADMM.

* :func:`solve_bp` -- ``min ||z - c||_1 s.t. A z = b``
* :func:`solve_bp_denoise` -- ``min ||z - c||_1 s.t. ||A z - b||_2 <= w_max``
* :func:`solve_node_subproblem` -- the strongly convex per-node problem
  ``min w ||z - c||_1 + v.z + q/2 ||z||^2 s.t. A z = b`` used by the
  distributed estimator.

Dependent constraint rows are pruned with a pivoted QR factorisation before
the affine projector is formed; the projector can be built once and reused
for every right-hand side (:class:`AffineProjector`).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog

from . import _kernels
from .errors import InfeasibleError, ValidationError

PRUNE_RTOL = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-8
    step_tol: float = 1e-9
    max_iter: int = 20000
    rho: float = 1.0
    alpha: float = 1.6
    polish: bool = True

    def __post_init__(self) -> None:
        if min(self.feas_tol, self.step_tol, self.rho, self.alpha) <= 0:
            raise ValidationError("solver tolerances, penalty and relaxation must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")
        if self.alpha >= 2:
            raise ValidationError("over-relaxation factor must lie in (0, 2)")


@dataclass
class BpProblem:
    A: np.ndarray
    b: np.ndarray
    kind: str = "equality"
    w_max: float = 0.0
    c: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        q = self.A.shape[1]
        self.c = np.zeros(q) if self.c is None else np.asarray(self.c, dtype=float).reshape(-1)
        if self.kind not in ("equality", "ball"):
            raise ValidationError(f"unknown constraint kind {self.kind!r}")
        if self.b.shape[0] != self.A.shape[0] or self.c.shape[0] != q:
            raise ValidationError("dimension mismatch between A, b and c")
        if self.w_max < 0:
            raise ValidationError("w_max must be non-negative")


@dataclass
class BpSolution:
    z: np.ndarray
    objective: float
    residual: float
    iterations: int
    converged: bool
    polished: bool = False
    diagnostics: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {
            "objective": self.objective,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "polished": self.polished,
            **self.diagnostics,
        }


class AffineProjector:
    """Euclidean projection onto ``{x : A x = b}`` for a fixed ``A``."""

    def __init__(self, A: np.ndarray):
        A = np.asarray(A, dtype=float)
        self.A = A
        p, q = A.shape
        if p == 0:
            self.rows = np.zeros(0, dtype=np.intp)
            self._pinv = np.zeros((q, 0))
        else:
            _, R, piv = sla.qr(A.T, mode="economic", pivoting=True)
            diag = np.abs(np.diag(R))
            rank = int(np.sum(diag > PRUNE_RTOL * max(diag[0], 1.0))) if diag.size else 0
            self.rows = np.sort(piv[:rank])
            Ar = A[self.rows]
            cho = sla.cho_factor(Ar @ Ar.T)
            self._pinv = sla.cho_solve(cho, Ar).T  # A_r^T (A_r A_r^T)^{-1}
        Ar = A[self.rows]
        self.P = np.ascontiguousarray(np.eye(q) - self._pinv @ Ar)

    @property
    def rank(self) -> int:
        return len(self.rows)

    def particular(self, b: np.ndarray) -> np.ndarray:
        """Minimum-norm solution of the pruned system."""
        return self._pinv @ np.asarray(b, dtype=float)[self.rows]

    def project(self, v: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.P @ v + self.particular(b)


def _check_feasible(A: np.ndarray, b: np.ndarray, x_ls: np.ndarray, cfg: SolverConfig) -> None:
    floor = np.linalg.norm(A @ x_ls - b) if A.shape[0] else 0.0
    if floor > cfg.feas_tol * (1.0 + np.linalg.norm(b)):
        raise InfeasibleError(f"A z = b has no solution (least-squares residual {floor:.3e})")


def _polish(A: np.ndarray, b: np.ndarray, c: np.ndarray, z: np.ndarray, cfg: SolverConfig) -> np.ndarray | None:
    """Re-solve exactly on the support found by ADMM; ``None`` if that changes the face."""
    d = z - c
    S = np.flatnonzero(d)
    cand = c.copy()
    if S.size:
        sol, *_ = np.linalg.lstsq(A[:, S], b - A @ c, rcond=None)
        if np.any(np.sign(sol) != np.sign(d[S])):
            return None
        cand[S] += sol
    if A.shape[0] and np.linalg.norm(A @ cand - b) > 0.1 * cfg.feas_tol * (1.0 + np.linalg.norm(b)):
        return None
    obj, obj_admm = np.abs(cand - c).sum(), np.abs(d).sum()
    if obj > obj_admm + cfg.feas_tol * (1.0 + obj_admm):
        return None
    return cand


def solve_bp(
    p: BpProblem,
    cfg: SolverConfig | None = None,
    projector: AffineProjector | None = None,
) -> BpSolution:
    cfg = cfg or SolverConfig()
    if p.kind != "equality":
        raise ValidationError("solve_bp needs an equality-constrained problem")
    A, b, c = p.A, p.b, p.c
    proj = projector or AffineProjector(A)
    x_ls = proj.particular(b)
    _check_feasible(A, b, x_ls, cfg)
    z = np.ascontiguousarray(proj.project(c, b))
    u = np.zeros_like(z)
    it, converged, resid = _kernels.bp_admm(
        proj.P, np.ascontiguousarray(x_ls), np.ascontiguousarray(A), b, c,
        cfg.rho, cfg.alpha, cfg.feas_tol, cfg.step_tol, cfg.max_iter, z, u,
    )
    polished = False
    if cfg.polish:
        cand = _polish(A, b, c, z, cfg)
        if cand is not None:
            z, polished = cand, True
            resid = float(np.linalg.norm(A @ z - b)) if A.shape[0] else 0.0
    return BpSolution(z, float(np.abs(z - c).sum()), float(resid), int(it), bool(converged), polished)


def solve_bp_denoise(p: BpProblem, cfg: SolverConfig | None = None) -> BpSolution:
    cfg = cfg or SolverConfig()
    if p.kind != "ball":
        raise ValidationError("solve_bp_denoise needs a ball-constrained problem")
    if p.w_max == 0.0:
        return solve_bp(BpProblem(p.A, p.b, "equality", 0.0, p.c), cfg)
    A, b, c = p.A, p.b, p.c
    q = A.shape[1]
    if np.linalg.norm(A @ c - b) <= p.w_max:
        return BpSolution(c.copy(), 0.0, 0.0, 0, True)
    x_ls, *_ = np.linalg.lstsq(A, b, rcond=None)
    floor = np.linalg.norm(A @ x_ls - b)
    if floor > p.w_max + cfg.feas_tol * (1.0 + np.linalg.norm(b)):
        raise InfeasibleError(f"no point within {p.w_max} of the data (distance {floor:.3e})")
    Kinv = np.ascontiguousarray(np.linalg.inv(np.eye(q) + A.T @ A))
    z = np.ascontiguousarray(x_ls)
    u = np.zeros(q)
    s = A @ z
    u2 = np.zeros(A.shape[0])
    it, converged, viol = _kernels.ball_admm(
        Kinv, np.ascontiguousarray(A), b, float(p.w_max), c,
        cfg.rho, cfg.alpha, cfg.feas_tol, cfg.step_tol, cfg.max_iter, z, u, s, u2,
    )
    return BpSolution(z, float(np.abs(z - c).sum()), float(viol), int(it), bool(converged))


@dataclass
class NodeWarmStart:
    z: np.ndarray
    u: np.ndarray
    lam: np.ndarray | None = None


NODE_METHODS = ("newton", "admm")


class NodeSubproblem:
    """Fixed data ``(C, y, c, l1_weight)`` of the per-node problem; ``v`` and ``q`` vary per solve.

    ``method="newton"`` (default) runs semismooth Newton on the dual, which
    has one variable per independent constraint row and is exact up to
    ``feas_tol``. ``method="admm"`` uses the projection splitting instead.
    """

    def __init__(
        self,
        C: np.ndarray,
        y: np.ndarray,
        c: np.ndarray,
        l1_weight: float,
        cfg: SolverConfig | None = None,
        projector: AffineProjector | None = None,
        method: str = "newton",
    ):
        if method not in NODE_METHODS:
            raise ValidationError(f"unknown node method {method!r}; expected one of {NODE_METHODS}")
        if l1_weight < 0:
            raise ValidationError("l1 weight must be non-negative")
        self.cfg = cfg or SolverConfig()
        self.method = method
        self.C = np.ascontiguousarray(C, dtype=float)
        self.y = np.ascontiguousarray(np.asarray(y, dtype=float).reshape(-1))
        self.c = np.ascontiguousarray(c, dtype=float)
        self.l1_weight = float(l1_weight)
        self.proj = projector or AffineProjector(self.C)
        self.x_ls = np.ascontiguousarray(self.proj.particular(self.y))
        _check_feasible(self.C, self.y, self.x_ls, self.cfg)
        self._Cr = np.ascontiguousarray(self.C[self.proj.rows])
        self._yr = np.ascontiguousarray(self.y[self.proj.rows])

    def start(self) -> NodeWarmStart:
        z = np.ascontiguousarray(self.proj.project(self.c, self.y))
        return NodeWarmStart(z, np.zeros(self.C.shape[1]), np.zeros(self.proj.rank))

    def solve(self, v: np.ndarray, q: float, warm: NodeWarmStart | None = None) -> BpSolution:
        if q <= 0:
            raise ValidationError(f"quadratic weight must be positive, got {q}")
        cfg = self.cfg
        warm = warm or self.start()
        v = np.ascontiguousarray(v, dtype=float)
        if self.method == "newton":
            if warm.lam is None or warm.lam.shape[0] != self.proj.rank:
                warm.lam = np.zeros(self.proj.rank)
            it, converged, resid = _kernels.node_newton(
                self._Cr, self._yr, self.c, v, float(q), self.l1_weight,
                cfg.feas_tol, cfg.max_iter, warm.lam, warm.z,
            )
        else:
            it, converged, resid = _kernels.node_admm(
                self.proj.P, self.x_ls, self.C, self.y, self.c, v,
                float(q), self.l1_weight, cfg.rho, cfg.alpha, cfg.feas_tol, cfg.step_tol, cfg.max_iter,
                warm.z, warm.u,
            )
        z = warm.z.copy()
        obj = self.l1_weight * np.abs(z - self.c).sum() + v @ z + 0.5 * q * z @ z
        return BpSolution(z, float(obj), float(resid), int(it), bool(converged))


def solve_node_subproblem(
    C: np.ndarray,
    y: np.ndarray,
    c: np.ndarray,
    v: np.ndarray,
    q: float,
    l1_weight: float,
    cfg: SolverConfig | None = None,
    projector: AffineProjector | None = None,
    warm: NodeWarmStart | None = None,
    method: str = "newton",
) -> BpSolution:
    """Minimise ``l1_weight*||chi - c||_1 + v.chi + q/2 ||chi||^2`` subject to ``C chi = y``.

    ``warm`` (if given) seeds the iterates and receives the final ones.
    """
    if q <= 0:
        raise ValidationError(f"quadratic weight must be positive, got {q}")
    return NodeSubproblem(C, y, c, l1_weight, cfg, projector, method).solve(v, q, warm)


def dual_certificate(A: np.ndarray, z: np.ndarray, c: np.ndarray | None = None, tol: float = 1e-9):
    """Search for ``lam`` with ``A^T lam`` a subgradient of ``||. - c||_1`` at ``z``.

    Returns ``(lam, slack, unique)`` where ``slack = max |A^T lam|`` off the
    support (minimised by a small LP) and ``unique`` says the minimiser is
    certified unique: the support columns are independent and ``slack < 1``.
    ``lam`` is ``None`` when no certificate exists (``z`` is not optimal).
    """
    A = np.asarray(A, dtype=float)
    p, q = A.shape
    c = np.zeros(q) if c is None else np.asarray(c, dtype=float)
    d = z - c
    scale = max(1.0, np.abs(d).max(initial=0.0))
    S = np.flatnonzero(np.abs(d) > tol * scale)
    Sc = np.setdiff1d(np.arange(q), S)
    if p == 0:
        return (np.zeros(0), 0.0, S.size == 0) if S.size == 0 else (None, np.inf, False)
    sgn = np.sign(d[S])
    # variables: lam (p), t (1); minimise t
    cost = np.zeros(p + 1)
    cost[-1] = 1.0
    A_eq = np.hstack([A[:, S].T, np.zeros((S.size, 1))]) if S.size else None
    b_eq = sgn if S.size else None
    if Sc.size:
        At = A[:, Sc].T
        A_ub = np.vstack([np.hstack([At, -np.ones((Sc.size, 1))]), np.hstack([-At, -np.ones((Sc.size, 1))])])
        b_ub = np.zeros(2 * Sc.size)
    else:
        A_ub = b_ub = None
    bounds = [(None, None)] * p + [(0, None)]
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        return None, np.inf, False
    lam, slack = res.x[:p], float(res.x[-1])
    if slack > 1.0 + 1e-7:
        return None, slack, False
    full_rank = S.size == 0 or np.linalg.matrix_rank(A[:, S]) == S.size
    return lam, slack, bool(full_rank and slack < 1.0 - 1e-9)
