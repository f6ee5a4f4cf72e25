"""Centralised step-wise estimators.

All three estimators share the prior ``A x_hat(k-1) + B u(k-1)`` and report
the fault estimate as ``f_hat = x_hat - prior``:

* ``l1`` -- closest state to the prior in l1 subject to ``y = C x``;
* ``l1_denoise`` -- same with ``||y - C x|| <= w_max``;
* ``kalman`` -- steady-state predict/correct with fixed ``P`` and ``V``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .plant import NetworkPlant
from .solvers import (
    AffineProjector,
    BpProblem,
    BpSolution,
    SolverConfig,
    dual_certificate,
    solve_bp,
    solve_bp_denoise,
)

ESTIMATOR_KINDS = ("l1", "l1_denoise", "kalman")


@dataclass
class StepEstimate:
    x_hat: np.ndarray
    f_hat: np.ndarray
    prior: np.ndarray
    solution: BpSolution | None = None
    unique: bool | None = None


@dataclass
class EstimatorState:
    plant: NetworkPlant
    kind: str = "l1"
    x_prev: np.ndarray | None = None
    cfg: SolverConfig = field(default_factory=SolverConfig)
    w_max: float = 0.0
    p_scale: float = 1e-4
    v_scale: float = 1e-4
    check_uniqueness: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in ESTIMATOR_KINDS:
            raise ValidationError(f"unknown estimator {self.kind!r}; expected one of {ESTIMATOR_KINDS}")
        if self.x_prev is None:
            self.x_prev = np.zeros(self.plant.dim)
        if self.kind == "kalman" and (self.p_scale <= 0 or self.v_scale <= 0):
            raise ValidationError("Kalman P and V must be positive definite")
        if self.w_max < 0:
            raise ValidationError("w_max must be non-negative")

    def prior(self, u_prev: np.ndarray) -> np.ndarray:
        return self.plant.A @ self.x_prev + self.plant.B @ u_prev

    def projector(self, a1: int) -> AffineProjector:
        key = ("proj", a1)
        if key not in self._cache:
            self._cache[key] = AffineProjector(self.plant.C(a1))
        return self._cache[key]

    def kalman_gain(self, a1: int) -> np.ndarray:
        key = ("gain", a1)
        if key not in self._cache:
            C = self.plant.C(a1)
            P = self.p_scale * np.eye(self.plant.dim)
            V = self.v_scale * np.eye(C.shape[0])
            # K = P C^T (V + C P C^T)^{-1}
            self._cache[key] = np.linalg.solve(V + C @ P @ C.T, C @ P).T
        return self._cache[key]


def _finish(st: EstimatorState, prior: np.ndarray, x_hat: np.ndarray, sol: BpSolution | None, a1: int) -> StepEstimate:
    unique = None
    if sol is not None and st.check_uniqueness:
        _, _, unique = dual_certificate(st.plant.C(a1), x_hat - prior)
    return StepEstimate(x_hat, x_hat - prior, prior, sol, unique)


def l1_step(st: EstimatorState, y: np.ndarray, u_prev: np.ndarray, a1: int) -> StepEstimate:
    C = st.plant.C(a1)
    prior = st.prior(u_prev)
    y_tilde = np.asarray(y, dtype=float) - C @ prior
    sol = solve_bp(BpProblem(C, y_tilde), st.cfg, projector=st.projector(a1))
    return _finish(st, prior, prior + sol.z, sol, a1)


def l1_denoise_step(
    st: EstimatorState, y: np.ndarray, u_prev: np.ndarray, a1: int, w_max: float | None = None
) -> StepEstimate:
    w_max = st.w_max if w_max is None else w_max
    if w_max == 0.0:
        return l1_step(st, y, u_prev, a1)
    C = st.plant.C(a1)
    prior = st.prior(u_prev)
    y_tilde = np.asarray(y, dtype=float) - C @ prior
    sol = solve_bp_denoise(BpProblem(C, y_tilde, "ball", w_max), st.cfg)
    return _finish(st, prior, prior + sol.z, sol, a1)


def kalman_step(st: EstimatorState, y: np.ndarray, u_prev: np.ndarray, a1: int) -> StepEstimate:
    C = st.plant.C(a1)
    prior = st.prior(u_prev)
    x_hat = prior + st.kalman_gain(a1) @ (np.asarray(y, dtype=float) - C @ prior)
    return StepEstimate(x_hat, x_hat - prior, prior)


def estimator_step(st: EstimatorState, y: np.ndarray, u_prev: np.ndarray, a1: int) -> StepEstimate:
    """Run the configured estimator once and advance ``st.x_prev``."""
    if st.kind == "l1":
        est = l1_step(st, y, u_prev, a1)
    elif st.kind == "l1_denoise":
        est = l1_denoise_step(st, y, u_prev, a1)
    else:
        est = kalman_step(st, y, u_prev, a1)
    st.x_prev = est.x_hat
    return est
