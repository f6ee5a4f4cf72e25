"""Recovery limits and error bounds for the l1 estimator.

Covers null-space-property checks (analytic for the structured measurement
matrices, exact or sampled for arbitrary matrices), the ``|I| < M/2`` rule,
the one-step fault error bound and the state error recursion, and the
constructive counterexample used when too many nodes are faulty.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Collection, Iterable, Sequence

import numpy as np

from .errors import BoundUndefinedError, ValidationError
from .permute import PermutationPlan, fault_support_sets, to_node_major
from .plant import FaultSchedule

KERNEL_RTOL = 1e-10
MAX_SIGN_SEEDS = 12
# ties within roundoff count as violations: NSP needs a strict inequality
GAP_RTOL = 1e-12


def eta(A: np.ndarray) -> float:
    """Sum of absolute entries of ``A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValidationError(f"eta needs a square matrix, got {A.shape}")
    return float(np.abs(A).sum())


@dataclass(frozen=True)
class NspVerdict:
    satisfies: bool
    witness: np.ndarray | None
    method: str

    def __bool__(self) -> bool:
        return self.satisfies


def kernel_basis(A: np.ndarray, rtol: float = KERNEL_RTOL) -> np.ndarray:
    """Orthonormal kernel basis as columns (SVD, relative threshold ``rtol``)."""
    A = np.asarray(A, dtype=float)
    q = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(q)
    _, s, Vt = np.linalg.svd(A)
    rank = int(np.sum(s > rtol * max(s[0], 1.0))) if s.size else 0
    return Vt[rank:].T


def nsp_gap(v: np.ndarray, T: Collection[int]) -> float:
    """``||v_T||_1 - ||v_Tc||_1`` for a 0-based index set ``T``; NSP needs this < 0."""
    mask = np.zeros(v.shape[0], dtype=bool)
    mask[list(T)] = True
    return float(np.abs(v[mask]).sum() - np.abs(v[~mask]).sum())


def nsp_check_structured(M: int, n: int, I: Iterable[int], active: bool) -> NspVerdict:
    """NSP of the structured (coordinate-major) measurement matrix for ``T~(I)``.

    Active mode has a trivial kernel. In non-active mode every kernel vector is
    ``[g_1 1_M; ...; g_n 1_M]`` and the two sides of the inequality are
    ``|I| sum|g|`` and ``(M - |I|) sum|g|``.
    """
    I = set(I)
    if any(not (1 <= i <= M) for i in I):
        raise ValidationError(f"fault set {sorted(I)} has nodes outside 1..{M}")
    if active or 2 * len(I) < M:
        return NspVerdict(True, None, "analytic-structured")
    return NspVerdict(False, np.ones(n * M), "analytic-structured")


def _violates(v: np.ndarray, T0: Collection[int]) -> bool:
    return nsp_gap(v, T0) >= -GAP_RTOL * float(np.abs(v).sum())


def _sign_seeds(B: np.ndarray) -> Iterable[np.ndarray]:
    d = B.shape[1]
    yield from B.T
    for signs in itertools.product((1.0, -1.0), repeat=min(d, MAX_SIGN_SEEDS) - 1):
        yield B[:, : len(signs) + 1] @ np.array((1.0, *signs))


def nsp_check_generic(
    A: np.ndarray,
    T: Collection[int],
    samples: int = 200,
    seed: int = 0,
) -> NspVerdict:
    """NSP of ``A`` for the 1-based index set ``T``.

    Exact when the kernel has dimension 0 or 1. Otherwise a falsifier: a
    returned ``True`` only means that no violating kernel vector was found.
    """
    B = kernel_basis(A)
    d = B.shape[1]
    T0 = [t - 1 for t in T]
    if d == 0:
        return NspVerdict(True, None, "trivial-kernel")
    if d == 1:
        v = B[:, 0]
        ok = not _violates(v, T0)
        return NspVerdict(ok, None if ok else v, "kernel-dim-1-exact")
    rng = np.random.default_rng(seed)
    candidates = itertools.chain(
        _sign_seeds(B),
        (B @ rng.standard_normal(d) for _ in range(samples)),
    )
    for v in candidates:
        v = v / np.linalg.norm(v)
        if _violates(v, T0):
            return NspVerdict(False, v, "sampled-falsifier")
    return NspVerdict(True, None, "sampled-falsifier")


def recovery_limit_holds(schedule: FaultSchedule, M: int) -> tuple[dict[int, bool], bool]:
    """Per-step ``|I_k| < M/2`` and the conjunction over all scheduled steps."""
    per_step = {k: 2 * len(schedule.faulty_nodes(k)) < M for k in schedule.steps()}
    return per_step, all(per_step.values())


@dataclass(frozen=True)
class ErrorBoundReport:
    M: int
    n_faulty: int
    eta: float
    d_max: float
    fault_bound: float
    growth_factor: float


def _faulty_count(I: int | Collection[int]) -> int:
    return I if isinstance(I, (int, np.integer)) else len(I)


def fault_bound_factor(M: int, a: int) -> float:
    """``2 (M - a) / (M - 2 a)``."""
    if 2 * a >= M:
        raise BoundUndefinedError(f"bound undefined for {a} faulty nodes out of {M}")
    return 2.0 * (M - a) / (M - 2 * a)


def state_growth_factor(M: int, a: int) -> float:
    """``(3 M - 4 a) / (M - 2 a)``."""
    if 2 * a >= M:
        raise BoundUndefinedError(f"bound undefined for {a} faulty nodes out of {M}")
    return (3.0 * M - 4 * a) / (M - 2 * a)


def fault_error_bound(M: int, I: int | Collection[int], A: np.ndarray, d_max: float) -> ErrorBoundReport:
    """Worst-case ``||f - f_hat||_1`` given ``||x_hat(k-1) - x(k-1)||_1 <= d_max``."""
    if d_max < 0:
        raise ValidationError("d_max must be non-negative")
    a = _faulty_count(I)
    e = eta(A)
    return ErrorBoundReport(M, a, e, d_max, fault_bound_factor(M, a) * e * d_max, state_growth_factor(M, a) * e)


def next_error_bound(
    d_prev: float | None,
    a1: int,
    n_faulty: int,
    M: int,
    eta_value: float,
    d_bar: float,
    v_max: float = 0.0,
) -> float | None:
    """One step of the recursion; ``None`` marks an undefined bound.

    An active step resets to ``d_bar`` even after an undefined stretch.
    """
    if a1:
        return d_bar
    if d_prev is None or 2 * n_faulty >= M:
        return None
    return state_growth_factor(M, n_faulty) * eta_value * d_prev + v_max


def error_recursion(
    d0: float,
    steps: Sequence[tuple[int, int]],
    M: int,
    eta_value: float,
    d_bar: float,
    v_max: float = 0.0,
) -> np.ndarray:
    """``d(0..K)`` from ``d0`` and per-step ``(a1(k), |I_k|)`` for ``k = 1..K``."""
    if d0 < 0 or d_bar < 0:
        raise ValidationError("d0 and d_bar must be non-negative")
    d = [float(d0)]
    for k, (a1, a) in enumerate(steps, start=1):
        if 2 * a >= M:
            raise BoundUndefinedError(f"step k={k}: {a} faulty nodes out of {M} leaves the bound undefined")
        d.append(next_error_bound(d[-1], a1, a, M, eta_value, d_bar, v_max))
    return np.array(d)


@dataclass(frozen=True)
class Counterexample:
    f: np.ndarray
    competing: np.ndarray
    kernel_vector: np.ndarray


def counterexample_fault(M: int, n: int, I: Iterable[int]) -> Counterexample:
    """A fault on ``I`` that l1 recovery cannot single out in non-active mode.

    ``f_p = -v`` on ``T~(I)`` for the kernel vector ``v`` with all ``g_j = 1``;
    ``f + v`` satisfies the same measurements with no larger l1 norm.
    """
    I = sorted(set(I))
    if 2 * len(I) < M:
        raise ValidationError(f"{len(I)} faulty nodes out of {M} is recoverable; no counterexample exists")
    plan = PermutationPlan(n, M)
    v = np.ones(n * M)
    f_p = np.zeros(n * M)
    idx = np.array(fault_support_sets(I, plan)) - 1
    f_p[idx] = -v[idx]
    f = to_node_major(f_p, plan)
    v_node = to_node_major(v, plan)
    return Counterexample(f, f + v_node, v_node)
