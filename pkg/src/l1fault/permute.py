"""Coordinate-major rearrangement of stacked vectors and measurement matrices.

A node-major vector ``[z_11, z_12, z_21, z_22, ...]`` becomes coordinate-major
``[z_11, z_21, ..., z_12, z_22, ...]``. Under that column permutation (and a
row permutation found by matching) the output matrices become block diagonal
with one copy of ``D^T`` (or ``[e, D]^T``) per state coordinate.

Index sets are 1-based when exposed through ``T``/``T_tilde``/
``fault_support_sets``; the arrays used for actual indexing are 0-based.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ValidationError
from .graph import Graph, incidence_matrix
from .plant import build_output_matrices


@dataclass(frozen=True)
class PermutationPlan:
    n: int
    M: int

    @property
    def forward(self) -> np.ndarray:
        # coordinate-major position p holds node-major entry forward[p]
        return np.array([i * self.n + c for c in range(self.n) for i in range(self.M)], dtype=np.intp)

    @property
    def inverse(self) -> np.ndarray:
        return np.argsort(self.forward)

    def T(self, i: int) -> list[int]:
        """Node-major indices of state coordinate ``i`` (1-based, i in 1..n)."""
        return [i + r * self.n for r in range(self.M)]

    def T_tilde(self, i: int) -> list[int]:
        """Coordinate-major indices belonging to node ``i`` (1-based, i in 1..M)."""
        return [i + r * self.M for r in range(self.n)]

    def to_json(self) -> str:
        return json.dumps(
            {
                "index_base": 0,
                "n": self.n,
                "M": self.M,
                "forward": self.forward.tolist(),
                "inverse": self.inverse.tolist(),
                "T": [[t - 1 for t in self.T(i)] for i in range(1, self.n + 1)],
                "T_tilde": [[t - 1 for t in self.T_tilde(i)] for i in range(1, self.M + 1)],
            },
            indent=2,
        )


def _check_length(v: np.ndarray, plan: PermutationPlan) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != plan.n * plan.M:
        raise ValidationError(f"vector has length {v.shape[0]}, expected {plan.n * plan.M}")
    return v


def to_coordinate_major(v: np.ndarray, plan: PermutationPlan) -> np.ndarray:
    return _check_length(v, plan)[plan.forward]


def to_node_major(v_p: np.ndarray, plan: PermutationPlan) -> np.ndarray:
    return _check_length(v_p, plan)[plan.inverse]


def fault_support_sets(I: Iterable[int], plan: PermutationPlan) -> list[int]:
    """``T~ = union of T~_i over i in I`` as a sorted 1-based list."""
    out: set[int] = set()
    for i in I:
        if not (1 <= i <= plan.M):
            raise ValidationError(f"node {i} outside 1..{plan.M}")
        out.update(plan.T_tilde(i))
    return sorted(out)


@dataclass(frozen=True)
class StructuredMatrices:
    Cp0: np.ndarray
    Cp1: np.ndarray
    plan: PermutationPlan
    row_perm0: np.ndarray
    row_perm1: np.ndarray


def _match_rows(target: np.ndarray, source: np.ndarray) -> np.ndarray:
    if target.shape != source.shape:
        raise AssertionError(f"row matching shape mismatch {target.shape} vs {source.shape}")
    lookup: dict[bytes, list[int]] = {}
    for r, row in enumerate(source):
        lookup.setdefault(row.tobytes(), []).append(r)
    perm = np.empty(target.shape[0], dtype=np.intp)
    for r, row in enumerate(target):
        bucket = lookup.get(row.tobytes())
        if not bucket:
            raise AssertionError(f"structured row {r} has no counterpart in the measurement matrix")
        perm[r] = bucket.pop()
    return perm


def build_structured_matrices(g: Graph, n: int) -> StructuredMatrices:
    D = incidence_matrix(g)
    e = np.zeros((g.M, 1))
    e[0, 0] = 1.0
    # "+ 0.0" folds the -0.0 entries kron produces, so rows compare bytewise
    Cp0 = np.kron(np.eye(n), D.T) + 0.0
    Cp1 = np.kron(np.eye(n), np.hstack([e, D]).T) + 0.0
    C0, C1 = build_output_matrices(g, n)
    plan = PermutationPlan(n, g.M)
    cols = plan.forward
    rp0 = _match_rows(Cp0, C0[:, cols] + 0.0)
    rp1 = _match_rows(Cp1, C1[:, cols] + 0.0)
    if not (np.array_equal(C0[rp0][:, cols], Cp0) and np.array_equal(C1[rp1][:, cols], Cp1)):
        raise AssertionError("structured matrices do not match the permuted output matrices")
    return StructuredMatrices(Cp0, Cp1, plan, rp0, rp1)


def permutation_matrix(perm: np.ndarray) -> np.ndarray:
    """``P`` with ``(P @ v) == v[perm]``."""
    P = np.zeros((len(perm), len(perm)))
    P[np.arange(len(perm)), perm] = 1.0
    return P
