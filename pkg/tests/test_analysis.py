from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from l1fault.analysis import (
    counterexample_fault,
    error_recursion,
    eta,
    fault_bound_factor,
    fault_error_bound,
    kernel_basis,
    next_error_bound,
    nsp_check_generic,
    nsp_check_structured,
    recovery_limit_holds,
)
from l1fault.errors import BoundUndefinedError, ValidationError
from l1fault.graph import chain_graph, grid_graph
from l1fault.permute import build_structured_matrices
from l1fault.plant import FaultSchedule


def test_eta_examples():
    assert eta(np.eye(3)) == 3
    assert eta(np.zeros((2, 2))) == 0
    assert eta(np.array([[1, -2], [0.5, 0]])) == 3.5
    with pytest.raises(ValidationError):
        eta(np.ones((2, 3)))


def test_structured_nsp_examples():
    assert nsp_check_structured(3, 1, {1}, False)
    v = nsp_check_structured(4, 1, {1, 2}, False)
    assert not v and np.array_equal(v.witness, np.ones(4))
    assert nsp_check_structured(9, 2, {2, 4, 6, 9}, False)
    assert nsp_check_structured(4, 2, {1, 2, 3, 4}, True).method == "analytic-structured"
    assert nsp_check_structured(2, 1, set(), False)


def test_generic_nsp_examples():
    assert nsp_check_generic(np.eye(3), [1, 2]).method == "trivial-kernel"
    Cp0 = build_structured_matrices(chain_graph(3), 1).Cp0
    ok = nsp_check_generic(Cp0, [1])
    assert ok and ok.method == "kernel-dim-1-exact"
    bad = nsp_check_generic(Cp0, [1, 2])
    assert not bad
    w = bad.witness / bad.witness[0]
    np.testing.assert_allclose(w, np.ones(3))


def test_generic_falsifier_on_multi_dim_kernel():
    Cp0 = build_structured_matrices(grid_graph(2, 2), 2).Cp0
    assert kernel_basis(Cp0).shape[1] == 2
    good = nsp_check_generic(Cp0, [1, 5])
    assert good.satisfies and good.method == "sampled-falsifier"
    bad = nsp_check_generic(Cp0, [1, 2, 5, 6])
    assert not bad and np.allclose(Cp0 @ bad.witness, 0, atol=1e-10)


def test_recovery_limit():
    s = FaultSchedule(9, 1)
    for k in range(100, 301):
        for node in (2, 4, 6, 9):
            s.add(k, node, [1.0])
    per, ok = recovery_limit_holds(s, 9)
    assert ok and all(per.values())
    s5 = FaultSchedule(9, 1)
    for node in range(1, 6):
        s5.add(150, node, [1.0])
    assert recovery_limit_holds(s5, 9) == ({150: False}, False)
    assert recovery_limit_holds(FaultSchedule(3, 1), 3) == ({}, True)


def test_fault_bound_examples():
    A9 = np.eye(9) / 9  # eta = 1
    assert fault_error_bound(9, 4, A9, 1.0).fault_bound == pytest.approx(10.0)
    assert fault_error_bound(3, set(), np.eye(3) / 3, 1.0).fault_bound == pytest.approx(2.0)
    assert fault_error_bound(3, {1}, np.eye(3), 0.0).fault_bound == 0.0
    with pytest.raises(BoundUndefinedError):
        fault_error_bound(4, {1, 2}, np.eye(4), 1.0)


def test_bound_factor_increases_with_faults():
    for M in range(1, 12):
        vals = [fault_bound_factor(M, a) for a in range(0, (M + 1) // 2)]
        assert all(b > a for a, b in zip(vals, vals[1:]))


def test_error_recursion_examples():
    d = error_recursion(5.0, [(1, 0)] * 4, 3, 3.0, 0.01)
    np.testing.assert_array_equal(d[1:], 0.01)
    assert next_error_bound(1.0, 0, 1, 3, 3.0, 0.0) == pytest.approx(15.0)
    assert next_error_bound(1.0, 0, 1, 3, 3.0, 0.0, v_max=0.1) == pytest.approx(15.1)
    with pytest.raises(BoundUndefinedError, match="k=2"):
        error_recursion(1.0, [(0, 0), (0, 2)], 3, 1.0, 0.0)


def test_counterexample_examples():
    c = counterexample_fault(2, 1, {1})
    np.testing.assert_array_equal(c.f, [-1, 0])
    np.testing.assert_array_equal(c.competing, [0, 1])
    c4 = counterexample_fault(4, 1, {1, 2})
    np.testing.assert_array_equal(c4.f, [-1, -1, 0, 0])
    np.testing.assert_array_equal(c4.competing, [0, 0, 1, 1])
    with pytest.raises(ValidationError):
        counterexample_fault(3, 1, {1})


def test_checkers_agree_on_small_structured_instances():
    for M in range(2, 6):
        for n in (1, 2):
            Cp0 = build_structured_matrices(chain_graph(M), n).Cp0
            for size in range(0, M + 1):
                for I in combinations(range(1, M + 1), size):
                    if not I:
                        continue
                    T = [i + r * M for r in range(n) for i in I]
                    s = nsp_check_structured(M, n, I, False)
                    g = nsp_check_generic(Cp0, T, samples=20)
                    assert s.satisfies == g.satisfies, (M, n, I)
                    if not s:
                        assert g.witness is not None


def test_counterexample_norms_exact_arithmetic():
    for M in (2, 3, 4, 5):
        C0 = build_structured_matrices(chain_graph(M), 1)
        for size in range((M + 1) // 2, M + 1):
            for I in combinations(range(1, M + 1), size):
                c = counterexample_fault(M, 1, I)
                f = [Fraction(int(v)) for v in c.f]
                g = [Fraction(int(v)) for v in c.competing]
                assert sum(map(abs, g)) <= sum(map(abs, f))
                assert g != f
                assert not np.any(C0.Cp0 @ (c.competing - c.f))
