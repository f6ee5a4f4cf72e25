import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from l1fault.errors import InfeasibleError, ValidationError
from l1fault.graph import chain_graph
from l1fault.permute import build_structured_matrices
from l1fault.solvers import (
    AffineProjector,
    BpProblem,
    NodeSubproblem,
    NodeWarmStart,
    SolverConfig,
    dual_certificate,
    solve_bp,
    solve_bp_denoise,
    solve_node_subproblem,
)


def lp_oracle(A, b, c):
    """min ||z - c||_1 s.t. A z = b as an LP in (z, t)."""
    p, q = A.shape
    cost = np.concatenate([np.zeros(q), np.ones(q)])
    I = np.eye(q)
    A_ub = np.block([[I, -I], [-I, -I]])
    b_ub = np.concatenate([c, -c])
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=np.hstack([A, np.zeros((p, q))]), b_eq=b,
                  bounds=[(None, None)] * q + [(0, None)] * q, method="highs")
    assert res.status == 0
    return res.fun


def test_identity_pins_solution(rng):
    b = rng.normal(size=4)
    sol = solve_bp(BpProblem(np.eye(4), b))
    np.testing.assert_allclose(sol.z, b, atol=1e-9)


def test_one_row_example():
    sol = solve_bp(BpProblem([[1.0, 2.0]], [2.0]))
    np.testing.assert_allclose(sol.z, [0.0, 1.0], atol=1e-8)
    assert sol.objective == pytest.approx(1.0, abs=1e-8)
    assert sol.converged


def test_chain_single_fault_recovered():
    Cp0 = build_structured_matrices(chain_graph(3), 1).Cp0
    f = np.array([2.5, 0.0, 0.0])
    sol = solve_bp(BpProblem(Cp0, Cp0 @ f))
    np.testing.assert_allclose(sol.z, f, atol=1e-8)


def test_shifted_objective(rng):
    A = rng.normal(size=(3, 6))
    c = rng.normal(size=6)
    z0 = c.copy()
    z0[2] += 1.5
    sol = solve_bp(BpProblem(A, A @ z0, c=c))
    assert sol.objective <= 1.5 + 1e-7


def test_infeasible_raises():
    A = np.array([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(InfeasibleError):
        solve_bp(BpProblem(A, [1.0, 2.0]))


def test_redundant_rows_are_pruned():
    A = np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0], [1.0, 0.0, -1.0]])
    proj = AffineProjector(A)
    assert proj.rank == 2
    b = A @ np.array([3.0, 0.0, 0.0])
    sol = solve_bp(BpProblem(A, b), projector=proj)
    np.testing.assert_allclose(sol.z, [3.0, 0.0, 0.0], atol=1e-8)


def test_problem_validation():
    with pytest.raises(ValidationError):
        BpProblem(np.eye(2), [1.0])
    with pytest.raises(ValidationError):
        BpProblem(np.eye(2), [1.0, 2.0], kind="box")
    with pytest.raises(ValidationError):
        BpProblem(np.eye(2), [1.0, 2.0], "ball", -1.0)
    with pytest.raises(ValidationError):
        SolverConfig(alpha=2.0)
    with pytest.raises(ValidationError):
        SolverConfig(max_iter=0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), q=st.integers(2, 12), data=st.data())
def test_bp_matches_lp_oracle(seed, q, data):
    p = data.draw(st.integers(1, q))
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(p, q))
    b = A @ rng.normal(size=q)
    c = rng.normal(size=q) if rng.uniform() < 0.5 else np.zeros(q)
    sol = solve_bp(BpProblem(A, b, c=c))
    assert sol.objective == pytest.approx(lp_oracle(A, b, c), abs=1e-6 * (1 + abs(sol.objective)))
    assert np.linalg.norm(A @ sol.z - b) <= 1e-6 * (1 + np.linalg.norm(b))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_bp_optimality_certificate(seed):
    rng = np.random.default_rng(seed)
    p, q = rng.integers(1, 6), 8
    A = rng.normal(size=(p, q))
    b = A @ rng.normal(size=q)
    sol = solve_bp(BpProblem(A, b))
    lam, slack, _ = dual_certificate(A, sol.z, tol=1e-7)
    assert lam is not None
    assert slack <= 1.0 + 1e-6


def test_certificate_rejects_suboptimal_point():
    A = np.array([[1.0, 2.0]])
    lam, slack, unique = dual_certificate(A, np.array([2.0, 0.0]))
    assert lam is None and not unique
    lam, slack, unique = dual_certificate(A, np.array([0.0, 1.0]))
    assert lam is not None and unique


def test_denoise_zero_radius_matches_bp(rng):
    A = rng.normal(size=(3, 6))
    b = A @ rng.normal(size=6)
    a = solve_bp_denoise(BpProblem(A, b, "ball", 0.0))
    e = solve_bp(BpProblem(A, b))
    np.testing.assert_array_equal(a.z, e.z)


def test_denoise_feasible_shift():
    A = np.eye(2)
    c = np.array([1.0, 1.0])
    sol = solve_bp_denoise(BpProblem(A, [1.1, 1.0], "ball", 0.5, c))
    np.testing.assert_array_equal(sol.z, c)
    assert sol.objective == 0.0


def test_denoise_one_row_example():
    sol = solve_bp_denoise(BpProblem([[1.0, 2.0]], [2.0], "ball", 1.0))
    np.testing.assert_allclose(sol.z, [0.0, 0.5], atol=1e-5)
    assert sol.objective == pytest.approx(0.5, abs=1e-5)
    g = np.linspace(-1, 1, 801)
    Z1, Z2 = np.meshgrid(g, g)
    feas = np.abs(2 - Z1 - 2 * Z2) <= 1.0
    assert sol.objective <= (np.abs(Z1) + np.abs(Z2))[feas].min() + 1e-3


def test_denoise_overdetermined_is_feasible(rng):
    A = rng.normal(size=(10, 4))
    b = A @ rng.normal(size=4) + 0.01 * rng.normal(size=10)
    sol = solve_bp_denoise(BpProblem(A, b, "ball", 0.2))
    assert np.linalg.norm(A @ sol.z - b) <= 0.2 + 1e-6


def test_denoise_infeasible_radius(rng):
    A = np.array([[1.0], [1.0]])
    with pytest.raises(InfeasibleError):
        solve_bp_denoise(BpProblem(A, [0.0, 2.0], "ball", 0.1))


def _node_obj(z, c, v, q, w):
    return w * np.abs(z - c).sum() + v @ z + 0.5 * q * z @ z


@pytest.mark.parametrize("method", ["newton", "admm"])
def test_node_identity_constraint(method, rng):
    y = rng.normal(size=3)
    sol = solve_node_subproblem(np.eye(3), y, rng.normal(size=3), rng.normal(size=3), 2.0, 0.5, method=method)
    np.testing.assert_allclose(sol.z, y, atol=1e-8)


@pytest.mark.parametrize("method", ["newton", "admm"])
def test_node_scalar_stays_at_shift(method):
    M = 3
    sol = solve_node_subproblem(np.zeros((0, 1)), np.zeros(0), np.array([1.0]), np.zeros(1), 0.2, 1.0 / M, method=method)
    np.testing.assert_allclose(sol.z, [1.0], atol=1e-8)


@pytest.mark.parametrize("method", ["newton", "admm"])
def test_node_unconstrained_closed_form(method, rng):
    q, w = 1.7, 0.25
    v = rng.normal(size=5)
    sol = solve_node_subproblem(np.zeros((0, 5)), np.zeros(0), np.zeros(5), v, q, w, method=method)
    expect = np.sign(-v / q) * np.maximum(np.abs(v / q) - w / q, 0.0)
    np.testing.assert_allclose(sol.z, expect, atol=1e-8)


def test_node_rejects_bad_weights():
    with pytest.raises(ValidationError):
        solve_node_subproblem(np.eye(1), [1.0], [0.0], [0.0], 0.0, 1.0)
    with pytest.raises(ValidationError):
        solve_node_subproblem(np.eye(1), [1.0], [0.0], [0.0], 1.0, -1.0)
    with pytest.raises(ValidationError):
        NodeSubproblem(np.eye(1), [1.0], [0.0], 1.0, method="lbfgs")


def test_node_infeasible():
    with pytest.raises(InfeasibleError):
        solve_node_subproblem(np.array([[1.0], [1.0]]), [0.0, 1.0], [0.0], [0.0], 1.0, 1.0)


def test_node_one_dim_grid_search(rng):
    for _ in range(25):
        c, v = rng.normal(size=1) * 2, rng.normal(size=1) * 2
        q, w = rng.uniform(0.1, 3), rng.uniform(0.05, 1)
        R = (abs(v[0]) + w) / q + abs(c[0]) + 1.0
        grid = np.linspace(-R, R, int(2 * R / 1e-4) + 1)
        sol = solve_node_subproblem(np.zeros((0, 1)), np.zeros(0), c, v, q, w)
        vals = w * np.abs(grid - c[0]) + v[0] * grid + 0.5 * q * grid ** 2
        assert abs(sol.z[0] - grid[np.argmin(vals)]) <= 1e-3


def test_node_two_dim_constrained_grid_search(rng):
    # one constraint row in R^3 leaves a 2-D family z = z0 + s n1 + t n2; coarse grid, then a fine one
    for _ in range(25):
        C = rng.normal(size=(1, 3))
        y = rng.normal(size=1)
        c, v = rng.normal(size=3), rng.normal(size=3)
        q, w = rng.uniform(0.3, 3), rng.uniform(0.05, 1)
        sol = solve_node_subproblem(C, y, c, v, q, w)
        z0 = np.linalg.lstsq(C, y, rcond=None)[0]
        N = np.linalg.svd(C)[2][1:].T

        def grid_min(s0, t0, half, pts):
            S, T = np.meshgrid(np.linspace(s0 - half, s0 + half, pts), np.linspace(t0 - half, t0 + half, pts))
            Z = z0[:, None, None] + N[:, 0, None, None] * S + N[:, 1, None, None] * T
            vals = w * np.abs(Z - c[:, None, None]).sum(0) + np.einsum("i,ijk->jk", v, Z) + 0.5 * q * (Z ** 2).sum(0)
            j = np.unravel_index(np.argmin(vals), vals.shape)
            return vals[j], S[j], T[j]

        _, s0, t0 = grid_min(0.0, 0.0, 6.0, 601)
        val, s1, t1 = grid_min(s0, t0, 0.03, 601)
        best = _node_obj(sol.z, c, v, q, w)
        assert best <= val + 1e-7
        assert val - best <= 1e-3
        # strong convexity: q/2 ||z_grid - z*||^2 <= f(z_grid) - f(z*)
        gap = np.sum((sol.z - (z0 + N @ [s1, t1])) ** 2)
        assert gap <= 2.0 * max(val - best, 0.0) / q + 1e-8


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_node_newton_and_admm_agree(seed):
    rng = np.random.default_rng(seed)
    C = rng.normal(size=(2, 6))
    y, c, v = rng.normal(size=2), rng.normal(size=6), rng.normal(size=6)
    cfg = SolverConfig(feas_tol=1e-10, step_tol=1e-12, max_iter=200000)
    a = solve_node_subproblem(C, y, c, v, 1.3, 0.4, cfg, method="newton")
    b = solve_node_subproblem(C, y, c, v, 1.3, 0.4, cfg, method="admm")
    np.testing.assert_allclose(a.z, b.z, atol=1e-6)


def test_node_warm_start_is_updated(rng):
    prob = NodeSubproblem(rng.normal(size=(2, 5)), rng.normal(size=2), np.zeros(5), 0.3)
    warm = prob.start()
    assert isinstance(warm, NodeWarmStart)
    first = prob.solve(rng.normal(size=5), 1.0, warm)
    np.testing.assert_array_equal(warm.z, first.z)
    again = prob.solve(rng.normal(size=5), 1.0, warm)
    assert again.converged
