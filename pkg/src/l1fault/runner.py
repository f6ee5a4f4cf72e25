"""Closed-loop scenario execution, CSV/JSON output and the fault-count sweep."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .analysis import eta, fault_bound_factor, next_error_bound
from .distributed import run_distributed_trajectory
from .errors import BoundUndefinedError, L1FaultRuntimeError
from .estimators import EstimatorState, estimator_step
from .plant import (
    NetworkPlant,
    build_plant,
    eval_control,
    fault_vector,
    sample_l1_ball,
    sample_l2_ball,
    step_truth,
)
from .scenario import FaultSpec, Scenario

SWEEP_WINDOW = (101, 300)


@dataclass
class Trace:
    """One CSV table: fixed column names and rows of plain Python values."""

    name: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def column(self, key: str) -> np.ndarray:
        j = self.columns.index(key)
        return np.array([np.nan if r[j] is None or r[j] == "" else r[j] for r in self.rows], dtype=float)

    def write_csv(self, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def state_labels(prefix: str, M: int, n: int) -> list[str]:
    return [f"{prefix}_{i}_{c}" for i in range(1, M + 1) for c in range(1, n + 1)]


TRACE_HEAD = ["k", "a1", "n_faulty", "err_x_l2", "err_x_l1", "err_f_l1", "d_bound", "fault_bound"]
DIST_HEAD = [
    "k", "node_id", "a1", "n_faulty", "err_x_l2", "err_x_l1", "err_f_l1",
    "disagreement_linf", "converged", "rounds", "flagged",
]


def centralized_columns(M: int, n: int) -> list[str]:
    return TRACE_HEAD + state_labels("x", M, n) + state_labels("xhat", M, n) + state_labels("f", M, n) + state_labels("fhat", M, n)


def distributed_columns(M: int, n: int) -> list[str]:
    return DIST_HEAD + state_labels("x", M, n) + state_labels("xhat", M, n) + state_labels("f", M, n) + state_labels("fhat", M, n)


@dataclass
class Noise:
    w: list[np.ndarray]
    v: list[np.ndarray]


def draw_noise(s: Scenario, plant: NetworkPlant, seed: int) -> Noise:
    """Measurement and process noise for every step, from a stream separate from the faults."""
    rng = np.random.default_rng([seed, 1])
    rows = max(plant.C0.shape[0], plant.C1.shape[0])
    w = [sample_l2_ball(rng, rows, s.w_max) for _ in range(s.horizon)]
    v = [sample_l1_ball(rng, plant.dim, s.v_max) for _ in range(s.horizon)]
    return Noise(w, v)


def bound_series(s: Scenario, plant: NetworkPlant, schedule) -> tuple[list, list]:
    """Per-step ``d(k)`` and fault bound; ``None`` where undefined."""
    e = eta(plant.A)
    d_prev: float | None = s.d0
    d_out, fb_out = [], []
    for k in range(s.horizon):
        a1 = plant.leader_mode(k)
        a = len(schedule.faulty_nodes(k))
        try:
            fb = fault_bound_factor(s.M, a) * e * d_prev if d_prev is not None else None
        except BoundUndefinedError:
            fb = None
        d_prev = next_error_bound(d_prev, a1, a, s.M, e, s.d_bar, s.v_max)
        d_out.append(d_prev)
        fb_out.append(fb)
    return d_out, fb_out


def _tag(k: int, exc: L1FaultRuntimeError) -> L1FaultRuntimeError:
    return type(exc)(f"k={k}: {exc}")


def simulate_centralized(s: Scenario, kind: str, seed: int | None = None) -> Trace:
    seed = s.seed if seed is None else seed
    plant = build_plant(s.graph, s.dynamics, s.leader)
    schedule = s.fault_schedule(seed)
    noise = draw_noise(s, plant, seed)
    d_bound, f_bound = bound_series(s, plant, schedule)
    st = EstimatorState(plant, kind, cfg=s.solver, w_max=s.w_max, p_scale=s.p_scale, v_scale=s.v_scale)
    trace = Trace(kind, centralized_columns(s.M, s.n))
    x = s.x0()
    u = np.zeros(plant.m * plant.M)
    for k in range(s.horizon):
        f, faulty = fault_vector(schedule, k)
        x = x + f if k == 0 else step_truth(plant, x, u, f, noise.v[k - 1] if s.v_max else None)
        a1 = plant.leader_mode(k)
        y = plant.C(a1) @ x
        if s.w_max:
            y = y + noise.w[k][: y.shape[0]]
        try:
            est = estimator_step(st, y, u, a1)
        except L1FaultRuntimeError as exc:
            raise _tag(k, exc) from exc
        if k == 0:
            f = x.copy()  # the zero prior turns the whole initial state into the k=0 jump
        ex, ef = est.x_hat - x, est.f_hat - f
        trace.rows.append(
            [k, a1, len(faulty), float(np.linalg.norm(ex)), float(np.abs(ex).sum()), float(np.abs(ef).sum()),
             d_bound[k], f_bound[k], *x.tolist(), *est.x_hat.tolist(), *f.tolist(), *est.f_hat.tolist()]
        )
        u = eval_control(s.control, plant, est.x_hat if s.control_from_estimate else x)
    return trace


def simulate_distributed(s: Scenario, seed: int | None = None, lmax: int | None = None) -> Trace:
    seed = s.seed if seed is None else seed
    plant = build_plant(s.graph, s.dynamics, s.leader)
    schedule = s.fault_schedule(seed)
    noise = draw_noise(s, plant, seed)
    cfg = s.round_config()
    if lmax is not None:
        cfg = type(cfg)(**{**cfg.__dict__, "lmax": lmax})
    steps = run_distributed_trajectory(
        plant, schedule, s.horizon, s.x0(), s.control, cfg,
        detect_eps=s.distributed.detect_eps,
        measurement_noise=noise.w if s.w_max else None,
        process_noise=noise.v if s.v_max else None,
        control_from_estimate=s.control_from_estimate,
    )
    trace = Trace("distributed", distributed_columns(s.M, s.n))
    for st in steps:
        res = st.result
        f = st.x if st.k == 0 else st.f
        for i in plant.graph.nodes:
            xh, fh = res.chi_hat[i], res.fault_hat[i]
            ex, ef = xh - st.x, fh - f
            flagged = " ".join(str(j) for j in sorted(st.flagged.get(i, ())))
            trace.rows.append(
                [st.k, i, st.a1, len(st.faulty), float(np.linalg.norm(ex)), float(np.abs(ex).sum()),
                 float(np.abs(ef).sum()), res.disagreement, res.converged, res.rounds, flagged,
                 *st.x.tolist(), *xh.tolist(), *f.tolist(), *fh.tolist()]
            )
    return trace


def summarize(trace: Trace) -> dict:
    ex = trace.column("err_x_l2")
    ef = trace.column("err_f_l1")
    out = {
        "rows": len(trace.rows),
        "max_err_x_l2": float(ex.max()),
        "max_err_f_l1": float(ef.max()),
        "final_err_x_l2": float(ex[-1]),
        "sum_err_x_l2": float(ex.sum()),
    }
    if "node_id" in trace.columns:
        out["nonconverged_steps"] = int((trace.column("converged") == 0).sum())
    return out


@dataclass
class RunResult:
    traces: dict[str, Trace]
    summary: dict
    files: list[Path] = field(default_factory=list)


def run_scenario(
    s: Scenario,
    out_dir: str | Path | None = None,
    estimators: Sequence[str] | None = None,
    distributed: bool | None = None,
    seed: int | None = None,
) -> RunResult:
    """Run every selected estimator in closed loop; optionally write CSV and JSON files."""
    seed = s.seed if seed is None else seed
    kinds = tuple(estimators) if estimators else s.estimators
    use_dist = s.distributed.enabled if distributed is None else distributed
    traces: dict[str, Trace] = {}
    for kind in kinds:
        traces[kind] = simulate_centralized(s, kind, seed)
    if use_dist:
        traces["distributed"] = simulate_distributed(s, seed)
    summary = {
        "scenario": s.name,
        "seed": seed,
        "horizon": s.horizon,
        "nodes": s.M,
        "estimators": {name: summarize(t) for name, t in traces.items()},
    }
    result = RunResult(traces, summary)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, t in traces.items():
            p = out / f"{s.name}_{name}.csv"
            t.write_csv(p)
            result.files.append(p)
        p = out / f"{s.name}_summary.json"
        p.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        result.files.append(p)
    return result


def leader_error(trace: Trace) -> np.ndarray:
    """Per-step ``||x - x_hat||_2``; for distributed traces, node 1's copy."""
    if "node_id" in trace.columns:
        ids = trace.column("node_id")
        return trace.column("err_x_l2")[ids == 1]
    return trace.column("err_x_l2")


def sweep_scenario(s: Scenario, mf: int, window: tuple[int, int] = SWEEP_WINDOW, coord: int = 3) -> Scenario:
    """``s`` with faults on nodes ``1..mf`` drawn uniformly from [-10, 10] over the window."""
    if not 0 <= mf <= s.M:
        raise ValueError(f"M_f must lie in 0..{s.M}")
    lo, hi = window
    faults = (FaultSpec(tuple(range(1, mf + 1)), lo - 1, hi, uniform=(-10.0, 10.0), coords=(coord,)),) if mf else ()
    return s.replace(faults=faults, horizon=hi + 1, name=f"{s.name}_mf{mf}")


def sweep_fault_count(
    s: Scenario,
    mf_values: Iterable[int] = range(1, 7),
    seed: int | None = None,
    distributed: bool | None = None,
    window: tuple[int, int] = SWEEP_WINDOW,
) -> list[tuple[int, float]]:
    """Cumulative ``sum_{k in window} ||x(k) - x_hat(k)||_2`` per number of faulty nodes."""
    seed = s.seed if seed is None else seed
    use_dist = s.distributed.enabled if distributed is None else distributed
    coord = 3 if s.n >= 3 else 1
    table = []
    lo, hi = window
    for mf in mf_values:
        sc = sweep_scenario(s, mf, window, coord)
        trace = simulate_distributed(sc, seed) if use_dist else simulate_centralized(sc, "l1", seed)
        err = leader_error(trace)
        table.append((mf, float(err[lo:hi + 1].sum())))
    return table


def write_sweep_csv(table: Sequence[tuple[int, float]], path: Path) -> None:
    t = Trace("sweep", ["m_f", "cumulative_err_x_l2"], [[m, e] for m, e in table])
    t.write_csv(path)
