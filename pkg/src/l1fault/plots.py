"""Static SVG charts for traces and sweeps (matplotlib, Agg backend).

Output is byte-stable: the SVG hash salt is fixed and the date metadata is
dropped.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ValidationError  # noqa: E402

_RC = {"svg.hashsalt": "l1fault", "svg.fonttype": "none", "path.simplify": False}
_META = {"Date": None}


def read_trace_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Header and a float matrix (blank cells become NaN)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValidationError(f"{path}: trace has no data rows")
    header = rows[0]

    def num(cell: str) -> float:
        try:
            return float(cell) if cell != "" else np.nan
        except ValueError:
            return np.nan

    data = np.array([[num(c) for c in r] for r in rows[1:]], dtype=float)
    return header, data


def mode_switches(k: np.ndarray, a1: np.ndarray) -> list[float]:
    """Steps at which the leader mode changes."""
    idx = np.flatnonzero(np.diff(a1) != 0) + 1
    return [float(k[i]) for i in idx]


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def plot_error_curves(
    series: dict[str, tuple[np.ndarray, np.ndarray]],
    switches: Sequence[float],
    path: str | Path,
    title: str = "",
    log: bool = True,
) -> Path:
    """``||x - x_hat||_2`` against ``k`` for one or more estimators."""
    if not series or all(len(k) == 0 for k, _ in series.values()):
        raise ValidationError("nothing to plot: empty trace")
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        for name, (k, e) in series.items():
            ax.plot(k, np.maximum(e, 1e-16) if log else e, label=name, lw=1.2)
        for s in switches:
            ax.axvline(s, color="0.4", ls="--", lw=0.8)
        if log:
            ax.set_yscale("log")
        ax.set_xlabel("k")
        ax.set_ylabel("state error (l2)")
        if title:
            ax.set_title(title)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        return _save(fig, Path(path))


def plot_states(
    k: np.ndarray,
    truth: np.ndarray,
    estimates: dict[str, np.ndarray],
    switches: Sequence[float],
    path: str | Path,
    labels: Sequence[str] | None = None,
) -> Path:
    """True and estimated state components over time (one colour per component)."""
    if len(k) == 0:
        raise ValidationError("nothing to plot: empty trace")
    styles = ["--", ":", "-."]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        colours = plt.rcParams["axes.prop_cycle"].by_key()["color"]
        for j in range(truth.shape[1]):
            c = colours[j % len(colours)]
            ax.plot(k, truth[:, j], color=c, lw=1.4, label=(labels[j] if labels else f"x{j + 1}") + " true")
            for t, (name, est) in enumerate(estimates.items()):
                ax.plot(k, est[:, j], color=c, ls=styles[t % len(styles)], lw=1.0, label=f"{name}" if j == 0 else None)
        for s in switches:
            ax.axvline(s, color="0.4", ls="--", lw=0.8)
        ax.set_xlabel("k")
        ax.legend(loc="best", fontsize=7, ncol=2)
        fig.tight_layout()
        return _save(fig, Path(path))


def plot_sweep(table: Sequence[tuple[int, float]], path: str | Path) -> Path:
    if not table:
        raise ValidationError("nothing to plot: empty sweep")
    mf = [m for m, _ in table]
    err = [max(e, 1e-16) for _, e in table]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.8, 3.6))
        ax.bar([str(m) for m in mf], err, color="tab:blue")
        ax.set_yscale("log")
        ax.set_xlabel("number of faulty nodes")
        ax.set_ylabel("cumulative state error")
        fig.tight_layout()
        return _save(fig, Path(path))


def plot_trace_file(csv_path: str | Path, out: str | Path | None = None) -> list[Path]:
    """Charts for one trace CSV: error against ``k`` and (small systems) the states."""
    csv_path = Path(csv_path)
    header, data = read_trace_csv(csv_path)
    col = {h: j for j, h in enumerate(header)}
    if "k" not in col or "err_x_l2" not in col:
        raise ValidationError(f"{csv_path}: not a trace file (needs k and err_x_l2 columns)")
    if "node_id" in col:
        data = data[data[:, col["node_id"]] == 1]
    k, a1 = data[:, col["k"]], data[:, col["a1"]]
    stem = Path(out) if out is not None else csv_path.with_suffix("")
    stem.parent.mkdir(parents=True, exist_ok=True)
    files = [
        plot_error_curves(
            {csv_path.stem: (k, data[:, col["err_x_l2"]])},
            mode_switches(k, a1),
            stem.parent / f"{stem.name}_error.svg",
            title=csv_path.stem,
        )
    ]
    xs = [h for h in header if h.startswith("x_")]
    if 0 < len(xs) <= 6:
        truth = data[:, [col[h] for h in xs]]
        est = data[:, [col["xhat" + h[1:]] for h in xs]]
        files.append(
            plot_states(k, truth, {"estimate": est}, mode_switches(k, a1), stem.parent / f"{stem.name}_states.svg", xs)
        )
    return files
