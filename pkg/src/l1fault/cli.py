"""Command line entry point: ``l1fault run | sweep | plot``.

Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from .errors import L1FaultRuntimeError, ValidationError
from .estimators import ESTIMATOR_KINDS

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


def parse_range(text: str) -> list[int]:
    """``"1..6"`` -> [1, ..., 6]; ``"4,5"`` -> [4, 5]."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            vals = list(range(int(lo), int(hi) + 1))
        else:
            vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"bad range {text!r}; use e.g. 1..6 or 4,5") from None
    if not vals:
        raise ValidationError(f"empty range {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="l1fault", description="l1 state and fault estimation experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write CSV traces plus a JSON summary")
    r.add_argument("scenario", help="scenario file or bundled name (fig1_left, fig1_right, platoon9, noise9)")
    r.add_argument("--estimator", action="append", choices=ESTIMATOR_KINDS,
                   help="estimator to run (repeatable); default: as in the scenario")
    r.add_argument("--distributed", action="store_true", help="also run the distributed estimator")
    r.add_argument("--no-distributed", action="store_true", help="skip the distributed estimator")
    r.add_argument("--zeta", type=float, help="distributed penalty")
    r.add_argument("--lmax", type=int, help="distributed round budget")
    r.add_argument("--detect-eps", type=float, help="fault flagging threshold for the distributed estimator")
    r.add_argument("--out", default="out", help="output directory (default: ./out)")
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--plot", action="store_true", help="also write SVG charts")

    s = sub.add_parser("sweep", help="cumulative error against the number of faulty nodes")
    s.add_argument("scenario", nargs="?", default="platoon9")
    s.add_argument("--mf", default="1..6", help="fault counts, e.g. 1..6 or 4,5")
    s.add_argument("--centralized", action="store_true", help="use the centralized l1 estimator")
    s.add_argument("--out", default="out")
    s.add_argument("--seed", type=int)

    pl = sub.add_parser("plot", help="render SVG charts for a trace CSV")
    pl.add_argument("trace", help="trace CSV written by 'run'")
    pl.add_argument("--out", help="output path stem (default: next to the CSV)")
    return p


def _apply_overrides(sc, args):
    from .scenario import DistributedSpec

    d = sc.distributed
    enabled = d.enabled
    if args.distributed:
        enabled = True
    if args.no_distributed:
        enabled = False
    spec = DistributedSpec(
        enabled=enabled,
        zeta=d.zeta if args.zeta is None else args.zeta,
        lmax=d.lmax if args.lmax is None else args.lmax,
        detect_eps=d.detect_eps if args.detect_eps is None else args.detect_eps,
        stop_tol=d.stop_tol,
    )
    # validate early so bad values exit with the validation code
    from .distributed import RoundConfig

    RoundConfig(zeta=spec.zeta, lmax=spec.lmax)
    if spec.detect_eps is not None and spec.detect_eps <= 0:
        raise ValidationError("--detect-eps must be positive")
    return sc.replace(distributed=spec)


def cmd_run(args) -> int:
    from .runner import run_scenario
    from .scenario import load_scenario

    sc = _apply_overrides(load_scenario(args.scenario), args)
    res = run_scenario(sc, args.out, estimators=args.estimator, seed=args.seed)
    if args.plot:
        from .plots import plot_trace_file

        for f in list(res.files):
            if f.suffix == ".csv":
                res.files.extend(plot_trace_file(f))
    for name, summ in res.summary["estimators"].items():
        print(f"{name:12s} max |x - x_hat|_2 = {summ['max_err_x_l2']:.3e}  max |f - f_hat|_1 = {summ['max_err_f_l1']:.3e}")
    for f in res.files:
        print(f"wrote {f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .plots import plot_sweep
    from .runner import sweep_fault_count, write_sweep_csv
    from .scenario import load_scenario

    sc = load_scenario(args.scenario)
    mf = parse_range(args.mf)
    if any(m < 0 or m > sc.M for m in mf):
        raise ValidationError(f"fault counts must lie in 0..{sc.M}")
    table = sweep_fault_count(sc, mf, seed=args.seed, distributed=False if args.centralized else None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{sc.name}_sweep.csv"
    write_sweep_csv(table, csv_path)
    svg = plot_sweep(table, out / f"{sc.name}_sweep.svg")
    for m, e in table:
        print(f"M_f={m}: {e:.6e}")
    print(f"wrote {csv_path}\nwrote {svg}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plots import plot_trace_file

    path = Path(args.trace)
    if not path.exists():
        raise ValidationError(f"trace file not found: {path}")
    for f in plot_trace_file(path, args.out):
        print(f"wrote {f}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "sweep": cmd_sweep, "plot": cmd_plot}
    try:
        return handlers[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (L1FaultRuntimeError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
