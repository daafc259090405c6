"""Command-line entry point: ``dtvopt run|check|plot|sweep``.

Exit codes: 0 success, 1 invalid input, 2 the simulation aborted.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__, kernels
from .artifacts import read_csv, write_csv, write_meta, write_svg
from .report import check_problem
from .scenario import ScenarioConfig, ScenarioError, parse_scenario
from .sim import SimulationAbort, integrate
from .svgplot import render_svg

EXIT_OK, EXIT_INVALID, EXIT_ABORT = 0, 1, 2


def _err(msg: str):
    print(f"error: {msg}", file=sys.stderr)


def _tolerance_results(cfg: ScenarioConfig, summary: dict) -> dict:
    out = {}
    for metric, bound in cfg.tolerances.items():
        final = summary.get(f"final_{metric}")
        out[metric] = {"bound": bound, "final": final,
                       "passed": final is not None and final < bound}
    return out


def run_scenario(cfg: ScenarioConfig, out_dir: Path, quiet: bool = False) -> tuple[int, dict]:
    """Run one validated scenario and write its three artifacts.

    Returns the exit code and the summary (empty on failure).
    """
    try:
        problem = cfg.resolve()
    except ValueError as exc:
        _err(f"{cfg.name}: {exc}")
        return EXIT_INVALID, {}
    report = check_problem(problem)
    for w in report.warnings:
        print(f"warning: {cfg.name}: {w}", file=sys.stderr)
    try:
        log = integrate(problem)
    except SimulationAbort as exc:
        _err(f"{cfg.name}: run aborted: {exc}")
        return EXIT_ABORT, {}
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = log.summary()
    meta = {
        "scenario": cfg.to_dict(),
        "integrator": problem.integrator.to_dict(),
        "gains": problem.params.to_dict(),
        "checks": report.to_dict(),
        "summary": summary,
        "tolerances": _tolerance_results(cfg, summary),
        "version": __version__,
    }
    write_csv(log, out_dir / f"{cfg.name}.csv")
    write_meta(out_dir / f"{cfg.name}.meta.json", meta)
    write_svg(log, out_dir / f"{cfg.name}.svg", title=f"{cfg.name} ({cfg.algorithm})")
    if not quiet:
        print(f"{cfg.name}: wrote {cfg.name}.csv, {cfg.name}.meta.json, {cfg.name}.svg "
              f"to {out_dir}")
        for k in ("final_track_max", "final_consensus_x", "final_center_err", "min_min_dist"):
            if k in summary:
                print(f"  {k} = {summary[k]:.4g}")
        for metric, res in meta["tolerances"].items():
            print(f"  tolerance {metric} < {res['bound']:g}: "
                  f"{'PASS' if res['passed'] else 'FAIL'}")
    return EXIT_OK, summary


def _load(source: str) -> ScenarioConfig | None:
    try:
        return parse_scenario(source)
    except ScenarioError as exc:
        _err(f"invalid scenario: {exc}")
        return None


def cmd_run(args) -> int:
    cfg = _load(args.scenario)
    if cfg is None:
        return EXIT_INVALID
    code, _ = run_scenario(cfg, Path(args.out), quiet=args.quiet)
    return code


def cmd_check(args) -> int:
    cfg = _load(args.scenario)
    if cfg is None:
        return EXIT_INVALID
    try:
        problem = cfg.resolve()
    except ValueError as exc:
        _err(str(exc))
        return EXIT_INVALID
    report = check_problem(problem)
    print(f"scenario {cfg.name}: {cfg.algorithm}, {cfg.n} agents in R^{cfg.m}")
    for line in report.lines:
        print(line)
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        data = read_csv(args.csv)
    except (OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_svg(data["times"], data["X"], data["xstar"], data["metrics"],
                              title=Path(args.csv).stem))
    return EXIT_OK


def _parse_values(text: str) -> list:
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        try:
            vals.append(json.loads(tok))
        except json.JSONDecodeError:
            vals.append(tok)
    return vals


def _sweep_one(job: tuple[dict, str, bool]) -> tuple[str, int, dict]:
    cfg_dict, out, quiet = job
    cfg = ScenarioConfig.from_dict(cfg_dict)
    code, summary = run_scenario(cfg, Path(out), quiet=quiet)
    return cfg.name, code, summary


def cmd_sweep(args) -> int:
    base = _load(args.scenario)
    if base is None:
        return EXIT_INVALID
    if "=" not in args.param:
        _err("--param must look like path=v1,v2,...")
        return EXIT_INVALID
    key, raw_vals = args.param.split("=", 1)
    values = _parse_values(raw_vals)
    jobs = []
    for k, v in enumerate(values):
        try:
            cfg = base.with_override(key, v)
            cfg = cfg.with_override("name", f"{base.name}-{key.rsplit('.', 1)[-1]}-{k + 1}")
        except ScenarioError as exc:
            _err(f"invalid sweep value {v!r}: {exc}")
            return EXIT_INVALID
        jobs.append((cfg.to_dict(), args.out, args.quiet))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index = [{"name": name, key: v, "exit_code": code, "summary": summary}
             for (name, code, summary), v in zip(results, values)]
    write_meta(out / f"{base.name}.sweep.json", {"param": key, "runs": index})
    worst = max(code for _, code, _ in results)
    return worst


class _Parser(argparse.ArgumentParser):
    # usage mistakes are invalid input, not aborted runs
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dtvopt", description="Distributed time-varying "
                                "optimization: run, check and plot multi-agent scenarios.")
    p.add_argument("--version", action="version",
                   version=f"%(prog)s {__version__} ({kernels.BACKEND} kernels)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write CSV, meta JSON and SVG")
    r.add_argument("--scenario", required=True, help="scenario JSON file or preset name")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="print connectivity, gain conditions and bounds")
    c.add_argument("--scenario", required=True)
    c.set_defaults(func=cmd_check)

    pl = sub.add_parser("plot", help="render an SVG from a run CSV")
    pl.add_argument("--csv", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)

    s = sub.add_parser("sweep", help="run a scenario once per value of one parameter")
    s.add_argument("--scenario", required=True)
    s.add_argument("--param", required=True, help="dotted path and values, e.g. "
                   "gains.layer.epsilon=2,0.5")
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1, help="parallel runs (default 1)")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
