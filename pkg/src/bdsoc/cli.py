"""Command-line runner: ``bdsoc <pipeline> [options]`` and ``bdsoc report DIR``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io
from .registry import model_names
from .suites import PIPELINES, ConfigError, Run, run_pipeline, set_dotted

SUMMARY = "summary.json"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bdsoc", description="BDSDE recursive control: solvers and verification suites")
    sub = p.add_subparsers(dest="command", required=True)
    for name in PIPELINES:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="TOML configuration file")
        s.add_argument("--model", help=f"registry key ({', '.join(model_names())})")
        s.add_argument("--out", type=Path, default=Path("bdsoc-out"), help="output directory")
        s.add_argument("--seed", type=int, help="master seed of the forward noise")
        s.add_argument("--b-seed", type=int, help="seed of the backward noise path")
        s.add_argument("--paths", type=int, help="Monte Carlo paths")
        s.add_argument("--steps", type=int, help="time steps")
        s.add_argument("--workers", type=int, default=1, help="threads; results do not depend on it")
        s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config key, e.g. model_params.gamma=0.5 (repeatable)")
    r = sub.add_parser("report")
    r.add_argument("directory", type=Path)
    return p


def build_config(args) -> dict:
    cfg = io.load_config(args.config) if args.config else {}
    if args.model:
        cfg["model"] = args.model
    for key, val in (("simulation.seed", args.seed), ("simulation.b_seed", args.b_seed),
                     ("simulation.paths", args.paths), ("grid.steps", args.steps)):
        if val is not None:
            set_dotted(cfg, key, val)
    for item in args.override:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        set_dotted(cfg, key.strip(), io.parse_value(val.strip()))
    return cfg


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and v != v):
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def execute(pipeline: str, cfg: dict, out: Path, workers: int = 1) -> int:
    run = Run(cfg, workers)
    result = run_pipeline(pipeline, run)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot write to {out}: {exc}") from exc
    files = []
    for stem in sorted(result.tables):
        cols, rows = result.tables[stem]
        io.write_csv(out / f"{stem}.csv", cols, rows, run.meta(table=stem, pipeline=pipeline))
        files.append(f"{stem}.csv")
    checks = [dict(c.__dict__, seed=run.seeds) for c in result.checks]
    passed = all(c.passed for c in result.checks if not c.informational)
    io.write_json(out / SUMMARY, {"pipeline": pipeline, "model": run.model.name, "seeds": run.seeds,
                                  "config": run.cfg, "artifacts": files, "checks": checks, "passed": passed})
    for c in result.checks:
        flag = "info" if c.informational else ("PASS" if c.passed else "FAIL")
        print(f"[{flag}] {c.suite}: {c.name} = {_fmt(c.value)} ({c.relation} {_fmt(c.tol)})")
    print(f"{pipeline} on {run.model.name}: {'all checks passed' if passed else 'FAILED'}; artifacts in {out}")
    return 0 if passed else 1


def report(directory: Path) -> str:
    summary = directory / SUMMARY
    if not summary.is_file():
        raise ConfigError(f"{directory} has no run outputs; expected {SUMMARY} and the CSV files it lists")
    try:
        data = io.read_json(summary)
        checks, files = data["checks"], data["artifacts"]
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{summary} is corrupt: {exc}") from exc
    for name in files:
        path = directory / name
        if not path.is_file():
            raise ConfigError(f"missing artifact {path}")
        try:
            io.read_csv(path)
        except (ValueError, OSError) as exc:
            raise ConfigError(f"corrupt artifact {path}: {exc}") from exc
    header = ["criterion", "check", "value", "tolerance", "result", "seed"]
    rows = []
    for c in checks:
        result = "info" if c.get("informational") else ("pass" if c["passed"] else "FAIL")
        crit = c.get("criterion") or "-"
        tol = c["tol"]
        rows.append([str(crit), f"{c['suite']}: {c['name']}", _fmt(c["value"]),
                     f"{c.get('relation', '<=')} {_fmt(tol)}", result, c["seed"]])
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i]) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in rows]
    lines.append(f"{data['pipeline']} on {data['model']}: {'all checks passed' if data['passed'] else 'FAILED'}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "report":
            print(report(args.directory))
            return 0
        return execute(args.command, build_config(args), args.out, args.workers)
    except (ConfigError, KeyError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
