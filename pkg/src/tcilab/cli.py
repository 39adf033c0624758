"""Command-line entry point: ``tcilab <command> --config PATH [options]``.

Commands share one config document and differ in which sections they run:

``simulate``  integrate the base problem and dump the path ensemble
``couple``    coupled pair, coupling cost and entropy (no OT, no bounds)
``ot``        as ``couple`` plus the empirical transport value
``verify``    full report, final ladder rung only
``ladder``    full report on every ladder rung

Exit codes: 0 all verdicts hold, 2 any violated, 3 any inconclusive,
1 operational error (bad config, I/O, simulation failure).
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

from . import __version__
from .catalog import build_problem, operator_from_spec
from .config import load_config, parse_document
from .errors import ConfigError, TcilabError
from .experiments import (EXIT_ERROR, EXIT_OK, ExperimentError, emit_reports, exit_code,
                          run_experiment)
from .sde import TimeGrid, simulate_paths
from .storage import save_ensemble

FORMATS = ("json", "csv", "paths")


def _formats(text):
    out = tuple(f.strip() for f in text.split(",") if f.strip())
    bad = [f for f in out if f not in FORMATS]
    if bad:
        raise argparse.ArgumentTypeError("unknown format(s) %s; choose from %s" % (bad, ",".join(FORMATS)))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tcilab", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version="tcilab " + __version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "couple", "ot", "verify", "ladder"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, type=Path, help="YAML or JSON experiment config")
        s.add_argument("--out", type=Path, default=None,
                       help="output directory (default: output.directory or ./out)")
        s.add_argument("--seed-override", type=int, default=None, metavar="N")
        s.add_argument("--format", type=_formats, default=None, metavar="LIST",
                       help="comma separated subset of json,csv,paths (default json,csv)")
        s.add_argument("--threads", type=int, default=1, metavar="N",
                       help="ladder rungs run concurrently")
    return p


def _restrict(cfg, command):
    doc = copy.deepcopy(cfg.doc)
    ladder = cfg.ladder
    if command in ("couple", "ot", "verify", "simulate") and ladder is not None:
        doc["yosida"]["ladder"] = [ladder[-1]]
        doc["yosida"].pop("max_power", None)
    if command in ("couple", "ot", "simulate"):
        doc["inequalities"] = []
    if command == "couple":
        doc["ot"] = {"solver": "none"}
    if command == "ot":
        doc.setdefault("ot", {})
        if doc["ot"].get("solver", "none") == "none":
            doc["ot"]["solver"] = "exact"
    return parse_document(doc)


def _simulate(cfg, out, formats):
    doc = cfg.doc
    grid = TimeGrid(doc["grid"]["horizon"], doc["grid"]["n_steps"])
    yos = None
    if cfg.ladder is not None:
        yos = (operator_from_spec(doc["yosida"]["operator"], int(doc["problem"]["dimension"])), cfg.ladder[-1])
    ens = simulate_paths(build_problem(doc["problem"], yos), grid, cfg.n_paths, cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "paths" in formats:
        written.append(save_ensemble(out / "paths.npz", ens))
    if "csv" in formats:
        written.append(save_ensemble(out / "paths.csv", ens))
    if "json" in formats:
        summary = {"config_hash": cfg.hash, "seed": cfg.seed, "n_paths": len(ens),
                   "n_steps": grid.n_steps, "horizon": grid.horizon,
                   "endpoint_mean": ens.values[:, -1].mean(axis=0).tolist()}
        p = out / "simulate.json"
        p.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        written.append(p)
    return written


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed_override is not None:
            cfg = cfg.with_seed(args.seed_override)
        output = cfg.section("output")
        out = args.out or Path(output.get("directory", "out"))
        formats = args.format or tuple(output.get("formats", ("json", "csv")))
        if args.command == "ladder" and cfg.ladder is None:
            raise ConfigError([("yosida", "ladder command needs a yosida section")])
        cfg = _restrict(cfg, args.command)
        if args.command == "simulate":
            for p in _simulate(cfg, out, formats):
                print(p)
            return EXIT_OK
        bundle = run_experiment(cfg, threads=args.threads, formats=formats)
        written = emit_reports(bundle, out, formats)
    except ExperimentError as e:
        try:
            emit_reports(e.bundle, args.out or Path("out"), ("json",))
        except OSError:
            pass
        print("error: %s" % e, file=sys.stderr)
        return EXIT_ERROR
    except (TcilabError, OSError) as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_ERROR
    for p in written:
        print(p)
    for r in bundle.reports:
        print("%-6s n=%-6s lhs=%.6g rhs=%.6g %s" % (r["tag"], r["n"], r["lhs"], r["rhs"], r["verdict"]))
    return exit_code(bundle)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
