"""Command line runner: ``emeel <command> [config] --out DIR``.

Data files depend only on the config and seed.  Run metadata with a
timestamp goes to a separate ``meta.json``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from importlib import resources
from pathlib import Path

import yaml

from . import __version__
from . import workflows as wf
from .channels import CapacityError, ChannelError
from .estimation import EstimationError, FitError
from .hypothesis import GameError
from .pauli import PauliError
from .sim import PlanError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK = 3
EXIT_ESTIMATION = 4
EXIT_CAPACITY = 5
EXIT_OTHER = 1


def load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise wf.ConfigError("config file must hold a mapping")
    return cfg


def schema() -> dict:
    return json.loads(resources.files("emeel").joinpath("schemas/columns.json").read_text())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path: Path, obj) -> None:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v

    with open(path, "w") as fh:
        json.dump(clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_hypotest(cfg, out: Path, seed, workers) -> int:
    rows = wf.hypotest(cfg, seed, workers)
    write_csv(out / "hypotest.csv", wf.HYPOTEST_COLUMNS, rows)
    return EXIT_OK


def cmd_learn(cfg, out: Path, seed, workers) -> int:
    rows = wf.learn(cfg, seed, workers)
    write_csv(out / "learn.csv", wf.LEARN_COLUMNS, rows)
    return EXIT_OK


def cmd_oracle_check(cfg, out: Path, seed, workers) -> int:
    rows, summary = wf.oracle_check(cfg, seed, workers)
    write_csv(out / "oracle.csv", wf.ORACLE_COLUMNS, rows)
    write_json(out / "oracle.json", summary)
    return EXIT_OK if summary["passed"] else EXIT_CHECK


def cmd_overhead(cfg, out: Path, seed, workers) -> int:
    if "report" in cfg:
        rows = read_csv(cfg["report"])
    elif "learn" in cfg:
        rows = wf.learn(cfg["learn"], seed, workers)
        write_csv(out / "learn.csv", wf.LEARN_COLUMNS, rows)
    else:
        raise wf.ConfigError("overhead needs either 'report' (a learn CSV) or 'learn' (a learn config)")
    per_q, per_w, summary = wf.overhead(rows)
    write_csv(out / "overhead.csv", wf.OVERHEAD_COLUMNS, per_q)
    write_csv(out / "overhead_weights.csv", wf.OVERHEAD_WEIGHT_COLUMNS, per_w)
    write_json(out / "overhead.json", summary)
    return EXIT_OK


def cmd_spam_budget(cfg, out: Path, seed, workers) -> int:
    write_json(out / "spam_budget.json", wf.budget(cfg))
    return EXIT_OK


COMMANDS = {
    "hypotest": (cmd_hypotest, "hypothesis-testing success rates over an (n, M, protocol) grid"),
    "learn": (cmd_learn, "EEL, AuxEFL, EMEEL and optional EFL fidelity report"),
    "oracle-check": (cmd_oracle_check, "Monte Carlo versus closed-form outcome distributions"),
    "overhead": (cmd_overhead, "realized versus predicted EMEEL/EFL variance overheads"),
    "spam-budget": (cmd_spam_budget, "SPAM fidelities and overhead base from component fidelities"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emeel", description="Pauli noise learning with Bell pairs: simulation and analysis.")
    p.add_argument("--version", action="version", version=f"emeel {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("config", nargs="?", help="YAML or JSON config file")
        s.add_argument("--out", default="out", help="output directory (default: out)")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fn = COMMANDS[args.command][0]
    out = Path(args.out)
    t0 = time.time()
    try:
        if args.config is None and args.command != "spam-budget":
            raise wf.ConfigError(f"{args.command} needs a config file")
        cfg = load_config(args.config)
        out.mkdir(parents=True, exist_ok=True)
        code = fn(cfg, out, args.seed, max(1, args.workers))
    except (wf.ConfigError, PlanError, GameError, ChannelError, PauliError, yaml.YAMLError, KeyError, OSError) as exc:
        if isinstance(exc, CapacityError):
            print(f"capacity error: {exc}", file=sys.stderr)
            return EXIT_CAPACITY
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EstimationError, FitError) as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    write_json(out / "meta.json", {
        "schema": f"emeel.meta/{wf.SCHEMA_VERSION}",
        "command": args.command, "config": args.config, "seed": args.seed, "workers": args.workers,
        "version": __version__, "exit_code": code,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(t0)), "elapsed_s": round(time.time() - t0, 3),
    })
    if code == EXIT_CHECK:
        print("check failed: see oracle.json", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
