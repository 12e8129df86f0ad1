"""Command-line front end.

Every subcommand takes its parameters from flags, optionally preloaded from a
YAML config file (``--config``); flags given on the command line win.  Output
files carry the fully resolved config in their header so they can be rerun.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .asymptotics import (
    exponent_integral,
    g,
    log_theorem1_bound,
    mixture_exponent,
    mixture_g,
)
from .chain import RuleDistribution, SamplingMode, build_chain, load_rules
from .dominating import check_domination
from .simulate import Engine, SimConfig, outcomes_csv, run_replicas, summary_json
from .solver import log_h_interpolated, solve, solve_result_csv

log = logging.getLogger("pollvote")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# argument handling


def _add_common(p: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    p.add_argument("--config", help="YAML file with default values for any flag")
    p.add_argument("--n", type=int, default=S, help="population size N")
    p.add_argument("--n-list", default=S, help="comma-separated ascending population sizes")
    p.add_argument("--rule", action="append", default=S, help="rule m:d or m:d:weight (repeatable)")
    p.add_argument("--rules", default=S, help="YAML/JSON file of {m, d, weight} records")
    p.add_argument("--mode", choices=["with", "without"], default=S, help="sampling with or without replacement")
    p.add_argument("--exclude-self", action="store_true", default=S, help="without replacement: never poll yourself")
    p.add_argument("--alpha", type=float, default=S, help="proximity threshold for t_alpha")
    p.add_argument("--initial-frac", type=float, default=S, help="initial fraction of ones")
    p.add_argument("--initial-ones", type=int, default=S, help="initial number of ones (overrides --initial-frac)")
    p.add_argument("--replicas", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out", default=S, help="output path (default: stdout)")
    p.add_argument("--format", choices=["csv", "json"], default=S)
    p.add_argument("--threads", type=int, default=S, help="worker cap for replica runs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pollvote", description="Polling majority-rule consensus on the complete graph.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    p = sub.add_parser("exact", help="per-state hitting probabilities and expected times")
    _add_common(p)

    p = sub.add_parser("sweep", help="wrong-consensus probability and time over a list of N")
    _add_common(p)

    p = sub.add_parser("exponent", help="drift ratio and error-exponent tables")
    _add_common(p)
    p.add_argument("--p-list", default=S, help="mixing probabilities for the (1,1)/(2,2) mixture")
    p.add_argument("--grid-points", type=int, default=S, help="number of x values in (0, 1/2]")

    p = sub.add_parser("simulate", help="Monte Carlo replicas")
    _add_common(p)
    p.add_argument("--engine", choices=[e.value for e in Engine], default=S)
    p.add_argument("--max-time", type=float, default=S)
    p.add_argument("--per-node-rules", action="store_true", default=S, help="experimental: fixed rule per node")

    p = sub.add_parser("dominate", help="dominating-chain checks and report")
    _add_common(p)
    p.add_argument("--epsilon", type=float, default=S)
    p.add_argument("--start", type=int, default=S)
    return parser


DEFAULTS = {
    "mode": "with",
    "exclude_self": False,
    "alpha": 0.0,
    "initial_frac": 1 / 3,
    "replicas": 1000,
    "seed": 0,
    "format": "csv",
    "threads": 1,
    "engine": "aggregate",
    "epsilon": 0.2,
    "grid_points": 50,
    "per_node_rules": False,
}


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults < config file < command-line flags."""
    cfg = dict(DEFAULTS)
    if args.command == "dominate":
        cfg["alpha"] = 0.1
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "verbose", "command")}
    if getattr(args, "config", None):
        import yaml

        with open(args.config) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {args.config} must hold a mapping")
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items()})
    cfg.update(flags)
    cfg["command"] = args.command
    return cfg


def _rules(cfg: dict) -> RuleDistribution:
    if cfg.get("rules") is not None and cfg.get("rule") is not None:
        raise ConfigError("give either 'rule' or 'rules', not both")
    src = cfg.get("rules")
    if src is not None:
        if isinstance(src, (list, dict)):
            return RuleDistribution.from_records(src)
        return load_rules(src)
    specs = cfg.get("rule")
    if specs is None:
        raise ConfigError("'rule': no polling rule given (use --rule m:d)")
    if isinstance(specs, str):
        specs = [specs]
    pairs = []
    try:
        for s in specs:
            parts = [p for p in str(s).split(":")]
            if len(parts) == 2:
                pairs.append(((int(parts[0]), int(parts[1])), None))
            elif len(parts) == 3:
                pairs.append(((int(parts[0]), int(parts[1])), float(parts[2])))
            else:
                raise ValueError(s)
    except ValueError as exc:
        raise ConfigError(f"'rule': cannot parse {exc}; expected m:d or m:d:weight") from None
    if len(pairs) == 1 and pairs[0][1] is None:
        return RuleDistribution.single(*pairs[0][0])
    if any(w is None for _, w in pairs):
        raise ConfigError("'rule': every rule needs a weight when several are given")
    try:
        return RuleDistribution.of(pairs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"'rule': {exc}") from None


def _mode(cfg) -> SamplingMode:
    try:
        return SamplingMode(cfg["mode"])
    except ValueError:
        raise ConfigError(f"'mode': expected 'with' or 'without', got {cfg['mode']!r}") from None


def _require(cfg: dict, key: str):
    if cfg.get(key) is None:
        raise ConfigError(f"'{key}': required for '{cfg['command']}'")
    return cfg[key]


def _n(cfg) -> int:
    n = _require(cfg, "n")
    if not isinstance(n, int) or n < 2:
        raise ConfigError(f"'n': must be an integer >= 2, got {n!r}")
    return n


def _n_list(cfg) -> list[int]:
    raw = cfg.get("n_list")
    if raw is None:
        if cfg.get("n") is not None:
            return [_n(cfg)]
        raise ConfigError("'n_list': required for 'sweep'")
    try:
        ns = [int(v) for v in raw] if isinstance(raw, list) else [int(v) for v in str(raw).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"'n_list': not a list of integers: {raw!r}") from None
    if not ns:
        raise ConfigError("'n_list': empty")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ConfigError(f"'n_list': must be strictly ascending, got {ns}")
    if ns[0] < 2:
        raise ConfigError(f"'n_list': sizes must be >= 2, got {ns[0]}")
    return ns


def _float_list(cfg, key) -> list[float]:
    raw = cfg[key]
    try:
        return [float(v) for v in raw] if isinstance(raw, list) else [float(v) for v in str(raw).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"'{key}': not a list of numbers: {raw!r}") from None


def _initial_ones(cfg, N) -> int:
    if cfg.get("initial_ones") is not None:
        return int(cfg["initial_ones"])
    frac = float(cfg["initial_frac"])
    if not 0.0 <= frac <= 1.0:
        raise ConfigError(f"'initial_frac': {frac} outside [0, 1]")
    return math.floor(frac * N + 1e-9)


def _echo(cfg: dict) -> dict:
    out = {k: v for k, v in cfg.items() if k not in ("out",)}
    try:
        out["rules_resolved"] = _rules(cfg).to_records()
    except ConfigError:
        pass
    return out


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def _csv_text(cfg: dict, columns: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(f"# pollvote {__version__} {cfg['command']}\n")
    buf.write(f"# config: {json.dumps(_echo(cfg), sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_text(cfg: dict, payload: dict) -> str:
    return json.dumps({"command": cfg["command"], "config": _echo(cfg), **payload}, indent=2, sort_keys=True, default=_fmt) + "\n"


def emit(text: str, path: str | None):
    """Write ``text`` to ``path`` atomically, or to stdout."""
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".pollvote-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# commands


def run_exact(cfg: dict) -> str:
    N = _n(cfg)
    alpha = float(cfg["alpha"])
    if not 0.0 <= alpha < 0.5:
        raise ConfigError(f"'alpha': {alpha} outside [0, 1/2)")
    chain = build_chain(N, _rules(cfg), _mode(cfg), bool(cfg["exclude_self"]))
    res = solve(chain, alpha)
    if cfg["format"] == "json":
        rows = [
            {"i": i, "x": i / N, "h": float(res.h[i]), "log_h": float(res.log_h[i]), "t0": float(res.t0[i]), "t_alpha": float(res.t_alpha[i])}
            for i in range(N + 1)
        ]
        return _json_text(cfg, {"rows": rows})
    header = [f"pollvote {__version__} exact", f"config: {json.dumps(_echo(cfg), sort_keys=True)}"]
    return solve_result_csv(res, header)


def run_sweep(cfg: dict) -> str:
    ns = _n_list(cfg)
    rules = _rules(cfg)
    mode = _mode(cfg)
    frac = float(cfg["initial_frac"])
    if not 0.0 < frac < 1.0:
        raise ConfigError(f"'initial_frac': {frac} outside (0, 1)")
    alpha = float(cfg["alpha"])
    mm = rules.is_degenerate and rules.rules[0].m == rules.rules[0].d and rules.rules[0].m >= 2
    columns = ["N", "i", "log_h", "h", "log_h_interp", "t0", "t_alpha", "log_theorem1_bound"]
    rows = []
    for N in ns:
        res = solve(build_chain(N, rules, mode, bool(cfg["exclude_self"])), alpha)
        i = math.floor(frac * N + 1e-9)
        bound = log_theorem1_bound(N, rules.rules[0].m, frac, 1.0) if mm and frac < 0.5 else None
        rows.append([N, i, res.log_h[i], res.h[i], log_h_interpolated(res, frac), res.t0[i], res.t_alpha[i], bound])
    if cfg["format"] == "json":
        return _json_text(cfg, {"rows": [dict(zip(columns, r)) for r in rows]})
    return _csv_text(cfg, columns, rows)


def run_exponent(cfg: dict) -> str:
    n_pts = int(cfg["grid_points"])
    if n_pts < 1:
        raise ConfigError(f"'grid_points': must be positive, got {n_pts}")
    xs = [0.5 * (k + 1) / n_pts for k in range(n_pts)]
    if cfg.get("p_list") is not None:
        ps = _float_list(cfg, "p_list")
        for p in ps:
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"'p_list': {p} outside [0, 1]")
        columns = ["p", "x", "g", "exponent_closed_form", "exponent_quadrature"]
        rows = []
        for p in ps:
            rules = RuleDistribution.mixture(p)
            for x in xs:
                if p == 1.0:
                    rows.append([p, x, 1.0, 0.0, 0.0])
                else:
                    rows.append([p, x, mixture_g(x, p), mixture_exponent(x, p), exponent_integral(x, rules)])
    else:
        rules = _rules(cfg)
        if not rules.strict_majority_as:
            raise ConfigError(f"'rule': exponent needs 2d > m for every rule, got {rules}")
        columns = ["x", "g", "exponent"]
        rows = [[x, g(x, rules), exponent_integral(x, rules)] for x in xs]
    if cfg["format"] == "json":
        return _json_text(cfg, {"rows": [dict(zip(columns, r)) for r in rows]})
    return _csv_text(cfg, columns, rows)


def sim_config(cfg: dict) -> SimConfig:
    N = _n(cfg)
    replicas = int(cfg["replicas"])
    if replicas < 1:
        raise ConfigError(f"'replicas': must be >= 1, got {replicas}")
    try:
        engine = Engine(cfg["engine"])
    except ValueError:
        raise ConfigError(f"'engine': unknown engine {cfg['engine']!r}") from None
    try:
        return SimConfig(
            N=N,
            rules=_rules(cfg),
            initial_ones=_initial_ones(cfg, N),
            mode=_mode(cfg),
            alpha=float(cfg["alpha"]),
            replicas=replicas,
            seed=int(cfg["seed"]),
            engine=engine,
            max_time=cfg.get("max_time"),
            exclude_self=bool(cfg["exclude_self"]),
            per_node_rules=bool(cfg["per_node_rules"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def run_simulate(cfg: dict) -> str:
    config = sim_config(cfg)
    threads = int(cfg["threads"])
    if threads < 1:
        raise ConfigError(f"'threads': must be >= 1, got {threads}")
    outcomes = run_replicas(config, threads=threads)
    if cfg["format"] == "json":
        summary = json.loads(summary_json(config, outcomes))
        return _json_text(cfg, summary)
    header = [f"pollvote {__version__} simulate", f"config: {json.dumps(config.to_dict(), sort_keys=True)}"]
    return outcomes_csv(outcomes, header)


def run_dominate(cfg: dict) -> str:
    N = _n(cfg)
    rules = _rules(cfg)
    if not rules.is_degenerate:
        raise ConfigError("'rule': the dominating chain needs a single (m,d) rule")
    if cfg["format"] != "json":
        log.info("dominate always writes JSON")
    try:
        report = check_domination(
            N, float(cfg["epsilon"]), rules.rules[0], int(cfg["replicas"]), int(cfg["seed"]),
            start=cfg.get("start"), alpha=float(cfg["alpha"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return _json_text(cfg, {"report": report})


RUNNERS = {
    "exact": run_exact,
    "sweep": run_sweep,
    "exponent": run_exponent,
    "simulate": run_simulate,
    "dominate": run_dominate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve(args)
        text = RUNNERS[cfg["command"]](cfg)
        emit(text, cfg.get("out"))
    except ConfigError as exc:
        print(f"pollvote {args.command}: invalid config: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"pollvote {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
