"""Command-line front end.

``indchains run``      seeded batch of runs, per-seed CSV/JSON plus summary.json
``indchains validate`` reachability and mixing report for a game

Settings resolve as command-line flag, then experiment file (``--config``),
then built-in default.  Exit codes: 0 ok, 2 configuration error, 3 game
violates the standing assumptions, 4 infeasibility during a run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import ConfigError, ErgodicityError, IndChainsError, InfeasibleError, StructuralError
from .game import validate_game
from .gamefile import read_structured, resolve_game
from .simulator import build_config, derive_run_seeds, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3
EXIT_INFEASIBLE = 4

DEFAULTS = {
    "game": "G1",
    "mode": "finite",
    "episodes": 100,
    "seeds": 1,
    "master_seed": 0,
    "gamma": 0.1,
    "epsilon": 0.1,
    "c": 1.0,
    "delta": None,
    "out": "runs",
    "stride": 10,
    "oracle": "on",
    "workers": 1,
    "warmup": None,
    "power": 0.75,
}

_TYPES = {
    "game": str, "mode": str, "episodes": int, "seeds": int, "master_seed": int,
    "gamma": float, "epsilon": float, "c": float, "delta": float, "out": str,
    "stride": int, "oracle": str, "workers": int, "warmup": float, "power": float,
}


def _coerce(key, value, source):
    if value is None:
        return None
    kind = _TYPES[key]
    if key == "oracle" and isinstance(value, bool):
        return "on" if value else "off"
    if kind is int and isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"{source}: field '{key}' must be an integer, got {value!r}")
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{source}: field '{key}' has invalid value {value!r}") from None


def resolve_settings(flags, config_path=None):
    """Merge defaults, the experiment file and explicit flags (highest wins)."""
    settings = dict(DEFAULTS)
    if config_path:
        data = read_structured(config_path)
        if not isinstance(data, dict):
            raise ConfigError(f"{config_path}: top level must be a table/object")
        data = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = sorted(set(data) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"{config_path}: unknown field(s) {', '.join(unknown)}")
        base = os.path.dirname(os.path.abspath(config_path))
        for key, value in data.items():
            settings[key] = _coerce(key, value, config_path)
        game = settings["game"]
        if isinstance(game, str) and not os.path.isabs(game) and os.path.exists(os.path.join(base, game)):
            settings["game"] = os.path.join(base, game)
    for key, value in flags.items():
        if value is not None:
            settings[key] = _coerce(key, value, "command line")
    _check_settings(settings)
    return settings


def _check_settings(s):
    if s["mode"] not in ("finite", "asymptotic"):
        raise ConfigError(f"field 'mode' must be 'finite' or 'asymptotic', got {s['mode']!r}")
    if s["oracle"] not in ("on", "off"):
        raise ConfigError(f"field 'oracle' must be 'on' or 'off', got {s['oracle']!r}")
    for key in ("episodes", "seeds", "stride", "workers"):
        if s[key] < 1:
            raise ConfigError(f"field '{key}' must be >= 1, got {s[key]}")
    if not 0.0 < s["gamma"] < 1.0:
        raise ConfigError(f"field 'gamma' must lie in (0, 1), got {s['gamma']}")
    if s["epsilon"] <= 0 or s["c"] <= 0:
        raise ConfigError("fields 'epsilon' and 'c' must be positive")
    if s["delta"] is not None and s["delta"] <= 0:
        raise ConfigError(f"field 'delta' must be positive, got {s['delta']}")
    if s["warmup"] is not None and s["warmup"] < 0:
        raise ConfigError(f"field 'warmup' must be nonnegative, got {s['warmup']}")


def _one_run(args):
    game, settings, seed = args
    cfg = build_config(
        game, settings["mode"], settings["episodes"],
        gamma=settings["gamma"], epsilon=settings["epsilon"], c=settings["c"],
        delta=settings["delta"], power=settings["power"], warmup=settings["warmup"],
        master_seed=seed, oracle=settings["oracle"] == "on", record_every=settings["stride"],
    )
    return run(cfg)


def _coverage_fraction(records):
    flags = [rec.coverage for rec in records]
    if not flags or any(f is None for f in flags):
        return None
    return float(np.mean(flags))


def summarize(records, settings):
    """Median and quartiles of the weighted gap per logged episode, plus run stats."""
    K = settings["episodes"]
    logged = None
    for rec in records:
        ks = {r["k"] for r in rec.rows if r.get("ni_gap_weighted") is not None}
        logged = ks if logged is None else logged & ks
    ks = sorted(logged or ())
    gaps = np.array([
        [next(r["ni_gap_weighted"] for r in rec.rows if r["k"] == k) for k in ks]
        for rec in records
    ]).reshape(len(records), len(ks))
    lengths = np.concatenate([rec.episode_lengths for rec in records]) if records else np.zeros(0)
    q25, med, q75 = (np.percentile(gaps, [25, 50, 75], axis=0) if ks else np.zeros((3, 0)))
    return {
        "mode": settings["mode"],
        "K": K,
        "seeds": len(records),
        "k": ks,
        "gap_median": [float(x) for x in med],
        "gap_q25": [float(x) for x in q25],
        "gap_q75": [float(x) for x in q75],
        "coverage_fraction": _coverage_fraction(records),
        "mean_episode_len": float(lengths.mean()) if lengths.size else 0.0,
        "episode_len_median": float(np.median(lengths)) if lengths.size else 0.0,
        "halted_runs": sum(rec.halted for rec in records),
    }


def cmd_run(settings, stream=None):
    stream = stream or sys.stdout
    game = resolve_game(settings["game"])
    report = validate_game(game)
    if not report.ok:
        for v in report.violations:
            print(f"assumption violated: {v}", file=sys.stderr)
        return EXIT_ASSUMPTION
    seeds = derive_run_seeds(settings["master_seed"], settings["seeds"])
    jobs = [(game, settings, s) for s in seeds]
    if settings["workers"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=settings["workers"]) as pool:
            records = list(pool.map(_one_run, jobs))
    else:
        records = [_one_run(j) for j in jobs]

    out = settings["out"]
    os.makedirs(out, exist_ok=True)
    for j, rec in enumerate(records):
        stem = os.path.join(out, f"seed_{j:03d}")
        rec.to_csv(stem + ".csv")
        rec.to_json(stem + ".json")
    summary = summarize(records, settings)
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1)

    status = EXIT_OK
    for j, rec in enumerate(records):
        for err in rec.errors:
            print(f"seed {j}: player {err['player']}, episode {err['episode']}: "
                  f"{err['kind']}: {err['message']}", file=sys.stderr)
        if rec.halted:
            status = EXIT_INFEASIBLE
    gap = summary["gap_median"][-1] if summary["gap_median"] else None
    cov = summary["coverage_fraction"]
    print(f"{len(records)} run(s) written to {out}; median final weighted gap "
          f"{'n/a' if gap is None else f'{gap:.6g}'}; coverage fraction "
          f"{'n/a' if cov is None else f'{cov:.3f}'}", file=stream)
    return status


def cmd_validate(game_spec, stream=None):
    stream = stream or sys.stdout
    game = resolve_game(game_spec)
    report = validate_game(game)
    print(json.dumps({
        "game": game.name,
        "alpha": report.alpha,
        "tau_bound": report.tau_bound if np.isfinite(report.tau_bound) else None,
        "contraction": report.contraction,
        "ergodic": report.ergodic,
        "violations": report.violations,
    }, indent=1), file=stream)
    return EXIT_OK if report.ok else EXIT_ASSUMPTION


def build_parser():
    parser = argparse.ArgumentParser(prog="indchains", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a seeded batch of experiments")
    p.add_argument("--config", help="experiment file (JSON or TOML)")
    p.add_argument("--game", help="built-in game name or game file")
    p.add_argument("--mode", choices=["finite", "asymptotic"])
    p.add_argument("--episodes", type=int, help="K (finite) or episode cap (asymptotic)")
    p.add_argument("--seeds", type=int, help="number of runs")
    p.add_argument("--master-seed", dest="master_seed", type=int)
    p.add_argument("--gamma", type=float, help="confidence failure probability")
    p.add_argument("--epsilon", type=float, help="target accuracy, sets the default delta")
    p.add_argument("--c", type=float, help="step-size constant")
    p.add_argument("--delta", type=float, help="override the shrinkage threshold")
    p.add_argument("--out", help="output directory")
    p.add_argument("--stride", type=int, help="episodes between oracle evaluations")
    p.add_argument("--oracle", choices=["on", "off"])
    p.add_argument("--workers", type=int, help="parallel runs")
    p.add_argument("--warmup", type=float, help="override the warm-up length with a constant")
    p.add_argument("--power", type=float, help="step-size exponent in asymptotic mode")

    v = sub.add_parser("validate", help="check a game against the standing assumptions")
    v.add_argument("game", help="built-in game name or game file")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args.game)
        flags = {k: getattr(args, k) for k in DEFAULTS}
        settings = resolve_settings(flags, args.config)
        return cmd_run(settings)
    except (ConfigError, StructuralError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ErgodicityError as err:
        print(f"assumption violated: {err}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except InfeasibleError as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except IndChainsError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
