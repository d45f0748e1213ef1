"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .arena import (
    ReceiverAlgorithm,
    best_response_search,
    build_exploit_strategy,
    contrast_table,
    emulation_check,
    extend_prices,
    run_replications,
)
from .boosting import BoostConfig
from .stage_game import (
    GameError,
    SenderStrategy,
    builtin_game,
    game_from_json,
    rational_benchmark,
    strategy_from_json,
)
from .weak_learn import WeightedSupport, enumerate_candidates, measure_edge


class ConfigError(ValueError):
    pass


TOP_KEYS = {"game", "sigma", "exploit", "receiver", "rounds", "replications", "checkpoints",
            "seed", "output", "format", "mode", "candidates", "lambda", "emulation"}
RECEIVER_KEYS = {"kind", "boosting", "retrain", "first_retrain", "lam", "labels", "method"}
BOOST_KEYS = {"max_rounds", "edge_floor", "gamma", "stop_on_zero_error"}
EXPLOIT_KEYS = {"eps_H", "eps_L", "p_tilde", "eps"}
EMULATION_KEYS = {"tolerance", "confidence", "measure"}
MODES = ("run", "best_response", "emulation")


def _reject_unknown(doc, allowed, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = sorted(set(doc) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")


def _int(doc, key, default, lo=1):
    v = doc.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(f"{key}: expected an integer >= {lo}")
    return v


def validate_config(doc: dict) -> dict:
    """Check structure and types; returns a normalised copy with defaults filled in."""
    _reject_unknown(doc, TOP_KEYS, "config")
    if "game" not in doc:
        raise ConfigError("config: missing required key 'game'")
    if "sigma" in doc and "exploit" in doc:
        raise ConfigError("config: give either 'sigma' or 'exploit', not both")
    out = dict(doc)
    out["rounds"] = _int(doc, "rounds", 2000)
    out["replications"] = _int(doc, "replications", 1)
    out["seed"] = _int(doc, "seed", 0, lo=0)
    out["mode"] = doc.get("mode", "run")
    if out["mode"] not in MODES:
        raise ConfigError(f"mode: expected one of {MODES}")
    out["format"] = doc.get("format", "csv")
    if out["format"] not in ("csv", "json"):
        raise ConfigError("format: expected 'csv' or 'json'")
    rcv = doc.get("receiver", {})
    _reject_unknown(rcv, RECEIVER_KEYS, "receiver")
    _reject_unknown(rcv.get("boosting", {}), BOOST_KEYS, "receiver.boosting")
    if "exploit" in doc:
        _reject_unknown(doc["exploit"], EXPLOIT_KEYS, "exploit")
    if "emulation" in doc:
        _reject_unknown(doc["emulation"], EMULATION_KEYS, "emulation")
    cps = doc.get("checkpoints")
    if cps is not None:
        if not isinstance(cps, list) or not cps or not all(
                isinstance(c, int) and not isinstance(c, bool) and 1 <= c <= out["rounds"] for c in cps):
            raise ConfigError("checkpoints: expected a nonempty list of integers in [1, rounds]")
    if out["mode"] == "best_response":
        cands = doc.get("candidates")
        if not isinstance(cands, list) or not cands:
            raise ConfigError("candidates: best_response mode needs a nonempty list")
        for i, c in enumerate(cands):
            _reject_unknown(c, {"name", "sigma", "exploit"}, f"candidates[{i}]")
            if "exploit" in c:
                _reject_unknown(c["exploit"], EXPLOIT_KEYS, f"candidates[{i}].exploit")
    if "lambda" in doc and not (isinstance(doc["lambda"], (int, float)) and doc["lambda"] > 0):
        raise ConfigError("lambda: expected a positive number")
    return out


def _load_game(spec):
    if isinstance(spec, str):
        return builtin_game(spec)
    return game_from_json(spec)


def _receiver(cfg) -> ReceiverAlgorithm:
    rcv = dict(cfg.get("receiver", {}))
    boost = BoostConfig(**rcv.pop("boosting", {}))
    if "lambda" in cfg:
        rcv.setdefault("lam", cfg["lambda"])
    return ReceiverAlgorithm(boosting=boost, **rcv)


def _strategies(game, entries):
    """Resolve strategy specs; exploit specs may extend the game's price grid."""
    exploits = {}
    for i, e in enumerate(entries):
        if "exploit" in e:
            exploits[i] = build_exploit_strategy(game, **e["exploit"])
    if exploits:
        prices = [p for ex in exploits.values() for p in ex.prices]
        game = extend_prices(game, prices)
    out = []
    for i, e in enumerate(entries):
        if i in exploits:
            src = exploits[i].sigma
            probs = np.zeros((len(game.states), len(game.sender_actions)))
            for s in range(len(game.states)):
                for j in np.flatnonzero(src.probs[s] > 0):
                    probs[s, game.action_index(src.game.sender_actions[j])] = src.probs[s, j]
            out.append(SenderStrategy(game, probs))
        elif e.get("sigma", "rational") == "rational":
            out.append(rational_benchmark(game))
        else:
            out.append(strategy_from_json(game, e["sigma"]))
    return game, out


def _fmt_json(x):
    if isinstance(x, float):
        if not math.isfinite(x):
            return None
        return float(f"{x:.9g}")
    if isinstance(x, dict):
        return {k: _fmt_json(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_fmt_json(v) for v in x]
    if isinstance(x, np.generic):
        return _fmt_json(x.item())
    return x


def _csv_to_json(text: str) -> str:
    rows = list(csv.reader(text.splitlines()))
    return json.dumps({"columns": rows[0], "rows": rows[1:]}, indent=2) + "\n"


def _write_manifest(out: Path, cfg: dict, command: str):
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    manifest = {"command": command, "config": cfg,
                "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
                "seed": cfg.get("seed"), "version": f"boostarena {__version__}"}
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_table(out: Path, stem: str, csv_text: str, fmt: str) -> Path:
    path = out / f"{stem}.{fmt}"
    path.write_text(csv_text if fmt == "csv" else _csv_to_json(csv_text))
    return path


def cmd_run(args) -> int:
    try:
        doc = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2
    for key in ("seed", "rounds", "replications", "format"):
        if getattr(args, key) is not None:
            doc[key] = getattr(args, key)
    if args.out is not None:
        doc["output"] = args.out
    try:
        cfg = validate_config(doc)
        game = _load_game(cfg["game"])
        receiver = _receiver(cfg)
        if cfg["mode"] == "best_response":
            entries = cfg["candidates"]
        else:
            entries = [{"exploit": cfg["exploit"]} if "exploit" in cfg else {"sigma": cfg.get("sigma", "rational")}]
        game, sigmas = _strategies(game, entries)
    except (ConfigError, GameError, TypeError, ValueError, KeyError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.get("output") or ".")
    _write_manifest(out, cfg, "run")
    fmt = cfg["format"]
    if cfg["mode"] == "run":
        res = run_replications(game, sigmas[0], receiver, cfg["rounds"], cfg["replications"],
                               cfg["seed"], cfg.get("checkpoints"))
        text = res.runs[0].to_csv() if cfg["replications"] == 1 else res.to_csv()
        path = _write_table(out, "metrics", text, fmt)
    elif cfg["mode"] == "best_response":
        names = [c.get("name", f"candidate_{i}") for i, c in enumerate(cfg["candidates"])]
        ranked = best_response_search(game, receiver, sigmas, cfg["rounds"], cfg["replications"],
                                      cfg["seed"], names)
        lines = ["rank,index,name,Us_mean,Us_se"]
        for k, r in enumerate(ranked, 1):
            lines.append(f"{k},{r.index},{r.name},{r.us_mean:.9g},{r.us_se:.9g}")
        path = _write_table(out, "ranking", "\n".join(lines) + "\n", fmt)
    else:
        em = cfg.get("emulation", {})
        verdict = emulation_check(game, sigmas[0], receiver, cfg["rounds"],
                                  em.get("tolerance", 0.05), em.get("confidence", 0.05),
                                  cfg["replications"], cfg["seed"], em.get("measure", "set"))
        path = out / "verdict.json"
        path.write_text(json.dumps(_fmt_json(json.loads(verdict.to_json())), indent=2, sort_keys=True) + "\n")
    print(path)
    return 0


def cmd_contrast(args) -> int:
    if args.fixture not in ("rubinstein", "r1"):
        print(f"error: unknown fixture {args.fixture!r}; available: rubinstein", file=sys.stderr)
        return 2
    cfg = {"fixture": args.fixture, "seed": args.seed or 0,
           "rounds": args.rounds or 2000, "replications": args.replications or 500,
           "eps_H": args.eps_H, "eps_L": args.eps_L, "p_tilde": args.p_tilde}
    out = Path(args.out or ".")
    _write_manifest(out, cfg, "contrast")
    table = contrast_table(builtin_game("rubinstein"), cfg["rounds"], cfg["replications"], cfg["seed"],
                           args.eps_H, args.eps_L, args.p_tilde)
    text = table.to_csv()
    path = _write_table(out, "contrast", text, args.format or "csv")
    sys.stdout.write(text)
    print(path)
    return 0


def read_labels_file(path) -> tuple:
    """Rows ``point,label,weight``; an optional header row is skipped.

    A point may be a number or a JSON list for multi-dimensional actions.
    """
    text = Path(path).read_text()
    rows = [r for r in csv.reader(text.splitlines()) if r and any(c.strip() for c in r)]
    if rows and rows[0][0].strip().lower() in ("point", "p"):
        rows = rows[1:]
    if not rows:
        raise ConfigError("labels file has no data rows")
    points, labels, weights = [], [], []
    for n, r in enumerate(rows, 1):
        if len(r) != 3:
            raise ConfigError(f"row {n}: expected 3 fields (point, label, weight)")
        p, y, w = (c.strip() for c in r)
        try:
            points.append(tuple(json.loads(p)) if p.startswith("[") else float(p))
            weights.append(float(w))
        except (ValueError, json.JSONDecodeError):
            raise ConfigError(f"row {n}: cannot parse point or weight") from None
        try:
            labels.append(int(y))
        except ValueError:
            labels.append(y)
    w = np.asarray(weights)
    if np.any(w < 0) or w.sum() <= 0:
        raise ConfigError("weights must be nonnegative with a positive total")
    return points, labels, w / w.sum()


def cmd_edge(args) -> int:
    try:
        points, labels, w = read_labels_file(args.labels)
    except FileNotFoundError:
        print(f"error: labels file not found: {args.labels}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.actions:
        actions = tuple(int(a) if a.lstrip("+-").isdigit() else a for a in args.actions.split(","))
    elif set(labels) <= {1, -1}:
        actions = (1, -1)
    else:
        actions = tuple(dict.fromkeys(labels))
    if len(actions) < 2:
        print("error: need at least two actions; pass --actions", file=sys.stderr)
        return 2
    try:
        support = WeightedSupport(tuple(points), w, tuple(labels), actions)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = measure_edge(support, enumerate_candidates(support.points, actions))
    print(json.dumps(_fmt_json(report.to_dict()), sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="boostarena", description="Algorithm-game simulations")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--replications", type=int, default=None)
        p.add_argument("--rounds", type=int, default=None)
        p.add_argument("--format", choices=("csv", "json"), default=None)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("--config", required=True)
    common(run)
    run.set_defaults(func=cmd_run)

    con = sub.add_parser("contrast", help="rational vs exploitation payoff table")
    con.add_argument("fixture")
    con.add_argument("--eps-H", dest="eps_H", type=float, default=0.01)
    con.add_argument("--eps-L", dest="eps_L", type=float, default=0.05)
    con.add_argument("--p-tilde", dest="p_tilde", type=float, default=1.9)
    common(con)
    con.set_defaults(func=cmd_contrast)

    edge = sub.add_parser("edge", help="edge of the best threshold rule on a labelled file")
    edge.add_argument("labels")
    edge.add_argument("--actions", default=None, help="comma-separated action list")
    edge.set_defaults(func=cmd_edge)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for key in ("replications", "rounds"):
        v = getattr(args, key, None)
        if v is not None and v < 1:
            print(f"error: --{key} must be >= 1", file=sys.stderr)
            return 2
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
