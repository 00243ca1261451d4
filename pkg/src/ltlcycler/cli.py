"""``cycler`` command-line entry point.

Exit codes: 0 success, 1 domain or validation failure, 2 IO or usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction

from .automaton import (
    LDBAFormatError,
    LDBAValidationError,
    load_flatworld_ldba,
    load_ldba,
    parse_ldba,
    serialize_ldba,
)
from .cycles import find_macs, find_maips
from .envs import FlatWorld, FlatWorldConfig, gridlab_build
from .logic import DomainError, LTLSyntaxError, QSConfig, UnknownAtomError, parse_ltl, qs_eval
from .product import load_trajectory
from .shaping import QS, ShapingConfig, shape_trajectory

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from exc


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _ldba(args, path=None):
    path = path if path is not None else getattr(args, "ldba", None)
    if path is None:
        return load_flatworld_ldba()
    return load_ldba(path, allow_partial=args.allow_partial)


def _env_cfg(path) -> FlatWorldConfig:
    return FlatWorldConfig() if path is None else FlatWorldConfig.from_dict(_read_json(path))


# --------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    ldba = load_ldba(args.file, allow_partial=args.allow_partial)
    info = {
        "schema": "cycler.validate/1",
        "valid": True,
        "states": ldba.num_states,
        "declared_states": ldba.declared_states,
        "edges": len(ldba.edges),
        "eps_edges": len(ldba.eps_edges),
        "sink": ldba.sink,
    }
    if args.json:
        _emit(args, _dump(info))
    else:
        sink = f", synthesized sink {ldba.sink}" if ldba.sink is not None else ""
        _emit(args, f"valid: {ldba.num_states} states, {len(ldba.edges)} edges, "
                    f"{len(ldba.eps_edges)} jumps{sink}\n")
    return EXIT_OK


def _paths_json(paths, ldba):
    return [{"elements": list(c.elements), "start": c.start, "end": c.end,
             "guards": [ldba.describe(e) for e in c.elements]} for c in paths]


def cmd_cycles(args) -> int:
    ldba = _ldba(args, args.file)
    maips = find_maips(ldba, start=args.start)
    macs = find_macs(ldba)
    if args.json:
        _emit(args, _dump({
            "schema": "cycler.cycles/1",
            "start": ldba.initial if args.start is None else args.start,
            "counts": {"maips": len(maips), "macs": len(macs)},
            "maips": _paths_json(maips, ldba),
            "macs": _paths_json(macs, ldba),
        }))
        return EXIT_OK
    out = io.StringIO()
    for title, paths in (("MAIPs", maips), ("MACs", macs)):
        out.write(f"{title}: {len(paths)}\n")
        for c in paths:
            out.write(f"  [{' '.join(map(str, c.elements))}]  {c.describe(ldba)}\n")
    _emit(args, out.getvalue())
    return EXIT_OK


def cmd_shape(args) -> int:
    ldba = _ldba(args)
    env = FlatWorld(_env_cfg(args.env)) if args.qs or args.env else None
    traj = load_trajectory(args.trace, ldba, env)
    if args.qs:
        if traj.robustness is None:
            raise DomainError("qs shaping needs a trajectory with a terminal state record")
        cfg = ShapingConfig(mode=QS, qs=env.qs_config(), clamp_negative_progress=args.clamp)
    else:
        cfg = ShapingConfig()
    rt = shape_trajectory(traj, ldba, cfg, gamma=args.gamma, gamma_phi=args.gamma_phi, lam=args.lam)
    records = rt.to_records()
    if rt.r_exact is not None:
        for rec, q in zip(records, rt.r_exact):
            rec["r_cycler_exact"] = str(Fraction(q))
    if args.json:
        _emit(args, _dump({
            "schema": "cycler.shape/1",
            "mode": rt.mode,
            "lambda": args.lam,
            "gamma": args.gamma,
            "gamma_phi": args.gamma_phi,
            "segments": [{"start": s.start, "stop": s.stop, "kind": s.kind, "candidate": s.index,
                          "elements": list(s.cycle.elements) if s.cycle else None, "total": s.total}
                         for s in rt.segments],
            "steps": records,
        }))
        return EXIT_OK
    buf = io.StringIO()
    fields = list(records[0])
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(records)
    _emit(args, buf.getvalue())
    return EXIT_OK


def _qs_from(args, trace) -> QSConfig:
    if args.qs_config:
        d = _read_json(args.qs_config)
        unknown = set(d) - {"rho_max", "rho_min", "thresholds"}
        if unknown:
            raise ValueError(f"unknown qs config keys: {sorted(unknown)}")
        return QSConfig(float(d["rho_max"]), float(d["rho_min"]),
                        {k: float(v) for k, v in d.get("thresholds", {}).items()})
    top = max([abs(float(v)) for rv in trace for v in rv.values()] + [1.0])
    return QSConfig(top, -top, {})


def cmd_monitor(args) -> int:
    trace = _read_json(args.trace)
    if not isinstance(trace, list) or not all(isinstance(rv, dict) for rv in trace):
        raise UsageError("trace must be a JSON array of objects")
    aps = sorted({k for rv in trace for k in rv})
    formula = parse_ltl(args.formula, aps)
    cfg = _qs_from(args, trace)
    value = qs_eval(formula, trace, cfg)
    verdict = "satisfied" if value > 0 else "violated" if value < 0 else "boundary"
    if args.json:
        _emit(args, _dump({"schema": "cycler.monitor/1", "formula": args.formula, "robustness": value,
                           "verdict": verdict, "rho_max": cfg.rho_max, "rho_min": cfg.rho_min}))
    else:
        _emit(args, f"robustness {value!r} ({verdict})\n")
    return EXIT_OK


TRAIN_KEYS = {"train", "env", "ldba", "log"}


def cmd_train(args) -> int:
    from .learn import TrainConfig, save_checkpoint, train

    conf = _read_json(args.config)
    unknown = set(conf) - TRAIN_KEYS
    if unknown:
        raise ValueError(f"unknown training config keys: {sorted(unknown)}")
    tc = dict(conf.get("train", {}))
    if args.seed is not None:
        tc["seed"] = args.seed
    cfg = TrainConfig.from_dict(tc)
    env_dict = conf.get("env", {"bonus_seed": 0})
    env = FlatWorld(FlatWorldConfig.from_dict(env_dict))
    ldba = _ldba(args, conf.get("ldba"))
    out = args.out or "policy.ckpt"
    log_path = conf.get("log", out + ".csv")
    policy, _, log = train(env, ldba, cfg, log_path=log_path)
    save_checkpoint(out, policy, {"train": cfg.to_dict(), "env": env.cfg.to_dict(),
                                  "ldba": serialize_ldba(ldba)})
    last = log[-1]
    summary = {"schema": "cycler.train/1", "checkpoint": out, "log": log_path, "iterations": len(log),
               "episodes": last.episodes, "final_accepting_visits": last.accepting_visits,
               "final_ltl_shaped": last.ltl_shaped, "final_mdp_return": last.mdp_return}
    sys.stdout.write(_dump(summary) if args.json else
                     f"trained {len(log)} iterations ({last.episodes} episodes); checkpoint {out}, log {log_path}\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .learn import evaluate, load_checkpoint

    policy, meta = load_checkpoint(args.checkpoint)
    env = FlatWorld(FlatWorldConfig.from_dict(meta["env"]) if "env" in meta else FlatWorldConfig())
    if args.ldba is not None:
        ldba = _ldba(args)
    elif "ldba" in meta:
        ldba = parse_ldba(meta["ldba"], allow_partial=True)
    else:
        ldba = load_flatworld_ldba()
    res = evaluate(policy, env, ldba, args.horizon, args.rollouts, seed=args.seed or 0)
    if args.json:
        _emit(args, _dump(res.to_dict()))
    else:
        _emit(args, f"accepting visits {res.visits_mean:.2f} +/- {res.visits_std:.2f}   "
                    f"r_mdp {res.mdp_mean:.2f} +/- {res.mdp_std:.2f}   ({args.rollouts} rollouts, "
                    f"horizon {args.horizon})\n")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .exact import verify_lambda_bound

    grid = gridlab_build(_read_json(args.grid))
    ldba = _ldba(args)
    rep = verify_lambda_bound(grid, ldba, args.gamma, args.gamma_phi)
    _emit(args, _dump(rep.to_dict()))  # the report is JSON-only
    return EXIT_OK if rep.ok or not rep.assumption_holds else EXIT_DOMAIN


def cmd_env(args) -> int:
    cfg = _env_cfg(args.env)
    if args.action == "export":
        _emit(args, _dump({"schema": "cycler.flatworld/1", **cfg.to_dict()}))
        return EXIT_OK
    if not args.traj:
        raise UsageError("env render needs --traj")
    data = _read_json(args.traj)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "name", "t", "x", "y", "radius", "b"])
    for name, reg in cfg.regions.items():
        w.writerow(["region", name, "", reg.center[0], reg.center[1], reg.radius, ""])
    for k, reg in enumerate(cfg.bonus_regions):
        w.writerow(["bonus", f"bonus{k}", "", reg.center[0], reg.center[1], reg.radius, ""])
    for t, rec in enumerate(data):
        s = rec["s"]
        w.writerow(["point", "", t, s[0], s[1], "", rec.get("b", "")])
    _emit(args, buf.getvalue())
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _global_flags(default):
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: v) if default else (lambda v: argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=d(None))
    p.add_argument("--json", action="store_true", default=d(False))
    p.add_argument("--allow-partial", action="store_true", default=d(False),
                   help="complete partial automata with a rejecting sink")
    p.add_argument("--out", default=d(None), help="write output here instead of stdout")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cycler", description=__doc__, parents=[_global_flags(True)])
    sub = parser.add_subparsers(dest="command", required=True)
    g = _global_flags(False)

    p = sub.add_parser("validate", parents=[g], help="check an ldba v1 file")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("cycles", parents=[g], help="list MAIPs and MACs")
    p.add_argument("file", nargs="?", help="ldba file (default: bundled FlatWorld automaton)")
    p.add_argument("--start", type=int, default=None, help="root MAIPs here instead of the initial state")
    p.set_defaults(func=cmd_cycles)

    p = sub.add_parser("shape", parents=[g], help="shape a recorded trajectory")
    p.add_argument("--ldba", default=None)
    p.add_argument("--trace", required=True)
    p.add_argument("--qs", action="store_true", help="quantitative (robustness) shaping")
    p.add_argument("--clamp", action="store_true", help="clamp negative qs progress to zero")
    p.add_argument("--env", default=None, help="FlatWorld config JSON used for robustness")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.98)
    p.add_argument("--gamma-phi", type=float, default=0.99)
    p.set_defaults(func=cmd_shape)

    p = sub.add_parser("monitor", parents=[g], help="robustness of a formula on a trace")
    p.add_argument("--formula", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--qs-config", default=None)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("train", parents=[g], help="train a policy on FlatWorld")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[g], help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ldba", default=None)
    p.add_argument("--horizon", type=int, default=360)
    p.add_argument("--rollouts", type=int, default=10)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", parents=[g], help="exact lambda-bound check on a GridLab")
    p.add_argument("--grid", required=True)
    p.add_argument("--ldba", required=True)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--gamma-phi", type=float, default=0.9)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("env", parents=[g], help="FlatWorld geometry export")
    p.add_argument("action", choices=["render", "export"])
    p.add_argument("--env", default=None)
    p.add_argument("--traj", default=None)
    p.set_defaults(func=cmd_env)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except LDBAValidationError as exc:
        extra = f" (state {exc.state}, letter {sorted(exc.letter)})" if exc.letter is not None else ""
        print(f"invalid automaton: {exc}{extra}", file=sys.stderr)
        return EXIT_DOMAIN
    except (LDBAFormatError, LTLSyntaxError, UnknownAtomError, DomainError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
