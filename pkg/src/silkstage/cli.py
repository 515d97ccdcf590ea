"""Command-line front door.

Exit codes: 0 ok, 2 configuration, 3 numeric divergence, 4 training failure,
5 unreadable or inconsistent trace.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from . import __version__
from .config import StageConfig, load_config
from .episodes import alignment_report, detect, write_episodes_csv
from .errors import (ConfigError, IncompatibleTraceError, InconsistentTraceError, InvalidParameterError,
                     InvalidPolicyError, NumericDivergenceError, TraceFormatError, TrainingFailedError)
from .plots import plot_all
from .policy import policy_from_spec, save_params
from .stage import read_trace, replay, run_episode, write_summary, write_trace
from .training import CemConfig, evaluate, train_cem

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_TRAINING, EXIT_TRACE = 0, 2, 3, 4, 5

log = logging.getLogger("silkstage")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _config(args) -> StageConfig:
    cfg = load_config(args.config) if args.config else StageConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "duration", None) is not None:
        changes["duration"] = args.duration
    try:
        return cfg.replace(**changes) if changes else cfg
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None


def _policy(spec: str):
    try:
        return policy_from_spec(spec)
    except (InvalidPolicyError, ValueError, OSError) as exc:
        raise CliError(EXIT_CONFIG, f"policy {spec!r}: {exc}") from None


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(out: Path, command: str, args, artifacts: Dict[str, Path], status: int,
              cfg: Optional[StageConfig] = None, extra: Optional[dict] = None) -> None:
    data = {
        "command": command,
        "config_path": getattr(args, "config", None),
        "config_hash": cfg.config_hash() if cfg is not None else None,
        "seed": cfg.seed if cfg is not None else getattr(args, "seed", None),
        "out": str(out),
        "artifacts": {k: str(Path(v).relative_to(out)) for k, v in sorted(artifacts.items())},
        "exit_status": status,
    }
    if extra:
        data.update(extra)
    # one entry per command, so several commands can share an output directory
    path = out / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
        if not isinstance(manifest, dict):
            manifest = {}
    except (OSError, ValueError):
        manifest = {}
    manifest[command] = data
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_trace(path):
    try:
        return read_trace(path)
    except TraceFormatError as exc:
        raise CliError(EXIT_TRACE, f"{path}: {exc}") from None


# --------------------------------------------------------------------------
# commands


def cmd_run(args) -> int:
    cfg = _config(args)
    out = _out(args)
    trace = run_episode(cfg, _policy(args.policy_a), _policy(args.policy_b))
    artifacts = {"trace": out / "trace.jsonl", "summary": out / "summary.csv"}
    write_trace(trace, artifacts["trace"])
    write_summary(trace, artifacts["summary"])
    status = EXIT_DIVERGENCE if trace.error is not None else EXIT_OK
    _manifest(out, "run", args, artifacts, status, cfg)
    t = trace.totals
    print(f"ticks {t['ticks']}  records {t['records']}  safety events {t['safety_events']}  "
          f"credit A {t['credit_a']:.3f}  credit B {t['credit_b']:.3f}")
    if trace.error is not None:
        print(f"numeric divergence at tick {trace.error['tick']}: {trace.error['message']}", file=sys.stderr)
    return status


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out(args)
    kw = {}
    if args.cem_generations is not None:
        kw["generations"] = args.cem_generations
    if args.cem_population is not None:
        kw["population"] = args.cem_population
    if args.cem_seed is not None:
        kw["seed"] = args.cem_seed
    if args.cem_episodes is not None:
        kw["episodes_per_candidate"] = args.cem_episodes
    if args.episode_duration is not None:
        kw["episode_duration"] = args.episode_duration
    if args.workers is not None:
        kw["workers"] = args.workers
    try:
        cem = CemConfig(**kw)
    except InvalidParameterError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    try:
        best, curve = train_cem(cem, cfg)
    except TrainingFailedError as exc:
        _manifest(out, "train", args, {}, EXIT_TRAINING, cfg)
        raise CliError(EXIT_TRAINING, str(exc)) from None
    artifacts = {"policy": out / "policy.txt", "learning_curve": out / "learning_curve.csv"}
    save_params(best, artifacts["policy"])
    curve.write_csv(artifacts["learning_curve"])
    _manifest(out, "train", args, artifacts, EXIT_OK, cfg, {"cem": cem.__dict__})
    if len(curve):
        print(f"generation 0 mean reward {curve.mean[0]:.3f}")
        print(f"final mean reward {curve.mean[-1]:.3f}  best {curve.best[-1]:.3f}")
    else:
        print("no generations run; initial parameters saved")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = _out(args)
    summary = evaluate(_policy(args.policy_a), _policy(args.policy_b), cfg)
    lines = [f"{k}: {v}" for k, v in summary.__dict__.items()]
    text = "\n".join(lines) + "\n"
    report = out / "report.txt"
    report.write_text(text)
    status = EXIT_DIVERGENCE if summary.diverged else EXIT_OK
    _manifest(out, "evaluate", args, {"report": report}, status, cfg)
    print(text, end="")
    return status


def cmd_replay(args) -> int:
    trace = _load_trace(args.trace)
    cfg = load_config(args.config) if args.config else None
    try:
        report = replay(trace, cfg)
    except IncompatibleTraceError as exc:
        raise CliError(EXIT_TRACE, str(exc)) from None
    lines = [f"ticks replayed: {report.ticks}", f"mismatches: {len(report.mismatches)}"]
    lines += [f"  tick {m.tick} {m.field}: expected {m.expected!r}, found {m.found!r}"
              for m in report.mismatches]
    text = "\n".join(lines) + "\n"
    artifacts = {}
    if args.out:
        out = _out(args)
        artifacts["report"] = out / "report.txt"
        artifacts["report"].write_text(text)
        _manifest(out, "replay", args, artifacts, EXIT_OK if report.ok else EXIT_TRACE)
    print(text, end="")
    return EXIT_OK if report.ok else EXIT_TRACE


def cmd_detect(args) -> int:
    trace = _load_trace(args.trace)
    try:
        spans = detect(trace)
    except (InconsistentTraceError, IncompatibleTraceError) as exc:
        raise CliError(EXIT_TRACE, f"{args.trace}: {exc}") from None
    report = alignment_report(spans, trace)
    out = _out(args)
    artifacts = {"episodes": out / "episodes.csv", "report": out / "report.txt"}
    write_episodes_csv(spans, trace, artifacts["episodes"])
    artifacts["report"].write_text(report.text())
    _manifest(out, "detect", args, artifacts, EXIT_OK)
    for label, n in report.counts.items():
        print(f"{label}: {n}")
    print(f"violations: {len(report.violations)}")
    return EXIT_OK


def cmd_plot(args) -> int:
    trace = _load_trace(args.trace)
    out = _out(args)
    paths = plot_all(trace, out / "plots")
    _manifest(out, "plot", args, {f"plot_{k}": v for k, v in paths.items()}, EXIT_OK)
    for p in paths.values():
        print(p)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="silkstage", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, policies=False, duration=True):
        p.add_argument("--config", help="stage config (JSON); defaults apply when omitted")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        if duration:
            p.add_argument("--duration", type=float, help="override the episode duration [s]")
        if policies:
            p.add_argument("--policy-a", default="scripted:cooperator",
                           help="scripted:<kind> | file:<path> | idle")
            p.add_argument("--policy-b", default="scripted:cooperator",
                           help="scripted:<kind> | file:<path> | idle")

    p = sub.add_parser("run", help="run one episode and write its trace")
    common(p, policies=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("train", help="train a linear policy for arm A against a cooperator")
    common(p)
    p.add_argument("--cem-generations", type=int)
    p.add_argument("--cem-population", type=int)
    p.add_argument("--cem-seed", type=int)
    p.add_argument("--cem-episodes", type=int, help="randomized episodes per candidate")
    p.add_argument("--episode-duration", type=float, help="training episode length [s]")
    p.add_argument("--workers", type=int, help="parallel evaluation processes")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run one episode and print its summary")
    common(p, policies=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("replay", help="verify a trace by re-deriving its referee columns")
    p.add_argument("trace")
    p.add_argument("--config", help="config to check the trace against")
    p.add_argument("--out", help="also write report.txt here")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("detect", help="label episodes and audit legibility")
    p.add_argument("trace")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("plot", help="write SVG charts of a trace")
    p.add_argument("trace")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TraceFormatError, InconsistentTraceError, IncompatibleTraceError) as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_TRACE
    except NumericDivergenceError as exc:
        # raised before any trace exists, e.g. the resting sheet cannot be found
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
