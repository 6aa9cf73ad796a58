"""Command line: ``myopic run | verify | scenario list|render | oracle seb``.

Exit codes: 0 success, 1 certificate violation, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__, scenarios
from .analysis import (
    fault_contraction_check,
    fault_f2_check,
    metrics_table,
    monotonicity_certificates,
    write_metrics_csv,
)
from .engine import RunSettings, run
from .errors import UsageError
from .geometry import as_point, seb_bruteforce, smallest_enclosing_ball
from .model import fault_count
from .policies import OrthogonalChoice, TiePolicy, rule_from_name
from .suites import SUITES, run_suite

log = logging.getLogger("myopic")

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


def default_seed() -> int:
    raw = os.environ.get("MYOPIC_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"MYOPIC_SEED must be an integer, got {raw!r}") from None


def _read_manifest(path: str) -> dict[str, Any]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read manifest {p}: {exc}") from exc
    if not text.strip():
        raise UsageError(f"manifest {p} is empty")
    try:
        if p.suffix == ".toml":
            obj = scenarios.tomllib.loads(text)
        else:
            obj = json.loads(text)
    except ValueError as exc:
        raise UsageError(f"cannot parse manifest {p}: {exc}") from exc
    if not isinstance(obj, dict):
        raise UsageError("manifest must be an object")
    base = p.parent
    if isinstance(obj.get("scenario"), str) and not Path(obj["scenario"]).is_absolute():
        obj["scenario"] = str(base / obj["scenario"])
    return obj


_MANIFEST_KEYS = {"scenario", "algo", "tie", "ortho", "steps", "seed", "eps_tie", "eps_gather",
                  "eps_converge", "out", "check"}


def effective_manifest(args: argparse.Namespace) -> dict[str, Any]:
    """Manifest file values overridden by any flag given on the command line."""
    manifest: dict[str, Any] = _read_manifest(args.manifest) if args.manifest else {}
    unknown = set(manifest) - _MANIFEST_KEYS
    if unknown:
        raise UsageError(f"unknown manifest fields {sorted(unknown)}")
    for key in _MANIFEST_KEYS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            manifest[key] = value
    if "scenario" not in manifest:
        raise UsageError("run needs --scenario or a manifest with a scenario")
    manifest.setdefault("algo", "mm")
    manifest.setdefault("steps", 1000)
    manifest.setdefault("seed", default_seed())
    manifest.setdefault("eps_tie", 1e-9)
    manifest.setdefault("eps_gather", 0.0)
    manifest.setdefault("out", "out")
    manifest.setdefault("check", False)
    return manifest


def _tie_from(value: Any, seed: int, groups: tuple[tuple[int, ...], ...]) -> TiePolicy:
    tie = TiePolicy.from_json(value)
    if tie.kind == "seeded-random" and not (isinstance(value, dict) and "seed" in value):
        tie = replace(tie, seed=scenarios.substream_seed(seed, "tie"))
    if tie.kind == "cyclic-equilateral" and not tie.groups and groups:
        tie = replace(tie, groups=groups)
    return tie


def _ortho_from(value: Any, seed: int) -> OrthogonalChoice:
    ortho = OrthogonalChoice.from_json(value)
    if ortho.kind == "seeded-random" and not (isinstance(value, dict) and "seed" in value):
        ortho = replace(ortho, seed=scenarios.substream_seed(seed, "ortho"))
    return ortho


def cmd_run(args: argparse.Namespace) -> int:
    manifest = effective_manifest(args)
    seed = int(manifest["seed"])
    spec = manifest["scenario"]
    sc = scenarios.from_json(spec, seed) if isinstance(spec, dict) else scenarios.load(spec, seed)
    rule = rule_from_name(str(manifest["algo"]))
    tie = _tie_from(manifest["tie"], seed, sc.groups) if "tie" in manifest else sc.tie
    ortho = _ortho_from(manifest["ortho"], seed) if "ortho" in manifest else sc.ortho
    try:
        settings = RunSettings(
            max_steps=int(manifest["steps"]),
            eps_tie=float(manifest["eps_tie"]),
            eps_gather=float(manifest["eps_gather"]),
            eps_converge=None if manifest.get("eps_converge") is None else float(manifest["eps_converge"]),
            stop_on=("gathered", "fixpoint", "converged"),
            seed=seed,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"bad run settings: {exc}") from exc

    trace = run(sc.config, rule, tie, ortho, settings, sc.crashes)
    rows = metrics_table(trace)

    out = Path(str(manifest["out"]))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trace.jsonl", "w", encoding="utf-8") as fh:
        trace.write_jsonl(fh)
    with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        write_metrics_csv(rows, fh)

    summary = trace.summary()
    summary["gathered_at"] = trace.steps if trace.stop == "gathered" else None
    summary["manifest"] = {
        **{k: v for k, v in manifest.items() if k != "scenario"},
        "scenario": spec,
        "tie": tie.to_json(),
        "ortho": ortho.to_json(),
        "settings": settings.to_json(),
    }
    code = EXIT_OK
    if manifest["check"]:
        reports = []
        if rule.exact_midpoint:
            reports += monotonicity_certificates(trace, rows)
        f = fault_count(trace.final)
        if f == 1:
            reports.append(fault_contraction_check(trace))
        elif f >= 2:
            reports.append(fault_f2_check(trace))
        summary["certificates"] = [r.to_json() for r in reports]
        if any(r.applicable and not r.passed for r in reports):
            code = EXIT_VIOLATION
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(json.dumps({k: v for k, v in summary.items() if k not in ("manifest", "certificates")}))
    if code == EXIT_VIOLATION:
        for r in summary["certificates"]:
            if not r["passed"]:
                print(f"certificate {r['name']} violated: {json.dumps(r['first_violation'])}", file=sys.stderr)
    return code


def cmd_verify(args: argparse.Namespace) -> int:
    if args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    seed = default_seed() if args.seed is None else args.seed
    result = run_suite(args.suite, args.trials, seed, args.jobs)
    ok = result.trials - result.failures
    print(f"{result.name}: {ok}/{result.trials} passed, {result.failures} violations "
          f"({result.elapsed:.2f} s, seed {seed})")
    for key, value in result.stats.items():
        print(f"  {key}: {json.dumps(value)}")
    if result.first_counterexample is not None:
        print("first counterexample:")
        print(json.dumps(result.first_counterexample, indent=2))
    if args.json:
        Path(args.json).write_text(json.dumps(result.to_json(), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK if result.passed else EXIT_VIOLATION


def cmd_scenario_list(args: argparse.Namespace) -> int:
    if args.json:
        print(json.dumps(scenarios.KINDS, indent=2))
        return EXIT_OK
    for kind, entry in scenarios.KINDS.items():
        print(f"{kind}: {entry['about']}")
        for name, schema in entry["params"].items():
            print(f"    {name}: {schema}")
    return EXIT_OK


_RENDER_PARAMS = ("side", "d", "n", "D", "scale", "D_bound", "separation", "centered")


def cmd_scenario_render(args: argparse.Namespace) -> int:
    params = {k: getattr(args, k) for k in _RENDER_PARAMS if getattr(args, k) is not None}
    if not args.centered:
        params.pop("centered")
    seed = default_seed() if args.seed is None else args.seed
    if args.seed is not None:
        params["seed"] = args.seed
    sc = scenarios.build(args.kind, params, seed)
    text = json.dumps(sc.to_json(), indent=2) + "\n"
    if args.output and args.output != "-":
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _points_arg(args: argparse.Namespace) -> list[tuple[float, ...]]:
    if args.points is not None:
        try:
            raw = json.loads(args.points)
        except ValueError as exc:
            raise UsageError(f"--points is not valid JSON: {exc}") from exc
        if not isinstance(raw, list) or not raw:
            raise UsageError("--points must be a non-empty list of coordinate lists")
        pts = [as_point(p) for p in raw]
    elif args.scenario is not None:
        pts = list(scenarios.load(args.scenario).config.positions)
    else:
        raise UsageError("oracle seb needs --points or --scenario")
    if len({len(p) for p in pts}) != 1:
        raise UsageError("points have mixed dimensions")
    return pts


def cmd_oracle_seb(args: argparse.Namespace) -> int:
    pts = _points_arg(args)
    fast = smallest_enclosing_ball(pts)
    ref = seb_bruteforce(pts)
    gap = abs(fast.radius - ref.radius)
    agree = gap <= 1e-9 * max(1.0, ref.radius)
    print(json.dumps({
        "incremental": {"center": list(fast.center), "radius": fast.radius},
        "oracle": {"center": list(ref.center), "radius": ref.radius},
        "radius_gap": gap,
        "agree": agree,
    }, indent=2))
    return EXIT_OK if agree else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="myopic", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write trace, metrics and summary", allow_abbrev=False)
    p.add_argument("--scenario", help="scenario file (JSON or TOML)")
    p.add_argument("--manifest", help="run manifest (JSON or TOML); flags override its fields")
    p.add_argument("--algo", help="move rule: mm, full-hop or linear:a,b (default mm)")
    p.add_argument("--tie", help="tie policy: order, lowest-id, random, scripted, cyclic")
    p.add_argument("--ortho", help="orthogonal choice: positive, negative, random")
    p.add_argument("--steps", type=int, help="step budget (default 1000)")
    p.add_argument("--seed", type=int, help="run seed (default $MYOPIC_SEED or 0)")
    p.add_argument("--eps-tie", dest="eps_tie", type=float, help="relative tie band (default 1e-9)")
    p.add_argument("--eps-gather", dest="eps_gather", type=float, help="gathering radius (default 0, exact)")
    p.add_argument("--eps-converge", dest="eps_converge", type=float, help="stop once the enclosing radius is below this")
    p.add_argument("--out", help="output directory (default ./out)")
    p.add_argument("--check", action="store_true", default=None, help="evaluate certificates; exit 1 on violation")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run a certificate suite", allow_abbrev=False)
    p.add_argument("suite", help=", ".join(SUITES))
    p.add_argument("--trials", type=int, help="number of trials (suite default otherwise)")
    p.add_argument("--seed", type=int, help="suite seed (default $MYOPIC_SEED or 0)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--json", help="also write the report to this file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("scenario", help="scenario catalog")
    ssub = p.add_subparsers(dest="action", required=True)
    q = ssub.add_parser("list", help="print scenario kinds and parameters")
    q.add_argument("--json", action="store_true")
    q.set_defaults(func=cmd_scenario_list)
    q = ssub.add_parser("render", help="write a concrete configuration file", allow_abbrev=False)
    q.add_argument("--kind", required=True)
    q.add_argument("--side", type=float)
    q.add_argument("--d", type=int)
    q.add_argument("--n", type=int)
    q.add_argument("--D", type=float)
    q.add_argument("--seed", type=int)
    q.add_argument("--scale", type=float)
    q.add_argument("--D-bound", dest="D_bound", type=float)
    q.add_argument("--separation", type=float)
    q.add_argument("--centered", action="store_true", help="put the triangle barycenter at the origin")
    q.add_argument("-o", "--output", help="output file (default stdout)")
    q.set_defaults(func=cmd_scenario_render)

    p = sub.add_parser("oracle", help="cross-check geometric routines")
    osub = p.add_subparsers(dest="oracle", required=True)
    q = osub.add_parser("seb", help="smallest enclosing ball: incremental vs brute force")
    q.add_argument("--points", help='JSON list of points, e.g. "[[0,0],[1,0]]"')
    q.add_argument("--scenario", help="take the points from a scenario file")
    q.set_defaults(func=cmd_oracle_seb)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"myopic: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
