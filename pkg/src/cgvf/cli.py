"""Command-line entry point: ``cgvf run | validate | sweep | presets list``."""

from __future__ import annotations

import argparse
import copy
import logging
import sys
import time
from pathlib import Path

from . import presets as preset_mod
from .coordination import CoordinationError
from .diagnostics import settling_time
from .geometry import GeometryError
from .io import summarize, write_outputs
from .scenario import ScenarioError, build, load_file, validate
from .sim import integrate

EXIT_OK, EXIT_ABORT, EXIT_USAGE = 0, 1, 2

SWEEPABLE = ("k_c", "k", "step", "duration", "k_theta", "alpha", "R", "packet_loss", "comm_interval")


class UsageError(Exception):
    pass


def _load(spec: str) -> tuple[dict, str]:
    path = Path(spec)
    if path.is_file():
        return load_file(path), path.stem
    if spec in preset_mod.NAMES:
        return preset_mod.preset_data(spec), spec
    if path.suffix or "/" in spec:
        raise FileNotFoundError(f"scenario file not found: {spec}")
    raise FileNotFoundError(f"no scenario file or preset named {spec!r} (presets: {', '.join(preset_mod.NAMES)})")


def _apply_overrides(data: dict, args) -> dict:
    data = copy.deepcopy(data)
    run = data.setdefault("run", {})
    if getattr(args, "decimate", None) is not None:
        run["decimate"] = args.decimate
    if getattr(args, "duration", None) is not None:
        run["duration_s"] = args.duration
    return data


def set_parameter(data: dict, name: str, value: float) -> dict:
    """Copy of a scenario table with one sweepable parameter replaced."""
    data = copy.deepcopy(data)
    if name == "k_c":
        coord = data.setdefault("coordination", {})
        k = len(coord.get("k_c", [1.0]))
        coord["k_c"] = [value] * k
    elif name == "k":
        rob = data["robots"]
        for tab in [rob] + list(rob.get("group", [])):
            if "gains" in tab:
                tab["gains"] = [value] * len(tab["gains"])
        if "gains" not in rob and not any("gains" in g for g in rob.get("group", [])):
            raise UsageError("scenario has no explicit gains to sweep")
    elif name in ("step", "duration"):
        data.setdefault("run", {})[f"{name}_s"] = value
    elif name == "k_theta":
        data.setdefault("guidance", {})["k_theta"] = value
    elif name in ("alpha", "R"):
        data.setdefault("safety", {})[name] = value
    elif name == "packet_loss":
        data.setdefault("coordination", {})["packet_loss"] = value
    elif name == "comm_interval":
        data.setdefault("coordination", {})["comm_interval_s"] = value
    else:
        raise UsageError(f"cannot sweep {name!r}; choose one of {', '.join(SWEEPABLE)}")
    return data


def cmd_run(args) -> int:
    data, stem = _load(args.scenario)
    data = _apply_overrides(data, args)
    sc = build(data, seed=args.seed, default_name=stem)
    for c in validate(data):
        if not c.ok:
            print(f"warning: {c.name} violated ({c.detail})", file=sys.stderr)
    t0 = time.perf_counter()
    result = integrate(sc)
    wall = time.perf_counter() - t0
    out = Path(args.out) if args.out else Path("runs") / sc.name
    summary = write_outputs(sc, result, out, plot=args.plot)
    fin = summary["final"]
    print(
        f"{sc.name}: {result.status} after {result.final.t:g} s ({result.engine} engine, {result.backend}, "
        f"{wall:.2f} s wall)  composite={fin['composite']:.3e}  max_phi={fin['max_phi']:.3e}  "
        f"max_edge={fin['max_edge_error']:.3e}"
    )
    print(f"outputs written to {out}")
    return EXIT_OK if result.status == "ok" else EXIT_ABORT


def cmd_validate(args) -> int:
    data, _ = _load(args.scenario)
    checks = validate(data)
    for c in checks:
        mark = "ok" if c.ok else "FAILED"
        print(f"{c.name} {mark}" + (f"  ({c.detail})" if c.detail else ""))
    return EXIT_OK if all(c.ok for c in checks) else EXIT_ABORT


def cmd_sweep(args) -> int:
    if not args.values:
        raise UsageError("sweep needs at least one value")
    if args.param not in SWEEPABLE:
        raise UsageError(f"cannot sweep {args.param!r}; choose one of {', '.join(SWEEPABLE)}")
    base, stem = _load(args.scenario)
    base = _apply_overrides(base, args)
    rows = []
    code = EXIT_OK
    for value in args.values:
        sc = build(set_parameter(base, args.param, value), seed=args.seed, default_name=stem)
        result = integrate(sc)
        if args.out:
            write_outputs(sc, result, Path(args.out) / f"{args.param}={value:g}", plot=args.plot)
        summary = summarize(sc, result, args.threshold)
        settle = settling_time(result.frames, args.threshold, "edge")
        rows.append((value, result.status, settle, summary["final"]["composite"]))
        if result.status != "ok":
            code = EXIT_ABORT
    print(f"{args.param:>12}  {'status':<8}  {'settle_s':>10}  {'composite':>11}")
    for value, status, settle, comp in rows:
        print(f"{value:>12g}  {status[:8]:<8}  {settle:>10.4g}  {comp:>11.3e}")
    return code


def cmd_presets(args) -> int:
    if args.action != "list":
        raise UsageError("usage: cgvf presets list")
    for name in preset_mod.NAMES:
        data = preset_mod.preset_data(name)
        print(f"{name:<12} {data.get('description', '')}")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cgvf", description="Coordinating guiding vector field simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("scenario", help="scenario TOML file or preset name")
        sp.add_argument("--out", help="output directory (default runs/<name>)")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--plot", action="store_true", help="also write trajectories.svg")
        sp.add_argument("--decimate", type=int, help="keep every Nth step in telemetry")
        sp.add_argument("--duration", type=float, help="override the simulated duration in seconds")

    run = sub.add_parser("run", help="simulate a scenario and write telemetry")
    common(run)
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a scenario without simulating")
    val.add_argument("scenario")
    val.set_defaults(func=cmd_validate)

    sw = sub.add_parser("sweep", help="run a scenario once per parameter value")
    common(sw)
    sw.add_argument("--param", required=True, help=f"one of {', '.join(SWEEPABLE)}")
    sw.add_argument("--values", type=float, nargs="*", default=[], help="values to try")
    sw.add_argument("--threshold", type=float, default=1e-2, help="coordination error threshold for settling time")
    sw.set_defaults(func=cmd_sweep)

    pr = sub.add_parser("presets", help="list shipped presets")
    pr.add_argument("action", choices=["list"])
    pr.set_defaults(func=cmd_presets)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, ScenarioError, CoordinationError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
