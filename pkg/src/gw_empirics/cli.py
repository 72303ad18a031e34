"""Command-line entry point: ``gw-empirics <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunManifest, parse_config, resolve_seed_override
from .errors import ConfigError, ConstructionError, DomainError, ScenarioError
from .gw import GwOptions, estimate_gw, oracle_grid, s2_alternating
from .harness import format_value, run_scenario, write_result
from .measures import DiscreteMeasure, SeedPath, center, packing_construction

SCENARIO_COMMANDS = ("rate", "deviation", "lecam", "semidiscrete")
WEIGHT_COLUMNS = ("weight", "weights", "w")


def read_cloud(path, weighted: bool | None = None) -> DiscreteMeasure:
    """Read a point cloud from CSV.

    A header row is optional. A column named ``weight`` holds the weights
    (renormalised to sum one); without it, or with a headerless file, every
    column is a coordinate and atoms get equal mass. ``weighted=True`` reads
    the last column as weights in a headerless file.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DomainError(f"{path}: empty file")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header = [c.strip().lower() for c in rows[0]]
        rows = rows[1:]
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise DomainError(f"{path}: non-numeric entry ({exc})") from exc
    if data.ndim != 2 or data.shape[0] == 0:
        raise DomainError(f"{path}: no data rows")
    wcol = None
    if header is not None:
        hits = [i for i, h in enumerate(header) if h in WEIGHT_COLUMNS]
        if len(hits) > 1:
            raise DomainError(f"{path}: more than one weight column")
        wcol = hits[0] if hits else None
        if weighted and wcol is None:
            raise DomainError(f"{path}: --weighted given but no weight column in the header")
    elif weighted:
        wcol = data.shape[1] - 1
    if wcol is None:
        return DiscreteMeasure.uniform(data)
    atoms = np.delete(data, wcol, axis=1)
    if atoms.shape[1] == 0:
        raise DomainError(f"{path}: no coordinate columns")
    return DiscreteMeasure.normalized(atoms, data[:, wcol])


def _print_pairs(pairs) -> None:
    for k, v in pairs:
        print(f"{k} = {'%.12g' % v if isinstance(v, float) else format_value(v)}")


def cmd_estimate(args) -> int:
    mu = read_cloud(args.mu, args.weighted)
    nu = read_cloud(args.nu, args.weighted)
    seed = resolve_seed_override(args.seed) or 0
    options = GwOptions(seed=seed, exact_only=args.exact_only, tol=args.tol)
    r = estimate_gw(mu, nu, options, SeedPath(seed, "estimate"))
    print(f"d_hat = {r.d_hat:.12g}  s1 = {r.s1:.12g}  s2 = {r.s2:.12g}  "
          f"iterations = {r.iterations}  starts = {r.starts_used}  method = {r.method}")
    if args.dump_plan:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(out / "plan.csv", r.coupling.plan, delimiter=",", fmt="%.17g")
        np.savetxt(out / "align.csv", r.a_star.entries, delimiter=",", fmt="%.17g")
    return 0


def cmd_oracle(args) -> int:
    mu = center(read_cloud(args.mu, args.weighted))
    nu = center(read_cloud(args.nu, args.weighted))
    o = oracle_grid(mu, nu, args.resolution)
    alt = s2_alternating(mu, nu)[0]
    _print_pairs([("oracle_s2", o.s2), ("grid_tolerance", o.tolerance), ("radius", o.radius),
                  ("alternating_s2", alt)])
    return 0


def cmd_packing(args) -> int:
    seed = resolve_seed_override(args.seed) or 0
    p = packing_construction(args.k, args.dim, SeedPath(seed, "packing"), gamma=args.gamma)
    _print_pairs([("k", args.k), ("gamma", p.gamma), ("min_distance", p.min_distance),
                  ("lambda_min", p.lambda_min)])
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{i}" for i in range(args.dim)])
            for row in p.measure.atoms:
                w.writerow([format_value(float(v)) for v in row])
    return 0


def run(manifest: RunManifest, jobs: int = 1, record_timings: bool = False,
        kinds: tuple[str, ...] | None = None) -> int:
    """Write the manifest, then run each scenario and write its tables."""
    out = Path(manifest.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    for cfg in manifest.scenarios:
        if kinds is not None and cfg.kind not in kinds:
            continue
        try:
            result = run_scenario(cfg, jobs=jobs, record_timings=record_timings)
        except ScenarioError as exc:
            print(f"error: scenario {cfg.name} failed at seed path {exc.seed_path}: {exc}", file=sys.stderr)
            return 1
        write_result(result, out)
        f = result.fit
        print(f"{cfg.name}: slope {f.slope:.4f} (stderr {f.stderr:.4f}, target {f.target_exponent:.4f})")
    return 0


def cmd_scenarios(args) -> int:
    override = resolve_seed_override(args.seed)
    manifest = parse_config(args.config, override, args.out)
    kinds = None if args.command == "run" else (args.command,)
    if kinds is not None:
        manifest.scenarios = [s for s in manifest.scenarios if s.kind in kinds]
    if args.exact_only:
        from dataclasses import replace
        manifest.exact_only = True
        manifest.scenarios = [replace(s, solver=replace(s.solver, exact_only=True)) for s in manifest.scenarios]
    if args.dump_plan:
        print(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
        return 0
    return run(manifest, jobs=args.jobs, record_timings=args.record_timings)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gw-empirics", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="global seed (beats GW_EMPIRICS_SEED and the config)")
        p.add_argument("--exact-only", action="store_true", help="forbid the entropic fallback")
        p.add_argument("--dump-plan", action="store_true",
                       help="estimate: write the coupling and A to CSV; scenario commands: print the resolved manifest and exit")

    p = sub.add_parser("estimate", help="estimate D between two CSV point clouds")
    p.add_argument("mu")
    p.add_argument("nu")
    p.add_argument("--weighted", action="store_true", default=None)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out", default=".", help="directory for --dump-plan output")
    common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("oracle", help="grid oracle for S2 on tiny inputs")
    p.add_argument("mu")
    p.add_argument("nu")
    p.add_argument("--weighted", action="store_true", default=None)
    p.add_argument("--resolution", type=int, default=201)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("packing", help="emit a separated point set in B(0, 1/3)")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_packing)

    for name in SCENARIO_COMMANDS + ("run",):
        p = sub.add_parser(name, help="run every scenario" if name == "run" else f"run the {name} scenarios")
        p.add_argument("--config", required=True)
        p.add_argument("--out", default="results")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--record-timings", action="store_true",
                       help="fill the seconds column (breaks byte-identical reruns)")
        common(p)
        p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, ConstructionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
