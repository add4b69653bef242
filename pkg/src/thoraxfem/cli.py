"""Command-line interface.

Exit codes: 0 success, 1 numerical or verification failure, 2 usage or
input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from importlib import resources
from pathlib import Path

from thoraxfem.errors import SolverError, ThoraxFemError
from thoraxfem.mesh import parse_msh, validate_mesh, write_msh
from thoraxfem.phantom import ThoraxPhantomSpec, gen_thorax_phantom, region_volume_report

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_INPUT = 2

OUT_ENV = "THORAX_FEM_OUT"

log = logging.getLogger("thoraxfem")


def shipped_scenarios() -> dict[str, Path]:
    root = resources.files("thoraxfem") / "scenarios"
    return {p.name: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}


def _resolve_scenario(arg: str) -> Path | None:
    path = Path(arg)
    if path.exists():
        return path
    shipped = shipped_scenarios()
    name = path.name if path.suffix else path.name + ".json"
    if path.parent == Path(".") and name in shipped:
        return shipped[name]
    return None


def _out_root(args) -> Path:
    if args.out is not None:
        return Path(args.out)
    return Path(os.environ.get(OUT_ENV, "out"))


def _threads(args) -> int:
    if args.deterministic and args.threads > 1:
        print("note: --threads ignored in deterministic mode (use --no-deterministic)", file=sys.stderr)
        return 1
    return max(1, args.threads)


def _summary_table(rows) -> str:
    head = f"{'region':<14} {'max |u| [m]':>12} {'mean |u| [m]':>12} {'max vm [Pa]':>12} {'max sn [Pa]':>12} {'min sn [Pa]':>12}"
    lines = [head, "-" * len(head)]
    for s in rows:
        lines.append(
            f"{s.region:<14} {s.max_disp:12.4e} {s.mean_disp:12.4e} {s.max_vm:12.4e} {s.max_normal:12.4e} {s.min_normal:12.4e}"
        )
    return "\n".join(lines)


def cmd_run(args) -> int:
    from thoraxfem.pipeline import build_model, equilibrium_error, load_scenario, run_model, scenario_name, write_outputs

    path = _resolve_scenario(args.scenario)
    if path is None:
        print(f"error: scenario not found: {args.scenario}", file=sys.stderr)
        return EXIT_INPUT
    t0 = time.perf_counter()
    try:
        scenario, base = load_scenario(path)
        model = build_model(scenario, base, heavy_load=args.paper_load)
    except ThoraxFemError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    name = scenario_name(scenario, path)
    print(f"scenario {name}: {model.mesh.n_nodes} nodes, {model.mesh.n_tets} tets, "
          f"{len(model.materials)} regions active, {len(model.void)} void")

    def report(step):
        print(f"  step {step.step:3d}  t={step.time:.4g} s  load={step.load_factor:.3f}  "
              f"iterations={step.iterations:6d}  residual={step.residual:.3e}")

    try:
        run = run_model(model, threads=_threads(args), on_step=report)
    except SolverError as exc:
        print(f"error: solver: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ThoraxFemError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    final = run.results.final
    balance = equilibrium_error(run.system, final.displacement, final.load_factor)
    print(f"equilibrium imbalance at final step: {balance:.3e}")
    print(f"normal stress component: sigma_{model.normal_axis * 2}")
    print(_summary_table(run.step_summaries(final.step)))
    out_dir = _out_root(args) / name
    written = write_outputs(run, out_dir)
    print(f"wrote {len(written)} files to {out_dir} in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


def cmd_phantom(args) -> int:
    from thoraxfem.presets import cpr_scenario

    try:
        if args.spec:
            spec = ThoraxPhantomSpec.from_dict(json.loads(Path(args.spec).read_text()))
        else:
            spec = ThoraxPhantomSpec()
    except FileNotFoundError:
        print(f"error: spec not found: {args.spec}", file=sys.stderr)
        return EXIT_INPUT
    except (ThoraxFemError, TypeError, json.JSONDecodeError) as exc:
        print(f"error: invalid phantom spec: {exc}", file=sys.stderr)
        return EXIT_INPUT
    mesh = gen_thorax_phantom(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(write_msh(mesh))
    report = region_volume_report(mesh, spec)
    report_path = out.with_suffix(".regions.json")
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    scenario = cpr_scenario({"type": "file", "path": out.name}, heavy_load=args.paper_load, name=out.stem)
    scenario_path = out.with_suffix(".scenario.json")
    scenario_path.write_text(json.dumps(scenario, indent=2) + "\n")
    print(f"wrote {out} ({mesh.n_nodes} nodes, {mesh.n_tets} tets, {mesh.n_facets} facets)")
    print(f"{'region':<14} {'meshed [m^3]':>14} {'analytic [m^3]':>14}")
    for name, vols in report.items():
        print(f"{name:<14} {vols['meshed']:14.6e} {vols.get('analytic', float('nan')):14.6e}")
    print(f"wrote {report_path} and {scenario_path}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    from thoraxfem.verification import run_benchmarks

    results = run_benchmarks()
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_validate_mesh(args) -> int:
    try:
        mesh = parse_msh(Path(args.mesh).read_text(), unit_scale=args.unit_scale)
    except FileNotFoundError:
        print(f"error: mesh not found: {args.mesh}", file=sys.stderr)
        return EXIT_INPUT
    except ThoraxFemError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = validate_mesh(mesh)
    print("\n".join(report.lines()))
    return EXIT_OK if report.valid else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thoraxfem", description="Linear-elastic FEM for chest compression.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario")
    run.add_argument("scenario", help="scenario JSON path (or name of a shipped scenario)")
    run.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./out)")
    run.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True)
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--paper-load", action="store_true", help="use the 1e6 N sternum force")
    run.set_defaults(func=cmd_run)

    ph = sub.add_parser("phantom", help="generate the thorax phantom mesh")
    ph.add_argument("--spec", help="phantom spec JSON (default dimensions if omitted)")
    ph.add_argument("--out", default="thorax_phantom.msh", help="output MSH path")
    ph.add_argument("--paper-load", action="store_true", help="companion scenario uses the 1e6 N force")
    ph.set_defaults(func=cmd_phantom)

    bench = sub.add_parser("benchmark", help="run the verification suite")
    bench.set_defaults(func=cmd_benchmark)

    val = sub.add_parser("validate-mesh", help="check an MSH 2.2 mesh")
    val.add_argument("mesh")
    val.add_argument("--unit-scale", type=float, default=1.0)
    val.set_defaults(func=cmd_validate_mesh)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
