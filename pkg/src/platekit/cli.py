"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis as an
from .mesh import BcLayout, MeshError, add_ghosts, degenerate_mesh, read_mesh, tag_boundary, unit_square_mesh, write_mesh
from .patch import DegeneratePatchError, build_patches, patch_report_rows
from .system import METHOD_NAMES, AssemblyError, DgConfig, MethodSpec, SolverError, assemble, solve

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _layout(args, problem: an.ModelProblem) -> BcLayout:
    if args.layout:
        if len(args.layout) != 4:
            raise argparse.ArgumentTypeError("layout needs four letters: bottom right top left")
        return BcLayout.unit_square(*args.layout.upper())
    return problem.bc_layout


def _add_mesh_flags(p: argparse.ArgumentParser, required_n: bool = True) -> None:
    kind = p.add_mutually_exclusive_group()
    kind.add_argument("--structured", dest="mesh_type", action="store_const", const="structured")
    kind.add_argument("--unstructured", dest="mesh_type", action="store_const", const="unstructured")
    p.set_defaults(mesh_type="structured")
    p.add_argument("--n", type=int, default=None if required_n else 8, help="subdivisions per side")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter", type=float, default=0.2)
    p.add_argument("--degenerate", action="store_true", help="split one interior triangle at its centroid")
    p.add_argument("--layout", help="boundary tags bottom/right/top/left, e.g. CSFS (default from --problem)")


def _build_mesh(args, problem: an.ModelProblem):
    if args.n is None or args.n < 1:
        raise argparse.ArgumentTypeError("--n must be a positive integer")
    layout = _layout(args, problem)
    if args.degenerate:
        if args.mesh_type != "structured":
            raise argparse.ArgumentTypeError("--degenerate builds on the structured mesh")
        return degenerate_mesh(args.n, layout)
    if args.mesh_type == "unstructured" and args.n < 2:
        raise argparse.ArgumentTypeError("unstructured meshes need --n >= 2")
    return unit_square_mesh(args.mesh_type, args.n, layout=layout, seed=args.seed, jitter=args.jitter)


# ---------------------------------------------------------------------------
# mesh


def cmd_mesh(args) -> int:
    mesh = _build_mesh(args, an.get_problem(args.problem))
    write_mesh(mesh, args.output)
    print(f"wrote {args.output}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, h={mesh.h:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve


def _field_csv(mesh, sol) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["element", "x0", "y0", "x1", "y1", "x2", "y2", "v0", "v1", "v2", "m01", "m12", "m20"])
    for k, (tri, c) in enumerate(zip(mesh.tri_coords, sol.reconstructed)):
        wr.writerow([k, *map(repr, tri.ravel().tolist()), *map(repr, c.tolist())])
    return buf.getvalue()


def _patch_csv(mesh, method: MethodSpec) -> str:
    from .reconstruction import ReconKind

    patches = build_patches(mesh, extend=method.recon_kind is ReconKind.LEAST_SQUARES)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["element", "status", "rank", "n_members", "n_nodes"])
    wr.writerows(patch_report_rows(patches))
    return buf.getvalue()


def cmd_solve(args) -> int:
    problem = an.get_problem(args.problem)
    if args.mesh:
        mesh = read_mesh(args.mesh)
        if not mesh.has_ghosts:
            mesh = add_ghosts(mesh)
    else:
        mesh = _build_mesh(args, problem)
    method = MethodSpec.from_name(args.method)
    config = DgConfig(beta=args.beta, penalty_projection=args.penalty_proj)
    if args.dump_patches and method.is_reconstruction:
        _atomic_write(Path(args.dump_patches), _patch_csv(mesh, method))
    system = assemble(mesh, method, problem.material, config, load=problem.load)
    if args.dump_matrix:
        system.write_matrix_market(args.dump_matrix)
    sol = solve(system)
    print(f"method={method.name} problem={problem.name} h={mesh.h:.6g} ndof={sol.ndof}")
    if problem.exact is not None:
        print(f"err_l2={an.l2_error(sol, problem.exact):.6e}")
        print(f"err_energy={an.energy_error(sol, problem.exact, problem.material):.6e}")
        if method.is_reconstruction:
            print(f"err_l2_linear={an.l2_error(sol, problem.exact, field='linear'):.6e}")
    if args.dump_field:
        _atomic_write(Path(args.dump_field), _field_csv(mesh, sol))
    return EXIT_OK


# ---------------------------------------------------------------------------
# study


STUDY_KEYS = {"problem", "methods", "mesh_type", "seed", "betas", "levels", "output_dir"}
DEFAULT_LEVELS = (8, 16, 32, 64)


def parse_study_config(data) -> dict:
    """Validate a study configuration dict; raises ConfigError."""
    if not isinstance(data, dict):
        raise ConfigError("study config must be a JSON object")
    unknown = set(data) - STUDY_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}; allowed: {', '.join(sorted(STUDY_KEYS))}")
    for key in ("problem", "methods"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}")
    try:
        problem = an.ProblemId(str(data["problem"]).lower())
    except ValueError:
        raise ConfigError(f"unknown problem {data['problem']!r}; valid: p1, p2") from None
    methods = data["methods"]
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods must be a nonempty list")
    bad = [m for m in methods if str(m).lower() not in METHOD_NAMES]
    if bad:
        raise ConfigError(f"unknown method(s) {bad}; valid: {', '.join(METHOD_NAMES)}")
    mesh_type = data.get("mesh_type", "unstructured")
    if mesh_type not in ("structured", "unstructured"):
        raise ConfigError("mesh_type must be 'structured' or 'unstructured'")
    levels = data.get("levels", list(DEFAULT_LEVELS))
    if not isinstance(levels, list) or not levels or not all(isinstance(n, int) and n >= 2 for n in levels):
        raise ConfigError("levels must be a nonempty list of integers >= 2")
    betas = data.get("betas", [100.0])
    if not isinstance(betas, list) or not betas or not all(isinstance(b, (int, float)) and b > 0 for b in betas):
        raise ConfigError("betas must be a nonempty list of positive numbers")
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return {
        "problem": problem.value,
        "methods": [str(m).lower() for m in methods],
        "mesh_type": mesh_type,
        "seed": seed,
        "betas": [float(b) for b in betas],
        "levels": sorted(set(levels)),
        "output_dir": str(data.get("output_dir", "study_output")),
    }


def study_filename(method: str, problem: str, mesh_type: str, beta: float) -> str:
    return f"{method}_{problem}_{mesh_type}_beta{beta:g}.csv"


def _run_combination(task):
    problem_name, method, mesh_type, beta, levels, seed = task
    problem = an.get_problem(problem_name)
    report = an.convergence_study(problem, MethodSpec.from_name(method), mesh_type, levels, DgConfig(beta=beta), seed)
    return task, report


# figure name, problem, mesh type, methods (None = all in study), betas, x column, y column
FIGURES = [
    ("bpt_vs_morley_l2", "p1", "structured", ("bpt", "morley"), (100.0,), "h", "err_l2_linear"),
    ("p1_structured_energy", "p1", "structured", None, (100.0,), "h", "err_energy"),
    ("p1_structured_l2", "p1", "structured", None, (100.0,), "h", "err_l2"),
    ("p1_unstructured_energy", "p1", "unstructured", None, (100.0,), "h", "err_energy"),
    ("p1_unstructured_l2", "p1", "unstructured", None, (100.0,), "h", "err_l2"),
    ("p2_unstructured_energy", "p2", "unstructured", None, (100.0,), "h", "err_energy"),
    ("p2_unstructured_l2", "p2", "unstructured", None, (100.0,), "h", "err_l2"),
    ("p2_unstructured_energy_ndof", "p2", "unstructured", None, (100.0,), "ndof", "err_energy"),
    ("p1_unstructured_energy_beta", "p1", "unstructured", ("fq", "dpvc0"), (1e2, 1e4, 1e6), "h", "err_energy"),
]


def figure_subsets(reports: dict, problem: str, mesh_type: str) -> dict[str, str]:
    """CSV text for each figure whose rows are present in ``reports``.

    ``reports`` maps (method, beta) to an ErrorReport.
    """
    out = {}
    for name, fp, fm, methods, betas, xcol, ycol in FIGURES:
        if fp != problem or fm != mesh_type:
            continue
        keys = [(m, b) for (m, b) in reports if (methods is None or m in methods) and b in betas]
        if not keys or (methods is not None and not all(any(k[0] == m for k in keys) for m in methods)):
            continue
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["method", "beta", "n", xcol if xcol != "h" else "h", "ndof" if xcol == "h" else "h", ycol])
        slopes = []
        for m, b in sorted(keys, key=lambda k: (METHOD_NAMES.index(k[0]), k[1])):
            rep = reports[(m, b)]
            for r in rep.rows:
                other = r.ndof if xcol == "h" else repr(r.h)
                wr.writerow([m, repr(b), r.n, repr(getattr(r, xcol)), other, repr(getattr(r, ycol))])
            try:
                slopes.append(f"# {m} beta={b:g} slope={an.fit_slope(rep.column(xcol), rep.column(ycol)):.6f}")
            except an.SlopeFitError:
                pass
        out[name] = buf.getvalue() + "".join(s + "\n" for s in slopes)
    return out


def run_study(cfg: dict, workers: int = 1, build_reference: bool = False) -> tuple[dict, list[Path]]:
    out_dir = Path(cfg["output_dir"])
    if cfg["problem"] == "p2":
        _check_p2_reference(build_reference)
    tasks = [
        (cfg["problem"], m, cfg["mesh_type"], b, tuple(cfg["levels"]), cfg["seed"])
        for m in cfg["methods"]
        for b in cfg["betas"]
    ]
    reports = {}
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(_run_combination, tasks))
    else:
        results = [_run_combination(t) for t in tasks]
    written = []
    for task, report in results:
        _, m, mesh_type, b, _, _ = task
        reports[(m, b)] = report
        path = out_dir / study_filename(m, cfg["problem"], mesh_type, b)
        _atomic_write(path, report.to_csv())
        written.append(path)
    for name, text in figure_subsets(reports, cfg["problem"], cfg["mesh_type"]).items():
        path = out_dir / "figures" / f"{name}.csv"
        _atomic_write(path, text)
        written.append(path)
    return reports, written


def _check_p2_reference(build: bool) -> None:
    """Make sure the numerical Problem 2 reference exists and agrees with the series."""
    cache = an._cache_dir() / "p2_reference_n256.npz"
    if not cache.exists() and not build:
        raise ConfigError(
            f"Problem 2 needs the reference solution cache ({cache}); rerun with --build-reference "
            "to compute it (about a minute, ~3.5 GB RAM) or set PLATEKIT_CACHE"
        )
    ref = an.reference_p2()
    rel = an.series_reference_gap(ref)
    if rel > an.RICHARDSON_TOL:
        raise an.ReferenceCheckError(f"series and numerical reference differ by {rel:.3e} (relative L2)")


def cmd_study(args) -> int:
    try:
        data = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {args.config} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {args.config}: {exc}") from None
    cfg = parse_study_config(data)
    if args.output_dir:
        cfg["output_dir"] = args.output_dir
    reports, written = run_study(cfg, args.workers, args.build_reference)
    status = EXIT_OK
    for (m, b), rep in reports.items():
        sl = rep.slopes()
        msg = f"slope_l2={sl['l2']:.3f} slope_energy={sl['energy']:.3f}" if sl else "too few levels for a slope fit"
        print(f"{m:7s} beta={b:g}: {len(rep.rows)} levels, {msg}")
        for n, err in rep.failures:
            print(f"  level n={n} failed: {err}", file=sys.stderr)
            status = EXIT_NUMERIC
    print(f"wrote {len(written)} file(s) under {cfg['output_dir']}")
    return status


def figure_configs(levels, seed: int = 0) -> list[dict]:
    all_methods = list(METHOD_NAMES)
    return [
        dict(problem="p1", methods=all_methods, mesh_type="structured", seed=seed, betas=[100.0], levels=levels),
        dict(problem="p1", methods=all_methods, mesh_type="unstructured", seed=seed, betas=[100.0], levels=levels),
        dict(problem="p1", methods=["fq", "dpvc0"], mesh_type="unstructured", seed=seed, betas=[1e4, 1e6],
             levels=levels),
        dict(problem="p2", methods=all_methods, mesh_type="unstructured", seed=seed, betas=[100.0], levels=levels),
    ]


def cmd_figures(args) -> int:
    """Run every study behind the convergence figures."""
    root = Path(args.output_dir)
    levels = args.levels or list(DEFAULT_LEVELS)
    merged: dict = {}
    for raw in figure_configs(levels, args.seed):
        raw["output_dir"] = str(root / f"{raw['problem']}_{raw['mesh_type']}")
        cfg = parse_study_config(raw)
        reports, _ = run_study(cfg, args.workers, args.build_reference)
        merged.setdefault((cfg["problem"], cfg["mesh_type"]), {}).update(reports)
    for (problem, mesh_type), reports in merged.items():
        for name, text in figure_subsets(reports, problem, mesh_type).items():
            _atomic_write(root / "figures" / f"{name}.csv", text)
    print(f"figure data under {root / 'figures'}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="platekit", description="Thin-plate dG solver with CP1 reconstruction")
    sub = parser.add_subparsers(dest="command", required=True)

    pm = sub.add_parser("mesh", help="generate a unit-square mesh file")
    _add_mesh_flags(pm)
    pm.add_argument("--problem", choices=["p1", "p2"], default="p1", help="boundary tags of this problem")
    pm.add_argument("-o", "--output", required=True)
    pm.set_defaults(func=cmd_mesh)

    ps = sub.add_parser("solve", help="solve one model problem and print errors")
    _add_mesh_flags(ps, required_n=False)
    ps.add_argument("--mesh", help="read the mesh from a platemesh file instead")
    ps.add_argument("--method", choices=METHOD_NAMES, default="fq")
    ps.add_argument("--beta", type=float, default=100.0)
    ps.add_argument("--problem", choices=["p1", "p2"], default="p1")
    ps.add_argument("--penalty-proj", choices=["p0", "p1"], default="p0")
    ps.add_argument("--dump-field", metavar="CSV", help="write per-element quadratic coefficients")
    ps.add_argument("--dump-patches", metavar="CSV", help="write patch status per element")
    ps.add_argument("--dump-matrix", metavar="MTX", help="write the free-dof matrix in Matrix Market format")
    ps.set_defaults(func=cmd_solve)

    pst = sub.add_parser("study", help="run a convergence study from a JSON config")
    pst.add_argument("config")
    pst.add_argument("--output-dir", help="override output_dir from the config")
    pst.add_argument("--workers", type=_positive_int, default=1)
    pst.add_argument("--build-reference", action="store_true", help="allow computing the Problem 2 reference")
    pst.set_defaults(func=cmd_study)

    pf = sub.add_parser("figures", help="run every study behind the convergence figures")
    pf.add_argument("-o", "--output-dir", default="figure_data")
    pf.add_argument("--levels", type=int, nargs="+")
    pf.add_argument("--seed", type=int, default=0)
    pf.add_argument("--workers", type=_positive_int, default=1)
    pf.add_argument("--build-reference", action="store_true")
    pf.set_defaults(func=cmd_figures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        parser.print_usage(sys.stderr)
        print(f"platekit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"platekit: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MeshError, OSError) as exc:
        print(f"platekit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegeneratePatchError as exc:
        print(f"platekit: degenerate patch: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SolverError, AssemblyError, an.ReferenceCheckError, np.linalg.LinAlgError) as exc:
        print(f"platekit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
