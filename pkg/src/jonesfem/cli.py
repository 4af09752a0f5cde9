"""Command-line front end.

Usage examples::

    jonesfem solve --domain square --lambda 0 --eigs 4 --out run1
    jonesfem convergence --domain square2 --mu 10 --lambda 1 --rho 12 --index 4 --levels 5
    jonesfem oracle --domain rectangle --a 2 --b 1 --eigs 4
    jonesfem export --domain disk --imposition mixed --eigs 3 --out modes

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import os
import sys
import warnings
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from .assembly import AssemblyError, MaterialParams, write_coo
from .eigensolve import ConvergenceError, solve_jones
from .mesh import TRIANGLE_PRESETS, DomainSpec, MeshError, build_mesh

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

IMPOSITION_NAMES = {"reduce": "reduction", "penalty": "penalty", "mixed": "mixed"}
FORMULATION_NAMES = {"graddiv": "grad_div", "strain": "strain", "shifted": "shifted"}
DOMAINS = ("square", "square2", "rectangle", "lshape", "disk", "triangle",
           "triangle_prose", "triangle_caption")
DEFAULT_RESOLUTION = {"square": 32, "square2": 16, "rectangle": 32, "lshape": 16, "disk": 64,
                      "triangle": 32, "triangle_prose": 32, "triangle_caption": 32}

# option name -> (type, default)
OPTIONS = {
    "domain": (str, "square"),
    "resolution": (int, None),
    "refinements": (int, 0),
    "a": (float, 2.0),
    "b": (float, 1.0),
    "R": (float, 1.0),
    "mu": (float, 1.0),
    "lambda": (float, 1.0),
    "rho": (float, 1.0),
    "degree": (int, 1),
    "imposition": (str, "reduce"),
    "formulation": (str, None),       # strain for the mixed imposition, else graddiv
    "eigs": (int, 6),
    "levels": (int, 5),
    "index": (int, 1),
    "eta": (float, 1e-8),
    "angle_tol": (float, None),
    "out": (str, "."),
    "deterministic": (bool, False),
    "vtk": (bool, False),
    "dump_matrices": (bool, False),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    domain: DomainSpec
    params: MaterialParams
    degree: int
    imposition: str
    formulation: str
    k_want: int
    levels: int
    index: int
    eta: float
    angle_tol: Optional[float]
    out: Path
    deterministic: bool
    vtk: bool
    dump_matrices: bool


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def _convert(key: str, value):
    typ = OPTIONS[key][0]
    if value is None or isinstance(value, typ):
        return value
    if typ is bool:
        low = str(value).lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"invalid boolean for {key}: {value!r}")
    try:
        return typ(value)
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key}: {value!r}") from exc


def build_config(args: argparse.Namespace) -> RunConfig:
    merged = {k: default for k, (_, default) in OPTIONS.items()}
    if args.config:
        merged.update({k: _convert(k, v) for k, v in read_config_file(args.config).items()})
    for k in OPTIONS:
        v = getattr(args, k, None)
        if v is not None and v is not False:
            merged[k] = _convert(k, v)
    tag = merged["domain"]
    if tag not in DOMAINS:
        raise ConfigError(f"unknown domain {tag!r}; choose from {', '.join(DOMAINS)}")
    n = merged["resolution"] or DEFAULT_RESOLUTION[tag]
    try:
        if tag.startswith("triangle"):
            verts = TRIANGLE_PRESETS["triangle_caption" if tag == "triangle_caption" else "triangle_prose"]
            domain = DomainSpec("triangle", n=n, vertices=verts, refinements=merged["refinements"])
        else:
            domain = DomainSpec(tag, n=n, a=merged["a"], b=merged["b"], R=merged["R"],
                                refinements=merged["refinements"])
        params = MaterialParams(merged["mu"], merged["lambda"], merged["rho"])
    except (MeshError, AssemblyError) as exc:
        raise ConfigError(str(exc)) from exc
    if merged["imposition"] not in IMPOSITION_NAMES:
        raise ConfigError(f"unknown imposition {merged['imposition']!r}")
    if merged["formulation"] is None:
        merged["formulation"] = "strain" if merged["imposition"] == "mixed" else "graddiv"
    if merged["formulation"] not in FORMULATION_NAMES:
        raise ConfigError(f"unknown formulation {merged['formulation']!r}")
    if merged["degree"] not in (1, 2):
        raise ConfigError("degree must be 1 or 2")
    if merged["eigs"] < 0 or merged["levels"] < 1 or merged["index"] < 1 or merged["eta"] < 0:
        raise ConfigError("eigs must be >= 0, levels and index >= 1, eta >= 0")
    return RunConfig(domain, params, merged["degree"], IMPOSITION_NAMES[merged["imposition"]],
                     FORMULATION_NAMES[merged["formulation"]], merged["eigs"], merged["levels"],
                     merged["index"], merged["eta"], merged["angle_tol"], Path(merged["out"]),
                     merged["deterministic"], merged["vtk"], merged["dump_matrices"])


def _thread_limit(cfg: RunConfig):
    limit = 1 if cfg.deterministic else None
    env = os.environ.get("JONES_THREADS")
    if env and limit is None:
        try:
            limit = max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"JONES_THREADS must be an integer, got {env!r}") from exc
    if limit is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=limit)


def _ensure_out(cfg: RunConfig) -> Path:
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
        probe = cfg.out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {cfg.out} is not writable: {exc}") from exc
    return cfg.out


def _solve(cfg: RunConfig, k_want: Optional[int] = None):
    mesh = build_mesh(cfg.domain)
    return solve_jones(mesh, cfg.params, cfg.degree, cfg.imposition, cfg.formulation,
                       max(1, cfg.k_want if k_want is None else k_want), eta=cfg.eta,
                       angle_tol=cfg.angle_tol, domain=cfg.domain)


def cmd_solve(cfg: RunConfig):
    out = _ensure_out(cfg)
    report = _solve(cfg)
    if not report.entries:
        print(f"warning: the constrained space on {cfg.domain.describe()} has no free "
              "degrees of freedom; the spectrum is empty", file=sys.stderr)
    (out / "report.json").write_text(report.to_json())
    (out / "spectrum.csv").write_text(report.to_csv())
    if cfg.vtk:
        from .vtk import export_mode
        for j, p in enumerate(report.pairs, start=1):
            export_mode(report.space, p.coeffs, out / f"mode_{j:03d}.vtk", f"mode {j} kappa {p.kappa:.17g}")
    if cfg.dump_matrices:
        _dump_matrices(cfg, out)
    for j, e in enumerate(report.entries, start=1):
        print(f"{j:3d}  kappa={e.kappa:.6g}  w2/pi2={e.w2 / np.pi ** 2:.6g}  {e.cls}")
    return report


def _dump_matrices(cfg: RunConfig, out: Path) -> None:
    from .assembly import assemble_form
    from .fespace import build_space

    space = build_space(build_mesh(cfg.domain), cfg.degree)
    form = "strain" if cfg.imposition == "mixed" else cfg.formulation
    K, M = assemble_form(space, cfg.params, form)
    write_coo(out / "K_full.coo", K)
    write_coo(out / "M_full.coo", M)


def cmd_convergence(cfg: RunConfig):
    from .postprocess import convergence_study

    out = _ensure_out(cfg)
    if cfg.levels < 3:
        raise ConfigError("a convergence study needs --levels >= 3")
    table = convergence_study(cfg.domain, cfg.params, cfg.degree, cfg.levels, cfg.index,
                              imposition=cfg.imposition, formulation=cfg.formulation, eta=cfg.eta)
    (out / "convergence.csv").write_text(table.to_csv())
    print(f"reference kappa_{cfg.index} = {table.kappa_ref:.10g} ({table.provenance})")
    for h, k, e, r in zip(table.h, table.kappa_h, table.errors, table.rates):
        print(f"h={h:.5g}  kappa_h={k:.10g}  e={e:.4e}  rate={'' if r is None else f'{r:.4f}'}")
    print(f"median rate {table.median_rate:.4f}")
    return table


def cmd_oracle(cfg: RunConfig):
    from .oracle import rectangle_mode, rectangle_spectrum, rigid_motion_basis

    out = _ensure_out(cfg)
    count = max(1, cfg.k_want)
    xs = np.linspace(0.0, 1.0, 11)
    if cfg.domain.is_rectangle_family:
        a, b, origin = cfg.domain.rectangle_box
        spec = rectangle_spectrum(a, b, cfg.params, count)
        lines = ["j,kind,m,l,w2,kappa,w2_over_pi2"]
        lines += [f"{j},{e.kind},{e.indices[0]},{e.indices[1]},{e.w2:.17g},{e.kappa:.17g},"
                  f"{e.w2 / np.pi ** 2:.17g}" for j, e in enumerate(spec, start=1)]
        (out / "oracle_spectrum.csv").write_text("\n".join(lines) + "\n")
        X, Y = np.meshgrid(origin[0] + a * xs, origin[1] + b * xs, indexing="ij")
        modes = [rectangle_mode(e.kind, *e.indices, a, b, cfg.params, origin) for e in spec]
        for j, e in enumerate(spec, start=1):
            print(f"{j:3d}  {e.kind}{e.indices}  kappa={e.kappa:.6g}  w2/pi2={e.w2 / np.pi ** 2:.6g}")
    elif cfg.domain.tag == "disk":
        R = cfg.domain.R
        r, t = np.meshgrid(R * xs, 2 * np.pi * xs[:-1], indexing="ij")
        X, Y = r * np.cos(t), r * np.sin(t)
        modes = rigid_motion_basis(("disk", R))
        (out / "oracle_spectrum.csv").write_text("j,kind,m,l,w2,kappa,w2_over_pi2\n0,rotation,0,0,0,0,0\n")
        print("  0  rigid rotation (y, -x)  kappa=0")
    else:
        raise ConfigError("the oracle command needs a rectangle-family domain or the disk")
    rows = ["j,x,y,u1,u2"]
    for j, mode in enumerate(modes, start=0 if cfg.domain.tag == "disk" else 1):
        u1, u2 = mode.field(X, Y)
        rows += [f"{j},{x:.17g},{y:.17g},{p:.17g},{q:.17g}"
                 for x, y, p, q in zip(X.ravel(), Y.ravel(), u1.ravel(), u2.ravel())]
    (out / "oracle_fields.csv").write_text("\n".join(rows) + "\n")


def cmd_export(cfg: RunConfig):
    from .vtk import export_mode, export_vtk

    out = _ensure_out(cfg)
    if cfg.k_want == 0:
        export_vtk(build_mesh(cfg.domain), out / "mesh.vtk", title=cfg.domain.describe())
        return None
    report = _solve(cfg)
    export_vtk(report.space.mesh, out / "mesh.vtk", title=cfg.domain.describe())
    for j, p in enumerate(report.pairs, start=1):
        export_mode(report.space, p.coeffs, out / f"mode_{j:03d}.vtk", f"mode {j} kappa {p.kappa:.17g}")
    return report


COMMANDS = {"solve": cmd_solve, "convergence": cmd_convergence, "oracle": cmd_oracle,
            "export": cmd_export}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jonesfem", description="Jones eigenmodes of 2D elastic bodies")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--domain", choices=DOMAINS)
        p.add_argument("--resolution", type=int, help="cells per unit length (boundary segments for the disk)")
        p.add_argument("--refinements", type=int)
        p.add_argument("--a", type=float)
        p.add_argument("--b", type=float)
        p.add_argument("--R", type=float)
        p.add_argument("--mu", type=float)
        p.add_argument("--lambda", dest="lambda", type=float)
        p.add_argument("--rho", type=float)
        p.add_argument("--degree", type=int, choices=(1, 2))
        p.add_argument("--imposition", choices=tuple(IMPOSITION_NAMES))
        p.add_argument("--formulation", choices=tuple(FORMULATION_NAMES))
        p.add_argument("--eigs", type=int)
        p.add_argument("--levels", type=int)
        p.add_argument("--index", type=int, help="1-based eigenvalue index for convergence")
        p.add_argument("--eta", type=float)
        p.add_argument("--angle-tol", dest="angle_tol", type=float)
        p.add_argument("--out")
        p.add_argument("--deterministic", action="store_true")
        p.add_argument("--vtk", action="store_true")
        p.add_argument("--dump-matrices", dest="dump_matrices", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = build_config(args)
        with _thread_limit(cfg), warnings.catch_warnings():
            warnings.simplefilter("always")
            COMMANDS[args.command](cfg)
    except (ConvergenceError, RuntimeError, np.linalg.LinAlgError) as exc:
        # LinAlgError derives from ValueError, so it is caught first
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, MeshError, AssemblyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
