"""Command line front end: ``nahm validate | field | ray | reduce | sweep``.

Every subcommand reads a JSON run configuration (or a bare ``nahm-data/1``
document) and writes a JSON report or a CSV table.  Exit codes: 0 pass,
1 verification failure, 2 usage or parse error.

Field CSV columns, in order::

    index, x1, x2, x3, re_phi_<a><b>, im_phi_<a><b> (row-major),
    eig_<j> (ascending imaginary parts), bogomolny, bogomolny_green,
    bogomolny_fd, dphi_green_vs_fd
"""
from __future__ import annotations

import io as _io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from . import __version__
from .asymptotics_reductions import check_so_symmetry, check_sp_symmetry, fit_mu_kappa, ray_profile
from .dirac_nahm import adjoint_residual, compute_fiber, fiber_grid
from .errors import ConfigParse, NahmError, TypeValidationError
from .grids import DEFAULT_NODES
from .io import from_document
from .monopole_fields import _bogo, field_sample, higgs
from .nahm_core import check_jump_data, check_pole_structure, lax_invariants, nahm_residual
from .report import CheckRecord, Report, content_hash
from .sbtype import SymmetryBreakingType, validate_framing, validate_type

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
REPORT_VERSION = "nahm-run/1"
ZETAS = (0.3 + 0.1j, -1.2 + 0.5j, 2.0 - 0.7j)


@dataclass
class RunConfig:
    document: dict
    doc_hash: str
    nodes: int = DEFAULT_NODES
    collar: float | None = None
    fd_step: str = "rel:1e-3"
    workers: int = 1
    seed: int = 0
    out: str | None = None
    grid: dict = field(default_factory=dict)
    points: list | None = None
    ray: dict = field(default_factory=dict)
    kinds: tuple = ("so", "sp")
    expect: dict | None = None
    sweep: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def tol(self, name: str, default: float) -> float:
        v = float(self.tolerances.get(name, default))
        if not v > 0:
            raise ConfigParse(f"tolerance {name} must be positive")
        return v


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigParse(f"cannot read {path}: {exc}") from exc


def load_config(path, overrides: dict) -> RunConfig:
    raw = _read_json(path)
    if not isinstance(raw, dict):
        raise ConfigParse("configuration must be a JSON object")
    if "type" in raw:
        doc, rest = raw, {}
    else:
        data = raw.get("data")
        if isinstance(data, str):
            data = _read_json(Path(path).parent / data)
        if not isinstance(data, dict):
            raise ConfigParse("configuration needs a 'data' document or path")
        doc, rest = data, raw
    kw = {k: rest[k] for k in ("nodes", "collar", "fd_step", "workers", "seed", "out", "grid", "points",
                               "ray", "expect", "sweep", "tolerances") if k in rest}
    if "kinds" in rest:
        kw["kinds"] = tuple(rest["kinds"])
    kw.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig(doc, content_hash(doc), **kw)
    if cfg.workers < 1 or cfg.nodes < 2:
        raise ConfigParse("workers must be >= 1 and nodes >= 2")
    return cfg


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _provenance(cfg: RunConfig, command: str) -> dict:
    import scipy
    return {"report_version": REPORT_VERSION, "command": command, "document_sha256": cfg.doc_hash,
            "versions": {"nahmtransform": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
            "nodes": cfg.nodes, "collar": cfg.collar, "fd_step": cfg.fd_step, "seed": cfg.seed}


def _pmap(fn, items, workers: int) -> list:
    def run(chunk):
        with threadpool_limits(1):
            return [fn(it) for it in chunk]

    if workers == 1:
        return run(items)
    chunks = [c for c in np.array_split(np.arange(len(items)), workers) if len(c)]
    parts = Parallel(n_jobs=workers)(delayed(run)([items[i] for i in c]) for c in chunks)
    return [r for part in parts for r in part]


def _fmt(v: float) -> str:
    return "%.12e" % v


# ------------------------------------------------------------ validate
def run_validate(cfg: RunConfig) -> tuple[Report, int]:
    rep = Report("validate", provenance=_provenance(cfg, "validate"))
    try:
        t = SymmetryBreakingType.from_dict(cfg.document["type"])
        validate_type(t)
    except TypeValidationError as exc:
        rep.add(CheckRecord("type", False, type(exc).__name__, None, details=str(exc)))
        return rep, EXIT_FAIL
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigParse(f"bad type block: {exc}") from exc
    rep.add(CheckRecord("type", True))
    try:
        nd = from_document(cfg.document)
    except ConfigParse:
        raise
    except NahmError as exc:
        rep.add(CheckRecord("build", False, type(exc).__name__, None, details=str(exc)))
        return rep, EXIT_FAIL
    fr = validate_framing(t, nd.framing)
    rep.add(CheckRecord("framing", fr.ok, fr.max_defect, None, details=fr.failures))
    tol = cfg.tol("nahm", 1e-8)
    for i, iv in enumerate(nd.intervals):
        s = iv.lo + iv.length * np.linspace(0.1, 0.9, 9)
        r = nahm_residual(nd, s)
        rep.add(CheckRecord(f"interval{i}.nahm_residual", r <= tol, r, tol))
        lax = lax_invariants(nd, ZETAS, s)
        scale = max(1.0, float(np.abs(lax.charpoly).max()))
        d = lax.coeff_drift / scale
        rep.add(CheckRecord(f"interval{i}.lax_drift", d <= tol, d, tol, details="relative charpoly drift"))
    rep.extend(check_pole_structure(nd), "poles")
    rep.extend(check_jump_data(nd), "jumps")
    return rep, EXIT_PASS if rep.ok else EXIT_FAIL


# ------------------------------------------------------------ field
def grid_points(cfg: RunConfig) -> np.ndarray:
    if cfg.points is not None:
        pts = np.asarray(cfg.points, dtype=float).reshape(-1, 3)
        return pts
    g = cfg.grid or {}
    lo, hi = g.get("bounds", [-2.0, 2.0])
    n = int(g.get("counts", 5))
    if n < 1:
        raise ConfigParse("grid counts must be >= 1")
    ax = np.linspace(lo, hi, n) if n > 1 else np.array([0.5 * (lo + hi)])
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)


def _field_row(args):
    i, x, nd, nodes, collar, step = args
    try:
        s = field_sample(nd, x, step, nodes, collar)
    except NahmError as exc:
        return i, None, f"point {i}: {type(exc).__name__}: {exc}"
    phi = s.phi
    cross = s.cross_dphi
    rg = _bogo(s.curvature, s.dphi)
    rf = _bogo(s.curvature_fd, s.dphi_fd)
    vals = list(x) + list(phi.real.ravel()) + list(phi.imag.ravel()) + list(s.eigenvalues) + [
        s.bogomolny_residual, rg, rf, cross]
    return i, vals, None


def field_header(N: int) -> list:
    h = ["index", "x1", "x2", "x3"]
    h += [f"re_phi_{a}{b}" for a in range(N) for b in range(N)]
    h += [f"im_phi_{a}{b}" for a in range(N) for b in range(N)]
    h += [f"eig_{j}" for j in range(N)]
    h += ["bogomolny", "bogomolny_green", "bogomolny_fd", "dphi_green_vs_fd"]
    return h


def run_field(cfg: RunConfig) -> tuple[str, Report, int]:
    nd = from_document(cfg.document)
    pts = grid_points(cfg)
    items = [(i, x, nd, cfg.nodes, cfg.collar, cfg.fd_step) for i, x in enumerate(pts)]
    rows = _pmap(_field_row, items, cfg.workers)
    rows.sort(key=lambda r: r[0])
    buf = _io.StringIO()
    buf.write(",".join(field_header(nd.N)) + "\n")
    rep = Report("field", provenance=_provenance(cfg, "field"))
    tol = cfg.tol("bogomolny", 1e-4)
    worst = 0.0
    for i, vals, err in rows:
        if err is not None:
            rep.add(CheckRecord(f"point{i}", False, None, None, details=err))
            continue
        buf.write(",".join([str(i)] + [_fmt(v) for v in vals]) + "\n")
        worst = max(worst, vals[-4])
    rep.add(CheckRecord("bogomolny_max", worst <= tol, worst, tol))
    return buf.getvalue(), rep, EXIT_PASS if rep.ok else EXIT_FAIL


# ------------------------------------------------------------ ray
def run_ray(cfg: RunConfig) -> tuple[Report, int]:
    nd = from_document(cfg.document)
    r = cfg.ray or {}
    dirs = np.asarray(r.get("directions", [[0.0, 0.0, 1.0]]), dtype=float).reshape(-1, 3)
    radii = r.get("radii", [4.0, 8.0, 16.0])
    expect = SymmetryBreakingType.from_dict(cfg.expect) if cfg.expect else nd.sbt
    rep = Report("ray", provenance=_provenance(cfg, "ray"))
    fits = []
    for j, d in enumerate(dirs):
        with threadpool_limits(1):
            prof = ray_profile(nd, d, radii, workers=cfg.workers)
        fit = fit_mu_kappa(prof)
        fits.append(fit.to_dict())
        rep.extend(fit.matches(expect), f"direction{j}")
    rep.provenance["fits"] = fits
    return rep, EXIT_PASS if rep.ok else EXIT_FAIL


# ------------------------------------------------------------ reduce
def run_reduce(cfg: RunConfig) -> tuple[Report, int]:
    nd = from_document(cfg.document)
    rep = Report("reduce", provenance=_provenance(cfg, "reduce"))
    tol = cfg.tol("symmetry", 1e-8)
    for kind in cfg.kinds:
        fn = {"so": check_so_symmetry, "sp": check_sp_symmetry}.get(kind)
        if fn is None:
            raise ConfigParse(f"unknown reduction kind {kind!r}")
        try:
            rep.extend(fn(nd, tol=tol), kind)
        except NahmError as exc:
            rep.add(CheckRecord(f"{kind}.preconditions", False, type(exc).__name__, None, details=str(exc)))
    return rep, EXIT_PASS if rep.ok else EXIT_FAIL


# ------------------------------------------------------------ sweep
def _sweep_row(args):
    i, x, nd, nodes, collar = args
    try:
        f = compute_fiber(nd, x, grid=fiber_grid(nd, x, nodes, collar))
    except NahmError as exc:
        return i, None, f"row {i}: {type(exc).__name__}: {exc}"
    ev = np.sort(np.linalg.eigvalsh(-1j * higgs(nd, f)))
    return i, [nodes] + list(x) + list(ev) + [f.gap, f.gram_residual, adjoint_residual(nd, f)], None


def run_sweep(cfg: RunConfig) -> tuple[str, Report, int]:
    """Higgs spectra and fiber diagnostics over points and resolutions."""
    nd = from_document(cfg.document)
    pts = grid_points(cfg)
    nodes = cfg.sweep.get("nodes", [cfg.nodes])
    items = [(k, x, nd, int(p), cfg.collar) for k, (p, x) in enumerate((p, x) for p in nodes for x in pts)]
    rows = sorted(_pmap(_sweep_row, items, cfg.workers), key=lambda r: r[0])
    head = ["index", "nodes", "x1", "x2", "x3"] + [f"eig_{j}" for j in range(nd.N)] + [
        "kernel_gap", "gram_residual", "adjoint_residual"]
    buf = _io.StringIO()
    buf.write(",".join(head) + "\n")
    rep = Report("sweep", provenance=_provenance(cfg, "sweep"))
    for i, vals, err in rows:
        if err is not None:
            rep.add(CheckRecord(f"row{i}", False, None, None, details=err))
            continue
        buf.write(",".join([str(i), str(int(vals[0]))] + [_fmt(v) for v in vals[1:]]) + "\n")
    rep.add(CheckRecord("rows", len(rep.failures()) == 0, len(rows), None))
    return buf.getvalue(), rep, EXIT_PASS if rep.ok else EXIT_FAIL


# ------------------------------------------------------------ click
def _options(fn):
    opts = [
        click.option("--config", "config", required=True, type=click.Path(dir_okay=False)),
        click.option("--out", "out", default=None, type=click.Path(dir_okay=False)),
        click.option("--workers", type=int, default=None),
        click.option("--nodes", type=int, default=None, help="Gauss nodes per panel."),
        click.option("--collar", type=float, default=None, help="Relative collar width."),
        click.option("--fd-step", "fd_step", default=None, help="rel:C or abs:H"),
        click.option("--seed", type=int, default=None),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


def _run(command: str, **kw) -> None:
    path = kw.pop("config")
    try:
        cfg = load_config(path, kw)
        if command == "validate":
            rep, code = run_validate(cfg)
            _emit(rep.to_json() + "\n", cfg.out)
        elif command in ("field", "sweep"):
            text, rep, code = (run_field if command == "field" else run_sweep)(cfg)
            _emit(text, cfg.out)
            if cfg.out:
                Path(cfg.out).with_suffix(".report.json").write_text(rep.to_json() + "\n")
            elif not rep.ok:
                click.echo(rep.to_json(), err=True)
        else:
            rep, code = (run_ray if command == "ray" else run_reduce)(cfg)
            _emit(rep.to_json() + "\n", cfg.out)
    except ConfigParse as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    except NahmError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_FAIL)
    sys.exit(code)


@click.group()
@click.version_option(__version__)
def main():
    """Numerical Nahm transform."""


@main.command()
@_options
def validate(**kw):
    """Check the type, framing, Nahm equations, poles, jumps and Lax invariants."""
    _run("validate", **kw)


@main.command()
@_options
def field(**kw):
    """Field samples over a grid as CSV."""
    _run("field", **kw)


@main.command()
@_options
def ray(**kw):
    """Fit the symmetry breaking type from ray profiles."""
    _run("ray", **kw)


@main.command()
@_options
def reduce(**kw):
    """Real and quaternionic structure checks."""
    _run("reduce", **kw)


@main.command()
@_options
def sweep(**kw):
    """Spectra and fiber diagnostics over points and resolutions."""
    _run("sweep", **kw)


if __name__ == "__main__":
    main()
