"""Command-line front end.

Every command prints one JSON document (sorted keys, no timestamps) that
carries a ``provenance`` block: tool version, command, the resolved
configuration, tolerances and truncation residuals. Exit status is 0 on
success, 1 when a verdict fails, 2 on bad input and 3 on numerical failure;
errors go to stderr as ``{"error": ..., "type": ..., "exit_code": ...}``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import thread_count
from .construct import (ConstructedData, FamilyParams, assemble_family, curve_context,
                        default_params, to_json as constructed_json)
from .curve import CurveSpec, build_curve, build_cycles, period_matrix
from .dpw import (DEFAULT_H, Dresser, FrameGrid, ZGrid, cylinder_checks, extract_metric,
                  extract_potential, maurer_cartan, metric_from_plus, surface_mesh)
from .errors import CMCError, InputError
from .flows import codimension_bound
from .loops import LoopMatrix, identity
from .periods import (build_omega_q, check_sym_condition, check_torus, delaunay_phi,
                      genus1_coefficient, genus1_ratio, solve_q, transport_mismatch)
from .symmetry import (SymmetryData, build_chi, closing_test, cylinder_data, validate_necessary,
                       verify_translation)

COMMANDS = ("cylinder", "dress", "surface", "potential", "metric", "check-symmetry", "closing",
            "periods", "construct", "check-torus", "delaunay", "genus1-report", "finite-type")

TOLERANCES = {
    "frame": 1e-10,            # cylinder frame against the closed form
    "axis": 1e-6,              # cylinder distance to the axis
    "metric": 1e-8,            # cylinder u == 0
    "potential": 1e-10,        # cylinder f == E == 1
    "symmetry": 1e-6,          # F(z + q) = chi F(z)
    "periodicity": 1e-5,       # u(z + q) = u(z)
    "torus_integer": 1e-4,
    "torus_zero": 1e-6,
    "trivial": 1e-6,
}


class UsageError(InputError):
    pass


@dataclass
class RunConfig:
    command: str
    grid: tuple = (64, 64, 2.0)          # nx, ny, half extent
    center: tuple = (0.0, 0.0)
    N: int = 32
    r: float = 0.5
    H: float = DEFAULT_H
    lambda0: list = field(default_factory=lambda: [1.0])
    out: str | None = None
    figures: str | None = None
    hplus: str | None = None
    curve: str | None = None
    family: str | None = None
    options: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=lambda: dict(TOLERANCES))
    explicit: tuple = ()                 # names of settings given by the user

    def zgrid(self) -> ZGrid:
        nx, ny, w = self.grid
        cx, cy = self.center
        return ZGrid(cx + np.linspace(-w, w, int(nx)), cy + np.linspace(-w, w, int(ny)))

    def echo(self) -> dict:
        out = asdict(self)
        out.pop("tolerances")
        out["lambda0"] = [_enc(v) for v in self.lambda0]
        out["options"] = {k: _plain(v) for k, v in sorted(self.options.items())}
        out["explicit"] = sorted(self.explicit)
        out["grid"] = list(self.grid)
        out["center"] = list(self.center)
        return out


# ------------------------------------------------------------------ parsing
class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _complex(text) -> complex:
    if isinstance(text, (int, float, complex)):
        return complex(text)
    if isinstance(text, (list, tuple)) and len(text) == 2:
        return complex(float(text[0]), float(text[1]))
    if isinstance(text, dict):
        return complex(text.get("re", 0.0), text.get("im", 0.0))
    s = str(text).strip().replace(" ", "").replace("i", "j")
    try:
        return complex(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from None


def _complex_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [_complex(v) for v in text]
    return [_complex(v) for v in str(text).split(",") if v.strip()]


def _int_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _grid(text) -> tuple:
    vals = _int_list(text)
    if len(vals) == 1:
        vals = vals * 2
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("grid is NX,NY or N")
    return tuple(vals)


def _common(p: argparse.ArgumentParser, radius: bool = True):
    p.add_argument("--config", help="JSON file with option defaults (command line wins)")
    p.add_argument("--grid", type=_grid, help="lattice size NX,NY (default 64,64)")
    p.add_argument("--extent", type=float, help="half width of the z-square (default 2)")
    p.add_argument("--center", type=_complex, help="center of the z-square (default 0)")
    p.add_argument("--N", type=int, help="truncation degree (default 32)")
    if radius:
        p.add_argument("--r", type=float, help="inner radius of the loop annulus (default 0.5)")
    p.add_argument("--H", type=float, help="mean curvature (default -2)")
    p.add_argument("--lambda", dest="lambda0", type=_complex_list,
                   help="comma-separated spectral values on S^1 (default 1)")
    p.add_argument("--out", help="report path (.json) or mesh path (.obj)")
    p.add_argument("--figures", help="directory for PNG figures")
    p.add_argument("--tol", action="append", default=None, metavar="NAME=VALUE",
                   help="override a tolerance; repeatable")


def _seed_options(p):
    p.add_argument("--hplus", help="JSON file with a plus-loop")
    p.add_argument("--curve", help="curve JSON file or inline inner branch points '0.3+0.2j,-0.4'")
    p.add_argument("--family", help="JSON file with family parameters (curve, f_tilde, nu0, q or m)")
    p.add_argument("--r-factor", dest="r_factor", type=float, help="working radius / R0 (default 0.7)")
    p.add_argument("--m", type=_int_list, help="integers m_k selecting q")
    p.add_argument("--q", type=_complex, help="translation q")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cmcloops", description="CMC surfaces by dressing the cylinder.")
    parser.add_argument("--version", action="version", version=f"cmcloops {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "cylinder": "dress with h_plus = I and compare with the closed-form cylinder",
        "dress": "extended frames on a z-lattice",
        "surface": "Sym meshes (OBJ) for each lambda",
        "potential": "meromorphic potential f, E from the Birkhoff split",
        "metric": "conformal factor u and the sinh-Gordon residual",
        "check-symmetry": "verify F(z + q) = chi F(z) and u(z + q) = u(z)",
        "closing": "order of vanishing of beta^2 at lambda0",
        "periods": "periods of the normalized differentials",
        "construct": "h_plus and symmetry data from curve data",
        "check-torus": "torus condition for two translations",
        "delaunay": "common direction of the periods U_k",
        "genus1-report": "elliptic closed form and the no-torus ratio for genus 1",
        "finite-type": "triviality of the higher flows",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        _common(p, radius=name != "genus1-report")
        if name in ("cylinder",):
            continue
        if name in ("genus1-report",):
            p.add_argument("--r", dest="g1_r", type=float, help="modulus of the branch point (default 0.5)")
            p.add_argument("--phi", type=float, help="argument of the branch point (default 0)")
            continue
        _seed_options(p)
        if name == "dress":
            p.add_argument("--frames", action="store_true", help="include frame coefficients in the report")
        if name == "check-symmetry":
            p.add_argument("--cylinder", action="store_true", help="use the undressed cylinder")
            p.add_argument("--subgrid", type=int, help="points per axis for the check (default 16)")
        if name == "closing":
            p.add_argument("--cylinder", action="store_true", help="use the undressed cylinder")
        if name == "check-torus":
            p.add_argument("--q1", type=_complex)
            p.add_argument("--q2", type=_complex)
        if name == "finite-type":
            p.add_argument("--Ns", type=_int_list, help="flow indices (default g+1..g+4)")
        if name == "construct":
            p.add_argument("--hplus-out", dest="hplus_out", help="where to write h_plus JSON")
    return parser


_COMMON = ("grid", "extent", "center", "N", "r", "H", "lambda0", "out", "figures", "hplus", "curve",
           "family")


def parse_config(argv=None) -> RunConfig:
    """Parse argv (and an optional ``--config`` JSON file) into a validated RunConfig."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    ns = parser.parse_args(argv)
    given = {k: v for k, v in vars(ns).items() if v is not None and v is not False}
    file_vals = {}
    if ns.config:
        try:
            file_vals = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {ns.config}: {exc}") from None
        if not isinstance(file_vals, dict):
            raise UsageError("config file must hold a JSON object")
    file_vals = {("lambda0" if k == "lambda" else k.replace("-", "_")): v for k, v in file_vals.items()}
    merged = {**file_vals, **given}
    merged.pop("config", None)
    command = merged.pop("command")
    cfg = RunConfig(command=command)
    explicit = set()
    try:
        if "grid" in merged:
            g = _grid(merged.pop("grid"))
            cfg.grid = (g[0], g[1], cfg.grid[2])
            explicit.add("grid")
        if "extent" in merged:
            cfg.grid = (cfg.grid[0], cfg.grid[1], float(merged.pop("extent")))
            explicit.add("extent")
        if "center" in merged:
            c = _complex(merged.pop("center"))
            cfg.center = (c.real, c.imag)
        for key, conv in (("N", int), ("r", float), ("H", float)):
            if key in merged:
                setattr(cfg, key, conv(merged.pop(key)))
                explicit.add(key)
        if "lambda0" in merged:
            cfg.lambda0 = _complex_list(merged.pop("lambda0"))
            explicit.add("lambda0")
        for key in ("out", "figures", "hplus", "curve", "family"):
            if key in merged:
                v = merged.pop(key)
                setattr(cfg, key, v if isinstance(v, str) else json.dumps(v))
                explicit.add(key)
        tol = merged.pop("tol", None) or []
        if isinstance(tol, dict):
            tol = [f"{k}={v}" for k, v in tol.items()]
        tol = list(tol) + [f"{k}={v}" for k, v in (merged.pop("tolerances", None) or {}).items()]
        for item in tol:
            name, _, value = str(item).partition("=")
            if name not in TOLERANCES:
                raise UsageError(f"unknown tolerance {name!r}; known: {', '.join(sorted(TOLERANCES))}")
            cfg.tolerances[name] = float(value)
        for key in ("q", "q1", "q2"):
            if key in merged:
                merged[key] = _complex(merged[key])
        for key in ("m", "Ns"):
            if key in merged:
                merged[key] = _int_list(merged[key])
    except (argparse.ArgumentTypeError, ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    cfg.options = merged
    cfg.explicit = tuple(sorted(explicit | set(merged)))
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    nx, ny, w = cfg.grid
    if nx < 4 or ny < 4:
        raise UsageError(f"grid {nx}x{ny} too small; each size must be at least 4")
    if not w > 0:
        raise UsageError("extent must be positive")
    if cfg.N < 8:
        raise UsageError(f"N = {cfg.N} too small; need N >= 8")
    if not 0 < cfg.r < 1:
        raise UsageError(f"r = {cfg.r} must lie in (0, 1)")
    if cfg.H == 0:
        raise UsageError("H must be nonzero")
    if cfg.command == "construct" and not (cfg.curve or cfg.family):
        raise UsageError("construct requires --curve (or --family)")
    if cfg.command in ("periods", "check-torus", "delaunay") and not (cfg.curve or cfg.family):
        raise UsageError(f"{cfg.command} requires --curve")
    rf = cfg.options.get("r_factor")
    if rf is not None and not 0 < rf < 1:
        raise UsageError("r-factor must lie in (0, 1)")


# ------------------------------------------------------------- helpers
def _enc(z) -> list:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def _plain(v):
    if isinstance(v, complex):
        return _enc(v)
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def _finite_max(values) -> float | None:
    arr = np.abs(np.asarray(values))
    arr = arr[np.isfinite(arr)]
    return float(arr.max()) if arr.size else None


def read_curve(text: str) -> CurveSpec:
    """Curve from a JSON file, a JSON literal, or an inline list of inner branch points."""
    path = Path(text)
    if path.suffix == ".json" or path.is_file():
        try:
            obj = json.loads(path.read_text())
        except OSError as exc:
            raise UsageError(f"cannot read curve file {text}: {exc}") from None
    else:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError:
            obj = _complex_list(text)
        if isinstance(obj, (int, float)):
            obj = [obj]
    if isinstance(obj, dict):
        if "curve" in obj:
            obj = obj["curve"]
        return CurveSpec.from_json_dict(obj)
    return build_curve([_complex(v) for v in obj])


class Context:
    """Lazily built objects shared by the steps of one command."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self._data: ConstructedData | None = None
        self.truncation: dict = {}

    @property
    def has_curve(self) -> bool:
        return bool(self.cfg.curve or self.cfg.family)

    def family_params(self) -> FamilyParams:
        cfg, opts = self.cfg, self.cfg.options
        if cfg.family:
            try:
                obj = json.loads(Path(cfg.family).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read family file {cfg.family}: {exc}") from None
            fp = FamilyParams.from_json_dict(obj)
            if opts.get("q") is not None:
                fp = FamilyParams(fp.curve, opts["q"], None, fp.f_tilde, fp.nu0, fp.q_scale)
            return fp
        curve = read_curve(cfg.curve)
        kw = {}
        if opts.get("q") is not None:
            kw["q"] = opts["q"]
        elif opts.get("m") is not None:
            if len(opts["m"]) != curve.genus:
                raise UsageError(f"--m needs {curve.genus} integers")
            kw["m"] = tuple(opts["m"])
        return default_params(curve, **kw)

    def constructed(self) -> ConstructedData:
        if self._data is None:
            cfg = self.cfg
            N = cfg.N if "N" in cfg.explicit else None
            self._data = assemble_family(self.family_params(), cfg.options.get("r_factor") or 0.7, N)
            self.truncation["hplus_tail"] = float(self._data.hplus.tail_norm())
        return self._data

    def seed(self) -> tuple[str, LoopMatrix]:
        cfg = self.cfg
        if cfg.hplus:
            try:
                h = LoopMatrix.from_json(Path(cfg.hplus).read_text())
            except (OSError, json.JSONDecodeError, KeyError) as exc:
                raise UsageError(f"cannot read h_plus from {cfg.hplus}: {exc}") from None
            if "r" in cfg.explicit:
                h = h.with_radius(cfg.r)
            self.truncation["hplus_tail"] = float(h.tail_norm())
            return "hplus-file", h
        if self.has_curve:
            return "constructed", self.constructed().hplus
        return "cylinder", identity(cfg.r, cfg.N)

    def symmetry(self) -> SymmetryData:
        opts = self.cfg.options
        if opts.get("cylinder") or not self.has_curve:
            if opts.get("q") is None:
                raise UsageError("the cylinder needs --q")
            return cylinder_data(opts["q"], self.cfg.r, self.cfg.N)
        return self.constructed().sd

    def frames(self, grid: ZGrid | None = None) -> FrameGrid:
        label, h = self.seed()
        fg = Dresser(h, h.r, h.N).grid(grid or self.cfg.zgrid(), self.cfg.H)
        self.note_frames(fg)
        return fg

    def note_frames(self, fg: FrameGrid):
        prev = self.truncation.get("iwasawa_residual", 0.0)
        self.truncation["iwasawa_residual"] = max(prev, float(np.max(fg.residual)))
        prev = self.truncation.get("frame_unitarity", 0.0)
        self.truncation["frame_unitarity"] = max(prev, float(np.max(fg.unitarity)))
        n = np.arange(-fg.N, fg.N + 1)
        weight = np.maximum(fg.r ** n.astype(float), 1.0)
        mags = np.linalg.norm(fg.coeffs, axis=(-2, -1)) * weight
        edge = np.abs(n) >= fg.N - 1
        scale = max(float(mags.max()), 1e-300)
        self.truncation["frame_tail"] = max(self.truncation.get("frame_tail", 0.0),
                                            float(mags[..., edge].max() / scale))


def _paths(cfg: RunConfig, name: str) -> tuple[Path | None, Path | None]:
    """(json report path, png path) for a figure called ``name``."""
    out = Path(cfg.out) if cfg.out else None
    json_path = out if out is not None and out.suffix != ".obj" else None
    if cfg.figures:
        stem = out.stem if out is not None else cfg.command
        return json_path, Path(cfg.figures) / f"{stem}_{name}.png"
    if out is not None:
        return json_path, out.with_name(f"{out.stem}_{name}.png")
    return json_path, None


def _figure(cfg: RunConfig, name: str, draw, report: dict):
    _, png = _paths(cfg, name)
    if png is None:
        return
    from . import plotting
    with plotting.styled():
        ax = draw(plotting)
        plotting.save(ax, png)
    report.setdefault("figures", []).append(str(png))


# -------------------------------------------------------------- commands
def cmd_cylinder(cfg: RunConfig, ctx: Context) -> tuple[dict, int]:
    tol = cfg.tolerances
    checks, fg = cylinder_checks(cfg.zgrid(), cfg.r, cfg.N, cfg.H, cfg.lambda0[0])
    ctx.note_frames(fg)
    spread = max(abs(checks["axis_distance_mean"] - checks["axis_distance_expected"]),
                 checks["axis_distance_spread"])
    verdicts = {"frame": checks["frame_error"] < tol["frame"],
                "axis": spread < tol["axis"],
                "metric": checks["metric_max_abs"] < tol["metric"]}
    if "potential_E_dev" in checks:
        verdicts["potential"] = max(checks["potential_f_dev"], checks["potential_E_dev"]) < tol["potential"]
    report = {"checks": checks, "passed": verdicts}
    mesh = surface_mesh(fg, cfg.lambda0[0])
    _write_mesh(cfg, mesh, report)
    _figure(cfg, "mesh", lambda pl: pl.plot_mesh(mesh.vertices, mesh.faces, title="cylinder"), report)
    return report, 0 if all(verdicts.values()) else 1


def _write_mesh(cfg: RunConfig, mesh, report: dict, suffix: str = ""):
    if cfg.out and Path(cfg.out).suffix == ".obj":
        path = Path(cfg.out)
        if suffix:
            path = path.with_name(f"{path.stem}{suffix}{path.suffix}")
        path.parent.mkdir(parents=True, exist_ok=True)
        mesh.write_obj(path)
        report.setdefault("meshes", []).append(str(path))


def cmd_dress(cfg: RunConfig, ctx: Context) -> tuple[dict, int]:
    fg = ctx.frames()
    report = {"seed": ctx.seed()[0], "shape": list(fg.shape), "r": fg.r, "N": fg.N}
    if min(fg.shape) >= 7:
        mc = maurer_cartan(fg)
        report["maurer_cartan"] = {"off_band_tail": mc.tail, "reality": mc.reality}
    if cfg.options.get("frames"):
        report["frames"] = {"degrees": [-fg.N, fg.N],
                            "z": [_enc(z) for z in fg.grid.z.ravel()],
                            "coeffs": [[[[_enc(v) for v in row] for row in blk] for blk in cell]
                                       for cell in fg.coeffs.reshape(-1, 2 * fg.N + 1, 2, 2)]}
    return report, 0


def cmd_surface(cfg: RunConfig, ctx: Context) -> tuple[dict, int]:
    fg = ctx.frames()
    report = {"seed": ctx.seed()[0], "surfaces": []}
    many = len(cfg.lambda0) > 1
    for k, lam0 in enumerate(cfg.lambda0):
        mesh = surface_mesh(fg, lam0)
        report["surfaces"].append({"lambda": _enc(lam0), "vertices": int(len(mesh.vertices)),
                                   "faces": int(len(mesh.faces)),
                                   "bbox": [mesh.vertices.min(0).tolist(), mesh.vertices.max(0).tolist()]})
        _write_mesh(cfg, mesh, report, f"_{k}" if many else "")
        _figure(cfg, f"mesh{k}" if many else "mesh",
                lambda pl, m=mesh, l=lam0: pl.plot_mesh(m.vertices, m.faces, title=f"lambda = {l:.3g}"),
                report)
    return report, 0


def cmd_potential(cfg: RunConfig, ctx: Context) -> tuple[dict, int]:
    fg = ctx.frames()
    ps = extract_potential(fg)
    fa = np.abs(ps.f)[np.isfinite(ps.f)]
    report = {"seed": ctx.seed()[0], "E_minus_1_max": _finite_max(ps.E - 1),
              "f_abs_range": [float(fa.min()), float(fa.max())] if fa.size else None,
              "off_band": ps.off_band, "poles": [_enc(z) for z in ps.poles],
              "interior_samples": int(np.isfinite(ps.E).sum())}
    _figure(cfg, "f", lambda pl: pl.plot_field(np.abs(ps.f), fg.grid.z, label="|f|"), report)
    return report, 0


def cmd_metric(cfg: RunConfig, ctx: Context) -> tuple[dict, int]:
    fg = ctx.frames()
    ms = extract_metric(fg)
    report = {"seed": ctx.seed()[0], "u_range": [float(np.min(ms.u)), float(np.max(ms.u))],
              "sinh_gordon_residual": ms.max_residual,
              "u_vs_finite_difference": _finite_max(ms.u - ms.u_fd)}
    _figure(cfg, "u", lambda pl: pl.plot_field(ms.u, fg.grid.z, label="u"), report)
    return report, 0


def _subgrid(cfg: RunConfig, k: int) -> ZGrid:
    full = cfg.zgrid()
    pick = lambda arr: arr[np.unique(np.linspace(0, len(arr) - 1, min(len(arr), k)).round().astype(int))]
    return ZGrid(pick(full.xs), pick(full.ys))


def cmd_check_symmetry(cfg: RunConfig, ctx: Context) -> tuple[dict, int]:
    tol = cfg.tolerances
    sd = ctx.symmetry()
    use_cyl = cfg.options.get("cylinder") or not ctx.has_curve
    h = identity(sd.r, sd.N) if use_cyl else sd.hplus
    chi = build_chi(sd)
    cond = validate_necessary(sd)
    grid = _subgrid(cfg, cfg.options.get("subgrid") or 16)
    dresser = Dresser(h, h.r, h.N)
    fg = dresser.grid(grid, cfg.H)
    moved = dresser.grid(ZGrid(grid.xs + sd.q.real, grid.ys + sd.q.imag), cfg.H)
    ctx.note_frames(fg)
    ctx.note_frames(moved)
    tr = verify_translation(fg, sd.q, chi, shifted=moved)
    du = float(np.max(np.abs(metric_from_plus(moved) - metric_from_plus(fg))))
    ctx.truncation["chi_tail"] = max(chi.tail_low, chi.tail_high)
    ok = tr.residual < tol["symmetry"] and du < tol["periodicity"]
    report = {"q": _enc(sd.q), "source": "cylinder" if use_cyl else "constructed",
              "translation": tr.to_json_dict(), "metric_periodicity": du,
              "chi_unitarity": chi.unitarity, "conditions": cond.to_json_dict(), "passed": ok}
    return report, 0 if ok else 1


def cmd_closing(cfg: RunConfig, ctx: Context) -> tuple[dict, int]:
    sd = ctx.symmetry()
    results = []
    for lam0 in cfg.lambda0:
        if abs(abs(lam0) - 1) > 1e-12:
            raise UsageError(f"lambda0 = {lam0} is not on the unit circle")
        res = closing_test(lambda lam: sd.beta(lam) ** 2, lam0)
        results.append({"lambda0": _enc(lam0), **res.to_json_dict()})
    return {"q": _enc(sd.q), "results": results}, 0


def _period_block(ctx: Context) -> tuple[dict, object, object]:
    fp = ctx.family_params()
    cc = curve_context(fp.curve)
    return cc.report.to_json_dict(), cc, fp


def cmd_periods(cfg: RunConfig, ctx: Context) -> tuple[dict, int]:
    rep, cc, fp = _period_block(ctx)
    spec = fp.curve
    tau = period_matrix(spec, cc.hom)
    from .construct import resolve_q
    q = resolve_q(fp, cc.report.U)
    omega = build_omega_q(spec, q, cc.omega1, cc.omega2)
    sym = check_sym_condition(cc.report.U, q)
    tm = transport_mismatch(omega, cc.hom)
    report = {"genus": spec.genus, "curve": spec.to_json_dict(), "periods": rep,
              "omega1": cc.omega1.to_json_dict(), "omega2": cc.omega2.to_json_dict(),
              "riemann": {"tau": [[_enc(v) for v in row] for row in tau],
                          "asymmetry": float(np.max(np.abs(tau - tau.T))),
                          "im_tau_min_eig": float(np.min(np.linalg.eigvalsh(0.5 * (tau.imag + tau.imag.T))))},
              "q": _enc(q), "sym_condition": {"m": list(sym.m), "deviation": sym.deviation,
                                              "passed": sym.passed},
              "transport": tm.to_json_dict(), "delaunay_phi": delaunay_phi(cc.report.U)}
    cycles = [np.append(c.waypoints, c.waypoints[0]) for c in build_cycles(spec)]
    _figure(cfg, "cycles", lambda pl: pl.plot_branch_points(spec.inner_points, spec.outer_points,
                                                            cycles=cycles), report)
    return report, 0


def cmd_construct(cfg: RunConfig, ctx: Context) -> tuple[dict, int]:
    data = ctx.constructed()
    report = json.loads(constructed_json(data))
    out = Path(cfg.out) if cfg.out else None
    hpath = cfg.options.get("hplus_out") or (str(out.with_name(f"{out.stem}_hplus.json")) if out else None)
    if hpath:
        Path(hpath).parent.mkdir(parents=True, exist_ok=True)
        Path(hpath).write_text(data.hplus.to_json())
        report["hplus_path"] = hpath
    theta = np.linspace(0, 2 * np.pi, 512, endpoint=False)
    lam = np.exp(1j * theta)
    series = {"a^2": data.a2(lam ** 2), "beta^2": data.sd.beta(lam) ** 2}
    report["on_circle"] = {"a2_min": float(np.min(series["a^2"].real)),
                           "a2_max": float(np.max(series["a^2"].real)),
                           "beta2_max": float(np.max(series["beta^2"].real))}
    _figure(cfg, "circle", lambda pl: pl.plot_circle_values(theta, series), report)
    return report, 0


def _default_torus_pair(U) -> tuple[complex, complex]:
    U = np.asarray(U, dtype=complex)
    if len(U) == 1:
        u = U[0]
        return complex(u / abs(u) ** 2), complex(1j * np.pi * u / abs(u) ** 2)
    e = np.eye(len(U), dtype=int)
    return solve_q(U, e[0]), solve_q(U, e[1])


def cmd_check_torus(cfg: RunConfig, ctx: Context) -> tuple[dict, int]:
    _, cc, fp = _period_block(ctx)
    q1, q2 = cfg.options.get("q1"), cfg.options.get("q2")
    if q1 is None or q2 is None:
        d1, d2 = _default_torus_pair(cc.report.U)
        q1, q2 = (d1 if q1 is None else q1), (d2 if q2 is None else q2)
    lam0 = cfg.lambda0[0] if "lambda0" in cfg.explicit else None
    tv = check_torus(cc.omega1, q1, q2, cc.report.U, lam0, cfg.tolerances["torus_integer"],
                     cfg.tolerances["torus_zero"])
    report = {"genus": fp.curve.genus, "q1": _enc(q1), "q2": _enc(q2), **tv.to_json_dict()}
    return report, 0 if tv.verdict == "torus" else 1


def cmd_delaunay(cfg: RunConfig, ctx: Context) -> tuple[dict, int]:
    _, cc, fp = _period_block(ctx)
    phi = delaunay_phi(cc.report.U)
    report = {"genus": fp.curve.genus, "U": [_enc(u) for u in cc.report.U], "phi": phi,
              "delaunay": phi is not None}
    return report, 0 if phi is not None else 1


def cmd_genus1_report(cfg: RunConfig, ctx: Context) -> tuple[dict, int]:
    r = cfg.options.get("g1_r", 0.5)
    phi = cfg.options.get("phi", 0.0)
    if not 0 < r < 1:
        raise UsageError("--r must lie in (0, 1)")
    spec = build_curve([r * np.exp(1j * phi)])
    cc = curve_context(spec)
    b = cc.omega1.coeff(0)
    b_agm = genus1_coefficient(r, phi)
    rs = np.round(np.arange(1, 10) / 10, 10)
    ratios = np.array([genus1_ratio(x) for x in rs])
    q1, q2 = _default_torus_pair(cc.report.U)
    tv = check_torus(cc.omega1, q1, q2, cc.report.U, None, cfg.tolerances["torus_integer"],
                     cfg.tolerances["torus_zero"])
    report = {"r": r, "phi": phi, "nu1": _enc(spec.inner_points[0]),
              "b": _enc(b), "b_agm": _enc(b_agm), "b_error": float(abs(b - b_agm)),
              "abs_b_times_2": float(2 * abs(b)), "ratio": genus1_ratio(r),
              "table": [{"r": float(x), "ratio": float(v), "margin": float(v - 1)} for x, v in zip(rs, ratios)],
              "min_margin": float(np.min(ratios - 1)),
              "torus": tv.to_json_dict()}
    _figure(cfg, "ratio", lambda pl: pl.plot_ratio(rs, ratios), report)
    ok = tv.verdict == "no-torus" and bool(np.all(ratios > 1))
    return report, 0 if ok else 1


def cmd_finite_type(cfg: RunConfig, ctx: Context) -> tuple[dict, int]:
    if not ctx.has_curve:
        raise UsageError("finite-type requires --curve or --family")
    data = ctx.constructed()
    grid = cfg.zgrid() if "grid" in cfg.explicit else ZGrid.square(4, 0.5)
    out = codimension_bound(data.params.curve, data.sd, cfg.options.get("Ns"), grid)
    tol = cfg.tolerances["trivial"]
    worst = max(max(c["flow_residual"], c["metric_change"]) for c in out["certificates"])
    out["worst_residual"] = worst
    out["passed"] = bool(out["all_trivial"] and worst < tol)
    return out, 0 if out["passed"] else 1


HANDLERS = {name: globals()["cmd_" + name.replace("-", "_")] for name in COMMANDS}


# ----------------------------------------------------------------- driver
def dispatch(cfg: RunConfig) -> tuple[dict, int]:
    ctx = Context(cfg)
    report, status = HANDLERS[cfg.command](cfg, ctx)
    report["provenance"] = {"tool": "cmcloops", "version": __version__, "command": cfg.command,
                            "config": cfg.echo(), "tolerances": dict(sorted(cfg.tolerances.items())),
                            "truncation": dict(sorted(ctx.truncation.items())),
                            "threads_capped": thread_count() if "CMC_THREADS" in os.environ else None}
    return report, status


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_plain, allow_nan=True) + "\n"


def _fail(exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": str(exc), "type": type(exc).__name__, "exit_code": code},
                                sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
        report, status = dispatch(cfg)
    except CMCError as exc:
        return _fail(exc, exc.exit_code)
    except (ValueError, OSError) as exc:
        return _fail(exc, 2)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(exc, 3)
    text = _dump(report)
    json_path, _ = _paths(cfg, "report")
    if json_path is not None:
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(text)
    sys.stdout.write(text)
    return status


if __name__ == "__main__":
    raise SystemExit(main())
