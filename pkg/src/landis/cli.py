"""Command-line harness: one subcommand per experiment, CSV out, exit codes 0/1/2.

Config files are flat ``key = value`` text (TOML-compatible for scalars and
lists); command-line flags override them.  Exit 0 means every checked
invariant held, 1 means one failed (``failure.json`` names it), 2 means the
configuration could not be used.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import dbar as dbar_mod
from .exterior import (CutoffGeometry, TermConstants, bessel_exterior_sample, carleman_verify, exterior_pipeline,
                       random_test_function, rhs_terms, tau_schedule)
from .grid import GridSpec, ScalarField, read_csv, sup_norm, write_csv
from .multiplier import (Multiplier, PotentialPair, build_multiplier, constant_potential, half_plane_potential,
                         lipschitz_constant, random_potential, solve_dirichlet)
from .order import default_radii, empirical_order, vanishing_order_bound
from .reduction import reduce_divergence_form, reduce_exterior
from .scaling import EntireSample, exponential_sample, harmonic_sample, landis_curve

log = logging.getLogger("landis")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

DESCRIPTIONS = {
    "multiplier": "positive multiplier for the adjoint equation, with its two-sided exponential bounds",
    "cauchy": "Cauchy transform inverting d-bar, optionally anchored at a point",
    "reduce": "reduction of a real solution to a d-bar system g = phi^2 v + i vtilde",
    "order": "certified vanishing-order bound E ~ C (sqrt M + K) from three-circle certificates",
    "scale": "rescaling entire solutions into decay bounds exp(-C R log R)",
    "exterior": "term budget and certified decay exp(-C R (log R)^2) for exterior solutions",
    "carleman": "Carleman inequality for the weight -tau log|z| + |z|^2",
    "list": "print this table",
}

# allowed config keys per subcommand (flat namespace)
SCHEMA = {
    "multiplier": {"family": str, "M": float, "K": float, "seed": int, "potential_csv": str, "solver": str,
                   "grid_n": int, "tol": float, "drift": bool},
    "cauchy": {"input": str, "anchor": list, "rule": str, "grid_n": int},
    "reduce": {"u": str, "multiplier": str, "M": float, "K": float, "exterior": list},
    "order": {"family": str, "degree": int, "M": list, "K": float, "seeds": list, "r": float, "C0": float,
              "equation": str, "grid_n": int, "seed": int, "tol": float},
    "scale": {"family": str, "R_list": list, "A": float, "degree": int, "u_csv": str, "V_csv": str,
              "C0": float, "n_angles": int, "grid_n": int, "seed": int},
    "exterior": {"A": float, "R_list": list, "Ctilde": float, "C0": float, "pipeline": bool, "grid_n": int,
                 "seed": int},
    "carleman": {"count": int, "tau_list": list, "grid_n": int, "seed": int, "tolerance": float},
}


class ConfigError(Exception):
    pass


class InvariantFailure(Exception):
    def __init__(self, invariant: str, **details):
        super().__init__(invariant)
        self.invariant = invariant
        self.details = details


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(fmt(obj)) if np.isfinite(obj) else str(float(obj))
    return obj


def write_json(path: Path, data) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_value(raw: str, kind):
    s = raw.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        s = s[1:-1]
    try:
        if kind is bool:
            if s.lower() in ("true", "1", "yes"):
                return True
            if s.lower() in ("false", "0", "no"):
                return False
            raise ValueError(s)
        if kind is list:
            s = s.strip("[]")
            return [float(p) for p in s.split(",") if p.strip()]
        return kind(s)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {raw!r} as {kind.__name__}") from exc


def load_config(path: str | None, command: str) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[config]\n" + p.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    schema = SCHEMA[command]
    out = {}
    for key, raw in cp["config"].items():
        key_n = key.replace("-", "_")
        if key_n not in schema:
            raise ConfigError(f"unknown key {key!r} for {command}")
        out[key_n] = _parse_value(raw, schema[key_n])
    return out


def _settings(args, command: str) -> dict:
    cfg = load_config(args.config, command)
    for key in SCHEMA[command]:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.grid_n is not None:
        cfg["grid_n"] = args.grid_n
    if args.tol is not None:
        cfg["tol"] = args.tol
    for key in ("tol", "tolerance"):
        if key in cfg and not cfg[key] > 0:
            raise ConfigError(f"{key} must be positive")
    if "grid_n" in cfg and cfg["grid_n"] < 16:
        raise ConfigError("grid_n must be at least 16")
    return cfg


def _threads() -> int:
    raw = os.environ.get("LANDIS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"LANDIS_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError("LANDIS_THREADS must be at least 1")
    return n


def _pmap(fn, items):
    """Ordered map over a thread pool capped by ``LANDIS_THREADS``."""
    n = _threads()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _list_arg(text: str) -> list:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


# ---------------------------------------------------------------- subcommands


def _potential(cfg: dict, grid: GridSpec) -> PotentialPair:
    fam = cfg.get("family", "constant")
    M, K = float(cfg.get("M", 1.0)), float(cfg.get("K", 1.0))
    if fam == "constant":
        return constant_potential(grid, M, K)
    if fam == "half-plane":
        return half_plane_potential(grid, M, K)
    if fam == "random":
        return random_potential(grid, M, K, seed=int(cfg.get("seed", 0)), with_drift=bool(cfg.get("drift", True)))
    if fam == "csv":
        if "potential_csv" not in cfg:
            raise ConfigError("family=csv needs potential_csv")
        V = read_csv(cfg["potential_csv"])
        return PotentialPair(ScalarField(V.grid, V.values, V.mask), None, max(M, sup_norm(V)), K)
    raise ConfigError(f"unknown potential family {fam!r}")


def cmd_multiplier(cfg: dict, out: Path) -> dict:
    grid = GridSpec(n=int(cfg.get("grid_n", 128)))
    P = _potential(cfg, grid)
    tol = float(cfg.get("tol", 1e-10))
    m = build_multiplier(P, tol=tol, solver=cfg.get("solver", "direct"))
    write_csv(m.phi, out / "phi.csv")
    write_csv(m.psi, out / "psi.csv")
    psi = m.psi.masked()
    lam = P.lam
    report = {"M": P.M, "K": P.K, "lam": lam, "psi_min": float(psi.min()), "psi_max": float(psi.max()),
              "residual": m.residual, "residual_limit": 10 * tol / grid.h**2,
              "lipschitz": lipschitz_constant(m), "iterations": m.iterations}
    write_json(out / "report.json", report)
    if psi.min() < -2 * lam - 1e-9 or psi.max() > 2 * lam + 1e-9:
        raise InvariantFailure("multiplier-sandwich", psi_min=psi.min(), psi_max=psi.max(), bound=2 * lam)
    if m.residual > 10 * tol / grid.h**2:
        raise InvariantFailure("multiplier-residual", residual=m.residual, limit=10 * tol / grid.h**2)
    return report


def cmd_cauchy(cfg: dict, out: Path) -> dict:
    if "input" in cfg:
        f = read_csv(cfg["input"])
    else:
        grid = GridSpec(n=int(cfg.get("grid_n", 128)))
        f = ScalarField(grid, np.where(grid.disc_mask(0j, 1.0), 1.0, 0.0), grid.mask)
    q = dbar_mod.CauchyQuadrature(f.grid, cfg.get("rule", "exact-cell"))
    if "anchor" in cfg:
        anchor = cfg["anchor"]
        if len(anchor) != 2:
            raise ConfigError("anchor must be x,y")
        w = dbar_mod.anchored_cauchy_transform(f, tuple(anchor), q)
        target = f.with_values(-f.values)
    else:
        w = dbar_mod.cauchy_transform(f, q)
        target = f
    write_csv(w, out / "w.csv")
    r_in = 0.8 * f.grid.radius
    report = {"residual_inner": dbar_mod.dbar_residual(w, target, r_in), "inner_radius": r_in,
              "sup_w": sup_norm(w), "kernel_bound": dbar_mod.transform_bound(f), "h": f.h}
    write_json(out / "report.json", report)
    if report["sup_w"] > report["kernel_bound"] * (1 + 1e-9):
        raise InvariantFailure("cauchy-kernel-bound", **report)
    return report


def cmd_reduce(cfg: dict, out: Path) -> dict:
    for key in ("u", "multiplier"):
        if key not in cfg:
            raise ConfigError(f"reduce needs --{key}")
    u = read_csv(cfg["u"])
    phi = read_csv(cfg["multiplier"])
    if phi.grid != u.grid:
        raise ConfigError("u and the multiplier must share a grid")
    m = Multiplier.from_phi(ScalarField(phi.grid, phi.values, phi.mask), float(cfg.get("M", 1.0)),
                            float(cfg.get("K", 1.0)))
    us = ScalarField(u.grid, u.values, u.mask)
    if "exterior" in cfg:
        A, R = cfg["exterior"]
        rs, diag = reduce_exterior(us, m, CutoffGeometry(A, R))
    else:
        rs, diag = reduce_divergence_form(us, m), {}
    write_csv(rs.g, out / "g.csv")
    write_csv(rs.coeff, out / "coeff.csv")
    report = {"dbar_residual": rs.residual, **diag}
    write_json(out / "report.json", report)
    return report


def _order_solution(cfg: dict, grid: GridSpec, M: float, K: float, seed: int):
    fam = cfg.get("family", "harmonic")
    n = int(cfg.get("degree", 3))
    if fam == "harmonic":
        P = constant_potential(grid, 1.0, K, value=0.0)
        return P, ScalarField.sample(grid, lambda x, y: np.real((x + 1j * y) ** n))
    if fam == "exp":
        P = constant_potential(grid, M, K)
        k = np.sqrt(M)
        return P, ScalarField.sample(grid, lambda x, y: np.exp(k * x))
    if fam == "random":
        P = random_potential(grid, M, K, seed=seed, with_drift=False)
        u = solve_dirichlet(P, lambda x, y: np.real((x + 1j * y) ** n) + 1.0)
        s = sup_norm(u, (0, 0), 1.0)
        return P, ScalarField(grid, u.values / s, u.mask)
    raise ConfigError(f"unknown order family {fam!r}")


def cmd_order(cfg: dict, out: Path) -> dict:
    grid = GridSpec(n=int(cfg.get("grid_n", 256)))
    Ms = cfg.get("M", [1.0])
    K = float(cfg.get("K", 1.0))
    seeds = [int(s) for s in cfg.get("seeds", [cfg.get("seed", 0)])]
    r = float(cfg.get("r", 0.1))
    C0 = float(cfg.get("C0", 10.0))
    eq = cfg.get("equation", "divergence")
    jobs = [(float(M), seed) for M in Ms for seed in seeds]

    def run(job):
        M, seed = job
        P, u = _order_solution(cfg, grid, M, K, seed)
        est = vanishing_order_bound(u, P, C0, r, equation=eq)
        emp = empirical_order(u, default_radii(u, 6, 0.5))
        return M, K, seed, est, emp

    results = _pmap(run, jobs)
    rows = [(M, K_, seed, e.exponent, emp, e.certificate.slack, e.certificate.premultiplier)
            for M, K_, seed, e, emp in results]
    write_table(out / "certificate.csv", ("M", "K", "seed", "E_certified", "E_empirical", "slack", "premultiplier"),
                rows)
    report = {"rows": len(rows), "r": r}
    for M, K_, seed, e, emp in results:
        if not e.valid:
            raise InvariantFailure("certificate-validity", M=M, seed=seed, residuals=e.residuals)
        if e.measured_sup is not None and np.log(e.measured_sup) < e.exponent * np.log(r) - 1e-9:
            raise InvariantFailure("certificate-soundness", M=M, seed=seed, E=e.exponent,
                                   measured=e.measured_sup)
    write_json(out / "report.json", report)
    return report


def _scale_family(cfg: dict):
    fam = cfg.get("family", "exp")
    n_max = int(cfg.get("grid_n", 512))
    if fam == "exp":
        return lambda R: exponential_sample(R, -1.0, n_max)
    if fam == "harmonic":
        d = int(cfg.get("degree", 3))
        return lambda R: harmonic_sample(R, d, n_max)
    if fam == "csv":
        if "u_csv" not in cfg or "V_csv" not in cfg:
            raise ConfigError("family=csv needs u_csv and V_csv")
        u = read_csv(cfg["u_csv"])
        V = read_csv(cfg["V_csv"])
        s = EntireSample(ScalarField(u.grid, u.values, u.mask), ScalarField(V.grid, V.values, V.mask), None,
                         float(cfg.get("C0", 1.0)), name="csv")
        return lambda R: s
    raise ConfigError(f"unknown scale family {fam!r}")


def cmd_scale(cfg: dict, out: Path) -> dict:
    R_list = [float(R) for R in cfg.get("R_list", [4, 8, 16, 32])]
    curve = landis_curve(_scale_family(cfg), R_list, float(cfg.get("A", 2.0)),
                         n_angles=int(cfg.get("n_angles", 64)))
    rows = [(p.R, p.measured, p.certified, p.log_certified, p.exponent, p.source) for p in curve.points]
    write_table(out / "landis_curve.csv",
                ("R", "measured_infsup", "certified_bound", "log_certified_bound", "exponent", "source"), rows)
    report = {"family": curve.family, "A": curve.A, "fitted_constant": curve.fitted_constant}
    write_json(out / "report.json", report)
    for p in curve.points:
        if not p.sound:
            raise InvariantFailure("landis-soundness", R=p.R, measured=p.measured, log_certified=p.log_certified)
    return report


def cmd_exterior(cfg: dict, out: Path) -> dict:
    A = float(cfg.get("A", 2.0))
    Ct = float(cfg.get("Ctilde", 5.0))
    C0 = float(cfg.get("C0", 1.0))
    R_list = [float(R) for R in cfg.get("R_list", [10, 100, 1000])]
    header = ("R", "tau", "lhs", "term1", "term2", "term3", "term4", "certified_bound",
              "log_lhs", "log_term1", "log_term2", "log_term3", "log_term4", "log_certified_bound")
    rows, logs = [], []
    if cfg.get("pipeline", False):
        u, V = bessel_exterior_sample()
        n = int(cfg.get("grid_n", 512))
        try:
            results = _pmap(lambda R: exterior_pipeline(u, V, A, R, Ct, n=n), R_list)
        except RuntimeError as exc:
            raise InvariantFailure("exterior-absorption", message=str(exc)) from exc
        for res in results:
            t = res.terms
            lt = list(t.log_terms)
            ll = res.measured["log_lhs_floor"]
            lc = res.log_certified_sup
            with np.errstate(over="ignore", under="ignore"):
                rows.append((res.R, res.tau, np.exp(ll), *np.exp(lt), np.exp(lc), ll, *lt, lc))
            if not res.sound:
                raise InvariantFailure("exterior-soundness", R=res.R, log_certified=lc,
                                       measured=res.measured_sup)
    else:
        for R in R_list:
            geom = CutoffGeometry(A, R)
            tau = tau_schedule(A, R, Ct)
            t = rhs_terms(geom, tau, None, TermConstants(), C0)
            lt = list(t.log_terms)
            # term (i) with unit origin integral is K1; sup >= sqrt(C0 / (2 pi K1))
            lc = 0.5 * (np.log(C0) - np.log(2 * np.pi) - lt[0])
            with np.errstate(over="ignore", under="ignore"):
                rows.append((R, tau, np.exp(t.log_lhs), *np.exp(lt), np.exp(lc), t.log_lhs, *lt, lc))
            logs.append((R, A, lt))
    write_table(out / "exterior_terms.csv", header, rows)
    report = {"A": A, "Ctilde": Ct, "R_list": R_list}
    write_json(out / "report.json", report)
    for k in (1, 2, 3):
        seq = [lt[k] for _, _, lt in logs]
        if any(b >= a for a, b in zip(seq, seq[1:])):
            raise InvariantFailure("exterior-term-decay", term=k + 1, log_values=seq)
    for R, A_, lt in logs:
        if lt[3] > -Ct * np.log(A_ * R) + np.log(1.01):
            raise InvariantFailure("exterior-term4-bound", R=R, log_term4=lt[3], bound=-Ct * np.log(A_ * R))
    return report


def cmd_carleman(cfg: dict, out: Path) -> dict:
    grid = GridSpec(radius=1.5, n=int(cfg.get("grid_n", 192)))
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    count = int(cfg.get("count", 50))
    taus = [float(t) for t in cfg.get("tau_list", [10, 20, 40])]
    tol = float(cfg.get("tolerance", 20.0))
    fns = [random_test_function(grid, rng) for _ in range(count)]
    rows = []
    for k, h in enumerate(fns):
        for tau in taus:
            c = carleman_verify(h, tau)
            rows.append((k, tau, c.lhs, c.rhs, c.log_scale, c.ratio))
    write_table(out / "carleman.csv", ("case", "tau", "lhs", "rhs", "log_scale", "ratio"), rows)
    worst = min(r[-1] for r in rows)
    report = {"cases": len(rows), "min_ratio": worst, "limit": 1 - tol * grid.h}
    write_json(out / "report.json", report)
    if worst < 1 - tol * grid.h:
        raise InvariantFailure("carleman-inequality", min_ratio=worst, limit=1 - tol * grid.h)
    return report


COMMANDS = {
    "multiplier": cmd_multiplier, "cauchy": cmd_cauchy, "reduce": cmd_reduce, "order": cmd_order,
    "scale": cmd_scale, "exterior": cmd_exterior, "carleman": cmd_carleman,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--grid-n", dest="grid_n", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="landis", description="Quantitative unique continuation experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("multiplier", parents=[common], help=DESCRIPTIONS["multiplier"])
    p.add_argument("--family", choices=("constant", "half-plane", "random", "csv"))
    p.add_argument("--M", type=float)
    p.add_argument("--K", type=float)
    p.add_argument("--solver", choices=("direct", "gauss-seidel"))
    p.add_argument("--potential-csv", dest="potential_csv")
    p = sub.add_parser("cauchy", parents=[common], help=DESCRIPTIONS["cauchy"])
    p.add_argument("--input")
    p.add_argument("--anchor", type=_list_arg)
    p.add_argument("--rule", choices=("exact-cell", "polar-corrected"))
    p = sub.add_parser("reduce", parents=[common], help=DESCRIPTIONS["reduce"])
    p.add_argument("--u")
    p.add_argument("--multiplier")
    p.add_argument("--M", type=float)
    p.add_argument("--K", type=float)
    p.add_argument("--exterior", type=_list_arg, help="A,R")
    p = sub.add_parser("order", parents=[common], help=DESCRIPTIONS["order"])
    p.add_argument("--family", choices=("harmonic", "exp", "random"))
    p.add_argument("--degree", type=int)
    p.add_argument("--r", type=float)
    p.add_argument("--equation", choices=("divergence", "gradient"))
    p = sub.add_parser("scale", parents=[common], help=DESCRIPTIONS["scale"])
    p.add_argument("--family", choices=("exp", "harmonic", "csv"))
    p.add_argument("--R-list", dest="R_list", type=_list_arg)
    p.add_argument("--A", type=float)
    p = sub.add_parser("exterior", parents=[common], help=DESCRIPTIONS["exterior"])
    p.add_argument("--A", type=float)
    p.add_argument("--R-list", dest="R_list", type=_list_arg)
    p.add_argument("--Ctilde", type=float)
    p.add_argument("--C0", type=float)
    p.add_argument("--pipeline", action="store_const", const=True)
    p = sub.add_parser("carleman", parents=[common], help=DESCRIPTIONS["carleman"])
    p.add_argument("--count", type=int)
    p.add_argument("--tau-list", dest="tau_list", type=_list_arg)
    sub.add_parser("list", help=DESCRIPTIONS["list"])
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command == "list":
        width = max(map(len, DESCRIPTIONS))
        for name, text in DESCRIPTIONS.items():
            print(f"{name:<{width}}  {text}")
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _settings(args, args.command)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report = COMMANDS[args.command](cfg, out)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantFailure as exc:
        failure = {"status": "fail", "command": args.command, "invariant": exc.invariant, "details": exc.details}
        write_json(Path(args.out) / "failure.json", failure)
        print(json.dumps(_jsonable(failure), sort_keys=True), file=sys.stderr)
        return EXIT_FAIL
    print(json.dumps(_jsonable({"status": "ok", "command": args.command, **report}), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
