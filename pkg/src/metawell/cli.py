"""Command-line interface: analyze, spectra, rates, optimization, validation.

All commands read JSON configs and write machine-readable outputs (JSON
summaries, CSV tables) plus a run manifest into --out.  Exit codes: 0 on
success, 2 when a validate-* command finds an oracle disagreement beyond its
embedded tolerance, 1 on configuration or runtime errors.

Rates are reported in the time units of the overdamped dynamics
dX = -grad V dt + sqrt(2/beta) dW (unit friction).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, fdsolver, harmonic, kramers, laplace, optimizer, potentials, qsdmc
from .errors import MetawellError, ConfigError


@dataclass
class RunManifest:
    """Reproducibility record written next to every command's outputs."""

    command: str
    argv: list
    version: str = __version__
    config_paths: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def write(self, out_dir: str) -> str:
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, indent=2, default=str)
        return path


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _write_csv(path: str, rows: list, fieldnames: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fieldnames})


def _is_flat(model) -> bool:
    lo, hi = model.search_box[:, 0], model.search_box[:, 1]
    pts = np.linspace(lo, hi, 17)
    return float(np.max(np.abs(model.gradient_many(pts)))) < 1e-14


def _build_catalog_or_flat(cfg: dict, args) -> tuple:
    """(model, catalog); catalog is None for a flat potential (no critical
    points), in which case validate commands fall back to Laplacian targets."""
    model = potentials.from_config(cfg)
    if _is_flat(model):
        return model, None
    return _build_catalog(cfg, args)


def _build_catalog(cfg: dict, args) -> tuple:
    model = potentials.from_config(cfg)
    if getattr(args, "catalog", None):
        catalog = potentials.CriticalCatalog.from_dict(_load_json(args.catalog))
        if catalog.z0 is None:
            raise ConfigError("catalog file is missing the classification fields")
        # rebuild the flow oracle against the live model
        catalog.basin_oracle = lambda x: potentials.flow_to_minimum(model, x, catalog)
        return model, catalog
    seeds = getattr(args, "seeds", None)
    raw = potentials.find_critical_points(model, seeds=seeds)
    z0 = cfg.get("z0")
    if z0 is None:
        minima = raw.minima
        z0_idx = min(minima, key=lambda i: (raw.points[i].energy, i))
    else:
        target = np.atleast_1d(np.asarray(z0, dtype=float))
        z0_idx = min(raw.minima,
                     key=lambda i: float(np.linalg.norm(raw.points[i].position - target)))
    catalog = potentials.classify_saddles(model, raw, z0_idx,
                                          x_set_override=cfg.get("x_set_override"))
    return model, catalog


def _parse_alpha(raw: str, catalog) -> harmonic.AlphaVector:
    """A JSON path, or a scalar applied with the basin-closure convention.

    Scalar form: the value goes to the I_min saddles; z0 and X-set points are
    far from the boundary (+inf); other minima are excluded (the domain stops
    before reaching them); everything else is +inf.
    """
    n = len(catalog.points)
    if os.path.exists(raw):
        return harmonic.AlphaVector.from_json(raw, n)
    value = math.inf if raw in ("inf", "+inf") else float(raw)
    mapping = {}
    for i in range(n):
        if i == catalog.z0 or i in catalog.x_set:
            mapping[i] = "inf"
        elif i in catalog.i_min:
            mapping[i] = "inf" if value == math.inf else value
        elif catalog.points[i].index == 0:
            mapping[i] = "excluded"
        else:
            mapping[i] = "inf"
    return harmonic.AlphaVector.from_mapping(n, mapping)


def _domain_from_cfg(cfg: dict, catalog, alpha) -> fdsolver.DomainSpec:
    dom = cfg.get("domain")
    if dom is None:
        raise ConfigError('config needs a "domain": {"lower": [...], "upper": [...]} block')
    return fdsolver.DomainSpec.from_catalog(catalog, alpha, dom["lower"], dom["upper"])


def _out_dir(args) -> str:
    out = args.out or os.environ.get("METAWELL_OUT", "metawell_out")
    os.makedirs(out, exist_ok=True)
    return out


def cmd_analyze(args) -> int:
    cfg = _load_json(args.config)
    out = _out_dir(args)
    t0 = time.perf_counter()
    model, catalog = _build_catalog(cfg, args)
    catalog.verify(model)
    path = os.path.join(out, "catalog.json")
    with open(path, "w") as fh:
        json.dump(catalog.to_dict(), fh, indent=2)
    manifest = RunManifest("analyze", sys.argv[1:], config_paths={"config": args.config},
                           outputs=[path], timings={"wall_s": time.perf_counter() - t0})
    manifest.write(out)
    print(f"catalog: {len(catalog.points)} critical points, z0={catalog.z0}, "
          f"I_min={list(catalog.i_min)}, V*={catalog.v_star:.6g}")
    return 0


def cmd_harmonic(args) -> int:
    cfg = _load_json(args.config)
    out = _out_dir(args)
    t0 = time.perf_counter()
    model, catalog = _build_catalog(cfg, args)
    alpha = _parse_alpha(args.alpha, catalog)
    spectrum = harmonic.assemble(catalog.points, alpha, args.k)
    rows = list(spectrum.rows())
    csv_path = os.path.join(out, "harmonic.csv")
    _write_csv(csv_path, rows, ["k", "lambda_h", "i", "n"])
    json_path = os.path.join(out, "harmonic.json")
    with open(json_path, "w") as fh:
        json.dump({"levels": rows, "alpha": list(alpha.values),
                   "excluded": sorted(alpha.excluded)}, fh, indent=2, default=str)
    RunManifest("harmonic", sys.argv[1:], config_paths={"config": args.config},
                parameters={"k": args.k, "alpha": args.alpha},
                outputs=[csv_path, json_path],
                timings={"wall_s": time.perf_counter() - t0}).write(out)
    for row in rows:
        print(f"k={row['k']}: lambda_H={row['lambda_h']:.10g}  (point {row['i']}, n={row['n']})")
    return 0


def cmd_rate(args) -> int:
    cfg = _load_json(args.config)
    out = _out_dir(args)
    t0 = time.perf_counter()
    model, catalog = _build_catalog(cfg, args)
    alpha = _parse_alpha(args.alpha, catalog)
    betas = [float(b) for b in args.beta.split(",")]
    rows = []
    reports = []
    for beta in betas:
        rep = kramers.ek_rate(catalog, alpha, beta)
        reports.append(rep)
        row = rep.row()
        for term in rep.terms:
            row[f"term_{term.index}"] = term.value
        rows.append(row)
    fields = sorted({k for row in rows for k in row}, key=lambda s: (s != "beta", s))
    csv_path = os.path.join(out, "rate.csv")
    _write_csv(csv_path, rows, fields)
    json_path = os.path.join(out, "rate.json")
    with open(json_path, "w") as fh:
        json.dump({"rows": rows,
                   "terms": [[t.__dict__ for t in rep.terms] for rep in reports]},
                  fh, indent=2, default=str)
    RunManifest("rate", sys.argv[1:], config_paths={"config": args.config},
                parameters={"alpha": args.alpha, "betas": betas},
                outputs=[csv_path, json_path],
                timings={"wall_s": time.perf_counter() - t0}).write(out)
    for row in rows:
        print(f"beta={row['beta']:g}: lambda1={row['lambda1']:.6g} "
              f"lambda2_H={row['lambda2_h']:.6g} J={row['separation']:.6g}")
    return 0


def cmd_optimize(args) -> int:
    cfg = _load_json(args.config)
    out = _out_dir(args)
    t0 = time.perf_counter()
    model, catalog = _build_catalog(cfg, args)
    alpha = _parse_alpha(args.alpha, catalog) if args.alpha else None
    result = optimizer.optimize_reduced(catalog, alpha)
    payload = {
        "alpha_star": {str(k): v for k, v in result.alpha_star.items()},
        "F_star": result.f_star,
        "lambda_star": result.lambda_star,
        "ell": result.ell_value,
        "thresholds": {str(k): v for k, v in result.thresholds.items()},
        "optimal_intervals": {str(k): list(v) for k, v in result.optimal_intervals.items()},
        "maximizer_set": result.maximizer_set,
        "diagnostics": result.diagnostics,
    }
    json_path = os.path.join(out, "optimize.json")
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=2, default=str)
    RunManifest("optimize", sys.argv[1:], config_paths={"config": args.config},
                outputs=[json_path],
                timings={"wall_s": time.perf_counter() - t0}).write(out)
    print(f"alpha* = {result.alpha_star}  F* = {result.f_star:.8g}  "
          f"lambda* = {result.lambda_star:.8g}")
    return 0


def _laplace_fields(cfg: dict):
    f_model = potentials.from_config(cfg["f"])
    g_cfg = cfg.get("g", {"const": 1.0})
    if "const" in g_cfg:
        c = float(g_cfg["const"])
        g = lambda x: c
    else:
        g_model = potentials.from_config(g_cfg)
        g = lambda x: float(g_model.value(np.atleast_1d(x)))
    f = lambda x: float(f_model.value(np.atleast_1d(x)))
    grad = lambda x: f_model.gradient(np.atleast_1d(x))
    hess = lambda x: f_model.hessian(np.atleast_1d(x))
    return f, grad, hess, g


def _laplace_spec(cfg: dict) -> laplace.MovingDomainSpec:
    constraints = []
    for c in cfg.get("constraints", []):
        if c["type"] == "halfspace":
            drift = None
            if "drift_power" in c:
                p = c["drift_power"]
                drift = (lambda p: lambda lam: p["b_inf"] + p["c"] * lam ** p["p"])(p)
            constraints.append(laplace.HalfSpace(tuple(c["normal"]), float(c["offset"]),
                                                 drift))
        elif c["type"] == "ball":
            constraints.append(laplace.Ball(tuple(c["center"]), float(c["radius"])))
        else:
            raise ConfigError(f"unknown constraint type {c['type']!r}")
    return laplace.MovingDomainSpec(int(cfg["dim"]), tuple(cfg["x0"]),
                                    tuple(constraints),
                                    tuple(tuple(h) for h in cfg["hull"]))


def cmd_laplace(args) -> int:
    cfg = _load_json(args.spec)
    out = _out_dir(args)
    t0 = time.perf_counter()
    spec = _laplace_spec(cfg)
    f, grad, hess, g = _laplace_fields(cfg)
    lams = [float(v) for v in args.lambdas.split(",")]
    rows = laplace.compare_table(f, g, spec, lams, grad_f=grad, hess_f=hess)
    csv_path = os.path.join(out, "laplace.csv")
    _write_csv(csv_path, rows, ["lam", "asymptotic", "oracle", "rel_error", "gaussian_prob"])
    slope = laplace.fitted_slope([r["lam"] for r in rows],
                                 [max(r["rel_error"], 1e-300) for r in rows])
    json_path = os.path.join(out, "laplace.json")
    with open(json_path, "w") as fh:
        json.dump({"rows": rows, "error_slope": slope,
                   "expected_order_r": spec.error_order}, fh, indent=2)
    RunManifest("laplace", sys.argv[1:], config_paths={"spec": args.spec},
                parameters={"lambdas": lams}, outputs=[csv_path, json_path],
                timings={"wall_s": time.perf_counter() - t0}).write(out)
    print(f"error slope {slope:.3f} (expected about {-spec.error_order / 2:.2f})")
    return 0


def _flat_grid_check(model, cfg, args, out, t0) -> int:
    """Flat potential: Dirichlet Laplacian targets (k pi / L)^2 / beta."""
    dom_cfg = cfg.get("domain") or {"lower": model.search_box[:, 0].tolist(),
                                    "upper": model.search_box[:, 1].tolist()}
    domain = fdsolver.DomainSpec(model.dim, tuple(dom_cfg["lower"]),
                                 tuple(dom_cfg["upper"]))
    betas = [float(b) for b in args.betas.split(",")]
    lengths = np.asarray(dom_cfg["upper"], dtype=float) - np.asarray(dom_cfg["lower"])
    if model.dim == 1:
        modes = [(k,) for k in (1, 2, 3)]
    else:
        modes = sorted([(i, j) for i in (1, 2) for j in (1, 2)],
                       key=lambda m: sum((mi / li) ** 2 for mi, li in zip(m, lengths)))[:3]
    rows = []
    ok = True
    for beta in betas:
        est = fdsolver.solve_spectrum(model, domain, beta, len(modes))
        targets = [sum((math.pi * mi / li) ** 2 for mi, li in zip(m, lengths)) / beta
                   for m in modes]
        for k, (got, want) in enumerate(zip(est.values, targets), start=1):
            ok = ok and abs(got - want) <= 0.02 * want
            rows.append({"beta": beta, "k": k, "lambda": got, "target": want})
    csv_path = os.path.join(out, "grid.csv")
    _write_csv(csv_path, rows, ["beta", "k", "lambda", "target"])
    json_path = os.path.join(out, "grid_summary.json")
    with open(json_path, "w") as fh:
        json.dump({"mode": "laplacian", "pass": bool(ok), "tolerance": 0.02,
                   "rows": rows}, fh, indent=2)
    RunManifest("validate-grid", sys.argv[1:], config_paths={"config": args.config},
                parameters={"betas": betas, "mode": "laplacian"},
                outputs=[csv_path, json_path],
                timings={"wall_s": time.perf_counter() - t0}).write(out)
    print(("PASS" if ok else "FAIL") + ": flat-potential spectrum vs Dirichlet "
          "Laplacian modes")
    return 0 if ok else 2


def cmd_validate_grid(args) -> int:
    cfg = _load_json(args.config)
    out = _out_dir(args)
    t0 = time.perf_counter()
    model, catalog = _build_catalog_or_flat(cfg, args)
    if catalog is None:
        return _flat_grid_check(model, cfg, args, out, t0)
    alpha = _parse_alpha(args.alpha, catalog)
    if args.dim != catalog.points[0].dim:
        raise ConfigError(f"--dim {args.dim} does not match the potential dimension")
    domain = _domain_from_cfg(cfg, catalog, alpha)
    betas = [float(b) for b in args.betas.split(",")]
    barrier = catalog.barrier()
    sweep = fdsolver.sweep_beta(model, domain, betas, k=2, n=args.nodes,
                                catalog=catalog, barrier=barrier)
    spectrum = harmonic.assemble(catalog.points, alpha, 2)
    lambda2_h = spectrum[2][0]
    rep = kramers.ek_rate(catalog, alpha, betas[-1])
    pref_limit = sweep.meta["prefactor_limit"]
    l2_limit = sweep.fitted_limits[1]
    l2_ok = abs(l2_limit - lambda2_h) <= 0.05 * abs(lambda2_h)
    pref_ok = abs(pref_limit - rep.prefactor) <= 0.10 * abs(rep.prefactor)
    rows = []
    for i, beta in enumerate(sweep.betas):
        rows.append({"beta": beta, "lambda1": sweep.values[i, 0],
                     "lambda2": sweep.values[i, 1],
                     "prefactor": sweep.rate_rows[i]["prefactor"]})
    csv_path = os.path.join(out, "grid.csv")
    _write_csv(csv_path, rows, ["beta", "lambda1", "lambda2", "prefactor"])
    summary = {
        "lambda2_fitted": l2_limit, "lambda2_harmonic": lambda2_h,
        "lambda2_pass": bool(l2_ok), "lambda2_tolerance": 0.05,
        "prefactor_fitted": pref_limit, "prefactor_formula": rep.prefactor,
        "prefactor_pass": bool(pref_ok), "prefactor_tolerance": 0.10,
        "barrier": barrier,
    }
    json_path = os.path.join(out, "grid_summary.json")
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2)
    RunManifest("validate-grid", sys.argv[1:], config_paths={"config": args.config},
                parameters={"alpha": args.alpha, "betas": betas, "dim": args.dim},
                outputs=[csv_path, json_path],
                timings={"wall_s": time.perf_counter() - t0}).write(out)
    status = "PASS" if (l2_ok and pref_ok) else "FAIL"
    print(f"{status}: lambda2 fit {l2_limit:.5g} vs {lambda2_h:.5g}; "
          f"prefactor fit {pref_limit:.5g} vs {rep.prefactor:.5g}")
    return 0 if status == "PASS" else 2


def cmd_validate_mc(args) -> int:
    cfg = _load_json(args.config)
    out = _out_dir(args)
    t0 = time.perf_counter()
    model, catalog = _build_catalog_or_flat(cfg, args)
    beta = float(args.beta)
    if catalog is None:
        dom_cfg = cfg.get("domain") or {"lower": model.search_box[:, 0].tolist(),
                                        "upper": model.search_box[:, 1].tolist()}
        domain = fdsolver.DomainSpec(model.dim, tuple(dom_cfg["lower"]),
                                     tuple(dom_cfg["upper"]))
        x0 = 0.5 * (np.asarray(domain.lower) + np.asarray(domain.upper))
    else:
        alpha = _parse_alpha(args.alpha, catalog)
        domain = _domain_from_cfg(cfg, catalog, alpha)
        x0 = catalog.points[catalog.z0].position
    config = qsdmc.SimConfig(beta=beta, dt=args.dt, domain=domain,
                             n_replicas=args.replicas, t_burn=args.t_burn,
                             t_max=args.t_max, seed=args.seed)
    stability = config.stability_factor(model)
    fv = qsdmc.fleming_viot(model, config, x0=x0)
    est = fdsolver.solve_spectrum(model, domain, beta, 1, catalog=catalog)
    lam_fd = float(est.values[0])
    band = 3.0 * fv.stderr + 0.05 * lam_fd
    rate_ok = abs(fv.rate - lam_fd) <= band
    ks_stat, ks_p = qsdmc.exponentiality_pvalue(fv)
    ks_ok = ks_p >= 0.05
    rows = [{"time": t, "position": list(p)} for t, p in
            zip(fv.lifetimes, fv.exit_positions)]
    csv_path = os.path.join(out, "mc_exits.csv")
    _write_csv(csv_path, rows, ["time", "position"])
    summary = {
        "fv_rate": fv.rate, "fv_stderr": fv.stderr, "n_events": fv.n_events,
        "fd_lambda1": lam_fd, "rate_pass": bool(rate_ok),
        "rate_band": band, "ks_statistic": ks_stat, "ks_pvalue": ks_p,
        "ks_pass": bool(ks_ok), "stability_factor": stability, "meta": fv.meta,
    }
    json_path = os.path.join(out, "mc_summary.json")
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, default=str)
    RunManifest("validate-mc", sys.argv[1:], config_paths={"config": args.config},
                parameters={"beta": beta, "dt": args.dt, "replicas": args.replicas},
                seeds={"mc": args.seed}, outputs=[csv_path, json_path],
                timings={"wall_s": time.perf_counter() - t0}).write(out)
    status = "PASS" if (rate_ok and ks_ok) else "FAIL"
    print(f"{status}: FV rate {fv.rate:.5g} +- {fv.stderr:.2g} vs grid {lam_fd:.5g} "
          f"(band {band:.2g}); KS p={ks_p:.3f}")
    return 0 if status == "PASS" else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metawell",
        description="Spectral asymptotics and exit rates for metastable wells "
                    "with offset-parametrized absorbing boundaries.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, alpha=True, alpha_required=True):
        p.add_argument("--config", required=True, help="potential config JSON")
        p.add_argument("--catalog", help="reuse a catalog JSON written by analyze")
        p.add_argument("--out", help="output directory (default $METAWELL_OUT or ./metawell_out)")
        if alpha:
            p.add_argument("--alpha", required=alpha_required, default="inf",
                           help="offset vector: JSON path, or a scalar/'inf' applied "
                                "to the separating saddles (other minima excluded)")

    p = sub.add_parser("analyze", help="find and classify critical points")
    common(p, alpha=False)
    p.add_argument("--seeds", type=int, help="Newton seed-grid points per dimension")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("harmonic", help="k smallest harmonic levels")
    common(p)
    p.add_argument("--k", type=int, default=6)
    p.set_defaults(func=cmd_harmonic)

    p = sub.add_parser("rate", help="boundary-corrected exit-rate asymptotics")
    common(p)
    p.add_argument("--beta", required=True, help="comma-separated inverse temperatures")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("optimize", help="asymptotically optimal boundary offsets")
    common(p, alpha=False)
    p.add_argument("--alpha", help="optional alpha JSON for exclusions")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("laplace", help="moving-domain Laplace asymptotics vs quadrature")
    p.add_argument("--spec", required=True, help="Laplace spec JSON")
    p.add_argument("--lambdas", required=True, help="comma-separated lambda values")
    p.add_argument("--out")
    p.set_defaults(func=cmd_laplace)

    p = sub.add_parser("validate-grid", help="grid eigensolver vs harmonic/rate formulas")
    common(p, alpha_required=False)
    p.add_argument("--betas", required=True)
    p.add_argument("--dim", type=int, choices=(1, 2), default=1)
    p.add_argument("--nodes", type=int, default=None)
    p.set_defaults(func=cmd_validate_grid)

    p = sub.add_parser("validate-mc", help="Fleming-Viot rate vs grid eigenvalue")
    common(p, alpha_required=False)
    p.add_argument("--beta", required=True)
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--t-burn", type=float, default=2.0)
    p.add_argument("--t-max", type=float, default=12.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate_mc)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MetawellError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
