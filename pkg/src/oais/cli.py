"""Command-line entry point: ``oais run|replicate|sweep|oracle|fit``.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 quadrature oracle asked for an unsupported dimension.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from oais import grad, harness, oracle
from oais.config import load_config
from oais.errors import ConfigError, DivergenceError, UnsupportedDimensionError
from oais.io import read_csv, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_DIMENSION = 0, 2, 3, 4

log = logging.getLogger("oais")


def _float_list(text: str) -> list:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("list is empty")
    return vals


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _diverged(records) -> bool:
    return any(r.abort_reason and r.abort_reason.startswith("DivergenceError") for r in records)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else harness.run_seed(cfg.run["master_seed"], 0)
    rec = harness.run_ais(cfg, seed)
    proposal = cfg.build_proposal()
    cols = harness.run_columns(proposal.dim_theta, cfg.run["test_functions"])
    write_csv(args.out, cols, harness.record_rows(rec, timing=not args.no_timing))
    if rec.abort_reason:
        log.error("run aborted: %s", rec.abort_reason)
        return EXIT_DIVERGENCE if _diverged([rec]) else EXIT_OK
    return EXIT_OK


def cmd_replicate(args) -> int:
    cfg = load_config(args.config)
    res = harness.run_replicates(cfg, jobs=args.jobs)
    cols = harness.summary_columns(cfg.run["test_functions"])
    write_csv(args.out, cols, harness.summary_rows(res.summary, cols))
    if args.runs_out:
        d_theta = cfg.build_proposal().dim_theta
        rcols = harness.run_columns(d_theta, cfg.run["test_functions"])
        rows = (row for rec in res.records for row in harness.record_rows(rec, timing=False))
        write_csv(args.runs_out, rcols, rows)
    for rec in res.failures:
        log.warning("replicate %d aborted: %s", rec.run_id, rec.abort_reason)
    return EXIT_DIVERGENCE if _diverged(res.records) else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    res = harness.calibration_sweep(cfg, args.alphas, args.etas, jobs=args.jobs)
    cols = harness.sweep_columns(cfg.run["test_functions"])
    write_csv(args.out, cols, ([row[c] for c in cols] for row in res.rows))
    for (alpha, name), (slope, se, lo, hi) in res.slopes.items():
        print(f"alpha={alpha:g} {name}: slope={slope:.4g} se={se:.3g} ci95=[{lo:.4g}, {hi:.4g}]")
    return EXIT_OK


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, default=lambda v: float(v) if np.isscalar(v) else list(v)))


def cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    target = cfg.build_target()
    proposal = cfg.build_proposal(target.dim_x)
    spec = cfg.quadrature(target.dim_x)
    theta = cfg.theta0(proposal)
    if args.what == "rho":
        log_z = oracle.log_quad_Z(target, spec)
        R = oracle.quad_R(target, proposal, theta, spec)
        _emit({"theta": theta.tolist(), "Z": math.exp(log_z), "R": R, "rho": R * math.exp(-2 * log_z)})
    elif args.what == "gradcheck":
        rng = np.random.default_rng(args.seed)
        exact = oracle.quad_grad_R(target, proposal, theta, spec)
        out = {"theta": theta.tolist(), "quad_grad_R": exact.tolist(), "draws": args.draws}
        for kind in args.estimators:
            eps = proposal.sample_eps(rng, args.draws)
            terms = grad.gradient_terms(kind, target, proposal, theta, eps)
            mean = terms.mean(axis=0)
            se = terms.std(axis=0, ddof=1) / math.sqrt(args.draws)
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.abs(mean - exact) / se
            out[kind] = {"mean": mean.tolist(), "se": se.tolist(), "z": z.tolist(),
                         "within_4se": bool(np.all(z <= 4.0))}
        _emit(out)
    else:
        points = args.points or math.ceil(100 ** (1.0 / theta.size) - 1e-9)
        thetas = oracle.theta_grid(theta, args.radius, points)
        rep = oracle.assumption_probe(target, proposal, thetas, spec)
        beta = cfg.optimizer["beta"]
        _emit({
            "probe_points": rep.probe_points,
            "lipschitz_hat": rep.lipschitz_hat,
            "dissipativity_m_hat": rep.dissip_m_hat,
            "dissipativity_b_hat": rep.dissip_b_hat,
            "violation_fraction": rep.violation_fraction,
            "c3_hat": rep.c3_hat(beta) if math.isfinite(beta) else 0.0,
        })
    return EXIT_OK


def cmd_fit(args) -> int:
    data = read_csv(args.inp)
    if args.column not in data or "k" not in data:
        raise ConfigError(f"{args.inp} needs columns 'k' and {args.column!r}")
    eta = args.eta
    if eta is None:
        eta = load_config(args.config).optimizer["eta"] if args.config else 1.0
    try:
        fit = harness.fit_rate(data["k"], data[args.column], eta)
    except ValueError as e:
        raise ConfigError(f"cannot fit {args.column!r}: {e}") from None
    k_max = int(np.nanmax(data["k"]))
    cols = ["column", "eta", "c0_hat", "c1_hat", "offset_hat", "residual", "rate", "burn_in", "ok", "message"]
    write_csv(args.out, cols, [[args.column, fit.eta, fit.c0_hat, fit.c1_hat, fit.offset_hat, fit.residual,
                                fit.rate, harness.burn_in(fit, k_max), fit.ok, fit.message]])
    if not fit.ok:
        log.warning("rate fit flagged: %s", fit.message)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oais", description="Adaptive importance sampling with Langevin-adapted proposals.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="single adaptive run, one CSV row per iteration")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=_u64, default=None, help="run seed (default: derived from master_seed)")
    r.add_argument("--no-timing", action="store_true", help="write wall_ms as 0 for reproducible files")
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("replicate", help="replicated runs, per-iteration MSE and bias summary")
    rp.add_argument("--config", required=True)
    rp.add_argument("--out", required=True)
    rp.add_argument("--runs-out", default=None, help="also write every run's trace here")
    rp.add_argument("--jobs", type=int, default=1)
    rp.set_defaults(func=cmd_replicate)

    s = sub.add_parser("sweep", help="calibration sweep with N = ceil(eta^-alpha)")
    s.add_argument("--config", required=True)
    s.add_argument("--alphas", type=_float_list, required=True)
    s.add_argument("--etas", type=_float_list, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle", help="quadrature oracles at the configured theta0")
    o.add_argument("what", choices=("rho", "gradcheck", "probe"))
    o.add_argument("--config", required=True)
    o.add_argument("--draws", type=int, default=100_000, help="gradcheck: single-sample draws")
    o.add_argument("--estimators", type=lambda t: t.split(","), default=["score", "pathwise"])
    o.add_argument("--seed", type=_u64, default=0)
    o.add_argument("--radius", type=float, default=0.5, help="probe: grid half-width around theta0")
    o.add_argument("--points", type=int, default=None,
                   help="probe: grid points per coordinate (default: enough for 100 points)")
    o.set_defaults(func=cmd_oracle)

    f = sub.add_parser("fit", help="fit c1 exp(-c0 eta k) + offset to a summary column")
    f.add_argument("--in", dest="inp", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--column", default="mean_R_quad")
    f.add_argument("--eta", type=float, default=None)
    f.add_argument("--config", default=None, help="take eta from this config")
    f.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as e:
        print(f"divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except UnsupportedDimensionError as e:
        print(f"unsupported dimension: {e}", file=sys.stderr)
        return EXIT_DIMENSION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
