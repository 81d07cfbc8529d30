"""Command-line front end: ``regime-bidask <command> --config cfg.yaml --out dir``.

Exit status is 0 on success, 1 when a numerical consistency check fails and 2
when the configuration is invalid.  Each command writes CSV output to ``--out``
and prints a one-line summary.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .asset_dynamics import discount, simulate_paths, write_paths_csv
from .bidask_control import Basis, ConsistencyError, bid_ask, hjb_solve, verify_optimality
from .config import ConfigError, ExperimentConfig, load
from .homotopy_pricer import GridSpec, fd_price, price_series
from .mc_engine import price_mc, stat_suite
from .measure import reweighted_rate_check

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2

COMMANDS = ("simulate", "price-homotopy", "price-fd", "price-mc", "bidask-hjb", "bidask-bsde",
            "check-measure", "check-martingale", "verify-optimality")


class CheckFailed(RuntimeError):
    """A numerical consistency check did not hold."""


def _grid(cfg: ExperimentConfig) -> GridSpec:
    model = cfg.regime_model()
    return GridSpec.around(cfg.product.s0, cfg.product.T, float(model.sigma.max()),
                           n_x=cfg.numerics.n_x, n_t=cfg.numerics.n_t)


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(v: float) -> str:
    return repr(float(v))


def cmd_simulate(cfg: ExperimentConfig, out: Path, threads: int, args) -> str:
    q = cfg.numerics
    p = cfg.product
    measure = "Q" if args.measure == "Q" else "P"
    paths = simulate_paths(cfg.regime_model(), p.x0 - 1, p.s0, p.T, q.n_steps,
                           min(q.n_paths, args.max_paths), q.seed, measure,
                           control=cfg.control_value() if measure == "Q" else None, threads=threads)
    write_paths_csv(paths, out / "paths.csv")
    return f"paths={paths.n_paths} steps={q.n_steps} measure={measure} mean_s_T={paths.s_T.mean():.6f}"


def _surface_command(cfg: ExperimentConfig, out: Path, method: str) -> str:
    model = cfg.regime_model()
    p = cfg.product
    grid = _grid(cfg)
    u = cfg.control_value()
    if method == "homotopy":
        surface, _, report = price_series(model, u, p.K, p.T, grid, M_max=cfg.numerics.M_max)
        _write_rows(out / "truncation.csv", ["order", "converged", "diverging", "last_increment"],
                    [[report.order, report.converged, report.diverging, _fmt(report.last_increment)]])
    else:
        surface = fd_price(model, u, p.K, p.T, grid)
    surface.to_csv(out / "surface.csv")
    return f"price={surface.price(p.s0, p.x0 - 1):.6f}"


def cmd_price_homotopy(cfg, out, threads, args) -> str:
    return _surface_command(cfg, out, "homotopy")


def cmd_price_fd(cfg, out, threads, args) -> str:
    return _surface_command(cfg, out, "fd")


def cmd_price_mc(cfg: ExperimentConfig, out: Path, threads: int, args) -> str:
    q, p = cfg.numerics, cfg.product
    rep = price_mc(cfg.regime_model(), cfg.control_value(), p.K, p.T, q.n_paths, q.n_steps, q.seed,
                   args.mode, p.x0 - 1, p.s0, threads)
    lo, hi = rep.ci99
    _write_rows(out / "price_mc.csv", ["estimate", "se", "ci99_lo", "ci99_hi", "n_paths", "seed", "mode"],
                [[_fmt(rep.estimate), _fmt(rep.se), _fmt(lo), _fmt(hi), rep.n_paths, rep.seed,
                  rep.measure]])
    return f"price={rep.estimate:.6f} se={rep.se:.6f}"


def cmd_bidask_hjb(cfg: ExperimentConfig, out: Path, threads: int, args) -> str:
    model, box, p, q = cfg.regime_model(), cfg.box(), cfg.product, cfg.numerics
    grid = _grid(cfg)
    sols = {d: hjb_solve(model, box, p.K, p.T, grid, d, coupling=q.coupling, discount=q.discount)
            for d in ("inf", "sup")}
    lo, hi = sols["inf"], sols["sup"]
    rows = []
    for k in range(0, lo.times.size, args.every):
        for j in range(model.n_states):
            for i, xi in enumerate(lo.x):
                rows.append([_fmt(lo.times[k]), _fmt(xi), j + 1, _fmt(lo.values[k, j, i]),
                             _fmt(hi.values[k, j, i]), _fmt(lo.controls[k, j, i]),
                             _fmt(hi.controls[k, j, i])])
    _write_rows(out / "bidask_hjb.csv", ["t", "x", "regime", "v_inf", "v_sup", "u_inf", "u_sup"], rows)
    try:
        res = bid_ask(model, box, p.K, p.T, grid, "hjb", p.s0, p.x0 - 1, tol=q.tol,
                      coupling=q.coupling, discount=q.discount)
    except ConsistencyError as exc:
        raise CheckFailed(str(exc)) from None
    return res.summary()


def cmd_bidask_bsde(cfg: ExperimentConfig, out: Path, threads: int, args) -> str:
    model, box, p, q = cfg.regime_model(), cfg.box(), cfg.product, cfg.numerics
    try:
        res = bid_ask(model, box, p.K, p.T, None, "bsde", p.s0, p.x0 - 1, n_paths=q.n_paths,
                      n_steps=q.n_steps, seed=q.seed, basis=Basis(q.basis_degree),
                      discount=q.discount, threads=threads)
    except ConsistencyError as exc:
        raise CheckFailed(str(exc)) from None
    _write_rows(out / "bidask_bsde.csv", ["direction", "value", "se", "n_paths", "n_steps", "seed"],
                [["inf", _fmt(res.bid), _fmt(res.bid_se), q.n_paths, q.n_steps, q.seed],
                 ["sup", _fmt(res.ask), _fmt(res.ask_se), q.n_paths, q.n_steps, q.seed]])
    return res.summary() + f", bid_se={res.bid_se:.6f}, ask_se={res.ask_se:.6f}"


def cmd_check_measure(cfg: ExperimentConfig, out: Path, threads: int, args) -> str:
    model, p, q = cfg.regime_model(), cfg.product, cfg.numerics
    rec, B = reweighted_rate_check(model, cfg.control_value(), p.x0 - 1, p.T, q.n_paths, q.seed, threads)
    n = model.n_states
    rows = []
    worst = 0.0
    for i in range(n):
        for j in range(n):
            if i == j or B[j, i] == 0:
                continue
            rel = abs(rec.rates[j, i] - B[j, i]) / B[j, i]
            worst = max(worst, rel)
            rows.append([i + 1, j + 1, _fmt(B[j, i]), _fmt(rec.rates[j, i]), _fmt(rec.rates_se[j, i]),
                         _fmt(rel)])
    _write_rows(out / "check_measure.csv", ["from", "to", "target", "estimate", "se", "rel_error"], rows)
    summary = (f"density_mean={rec.density_mean:.6f} density_se={rec.density_se:.6f} "
               f"max_rate_rel_error={worst:.4f}")
    if abs(rec.density_mean - 1.0) > 3 * rec.density_se or worst > 0.05:
        raise CheckFailed(summary)
    return summary


def cmd_check_martingale(cfg: ExperimentConfig, out: Path, threads: int, args) -> str:
    model, p, q = cfg.regime_model(), cfg.product, cfg.numerics
    paths = simulate_paths(model, p.x0 - 1, p.s0, p.T, q.n_steps, q.n_paths, q.seed, "Q",
                           control=cfg.control_value(), threads=threads)
    rep = stat_suite(discount(paths), q.seed, "Q")
    _write_rows(out / "check_martingale.csv", ["estimate", "se", "s0", "n_paths", "seed"],
                [[_fmt(rep.estimate), _fmt(rep.se), _fmt(p.s0), rep.n_paths, q.seed]])
    summary = f"discounted_mean={rep.estimate:.6f} se={rep.se:.6f} s0={p.s0:.6f}"
    if not rep.agrees_with(p.s0):
        raise CheckFailed(summary)
    return summary


def cmd_verify_optimality(cfg: ExperimentConfig, out: Path, threads: int, args) -> str:
    model, box, p, q = cfg.regime_model(), cfg.box(), cfg.product, cfg.numerics
    grid = _grid(cfg)
    rows = []
    parts = []
    ok = True
    for d in ("inf", "sup"):
        sol = hjb_solve(model, box, p.K, p.T, grid, d, coupling=q.coupling, discount=q.discount)
        rep = verify_optimality(sol.controls, sol, model, box)
        rows.append([d, rep.n_nodes, rep.n_violations, _fmt(rep.fraction_ok), _fmt(rep.gap.max())])
        parts.append(f"{d}_fraction_ok={rep.fraction_ok:.6f}")
        ok &= rep.fraction_ok >= 0.999
    _write_rows(out / "verify_optimality.csv",
                ["direction", "nodes", "violations", "fraction_ok", "max_gap"], rows)
    summary = " ".join(parts)
    if not ok:
        raise CheckFailed(summary)
    return summary


HANDLERS = {
    "simulate": cmd_simulate,
    "price-homotopy": cmd_price_homotopy,
    "price-fd": cmd_price_fd,
    "price-mc": cmd_price_mc,
    "bidask-hjb": cmd_bidask_hjb,
    "bidask-bsde": cmd_bidask_bsde,
    "check-measure": cmd_check_measure,
    "check-martingale": cmd_check_martingale,
    "verify-optimality": cmd_verify_optimality,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="regime-bidask", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, type=Path, help="YAML experiment config")
    ap.add_argument("--out", type=Path, default=Path("."), help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="override numerics.seed")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--mode", choices=("direct-Q", "reweighted-P"), default="direct-Q",
                    help="price-mc estimator")
    ap.add_argument("--measure", choices=("P", "Q"), default="P", help="simulate: path measure")
    ap.add_argument("--max-paths", type=int, default=100, help="simulate: paths written")
    ap.add_argument("--every", type=int, default=1, help="bidask-hjb: time stride of the CSV")
    return ap


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg = cfg.with_seed(args.seed)
        if args.threads < 1 or args.every < 1 or args.max_paths < 1:
            raise ConfigError("--threads, --every and --max-paths must be positive")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        summary = HANDLERS[args.command](cfg, args.out, args.threads, args)
    except CheckFailed as exc:
        print(f"consistency check failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(summary)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
