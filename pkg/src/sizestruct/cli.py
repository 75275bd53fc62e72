"""Command line entry point: ``sizestruct <command> --config FILE``.

Exit codes: 0 success, 2 config error, 3 numerical refusal (CFL, bracketing,
positivity), 4 expression-language error, 5 no positive equilibrium found.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as configmod
from . import ratedsl
from .equilibrium import (
    default_p_max,
    reproduction_number,
    solve_equilibrium,
    trivial_equilibrium,
)
from .numerics import NumericsError
from .simulator import SimConfig, run
from .spectrum import (
    CharacteristicFunction,
    classify,
    linear_coefficients,
    positivity_check,
    real_roots,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_DSL = 4
EXIT_NO_EQUILIBRIUM = 5

log = logging.getLogger("sizestruct")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


class NoEquilibrium(Exception):
    pass


def _equilibrium(cfg, grid=None):
    r = cfg.rates()
    grid = grid or cfg.size_grid()
    dgrid = cfg.delay_grid()
    eq = solve_equilibrium(r, grid, dgrid, cfg.analysis.p_max)
    return r, grid, dgrid, eq


def cmd_r0(cfg, args, out: Path) -> int:
    r = cfg.rates()
    grid, dgrid = cfg.size_grid(), cfg.delay_grid()
    R0 = reproduction_number(r, 0.0, np.zeros(grid.n), grid, dgrid)
    write_csv(out / "r0.csv", ["ns", "ntau", "R0"], [[grid.n, dgrid.n, R0]])
    print(f"R(0,0) = {fmt(R0)}")
    return EXIT_OK


def cmd_equilibrium(cfg, args, out: Path) -> int:
    r, grid, dgrid, eq = _equilibrium(cfg)
    if eq is None:
        p_max = cfg.analysis.p_max or default_p_max(r, grid, dgrid)
        print(f"none: no positive equilibrium found on (0, {fmt(p_max)}]")
        return EXIT_NO_EQUILIBRIUM
    rows = zip(grid.nodes, eq.p_star, eq.Q_star, eq.Pi_star)
    write_csv(out / "equilibrium.csv", ["s", "p_star", "Q_star", "Pi"], rows)
    print(f"P* = {fmt(eq.P_star)}")
    if len(eq.roots) > 1:
        print("all roots: " + ", ".join(fmt(P) for P in eq.roots))
    return EXIT_OK


def _target_equilibrium(cfg, target):
    r = cfg.rates()
    grid, dgrid = cfg.size_grid(), cfg.delay_grid()
    if target == "trivial":
        return r, grid, dgrid, trivial_equilibrium(r, grid)
    _, _, _, eq = _equilibrium(cfg, grid)
    if eq is None:
        raise NoEquilibrium()
    return r, grid, dgrid, eq


def lambda_samples(a) -> np.ndarray:
    lam = np.linspace(a.lambda_lo, a.lambda_hi, a.lambda_samples)
    if a.lambda_lo < 0.0 < a.lambda_hi and not np.any(lam == 0.0):
        lam = np.sort(np.append(lam, 0.0))
    return lam


def cmd_spectrum(cfg, args, out: Path) -> int:
    try:
        r, grid, dgrid, eq = _target_equilibrium(cfg, args.target)
    except NoEquilibrium:
        print("none: no positive equilibrium found")
        return EXIT_NO_EQUILIBRIUM
    lc = linear_coefficients(r, eq)
    K = CharacteristicFunction(r, eq, lc, dgrid)
    lam = lambda_samples(cfg.analysis)
    values = K(lam)
    write_csv(out / "kcurve.csv", ["lambda", "K"], zip(lam, values))
    pos = positivity_check(r, eq, dgrid)
    print(f"target: {args.target}")
    print(f"positivity margin: {fmt(pos.margin)} (s = {fmt(pos.s_at_min)})")
    if not pos.ok:
        print("indeterminate: positivity condition fails; no real root is claimed as dominant")
        return EXIT_NUMERIC
    a = cfg.analysis
    roots = real_roots(K, a.lambda_lo, a.lambda_hi, a.lambda_samples)
    if roots:
        print(f"leading root: {fmt(max(roots))}")
    else:
        print(f"leading root: none found in [{fmt(a.lambda_lo)}, {fmt(a.lambda_hi)}]")
    return EXIT_OK


def cmd_classify(cfg, args, out: Path) -> int:
    r = cfg.rates()
    grid, dgrid = cfg.size_grid(), cfg.delay_grid()
    if args.target == "trivial":
        verdict = classify(r, "trivial", dgrid, grid)
    else:
        _, _, _, eq = _equilibrium(cfg, grid)
        verdict = classify(r, eq, dgrid)
    print(verdict.as_text())
    return EXIT_OK


def _history(cfg, r, grid):
    text = cfg.sim.history_init.strip()
    if text == "equilibrium":
        eq = solve_equilibrium(r, grid, cfg.delay_grid(), cfg.analysis.p_max)
        if eq is None:
            raise NoEquilibrium()
        return eq.p_star
    if text.startswith("csv:"):
        return _profile_from_csv(Path(text[4:].strip()), grid)
    return cfg.parse(("sim", "history_init"))


def _profile_from_csv(path: Path, grid) -> np.ndarray:
    data = np.genfromtxt(path, delimiter=",", names=True)
    column = "p_star" if "p_star" in data.dtype.names else "p"
    s, p = np.atleast_1d(data["s"]), np.atleast_1d(data[column])
    if s.size == grid.n and np.allclose(s, grid.nodes, rtol=0, atol=1e-12 * grid.m):
        return p.astype(float)
    return np.interp(grid.nodes, s, p)


def cmd_simulate(cfg, args, out: Path) -> int:
    r = cfg.rates()
    grid = cfg.sim_grid()
    try:
        history = _history(cfg, r, grid)
    except NoEquilibrium:
        print("none: history refers to an equilibrium that does not exist")
        return EXIT_NO_EQUILIBRIUM
    reference = None
    if args.target == "positive":
        eq = solve_equilibrium(r, grid, cfg.delay_grid(), cfg.analysis.p_max)
        reference = None if eq is None else eq.p_star
    sim = SimConfig(
        rates=r,
        grid=grid,
        t_end=cfg.sim.t_end,
        history_init=history,
        cfl=cfg.grid.cfl,
        stride=cfg.sim.stride,
        snapshot_times=tuple(cfg.sim.snapshot_times),
        reference=reference,
    )
    series = run(sim)
    write_csv(
        out / "timeseries.csv",
        ["t", "P", "recruitment", "dist"],
        zip(series.t, series.P, series.recruitment, series.dist),
    )
    for T, profile in series.snapshots.items():
        write_csv(out / f"snapshot_t{T:g}.csv", ["s", "p"], zip(grid.nodes, profile))
    print(f"steps recorded: {series.t.size}; P(0) = {fmt(series.P[0])}; P({fmt(series.t[-1])}) = {fmt(series.P[-1])}")
    return EXIT_OK


def cmd_show_config(cfg, args, out: Path) -> int:
    sys.stdout.write(configmod.dumps(cfg))
    return EXIT_OK


COMMANDS = {
    "r0": cmd_r0,
    "equilibrium": cmd_equilibrium,
    "spectrum": cmd_spectrum,
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "show-config": cmd_show_config,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sizestruct", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="YAML configuration file")
        src.add_argument("--seed-preset", choices=sorted(configmod.PRESETS), help="use a shipped example config")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        if name in ("spectrum", "classify", "simulate"):
            p.add_argument("--target", choices=("trivial", "positive"), default="positive")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = configmod.load(args.config) if args.config else configmod.load_preset(args.seed_preset)
        out = Path(args.out or cfg.output.directory)
        return COMMANDS[args.command](cfg, args, out)
    except configmod.ConfigDSLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DSL
    except configmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ratedsl.DSLError as exc:
        print(f"error: expression evaluation failed: {exc}", file=sys.stderr)
        return EXIT_DSL
    except NumericsError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
