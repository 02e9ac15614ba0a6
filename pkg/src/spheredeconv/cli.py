"""Command-line front end: estimation on CSV data and the simulation harness.

Input conventions follow the solar-coordinates habit: longitude in [0, 360)
degrees, latitude in [-90, 90] degrees, mapped to phi = lon and colatitude
theta = 90 - lat (both in radians).  All output CSVs carry a header row and
17-significant-digit formatting, so identical seeds give identical bytes.

Exit codes: 0 success, 2 malformed input, 3 numerical failure, 4 bad
configuration.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import estimators, harmonics, inference, simulation, sphere, transforms
from .errors import (DegreeOverflowError, DomainError, SingularBlockError,
                     UnsupportedDimensionError, UnsupportedModelError)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_CONFIG = 4

_CONFIG_KEYS = {
    "model", "lambda", "theta", "p", "T", "T_grid", "ci", "level", "grid_res",
    "seed", "out", "input", "n", "R", "scenario", "folds",
}


class CliError(Exception):
    def __init__(self, code, message):
        self.code = code
        self.message = message
        super().__init__(message)


def _fmt(v):
    return f"{v:.17g}"


def read_config(path):
    """Flat key = value lines with # comments; unknown keys are rejected."""
    cfg = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError(EXIT_CONFIG, f"{path}:{lineno}: expected key = value")
                key, val = (s.strip() for s in line.split("=", 1))
                if key not in _CONFIG_KEYS:
                    raise CliError(EXIT_CONFIG, f"{path}:{lineno}: unknown key '{key}'")
                cfg[key] = val
    except OSError as exc:
        raise CliError(EXIT_CONFIG, f"cannot read config {path}: {exc}")
    return cfg


def lonlat_to_angles(lon_deg, lat_deg):
    phi = np.mod(np.radians(lon_deg), 2.0 * math.pi)
    theta = np.radians(90.0 - lat_deg)
    return phi, theta


def angles_to_lonlat(phi, theta):
    lon = np.degrees(phi) % 360.0
    lat = 90.0 - np.degrees(theta)
    return lon, lat


def _read_csv(path, want_y):
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise CliError(EXIT_INPUT, f"{path}: empty file")
            header = [h.strip().lower() for h in header]
            try:
                i_lon, i_lat = header.index("lon"), header.index("lat")
            except ValueError:
                raise CliError(EXIT_INPUT, f"{path}: need 'lon' and 'lat' columns")
            i_y = None
            if want_y:
                if "y" not in header:
                    raise CliError(EXIT_INPUT, f"{path}: missing response column 'y'")
                i_y = header.index("y")
            lon, lat, y = [], [], []
            for row in reader:
                if not row or not "".join(row).strip():
                    continue
                try:
                    lon.append(float(row[i_lon]))
                    lat.append(float(row[i_lat]))
                    if i_y is not None:
                        y.append(float(row[i_y]))
                except (ValueError, IndexError):
                    raise CliError(EXIT_INPUT, f"{path}: malformed row {row!r}")
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot read {path}: {exc}")
    if not lon:
        raise CliError(EXIT_INPUT, f"{path}: no observations")
    lon = np.asarray(lon)
    lat = np.asarray(lat)
    if np.any(np.abs(lat) > 90.0):
        raise CliError(EXIT_INPUT, f"{path}: latitude outside [-90, 90]")
    phi, theta = lonlat_to_angles(lon, lat)
    grid = sphere.SphereGrid(2, phi, theta[:, None])
    return estimators.Dataset(2, grid, np.asarray(y) if want_y else None)


def _build_model(opts):
    kind = (opts.get("model") or "errorfree").lower()
    lam = opts.get("lambda")
    try:
        if kind in ("errorfree", "none") or (kind == "laplace" and lam is not None
                                             and float(lam) == 0.0):
            return transforms.error_free(2)
        if kind == "laplace":
            return transforms.laplace(float(lam))
        if kind == "gaussian":
            return transforms.gaussian(float(lam))
        if kind == "rosenthal":
            return transforms.rosenthal(float(opts["theta"]), float(opts["p"]))
        if kind == "vmf":
            return transforms.vmf_error(float(lam))
    except (KeyError, TypeError) as exc:
        raise CliError(EXIT_CONFIG, f"model '{kind}' is missing a parameter: {exc}")
    except (DomainError, UnsupportedModelError) as exc:
        raise CliError(EXIT_CONFIG, str(exc))
    raise CliError(EXIT_CONFIG, f"unknown model '{kind}'")


def _parse_t_grid(text):
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise CliError(EXIT_CONFIG, f"cannot parse truncation grid '{text}'")


def _select_truncation(opts, data, model, task):
    quad_res = int(opts.get("grid_res") or 24)
    if opts.get("T") is not None:
        return float(opts["T"])
    grid = _parse_t_grid(opts.get("T_grid") or "1..10")
    if task == "density":
        quad = sphere.product_quadrature(
            2, max(quad_res, sphere.default_resolution(max(grid))))
        t = estimators.select_T_density(data, model, grid, quad)
    else:
        t = estimators.select_T_regression(data, model, grid,
                                           folds=int(opts.get("folds") or 5),
                                           seed=int(opts.get("seed") or 0))
    print(f"selected T = {t} by cross-validation", file=sys.stderr)
    return float(t)


def _write_grid_csv(path, grid, estimate, stderr=None, ci_low=None, ci_high=None,
                    flags=None):
    lon, lat = angles_to_lonlat(grid.phi, grid.thetas[:, 0])
    header = ["lon", "lat", "estimate"]
    cols = [lon, lat, estimate]
    if stderr is not None:
        header += ["stderr", "ci_low", "ci_high", "flag"]
        cols += [stderr, ci_low, ci_high, flags]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(grid)):
            fields = []
            for c in cols:
                v = c[i]
                fields.append(str(int(v)) if c is flags else _fmt(v))
            fh.write(",".join(fields) + "\n")


def _grid_interval_pass(data, kernel, grid, level, method, task, chunk=128):
    """Chunked interval construction over the output grid (memory-bounded in n)."""
    dt = estimators.data_basis_table(data, kernel.max_degree)
    gt = harmonics.BasisTable.for_grid(grid, kernel.max_degree)
    g = len(grid)
    n = data.n
    floor = estimators.unstable_floor(2)
    est = np.empty(g)
    se = np.empty(g)
    low = np.empty(g)
    high = np.empty(g)
    flags = np.zeros(g, dtype=bool)
    z = inference.normal_quantile((1.0 - level) / 2.0)
    for start in range(0, g, chunk):
        stop = min(start + chunk, g)
        re_k = np.zeros((stop - start, n))
        for l in range(kernel.max_degree + 1):
            corr = gt.block(l)[start:stop] @ kernel.blocks.inverse(l)
            re_k += (corr @ dt.block(l).conj().T).real
        if task == "density":
            f_hat = re_k.mean(axis=1)
            s2 = np.maximum(np.mean(re_k ** 2, axis=1) - f_hat ** 2, 0.0)
            est[start:stop] = f_hat
            se[start:stop] = np.sqrt(s2)
            if method == "el":
                for i in range(stop - start):
                    ci = inference._el_interval_affine(
                        re_k[i], np.ones(n), level, float(f_hat[i]),
                        float(math.sqrt(s2[i] / n)))
                    low[start + i], high[start + i] = ci.low, ci.high
                    flags[start + i] |= ci.degenerate
            else:
                hw = z * np.sqrt(s2 / n)
                low[start:stop] = f_hat - hw
                high[start:stop] = f_hat + hw
                flags[start:stop] |= s2 <= 0.0
        else:
            if method == "el":
                lo, hi, m_hat, dg = inference.el_intervals_regression_grid(
                    re_k, data.y, level, floor)
                f_hat = re_k.mean(axis=1)
                denom = np.where(np.abs(f_hat) < floor,
                                 np.where(f_hat >= 0, floor, -floor), f_hat)
                resid = re_k * (data.y[None, :] - m_hat[:, None])
                se[start:stop] = np.sqrt(np.mean(resid ** 2, axis=1)) / np.abs(denom)
                low[start:stop], high[start:stop] = lo, hi
                est[start:stop] = m_hat
                flags[start:stop] |= dg | (np.abs(f_hat) < floor)
            else:
                lo, hi, m_hat, s_vals = inference.an_intervals_regression_grid(
                    re_k, data.y, level, floor)
                est[start:stop] = m_hat
                se[start:stop] = s_vals
                low[start:stop], high[start:stop] = lo, hi
                flags[start:stop] |= np.abs(re_k.mean(axis=1)) < floor
    return est, se / math.sqrt(n), low, high, flags


def _merged_opts(args, command):
    opts = {}
    if args.config:
        opts.update(read_config(args.config))
    flag_map = {
        "model": args.model, "lambda": args.lam, "theta": args.theta, "p": args.p,
        "T": args.truncation, "T_grid": args.t_grid, "ci": args.ci,
        "level": args.level, "grid_res": args.grid_res, "seed": args.seed,
        "out": args.out,
    }
    if command in ("density", "regress"):
        flag_map["input"] = args.input
    else:
        flag_map["scenario"] = args.preset
        flag_map["R"] = args.replicates
        flag_map["n"] = args.n
    for k, v in flag_map.items():
        if v is not None:
            opts[k] = v
    return opts


def cmd_density(args):
    opts = _merged_opts(args, "density")
    data = _read_csv(opts.get("input") or "", want_y=False)
    model = _build_model(opts)
    t = _select_truncation(opts, data, model, "density")
    grid_res = int(opts.get("grid_res") or 24)
    kernel = estimators.make_kernel(model, t)
    grid = sphere.product_quadrature(2, grid_res)
    ci = (opts.get("ci") or "none").lower()
    out = opts.get("out") or "density_grid.csv"
    if ci == "none":
        est = estimators.density_estimate(data, kernel, grid)
        _write_grid_csv(out, grid, est.f_hat)
    else:
        level = float(opts.get("level") or 0.95)
        est, se, low, high, flags = _grid_interval_pass(
            data, kernel, grid, level, ci, "density")
        _write_grid_csv(out, grid, est, se, low, high, flags)
    return EXIT_OK


def cmd_regress(args):
    opts = _merged_opts(args, "regress")
    data = _read_csv(opts.get("input") or "", want_y=True)
    model = _build_model(opts)
    t = _select_truncation(opts, data, model, "regress")
    kernel = estimators.make_kernel(model, t)
    grid = sphere.product_quadrature(2, int(opts.get("grid_res") or 24))
    ci = (opts.get("ci") or "none").lower()
    out = opts.get("out") or "regression_grid.csv"
    if ci == "none":
        est = estimators.regression_estimate(data, kernel, grid)
        _write_grid_csv(out, grid, est.m_hat)
    else:
        level = float(opts.get("level") or 0.95)
        est, se, low, high, flags = _grid_interval_pass(
            data, kernel, grid, level, ci, "regress")
        _write_grid_csv(out, grid, est, se, low, high, flags)
    return EXIT_OK


def cmd_simulate(args):
    opts = _merged_opts(args, "simulate")
    name = (opts.get("scenario") or "s1-desk").lower()
    seed = int(opts.get("seed") or 0)
    r = int(opts["R"]) if opts.get("R") else None
    try:
        cfgs = simulation.preset_config(name, seed=seed, r=r)
    except DomainError as exc:
        raise CliError(EXIT_CONFIG, str(exc))
    if opts.get("n"):
        cfgs = [c for c in cfgs if c.n == int(opts["n"])]
        if not cfgs:
            raise CliError(EXIT_CONFIG, f"preset has no run at n = {opts['n']}")
    want_intervals = name.startswith("s1")
    outdir = opts.get("out") or "."
    os.makedirs(outdir, exist_ok=True)
    t1_rows, t2_rows = [], []
    for cfg in cfgs:
        report = simulation.run_study(cfg, intervals=want_intervals)
        sys.stdout.write(report.text_block())
        t1_rows += report.table1_rows()
        t2_rows += report.table2_rows()
    with open(os.path.join(outdir, "table1.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("scenario,n,estimator,ISB,IV,IMSE\n")
        for row in t1_rows:
            fh.write(",".join([row[0], str(row[1]), row[2]] + [_fmt(v) for v in row[3:]]) + "\n")
    with open(os.path.join(outdir, "table2.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("level,n,method,coverage,length\n")
        for row in t2_rows:
            fh.write(",".join([_fmt(row[0]), str(row[1]), row[2]] +
                              [_fmt(v) for v in row[3:]]) + "\n")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spheredeconv",
        description="Deconvolution density and regression estimation on the sphere")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("density", cmd_density), ("regress", cmd_regress),
                     ("simulate", cmd_simulate)):
        p = sub.add_parser(name)
        if name != "simulate":
            p.add_argument("input", nargs="?", help="input CSV (lon,lat[,y])")
        p.add_argument("--model", choices=["errorfree", "laplace", "gaussian",
                                           "rosenthal", "vmf"])
        p.add_argument("--lambda", dest="lam")
        p.add_argument("--theta")
        p.add_argument("--p")
        p.add_argument("--T", dest="truncation")
        p.add_argument("--T-grid", dest="t_grid")
        p.add_argument("--ci", choices=["an", "el", "none"])
        p.add_argument("--level")
        p.add_argument("--grid-res", dest="grid_res")
        p.add_argument("--seed")
        p.add_argument("--out")
        p.add_argument("--config")
        if name == "simulate":
            p.add_argument("--preset")
            p.add_argument("--R", dest="replicates")
            p.add_argument("--n", dest="n")
        p.set_defaults(func=fn)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "input", None) is None and args.command != "simulate":
        print("error: missing input CSV path", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return exc.code
    except (SingularBlockError, DegreeOverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, UnsupportedModelError, UnsupportedDimensionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
