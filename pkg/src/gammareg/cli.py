"""Command-line experiment runner.

    gammareg run <suite> [CONFIG] [--config PATH] [--seed N] [--jobs N] [--out DIR] [--strict]

Each suite reads its section of a `key = value` config with `[section]`
headers, runs a list of checks and writes `<suite>.csv` with one row per check
plus a `manifest.json`. Exit status: 0 when every check passes, 1 on a failed
check, 2 on configuration or validation errors.
"""
import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy

from . import __version__, io, rng
from .errors import GammaRegError, InvalidConfigError, InvalidInputError

SUITES = ("gamma-norm", "sectorial", "maxreg", "stochastic", "solve-see", "heat", "tables")
COLUMNS = ("suite", "check", "seed", "value", "bound", "margin", "passed")

DEFAULTS = {
    "run": {"seed": "0", "out": "gammareg-out"},
    "gamma-norm": {"trials": "20", "dim": "8", "intervals": "16", "samples": "4096",
                   "alphas": "0.25, 0.5, 1, 1.5"},
    "sectorial": {"spectrum": "0.5, 1, 3, 7"},
    "maxreg": {"spectrum": "0.5, 1, 3, 7", "trials": "20", "tolerance": "1e-5"},
    "stochastic": {"spectrum": "0.5, 1, 3, 7", "samples": "512", "levels": "9", "trials": "2",
                   "integrands": "10"},
    "solve-see": {"lam": "1.0", "beta": "0.8", "samples": "1024", "levels": "9",
                  "epsilon": "0.1"},
    "heat": {"b": "1.0, 1.6", "samples": "128", "levels": "11", "K": "16", "M": "64"},
    "tables": {"K": "128, 256, 512", "thetas": "0.6, 0.7, 0.8, 0.9, 1.0"},
}


class Section:
    """Typed access to a config section with defaults and field diagnostics."""

    def __init__(self, cp, name):
        self.name = name
        self.data = dict(DEFAULTS.get(name, {}))
        if cp is not None and cp.has_section(name):
            unknown = set(cp[name]) - set(self.data)
            if unknown:
                raise InvalidConfigError(f"[{name}] unknown keys: {', '.join(sorted(unknown))}")
            self.data.update(cp[name])

    def _raw(self, key):
        return self.data[key]

    def int(self, key, lo=None):
        try:
            v = int(self._raw(key))
        except ValueError:
            raise InvalidConfigError(f"[{self.name}] {key}: expected an integer") from None
        if lo is not None and v < lo:
            raise InvalidConfigError(f"[{self.name}] {key}: must be >= {lo}, got {v}")
        return v

    def float(self, key):
        try:
            v = float(self._raw(key))
        except ValueError:
            raise InvalidConfigError(f"[{self.name}] {key}: expected a number") from None
        if not math.isfinite(v):
            raise InvalidConfigError(f"[{self.name}] {key}: must be finite")
        return v

    def floats(self, key):
        try:
            return [float(x) for x in self._raw(key).split(",") if x.strip()]
        except ValueError:
            raise InvalidConfigError(f"[{self.name}] {key}: expected comma-separated numbers") from None


def _row(suite, check, seed, value, bound, passed, margin=None):
    if margin is None:
        margin = bound - value
    return {"suite": suite, "check": check, "seed": int(seed), "value": float(value),
            "bound": float(bound), "margin": float(margin), "passed": bool(passed)}


def suite_gamma_norm(sec, seed):
    from .gamma_space import (StepFunction, gamma_norm_hilbert, gamma_norm_mc, hardy_check,
                              uniform_grid)
    from .space_model import SpaceModel
    trials, n, N = sec.int("trials", 1), sec.int("dim", 1), sec.int("intervals", 1)
    samples = sec.int("samples", 2)
    rows = []
    for i in range(trials):
        g = rng.stream(seed, rng.tag("cli-gamma"), i)
        f = StepFunction(uniform_grid(g.uniform(0.5, 2.0), N), g.standard_normal((N, n)),
                         SpaceModel(n))
        mc = gamma_norm_mc(f, samples, seed, i)
        ex = gamma_norm_hilbert(f).value
        dev = abs(mc.value - ex)
        rows.append(_row("gamma-norm", f"mc_vs_hilbert_{i}", seed, dev, 3 * mc.stderr,
                         dev <= 3 * mc.stderr))
    for alpha in sec.floats("alphas"):
        g = rng.stream(seed, rng.tag("cli-hardy"), int(alpha * 1000))
        # support away from 0 keeps both sides finite for alpha >= 1
        f = StepFunction(uniform_grid(1.0, N, t0=0.25), g.standard_normal((N, n)), SpaceModel(n))
        lhs, rhs = hardy_check(f, alpha, samples, seed)
        rows.append(_row("gamma-norm", f"hardy_alpha_{alpha:g}", seed, lhs, rhs * (1 + 1e-3),
                         lhs <= rhs * (1 + 1e-3)))
    return rows


def suite_sectorial(sec, seed):
    from .sectorial import SectorialOp, frac_power, measure_angle, sqfn_norm, sqrt_exp
    rows = []
    A1 = SectorialOp([[1.0]])
    v = sqfn_norm(A1, sqrt_exp(), np.array([1.0])).value
    rows.append(_row("sectorial", "sqfn_scalar", seed, abs(v - 1 / math.sqrt(2)), 1e-4,
                     abs(v - 1 / math.sqrt(2)) <= 1e-4))
    lam = np.array(sec.floats("spectrum"))
    A = SectorialOp(np.diag(lam))
    x = rng.stream(seed, rng.tag("cli-sect")).standard_normal(lam.size)
    v = sqfn_norm(A, sqrt_exp(), x).value
    err = abs(v - np.linalg.norm(x) / math.sqrt(2))
    rows.append(_row("sectorial", "sqfn_diagonal", seed, err, 1e-8 * np.linalg.norm(x),
                     err <= 1e-8 * np.linalg.norm(x)))
    H = np.asarray(frac_power(A, 0.5))
    err = float(np.abs(H @ H - A.matrix).max())
    rows.append(_row("sectorial", "half_power_squared", seed, err, 1e-10, err <= 1e-10))
    angle, _ = measure_angle(A)
    rows.append(_row("sectorial", "angle_positive_diagonal", seed, angle, 1e-12, angle <= 1e-12))
    return rows


def suite_maxreg(sec, seed):
    from .maxreg import (resample_average, convolve, dtheta_a1mtheta, extension, log_knots,
                         maxreg_constant, output_grid, random_forcing, trace_zero)
    from .sectorial import SectorialOp
    lam = np.array(sec.floats("spectrum"))
    if np.any(lam <= 0):
        raise InvalidConfigError("[maxreg] spectrum: entries must be positive")
    A = SectorialOp(np.diag(lam))
    rows = []
    C = maxreg_constant(A, sec.int("trials", 1), seed)
    rows.append(_row("maxreg", "constant_diagonal", seed, C, 1.05, C <= 1.05))
    f = random_forcing(A, seed, 0)
    grid = output_grid(A, f)
    # u' = f - A u on interval averages, against the symbol is (is + A)^-1
    a = resample_average(f, grid) - convolve(A, f, grid).averages_Au(grid)
    b = dtheta_a1mtheta(A, f, 1.0, grid).values
    rel = float(np.linalg.norm(a - b) / np.linalg.norm(a))
    tol = sec.float("tolerance")
    rows.append(_row("maxreg", "route_equivalence", seed, rel, tol, rel <= tol))
    x = rng.stream(seed, rng.tag("cli-trace")).standard_normal(lam.size)
    t = log_knots(1e-12 / lam.max(), 1.0 / lam.min())
    err = float(np.linalg.norm(trace_zero(t, extension(A, x, t)) - x) / np.linalg.norm(x))
    rows.append(_row("maxreg", "trace_of_extension", seed, err, 1e-8, err <= 1e-8))
    return rows


def suite_stochastic(sec, seed):
    from .sectorial import SectorialOp
    from .stochastic import (AdaptedProcess, CylindricalBM, ito_integral, stoch_maxreg_constant)
    lam = np.array(sec.floats("spectrum"))
    A = SectorialOp(np.diag(lam))
    samples, levels = sec.int("samples", 2), sec.int("levels", 1)
    rows = []
    for i in range(sec.int("integrands", 1)):
        W = CylindricalBM(2, 1.0, 6, samples, rng.tag(f"cli-ito-{seed}-{i}"))
        g = rng.stream(seed, rng.tag("cli-ito"), i)
        G = AdaptedProcess.deterministic(W.grid, np.repeat(g.standard_normal((8, 3, 2)), 8, 0))
        end = np.sum(ito_integral(G, W).paths[:, -1] ** 2, axis=-1)
        rhs = float(np.sum(G.values ** 2) * W.dt)
        se = float(end.std(ddof=1) / math.sqrt(samples))
        dev = abs(float(end.mean()) - rhs)
        rows.append(_row("stochastic", f"ito_isometry_{i}", seed, dev, 3 * se, dev <= 3 * se))
    C = stoch_maxreg_constant(A, sec.int("trials", 1), samples, 2.0, seed, levels)
    rel = abs(C - 1 / math.sqrt(2)) / (1 / math.sqrt(2))
    rows.append(_row("stochastic", "stoch_maxreg_constant", seed, rel, 0.05, rel <= 0.05))
    return rows


def suite_solve_see(sec, seed):
    from .see_solver import SEEProblem, measure_constants, picard_solve, split_points
    from .stochastic import CylindricalBM
    lam, beta = sec.float("lam"), sec.float("beta")
    if lam <= 0:
        raise InvalidConfigError("[solve-see] lam: must be positive")
    P = SEEProblem.linear(np.array([[lam]]), np.array([1.0]), 1.0, Bs=np.array([[[beta]]]), w=0.0)
    C = measure_constants(P)
    W = CylindricalBM(1, 1.0, sec.int("levels", 1), sec.int("samples", 2), seed)
    ens, rep = picard_solve(P, W, constants=C)
    m, se = ens.second_moment()
    exact = math.exp(beta ** 2 - 2 * lam)
    rows = [_row("solve-see", "second_moment", seed, abs(m - exact), 3 * se,
                 abs(m - exact) <= 3 * se)]
    worst = max(rep["ratios"]) if rep["ratios"] else 0.0
    rows.append(_row("solve-see", "contraction_ratio", seed, worst, C.factor + 0.05,
                     worst <= C.factor + 0.05))
    eps = sec.float("epsilon")
    pts, _ = split_points(lambda t: (1 + t) * np.eye(1), 1.0, eps)
    want = math.ceil(1.0 / eps)
    rows.append(_row("solve-see", "split_count", seed, len(pts) - 1, want,
                     abs(len(pts) - 1 - want) <= 1, margin=1 - abs(len(pts) - 1 - want)))
    return rows


def suite_heat(sec, seed):
    from .heat_lab import NoisePreset, SpectralField, measure_sqfn_norm, mode_growth_rate, simulate
    K, M = sec.int("K", 1), sec.int("M", 3)
    samples, levels = sec.int("samples", 2), sec.int("levels", 1)
    rows = []
    u0 = SpectralField.from_modes({1: 0.5, 2: 0.25}, K, M)
    for b in sec.floats("b"):
        run = simulate(u0, NoisePreset(b=b), 1.0, levels, samples, seed, store_every=2 ** (levels - 6))
        rate, se = mode_growth_rate(run, 1)
        ok = abs(rate - (b * b - 2)) <= 3 * se and np.sign(rate) == np.sign(b * b - 2)
        rows.append(_row("heat", f"growth_rate_b_{b:g}", seed, abs(rate - (b * b - 2)), 3 * se, ok))
        if b * b < 2:
            coarse = simulate(u0, NoisePreset(b=b), 1.0, levels - 1, samples, seed,
                              store_every=2 ** (levels - 7))
            for q in (1.5, 2.0, 4.0):
                v1 = measure_sqfn_norm(coarse, 1, q)["median"]
                v2 = measure_sqfn_norm(run, 1, q)["median"]
                rel = abs(v1 - v2) / v2
                rows.append(_row("heat", f"sqfn_stability_b_{b:g}_q_{q:g}", seed, rel, 0.05,
                                 rel <= 0.05))
    return rows


def suite_tables(sec, seed, out=None):
    from .heat_lab import TABLE_COLUMNS, borderline_field, deterministic_run, exponent_table
    times = np.concatenate([[0.0], np.logspace(-9, 0, 9 * 32 + 1)])
    runs = [deterministic_run(borderline_field(int(K), 3 * int(K) + 2), times)
            for K in sec.floats("K")]
    table = exponent_table(runs, tuple(sec.floats("thetas")))
    if out is not None:
        io.write_csv(os.path.join(out, "exponent_table.csv"), list(TABLE_COLUMNS), table)
    rows = []
    for r in table:
        dev = abs(r["time_exp_measured"] - r["time_exp_paper"])
        rows.append(_row("tables", f"time_exponent_theta_{r['theta']:g}", seed, dev, 0.05,
                         dev <= 0.05 and r["r2"] >= 0.95))
    return rows


RUNNERS = {"gamma-norm": suite_gamma_norm, "sectorial": suite_sectorial, "maxreg": suite_maxreg,
           "stochastic": suite_stochastic, "solve-see": suite_solve_see, "heat": suite_heat,
           "tables": suite_tables}


def _execute(suite, data, seed, out, strict):
    """Run one suite; returns (rows, warnings, error message or None)."""
    sec = Section(None, suite)
    sec.data.update(data)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if suite == "tables":
            rows = RUNNERS[suite](sec, seed, out)
        else:
            rows = RUNNERS[suite](sec, seed)
    msgs = sorted({str(w.message) for w in caught})
    if strict and msgs:
        rows.append(_row(suite, "warnings", seed, len(msgs), 0, False))
    return rows, msgs


def _parser():
    p = argparse.ArgumentParser(prog="gammareg", description="Run gamma-regularity experiment suites.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a suite")
    r.add_argument("suite", choices=SUITES + ("all",))
    r.add_argument("config_path", nargs="?", help="config file (same as --config)")
    r.add_argument("--config", dest="config")
    r.add_argument("--seed", type=int)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out")
    r.add_argument("--strict", action="store_true")
    return p


def run(argv=None):
    args = _parser().parse_args(argv)
    path = args.config or args.config_path
    t0 = time.time()
    try:
        text = ""
        cp = None
        if path:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
            cp = io.read_config(text)
            known = set(SUITES) | {"run"}
            extra = [s for s in cp.sections() if s not in known]
            if extra:
                raise InvalidConfigError(f"unknown sections: {', '.join(extra)}")
        runsec = Section(cp, "run")
        seed = args.seed if args.seed is not None else runsec.int("seed", 0)
        out = args.out or runsec.data["out"]
        suites = SUITES if args.suite == "all" else (args.suite,)
        sections = {s: Section(cp, s) for s in suites}
        if args.jobs < 1:
            raise InvalidConfigError("--jobs must be >= 1")
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return 2
    except (InvalidConfigError, InvalidInputError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    os.makedirs(out, exist_ok=True)
    results = {}
    try:
        if args.jobs > 1 and len(suites) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as ex:
                futs = {s: ex.submit(_execute, s, sections[s].data, seed, out, args.strict)
                        for s in suites}
                results = {s: futs[s].result() for s in suites}
        else:
            results = {s: _execute(s, sections[s].data, seed, out, args.strict) for s in suites}
    except (InvalidConfigError, InvalidInputError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except GammaRegError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    failed = []
    for s in sorted(results):
        rows, _ = results[s]
        io.write_csv(os.path.join(out, f"{s}.csv"), list(COLUMNS), rows)
        for r in rows:
            status = "PASS" if r["passed"] else "FAIL"
            print(f"{status} {s}/{r['check']}: value={r['value']:.6g} bound={r['bound']:.6g} "
                  f"margin={r['margin']:.3g}")
            if not r["passed"]:
                failed.append(f"{s}/{r['check']}")
    manifest = {
        "config": path,
        "config_sha256": hashlib.sha256((text + f"\nseed={seed}").encode()).hexdigest(),
        "seed": seed,
        "suites": sorted(results),
        "versions": {"gammareg": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "wall_clock_s": round(time.time() - t0, 3),
        "warnings": {s: results[s][1] for s in sorted(results)},
        "checks": {f"{s}/{r['check']}": r["passed"] for s in sorted(results) for r in results[s][0]},
        "passed": not failed,
    }
    with open(os.path.join(out, "manifest.json"), "w", newline="\n", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
