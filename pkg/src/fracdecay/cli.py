"""Command-line experiment runner: ``python -m fracdecay <command> ...``.

Config files are line-oriented ``key = value`` under an ``[experiment]``
header with ``#`` comments.  Vector values are space separated
(``extent = 0 1``); in sweep configs a comma-separated value is a range and
the sweep runs the cartesian product of all ranges.

Exit codes: 0 pass, 1 usage or config error, 2 blow-up, 3 verification failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import itertools
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import operators as ops
from .barriers import BarrierSpec, barrier_trajectory, check_comparison, solve_scalar_ode
from .decay import NotCovered, fit_decay, predicted_rate, verify_bound
from .grid import Grid
from .inequalities import IDENTITY_NAMES, check_identity, run_theorem_table
from .integrator import NormTrace, SimulationConfig, StabilityError, TimeDerivativeSpec, simulate

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_FAILED = 0, 1, 2, 3
TRACE_HEADER = ["t", "s", "norm", "predicted_bound", "ratio"]


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    return "%.17g" % x


# --------------------------------------------------------------------------
# config parsing


def read_config(path: str | os.PathLike) -> dict[str, str]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not parser.has_section("experiment"):
        raise ConfigError("config needs an [experiment] section")
    return dict(parser["experiment"])


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split()]
    except ValueError as exc:
        raise ConfigError(f"expected numbers, got {text!r}") from exc


def _get(cfg, key, default=None, cast=float):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return default
    try:
        return cast(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {cfg[key]!r}") from exc


def _boolean(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _tuples(text: str, width: int) -> tuple[tuple[float, ...], ...]:
    out = []
    for item in text.split():
        parts = item.split(":")
        if len(parts) != width:
            raise ConfigError(f"expected {width} colon-separated numbers, got {item!r}")
        out.append(tuple(float(p) for p in parts))
    return tuple(out)


def build_grid(cfg) -> Grid:
    dim = _get(cfg, "dim", 1, int)
    n = _get(cfg, "n", None, int)
    extent = _floats(cfg.get("extent", "0 1"))
    if len(extent) != 2:
        raise ConfigError("extent takes two numbers a b")
    a, b = extent
    try:
        return Grid(((a, b),) * dim, (n,) * dim)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_operator(cfg, dim: int):
    name = cfg.get("operator", "").strip()
    g = lambda k, d=None: _get(cfg, k, d)  # noqa: E731
    potential = None
    if "a" in cfg or "a_grad" in cfg:
        a0 = tuple(_floats(cfg.get("a", "0")))
        grad = _floats(cfg["a_grad"]) if "a_grad" in cfg else None
        if grad is not None:
            k = len(a0)
            if len(grad) != k * k:
                raise ConfigError("a_grad must hold dim*dim numbers (row-major)")
            grad = tuple(tuple(grad[i * k:(i + 1) * k]) for i in range(k))
        potential = ops.VectorPotential(a0, grad)
    try:
        if name == "laplacian":
            return ops.Laplacian(g("d", 1.0))
        if name == "fractional_laplacian":
            return ops.FractionalLaplacian(g("sigma"), g("d", 1.0), cfg.get("kernel_normalization", "bare"))
        if name == "p_laplacian":
            return ops.PLaplacianPower(g("p"), g("m", 1.0))
        if name == "fractional_p_laplacian":
            return ops.FractionalPLaplacian(g("sigma"), g("p"))
        if name == "sum_fractional_p_laplacians":
            return ops.SumFractionalPLaplacians(_tuples(cfg.get("terms", ""), 3))
        if name == "anisotropic_fractional":
            return ops.AnisotropicFractional(_tuples(cfg.get("axes", ""), 2))
        if name == "porous_medium_1":
            return ops.PorousMediumI(g("sigma"), g("m", 1.0))
        if name == "porous_medium_2":
            return ops.PorousMediumII(g("sigma"))
        if name == "kirchhoff":
            return ops.KirchhoffClassical(g("m0", 1.0), g("b", 0.0))
        if name == "fractional_kirchhoff":
            return ops.KirchhoffFractional(g("sigma"), g("m0", 1.0), g("b", 0.0))
        if name == "magnetic":
            return ops.Magnetic(potential or 0.0)
        if name == "fractional_magnetic":
            return ops.FractionalMagnetic(g("sigma"), potential or 0.0)
        if name == "mean_curvature":
            return ops.MeanCurvature()
        if name == "fractional_mean_curvature":
            return ops.FractionalMeanCurvature(g("sigma"))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"operator {name}: {exc}") from exc
    raise ConfigError(f"unknown operator {name!r}")


def build_time_derivative(cfg) -> TimeDerivativeSpec:
    lam1 = _get(cfg, "lam1", 0.0)
    lam2 = _get(cfg, "lam2", 1.0 - lam1)
    if abs(lam1 + lam2 - 1.0) > 1e-12:
        raise ConfigError(f"invariant lam1 + lam2 = 1 violated (lam1 + lam2 = {lam1 + lam2:g})")
    try:
        return TimeDerivativeSpec(lam1, lam2, _get(cfg, "alpha", 0.5), cfg.get("normalization", "paper"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class Experiment:
    name: str
    outdir: Path
    sim: SimulationConfig
    fit_window: object
    prefer: str | None


def build_experiment(cfg) -> Experiment:
    name = cfg.get("name", "").strip()
    if not name:
        raise ConfigError("missing key 'name'")
    grid = build_grid(cfg)
    op = build_operator(cfg, grid.dim)
    td = build_time_derivative(cfg)
    window = cfg.get("fit_window", "last_half_log").strip()
    if window not in ("last_half_log", "all"):
        bounds = _floats(window)
        if len(bounds) != 2:
            raise ConfigError("fit_window is last_half_log, all, or two numbers")
        window = tuple(bounds)
    prefer = cfg.get("fit_prefer", "predicted").strip()
    if prefer not in ("predicted", "none", "polynomial", "exponential"):
        raise ConfigError(f"bad fit_prefer {prefer!r}")
    try:
        sim = SimulationConfig(
            grid=grid, operator=op, td=td, u0=cfg.get("u0", "eigenfunction").strip(),
            dt=_get(cfg, "dt"), T=_get(cfg, "t_final", None) if "t_final" in cfg else _get(cfg, "t"),
            s_list=tuple(_floats(cfg.get("s_list", "2"))), record_every=_get(cfg, "record_every", 1, int),
            c_stab=_get(cfg, "c_stab", 0.2), check_stability=_get(cfg, "check_stability", True, _boolean),
            initial_options=dict(amplitude=_get(cfg, "amplitude", 1.0), seed=_get(cfg, "seed", 0, int)),
        )
        ops.check_compatible(op, grid)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return Experiment(name, Path(cfg.get("outdir", "runs")), sim, window, prefer)


# --------------------------------------------------------------------------
# output helpers


def write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def report_text(items: list[tuple[str, object]]) -> str:
    return "".join(f"{k}: {v}\n" for k, v in items)


# --------------------------------------------------------------------------
# simulate


def run_experiment(exp: Experiment) -> tuple[int, dict]:
    """Run one experiment, write ``trace.csv`` and ``report.txt``; return exit code and summary."""
    sim = exp.sim
    out = exp.outdir / exp.name
    result = simulate(sim)
    trace = result.trace
    s0 = sim.s_list[0]
    items: list[tuple[str, object]] = [
        ("name", exp.name),
        ("operator", repr(sim.operator)),
        ("time_derivative", f"lam1={fmt(sim.td.lam1)} lam2={fmt(sim.td.lam2)} alpha={fmt(sim.td.alpha)} "
                            f"normalization={sim.td.normalization}"),
        ("grid", f"dim={sim.grid.dim} n={sim.grid.n[0]} extent={sim.grid.extent[0]}"),
        ("dt", fmt(sim.dt)), ("T", fmt(sim.T)), ("recorded_points", trace.times.size),
    ]
    summary: dict = {"name": exp.name}
    rows = []
    code = EXIT_OK
    verdicts = {}
    for s in sim.s_list:
        pred = predicted_rate(sim.operator, sim.td, s, sim.grid.dim)
        norms = trace[s]
        fit = None
        try:
            prefer = pred.kind if exp.prefer == "predicted" and pred.covered else (
                None if exp.prefer in ("none", "predicted") else exp.prefer)
            fit = fit_decay(trace, s, exp.fit_window, prefer=prefer)
        except ValueError as exc:
            items.append((f"fit[s={fmt(s)}]", f"unavailable ({exc})"))
        if pred.covered:
            rate = fit.rate if (pred.kind == "exponential" and fit is not None and fit.kind == "exponential") else None
            try:
                check = verify_bound(trace, pred, s, rate=rate)
                bound = check.C_star_hat * pred.theta(trace.times, check.rate)
                verdicts[s] = check.holds
                items += [(f"predicted[s={fmt(s)}]", f"kind={pred.kind} exponent={pred.exponent} "
                                                    f"gamma={fmt(pred.gamma)} source={pred.source}"),
                          (f"verify_bound[s={fmt(s)}]", f"holds={check.holds} C_star_hat={fmt(check.C_star_hat)} "
                                                       f"rate={check.rate}")]
            except ValueError as exc:
                bound = np.full_like(norms, np.nan)
                verdicts[s] = False
                items.append((f"verify_bound[s={fmt(s)}]", f"failed ({exc})"))
        else:
            bound = np.full_like(norms, np.nan)
            items.append((f"predicted[s={fmt(s)}]", f"not covered: {pred.reason}"))
        if fit is not None:
            items.append((f"fit[s={fmt(s)}]", f"kind={fit.kind} exponent={fit.exponent} rate={fit.rate} "
                                              f"constant={fmt(fit.constant)} residual={fmt(fit.residual)} "
                                              f"window={fit.window}"))
        if s == s0:
            summary.update(
                kind=fit.kind if fit else "", exponent=fit.exponent if fit else None,
                rate=fit.rate if fit else None, predicted_kind=pred.kind,
                predicted_exponent=getattr(pred, "exponent", None),
                holds=verdicts.get(s))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = norms / bound
        for t, n, b, r in zip(trace.times, norms, bound, ratio):
            rows.append((t, s, n, b, r))
    rows.sort(key=lambda r: (r[0], r[1]))
    if trace.blow_up is not None:
        items.append(("blow_up", f"step={trace.blow_up.step} t={fmt(trace.blow_up.time)} {trace.blow_up.reason}"))
        code = EXIT_BLOWUP
    elif verdicts and not all(verdicts.values()):
        code = EXIT_FAILED
    items.append(("exit_code", code))
    write_atomic(out / "trace.csv", csv_text(TRACE_HEADER, [[fmt(x) for x in r] for r in rows]))
    write_atomic(out / "report.txt", report_text(items))
    summary["exit_code"] = code
    return code, summary


def cmd_simulate(args) -> int:
    exp = build_experiment(read_config(args.config))
    if args.outdir:
        exp.outdir = Path(args.outdir)
    code, _ = run_experiment(exp)
    print(f"{exp.name}: exit {code} ({exp.outdir / exp.name})")
    return code


# --------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    names = IDENTITY_NAMES if args.name == "all" else (args.name,)
    if args.name != "all" and args.name not in IDENTITY_NAMES:
        raise ConfigError(f"unknown inequality {args.name!r}; choose from all, {', '.join(IDENTITY_NAMES)}")
    items, failed = [], False
    for name in names:
        r = check_identity(name, args.samples, args.seed)
        failed |= not r.passed
        line = f"passed={r.passed} worst_margin={fmt(r.worst_margin)} samples={r.samples}"
        if not r.passed:
            line += f" worst_sample={r.worst_sample}"
        items.append((name, line))
        print(f"{name}: {line}")
    if args.name == "all":
        for res in run_theorem_table(seed=args.seed):
            e = res.entry
            c = " ".join(f"n{n}={fmt(rep.C_hat)}" for n, rep in res.reports.items())
            v = sum(rep.violations for rep in res.reports.values())
            line = f"passed={res.passed} violations={v} C_hat {c} stability={fmt(res.stability)}"
            failed |= not res.passed
            key = f"structural[{e.label} s={fmt(e.s)} gamma={fmt(e.gamma)}]"
            items.append((key, line))
            print(f"{key}: {line}")
    write_atomic(Path(args.outdir) / f"verify_{args.name}" / "report.txt", report_text(items))
    return EXIT_FAILED if failed else EXIT_OK


# --------------------------------------------------------------------------
# barrier


def cmd_barrier(args) -> int:
    try:
        spec = BarrierSpec(args.kind, args.u0, args.nu, args.gamma, args.alpha if args.kind == "mixed_vz15" else None)
        lam1 = args.lam1 if args.kind == "mixed_vz15" else 0.0
        v = solve_scalar_ode(lam1, 1.0 - lam1, args.alpha, args.nu, args.gamma, args.v0, args.T, args.dt,
                             args.normalization)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    w = barrier_trajectory(spec, v.times, lam1, 1.0 - lam1, normalization=args.normalization)
    rep = check_comparison(w, v)
    out = Path(args.outdir) / args.name
    write_atomic(out / "barrier.csv", csv_text(["t", "w", "v"], [
        (fmt(t), fmt(a), fmt(b)) for t, a, b in zip(v.times, w.values, v.values)]))
    items = [("kind", spec.kind), ("t0", fmt(spec.t0)), ("K", fmt(spec.K)),
             ("is_super", rep.is_super), ("is_sub", rep.is_sub), ("ordered", rep.ordered),
             ("hypothesis_w0_gt_v0", rep.hypothesis), ("worst_super_residual", fmt(rep.worst_super_residual)),
             ("worst_sub_residual", fmt(rep.worst_sub_residual)), ("min_gap", fmt(rep.min_gap)),
             ("tolerance", fmt(rep.tolerance))]
    write_atomic(out / "report.txt", report_text(items))
    print(report_text(items), end="")
    return EXIT_OK if rep.ordered and rep.is_super else EXIT_FAILED


# --------------------------------------------------------------------------
# fit


def read_trace(path, s: float | None = None) -> tuple[NormTrace, float]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"t", "s", "norm"} <= set(reader.fieldnames):
                raise ConfigError("trace needs columns t, s, norm")
            rows = [(float(r["t"]), float(r["s"]), float(r["norm"])) for r in reader]
    except OSError as exc:
        raise ConfigError(f"cannot read trace {path}: {exc}") from exc
    if not rows:
        raise ConfigError("trace is empty")
    arr = np.array(rows)
    s = float(arr[0, 1]) if s is None else float(s)
    sel = arr[arr[:, 1] == s]
    if sel.size == 0:
        raise ConfigError(f"trace has no rows with s = {s:g}")
    return NormTrace(sel[:, 0], {s: sel[:, 2]}), s


def cmd_fit(args) -> int:
    trace, s = read_trace(args.trace, args.s)
    window = args.window
    if window not in ("last_half_log", "all"):
        window = tuple(_floats(window.replace(",", " ")))
    try:
        fit = fit_decay(trace, s, window, prefer=args.prefer)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(report_text([("s", fmt(s)), ("kind", fit.kind), ("exponent", fit.exponent), ("rate", fit.rate),
                       ("constant", fmt(fit.constant)), ("residual", fmt(fit.residual)),
                       ("window", fit.window)]), end="")
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep


def expand_sweep(cfg: dict[str, str]) -> tuple[list[str], list[dict[str, str]]]:
    ranged = {}
    for key, value in cfg.items():
        if "," in value:
            items = [v.strip() for v in value.split(",") if v.strip()]
            if not items:
                raise ConfigError(f"empty range for key {key!r}")
            ranged[key] = items
        elif key in ("alpha", "lam1", "operator", "sigma") and not value.strip():
            raise ConfigError(f"empty range for key {key!r}")
    keys = list(ranged)
    cells = []
    for combo in itertools.product(*(ranged[k] for k in keys)):
        cell = dict(cfg)
        cell.update(zip(keys, combo))
        cells.append(cell)
    return keys, cells


def _run_cell(args) -> tuple[int, dict]:
    cell, name, outdir = args
    cell = dict(cell, name=name, outdir=str(outdir))
    try:
        exp = build_experiment(cell)
        return run_experiment(exp)
    except (ConfigError, StabilityError) as exc:
        return EXIT_CONFIG, {"name": name, "exit_code": EXIT_CONFIG, "error": str(exc)}


def thread_cap() -> int:
    env = os.environ.get("FRACDECAY_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"FRACDECAY_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def cmd_sweep(args) -> int:
    cfg = read_config(args.config)
    name = cfg.get("name", "").strip()
    if not name:
        raise ConfigError("missing key 'name'")
    keys, cells = expand_sweep(cfg)
    outdir = Path(args.outdir or cfg.get("outdir", "runs")) / name
    # validate every cell before running any
    for cell in cells:
        build_experiment(dict(cell, name="check", outdir=str(outdir)))
    jobs = [(cell, f"cell_{i:03d}", outdir) for i, cell in enumerate(cells)]
    workers = min(thread_cap(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    header = ["cell"] + keys + ["kind", "exponent", "rate", "predicted_kind", "predicted_exponent", "holds",
                                "exit_code"]
    rows = []
    for (cell, cname, _), (code, summ) in zip(jobs, results):
        if "error" in summ:
            print(f"{cname}: {summ['error']}", file=sys.stderr)
        vals = [summ.get(k) for k in ("kind", "exponent", "rate", "predicted_kind", "predicted_exponent", "holds")]
        vals = [fmt(v) if isinstance(v, float) else ("" if v is None else str(v)) for v in vals]
        rows.append([cname] + [cell[k] for k in keys] + vals + [str(code)])
    write_atomic(outdir / "summary.csv", csv_text(header, rows))
    print(csv_text(header, rows), end="")
    codes = [c for c, _ in results]
    return max(codes) if codes else EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracdecay", description="Decay experiments for mixed time-derivative diffusion.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="run one experiment config")
    sp.add_argument("config")
    sp.add_argument("--outdir")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify", help="sample an inequality (or all of them)")
    sp.add_argument("name")
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--outdir", default="runs")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("barrier", help="compare a barrier with the scalar ODE solution")
    sp.add_argument("--kind", default="mixed_vz15", choices=["mixed_vz15", "classical_exp", "classical_power"])
    sp.add_argument("--u0", type=float, default=1.0)
    sp.add_argument("--v0", type=float, default=0.99)
    sp.add_argument("--nu", type=float, default=1.0)
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--lam1", type=float, default=0.5)
    sp.add_argument("--T", type=float, default=20.0)
    sp.add_argument("--dt", type=float, default=0.01)
    sp.add_argument("--normalization", default="standard", choices=["paper", "standard"])
    sp.add_argument("--outdir", default="runs")
    sp.add_argument("--name", default="barrier")
    sp.set_defaults(func=cmd_barrier)

    sp = sub.add_parser("fit", help="fit a decay law to a trace.csv")
    sp.add_argument("trace")
    sp.add_argument("--s", type=float)
    sp.add_argument("--window", default="last_half_log")
    sp.add_argument("--prefer", choices=["polynomial", "exponential"])
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("sweep", help="run the cartesian product of ranged config keys")
    sp.add_argument("config")
    sp.add_argument("--outdir")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, StabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
