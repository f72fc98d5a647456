"""Command-line front end: scenario commands with CSV/JSON artifacts.

Convention notes that matter when scripting against this tool:

* ``--sw`` and ``--sb`` are standard deviations, not variances.
* Numeric CSV columns are written in scientific notation with 17 significant
  digits, so parsing them back yields the exact double that was computed.
* ``--seed`` fixes every random stream; identical invocations produce
  byte-identical CSV files, and the ``LENMAP_WORKERS`` environment variable
  (parallel trial workers, default: available cores) never changes results.
* Exit codes: 0 success, 2 invalid flags, 3 the theoretical reference map
  diverges where a finite reference is required.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy import __version__ as _scipy_version

from . import __version__
from .activations import audit_permissibility, parse_activation
from .lengthmap import compute_length_map
from .plots import render_cauchy, render_convergence, render_per_init
from .simulator import CaptureSpec, NetworkConfig, simulate_ensemble
from .stats import (
    MapDivergedError,
    UnsupportedActivationError,
    convergence_report,
    cross_moment_gap,
    fit_and_test_distribution,
    theoretical_gap,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3

SQRT2 = math.sqrt(2.0)


def _fmt(v: float) -> str:
    return f"{float(v):.16e}"


def _g(v: float) -> str:
    return f"{float(v):.17g}"


def _activation(text: str):
    try:
        return parse_activation(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err))


def _capture(text: str) -> tuple[int, object]:
    try:
        layer_s, _, unit_s = text.partition(":")
        layer = int(layer_s)
        if unit_s in ("", "all"):
            return layer, "all"
        if "-" in unit_s and "," not in unit_s:
            a, b = unit_s.split("-")
            return layer, tuple(range(int(a), int(b) + 1))
        return layer, tuple(int(u) for u in unit_s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"cannot parse capture spec {text!r}; use LAYER:all, LAYER:3, LAYER:0,1 or LAYER:0-9"
        )


def _input_spec(text: str):
    if text in ("ones", "alternating"):
        return text
    if text.startswith("signs:"):
        try:
            return ("signs", int(text.split(":", 1)[1]))
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(
        f"unknown input spec {text!r}; use ones, alternating, or signs:SEED"
    )


def _seed(text: str) -> int:
    value = int(text, 0)
    if not (0 <= value < 2**64):
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out: Path, command: str, config: dict, seed: int,
                    artifacts: list[Path], t0: float) -> None:
    doc = {
        "command": command,
        "config": config,
        "master_seed": seed,
        "artifacts": sorted(str(p.name) for p in artifacts),
        "wall_clock_seconds": round(time.time() - t0, 3),
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "versions": {
            "artifact": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": _scipy_version,
        },
    }
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_lengthmap(args) -> int:
    t0 = time.time()
    lm = compute_length_map(args.act, args.sw, args.sb, args.depth)
    payload = {
        "activation": lm.activation,
        "sigma_w": lm.sigma_w,
        "sigma_b": lm.sigma_b,
        "depth": lm.depth,
        "layers": [
            {
                "layer": layer,
                "qtilde": float(lm.qtilde[layer]) if lm.q_finite[layer] else None,
                "trtilde": float(lm.trtilde[layer]) if lm.tr_finite[layer] else None,
                "status": lm.status[layer],
            }
            for layer in lm.layers()
        ],
    }
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(f"activation {lm.activation}  sigma_w {_g(lm.sigma_w)}  "
              f"sigma_b {_g(lm.sigma_b)}  depth {lm.depth}")
        print(f"{'layer':>5}  {'qtilde':>24}  {'trtilde':>24}  status")
        for row in payload["layers"]:
            qs = _g(row["qtilde"]) if row["qtilde"] is not None else "diverged"
            ts = _g(row["trtilde"]) if row["trtilde"] is not None else "diverged"
            print(f"{row['layer']:>5}  {qs:>24}  {ts:>24}  {row['status']}")
    out = _out_dir(args)
    if out is not None:
        artifact = out / "lengthmap.json"
        artifact.write_text(json.dumps(payload, indent=2) + "\n")
        _write_manifest(out, "lengthmap", {
            "act": lm.activation, "sw": lm.sigma_w, "sb": lm.sigma_b, "depth": lm.depth,
        }, 0, [artifact], t0)
    return EXIT_OK


def cmd_converge(args) -> int:
    t0 = time.time()
    widths = sorted(set(args.width or [256, 1024, 4096]))
    try:
        report = convergence_report(
            args.act, args.sw, args.sb, args.depth, widths, args.trials,
            args.eps, seed=args.seed, input_spec=args.input,
        )
    except MapDivergedError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGED

    rows = []
    for k, width in enumerate(report.widths):
        for layer in range(1, args.depth + 1):
            rows.append((width, str(layer), report.layer_fraction[k, layer],
                         report.layer_ci_lo[k, layer], report.layer_ci_hi[k, layer]))
        rows.append((width, "all", report.fraction[k], report.ci_lo[k], report.ci_hi[k]))

    payload = {
        "activation": args.act.name,
        "sigma_w": args.sw, "sigma_b": args.sb, "depth": args.depth,
        "epsilon": args.eps, "trials": args.trials, "seed": args.seed,
        "widths": list(report.widths),
        "success_fraction": [float(v) for v in report.fraction],
        "ci_lo": [float(v) for v in report.ci_lo],
        "ci_hi": [float(v) for v in report.ci_hi],
        "overflow_trials": [int(v) for v in report.overflow],
    }
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(f"{'width':>7}  {'success':>19}  {'ci_lo':>19}  {'ci_hi':>19}")
        for k, width in enumerate(report.widths):
            print(f"{width:>7}  {_g(report.fraction[k]):>19}  "
                  f"{_g(report.ci_lo[k]):>19}  {_g(report.ci_hi[k]):>19}")

    out = _out_dir(args)
    if out is not None:
        artifacts = []
        csv_path = out / "converge.csv"
        with csv_path.open("w") as fh:
            fh.write("width,layer,success_fraction,ci_lo,ci_hi\n")
            for width, layer, frac, lo, hi in rows:
                fh.write(f"{width},{layer},{_fmt(frac)},{_fmt(lo)},{_fmt(hi)}\n")
        artifacts.append(csv_path)
        json_path = out / "converge.json"
        json_path.write_text(json.dumps(payload, indent=2) + "\n")
        artifacts.append(json_path)
        if not args.no_plot:
            fig_path = out / "converge.png"
            render_convergence(report, fig_path)
            artifacts.append(fig_path)
        _write_manifest(out, "converge", {
            "act": args.act.name, "sw": args.sw, "sb": args.sb, "depth": args.depth,
            "widths": list(report.widths), "trials": args.trials, "eps": args.eps,
            "input": str(args.input),
        }, args.seed, artifacts, t0)
    return EXIT_OK


def cmd_cauchy(args) -> int:
    t0 = time.time()
    widths = sorted(set(args.width or [10, 100, 1000]))
    layer, units = args.capture
    out = _out_dir(args)
    artifacts = []
    fits = []
    for width in widths:
        lim = args.range if args.range is not None else 5.0 * math.sqrt(width)
        capture = CaptureSpec(layer=layer, units=units, max_samples=args.max_samples,
                              histogram=(args.bins, -lim, lim))
        cfg = NetworkConfig(width=width, depth=args.depth, sigma_w=args.sw,
                            sigma_b=args.sb, activation=args.act,
                            input_spec=args.input, master_seed=args.seed)
        stats = simulate_ensemble(cfg, args.trials, capture=capture)
        values = stats.captured_values()
        gamma_ref = math.sqrt(width)
        fit = fit_and_test_distribution(values, reference=("cauchy", 0.0, gamma_ref))
        fits.append({
            "width": width,
            "trials": args.trials,
            "sample_count": fit.sample_count,
            "cauchy_x0": fit.cauchy_x0,
            "cauchy_gamma": fit.cauchy_gamma,
            "gaussian_sigma": fit.gaussian_sigma,
            "ks_vs_cauchy": fit.ks_vs_cauchy,
            "ks_vs_gaussian": fit.ks_vs_gaussian,
            "reference_gamma": gamma_ref,
            "overflow_trials": stats.overflow_count,
        })
        if out is not None:
            edges = stats.hist_edges
            counts = stats.hist_counts
            total = int(counts.sum())
            binw = edges[1] - edges[0]
            csv_path = out / f"cauchy_hist_N{width}.csv"
            with csv_path.open("w") as fh:
                fh.write("bin_lo,bin_hi,count,density\n")
                fh.write(f"-inf,{_fmt(edges[0])},{counts[0]},{_fmt(0.0)}\n")
                for b in range(args.bins):
                    dens = counts[1 + b] / (total * binw)
                    fh.write(f"{_fmt(edges[b])},{_fmt(edges[b + 1])},{counts[1 + b]},{_fmt(dens)}\n")
                fh.write(f"{_fmt(edges[-1])},inf,{counts[-1]},{_fmt(0.0)}\n")
            artifacts.append(csv_path)
            if not args.no_plot:
                fig_path = out / f"cauchy_N{width}.png"
                render_cauchy(edges, counts[1:-1], total, width, fit, fig_path)
                artifacts.append(fig_path)
                if args.per_init and stats.captured is not None:
                    grid_path = out / f"cauchy_perinit_N{width}.png"
                    render_per_init(stats.captured[:9], width, grid_path)
                    artifacts.append(grid_path)

    if args.json:
        print(json.dumps(fits, indent=2))
    else:
        print(f"{'width':>7}  {'samples':>8}  {'gamma_fit':>14}  {'gamma_ref':>14}  "
              f"{'ks_cauchy':>12}  {'ks_gauss':>12}")
        for f in fits:
            print(f"{f['width']:>7}  {f['sample_count']:>8}  {f['cauchy_gamma']:>14.6g}  "
                  f"{f['reference_gamma']:>14.6g}  {f['ks_vs_cauchy']:>12.5f}  "
                  f"{f['ks_vs_gaussian']:>12.5f}")

    if out is not None:
        json_path = out / "cauchy_fit.json"
        json_path.write_text(json.dumps(fits, indent=2) + "\n")
        artifacts.append(json_path)
        _write_manifest(out, "cauchy", {
            "act": args.act.name, "sw": args.sw, "sb": args.sb, "depth": args.depth,
            "widths": widths, "trials": args.trials, "bins": args.bins,
            "range": args.range, "capture": f"{layer}:{units if units == 'all' else ','.join(map(str, units))}",
            "input": str(args.input),
        }, args.seed, artifacts, t0)
    return EXIT_OK


def cmd_independence(args) -> int:
    t0 = time.time()
    layer, units = args.capture
    if units == "all":
        units = (0, 1)
    if len(units) != 2:
        print("error: independence needs exactly two captured units", file=sys.stderr)
        return EXIT_USAGE
    capture = CaptureSpec(layer=layer, units=units, max_samples=2 * args.trials)
    cfg = NetworkConfig(width=args.N, depth=args.depth, sigma_w=args.sw,
                        sigma_b=args.sb, activation=args.act,
                        input_spec=args.input, master_seed=args.seed)
    stats = simulate_ensemble(cfg, args.trials, capture=capture)
    try:
        theory = theoretical_gap(args.act, args.sw, args.sb, args.N)
    except UnsupportedActivationError:
        theory = float("nan")
    result = cross_moment_gap(stats.captured, theoretical=theory,
                              bootstrap_seed=args.seed)
    payload = {
        "activation": args.act.name,
        "width": args.N,
        "trials": args.trials,
        "pair_count": result.pair_count,
        "gap_estimate": result.gap_estimate,
        "std_error": result.std_error,
        "theoretical_gap": None if math.isnan(result.theoretical_gap) else result.theoretical_gap,
        "z_score": result.z_score,
        "captured_units": list(units),
        "capture_layer": layer,
    }
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(f"empirical gap  {_g(result.gap_estimate)}")
        print(f"std error      {_g(result.std_error)}")
        theo = "n/a" if math.isnan(result.theoretical_gap) else _g(result.theoretical_gap)
        print(f"theoretical    {theo}")
        print(f"z vs zero      {_g(result.z_score)}")
    out = _out_dir(args)
    if out is not None:
        artifact = out / "independence.json"
        artifact.write_text(json.dumps(payload, indent=2) + "\n")
        _write_manifest(out, "independence", {
            "act": args.act.name, "sw": args.sw, "sb": args.sb, "N": args.N,
            "depth": args.depth, "trials": args.trials,
            "capture": f"{layer}:{','.join(map(str, units))}", "input": str(args.input),
        }, args.seed, [artifact], t0)
    return EXIT_OK


def cmd_audit(args) -> int:
    t0 = time.time()
    report = audit_permissibility(args.act)
    payload = {
        "activation": report.activation,
        "verdict": report.verdict,
        "interval_bounded": report.interval_bounded,
        "growth_exponent_estimate": report.growth_exponent_estimate,
        "probe_lo": report.probe_lo,
        "probe_hi": report.probe_hi,
        "notes": report.notes,
    }
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(f"activation             {report.activation}")
        print(f"verdict                {report.verdict}")
        print(f"interval bounded       {report.interval_bounded}")
        print(f"growth exponent est.   {_g(report.growth_exponent_estimate)}")
        print(f"probe range            [{_g(report.probe_lo)}, {_g(report.probe_hi)}]")
        if report.notes:
            print(f"notes                  {report.notes}")
    out = _out_dir(args)
    if out is not None:
        artifact = out / "audit.json"
        artifact.write_text(json.dumps(payload, indent=2) + "\n")
        _write_manifest(out, "audit", {"act": report.activation}, 0, [artifact], t0)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lenmap",
        description="Length-map analysis of random deep networks: theory, "
                    "simulation, and statistical checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, act, sw, sb=0.0, depth, seed=True, sim=False):
        p.add_argument("--act", type=_activation, default=_activation(act) if act else None,
                       required=act is None,
                       help="activation name (relu, heaviside, identity, tanh, "
                            "reciprocal, exp_square:A, scale:C:NAME)")
        p.add_argument("--sw", type=float, default=sw, required=sw is None,
                       help="weight standard deviation (not variance)")
        p.add_argument("--sb", type=float, default=sb,
                       help="bias standard deviation (not variance)")
        p.add_argument("--depth", type=int, default=depth, help="number of layers D")
        if seed:
            p.add_argument("--seed", type=_seed, default=0, help="64-bit master seed")
        if sim:
            p.add_argument("--input", type=_input_spec, default="ones",
                           help="input sign pattern: ones, alternating, signs:SEED")
        p.add_argument("--json", action="store_true", help="emit JSON to stdout")
        p.add_argument("--out", default=None, metavar="DIR",
                       help="directory for artifacts (CSV/JSON/figures + manifest)")

    p = sub.add_parser("lengthmap", help="theoretical per-layer lengths")
    common(p, act=None, sw=None, depth=5, seed=False)
    p.set_defaults(func=cmd_lengthmap)

    p = sub.add_parser("converge", help="success fractions vs width")
    common(p, act="relu", sw=SQRT2, depth=5, sim=True)
    p.add_argument("--width", type=int, action="append", metavar="N",
                   help="network width (repeatable; default 256 1024 4096)")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--eps", type=float, default=0.15, help="deviation tolerance")
    p.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("cauchy", help="heavy-tail reproduction for 1/x networks")
    common(p, act="reciprocal", sw=1.0, depth=2, sim=True)
    p.add_argument("--width", type=int, action="append", metavar="N",
                   help="network width (repeatable; default 10 100 1000)")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--range", type=float, default=None, metavar="R",
                   help="histogram half-range (default 5*sqrt(N) per width)")
    p.add_argument("--capture", type=_capture, default=(2, "all"),
                   metavar="LAYER:UNITS", help="pre-activations to record")
    p.add_argument("--max-samples", type=int, default=200_000,
                   help="cap on raw captured values kept in memory")
    p.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    p.add_argument("--per-init", action="store_true",
                   help="also render a 3x3 grid of single-initialization histograms")
    p.set_defaults(func=cmd_cauchy)

    p = sub.add_parser("independence", help="cross-moment dependence test")
    common(p, act="heaviside", sw=1.0, depth=2, sim=True)
    p.add_argument("--N", type=int, default=10, help="network width")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--capture", type=_capture, default=(2, (0, 1)),
                   metavar="LAYER:UNITS", help="the two units to test")
    p.set_defaults(func=cmd_independence)

    p = sub.add_parser("audit", help="permissibility probe of an activation")
    p.add_argument("--act", type=_activation, required=True)
    p.add_argument("--json", action="store_true", help="emit JSON to stdout")
    p.add_argument("--out", default=None, metavar="DIR")
    p.set_defaults(func=cmd_audit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
