"""Command-line entry point.

Precedence for every setting: command-line flag, then the JSON config file,
then built-in defaults.  The output directory additionally falls back to
``$CGUE_OUT`` before the default ``./cgue-out``.

Exit codes: 0 success, 2 invalid input, 3 capacity guard, 4 numerical
non-convergence or infeasibility.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import constraining, density, io, stats
from .basis import critical_count, degeneracy_profile
from .ensembles import generate
from .errors import (AmbiguityError, CapacityError, DivergenceError, InfeasibleError,
                     InvalidArgumentError, NumericFailure, SingularityError)

EXIT_OK, EXIT_INVALID, EXIT_CAPACITY, EXIT_NUMERIC = 0, 2, 3, 4


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InvalidArgumentError("config must be a JSON object")
    return cfg


def _merged(args) -> dict:
    cfg = _load_config(args.config)
    for key in ("seed", "samples", "threads"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _out_dir(args, cfg) -> Path:
    out = io.output_root(args.out, cfg)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_spectra(paths) -> list[np.ndarray]:
    spectra = []
    for p in paths:
        try:
            spectra.extend(ev for _, ev in io.read_spectra_csv(p))
        except OSError as exc:
            raise InvalidArgumentError(str(exc)) from exc
    return spectra


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_sample(args) -> int:
    cfg = _merged(args)
    for key, flag in (("kind", args.kind), ("dim", args.dim)):
        if flag is not None:
            cfg.setdefault("ensemble", {})[key] = flag
    spec = io.spec_from_config(cfg)
    n = int(cfg.get("samples", 10))
    if n < 1:
        raise InvalidArgumentError("samples must be positive")
    out = _out_dir(args, cfg)
    samples = generate(spec, n, threads=int(cfg.get("threads", 1)))
    files = [io.write_spectra_csv(out / "spectra.csv", samples)]
    files.append(io.write_json(out / "spectra.manifest.json",
                               {"ensemble": spec.describe(), "samples": n,
                                "code_version": io.__version__}))
    if spec.constraints is not None:
        files.extend(io.write_constraints(out / "constraints.json", spec.constraints))
    man = io.RunManifest("sample", cfg)
    man.add(*files)
    man.write(out)
    print(f"wrote {n} spectra of dimension {spec.hilbert_dim} to {out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = _merged(args)
    paths = args.spectra or cfg.get("spectra", [])
    if not paths:
        raise InvalidArgumentError("no spectra files given")
    spectra = _load_spectra(paths)
    method = args.method or cfg.get("unfolding", "auto")
    report = stats.fluctuation_report(spectra, method=method)
    ref = stats.gue_reference(200, 100)
    label = stats.classify(report, ref.ratios.mean)
    report.meta.update(classification=label, gue_ratio_reference=ref.ratios.mean,
                       poisson_ratio_reference=stats.POISSON_RATIO_MEAN,
                       inputs=[Path(p).name for p in paths])
    out = _out_dir(args, cfg)
    files = [io.write_json(out / "report.json", report.to_dict())]
    files += [Path(p) for p in report.write_csv(str(out / "report"))]
    if args.svg or cfg.get("svg"):
        files.append(io.write_report_svg(report, out / "report.svg"))
    man = io.RunManifest("stats", cfg)
    man.add(*files)
    man.write(out)
    print(label)
    return EXIT_OK


def cmd_critical(args) -> int:
    cfg = _merged(args)
    ccfg = dict(cfg.get("constraints", {}))
    if args.constraints:
        cs = io.read_constraints(args.constraints)
    else:
        if args.dim is not None:
            ccfg["dim"] = args.dim
        if args.n_q is not None:
            ccfg["n_q"] = args.n_q
        ccfg.setdefault("n_q", 1)
        ccfg.setdefault("seed", cfg.get("seed", 0))
        if "dim" not in ccfg and ccfg.get("generator", "random-traceless") != "explicit":
            raise InvalidArgumentError("critical needs --dim or a constraint file")
        cs = io.constraints_from_config(ccfg)
    try:
        prof = degeneracy_profile(cs, seed=int(cfg.get("seed", 0)))
        rec = {"multiplicities": list(prof.multiplicities), "nq_crit": prof.nq_crit,
               "J": prof.J, "dim": cs.dim, "n_q": cs.n_q,
               "below_critical": cs.n_q < prof.nq_crit,
               "generic_nq_crit": critical_count([1] * cs.dim)}
    except AmbiguityError as exc:
        rec = {"ambiguous": True, "patterns": sorted(str(k) for k in exc.patterns),
               "dim": cs.dim, "n_q": cs.n_q}
    out = _out_dir(args, cfg)
    path = io.write_json(out / "critical.json", rec)
    man = io.RunManifest("critical", cfg)
    man.add(path)
    man.write(out)
    print(rec.get("nq_crit", "ambiguous"))
    return EXIT_OK if "nq_crit" in rec else EXIT_NUMERIC


def cmd_density(args) -> int:
    cfg = _merged(args)
    dcfg = dict(cfg.get("density", {}))
    ccfg = dict(cfg.get("constraints", {}))
    if args.dim is not None:
        ccfg["dim"] = args.dim
    if args.n_q is not None:
        ccfg["n_q"] = args.n_q
    n_max = int(args.n_max if args.n_max is not None else dcfg.get("n_max", density.DEFAULT_N_MAX))
    out = _out_dir(args, cfg)
    n_q = int(ccfg.get("n_q", 0))
    if n_q == 0:
        dm = density.semicircle()
        dm.iterations = 1
        dm.n_max = n_max
        table = None
        n = int(ccfg.get("dim", 0)) or None
    else:
        ccfg.setdefault("seed", cfg.get("seed", 0))
        cs = io.constraints_from_config(ccfg)
        n = cs.dim
        table = constraining.angular_moments(cs, 2 * n_max, int(dcfg.get("angular_samples", 256)),
                                             seed=int(cfg.get("seed", 0)))
        try:
            dm = density.iterate_density(table, n, cs.n_q, n_max,
                                         tol=float(dcfg.get("tol", 1e-8)),
                                         max_iters=int(dcfg.get("max_iters", 200)),
                                         regularized=bool(dcfg.get("regularized", False)))
        except (DivergenceError, InfeasibleError) as exc:
            path = io.write_json(out / "density_failure.json",
                                 {"error": str(exc), "trace": getattr(exc, "trace", None)})
            print(f"density solver failed: {exc}", file=sys.stderr)
            man = io.RunManifest("density", cfg)
            man.add(path)
            man.write(out)
            return EXIT_NUMERIC
    extra = {}
    spectra_paths = args.spectra or cfg.get("spectra", [])
    if spectra_paths:
        ev = np.concatenate(_load_spectra(spectra_paths))
        lam = float(cfg.get("ensemble", {}).get("lambda", 1.0))
        extra["empirical_l1"] = density.empirical_l1(dm, ev, lam)
        extra["empirical_levels"] = int(len(ev))
    files = io.write_density(out / "density", dm, extra)
    man = io.RunManifest("density", cfg)
    man.add(*files)
    man.write(out)
    print(json.dumps({"a": dm.a, "iterations": dm.iterations, "residual": dm.residual, **extra}))
    return EXIT_OK


def cmd_fp(args) -> int:
    cfg = _merged(args)
    fcfg = dict(cfg.get("fp", {}))
    if args.x:
        fcfg["x"] = [float(v) for v in args.x.split(",")]
    if "x" not in fcfg:
        raise InvalidArgumentError("fp needs a spectrum x")
    x = np.asarray(fcfg["x"], dtype=float)
    ccfg = dict(cfg.get("constraints", {"generator": "random-traceless", "n_q": 1}))
    ccfg.setdefault("dim", len(x))
    ccfg.setdefault("seed", cfg.get("seed", 0))
    if args.n_q is not None:
        ccfg["n_q"] = args.n_q
    cs = io.constraints_from_config(ccfg)
    route = args.route or fcfg.get("route", "both")
    lam = float(fcfg.get("lambda", 1.0))
    x_ref = constraining.reference_spectrum(len(x))
    records = []

    def emit(fp, at):
        if fcfg.get("regularized"):
            fp = constraining.tilde_regularize(fp, at, cs.n_q, lam)
        return fp

    for name in (("determinant", "haar-mc") if route == "both" else (route,)):
        if name == "determinant":
            fn = lambda at: constraining.fp_determinant(at, cs, lam)  # noqa: E731
        elif name == "haar-mc":
            fn = lambda at: constraining.fp_haar_mc(  # noqa: E731
                at, cs, float(fcfg.get("sigma", constraining.DEFAULT_SIGMA)),
                int(cfg.get("samples", 100_000)), int(cfg.get("seed", 0)), lam,
                threads=int(cfg.get("threads", 1)))
        else:
            raise InvalidArgumentError(f"unknown route {name!r}")
        val = emit(fn(x), x)
        ref = emit(fn(x_ref), x_ref)
        rec = val.to_record(x=x, x_ref=x_ref)
        rec["reference_value"] = ref.value
        rec["ratio"] = val.value / ref.value if ref.value else None
        records.append(rec)
    out = _out_dir(args, cfg)
    path = io.write_json(out / "fp.json", records)
    man = io.RunManifest("fp", cfg)
    man.add(path)
    man.write(out)
    for rec in records:
        print(f"{rec['route']}: F = {rec['value']:.10g}  ratio to x_ref = {rec['ratio']}")
    return EXIT_OK


def _labels(paths) -> list[str]:
    """File stems, prefixed by the parent directory where stems repeat."""
    stems = [Path(p).stem for p in paths]
    labels = [f"{Path(p).parent.name}_{st}" if stems.count(st) > 1 else st
              for p, st in zip(paths, stems)]
    if len(set(labels)) != len(labels):
        labels = [f"{i}_{lab}" for i, lab in enumerate(labels)]
    return labels


def cmd_report(args) -> int:
    """Fluctuation reports for several spectra files plus their pairwise distances."""
    cfg = _merged(args)
    paths = args.spectra or cfg.get("spectra", [])
    if len(paths) < 2:
        raise InvalidArgumentError("report compares at least two spectra files")
    reports = {label: stats.fluctuation_report(_load_spectra([p]),
                                               method=cfg.get("unfolding", "auto"))
               for label, p in zip(_labels(paths), paths)}
    ref = stats.gue_reference(200, 100)
    names = list(reports)
    summary = {
        "classification": {k: stats.classify(r, ref.ratios.mean) for k, r in reports.items()},
        "ratio_mean": {k: r.ratios.mean for k, r in reports.items()},
        "comparisons": {f"{a}__{b}": stats.compare(reports[a], reports[b])
                        for i, a in enumerate(names) for b in names[i + 1:]},
    }
    out = _out_dir(args, cfg)
    files = [io.write_json(out / "comparison.json", summary)]
    if args.svg or cfg.get("svg"):
        files += [io.write_report_svg(r, out / f"{k}.svg") for k, r in reports.items()]
    man = io.RunManifest("report", cfg)
    man.add(*files)
    man.write(out)
    print(json.dumps(summary["classification"]))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--samples", type=int)
    common.add_argument("--out", help="output directory (default $CGUE_OUT or ./cgue-out)")
    common.add_argument("--threads", type=int)
    common.add_argument("--svg", action="store_true", help="also render SVG plots")

    p = argparse.ArgumentParser(prog="cgue", description="Constrained GUE numerical laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", parents=[common], help="generate ensemble spectra")
    s.add_argument("--kind")
    s.add_argument("--dim", type=int)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("stats", parents=[common], help="fluctuation report for spectra files")
    s.add_argument("spectra", nargs="*")
    s.add_argument("--method", choices=["auto", "polynomial", "semicircle", "ensemble"])
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("critical", parents=[common], help="degeneracy profile and critical count")
    s.add_argument("--constraints", help="constraint manifest record")
    s.add_argument("--dim", type=int)
    s.add_argument("--n-q", type=int, dest="n_q")
    s.set_defaults(func=cmd_critical)

    s = sub.add_parser("density", parents=[common], help="solve for the large-N level density")
    s.add_argument("spectra", nargs="*", help="optional spectra for an empirical overlay")
    s.add_argument("--dim", type=int)
    s.add_argument("--n-q", type=int, dest="n_q")
    s.add_argument("--n-max", type=int, dest="n_max")
    s.set_defaults(func=cmd_density)

    s = sub.add_parser("fp", parents=[common], help="evaluate the constraining function")
    s.add_argument("--x", help="comma-separated eigenvalues")
    s.add_argument("--n-q", type=int, dest="n_q")
    s.add_argument("--route", choices=["determinant", "haar-mc", "both"])
    s.set_defaults(func=cmd_fp)

    s = sub.add_parser("report", parents=[common], help="compare several spectra files")
    s.add_argument("spectra", nargs="*")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"capacity: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (DivergenceError, InfeasibleError, NumericFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidArgumentError, SingularityError, KeyError, TypeError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
