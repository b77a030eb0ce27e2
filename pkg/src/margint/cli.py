"""Command line front end.

Subcommands: fit, predict, cv, theory, simulate, kernel-info.  Exit codes:
0 success, 2 validation error, 3 numerical error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import asymptotics, bandwidth, simulate
from .data import EvaluationGrid, read_csv
from .errors import (AllPointsFailedError, DataFormatError,
                     DegenerateScaleError, InsufficientSupportError,
                     MargintError, SingularDesignError)
from .integration import (AdditiveFit, ComponentEstimate, IntegrationMeasure,
                          fit_additive)
from .kernels import (BandwidthSpec, KernelSpec, kernel_moment,
                      moment_matrix_S, variance_matrix_V, vector_s_q)
from .localfit import LocalFitConfig
from .losses import DEFAULT_HUBER_C, LossSpec
from .scale import ScaleEstimate, residual_scale

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_NUMERICAL = (DegenerateScaleError, SingularDesignError,
              InsufficientSupportError, AllPointsFailedError)


def _parse_box(text: str) -> np.ndarray:
    try:
        rows = [[float(v) for v in part.split(":")] for part in text.split(",")]
        box = np.asarray(rows, dtype=float)
        if box.shape[1] != 2:
            raise ValueError
    except ValueError:
        raise MargintError(f"cannot parse box spec {text!r}; "
                           "expected lo:hi,lo:hi,...") from None
    return box


def _loss_from_args(args) -> LossSpec:
    c = args.c if args.c is not None else DEFAULT_HUBER_C
    return LossSpec(args.loss, c)


def _write_component_csv(comp: ComponentEstimate, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("grid,value,n_failed\n")
        for i, (xg, v) in enumerate(zip(comp.grid.points, comp.values)):
            nf = int(comp.n_failed[i]) if comp.n_failed is not None else 0
            val = "NA" if not np.isfinite(v) else repr(float(v))
            fh.write(f"{float(xg)!r},{val},{nf}\n")


def _read_component_csv(path: str, alpha: int, center: float,
                        m: int) -> ComponentEstimate:
    grid_pts, values, n_failed, failures = [], [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "grid,value,n_failed":
            raise DataFormatError(f"{path}: unexpected component header")
        for i, line in enumerate(fh):
            parts = line.strip().split(",")
            if len(parts) != 3:
                raise DataFormatError(f"{path}: malformed component row")
            grid_pts.append(float(parts[0]))
            values.append(np.nan if parts[1] == "NA" else float(parts[1]))
            n_failed.append(int(parts[2]))
            if n_failed[-1] * 2 > m:
                failures.append(i)
    return ComponentEstimate(
        alpha=alpha, nu=0,
        grid=EvaluationGrid(alpha, np.asarray(grid_pts)),
        values=np.asarray(values), failures=failures,
        n_failed=np.asarray(n_failed, dtype=np.int64), center=center)


def _write_manifest(path: str, entries: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, val in entries.items():
            fh.write(f"{key}={val}\n")


def _read_manifest(path: str) -> dict:
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            key, _, val = line.partition("=")
            entries[key] = val
    return entries


def cmd_fit(args) -> int:
    data = read_csv(args.input, has_delta=args.has_delta)
    box = _parse_box(args.box)
    if box.shape[0] != data.d:
        raise MargintError("box dimension does not match the data")
    loss = _loss_from_args(args)
    bw = BandwidthSpec(args.h, args.htilde)
    measure = IntegrationMeasure(kind="uniform_box", box=box, m=args.m,
                                 seed=args.seed)
    if loss.family == "ls":
        scale = ScaleEstimate.fixed(1.0)
    else:
        scale = residual_scale(data, args.scale_bandwidth,
                               mode=args.scale_mode)
    grids = [EvaluationGrid(a + 1, np.linspace(box[a, 0], box[a, 1],
                                               args.grid_size))
             for a in range(data.d)]
    ka = KernelSpec(args.kernel_alpha)
    kn = KernelSpec(args.kernel_nuisance)

    def cfg_for(alpha):
        return LocalFitConfig(alpha=alpha, q=args.q, bw=bw, kernel_alpha=ka,
                              kernel_nuisance=kn, loss=loss)

    location = "mean" if loss.family == "ls" else "median"
    fit = fit_additive(data, cfg_for, scale, measure, grids,
                       location=location)
    os.makedirs(args.out, exist_ok=True)
    entries = {
        "d": data.d, "q": args.q, "loss": loss.family, "c": repr(loss.c),
        "h": repr(args.h), "htilde": repr(args.htilde),
        "kernel_alpha": args.kernel_alpha,
        "kernel_nuisance": args.kernel_nuisance,
        "m": args.m, "seed": args.seed,
        "box": args.box, "grid_size": args.grid_size,
        "scale_mode": args.scale_mode,
        "sigma": repr(scale.value) if scale.is_global else "local",
        "mu": repr(fit.mu), "mu_location": repr(fit.mu_location),
    }
    for comp in fit.components:
        name = f"component_g{comp.alpha}.csv"
        _write_component_csv(comp, os.path.join(args.out, name))
        entries[f"component_g{comp.alpha}"] = name
        entries[f"center_g{comp.alpha}"] = repr(comp.center)
    _write_manifest(os.path.join(args.out, "manifest.txt"), entries)
    print(f"fit written to {args.out} (mu={fit.mu:.6g})")
    return EXIT_OK


def cmd_predict(args) -> int:
    manifest = _read_manifest(args.manifest)
    d = int(manifest["d"])
    base = os.path.dirname(os.path.abspath(args.manifest))
    comps = []
    for alpha in range(1, d + 1):
        name = manifest[f"component_g{alpha}"]
        center = float(manifest[f"center_g{alpha}"])
        comps.append(_read_component_csv(os.path.join(base, name), alpha,
                                         center, int(manifest["m"])))
    mu = float(manifest["mu"])
    data = read_csv(args.input, has_delta=args.has_delta)
    if data.d != d:
        raise MargintError("input dimension does not match the manifest")
    fit = AdditiveFit(components=comps, mu=mu,
                      mu_location=float(manifest["mu_location"]),
                      scale=ScaleEstimate.fixed(1.0))
    preds = fit.predict_many(data.x, clamp=args.clamp)
    with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("prediction\n")
        for v in preds:
            fh.write(repr(float(v)) + "\n")
    print(f"{preds.size} predictions written to {args.output}")
    return EXIT_OK


def cmd_cv(args) -> int:
    data = read_csv(args.input, has_delta=args.has_delta)
    box = _parse_box(args.box)
    measure = IntegrationMeasure(kind="uniform_box", box=box, m=args.m,
                                 seed=(args.seed, 17))
    grids = [EvaluationGrid(a + 1, np.linspace(box[a, 0], box[a, 1],
                                               args.grid_size))
             for a in range(data.d)]
    cfg = bandwidth.CvConfig(grid_h=tuple(args.grid_h),
                             grid_htilde=tuple(args.grid_htilde),
                             k=args.folds, seed=args.seed,
                             criterion=args.cv,
                             extend_grid_once=args.extend_grid)
    kn = KernelSpec(args.kernel_nuisance)
    common = dict(q=args.q, kernel_nuisance=kn, scale_bw=args.scale_bandwidth)
    if args.cv == "classical":
        result = bandwidth.cv_classical(data, cfg, measure, grids, **common)
    else:
        result = bandwidth.cv_robust(data, cfg, measure, grids,
                                     loss=_loss_from_args(args), **common)
    table = {f"{h}:{ht}": (None if not np.isfinite(v) else v)
             for (h, ht), v in result.table.items()}
    print(json.dumps({"best_h": result.best[0], "best_htilde": result.best[1],
                      "fold_sizes": result.fold_sizes, "table": table},
                     indent=2, sort_keys=True))
    return EXIT_OK


def cmd_theory(args) -> int:
    loss = _loss_from_args(args)
    spec = asymptotics.AsymptoticSpec(
        q=args.q, nu=args.nu, kernel_alpha=KernelSpec(args.kernel),
        loss=loss, sigma=args.sigma, beta_rate=args.beta_rate,
        design_integral=args.design_integral)
    out = {
        "v_psi": asymptotics.v_psi(loss),
        "variance": asymptotics.theoretical_variance(spec),
    }
    if args.g_deriv is not None:
        out["bias"] = asymptotics.theoretical_bias(spec, args.g_deriv)
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = simulate.ScenarioConfig(design=args.design, n=args.n,
                                  contamination=args.contamination,
                                  missing=args.missing, seed=args.seed)
    estimators = [
        simulate.EstimatorSpec("classical", LossSpec("ls"),
                               BandwidthSpec(args.h, args.htilde)),
        simulate.EstimatorSpec("robust", _loss_from_args(args),
                               BandwidthSpec(args.h, args.htilde)),
    ]
    report = simulate.run_study(cfg, args.reps, estimators, args.seed,
                                m_integration=args.m,
                                grid_size=args.grid_size,
                                n_workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.json"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json())
    with open(os.path.join(args.out, "summary.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(report.summary_csv())
    with open(os.path.join(args.out, "components.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(report.components_csv())
    sys.stdout.write(report.summary_csv())
    if report.failures:
        print(f"{len(report.failures)} replication(s) failed and were skipped")
    return EXIT_OK


def cmd_kernel_info(args) -> int:
    spec = KernelSpec(args.family)
    out = {
        "family": spec.family,
        "order": spec.order,
        "nonnegative": spec.nonnegative,
        "moments": {str(p): kernel_moment(spec, p) for p in range(0, 7)},
        "squared_moments": {str(p): kernel_moment(spec, p, squared=True)
                            for p in range(0, 7)},
    }
    try:
        out["moment_matrix_S"] = moment_matrix_S(spec, args.q).tolist()
    except MargintError as exc:
        out["moment_matrix_S"] = str(exc)
    out["variance_matrix_V"] = variance_matrix_V(spec, args.q).tolist()
    out["vector_s_q"] = vector_s_q(spec, args.q).tolist()
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _expand_config(argv: list) -> list:
    """Replace ``--config FILE`` with the file's key=value pairs.

    The expanded tokens are inserted right after the subcommand so explicit
    flags given on the command line override the file (argparse last-wins).
    """
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise MargintError("--config requires a file path")
    path = argv[i + 1]
    tokens = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not key or not val:
                raise MargintError(f"{path}: malformed config line {line!r}")
            if val.lower() in ("true", "false"):
                if val.lower() == "true":
                    tokens.append(f"--{key}")
            else:
                tokens.extend([f"--{key}", val])
    rest = argv[:i] + argv[i + 2:]
    if not rest:
        raise MargintError("--config must follow a subcommand")
    return [rest[0]] + tokens + rest[1:]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="margint",
        description="Robust marginal-integration additive model estimation",
        epilog="Every subcommand also accepts --config FILE, a key=value "
               "text file supplying flag defaults (explicit flags override).")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_loss(p, default="huber"):
        p.add_argument("--loss", choices=("ls", "huber", "tukey"),
                       default=default)
        p.add_argument("--c", type=float, default=None,
                       help="loss tuning constant (default 1.345)")

    p = sub.add_parser("fit", help="fit all additive components")
    p.add_argument("--input", required=True)
    p.add_argument("--has-delta", action="store_true")
    add_loss(p)
    p.add_argument("--q", type=int, default=1)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--htilde", type=float, required=True)
    p.add_argument("--kernel-alpha", default="epanechnikov")
    p.add_argument("--kernel-nuisance", default="epanechnikov")
    p.add_argument("--box", required=True,
                   help="integration box, e.g. 0:1,0:1")
    p.add_argument("--m", type=int, default=500)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--grid-size", type=int, default=101)
    p.add_argument("--scale-bandwidth", type=float, default=0.1)
    p.add_argument("--scale-mode", choices=("global", "local"),
                   default="global")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict from a fit manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--has-delta", action="store_true")
    p.add_argument("--clamp", action="store_true")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="K-fold bandwidth selection")
    p.add_argument("--input", required=True)
    p.add_argument("--has-delta", action="store_true")
    p.add_argument("--cv", choices=("classical", "robust"), required=True)
    add_loss(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--grid-h", type=_float_list, required=True)
    p.add_argument("--grid-htilde", type=_float_list, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--q", type=int, default=1)
    p.add_argument("--kernel-nuisance", default="epanechnikov")
    p.add_argument("--box", required=True)
    p.add_argument("--m", type=int, default=200)
    p.add_argument("--grid-size", type=int, default=51)
    p.add_argument("--scale-bandwidth", type=float, default=0.1)
    p.add_argument("--extend-grid", action="store_true")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("theory", help="asymptotic bias/variance evaluation")
    add_loss(p)
    p.add_argument("--q", type=int, default=1)
    p.add_argument("--nu", type=int, default=0)
    p.add_argument("--kernel", default="epanechnikov")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--beta-rate", type=float, default=1.0)
    p.add_argument("--design-integral", type=float, default=1.0)
    p.add_argument("--g-deriv", type=float, default=None)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    p.add_argument("--design", choices=("d2", "d4"), required=True)
    p.add_argument("--contamination", choices=("c0", "c1", "c2", "c3"),
                   default="c0")
    p.add_argument("--missing", choices=("full", "p2"), default="full")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    add_loss(p)
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--htilde", type=float, default=0.1)
    p.add_argument("--m", type=int, default=500)
    p.add_argument("--grid-size", type=int, default=101)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("kernel-info", help="print kernel moment objects")
    p.add_argument("--family", required=True)
    p.add_argument("--q", type=int, default=1)
    p.set_defaults(func=cmd_kernel_info)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        argv = _expand_config(list(argv))
    except MargintError as exc:
        print(f"error:validation:{exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error:io:{exc}", file=sys.stderr)
        return EXIT_IO
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except _NUMERICAL as exc:
        print(f"error:numerical:{exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DataFormatError as exc:
        print(f"error:validation:{exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MargintError as exc:
        print(f"error:validation:{exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error:io:{exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
