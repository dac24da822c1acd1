"""Command line interface.

Subcommands:

* fit         fit a model to a CSV dataset, write model JSON
* predict     evaluate a saved model on new covariate rows
* check       certify shape conditions on a long-format grid CSV
* cv          cross-validate the total-weight cap over a grid
* experiment  repeated-split comparison of a model roster (plan JSON)
* rate-sanity synthetic risk-versus-sample-size run

Every command exits 0 on success, 1 on a usage error, 2 on a data error,
3 on solver non-convergence; check exits 1 when the certificate fails.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .data_io import (
    DataError,
    load_csv,
    load_matrix_csv,
    load_model,
    save_model,
)
from .estimators import (
    AcFittedModel,
    complexity,
    cross_validate_V,
    fit,
    predict,
    predict_axial,
)
from .harness import (
    SYNTHETIC_TRUTHS,
    BaselineSpec,
    ExperimentPlan,
    rate_sanity,
    run_experiment,
    write_experiment_reports,
)
from .hinge_basis import ModelSpec
from .shape_calculus import (
    GridFunction,
    certify_axial_concavity,
    certify_total_concavity,
    grid_from_points,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SOLVER = 3


class UsageError(Exception):
    """Bad flag combination detected after argument parsing."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _fmt(x: float) -> str:
    return repr(float(x))


def _add_data_options(sp, response: bool = True) -> None:
    if response:
        sp.add_argument(
            "--response-column", default="-1", metavar="COL",
            help="response column as name or integer index; integers may be "
                 "negative, default -1 (last column)",
        )
    sp.add_argument(
        "--no-header", action="store_true",
        help="treat the first CSV row as data, not column names",
    )


def _add_spec_options(sp) -> None:
    sp.add_argument(
        "--variant", default="tc", choices=("tc", "tc-l", "tc-l-i", "axial"),
        help="estimator variant (default tc)",
    )
    sp.add_argument("--s", type=int, default=None,
                    help="interaction order bound (required unless axial)")
    sp.add_argument("--p", type=int, default=None,
                    help="leading shape-constrained covariate count (tc-l, tc-l-i)")
    sp.add_argument("--q", type=int, default=None,
                    help="leading interaction-eligible covariate count (tc-l-i)")
    sp.add_argument("--shape", default="concave", choices=("concave", "convex"),
                    help="fit shape (default concave)")
    sp.add_argument("--proxy", default=None, metavar="N1,N2,...",
                    help="equally spaced proxy knot counts per covariate")


def _add_solver_options(sp) -> None:
    sp.add_argument("--tol", type=float, default=1e-8,
                    help="solver tolerance (default 1e-8)")
    sp.add_argument("--max-iter", type=int, default=None,
                    help="solver iteration budget (default: 50000, or "
                         "200000 for the axial grid solver)")


def _response_column(args):
    try:
        return int(args.response_column)
    except ValueError:
        return args.response_column


def _parse_proxy(text):
    if text is None:
        return None
    try:
        return tuple(int(tok) for tok in text.split(","))
    except ValueError:
        raise UsageError(f"--proxy expects comma-separated integers, got {text!r}")


def _build_spec(args, allow_cap: bool = True) -> ModelSpec:
    variant = args.variant.replace("-", "_")
    v_cap = getattr(args, "v_cap", None) if allow_cap else None
    proxy = _parse_proxy(args.proxy)
    if variant == "axial":
        if v_cap is not None:
            raise UsageError("--v-cap does not apply to the axial variant")
        if proxy is not None:
            raise UsageError("--proxy does not apply to the axial variant")
    elif args.s is None:
        raise UsageError(f"--s is required for variant {args.variant}")
    try:
        return ModelSpec(variant=variant, s=args.s, p=args.p, q=args.q,
                         shape=args.shape, V_cap=v_cap, proxy_counts=proxy)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _validated(spec: ModelSpec, d: int) -> ModelSpec:
    try:
        spec.validate_for_dimension(d)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return spec


def cmd_fit(args) -> int:
    spec = _build_spec(args)
    dataset = load_csv(args.data, _response_column(args), header=not args.no_header)
    _validated(spec, dataset.d)
    model = fit(dataset, spec, tol=args.tol, max_iter=args.max_iter)

    if isinstance(model, AcFittedModel):
        summary = (
            f"fit: variant=axial shape={model.shape} n={dataset.n} d={dataset.d} "
            f"grid_nodes={model.theta.size} sse={model.training_sse:.6g}"
        )
    else:
        summary = (
            f"fit: variant={args.variant} shape={spec.shape} s={spec.s} "
            f"n={dataset.n} d={dataset.d} sse={model.training_sse:.6g} "
            f"total_hinge_weight={complexity(model):.6g}"
        )
    if args.output:
        save_model(model, args.output)
        print(summary)
        print(f"wrote {args.output}")
    else:
        json.dump(model.to_dict(), sys.stdout, indent=2)
        sys.stdout.write("\n")
        print(summary, file=sys.stderr)
    if not model.converged:
        diag = model.solver_diag or {}
        print(
            "warning: solver did not converge within "
            f"{args.max_iter} iterations (diagnostics: {diag})",
            file=sys.stderr,
        )
        return EXIT_SOLVER
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    X, _ = load_matrix_csv(args.data, header=not args.no_header)
    try:
        if isinstance(model, AcFittedModel):
            yhat, mask = predict_axial(model, X)
        else:
            yhat, mask = predict(model, X)
    except ValueError as exc:
        raise DataError(str(exc)) from None

    lines = ["prediction,extrapolated"]
    lines += [f"{_fmt(v)},{int(flag)}" for v, flag in zip(yhat, mask)]
    text = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
        print(f"wrote {args.output} ({len(yhat)} rows)")
    else:
        sys.stdout.write(text)
    n_out = int(mask.sum())
    if n_out:
        print(f"note: {n_out} rows outside the training range (flagged)",
              file=sys.stderr)
    return EXIT_OK


def cmd_check(args) -> int:
    mat, _ = load_matrix_csv(args.grid, header=not args.no_header)
    if mat.shape[1] < 2:
        raise DataError(
            f"{args.grid}: need at least one coordinate column plus one value column"
        )
    try:
        g = grid_from_points(mat[:, :-1], mat[:, -1])
    except ValueError as exc:
        raise DataError(f"{args.grid}: {exc}") from None

    variant = args.variant.replace("-", "_")
    if variant == "axial":
        if args.shape == "convex":
            g = GridFunction(breakpoints=g.breakpoints, values=-g.values)
        report = certify_axial_concavity(g, tol=args.tol)
    elif variant == "tc":
        s = args.s if args.s is not None else g.d
        if not 1 <= s <= g.d:
            raise UsageError(f"--s must lie in 1..{g.d} for this grid, got {s}")
        report = certify_total_concavity(g, s=s, shape=args.shape, tol=args.tol)
    else:
        raise UsageError("check supports --variant tc or axial")

    print(f"grid: {g.d} axes, sizes {tuple(len(u) for u in g.breakpoints)}")
    print(f"tolerance: {report.tolerance:.6g}")
    for name, fam in report.families.items():
        if fam["vacuous"]:
            print(f"  {name}: vacuous (axis too short)")
            continue
        status = "ok" if fam["worst_violation"] <= report.tolerance else "VIOLATED"
        print(
            f"  {name}: worst {fam['worst_violation']:.6g} "
            f"at window {fam['at_index']} [{status}]"
        )
    print(f"certificate: {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_USAGE


def cmd_cv(args) -> int:
    spec = _build_spec(args, allow_cap=False)
    dataset = load_csv(args.data, _response_column(args), header=not args.no_header)
    _validated(spec, dataset.d)
    if args.v_grid == "auto":
        grid = None
    else:
        try:
            grid = tuple(float(tok) for tok in args.v_grid.split(","))
        except ValueError:
            raise UsageError(
                f"--v-grid expects 'auto' or comma-separated numbers, got {args.v_grid!r}"
            ) from None
    result = cross_validate_V(dataset, spec, V_grid=grid, folds=args.folds,
                              seed=args.seed, tol=args.tol, max_iter=args.max_iter)

    print(f"selected V = {_fmt(result.selected_V)}")
    print("V,mean_mse")
    for v, mse in zip(result.V_grid, result.mean_mse):
        print(f"{_fmt(v)},{_fmt(mse)}")
    if args.output:
        folds = result.fold_mse.shape[0]
        with open(args.output, "w") as fh:
            fold_cols = ",".join(f"fold_{k}" for k in range(folds))
            fh.write(f"V,mean_mse,{fold_cols}\n")
            for vi, v in enumerate(result.V_grid):
                cells = [_fmt(v), _fmt(result.mean_mse[vi])]
                cells += [_fmt(result.fold_mse[k, vi]) for k in range(folds)]
                fh.write(",".join(cells) + "\n")
        print(f"wrote {args.output}")
    return EXIT_OK


def _plan_from_doc(doc) -> ExperimentPlan:
    if not isinstance(doc, dict):
        raise DataError("plan file must hold a JSON object")
    try:
        repetitions = int(doc["repetitions"])
        train_fraction = float(doc["train_fraction"])
        seed = int(doc.get("seed", 0))
        entries = doc["roster"]
        roster = []
        for entry in entries:
            name = str(entry["name"])
            kind = entry.get("kind", "estimator")
            if kind == "baseline":
                terms = tuple(tuple(int(e) for e in t) for t in entry["terms"])
                roster.append((name, BaselineSpec(name=name, terms=terms)))
            elif kind == "estimator":
                variant = str(entry.get("variant", "tc")).replace("-", "_")
                spec = ModelSpec(
                    variant=variant,
                    s=entry.get("s"),
                    p=entry.get("p"),
                    q=entry.get("q"),
                    shape=entry.get("shape", "concave"),
                    V_cap=entry.get("v_cap"),
                    proxy_counts=entry.get("proxy"),
                )
                roster.append((name, spec))
            else:
                raise DataError(f"roster entry {name!r} has unknown kind {kind!r}")
        return ExperimentPlan(repetitions=repetitions,
                              train_fraction=train_fraction,
                              seed=seed, roster=tuple(roster))
    except DataError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid plan file: {exc}") from None


def cmd_experiment(args) -> int:
    dataset = load_csv(args.data, _response_column(args), header=not args.no_header)
    with open(args.plan) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.plan}: {exc}") from None
    plan = _plan_from_doc(doc)
    for _, entry in plan.roster:
        if isinstance(entry, ModelSpec):
            _validated(entry, dataset.d)

    result = run_experiment(dataset, plan, tol=args.tol, max_iter=args.max_iter)
    outdir = args.output or "."
    os.makedirs(outdir, exist_ok=True)
    mse_path = os.path.join(outdir, "mse_table.csv")
    cdf_path = os.path.join(outdir, "rank_cdf.csv")
    write_experiment_reports(result, mse_path, cdf_path)

    for mi, name in enumerate(result.model_names):
        col = result.mse[:, mi]
        done = int(np.isfinite(col).sum())
        mean = float(np.mean(col[np.isfinite(col)])) if done else float("nan")
        print(f"model={name} mean_mse={mean:.6g} completed={done}/{plan.repetitions}")
    if result.had_ties:
        print("note: MSE ties occurred; ranks break toward earlier roster entries")
    print(f"wrote {mse_path}")
    print(f"wrote {cdf_path}")
    return EXIT_OK


def cmd_rate_sanity(args) -> int:
    if args.truth not in SYNTHETIC_TRUTHS:
        raise UsageError(
            f"unknown truth {args.truth!r}; available: {sorted(SYNTHETIC_TRUTHS)}"
        )
    try:
        n_list = tuple(int(tok) for tok in args.n.split(","))
    except ValueError:
        raise UsageError(f"--n expects comma-separated integers, got {args.n!r}") from None
    if not n_list or any(n < 4 for n in n_list):
        raise UsageError("--n entries must be integers >= 4")
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    if args.noise_sd < 0:
        raise UsageError("--noise-sd must be nonnegative")

    pairs = rate_sanity(args.truth, n_list, noise_sd=args.noise_sd,
                        reps=args.reps, seed=args.seed,
                        tol=args.tol, max_iter=args.max_iter)
    for n, risk in pairs:
        print(f"n={n} mean_risk={_fmt(risk)}")
    if len(pairs) >= 2 and pairs[0][1] > 0 and pairs[-1][1] > 0:
        (n0, r0), (n1, r1) = pairs[0], pairs[-1]
        if n1 != n0:
            slope = (np.log(r1) - np.log(r0)) / (np.log(n1) - np.log(n0))
            print(f"log-log slope ({n0} to {n1}): {slope:.4f}")
    if args.output:
        with open(args.output, "w") as fh:
            fh.write("n,mean_risk\n")
            for n, risk in pairs:
                fh.write(f"{n},{_fmt(risk)}\n")
        print(f"wrote {args.output}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(
        prog="tcreg",
        description="Totally concave and convex least-squares regression.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("fit", help="fit a model and write model JSON")
    sp.add_argument("data", help="training CSV")
    _add_data_options(sp)
    _add_spec_options(sp)
    sp.add_argument("--v-cap", type=float, default=None,
                    help="cap on the total hinge weight")
    _add_solver_options(sp)
    sp.add_argument("-o", "--output", default=None, metavar="MODEL_JSON",
                    help="model file to write (default: print to stdout)")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("predict", help="evaluate a saved model on covariate rows")
    sp.add_argument("model", help="model JSON from fit")
    sp.add_argument("data", help="covariate-only CSV (columns in training order)")
    _add_data_options(sp, response=False)
    sp.add_argument("-o", "--output", default=None, metavar="CSV",
                    help="predictions CSV to write (default: print to stdout)")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser(
        "check",
        help="certify shape conditions on a grid CSV "
             "(coordinate columns then one value column, every node present)",
    )
    sp.add_argument("grid", help="long-format grid CSV")
    _add_data_options(sp, response=False)
    sp.add_argument("--variant", default="tc", choices=("tc", "axial"),
                    help="certificate family (default tc)")
    sp.add_argument("--s", type=int, default=None,
                    help="interaction order bound (default: number of axes)")
    sp.add_argument("--shape", default="concave", choices=("concave", "convex"))
    sp.add_argument("--tol", type=float, default=None,
                    help="certificate tolerance (default 1e-8 x (1 + max |value|))")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("cv", help="cross-validate the total-weight cap")
    sp.add_argument("data", help="training CSV")
    _add_data_options(sp)
    _add_spec_options(sp)
    sp.add_argument("--v-grid", default="auto", metavar="auto|V1,V2,...",
                    help="cap grid; auto = geometric grid below the "
                         "unregularized total weight")
    sp.add_argument("--folds", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    _add_solver_options(sp)
    sp.add_argument("-o", "--output", default=None, metavar="CSV",
                    help="per-fold MSE table to write")
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("experiment",
                        help="repeated-split comparison of a model roster")
    sp.add_argument("data", help="dataset CSV")
    sp.add_argument("plan", help="plan JSON (repetitions, train_fraction, seed, roster)")
    _add_data_options(sp)
    _add_solver_options(sp)
    sp.add_argument("-o", "--output", default=".", metavar="DIR",
                    help="directory for mse_table.csv and rank_cdf.csv (default .)")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("rate-sanity",
                        help="synthetic risk-versus-sample-size sanity run")
    sp.add_argument("--truth", default="-x^2",
                    help="synthetic truth name (default -x^2)")
    sp.add_argument("--n", default="32,128,512", metavar="N1,N2,...",
                    help="sample sizes (default 32,128,512)")
    sp.add_argument("--noise-sd", type=float, default=0.2)
    sp.add_argument("--reps", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    _add_solver_options(sp)
    sp.add_argument("-o", "--output", default=None, metavar="CSV",
                    help="risk table to write")
    sp.set_defaults(func=cmd_rate_sanity)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        if code is None:
            return EXIT_OK
        return code if isinstance(code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
