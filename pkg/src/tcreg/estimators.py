"""User-facing estimators.

fit/predict/complexity/cross_validate_V cover the hinge-basis variants
(totally concave or convex, optionally partially linear, optionally with
a total-weight cap); fit_axially_concave/predict_axial cover the grid
formulation of axial concavity. Fitted values are the reliable output of
a fit; individual coefficients can be non-unique when hinge columns are
linearly dependent.

Convex fits reuse the concave path: negate the response, fit concave,
negate the intercept and monomial coefficients (hinge weights stay
nonnegative, the hinge sum flips sign in the model formula).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .data_io import Dataset, UnitScaler, fit_scaler, inverse_scale, scale_to_unit
from .hinge_basis import (
    BasisTerm,
    ModelSpec,
    assemble_design,
    enumerate_terms,
    eval_term,
)
from .shape_calculus import (
    CertificateReport,
    GridFunction,
    _certify_families,
    certify_axial_concavity,
    default_tolerance,
)
from .solver import (
    IneqLsProblem,
    MixedLsProblem,
    solve_ls_linear_ineq,
    solve_mixed_nnls,
)
from . import data_io

DEFAULT_AXIAL_GRID_BUDGET = 2500


@dataclass(frozen=True)
class FittedModel:
    """Hinge-basis fit.

    The model formula on the unit scale is

        intercept + sum monomial_coefs[t] * t(x)  -/+  sum hinge_weights[t] * t(x)

    with minus for concave shape and plus for convex; hinge weights are
    nonnegative either way. axis_breakpoints holds the per-axis training
    lattice ({0} union scaled values for shape axes, {0,1} for linear
    ones); it is not serialized, so models restored from JSON need an
    explicit resolution in certify_fit.
    """

    spec: ModelSpec
    scaler: UnitScaler
    intercept: float
    monomial_coefs: dict
    hinge_weights: dict
    training_sse: float | None = None
    solver_diag: dict | None = None
    axis_breakpoints: tuple | None = None

    @property
    def d(self) -> int:
        return self.scaler.d

    @property
    def converged(self) -> bool:
        return bool(self.solver_diag is None or self.solver_diag.get("converged", True))

    def to_dict(self) -> dict:
        return {
            "schema_version": data_io.SCHEMA_VERSION,
            "variant": self.spec.variant,
            "shape": self.spec.shape,
            "s": self.spec.s,
            "p": self.spec.p,
            "q": self.spec.q,
            "d": self.d,
            "scaler": data_io._scaler_to_json(self.scaler),
            "intercept": float(self.intercept),
            "monomial_terms": [
                {"S": list(t.S), "T": list(t.T), "coef": float(c)}
                for t, c in self.monomial_coefs.items()
            ],
            "hinge_terms": [
                {"S": list(t.S), "T": list(t.T), "knots": list(t.knots), "weight": float(w)}
                for t, w in self.hinge_weights.items()
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FittedModel":
        spec = ModelSpec(
            variant=doc["variant"], s=doc["s"], p=doc["p"], q=doc["q"],
            shape=doc["shape"],
        )
        monomial = {}
        for e in doc["monomial_terms"]:
            term = BasisTerm(kind="monomial", S=tuple(e["S"]), T=tuple(e["T"]))
            monomial[term] = float(e["coef"])
        hinges = {}
        for e in doc["hinge_terms"]:
            w = float(e["weight"])
            if w < 0:
                raise data_io.DataError(f"negative hinge weight {w} in model file")
            term = BasisTerm(
                kind="hinge", S=tuple(e["S"]), T=tuple(e["T"]), knots=tuple(e["knots"])
            )
            hinges[term] = w
        return cls(
            spec=spec,
            scaler=data_io._scaler_from_json(doc["scaler"]),
            intercept=float(doc["intercept"]),
            monomial_coefs=monomial,
            hinge_weights=hinges,
        )


@dataclass(frozen=True)
class AcFittedModel:
    """Axially concave (or convex) grid fit.

    breakpoints include 0 and 1 per axis on the unit scale; theta holds
    the fitted node values. Prediction interpolates multi-affinely inside
    each cell and clamps (with a flag) outside the unit cube.
    """

    scaler: UnitScaler
    breakpoints: tuple
    theta: np.ndarray
    shape: str = "concave"
    training_sse: float | None = None
    solver_diag: dict | None = None

    @property
    def d(self) -> int:
        return self.scaler.d

    @property
    def converged(self) -> bool:
        return bool(self.solver_diag is None or self.solver_diag.get("converged", True))

    def to_dict(self) -> dict:
        return {
            "schema_version": data_io.SCHEMA_VERSION,
            "variant": "axial",
            "shape": self.shape,
            "d": self.d,
            "scaler": data_io._scaler_to_json(self.scaler),
            "breakpoints": [list(map(float, u)) for u in self.breakpoints],
            "values": np.asarray(self.theta, dtype=float).ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AcFittedModel":
        bps = tuple(np.asarray(u, dtype=float) for u in doc["breakpoints"])
        shape = tuple(len(u) for u in bps)
        theta = np.asarray(doc["values"], dtype=float).reshape(shape)
        return cls(
            scaler=data_io._scaler_from_json(doc["scaler"]),
            breakpoints=bps,
            theta=theta,
            shape=doc.get("shape", "concave"),
        )


@dataclass(frozen=True)
class CvResult:
    """Cross-validation summary; selected_V minimizes mean MSE with ties
    broken toward the smaller cap."""

    V_grid: tuple
    fold_mse: np.ndarray
    mean_mse: np.ndarray
    selected_V: float
    seed: int


def _hinge_sign(shape: str) -> float:
    return -1.0 if shape == "concave" else 1.0


def fit(dataset: Dataset, spec: ModelSpec, tol: float = 1e-8, max_iter: int | None = None):
    """Least squares fit of the requested variant.

    Covariates are scaled to the unit cube, the term basis and design are
    assembled, and the mixed nonnegative least squares problem is solved
    (with the total-weight cap when spec.V_cap is set). The axial variant
    routes to fit_axially_concave and returns an AcFittedModel.

    max_iter=None means each solver's own default: 50000 projected
    gradient steps for the hinge basis, 200000 splitting iterations for
    the axial grid problem (cheaper per step, slower dual convergence).

    Solver non-convergence is recorded in solver_diag, not raised.
    """
    spec.validate_for_dimension(dataset.d)
    if spec.variant == "axial":
        kw = {} if max_iter is None else {"max_iter": max_iter}
        return fit_axially_concave(dataset, shape=spec.shape, tol=tol, **kw)
    if max_iter is None:
        max_iter = 50000

    scaler = fit_scaler(dataset.X)
    X_unit = scale_to_unit(dataset.X, scaler)
    concave = spec.shape == "concave"
    y_work = dataset.y if concave else -dataset.y

    terms = enumerate_terms(spec, X_unit)
    design = assemble_design(X_unit, terms)
    A_free = design.matrix[:, design.free_block]
    # concave models subtract the hinge sum, so hinge columns enter negated
    A_pos = -design.matrix[:, design.pos_block]
    problem = MixedLsProblem(A_free=A_free, A_pos=A_pos, y=y_work, V_cap=spec.V_cap)
    sol = solve_mixed_nnls(problem, tol=tol, max_iter=max_iter)

    flip = 1.0 if concave else -1.0
    free_terms = [design.terms[i] for i in design.free_block]
    pos_terms = [design.terms[i] for i in design.pos_block]
    intercept = 0.0
    monomial: dict = {}
    for term, coef in zip(free_terms, sol.beta_free):
        if term.S == () and term.T == ():
            intercept = flip * float(coef)
        else:
            monomial[term] = flip * float(coef)
    hinges = {t: float(w) for t, w in zip(pos_terms, sol.beta_pos)}

    fitted = A_free @ sol.beta_free + (-design.matrix[:, design.pos_block]) @ sol.beta_pos
    fitted = flip * fitted
    sse = float(np.sum((dataset.y - fitted) ** 2))

    axis_bps = []
    for j in range(dataset.d):
        if _is_shape_axis(spec, j):
            vals = np.unique(np.concatenate([[0.0], X_unit[:, j]]))
        else:
            vals = np.array([0.0, 1.0])
        axis_bps.append(vals)

    return FittedModel(
        spec=spec,
        scaler=scaler,
        intercept=intercept,
        monomial_coefs=monomial,
        hinge_weights=hinges,
        training_sse=sse,
        solver_diag={
            "converged": sol.converged,
            "iterations": sol.iterations,
            "kkt_residual": sol.kkt_residual,
            "objective": sol.objective,
        },
        axis_breakpoints=tuple(axis_bps),
    )


def _is_shape_axis(spec: ModelSpec, j: int) -> bool:
    if spec.variant == "tc":
        return True
    return j < spec.p


def predict(model: FittedModel, X_original):
    """Model evaluation at original-unit points.

    Returns
    -------
    (yhat, extrapolated) : ndarray pair
        Predictions and a boolean mask flagging rows whose scaled
        coordinates leave [0, 1]; such rows use the natural affine
        extension of the hinge formula.
    """
    X = np.atleast_2d(np.asarray(X_original, dtype=float))
    if X.shape[1] != model.d:
        raise ValueError(f"X has {X.shape[1]} columns, model expects {model.d}")
    X_unit = scale_to_unit(X, model.scaler)
    mask = np.any((X_unit < 0.0) | (X_unit > 1.0), axis=1)
    out = np.full(X.shape[0], float(model.intercept))
    for term, coef in model.monomial_coefs.items():
        out += coef * eval_term(term, X_unit)
    sign = _hinge_sign(model.spec.shape)
    for term, w in model.hinge_weights.items():
        if w != 0.0:
            out += sign * w * eval_term(term, X_unit)
    return out, mask


def complexity(model: FittedModel) -> float:
    """Total hinge mass of the fitted model."""
    return float(sum(model.hinge_weights.values()))


def default_v_grid(dataset: Dataset, spec: ModelSpec, points: int = 10,
                   tol: float = 1e-8, max_iter: int | None = None) -> tuple:
    """Geometric cap grid from 1e-3 V0 to V0, V0 = unregularized mass."""
    base = ModelSpec(variant=spec.variant, s=spec.s, p=spec.p, q=spec.q,
                     shape=spec.shape, V_cap=None, proxy_counts=spec.proxy_counts)
    v0 = complexity(fit(dataset, base, tol=tol, max_iter=max_iter))
    if v0 <= 0:
        return (0.0,)
    return tuple(np.geomspace(1e-3 * v0, v0, points))


def cross_validate_V(dataset: Dataset, spec: ModelSpec, V_grid=None,
                     folds: int = 10, seed: int = 0,
                     tol: float = 1e-8, max_iter: int | None = None) -> CvResult:
    """Seeded k-fold cross-validation over the cap grid.

    Fold assignment is a seeded uniform shuffle followed by round-robin
    (row perm[i] lands in fold i mod folds). For each fold and cap, the
    model fits on the training rows and records test MSE; the selected
    cap minimizes the fold-mean MSE, ties broken toward the smaller cap.
    Identical seeds give identical results.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    n = dataset.n
    if folds > n:
        raise ValueError(f"more folds ({folds}) than rows ({n})")
    if V_grid is None:
        V_grid = default_v_grid(dataset, spec, tol=tol, max_iter=max_iter)
    V_grid = tuple(sorted(float(v) for v in V_grid))
    if len(V_grid) == 0:
        raise ValueError("V_grid must be nonempty")
    if any(v < 0 for v in V_grid):
        raise ValueError("V_grid entries must be nonnegative")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[perm] = np.arange(n) % folds

    fold_mse = np.full((folds, len(V_grid)), np.nan)
    for fold in range(folds):
        test = fold_of == fold
        train = ~test
        if train.sum() < 1:
            raise ValueError(f"fold {fold} has no training rows")
        train_ds = Dataset(X=dataset.X[train], y=dataset.y[train])
        for vi, V in enumerate(V_grid):
            capped = ModelSpec(variant=spec.variant, s=spec.s, p=spec.p,
                               q=spec.q, shape=spec.shape, V_cap=V,
                               proxy_counts=spec.proxy_counts)
            model = fit(train_ds, capped, tol=tol, max_iter=max_iter)
            yhat, _ = predict(model, dataset.X[test])
            fold_mse[fold, vi] = float(np.mean((dataset.y[test] - yhat) ** 2))

    mean_mse = fold_mse.mean(axis=0)
    best = 0
    for vi in range(1, len(V_grid)):
        if mean_mse[vi] < mean_mse[best]:
            best = vi
    return CvResult(V_grid=V_grid, fold_mse=fold_mse, mean_mse=mean_mse,
                    selected_V=float(V_grid[best]), seed=int(seed))


def _axial_constraints(breakpoints) -> np.ndarray:
    """Rows of C theta <= 0 encoding per-axis slope monotonicity.

    For each axis and each consecutive breakpoint triple, the slope over
    the right cell minus the slope over the left cell must be <= 0, at
    every combination of the other axes' indices.
    """
    shape = tuple(len(u) for u in breakpoints)
    nodes = int(np.prod(shape))
    strides = np.zeros(len(shape), dtype=int)
    acc = 1
    for k in reversed(range(len(shape))):
        strides[k] = acc
        acc *= shape[k]
    rows = []
    for axis, u in enumerate(breakpoints):
        m = len(u)
        if m < 3:
            continue
        other = [range(shape[k]) if k != axis else (0,) for k in range(len(shape))]
        for base_idx in itertools.product(*other):
            base = int(np.dot(base_idx, strides))
            for j in range(m - 2):
                h0 = u[j + 1] - u[j]
                h1 = u[j + 2] - u[j + 1]
                row = np.zeros(nodes)
                row[base + j * strides[axis]] = 1.0 / h0
                row[base + (j + 1) * strides[axis]] = -(1.0 / h0 + 1.0 / h1)
                row[base + (j + 2) * strides[axis]] = 1.0 / h1
                rows.append(row)
    if not rows:
        return np.zeros((0, nodes))
    return np.vstack(rows)


def fit_axially_concave(dataset: Dataset, shape: str = "concave",
                        ridge: float = 0.0, tol: float = 1e-8,
                        max_iter: int = 200000, rho: float = 1.0,
                        max_grid_nodes: int = DEFAULT_AXIAL_GRID_BUDGET) -> AcFittedModel:
    """Axially concave least squares on the full data grid.

    Builds per-axis breakpoints {0} union {scaled data values} union {1},
    places one parameter per grid node, constrains consecutive slopes to
    be non-increasing along every axis at every anchor, and solves the
    constrained least squares by ADMM. theta at nodes the data never pins
    down is non-unique when ridge = 0 (fitted values are unique); pass a
    small ridge for fully deterministic theta.

    Raises
    ------
    ValueError
        When the grid node count exceeds max_grid_nodes (the count is
        reported, pass a larger budget to override).
    """
    if shape not in ("concave", "convex"):
        raise ValueError(f"unknown shape {shape!r}")
    scaler = fit_scaler(dataset.X)
    X_unit = scale_to_unit(dataset.X, scaler)
    y_work = dataset.y if shape == "concave" else -dataset.y

    breakpoints = tuple(
        np.unique(np.concatenate([[0.0, 1.0], X_unit[:, k]]))
        for k in range(dataset.d)
    )
    grid_shape = tuple(len(u) for u in breakpoints)
    nodes = int(np.prod(grid_shape))
    if nodes > max_grid_nodes:
        raise ValueError(
            f"axial grid has {nodes} nodes (> budget {max_grid_nodes}); "
            "reduce the data or raise max_grid_nodes"
        )

    strides = np.zeros(dataset.d, dtype=int)
    acc = 1
    for k in reversed(range(dataset.d)):
        strides[k] = acc
        acc *= grid_shape[k]
    node_idx = np.zeros(dataset.n, dtype=int)
    for k in range(dataset.d):
        pos = np.searchsorted(breakpoints[k], X_unit[:, k])
        node_idx += pos * strides[k]
    M = np.zeros((dataset.n, nodes))
    M[np.arange(dataset.n), node_idx] = 1.0

    C = _axial_constraints(breakpoints)
    problem = IneqLsProblem(M=M, y=y_work, C=C, ridge=ridge)
    sol = solve_ls_linear_ineq(problem, tol=tol, max_iter=max_iter, rho=rho)

    theta = sol.theta if shape == "concave" else -sol.theta
    fitted = theta[node_idx]
    sse = float(np.sum((dataset.y - fitted) ** 2))
    return AcFittedModel(
        scaler=scaler,
        breakpoints=breakpoints,
        theta=theta.reshape(grid_shape),
        shape=shape,
        training_sse=sse,
        solver_diag={
            "converged": sol.converged,
            "polished": sol.polished,
            "iterations": sol.iterations,
            "primal_residual": sol.primal_residual,
            "dual_residual": sol.dual_residual,
            "objective": sol.objective,
        },
    )


def predict_axial(model: AcFittedModel, X_original):
    """Multi-affine interpolation of the grid fit.

    Points outside the unit cube after scaling are clamped onto it and
    flagged in the returned mask. Exact at grid nodes.
    """
    X = np.atleast_2d(np.asarray(X_original, dtype=float))
    if X.shape[1] != model.d:
        raise ValueError(f"X has {X.shape[1]} columns, model expects {model.d}")
    X_unit = scale_to_unit(X, model.scaler)
    mask = np.any((X_unit < 0.0) | (X_unit > 1.0), axis=1)
    Xc = np.clip(X_unit, 0.0, 1.0)

    n = X.shape[0]
    d = model.d
    cell = np.zeros((n, d), dtype=int)
    local = np.zeros((n, d))
    for k in range(d):
        u = model.breakpoints[k]
        j = np.searchsorted(u, Xc[:, k], side="right") - 1
        j = np.clip(j, 0, len(u) - 2)
        cell[:, k] = j
        width = u[j + 1] - u[j]
        local[:, k] = (Xc[:, k] - u[j]) / width

    out = np.zeros(n)
    for corner in itertools.product((0, 1), repeat=d):
        weight = np.ones(n)
        for k, delta in enumerate(corner):
            weight *= local[:, k] if delta else 1.0 - local[:, k]
        idx = tuple(cell[:, k] + corner[k] for k in range(d))
        out += weight * model.theta[idx]
    return out, mask


def _hinge_window_dd(u: np.ndarray, t: float, order: int) -> np.ndarray:
    """Consecutive-window divided differences of (x - t)_+ along one axis.

    Closed forms per window, never a difference of near-equal sums: the
    order-1 value over [a, b] is 1, (b-t)/(b-a), or 0 as t falls left of,
    inside, or right of the window; the order-2 value over [a, b, c] is
    (t-a)/((b-a)(c-a)) for t in [a, b], (c-t)/((c-a)(c-b)) for t in
    [b, c], else 0. Every branch is a ratio of positive differences, so
    results are nonnegative to relative rounding error even on axes with
    nearly coincident breakpoints.
    """
    if order == 0:
        return np.array([max(u[0] - t, 0.0)])
    if order == 1:
        a, b = u[:-1], u[1:]
        return np.where(t <= a, 1.0, np.where(t >= b, 0.0, (b - t) / (b - a)))
    if order == 2:
        a, b, c = u[:-2], u[1:-1], u[2:]
        left = (t - a) / ((b - a) * (c - a))
        right = (c - t) / ((c - a) * (c - b))
        inner = np.where(t <= b, left, right)
        return np.where((t <= a) | (t >= c), 0.0, inner)
    raise ValueError("hinge factors are only probed at orders 0, 1, 2")


def _ident_window_dd(u: np.ndarray, order: int) -> np.ndarray:
    if order == 0:
        return u[:1].copy()
    if order == 1:
        return np.ones(len(u) - 1)
    return np.zeros(len(u) - order)


def _term_window_dd(term: BasisTerm, axes, order) -> np.ndarray:
    """Window divided-difference tensor of one basis term.

    The term is a product of univariate factors, so its tensor divided
    difference is the outer product of per-axis factor differences;
    order-0 axes are anchored at their first breakpoint.
    """
    out = None
    for k, u in enumerate(axes):
        pk = order[k]
        if term.kind == "hinge" and k in term.S:
            vec = _hinge_window_dd(u, term.knots[term.S.index(k)], pk)
        elif k in term.S or k in term.T:
            vec = _ident_window_dd(u, pk)
        elif pk == 0:
            vec = np.ones(1)
        else:
            vec = np.zeros(len(u) - pk)
        out = vec if out is None else np.multiply.outer(out, vec)
    return out


def certify_fit(model, resolution: int | None = None, tol=None) -> CertificateReport:
    """Shape certificate for a fitted model.

    Hinge-basis models are certified on the training lattice (or an
    equally spaced grid with `resolution` points per shape axis; linear
    axes use {0, 1}) against the same order families as
    certify_total_concavity, at the model's shape and interaction order.
    The window divided differences are accumulated term by term through
    the per-axis factorization instead of differencing evaluated values:
    hinge contributions then share one sign and monomial contributions
    annihilate exactly, so the check stays reliable on lattices with
    nearly coincident breakpoints, where value differencing amplifies
    evaluation round-off past any usable tolerance. Axial models check
    their stored grid values directly (negated first for convex fits).
    """
    if isinstance(model, AcFittedModel):
        theta = model.theta if model.shape == "concave" else -model.theta
        g = GridFunction(breakpoints=model.breakpoints, values=theta)
        return certify_axial_concavity(g, tol=tol)

    if resolution is not None:
        axes = [
            np.linspace(0.0, 1.0, int(resolution)) if _is_shape_axis(model.spec, j)
            else np.array([0.0, 1.0])
            for j in range(model.d)
        ]
    elif model.axis_breakpoints is not None:
        axes = [np.asarray(u, dtype=float) for u in model.axis_breakpoints]
    else:
        raise ValueError(
            "model has no stored training lattice (loaded from file?); "
            "pass an explicit resolution"
        )

    sign = _hinge_sign(model.spec.shape)
    entries = list(model.monomial_coefs.items())
    entries += [(term, sign * w) for term, w in model.hinge_weights.items() if w != 0.0]

    if tol is None:
        # default tolerance scales with the fitted values on the grid
        mesh = np.meshgrid(*axes, indexing="ij")
        pts_unit = np.column_stack([m.ravel() for m in mesh])
        vals = np.full(pts_unit.shape[0], float(model.intercept))
        for term, coef in entries:
            vals += coef * eval_term(term, pts_unit)
        tol = default_tolerance(vals)

    def window_dds(order):
        shape_out = [1 if pk == 0 else len(u) - pk for u, pk in zip(axes, order)]
        total = np.zeros(shape_out)
        for term, coef in entries:
            total += coef * _term_window_dd(term, axes, order)
        return total

    lengths = [len(u) for u in axes]
    return _certify_families(lengths, model.spec.s, model.spec.shape, float(tol), window_dds)
