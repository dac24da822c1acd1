"""Experiment harness: parametric baselines, repeated-split comparisons,
and synthetic rate sanity runs.

Baselines are plain OLS fits on user-specified feature recipes (lists of
exponent vectors over the original covariates), so model rosters live in
config files rather than code. The experiment runner draws one seeded
split per repetition, scores every roster entry by test MSE, ranks them
(rank 1 best, ties broken by roster order and flagged), and emits
deterministic CSV reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_io import Dataset
from .estimators import (
    AcFittedModel,
    FittedModel,
    fit,
    predict,
    predict_axial,
)
from .hinge_basis import ModelSpec


@dataclass(frozen=True)
class BaselineSpec:
    """OLS baseline on explicit monomial features.

    terms is a sequence of exponent vectors over the original covariates:
    (2, 0) means x1^2, (1, 1) means x1*x2. An intercept column is always
    included and is not part of the recipe.
    """

    name: str
    terms: tuple

    def __post_init__(self):
        terms = tuple(tuple(int(e) for e in t) for t in self.terms)
        if any(any(e < 0 for e in t) for t in terms):
            raise ValueError("exponents must be nonnegative")
        object.__setattr__(self, "terms", terms)

    def features(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cols = [np.ones(X.shape[0])]
        for t in self.terms:
            if len(t) != X.shape[1]:
                raise ValueError(
                    f"recipe term {t} has {len(t)} exponents, data has {X.shape[1]} columns"
                )
            col = np.ones(X.shape[0])
            for j, e in enumerate(t):
                if e:
                    col = col * X[:, j] ** e
            cols.append(col)
        return np.column_stack(cols)


@dataclass(frozen=True)
class BaselineFit:
    spec: BaselineSpec
    coefs: np.ndarray

    def predict(self, X) -> np.ndarray:
        return self.spec.features(X) @ self.coefs


def fit_baseline(dataset: Dataset, baseline: BaselineSpec) -> BaselineFit:
    """Closed-form OLS with a tiny ridge (1e-12) against rank deficiency;
    fitted values still match the least squares projection."""
    F = baseline.features(dataset.X)
    G = F.T @ F + 1e-12 * np.eye(F.shape[1])
    coefs = np.linalg.solve(G, F.T @ dataset.y)
    return BaselineFit(spec=baseline, coefs=coefs)


@dataclass(frozen=True)
class ExperimentPlan:
    """Repeated random-split comparison plan.

    roster entries are (name, ModelSpec-or-BaselineSpec) pairs; metric is
    test MSE. Repetition r uses rng default_rng([seed, r]) so runs are
    reproducible and repetitions independent.
    """

    repetitions: int
    train_fraction: float
    seed: int
    roster: tuple

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        names = [name for name, _ in self.roster]
        if len(names) != len(set(names)):
            raise ValueError("roster names must be unique")
        if not names:
            raise ValueError("roster must be nonempty")
        object.__setattr__(self, "roster", tuple(self.roster))


def _predict_any(model, X) -> np.ndarray:
    if isinstance(model, AcFittedModel):
        return predict_axial(model, X)[0]
    if isinstance(model, FittedModel):
        return predict(model, X)[0]
    return model.predict(X)


@dataclass(frozen=True)
class ExperimentResult:
    """mse[r, m] (NaN = failed), rank[r, m] (0 = failed), tie flags, and
    the cumulative rank distribution cdf[m, r] = P(rank <= r+1)."""

    model_names: tuple
    mse: np.ndarray
    ranks: np.ndarray
    had_ties: bool
    rank_cdf: np.ndarray


def run_experiment(dataset: Dataset, plan: ExperimentPlan,
                   tol: float = 1e-8, max_iter: int | None = None) -> ExperimentResult:
    """Score every roster entry over seeded repeated splits.

    Per repetition, a seeded permutation allocates floor(train_fraction
    * n) rows to training and the rest to test. Failures (exceptions in
    fit or predict) are recorded as missing, not fatal; missing entries
    get no rank. Rank ties by MSE resolve toward the earlier roster
    entry.
    """
    n = dataset.n
    n_train = int(np.floor(plan.train_fraction * n))
    if n_train < 1 or n_train >= n:
        raise ValueError(
            f"train_fraction {plan.train_fraction} leaves an empty split for n={n}"
        )
    names = tuple(name for name, _ in plan.roster)
    m = len(names)
    mse = np.full((plan.repetitions, m), np.nan)

    for rep in range(plan.repetitions):
        rng = np.random.default_rng([plan.seed, rep])
        perm = rng.permutation(n)
        train_rows, test_rows = perm[:n_train], perm[n_train:]
        train = Dataset(X=dataset.X[train_rows], y=dataset.y[train_rows])
        X_test, y_test = dataset.X[test_rows], dataset.y[test_rows]
        for mi, (_, entry) in enumerate(plan.roster):
            try:
                if isinstance(entry, BaselineSpec):
                    model = fit_baseline(train, entry)
                else:
                    model = fit(train, entry, tol=tol, max_iter=max_iter)
                yhat = _predict_any(model, X_test)
                mse[rep, mi] = float(np.mean((y_test - yhat) ** 2))
            except Exception:
                pass  # missing, not fatal

    ranks = np.zeros((plan.repetitions, m), dtype=int)
    had_ties = False
    for rep in range(plan.repetitions):
        scored = [(mse[rep, mi], mi) for mi in range(m) if np.isfinite(mse[rep, mi])]
        scored.sort(key=lambda t: (t[0], t[1]))  # roster order breaks ties
        vals = [v for v, _ in scored]
        had_ties = had_ties or len(vals) != len(set(vals))
        for pos, (_, mi) in enumerate(scored):
            ranks[rep, mi] = pos + 1

    cdf = np.zeros((m, m))
    for mi in range(m):
        for r in range(1, m + 1):
            cdf[mi, r - 1] = float(np.sum((ranks[:, mi] >= 1) & (ranks[:, mi] <= r))) / plan.repetitions
    return ExperimentResult(model_names=names, mse=mse, ranks=ranks,
                            had_ties=had_ties, rank_cdf=cdf)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_experiment_reports(result: ExperimentResult, mse_path, cdf_path) -> None:
    """Write mse_table.csv (rep,model,mse) and rank_cdf.csv
    (model,rank,cum_fraction); identical inputs give identical bytes."""
    with open(mse_path, "w", newline="") as fh:
        fh.write("rep,model,mse\n")
        reps, m = result.mse.shape
        for rep in range(reps):
            for mi in range(m):
                v = result.mse[rep, mi]
                cell = _fmt(v) if np.isfinite(v) else ""
                fh.write(f"{rep},{result.model_names[mi]},{cell}\n")
    with open(cdf_path, "w", newline="") as fh:
        fh.write("model,rank,cum_fraction\n")
        m = len(result.model_names)
        for mi in range(m):
            for r in range(1, m + 1):
                fh.write(
                    f"{result.model_names[mi]},{r},{_fmt(result.rank_cdf[mi, r - 1])}\n"
                )


# synthetic truths for rate sanity runs; each entry: (d, fit order s, callable)
SYNTHETIC_TRUTHS = {
    "-x^2": (1, 1, lambda X: -X[:, 0] ** 2),
    "-x1^2-x2^2+x1x2": (
        2,
        2,
        lambda X: -X[:, 0] ** 2 - X[:, 1] ** 2 + X[:, 0] * X[:, 1],
    ),
}


def _lattice(m: int, d: int) -> np.ndarray:
    axes = [np.arange(m) / m for _ in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def rate_sanity(truth: str, n_list, noise_sd: float, reps: int, seed: int,
                tol: float = 1e-8, max_iter: int | None = None) -> list:
    """Mean squared lattice risk of the concave fit versus sample size.

    For each requested n, data sits on the equally spaced lattice
    {0, 1/m, ..., (m-1)/m}^d with m = round(n^(1/d)); responses add
    Gaussian noise to the chosen truth; the risk is the mean squared
    error between fitted and true values at the lattice points, averaged
    over reps (rng seeded per repetition).

    Returns a list of (n_actual, mean_risk) pairs in n_list order.
    """
    if truth not in SYNTHETIC_TRUTHS:
        raise ValueError(
            f"unknown truth {truth!r}; available: {sorted(SYNTHETIC_TRUTHS)}"
        )
    d, s, f_star = SYNTHETIC_TRUTHS[truth]
    out = []
    for n_req in n_list:
        m = max(2, int(round(float(n_req) ** (1.0 / d))))
        X = _lattice(m, d)
        n = X.shape[0]
        truth_vals = f_star(X)
        risks = []
        for rep in range(reps):
            rng = np.random.default_rng([seed, int(n_req), rep])
            y = truth_vals + rng.normal(0.0, noise_sd, n)
            model = fit(Dataset(X=X, y=y),
                        ModelSpec(variant="tc", s=s, shape="concave"),
                        tol=tol, max_iter=max_iter)
            yhat, _ = predict(model, X)
            risks.append(float(np.mean((yhat - truth_vals) ** 2)))
        out.append((n, float(np.mean(risks))))
    return out
