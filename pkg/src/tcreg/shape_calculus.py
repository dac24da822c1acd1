"""Divided differences, discrete differences, and shape certificates.

Grid functions carry per-axis strictly increasing breakpoints and a value
tensor over the product grid. Certificates check sign conditions on tensor
divided differences:

* total concavity: every order p in {0,1,2}^d with max p_k = 2 gives a
  nonpositive divided difference (nonnegative for the convex shape), and
  mixed first-order differences spanning more than s axes vanish
  (interaction restriction);
* axial concavity: only the pure per-axis second-order conditions;
* entire monotonicity: all mixed first-order differences are nonnegative.

Violations are reported in derivative scale, i.e. (prod_k p_k!) times the
divided difference, so a quadratic x^2 probed at order 2 shows violation 2.

Checks run over consecutive-point windows with non-probed axes anchored at
their first breakpoint where the theory allows (total concavity and the
interaction restriction); on a fixed grid this is equivalent to checking
every window, since any window's divided difference is a nonnegative
mixture of consecutive ones. Axial concavity and entire monotonicity keep
all anchor values.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridFunction:
    """Values over a product grid.

    Parameters
    ----------
    breakpoints : sequence of 1-d arrays
        Per-axis strictly increasing coordinates.
    values : ndarray
        Tensor of shape (len(u_1), ..., len(u_d)).
    """

    breakpoints: tuple
    values: np.ndarray

    def __post_init__(self):
        bps = tuple(np.asarray(u, dtype=float) for u in self.breakpoints)
        values = np.asarray(self.values, dtype=float)
        if len(bps) == 0:
            raise ValueError("grid needs at least one axis")
        for k, u in enumerate(bps):
            if u.ndim != 1 or u.size < 1:
                raise ValueError(f"axis {k} breakpoints must be a nonempty 1-d array")
            if not np.all(np.diff(u) > 0):
                raise ValueError(f"axis {k} breakpoints must be strictly increasing")
        if values.shape != tuple(len(u) for u in bps):
            raise ValueError(
                f"values shape {values.shape} does not match grid "
                f"{tuple(len(u) for u in bps)}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "values", values)

    @property
    def d(self) -> int:
        return len(self.breakpoints)


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of a shape certificate.

    families maps a constraint family name (one per probed order) to a
    dict with keys worst_violation, at_index, order, vacuous. Violations
    are derivative-scale: (prod p_k!) x divided difference, signed so that
    values <= tolerance pass. passed holds iff every family's worst
    violation is <= tolerance.
    """

    passed: bool
    families: dict
    tolerance: float

    def worst(self) -> float:
        """Largest violation over all non-vacuous families (0 if none)."""
        vals = [f["worst_violation"] for f in self.families.values() if not f["vacuous"]]
        return max(vals) if vals else 0.0


def grid_from_points(coords, values) -> GridFunction:
    """Assemble a GridFunction from long-format points.

    Every combination of the observed per-axis coordinate values must
    appear exactly once.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    values = np.asarray(values, dtype=float).ravel()
    if coords.shape[0] != values.size:
        raise ValueError("coordinate rows and values differ in length")
    axes = [np.unique(coords[:, k]) for k in range(coords.shape[1])]
    shape = tuple(len(u) for u in axes)
    expected = int(np.prod(shape))
    if values.size != expected:
        raise ValueError(
            f"incomplete grid: {values.size} points given, full grid has {expected}"
        )
    tensor = np.full(shape, np.nan)
    idx = tuple(
        np.searchsorted(axes[k], coords[:, k]) for k in range(coords.shape[1])
    )
    tensor[idx] = values
    if np.any(np.isnan(tensor)):
        raise ValueError("incomplete grid: some nodes repeat while others are missing")
    return GridFunction(breakpoints=tuple(axes), values=tensor)


def divided_difference(g: GridFunction, points, order=None) -> float:
    """Tensor divided difference at explicit per-axis point selections.

    Parameters
    ----------
    g : GridFunction
    points : sequence of index sequences
        For each axis, strictly increasing indices into that axis's
        breakpoints; an axis probed at order p_k selects p_k + 1 indices.
    order : sequence of int, optional
        Expected order per axis; validated against the selection sizes.

    Returns
    -------
    float
        sum over the selected subgrid of f(...) divided by the product,
        per axis, of the differences between the chosen point and the
        other chosen points on that axis.
    """
    if len(points) != g.d:
        raise ValueError(f"need one index selection per axis ({g.d})")
    sels = []
    for k, sel in enumerate(points):
        sel = np.asarray(sel, dtype=int)
        if sel.ndim != 1 or sel.size < 1:
            raise ValueError(f"axis {k}: selection must be a nonempty 1-d index list")
        if np.any(sel < 0) or np.any(sel >= len(g.breakpoints[k])):
            raise ValueError(f"axis {k}: index out of range")
        if np.any(np.diff(sel) <= 0):
            raise ValueError(f"axis {k}: repeated or decreasing points")
        if order is not None and sel.size != int(order[k]) + 1:
            raise ValueError(
                f"axis {k}: selection size {sel.size} does not match order {order[k]}"
            )
        sels.append(sel)

    out = g.values[np.ix_(*sels)]
    # contract one axis at a time with inverse-spacing weights
    for sel, u in zip(sels, g.breakpoints):
        x = u[sel]
        diff = x[:, None] - x[None, :]
        np.fill_diagonal(diff, 1.0)
        w = 1.0 / diff.prod(axis=1)
        out = np.tensordot(w, out, axes=(0, 0))
    return float(out)


def _equal_spacing(u: np.ndarray, axis: int) -> float:
    if len(u) < 2:
        raise ValueError(f"axis {axis} needs at least 2 breakpoints")
    h = np.diff(u)
    if not np.allclose(h, h[0], rtol=1e-9, atol=1e-12 * max(abs(u[-1] - u[0]), 1.0)):
        raise ValueError(f"axis {axis} is not equally spaced")
    return float(h[0])


def discrete_difference(g: GridFunction, p, i) -> float:
    """Scaled divided difference on an equally spaced grid.

    Equals (prod_k p_k! h_k^{p_k}) x the divided difference at indices
    i_k - p_k, ..., i_k, which reduces to iterated finite differences.
    With n_k cells on [0, 1] the factor is prod_k p_k!/n_k^{p_k}.
    """
    p = tuple(int(v) for v in p)
    i = tuple(int(v) for v in i)
    if len(p) != g.d or len(i) != g.d:
        raise ValueError("order and index must have one entry per axis")
    factor = 1.0
    sels = []
    for k, (pk, ik) in enumerate(zip(p, i)):
        if pk < 0:
            raise ValueError("orders must be nonnegative")
        if ik - pk < 0:
            raise ValueError(f"axis {k}: index {ik} underflows order {pk}")
        if ik >= len(g.breakpoints[k]):
            raise ValueError(f"axis {k}: index {ik} out of range")
        if pk > 0:
            h = _equal_spacing(g.breakpoints[k], k)
            factor *= math.factorial(pk) * h**pk
        sels.append(range(ik - pk, ik + 1))
    return factor * divided_difference(g, sels, order=p)


def _consecutive_dd(values: np.ndarray, u: np.ndarray, axis: int, order: int) -> np.ndarray:
    """All consecutive-window divided differences of one order along one axis.

    Output axis length shrinks by `order`; entry a holds the divided
    difference over indices a..a+order, built by the one-step recursion
    (difference of lower-order neighbors over the window width).
    """
    out = values
    for r in range(1, order + 1):
        lead = [slice(None)] * out.ndim
        lag = [slice(None)] * out.ndim
        lead[axis] = slice(1, None)
        lag[axis] = slice(None, -1)
        width = u[r:] - u[:-r]
        shape = [1] * out.ndim
        shape[axis] = width.size
        out = (out[tuple(lead)] - out[tuple(lag)]) / width.reshape(shape)
    return out


def _window_dd_tensor(g: GridFunction, order, anchored: bool) -> np.ndarray:
    """Divided differences over all consecutive windows for one order.

    Axes with order 0 are anchored at their first breakpoint when
    `anchored`, otherwise kept whole (all anchor values).
    """
    out = g.values
    if anchored:
        sel = tuple(
            slice(None) if pk > 0 else slice(0, 1) for pk in order
        )
        out = out[sel]
    for k, pk in enumerate(order):
        if pk > 0:
            out = _consecutive_dd(out, g.breakpoints[k], k, pk)
    return out


def _family_record(order, stat_tensor, transform) -> dict:
    """Worst violation and its window start index for one order family."""
    stats = transform(stat_tensor)
    flat = int(np.argmax(stats))
    at = tuple(int(v) for v in np.unravel_index(flat, stats.shape))
    return {
        "worst_violation": float(stats.flat[flat]),
        "at_index": at,
        "order": tuple(order),
        "vacuous": False,
    }


def _vacuous_record(order) -> dict:
    return {
        "worst_violation": 0.0,
        "at_index": None,
        "order": tuple(order),
        "vacuous": True,
    }


def default_tolerance(values) -> float:
    """Certificate tolerance 1e-8 x (1 + max |value|)."""
    return 1e-8 * (1.0 + float(np.max(np.abs(values))))


def _certify_families(lengths, s: int, shape: str, tol: float, dd_provider) -> CertificateReport:
    """Family checks shared by the grid-value and fitted-model certificates.

    `dd_provider(order)` returns the window divided-difference tensor for
    one order, anchored at the first breakpoint on the order-0 axes.
    """
    d = len(lengths)
    sign = 1.0 if shape == "concave" else -1.0

    families = {}
    for order in itertools.product((0, 1, 2), repeat=d):
        if max(order) != 2:
            continue
        name = f"concavity p={order}"
        if any(lengths[k] < pk + 1 for k, pk in enumerate(order)):
            families[name] = _vacuous_record(order)
            continue
        scale = float(np.prod([math.factorial(pk) for pk in order]))
        dd = dd_provider(order)
        families[name] = _family_record(order, dd, lambda t: sign * scale * t)

    for order in itertools.product((0, 1), repeat=d):
        if sum(order) <= s:
            continue
        name = f"interaction p={order}"
        if any(lengths[k] < pk + 1 for k, pk in enumerate(order)):
            families[name] = _vacuous_record(order)
            continue
        dd = dd_provider(order)
        families[name] = _family_record(order, dd, np.abs)

    passed = all(f["worst_violation"] <= tol for f in families.values())
    return CertificateReport(passed=passed, families=families, tolerance=float(tol))


def certify_total_concavity(g: GridFunction, s: int, shape: str = "concave", tol=None) -> CertificateReport:
    """Certificate for total concavity/convexity with interaction order s.

    Two constraint families per probed order:

    * concavity: orders p in {0,1,2}^d with max p_k = 2; divided
      differences over all consecutive windows must be <= tol (concave)
      or >= -tol (convex). Non-probed axes are anchored at their first
      breakpoint, which suffices for membership.
    * interaction: orders p in {0,1}^d with sum p_k > s; the divided
      differences must vanish within tol.

    Orders probing an axis beyond its breakpoint count are reported as
    vacuous families. Ties for the worst window break toward the lowest
    multi-index.
    """
    if shape not in ("concave", "convex"):
        raise ValueError(f"unknown shape {shape!r}")
    s = int(s)
    if s < 1:
        raise ValueError("interaction order s must be >= 1")
    if tol is None:
        tol = default_tolerance(g.values)
    lengths = [len(u) for u in g.breakpoints]
    return _certify_families(
        lengths, s, shape, float(tol),
        lambda order: _window_dd_tensor(g, order, anchored=True),
    )


def certify_axial_concavity(g: GridFunction, tol=None) -> CertificateReport:
    """Certificate for axial concavity.

    Checks only the orders with a single 2, over all windows and all
    anchor values of the other coordinates: along each axis, consecutive
    second-difference slope monotonicity must hold at every node of the
    remaining axes.
    """
    if tol is None:
        tol = default_tolerance(g.values)
    families = {}
    for k in range(g.d):
        order = tuple(2 if j == k else 0 for j in range(g.d))
        name = f"axial p={order}"
        if len(g.breakpoints[k]) < 3:
            families[name] = _vacuous_record(order)
            continue
        dd = _window_dd_tensor(g, order, anchored=False)
        families[name] = _family_record(order, dd, lambda t: 2.0 * t)
    passed = all(f["worst_violation"] <= tol for f in families.values())
    return CertificateReport(passed=passed, families=families, tolerance=float(tol))


def certify_entire_monotonicity(g: GridFunction, tol=None) -> CertificateReport:
    """Certificate for entire monotonicity.

    Divided differences of every order p in {0,1}^d except 0 must be
    >= -tol, over all windows and all anchor values.
    """
    if tol is None:
        tol = default_tolerance(g.values)
    lengths = [len(u) for u in g.breakpoints]
    families = {}
    for order in itertools.product((0, 1), repeat=g.d):
        if sum(order) == 0:
            continue
        name = f"monotonicity p={order}"
        if any(lengths[k] < pk + 1 for k, pk in enumerate(order)):
            families[name] = _vacuous_record(order)
            continue
        dd = _window_dd_tensor(g, order, anchored=False)
        families[name] = _family_record(order, dd, lambda t: -t)
    passed = all(f["worst_violation"] <= tol for f in families.values())
    return CertificateReport(passed=passed, families=families, tolerance=float(tol))


def vdesign_upper_bound(g: GridFunction) -> float:
    """Upper bound on the total hinge mass needed to match g on its grid.

    For every nonempty coordinate subset S, take the order-(1 on S)
    divided difference over the first window minus the one over the last
    window, with the other coordinates anchored at their first
    breakpoint, and sum over S. For grid values of a certified totally
    concave function this bounds (and for s = d equals) the total hinge
    weight of the canonical interpolant; on other inputs it is a formal
    value.
    """
    lengths = [len(u) for u in g.breakpoints]
    if any(m < 2 for m in lengths):
        raise ValueError("every axis needs at least 2 breakpoints")
    total = 0.0
    axes = range(g.d)
    for r in range(1, g.d + 1):
        for S in itertools.combinations(axes, r):
            first = [
                (0, 1) if k in S else (0,) for k in axes
            ]
            last = [
                (lengths[k] - 2, lengths[k] - 1) if k in S else (0,) for k in axes
            ]
            total += divided_difference(g, first) - divided_difference(g, last)
    return float(total)


@dataclass(frozen=True)
class HingeExpansion:
    """Concave hinge-product expansion returned by popoviciu_interpolant.

    Evaluates to

        intercept + sum_S monomial[S] prod_{j in S} x_j
                  - sum_(S,t) weights[(S, t)] prod_{j in S} (x_j - t_j)_+

    with all hinge weights nonnegative.
    """

    intercept: float
    monomial: dict
    weights: dict

    @property
    def total_weight(self) -> float:
        return float(sum(self.weights.values()))

    def evaluate(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], self.intercept)
        for S, coef in self.monomial.items():
            out += coef * np.prod(X[:, list(S)], axis=1)
        for (S, t), w in self.weights.items():
            hinge = np.ones(X.shape[0])
            for j, tj in zip(S, t):
                hinge *= np.maximum(X[:, j] - tj, 0.0)
            out -= w * hinge
        return out


def popoviciu_interpolant(g: GridFunction, s: int, tol=None) -> HingeExpansion:
    """Canonical hinge expansion reproducing a totally concave grid.

    Every axis must start at 0 (the construction turns the first-window
    hinge into a plain monomial). The grid must pass
    certify_total_concavity at interaction order s; weights within the
    certificate tolerance of zero are clamped to exactly 0.

    The intercept is the value at the origin corner; the coefficient for
    subset S is the first-window order-(1 on S) divided difference with
    the other axes anchored at 0; the weight at knot (u_{l_k}) is minus
    the product over axes with l_k > 0 of (u_{l_k+1} - u_{l_k-1}) times
    the divided difference over the window centered there (first window,
    order 1, on axes with l_k = 0).

    Raises
    ------
    ValueError
        If some axis does not start at 0 or certification fails.
    """
    for k, u in enumerate(g.breakpoints):
        if u[0] != 0.0:
            raise ValueError(f"axis {k} must start at 0, got {u[0]}")
    report = certify_total_concavity(g, s=s, shape="concave", tol=tol)
    if not report.passed:
        raise ValueError(
            "grid is not certified totally concave at order "
            f"{s} (worst violation {report.worst():.3g} > {report.tolerance:.3g})"
        )

    lengths = [len(u) for u in g.breakpoints]
    axes = range(g.d)
    origin = tuple(0 for _ in axes)
    intercept = float(g.values[origin])
    monomial: dict = {}
    weights: dict = {}

    for r in range(1, min(int(s), g.d) + 1):
        for S in itertools.combinations(axes, r):
            if any(lengths[k] < 2 for k in S):
                continue
            first = [(0, 1) if k in S else (0,) for k in axes]
            monomial[S] = divided_difference(g, first)

            cells = [range(lengths[k] - 1) for k in S]
            for l in itertools.product(*cells):
                if all(lk == 0 for lk in l):
                    continue
                sel = []
                spacing = 1.0
                knot = []
                for k in axes:
                    if k not in S:
                        sel.append((0,))
                        continue
                    lk = l[S.index(k)]
                    u = g.breakpoints[k]
                    knot.append(float(u[lk]))
                    if lk == 0:
                        sel.append((0, 1))
                    else:
                        sel.append((lk - 1, lk, lk + 1))
                        spacing *= u[lk + 1] - u[lk - 1]
                w = -spacing * divided_difference(g, sel)
                if w < 0:
                    # certified, so any negativity is within tolerance noise
                    w = 0.0
                weights[(S, tuple(knot))] = w

    return HingeExpansion(intercept=intercept, monomial=monomial, weights=weights)
