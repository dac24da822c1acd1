"""Basis enumeration and design assembly for hinge-product regression.

Fitted functions take the form

    intercept + sum_S beta_S prod_{j in S} x_j
              - sum_S sum_t w_t prod_{j in S} (x_j - t_j)_+          (concave)

with knots t drawn from a lattice built on the scaled data, plus optional
plain linear factors and tail covariates for the partially linear variants.
All coordinate indices here are 0-based.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

VARIANTS = ("tc", "tc_l", "tc_l_i", "axial")
SHAPES = ("concave", "convex")


@dataclass(frozen=True)
class ModelSpec:
    """Estimator configuration.

    Parameters
    ----------
    variant : str
        One of "tc", "tc_l", "tc_l_i", "axial".
    s : int, optional
        Interaction order bound (ignored for "axial").
    p : int, optional
        Number of leading shape-constrained covariates (tc_l, tc_l_i).
    q : int, optional
        Number of leading interaction-eligible covariates (tc_l_i),
        p <= q <= d.
    shape : str
        "concave" or "convex".
    V_cap : float, optional
        Cap on the total hinge weight. None means unregularized.
    proxy_counts : sequence of int, optional
        Per-coordinate counts N_j; when given, knots come from the equally
        spaced proxy lattice {0, 1/N_j, ..., (N_j-1)/N_j} instead of the
        data values.
    """

    variant: str = "tc"
    s: int | None = None
    p: int | None = None
    q: int | None = None
    shape: str = "concave"
    V_cap: float | None = None
    proxy_counts: tuple | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.variant != "axial":
            if self.s is None or int(self.s) < 1:
                raise ValueError("interaction order s must be a positive integer")
            object.__setattr__(self, "s", int(self.s))
        if self.variant in ("tc_l", "tc_l_i"):
            if self.p is None or int(self.p) < 1:
                raise ValueError(f"variant {self.variant} requires p >= 1")
            object.__setattr__(self, "p", int(self.p))
        if self.variant == "tc_l_i":
            if self.q is None or int(self.q) < self.p:
                raise ValueError("tc_l_i requires q >= p")
            object.__setattr__(self, "q", int(self.q))
        if self.V_cap is not None and not self.V_cap >= 0:
            raise ValueError("V_cap must be nonnegative")
        if self.proxy_counts is not None:
            counts = tuple(int(c) for c in self.proxy_counts)
            if any(c < 1 for c in counts):
                raise ValueError("proxy counts must be positive integers")
            object.__setattr__(self, "proxy_counts", counts)

    def validate_for_dimension(self, d: int) -> None:
        """Check the data-dependent invariants against covariate count d."""
        if d < 1:
            raise ValueError("d must be >= 1")
        if self.variant == "tc" and not self.s <= d:
            raise ValueError(f"tc requires s <= d, got s={self.s}, d={d}")
        if self.variant == "tc_l":
            if not (self.s <= self.p <= d):
                raise ValueError(f"tc_l requires s <= p <= d, got s={self.s}, p={self.p}, d={d}")
        if self.variant == "tc_l_i":
            if not (self.p <= self.q <= d):
                raise ValueError(f"tc_l_i requires p <= q <= d, got p={self.p}, q={self.q}, d={d}")
            if not self.s <= self.q:
                raise ValueError(f"tc_l_i requires s <= q, got s={self.s}, q={self.q}")
        if self.proxy_counts is not None and len(self.proxy_counts) != d:
            raise ValueError("proxy_counts must have one entry per covariate")


@dataclass(frozen=True)
class KnotLattice:
    """Knot set for one coordinate subset S.

    Knots are |S|-vectors; the all-zeros vector is excluded. Coordinates
    lie in [0, 1]; a knot exactly at a coordinate's maximum produces an
    all-zero design column there, which the solver pins to weight 0.
    """

    S: tuple
    knots: tuple

    def __len__(self) -> int:
        return len(self.knots)


@dataclass(frozen=True)
class BasisTerm:
    """One design column: a monomial or a hinge product.

    S carries hinge/monomial factor coordinates, T plain linear factor
    coordinates (nonempty only for tc_l_i interaction terms). Monomials
    have knots == (); the intercept is the monomial with S == T == ().
    """

    kind: str
    S: tuple = ()
    T: tuple = ()
    knots: tuple = ()

    def __post_init__(self):
        if self.kind not in ("monomial", "hinge"):
            raise ValueError(f"unknown term kind {self.kind!r}")
        if self.kind == "monomial" and self.knots:
            raise ValueError("monomial terms carry no knots")
        if self.kind == "hinge":
            if len(self.S) < 1:
                raise ValueError("hinge terms need at least one hinge coordinate")
            if len(self.knots) != len(self.S):
                raise ValueError("hinge knot vector must match S")
            if all(t == 0 for t in self.knots):
                raise ValueError("hinge knot must not be the zero vector")
        if set(self.S) & set(self.T):
            raise ValueError("S and T must be disjoint")


@dataclass(frozen=True)
class DesignMatrix:
    """Assembled design: one column per basis term.

    free_block indexes sign-unconstrained columns (intercept, monomials,
    linear covariates); pos_block indexes the hinge columns whose weights
    are constrained nonnegative.
    """

    matrix: np.ndarray
    terms: tuple
    free_block: np.ndarray
    pos_block: np.ndarray

    @property
    def columns(self):
        """Ordered (term, column vector) pairs."""
        return tuple((t, self.matrix[:, i]) for i, t in enumerate(self.terms))


def build_lattice(X_unit, S, proxy_counts=None) -> KnotLattice:
    """Knot lattice for coordinate subset S.

    Exact mode takes the product over j in S of {0} union {observed
    values}, proxy mode the product of {0, 1/N_j, ..., (N_j-1)/N_j}; in
    both the all-zeros vector is dropped. Duplicate data values collapse
    (exact equality after scaling, no epsilon merging).

    Parameters
    ----------
    X_unit : ndarray
        Scaled covariates, shape (n, d).
    S : sequence of int
        Nonempty sorted 0-based coordinate subset.
    proxy_counts : sequence of int, optional
        Full-length per-coordinate counts; entries outside S are unused.

    Returns
    -------
    KnotLattice
        Knots in lexicographic order.
    """
    S = tuple(int(j) for j in S)
    if len(S) == 0:
        raise ValueError("S must be nonempty")
    if list(S) != sorted(set(S)):
        raise ValueError("S must be sorted and duplicate-free")
    X_unit = np.atleast_2d(np.asarray(X_unit, dtype=float))
    d = X_unit.shape[1]
    if any(j < 0 or j >= d for j in S):
        raise ValueError(f"S={S} out of range for d={d}")

    axes = []
    for j in S:
        if proxy_counts is not None:
            N = int(proxy_counts[j])
            vals = [l / N for l in range(N)]
        else:
            vals = sorted(set({0.0} | set(X_unit[:, j].tolist())))
        axes.append(vals)
    knots = tuple(
        t for t in itertools.product(*axes) if any(c != 0 for c in t)
    )
    return KnotLattice(S=S, knots=knots)


def _term_sort_key(term: BasisTerm):
    return (len(term.S) + len(term.T), term.S, term.T, term.knots)


def enumerate_terms(spec: ModelSpec, X_unit) -> tuple:
    """All basis terms for a model spec on the given scaled data.

    Output order is deterministic: by |S union T|, then lexicographic on
    S, then T, then the knot vector; monomials precede hinges with the
    same coordinates. A pure function of (spec, sorted unique values per
    coordinate).

    Returns
    -------
    tuple of BasisTerm
    """
    X_unit = np.atleast_2d(np.asarray(X_unit, dtype=float))
    d = X_unit.shape[1]
    spec.validate_for_dimension(d)
    if spec.variant == "axial":
        raise ValueError("axial variant has no hinge-product basis")

    if spec.variant == "tc":
        shape_axes = list(range(d))
        inter_axes: list = []
        tail_axes: list = []
    elif spec.variant == "tc_l":
        shape_axes = list(range(spec.p))
        inter_axes = []
        tail_axes = list(range(spec.p, d))
    else:
        shape_axes = list(range(spec.p))
        inter_axes = list(range(spec.p, spec.q))
        tail_axes = list(range(spec.q, d))

    terms = [BasisTerm(kind="monomial")]
    for j in tail_axes:
        terms.append(BasisTerm(kind="monomial", S=(j,)))

    lattices: dict = {}
    for ssize in range(0, spec.s + 1):
        for S in itertools.combinations(shape_axes, ssize):
            if ssize >= 1 and S not in lattices:
                lattices[S] = build_lattice(X_unit, S, spec.proxy_counts)
            for tsize in range(0, spec.s - ssize + 1):
                for T in itertools.combinations(inter_axes, tsize):
                    if ssize + tsize == 0:
                        continue
                    terms.append(BasisTerm(kind="monomial", S=S, T=T))
                    if ssize >= 1:
                        for t in lattices[S].knots:
                            terms.append(
                                BasisTerm(kind="hinge", S=S, T=T, knots=t)
                            )
    return tuple(sorted(terms, key=_term_sort_key))


def eval_term(term: BasisTerm, x_unit) -> float | np.ndarray:
    """Evaluate one term at a scaled point or batch of points.

    Monomials give prod_{j in S union T} x_j (1 for the intercept), hinge
    terms prod_{j in S} (x_j - t_j)_+ times prod_{k in T} x_k. Defined for
    all real inputs; hinges extend naturally beyond [0, 1].
    """
    x = np.asarray(x_unit, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    out = np.ones(X.shape[0])
    if term.kind == "monomial":
        for j in term.S + term.T:
            out = out * X[:, j]
    else:
        for j, t in zip(term.S, term.knots):
            out = out * np.maximum(X[:, j] - t, 0.0)
        for k in term.T:
            out = out * X[:, k]
    return float(out[0]) if single else out


def assemble_design(X_unit, terms) -> DesignMatrix:
    """Evaluate every term on every scaled row.

    Column i, row r equals eval_term(terms[i], X_unit[r]); the free and
    positive blocks partition the columns by term kind.
    """
    X_unit = np.atleast_2d(np.asarray(X_unit, dtype=float))
    n = X_unit.shape[0]
    m = len(terms)
    matrix = np.empty((n, m))
    for i, term in enumerate(terms):
        matrix[:, i] = eval_term(term, X_unit)
    free = np.array([i for i, t in enumerate(terms) if t.kind == "monomial"], dtype=int)
    pos = np.array([i for i, t in enumerate(terms) if t.kind == "hinge"], dtype=int)
    return DesignMatrix(matrix=matrix, terms=tuple(terms), free_block=free, pos_block=pos)
