"""Multivariate adaptive regression splines with GCV-guided pruning.

Forward pass: greedy addition of reflected hinge pairs
``parent * max(0, x_j - t)`` / ``parent * max(0, t - x_j)`` with knots at
observed values. Candidate knots for one (parent, variable) are scored all at
once with suffix sums over the variable's sorted values, against an
orthonormal basis of the current model.

Backward pass: repeated removal of the term whose deletion raises the
residual sum of squares least; the subset with the lowest GCV wins.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from ..errors import FeatureMismatch, InputError, PenaltyExceedsRows, TooFewRows

MIN_ROWS = 8
PIECEWISE_LINEAR = "piecewise_linear"
PIECEWISE_CUBIC = "piecewise_cubic"


@dataclass(frozen=True)
class Hinge:
    var: int
    knot: float
    sign: int  # +1: max(0, x - knot); -1: max(0, knot - x)
    # piecewise-cubic side knots; None in linear mode
    lower: float | None = None
    upper: float | None = None

    def evaluate(self, x: np.ndarray, cubic: bool = False) -> np.ndarray:
        if not cubic or self.lower is None:
            return np.maximum(0.0, self.sign * (x - self.knot))
        return _cubic_hinge(x, self.lower, self.knot, self.upper, self.sign)


Term = tuple  # tuple[Hinge, ...]; the empty tuple is the intercept


@dataclass(frozen=True)
class MarsConfig:
    max_terms: int = 21
    max_degree: int = 2
    penalty: float = 3.0
    mode: str = PIECEWISE_LINEAR
    threshold: float = 1e-4  # minimum relative RSS gain per forward step

    def __post_init__(self):
        if self.max_terms < 1:
            raise InputError("max_terms must be >= 1")
        if self.max_degree < 1:
            raise InputError("max_degree must be >= 1")
        if self.penalty < 0:
            raise InputError("penalty must be >= 0")
        if self.mode not in (PIECEWISE_LINEAR, PIECEWISE_CUBIC):
            raise InputError(f"unknown MARS mode {self.mode!r}")


@dataclass(frozen=True)
class MarsModel:
    terms: tuple[Term, ...]
    coefficients: np.ndarray
    feature_names: tuple[str, ...]
    max_terms: int
    penalty_d: float
    mode: str
    gcv_score: float
    rss: float = 0.0
    n_train: int = 0
    pruning_path: tuple = field(default=(), compare=False)

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def knots(self) -> list[tuple[int, float, int]]:
        return [(h.var, h.knot, h.sign) for term in self.terms for h in term]

    def to_dict(self) -> dict:
        return {
            "format": "peaqlab.mars/1",
            "feature_names": list(self.feature_names),
            "mode": self.mode,
            "max_terms": self.max_terms,
            "penalty_d": self.penalty_d,
            "gcv_score": self.gcv_score,
            "rss": self.rss,
            "n_train": self.n_train,
            "terms": [
                {
                    "coefficient": float(c),
                    "hinges": [
                        {"var": h.var, "knot": h.knot, "sign": h.sign, "lower": h.lower, "upper": h.upper}
                        for h in term
                    ],
                }
                for term, c in zip(self.terms, self.coefficients)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MarsModel":
        if data.get("format") != "peaqlab.mars/1":
            raise InputError(f"not a MARS model file (format={data.get('format')!r})")
        terms = tuple(tuple(Hinge(**h) for h in t["hinges"]) for t in data["terms"])
        coefs = np.array([t["coefficient"] for t in data["terms"]], dtype=float)
        return cls(
            terms,
            coefs,
            tuple(data["feature_names"]),
            int(data["max_terms"]),
            float(data["penalty_d"]),
            data["mode"],
            float(data["gcv_score"]),
            float(data.get("rss", 0.0)),
            int(data.get("n_train", 0)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def describe(self) -> str:
        lines = []
        for term, c in zip(self.terms, self.coefficients):
            parts = [
                f"max(0, {self.feature_names[h.var]} - {h.knot:g})"
                if h.sign > 0
                else f"max(0, {h.knot:g} - {self.feature_names[h.var]})"
                for h in term
            ]
            lines.append(f"{c:+.6g}" + "".join(" * " + p for p in parts))
        return "\n".join(lines)


def effective_parameters(n_terms: int, penalty: float) -> float:
    return n_terms + penalty * (n_terms - 1) / 2.0


def gcv(rss: float, n: int, n_terms: int, penalty: float) -> float:
    """Generalized cross-validation: ``RSS / (n * (1 - C/n)**2)``.

    ``C = M + d*(M-1)/2`` is the effective number of parameters of a model
    with ``M`` terms (intercept included) and knot penalty ``d``.
    """
    c = effective_parameters(n_terms, penalty)
    if c >= n:
        raise PenaltyExceedsRows(f"effective parameters C={c:g} >= rows n={n}")
    return rss / (n * (1.0 - c / n) ** 2)


def _gcv_or_inf(rss, n, m, d):
    c = effective_parameters(m, d)
    return math.inf if c >= n else rss / (n * (1.0 - c / n) ** 2)


def _term_values(term: Term, X: np.ndarray, cubic: bool = False) -> np.ndarray:
    out = np.ones(X.shape[0])
    for h in term:
        out = out * h.evaluate(X[:, h.var], cubic)
    return out


def design_matrix(terms: Sequence[Term], X: np.ndarray, cubic: bool = False) -> np.ndarray:
    return np.column_stack([_term_values(t, X, cubic) for t in terms]) if terms else np.ones((X.shape[0], 0))


def _orthonormal_append(Q: np.ndarray, v: np.ndarray, scale: float, tol: float = 1e-10):
    """Orthogonalize ``v`` against ``Q`` (twice, for stability); None if dependent."""
    w = v - Q @ (Q.T @ v)
    w = w - Q @ (Q.T @ w)
    norm = float(np.linalg.norm(w))
    if norm <= tol * max(scale, 1e-300):
        return None
    return w / norm


class _ForwardPass:
    def __init__(self, X, y, cfg: MarsConfig):
        self.X = X
        self.y = y
        self.cfg = cfg
        n, p = X.shape
        self.n = n
        self.order = [np.argsort(X[:, j], kind="stable") for j in range(p)]
        self.sorted = [X[o, j] for j, o in enumerate(self.order)]
        # candidate knots: distinct values except the largest (its right hinge is 0)
        self.knots = []
        self.starts = []
        for j in range(p):
            u = np.unique(self.sorted[j])[:-1]
            self.knots.append(u)
            self.starts.append(np.searchsorted(self.sorted[j], u, side="right"))
        self.terms: list[Term] = [()]
        self.columns = [np.ones(n)]
        self.Q = np.ones((n, 1)) / math.sqrt(n)
        self.resid = y - self.Q @ (self.Q.T @ y)
        self.tss = float(self.resid @ self.resid)

    def _vars_of(self, term: Term) -> set:
        return {h.var for h in term}

    def _score_var(self, j, parent_idx):
        """Gain of every (knot, parent) candidate on variable j, shape (K, parents)."""
        o = self.order[j]
        xs = self.sorted[j]
        P = np.ascontiguousarray(np.column_stack([self.columns[i] for i in parent_idx])[o])
        Q = np.ascontiguousarray(self.Q[o])
        r = np.ascontiguousarray(self.resid[o])
        # linear partner column u = orthonormalized parent * x (one per parent)
        PX = P * xs[:, None]
        U = PX - Q @ (Q.T @ PX)
        U = U - Q @ (Q.T @ U)
        unorm = np.linalg.norm(U, axis=0)
        scale = np.linalg.norm(PX, axis=0)
        has_u = unorm > 1e-10 * np.maximum(scale, 1e-300)
        U = np.ascontiguousarray(np.where(has_u, U / np.where(has_u, unorm, 1.0), 0.0))
        return _scan_knots(xs, P, Q, r, U, self.starts[j], self.knots[j])

    def run(self):
        cfg = self.cfg
        X = self.X
        while len(self.terms) + 2 <= cfg.max_terms:
            rss = float(self.resid @ self.resid)
            if rss <= 1e-12 * max(self.tss, 1e-300) or self.tss == 0:
                break
            best = None  # (gain, var, knot_index, parent)
            for j in range(X.shape[1]):
                if self.knots[j].size == 0:
                    continue
                parents = [
                    i
                    for i, term in enumerate(self.terms)
                    if len(term) < cfg.max_degree and j not in self._vars_of(term)
                ]
                if not parents:
                    continue
                gain = self._score_var(j, parents)
                # ties: smaller knot, then earlier parent
                flat = int(np.argmax(gain))
                k, pi = np.unravel_index(flat, gain.shape)
                g = float(gain[k, pi])
                if best is None or g > best[0] * (1 + 1e-12) + 1e-300:
                    best = (g, j, int(k), parents[int(pi)])
            if best is None or best[0] <= cfg.threshold * self.tss:
                break
            g, j, k, parent = best
            knot = float(self.knots[j][k])
            added = False
            for sign in (+1, -1):
                term = self.terms[parent] + (Hinge(j, knot, sign),)
                col = _term_values(term, X)
                q = _orthonormal_append(self.Q, col, float(np.linalg.norm(col)))
                if q is None:
                    continue
                self.terms.append(term)
                self.columns.append(col)
                self.Q = np.column_stack([self.Q, q])
                added = True
            if not added:
                break
            self.resid = self.y - self.Q @ (self.Q.T @ self.y)
        return self.terms, self.columns


@njit(cache=True, nogil=True)
def _scan_knots(xs, P, Q, r, U, starts, knots):
    n, n_par = P.shape
    m = Q.shape[1]
    n_knots = knots.shape[0]
    gain = np.full((n_knots, n_par), -np.inf)
    s1 = np.empty(m + 2)
    s0 = np.empty(m + 2)
    for p in range(n_par):
        s1[:] = 0.0
        s0[:] = 0.0
        a2 = 0.0
        a1 = 0.0
        a0 = 0.0
        ru = 0.0
        for i in range(n):
            ru += r[i] * U[i, p]
        ptr = n
        for k in range(n_knots - 1, -1, -1):
            # accumulate rows with x > knot (sorted positions >= starts[k])
            while ptr > starts[k]:
                ptr -= 1
                pv = P[ptr, p]
                if pv == 0.0:
                    continue
                x = xs[ptr]
                for c in range(m):
                    w = Q[ptr, c] * pv
                    s0[c] += w
                    s1[c] += w * x
                w = r[ptr] * pv
                s0[m] += w
                s1[m] += w * x
                w = U[ptr, p] * pv
                s0[m + 1] += w
                s1[m + 1] += w * x
                pp = pv * pv
                a0 += pp
                a1 += pp * x
                a2 += pp * x * x
            t = knots[k]
            hh = a2 - 2.0 * t * a1 + t * t * a0
            if hh <= 0.0:
                continue
            qq = 0.0
            for c in range(m):
                q = s1[c] - t * s0[c]
                qq += q * q
            rh = s1[m] - t * s0[m]
            uh = s1[m + 1] - t * s0[m + 1]
            gg = hh - qq - uh * uh
            rg = rh - ru * uh
            g = ru * ru
            if gg > 1e-9 * hh:
                g += rg * rg / gg
            gain[k, p] = g
    return gain


def _backward(B: np.ndarray, y: np.ndarray, d: float):
    """Greedy elimination; returns (kept column indices, rss, gcv, path)."""
    n = B.shape[0]
    active = list(range(B.shape[1]))
    path = []

    def fit(cols):
        coef, *_ = np.linalg.lstsq(B[:, cols], y, rcond=None)
        res = y - B[:, cols] @ coef
        return coef, float(res @ res)

    coef, rss = fit(active)
    # GCV differences below this are rounding noise; the smaller model wins them
    tol = 1e-12 * float(np.var(y)) + 1e-300
    best = (_gcv_or_inf(rss, n, len(active), d), tuple(active), rss)
    path.append((len(active), rss, best[0]))
    while len(active) > 1:
        Bq = B[:, active]
        _, R = np.linalg.qr(Bq)
        try:
            Rinv = np.linalg.solve(R, np.eye(R.shape[0]))
        except np.linalg.LinAlgError:
            Rinv = np.linalg.pinv(R)
        diag = np.sum(Rinv * Rinv, axis=1)
        increase = coef**2 / diag
        increase[0] = np.inf  # intercept stays
        # ties: drop the later term
        drop = int(len(increase) - 1 - np.argmin(increase[::-1]))
        del active[drop]
        coef, rss = fit(active)
        score = _gcv_or_inf(rss, n, len(active), d)
        path.append((len(active), rss, score))
        if score <= best[0] + tol:
            best = (score, tuple(active), rss)
    return list(best[1]), best[2], best[0], tuple(path)


def _canonical_order(X, y):
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def mars_fit(X, y, cfg: MarsConfig | None = None, feature_names: Sequence[str] | None = None) -> MarsModel:
    """Fit a MARS model to ``X`` (rows x features) and targets ``y``.

    Rows are put into a canonical order first, so the fit does not depend on
    input row order. Constant feature columns never receive knots; an
    all-constant design gives an intercept-only model.
    """
    cfg = cfg or MarsConfig()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise InputError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if X.shape[0] < MIN_ROWS:
        raise TooFewRows(f"MARS needs at least {MIN_ROWS} rows, got {X.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InputError("X and y must be finite")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(X.shape[1]))
    if len(names) != X.shape[1]:
        raise FeatureMismatch(f"{len(names)} feature names for {X.shape[1]} columns")

    order = _canonical_order(X, y)
    X, y = X[order], y[order]
    n = X.shape[0]
    terms, columns = _ForwardPass(X, y, cfg).run()
    B = np.column_stack(columns)
    kept, rss, score, path = _backward(B, y, cfg.penalty)
    terms = [terms[i] for i in kept]
    cubic = cfg.mode == PIECEWISE_CUBIC
    if cubic:
        terms = _attach_cubic_knots(terms, X)
    Bk = design_matrix(terms, X, cubic)
    coef, *_ = np.linalg.lstsq(Bk, y, rcond=None)
    res = y - Bk @ coef
    rss = float(res @ res)
    score = _gcv_or_inf(rss, n, len(terms), cfg.penalty)
    return MarsModel(
        tuple(terms), coef, names, cfg.max_terms, cfg.penalty, cfg.mode, score, rss, n, path
    )


def mars_predict(model: MarsModel, x, feature_names: Sequence[str] | None = None):
    """Evaluate ``model`` on one feature vector (returns float) or a matrix (returns array).

    ``x`` may also be a mapping from feature name to value.
    """
    if isinstance(x, dict):
        missing = [n for n in model.feature_names if n not in x]
        if missing or len(x) != len(model.feature_names):
            raise FeatureMismatch(f"expected features {list(model.feature_names)}, got {sorted(x)}")
        x = [x[n] for n in model.feature_names]
    elif feature_names is not None and tuple(feature_names) != model.feature_names:
        raise FeatureMismatch(f"expected features {list(model.feature_names)}, got {list(feature_names)}")
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    arr = np.atleast_2d(arr)
    if single and arr.shape[0] != 1:
        arr = arr.reshape(1, -1)
    if arr.shape[1] != len(model.feature_names):
        raise FeatureMismatch(f"model expects {len(model.feature_names)} features, got {arr.shape[1]}")
    B = design_matrix(model.terms, arr, model.mode == PIECEWISE_CUBIC)
    out = B @ model.coefficients
    return float(out[0]) if single else out


# --------------------------------------------------------------------------
# piecewise-cubic smoothing


def _cubic_hinge(x, lo, t, hi, sign):
    x = np.asarray(x, dtype=float)
    if sign > 0:
        p = (2 * hi + lo - 3 * t) / (hi - lo) ** 2
        r = (2 * t - hi - lo) / (hi - lo) ** 3
        mid = p * (x - lo) ** 2 + r * (x - lo) ** 3
        return np.where(x <= lo, 0.0, np.where(x >= hi, x - t, mid))
    p = (3 * t - 2 * lo - hi) / (lo - hi) ** 2
    r = (lo + hi - 2 * t) / (lo - hi) ** 3
    mid = p * (x - hi) ** 2 + r * (x - hi) ** 3
    return np.where(x <= lo, t - x, np.where(x >= hi, 0.0, mid))


def _attach_cubic_knots(terms, X):
    """Place side knots midway between each knot and its neighbours on the same variable."""
    per_var: dict[int, list[float]] = {}
    for term in terms:
        for h in term:
            per_var.setdefault(h.var, []).append(h.knot)
    sides = {}
    for j, ks in per_var.items():
        ks = sorted(set(ks))
        lo_edge, hi_edge = float(X[:, j].min()), float(X[:, j].max())
        for i, k in enumerate(ks):
            left = ks[i - 1] if i > 0 else lo_edge
            right = ks[i + 1] if i + 1 < len(ks) else hi_edge
            lo = (left + k) / 2.0 if left < k else k - 1e-9 * max(1.0, abs(k))
            hi = (k + right) / 2.0 if right > k else k + 1e-9 * max(1.0, abs(k))
            sides[(j, k)] = (lo, hi)
    return [tuple(Hinge(h.var, h.knot, h.sign, *sides[(h.var, h.knot)]) for h in term) for term in terms]
