"""Linear-programming kernel and polytope geometry.

Provides a dense two-phase primal simplex with Bland's anti-cycling rule
(problem sizes here are small, so no sparse or interior-point machinery),
conditional truncation bounds for both polytope representations, convex-hull
membership, and bisection bounds for convex indicator regions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, EmptyIntervalError, InfeasibleError, NumericError
from .model import AbPolytope, ItemLayout, VPolytope

# Relative feasibility/optimality tolerance of the simplex.
LP_TOL = 1e-9

# A conditional interval narrower than this is treated as sampler-state
# corruption rather than clamped away.
EMPTY_TOL = 1e-8

# LP optimum above this value marks a point as outside the convex hull.
HULL_TOL = 1e-8

_MAX_PIVOTS = 50_000


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi]; construction rejects empty intervals."""

    lo: float
    hi: float

    def __post_init__(self):
        if self.hi < self.lo - EMPTY_TOL:
            raise EmptyIntervalError(
                f"interval [{self.lo}, {self.hi}] is empty beyond tolerance"
            )
        if self.hi < self.lo:
            object.__setattr__(self, "hi", self.lo)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def clip(self, x: float) -> float:
        return min(max(x, self.lo), self.hi)


@dataclass(frozen=True)
class LpProblem:
    """maximize ``objective @ x`` subject to row constraints and variable bounds.

    Parameters
    ----------
    objective : array, shape (n,)
    lhs : array, shape (m, n)
    senses : sequence of str
        One of ``"<="``, ``"="``, ``">="`` per row.
    rhs : array, shape (m,)
    lower, upper : arrays, shape (n,)
        Variable bounds; ``-inf`` and ``+inf`` are allowed.
    """

    objective: np.ndarray
    lhs: np.ndarray
    senses: tuple[str, ...]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.objective, dtype=float))
        lhs = np.asarray(self.lhs, dtype=float)
        if lhs.ndim == 1:
            lhs = lhs.reshape(0, c.size) if lhs.size == 0 else lhs.reshape(1, -1)
        rhs = np.atleast_1d(np.asarray(self.rhs, dtype=float))
        senses = tuple(self.senses)
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        n = c.size
        if lhs.shape != (rhs.size, n):
            raise DimensionError(
                f"lhs has shape {lhs.shape}, expected ({rhs.size}, {n})"
            )
        if len(senses) != rhs.size:
            raise DimensionError("one sense per constraint row is required")
        if any(s not in ("<=", "=", ">=") for s in senses):
            raise ValueError(f"senses must be '<=', '=' or '>=', got {senses}")
        if lower.size != n or upper.size != n:
            raise DimensionError("lower/upper bounds must match objective length")
        if np.any(lower > upper):
            raise ValueError("a variable has lower bound above its upper bound")
        for name, arr in (("objective", c), ("lhs", lhs), ("rhs", rhs)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        for attr, val in (
            ("objective", c), ("lhs", lhs), ("rhs", rhs),
            ("senses", senses), ("lower", lower), ("upper", upper),
        ):
            object.__setattr__(self, attr, val)

    @classmethod
    def nonneg(cls, objective, lhs, senses, rhs) -> "LpProblem":
        """Problem with all variables bounded to [0, inf)."""
        c = np.atleast_1d(np.asarray(objective, dtype=float))
        return cls(c, lhs, senses, rhs, np.zeros(c.size), np.full(c.size, np.inf))


@dataclass(frozen=True)
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded" | "failed"
    value: float | None = None
    x: np.ndarray | None = None


def _pivot(tab: np.ndarray, rhs: np.ndarray, basis: np.ndarray, row: int, col: int):
    piv = tab[row, col]
    tab[row] /= piv
    rhs[row] /= piv
    factors = tab[:, col].copy()
    factors[row] = 0.0
    tab -= np.outer(factors, tab[row])
    rhs -= factors * rhs[row]
    np.maximum(rhs, 0.0, out=rhs)
    basis[row] = col


def _simplex(tab, rhs, basis, cost, tol):
    """Minimize ``cost @ y`` on the tableau; Bland's rule throughout.

    Returns "optimal" or "unbounded"; mutates tab/rhs/basis in place.
    """
    for _ in range(_MAX_PIVOTS):
        reduced = cost - tab.T @ cost[basis]
        enter_candidates = np.nonzero(reduced < -tol)[0]
        if enter_candidates.size == 0:
            return "optimal"
        col = int(enter_candidates[0])
        d = tab[:, col]
        pos = d > tol
        if not np.any(pos):
            return "unbounded"
        ratios = np.full(d.shape, np.inf)
        ratios[pos] = rhs[pos] / d[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + tol * (1 + abs(best)))[0]
        row = int(ties[np.argmin(basis[ties])])
        _pivot(tab, rhs, basis, row, col)
    raise NumericError("simplex failed to terminate (pivot cap reached)")


def solve_lp(problem: LpProblem) -> LpResult:
    """Dense two-phase primal simplex for small LPs.

    Returns an ``LpResult`` whose status is one of ``optimal``, ``infeasible``,
    ``unbounded`` or ``failed``.  For ``optimal`` the solution satisfies every
    constraint within a small absolute tolerance (checked before reporting;
    violations downgrade the status to ``failed``).
    """
    c = problem.objective
    n_orig = c.size

    # Substitute variables so every simplex variable is >= 0.
    # recon maps simplex columns back to the original variables.
    cols: list[np.ndarray] = []
    recon: list[tuple] = []  # ("shift",col,l) | ("mirror",col,u) | ("split",p,m)
    extra_upper: list[tuple[int, float]] = []  # (column, bound) rows y_col <= bound
    lhs = problem.lhs
    shift_rhs = np.zeros(problem.rhs.size)
    for j in range(n_orig):
        lo, hi = problem.lower[j], problem.upper[j]
        col = lhs[:, j] if lhs.size else np.zeros(0)
        if np.isfinite(lo):
            idx = len(cols)
            cols.append(col)
            recon.append(("shift", idx, lo))
            shift_rhs += col * lo
            if np.isfinite(hi):
                extra_upper.append((idx, hi - lo))
        elif np.isfinite(hi):
            idx = len(cols)
            cols.append(-col)
            recon.append(("mirror", idx, hi))
            shift_rhs += col * hi
        else:
            idx = len(cols)
            cols.append(col)
            cols.append(-col)
            recon.append(("split", idx, idx + 1))

    n_std = len(cols)
    m_orig = problem.rhs.size
    m = m_orig + len(extra_upper)
    body = np.zeros((m, n_std))
    if m_orig:
        body[:m_orig] = np.column_stack(cols) if n_std else np.zeros((m_orig, 0))
    rhs = np.concatenate([problem.rhs - shift_rhs, [u for _, u in extra_upper]])
    senses = list(problem.senses) + ["<="] * len(extra_upper)
    for r, (col_idx, _) in enumerate(extra_upper):
        body[m_orig + r, col_idx] = 1.0

    # Objective on the substituted variables.
    c_std = np.zeros(n_std)
    for j, tr in enumerate(recon):
        if tr[0] == "shift":
            c_std[tr[1]] += c[j]
        elif tr[0] == "mirror":
            c_std[tr[1]] -= c[j]
        else:
            c_std[tr[1]] += c[j]
            c_std[tr[2]] -= c[j]

    # Normalize to rhs >= 0, then append slack/artificial columns.
    flip = rhs < 0
    body[flip] *= -1.0
    rhs = np.abs(rhs)
    senses = [
        {"<=": ">=", ">=": "<=", "=": "="}[s] if f else s
        for s, f in zip(senses, flip)
    ]
    scale = max(1.0, np.abs(body).max(initial=0.0), np.abs(rhs).max(initial=0.0))
    tol = LP_TOL * scale

    slack_cols = []
    art_rows = []
    basis = np.full(m, -1, dtype=np.intp)
    for r, s in enumerate(senses):
        if s == "<=":
            slack_cols.append((r, 1.0))
            basis[r] = n_std + len(slack_cols) - 1
        elif s == ">=":
            slack_cols.append((r, -1.0))
            art_rows.append(r)
        else:
            art_rows.append(r)
    n_slack = len(slack_cols)
    n_art = len(art_rows)
    tab = np.zeros((m, n_std + n_slack + n_art))
    tab[:, :n_std] = body
    for i, (r, sign) in enumerate(slack_cols):
        tab[r, n_std + i] = sign
    for i, r in enumerate(art_rows):
        col = n_std + n_slack + i
        tab[r, col] = 1.0
        basis[r] = col
    rhs = rhs.copy()

    n_real = n_std + n_slack
    keep = np.arange(m)
    if n_art:
        cost1 = np.zeros(n_std + n_slack + n_art)
        cost1[n_real:] = 1.0
        status = _simplex(tab, rhs, basis, cost1, tol)
        if status != "optimal":
            return LpResult("failed")
        if rhs[basis >= n_real].sum() > 1e-7 * scale:
            return LpResult("infeasible")
        # Pivot leftover artificials out of the basis; rows where no real
        # column is available are redundant and get dropped.
        drop = []
        for r in range(m):
            if basis[r] < n_real:
                continue
            candidates = np.nonzero(np.abs(tab[r, :n_real]) > tol)[0]
            if candidates.size:
                _pivot(tab, rhs, basis, r, int(candidates[0]))
            else:
                drop.append(r)
        if drop:
            keep = np.array([r for r in range(m) if r not in set(drop)], dtype=int)
            tab = tab[keep]
            rhs = rhs[keep]
            basis = basis[keep]
        tab = tab[:, :n_real]

    cost2 = np.zeros(n_real)
    cost2[:n_std] = -c_std  # maximize c_std <=> minimize -c_std
    status = _simplex(tab, rhs, basis, cost2, tol)
    if status == "unbounded":
        return LpResult("unbounded")

    y = np.zeros(n_real)
    y[basis] = rhs
    x = np.empty(n_orig)
    for j, tr in enumerate(recon):
        if tr[0] == "shift":
            x[j] = tr[2] + y[tr[1]]
        elif tr[0] == "mirror":
            x[j] = tr[2] - y[tr[1]]
        else:
            x[j] = y[tr[1]] - y[tr[2]]

    # Never report a wrong answer: verify the reconstructed solution.
    if problem.lhs.size:
        lhs_val = problem.lhs @ x
        resid_tol = 1e-8 * scale
        for r, s in enumerate(problem.senses):
            diff = lhs_val[r] - problem.rhs[r]
            bad = (
                (s == "<=" and diff > resid_tol)
                or (s == ">=" and diff < -resid_tol)
                or (s == "=" and abs(diff) > resid_tol)
            )
            if bad:
                return LpResult("failed")
    if np.any(x < problem.lower - 1e-8) or np.any(x > problem.upper + 1e-8):
        return LpResult("failed")
    return LpResult("optimal", float(c @ x), x)


def natural_constraints(layout: ItemLayout) -> tuple[np.ndarray, np.ndarray]:
    """Rows encoding theta >= 0 and per-item sums <= 1 as G @ theta <= h."""
    d = layout.dim
    rows = [-np.eye(d)]
    h = [np.zeros(d)]
    sums = np.zeros((layout.n_items, d))
    for i in range(layout.n_items):
        sums[i, layout.item_of_free == i] = 1.0
    rows.append(sums)
    h.append(np.ones(layout.n_items))
    return np.vstack(rows), np.concatenate(h)


def max_slack_point(G: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, float]:
    """Point maximizing the minimum slack of ``G @ x <= h``.

    Returns ``(x, slack)``; a negative slack means the system is infeasible
    even at its least-violated point.
    """
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    m, d = G.shape
    lhs = np.column_stack([G, np.ones(m)])
    problem = LpProblem(
        objective=np.concatenate([np.zeros(d), [1.0]]),
        lhs=lhs,
        senses=("<=",) * m,
        rhs=h,
        lower=np.full(d + 1, -np.inf),
        upper=np.full(d + 1, np.inf),
    )
    res = solve_lp(problem)
    if res.status == "unbounded":
        raise NumericError("max-slack LP is unbounded; add bounding rows")
    if res.status != "optimal":
        raise InfeasibleError(f"max-slack LP ended with status {res.status}")
    return res.x[:d], float(res.x[d])


def _budget(theta: np.ndarray, layout: ItemLayout, index: int) -> float:
    """Item-type budget s_ij = 1 - sum of the item's other free coordinates."""
    item = int(layout.item_of_free[index])
    block = layout.item_sums(theta)[item]
    return 1.0 - (block - theta[index])


def conditional_bounds_ab(
    poly: AbPolytope, theta, index: int, layout: ItemLayout
) -> Interval:
    """Truncation interval for coordinate ``index`` given the others.

    Solves every inequality row for the coordinate: rows with a negative
    coefficient yield lower bounds, positive ones upper bounds, and rows with
    zero coefficient impose nothing.  The natural bounds [0, s_ij] are always
    intersected in.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (poly.dim,) and poly.n_rows:
        raise DimensionError(
            f"theta has shape {theta.shape}, expected ({poly.dim},)"
        )
    lo = 0.0
    hi = _budget(theta, layout, index)
    if poly.n_rows:
        a = poly.A[:, index]
        t = poly.b - poly.A @ theta + a * theta[index]
        neg = a < 0
        pos = a > 0
        if np.any(neg):
            lo = max(lo, np.max(t[neg] / a[neg]))
        if np.any(pos):
            hi = min(hi, np.min(t[pos] / a[pos]))
    return Interval(lo, hi)


def _line_clip_lp(poly: VPolytope, theta: np.ndarray, index: int, sign: float) -> float:
    """Distance to the hull boundary from theta along +/- e_index.

    Maximizes lam subject to V^T alpha = theta + sign*lam*e_index with alpha a
    convex combination.  Infeasibility means theta is not in the hull.
    """
    s, d = poly.V.shape
    lhs = np.zeros((d + 1, s + 1))
    lhs[:d, :s] = poly.V.T
    lhs[d, :s] = 1.0
    lhs[index, s] = -sign
    rhs = np.concatenate([theta, [1.0]])
    problem = LpProblem.nonneg(
        objective=np.concatenate([np.zeros(s), [1.0]]),
        lhs=lhs,
        senses=("=",) * (d + 1),
        rhs=rhs,
    )
    res = solve_lp(problem)
    if res.status == "infeasible":
        raise InfeasibleError("theta is not inside the convex hull")
    if res.status != "optimal":
        raise NumericError(f"line-clip LP ended with status {res.status}")
    return float(res.x[s])


def conditional_bounds_v(poly: VPolytope, theta, index: int) -> Interval:
    """Truncation interval for coordinate ``index`` within the convex hull.

    Two linear programs clip the coordinate line through ``theta`` against
    the hull of the vertices, one per direction.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (poly.dim,):
        raise DimensionError(
            f"theta has shape {theta.shape}, expected ({poly.dim},)"
        )
    lam_up = _line_clip_lp(poly, theta, index, +1.0)
    lam_dn = _line_clip_lp(poly, theta, index, -1.0)
    return Interval(float(theta[index]) - lam_dn, float(theta[index]) + lam_up)


def in_convex_hull(poly: VPolytope, theta, tol: float = HULL_TOL) -> bool:
    """Hull membership via the redundancy LP.

    Maximizes ``z @ theta - z0`` subject to ``z @ v_s - z0 <= 0`` for every
    vertex and ``z @ theta - z0 <= 1``; the point lies outside the hull
    exactly when the optimum is strictly positive.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (poly.dim,):
        raise DimensionError(
            f"theta has shape {theta.shape}, expected ({poly.dim},)"
        )
    s, d = poly.V.shape
    lhs = np.column_stack([np.vstack([poly.V, theta]), -np.ones(s + 1)])
    problem = LpProblem(
        objective=np.concatenate([theta, [-1.0]]),
        lhs=lhs,
        senses=("<=",) * (s + 1),
        rhs=np.concatenate([np.zeros(s), [1.0]]),
        lower=np.full(d + 1, -np.inf),
        upper=np.full(d + 1, np.inf),
    )
    res = solve_lp(problem)
    if res.status != "optimal":
        raise NumericError(f"hull-membership LP ended with status {res.status}")
    return res.value <= tol


def in_convex_hull_batch(poly: VPolytope, thetas, tol: float = HULL_TOL) -> np.ndarray:
    """Membership verdicts for a batch of points, shape (M, D) -> (M,)."""
    thetas = np.asarray(thetas, dtype=float)
    return np.fromiter(
        (in_convex_hull(poly, t, tol) for t in thetas), dtype=bool, count=len(thetas)
    )


def conditional_bounds_indicator(
    inside: Callable[[np.ndarray], bool],
    theta,
    index: int,
    layout: ItemLayout,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> Interval:
    """Bisection truncation bounds for a convex indicator-defined region.

    ``inside`` must be true at ``theta`` and describe a convex set; the
    boundary crossing toward each natural bound (0 and the item budget) is
    located to within ``tol``.  Non-convex indicators are a contract
    violation and produce undefined bounds.
    """
    theta = np.asarray(theta, dtype=float).copy()
    if not inside(theta):
        raise InfeasibleError("theta does not satisfy the indicator")
    x0 = float(theta[index])

    def probe(v: float) -> bool:
        theta[index] = v
        ok = bool(inside(theta))
        theta[index] = x0
        return ok

    def crossing(target: float) -> float:
        # Walk from the known-inside coordinate toward target.
        if probe(target):
            return target
        good, bad = x0, target
        for _ in range(max_iter):
            if abs(bad - good) <= tol:
                break
            mid = 0.5 * (good + bad)
            if probe(mid):
                good = mid
            else:
                bad = mid
        return good

    hi_nat = _budget(theta, layout, index)
    return Interval(crossing(0.0), crossing(hi_nat))
