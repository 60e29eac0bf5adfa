"""Gibbs sampling from truncated Dirichlet distributions on convex regions.

One coordinate at a time, the conditional distribution of a free probability
is a beta distribution in the scaled parameter ``theta_ij / s_ij`` truncated
to the interval allowed by the constraints; samples are drawn by inverse
transformation of the beta CDF.  Starting values come from a MAP estimate so
only a short burn-in is needed.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import betainc, betaincc, betainccinv, betaincinv

from .errors import DimensionError, EmptyIntervalError, IneqmnError, InfeasibleError
from .geometry import (
    EMPTY_TOL,
    Interval,
    conditional_bounds_ab,
    conditional_bounds_indicator,
    conditional_bounds_v,
    in_convex_hull,
    max_slack_point,
    natural_constraints,
)
from .model import (
    AbPolytope,
    CountData,
    DirichletPrior,
    ItemLayout,
    VPolytope,
    complete_theta,
    posterior_shapes,
    satisfies_ab,
    satisfies_ab_batch,
    validate_theta,
)

# Below this CDF mass, inverse transformation is numerically degenerate.
_TAIL_EPS = 1e-14

_ENV_THREADS = "INEQMN_THREADS"


def sample_truncated_beta(a, b, lo, hi, u):
    """Inverse-CDF draw from Beta(a, b) truncated to [lo, hi].

    Computes ``F^-1[F(lo) + (F(hi) - F(lo)) * u]`` for the beta CDF ``F``.
    When the truncation interval carries less than ``1e-14`` CDF mass, the
    computation switches to the complementary CDF (accurate in the upper
    tail); if the mass is degenerate there as well, the draw falls back to
    uniform on [lo, hi].

    All arguments broadcast; scalars in, scalar out.
    """
    if not any(isinstance(v, np.ndarray) and v.ndim for v in (a, b, lo, hi, u)):
        return _truncated_beta_scalar(
            float(a), float(b), float(lo), float(hi), float(u)
        )
    a_arr, b_arr, lo_arr, hi_arr, u_arr = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (a, b, lo, hi, u))
    )
    scalar = a_arr.ndim == 0
    a_arr, b_arr, lo_arr, hi_arr, u_arr = (
        np.atleast_1d(v) for v in (a_arr, b_arr, lo_arr, hi_arr, u_arr)
    )
    if np.any(lo_arr < -1e-12) or np.any(hi_arr > 1 + 1e-12) or np.any(lo_arr > hi_arr + 1e-12):
        raise ValueError("truncation bounds must satisfy 0 <= lo <= hi <= 1")
    lo_arr = np.clip(lo_arr, 0.0, 1.0)
    hi_arr = np.clip(hi_arr, lo_arr, 1.0)

    if np.all(a_arr == 1.0) and np.all(b_arr == 1.0):
        out = lo_arr + (hi_arr - lo_arr) * u_arr
        return float(out[0]) if scalar else out

    out = np.empty(a_arr.shape)
    flo = betainc(a_arr, b_arr, lo_arr)
    fhi = betainc(a_arr, b_arr, hi_arr)
    mass = fhi - flo
    ok = mass >= _TAIL_EPS
    if np.any(ok):
        out[ok] = betaincinv(
            a_arr[ok], b_arr[ok], flo[ok] + mass[ok] * u_arr[ok]
        )
    rest = ~ok
    if np.any(rest):
        glo = betaincc(a_arr[rest], b_arr[rest], lo_arr[rest])
        ghi = betaincc(a_arr[rest], b_arr[rest], hi_arr[rest])
        cmass = glo - ghi
        sub = np.empty(cmass.shape)
        cok = cmass >= _TAIL_EPS
        if np.any(cok):
            sub[cok] = betainccinv(
                a_arr[rest][cok],
                b_arr[rest][cok],
                glo[cok] - cmass[cok] * u_arr[rest][cok],
            )
        if np.any(~cok):
            sub[~cok] = (
                lo_arr[rest][~cok]
                + (hi_arr[rest][~cok] - lo_arr[rest][~cok]) * u_arr[rest][~cok]
            )
        out[rest] = sub
    np.clip(out, lo_arr, hi_arr, out=out)
    return float(out[0]) if scalar else out


def _truncated_beta_scalar(a: float, b: float, lo: float, hi: float, u: float) -> float:
    if lo < -1e-12 or hi > 1 + 1e-12 or lo > hi + 1e-12:
        raise ValueError("truncation bounds must satisfy 0 <= lo <= hi <= 1")
    lo = min(max(lo, 0.0), 1.0)
    hi = min(max(hi, lo), 1.0)
    if a == 1.0 and b == 1.0:
        return lo + (hi - lo) * u
    flo = float(betainc(a, b, lo))
    mass = float(betainc(a, b, hi)) - flo
    if mass >= _TAIL_EPS:
        x = float(betaincinv(a, b, flo + mass * u))
    else:
        glo = float(betaincc(a, b, lo))
        cmass = glo - float(betaincc(a, b, hi))
        if cmass >= _TAIL_EPS:
            x = float(betainccinv(a, b, glo - cmass * u))
        else:
            x = lo + (hi - lo) * u
    return min(max(x, lo), hi)


@dataclass(frozen=True)
class ConstraintModel:
    """A layout plus exactly one constraint representation.

    Use the ``from_ab`` / ``from_vertices`` / ``from_indicator`` constructors;
    ``unconstrained`` builds an empty inequality set.
    """

    layout: ItemLayout
    ab: AbPolytope | None = None
    vertices: VPolytope | None = None
    indicator: Callable[[np.ndarray], bool] | None = None
    indicator_tol: float = 1e-8

    def __post_init__(self):
        given = [
            x is not None for x in (self.ab, self.vertices, self.indicator)
        ]
        if sum(given) != 1:
            raise ValueError(
                "exactly one of ab, vertices, indicator must be provided"
            )
        if self.ab is not None and self.ab.n_rows and self.ab.dim != self.layout.dim:
            raise DimensionError(
                f"A has {self.ab.dim} columns but the layout has "
                f"{self.layout.dim} free parameters"
            )
        if self.vertices is not None:
            self.vertices.check_layout(self.layout)

    @classmethod
    def from_ab(cls, layout: ItemLayout, poly: AbPolytope) -> "ConstraintModel":
        return cls(layout, ab=poly)

    @classmethod
    def from_vertices(cls, layout: ItemLayout, poly: VPolytope) -> "ConstraintModel":
        return cls(layout, vertices=poly)

    @classmethod
    def from_indicator(
        cls, layout: ItemLayout, inside: Callable[[np.ndarray], bool],
        tol: float = 1e-8,
    ) -> "ConstraintModel":
        return cls(layout, indicator=inside, indicator_tol=tol)

    @classmethod
    def unconstrained(cls, layout: ItemLayout) -> "ConstraintModel":
        return cls(layout, ab=AbPolytope.unconstrained(layout.dim))

    @property
    def kind(self) -> str:
        if self.ab is not None:
            return "ab"
        if self.vertices is not None:
            return "vertices"
        return "indicator"

    def contains(self, theta) -> bool:
        """Constraint membership (theta is assumed to be a valid point of Omega)."""
        if self.ab is not None:
            return satisfies_ab(theta, self.ab)
        if self.vertices is not None:
            return in_convex_hull(self.vertices, theta)
        return bool(self.indicator(np.asarray(theta, dtype=float)))

    def contains_batch(self, thetas) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        if self.ab is not None:
            return satisfies_ab_batch(thetas, self.ab)
        return np.fromiter(
            (self.contains(t) for t in thetas), dtype=bool, count=len(thetas)
        )

    def conditional_interval(self, theta, index: int) -> Interval:
        if self.ab is not None:
            return conditional_bounds_ab(self.ab, theta, index, self.layout)
        if self.vertices is not None:
            return conditional_bounds_v(self.vertices, theta, index)
        return conditional_bounds_indicator(
            self.indicator, theta, index, self.layout, tol=self.indicator_tol
        )


@dataclass(frozen=True)
class Chain:
    """Posterior (or truncated-prior) samples from one Gibbs run."""

    samples: np.ndarray  # (M, D)
    burnin: int
    seed: object
    scan_order: str

    def __len__(self) -> int:
        return self.samples.shape[0]


def map_estimate(
    model: ConstraintModel, data: CountData, prior: DirichletPrior
) -> np.ndarray:
    """Constraint-satisfying maximizer of the posterior kernel.

    For the inequality representation a log-barrier interior method is used;
    for the vertex representation, gradient ascent over softmax-parameterized
    mixture weights.  With a flat kernel (uniform prior, no data) the
    inequality case returns the point maximizing the minimum constraint
    slack instead, since the maximizer is not unique.
    """
    layout = model.layout
    data.check_layout(layout)
    prior.check_layout(layout)
    expo = posterior_shapes(data, prior) - 1.0
    if model.kind == "ab":
        return _map_ab(model.ab, layout, expo)
    if model.kind == "vertices":
        return _map_v(model.vertices, layout, expo)
    raise IneqmnError(
        "MAP estimation is not defined for indicator constraints; "
        "pass an explicit feasible start to the sampler"
    )


def _kernel_parts(layout: ItemLayout, expo: np.ndarray):
    e_free = expo[layout.cat_of_free]
    e_last = expo[layout.last_cat]
    return e_free, e_last


def _log_kernel(theta, layout: ItemLayout, e_free, e_last) -> float:
    sums = layout.item_sums(theta)
    s_last = 1.0 - sums
    with np.errstate(divide="ignore", invalid="ignore"):
        terms_free = np.where(e_free != 0, e_free * np.log(theta), 0.0)
        terms_last = np.where(e_last != 0, e_last * np.log(s_last), 0.0)
    val = terms_free.sum() + terms_last.sum()
    return float(val) if np.isfinite(val) else float("-inf")


def _map_ab(poly: AbPolytope, layout: ItemLayout, expo: np.ndarray) -> np.ndarray:
    g_nat, h_nat = natural_constraints(layout)
    if poly.n_rows:
        G = np.vstack([g_nat, poly.A])
        h = np.concatenate([h_nat, poly.b])
    else:
        G, h = g_nat, h_nat
    center, slack = max_slack_point(G, h)
    if slack < -1e-9:
        raise InfeasibleError("the constrained parameter space is empty")
    if np.all(expo == 0.0):
        # Flat kernel: every feasible point maximizes it; return the
        # max-slack interior point as a well-defined representative.
        return center
    if slack <= 1e-12:
        raise InfeasibleError(
            "the constrained parameter space has no interior point"
        )

    e_free, e_last = _kernel_parts(layout, expo)
    item = layout.item_of_free
    theta = center.copy()

    def objective(th, mu):
        slacks = h - G @ th
        if np.any(slacks <= 0):
            return float("-inf")
        return _log_kernel(th, layout, e_free, e_last) + mu * np.log(slacks).sum()

    def gradient(th, mu):
        slacks = h - G @ th
        s_last = 1.0 - layout.item_sums(th)
        with np.errstate(divide="ignore"):
            g = np.where(e_free != 0, e_free / th, 0.0)
            g -= np.where(e_last != 0, e_last / s_last, 0.0)[item]
        return g - mu * (G.T @ (1.0 / slacks))  # d/dth log(h - G th) = -G/slack

    def hessian(th, mu):
        slacks = h - G @ th
        s_last = 1.0 - layout.item_sums(th)
        hess = np.zeros((layout.dim, layout.dim))
        with np.errstate(divide="ignore"):
            diag = np.where(e_free != 0, -e_free / th**2, 0.0)
        hess[np.diag_indices_from(hess)] += diag
        for i in range(layout.n_items):
            idx = np.nonzero(item == i)[0]
            if e_last[i] != 0:
                hess[np.ix_(idx, idx)] -= e_last[i] / s_last[i] ** 2
        w = mu / slacks**2
        hess -= (G.T * w) @ G
        return hess

    for mu in 10.0 ** -np.arange(1, 9):
        for _ in range(100):
            grad = gradient(theta, mu)
            if np.max(np.abs(grad)) <= 1e-8:
                break
            try:
                step = np.linalg.solve(hessian(theta, mu), -grad)
            except np.linalg.LinAlgError:
                step = grad
            if grad @ step <= 0:
                step = grad
            f0 = objective(theta, mu)
            t = 1.0
            for _ in range(60):
                cand = theta + t * step
                if objective(cand, mu) > f0 + 1e-4 * t * (grad @ step):
                    theta = cand
                    break
                t *= 0.5
            else:
                break
    return theta


def _map_v(poly: VPolytope, layout: ItemLayout, expo: np.ndarray) -> np.ndarray:
    e_free, e_last = _kernel_parts(layout, expo)
    item = layout.item_of_free
    s = poly.n_vertices
    w = np.zeros(s)
    if np.all(expo == 0.0):
        return poly.V.T @ np.full(s, 1.0 / s)

    def softmax(v):
        e = np.exp(v - v.max())
        return e / e.sum()

    def value(v):
        alpha = softmax(v)
        return _log_kernel(poly.V.T @ alpha, layout, e_free, e_last)

    f0 = value(w)
    if not np.isfinite(f0):
        raise InfeasibleError(
            "the posterior kernel vanishes on the whole hull; the data "
            "cannot be explained by any point of the model"
        )
    for _ in range(5000):
        alpha = softmax(w)
        theta = poly.V.T @ alpha
        s_last = 1.0 - layout.item_sums(theta)
        with np.errstate(divide="ignore"):
            g_theta = np.where(e_free != 0, e_free / theta, 0.0)
            g_theta -= np.where(e_last != 0, e_last / s_last, 0.0)[item]
        g_theta = np.nan_to_num(g_theta, posinf=1e12, neginf=-1e12)
        g_alpha = poly.V @ g_theta
        g_w = alpha * (g_alpha - alpha @ g_alpha)
        if np.max(np.abs(g_w)) <= 1e-8:
            break
        t = 1.0
        improved = False
        for _ in range(60):
            cand = w + t * g_w
            fc = value(cand)
            if fc > f0 + 1e-4 * t * (g_w @ g_w):
                w, f0, improved = cand, fc, True
                break
            t *= 0.5
        if not improved:
            break
    return poly.V.T @ softmax(w)


def _feasible_start(
    model: ConstraintModel, data: CountData, prior: DirichletPrior
) -> np.ndarray:
    theta = map_estimate(model, data, prior)
    if not model.contains(theta):
        raise InfeasibleError("MAP estimate violates the constraints")
    return theta


def gibbs_chain(
    model: ConstraintModel,
    data: CountData,
    prior: DirichletPrior,
    n_samples: int,
    start=None,
    scan: str = "systematic",
    seed=None,
    burnin: int | None = None,
) -> Chain:
    """Gibbs sampler for the truncated Dirichlet posterior.

    Parameters
    ----------
    n_samples : int
        Number of retained iterations (after burn-in).
    start : array, optional
        Feasible starting point; defaults to the MAP estimate.
    scan : {"systematic", "random"}
        Coordinate update order per iteration.
    seed : int, SeedSequence or None
        Seeds the chain's private random generator.
    burnin : int, optional
        Discarded initial iterations.  Defaults to 10 when starting from the
        MAP estimate and 1000 for a user-supplied start.

    Returns
    -------
    Chain
        Every retained sample satisfies the model constraints.
    """
    layout = model.layout
    data.check_layout(layout)
    prior.check_layout(layout)
    if scan not in ("systematic", "random"):
        raise ValueError(f"scan must be 'systematic' or 'random', got {scan!r}")
    if start is None:
        theta = _feasible_start(model, data, prior)
        burnin = 10 if burnin is None else int(burnin)
    else:
        theta = validate_theta(start, layout).copy()
        if not model.contains(theta):
            raise InfeasibleError("the supplied start violates the constraints")
        burnin = 1000 if burnin is None else int(burnin)

    rng = np.random.default_rng(seed)
    shapes = posterior_shapes(data, prior)
    a_shape = shapes[layout.cat_of_free]
    b_shape = shapes[layout.last_cat][layout.item_of_free]
    item = layout.item_of_free
    d = layout.dim

    sums = layout.item_sums(theta)
    samples = np.empty((n_samples, d))
    for t in range(burnin + n_samples):
        order = rng.permutation(d) if scan == "random" else range(d)
        for j in order:
            i = item[j]
            s = 1.0 - (sums[i] - theta[j])
            bounds = model.conditional_interval(theta, j)
            if s <= 1e-300:
                new = 0.0
            else:
                lo = min(bounds.lo / s, 1.0)
                hi = min(bounds.hi / s, 1.0)
                eta = sample_truncated_beta(
                    a_shape[j], b_shape[j], lo, max(lo, hi), rng.random()
                )
                new = min(s * eta, bounds.hi)
            sums[i] += new - theta[j]
            theta[j] = new
        if t >= burnin:
            samples[t - burnin] = theta
    return Chain(samples=samples, burnin=burnin, seed=seed, scan_order=scan)


def _resolve_threads(threads: int | None, n_tasks: int) -> int:
    if threads is None:
        env = os.environ.get(_ENV_THREADS)
        if env is not None:
            threads = int(env)
    if threads is None:
        threads = min(n_tasks, os.cpu_count() or 1)
    return max(1, int(threads))


def run_parallel_chains(
    model: ConstraintModel,
    data: CountData,
    prior: DirichletPrior,
    n_samples: int,
    n_chains: int,
    master_seed,
    scan: str = "systematic",
    start=None,
    burnin: int | None = None,
    threads: int | None = None,
) -> list[Chain]:
    """Independent Gibbs chains with RNG streams split from ``master_seed``.

    The result is a list ordered by chain index and is identical however the
    chains are scheduled; per-chain failures are re-raised with the chain
    index attached.
    """
    if n_chains < 1:
        raise ValueError("n_chains must be at least 1")
    children = np.random.SeedSequence(master_seed).spawn(n_chains)
    if start is None:
        start = _feasible_start(model, data, prior)
        burnin = 10 if burnin is None else burnin

    def run(idx: int) -> Chain:
        try:
            return gibbs_chain(
                model, data, prior, n_samples,
                start=start, scan=scan, seed=children[idx], burnin=burnin,
            )
        except Exception as exc:
            raise IneqmnError(f"chain {idx} failed: {exc}") from exc

    n_threads = _resolve_threads(threads, n_chains)
    if n_threads == 1:
        return [run(i) for i in range(n_chains)]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return list(pool.map(run, range(n_chains)))


def effective_sample_size(chain) -> np.ndarray:
    """Per-coordinate effective sample size of a chain.

    Sums autocorrelations with Geyer's initial monotone positive-sequence
    cutoff.  Coordinates with zero variance (a constant chain) report an
    ESS of 0, flagging a degenerate chain.

    Accepts a ``Chain`` or a plain (M, D) or (M,) array.
    """
    x = chain.samples if isinstance(chain, Chain) else np.asarray(chain, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    m = x.shape[0]
    if m < 100:
        raise ValueError("need at least 100 iterations for an ESS estimate")
    out = np.empty(x.shape[1])
    nfft = 1 << int(np.ceil(np.log2(2 * m - 1)))
    for j in range(x.shape[1]):
        if np.ptp(x[:, j]) == 0.0:
            out[j] = 0.0
            continue
        centered = x[:, j] - x[:, j].mean()
        f = np.fft.rfft(centered, nfft)
        acov = np.fft.irfft(f * np.conj(f))[:m] / m
        if acov[0] <= 0:
            out[j] = 0.0
            continue
        rho = acov / acov[0]
        n_pairs = m // 2
        pair = rho[: 2 * n_pairs].reshape(n_pairs, 2).sum(axis=1)
        positive = pair > 0
        stop = int(np.argmin(positive)) if not positive.all() else n_pairs
        if stop == 0:
            tau = 1.0
        else:
            pair = np.minimum.accumulate(pair[:stop])
            tau = max(-1.0 + 2.0 * pair.sum(), 1e-12)
        out[j] = m / tau
    return out


# ---------------------------------------------------------------------------
# Vectorized multi-chain kernel (inequality representation only).
#
# Counting operations need millions of Gibbs draws but no per-chain
# reproducibility, so a block of chains is updated simultaneously with one
# generator; every numpy operation covers all chains of the block.


class AbGibbsBlock:
    """Systematic-scan Gibbs on a block of chains sharing one polytope."""

    def __init__(
        self,
        poly: AbPolytope,
        layout: ItemLayout,
        shapes: np.ndarray,
        starts: np.ndarray,
        rng: np.random.Generator,
        resync_every: int = 256,
    ):
        self.poly = poly
        self.layout = layout
        self.rng = rng
        self.theta = np.array(starts, dtype=float, copy=True)
        if self.theta.ndim != 2 or self.theta.shape[1] != layout.dim:
            raise DimensionError("starts must have shape (chains, D)")
        shapes = np.asarray(shapes, dtype=float)
        self.a_shape = shapes[layout.cat_of_free]
        self.b_shape = shapes[layout.last_cat][layout.item_of_free]
        self.item = layout.item_of_free
        self.resync_every = resync_every
        self._sweeps_done = 0
        self._sync()

    @property
    def n_chains(self) -> int:
        return self.theta.shape[0]

    def _sync(self):
        self.sums = self.layout.item_sums(self.theta)
        if self.poly.n_rows:
            self.resid = self.poly.b[:, None] - self.poly.A @ self.theta.T
        else:
            self.resid = None

    def sweep(self):
        """One full coordinate scan of every chain in the block."""
        theta, sums = self.theta, self.sums
        a_mat = self.poly.A if self.poly.n_rows else None
        for j in range(self.layout.dim):
            i = self.item[j]
            cur = theta[:, j]
            s = 1.0 - (sums[:, i] - cur)
            lo = np.zeros(s.shape)
            hi = s.copy()
            if a_mat is not None:
                col = a_mat[:, j]
                t = self.resid + np.outer(col, cur)
                negrows = col < 0
                posrows = col > 0
                if np.any(negrows):
                    np.maximum(
                        lo,
                        (t[negrows] / col[negrows, None]).max(axis=0),
                        out=lo,
                    )
                if np.any(posrows):
                    np.minimum(
                        hi,
                        (t[posrows] / col[posrows, None]).min(axis=0),
                        out=hi,
                    )
            if np.any(hi < lo - EMPTY_TOL):
                raise EmptyIntervalError(
                    "a block chain produced an empty conditional interval"
                )
            np.maximum(hi, lo, out=hi)
            s_safe = np.maximum(s, 1e-300)
            u = self.rng.random(theta.shape[0])
            eta = sample_truncated_beta(
                self.a_shape[j],
                self.b_shape[j],
                np.clip(lo / s_safe, 0.0, 1.0),
                np.clip(hi / s_safe, 0.0, 1.0),
                u,
            )
            new = np.minimum(s * eta, hi)
            delta = new - cur
            if a_mat is not None:
                self.resid -= np.outer(a_mat[:, j], delta)
            sums[:, i] += delta
            theta[:, j] = new
        self._sweeps_done += 1
        if self._sweeps_done % self.resync_every == 0:
            self._sync()
        return theta
