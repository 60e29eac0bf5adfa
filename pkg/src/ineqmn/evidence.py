"""Encompassing Bayes factors via Monte Carlo counting.

The Bayes factor of a constrained against the unconstrained model equals the
ratio ``f / c`` of the posterior and prior probability mass that the
unconstrained Dirichlet assigns to the constrained region.  Both constants
are estimated by counting samples inside the region, either directly, or as
a product of conditional proportions over a nested sequence of polytopes
(stepwise and automatic procedures) when the region is too small for direct
counting.  Monte Carlo uncertainty is propagated through beta posteriors of
the counted proportions.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InfeasibleError
from .geometry import max_slack_point, natural_constraints
from .model import (
    AbPolytope,
    ItemLayout,
    sample_unconstrained,
    satisfies_ab_batch,
)
from .sampler import AbGibbsBlock, ConstraintModel, _resolve_threads

_BATCH = 65_536
_POOL_CAP = 1024


@dataclass(frozen=True)
class CountResult:
    """Hit counts from sampling a constrained region.

    For stepwise runs, ``per_step`` holds one ``(inside_m, total_m)`` pair per
    nested step and the overall ``inside``/``total`` are the products of the
    per-step values, so that ``inside / total`` equals the product of the
    per-step proportions.
    """

    inside: int
    total: int
    per_step: tuple[tuple[int, int], ...] | None = None
    distribution: str = "sampling"  # or "negative-binomial"
    exhausted_steps: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.inside <= self.total:
            raise ValueError("need 0 <= inside <= total")
        if self.per_step is not None:
            steps = tuple((int(h), int(d)) for h, d in self.per_step)
            if any(not 0 <= h <= d for h, d in steps):
                raise ValueError("need 0 <= inside_m <= total_m in every step")
            object.__setattr__(self, "per_step", steps)
            if self.inside != math.prod(h for h, _ in steps) or self.total != math.prod(
                d for _, d in steps
            ):
                raise ValueError(
                    "inside/total must be the products of the per-step counts"
                )
        if self.distribution not in ("sampling", "negative-binomial"):
            raise ValueError(f"unknown distribution {self.distribution!r}")

    @property
    def proportion(self) -> float:
        if self.total == 0:
            return float("nan")
        if self.per_step is None:
            return self.inside / self.total
        return math.prod(h / d for h, d in self.per_step)


@dataclass(frozen=True)
class EvidenceResult:
    """Encompassing Bayes factor with Monte Carlo uncertainty.

    ``se``, ``q05`` and ``q95`` summarize the ``R`` draws of the Bayes factor
    obtained from beta posteriors of the counted proportions.  ``status`` is
    ``"ok"`` unless a zero count made the point estimate degenerate, in which
    case ``bound`` carries a one-sided rule-of-three limit.
    """

    bf_0u: float
    bf_u0: float
    bf_00c: float
    se: float
    q05: float
    q95: float
    R: int
    status: str = "ok"
    bound: float | None = None
    bound_note: str = ""


def proportion_draws(counts, R: int, rng: np.random.Generator) -> np.ndarray:
    """Posterior draws of the counted proportion.

    A plain count yields ``Beta(inside + 1, total - inside + 1)`` draws; a
    stepwise count multiplies independent per-step beta draws.  An exact
    constant (a float) yields a constant vector.
    """
    if isinstance(counts, (int, float)) and not isinstance(counts, bool):
        return np.full(R, float(counts))
    if counts.per_step is None:
        return rng.beta(counts.inside + 1, counts.total - counts.inside + 1, size=R)
    out = np.ones(R)
    for h, d in counts.per_step:
        out *= rng.beta(h + 1, d - h + 1, size=R)
    return out


def _point_proportion(counts) -> float:
    if isinstance(counts, (int, float)) and not isinstance(counts, bool):
        c = float(counts)
        if not 0 < c <= 1:
            raise ValueError("an exact prior constant must lie in (0, 1]")
        return c
    return counts.proportion


def count_in_region(
    model: ConstraintModel,
    shapes,
    n_samples: int,
    rng: np.random.Generator,
    batch: int = _BATCH,
    reorder: bool = False,
    threads: int | None = None,
) -> CountResult:
    """Count independent Dirichlet draws that fall inside the region.

    Draws come in blocks with generators spawned per block, so the count is
    identical however blocks are scheduled.  With ``reorder=True`` (inequality
    models only) a pilot batch estimates per-row violation frequencies and
    rows are checked most-violated first; the verdicts, and hence the count,
    are unchanged.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    layout = model.layout
    poly = model.ab
    n_blocks = -(-n_samples // batch)
    # The pilot stream comes after the block streams so that turning the
    # reordering optimization on or off cannot change the counted draws.
    *children, pilot_rng = rng.spawn(n_blocks + 1)
    if reorder and poly is not None and poly.n_rows > 1:
        pilot = sample_unconstrained(shapes, layout, pilot_rng, size=min(2048, n_samples))
        viol = (pilot @ poly.A.T > poly.b + 1e-10).sum(axis=0)
        order = np.argsort(-viol, kind="stable")
        poly = AbPolytope(poly.A[order], poly.b[order])
        model = ConstraintModel.from_ab(layout, poly)

    sizes = [batch] * (n_blocks - 1) + [n_samples - batch * (n_blocks - 1)]

    def count_block(args) -> int:
        child, size = args
        draws = sample_unconstrained(shapes, layout, child, size=size)
        return int(model.contains_batch(draws).sum())

    n_threads = _resolve_threads(threads, n_blocks)
    if n_threads == 1:
        hits = sum(count_block(a) for a in zip(children, sizes))
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            hits = sum(pool.map(count_block, zip(children, sizes)))
    return CountResult(inside=hits, total=n_samples)


def _check_steps(steps, n_rows: int) -> tuple[int, ...]:
    steps = tuple(int(s) for s in steps)
    if not steps:
        raise ValueError("steps must not be empty")
    if any(s2 <= s1 for s1, s2 in zip(steps, steps[1:])) or steps[0] < 1:
        raise ValueError(f"steps must be strictly increasing and >= 1, got {steps}")
    if steps[-1] != n_rows:
        raise ValueError(
            f"the last step must equal the number of rows ({n_rows}), got {steps}"
        )
    return steps


def _block_chain_count(poly: AbPolytope, layout: ItemLayout, n: int) -> int:
    # Bound the residual matrix (rows x chains) to ~2e7 doubles.
    cap = max(16, int(2e7 / max(poly.n_rows, 1)))
    return int(min(n, 1024, cap))


def _interior_start(poly: AbPolytope, layout: ItemLayout) -> np.ndarray:
    g_nat, h_nat = natural_constraints(layout)
    G = np.vstack([g_nat, poly.A]) if poly.n_rows else g_nat
    h = np.concatenate([h_nat, poly.b]) if poly.n_rows else h_nat
    point, slack = max_slack_point(G, h)
    if slack < -1e-9:
        raise InfeasibleError("a stepwise polytope is empty")
    return point


class _GibbsStage:
    """Gibbs sampling on one nested polytope, counting hits of the next one.

    Samples from the prefix polytope with ``sampled_rows`` rows; a hit
    satisfies the ``check`` rows added by the next prefix.  Keeps a rolling
    pool of recent hit vectors to start the following stage.
    """

    def __init__(
        self,
        poly: AbPolytope,
        layout: ItemLayout,
        shapes,
        sampled_rows: int,
        check_rows: tuple[int, int],
        start_pool: np.ndarray | None,
        n_chains: int,
        rng: np.random.Generator,
        burnin: int,
    ):
        self.layout = layout
        target = poly.prefix(sampled_rows)
        lo, hi = check_rows
        self.check_A = poly.A[lo:hi]
        self.check_b = poly.b[lo:hi]
        if start_pool is None or len(start_pool) == 0:
            starts = np.tile(_interior_start(target, layout), (n_chains, 1))
        else:
            reps = -(-n_chains // len(start_pool))
            starts = np.tile(start_pool, (reps, 1))[:n_chains]
        self.block = AbGibbsBlock(target, layout, shapes, starts, rng)
        self.hits = 0
        self.draws = 0
        self.pool: np.ndarray | None = None
        for _ in range(burnin):
            self.block.sweep()

    def extend(self, n: int) -> None:
        """Generate at least ``n`` further draws and count their hits."""
        chains = self.block.n_chains
        checker = AbPolytope(self.check_A, self.check_b)
        done = 0
        while done < n:
            theta = self.block.sweep()
            ok = satisfies_ab_batch(theta, checker)
            remaining = n - done
            if remaining < chains:
                ok = ok[:remaining]
                counted = remaining
            else:
                counted = chains
            self.hits += int(ok.sum())
            self.draws += counted
            done += counted
            if np.any(ok):
                new = theta[:counted][ok].copy()
                self.pool = (
                    new
                    if self.pool is None
                    else np.vstack([self.pool, new])[-_POOL_CAP:]
                )


def stepwise_count(
    poly: AbPolytope,
    steps,
    shapes,
    layout: ItemLayout,
    n_per_step: int,
    rng: np.random.Generator,
    n_chains: int | None = None,
    burnin: int = 10,
) -> CountResult:
    """Stepwise decomposition of the region constant over nested prefixes.

    ``steps`` lists strictly increasing row counts ending at the full row
    count.  The first proportion counts independent Dirichlet draws inside
    the first prefix; each later step Gibbs-samples the previous prefix
    polytope and counts draws satisfying the rows added by the next one.
    The overall proportion is the product over steps.
    """
    steps = _check_steps(steps, poly.n_rows)
    if n_per_step < 1:
        raise ValueError("n_per_step must be at least 1")
    per_step: list[tuple[int, int]] = []

    first = poly.prefix(steps[0])
    draws = sample_unconstrained(shapes, layout, rng, size=n_per_step)
    ok = satisfies_ab_batch(draws, first)
    per_step.append((int(ok.sum()), n_per_step))
    pool = draws[ok][-_POOL_CAP:] if np.any(ok) else None

    for m in range(1, len(steps)):
        chains = (
            _block_chain_count(poly.prefix(steps[m - 1]), layout, n_per_step)
            if n_chains is None
            else n_chains
        )
        stage = _GibbsStage(
            poly, layout, shapes,
            sampled_rows=steps[m - 1],
            check_rows=(steps[m - 1], steps[m]),
            start_pool=pool,
            n_chains=chains,
            rng=rng,
            burnin=burnin,
        )
        stage.extend(n_per_step)
        per_step.append((stage.hits, stage.draws))
        pool = stage.pool

    return CountResult(
        inside=math.prod(h for h, _ in per_step),
        total=math.prod(d for _, d in per_step),
        per_step=tuple(per_step),
    )


def automatic_count(
    poly: AbPolytope,
    steps,
    shapes,
    layout: ItemLayout,
    cmin: int,
    rng: np.random.Generator,
    block: int | None = None,
    max_step_draws: int = 10_000_000,
    n_chains: int | None = None,
    burnin: int = 10,
) -> CountResult:
    """Stepwise counting that extends steps until each has ``cmin`` hits.

    After one initial batch per step, the step with the fewest hits (ties
    break toward the earlier step) is extended by another batch until every
    step has at least ``cmin`` hits.  Per-step uncertainty then follows the
    negative-binomial accounting ``Beta(hits + 1, draws - hits + 1)``.

    A step whose draws exceed ``max_step_draws`` without reaching ``cmin``
    aborts the procedure; the partial result flags it in
    ``exhausted_steps``.
    """
    steps = _check_steps(steps, poly.n_rows)
    if cmin < 1:
        raise ValueError("cmin must be at least 1")
    if block is None:
        block = max(cmin * 10, 10_000)

    n_steps = len(steps)
    hits = [0] * n_steps
    draws = [0] * n_steps
    pools: list[np.ndarray | None] = [None] * n_steps
    stages: list[_GibbsStage | None] = [None] * n_steps
    first = poly.prefix(steps[0])

    def extend(m: int) -> None:
        if m == 0:
            batch = sample_unconstrained(shapes, layout, rng, size=block)
            ok = satisfies_ab_batch(batch, first)
            hits[0] += int(ok.sum())
            draws[0] += block
            if np.any(ok):
                new = batch[ok]
                pools[0] = (
                    new if pools[0] is None else np.vstack([pools[0], new])
                )[-_POOL_CAP:]
            return
        if stages[m] is None:
            chains = (
                _block_chain_count(poly.prefix(steps[m - 1]), layout, block)
                if n_chains is None
                else n_chains
            )
            stages[m] = _GibbsStage(
                poly, layout, shapes,
                sampled_rows=steps[m - 1],
                check_rows=(steps[m - 1], steps[m]),
                start_pool=pools[m - 1],
                n_chains=chains,
                rng=rng,
                burnin=burnin,
            )
        stage = stages[m]
        stage.extend(block)
        hits[m] = stage.hits
        draws[m] = stage.draws
        pools[m] = stage.pool

    exhausted: tuple[int, ...] = ()
    for m in range(n_steps):
        extend(m)
    while min(hits) < cmin:
        m = int(np.argmin(hits))
        if draws[m] >= max_step_draws:
            exhausted = (m,)
            break
        extend(m)

    return CountResult(
        inside=math.prod(hits),
        total=math.prod(draws),
        per_step=tuple(zip(hits, draws)),
        distribution="negative-binomial",
        exhausted_steps=exhausted,
    )


def encompassing_bf(
    prior_counts,
    posterior_counts: CountResult,
    R: int = 5000,
    rng: np.random.Generator | None = None,
) -> EvidenceResult:
    """Encompassing Bayes factor from prior and posterior counts.

    Parameters
    ----------
    prior_counts : CountResult or float
        Counted prior proportion, or an exact constant when the region's
        prior mass is known in closed form.
    posterior_counts : CountResult
    R : int
        Number of uncertainty draws.
    rng : Generator, optional

    Returns
    -------
    EvidenceResult
        ``bf_0u = f / c`` with the complement-model factor
        ``bf_00c = f(1-c) / (c(1-f))`` and summaries of the ``R`` draws
        ``f_r / c_r``.  Zero counts yield a degraded status and a one-sided
        rule-of-three bound instead of a hard zero or infinity.
    """
    rng = np.random.default_rng() if rng is None else rng
    if R < 2:
        raise ValueError("R must be at least 2")
    c_draws = proportion_draws(prior_counts, R, rng)
    f_draws = proportion_draws(posterior_counts, R, rng)
    bf_draws = f_draws / c_draws
    se = float(np.std(bf_draws, ddof=1))
    q05, q95 = (float(q) for q in np.quantile(bf_draws, [0.05, 0.95]))

    c_hat = _point_proportion(prior_counts)
    f_hat = _point_proportion(posterior_counts)

    status = "ok"
    bound = None
    note = ""
    if c_hat == 0.0 and f_hat == 0.0:
        status = "indeterminate"
        note = "no hits on either side; no point estimate"
        bf_0u = float("nan")
    elif f_hat == 0.0:
        status = "zero-posterior-count"
        bound = (3.0 / posterior_counts.total) / c_hat
        note = "posterior count is zero; bf_0u < bound with ~95% confidence"
        bf_0u = 0.0
    elif c_hat == 0.0:
        status = "zero-prior-count"
        total_c = prior_counts.total
        bound = f_hat / (3.0 / total_c)
        note = "prior count is zero; bf_0u > bound with ~95% confidence"
        bf_0u = float("inf")
    else:
        bf_0u = f_hat / c_hat

    with np.errstate(divide="ignore", invalid="ignore"):
        bf_u0 = 1.0 / bf_0u if bf_0u != 0 else float("inf")
        if 0.0 < f_hat < 1.0 and 0.0 < c_hat < 1.0:
            bf_00c = (f_hat * (1.0 - c_hat)) / (c_hat * (1.0 - f_hat))
        elif f_hat in (0.0, 1.0) and c_hat not in (0.0, 1.0):
            bf_00c = 0.0 if f_hat == 0.0 else float("inf")
        else:
            bf_00c = float("nan")
    return EvidenceResult(
        bf_0u=float(bf_0u),
        bf_u0=float(bf_u0),
        bf_00c=float(bf_00c),
        se=se,
        q05=q05,
        q95=q95,
        R=R,
        status=status,
        bound=bound,
        bound_note=note,
    )
