"""Absolute goodness of fit: Pearson X^2 and posterior-predictive p-values.

For every posterior draw, the X^2 discrepancy of the observed frequencies is
compared against the discrepancy of frequencies simulated from that draw;
the p-value is the proportion of draws where the observed data fit better.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CountData, ItemLayout, complete_theta
from .sampler import Chain


@dataclass(frozen=True)
class PppResult:
    """Posterior-predictive p-value and the statistics behind it."""

    p_value: float
    x2_obs_samples: np.ndarray
    x2_pred_samples: np.ndarray
    T: int
    p_by_item: np.ndarray | None = None


def x2_statistic(data: CountData, theta, layout: ItemLayout, by_item: bool = False):
    """Pearson X^2 over all cells, ``sum (k - n*theta)^2 / (n*theta)``.

    Cells with zero expected count contribute zero when the observed count is
    also zero (limit convention) and make the statistic infinite otherwise.
    With ``by_item=True`` the per-item-type statistics are returned instead
    of their sum.
    """
    data.check_layout(layout)
    full = complete_theta(np.asarray(theta, dtype=float), layout)
    expected = full * np.repeat(data.n, layout.options)
    terms = _x2_terms(data.k, expected)
    if by_item:
        return np.add.reduceat(terms, layout.first_cat)
    return float(terms.sum())


def _x2_terms(k, expected) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = (k - expected) ** 2 / expected
    terms = np.where((expected == 0) & (k == 0), 0.0, terms)
    terms = np.where((expected == 0) & (k > 0), np.inf, terms)
    return terms


def ppp_value(
    chain: Chain | np.ndarray,
    data: CountData,
    layout: ItemLayout,
    rng: np.random.Generator,
    by_item: bool = False,
) -> PppResult:
    """Posterior-predictive p-value based on Pearson X^2.

    For each posterior draw ``theta_t``, predictive frequencies are sampled
    from the product-multinomial at ``theta_t`` and both the observed and the
    predicted X^2 statistics use ``n * theta_t`` as expected counts.  Ties
    between the two statistics count one half (they have positive probability
    for discrete data).

    Returns per-item-type p-values alongside the total when ``by_item``.
    """
    samples = chain.samples if isinstance(chain, Chain) else np.asarray(chain)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("chain must contain at least one sample")
    data.check_layout(layout)
    t = samples.shape[0]
    full = complete_theta(samples, layout)  # (T, J)
    reps = np.repeat(data.n, layout.options)
    expected = full * reps  # (T, J)

    k_pred = np.empty((t, layout.total_categories), dtype=np.int64)
    for i in range(layout.n_items):
        cols = slice(layout.first_cat[i], layout.last_cat[i] + 1)
        pvals = full[:, cols]
        k_pred[:, cols] = rng.multinomial(int(data.n[i]), pvals)

    obs_terms = _x2_terms(data.k[None, :], expected)
    pred_terms = _x2_terms(k_pred, expected)

    def p_from(obs, pred):
        with np.errstate(invalid="ignore"):
            wins = (obs < pred).astype(float)
            wins += 0.5 * (obs == pred)
        return wins.mean(axis=0)

    x2_obs = obs_terms.sum(axis=1)
    x2_pred = pred_terms.sum(axis=1)
    p_item = None
    if by_item:
        obs_i = np.add.reduceat(obs_terms, layout.first_cat, axis=1)
        pred_i = np.add.reduceat(pred_terms, layout.first_cat, axis=1)
        p_item = p_from(obs_i, pred_i)
    return PppResult(
        p_value=float(p_from(x2_obs, x2_pred)),
        x2_obs_samples=x2_obs,
        x2_pred_samples=x2_pred,
        T=t,
        p_by_item=p_item,
    )
