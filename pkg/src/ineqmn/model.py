"""Product-multinomial data model with inequality-constrained parameter spaces.

A model consists of ``I`` independent category systems ("item types"), the
``i``-th having ``J_i`` response options with probabilities that sum to one.
The free parameter vector ``theta`` stacks the first ``J_i - 1`` probabilities
of every item type, giving ``D = sum(J_i) - I`` free coordinates.  Constraint
regions are convex polytopes given either as facet inequalities
``A @ theta <= b`` or as the convex hull of a vertex matrix ``V``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gammaln

from .errors import DimensionError

# Tolerance for deciding A @ theta <= b on the boundary.  Exact vertex
# arithmetic (e.g. 0.5 stored in a vertex matrix) must not be rejected.
CONSTRAINT_TOL = 1e-10

# Tolerance for probability bookkeeping (complements, simplex sums).
THETA_TOL = 1e-9


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class ItemLayout:
    """Category structure of the model.

    Parameters
    ----------
    options : tuple of int
        Number of response options ``J_i`` per item type, each at least 2.
    """

    options: tuple[int, ...]

    def __post_init__(self):
        opts = tuple(int(j) for j in self.options)
        if len(opts) == 0:
            raise ValueError("layout needs at least one item type")
        if any(j < 2 for j in opts):
            raise ValueError(f"every item type needs >= 2 options, got {opts}")
        object.__setattr__(self, "options", opts)

    @property
    def n_items(self) -> int:
        return len(self.options)

    @property
    def total_categories(self) -> int:
        return sum(self.options)

    @property
    def dim(self) -> int:
        """Number of free probability parameters."""
        return sum(self.options) - len(self.options)

    # Index maps between the free parameter vector (length D) and the full
    # category vector (length J).  All are plain int arrays.

    @cached_property
    def item_of_free(self) -> np.ndarray:
        """Item-type index of each free coordinate, shape (D,)."""
        return np.repeat(np.arange(self.n_items), [j - 1 for j in self.options])

    @cached_property
    def cat_of_free(self) -> np.ndarray:
        """Position of each free coordinate in the full vector, shape (D,)."""
        out = []
        start = 0
        for j in self.options:
            out.extend(range(start, start + j - 1))
            start += j
        return np.array(out, dtype=np.intp)

    @cached_property
    def last_cat(self) -> np.ndarray:
        """Position of each item type's last category in the full vector."""
        return np.cumsum(self.options) - 1

    @cached_property
    def first_free(self) -> np.ndarray:
        """First free-coordinate index of each item type, shape (I,)."""
        sizes = np.array([j - 1 for j in self.options])
        return np.concatenate(([0], np.cumsum(sizes)[:-1]))

    @cached_property
    def first_cat(self) -> np.ndarray:
        """First full-vector index of each item type, shape (I,)."""
        return np.concatenate(([0], np.cumsum(self.options)[:-1]))

    def item_sums(self, theta: np.ndarray) -> np.ndarray:
        """Per-item sums of free coordinates.

        Works on a single vector (D,) or a batch (M, D); sums run over the
        last axis and have shape (I,) or (M, I).
        """
        theta = np.asarray(theta, dtype=float)
        return np.add.reduceat(theta, self.first_free, axis=-1)


def validate_theta(theta, layout: ItemLayout, tol: float = THETA_TOL) -> np.ndarray:
    """Check that ``theta`` is a valid free probability vector.

    Returns the vector as a float array, raising ``ValueError`` on entries
    outside [0, 1] or item sums above one (beyond ``tol``).
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (layout.dim,):
        raise DimensionError(
            f"theta has shape {theta.shape}, expected ({layout.dim},)"
        )
    if np.any(theta < -tol) or np.any(theta > 1 + tol):
        raise ValueError("theta entries must lie in [0, 1]")
    if np.any(layout.item_sums(theta) > 1 + tol):
        raise ValueError("free probabilities of an item type sum above one")
    return theta


def complete_theta(theta, layout: ItemLayout, tol: float = THETA_TOL) -> np.ndarray:
    """Append the implied last-category probability of every item type.

    Parameters
    ----------
    theta : array, shape (D,) or (M, D)
        Free probability coordinates.
    layout : ItemLayout

    Returns
    -------
    ndarray, shape (J,) or (M, J)
        Full probability vector(s); each item type's block sums to one.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != layout.dim:
        raise DimensionError(
            f"theta has {theta.shape[-1]} coordinates, expected {layout.dim}"
        )
    last = 1.0 - layout.item_sums(theta)
    if np.any(last < -tol):
        raise ValueError("free probabilities of an item type sum above one")
    last = np.maximum(last, 0.0)
    full = np.empty(theta.shape[:-1] + (layout.total_categories,))
    full[..., layout.cat_of_free] = theta
    full[..., layout.last_cat] = last
    return full


def theta_from_full(full, layout: ItemLayout) -> np.ndarray:
    """Drop the last category of every item type, shape (J,) -> (D,)."""
    full = np.asarray(full, dtype=float)
    if full.shape[-1] != layout.total_categories:
        raise DimensionError(
            f"full vector has {full.shape[-1]} entries, expected "
            f"{layout.total_categories}"
        )
    return full[..., layout.cat_of_free]


@dataclass(frozen=True)
class CountData:
    """Observed frequencies ``k`` (full length J) and totals ``n`` per item type."""

    k: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k, dtype=np.int64)
        n = np.asarray(self.n, dtype=np.int64)
        if np.any(k < 0) or np.any(n < 0):
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "n", n)

    @classmethod
    def from_full(cls, k, layout: ItemLayout, n=None) -> "CountData":
        """Build from per-category counts; totals are derived or validated."""
        k = np.asarray(k, dtype=np.int64)
        if k.shape != (layout.total_categories,):
            raise DimensionError(
                f"k has shape {k.shape}, expected ({layout.total_categories},)"
            )
        sums = np.add.reduceat(k, layout.first_cat)
        if n is None:
            n = sums
        else:
            n = np.broadcast_to(np.asarray(n, dtype=np.int64), (layout.n_items,))
            if np.any(n != sums):
                raise DimensionError(
                    f"per-item sums of k are {sums.tolist()} but n is {n.tolist()}"
                )
        return cls(k, n)

    @classmethod
    def from_free(cls, k_free, n, layout: ItemLayout) -> "CountData":
        """Build from counts of the free categories only.

        The last category of each item type is filled in as the complement
        ``n_i - sum_j k_ij``; a scalar ``n`` is broadcast to all item types.
        """
        k_free = np.asarray(k_free, dtype=np.int64)
        if k_free.shape != (layout.dim,):
            raise DimensionError(
                f"free-category k has shape {k_free.shape}, expected ({layout.dim},)"
            )
        n = np.broadcast_to(np.asarray(n, dtype=np.int64), (layout.n_items,)).copy()
        free_sums = np.add.reduceat(k_free, layout.first_free)
        rest = n - free_sums
        if np.any(rest < 0):
            raise ValueError("free-category counts exceed the item totals n")
        k = np.empty(layout.total_categories, dtype=np.int64)
        k[layout.cat_of_free] = k_free
        k[layout.last_cat] = rest
        return cls(k, n)

    @classmethod
    def empty(cls, layout: ItemLayout) -> "CountData":
        """No observations (used for prior sampling and prior counting)."""
        return cls(
            np.zeros(layout.total_categories, dtype=np.int64),
            np.zeros(layout.n_items, dtype=np.int64),
        )

    def check_layout(self, layout: ItemLayout) -> None:
        if self.k.shape != (layout.total_categories,):
            raise DimensionError(
                f"k has shape {self.k.shape}, expected ({layout.total_categories},)"
            )
        if self.n.shape != (layout.n_items,):
            raise DimensionError(
                f"n has shape {self.n.shape}, expected ({layout.n_items},)"
            )
        sums = np.add.reduceat(self.k, layout.first_cat)
        if np.any(sums != self.n):
            raise DimensionError("per-item sums of k do not match n")


@dataclass(frozen=True)
class DirichletPrior:
    """Independent Dirichlet shape parameters, one per category (length J)."""

    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 1 or np.any(beta <= 0) or not np.all(np.isfinite(beta)):
            raise ValueError("prior shapes must be positive finite numbers")
        object.__setattr__(self, "beta", beta)

    @classmethod
    def uniform(cls, layout: ItemLayout) -> "DirichletPrior":
        return cls(np.ones(layout.total_categories))

    def check_layout(self, layout: ItemLayout) -> None:
        if self.beta.shape != (layout.total_categories,):
            raise DimensionError(
                f"prior has shape {self.beta.shape}, expected "
                f"({layout.total_categories},)"
            )


@dataclass(frozen=True)
class AbPolytope:
    """Facet representation ``{theta : A @ theta <= b}``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim == 1 and A.size == 0:
            A = A.reshape(0, 0)
        if A.ndim != 2:
            raise DimensionError(f"A must be a 2-d array, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValueError("A contains non-finite entries")
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if not np.all(np.isfinite(b)):
            raise ValueError("b contains non-finite entries")
        if A.shape[0] != b.shape[0]:
            raise DimensionError(
                f"A has {A.shape[0]} rows but b has {b.shape[0]} entries"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def prefix(self, n_rows: int) -> "AbPolytope":
        """Polytope using only the first ``n_rows`` inequalities."""
        if not 0 <= n_rows <= self.n_rows:
            raise ValueError(f"prefix length {n_rows} out of range")
        return AbPolytope(self.A[:n_rows], self.b[:n_rows])

    @classmethod
    def unconstrained(cls, dim: int) -> "AbPolytope":
        return cls(np.zeros((0, dim)), np.zeros(0))


@dataclass(frozen=True)
class VPolytope:
    """Vertex representation: the convex hull of the rows of ``V``."""

    V: np.ndarray

    def __post_init__(self):
        V = _as_matrix(self.V, "V")
        if V.shape[0] < 1:
            raise ValueError("vertex matrix needs at least one row")
        if np.any(V < -THETA_TOL) or np.any(V > 1 + THETA_TOL):
            raise ValueError("vertex coordinates must lie in [0, 1]")
        object.__setattr__(self, "V", V)

    @property
    def n_vertices(self) -> int:
        return self.V.shape[0]

    @property
    def dim(self) -> int:
        return self.V.shape[1]

    def check_layout(self, layout: ItemLayout) -> None:
        if self.V.shape[1] != layout.dim:
            raise DimensionError(
                f"V has {self.V.shape[1]} columns, expected {layout.dim}"
            )
        for s in range(self.n_vertices):
            try:
                complete_theta(self.V[s], layout)
            except ValueError as exc:
                raise ValueError(f"vertex {s} is not a valid theta: {exc}") from exc


@dataclass(frozen=True)
class MixtureWeights:
    """Nonnegative vertex weights summing to one."""

    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.ndim != 1:
            raise DimensionError("alpha must be a vector")
        if np.any(alpha < -1e-12):
            raise ValueError("mixture weights must be nonnegative")
        total = alpha.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mixture weights sum to {total}, expected 1")
        object.__setattr__(self, "alpha", np.maximum(alpha, 0.0))

    def blend(self, poly: VPolytope) -> np.ndarray:
        """The point ``V.T @ alpha`` implied by these weights."""
        if self.alpha.shape[0] != poly.n_vertices:
            raise DimensionError("weight count does not match vertex count")
        return poly.V.T @ self.alpha


def log_likelihood(data: CountData, theta, layout: ItemLayout) -> float:
    """Log of the product-multinomial mass, multinomial coefficients included.

    Returns ``-inf`` when some category has probability zero but a positive
    observed count.  Item types with ``n_i = 0`` contribute zero.
    """
    data.check_layout(layout)
    theta = validate_theta(theta, layout)
    full = complete_theta(theta, layout)
    k = data.k
    coef = gammaln(data.n + 1).sum() - gammaln(k + 1).sum()
    pos = k > 0
    if np.any(full[pos] == 0.0):
        return float("-inf")
    return float(coef + np.sum(k[pos] * np.log(full[pos])))


def satisfies_ab(theta, poly: AbPolytope, tol: float = CONSTRAINT_TOL) -> bool:
    """True iff ``A @ theta <= b + tol`` holds row-wise.

    Rows are checked in chunks so that clearly violated points exit early;
    an empty constraint set accepts every point.
    """
    theta = np.asarray(theta, dtype=float)
    if poly.n_rows == 0:
        return True
    if theta.shape != (poly.dim,):
        raise DimensionError(
            f"theta has shape {theta.shape}, expected ({poly.dim},)"
        )
    chunk = 4096
    for start in range(0, poly.n_rows, chunk):
        stop = min(start + chunk, poly.n_rows)
        lhs = poly.A[start:stop] @ theta
        if np.any(lhs > poly.b[start:stop] + tol):
            return False
    return True


def satisfies_ab_batch(
    thetas, poly: AbPolytope, tol: float = CONSTRAINT_TOL
) -> np.ndarray:
    """Vectorized membership check for a batch of points, shape (M, D) -> (M,).

    Row chunks are applied to the still-alive subset only, so batches where
    most points violate an early constraint cost far less than a full
    matrix product.
    """
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 2 or thetas.shape[1] != poly.dim:
        raise DimensionError(
            f"thetas has shape {thetas.shape}, expected (M, {poly.dim})"
        )
    m = thetas.shape[0]
    if poly.n_rows == 0:
        return np.ones(m, dtype=bool)
    alive = np.arange(m)
    points = thetas
    chunk = 2048
    for start in range(0, poly.n_rows, chunk):
        stop = min(start + chunk, poly.n_rows)
        lhs = points @ poly.A[start:stop].T
        ok = np.all(lhs <= poly.b[start:stop] + tol, axis=1)
        alive = alive[ok]
        points = points[ok]
        if alive.size == 0:
            break
    out = np.zeros(m, dtype=bool)
    out[alive] = True
    return out


def posterior_shapes(data: CountData, prior: DirichletPrior) -> np.ndarray:
    """Shape vector ``k + beta`` of the conjugate Dirichlet posterior."""
    if data.k.shape != prior.beta.shape:
        raise DimensionError(
            f"counts have shape {data.k.shape} but prior has {prior.beta.shape}"
        )
    return data.k + prior.beta


def sample_unconstrained(
    shapes, layout: ItemLayout, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Independent Dirichlet draws per item type, returned as free coordinates.

    Parameters
    ----------
    shapes : array, shape (J,)
        Positive Dirichlet shape parameters for all categories.
    size : int, optional
        Number of draws; ``None`` returns a single vector of shape (D,),
        otherwise the result has shape (size, D).

    Notes
    -----
    Uses the gamma representation: normalized per-item gamma variates are
    Dirichlet-distributed.
    """
    shapes = np.asarray(shapes, dtype=float)
    if shapes.shape != (layout.total_categories,):
        raise DimensionError(
            f"shapes has shape {shapes.shape}, expected ({layout.total_categories},)"
        )
    if np.any(shapes <= 0):
        raise ValueError("Dirichlet shapes must be positive")
    m = 1 if size is None else int(size)
    g = rng.standard_gamma(shapes, size=(m, layout.total_categories))
    sums = np.add.reduceat(g, layout.first_cat, axis=1)
    g /= np.repeat(sums, layout.options, axis=1)
    free = g[:, layout.cat_of_free]
    return free[0] if size is None else free
