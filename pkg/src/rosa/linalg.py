"""Dense linear-algebra kernels.

Thin deterministic SVD, orthogonal projections onto column spans, numerical
rank, and the index-subset sampling used to pick singular directions. All
functions take and return float64 ndarrays and never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidInputError, RankTooLargeError, SingularMatrixError

Array = np.ndarray

# Relative threshold under which a singular value is treated as zero when
# deciding column rank for projections.
_RANK_DEFICIENCY_TOL = 1e-10


class SamplingScheme(Enum):
    """How to choose which singular directions become trainable."""

    RANDOM = "random"
    TOP = "top"
    BOTTOM = "bottom"


def as_matrix(w, name: str = "matrix") -> Array:
    """Validate and convert to a finite float64 2-D array."""
    arr = np.asarray(w, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.size == 0:
        raise InvalidInputError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD of an m x n matrix.

    u has orthonormal columns (m x k), sigma is non-negative and sorted in
    descending order (k,), v has orthonormal columns (n x k), with
    k = min(m, n). The factorization satisfies w = u @ diag(sigma) @ v.T.
    """

    u: Array
    sigma: Array
    v: Array

    @property
    def rank_bound(self) -> int:
        return int(self.sigma.size)

    def reconstruct(self) -> Array:
        return (self.u * self.sigma) @ self.v.T


def svd(w) -> SvdFactors:
    """Thin SVD with a deterministic sign convention.

    Each column of u is flipped so that its largest-magnitude entry is
    positive; ties pick the lowest row index. The paired column of v flips
    with it, so the product is unchanged. Identical input bytes give
    identical output bytes.
    """
    w = as_matrix(w, "w")
    u, s, vt = np.linalg.svd(w, full_matrices=False)
    # LAPACK already returns descending sigma; the stable sort only matters
    # for exact ties, where it pins one ordering.
    order = np.argsort(-s, kind="stable")
    u = u[:, order]
    s = s[order]
    v = vt.T[:, order]
    for j in range(s.size):
        lead = int(np.argmax(np.abs(u[:, j])))
        if u[lead, j] < 0:
            u[:, j] = -u[:, j]
            v[:, j] = -v[:, j]
    return SvdFactors(u=u, sigma=s, v=v)


def singular_values(w) -> Array:
    """Singular values only, descending. Cheaper than a full svd call."""
    return np.linalg.svd(as_matrix(w, "w"), compute_uv=False)


def numerical_rank(w, rel_tol: float = 1e-9) -> int:
    """Count singular values above rel_tol times the largest one."""
    s = singular_values(w)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))


def sample_indices(count: int, bound: int, scheme: SamplingScheme,
                   rng: np.random.Generator | None = None) -> Array:
    """Pick `count` distinct indices from range(bound) under a scheme.

    RANDOM draws uniformly without replacement and needs `rng`. TOP takes
    the first `count` indices, BOTTOM the last `count`. The result is always
    sorted ascending so downstream slices are canonical.
    """
    if count < 1:
        raise InvalidInputError(f"count must be >= 1, got {count}")
    if count > bound:
        raise RankTooLargeError(f"cannot take {count} indices from a pool of {bound}")
    if scheme is SamplingScheme.TOP:
        idx = np.arange(count)
    elif scheme is SamplingScheme.BOTTOM:
        idx = np.arange(bound - count, bound)
    elif scheme is SamplingScheme.RANDOM:
        if rng is None:
            raise InvalidInputError("scheme RANDOM requires an rng")
        idx = np.sort(rng.choice(bound, size=count, replace=False))
    else:
        raise InvalidInputError(f"unknown sampling scheme {scheme!r}")
    return idx.astype(np.int64)


def projection_onto_range(x) -> Array:
    """Orthogonal projector onto the column span of x, as a dense matrix.

    x must have full column rank; otherwise SingularMatrixError names the
    offending singular value. The projector is symmetric and idempotent up
    to roundoff.
    """
    x = as_matrix(x, "x")
    if x.shape[1] > x.shape[0]:
        raise SingularMatrixError(
            f"x has more columns than rows ({x.shape}), cannot have full column rank"
        )
    u, s, _ = np.linalg.svd(x, full_matrices=False)
    if s[0] == 0.0 or s[-1] <= _RANK_DEFICIENCY_TOL * s[0]:
        raise SingularMatrixError(
            f"x is column-rank deficient: sigma_min={s[-1]:.6e} "
            f"against sigma_max={s[0]:.6e}"
        )
    return u @ u.T
