"""Closed-form solvers for rank-constrained linear regression.

Setting: data x (n x d, full column rank), targets y (n x p), and a
starting weight w0 (d x p). We study additive corrections a @ b of rank at
most r to the weight, judged by the squared Frobenius data error
||x (w0 + a b) - y||_F^2.

Everything here reduces to the residual-after-least-squares matrix

    e = x @ (w_ls - w0),   w_ls = argmin_w ||x w - y||_F^2,

whose singular value spectrum controls what any rank-r correction can do:
the best single correction keeps the top r directions of e, the part of
the error no rank-r correction can remove is the tail sum of squared
singular values, and greedy repetition of the rank-r solve removes r
singular directions per round until e is exhausted.

These functions are pure: they never mutate their arguments and two calls
with identical inputs return identical arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (InvalidInputError, NumericError, RankTooLargeError,
                     ShapeError, SingularMatrixError)
from .linalg import Array, as_matrix, singular_values, svd

# Singular values of the residual matrix below this relative threshold are
# treated as exact zeros when predicting how many greedy rounds remain.
RESIDUAL_RANK_TOL = 1e-9


@dataclass(frozen=True)
class RegressionProblem:
    """One linear adaptation instance: minimize ||x (w0 + a b) - y||_F^2.

    x must have full column rank; this is checked at construction and a
    violation raises SingularMatrixError naming the offending singular
    value.
    """

    x: Array
    y: Array
    w0: Array

    def __post_init__(self):
        x = as_matrix(self.x, "x")
        y = as_matrix(self.y, "y")
        w0 = as_matrix(self.w0, "w0")
        if y.shape[0] != x.shape[0]:
            raise ShapeError("x and y disagree on sample count", x.shape, y.shape)
        if w0.shape != (x.shape[1], y.shape[1]):
            raise ShapeError("w0 does not map x-features to y-targets",
                             (x.shape[1], y.shape[1]), w0.shape)
        if x.shape[1] > x.shape[0]:
            raise SingularMatrixError(
                f"x has more columns than rows ({x.shape}), cannot have "
                f"full column rank"
            )
        s = singular_values(x)
        if s[0] == 0.0 or s[-1] <= 1e-10 * s[0]:
            raise SingularMatrixError(
                f"x is column-rank deficient: sigma_min={s[-1]:.6e} "
                f"against sigma_max={s[0]:.6e}"
            )
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w0", w0)

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def d_features(self) -> int:
        return self.x.shape[1]

    @property
    def p_targets(self) -> int:
        return self.y.shape[1]

    def rank_budget(self) -> int:
        """Largest admissible correction rank, min(d, p)."""
        return min(self.d_features, self.p_targets)


@dataclass(frozen=True)
class RosaTrace:
    """Record of the greedy exact iteration.

    weights[t] is the weight after t rounds (weights[0] is w0), errors[t]
    the matching squared data error. t_predicted is the round count at
    which the error must hit its floor, read off the residual spectrum
    before iterating.
    """

    weights: list[Array]
    errors: list[float]
    t_predicted: int


def least_squares(x, y) -> Array:
    """Minimizer of ||x w - y||_F^2 for full-column-rank x."""
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    w, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    if rank < x.shape[1]:
        raise SingularMatrixError(
            f"x is column-rank deficient: lstsq rank {rank} < {x.shape[1]}"
        )
    return w


def data_error(problem: RegressionProblem, w: Array) -> float:
    """Squared Frobenius error of weight w on the problem's data."""
    r = problem.x @ w - problem.y
    return float(np.sum(r * r))


def irreducible_error(problem: RegressionProblem) -> float:
    """Error floor shared by every weight: the off-range part of y."""
    return data_error(problem, least_squares(problem.x, problem.y))


def _residual_after_ls(problem: RegressionProblem, w_from: Array) -> Array:
    """e = x @ (w_ls - w_from), the removable error matrix seen from w_from."""
    w_ls = least_squares(problem.x, problem.y)
    return problem.x @ (w_ls - w_from)


def _check_correction_rank(problem: RegressionProblem, rank: int) -> None:
    if rank < 1:
        raise InvalidInputError(f"rank must be >= 1, got {rank}")
    if rank > problem.rank_budget():
        raise RankTooLargeError(
            f"rank {rank} exceeds the admissible budget "
            f"min(d={problem.d_features}, p={problem.p_targets}) "
            f"= {problem.rank_budget()}"
        )


def rrr_optimum(problem: RegressionProblem, rank: int) -> tuple[Array, Array]:
    """Best rank-`rank` correction in closed form.

    Returns (a, b) with a of shape (d, rank) and b of shape (rank, p) such
    that w0 + a @ b minimizes the data error over all corrections of rank
    at most `rank`. The construction projects the least-squares move
    w_ls - w0 onto the top right-singular directions of the residual
    matrix e = x @ (w_ls - w0):

        a = (w_ls - w0) @ v_r,   b = v_r.T,

    with v_r the leading `rank` right singular vectors of e.
    """
    _check_correction_rank(problem, rank)
    w_ls = least_squares(problem.x, problem.y)
    e = problem.x @ (w_ls - problem.w0)
    v_r = svd(e).v[:, :rank]
    a = (w_ls - problem.w0) @ v_r
    b = v_r.T
    return a, b


def achieved_error(problem: RegressionProblem, a: Array, b: Array) -> float:
    """Data error of the corrected weight w0 + a @ b."""
    return data_error(problem, problem.w0 + a @ b)


def lora_error_lower_bound(problem: RegressionProblem, rank: int) -> float:
    """Tail spectral energy no rank-`rank` correction can remove.

    Equals sum of sigma_i(e)^2 for i > rank, with e the residual matrix of
    the problem, truncated at the admissible budget min(d, p). Any
    correction of rank at most `rank` leaves at least this much error above
    the irreducible floor, and the closed-form optimum meets it exactly.
    """
    _check_correction_rank(problem, rank)
    s = singular_values(_residual_after_ls(problem, problem.w0))
    s = s[:problem.rank_budget()]
    return float(np.sum(s[rank:] ** 2))


def residual_rank(problem: RegressionProblem) -> int:
    """Numerical rank of the residual matrix e = x @ (w_ls - w0).

    A singular value counts if it clears RESIDUAL_RANK_TOL relative to the
    larger of sigma_max(e) and the Frobenius norm of y. The second anchor
    keeps an all-roundoff residual (problem already solved by w0) at rank
    zero instead of promoting its noise floor to full rank.
    """
    e = _residual_after_ls(problem, problem.w0)
    s = singular_values(e)
    cutoff = RESIDUAL_RANK_TOL * max(s[0], np.linalg.norm(problem.y), 1.0)
    return int(np.count_nonzero(s > cutoff))


def predicted_rounds(problem: RegressionProblem, rank: int) -> int:
    """ceil(rank(e) / rank): greedy rounds needed to exhaust the residual."""
    _check_correction_rank(problem, rank)
    return math.ceil(residual_rank(problem) / rank)


def rosa_exact_iterate(problem: RegressionProblem, rank: int,
                       max_steps: int) -> RosaTrace:
    """Greedy repetition of the closed-form rank-`rank` solve.

    Round t re-roots the problem at the current weight and applies
    rrr_optimum to it, so each round removes the `rank` strongest remaining
    singular directions of the residual. Errors are non-increasing; a
    violation beyond roundoff raises NumericError. The trace stops after
    max_steps rounds regardless of convergence.
    """
    _check_correction_rank(problem, rank)
    if max_steps < 0:
        raise InvalidInputError(f"max_steps must be >= 0, got {max_steps}")
    t_predicted = predicted_rounds(problem, rank)
    w = problem.w0.copy()
    weights = [w.copy()]
    errors = [data_error(problem, w)]
    slack = 1e-12 * max(errors[0], 1.0)
    for _ in range(max_steps):
        step_problem = RegressionProblem(x=problem.x, y=problem.y, w0=w)
        a, b = rrr_optimum(step_problem, rank)
        w = w + a @ b
        err = data_error(problem, w)
        if err > errors[-1] + slack:
            raise NumericError(
                f"greedy error increased: {errors[-1]:.6e} -> {err:.6e}"
            )
        weights.append(w.copy())
        errors.append(err)
    return RosaTrace(weights=weights, errors=errors, t_predicted=t_predicted)


def realizable_instance(n: int, d: int, p: int, residual_rank: int,
                        seed: int) -> RegressionProblem:
    """Random instance whose optimal move w* - w0 has a known exact rank.

    x has i.i.d. Gaussian entries (full column rank almost surely, and
    checked), w* = w0 + delta with delta built from orthonormal factors and
    well-separated singular values in [1, 2], and y = x @ w* exactly. The
    residual matrix then has rank exactly residual_rank and zero error is
    attainable.
    """
    if n < d:
        raise InvalidInputError(f"need n >= d for full column rank, got n={n}, d={d}")
    if not 0 <= residual_rank <= min(d, p):
        raise InvalidInputError(
            f"residual_rank must be in [0, min(d={d}, p={p})], got {residual_rank}"
        )
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    w0 = rng.standard_normal((d, p))
    w_star = w0.copy()
    if residual_rank > 0:
        qu, _ = np.linalg.qr(rng.standard_normal((d, residual_rank)))
        qv, _ = np.linalg.qr(rng.standard_normal((p, residual_rank)))
        gains = np.geomspace(2.0, 1.0, residual_rank)
        w_star = w0 + (qu * gains) @ qv.T
    return RegressionProblem(x=x, y=x @ w_star, w0=w0)


def random_instance(n: int, d: int, p: int, seed: int) -> RegressionProblem:
    """Fully generic instance: x, y, w0 all i.i.d. Gaussian.

    Generic targets sit off the range of x, so the irreducible error is
    positive and the residual matrix has full admissible rank min(d, p)
    almost surely.
    """
    if n < d:
        raise InvalidInputError(f"need n >= d for full column rank, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    return RegressionProblem(x=rng.standard_normal((n, d)),
                             y=rng.standard_normal((n, p)),
                             w0=rng.standard_normal((d, p)))


def with_off_range_noise(problem: RegressionProblem, scale: float,
                         seed: int) -> RegressionProblem:
    """Copy of the problem with targets pushed off the range of x.

    Adds scale times the component of a Gaussian draw orthogonal to the
    columns of x, which raises the irreducible error without moving the
    least-squares weight.
    """
    if scale < 0.0:
        raise InvalidInputError(f"scale must be >= 0, got {scale}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(problem.y.shape)
    z_in_range = problem.x @ least_squares(problem.x, z)
    return RegressionProblem(x=problem.x, y=problem.y + scale * (z - z_in_range),
                             w0=problem.w0)
