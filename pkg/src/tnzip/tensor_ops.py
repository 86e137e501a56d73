"""Dense-tensor kernel: reshape, permutation, matricization, contraction, SVD.

Tensors are plain ``numpy.ndarray`` values with ``float64`` entries, row-major
layout, and are treated as immutable throughout the package.  Every function
here is pure and thread-safe.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AxisPartitionError,
    ElementCountMismatch,
    ExtentMismatch,
    InvalidPermutation,
    NonFiniteInput,
    ShapeMismatch,
)

# Relative gap below which two adjacent singular values are considered
# degenerate; truncation never silently splits such a cluster.
DEGENERACY_RTOL = 1e-12


def as_tensor(data) -> np.ndarray:
    """Coerce input to a float64 ndarray without copying when possible."""
    return np.asarray(data, dtype=np.float64)


def reshape(t: np.ndarray, new_shape) -> np.ndarray:
    """Return ``t`` with new shape metadata over the same row-major data.

    Raises ElementCountMismatch when element counts differ.  The result is an
    independent value (mutating it never touches ``t``).
    """
    t = as_tensor(t)
    new_shape = tuple(int(s) for s in new_shape)
    if any(s < 1 for s in new_shape):
        raise ElementCountMismatch(f"extents must be >= 1, got {new_shape}")
    if int(np.prod(new_shape, dtype=np.int64)) != t.size:
        raise ElementCountMismatch(
            f"cannot reshape {t.size} elements into shape {new_shape}"
        )
    return t.reshape(new_shape).copy()


def permute(t: np.ndarray, order) -> np.ndarray:
    """Reorder axes so that ``result[i[order[0]], ...] == t[i[0], ...]``.

    The data is physically reordered into row-major layout.
    """
    t = as_tensor(t)
    order = tuple(int(a) for a in order)
    if sorted(order) != list(range(t.ndim)):
        raise InvalidPermutation(f"{order} is not a permutation of 0..{t.ndim - 1}")
    return np.ascontiguousarray(np.transpose(t, order))


def matricize(t: np.ndarray, row_axes, col_axes) -> np.ndarray:
    """Flatten ``t`` to a matrix, rows from ``row_axes``, columns from ``col_axes``.

    The two lists must partition all axes.  Row (column) indices combine in
    row-major order of the listed axes, so the operation is invertible given
    the original shape and the axis lists (see :func:`dematricize`).
    """
    t = as_tensor(t)
    row_axes = [int(a) for a in row_axes]
    col_axes = [int(a) for a in col_axes]
    if sorted(row_axes + col_axes) != list(range(t.ndim)):
        raise AxisPartitionError(
            f"rows {row_axes} + cols {col_axes} do not partition axes of order-{t.ndim} tensor"
        )
    nrow = int(np.prod([t.shape[a] for a in row_axes], dtype=np.int64)) if row_axes else 1
    ncol = int(np.prod([t.shape[a] for a in col_axes], dtype=np.int64)) if col_axes else 1
    return np.transpose(t, row_axes + col_axes).reshape(nrow, ncol)


def dematricize(m: np.ndarray, shape, row_axes, col_axes) -> np.ndarray:
    """Invert :func:`matricize` back to a tensor of the given original shape."""
    m = as_tensor(m)
    shape = tuple(int(s) for s in shape)
    row_axes = [int(a) for a in row_axes]
    col_axes = [int(a) for a in col_axes]
    if sorted(row_axes + col_axes) != list(range(len(shape))):
        raise AxisPartitionError(
            f"rows {row_axes} + cols {col_axes} do not partition axes of {shape}"
        )
    perm = row_axes + col_axes
    interm = m.reshape([shape[a] for a in perm])
    inverse = np.argsort(perm)
    return np.ascontiguousarray(np.transpose(interm, inverse))


def contract(a: np.ndarray, axes_a, b: np.ndarray, axes_b) -> np.ndarray:
    """Generalized tensor dot: sum over the paired axes.

    Remaining axes of ``a`` come first, then remaining axes of ``b``, each in
    their original order.  Paired extents must agree.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    axes_a = [int(x) for x in axes_a]
    axes_b = [int(x) for x in axes_b]
    if len(axes_a) != len(axes_b):
        raise ExtentMismatch(
            f"axis lists differ in length: {len(axes_a)} vs {len(axes_b)}"
        )
    for ax_a, ax_b in zip(axes_a, axes_b):
        if a.shape[ax_a] != b.shape[ax_b]:
            raise ExtentMismatch(
                f"axis {ax_a} of a (extent {a.shape[ax_a]}) does not match "
                f"axis {ax_b} of b (extent {b.shape[ax_b]})"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))


@dataclass(frozen=True)
class SvdResult:
    """Truncated SVD ``m ~= u @ diag(s) @ v``.

    ``discarded_weight`` is the squared singular mass removed by the
    truncation, as a fraction of the total squared mass (0 when nothing was
    truncated).  ``degenerate_truncation`` flags that the requested cut fell
    inside a degenerate singular-value cluster; the boundary was moved below
    the cluster when possible, otherwise the split was kept and flagged.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    discarded_weight: float
    degenerate_truncation: bool = False

    @property
    def rank(self) -> int:
        return len(self.s)


def svd_truncate(m: np.ndarray, chi: int, tol: float = 0.0) -> SvdResult:
    """Rank-``k`` SVD truncation of an order-2 tensor.

    ``k = min(chi, #{sigma_i > tol * sigma_max}, numerical rank)`` but never
    below 1, where the numerical rank uses the conventional
    ``max(m, n) * eps`` relative threshold.  The left singular vectors carry a
    deterministic sign: the largest-magnitude entry of each column is
    nonnegative (ties resolved toward the lowest index).
    """
    m = as_tensor(m)
    if m.ndim != 2:
        raise ShapeMismatch(f"svd_truncate expects an order-2 tensor, got order {m.ndim}")
    if chi < 1:
        raise ShapeMismatch(f"chi must be >= 1, got {chi}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteInput("svd_truncate input contains non-finite values")

    u, s, vt = np.linalg.svd(m, full_matrices=False)
    smax = s[0] if s.size else 0.0
    if smax > 0.0:
        rank_eps = max(m.shape) * np.finfo(np.float64).eps
        n_rank = int(np.count_nonzero(s > rank_eps * smax))
        n_tol = int(np.count_nonzero(s > tol * smax))
    else:
        n_rank = n_tol = 0
    k = max(1, min(int(chi), n_tol, n_rank))

    degenerate = False
    if k < s.size and (s[k - 1] - s[k]) <= DEGENERACY_RTOL * smax:
        degenerate = True
        k_new = k
        while k_new > 1 and (s[k_new - 1] - s[k_new]) <= DEGENERACY_RTOL * smax:
            k_new -= 1
        if (s[k_new - 1] - s[k_new]) > DEGENERACY_RTOL * smax:
            k = k_new
        # else: the cluster reaches the top; keep the requested cut, flagged.

    total = float(np.dot(s, s))
    discarded = float(np.dot(s[k:], s[k:])) if k < s.size else 0.0
    weight = discarded / total if total > 0.0 else 0.0

    u = np.ascontiguousarray(u[:, :k])
    vt = np.ascontiguousarray(vt[:k, :])
    s = s[:k].copy()
    for j in range(k):
        pivot = int(np.argmax(np.abs(u[:, j])))
        if u[pivot, j] < 0.0:
            u[:, j] = -u[:, j]
            vt[j, :] = -vt[j, :]
    return SvdResult(u=u, s=s, v=vt, discarded_weight=weight, degenerate_truncation=degenerate)
