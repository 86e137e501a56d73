"""Factoring matrix dimensions onto a rectangular grid of sites.

A ``GridSpec`` records how the row and column dimensions of a weight matrix
split into one factor per lattice site (sites enumerated row-major), plus any
zero padding needed to make the split possible.  ``weight_to_grid_tensor``
performs the corresponding reshape/permute so each site owns an adjacent
(out_factor, in_factor) axis pair.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .errors import ShapeMismatch, ConfigInvalid
from .tensor_ops import as_tensor

# Largest allowed ratio between the biggest and smallest factor of one
# dimension.  Balanced factors bound the per-site physical dimension.
BALANCE_RATIO = 4


def _balanced_factorizations(n: int, k: int):
    """All non-increasing k-tuples of factors >= 2 with product n."""
    out = []

    def rec(remaining, parts, ceiling):
        if len(parts) == k - 1:
            if 2 <= remaining <= ceiling:
                out.append(tuple(parts + [remaining]))
            return
        f = min(ceiling, remaining)
        while f >= 2:
            if remaining % f == 0:
                rec(remaining // f, parts + [f], f)
            f -= 1

    if k == 1:
        return [(n,)] if n >= 2 else []
    rec(n, [], n)
    return out


def factor_dimension(d: int, k: int) -> tuple[int, list[int]]:
    """Split dimension ``d`` into ``k`` balanced factors, padding if needed.

    Returns ``(padded_d, factors)`` where ``padded_d`` is the smallest integer
    >= d that admits k factors, all >= 2 (all equal to 1 when d == 1), whose
    max/min ratio is at most BALANCE_RATIO.  Factors come sorted
    non-increasing; among admissible splits the most balanced wins, ties going
    to the lexicographically smallest tuple.  Deterministic.
    """
    d = int(d)
    k = int(k)
    if d < 1 or k < 1:
        raise ConfigInvalid(f"need d >= 1 and k >= 1, got d={d}, k={k}")
    if k == 1:
        return d, [d]
    if d == 1:
        return 1, [1] * k

    padded = max(d, 2**k)
    while True:
        candidates = [
            f for f in _balanced_factorizations(padded, k) if f[0] <= BALANCE_RATIO * f[-1]
        ]
        if candidates:
            best = min(candidates, key=lambda f: (f[0] / f[-1], f))
            return padded, list(best)
        padded += 1


@dataclass(frozen=True)
class GridSpec:
    """How a matrix maps onto an R x C grid of sites.

    ``out_factors`` / ``in_factors`` hold one factor per site in row-major
    site order; their products equal the padded dimensions.  Padding is always
    by zeros and is cropped again on reconstruction.
    """

    rows: int
    cols: int
    out_factors: tuple[int, ...]
    in_factors: tuple[int, ...]
    orig_out: int
    orig_in: int
    pad_out: int
    pad_in: int

    def __post_init__(self):
        n = self.rows * self.cols
        object.__setattr__(self, "out_factors", tuple(int(f) for f in self.out_factors))
        object.__setattr__(self, "in_factors", tuple(int(f) for f in self.in_factors))
        if self.rows < 1 or self.cols < 1:
            raise ConfigInvalid("grid must have at least one row and one column")
        if len(self.out_factors) != n or len(self.in_factors) != n:
            raise ConfigInvalid(f"need {n} factors per dimension for a {self.rows}x{self.cols} grid")
        if any(f < 1 for f in self.out_factors + self.in_factors):
            raise ConfigInvalid("factors must be >= 1")
        if int(np.prod(self.out_factors, dtype=np.int64)) != self.pad_out:
            raise ConfigInvalid("product(out_factors) != pad_out")
        if int(np.prod(self.in_factors, dtype=np.int64)) != self.pad_in:
            raise ConfigInvalid("product(in_factors) != pad_in")
        if self.pad_out < self.orig_out or self.pad_in < self.orig_in:
            raise ConfigInvalid("padded dimensions cannot be smaller than the originals")

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols

    def site_index(self, r: int, c: int) -> int:
        """Row-major site enumeration; fixed globally."""
        return r * self.cols + c

    def validate_balance(self) -> None:
        """Check the balance rule on both factor lists."""
        for name, factors in (("out_factors", self.out_factors), ("in_factors", self.in_factors)):
            nontrivial = [f for f in factors if f > 1]
            pad = self.pad_out if name == "out_factors" else self.pad_in
            if pad > 1 and not nontrivial:
                raise ConfigInvalid(f"{name}: padded dim > 1 needs at least one factor > 1")
            if nontrivial and max(factors) > BALANCE_RATIO * min(nontrivial):
                raise ConfigInvalid(f"{name}: factors {factors} violate the balance rule")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["out_factors"] = list(self.out_factors)
        d["in_factors"] = list(self.in_factors)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(
            rows=int(d["rows"]),
            cols=int(d["cols"]),
            out_factors=tuple(d["out_factors"]),
            in_factors=tuple(d["in_factors"]),
            orig_out=int(d["orig_out"]),
            orig_in=int(d["orig_in"]),
            pad_out=int(d["pad_out"]),
            pad_in=int(d["pad_in"]),
        )


def make_grid_spec(orig_out: int, orig_in: int, rows: int, cols: int) -> GridSpec:
    """Build the canonical GridSpec for a matrix on an R x C grid.

    Each dimension is factored with :func:`factor_dimension` and the sorted
    factors are assigned to sites in row-major order.
    """
    n = int(rows) * int(cols)
    pad_out, out_factors = factor_dimension(orig_out, n)
    pad_in, in_factors = factor_dimension(orig_in, n)
    return GridSpec(
        rows=int(rows),
        cols=int(cols),
        out_factors=tuple(out_factors),
        in_factors=tuple(in_factors),
        orig_out=int(orig_out),
        orig_in=int(orig_in),
        pad_out=pad_out,
        pad_in=pad_in,
    )


def _interleave_order(n_sites: int) -> list[int]:
    """Axis order taking (o_0..o_{n-1}, i_0..i_{n-1}) to (o_0, i_0, o_1, i_1, ...)."""
    order = []
    for s in range(n_sites):
        order.extend([s, n_sites + s])
    return order


def weight_to_grid_tensor(w: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Zero-pad ``w`` and expose the grid structure as an order-2RC tensor.

    Axis layout of the result: one (out_factor, in_factor) pair per site, in
    row-major site order.  The Frobenius norm is preserved exactly.
    """
    w = as_tensor(w)
    if w.ndim != 2 or w.shape != (spec.orig_out, spec.orig_in):
        raise ShapeMismatch(
            f"expected a {spec.orig_out}x{spec.orig_in} matrix, got shape {w.shape}"
        )
    padded = np.zeros((spec.pad_out, spec.pad_in))
    padded[: spec.orig_out, : spec.orig_in] = w
    t = padded.reshape(spec.out_factors + spec.in_factors)
    return np.ascontiguousarray(np.transpose(t, _interleave_order(spec.n_sites)))


def grid_tensor_to_weight(t: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Invert :func:`weight_to_grid_tensor`, cropping the zero padding."""
    t = as_tensor(t)
    n = spec.n_sites
    expected = tuple(
        x for s in range(n) for x in (spec.out_factors[s], spec.in_factors[s])
    )
    if t.shape != expected:
        raise ShapeMismatch(f"grid tensor shape {t.shape} does not match spec {expected}")
    inverse = np.argsort(_interleave_order(n))
    padded = np.transpose(t, inverse).reshape(spec.pad_out, spec.pad_in)
    return np.ascontiguousarray(padded[: spec.orig_out, : spec.orig_in])


def pad_vector(x: np.ndarray, orig: int, pad: int) -> np.ndarray:
    """Zero-extend a length-``orig`` vector to length ``pad``."""
    x = as_tensor(x).reshape(-1)
    if x.shape[0] != orig:
        raise ShapeMismatch(f"expected a length-{orig} vector, got {x.shape[0]}")
    if pad == orig:
        return x.copy()
    out = np.zeros(pad)
    out[:orig] = x
    return out
