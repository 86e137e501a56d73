"""Open-boundary grid of site tensors and exact (oracle) contraction.

Each site tensor carries two physical indices (its share of the output and
input factors) and four virtual indices in the fixed order
``(out, in, up, down, left, right)``.  Lattices are immutable after
construction; all functions here are pure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OracleBudgetExceeded, ShapeMismatch
from .gridspec import GridSpec, _interleave_order
from .tensor_ops import as_tensor

# Default cap on the number of virtual-index configurations the brute-force
# oracle will enumerate.
DEFAULT_ORACLE_BUDGET = 2**24

# Axis positions within a site tensor.
AX_OUT, AX_IN, AX_UP, AX_DOWN, AX_LEFT, AX_RIGHT = range(6)


@dataclass(frozen=True)
class SiteTensor:
    """One lattice site: data with axes (out, in, up, down, left, right)."""

    data: np.ndarray

    def __post_init__(self):
        d = as_tensor(self.data)
        if d.ndim != 6:
            raise ShapeMismatch(f"site tensor must be order-6, got order {d.ndim}")
        if any(e < 1 for e in d.shape):
            raise ShapeMismatch(f"site extents must be >= 1, got {d.shape}")
        object.__setattr__(self, "data", d)

    @property
    def phys_out(self) -> int:
        return self.data.shape[AX_OUT]

    @property
    def phys_in(self) -> int:
        return self.data.shape[AX_IN]

    @property
    def up(self) -> int:
        return self.data.shape[AX_UP]

    @property
    def down(self) -> int:
        return self.data.shape[AX_DOWN]

    @property
    def left(self) -> int:
        return self.data.shape[AX_LEFT]

    @property
    def right(self) -> int:
        return self.data.shape[AX_RIGHT]


@dataclass(frozen=True)
class PepsLattice:
    """Rectangular grid of SiteTensors tied to a GridSpec."""

    rows: int
    cols: int
    sites: tuple  # tuple of tuples of SiteTensor, row-major
    spec: GridSpec

    def __post_init__(self):
        sites = tuple(tuple(row) for row in self.sites)
        object.__setattr__(self, "sites", sites)

    def site(self, r: int, c: int) -> SiteTensor:
        return self.sites[r][c]

    @property
    def chi_max(self) -> int:
        """Largest virtual extent present anywhere in the lattice."""
        return max(
            max(s.up, s.down, s.left, s.right) for row in self.sites for s in row
        )

    def replace_site(self, r: int, c: int, data: np.ndarray) -> "PepsLattice":
        """New lattice with one site tensor swapped out."""
        rows = [list(row) for row in self.sites]
        rows[r][c] = SiteTensor(data=data)
        return PepsLattice(rows=self.rows, cols=self.cols, sites=tuple(tuple(r_) for r_ in rows), spec=self.spec)


@dataclass(frozen=True)
class Violation:
    kind: str
    where: tuple
    message: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple


def validate_lattice(lattice: PepsLattice) -> ValidationReport:
    """Check bond agreement, open boundaries, physical products, and spec fit.

    Violations are returned as the payload; nothing raises.
    """
    v: list[Violation] = []
    R, C = lattice.rows, lattice.cols
    spec = lattice.spec
    if len(lattice.sites) != R or any(len(row) != C for row in lattice.sites):
        v.append(Violation("grid-shape", (), f"site grid is not {R}x{C}"))
        return ValidationReport(ok=False, violations=tuple(v))

    for r in range(R):
        for c in range(C):
            s = lattice.site(r, c)
            if c + 1 < C and s.right != lattice.site(r, c + 1).left:
                v.append(
                    Violation(
                        "bond-mismatch",
                        ((r, c), (r, c + 1)),
                        f"right extent {s.right} != left extent {lattice.site(r, c + 1).left}",
                    )
                )
            if r + 1 < R and s.down != lattice.site(r + 1, c).up:
                v.append(
                    Violation(
                        "bond-mismatch",
                        ((r, c), (r + 1, c)),
                        f"down extent {s.down} != up extent {lattice.site(r + 1, c).up}",
                    )
                )
            for name, extent, on_edge in (
                ("up", s.up, r == 0),
                ("down", s.down, r == R - 1),
                ("left", s.left, c == 0),
                ("right", s.right, c == C - 1),
            ):
                if on_edge and extent != 1:
                    v.append(
                        Violation(
                            "open-boundary",
                            (r, c),
                            f"{name} extent {extent} on the lattice edge must be 1",
                        )
                    )
            k = spec.site_index(r, c)
            if s.phys_out != spec.out_factors[k] or s.phys_in != spec.in_factors[k]:
                v.append(
                    Violation(
                        "phys-mismatch",
                        (r, c),
                        f"physical extents ({s.phys_out},{s.phys_in}) != spec "
                        f"({spec.out_factors[k]},{spec.in_factors[k]})",
                    )
                )

    prod_out = int(np.prod([s.phys_out for row in lattice.sites for s in row], dtype=np.int64))
    prod_in = int(np.prod([s.phys_in for row in lattice.sites for s in row], dtype=np.int64))
    if prod_out != spec.pad_out:
        v.append(Violation("phys-product", (), f"product of phys_out {prod_out} != pad_out {spec.pad_out}"))
    if prod_in != spec.pad_in:
        v.append(Violation("phys-product", (), f"product of phys_in {prod_in} != pad_in {spec.pad_in}"))
    return ValidationReport(ok=not v, violations=tuple(v))


def parameter_count(lattice: PepsLattice) -> int:
    """Total element count over all site tensors."""
    return int(sum(s.data.size for row in lattice.sites for s in row))


def random_lattice(rows: int, cols: int, spec: GridSpec, chi: int, seed: int) -> PepsLattice:
    """Test-fixture lattice: interior bonds ``chi``, entries uniform on [-1, 1].

    Entries come from numpy's PCG64 generator seeded with ``seed``, filled in
    row-major site order, so identical arguments give bit-identical lattices.
    """
    if chi < 1:
        raise ShapeMismatch(f"chi must be >= 1, got {chi}")
    rng = np.random.default_rng(seed)
    sites = []
    for r in range(rows):
        row = []
        for c in range(cols):
            k = spec.site_index(r, c)
            shape = (
                spec.out_factors[k],
                spec.in_factors[k],
                1 if r == 0 else chi,
                1 if r == rows - 1 else chi,
                1 if c == 0 else chi,
                1 if c == cols - 1 else chi,
            )
            row.append(SiteTensor(data=rng.uniform(-1.0, 1.0, size=shape)))
        sites.append(tuple(row))
    return PepsLattice(rows=rows, cols=cols, sites=tuple(sites), spec=spec)


def bond_config_count(lattice: PepsLattice) -> int:
    """Number of joint assignments of all internal virtual indices."""
    count = 1
    for r in range(lattice.rows):
        for c in range(lattice.cols):
            s = lattice.site(r, c)
            if c + 1 < lattice.cols:
                count *= s.right
            if r + 1 < lattice.rows:
                count *= s.down
    return count


def exact_contract_to_dense(
    lattice: PepsLattice, oracle_budget: int = DEFAULT_ORACLE_BUDGET
) -> np.ndarray:
    """Brute-force contraction of the lattice into its (pad_out x pad_in) matrix.

    Sums over every assignment of the internal virtual indices the product of
    site elements; exact up to floating point.  Raises OracleBudgetExceeded
    when the assignment count is above ``oracle_budget``.
    """
    n_cfg = bond_config_count(lattice)
    if n_cfg > oracle_budget:
        raise OracleBudgetExceeded(
            f"{n_cfg} bond configurations exceed the oracle budget {oracle_budget}"
        )
    R, C = lattice.rows, lattice.cols
    spec = lattice.spec

    # Internal bonds in a fixed order: horizontal row-major, then vertical.
    h_id = {(r, c): i for i, (r, c) in enumerate((r, c) for r in range(R) for c in range(C - 1))}
    v_id = {(r, c): len(h_id) + i for i, (r, c) in enumerate((r, c) for r in range(R - 1) for c in range(C))}
    extents = [0] * (len(h_id) + len(v_id))
    for (r, c), i in h_id.items():
        extents[i] = lattice.site(r, c).right
    for (r, c), i in v_id.items():
        extents[i] = lattice.site(r, c).down

    # Per site, which assignment slots feed each virtual leg (-1: boundary).
    slots = {}
    for r in range(R):
        for c in range(C):
            slots[(r, c)] = (
                v_id.get((r - 1, c), -1),
                v_id.get((r, c), -1) if r + 1 < R else -1,
                h_id.get((r, c - 1), -1),
                h_id.get((r, c), -1) if c + 1 < C else -1,
            )

    n = spec.n_sites
    pair_shape = tuple(
        x for s in range(n) for x in (spec.out_factors[s], spec.in_factors[s])
    )
    acc = np.zeros(int(np.prod(pair_shape, dtype=np.int64)))

    for assignment in np.ndindex(*extents):
        term = np.ones(1)
        for r in range(R):
            for c in range(C):
                iu, idn, il, ir = slots[(r, c)]
                block = lattice.site(r, c).data[
                    :,
                    :,
                    assignment[iu] if iu >= 0 else 0,
                    assignment[idn] if idn >= 0 else 0,
                    assignment[il] if il >= 0 else 0,
                    assignment[ir] if ir >= 0 else 0,
                ].reshape(-1)
                term = np.multiply.outer(term, block).reshape(-1)
        acc += term

    grid = acc.reshape(pair_shape)
    inverse = np.argsort(_interleave_order(n))
    return np.ascontiguousarray(
        np.transpose(grid, inverse).reshape(spec.pad_out, spec.pad_in)
    )


def lattice_matrix(lattice: PepsLattice) -> np.ndarray:
    """Exact (pad_out x pad_in) matrix of the lattice via frontier contraction.

    Equivalent to :func:`exact_contract_to_dense` but contracts site by site,
    so it stays fast at tens of thousands of matrix elements.  The frontier
    keeps every processed physical pair plus one rail per column, so memory
    peaks near ``pad_out * pad_in * chi**(cols+1)`` divided by the final
    row's physical dimensions; intended for desk-scale grids.
    """
    R, C = lattice.rows, lattice.cols
    spec = lattice.spec
    # Frontier axes: (O_acc, I_acc, rail_0, ..., rail_{C-1}, horiz).
    frontier = np.ones((1, 1) + (1,) * C + (1,))
    for r in range(R):
        for c in range(C):
            a = lattice.site(r, c).data  # (o, i, u, d, l, rr)
            rail_ax = 2 + c
            horiz_ax = 2 + C
            f = np.tensordot(frontier, a, axes=([rail_ax, horiz_ax], [AX_UP, AX_LEFT]))
            # f axes: O, I, rails without rail_c, o, i, d, rr
            n_keep = 2 + C - 1
            o_ax, i_ax, d_ax, r_ax = n_keep, n_keep + 1, n_keep + 2, n_keep + 3
            rails_before = list(range(2, 2 + c))
            rails_after = list(range(2 + c, n_keep))
            order = [0, o_ax, 1, i_ax] + rails_before + [d_ax] + rails_after + [r_ax]
            f = np.transpose(f, order)
            new_shape = (
                f.shape[0] * f.shape[1],
                f.shape[2] * f.shape[3],
            ) + f.shape[4:]
            frontier = f.reshape(new_shape)
    return np.ascontiguousarray(frontier.reshape(spec.pad_out, spec.pad_in))


def lattice_matrix_cropped(lattice: PepsLattice) -> np.ndarray:
    """Lattice matrix with the zero padding cropped to the original dims."""
    m = lattice_matrix(lattice)
    return np.ascontiguousarray(m[: lattice.spec.orig_out, : lattice.spec.orig_in])
