"""Building a lattice that approximates a given weight matrix.

Stage 1 walks the sites along a boustrophedon (snake) path and splits the
grid tensor with successive truncated SVDs, giving a chain embedded in the
grid.  Stage 2 inserts the vertical bonds the snake skipped by grouping each
vertically adjacent pair and SVD-splitting the blob along the vertical cut.
Optional alternating-least-squares sweeps then refine every site against the
padded target at fixed bond dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import NonFiniteInput, OracleBudgetExceeded, ShapeMismatch
from .gridspec import GridSpec, weight_to_grid_tensor
from .lattice import (
    AX_DOWN,
    AX_LEFT,
    AX_RIGHT,
    AX_UP,
    DEFAULT_ORACLE_BUDGET,
    PepsLattice,
    SiteTensor,
    bond_config_count,
    lattice_matrix,
)
from .tensor_ops import as_tensor, svd_truncate
from .trg import _snake_sites, contract_forward

# Environments larger than this many elements make ALS refuse to run.
ALS_ENV_ELEMENT_LIMIT = 2**26

_PROBE_COLUMNS = 16


@dataclass
class DecomposeReport:
    """Accounting for one decomposition or refinement run."""

    split_discarded_weights: list = field(default_factory=list)
    reconstruction_error: float = 0.0
    chi: int = 0
    sweeps: int = 0
    error_method: str = "exact"
    singular_environment: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _site_from_core(core: np.ndarray, inc: int, out: int) -> np.ndarray:
    """Reshape a chain core (bond_in, o, i, bond_out) into site-tensor axes."""
    b_in, o, i, b_out = core.shape
    extents = {AX_UP: 1, AX_DOWN: 1, AX_LEFT: 1, AX_RIGHT: 1}
    extents[inc] = b_in
    extents[out] = b_out
    # core axes: 0=b_in, 1=o, 2=i, 3=b_out; order the bond axes by direction.
    order = [1, 2]
    for ax in (AX_UP, AX_DOWN, AX_LEFT, AX_RIGHT):
        if ax == inc:
            order.append(0)
        elif ax == out:
            order.append(3)
    arranged = np.transpose(core, order)
    return np.ascontiguousarray(arranged).reshape(
        o, i, extents[AX_UP], extents[AX_DOWN], extents[AX_LEFT], extents[AX_RIGHT]
    )


def _insert_vertical_bond(top: np.ndarray, bottom: np.ndarray, chi: int, tol: float):
    """Group a vertically adjacent site pair and split along the vertical cut.

    The pair currently shares an extent-1 bond; the blob is SVD-split with
    rank <= chi, the singular values absorbed downward, and the new bond
    becomes the pair's (down, up) extents.
    """
    o1, i1, u1, d1, l1, r1 = top.shape
    o2, i2, u2, d2, l2, r2 = bottom.shape
    blob = np.tensordot(top, bottom, axes=([AX_DOWN], [AX_UP]))
    # axes: (o1, i1, u1, l1, r1, o2, i2, d2, l2, r2)
    m = blob.reshape(o1 * i1 * u1 * l1 * r1, o2 * i2 * d2 * l2 * r2)
    res = svd_truncate(m, chi, tol)
    k = res.rank
    new_top = res.u.reshape(o1, i1, u1, l1, r1, k)
    new_top = np.ascontiguousarray(np.transpose(new_top, (0, 1, 2, 5, 3, 4)))
    new_bottom = (res.s[:, None] * res.v).reshape(k, o2, i2, d2, l2, r2)
    new_bottom = np.ascontiguousarray(np.transpose(new_bottom, (1, 2, 0, 3, 4, 5)))
    return new_top, new_bottom, res.discarded_weight


def _reconstruction_error(
    lattice: PepsLattice, w_pad: np.ndarray, oracle_budget: int
) -> tuple[float, str]:
    """Relative Frobenius error against the padded target.

    Exact within the oracle budget, otherwise estimated from seeded column
    probes.
    """
    denom = float(np.linalg.norm(w_pad))
    if bond_config_count(lattice) <= oracle_budget:
        diff = float(np.linalg.norm(lattice_matrix(lattice) - w_pad))
        return (diff / denom if denom > 0 else diff), "exact"
    spec = lattice.spec
    rng = np.random.default_rng(0)
    cols = rng.choice(spec.orig_in, size=min(_PROBE_COLUMNS, spec.orig_in), replace=False)
    num = den = 0.0
    for j in sorted(int(c) for c in cols):
        e = np.zeros(spec.orig_in)
        e[j] = 1.0
        approx = contract_forward(lattice, e, lattice.chi_max, oracle_budget)
        col = w_pad[: spec.orig_out, j]
        num += float(np.sum((approx - col) ** 2))
        den += float(np.sum(col**2))
    return (np.sqrt(num / den) if den > 0 else np.sqrt(num)), "probe"


def decompose_weight(
    w: np.ndarray,
    spec: GridSpec,
    chi: int,
    tol: float = 0.0,
    oracle_budget: int = DEFAULT_ORACLE_BUDGET,
) -> tuple[PepsLattice, DecomposeReport]:
    """Snake TT-SVD construction of a lattice approximating ``w``.

    Deterministic in (w, spec, chi, tol).  All splits share the one
    (chi, tol) pair; every truncation's discarded weight is recorded in
    order.  Exact (up to roundoff) whenever chi reaches the rank of every
    cut the construction uses.
    """
    w = as_tensor(w)
    if w.ndim != 2 or w.shape != (spec.orig_out, spec.orig_in):
        raise ShapeMismatch(
            f"expected a {spec.orig_out}x{spec.orig_in} matrix, got shape {w.shape}"
        )
    if not np.all(np.isfinite(w)):
        raise NonFiniteInput("decompose_weight input contains non-finite values")

    R, C = spec.rows, spec.cols
    grid_t = weight_to_grid_tensor(w, spec)
    path, legs = _snake_sites(R, C)

    # Permute phys pairs into snake order, then sweep TT-SVD splits.
    n = spec.n_sites
    perm = []
    for r, c in path:
        s = spec.site_index(r, c)
        perm.extend([2 * s, 2 * s + 1])
    snake_t = np.transpose(grid_t, perm)
    pair_dims = [
        (spec.out_factors[spec.site_index(r, c)], spec.in_factors[spec.site_index(r, c)])
        for (r, c) in path
    ]

    discarded: list[float] = []
    cores = []
    cur = snake_t.reshape((1,) + snake_t.shape)
    for k in range(n - 1):
        o, i = pair_dims[k]
        bond = cur.shape[0]
        res = svd_truncate(cur.reshape(bond * o * i, -1), chi, tol)
        discarded.append(res.discarded_weight)
        cores.append(res.u.reshape(bond, o, i, res.rank))
        tail_dims = tuple(d for oi in pair_dims[k + 1:] for d in oi)
        cur = (res.s[:, None] * res.v).reshape((res.rank,) + tail_dims)
    o, i = pair_dims[-1]
    cores.append(cur.reshape(cur.shape[0], o, i, 1))

    site_data = {}
    for k, (r, c) in enumerate(path):
        inc, out = legs[k]
        site_data[(r, c)] = _site_from_core(cores[k], inc, out)

    # Stage 2: vertical bonds skipped by the snake.
    for r in range(R - 1):
        turn_col = C - 1 if r % 2 == 0 else 0
        for c in range(C):
            if c == turn_col:
                continue
            top, bottom, dw = _insert_vertical_bond(
                site_data[(r, c)], site_data[(r + 1, c)], chi, tol
            )
            site_data[(r, c)] = top
            site_data[(r + 1, c)] = bottom
            discarded.append(dw)

    sites = tuple(
        tuple(SiteTensor(data=site_data[(r, c)]) for c in range(C)) for r in range(R)
    )
    lattice = PepsLattice(rows=R, cols=C, sites=sites, spec=spec)

    w_pad = np.zeros((spec.pad_out, spec.pad_in))
    w_pad[: spec.orig_out, : spec.orig_in] = w
    err, method = _reconstruction_error(lattice, w_pad, oracle_budget)
    report = DecomposeReport(
        split_discarded_weights=discarded,
        reconstruction_error=err,
        chi=int(chi),
        sweeps=0,
        error_method=method,
    )
    return lattice, report


class _LatticeIndexing:
    """Einsum letters for every axis of a lattice, boundary stubs included."""

    LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"

    def __init__(self, rows: int, cols: int, bond_copies: int = 1):
        self.rows, self.cols = rows, cols
        need = 2 * rows * cols + bond_copies * (rows * (cols + 1) + cols * (rows + 1))
        if need > len(self.LETTERS):
            raise OracleBudgetExceeded(
                f"grid too large for einsum environments ({need} indices needed)"
            )
        it = iter(self.LETTERS)
        self.phys = {
            (r, c): (next(it), next(it)) for r in range(rows) for c in range(cols)
        }
        self.h = []
        self.v = []
        for _ in range(bond_copies):
            self.h.append({(r, c): next(it) for r in range(rows) for c in range(-1, cols)})
            self.v.append({(r, c): next(it) for r in range(-1, rows) for c in range(cols)})

    def site_sub(self, r: int, c: int, copy: int = 0) -> str:
        o, i = self.phys[(r, c)]
        return (
            o
            + i
            + self.v[copy][(r - 1, c)]
            + self.v[copy][(r, c)]
            + self.h[copy][(r, c - 1)]
            + self.h[copy][(r, c)]
        )

    def stub_letters(self, r: int, c: int, copy: int = 0) -> list[str]:
        """Letters of (r, c)'s legs that touch the lattice boundary."""
        out = []
        if r == 0:
            out.append(self.v[copy][(r - 1, c)])
        if r == self.rows - 1:
            out.append(self.v[copy][(r, c)])
        if c == 0:
            out.append(self.h[copy][(r, c - 1)])
        if c == self.cols - 1:
            out.append(self.h[copy][(r, c)])
        return out


def _environment_parts(lattice: PepsLattice, r: int, c: int, w_grid: np.ndarray):
    """Normal-equation pieces for one site's least-squares update.

    Returns (g, b): ``g`` is the bond-space Gram matrix shared by every
    physical component (the site's physical indices appear directly in the
    output, so the full Gram matrix is I_(o*i) kron g), and ``b`` the
    right-hand side carrying the site's six axes.
    """
    R, C = lattice.rows, lattice.cols
    others = [(rr, cc) for rr in range(R) for cc in range(C) if (rr, cc) != (r, c)]

    # Right-hand side: environment contracted against the padded target.
    ix = _LatticeIndexing(R, C, bond_copies=1)
    operands = [lattice.site(rr, cc).data for rr, cc in others]
    subs = [ix.site_sub(rr, cc) for rr, cc in others]
    w_sub = "".join(ix.phys[(rr, cc)][0] + ix.phys[(rr, cc)][1] for rr in range(R) for cc in range(C))
    operands.append(w_grid)
    subs.append(w_sub)
    for letter in ix.stub_letters(r, c):
        operands.append(np.ones(1))
        subs.append(letter)
    out_sub = ix.site_sub(r, c)
    b = np.einsum(",".join(subs) + "->" + out_sub, *operands, optimize=True)

    # Gram matrix: two environment copies sharing physical letters.
    ix2 = _LatticeIndexing(R, C, bond_copies=2)
    operands = []
    subs = []
    for copy in (0, 1):
        for rr, cc in others:
            operands.append(lattice.site(rr, cc).data)
            subs.append(ix2.site_sub(rr, cc, copy))
        for letter in ix2.stub_letters(r, c, copy):
            operands.append(np.ones(1))
            subs.append(letter)
    out_sub = ix2.site_sub(r, c, 0)[2:] + ix2.site_sub(r, c, 1)[2:]
    g = np.einsum(",".join(subs) + "->" + out_sub, *operands, optimize=True)
    nb = int(np.prod(g.shape[:4], dtype=np.int64))
    return g.reshape(nb, nb), b


def als_refine(
    lattice: PepsLattice,
    w: np.ndarray,
    sweeps: int,
    tol: float = 0.0,
    oracle_budget: int = DEFAULT_ORACLE_BUDGET,
) -> tuple[PepsLattice, DecomposeReport]:
    """Alternating least-squares sweeps over the sites at fixed bonds.

    Each update solves the exact linear least-squares problem for one site
    with the rest frozen, so the reconstruction error never increases.  A
    rank-deficient environment Gram matrix is ridge-regularized with
    1e-10 * trace and flagged in the report.  Stops early once a sweep
    improves the error by less than ``tol``.
    """
    w = as_tensor(w)
    spec = lattice.spec
    if w.shape != (spec.orig_out, spec.orig_in):
        raise ShapeMismatch(
            f"expected a {spec.orig_out}x{spec.orig_in} matrix, got shape {w.shape}"
        )
    if not np.all(np.isfinite(w)):
        raise NonFiniteInput("als_refine input contains non-finite values")
    if bond_config_count(lattice) > oracle_budget:
        raise OracleBudgetExceeded(
            "ALS environments need exact contraction; lattice exceeds the oracle budget"
        )
    env_elements = (spec.pad_out * spec.pad_in) * max(
        lattice.site(r, c).data.size for r in range(lattice.rows) for c in range(lattice.cols)
    )
    if env_elements > ALS_ENV_ELEMENT_LIMIT:
        raise OracleBudgetExceeded(
            f"ALS environment of {env_elements} elements exceeds the limit"
        )

    w_pad = np.zeros((spec.pad_out, spec.pad_in))
    w_pad[: spec.orig_out, : spec.orig_in] = w
    w_grid = weight_to_grid_tensor(w, spec)
    denom = float(np.linalg.norm(w_pad))

    def error_of(lat: PepsLattice) -> float:
        diff = float(np.linalg.norm(lattice_matrix(lat) - w_pad))
        return diff / denom if denom > 0 else diff

    current = lattice
    err = error_of(current)
    singular = False
    performed = 0
    for _ in range(int(sweeps)):
        sweep_start_err = err
        for r in range(lattice.rows):
            for c in range(lattice.cols):
                g, b = _environment_parts(current, r, c, w_grid)
                site = current.site(r, c).data
                o, i = site.shape[0], site.shape[1]
                bond_shape = site.shape[2:]
                nb = g.shape[0]
                try:
                    np.linalg.cholesky(g)
                    g_solve = g
                except np.linalg.LinAlgError:
                    singular = True
                    g_solve = g + (1e-10 * np.trace(g)) * np.eye(nb)
                rhs = b.reshape(o * i, nb).T
                try:
                    sol = np.linalg.solve(g_solve, rhs)
                except np.linalg.LinAlgError:
                    singular = True
                    g_solve = g + (1e-10 * np.trace(g) + 1e-300) * np.eye(nb)
                    sol = np.linalg.solve(g_solve, rhs)
                new_site = sol.T.reshape((o, i) + bond_shape)
                candidate = current.replace_site(r, c, new_site)
                new_err = error_of(candidate)
                # Exact least squares cannot increase the error; guard roundoff.
                if np.isfinite(new_err) and new_err <= err + 1e-14 * max(1.0, err):
                    current = candidate
                    err = min(err, new_err)
        performed += 1
        if sweep_start_err - err < tol:
            break

    report = DecomposeReport(
        split_discarded_weights=[],
        reconstruction_error=err,
        chi=int(current.chi_max),
        sweeps=performed,
        error_method="exact",
        singular_environment=singular,
    )
    return current, report
