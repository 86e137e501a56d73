"""Coarse-graining of 2-D tensor networks and lattice-times-vector contraction.

One coarse-graining step pairs neighbors along the horizontal axis and then
the vertical axis (row-major, fixed order), contracting each pair and cutting
the fattened transverse bonds back to ``chi`` with a QR-then-SVD split.  The
largest intermediate a step allocates is the paired blob with at most
``chi**6`` elements.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NonConvergence, OracleBudgetExceeded, ShapeMismatch
from .gridspec import pad_vector
from .lattice import (
    AX_DOWN,
    AX_IN,
    AX_LEFT,
    AX_OUT,
    AX_RIGHT,
    AX_UP,
    DEFAULT_ORACLE_BUDGET,
    PepsLattice,
    bond_config_count,
    lattice_matrix,
)
from .tensor_ops import as_tensor, svd_truncate

# Documented constant for the intermediate-size bound: no single array
# allocated inside a coarse-graining step exceeds SIZE_BOUND_CONSTANT * chi**6
# elements (chi taken as max(requested chi, largest incoming bond)).
SIZE_BOUND_CONSTANT = 4


class _SizeTracker:
    def __init__(self):
        self.max_elements = 0

    def note(self, *arrays):
        for a in arrays:
            if a.size > self.max_elements:
                self.max_elements = a.size


_tracker: _SizeTracker | None = None


@contextmanager
def track_intermediates():
    """Record the largest array allocated by coarse-graining steps."""
    global _tracker
    prev = _tracker
    _tracker = _SizeTracker()
    try:
        yield _tracker
    finally:
        _tracker = prev


def _note(*arrays):
    if _tracker is not None:
        _tracker.note(*arrays)


@dataclass(frozen=True)
class TrgNetwork:
    """Grid of order-4 tensors with axes (up, down, left, right).

    ``periodic`` selects wrap-around bonds; open networks must have extent-1
    boundary legs.  ``accumulated_discarded_weight`` sums the squared-mass
    fractions removed by every truncation so far (a first-order error
    bookkeeping device, not a rigorous bound).
    """

    grid: tuple  # tuple of tuples of ndarray
    periodic: bool = False
    step_count: int = 0
    accumulated_discarded_weight: float = 0.0

    def __post_init__(self):
        g = tuple(tuple(as_tensor(t) for t in row) for row in self.grid)
        for row in g:
            for t in row:
                if t.ndim != 4:
                    raise ShapeMismatch(f"network tensors must be order-4, got order {t.ndim}")
        object.__setattr__(self, "grid", g)
        _validate_bonds(self)

    @property
    def rows(self) -> int:
        return len(self.grid)

    @property
    def cols(self) -> int:
        return len(self.grid[0])


def _validate_bonds(net: TrgNetwork) -> None:
    R, C = net.rows, net.cols
    for r in range(R):
        if len(net.grid[r]) != C:
            raise ShapeMismatch("ragged network grid")
        for c in range(C):
            t = net.grid[r][c]
            right_neighbor = net.grid[r][(c + 1) % C] if (c + 1 < C or net.periodic) else None
            if right_neighbor is not None and t.shape[3] != right_neighbor.shape[2]:
                raise ShapeMismatch(f"horizontal bond mismatch at ({r},{c})-({r},{(c + 1) % C})")
            down_neighbor = net.grid[(r + 1) % R][c] if (r + 1 < R or net.periodic) else None
            if down_neighbor is not None and t.shape[1] != down_neighbor.shape[0]:
                raise ShapeMismatch(f"vertical bond mismatch at ({r},{c})-({(r + 1) % R},{c})")
            if not net.periodic:
                if r == 0 and t.shape[0] != 1:
                    raise ShapeMismatch(f"open network needs extent-1 top legs, got {t.shape[0]} at ({r},{c})")
                if r == R - 1 and t.shape[1] != 1:
                    raise ShapeMismatch(f"open network needs extent-1 bottom legs at ({r},{c})")
                if c == 0 and t.shape[2] != 1:
                    raise ShapeMismatch(f"open network needs extent-1 left legs at ({r},{c})")
                if c == C - 1 and t.shape[3] != 1:
                    raise ShapeMismatch(f"open network needs extent-1 right legs at ({r},{c})")


def random_network(rows: int, cols: int, bond: int, seed: int, periodic: bool = False) -> TrgNetwork:
    """Seeded fixture network with uniform [-1, 1] entries and uniform bonds."""
    rng = np.random.default_rng(seed)
    grid = []
    for r in range(rows):
        row = []
        for c in range(cols):
            u = bond if (periodic or r > 0) else 1
            d = bond if (periodic or r + 1 < rows) else 1
            le = bond if (periodic or c > 0) else 1
            ri = bond if (periodic or c + 1 < cols) else 1
            row.append(rng.uniform(-1.0, 1.0, size=(u, d, le, ri)))
        grid.append(tuple(row))
    return TrgNetwork(grid=tuple(grid), periodic=periodic)


def network_config_count(net: TrgNetwork) -> int:
    """Joint assignment count over all bonds (internal, plus wraps if periodic)."""
    count = 1
    R, C = net.rows, net.cols
    for r in range(R):
        for c in range(C):
            t = net.grid[r][c]
            if c + 1 < C or net.periodic:
                count *= t.shape[3]
            if r + 1 < R or net.periodic:
                count *= t.shape[1]
    return count


def _open_grid_value(grid) -> float:
    """Exact scalar of an open-boundary grid via plain frontier tensordot."""
    C = len(grid[0])
    # frontier axes: (rail_0, ..., rail_{C-1}, horiz)
    frontier = np.ones((1,) * (C + 1))
    for row in grid:
        for c, t in enumerate(row):
            f = np.tensordot(frontier, t, axes=([c, C], [0, 2]))
            # f axes: rails without rail_c, then (d, r)
            order = list(range(c)) + [C - 1] + list(range(c, C - 1)) + [C]
            frontier = np.transpose(f, order)
    return float(frontier.reshape(-1)[0])


def exact_network_value(net: TrgNetwork, oracle_budget: int = DEFAULT_ORACLE_BUDGET) -> float:
    """Exact scalar contraction of the network (the small-scale oracle).

    Open networks are contracted by a truncation-free frontier sweep;
    periodic wraps are summed index by index, so this path never uses the
    pairing/SVD machinery it serves as an oracle for.
    """
    n_cfg = network_config_count(net)
    if n_cfg > oracle_budget:
        raise OracleBudgetExceeded(
            f"{n_cfg} bond configurations exceed the oracle budget {oracle_budget}"
        )
    R, C = net.rows, net.cols
    if not net.periodic:
        return _open_grid_value(net.grid)

    h_wrap = [net.grid[r][C - 1].shape[3] for r in range(R)]
    v_wrap = [net.grid[R - 1][c].shape[1] for c in range(C)]
    total = 0.0
    for assignment in np.ndindex(*(h_wrap + v_wrap)):
        h_vals = assignment[:R]
        v_vals = assignment[R:]
        grid = []
        for r in range(R):
            row = []
            for c in range(C):
                t = net.grid[r][c]
                if r == 0:
                    t = t[v_vals[c]][None, ...]
                if r == R - 1:
                    t = t[:, v_vals[c]][:, None, ...]
                if c == 0:
                    t = t[:, :, h_vals[r]][:, :, None, :]
                if c == C - 1:
                    t = t[..., h_vals[r]][..., None]
                row.append(t)
            grid.append(row)
        total += _open_grid_value(grid)
    return float(total)


def _passthrough_column(net_grid, periodic: bool):
    """Trivial column appended to make the width even; exact for both boundaries."""
    col = []
    for row in net_grid:
        b = row[-1].shape[3] if periodic else 1
        t = np.zeros((1, 1, b, b))
        t[0, 0] = np.eye(b)
        col.append(t)
    return col


def _truncate_bond(x: np.ndarray, y: np.ndarray, x_axis: int, y_axis: int, chi: int):
    """Cut the bond joining leg ``x_axis`` of x to leg ``y_axis`` of y down to chi.

    QR both sides, SVD the small core, absorb sqrt(s) symmetrically.  Exact
    whenever chi is at least the numerical rank of the core.  Returns the two
    updated tensors and the discarded weight.
    """
    d = x.shape[x_axis]
    x_rest = [a for a in range(4) if a != x_axis]
    y_rest = [a for a in range(4) if a != y_axis]
    mx = np.transpose(x, x_rest + [x_axis]).reshape(-1, d)
    my = np.transpose(y, [y_axis] + y_rest).reshape(d, -1)
    _note(mx, my)
    qx, rx = np.linalg.qr(mx)
    qy, ry = np.linalg.qr(my.T)
    _note(qx, qy)
    core = rx @ ry.T
    _note(core)
    res = svd_truncate(core, chi, 0.0)
    sqrt_s = np.sqrt(res.s)
    new_mx = qx @ (res.u * sqrt_s)
    new_my = ((sqrt_s[:, None] * res.v) @ qy.T)
    _note(new_mx, new_my)
    k = res.rank
    x_shape = [x.shape[a] for a in x_rest] + [k]
    new_x = np.transpose(new_mx.reshape(x_shape), np.argsort(x_rest + [x_axis]))
    y_shape = [k] + [y.shape[a] for a in y_rest]
    new_y = np.transpose(new_my.reshape(y_shape), np.argsort([y_axis] + y_rest))
    return np.ascontiguousarray(new_x), np.ascontiguousarray(new_y), res.discarded_weight


def _pair_horizontal(grid, periodic):
    """Contract column pairs (0,1), (2,3), ... into single nodes (even width)."""
    new_grid = []
    for row in grid:
        new_row = []
        for j in range(0, len(row), 2):
            a, b = row[j], row[j + 1]
            blob = np.tensordot(a, b, axes=([3], [2]))
            # axes: (u_a, d_a, l, u_b, d_b, r)
            _note(blob)
            blob = np.transpose(blob, (0, 3, 1, 4, 2, 5))
            merged = blob.reshape(
                blob.shape[0] * blob.shape[1],
                blob.shape[2] * blob.shape[3],
                blob.shape[4],
                blob.shape[5],
            )
            _note(merged)
            new_row.append(merged)
        new_grid.append(new_row)
    return new_grid


def trg_step(net: TrgNetwork, chi: int) -> TrgNetwork:
    """One coarse-graining step: horizontal pass then vertical pass.

    Each pass pairs neighbors row-major, contracts the pairs, and splits the
    fattened transverse bonds back to ``chi`` with :func:`_truncate_bond`.
    Odd edges are padded with a trivial passthrough tensor first.  Grid
    dimensions halve (ceiling); all bonds end at most ``chi`` except
    self-bonds on periodic single-row/column grids, which are left for the
    final trace.
    """
    if chi < 1:
        raise ShapeMismatch(f"chi must be >= 1, got {chi}")
    acc = net.accumulated_discarded_weight
    grid = [list(row) for row in net.grid]

    # --- horizontal pass ---
    if len(grid[0]) >= 2:
        if len(grid[0]) % 2 == 1:
            extra = _passthrough_column(grid, net.periodic)
            for r, row in enumerate(grid):
                row.append(extra[r])
        grid = _pair_horizontal(grid, net.periodic)
        R, C = len(grid), len(grid[0])
        for c in range(C):
            last = R if net.periodic else R - 1
            for r in range(last):
                rb = (r + 1) % R
                if rb == r:
                    continue  # single periodic row: self-bond, traced at the end
                x, y = grid[r][c], grid[rb][c]
                if x.shape[1] > chi:
                    x, y, dw = _truncate_bond(x, y, 1, 0, chi)
                    grid[r][c], grid[rb][c] = x, y
                    acc += dw

    # --- vertical pass ---
    if len(grid) >= 2:
        if len(grid) % 2 == 1:
            extra_row = []
            for c in range(len(grid[0])):
                b = grid[-1][c].shape[1] if net.periodic else 1
                t = np.zeros((b, b, 1, 1))
                t[:, :, 0, 0] = np.eye(b)
                extra_row.append(t)
            grid.append(extra_row)
        new_grid = []
        for i in range(0, len(grid), 2):
            row_a, row_b = grid[i], grid[i + 1]
            new_row = []
            for c in range(len(row_a)):
                a, b = row_a[c], row_b[c]
                blob = np.tensordot(a, b, axes=([1], [0]))
                # axes: (u, l_a, r_a, d, l_b, r_b)
                _note(blob)
                blob = np.transpose(blob, (0, 3, 1, 4, 2, 5))
                merged = blob.reshape(
                    blob.shape[0],
                    blob.shape[1],
                    blob.shape[2] * blob.shape[3],
                    blob.shape[4] * blob.shape[5],
                )
                _note(merged)
                new_row.append(merged)
            new_grid.append(new_row)
        grid = new_grid
        R, C = len(grid), len(grid[0])
        for r in range(R):
            last = C if net.periodic else C - 1
            for c in range(last):
                cb = (c + 1) % C
                if cb == c:
                    continue
                x, y = grid[r][c], grid[r][cb]
                if x.shape[3] > chi:
                    x, y, dw = _truncate_bond(x, y, 3, 2, chi)
                    grid[r][c], grid[r][cb] = x, y
                    acc += dw

    return TrgNetwork(
        grid=tuple(tuple(row) for row in grid),
        periodic=net.periodic,
        step_count=net.step_count + 1,
        accumulated_discarded_weight=acc,
    )


class TrgValue(NamedTuple):
    value: float
    accumulated_discarded_weight: float


def _final_scalar(net: TrgNetwork) -> float:
    t = net.grid[0][0]
    if net.periodic:
        return float(np.einsum("uull->", t))
    return float(t[0, 0, 0, 0])


def trg_contract(net: TrgNetwork, chi: int, max_steps: int = 64) -> TrgValue:
    """Coarse-grain down to a 1x1 grid and evaluate the scalar.

    Raises NonConvergence if ``max_steps`` passes without reaching 1x1; no
    partial value is fabricated in that case.
    """
    steps = 0
    while net.rows > 1 or net.cols > 1:
        if steps >= max_steps:
            raise NonConvergence(
                f"grid still {net.rows}x{net.cols} after {max_steps} coarse-graining steps"
            )
        net = trg_step(net, chi)
        steps += 1
    return TrgValue(_final_scalar(net), net.accumulated_discarded_weight)


# ---------------------------------------------------------------------------
# Applying a lattice to a vector
# ---------------------------------------------------------------------------


def _snake_sites(rows: int, cols: int):
    """Boustrophedon site order plus chain-entry/exit leg for each position."""
    path = []
    for r in range(rows):
        cs = range(cols) if r % 2 == 0 else range(cols - 1, -1, -1)
        for c in cs:
            path.append((r, c))
    legs = []
    for k, (r, c) in enumerate(path):
        if k == 0:
            inc = AX_LEFT
        else:
            pr, pc = path[k - 1]
            if pr != r:
                inc = AX_UP
            elif pc < c:
                inc = AX_LEFT
            else:
                inc = AX_RIGHT
        if k == len(path) - 1:
            out = AX_RIGHT if inc != AX_RIGHT else AX_LEFT
        else:
            nr, nc = path[k + 1]
            if nr != r:
                out = AX_DOWN
            elif nc > c:
                out = AX_RIGHT
            else:
                out = AX_LEFT
        legs.append((inc, out))
    return path, legs


def _vector_tt_cores(vec: np.ndarray, dims, chi: int):
    """Snake-order tensor-train factorization of a dense vector.

    Returns cores of shape (bond_in, dim, bond_out); exact when chi is at
    least every cut rank, truncated with svd_truncate otherwise.
    """
    cur = vec.reshape((1,) + tuple(dims))
    cores = []
    for k in range(len(dims) - 1):
        bond = cur.shape[0]
        m = cur.reshape(bond * dims[k], -1)
        res = svd_truncate(m, chi, 0.0)
        cores.append(res.u.reshape(bond, dims[k], res.rank))
        cur = (res.s[:, None] * res.v).reshape((res.rank,) + tuple(dims[k + 1:]))
    cores.append(cur.reshape(cur.shape[0], dims[-1], 1))
    return cores


def _compress_mps(nodes, chi):
    """Left-to-right zip compression of boundary nodes (rail_l, o, d, rail_r)."""
    out = []
    carry = None
    for idx, node in enumerate(nodes):
        if carry is not None:
            node = np.tensordot(carry, node, axes=([1], [0]))
        if idx == len(nodes) - 1:
            out.append(node)
            break
        rl, o, d, rr = node.shape
        m = node.reshape(rl * o * d, rr)
        if m.shape[1] <= chi:
            out.append(node)
            carry = None
            continue
        res = svd_truncate(m, chi, 0.0)
        out.append(res.u.reshape(rl, o, d, res.rank))
        carry = res.s[:, None] * res.v
    return out


def _apply_sweep(lattice: PepsLattice, vec_pad: np.ndarray, chi: int, consume: str) -> np.ndarray:
    """Boundary-contraction application of the lattice to a padded vector.

    ``consume='in'`` computes W_pad @ vec; ``consume='out'`` computes
    W_pad.T @ vec.  The input vector is factored into a snake tensor train and
    absorbed into the sites, then rows are folded into a boundary chain of
    nodes compressed to ``chi`` with the same truncated-SVD machinery used by
    coarse-graining.
    """
    R, C = lattice.rows, lattice.cols
    spec = lattice.spec
    path, legs = _snake_sites(R, C)
    consume_ax, keep_ax = (AX_IN, AX_OUT) if consume == "in" else (AX_OUT, AX_IN)
    factors = spec.in_factors if consume == "in" else spec.out_factors
    # The flat vector is laid out in row-major site order; bring it into
    # snake order before the tensor-train split.
    site_major_dims = [factors[k] for k in range(spec.n_sites)]
    snake_perm = [spec.site_index(r, c) for (r, c) in path]
    vec_snake = np.ascontiguousarray(
        np.transpose(vec_pad.reshape(site_major_dims), snake_perm)
    ).reshape(-1)
    dims = [factors[spec.site_index(r, c)] for (r, c) in path]
    cores = _vector_tt_cores(vec_snake, dims, chi)

    # Absorb vector cores; chain bonds ride along the snake legs.
    absorbed = {}
    for k, (r, c) in enumerate(path):
        site = lattice.site(r, c).data
        inc, out = legs[k]
        b = np.tensordot(site, cores[k], axes=([consume_ax], [1]))
        # axes now: (keep_phys, u, d, l, r) minus consumed, then (a, bnd_out)
        # site axes after tensordot: original order with consume_ax removed,
        # followed by core's (a, b).
        remaining = [a for a in range(6) if a != consume_ax]
        pos = {ax: i for i, ax in enumerate(remaining)}
        a_ax, b_ax = 5, 6
        # fuse core bonds onto the snake legs
        order = [pos[keep_ax]]
        new_shape = [b.shape[pos[keep_ax]]]
        for ax in (AX_UP, AX_DOWN, AX_LEFT, AX_RIGHT):
            grp = [pos[ax]]
            if ax == inc:
                grp.append(a_ax)
            if ax == out:
                grp.append(b_ax)
            order.extend(grp)
            new_shape.append(int(np.prod([b.shape[g] for g in grp])))
        b = np.transpose(b, order).reshape(new_shape)  # (phys, u, d, l, r)
        absorbed[(r, c)] = b

    # Row-by-row boundary chain; node axes (rail_l, o_acc, down, rail_r).
    nodes = []
    for c in range(C):
        t = absorbed[(0, c)]  # (phys, u=1, d, l, r)
        nodes.append(np.ascontiguousarray(np.transpose(t[:, 0], (2, 0, 1, 3))))
    nodes = _compress_mps(nodes, chi)
    for r in range(1, R):
        merged = []
        for c in range(C):
            t = absorbed[(r, c)]
            m = np.tensordot(nodes[c], t, axes=([2], [1]))
            # axes: (rail_l, o_acc, rail_r, phys, d, l, r)
            m = np.transpose(m, (0, 5, 1, 3, 4, 2, 6))
            merged.append(
                m.reshape(
                    m.shape[0] * m.shape[1],
                    m.shape[2] * m.shape[3],
                    m.shape[4],
                    m.shape[5] * m.shape[6],
                )
            )
        nodes = _compress_mps(merged, chi)

    # Contract rails left to right; bottom legs all have extent 1 now.
    result = np.ones((1, 1))  # (rail, o_so_far)
    for c in range(C):
        node = nodes[c][:, :, 0, :]  # (rail_l, o_acc, rail_r)
        result = np.tensordot(result, node, axes=([0], [0]))
        # axes: (o_so_far, o_acc, rail_r) -> fold o_acc into o_so_far
        result = np.transpose(result, (2, 0, 1)).reshape(node.shape[2], -1)
    out_vec = result.reshape(-1)

    # o_so_far groups columns outermost; reorder to row-major site order.
    col_major_dims = []
    for c in range(C):
        for r in range(R):
            col_major_dims.append(
                (spec.out_factors if consume == "in" else spec.in_factors)[spec.site_index(r, c)]
            )
    t = out_vec.reshape(col_major_dims)
    # axis index of site (r, c) in column-major layout is c * R + r
    perm = [c * R + r for r in range(R) for c in range(C)]
    return np.ascontiguousarray(np.transpose(t, perm)).reshape(-1)


def contract_forward(
    lattice: PepsLattice,
    x: np.ndarray,
    chi: int,
    oracle_budget: int = DEFAULT_ORACLE_BUDGET,
) -> np.ndarray:
    """Apply the lattice as a linear map: returns y of length orig_out.

    Exact (matrix materialization) when the lattice is within the oracle
    budget; otherwise a boundary-contraction sweep truncated at ``chi``.
    Padding is added to x and cropped from y.
    """
    spec = lattice.spec
    x_pad = pad_vector(x, spec.orig_in, spec.pad_in)
    if bond_config_count(lattice) <= oracle_budget:
        y_pad = lattice_matrix(lattice) @ x_pad
    else:
        y_pad = _apply_sweep(lattice, x_pad, chi, consume="in")
    return y_pad[: spec.orig_out].copy()


def contract_adjoint(
    lattice: PepsLattice,
    v: np.ndarray,
    chi: int,
    oracle_budget: int = DEFAULT_ORACLE_BUDGET,
) -> np.ndarray:
    """Apply the transposed lattice map: returns W^T v of length orig_in."""
    spec = lattice.spec
    v_pad = pad_vector(v, spec.orig_out, spec.pad_out)
    if bond_config_count(lattice) <= oracle_budget:
        x_pad = lattice_matrix(lattice).T @ v_pad
    else:
        x_pad = _apply_sweep(lattice, v_pad, chi, consume="out")
    return x_pad[: spec.orig_in].copy()
