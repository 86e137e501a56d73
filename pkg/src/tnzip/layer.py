"""A lattice packaged as a linear layer with analytic gradients.

The layer output is multilinear in the input vector and in every site tensor,
so the gradient with respect to one site is the contraction of the rest of
the network (its environment) against the upstream vector, and the input
gradient is the transposed map applied to upstream.  A finite-difference
audit over every parameter backs the analytic path.
"""
from __future__ import annotations

import numpy as np

from .errors import MissingForwardCache, OracleBudgetExceeded, ShapeMismatch
from .gridspec import weight_to_grid_tensor
from .lattice import (
    DEFAULT_ORACLE_BUDGET,
    PepsLattice,
    bond_config_count,
    lattice_matrix,
)
from .decompose import _LatticeIndexing
from .tensor_ops import as_tensor
from .trg import contract_adjoint, contract_forward


def site_gradients(lattice: PepsLattice, pairing: np.ndarray) -> list[list[np.ndarray]]:
    """Gradient of ``sum(pairing * W_hat_cropped)`` with respect to each site.

    ``pairing`` is an (orig_out x orig_in) matrix; for a sample-level loss it
    is ``outer(upstream, x)``, for a batch it is the summed outer products.
    Each gradient is the site's environment contracted against the padded
    pairing matrix and has exactly the site tensor's shape.
    """
    spec = lattice.spec
    pairing = as_tensor(pairing)
    if pairing.shape != (spec.orig_out, spec.orig_in):
        raise ShapeMismatch(
            f"pairing must be {spec.orig_out}x{spec.orig_in}, got {pairing.shape}"
        )
    g_grid = weight_to_grid_tensor(pairing, spec)
    R, C = lattice.rows, lattice.cols
    ix = _LatticeIndexing(R, C, bond_copies=1)
    w_sub = "".join(
        ix.phys[(r, c)][0] + ix.phys[(r, c)][1] for r in range(R) for c in range(C)
    )
    grads = []
    for r in range(R):
        row = []
        for c in range(C):
            operands = [
                lattice.site(rr, cc).data
                for rr in range(R)
                for cc in range(C)
                if (rr, cc) != (r, c)
            ]
            subs = [
                ix.site_sub(rr, cc)
                for rr in range(R)
                for cc in range(C)
                if (rr, cc) != (r, c)
            ]
            operands.append(g_grid)
            subs.append(w_sub)
            for letter in ix.stub_letters(r, c):
                operands.append(np.ones(1))
                subs.append(letter)
            out_sub = ix.site_sub(r, c)
            row.append(
                np.einsum(",".join(subs) + "->" + out_sub, *operands, optimize=True)
            )
        grads.append(row)
    return grads


class TensorizedLinear:
    """Drop-in linear operator backed by a lattice.

    ``chi_forward`` is the truncation used when the lattice is too large for
    exact application; within the oracle budget the map is applied exactly.
    With ``training=True``, forward caches its input so backward can verify
    it is differentiating the same call.
    """

    def __init__(
        self,
        lattice: PepsLattice,
        chi_forward: int,
        training: bool = False,
        oracle_budget: int = DEFAULT_ORACLE_BUDGET,
    ):
        if chi_forward < 1:
            raise ShapeMismatch(f"chi_forward must be >= 1, got {chi_forward}")
        self.lattice = lattice
        self.chi_forward = int(chi_forward)
        self.training = bool(training)
        self.oracle_budget = int(oracle_budget)
        self._cached_x: np.ndarray | None = None

    @property
    def in_dim(self) -> int:
        return self.lattice.spec.orig_in

    @property
    def out_dim(self) -> int:
        return self.lattice.spec.orig_out

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = as_tensor(x).reshape(-1)
        if x.shape[0] != self.in_dim:
            raise ShapeMismatch(f"expected input of length {self.in_dim}, got {x.shape[0]}")
        y = contract_forward(self.lattice, x, self.chi_forward, self.oracle_budget)
        if self.training:
            self._cached_x = x.copy()
        return y

    def backward(self, x: np.ndarray, upstream: np.ndarray):
        """Gradients of ``dot(upstream, forward(x))``.

        Returns ``(grad_x, site_grads)`` where ``site_grads[r][c]`` matches
        the shape of site (r, c).  Requires a prior training-mode forward on
        the same input.
        """
        x = as_tensor(x).reshape(-1)
        upstream = as_tensor(upstream).reshape(-1)
        if upstream.shape[0] != self.out_dim:
            raise ShapeMismatch(
                f"expected upstream of length {self.out_dim}, got {upstream.shape[0]}"
            )
        if not self.training or self._cached_x is None or not np.array_equal(self._cached_x, x):
            raise MissingForwardCache(
                "backward needs forward(x) first with the training flag set"
            )
        grad_x = contract_adjoint(self.lattice, upstream, self.chi_forward, self.oracle_budget)
        if bond_config_count(self.lattice) > self.oracle_budget:
            raise OracleBudgetExceeded(
                "site-gradient environments need exact contraction at this scale"
            )
        grads = site_gradients(self.lattice, np.outer(upstream, x))
        return grad_x, grads

    def as_matrix(self) -> np.ndarray:
        """Materialized (orig_out x orig_in) matrix of the lattice map."""
        spec = self.lattice.spec
        return lattice_matrix(self.lattice)[: spec.orig_out, : spec.orig_in].copy()


def finite_diff_check(layer: TensorizedLinear, x: np.ndarray, epsilon: float) -> float:
    """Worst relative gradient discrepancy under central differences.

    Probe loss is ``dot(forward(x), p)`` for a fixed seeded vector ``p``.
    Every site-tensor element and every input element is perturbed by
    ``+-epsilon``; relative discrepancy uses ``max(1, |analytic|, |numeric|)``
    as the denominator so exact zeros compare at noise level.
    """
    x = as_tensor(x).reshape(-1)
    rng = np.random.default_rng(12345)
    p = rng.uniform(-1.0, 1.0, size=layer.out_dim)

    probe = TensorizedLinear(
        layer.lattice, layer.chi_forward, training=True, oracle_budget=layer.oracle_budget
    )
    probe.forward(x)
    grad_x, site_grads = probe.backward(x, p)

    def loss_with_lattice(lat: PepsLattice) -> float:
        return float(np.dot(contract_forward(lat, x, layer.chi_forward, layer.oracle_budget), p))

    worst = 0.0
    for r in range(layer.lattice.rows):
        for c in range(layer.lattice.cols):
            base = layer.lattice.site(r, c).data
            analytic = site_grads[r][c]
            it = np.nditer(base, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                bumped = base.copy()
                bumped[idx] = base[idx] + epsilon
                plus = loss_with_lattice(layer.lattice.replace_site(r, c, bumped))
                bumped[idx] = base[idx] - epsilon
                minus = loss_with_lattice(layer.lattice.replace_site(r, c, bumped))
                numeric = (plus - minus) / (2.0 * epsilon)
                a = float(analytic[idx])
                worst = max(worst, abs(a - numeric) / max(1.0, abs(a), abs(numeric)))

    def loss_with_x(xv: np.ndarray) -> float:
        return float(np.dot(contract_forward(layer.lattice, xv, layer.chi_forward, layer.oracle_budget), p))

    for j in range(x.shape[0]):
        bumped = x.copy()
        bumped[j] = x[j] + epsilon
        plus = loss_with_x(bumped)
        bumped[j] = x[j] - epsilon
        minus = loss_with_x(bumped)
        numeric = (plus - minus) / (2.0 * epsilon)
        a = float(grad_x[j])
        worst = max(worst, abs(a - numeric) / max(1.0, abs(a), abs(numeric)))
    return worst
