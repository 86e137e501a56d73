"""Scikit-learn style wrappers around the compressors.

Each estimator fits a compressed model OF a weight matrix: ``fit(W)`` learns
the factorization, ``transform(X)`` pushes row vectors through the compressed
linear map (``X @ W_hat.T``), and ``reconstruct()`` returns the dense
approximation.  ``get_params``/``set_params``/``clone`` behave as usual, so
the compressors drop into pipelines and grid searches.
"""
from __future__ import annotations

import time

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils import check_array

from .bench import _forward_agreement, _report, quant_baseline, svd_baseline
from .decompose import als_refine, decompose_weight
from .gridspec import make_grid_spec
from .lattice import DEFAULT_ORACLE_BUDGET, lattice_matrix, parameter_count


def _check_weight(w) -> np.ndarray:
    return check_array(w, dtype=np.float64, ensure_2d=True)


class LatticeCompressor(TransformerMixin, BaseEstimator):
    """Compress a weight matrix onto a grid tensor network.

    Parameters mirror the functional pipeline: grid shape, bond dimension,
    singular-value cutoff, and optional refinement sweeps.  After ``fit`` the
    lattice is available as ``lattice_`` and the accounting as ``report_``.
    """

    def __init__(
        self,
        grid_rows: int = 2,
        grid_cols: int = 2,
        chi: int = 8,
        tol: float = 0.0,
        als_sweeps: int = 0,
        oracle_budget: int = DEFAULT_ORACLE_BUDGET,
    ):
        self.grid_rows = grid_rows
        self.grid_cols = grid_cols
        self.chi = chi
        self.tol = tol
        self.als_sweeps = als_sweeps
        self.oracle_budget = oracle_budget

    def fit(self, W, y=None):
        W = _check_weight(W)
        start = time.perf_counter()
        spec = make_grid_spec(W.shape[0], W.shape[1], self.grid_rows, self.grid_cols)
        lattice, report = decompose_weight(W, spec, self.chi, self.tol, self.oracle_budget)
        if self.als_sweeps > 0:
            lattice, report = als_refine(lattice, W, self.als_sweeps, self.tol, self.oracle_budget)
        self.spec_ = spec
        self.lattice_ = lattice
        self.decompose_report_ = report
        self.n_params_ = parameter_count(lattice)
        w_hat = self.reconstruct()
        self.report_ = _report(
            method=f"lattice-chi-{self.chi}",
            original_params=W.size,
            compressed_params=self.n_params_,
            bytes_per_orig=8.0,
            bytes_per_comp=8.0,
            reconstruction_error=report.reconstruction_error,
            forward_agreement_error=_forward_agreement(W, w_hat),
            wall_time_s=time.perf_counter() - start,
        )
        return self

    def _fitted_matrix(self) -> np.ndarray:
        if not hasattr(self, "lattice_"):
            raise NotFittedError("LatticeCompressor must be fitted before use")
        spec = self.lattice_.spec
        return lattice_matrix(self.lattice_)[: spec.orig_out, : spec.orig_in]

    def reconstruct(self) -> np.ndarray:
        """Dense approximation of the fitted matrix (padding cropped)."""
        return self._fitted_matrix()

    def transform(self, X) -> np.ndarray:
        """Apply the compressed map to each row of X."""
        m = self._fitted_matrix()
        X = check_array(X, dtype=np.float64, ensure_2d=True)
        if X.shape[1] != m.shape[1]:
            raise ValueError(f"X has {X.shape[1]} features, the fitted map expects {m.shape[1]}")
        return X @ m.T


class SvdCompressor(TransformerMixin, BaseEstimator):
    """Rank-``rank`` truncated-SVD baseline with the same surface."""

    def __init__(self, rank: int = 8):
        self.rank = rank

    def fit(self, W, y=None):
        W = _check_weight(W)
        (u, s, v), report = svd_baseline(W, self.rank)
        self.u_, self.s_, self.v_ = u, s, v
        self.report_ = report
        self.n_params_ = report.compressed_params
        return self

    def reconstruct(self) -> np.ndarray:
        if not hasattr(self, "u_"):
            raise NotFittedError("SvdCompressor must be fitted before use")
        return self.u_ @ (self.s_[:, None] * self.v_)

    def transform(self, X) -> np.ndarray:
        m = self.reconstruct()
        X = check_array(X, dtype=np.float64, ensure_2d=True)
        if X.shape[1] != m.shape[1]:
            raise ValueError(f"X has {X.shape[1]} features, the fitted map expects {m.shape[1]}")
        return X @ m.T


class QuantCompressor(TransformerMixin, BaseEstimator):
    """Simulated symmetric quantization baseline (8 or 4 bits)."""

    def __init__(self, bits: int = 8):
        self.bits = bits

    def fit(self, W, y=None):
        W = _check_weight(W)
        packed, report = quant_baseline(W, self.bits)
        self.q_ = packed["q"]
        self.scale_ = packed["scale"]
        self.report_ = report
        return self

    def reconstruct(self) -> np.ndarray:
        if not hasattr(self, "q_"):
            raise NotFittedError("QuantCompressor must be fitted before use")
        return self.q_ * self.scale_

    def transform(self, X) -> np.ndarray:
        m = self.reconstruct()
        X = check_array(X, dtype=np.float64, ensure_2d=True)
        if X.shape[1] != m.shape[1]:
            raise ValueError(f"X has {X.shape[1]} features, the fitted map expects {m.shape[1]}")
        return X @ m.T
