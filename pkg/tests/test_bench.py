import numpy as np
import pytest

from tnzip.bench import (
    entanglement_profile,
    quant_baseline,
    run_table1_suite,
    run_trg_oracle_suite,
    solve_mixed_fraction,
    svd_baseline,
    table1_accounting,
)
from tnzip.errors import UnknownDtype
from tnzip.gridspec import make_grid_spec

GB = 1e9


# ------------------------------------------------------------ svd baseline --
def test_svd_baseline_full_rank_diag_is_exact():
    _, rep = svd_baseline(np.diag([3.0, 2.0, 1.0, 0.0]), rank=3)
    assert rep.reconstruction_error <= 1e-12


def test_svd_baseline_error_matches_full_spectrum():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(16, 16))
    sigma = np.linalg.svd(w, compute_uv=False)
    _, rep = svd_baseline(w, rank=4)
    expect = np.sqrt(np.sum(sigma[4:] ** 2)) / np.linalg.norm(w)
    assert abs(rep.reconstruction_error - expect) <= 1e-12


def test_svd_baseline_no_compression_flagged():
    rng = np.random.default_rng(1)
    w = rng.normal(size=(8, 8))
    _, rep = svd_baseline(w, rank=8)
    assert rep.compression_percent <= 0.0
    assert "no_compression" in rep.flags


def test_svd_baseline_param_accounting():
    rng = np.random.default_rng(2)
    w = rng.normal(size=(10, 6))
    _, rep = svd_baseline(w, rank=3)
    assert rep.compressed_params == 3 * (10 + 6 + 1)
    assert rep.original_params == 60


# ---------------------------------------------------------- quant baseline --
def test_quant_byte_accounting_against_reference_sizes():
    _, rep8 = quant_baseline(np.ones((2, 2)), 8)
    # 6.74e9 params at one byte each vs the published 6.8 GB
    bytes8 = 6.74e9 * (rep8.compressed_bytes / rep8.compressed_params)
    assert abs(bytes8 / GB - 6.8) / 6.8 <= 0.01
    _, rep4 = quant_baseline(np.ones((2, 2)), 4)
    bytes4 = 6.74e9 * (rep4.compressed_bytes / rep4.compressed_params)
    assert abs(bytes4 / GB - 3.4) / 3.4 <= 0.01


def test_quant_zero_matrix_zero_error():
    _, rep = quant_baseline(np.zeros((4, 4)), 8)
    assert rep.reconstruction_error == 0.0


def test_quant_error_decreases_with_bits():
    rng = np.random.default_rng(3)
    for seed in range(3):
        w = np.random.default_rng(seed).normal(size=(12, 12))
        _, r8 = quant_baseline(w, 8)
        _, r4 = quant_baseline(w, 4)
        assert r8.reconstruction_error <= r4.reconstruction_error


def test_quant_round_half_to_even():
    # scale is 1 for amax=127 with 8 bits; 0.5 and 1.5 both round to even
    w = np.array([[0.5, 1.5, 127.0, -0.5]])
    packed, _ = quant_baseline(w, 8)
    assert packed["scale"] == 1.0
    assert np.array_equal(packed["q"], [[0.0, 2.0, 127.0, -0.0]])


def test_quant_rejects_other_bit_widths():
    with pytest.raises(UnknownDtype):
        quant_baseline(np.ones((2, 2)), 16)


# -------------------------------------------------------------- accounting --
def test_table1_accounting_f32():
    assert abs(table1_accounting(6.74e9, "f32") / GB - 27.1) / 27.1 <= 0.01


def test_table1_accounting_f16():
    assert abs(table1_accounting(2.1e9, "f16") / GB - 4.1) / 4.1 <= 0.03


def test_table1_accounting_mixed_solves_split():
    f = solve_mixed_fraction(2.1e9, 2.1 * GB)
    assert f == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert table1_accounting(2.1e9, "mixed", f) == pytest.approx(2.1 * GB, rel=1e-12)


def test_table1_accounting_unknown_dtype():
    with pytest.raises(UnknownDtype):
        table1_accounting(1e9, "f64")
    with pytest.raises(UnknownDtype):
        table1_accounting(1e9, "mixed")  # fraction required


def test_table1_suite_rows_all_ok():
    suite = run_table1_suite()
    assert all(row["ok"] for row in suite["rows"])
    assert abs(suite["memory_reduction_percent_vs_reference"] - 92.25) <= 0.01
    assert abs(suite["memory_reduction_percent_vs_reference"] - 93.0) <= 1.0
    assert abs(suite["memory_reduction_percent_computed"] - 93.0) <= 1.0
    assert suite["parameter_reduction_percent"] == pytest.approx(70.0, abs=1e-9)


# -------------------------------------------------------------- entropy ----
def test_entropy_rank_one_matrix_zero_on_matrix_cut():
    rng = np.random.default_rng(4)
    w = np.outer(rng.normal(size=16), rng.normal(size=16))
    spec = make_grid_spec(16, 16, 2, 2)
    entry = entanglement_profile(w, spec)[0]
    assert entry.cut == "rows|cols"
    assert entry.entropy <= 1e-10
    assert entry.effective_rank == pytest.approx(1.0, abs=1e-9)


def test_entropy_product_operator_zero_on_every_cut():
    # a Kronecker product of rank-1 site blocks is unentangled across every
    # cut: each grid-cut matricization and the matrix itself are rank 1
    rng = np.random.default_rng(14)
    w = np.array([[1.0]])
    for _ in range(4):
        block = np.outer(rng.normal(size=2), rng.normal(size=2))
        w = np.kron(w, block)
    spec = make_grid_spec(16, 16, 2, 2)
    for entry in entanglement_profile(w, spec):
        assert entry.entropy <= 1e-10
        assert entry.effective_rank == pytest.approx(1.0, abs=1e-9)


def test_entropy_identity_flat_spectrum():
    spec = make_grid_spec(16, 16, 2, 2)
    profile = entanglement_profile(np.eye(16), spec)
    matrix_cut = profile[0]
    assert matrix_cut.cut == "rows|cols"
    assert matrix_cut.entropy == pytest.approx(np.log(16), rel=1e-12)
    assert matrix_cut.effective_rank == pytest.approx(16.0, rel=1e-10)


def test_entropy_matches_eigen_oracle():
    rng = np.random.default_rng(5)
    w = rng.normal(size=(8, 8))
    spec = make_grid_spec(8, 8, 1, 2)
    profile = entanglement_profile(w, spec)
    lam = np.linalg.eigvalsh(w @ w.T)  # independent eigen route
    lam = np.clip(lam, 0.0, None)
    p = lam / lam.sum()
    p = p[p > 0]
    expect = float(-np.sum(p * np.log(p)))
    assert abs(profile[0].entropy - expect) <= 1e-10


def test_entropy_profile_lists_grid_cuts():
    spec = make_grid_spec(16, 16, 2, 2)
    profile = entanglement_profile(np.eye(16), spec)
    cuts = [p.cut for p in profile]
    assert cuts == ["rows|cols", "rows 0..0|1..1", "cols 0..0|1..1"]


# ----------------------------------------------------------------- suites --
def test_trg_oracle_suite_counts_and_errors():
    suite = run_trg_oracle_suite(seed=0, n_small=3, n_large=1)
    grids = [tuple(case["grid"]) for case in suite["cases"]]
    assert grids.count((2, 2)) == 3
    assert grids.count((4, 4)) == 1
    assert suite["worst_relative_error"] <= 1e-8


def test_trg_oracle_suite_thread_count_invariant():
    a = run_trg_oracle_suite(seed=0, n_small=3, n_large=1, threads=1)
    b = run_trg_oracle_suite(seed=0, n_small=3, n_large=1, threads=4)
    assert a == b
