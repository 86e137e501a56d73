import math

import numpy as np
import pytest

from tnzip.decompose import als_refine, decompose_weight
from tnzip.errors import NonFiniteInput, ShapeMismatch
from tnzip.gridspec import make_grid_spec
from tnzip.lattice import (
    exact_contract_to_dense,
    lattice_matrix,
    parameter_count,
    random_lattice,
    validate_lattice,
)


def _recover_fixture(rows, cols, dim, seed, chi_src=2):
    spec = make_grid_spec(dim, dim, rows, cols)
    src = random_lattice(rows, cols, spec, chi_src, seed=seed)
    return spec, exact_contract_to_dense(src)


def test_construct_then_recover_2x2():
    spec, w = _recover_fixture(2, 2, 16, seed=0)
    lat, rep = decompose_weight(w, spec, chi=8, tol=0.0)
    assert rep.reconstruction_error <= 1e-8
    assert validate_lattice(lat).ok


def test_construct_then_recover_2x3():
    spec, w = _recover_fixture(2, 3, 64, seed=1)
    lat, rep = decompose_weight(w, spec, chi=8, tol=0.0)
    assert rep.reconstruction_error <= 1e-8
    assert validate_lattice(lat).ok


def test_kronecker_fixture_chi1_exact():
    # per-site Kronecker factors make every construction cut rank 1
    rng = np.random.default_rng(2)
    blocks = [rng.uniform(-1, 1, (2, 2)) for _ in range(4)]
    w = blocks[0]
    for b in blocks[1:]:
        w = np.kron(w, b)
    spec = make_grid_spec(16, 16, 2, 2)
    lat, rep = decompose_weight(w, spec, chi=1)
    assert rep.reconstruction_error <= 1e-10
    assert lat.chi_max == 1


def test_error_monotone_in_chi():
    rng = np.random.default_rng(3)
    w = rng.uniform(-1, 1, (16, 16))
    spec = make_grid_spec(16, 16, 2, 2)
    err3 = decompose_weight(w, spec, chi=3)[1].reconstruction_error
    err6 = decompose_weight(w, spec, chi=6)[1].reconstruction_error
    assert err6 <= err3 + 1e-12


def test_exact_when_chi_covers_every_cut_rank():
    rng = np.random.default_rng(4)
    w = rng.uniform(-1, 1, (16, 16))
    spec = make_grid_spec(16, 16, 2, 2)
    lat, rep = decompose_weight(w, spec, chi=256)
    assert rep.reconstruction_error <= 1e-10
    assert np.linalg.norm(lattice_matrix(lat) - w) / np.linalg.norm(w) <= 1e-10


def test_decompose_with_padding_roundtrip_quality():
    spec = make_grid_spec(7, 4, 1, 2)
    w = np.random.default_rng(5).uniform(-1, 1, (7, 4))
    lat, rep = decompose_weight(w, spec, chi=64)
    assert rep.reconstruction_error <= 1e-10
    back = lattice_matrix(lat)[:7, :4]
    assert np.linalg.norm(back - w) / np.linalg.norm(w) <= 1e-10


def test_sum_rule_on_fixtures():
    rng = np.random.default_rng(6)
    spec = make_grid_spec(16, 16, 2, 2)
    for chi in (1, 2, 4, 8):
        w = rng.uniform(-1, 1, (16, 16))
        _, rep = decompose_weight(w, spec, chi=chi)
        kept = math.prod(1.0 - d for d in rep.split_discarded_weights)
        assert 1.0 - rep.reconstruction_error**2 <= kept + 1e-9


def test_split_weights_recorded_in_range():
    spec, w = _recover_fixture(2, 3, 64, seed=7)
    _, rep = decompose_weight(w, spec, chi=2)
    assert len(rep.split_discarded_weights) > 0
    assert all(0.0 <= d <= 1.0 for d in rep.split_discarded_weights)


def test_decompose_validation_errors():
    spec = make_grid_spec(16, 16, 2, 2)
    with pytest.raises(ShapeMismatch):
        decompose_weight(np.zeros((4, 4)), spec, chi=2)
    bad = np.zeros((16, 16))
    bad[0, 0] = np.inf
    with pytest.raises(NonFiniteInput):
        decompose_weight(bad, spec, chi=2)


def test_decompose_deterministic():
    spec, w = _recover_fixture(2, 2, 16, seed=8)
    lat1, rep1 = decompose_weight(w, spec, chi=4)
    lat2, rep2 = decompose_weight(w, spec, chi=4)
    assert rep1.reconstruction_error == rep2.reconstruction_error
    for r in range(2):
        for c in range(2):
            assert np.array_equal(lat1.site(r, c).data, lat2.site(r, c).data)


def test_decompose_compresses_recovered_fixtures():
    for rows, cols, dim in ((2, 2, 16), (2, 3, 64)):
        spec, w = _recover_fixture(rows, cols, dim, seed=9)
        lat, _ = decompose_weight(w, spec, chi=8)
        assert parameter_count(lat) < dim * dim


# ---------------------------------------------------------------------- ALS
def test_als_zero_sweeps_identity():
    spec, w = _recover_fixture(2, 2, 16, seed=10)
    lat, _ = decompose_weight(w, spec, chi=2)
    refined, rep = als_refine(lat, w, sweeps=0)
    assert rep.sweeps == 0
    for r in range(2):
        for c in range(2):
            assert np.array_equal(refined.site(r, c).data, lat.site(r, c).data)


def test_als_keeps_exact_fixture_exact():
    spec, w = _recover_fixture(2, 2, 16, seed=11)
    lat, rep0 = decompose_weight(w, spec, chi=8)
    assert rep0.reconstruction_error <= 1e-8
    refined, rep = als_refine(lat, w, sweeps=5)
    assert rep.reconstruction_error <= 1e-8
    assert validate_lattice(refined).ok


def test_als_error_non_increasing_per_sweep():
    rng = np.random.default_rng(12)
    w = rng.uniform(-1, 1, (16, 16))
    spec = make_grid_spec(16, 16, 2, 2)
    lat, rep0 = decompose_weight(w, spec, chi=2)
    errs = [rep0.reconstruction_error]
    current = lat
    for _ in range(3):
        current, rep = als_refine(current, w, sweeps=1)
        errs.append(rep.reconstruction_error)
    for lo, hi in zip(errs[1:], errs[:-1]):
        assert lo <= hi + 1e-12


def test_als_improves_truncated_fit():
    rng = np.random.default_rng(13)
    w = rng.uniform(-1, 1, (16, 16))
    spec = make_grid_spec(16, 16, 2, 2)
    lat, rep0 = decompose_weight(w, spec, chi=2)
    _, rep = als_refine(lat, w, sweeps=4)
    assert rep.reconstruction_error <= rep0.reconstruction_error


def test_als_early_stop_on_tol():
    spec, w = _recover_fixture(2, 2, 16, seed=14)
    lat, _ = decompose_weight(w, spec, chi=8)  # already exact
    _, rep = als_refine(lat, w, sweeps=10, tol=1e-6)
    assert rep.sweeps == 1  # first sweep improves by ~0, stops immediately
