import itertools

import numpy as np
import pytest

from tnzip.errors import ShapeMismatch
from tnzip.gridspec import (
    GridSpec,
    factor_dimension,
    grid_tensor_to_weight,
    make_grid_spec,
    pad_vector,
    weight_to_grid_tensor,
)


def _oracle_factorization(d: int, k: int):
    """Exhaustive-enumeration oracle: smallest padded dim with a balanced split."""
    padded = d
    while True:
        tuples = []
        for combo in itertools.product(range(2, padded + 1), repeat=k):
            if int(np.prod(combo)) == padded and list(combo) == sorted(combo, reverse=True):
                if combo[0] <= 4 * combo[-1]:
                    tuples.append(combo)
        if tuples:
            best = min(tuples, key=lambda f: (f[0] / f[-1], f))
            return padded, list(best)
        padded += 1


@pytest.mark.parametrize(
    "d,k,expected",
    [
        (216, 3, (216, [6, 6, 6])),
        (4096, 2, (4096, [64, 64])),
        (7, 2, (8, [4, 2])),
        (216, 6, (216, [3, 3, 3, 2, 2, 2])),
    ],
)
def test_factor_dimension_frozen_values(d, k, expected):
    assert factor_dimension(d, k) == expected


@pytest.mark.parametrize("d,k", [(216, 3), (7, 2), (12, 2), (30, 3), (17, 2)])
def test_factor_dimension_matches_enumeration_oracle(d, k):
    assert factor_dimension(d, k) == tuple(_oracle_factorization(d, k)) or factor_dimension(
        d, k
    ) == _oracle_factorization(d, k)


def test_factor_dimension_k1_and_d1():
    assert factor_dimension(5, 1) == (5, [5])
    assert factor_dimension(1, 3) == (1, [1, 1, 1])


def test_factor_dimension_monotone_in_d():
    for k in (2, 3):
        previous = 0
        for d in range(1, 70):
            padded, factors = factor_dimension(d, k)
            assert padded >= previous
            assert padded >= d
            assert int(np.prod(factors)) == padded
            previous = padded


def test_factor_dimension_balance_rule():
    for d in range(2, 120):
        _, factors = factor_dimension(d, 2)
        nontrivial = [f for f in factors if f > 1]
        assert max(factors) <= 4 * min(nontrivial)


def test_make_grid_spec_216_on_2x3():
    spec = make_grid_spec(216, 216, 2, 3)
    assert spec.pad_out == spec.pad_in == 216
    assert set(spec.out_factors) == {2, 3}
    assert int(np.prod(spec.out_factors)) == 216
    spec.validate_balance()


def test_weight_to_grid_tensor_1x2_is_relabeling():
    spec = GridSpec(
        rows=1, cols=2, out_factors=(2, 2), in_factors=(2, 2),
        orig_out=4, orig_in=4, pad_out=4, pad_in=4,
    )
    w = np.arange(16.0).reshape(4, 4)
    t = weight_to_grid_tensor(w, spec)
    assert t.shape == (2, 2, 2, 2)
    assert np.array_equal(np.sort(t.reshape(-1)), np.sort(w.reshape(-1)))
    # spot-check the index map: w[o0*2+o1, i0*2+i1] == t[o0, i0, o1, i1]
    for o0, i0, o1, i1 in np.ndindex(2, 2, 2, 2):
        assert t[o0, i0, o1, i1] == w[o0 * 2 + o1, i0 * 2 + i1]


def test_weight_to_grid_tensor_padding_preserves_norm():
    spec = make_grid_spec(7, 4, 1, 2)
    assert spec.pad_out == 8
    w = np.random.default_rng(0).normal(size=(7, 4))
    t = weight_to_grid_tensor(w, spec)
    assert np.sum(t**2) == pytest.approx(np.sum(w**2), rel=0, abs=0)


def test_grid_roundtrip_bit_exact():
    for rows, cols, oo, ii in [(2, 2, 16, 16), (2, 3, 216, 216), (1, 2, 7, 4)]:
        spec = make_grid_spec(oo, ii, rows, cols)
        w = np.random.default_rng(rows * 7 + cols).normal(size=(oo, ii))
        back = grid_tensor_to_weight(weight_to_grid_tensor(w, spec), spec)
        assert np.array_equal(back, w)


def test_grid_tensor_multiset_is_weight_plus_zeros():
    spec = make_grid_spec(7, 4, 1, 2)
    w = np.random.default_rng(3).normal(size=(7, 4))
    t = weight_to_grid_tensor(w, spec)
    values = np.sort(t.reshape(-1))
    expected = np.sort(np.concatenate([w.reshape(-1), np.zeros(t.size - w.size)]))
    assert np.array_equal(values, expected)


def test_weight_to_grid_tensor_shape_mismatch():
    spec = make_grid_spec(16, 16, 2, 2)
    with pytest.raises(ShapeMismatch):
        weight_to_grid_tensor(np.zeros((4, 4)), spec)


def test_pad_vector():
    x = np.arange(3.0)
    out = pad_vector(x, 3, 5)
    assert np.array_equal(out, [0.0, 1.0, 2.0, 0.0, 0.0])
    with pytest.raises(ShapeMismatch):
        pad_vector(x, 4, 5)


def test_grid_spec_dict_roundtrip():
    spec = make_grid_spec(216, 216, 2, 3)
    assert GridSpec.from_dict(spec.to_dict()) == spec
