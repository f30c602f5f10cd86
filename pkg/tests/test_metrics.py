"""Accuracy metric formulas against hand computations and fsum recomputation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpattn.metrics import DegenerateMetricsError, compare

from oracles import metrics_ref


class TestHandComputedCases:
    def test_identity(self):
        o = np.array([1.0, -2.0, 3.0])
        m = compare(o, o.copy())
        assert m.cossim == 1.0 and m.l1 == 0.0 and m.rmse == 0.0

    def test_negation_single_element(self):
        m = compare(np.array([1.0]), np.array([-1.0]))
        assert m.cossim == -1.0 and m.l1 == 2.0 and m.rmse == 2.0

    def test_three_four_case(self):
        m = compare(np.array([3.0, 4.0]), np.array([3.0, 0.0]))
        assert m.cossim == pytest.approx(0.6, rel=1e-15)
        assert m.l1 == pytest.approx(4.0 / 7.0, rel=1e-15)
        assert m.rmse == pytest.approx(math.sqrt(8.0), rel=1e-15)

    def test_positive_scaling(self):
        rng = np.random.Generator(np.random.Philox(50))
        o = rng.normal(size=(4, 6))
        for c in (0.5, 2.0, 7.25):
            m = compare(o, c * o)
            assert m.cossim == pytest.approx(1.0, abs=1e-14)
            assert m.l1 == pytest.approx(abs(1 - c), rel=1e-12)
            expected_rmse = abs(1 - c) * math.sqrt((o**2).mean())
            assert m.rmse == pytest.approx(expected_rmse, rel=1e-12)


class TestProperties:
    def test_permutation_invariance(self):
        # mathematically exact; numerically only up to summation order,
        # hence the ulp-level tolerance
        rng = np.random.Generator(np.random.Philox(51))
        a = rng.normal(size=40)
        b = a + rng.normal(size=40) * 0.1
        perm = rng.permutation(40)
        m1, m2 = compare(a, b), compare(a[perm], b[perm])
        assert m1.cossim == pytest.approx(m2.cossim, rel=1e-13)
        assert m1.l1 == pytest.approx(m2.l1, rel=1e-13)
        assert m1.rmse == pytest.approx(m2.rmse, rel=1e-13)

    def test_shape_is_flattened(self):
        rng = np.random.Generator(np.random.Philox(52))
        a = rng.normal(size=(2, 3, 4))
        b = a + 0.01
        m1, m2 = compare(a, b), compare(a.ravel(), b.ravel())
        assert (m1.cossim, m1.l1, m1.rmse) == (m2.cossim, m2.l1, m2.rmse)

    @given(st.integers(min_value=2, max_value=60), st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_matches_fsum_recomputation(self, n, seed):
        rng = np.random.Generator(np.random.Philox(seed))
        a = rng.normal(size=n) * 10
        b = a + rng.normal(size=n)
        m = compare(a, b)
        cossim, l1, rmse = metrics_ref(a, b)
        assert m.cossim == pytest.approx(cossim, rel=1e-12)
        assert m.l1 == pytest.approx(l1, rel=1e-12)
        assert m.rmse == pytest.approx(rmse, rel=1e-12)

    def test_cossim_bounded(self):
        rng = np.random.Generator(np.random.Philox(53))
        for _ in range(50):
            a, b = rng.normal(size=16), rng.normal(size=16)
            assert -1.0 - 1e-12 <= compare(a, b).cossim <= 1.0 + 1e-12


class TestErrors:
    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            compare(np.ones(3), np.ones(4))

    def test_zero_reference(self):
        with pytest.raises(DegenerateMetricsError):
            compare(np.zeros(4), np.ones(4))

    def test_zero_test_tensor(self):
        with pytest.raises(DegenerateMetricsError):
            compare(np.ones(4), np.zeros(4))

    def test_empty(self):
        with pytest.raises(ValueError):
            compare(np.ones(0), np.ones(0))
