from fractions import Fraction

import numpy as np
import pytest

import biascorr as bc
from biascorr.errors import (
    DataError,
    InsufficientDataError,
    NonFiniteError,
    ShapeMismatchError,
)


class TestCompensatedSum:
    def test_million_tenths(self):
        # naive float32 accumulation is off by ~0.03 here; the compensated
        # sum must be the correctly rounded value of the exact rational sum
        values = [0.1] * 10**6
        result = bc.compensated_sum(values)
        exact = Fraction(0.1) * 10**6
        assert result == float(exact)
        assert abs(result - 100000.0) <= 1e-9

    def test_matches_exact_rational_oracle(self):
        rng = np.random.default_rng(123)
        for _ in range(20):
            vals = rng.standard_normal(int(rng.integers(1, 500))) * 10.0 ** rng.integers(-3, 4)
            result = bc.compensated_sum(vals)
            exact = sum(Fraction(float(v)) for v in vals)
            assert result == pytest.approx(float(exact), rel=1e-15, abs=1e-300)

    def test_order_invariant_exactly(self):
        rng = np.random.default_rng(7)
        vals = rng.standard_normal(1000) * 10.0 ** rng.integers(-8, 8, 1000)
        base = bc.compensated_sum(vals)
        for seed in range(5):
            shuffled = np.random.default_rng(seed).permutation(vals)
            assert bc.compensated_sum(shuffled) == base

    def test_empty_is_zero(self):
        assert bc.compensated_sum([]) == 0.0

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_rejects_nonfinite_with_index(self, bad):
        vals = [1.0, 2.0, bad, 4.0]
        with pytest.raises(NonFiniteError) as err:
            bc.compensated_sum(vals)
        assert err.value.index == 2

    def test_mean(self):
        assert bc.compensated_mean([1.0, 2.0, 3.0]) == 2.0
        with pytest.raises(InsufficientDataError):
            bc.compensated_mean([])


class TestDataset:
    def test_dtypes_and_names(self):
        ds = bc.Dataset([[1.0, 2.0], [3.0, 4.0]], [1.0, 2.0])
        assert ds.features.dtype == np.float32
        assert ds.targets.dtype == np.float64
        assert ds.feature_names == ("x0", "x1")
        assert ds.n_points == 2 and ds.n_features == 2

    def test_immutable(self):
        ds = bc.Dataset([[1.0], [2.0]], [1.0, 2.0])
        with pytest.raises(ValueError):
            ds.features[0, 0] = 9.0
        with pytest.raises(ValueError):
            ds.targets[0] = 9.0

    def test_does_not_alias_caller_arrays(self):
        x = np.ones((3, 2), dtype=np.float32)
        y = np.ones(3)
        ds = bc.Dataset(x, y)
        x[0, 0] = 5.0
        y[0] = 5.0
        assert ds.features[0, 0] == 1.0
        assert ds.targets[0] == 1.0

    def test_random_corruption_is_rejected(self):
        rng = np.random.default_rng(99)
        for _ in range(25):
            n, f = int(rng.integers(2, 30)), int(rng.integers(1, 5))
            x = rng.standard_normal((n, f))
            y = rng.standard_normal(n)
            if rng.random() < 0.5:
                x[rng.integers(n), rng.integers(f)] = rng.choice([np.nan, np.inf])
            else:
                y[rng.integers(n)] = rng.choice([np.nan, -np.inf])
            with pytest.raises(NonFiniteError):
                bc.Dataset(x, y)

    def test_shape_errors(self):
        with pytest.raises(ShapeMismatchError):
            bc.Dataset([1.0, 2.0], [1.0, 2.0])  # 1-D features
        with pytest.raises(ShapeMismatchError):
            bc.Dataset([[1.0], [2.0]], [1.0, 2.0, 3.0])
        with pytest.raises(ShapeMismatchError):
            bc.Dataset([[1.0], [2.0]], [1.0, 2.0], feature_names=("a", "b"))

    def test_float32_overflow_caught(self):
        # 1e300 is finite in float64 but infinite after the float32 cast
        with pytest.raises(NonFiniteError):
            bc.Dataset([[1e300], [1.0]], [1.0, 2.0])

    def test_subset_preserves_order_and_names(self):
        ds = bc.Dataset([[i, 2 * i] for i in range(5)], list(range(5)),
                        feature_names=("a", "b"))
        sub = ds.subset([3, 1])
        assert sub.feature_names == ("a", "b")
        np.testing.assert_array_equal(sub.targets, [3.0, 1.0])


class TestSplitIndices:
    def test_accepts_partition(self):
        s = bc.SplitIndices(train=[2, 0], val=[3], test=[1, 4], seed=7)
        assert s.n_total == 5
        assert s.seed == 7

    @pytest.mark.parametrize("train,val,test", [
        ([0, 1], [1], [2]),      # overlap
        ([0], [1], [3]),         # hole
        ([0, 0], [1], [2]),      # duplicate
    ])
    def test_rejects_non_partition(self, train, val, test):
        with pytest.raises(DataError):
            bc.SplitIndices(train=train, val=val, test=test, seed=0)

    def test_seed_range(self):
        with pytest.raises(DataError):
            bc.SplitIndices(train=[0], val=[1], test=[2], seed=-1)
        with pytest.raises(DataError):
            bc.SplitIndices(train=[0], val=[1], test=[2], seed=2**64)


class TestEvalReport:
    def test_validation(self):
        r = bc.EvalReport(mse=1.0, r2=0.5, delta_abs=2.0, delta_rel=0.1,
                          rse=1.5, n=10)
        assert r.to_dict()["n"] == 10
        with pytest.raises(DataError):
            bc.EvalReport(mse=-1.0, r2=0.5, delta_abs=2.0, delta_rel=0.1,
                          rse=1.5, n=10)
        with pytest.raises(InsufficientDataError):
            bc.EvalReport(mse=1.0, r2=0.5, delta_abs=2.0, delta_rel=0.1,
                          rse=1.5, n=0)
        with pytest.raises(NonFiniteError):
            bc.EvalReport(mse=np.nan, r2=0.5, delta_abs=2.0, delta_rel=0.1,
                          rse=1.5, n=10)

    def test_dict_round_trip(self):
        r = bc.EvalReport(mse=1.25, r2=-0.5, delta_abs=0.0, delta_rel=0.0,
                          rse=-3.75, n=4)
        assert bc.EvalReport.from_dict(r.to_dict()) == r


class TestBiasCorrection:
    def test_round_trip_is_exact(self):
        c = bc.BiasCorrection(delta_b=0.1 + 1e-17, n_calibration=3,
                              source_tag="train+val")
        c2 = bc.BiasCorrection.from_dict(c.to_dict())
        assert c2.delta_b == c.delta_b
        assert c2 == c

    def test_validation(self):
        with pytest.raises(NonFiniteError):
            bc.BiasCorrection(delta_b=np.inf, n_calibration=5)
        with pytest.raises(InsufficientDataError):
            bc.BiasCorrection(delta_b=0.0, n_calibration=0)
