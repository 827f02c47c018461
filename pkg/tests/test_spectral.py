import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ghostbench.bandop import BandOperator, identity, laplacian, op_norm
from ghostbench.coarse_space import build_space
from ghostbench.generators import cycle_edges, generate_sequence
from ghostbench.spectral import (
    DegreeCapReached,
    SizeCapExceeded,
    SpectralFilter,
    SpectrumOutsideDomain,
    apply_filter,
    design_filter,
    eig_dense,
    exact_filter_small,
    indicator_at,
    lambda_min_compressed,
)


def cycle(n):
    return build_space(cycle_edges(n), n)


PAIR = build_space([(0, 1)], 2)


class TestEig:
    def test_examples(self):
        np.testing.assert_allclose(eig_dense(laplacian(PAIR, 1))[0], [0, 2], atol=1e-12)
        np.testing.assert_allclose(eig_dense(laplacian(cycle(4), 1))[0], [0, 2, 2, 4], atol=1e-12)
        np.testing.assert_allclose(eig_dense(identity(cycle(5)))[0], np.ones(5))

    def test_cap(self):
        with pytest.raises(SizeCapExceeded):
            eig_dense(identity(cycle(2049)))

    def test_compressed(self):
        L = laplacian(cycle(6), 1)
        assert lambda_min_compressed(L, [0]) == 2
        assert lambda_min_compressed(L, [0, 1, 2]) == pytest.approx(2 - math.sqrt(2))
        assert lambda_min_compressed(L, range(6)) == pytest.approx(0, abs=1e-12)


class TestFilter:
    def test_shapes(self):
        low = SpectralFilter("low_bump", 1.0, (0, 4))
        assert low(0.0) == 1 and low(0.5) == 0 and low(-1e-16) == 1
        assert 0 < low(0.25) < 1
        high = SpectralFilter("high_bump", 0.5, (0, 1))
        assert high(1.0) == 1 and high(0.75) == 0 and high(1 + 1e-16) == 1

    @given(st.floats(0.01, 0.99), st.floats(0, 1))
    def test_range_and_monotone(self, kappa, t):
        for kind in ("low_bump", "high_bump"):
            f = SpectralFilter(kind, kappa, (0, 1))
            assert 0 <= f(t) <= 1
        low = SpectralFilter("low_bump", kappa, (0, 1))
        assert low(t) >= low(min(1.0, t + 0.01))

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            SpectralFilter("band", 0.5, (0, 1))
        with pytest.raises(ValueError):
            SpectralFilter("high_bump", 1.0, (0, 1))


class TestDesign:
    def test_constant(self):
        a = design_filter(lambda t: np.ones_like(t), eps=0.1, domain=(0, 3))
        assert a.degree == 0 and a.eps == 0

    def test_linear(self):
        a = design_filter(lambda t: t, eps=1e-3, domain=(0, 5))
        assert a.degree == 1 and a.eps <= 1e-12

    def test_low_bump_search(self):
        f = SpectralFilter("low_bump", 1.0, (0, 4))
        a = design_filter(f, eps=0.01)
        assert a.eps <= 0.01
        assert a(0.0) == pytest.approx(1, abs=1e-12)
        if a.degree > 1:
            assert design_filter(f, degree=a.degree // 2).eps > 0.01

    def test_cap(self):
        with pytest.raises(DegreeCapReached):
            design_filter(SpectralFilter("low_bump", 0.01, (0, 4)), eps=1e-3, max_degree=64)

    def test_exactly_one_target(self):
        with pytest.raises(ValueError):
            design_filter(lambda t: t, domain=(0, 1))


class TestApply:
    def test_degree_zero_and_linear(self):
        L = laplacian(cycle(6), 1)
        one = design_filter(lambda t: np.ones_like(t), degree=0, domain=(0, 4))
        np.testing.assert_allclose(apply_filter(one, L).toarray(), np.eye(6), atol=1e-14)
        lin = design_filter(lambda t: t, degree=1, domain=(0, 4))
        np.testing.assert_allclose(apply_filter(lin, L).toarray(), L.toarray(), atol=1e-12)

    def test_c4_averaging(self):
        L = laplacian(cycle(4), 1)
        f = SpectralFilter("low_bump", 1.9, (0, 4))
        exact = exact_filter_small(f, L).toarray()
        np.testing.assert_allclose(exact, np.full((4, 4), 0.25), atol=1e-12)
        a = design_filter(f, eps=0.01)
        assert np.abs(apply_filter(a, L).toarray() - exact).max() <= 0.01

    def test_propagation_bound(self):
        L = laplacian(cycle(40), 1)
        a = design_filter(SpectralFilter("low_bump", 1.0, (0, 4)), degree=7)
        assert apply_filter(a, L).propagation <= 7

    def test_outside_domain(self):
        a = design_filter(lambda t: t, degree=1, domain=(0, 1))
        with pytest.raises(SpectrumOutsideDomain):
            apply_filter(a, laplacian(cycle(4), 1))

    @pytest.mark.parametrize("seed", range(3))
    def test_spectral_bound(self, seed):
        box = generate_sequence("random_regular", [20, 40], seed, d=3)
        L = laplacian(box, 1)
        m = op_norm(L)
        f = SpectralFilter("low_bump", 0.5, (0, m))
        a = design_filter(f, eps=0.05)
        diff = BandOperator(box, apply_filter(a, L).matrix - exact_filter_small(f, L).matrix)
        assert op_norm(diff) <= a.eps + 1e-9


class TestExact:
    def test_indicator_identity(self):
        I = identity(cycle(5))
        np.testing.assert_array_equal(exact_filter_small(indicator_at(1.0), I).toarray(), np.eye(5))

    def test_high_bump_keeps_top(self):
        c = cycle(6)
        P = BandOperator.from_dense(c, np.full((6, 6), 1 / 6))
        out = exact_filter_small(SpectralFilter("high_bump", 0.5, (0, 1)), P)
        assert np.linalg.eigvalsh(out.toarray())[-1] == pytest.approx(1)
