import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paralab.errors import ConfigurationError, ContractError
from paralab.grid import (
    FREQUENCY,
    INF,
    SPACE,
    IntervalWeight,
    SampledFunction,
    TorusGrid,
    cell_partition,
    cutoff_weight,
    fft_forward,
    fft_inverse,
    from_bytes,
    load_sampled,
    lp_norm,
    random_band_limited,
    rectangle_weight,
    save_sampled,
    to_bytes,
)


def random_function(grid, rng):
    v = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    return SampledFunction(grid, v)


def direct_fourier_coefficients(f):
    """Oracle: f_hat(xi) = L^-d sum_x f(x) exp(-2 pi i x.xi) h^d by explicit sums."""
    g = f.grid
    x, xi = g.coords, g.freqs
    E = np.exp(-2j * np.pi * np.outer(xi, x)) * g.h / g.L
    if g.dims == 1:
        return E @ f.values
    return E @ f.values @ E.T


class TestTorusGrid:
    def test_coordinates_are_centered(self):
        g = TorusGrid(1, 4.0, 8)
        np.testing.assert_array_equal(g.coords, [-2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5])

    def test_frequencies_in_fft_order(self):
        g = TorusGrid(1, 4.0, 8)
        np.testing.assert_allclose(g.freqs, np.array([0, 1, 2, 3, -4, -3, -2, -1]) / 4.0)
        assert g.nyquist == 1.0

    @pytest.mark.parametrize("N", [4, 12, 100])
    def test_rejects_bad_sizes(self, N):
        with pytest.raises(ConfigurationError):
            TorusGrid(2, 1.0, N)

    @pytest.mark.parametrize("kw", [dict(dims=3, L=1.0, N=8), dict(dims=1, L=0.0, N=8),
                                    dict(dims=1, L=math.inf, N=8)])
    def test_rejects_bad_parameters(self, kw):
        with pytest.raises(ConfigurationError):
            TorusGrid(**kw)


class TestSampledFunction:
    def test_values_are_read_only_copies(self):
        g = TorusGrid(1, 1.0, 8)
        raw = np.ones(8)
        f = SampledFunction(g, raw)
        raw[0] = 5
        assert f.values[0] == 1
        with pytest.raises(ValueError):
            f.values[0] = 2

    def test_wrong_size_is_contract_error(self):
        with pytest.raises(ContractError):
            SampledFunction(TorusGrid(1, 1.0, 8), np.ones(7))

    def test_mixing_grids_or_domains_fails(self):
        a = TorusGrid(1, 1.0, 8).zeros()
        b = TorusGrid(1, 2.0, 8).zeros()
        with pytest.raises(ContractError):
            a + b
        with pytest.raises(ContractError):
            a + a.grid.zeros(FREQUENCY)


class TestTransforms:
    @pytest.mark.parametrize("dims,N,L", [(1, 8, 1.0), (1, 16, 3.0), (2, 8, 2.0), (2, 16, 4.0)])
    def test_forward_matches_direct_sum(self, dims, N, L):
        g = TorusGrid(dims, L, N)
        f = random_function(g, np.random.default_rng(N + dims))
        np.testing.assert_allclose(fft_forward(f).values, direct_fourier_coefficients(f), atol=1e-13)

    def test_round_trip_many_inputs(self):
        rng = np.random.default_rng(0)
        worst = 0.0
        for i in range(1000):
            g = TorusGrid(1 + i % 2, 1.0 + i % 3, 8 * 2 ** (i % 4))
            f = random_function(g, rng)
            back = fft_inverse(fft_forward(f)).values
            worst = max(worst, np.abs(back - f.values).max() / np.abs(f.values).max())
        assert worst <= 1e-12

    @pytest.mark.parametrize("N", [8, 16, 32, 64, 128, 256, 512])
    def test_parseval(self, N):
        g = TorusGrid(1, 3.0, N)
        f = random_function(g, np.random.default_rng(N))
        F = fft_forward(f).values
        lhs = np.sum(np.abs(F) ** 2) * g.L
        rhs = np.sum(np.abs(f.values) ** 2) * g.h
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_pure_mode(self):
        g = TorusGrid(1, 2.0, 16)
        f = SampledFunction(g, np.exp(2j * np.pi * 1.5 * g.coords))
        F = fft_forward(f).values
        k = int(np.argmin(np.abs(g.freqs - 1.5)))
        assert F[k] == pytest.approx(1.0, abs=1e-14)
        assert np.abs(np.delete(F, k)).max() < 1e-14

    def test_domain_tags_are_enforced(self):
        f = TorusGrid(1, 1.0, 8).zeros()
        with pytest.raises(ContractError):
            fft_inverse(f)
        with pytest.raises(ContractError):
            fft_forward(fft_forward(f))


class TestLpNorm:
    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 7.0, INF])
    def test_constant(self, p):
        g = TorusGrid(1, 1.0, 16)
        f = SampledFunction(g, np.full(16, -2.5))
        assert lp_norm(f, p) == pytest.approx(2.5, rel=1e-14)

    def test_half_indicator(self):
        g = TorusGrid(1, 1.0, 16)
        f = SampledFunction(g, np.r_[np.full(8, 3.0), np.zeros(8)])
        assert lp_norm(f, 2.0) == pytest.approx(3.0 * 2**-0.5, rel=1e-14)

    def test_matches_direct_sum(self):
        g = TorusGrid(2, 2.0, 16)
        f = random_function(g, np.random.default_rng(3))
        direct = (np.sum(np.abs(f.values) ** 3) * g.h**2) ** (1 / 3)
        assert lp_norm(f, 3.0) == pytest.approx(direct, rel=1e-14)

    def test_infinity_is_the_max(self):
        g = TorusGrid(1, 1.0, 8)
        f = SampledFunction(g, np.arange(8) - 6.0)
        assert lp_norm(f, INF) == 6.0

    def test_quasinorm_requires_opt_in(self):
        f = TorusGrid(1, 1.0, 8).zeros() + SampledFunction(TorusGrid(1, 1.0, 8), np.ones(8))
        with pytest.raises(ValueError):
            lp_norm(f, 1.0)
        assert lp_norm(f, 0.75, quasi=True) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            lp_norm(f, 0.5, quasi=True)

    @settings(max_examples=60, deadline=None)
    @given(
        seed=st.integers(0, 2**32 - 1),
        p=st.floats(1.05, 20.0),
        q=st.one_of(st.floats(1.05, 20.0), st.just(INF)),
    )
    def test_holder(self, seed, p, q):
        g = TorusGrid(2, 2.0, 8)
        rng = np.random.default_rng(seed)
        f, h = random_function(g, rng), random_function(g, rng)
        r = 1.0 / (1.0 / p + (0.0 if q == INF else 1.0 / q))
        assert lp_norm(f * h, r, quasi=True) <= lp_norm(f, p) * lp_norm(h, q) * (1 + 1e-12)


class TestWeights:
    def test_inside_is_one(self):
        w = IntervalWeight.from_endpoints(-1.0, 1.0)
        assert cutoff_weight(w, 0.0) == 1.0
        assert cutoff_weight(w, 1.0) == 1.0

    def test_known_values(self):
        w = IntervalWeight.from_endpoints(-1.0, 1.0)
        assert cutoff_weight(w, 3.0) == 2.0**-100
        assert cutoff_weight(w, 5.0) == pytest.approx(3.0**-100, rel=1e-14)
        assert cutoff_weight(w, -5.0) == pytest.approx(3.0**-100, rel=1e-14)

    def test_rejects_degenerate(self):
        with pytest.raises(ConfigurationError):
            IntervalWeight(0.0, 0.0)
        with pytest.raises(ConfigurationError):
            IntervalWeight(0.0, 1.0, 2.5)

    def test_rectangle_weight_is_tensor(self):
        g = TorusGrid(2, 8.0, 16)
        W = rectangle_weight(g, exponent=3)
        w = cutoff_weight(IntervalWeight(0.0, 2.0, 3), g.coords)
        np.testing.assert_array_equal(W, np.outer(w, w))


class TestCellPartition:
    def test_constant_gives_unit_indicators(self):
        g = TorusGrid(2, 4.0, 16)
        pieces = cell_partition(SampledFunction(g, np.ones(g.shape)))
        assert len(pieces) == 16
        x = g.coords
        for (n, m), p in pieces.items():
            ind = ((x >= n) & (x < n + 1))[:, None] & ((x >= m) & (x < m + 1))[None, :]
            np.testing.assert_array_equal(p.values, ind.astype(complex))

    def test_sum_is_bit_exact_and_disjoint(self):
        g = TorusGrid(2, 4.0, 32)
        f = random_function(g, np.random.default_rng(1))
        pieces = list(cell_partition(f).values())
        np.testing.assert_array_equal(sum(p.values for p in pieces), f.values)
        support = sum((p.values != 0).astype(int) for p in pieces)
        assert support.max() == 1

    def test_single_cell_support(self):
        g = TorusGrid(2, 4.0, 16)
        x = g.coords
        inside = ((x >= 0) & (x < 1))
        f = SampledFunction(g, np.outer(inside, inside).astype(float))
        nonzero = [k for k, p in cell_partition(f).items() if np.any(p.values)]
        assert nonzero == [(0, 0)]

    def test_non_integer_period(self):
        with pytest.raises(ConfigurationError):
            cell_partition(TorusGrid(1, 2.5, 8).zeros())


class TestRandomFields:
    def test_band_limit_and_seed(self):
        g = TorusGrid(1, 4.0, 64)
        f = random_band_limited(g, np.random.default_rng(7), 2.0)
        F = fft_forward(f).values
        assert np.abs(F[np.abs(g.freqs) > 2.0]).max() < 1e-14
        again = random_band_limited(g, np.random.default_rng(7), 2.0)
        np.testing.assert_array_equal(f.values, again.values)

    def test_same_function_on_refined_grid(self):
        coarse = random_band_limited(TorusGrid(2, 4.0, 32), np.random.default_rng(2), 2.0)
        fine = random_band_limited(TorusGrid(2, 4.0, 64), np.random.default_rng(2), 2.0)
        np.testing.assert_allclose(fine.values[::2, ::2], coarse.values, atol=1e-12)

    def test_band_at_nyquist_is_rejected(self):
        with pytest.raises(ConfigurationError):
            random_band_limited(TorusGrid(1, 1.0, 8), np.random.default_rng(0), 4.0)


class TestSerialization:
    def test_header_layout(self):
        g = TorusGrid(2, 3.5, 8)
        f = random_function(g, np.random.default_rng(0))
        data = to_bytes(f)
        assert struct.unpack_from("<qqdB", data) == (2, 8, 3.5, 0)
        body = np.frombuffer(data[struct.calcsize("<qqdB"):], dtype="<f8")
        np.testing.assert_array_equal(body[0::2], f.values.real.ravel())
        np.testing.assert_array_equal(body[1::2], f.values.imag.ravel())

    def test_round_trip(self, tmp_path):
        g = TorusGrid(1, 2.0, 16)
        F = fft_forward(random_function(g, np.random.default_rng(4)))
        save_sampled(F, tmp_path / "f.bin")
        back = load_sampled(tmp_path / "f.bin")
        assert back.grid == g and back.domain == FREQUENCY
        np.testing.assert_array_equal(back.values, F.values)
        assert from_bytes(to_bytes(back)).domain == FREQUENCY

    def test_truncated_payload(self):
        data = to_bytes(TorusGrid(1, 1.0, 8).zeros(SPACE))
        with pytest.raises(ContractError):
            from_bytes(data[:-16])
