import itertools

import numpy as np
import pytest

from paralab.errors import ConfigurationError, ContractError, ScaleRangeError
from paralab.filterbank import FilterBank, lp_project
from paralab.grid import SampledFunction, TorusGrid, random_band_limited
from paralab.operators import LocalizationPartition, eval_multiplier, masked_symbol
from paralab.paraproducts import (
    LACUNARY,
    NEITHER,
    NONLACUNARY,
    PIPELINE_LACUNARITY,
    SPLIT_NAMES,
    DiscreteParaproductSpec,
    DyadicInterval,
    DyadicRectangle,
    adaptation_constants,
    classify_lacunarity,
    enumerate_intervals,
    enumerate_rectangles,
    eval_discrete_paraproduct,
    paraproduct_from_pipeline,
    pipeline_approximation,
    rectangle_category,
    spec_from_text,
    spec_to_text,
    split_four_terms,
    standard_family,
    sum_split,
)
from paralab.symbols import builtin_symbols

CAT = builtin_symbols()


def fams(*axes):
    return tuple(tuple(standard_family(n) for n in names) for names in axes)


LH_HL = fams(("phi_tilde", "psi", "psi_prime"), ("psi", "phi_tilde", "psi_prime"))


def inner(f, phi, h):
    """Oracle: <f, phi> = sum f conj(phi) h^d."""
    return np.sum(f * np.conj(phi)) * h


def line_bank(L, N):
    return FilterBank(TorusGrid(1, L, N))


@pytest.fixture(scope="module")
def grid2():
    return TorusGrid(2, 4.0, 128)


@pytest.fixture(scope="module")
def inputs(grid2):
    rng = np.random.default_rng(0)
    return random_band_limited(grid2, rng, 3.0), random_band_limited(grid2, rng, 3.0)


class TestDyadic:
    def test_interval_geometry(self):
        I = DyadicInterval(2, -3)
        assert (I.length, I.left, I.right, I.center) == (0.25, -0.75, -0.5, -0.625)
        assert I.distance(0.0, 1.0) == 0.5
        assert I.distance(-1.0, 1.0) == 0.0

    def test_rejects_long_intervals(self):
        with pytest.raises(ConfigurationError):
            DyadicInterval(-1, 0)

    def test_rectangle_area(self):
        R = DyadicRectangle(DyadicInterval(1, 0), DyadicInterval(3, 5))
        assert R.area == 0.5 * 0.125

    def test_enumeration(self):
        ivs = enumerate_intervals([0, 2], (-1.0, 1.0))
        assert len(ivs) == 2 + 8
        assert all(-1.0 <= I.left and I.right <= 1.0 for I in ivs)
        assert len(enumerate_rectangles([0], [1], (-2, 2), (0, 1))) == 4 * 2


class TestBumpFamilies:
    @pytest.mark.parametrize("name,scales", [("psi", (0, 1, 3)), ("phi", (0, 2)),
                                             ("phi_tilde", (1, 3)), ("psi_prime", (0, 2))])
    def test_unit_norm(self, name, scales):
        bank = line_bank(4.0, 256)
        fam = standard_family(name)
        for k in scales:
            b = fam.bumps(bank, [DyadicInterval(k, n) for n in (-3, 0, 5)])
            np.testing.assert_allclose(np.sum(np.abs(b) ** 2, axis=1) * bank.grid.h, 1.0, atol=1e-10)

    def test_bump_translates_with_interval(self):
        bank = line_bank(4.0, 256)
        fam = standard_family("psi")
        a = fam.bump(bank, DyadicInterval(1, 0))
        b = fam.bump(bank, DyadicInterval(1, 2))
        # anchors differ by 1 = 64 samples
        np.testing.assert_allclose(np.roll(a, 64), b, atol=1e-12)

    def test_classification_examples(self):
        bank = line_bank(4.0, 128)
        assert classify_lacunarity(standard_family("psi"), bank) == LACUNARY
        assert classify_lacunarity(standard_family("phi"), bank) == NONLACUNARY
        # a phi mask three scales too coarse reaches beyond 4 |I|^-1
        assert classify_lacunarity(standard_family("phi+3"), bank) == NEITHER

    def test_declared_matches_measured(self):
        bank = line_bank(4.0, 128)
        for name in ("phi", "phi_tilde", "psi", "psi_prime"):
            fam = standard_family(name)
            assert classify_lacunarity(fam, bank, *PIPELINE_LACUNARITY) == fam.declared

    def test_family_names(self):
        assert standard_family("phi+1").offset == 1
        assert standard_family("psi-2").name == "psi-2"
        with pytest.raises(ConfigurationError):
            standard_family("haar")

    def test_unrealizable_scale(self):
        bank = line_bank(4.0, 64)
        with pytest.raises(ScaleRangeError):
            standard_family("psi").mask(bank, 6)
        with pytest.raises(ScaleRangeError):
            standard_family("phi_tilde").mask(bank, 0)

    @pytest.mark.parametrize("name", ["psi", "phi", "phi_tilde"])
    @pytest.mark.parametrize("alpha", [2, 4])
    def test_adaptation_constants_are_scale_uniform(self, name, alpha):
        bank = line_bank(16.0, 1024)
        fam = standard_family(name)
        ks = (1, 2, 3) if name == "phi_tilde" else (0, 1, 2, 3)
        consts = [adaptation_constants(fam, bank, DyadicInterval(k, 1), alpha=alpha) for k in ks]
        for l in (0, 1, 2):
            vals = [c[l] for c in consts]
            assert max(vals) <= 1.5 * min(vals), (l, vals)

    def test_adaptation_constants_finite_at_alpha_20(self):
        bank = line_bank(16.0, 1024)
        c = adaptation_constants(standard_family("psi_prime"), bank, DyadicInterval(2, 0), alpha=20)
        assert all(np.isfinite(v) and v > 0 for v in c.values())


class TestSpec:
    def test_contract_checks(self):
        R = [DyadicRectangle(DyadicInterval(1, 0), DyadicInterval(1, 0))]
        with pytest.raises(ContractError):
            DiscreteParaproductSpec(R, [1.5], LH_HL)
        with pytest.raises(ContractError):
            DiscreteParaproductSpec(R, [0.5, 0.5], LH_HL)
        with pytest.raises(ContractError):
            DiscreteParaproductSpec(R, [0.5], LH_HL, axis_types=("ll", "classical"))

    def test_lacunarity_rule(self):
        bank = line_bank(4.0, 64)
        R = [DyadicRectangle(DyadicInterval(1, 0), DyadicInterval(1, 0))]
        DiscreteParaproductSpec(R, [1.0], LH_HL, lacunarity_bounds=PIPELINE_LACUNARITY).check_lacunarity(bank)
        bad = fams(("phi", "phi_tilde", "psi"), ("psi", "psi", "phi"))
        with pytest.raises(ContractError):
            DiscreteParaproductSpec(R, [1.0], bad).check_lacunarity(bank)

    def test_text_round_trip(self, grid2, inputs):
        rng = np.random.default_rng(1)
        rects = enumerate_rectangles([1, 2], [1], (-2, 2))
        c = 0.9 * np.exp(2j * np.pi * rng.uniform(size=len(rects)))
        spec = DiscreteParaproductSpec(rects, c, LH_HL, localized=True, nu=(0.25, 0.5),
                                       norm_weights=rng.uniform(0.5, 1, len(rects)))
        back = spec_from_text(spec_to_text(spec))
        assert back.rectangles == spec.rectangles
        np.testing.assert_array_equal(back.coefficients, spec.coefficients)
        np.testing.assert_array_equal(back.norm_weights, spec.norm_weights)
        assert (back.localized, back.nu, back.families) == (True, (0.25, 0.5), spec.families)
        np.testing.assert_array_equal(eval_discrete_paraproduct(back, *inputs).values,
                                      eval_discrete_paraproduct(spec, *inputs).values)


class TestEvaluation:
    def test_empty_set(self, grid2, inputs):
        spec = DiscreteParaproductSpec([], [], LH_HL)
        assert not np.any(eval_discrete_paraproduct(spec, *inputs).values)

    def test_single_rectangle_matches_oracle(self, grid2, inputs):
        f, g = inputs
        bank = line_bank(grid2.L, grid2.N)
        R = DyadicRectangle(DyadicInterval(1, -1), DyadicInterval(2, 3))
        spec = DiscreteParaproductSpec([R], [1.0], LH_HL)
        bI = [fm.bump(bank, R.I) for fm in LH_HL[0]]
        bJ = [fm.bump(bank, R.J) for fm in LH_HL[1]]
        h2 = grid2.h**2
        ref = (inner(f.values, np.outer(bI[0], bJ[0]), h2) * inner(g.values, np.outer(bI[1], bJ[1]), h2)
               * np.outer(bI[2], bJ[2]) / np.sqrt(R.area))
        for method in ("fast", "canonical"):
            out = eval_discrete_paraproduct(spec, f, g, method=method, d_mode=2).values
            assert np.abs(out - ref).max() <= 1e-12

    def test_one_parameter_and_trilinear(self):
        grid = TorusGrid(1, 4.0, 64)
        bank = FilterBank(grid)
        rng = np.random.default_rng(2)
        fs = [random_band_limited(grid, rng, 3.0) for _ in range(3)]
        I = DyadicInterval(1, 2)
        fam2 = fams(("phi_tilde", "psi", "psi_prime"))
        b = [fm.bump(bank, I) for fm in fam2[0]]
        ref = inner(fs[0].values, b[0], grid.h) * inner(fs[1].values, b[1], grid.h) * b[2] / np.sqrt(I.length)
        out = eval_discrete_paraproduct(DiscreteParaproductSpec([I], [1.0], fam2), *fs[:2], d_mode=1)
        assert np.abs(out.values - ref).max() <= 1e-12

        fam3 = fams(("psi", "psi", "phi", "psi_prime"))
        b = [fm.bump(bank, I) for fm in fam3[0]]
        ref = np.prod([inner(fs[j].values, b[j], grid.h) for j in range(3)]) * b[3] / I.length
        out = eval_discrete_paraproduct(DiscreteParaproductSpec([I], [1.0], fam3), *fs, d_mode="d")
        assert np.abs(out.values - ref).max() <= 1e-12

    def test_bilinearity(self, grid2, inputs):
        f, g = inputs
        rng = np.random.default_rng(3)
        f2 = random_band_limited(grid2, rng, 3.0)
        rects = enumerate_rectangles([1, 2], [1], (-2, 2))
        spec = DiscreteParaproductSpec(rects, rng.uniform(-1, 1, len(rects)), LH_HL)
        a, b = 0.7 - 0.2j, -1.3
        lhs = eval_discrete_paraproduct(spec, a * f + b * f2, g).values
        rhs = a * eval_discrete_paraproduct(spec, f, g).values + b * eval_discrete_paraproduct(spec, f2, g).values
        assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(rhs).max()
        lhs = eval_discrete_paraproduct(spec, f, a * g + b * f2).values
        rhs = a * eval_discrete_paraproduct(spec, f, g).values + b * eval_discrete_paraproduct(spec, f, f2).values
        assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(rhs).max()

    def test_localization_cutoff(self, grid2, inputs):
        rects = enumerate_rectangles([1], [1], (-2, 2))
        c = np.full(len(rects), 0.5)
        plain = eval_discrete_paraproduct(DiscreteParaproductSpec(rects, c, LH_HL), *inputs).values
        loc = eval_discrete_paraproduct(DiscreteParaproductSpec(rects, c, LH_HL, localized=True), *inputs).values
        cell = LocalizationPartition(4).cell(0, grid2.coords)
        np.testing.assert_allclose(loc, plain * np.outer(cell, cell), atol=1e-14)

    def test_fast_matches_canonical(self, grid2, inputs):
        rng = np.random.default_rng(4)
        rects = enumerate_rectangles([1, 2], [1, 2], (-2, 2))
        spec = DiscreteParaproductSpec(rects, rng.uniform(-1, 1, len(rects)), LH_HL, localized=True)
        a = eval_discrete_paraproduct(spec, *inputs).values
        b = eval_discrete_paraproduct(spec, *inputs, method="canonical").values
        assert np.abs(a - b).max() <= 1e-12 * np.abs(a).max()

    def test_errors(self, grid2, inputs):
        R = [DyadicRectangle(DyadicInterval(6, 0), DyadicInterval(1, 0))]
        with pytest.raises(ScaleRangeError):
            eval_discrete_paraproduct(DiscreteParaproductSpec(R, [1.0], LH_HL), *inputs)
        ok = DiscreteParaproductSpec([DyadicRectangle(DyadicInterval(1, 0), DyadicInterval(1, 0))], [1.0], LH_HL)
        with pytest.raises(ContractError):
            eval_discrete_paraproduct(ok, inputs[0])
        with pytest.raises(ContractError):
            eval_discrete_paraproduct(ok, *inputs, d_mode=1)


class TestSplit:
    @pytest.mark.parametrize("I,J,name", [((0, 1), (0, 1), "main"), ((8, 9), (8, 9), "error"),
                                          ((0, 1), (8, 9), "hybrid_III"), ((8, 9), (0, 1), "hybrid_IV"),
                                          ((-5, -4), (4, 5), "main"), ((5, 6), (-6, -5), "error")])
    def test_examples(self, I, J, name):
        R = DyadicRectangle(DyadicInterval(0, I[0]), DyadicInterval(0, J[0]))
        assert SPLIT_NAMES[rectangle_category(R)] == name

    def test_exhaustive_partition(self):
        L = 32
        ivs = enumerate_intervals(range(4), (-L / 2, L / 2))
        rects = [DyadicRectangle(I, J) for I, J in itertools.product(ivs, ivs)]
        spec = DiscreteParaproductSpec(rects, np.zeros(len(rects)), LH_HL)
        parts = split_four_terms(spec)
        sets = [set(p.rectangles) for p in parts]
        assert sum(len(s) for s in sets) == len(rects)
        assert set().union(*sets) == set(rects)
        for a, b in itertools.combinations(sets, 2):
            assert not a & b
        # closed containment in [-5, 5]
        for R in sets[0]:
            assert -5 <= R.I.left and R.I.right <= 5 and -5 <= R.J.left and R.J.right <= 5

    def test_regrouped_sum_is_bit_exact(self):
        grid = TorusGrid(2, 16.0, 256)
        rng = np.random.default_rng(5)
        f, g = random_band_limited(grid, rng, 1.5), random_band_limited(grid, rng, 1.5)
        rects = enumerate_rectangles([1], [1], (-8, 8))
        spec = DiscreteParaproductSpec(rects, rng.uniform(-1, 1, len(rects)), LH_HL, localized=True)
        whole = eval_discrete_paraproduct(spec, f, g, method="canonical")
        parts = [eval_discrete_paraproduct(p, f, g, method="canonical") for p in split_four_terms(spec)]
        np.testing.assert_array_equal(sum_split(parts).values, whole.values)

    def test_needs_two_axes(self):
        spec = DiscreteParaproductSpec([DyadicInterval(0, 0)], [1.0], fams(("phi", "psi", "psi")))
        with pytest.raises(ContractError):
            split_four_terms(spec)


@pytest.fixture(scope="module")
def grid():
    return TorusGrid(2, 4.0, 128)


class TestPipeline:
    def test_lh_hl_families(self, grid):
        spec = paraproduct_from_pipeline(2, CAT["product_inhomog"], grid, scales=(1, 2))
        bank = line_bank(4.0, 128)
        assert spec.family_classes(bank) == (
            (NONLACUNARY, LACUNARY, LACUNARY),
            (LACUNARY, NONLACUNARY, LACUNARY),
        )
        spec.check_lacunarity(bank)
        assert np.abs(spec.coefficients).max() == pytest.approx(1.0, abs=1e-15)
        assert {R.I.k for R in spec.rectangles} == {1, 2}

    def test_ll_uses_scale_zero(self, grid):
        spec = paraproduct_from_pipeline(16, CAT["product_inhomog"], grid, scales=(1, 2))
        assert spec.axis_types == ("ll", "ll")
        assert all(R.I.k == 0 and R.J.k == 0 for R in spec.rectangles)
        spec.check_lacunarity(line_bank(4.0, 128))

    def test_part_index_range(self, grid):
        for bad in (0, 17):
            with pytest.raises((ConfigurationError, ContractError, ValueError)):
                paraproduct_from_pipeline(bad, CAT["identity"], grid)

    def test_anchor_average_reproduces_part(self):
        # averaging the nu-shifted discrete sums recovers the continuous (lh, hl) part
        grid = TorusGrid(2, 4.0, 64)
        bank = FilterBank(grid)
        rng = np.random.default_rng(3)
        f = lp_project(random_band_limited(grid, rng, 5.0), bank.k_max, "phi", bank)
        g = lp_project(random_band_limited(grid, rng, 5.0), bank.k_max, "phi", bank)
        m0 = CAT["identity"]
        part = eval_multiplier(masked_symbol(m0, bank, "lh", "hl"), f, g).values
        M = 8
        acc = np.zeros(grid.shape, dtype=complex)
        for a in range(M):
            for b in range(M):
                sp = paraproduct_from_pipeline(2, m0, grid, scales=(1,), localized=False, nu=(a / M, b / M))
                acc += pipeline_approximation(sp, f, g).values
        acc /= M * M
        assert np.linalg.norm(acc - part) <= 1e-12 * np.linalg.norm(part)

    @pytest.mark.xfail(strict=True, reason="the nu = 0 representative alone carries O(1) error; "
                                           "n_max does not enter the zero-index coefficients")
    def test_single_representative_approximates_part(self, grid):
        bank = FilterBank(grid)
        rng = np.random.default_rng(3)
        f = lp_project(random_band_limited(grid, rng, 5.0), bank.k_max, "phi", bank)
        g = lp_project(random_band_limited(grid, rng, 5.0), bank.k_max, "phi", bank)
        m0 = CAT["product_inhomog"]
        part = eval_multiplier(masked_symbol(m0, bank, "lh", "hl"), f, g).values
        errs = []
        for n_max in (8, 16):
            sp = paraproduct_from_pipeline(2, m0, grid, scales=(1, 2), localized=False, n_max=n_max)
            ap = pipeline_approximation(sp, f, g).values
            errs.append(np.linalg.norm(ap - part) / np.linalg.norm(part))
        assert errs[0] <= 0.1
        assert errs[1] < errs[0]


def test_zero_inputs_give_zero(grid2):
    z = SampledFunction(grid2, np.zeros(grid2.shape, dtype=complex))
    rects = enumerate_rectangles([1], [1], (-1, 1))
    spec = DiscreteParaproductSpec(rects, np.full(len(rects), 0.5), LH_HL)
    assert not np.any(eval_discrete_paraproduct(spec, z, z).values)
