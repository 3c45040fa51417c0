import csv
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from paralab.grid import TorusGrid
from paralab.symbols import (
    SymbolClass,
    SymbolSpec,
    builtin_symbols,
    fd_weights,
    verify_symbol_class,
)

CATALOG = builtin_symbols()
freq = st.floats(-50, 50, allow_nan=False)


def test_catalog_contents():
    names = set(CATALOG)
    assert {"identity", "marcinkiewicz", "mikhlin_block", "product_inhomog",
            "theta_product", "phase_coupled", "failing"} <= names
    xdep = [n for n, s in CATALOG.items() if s.x_dependent]
    assert sorted(xdep) == ["phase_coupled", "theta_product"]
    assert CATALOG["theta_product"].terms is not None
    assert CATALOG["phase_coupled"].terms is None


def test_identity_is_one():
    assert CATALOG["identity"](0.3, -2.0, 5.0, 1e3) == 1.0


def test_marcinkiewicz_value():
    assert CATALOG["marcinkiewicz"](1.0, 1.0, 1.0, 1.0) == pytest.approx(0.25, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(freq, freq, freq, freq)
def test_marcinkiewicz_scaling(a, b, c, d):
    # stay clear of the singular planes and of underflow in the squares
    assume(math.hypot(a, b) > 1e-100 and math.hypot(c, d) > 1e-100)
    m = CATALOG["marcinkiewicz"]
    assert m(2 * a, 2 * b, c, d) == m(a, b, c, d)
    assert m(a, b, 2 * c, 2 * d) == m(a, b, c, d)


@pytest.mark.parametrize("name", [n for n in CATALOG if not CATALOG[n].x_dependent])
def test_bound_on_lattice(name):
    s = CATALOG[name]
    grid = TorusGrid(2, 4.0, 16)
    xi = grid.freqs
    pts = np.meshgrid(*([xi] * (s.n * s.d)), indexing="ij")
    v = np.abs(s(*pts))
    finite = v[np.isfinite(v)]
    assert finite.max() <= s.bound + 1e-12


def test_singular_planes_are_masked():
    m = CATALOG["marcinkiewicz"]
    assert m(0.0, 0.0, 1.0, 2.0) == 0.0
    assert m(1.0, 2.0, 0.0, 0.0) == 0.0


def test_factors_reproduce_product():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-5, 5, (4, 50))
    for name in ("identity", "marcinkiewicz", "mikhlin_block", "product_inhomog"):
        s = CATALOG[name]
        f1, f2 = s.factors
        np.testing.assert_allclose(f1(pts[0], pts[1]) * f2(pts[2], pts[3]), s(*pts), atol=1e-15)


def test_theta_product_terms():
    s = CATALOG["theta_product"]
    rng = np.random.default_rng(1)
    pts = rng.uniform(-5, 5, (4, 20))
    x = rng.uniform(-1, 1, (2, 20))
    (theta, m), = s.terms
    np.testing.assert_allclose(theta(x) * m(*pts), s(*pts, x=x), atol=1e-15)


def test_tabulation_is_cached_and_read_only():
    s = CATALOG["product_inhomog"]
    grid = TorusGrid(2, 2.0, 8)
    T1 = s.tabulate(grid)
    assert s.tabulate(grid) is T1
    assert T1.shape == (8,) * 4
    with pytest.raises(ValueError):
        T1[0, 0, 0, 0] = 0


def test_fd_weights_differentiate_polynomials():
    for order in range(1, 5):
        offsets, w = fd_weights(order)
        x = offsets.astype(float)
        # exact on x^order / order!, blind to lower powers
        assert np.dot(w, x**order / math.factorial(order)) == pytest.approx(1.0, abs=1e-12)
        for j in range(order):
            assert np.dot(w, x**j) == pytest.approx(0.0, abs=1e-10)


def test_constant_symbol_ratios():
    r = verify_symbol_class(CATALOG["identity"], sample_count=32)
    assert r.order_max(0) == 1.0
    assert all(ratio == 0.0 for a, ratio, _ in r.rows if sum(a) >= 1)
    assert r.passed


def test_unknown_class():
    with pytest.raises(ValueError):
        SymbolClass("besov")


def test_step_too_large():
    with pytest.raises(ValueError):
        verify_symbol_class(CATALOG["identity"], fd_step=0.1)


def test_singular_margin_skips_points():
    pts = np.array([[0.01, 0.01, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0]])
    r = verify_symbol_class(CATALOG["marcinkiewicz"], points=pts)
    assert r.skipped == 1


def test_report_csv(tmp_path):
    r = verify_symbol_class(CATALOG["product_inhomog"], sample_count=8)
    r.to_csv(tmp_path / "r.csv")
    rows = list(csv.reader((tmp_path / "r.csv").read_text().splitlines()))
    assert rows[0] == ["multi_index", "max_ratio", "worst_point"]
    assert len(rows) - 1 == len(r.rows)


@pytest.mark.parametrize("name", ["marcinkiewicz", "mikhlin_block", "product_inhomog"])
def test_declared_class_passes(name):
    r = verify_symbol_class(CATALOG[name], sample_count=64)
    assert r.passed, r.first_failing_order


def test_failing_symbol_fails_at_order_two():
    r = verify_symbol_class(CATALOG["failing"], sample_count=64)
    assert not r.passes_order(2)
    assert r.passes_order(0)


def test_custom_symbol():
    s = SymbolSpec("half", 2, 1, lambda f, x: 0.5 + 0 * f[0], SymbolClass("hormander_mikhlin", 2, 1.0))
    assert s(1.0, 2.0) == 0.5
    assert verify_symbol_class(s, sample_count=8).passed
