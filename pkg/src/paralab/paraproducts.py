"""Dyadic rectangles, bump families and discrete paraproducts.

A discrete paraproduct with ``n`` inputs on a ``d``-dimensional grid is

    Pi(f_1, ..., f_n)(x) = sum_R c_R |R|^{-(n-1)/2}
                           <f_1, phi^1_R> ... <f_n, phi^n_R> phi^{n+1}_R(x),

with ``R`` ranging over a finite set of dyadic intervals (``d = 1``) or
rectangles (``d = 2``), ``phi^j_R`` the tensor product of one L2-normalized
bump per axis, and ``<f, g> = sum f conj(g) h^d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError, ScaleRangeError
from .filterbank import FilterBank, part_types
from .grid import SPACE, SampledFunction, TorusGrid, require_domain
from .operators import LocalizationPartition, annular_axes, coeff_tensor, part_windows

__all__ = [
    "LACUNARY",
    "NEITHER",
    "NONLACUNARY",
    "PIPELINE_FAMILIES",
    "BumpFamily",
    "DiscreteParaproductSpec",
    "DyadicInterval",
    "DyadicRectangle",
    "classify_lacunarity",
    "enumerate_intervals",
    "enumerate_rectangles",
    "eval_discrete_paraproduct",
    "paraproduct_from_pipeline",
    "pipeline_approximation",
    "rectangle_category",
    "spec_from_text",
    "spec_to_text",
    "split_four_terms",
    "standard_family",
    "sum_split",
]

LACUNARY = "lacunary"
NONLACUNARY = "nonlacunary"
NEITHER = "neither"

SPLIT_NAMES = ("main", "error", "hybrid_III", "hybrid_IV")


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """``I = 2^-k [n, n+1]`` with ``k >= 0``."""

    k: int
    n: int

    def __post_init__(self):
        if self.k < 0:
            raise ConfigurationError(f"dyadic intervals need k >= 0 (|I| <= 1), got k={self.k}")

    @property
    def length(self):
        return 2.0**-self.k

    @property
    def left(self):
        return self.n * 2.0**-self.k

    @property
    def right(self):
        return (self.n + 1) * 2.0**-self.k

    @property
    def center(self):
        return (self.n + 0.5) * 2.0**-self.k

    def distance(self, a, b):
        """Distance from ``I`` to the closed interval ``[a, b]``."""
        return max(a - self.right, self.left - b, 0.0)


@dataclass(frozen=True, order=True)
class DyadicRectangle:
    """``R = I x J``."""

    I: DyadicInterval
    J: DyadicInterval

    @property
    def area(self):
        return self.I.length * self.J.length

    @property
    def intervals(self):
        return (self.I, self.J)


def _intervals(R):
    if isinstance(R, DyadicInterval):
        return (R,)
    if isinstance(R, DyadicRectangle):
        return R.intervals
    return tuple(R)


# ---------------------------------------------------------------- bump families


@dataclass(frozen=True)
class BumpFamily:
    """Bumps ``phi_I`` generated from one filter-bank mask.

    The bump attached to ``I = 2^-k [n, n+1]`` has Fourier coefficients
    ``mask_{k + offset}(xi) * exp(-2 pi i x_I xi)`` with ``x_I = 2^-k n``,
    normalized to unit L2 norm on the grid.

    Attributes
    ----------
    kind : str
        Filter-bank mask kind.
    offset : int
        Added to the interval scale to get the mask scale.
    declared : str
        Lacunarity claimed by the construction.
    """

    kind: str
    offset: int = 0
    declared: str = NONLACUNARY

    @property
    def name(self):
        return self.kind if self.offset == 0 else f"{self.kind}{self.offset:+d}"

    def mask_scale(self, k):
        return k + self.offset

    def support_radius(self, bank, k):
        """Radius of the Fourier support of the bumps at interval scale ``k``."""
        s = self.mask_scale(k)
        if self.kind == "psi_tilde":
            return 8.0 / 3.0 * 2.0 ** min(s + 1, bank.k_max)
        return _RADIUS[self.kind] * 2.0**s

    def mask(self, bank, k):
        """Lattice mask at interval scale ``k``; the mask itself may exceed the bank's k_max."""
        s = self.mask_scale(k)
        lo = {"phi_tilde": 1, "psi_tilde": 0, "psi_prime": 0}.get(self.kind, -1)
        if s < lo or self.support_radius(bank, k) > bank.grid.nyquist:
            raise ScaleRangeError(
                f"family {self.name} at scale k={k} is not realizable on {bank.grid}"
            )
        if self.kind == "psi_tilde" and s > bank.k_max:
            raise ScaleRangeError(f"psi_tilde at scale {s} exceeds k_max={bank.k_max}")
        return bank._evaluate(self.kind, s, bank.grid.freqs)

    def kernel_norm(self, bank, k):
        """L2 norm of ``2^{-k/2} conj(kernel_k(x_I - x))`` for the generating kernel.

        The L2-normalized bump equals that function divided by this number.
        """
        m = self.mask(bank, k)
        # the kernel with continuous transform ``m`` has torus samples sum(m e^{2 pi i x xi}) / L
        return 2.0 ** (-k / 2) * math.sqrt(float(np.sum(np.abs(m) ** 2)) / bank.grid.L)

    def bumps(self, bank, intervals, nu=0.0):
        """Rows of L2-normalized bumps for the given intervals (1D samples).

        ``nu`` shifts every anchor to ``2^-k (n + nu)``.
        """
        grid = bank.grid
        out = np.empty((len(intervals), grid.N), dtype=complex)
        xi = grid.freqs
        by_scale = {}
        for i, I in enumerate(intervals):
            by_scale.setdefault(I.k, []).append(i)
        for k, rows in by_scale.items():
            m = self.mask(bank, k)
            pos = np.array([(intervals[i].n + nu) * 2.0**-k for i in rows])
            spec = m[None, :] * np.exp(-2j * np.pi * pos[:, None] * xi[None, :])
            vals = np.fft.fftshift(np.fft.ifft(spec, axis=1) * grid.N, axes=1)
            vals /= np.sqrt(np.sum(np.abs(vals) ** 2, axis=1, keepdims=True) * grid.h)
            out[rows] = vals
        return out

    def bump(self, bank, I, nu=0.0):
        return self.bumps(bank, [I], nu)[0]


_RADIUS = {"phi": 4.0 / 3.0, "phi_tilde": 2.0 / 3.0, "psi": 8.0 / 3.0, "psi_prime": 4.0}

_FAMILY_LACUNARITY = {
    "phi": NONLACUNARY,
    "phi_tilde": NONLACUNARY,
    "psi": LACUNARY,
    "psi_tilde": LACUNARY,
    "psi_prime": LACUNARY,
}


def standard_family(name):
    """Family from its name: a mask kind with an optional ``+j``/``-j`` scale offset."""
    for sign in "+-":
        if sign in name:
            kind, off = name.split(sign, 1)
            offset = int(off) * (1 if sign == "+" else -1)
            break
    else:
        kind, offset = name, 0
    if kind not in _FAMILY_LACUNARITY:
        raise ConfigurationError(f"unknown bump family {name!r}")
    return BumpFamily(kind, offset, _FAMILY_LACUNARITY[kind])


def classify_lacunarity(family, bank, inner=0.25, outer=4.0, scales=None, floor=1e-12):
    """Classify a family by the measured Fourier support of its bumps.

    For each sampled scale ``k`` the lattice support ``{|xi| : |mask| > floor}``
    is compared with the annulus ``[inner, outer] 2^k`` (lacunary) and the
    ball ``|xi| <= outer 2^k`` (nonlacunary), where ``|I|^-1 = 2^k``.

    Returns
    -------
    str
        ``"lacunary"``, ``"nonlacunary"`` or ``"neither"``.
    """
    if scales is None:
        scales = []
        for k in range(64):
            try:
                family.mask(bank, k)
            except ScaleRangeError:
                if scales or family.support_radius(bank, k) > bank.grid.nyquist:
                    break
                continue
            scales.append(k)
    scales = list(scales)
    if not scales:
        raise ScaleRangeError(f"family {family.name} has no realizable scale on {bank.grid}")
    xi = np.abs(bank.grid.freqs)
    lac = nonlac = True
    for k in scales:
        support = xi[np.abs(family.mask(bank, k)) > floor]
        if support.size == 0:
            continue
        r = support / 2.0**k
        lac &= bool(np.all((r >= inner) & (r <= outer)))
        nonlac &= bool(np.all(r <= outer))
    if lac:
        return LACUNARY
    if nonlac:
        return NONLACUNARY
    return NEITHER


def adaptation_constants(family, bank, I, orders=(0, 1, 2), alpha=20):
    """Smallest constants ``C_l`` in ``|phi_I^(l)(x)| <= C_l |I|^{-l-1/2} (1 + dist(x, I)/|I|)^{-alpha}``.

    Derivatives are taken spectrally on the grid; distances are measured on
    the torus.
    """
    grid = bank.grid
    b = family.bump(bank, I)
    spec = np.fft.fft(np.fft.ifftshift(b))
    x = grid.coords
    c = I.center
    off = np.abs((x - c + grid.L / 2) % grid.L - grid.L / 2)
    dist = np.maximum(off - I.length / 2, 0.0)
    w = (1.0 + dist / I.length) ** (-float(alpha))
    out = {}
    for l in orders:
        d = np.fft.fftshift(np.fft.ifft(spec * (2j * np.pi * grid.freqs) ** l))
        out[l] = float(np.max(np.abs(d) / (I.length ** (-l - 0.5) * w)))
    return out


# ---------------------------------------------------------------- specs


@dataclass
class DiscreteParaproductSpec:
    """A finite discrete paraproduct.

    Parameters
    ----------
    rectangles : sequence
        :class:`DyadicRectangle` (2D), :class:`DyadicInterval` (1D), or
        tuples of ``d`` intervals.
    coefficients : array_like
        ``c_R`` with ``|c_R| <= 1``.
    families : tuple
        One tuple of ``n + 1`` :class:`BumpFamily` per axis; the last family
        of each tuple produces the output bump.
    axis_types : tuple of str, optional
        ``"ll"`` marks a low-low axis (all scales 0, nonlacunary families);
        anything else is a classical axis needing two lacunary families.
    localized : bool
        Multiply the output by the cell function ``phi'_0 (x) phi''_0``.
    lacunarity_bounds : (float, float)
        Annulus constants ``(inner, outer)`` used to classify the families.
    scale_factor : float
        Constant that turns the normalized coefficients back into the
        operator they were built from.
    norm_weights : ndarray, optional
        Per-rectangle factors relating L2-normalized bumps to the unnormalized
        bumps of the construction.
    nu : tuple of float
        Anchor offset per axis; bumps sit at ``2^-k (n + nu)``.
    """

    rectangles: tuple
    coefficients: np.ndarray
    families: tuple
    axis_types: tuple = None
    localized: bool = False
    lacunarity_bounds: tuple = (0.25, 4.0)
    scale_factor: float = 1.0
    norm_weights: np.ndarray = None
    nu: tuple = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rectangles = tuple(self.rectangles)
        self.coefficients = np.asarray(self.coefficients, dtype=complex).reshape(-1)
        if self.coefficients.size != len(self.rectangles):
            raise ContractError("need one coefficient per rectangle")
        if np.any(np.abs(self.coefficients) > 1.0 + 1e-12):
            raise ContractError("coefficients must satisfy |c_R| <= 1")
        self.families = tuple(tuple(fs) for fs in self.families)
        if len({len(fs) for fs in self.families}) != 1 or len(self.families[0]) < 2:
            raise ContractError("each axis needs the same number (n + 1 >= 2) of families")
        if self.axis_types is None:
            self.axis_types = ("classical",) * self.dims
        self.axis_types = tuple(self.axis_types)
        if len(self.axis_types) != self.dims:
            raise ContractError("one axis type per axis")
        for R in self.rectangles:
            if len(_intervals(R)) != self.dims:
                raise ContractError(f"rectangle {R} does not have {self.dims} sides")
        for a, t in enumerate(self.axis_types):
            if t == "ll" and any(_intervals(R)[a].k != 0 for R in self.rectangles):
                raise ContractError(f"low-low axis {a} admits scale-0 intervals only")
        if self.norm_weights is not None:
            self.norm_weights = np.asarray(self.norm_weights, dtype=float).reshape(-1)
        self.nu = (0.0,) * self.dims if self.nu is None else tuple(float(v) for v in self.nu)

    @property
    def dims(self):
        return len(self.families)

    @property
    def arity(self):
        return len(self.families[0]) - 1

    def family_classes(self, bank):
        inner, outer = self.lacunarity_bounds
        return tuple(
            tuple(classify_lacunarity(f, bank, inner, outer) for f in fs) for fs in self.families
        )

    def check_lacunarity(self, bank):
        """Per-axis lacunarity requirement; raises :class:`ContractError` on violation."""
        for a, classes in enumerate(self.family_classes(bank)):
            if self.axis_types[a] == "ll":
                ok = classes.count(NONLACUNARY) >= 2
            else:
                ok = classes.count(LACUNARY) >= 2
            if not ok:
                raise ContractError(f"axis {a} families {classes} violate the lacunarity rule")

    def subset(self, keep, **changes):
        keep = np.asarray(keep, dtype=bool)
        idx = np.flatnonzero(keep)
        kw = dict(
            rectangles=[self.rectangles[i] for i in idx],
            coefficients=self.coefficients[idx],
            families=self.families,
            axis_types=self.axis_types,
            localized=self.localized,
            lacunarity_bounds=self.lacunarity_bounds,
            scale_factor=self.scale_factor,
            norm_weights=None if self.norm_weights is None else self.norm_weights[idx],
            nu=self.nu,
            meta=dict(self.meta),
        )
        kw.update(changes)
        return DiscreteParaproductSpec(**kw)


def enumerate_intervals(scales, window):
    """All dyadic intervals with scale in ``scales`` lying inside the closed ``window``."""
    a, b = window
    out = []
    for k in scales:
        s = 2**k
        lo, hi = math.ceil(a * s), math.floor(b * s) - 1
        out += [DyadicInterval(k, n) for n in range(lo, hi + 1)]
    return out


def enumerate_rectangles(scales_I, scales_J, window_I, window_J=None):
    """All ``I x J`` with ``I``, ``J`` from :func:`enumerate_intervals`."""
    window_J = window_I if window_J is None else window_J
    Is = enumerate_intervals(scales_I, window_I)
    Js = enumerate_intervals(scales_J, window_J)
    return [DyadicRectangle(I, J) for I in Is for J in Js]


# ---------------------------------------------------------------- evaluation


def rectangle_category(R, I0=(-1.0, 1.0), J0=(-1.0, 1.0), factor=5.0):
    """Index into ``("main", "error", "hybrid_III", "hybrid_IV")`` for one rectangle.

    An axis interval is *near* when it lies in the closed dilate ``factor *
    I0`` and *far* when it misses the dilate's interior.  Dyadic intervals
    with ``|I| <= 1`` always fall in one of the two when the dilate has
    integer endpoints.
    """
    near = []
    for iv, (a, b) in zip(_intervals(R), (I0, J0)):
        c, h = 0.5 * (a + b), 0.5 * factor * (b - a)
        lo, hi = c - h, c + h
        if lo <= iv.left and iv.right <= hi:
            near.append(True)
        elif iv.left >= hi or iv.right <= lo:
            near.append(False)
        else:
            raise AssertionError(f"interval {iv} straddles the boundary of [{lo}, {hi}]")
    n1, n2 = near
    if n1 and n2:
        return 0
    if not n1 and not n2:
        return 1
    return 2 if n1 else 3


def _prepare(spec, fs, d_mode):
    if len(fs) != spec.arity:
        raise ContractError(f"spec takes {spec.arity} inputs, got {len(fs)}")
    for f in fs:
        require_domain(f, SPACE)
    grid = fs[0].grid
    if any(f.grid != grid for f in fs[1:]):
        raise ContractError("inputs live on different grids")
    if grid.dims != spec.dims:
        raise ContractError(f"spec has {spec.dims} axes, grid has {grid.dims}")
    if d_mode is not None:
        want = {1: (1, 2), 2: (2, 2)}.get(d_mode)
        if d_mode == "d":
            pass
        elif want is None or (grid.dims, spec.arity) != want:
            raise ContractError(
                f"d_mode={d_mode!r} needs a {want} (dims, arity) setup, got "
                f"({grid.dims}, {spec.arity})"
            )
    line = TorusGrid(1, grid.L, grid.N)
    return grid, FilterBank(line)


def _cutoff(grid):
    part = LocalizationPartition(grid.L)
    c = part.cell(0, grid.coords)
    if grid.dims == 1:
        return c
    return c[:, None] * c[None, :]


def _axis_tables(spec, bank, rects):
    """Distinct intervals per axis, their bump matrices, and rectangle index maps."""
    tables = []
    for a in range(spec.dims):
        ivs = sorted({_intervals(R)[a] for R in rects})
        pos = {iv: i for i, iv in enumerate(ivs)}
        mats = [fam.bumps(bank, ivs, spec.nu[a]) for fam in spec.families[a]]
        idx = np.array([pos[_intervals(R)[a]] for R in rects], dtype=int)
        tables.append((ivs, mats, idx))
    return tables


def _term_weights(spec, coefs):
    n = spec.arity
    area = np.array(
        [math.prod(iv.length for iv in _intervals(R)) for R in spec.rectangles], dtype=float
    )
    w = coefs * area ** (-(n - 1) / 2)
    if spec.norm_weights is not None:
        w = w * spec.norm_weights
    return w


def _evaluate_fast(spec, fs, grid, bank, coefs):
    out = np.zeros(grid.shape, dtype=complex)
    if not spec.rectangles:
        return out
    tables = _axis_tables(spec, bank, spec.rectangles)
    w = _term_weights(spec, coefs)
    hd = grid.h**grid.dims
    n = spec.arity
    if grid.dims == 1:
        (_, mats, idx), = tables
        prod = w.copy()
        for j in range(n):
            prod = prod * ((mats[j].conj() @ fs[j].values) * hd)[idx]
        W = np.zeros(mats[n].shape[0], dtype=complex)
        np.add.at(W, idx, prod)
        return W @ mats[n]
    (_, m1, i1), (_, m2, i2) = tables
    prod = w.copy()
    for j in range(n):
        A = (m1[j].conj() @ fs[j].values @ m2[j].conj().T) * hd
        prod = prod * A[i1, i2]
    W = np.zeros((m1[n].shape[0], m2[n].shape[0]), dtype=complex)
    np.add.at(W, (i1, i2), prod)
    return m1[n].T @ W @ m2[n]


def _evaluate_canonical(spec, fs, grid, bank, coefs):
    out = np.zeros(grid.shape, dtype=complex)
    if not spec.rectangles:
        return out
    tables = _axis_tables(spec, bank, spec.rectangles)
    w = _term_weights(spec, coefs)
    hd = grid.h**grid.dims
    n = spec.arity
    cut = _cutoff(grid) if spec.localized else None
    groups = _canonical_groups(spec)
    for members in groups:
        acc = np.zeros(grid.shape, dtype=complex)
        for r in members:
            coef = w[r]
            if grid.dims == 1:
                (_, mats, idx), = tables
                for j in range(n):
                    coef = coef * ((mats[j][idx[r]].conj() @ fs[j].values) * hd)
                acc = acc + coef * mats[n][idx[r]]
            else:
                (_, m1, i1), (_, m2, i2) = tables
                for j in range(n):
                    u = m1[j][i1[r]].conj() @ fs[j].values
                    coef = coef * ((u @ m2[j][i2[r]].conj()) * hd)
                acc = acc + coef * np.outer(m1[n][i1[r]], m2[n][i2[r]])
        if cut is not None:
            acc = acc * cut
        out = out + acc
    return out


def _canonical_groups(spec):
    """Rectangle indices grouped by split category, each group in sorted order."""
    order = sorted(range(len(spec.rectangles)), key=lambda r: _intervals(spec.rectangles[r]))
    if spec.dims != 2:
        return [order]
    groups = [[], [], [], []]
    for r in order:
        groups[rectangle_category(spec.rectangles[r])].append(r)
    return groups


def eval_discrete_paraproduct(spec, *fs, d_mode=None, method="fast", coefficients=None):
    """Evaluate a discrete paraproduct on sampled inputs.

    Parameters
    ----------
    spec : DiscreteParaproductSpec
    *fs : SampledFunction
        ``spec.arity`` inputs on one grid of dimension ``spec.dims``.
    d_mode : {1, 2, "d"}, optional
        Expected setting: 1 is the bilinear one-parameter sum over
        intervals, 2 the bilinear bi-parameter sum over rectangles, ``"d"``
        the general ``n``-input form.  ``None`` skips the check.
    method : {"fast", "canonical"}
        ``fast`` computes all inner products with matrix products and
        scatters the terms; ``canonical`` adds the terms one at a time in a
        fixed order (rectangles grouped by split category, then sorted), so
        that split evaluations regroup bit for bit.
    coefficients : array_like, optional
        Override ``spec.coefficients`` (no ``|c| <= 1`` check).

    Raises
    ------
    ScaleRangeError
        A bump needs a mask scale the grid cannot resolve.
    """
    grid, bank = _prepare(spec, fs, d_mode)
    coefs = spec.coefficients if coefficients is None else np.asarray(coefficients, complex)
    if method == "fast":
        out = _evaluate_fast(spec, fs, grid, bank, coefs)
        if spec.localized:
            out = out * _cutoff(grid)
    elif method == "canonical":
        out = _evaluate_canonical(spec, fs, grid, bank, coefs)
    else:
        raise ValueError(f"unknown method {method!r}")
    return SampledFunction(grid, out)


def split_four_terms(spec):
    """Split a 2D spec into ``(main, error, hybrid_III, hybrid_IV)`` sub-specs.

    ``main`` keeps ``R`` inside ``5 R_00``; ``error`` keeps rectangles far
    on both axes; ``hybrid_III`` is near on the first axis only and
    ``hybrid_IV`` near on the second only (``I_0 = J_0 = [-1, 1]``, closed
    containment).
    """
    if spec.dims != 2:
        raise ContractError("the four-way split needs a two-parameter spec")
    cats = np.array([rectangle_category(R) for R in spec.rectangles], dtype=int)
    return tuple(
        spec.subset(cats == c, meta={**spec.meta, "split": SPLIT_NAMES[c]}) for c in range(4)
    )


def sum_split(outputs):
    """Add split evaluations in the canonical order (main, error, III, IV)."""
    outputs = list(outputs)
    acc = np.zeros(outputs[0].grid.shape, dtype=complex)
    for o in outputs:
        acc = acc + o.values
    return outputs[0].with_values(acc)


# ---------------------------------------------------------------- pipeline


#: Per-axis (input 1, input 2, output) families of the reduced parts.  The
#: output family is 1 on every frequency the two inputs can produce, so the
#: average over anchor offsets reproduces the continuous part: exactly for
#: lh, hl and hh; for ll it reproduces (f * phi_1)(g * phi_1), which is the
#: low-low part plus the scale-0 (psi_0, psi_0) term.
PIPELINE_FAMILIES = {
    "lh": ("phi_tilde", "psi", "psi_prime"),
    "hl": ("psi", "phi_tilde", "psi_prime"),
    "hh": ("psi", "psi_tilde", "phi+4"),
    "ll": ("phi+1", "phi+1", "phi+3"),
}

#: Annulus constants matching the supports of the reduced families.
PIPELINE_LACUNARITY = (1.0 / 16.0, 16.0 / 3.0)


def _axis_scales(t, scales):
    if t == "ll":
        return [0]
    lo = 1 if t in ("lh", "hl") else 0
    return [k for k in scales if k >= lo]


def paraproduct_from_pipeline(
    part_index,
    m0,
    grid,
    scales=(1, 2),
    window=None,
    localized=True,
    n_max=0,
    period=1.0,
    nu=(0.0, 0.0),
    **coeff_kwargs,
):
    """Discrete paraproduct reducing one of the sixteen parts of ``T_{m0}``.

    Parameters
    ----------
    part_index : int
        1..16, row-major over ``(lh, hl, hh, ll)^2``.
    m0 : SymbolSpec
        x-independent bilinear 2-parameter symbol.
    grid : TorusGrid
        2D grid fixing the resolvable scales.
    scales : sequence of int or (seq, seq)
        Scales of ``I`` and ``J``; low-low axes always use scale 0.
    window : (float, float) or ((a, b), (c, d)), optional
        Position window for the intervals (default: the whole torus).
    localized : bool
        Attach the cell cutoff ``phi'_0 (x) phi''_0``.
    n_max, period : int, float
        Coefficient-tensor truncation and period used for ``C^{k,l}``; the
        spec uses the ``n = 0`` coefficients.
    nu : (float, float)
        Anchor offset of the bumps.  The reduced operator is the average of
        the discrete sums over ``nu`` in ``[0, 1)^2``; ``(0, 0)`` is the
        single representative.

    Returns
    -------
    DiscreteParaproductSpec
        ``c_R = C^{k,l}_{000} / max |C_{000}|``.  ``scale_factor`` is the max
        divided by the window mass (the value ``C_000`` takes for the symbol
        1), so ``scale_factor * c_R`` is the window-weighted mean of ``m0``
        at scale ``(k, l)``.  ``norm_weights`` holds the bump normalization
        products; :func:`pipeline_approximation` combines both.
    """
    if grid.dims != 2:
        raise ContractError("pipeline paraproducts live on 2D grids")
    t1, t2 = part_types(part_index)
    if len(scales) == 2 and not np.isscalar(scales[0]):
        s1, s2 = scales
    else:
        s1 = s2 = scales
    s1, s2 = _axis_scales(t1, s1), _axis_scales(t2, s2)
    if not s1 or not s2:
        raise ScaleRangeError(f"no admissible scale for part {(t1, t2)} among {scales}")
    half = grid.L / 2
    if window is None:
        w1 = w2 = (-half, half)
    elif np.isscalar(window[0]):
        w1 = w2 = tuple(window)
    else:
        w1, w2 = window
    fams = tuple(
        tuple(standard_family(n) for n in PIPELINE_FAMILIES[t]) for t in (t1, t2)
    )
    bank = FilterBank(TorusGrid(1, grid.L, grid.N))
    for fs, ss in zip(fams, (s1, s2)):
        for f in fs:
            for k in ss:
                f.mask(bank, k)
    annular = annular_axes(m0, coeff_kwargs.pop("annular", None))
    C = {}
    for k in s1:
        for l in s2:
            ct = coeff_tensor(
                m0,
                max(k, 1),
                max(l, 1),
                n_max,
                part=(t1, t2),
                period=period,
                annular=annular,
                **coeff_kwargs,
            )
            C[(k, l)] = ct.value((0, 0), (0, 0), (0, 0))
    top = max(abs(v) for v in C.values())
    if top == 0:
        raise ContractError("all zero-index coefficients vanish for this part")
    mass = _window_mass((t1, t2), period, annular=annular, **coeff_kwargs)
    rects = enumerate_rectangles(s1, s2, w1, w2)
    coefs = np.array([C[(R.I.k, R.J.k)] / top for R in rects], dtype=complex)
    pn = {
        (a, k): math.prod(f.kernel_norm(bank, k) for f in fams[a])
        for a, ss in enumerate((s1, s2))
        for k in ss
    }
    weights = np.array([pn[(0, R.I.k)] * pn[(1, R.J.k)] for R in rects])
    return DiscreteParaproductSpec(
        rects,
        coefs,
        fams,
        axis_types=(t1 if t1 == "ll" else "classical", t2 if t2 == "ll" else "classical"),
        localized=localized,
        lacunarity_bounds=PIPELINE_LACUNARITY,
        scale_factor=float(top / mass),
        norm_weights=weights,
        nu=nu,
        meta={"part": (t1, t2), "m0": m0.name, "scales": (tuple(s1), tuple(s2))},
    )


def _window_mass(part, period, step=1.0 / 64, pad=0.125, transition=2.0, annular=(False, False), **_):
    mass = 1.0
    for t, ann in zip(part, annular):
        for w in part_windows(t, pad, transition, ann):
            half = math.ceil(w.support / step)
            nodes = step * np.arange(-half, half + 1)
            mass *= float(np.sum(w(nodes)) * step / period)
    return mass


def pipeline_approximation(spec, f, g, method="fast"):
    """The operator a pipeline spec stands for: ``scale_factor * sum`` with unnormalized bumps."""
    coefs = spec.coefficients * spec.scale_factor
    tmp = DiscreteParaproductSpec(
        spec.rectangles,
        np.zeros(len(spec.rectangles)),
        spec.families,
        axis_types=spec.axis_types,
        localized=spec.localized,
        norm_weights=spec.norm_weights,
        nu=spec.nu,
    )
    return eval_discrete_paraproduct(tmp, f, g, method=method, coefficients=coefs)


# ---------------------------------------------------------------- text format


def spec_to_text(spec):
    """Line-oriented serialization.

    Header lines start with ``#``: one ``# families`` line per axis, then
    ``# axis_types``, ``# localized``, ``# lacunarity``, ``# scale_factor``
    and ``# nu``.  Each data line is ``k_I n_I k_J n_J re(c) im(c)``
    (or ``k n re im`` in 1D) with floats in round-trip form; a trailing
    ``w`` column carries the normalization weight when present.
    """
    lines = []
    for a, fs in enumerate(spec.families):
        lines.append(f"# families axis{a + 1}: " + ",".join(f.name for f in fs))
    lines.append("# axis_types: " + ",".join(spec.axis_types))
    lines.append(f"# localized: {int(spec.localized)}")
    lines.append("# lacunarity: {!r},{!r}".format(*map(float, spec.lacunarity_bounds)))
    lines.append(f"# scale_factor: {float(spec.scale_factor)!r}")
    lines.append("# nu: " + ",".join(repr(float(v)) for v in spec.nu))
    for i, R in enumerate(spec.rectangles):
        c = spec.coefficients[i]
        cols = []
        for iv in _intervals(R):
            cols += [str(iv.k), str(iv.n)]
        cols += [repr(float(c.real)), repr(float(c.imag))]
        if spec.norm_weights is not None:
            cols.append(repr(float(spec.norm_weights[i])))
        lines.append(" ".join(cols))
    return "\n".join(lines) + "\n"


def spec_from_text(text):
    """Inverse of :func:`spec_to_text`."""
    families, header = [], {}
    rects, coefs, weights = [], [], []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            key, val = key.strip(), val.strip()
            if key.startswith("families"):
                families.append(tuple(standard_family(n) for n in val.split(",")))
            else:
                header[key] = val
            continue
        parts = line.split()
        d = len(families)
        ivs = tuple(DyadicInterval(int(parts[2 * a]), int(parts[2 * a + 1])) for a in range(d))
        rects.append(DyadicRectangle(*ivs) if d == 2 else ivs[0])
        coefs.append(complex(float(parts[2 * d]), float(parts[2 * d + 1])))
        if len(parts) > 2 * d + 2:
            weights.append(float(parts[2 * d + 2]))
    if not families:
        raise ContractError("missing '# families' header")
    lac = tuple(float(v) for v in header.get("lacunarity", "0.25,4.0").split(","))
    return DiscreteParaproductSpec(
        rects,
        np.array(coefs, dtype=complex),
        families,
        axis_types=tuple(header["axis_types"].split(",")) if "axis_types" in header else None,
        localized=bool(int(header.get("localized", "0"))),
        lacunarity_bounds=lac,
        scale_factor=float(header.get("scale_factor", "1.0")),
        norm_weights=np.array(weights) if weights else None,
        nu=tuple(float(v) for v in header["nu"].split(",")) if "nu" in header else None,
    )
