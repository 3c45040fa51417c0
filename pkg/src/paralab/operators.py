"""Multiplier and pseudo-differential operators and their localization chain.

Operators act on sampled functions through their Fourier coefficients:

    T_m(f_1, ..., f_n)(x) = sum m(xi_1, ..., xi_n) f1_hat(xi_1) ... fn_hat(xi_n)
                            * exp(2 pi i x.(xi_1 + ... + xi_n)),

the sum running over the frequency lattice.  At sample points the phase is
periodic in ``xi_1 + ... + xi_n`` with period ``N/L`` per axis, so the
output spectrum can be folded back onto the lattice without loss.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .errors import (
    CapacityError,
    ConfigurationError,
    ContractError,
    QuadratureAccuracyError,
)
from .filterbank import PART_TYPES, FilterBank, axis_mask, smoothstep
from .grid import (
    FREQUENCY,
    SPACE,
    SampledFunction,
    fft_forward,
    fft_inverse,
    require_domain,
)
from .symbols import SymbolClass, SymbolSpec

__all__ = [
    "PART_HULLS",
    "PART_INNER",
    "CoeffTensor",
    "DecayFit",
    "LocalizationPartition",
    "RestrictedSymbolCoefficients",
    "annular_axes",
    "check_dual_window",
    "coeff_tensor",
    "eval_multiplier",
    "eval_pseudodiff",
    "fit_decay",
    "localize",
    "masked_symbol",
    "multiplier_operator",
    "part_windows",
    "radial_envelope",
    "restricted_symbol_coeffs",
    "sixteen_term_decomposition",
    "trilinear_form",
    "window_profile",
]

DEFAULT_MAX_PAIRS = 2**28


def _common_grid(fs):
    for f in fs:
        require_domain(f, SPACE)
    grid = fs[0].grid
    if any(f.grid != grid for f in fs[1:]):
        raise ContractError("inputs live on different grids")
    return grid


def _check_symbol(m, n, grid, x_dependent):
    if m.n != n:
        raise ContractError(f"symbol {m.name} is {m.n}-linear, got {n} inputs")
    if m.d != grid.dims:
        raise ContractError(f"symbol {m.name} has {m.d} parameters, grid has {grid.dims} axes")
    if m.x_dependent != x_dependent:
        kind = "x-dependent" if x_dependent else "x-independent"
        raise ContractError(f"symbol {m.name} must be {kind} here")


def _factor_table(m, b, u, v):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.asarray(m.factors[b](u, v), dtype=complex)
    if b in m.singular_blocks:
        t = np.where((u == 0) & (v == 0), 0.0, t)
    return np.broadcast_to(t, np.broadcast_shapes(np.shape(u), np.shape(v)))


def _fold_table(m, b, freqs):
    """``M[i, z] = m_b(freqs[i], freqs[(z - i) mod N])`` for one parameter block."""
    N = freqs.size
    ar = np.arange(N)
    eta = freqs[(ar[None, :] - ar[:, None]) % N]
    return _factor_table(m, b, freqs[:, None], eta)


def _separable_bilinear(m, F, G, freqs):
    N = freqs.size
    M1 = _fold_table(m, 0, freqs)
    M2 = _fold_table(m, 1, freqs)
    ar = np.arange(N)
    J = (ar[None, :] - ar[:, None]) % N
    H = np.empty((N, N), dtype=complex)
    FT = F.T
    for z in range(N):
        W = (FT * M1[:, z][None, :]) @ G[(z - ar) % N]
        H[z] = np.sum(M2 * np.take_along_axis(W, J, axis=1), axis=0)
    return H


def _blocked(m, spectra, grid, max_pairs, block_elems=2**20, x=None):
    n = len(spectra)
    d = grid.dims
    N = grid.N
    flat = [S.ravel() for S in spectra]
    supp = [np.flatnonzero(s) for s in flat]
    total = math.prod(len(s) for s in supp)
    if total > max_pairs:
        raise CapacityError(f"{total} frequency tuples exceed the budget of {max_pairs}")
    H = np.zeros(N**d, dtype=complex)
    if total == 0:
        return H.reshape(grid.shape)
    axis_idx = [np.unravel_index(s, grid.shape) for s in supp]
    lead = supp[:-1]
    if lead:
        grids = np.meshgrid(*[np.arange(len(s)) for s in lead], indexing="ij")
        combos = [g.ravel() for g in grids]
        ncombo = combos[0].size
    else:
        combos, ncombo = [], 1
    last = supp[-1]
    step = max(1, block_elems // max(len(last), 1))
    freqs = grid.freqs
    for start in range(0, ncombo, step):
        sl = slice(start, min(start + step, ncombo))
        sel = [c[sl] for c in combos]
        args = []
        target = []
        for a in range(d):
            acc = 0
            for j in range(n):
                if j < n - 1:
                    ia = axis_idx[j][a][sel[j]][:, None]
                else:
                    ia = axis_idx[j][a][None, :]
                args.append(freqs[ia])
                acc = acc + ia
            target.append(acc % N)
        coef = flat[-1][last][None, :]
        for j in range(n - 1):
            coef = coef * flat[j][supp[j][sel[j]]][:, None]
        vals = coef * m(*args, x=x)
        idx = np.ravel_multi_index(tuple(np.broadcast_arrays(*target)), grid.shape).ravel()
        vals = np.broadcast_to(vals, idx.shape if vals.ndim == 1 else vals.shape).ravel()
        H += np.bincount(idx, weights=vals.real, minlength=N**d)
        H += 1j * np.bincount(idx, weights=vals.imag, minlength=N**d)
    return H.reshape(grid.shape)


def _tensor(m, spectra, grid, max_pairs):
    if len(spectra) != 2:
        raise ContractError("the tabulated path handles bilinear symbols only")
    N, d = grid.N, grid.dims
    T = m.tabulate(grid, max_points=max_pairs)
    F, G = spectra
    ar = np.arange(N)
    if d == 1:
        W = T * F[:, None] * G[None, :]
        idx = (ar[:, None] + ar[None, :]) % N
    else:
        # T axes are (xi1, eta1, xi2, eta2)
        W = T * F[:, None, :, None] * G[None, :, None, :]
        s = (ar[:, None] + ar[None, :]) % N
        idx = s[:, :, None, None] * N + s[None, None, :, :]
    idx = np.broadcast_to(idx, W.shape).ravel()
    W = W.ravel()
    H = np.bincount(idx, weights=W.real, minlength=N**d) + 1j * np.bincount(
        idx, weights=W.imag, minlength=N**d
    )
    return H.reshape(grid.shape)


def eval_multiplier(m, *fs, method="auto", max_pairs=DEFAULT_MAX_PAIRS):
    """Apply the x-independent multiplier ``m`` to ``n`` sampled inputs.

    Parameters
    ----------
    m : SymbolSpec
        Symbol with ``m.n == len(fs)`` and ``m.d`` equal to the grid dimension.
    *fs : SampledFunction
        Space-domain inputs on one grid.
    method : {"auto", "separable", "blocked", "tensor"}
        ``separable`` needs ``m.factors`` (a product over the two parameter
        blocks) and costs one ``N x N x N`` matrix product per output row.
        ``blocked`` sums over all tuples of nonzero input coefficients in
        blocks.  ``tensor`` tabulates the full symbol (small grids only).
        ``auto`` picks ``separable`` when possible, else ``blocked``.
    max_pairs : int
        Budget for the number of frequency tuples (or tabulated points).

    Returns
    -------
    SampledFunction
        Output samples on the common grid.
    """
    if not fs:
        raise ContractError("at least one input is required")
    grid = _common_grid(fs)
    _check_symbol(m, len(fs), grid, x_dependent=False)
    spectra = [fft_forward(f).values for f in fs]
    separable = m.factors is not None and m.n == 2 and m.d == 2
    if method == "auto":
        method = "separable" if separable else "blocked"
    if method == "separable":
        if not separable:
            raise ContractError(f"symbol {m.name} declares no per-block factors")
        H = _separable_bilinear(m, spectra[0], spectra[1], grid.freqs)
    elif method == "blocked":
        H = _blocked(m, spectra, grid, max_pairs)
    elif method == "tensor":
        H = _tensor(m, spectra, grid, max_pairs)
    else:
        raise ValueError(f"unknown method {method!r}")
    return fft_inverse(SampledFunction(grid, H, FREQUENCY))


def multiplier_operator(m, **kwargs):
    """``(f, g) -> eval_multiplier(m, f, g, **kwargs)`` as a reusable handle."""
    return partial(eval_multiplier, m, **kwargs)


def eval_pseudodiff(a, f, g, method="auto", max_pairs=DEFAULT_MAX_PAIRS):
    """Apply the bilinear x-dependent symbol ``a`` to ``f`` and ``g``.

    ``method="terms"`` uses the finite expansion ``a = sum theta_j(x) m_j``
    declared in ``a.terms``; ``method="direct"`` evaluates the frequency
    double sum separately at every output point (cost ``N^d`` times the
    number of coefficient pairs).  ``auto`` prefers ``terms``.
    """
    grid = _common_grid([f, g])
    _check_symbol(a, 2, grid, x_dependent=True)
    if method == "auto":
        method = "terms" if a.terms else "direct"
    if method == "terms":
        if not a.terms:
            raise ContractError(f"symbol {a.name} declares no finite x-expansion")
        out = np.zeros(grid.shape, dtype=complex)
        x = grid.mesh()
        for theta, mj in a.terms:
            out += theta(x) * eval_multiplier(mj, f, g, max_pairs=max_pairs).values
        return SampledFunction(grid, out)
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    F = fft_forward(f).values.ravel()
    G = fft_forward(g).values.ravel()
    sf, sg = np.flatnonzero(F), np.flatnonzero(G)
    if len(sf) * len(sg) > max_pairs:
        raise CapacityError(f"{len(sf) * len(sg)} frequency pairs exceed the budget")
    fxi = [grid.freqs[i] for i in np.unravel_index(sf, grid.shape)]
    geta = [grid.freqs[i] for i in np.unravel_index(sg, grid.shape)]
    args = []
    for ax in range(grid.dims):
        args += [fxi[ax][:, None], geta[ax][None, :]]
    coords = [c.ravel() for c in np.meshgrid(*([grid.coords] * grid.dims), indexing="ij")]
    out = np.empty(len(coords[0]), dtype=complex)
    for p in range(out.size):
        xp = tuple(c[p] for c in coords)
        A = a(*args, x=xp)
        u = F[sf] * np.exp(2j * np.pi * sum(xp[ax] * fxi[ax] for ax in range(grid.dims)))
        v = G[sg] * np.exp(2j * np.pi * sum(xp[ax] * geta[ax] for ax in range(grid.dims)))
        out[p] = u @ np.broadcast_to(A, (len(sf), len(sg))) @ v
    return SampledFunction(grid, out.reshape(grid.shape))


# ---------------------------------------------------------------- localization


def _torus_offset(x, c, L):
    return (x - c + L / 2) % L - L / 2


@dataclass(frozen=True)
class LocalizationPartition:
    """Smooth partition of unity by integer translates on a torus with integer period.

    Each raw cell ``s((support - |x-n|)/(support - plateau))`` is 1 within
    ``plateau`` of ``n`` and vanishes beyond ``support``; dividing by the
    (positive, periodic) sum of all translates makes the partition exact.
    The companion window ``phi_tilde_n`` equals 1 on ``[n - support,
    n + support]`` and vanishes outside ``[n - wide, n + wide]``.
    """

    L: float
    plateau: float = 0.375
    support: float = 0.625
    wide: float = 2.0

    def __post_init__(self):
        if self.L != int(self.L):
            raise ConfigurationError(f"localization needs an integer period, got L={self.L}")
        if not (0 < self.plateau < 0.5 < self.support <= 1.0 and self.support < self.wide):
            raise ConfigurationError("need 0 < plateau < 1/2 < support <= 1 and support < wide")

    @property
    def centers(self):
        return np.arange(-int(self.L) // 2, int(self.L) // 2)

    def _raw(self, n, x):
        r = np.abs(_torus_offset(x, n, self.L))
        return smoothstep((self.support - r) / (self.support - self.plateau))

    def cell(self, n, x):
        """Normalized cell function ``phi'_n`` at points ``x``."""
        x = np.asarray(x, dtype=float)
        total = sum(self._raw(c, x) for c in self.centers)
        return self._raw(n, x) / total

    def companion(self, n, x):
        """Wide window ``phi_tilde_n`` (equal to 1 on the support of ``phi'_n``)."""
        x = np.asarray(x, dtype=float)
        r = np.abs(x - n)
        return smoothstep((self.wide - r) / (self.wide - self.support))

    def residual(self, grid):
        """Max deviation of ``sum_n phi'_n`` from 1 over the grid samples."""
        x = grid.coords
        return float(np.max(np.abs(sum(self.cell(c, x) for c in self.centers) - 1.0)))


def localize(T, n, m, f, g, partition=None):
    """``T(f, g) * (phi'_n (x) phi''_m)`` for an operator handle ``T``.

    ``T`` is any callable ``(f, g) -> SampledFunction``; ``T`` may also be
    a precomputed output.
    """
    out = T if isinstance(T, SampledFunction) else T(f, g)
    grid = out.grid
    part = partition if partition is not None else LocalizationPartition(grid.L)
    x = grid.mesh()
    w = part.cell(n, x[0])
    if grid.dims == 2:
        w = w * part.cell(m, x[1])
    return out.with_values(out.values * w)


# ---------------------------------------------------------------- symbol Fourier coefficients


class RestrictedSymbolCoefficients:
    """Fourier coefficients in x of ``a(x, .) * phi_tilde'_{n0}(x1) phi_tilde''_{m0}(x2)``.

    ``m_l(xi, eta) = P^-2 * integral a(x, xi, eta) w(x) exp(-2 pi i x.l / P) dx``
    for integer ``l`` with ``|l|_inf <= l_max``.  ``period`` ``P = 1`` is the
    integer-frequency expansion; ``P >= 2*wide`` makes the series reproduce
    the windowed symbol on the whole window support.
    """

    def __init__(self, a, n0, m0, l_max, period=1.0, partition=None, resolution=64):
        if a.n != 2 or a.d != 2:
            raise ContractError("restricted coefficients are defined for bilinear 2-parameter symbols")
        self.a = a
        self.n0, self.m0 = n0, m0
        self.l_max = int(l_max)
        self.period = float(period)
        self.partition = partition if partition is not None else LocalizationPartition(32)
        w = self.partition.wide
        npts = int(round(2 * w * resolution)) + 1
        self.x1 = n0 - w + np.arange(npts) / resolution
        self.x2 = m0 - w + np.arange(npts) / resolution
        self.dx = 1.0 / resolution
        self.w1 = self.partition.companion(n0, self.x1)
        self.w2 = self.partition.companion(m0, self.x2)
        ls = np.arange(-self.l_max, self.l_max + 1)
        self.ls = ls
        self.E1 = np.exp(-2j * np.pi * np.outer(ls, self.x1) / self.period)
        self.E2 = np.exp(-2j * np.pi * np.outer(ls, self.x2) / self.period)
        self._norm = self.dx**2 / self.period**2

    def window_transform(self):
        """``c(l)``: the coefficients of the window alone, shape ``(2l+1, 2l+1)``."""
        return self._norm * np.outer(self.E1 @ self.w1, self.E2 @ self.w2)

    def coefficients(self, xi1, eta1, xi2, eta2, chunk=16):
        """``m_l`` at the given frequency points; shape ``(2l+1, 2l+1, P)``."""
        pts = [np.atleast_1d(np.asarray(v, dtype=float)).ravel() for v in (xi1, eta1, xi2, eta2)]
        P = pts[0].size
        out = np.empty((self.ls.size, self.ls.size, P), dtype=complex)
        if self.a.terms and self.a.x_dependent:
            x = (self.x1[:, None], self.x2[None, :])
            w = self.w1[:, None] * self.w2[None, :]
            for j, (theta, mj) in enumerate(self.a.terms):
                c = self._norm * (self.E1 @ (theta(x) * w) @ self.E2.T)
                contrib = c[:, :, None] * mj(*pts)[None, None, :]
                out = contrib if j == 0 else out + contrib
            return out
        if not self.a.x_dependent:
            return self.window_transform()[:, :, None] * self.a(*pts)[None, None, :]
        X1 = self.x1[:, None, None]
        X2 = self.x2[None, :, None]
        w = (self.w1[:, None] * self.w2[None, :])[:, :, None]
        for s in range(0, P, chunk):
            sl = slice(s, min(s + chunk, P))
            A = self.a(*[p[None, None, sl] for p in pts], x=(X1, X2)) * w
            out[:, :, sl] = self._norm * np.einsum("ax,xyp,by->abp", self.E1, A, self.E2)
        return out

    def symbol(self, l1, l2):
        """``m_l`` as an x-independent :class:`SymbolSpec`."""
        i1, i2 = l1 + self.l_max, l2 + self.l_max

        def ev(freqs, x):
            shape = np.broadcast_shapes(*(np.shape(v) for v in freqs))
            flat = [np.broadcast_to(v, shape).ravel() for v in freqs]
            return self.coefficients(*flat)[i1, i2].reshape(shape)

        return SymbolSpec(
            f"{self.a.name}[l=({l1},{l2})]",
            2,
            2,
            ev,
            SymbolClass(self.a.claimed_class.kind if not self.a.x_dependent else "inhomog_biparam"),
        )

    def reconstruct(self, coeffs, x1, x2, l_max=None):
        """Partial Fourier sum ``sum_{|l| <= l_max} m_l exp(2 pi i x.l / P)``."""
        l_max = self.l_max if l_max is None else int(l_max)
        keep = np.abs(self.ls) <= l_max
        c = coeffs[np.ix_(keep, keep)]
        e1 = np.exp(2j * np.pi * np.outer(np.atleast_1d(x1), self.ls[keep]) / self.period)
        e2 = np.exp(2j * np.pi * np.outer(np.atleast_1d(x2), self.ls[keep]) / self.period)
        return np.einsum("pa,abp,pb->p", e1, c, e2)

    def target(self, x1, x2, xi1, eta1, xi2, eta2):
        """The windowed symbol the series should reproduce."""
        x1, x2 = np.atleast_1d(x1), np.atleast_1d(x2)
        w = self.partition.companion(self.n0, x1) * self.partition.companion(self.m0, x2)
        if self.a.x_dependent:
            return self.a(xi1, eta1, xi2, eta2, x=(x1, x2)) * w
        return self.a(xi1, eta1, xi2, eta2) * w


def restricted_symbol_coeffs(a, n0, m0, l_max, period=1.0, partition=None, resolution=64):
    """Fourier coefficients ``{m_l}`` of the symbol restricted to cell ``(n0, m0)``.

    See :class:`RestrictedSymbolCoefficients`.
    """
    return RestrictedSymbolCoefficients(a, n0, m0, l_max, period, partition, resolution)


# ---------------------------------------------------------------- sixteen-term decomposition


def masked_symbol(m0, bank, t1, t2):
    """``m0 * mask_{t1}(xi1, eta1) * mask_{t2}(xi2, eta2)`` as a symbol."""
    if m0.x_dependent:
        raise ContractError("the sixteen-term decomposition takes an x-independent symbol")

    def ev(freqs, x):
        xi1, eta1, xi2, eta2 = freqs
        return m0(*freqs) * axis_mask(bank, t1, xi1, eta1) * axis_mask(bank, t2, xi2, eta2)

    factors = None
    if m0.factors is not None:
        f1, f2 = m0.factors
        factors = (
            lambda u, v: f1(u, v) * axis_mask(bank, t1, u, v),
            lambda u, v: f2(u, v) * axis_mask(bank, t2, u, v),
        )
    return SymbolSpec(
        f"{m0.name}*({t1},{t2})",
        2,
        2,
        ev,
        m0.claimed_class,
        singular_blocks=m0.singular_blocks,
        bound=m0.bound,
        factors=factors,
    )


def _out_of_band(f, bank):
    F = np.abs(fft_forward(f).values) ** 2
    keep = bank.mask("phi", bank.k_max) > 0
    inside = F[np.ix_(keep, keep)].sum() if F.ndim == 2 else F[keep].sum()
    total = F.sum()
    return 0.0 if total == 0 else float((total - inside) / total)


def sixteen_term_decomposition(m0, f, g, bank=None, **kwargs):
    """Split ``T_{m0}(f, g)`` into the sixteen tensor parts ``(t1, t2)``.

    Part ``(t1, t2)`` applies ``m0`` times the axis-1 mask of type ``t1`` and
    the axis-2 mask of type ``t2``.  The parts add up to ``T_{m0}(f, g)``
    when ``f`` and ``g`` are band-limited inside ``supp phi_{k_max}`` on each
    axis; otherwise a ``RuntimeWarning`` reports the out-of-band energy.

    Returns
    -------
    dict
        ``{(t1, t2): SampledFunction}`` in row-major order of PART_TYPES.
    """
    grid = _common_grid([f, g])
    if grid.dims != 2:
        raise ContractError("the sixteen-term decomposition needs a 2D grid")
    bank = bank if bank is not None else FilterBank(grid)
    for name, h in (("f", f), ("g", g)):
        leak = _out_of_band(h, bank)
        if leak > 1e-12:
            warnings.warn(
                f"{name} is not band-limited inside supp phi_k_max "
                f"(relative out-of-band energy {leak:.3g}); the parts need not sum to T",
                RuntimeWarning,
                stacklevel=2,
            )
    return {
        (t1, t2): eval_multiplier(masked_symbol(m0, bank, t1, t2), f, g, **kwargs)
        for t1 in PART_TYPES
        for t2 in PART_TYPES
    }


def trilinear_form(T_output, h, conjugate=False):
    """Riemann sum of ``T_output * h`` (or ``T_output * conj(h)`` with ``conjugate``)."""
    require_domain(T_output, SPACE)
    require_domain(h, SPACE)
    if T_output.grid != h.grid:
        raise ContractError("inputs live on different grids")
    hv = np.conj(h.values) if conjugate else h.values
    return complex(np.sum(T_output.values * hv) * T_output.grid.h**T_output.grid.dims)


def check_dual_window(bank, k, t="lh", samples=20001):
    """Verify that the output frequencies of an axis part lie on the psi' plateau.

    For the low-high and high-low axis types at scale ``k``, every
    ``xi + eta`` with ``phi_tilde_k(xi) psi_k(eta) != 0`` (or the mirror)
    must satisfy ``psi_prime_k(xi + eta) = 1``.  Returns the largest
    deviation ``|1 - psi_prime_k|`` over sampled support pairs.
    """
    ev = bank._evaluate
    r = 4.0 * 2.0**k
    xi = np.linspace(-r, r, samples)
    a_kind, b_kind = ("phi_tilde", "psi") if t == "lh" else ("psi", "phi_tilde")
    A = ev(a_kind, k, xi)
    B = ev(b_kind, k, xi)
    ia, ib = np.flatnonzero(A > 0), np.flatnonzero(B > 0)
    worst = 0.0
    for chunk in np.array_split(ia, max(1, len(ia) // 500)):
        s = xi[chunk][:, None] + xi[ib][None, :]
        worst = max(worst, float(np.max(np.abs(1.0 - bank.profiles.psi_prime(s / 2.0**k)))))
    return worst


# ---------------------------------------------------------------- coefficient tensors

# hull radii of the (xi, eta, gamma) supports per axis type, in units of 2^k
PART_HULLS = {
    "lh": (2.0 / 3.0, 8.0 / 3.0, 4.0),
    "hl": (8.0 / 3.0, 2.0 / 3.0, 4.0),
    "hh": (8.0 / 3.0, 16.0 / 3.0, 8.0),
    "ll": (8.0 / 3.0, 8.0 / 3.0, 16.0 / 3.0),
}

# inner radii of the annular (psi, psi_tilde) supports; 0 means the support reaches the origin
PART_INNER = {
    "lh": (0.0, 0.75, 0.0),
    "hl": (0.75, 0.0, 0.0),
    "hh": (0.75, 0.375, 0.0),
    "ll": (0.0, 0.0, 0.0),
}


def window_profile(radius, pad=0.125, transition=2.0, inner=0.0):
    """Even smooth window: 1 on ``inner - pad <= |t| <= radius + pad``.

    Beyond the plateau it falls to 0 over ``transition``.  With ``inner > pad``
    it also rises from 0 at the origin, flat to all orders there, which
    smooths out the singularity of homogeneous symbols.
    """
    top = radius + pad
    low = inner - pad if inner > pad else 0.0

    def w(t):
        a = np.abs(t)
        out = smoothstep((top + transition - a) / transition)
        if low > 0:
            out = out * smoothstep(a / low)
        return out

    w.plateau = top
    w.inner = low
    w.support = top + transition
    return w


def part_windows(t, pad=0.125, transition=2.0, annular=False):
    """The three 1D windows ``(lambda_xi, lambda_eta, lambda_gamma)`` of axis type ``t``.

    ``annular`` carves the origin out of the windows whose support is an
    annulus (``psi`` and ``psi_tilde`` factors); otherwise every window is
    a centered box.
    """
    inner = PART_INNER[t] if annular else (0.0, 0.0, 0.0)
    return tuple(window_profile(r, pad, transition, i) for r, i in zip(PART_HULLS[t], inner))


def _quad_nodes(w, step):
    half = math.ceil(w.support / step)
    return step * np.arange(-half, half + 1)


def _dft(n_max, nodes, period):
    n = np.arange(-n_max, n_max + 1)
    return np.exp(-2j * np.pi * np.outer(n, nodes) / period)


@dataclass
class CoeffTensor:
    """Fourier coefficients ``C^{k,l}_{n1,n2,n3}`` of a windowed, rescaled symbol.

    The six-dimensional array factors as ``D[n1', n2', n1'', n2''] *
    G1[n3'] * G2[n3'']`` because the symbol does not depend on the output
    frequency.  When the symbol is a product over parameter blocks the core
    factors further into ``D1[n1', n2'] * D2[n1'', n2'']``.  Index ``n1``
    pairs with ``xi``, ``n2`` with ``eta`` and ``n3`` with ``gamma``; primes
    mark the first parameter.
    """

    k: int
    l: int
    n_max: int
    part: tuple
    period: float
    G1: np.ndarray
    G2: np.ndarray
    D1: np.ndarray = None
    D2: np.ndarray = None
    core: np.ndarray = None
    fits: dict = field(default_factory=dict)

    @property
    def index(self):
        return np.arange(-self.n_max, self.n_max + 1)

    def _core_max(self):
        if self.core is not None:
            return float(np.abs(self.core).max())
        return float(np.abs(self.D1).max() * np.abs(self.D2).max())

    def value(self, n1, n2, n3):
        """Single coefficient ``C_{n1, n2, n3}`` (each ``n_j`` a pair)."""
        o = self.n_max
        g = self.G1[n3[0] + o] * self.G2[n3[1] + o]
        if self.core is not None:
            return complex(self.core[n1[0] + o, n2[0] + o, n1[1] + o, n2[1] + o] * g)
        return complex(self.D1[n1[0] + o, n2[0] + o] * self.D2[n1[1] + o, n2[1] + o] * g)

    def array(self, max_entries=2**24):
        """Full six-index array ``C[n1', n1'', n2', n2'', n3', n3'']``."""
        size = (2 * self.n_max + 1) ** 6
        if size > max_entries:
            raise CapacityError(f"full coefficient array has {size} entries")
        core = self.core
        if core is None:
            core = np.einsum("ab,cd->abcd", self.D1, self.D2)
        # core axes are (n1', n2', n1'', n2'')
        full = np.einsum("abcd,e,f->acbdef", core, self.G1, self.G2)
        return full

    def direction_max(self, j):
        """``max |C|`` over all indices except ``n_j``, as a 2D array over ``n_j``."""
        gmax = float(np.abs(self.G1).max() * np.abs(self.G2).max())
        if j == 3:
            return np.outer(np.abs(self.G1), np.abs(self.G2)) * self._core_max()
        if self.core is not None:
            A = np.abs(self.core)
            if j == 1:
                red = A.max(axis=(1, 3))  # over n2', n2''
            else:
                red = A.max(axis=(0, 2))
            return red * gmax
        A1, A2 = np.abs(self.D1), np.abs(self.D2)
        if j == 1:
            return np.outer(A1.max(axis=1), A2.max(axis=1)) * gmax
        return np.outer(A1.max(axis=0), A2.max(axis=0)) * gmax

    def decay_fits(self, r_range=(2, 16)):
        """Tail-envelope decay fit per direction ``n1, n2, n3``."""
        out = {}
        for j in (1, 2, 3):
            out[j] = fit_decay(self.direction_max(j), r_range)
        self.fits = out
        return out


def _core_separable(f, scale, wx, we, n_max, step, period):
    xs = _quad_nodes(wx, step)
    es = _quad_nodes(we, step)
    vals = f(2.0**scale * xs[:, None], 2.0**scale * es[None, :])
    vals = np.asarray(vals, dtype=complex) * wx(xs)[:, None] * we(es)[None, :]
    Ex = _dft(n_max, xs, period)
    Ee = _dft(n_max, es, period)
    return (step**2 / period**2) * (Ex @ vals @ Ee.T)


def _gamma(w, n_max, step, period):
    gs = _quad_nodes(w, step)
    return (step / period) * (_dft(n_max, gs, period) @ w(gs))


def _core_generic(m0, scales, windows, n_max, step, period, max_points):
    (k, l), ((wx1, we1), (wx2, we2)) = scales, windows
    nodes = [_quad_nodes(w, step) for w in (wx1, we1, wx2, we2)]
    count = math.prod(len(v) for v in nodes)
    if count > max_points:
        raise CapacityError(
            f"generic coefficient quadrature needs {count} nodes; "
            "raise the step or supply a product symbol"
        )
    x1, e1, x2, e2 = np.meshgrid(*nodes, indexing="ij", sparse=True)
    vals = np.asarray(m0(2.0**k * x1, 2.0**k * e1, 2.0**l * x2, 2.0**l * e2), dtype=complex)
    vals = vals * wx1(x1) * we1(e1) * wx2(x2) * we2(e2)
    out = vals
    for v in nodes:
        # contract the leading axis; the transformed index moves to the back
        out = np.tensordot(out, _dft(n_max, v, period), axes=([0], [1]))
    return (step**4 / period**4) * out  # axes (n1', n2', n1'', n2'')


def _compute(m0, k, l, n_max, part, period, step, pad, transition, max_points, annular):
    t1, t2 = part
    w1 = part_windows(t1, pad, transition, annular[0])
    w2 = part_windows(t2, pad, transition, annular[1])
    # ll axes carry no dyadic scale
    s1 = 0 if t1 == "ll" else k
    s2 = 0 if t2 == "ll" else l
    G1 = _gamma(w1[2], n_max, step, period)
    G2 = _gamma(w2[2], n_max, step, period)
    if m0.factors is not None:
        f1 = partial(_factor_table, m0, 0)
        f2 = partial(_factor_table, m0, 1)
        D1 = _core_separable(f1, s1, w1[0], w1[1], n_max, step, period)
        D2 = _core_separable(f2, s2, w2[0], w2[1], n_max, step, period)
        return CoeffTensor(k, l, n_max, part, period, G1, G2, D1=D1, D2=D2)
    core = _core_generic(
        m0, (s1, s2), ((w1[0], w1[1]), (w2[0], w2[1])), n_max, step, period, max_points
    )
    return CoeffTensor(k, l, n_max, part, period, G1, G2, core=core)


def annular_axes(m0, annular=None):
    """Per-axis window choice for :func:`coeff_tensor` as a pair of bools."""
    if annular is None:
        return tuple(a in m0.singular_blocks for a in (0, 1))
    if isinstance(annular, bool):
        return (annular, annular)
    return tuple(bool(a) for a in annular)


def coeff_tensor(
    m0,
    k,
    l,
    n_max,
    part=("lh", "hl"),
    period=1.0,
    step=1.0 / 64,
    pad=0.125,
    transition=2.0,
    check_tol=1e-6,
    max_points=2**25,
    annular=None,
):
    """Fourier coefficients of ``m0(2^k xi', 2^l xi'', ...)`` times the part windows.

    Parameters
    ----------
    m0 : SymbolSpec
        x-independent bilinear symbol in two parameters.  Product symbols
        (``m0.factors`` set) use two 2D quadratures; anything else needs a
        4D quadrature and is limited by ``max_points``.
    k, l : int
        Scales of the two axes (ignored on ``ll`` axes).
    n_max : int
        Coefficient index range ``|n| <= n_max`` per component.
    part : tuple of str
        Axis types selecting the windows.
    period : float
        Period of the Fourier expansion; 1 gives integer frequencies.
    step : float
        Quadrature spacing in the rescaled frequency variables.
    pad, transition : float
        Window plateau padding beyond the support hull, and the width of the
        smooth fall-off.
    check_tol : float or None
        Recompute at half the step and raise
        :class:`~paralab.errors.QuadratureAccuracyError` if the two results
        differ by more than this (relative to the largest coefficient).
    annular : bool or (bool, bool), optional
        Per axis, use windows that vanish at the origin on the annular
        factors (see :func:`part_windows`).  The default does so on the axes
        whose parameter block ``m0`` declares singular, where the windowed
        symbol would otherwise not be smooth.
    """
    if m0.x_dependent or m0.n != 2 or m0.d != 2:
        raise ContractError("coeff_tensor takes an x-independent bilinear 2-parameter symbol")
    if k < 1 or l < 1:
        raise ConfigurationError("scales must satisfy k, l >= 1")
    annular = annular_axes(m0, annular)
    args = (m0, k, l, n_max, tuple(part), period)
    ct = _compute(*args, step, pad, transition, max_points, annular)
    if check_tol is not None:
        fine = _compute(*args, step / 2, pad, transition, max_points * 16, annular)
        pairs = [(ct.G1, fine.G1), (ct.G2, fine.G2)]
        if ct.core is not None:
            pairs.append((ct.core, fine.core))
        else:
            pairs += [(ct.D1, fine.D1), (ct.D2, fine.D2)]
        for coarse, refined in pairs:
            gap = float(np.abs(refined - coarse).max() / np.abs(refined).max())
            if gap > check_tol:
                raise QuadratureAccuracyError(
                    f"quadrature at step {step} disagrees with step {step / 2} by {gap:.3g}",
                    coarse,
                    refined,
                    gap,
                )
    return ct


# ---------------------------------------------------------------- decay fits


@dataclass
class DecayFit:
    """Least-squares line through ``log E(r)`` against ``log r``."""

    slope: float
    intercept: float
    r2: float
    radii: np.ndarray
    envelope: np.ndarray

    def rows(self):
        """``(|index|, max_abs, fitted_slope)`` tuples for CSV output."""
        return [(float(r), float(e), self.slope) for r, e in zip(self.radii, self.envelope)]


def radial_envelope(values, radii):
    """``E(r) = max |values|`` over entries with Euclidean index norm ``>= r``.

    ``values`` is indexed by the centered box ``[-n, n]^dim``.
    """
    a = np.abs(np.asarray(values))
    n = (a.shape[0] - 1) // 2
    axes = np.meshgrid(*([np.arange(-n, n + 1)] * a.ndim), indexing="ij")
    norm = np.sqrt(sum(ax.astype(float) ** 2 for ax in axes))
    return np.array([a[norm >= r].max() for r in radii])


def fit_decay(values, r_range=(2, 16)):
    """Fit the decay rate of coefficients indexed by a centered box.

    The raw coefficients oscillate through zeros, so the fit uses the tail
    envelope ``E(r) = max_{|n| >= r} |c_n|`` at integer radii in
    ``r_range``, which is nonincreasing and bounds every coefficient
    beyond ``r``.
    """
    radii = np.arange(r_range[0], r_range[1] + 1, dtype=float)
    env = radial_envelope(values, radii)
    lx, ly = np.log(radii), np.log(env)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(slope), float(intercept), r2, radii, env)
