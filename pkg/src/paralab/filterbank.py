"""Littlewood-Paley filter banks built from a C-infinity smoothstep.

The low-pass profile ``phi_hat`` equals 1 on ``|xi| <= 3/4`` and vanishes
for ``|xi| >= 4/3``; ``psi_hat(xi) = phi_hat(xi/2) - phi_hat(xi)`` lives on
the annulus ``3/4 <= |xi| <= 8/3``.  Dyadic dilates give the bank

    phi_k(xi)       = phi_hat(xi / 2^k)
    psi_k(xi)       = psi_hat(xi / 2^k),   psi_{-1} = phi_hat
    phi_tilde_k     = phi_{k-1}            (k >= 1)
    psi_tilde_k     = sum_{|k'-k| <= 1, 0 <= k' <= k_max} psi_{k'}
    psi_prime_k(xi) = psi_prime(xi / 2^k)

and ``sum_{k=-1}^{K} psi_k = phi_{K+1}`` holds term by term.
"""

from __future__ import annotations

import csv
import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError, ScaleRangeError
from .grid import SPACE, SampledFunction, fft_forward, fft_inverse, require_domain

__all__ = [
    "PART_TYPES",
    "BonyParts",
    "FilterBank",
    "MotherProfile",
    "MotherProfiles",
    "axis_mask",
    "bony_decompose",
    "build_mother_profiles",
    "default_k_max",
    "export_mask_csv",
    "lp_project",
    "part_index",
    "part_types",
    "smoothstep",
    "symbol_one_masks",
]

KINDS = ("phi", "psi", "phi_tilde", "psi_tilde", "psi_prime")


def smoothstep(t, sharpness=1.0):
    """C-infinity step ``g(t) / (g(t) + g(1-t))`` with ``g(t) = exp(-sharpness/t)``.

    Equals 0 for ``t <= 0`` and 1 for ``t >= 1``; ``s(t) + s(1-t) = 1``.
    """
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0, np.exp(-sharpness / np.where(t > 0, t, 1.0)), 0.0)
        u = 1.0 - t
        b = np.where(u > 0, np.exp(-sharpness / np.where(u > 0, u, 1.0)), 0.0)
        out = a / (a + b)
    out = np.where(t <= 0, 0.0, np.where(t >= 1, 1.0, out))
    return out


def _fall(x, plateau, support, sharpness):
    # 1 for x <= plateau, 0 for x >= support
    return smoothstep((support - x) / (support - plateau), sharpness)


def _rise(x, support, plateau, sharpness):
    # 0 for x <= support, 1 for x >= plateau
    return smoothstep((x - support) / (plateau - support), sharpness)


@dataclass(frozen=True)
class MotherProfile:
    """A named even frequency profile with its declared support and plateau.

    ``support`` and ``plateau`` list closed intervals of ``|xi|``; the
    profile vanishes outside the support and equals 1 on the plateau.
    """

    name: str
    evaluator: object = field(repr=False)
    support: tuple
    plateau: tuple

    def __call__(self, xi):
        return self.evaluator(np.asarray(xi, dtype=float))

    @property
    def radius(self):
        """Largest ``|xi|`` in the support."""
        return max(b for _, b in self.support)


@dataclass(frozen=True)
class MotherProfiles:
    phi: MotherProfile
    psi: MotherProfile
    psi_tilde_sum: MotherProfile
    psi_prime: MotherProfile
    sharpness: float = 1.0

    def __iter__(self):
        return iter((self.phi, self.psi, self.psi_tilde_sum, self.psi_prime))


def build_mother_profiles(transition_sharpness=1.0):
    """Construct ``phi_hat``, ``psi_hat``, the three-band sum and ``psi_prime``.

    Parameters
    ----------
    transition_sharpness : float
        Constant in ``exp(-c/t)``; larger values steepen the middle of each
        transition without moving its endpoints.
    """
    c = float(transition_sharpness)
    if not c > 0:
        raise ConfigurationError("transition_sharpness must be positive")

    def phi(xi):
        return _fall(np.abs(xi), 0.75, 4.0 / 3.0, c)

    def psi(xi):
        return phi(xi / 2) - phi(xi)

    def psi_tilde_sum(xi):
        return psi(2 * xi) + psi(xi) + psi(xi / 2)

    def psi_prime(xi):
        a = np.abs(xi)
        return _rise(a, 1.0 / 16, 1.0 / 12, c) * _fall(a, 10.0 / 3, 4.0, c)

    return MotherProfiles(
        phi=MotherProfile("phi", phi, ((0.0, 4 / 3),), ((0.0, 0.75),)),
        psi=MotherProfile("psi", psi, ((0.75, 8 / 3),), ((4 / 3, 1.5),)),
        psi_tilde_sum=MotherProfile(
            "psi_tilde_sum", psi_tilde_sum, ((0.375, 16 / 3),), ((2 / 3, 3.0),)
        ),
        psi_prime=MotherProfile("psi_prime", psi_prime, ((1 / 16, 4.0),), ((1 / 12, 10 / 3),)),
        sharpness=c,
    )


def default_k_max(grid):
    """Largest ``k`` with ``supp psi_k`` inside the Nyquist band."""
    return math.floor(math.log2(grid.nyquist * 3.0 / 8.0))


class FilterBank:
    """Dyadic masks on the frequency lattice of a grid.

    Parameters
    ----------
    grid : TorusGrid
    k_max : int, optional
        Truncation scale; defaults to :func:`default_k_max`.  Smaller values
        are allowed (truncated experiments), larger ones are not.
    profiles : MotherProfiles, optional
    """

    k_min = -1

    def __init__(self, grid, k_max=None, profiles=None):
        self.grid = grid
        self.profiles = profiles if profiles is not None else build_mother_profiles()
        top = default_k_max(grid)
        if top < -1:
            raise ConfigurationError(
                f"grid {grid} resolves no dyadic band (k_max formula gives {top})"
            )
        if k_max is None:
            k_max = top
        if k_max > top:
            raise ScaleRangeError(f"k_max={k_max} exceeds the resolvable maximum {top}")
        if k_max < -1:
            raise ScaleRangeError("k_max must be at least -1")
        self.k_max = int(k_max)
        self._cache = {}

    def __repr__(self):
        return f"FilterBank(grid={self.grid!r}, k_max={self.k_max})"

    def max_scale(self, kind):
        """Largest ``k`` at which the ``kind`` mask fits inside the Nyquist band."""
        if kind == "psi_prime":
            return min(self.k_max, math.floor(math.log2(self.grid.nyquist / 4.0)))
        return self.k_max

    def _check(self, kind, k):
        if kind not in KINDS:
            raise ValueError(f"unknown mask kind {kind!r}")
        lo = {"phi_tilde": 1, "psi_tilde": 0, "psi_prime": 0}.get(kind, -1)
        if not lo <= k <= self.max_scale(kind):
            raise ScaleRangeError(
                f"{kind} mask at k={k} outside [{lo}, {self.max_scale(kind)}]"
            )

    def evaluate(self, kind, k, xi):
        """Mask value at arbitrary frequencies ``xi`` (no lattice restriction)."""
        self._check(kind, k)
        return self._evaluate(kind, k, np.asarray(xi, dtype=float))

    def _evaluate(self, kind, k, xi):
        phi = self.profiles.phi
        if kind == "phi":
            return phi(xi / 2.0**k)
        if kind == "psi":
            if k == -1:
                return phi(xi)
            return phi(xi / 2.0 ** (k + 1)) - phi(xi / 2.0**k)
        if kind == "phi_tilde":
            return phi(xi / 2.0 ** (k - 1))
        if kind == "psi_tilde":
            out = np.zeros_like(xi)
            for kk in range(max(k - 1, 0), min(k + 1, self.k_max) + 1):
                out = out + self._evaluate("psi", kk, xi)
            return out
        return self.profiles.psi_prime(xi / 2.0**k)

    def mask(self, kind, k):
        """1D mask on the grid's frequency lattice (FFT order); cached, read-only."""
        self._check(kind, k)
        key = (kind, k)
        if key not in self._cache:
            m = self._evaluate(kind, k, self.grid.freqs)
            m.flags.writeable = False
            self._cache[key] = m
        return self._cache[key]


def _axis_view(m, axis, dims):
    shape = [1] * dims
    shape[axis] = m.size
    return m.reshape(shape)


def lp_project(f, k, kind, bank=None, axis=None):
    """Convolve ``f`` with a dyadic kernel by multiplying its spectrum by a mask.

    Parameters
    ----------
    f : SampledFunction
        Space-domain input.
    k : int or tuple of int
        Scale, or one scale per axis.
    kind : str or tuple of str
        One of ``phi, psi, phi_tilde, psi_tilde, psi_prime``, or one per axis.
    bank : FilterBank, optional
        Built on ``f.grid`` when omitted.
    axis : int, optional
        For 2D inputs, project along this axis only.  By default every axis
        gets the mask (a tensor-product projection).
    """
    require_domain(f, SPACE)
    bank = bank if bank is not None else FilterBank(f.grid)
    if bank.grid != f.grid:
        raise ContractError("filter bank and input live on different grids")
    dims = f.grid.dims
    if axis is not None:
        axes = [axis]
        ks, kinds = [k], [kind]
    else:
        axes = list(range(dims))
        ks = list(k) if isinstance(k, (tuple, list)) else [k] * dims
        kinds = [kind] * dims if isinstance(kind, str) else list(kind)
    F = fft_forward(f).values
    for ax, kk, kd in zip(axes, ks, kinds):
        F = F * _axis_view(bank.mask(kd, kk), ax, dims)
    return fft_inverse(SampledFunction(f.grid, F, "frequency"))


BonyParts = namedtuple("BonyParts", ["lh", "hl", "hh", "ll"])


def bony_decompose(f, g, bank=None, axis=0):
    """Split ``f*g`` into low-high, high-low, high-high and low-low paraproducts.

    All dyadic sums stop at ``bank.k_max``.  For 2D inputs the split acts
    along ``axis``.  The parts add up to ``f*g`` whenever both inputs are
    band-limited inside ``supp phi_{k_max}``.

    Returns
    -------
    BonyParts
        Named tuple ``(lh, hl, hh, ll)`` of space-domain functions.
    """
    require_domain(f, SPACE)
    require_domain(g, SPACE)
    if f.grid != g.grid:
        raise ContractError("f and g live on different grids")
    bank = bank if bank is not None else FilterBank(f.grid)
    K = bank.k_max
    dims = f.grid.dims
    F = fft_forward(f).values
    G = fft_forward(g).values

    def proj(H, kind, k):
        m = _axis_view(bank.mask(kind, k), axis, dims)
        return np.fft.fftshift(np.fft.ifftn(H * m)) * H.size

    lh = np.zeros(f.grid.shape, dtype=complex)
    hl = np.zeros_like(lh)
    hh = np.zeros_like(lh)
    for k in range(1, K + 1):
        lh += proj(F, "phi_tilde", k) * proj(G, "psi", k)
        hl += proj(F, "psi", k) * proj(G, "phi_tilde", k)
    for k in range(K + 1):
        hh += proj(F, "psi", k) * proj(G, "psi_tilde", k)
    f_lo, g_lo = proj(F, "phi", 0), proj(G, "phi", 0)
    f_0, g_0 = proj(F, "psi", 0), proj(G, "psi", 0)
    ll = f_lo * g_0 + f_0 * g_lo + f_lo * g_lo
    wrap = f.with_values
    return BonyParts(wrap(lh), wrap(hl), wrap(hh), wrap(ll))


PART_TYPES = ("lh", "hl", "hh", "ll")


def part_index(t1, t2):
    """1-based index of the part ``(t1, t2)`` in row-major order over PART_TYPES."""
    return 4 * PART_TYPES.index(t1) + PART_TYPES.index(t2) + 1


def part_types(index):
    """Inverse of :func:`part_index`."""
    if not 1 <= index <= 16:
        raise ValueError(f"part index must lie in 1..16, got {index}")
    i, j = divmod(index - 1, 4)
    return PART_TYPES[i], PART_TYPES[j]


def axis_mask(bank, kind, xi, eta):
    """One-axis Bony mask of type ``kind`` evaluated at frequency pairs ``(xi, eta)``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    ev = bank._evaluate
    K = bank.k_max
    out = np.zeros(np.broadcast(xi, eta).shape)
    if kind == "lh":
        for k in range(1, K + 1):
            out = out + ev("phi_tilde", k, xi) * ev("psi", k, eta)
    elif kind == "hl":
        for k in range(1, K + 1):
            out = out + ev("psi", k, xi) * ev("phi_tilde", k, eta)
    elif kind == "hh":
        for k in range(K + 1):
            out = out + ev("psi", k, xi) * ev("psi_tilde", k, eta)
    elif kind == "ll":
        p_x, p_e = ev("phi", 0, xi), ev("phi", 0, eta)
        s_x, s_e = ev("psi", 0, xi), ev("psi", 0, eta)
        out = p_x * s_e + s_x * p_e + p_x * p_e
    else:
        raise ValueError(f"unknown part type {kind!r}")
    return out


def symbol_one_masks(bank):
    """The sixteen tensor masks splitting the symbol 1 on ``(xi1, eta1, xi2, eta2)``.

    Returns
    -------
    dict
        Maps ``(t1, t2)`` (types along axis 1 and axis 2, in the order of
        :data:`PART_TYPES`) to a callable ``mask(xi1, eta1, xi2, eta2)``.
    """

    def make(t1, t2):
        def mask(xi1, eta1, xi2, eta2):
            return axis_mask(bank, t1, xi1, eta1) * axis_mask(bank, t2, xi2, eta2)

        mask.types = (t1, t2)
        return mask

    return {(t1, t2): make(t1, t2) for t1 in PART_TYPES for t2 in PART_TYPES}


def export_mask_csv(bank, kind, k, path):
    """Write one lattice mask as ``frequency,value`` rows sorted by frequency."""
    xi = bank.grid.freqs
    order = np.argsort(xi, kind="stable")
    m = bank.mask(kind, k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frequency", "value"])
        for i in order:
            w.writerow([repr(float(xi[i])), repr(float(m[i]))])
