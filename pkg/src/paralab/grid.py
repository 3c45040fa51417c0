"""Sampled functions on a periodic torus.

The computational domain is the torus ``[-L/2, L/2)^d`` with ``d`` in
{1, 2}, sampled at ``N`` points per axis.  Space samples are stored in
natural order (index ``j`` sits at ``x_j = -L/2 + j*h``); frequency
samples are stored in FFT order, so ``grid.freqs`` gives the lattice value
``k/L`` attached to each index.

The Fourier convention is

    f_hat(xi) = L^{-d} * sum_x f(x) exp(-2 pi i x.xi) h^d,

so that synthesis is ``f(x) = sum_xi f_hat(xi) exp(2 pi i x.xi)`` with no
extra factor, and Parseval reads ``sum |f_hat|^2 L^d = sum |f|^2 h^d``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractError

__all__ = [
    "INF",
    "IntervalWeight",
    "SampledFunction",
    "TorusGrid",
    "cell_partition",
    "cutoff_weight",
    "fft_forward",
    "fft_inverse",
    "from_bytes",
    "load_sampled",
    "lp_norm",
    "random_band_limited",
    "rectangle_weight",
    "save_sampled",
    "to_bytes",
]

#: Sentinel for the exponent p = infinity.
INF = math.inf

SPACE = "space"
FREQUENCY = "frequency"
_DOMAIN_TAGS = {SPACE: 0, FREQUENCY: 1}


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid with ``N`` samples per axis and period ``L``.

    Parameters
    ----------
    dims : int
        1 or 2.
    L : float
        Period of every axis.
    N : int
        Samples per axis; a power of two, at least 8.
    """

    dims: int
    L: float
    N: int

    def __post_init__(self):
        if self.dims not in (1, 2):
            raise ConfigurationError(f"dims must be 1 or 2, got {self.dims}")
        if self.N < 8 or self.N & (self.N - 1):
            raise ConfigurationError(f"N must be a power of two >= 8, got {self.N}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ConfigurationError(f"L must be positive and finite, got {self.L}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self):
        return self.L / self.N

    @property
    def shape(self):
        return (self.N,) * self.dims

    @property
    def coords(self):
        """1D sample positions ``-L/2 + j*h``."""
        return -self.L / 2 + self.h * np.arange(self.N)

    @property
    def freqs(self):
        """1D frequency lattice in FFT order."""
        return np.fft.fftfreq(self.N, d=self.h)

    @property
    def nyquist(self):
        return self.N / (2 * self.L)

    def mesh(self):
        """Space coordinates as a tuple of broadcastable arrays, one per axis."""
        return _broadcast_axes(self.coords, self.dims)

    def freq_mesh(self):
        """Frequency lattice as a tuple of broadcastable arrays, one per axis."""
        return _broadcast_axes(self.freqs, self.dims)

    def zeros(self, domain=SPACE):
        return SampledFunction(self, np.zeros(self.shape, dtype=complex), domain)


def _broadcast_axes(v, dims):
    if dims == 1:
        return (v,)
    return (v[:, None], v[None, :])


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Complex samples on a :class:`TorusGrid`, tagged as space or frequency data.

    ``values`` is copied on construction and made read-only.
    """

    grid: TorusGrid
    values: np.ndarray
    domain: str = SPACE

    def __post_init__(self):
        if self.domain not in _DOMAIN_TAGS:
            raise ContractError(f"unknown domain tag {self.domain!r}")
        vals = np.array(self.values, dtype=complex)
        if vals.size != self.grid.N**self.grid.dims:
            raise ContractError(
                f"expected {self.grid.N ** self.grid.dims} samples, got {vals.size}"
            )
        vals = vals.reshape(self.grid.shape)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def with_values(self, values):
        return SampledFunction(self.grid, values, self.domain)

    def __add__(self, other):
        _check_same(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        _check_same(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, other):
        if isinstance(other, SampledFunction):
            _check_same(self, other)
            return self.with_values(self.values * other.values)
        return self.with_values(self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


def _check_same(a, b):
    if a.grid != b.grid:
        raise ContractError("sampled functions live on different grids")
    if a.domain != b.domain:
        raise ContractError("sampled functions carry different domain tags")


def require_domain(f, domain):
    if not isinstance(f, SampledFunction):
        raise ContractError(f"expected a SampledFunction, got {type(f).__name__}")
    if f.domain != domain:
        raise ContractError(f"expected {domain}-domain input, got {f.domain}")


def fft_forward(f):
    """Space samples to Fourier coefficients on the lattice ``(1/L) Z``."""
    require_domain(f, SPACE)
    n = f.grid.N**f.grid.dims
    return SampledFunction(f.grid, np.fft.fftn(np.fft.ifftshift(f.values)) / n, FREQUENCY)


def fft_inverse(F):
    """Inverse of :func:`fft_forward`."""
    require_domain(F, FREQUENCY)
    n = F.grid.N**F.grid.dims
    return SampledFunction(F.grid, np.fft.fftshift(np.fft.ifftn(F.values) * n), SPACE)


def lp_norm(f, p, quasi=False):
    """Discrete ``L^p`` norm ``(sum |f|^p h^d)^(1/p)``, or the max for ``p = INF``.

    Parameters
    ----------
    f : SampledFunction
        Space-domain samples.
    p : float
        Exponent, ``p > 1`` or :data:`INF`.
    quasi : bool
        Admit quasinorm exponents ``1/2 < p <= 1`` (the target exponent of a
        Hölder triple may fall there).
    """
    require_domain(f, SPACE)
    p = float(p)
    lower = 0.5 if quasi else 1.0
    if not (p > lower):
        raise ValueError(f"exponent {p} outside the admitted range (>{lower})")
    a = np.abs(f.values)
    if p == INF:
        return float(a.max())
    # scale out the max so large exponents do not overflow
    top = a.max()
    if top == 0.0:
        return 0.0
    return float(top * (np.sum((a / top) ** p) * f.grid.h**f.grid.dims) ** (1.0 / p))


@dataclass(frozen=True)
class IntervalWeight:
    """Approximate cutoff ``(1 + dist(x, I)/|I|)^(-exponent)`` of an interval."""

    center: float
    length: float
    exponent: int = 100

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigurationError("interval length must be positive")
        if int(self.exponent) != self.exponent or self.exponent <= 0:
            raise ConfigurationError("exponent must be a positive integer")

    @classmethod
    def from_endpoints(cls, a, b, exponent=100):
        return cls(0.5 * (a + b), b - a, exponent)

    def __call__(self, x):
        return cutoff_weight(self, x)


def cutoff_weight(w, x):
    """Evaluate an :class:`IntervalWeight` at ``x`` (scalar or array)."""
    x = np.asarray(x, dtype=float)
    dist = np.maximum(np.abs(x - w.center) - 0.5 * w.length, 0.0)
    out = (1.0 + dist / w.length) ** (-float(w.exponent))
    return float(out) if out.ndim == 0 else out


def rectangle_weight(grid, I=(-1.0, 1.0), J=(-1.0, 1.0), exponent=100):
    """Tensor weight ``chi_I (x) chi_J`` sampled on a 2D grid (or ``chi_I`` in 1D)."""
    axes = grid.mesh()
    w = cutoff_weight(IntervalWeight.from_endpoints(*I, exponent), axes[0])
    if grid.dims == 2:
        w = w * cutoff_weight(IntervalWeight.from_endpoints(*J, exponent), axes[1])
    return np.broadcast_to(w, grid.shape).copy()


def cell_partition(f):
    """Split ``f`` over the half-open unit cells ``[n, n+1) x [m, m+1)``.

    Returns
    -------
    dict
        Maps the integer lower corner ``(n,)`` or ``(n, m)`` to the piece
        ``f * indicator(cell)``.  Every sample belongs to exactly one cell, so
        the pieces add back to ``f`` bit for bit.
    """
    require_domain(f, SPACE)
    L = f.grid.L
    if L != int(L):
        raise ConfigurationError(f"cell partition needs an integer period, got L={L}")
    cell_index = np.floor(f.grid.coords).astype(int)
    cells = np.unique(cell_index)
    out = {}
    if f.grid.dims == 1:
        for n in cells:
            out[(int(n),)] = f.with_values(np.where(cell_index == n, f.values, 0))
    else:
        for n in cells:
            rows = (cell_index == n)[:, None]
            for m in cells:
                mask = rows & (cell_index == m)[None, :]
                out[(int(n), int(m))] = f.with_values(np.where(mask, f.values, 0))
    return out


def random_band_limited(grid, rng, band, cutoff=None):
    """Complex Gaussian field with flat spectrum on ``|xi_i| <= band``.

    The coefficients are drawn for the lattice points inside the band only,
    in an order that does not depend on ``N``, so the same seed gives the
    same continuous function on every refinement of the grid.

    Parameters
    ----------
    grid : TorusGrid
    rng : numpy.random.Generator
    band : float
        Per-axis frequency radius; must stay below the Nyquist frequency.
    cutoff : ndarray, optional
        Space-domain window multiplied in after synthesis.
    """
    J = int(math.floor(band * grid.L + 1e-9))
    if J >= grid.N // 2:
        raise ConfigurationError(f"band {band} reaches the Nyquist frequency of {grid}")
    size = (2 * J + 1,) * grid.dims
    coef = (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2)
    spec = np.zeros(grid.shape, dtype=complex)
    idx = np.arange(-J, J + 1) % grid.N
    spec[np.ix_(*([idx] * grid.dims))] = coef
    f = fft_inverse(SampledFunction(grid, spec, FREQUENCY))
    if cutoff is not None:
        f = f.with_values(f.values * cutoff)
    return f


_HEADER = struct.Struct("<qqdB")


def to_bytes(f):
    """Serialize: header (dims, N, L, domain byte) then interleaved re/im float64."""
    head = _HEADER.pack(f.grid.dims, f.grid.N, f.grid.L, _DOMAIN_TAGS[f.domain])
    body = np.ascontiguousarray(f.values, dtype="<c16").tobytes(order="C")
    return head + body


def from_bytes(data):
    """Inverse of :func:`to_bytes`."""
    dims, N, L, tag = _HEADER.unpack_from(data)
    grid = TorusGrid(dims, L, N)
    domain = {v: k for k, v in _DOMAIN_TAGS.items()}.get(tag)
    if domain is None:
        raise ContractError(f"unknown domain tag byte {tag}")
    body = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
    if body.size != N**dims:
        raise ContractError("payload length does not match the header")
    return SampledFunction(grid, body.reshape(grid.shape), domain)


def save_sampled(f, path):
    Path(path).write_bytes(to_bytes(f))


def load_sampled(path):
    return from_bytes(Path(path).read_bytes())
