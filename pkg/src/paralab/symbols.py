"""Multiplier and pseudo-differential symbols with declared symbol classes.

A symbol of an ``n``-linear operator in ``d`` parameters is a function of
``n*d`` frequency coordinates (and, if x-dependent, of ``x`` in R^d).  The
frequency coordinates are passed in parameter-major order: the ``n``
first-axis components come first, then the ``n`` second-axis components.
For a bilinear symbol in two parameters that is ``(xi1, eta1, xi2, eta2)``,
so each parameter block ``(xi_i, eta_i)`` is contiguous.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ContractError

__all__ = [
    "CLASS_KINDS",
    "SymbolClass",
    "SymbolReport",
    "SymbolSpec",
    "builtin_symbols",
    "fd_weights",
    "verify_symbol_class",
]

# kind -> (homogeneous weight, one weight block per parameter, x-derivatives tested)
CLASS_KINDS = {
    "hormander_mikhlin": (True, False, False),
    "bilinear_bs0": (False, False, True),
    "marcinkiewicz_2param": (True, True, False),
    "marcinkiewicz_dparam": (True, True, False),
    "pseudo_biparam": (False, True, True),
    "pseudo_dparam": (False, True, True),
    "inhomog_biparam": (False, True, False),
}


@dataclass(frozen=True)
class SymbolClass:
    """Differential inequality a symbol claims to satisfy.

    The weight for a derivative ``d^alpha`` is ``prod_b w(|block_b|)^{-|alpha_b|}``
    over the class's frequency blocks, with ``w(t) = t`` for homogeneous kinds
    and ``w(t) = 1 + t`` otherwise.  x-derivatives carry no weight.
    """

    kind: str
    max_order: int = 4
    constant: float = 1.0

    def __post_init__(self):
        if self.kind not in CLASS_KINDS:
            raise ValueError(f"unknown symbol class {self.kind!r}")

    @property
    def homogeneous(self):
        return CLASS_KINDS[self.kind][0]

    @property
    def per_parameter(self):
        return CLASS_KINDS[self.kind][1]

    @property
    def tests_x(self):
        return CLASS_KINDS[self.kind][2]

    def blocks(self, n, d):
        """Index groups of the frequency coordinates that share a weight."""
        if self.per_parameter:
            return [list(range(i * n, (i + 1) * n)) for i in range(d)]
        return [list(range(n * d))]


@dataclass(eq=False)
class SymbolSpec:
    """An evaluable symbol together with the class it claims.

    Parameters
    ----------
    name : str
    n, d : int
        Arity and number of parameters; the symbol takes ``n*d`` frequency
        arguments in parameter-major order.
    evaluator : callable
        ``evaluator(freqs, x)`` with ``freqs`` a tuple of ``n*d`` broadcastable
        arrays and ``x`` a tuple of ``d`` arrays (``None`` for x-independent
        symbols).  Must be vectorized.
    claimed_class : SymbolClass
    x_dependent : bool
    singular_blocks : tuple of int
        Parameter blocks whose vanishing is singular.  The symbol is set to 0
        at points where any of these blocks is exactly zero.
    bound : float
        Declared bound for ``|symbol|``.
    terms : tuple of (theta, SymbolSpec), optional
        Finite expansion ``a(x, freqs) = sum theta_j(x) * m_j(freqs)`` when it
        exists; operators use it to avoid per-point evaluation.
    """

    name: str
    n: int
    d: int
    evaluator: object = field(repr=False)
    claimed_class: SymbolClass
    x_dependent: bool = False
    singular_blocks: tuple = ()
    bound: float = 1.0
    terms: tuple = None
    factors: tuple = field(default=None, repr=False)
    _tabulations: dict = field(default_factory=dict, repr=False)

    def __call__(self, *freqs, x=None):
        if len(freqs) != self.n * self.d:
            raise ContractError(f"{self.name} takes {self.n * self.d} frequency arguments")
        freqs = tuple(np.asarray(v, dtype=float) for v in freqs)
        if self.x_dependent:
            if x is None:
                raise ContractError(f"{self.name} depends on x; pass x=")
            x = tuple(np.asarray(v, dtype=float) for v in x)
        else:
            x = None
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.asarray(self.evaluator(freqs, x))
        if self.singular_blocks:
            bad = np.zeros(np.broadcast_shapes(*(v.shape for v in freqs)), dtype=bool)
            for b in self.singular_blocks:
                blk = freqs[b * self.n : (b + 1) * self.n]
                hit = blk[0] == 0
                for v in blk[1:]:
                    hit = hit & (v == 0)
                bad = bad | hit
            out = np.where(bad, 0.0, out)
        return out

    def tabulate(self, grid, max_points=2**22):
        """Values on the full ``n*d``-fold frequency lattice of ``grid`` (cached).

        Axis order follows the parameter-major argument order.
        """
        if self.x_dependent:
            raise ContractError("only x-independent symbols can be tabulated")
        key = (grid.L, grid.N)
        if key not in self._tabulations:
            count = grid.N ** (self.n * self.d)
            if count > max_points:
                raise CapacityError(f"tabulating {self.name} needs {count} points")
            xi = grid.freqs
            axes = np.meshgrid(*([xi] * (self.n * self.d)), indexing="ij", sparse=True)
            t = np.broadcast_to(self(*axes), (grid.N,) * (self.n * self.d)).astype(complex)
            t.flags.writeable = False
            self._tabulations[key] = t
        return self._tabulations[key]


def fd_weights(order, accuracy=4):
    """Central finite-difference weights for the ``order``-th derivative.

    Returns ``(offsets, weights)`` with offsets in units of the step.
    """
    p = (order + 1) // 2 - 1 + accuracy // 2
    offsets = np.arange(-p, p + 1)
    A = np.vander(offsets.astype(float), increasing=True).T
    rhs = np.zeros(len(offsets))
    rhs[order] = math.factorial(order)
    return offsets, np.linalg.solve(A, rhs)


@dataclass
class SymbolReport:
    """Result of :func:`verify_symbol_class`.

    ``rows`` holds ``(alpha, max_ratio, worst_point)`` per multi-index; the
    multi-index runs over the frequency coordinates followed by the x
    coordinates when those are tested.
    """

    symbol: str
    claimed_class: SymbolClass
    rows: list
    skipped: int = 0
    diagnostics: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r <= self.claimed_class.constant for _, r, _ in self.rows)

    def order_max(self, order):
        vals = [r for a, r, _ in self.rows if sum(a) == order]
        return max(vals) if vals else 0.0

    def passes_order(self, order):
        return self.order_max(order) <= self.claimed_class.constant

    @property
    def first_failing_order(self):
        for order in range(self.claimed_class.max_order + 1):
            if not self.passes_order(order):
                return order
        return None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["multi_index", "max_ratio", "worst_point"])
            for alpha, ratio, point in self.rows:
                w.writerow(
                    [
                        "(" + ",".join(str(a) for a in alpha) + ")",
                        repr(float(ratio)),
                        "(" + ",".join(repr(float(v)) for v in point) + ")",
                    ]
                )


def _sample_points(s, cls, count, rng, margin, max_radius):
    """Frequencies with every class block at log-uniform radius in [margin, max_radius]."""
    nvar = s.n * s.d
    pts = np.empty((count, nvar))
    for blk in cls.blocks(s.n, s.d):
        dirs = rng.standard_normal((count, len(blk)))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = np.exp(rng.uniform(math.log(margin), math.log(max_radius), count))
        pts[:, blk] = dirs * radii[:, None]
    xs = rng.uniform(-1.0, 1.0, (count, s.d)) if s.x_dependent else None
    return pts, xs


def verify_symbol_class(
    s,
    sample_count=128,
    fd_step=0.01,
    seed=0,
    margin=0.25,
    max_radius=64.0,
    points=None,
    x_points=None,
):
    """Check the claimed differential inequality by finite differences.

    For every multi-index up to ``max_order`` the derivative is estimated by
    fourth-order central differences.  The step for a frequency coordinate
    is ``fd_step * (1 + |block|)``, with ``block`` the class weight block it
    belongs to; x-coordinates use ``fd_step``.  A second pass at half the
    step flags multi-indices whose estimate is not resolved.

    Parameters
    ----------
    s : SymbolSpec
    sample_count : int
        Number of random sample points (ignored when ``points`` is given).
    fd_step : float
        Relative step; must be at most 0.01.
    seed : int
    margin : float
        Minimal block norm kept away from the singular set.
    max_radius : float
        Largest block norm sampled.
    points, x_points : ndarray, optional
        Explicit sample frequencies ``(P, n*d)`` and positions ``(P, d)``;
        points closer than ``margin`` to a singular block are skipped.

    Returns
    -------
    SymbolReport
    """
    cls = s.claimed_class
    if fd_step > 0.01:
        raise ValueError("fd_step must not exceed 0.01")
    rng = np.random.default_rng(seed)
    if points is None:
        pts, xs = _sample_points(s, cls, sample_count, rng, margin, max_radius)
        skipped = 0
    else:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xs = None if x_points is None else np.atleast_2d(np.asarray(x_points, dtype=float))
        if s.x_dependent and xs is None:
            xs = np.zeros((len(pts), s.d))
        keep = np.ones(len(pts), dtype=bool)
        for b in s.singular_blocks:
            keep &= np.linalg.norm(pts[:, b * s.n : (b + 1) * s.n], axis=1) >= margin
        skipped = int((~keep).sum())
        pts = pts[keep]
        xs = xs[keep] if xs is not None else None

    blocks = cls.blocks(s.n, s.d)
    block_norm = np.stack([np.linalg.norm(pts[:, b], axis=1) for b in blocks], axis=1)
    wbase = block_norm if cls.homogeneous else 1.0 + block_norm
    nfreq = s.n * s.d
    var_block = np.empty(nfreq, dtype=int)
    for i, b in enumerate(blocks):
        var_block[b] = i
    steps = np.empty((len(pts), nfreq + (s.d if xs is not None else 0)))
    steps[:, :nfreq] = fd_step * (1.0 + block_norm[:, var_block])
    if xs is not None:
        steps[:, nfreq:] = fd_step
    nvar = nfreq + (s.d if (xs is not None and cls.tests_x) else 0)

    def evaluate(freq_pts, x_pts):
        cols = tuple(freq_pts[..., i] for i in range(nfreq))
        xcols = None if x_pts is None else tuple(x_pts[..., i] for i in range(s.d))
        return s(*cols, x=xcols)

    def derivative(alpha, scale):
        stencil = [fd_weights(a) for a in alpha]
        offs = np.array(list(itertools.product(*[o for o, _ in stencil])), dtype=float)
        wts = np.prod(np.array(list(itertools.product(*[w for _, w in stencil]))), axis=1)
        st = steps[:, :nvar] * scale
        shift = offs[None, :, :] * st[:, None, :]
        fp = pts[:, None, :] + shift[:, :, :nfreq]
        xp = None
        if xs is not None:
            xp = np.broadcast_to(xs[:, None, :], (len(pts), len(offs), s.d)).copy()
            if nvar > nfreq:
                xp = xp + shift[:, :, nfreq:]
        vals = evaluate(fp, xp)
        if sum(alpha):
            # the weights sum to zero; centering makes constants differentiate to 0 exactly
            centre = int(np.flatnonzero(~offs.any(axis=1))[0])
            vals = vals - vals[:, centre : centre + 1]
        denom = np.prod(st ** np.array(alpha, dtype=float), axis=1)
        return (vals @ wts) / denom

    rows = []
    diagnostics = []
    for order in range(cls.max_order + 1):
        for combo in itertools.combinations_with_replacement(range(nvar), order):
            alpha = tuple(combo.count(i) for i in range(nvar))
            D = derivative(alpha, 1.0)
            expo = np.array([sum(alpha[i] for i in b) for b in blocks], dtype=float)
            weight = np.prod(wbase ** (-expo), axis=1)
            ratio = np.abs(D) / weight
            j = int(np.argmax(ratio))
            point = tuple(pts[j]) + (tuple(xs[j]) if xs is not None else ())
            rows.append((alpha, float(ratio[j]), point))
            if order >= 1:
                D2 = derivative(alpha, 0.5)
                gap = float(np.max(np.abs(D - D2) / weight))
                if gap > 0.01 * max(1.0, float(ratio[j])):
                    diagnostics.append(
                        f"fd_step unresolved for alpha={alpha}: half-step change {gap:.3g}"
                    )
    return SymbolReport(s.name, cls, rows, skipped, diagnostics)


# ---------------------------------------------------------------- catalog


def _block_product(m1, m2):
    def ev(freqs, x):
        xi1, eta1, xi2, eta2 = freqs
        return m1(xi1, eta1) * m2(xi2, eta2)

    return ev


def _marc_factor(u, v):
    return u * v / (u * u + v * v)


def _inhomog_factor_1(u, v):
    return (1.0 + u * v) / (1.0 + u * u + v * v)


def _inhomog_factor_2(u, v):
    return (1.0 + 0.5j * (u + v)) / np.sqrt(1.0 + u * u + v * v)


def _theta(x):
    x1, x2 = x
    return np.cos(2 * np.pi * x1) * (1.0 + 0.5 * np.sin(2 * np.pi * x2))


def _one(*a):
    return np.ones(np.broadcast_shapes(*(np.shape(v) for v in a)))


def builtin_symbols():
    """Named catalog of test symbols.

    ``identity``
        ``m = 1``.
    ``marcinkiewicz``
        ``(xi1 eta1/(xi1^2+eta1^2)) (xi2 eta2/(xi2^2+eta2^2))``, degree 0 in
        each parameter block.
    ``mikhlin_block``
        ``xi1/|(xi1, eta1)|``, constant in the second block.
    ``mikhlin_1d``
        One-parameter bilinear symbol ``xi/|(xi, eta)|`` on R.
    ``product_inhomog``
        Smooth x-independent product ``m1(xi1, eta1) m2(xi2, eta2)`` with
        ``m1 = (1 + uv)/(1 + u^2 + v^2)`` and
        ``m2 = (1 + i(u+v)/2)/sqrt(1 + u^2 + v^2)``.
    ``theta_product``
        ``theta(x) * product_inhomog`` with
        ``theta(x) = cos(2 pi x1)(1 + sin(2 pi x2)/2)``.
    ``phase_coupled``
        ``exp(i[sin(2 pi x1) xi1/<b1> + cos(2 pi x2) eta2/<b2>]/2) * m1 * m2``
        where ``<b> = sqrt(1 + |b|^2)``; does not factor as theta(x) m(xi, eta).
    ``failing``
        ``sin(xi1^2)``; claims the inhomogeneous bi-parameter class and
        violates it from the first derivative on.
    """
    cat = {}

    cat["identity"] = SymbolSpec(
        "identity", 2, 2, lambda f, x: _one(*f),
        SymbolClass("marcinkiewicz_2param", 4, 1.0),
        factors=(_one, _one),
    )
    cat["marcinkiewicz"] = SymbolSpec(
        "marcinkiewicz",
        2,
        2,
        _block_product(_marc_factor, _marc_factor),
        SymbolClass("marcinkiewicz_2param", 4, 40.0),
        singular_blocks=(0, 1),
        bound=0.25,
        factors=(_marc_factor, _marc_factor),
    )
    cat["mikhlin_block"] = SymbolSpec(
        "mikhlin_block",
        2,
        2,
        lambda f, x: f[0] / np.hypot(f[0], f[1]) + 0 * f[2] + 0 * f[3],
        SymbolClass("marcinkiewicz_2param", 4, 20.0),
        singular_blocks=(0,),
        factors=(lambda u, v: u / np.hypot(u, v), lambda u, v: _one(u, v)),
    )
    cat["mikhlin_1d"] = SymbolSpec(
        "mikhlin_1d",
        2,
        1,
        lambda f, x: f[0] / np.hypot(f[0], f[1]),
        SymbolClass("hormander_mikhlin", 4, 20.0),
        singular_blocks=(0,),
    )
    product = SymbolSpec(
        "product_inhomog",
        2,
        2,
        _block_product(_inhomog_factor_1, _inhomog_factor_2),
        SymbolClass("inhomog_biparam", 4, 400.0),
        factors=(_inhomog_factor_1, _inhomog_factor_2),
    )
    cat["product_inhomog"] = product

    def theta_product(f, x):
        return _theta(x) * product.evaluator(f, None)

    cat["theta_product"] = SymbolSpec(
        "theta_product",
        2,
        2,
        theta_product,
        SymbolClass("pseudo_biparam", 4, 10000.0),
        x_dependent=True,
        bound=1.5,
        terms=((_theta, product),),
    )

    def phase_coupled(f, x):
        xi1, eta1, xi2, eta2 = f
        x1, x2 = x
        b1 = np.sqrt(1.0 + xi1 * xi1 + eta1 * eta1)
        b2 = np.sqrt(1.0 + xi2 * xi2 + eta2 * eta2)
        phase = 0.5 * (np.sin(2 * np.pi * x1) * xi1 / b1 + np.cos(2 * np.pi * x2) * eta2 / b2)
        return np.exp(1j * phase) * product.evaluator(f, None)

    cat["phase_coupled"] = SymbolSpec(
        "phase_coupled",
        2,
        2,
        phase_coupled,
        SymbolClass("pseudo_biparam", 4, 5000.0),
        x_dependent=True,
    )
    cat["failing"] = SymbolSpec(
        "failing",
        2,
        2,
        lambda f, x: np.sin(f[0] ** 2) + 0 * f[1] + 0 * f[2] + 0 * f[3],
        SymbolClass("inhomog_biparam", 4, 20.0),
    )
    return cat


def warn_if_unresolved(report):
    """Re-emit a report's step diagnostics as warnings."""
    for msg in report.diagnostics:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
