"""scikit-learn wrapper around the dyadic filter bank."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .filterbank import FilterBank, build_mother_profiles, lp_project
from .grid import SampledFunction, TorusGrid


class LittlewoodPaleyTransformer(TransformerMixin, BaseEstimator):
    """Split 1D periodic signals into Littlewood-Paley bands.

    Each row of ``X`` is one signal sampled on ``N`` equispaced points of a
    torus of period ``period``.  ``transform`` returns the real parts of the
    band projections ``f * psi_k`` for ``k = -1..k_max``, concatenated band
    after band, so the output has ``N * (k_max + 2)`` columns and the bands
    of each row add up to the row (up to the telescoping remainder above
    ``k_max``).

    Parameters
    ----------
    period : float, default=1.0
    k_max : int, optional
        Highest band; defaults to the largest resolvable scale.
    transition_sharpness : float, default=1.0
    """

    def __init__(self, period=1.0, k_max=None, transition_sharpness=1.0):
        self.period = period
        self.k_max = k_max
        self.transition_sharpness = transition_sharpness

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.n_features_in_ = X.shape[1]
        grid = TorusGrid(1, float(self.period), X.shape[1])
        self.bank_ = FilterBank(grid, self.k_max, build_mother_profiles(self.transition_sharpness))
        self.scales_ = np.arange(-1, self.bank_.k_max + 1)
        return self

    def transform(self, X):
        check_is_fitted(self, "bank_")
        X = check_array(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got shape {X.shape}")
        grid = self.bank_.grid
        out = np.empty((X.shape[0], X.shape[1] * len(self.scales_)))
        for i, row in enumerate(X):
            f = SampledFunction(grid, row.astype(complex))
            bands = [lp_project(f, int(k), "psi", self.bank_).values.real for k in self.scales_]
            out[i] = np.concatenate(bands)
        return out

    def inverse_transform(self, Z):
        """Sum the bands back into signals."""
        check_is_fitted(self, "bank_")
        Z = np.asarray(Z, dtype=float)
        return Z.reshape(Z.shape[0], len(self.scales_), self.n_features_in_).sum(axis=1)
