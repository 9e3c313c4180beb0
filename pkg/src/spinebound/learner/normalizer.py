"""Running mean/variance observation normalizer."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


class RunningNormalizer(TransformerMixin, BaseEstimator):
    """Streaming standardizer using the pairwise (Chan et al.) merge.

    ``partial_fit`` folds a batch into the running statistics; ``transform``
    maps to ``clip((x - mean) / sqrt(var + eps), -clip, clip)``. Before any
    data is seen the transform is the identity (clipped).
    """

    def __init__(self, clip=10.0, eps=1e-8):
        self.clip = clip
        self.eps = eps

    def _init(self, n_features):
        self.n_features_in_ = n_features
        self.count_ = 0
        self.mean_ = np.zeros(n_features)
        self.var_ = np.ones(n_features)
        self._m2 = np.zeros(n_features)

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self._init(X.shape[1])
        return self.partial_fit(X)

    def partial_fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_all_finite=True, ensure_min_samples=0)
        if not hasattr(self, "count_"):
            self._init(X.shape[1])
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        nb = X.shape[0]
        if nb == 0:
            return self
        b_mean = X.mean(axis=0)
        b_m2 = np.sum((X - b_mean) ** 2, axis=0)
        n = self.count_ + nb
        delta = b_mean - self.mean_
        self.mean_ = self.mean_ + delta * (nb / n)
        self._m2 = self._m2 + b_m2 + delta * delta * (self.count_ * nb / n)
        self.count_ = n
        self.var_ = self._m2 / n
        return self

    def transform(self, X):
        check_is_fitted(self, "count_")
        X = np.asarray(X, dtype=np.float64)
        z = (X - self.mean_) / np.sqrt(self.var_ + self.eps)
        return np.clip(z, -self.clip, self.clip)

    def get_state(self):
        check_is_fitted(self, "count_")
        return {"count": int(self.count_), "mean": self.mean_.copy(), "m2": self._m2.copy()}

    def set_state(self, state):
        mean = np.asarray(state["mean"], dtype=np.float64)
        self._init(mean.shape[0])
        self.count_ = int(state["count"])
        self.mean_ = mean.copy()
        self._m2 = np.asarray(state["m2"], dtype=np.float64).copy()
        self.var_ = self._m2 / self.count_ if self.count_ else np.ones_like(mean)
        return self
