import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..validation import check_distribution
from .entropic import SinkhornConfig, barycentric_project, build_cost_matrix, sinkhorn


class AnchorTransport(TransformerMixin, BaseEstimator):
    """Transport feature rows onto a fixed set of anchors.

    ``fit`` stores the anchors and their target masses; ``transform`` treats
    the rows of ``X`` as a uniform source distribution, solves entropic OT
    under cosine cost and returns the barycentric projection of each row.

    Parameters
    ----------
    epsilon : float, default=0.05
        Entropic regularization.
    tol : float, default=1e-6
        Max marginal violation at which iterations stop.
    max_iter : int, default=1000
        Iteration cap.
    projection : {"row-normalized", "raw"}, default="row-normalized"
        How plan rows are turned into features.
    """

    def __init__(self, epsilon=0.05, tol=1e-6, max_iter=1000, projection="row-normalized"):
        self.epsilon = epsilon
        self.tol = tol
        self.max_iter = max_iter
        self.projection = projection

    def _config(self):
        return SinkhornConfig(epsilon=self.epsilon, tolerance=self.tol, max_iters=self.max_iter)

    def fit(self, X, y=None, target_weights=None):
        """Store anchors ``X`` (n_anchors, n_features) and their masses."""
        self._config()
        anchors = check_array(X, dtype=np.float64)
        if target_weights is None:
            target_weights = np.full(anchors.shape[0], 1.0 / anchors.shape[0])
        self.anchors_ = anchors
        self.target_weights_ = check_distribution(target_weights, "target_weights")
        self.n_features_in_ = anchors.shape[1]
        return self

    def transport_plan(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        mu = np.full(X.shape[0], 1.0 / X.shape[0])
        cost = build_cost_matrix(X, self.anchors_)
        return sinkhorn(mu, self.target_weights_, cost, self._config())

    def transform(self, X):
        plan = self.transport_plan(X)
        return barycentric_project(plan, self.anchors_, mode=self.projection)
