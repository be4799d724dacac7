"""scikit-learn style wrapper: ``fit`` trains a PINN, ``predict`` evaluates u."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from . import network as N
from .network import ArchitectureSpec
from .problems import make_problem
from .training import LossWeights, train


class ObstaclePINN(BaseEstimator):
    """Physics-informed network for one of the registered obstacle problems.

    ``fit`` takes no data for the manufactured problems (collocation points
    are sampled); pass ``X`` as a RasterProblemData for ``problem="raster"``.
    Inputs to ``predict`` are space-time points (t, x[, y]).
    """

    def __init__(self, problem="mms1d", hidden_layers=5, width=128, activation="relu2",
                 init_scheme="uniform", iterations=5000, penalty_coeff=1e-5, alpha=1.0, beta=4000.0, gamma_w=1.0,
                 delta=1.0, lr=None, lr_profile="mms", n_pde=1000, n_boundary=1000,
                 n_initial=1000, eval_every=1, seed=0, problem_kwargs=None):
        self.problem = problem
        self.hidden_layers = hidden_layers
        self.width = width
        self.activation = activation
        self.init_scheme = init_scheme
        self.iterations = iterations
        self.penalty_coeff = penalty_coeff
        self.alpha = alpha
        self.beta = beta
        self.gamma_w = gamma_w
        self.delta = delta
        self.lr = lr
        self.lr_profile = lr_profile
        self.n_pde = n_pde
        self.n_boundary = n_boundary
        self.n_initial = n_initial
        self.eval_every = eval_every
        self.seed = seed
        self.problem_kwargs = problem_kwargs

    def _problem(self, X):
        kw = dict(self.problem_kwargs or {})
        if self.problem == "raster":
            if X is None:
                raise ValueError("raster problems need the raster data as X")
            kw["data"] = X
        elif X is not None:
            raise ValueError(f"{self.problem} samples its own collocation points; X must be None")
        return make_problem(self.problem, **kw)

    def fit(self, X=None, y=None):
        for k in ("hidden_layers", "width", "n_pde", "n_boundary", "n_initial"):
            if int(getattr(self, k)) < 1:
                raise ValueError(f"{k} must be a positive integer")
        if int(self.iterations) < 0:
            raise ValueError("iterations must be >= 0")
        prob = self._problem(X)
        arch = ArchitectureSpec(prob.input_dim, int(self.hidden_layers), int(self.width),
                                self.activation)
        weights = LossWeights(self.alpha, self.beta, self.gamma_w, self.delta, self.penalty_coeff)
        rep = train(prob, arch, weights, int(self.iterations), int(self.seed),
                    sizes=(self.n_pde, self.n_boundary, self.n_initial), lr=self.lr,
                    profile=self.lr_profile, eval_every=int(self.eval_every),
                    init_scheme=self.init_scheme)
        self.problem_ = prob
        self.params_ = rep.params
        self.report_ = rep
        self.history_ = rep.history
        self.n_features_in_ = prob.input_dim
        return self

    def _check(self, X):
        if not hasattr(self, "params_"):
            raise NotFittedError("ObstaclePINN is not fitted yet; call fit first")
        X = check_array(X, dtype=np.float64, ensure_all_finite=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        return X

    def predict(self, X):
        X = self._check(X)
        return N.predict(self.params_, X)

    def transform(self, X):
        """Column of network values, for use inside pipelines."""
        return self.predict(X)[:, None]

    def score(self, X, y=None):
        """Negative mean absolute error against ``y`` (default: the exact solution)."""
        X = self._check(X)
        if y is None:
            if self.problem_.exact is None:
                raise ValueError("no exact solution for this problem; pass y")
            y = self.problem_.exact(X)
        return -float(np.mean(np.abs(self.predict(X) - np.asarray(y, dtype=np.float64))))
