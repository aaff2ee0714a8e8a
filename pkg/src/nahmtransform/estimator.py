"""scikit-learn style wrapper: points in R^3 to Higgs eigenvalues."""
from __future__ import annotations

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dirac_nahm import compute_fiber, fiber_grid
from .grids import DEFAULT_NODES
from .io import from_document, load
from .monopole_fields import higgs, traceless_higgs
from .nahm_core import NahmData
from .sbtype import validate_framing, validate_type


def _eigs(nd, x, nodes, collar, traceless):
    fiber = compute_fiber(nd, x, grid=fiber_grid(nd, x, nodes, collar))
    phi = higgs(nd, fiber)
    if traceless:
        phi = traceless_higgs(phi)
    return np.sort(np.linalg.eigvalsh(-1j * phi))


class NahmTransform(BaseEstimator, TransformerMixin):
    """Map points ``x`` to the sorted imaginary parts of the Higgs spectrum.

    Parameters
    ----------
    nodes : int
        Gauss nodes per panel of the fiber grid.
    collar : float or None
        Relative collar width; ``None`` keeps the value stored with the data.
    traceless : bool
        Remove ``tr(Phi)/N`` before taking eigenvalues.
    n_jobs : int
        Workers for :meth:`transform`.

    Notes
    -----
    ``fit`` only validates and stores the Nahm data; nothing is estimated
    from the points themselves.
    """

    def __init__(self, nodes: int = DEFAULT_NODES, collar=None, traceless: bool = False, n_jobs: int = 1):
        self.nodes = nodes
        self.collar = collar
        self.traceless = traceless
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        """``X`` is Nahm data, a ``nahm-data/1`` document or a path to one."""
        if isinstance(X, NahmData):
            nd = X
        elif isinstance(X, dict):
            nd = from_document(X)
        else:
            nd, _ = load(X)
        validate_type(nd.sbt)
        validate_framing(nd.sbt, nd.framing, raise_on_error=True)
        self.nahm_data_ = nd
        self.n_features_in_ = 3
        self.n_components_ = nd.N
        return self

    def transform(self, X):
        check_is_fitted(self, "nahm_data_")
        X = check_array(X, ensure_2d=True)
        if X.shape[1] != 3:
            raise ValueError(f"expected points in R^3, got {X.shape[1]} columns")
        args = (self.nahm_data_, self.nodes, self.collar, self.traceless)
        if self.n_jobs != 1:
            rows = Parallel(n_jobs=self.n_jobs)(delayed(_eigs)(args[0], x, *args[1:]) for x in X)
        else:
            rows = [_eigs(args[0], x, *args[1:]) for x in X]
        return np.array(rows)

    def fit_transform(self, X, y=None, **fit_params):
        raise TypeError("fit takes Nahm data and transform takes points; call them separately")
