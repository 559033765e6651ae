"""Diagonal-covariance GMM over thing windows and Fisher-vector encoding.

The mixture is fitted with EM on the pooled 5-D window features of a holdout
set (k-means++ initialization, fixed seed, variance floor), and images or
block illustrations are encoded as the gradient of their log-likelihood with
respect to the component means and standard deviations.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InsufficientDataError
from .windows import FULL_MASK, PropertyMask, SyntaxMatrix, ThingWindow

log = logging.getLogger(__name__)

DEFAULT_VARIANCE_FLOOR = 1e-4
DEFAULT_REL_TOL = 1e-5
DEFAULT_MAX_ITER = 100

_DEGENERATE_MASS = 1e-10


@dataclass(frozen=True, eq=False)
class GmmModel:
    """A fitted diagonal-covariance Gaussian mixture.

    ``feature_means`` keeps the column means of the fit pool so downstream
    consumers can fill unspecified feature values (e.g. wildcard color in
    block queries) with the holdout average.
    """

    weights: np.ndarray      # (K,)
    means: np.ndarray        # (K, d)
    variances: np.ndarray    # (K, d)
    seed: int
    mask: PropertyMask = FULL_MASK
    variance_floor: float = DEFAULT_VARIANCE_FLOOR
    n_iterations: int = 0
    converged: bool = False
    log_likelihood_trace: tuple[float, ...] = ()
    feature_means: tuple[float, ...] = ()

    def __post_init__(self):
        if self.weights.ndim != 1 or self.means.ndim != 2 or self.variances.ndim != 2:
            raise ValueError("weights must be (K,), means and variances (K, d)")
        k = self.weights.shape[0]
        if self.means.shape[0] != k or self.variances.shape != self.means.shape:
            raise ValueError("component count mismatch between weights, means and variances")
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {float(self.weights.sum())}")
        if np.any(self.weights <= 0):
            raise ValueError("all component weights must be positive")
        if np.any(self.variances < self.variance_floor - 1e-12):
            raise ValueError("variances below the variance floor")

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True, eq=False)
class FisherVector:
    """Gradient encoding of a window set: 2 * K * d values.

    Layout is per component: the d mean-gradient entries of component k
    followed by its d deviation-gradient entries, for k = 0..K-1.
    """

    values: np.ndarray
    n_components: int
    dim: int
    averaged: bool
    signed_sqrt: bool
    l2_normalized: bool

    def __post_init__(self):
        expected = 2 * self.n_components * self.dim
        if self.values.shape != (expected,):
            raise ValueError(f"expected {expected} values, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Fisher vector contains non-finite entries")


FeatureInput = Union[np.ndarray, SyntaxMatrix, Sequence[ThingWindow]]


def _as_features(data: FeatureInput, model: Optional[GmmModel] = None,
                 mask: PropertyMask = FULL_MASK) -> np.ndarray:
    if isinstance(data, SyntaxMatrix):
        x = data.features(model.mask if model is not None else mask)
    elif isinstance(data, np.ndarray):
        x = np.atleast_2d(np.asarray(data, dtype=np.float64))
    else:
        rows = list(data)
        sub = SyntaxMatrix(image_id="<adhoc>", rows=tuple(rows))
        x = sub.features(model.mask if model is not None else mask)
    if model is not None and x.size and x.shape[1] != model.dim:
        raise ValueError(f"feature dimension {x.shape[1]} does not match model dim {model.dim}")
    return x


def _log_gauss_prob(x: np.ndarray, weights: np.ndarray, means: np.ndarray,
                    variances: np.ndarray) -> np.ndarray:
    """Per-point, per-component log(t_k * g_k(x)) for diagonal Gaussians, (n, K)."""
    d = means.shape[1]
    inv_var = 1.0 / variances
    # ||x - mu||^2_var expanded into three matmuls to avoid an (n, K, d) buffer.
    quad = (
        (x ** 2) @ inv_var.T
        - 2.0 * x @ (means * inv_var).T
        + np.sum(means ** 2 * inv_var, axis=1)
    )
    log_norm = -0.5 * (d * np.log(2.0 * np.pi) + np.sum(np.log(variances), axis=1))
    return np.log(weights) + log_norm - 0.5 * quad


def _logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    peak = np.max(a, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    out = np.log(np.sum(np.exp(a - peak), axis=axis)) + np.squeeze(peak, axis=axis)
    return out


def log_likelihood(model: GmmModel, windows: FeatureInput) -> float:
    """Total log-density of a window set under the mixture; empty set gives 0."""
    x = _as_features(windows, model)
    if x.shape[0] == 0:
        return 0.0
    lp = _log_gauss_prob(x, model.weights, model.means, model.variances)
    return float(np.sum(_logsumexp(lp, axis=1)))


def _responsibility_matrix(model: GmmModel, x: np.ndarray) -> np.ndarray:
    lp = _log_gauss_prob(x, model.weights, model.means, model.variances)
    return np.exp(lp - _logsumexp(lp, axis=1)[:, None])


def responsibilities(model: GmmModel, window: Union[ThingWindow, np.ndarray]) -> np.ndarray:
    """Soft assignment of one window to the K components; sums to 1."""
    if isinstance(window, ThingWindow):
        x = _as_features([window], model)
    else:
        x = np.asarray(window, dtype=np.float64).reshape(1, -1)
        if x.shape[1] != model.dim:
            raise ValueError(f"feature dimension {x.shape[1]} does not match model dim {model.dim}")
    return _responsibility_matrix(model, x)[0]


# --- fitting -----------------------------------------------------------------

def _kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[i] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[i]) ** 2, axis=1))
    # A few Lloyd rounds sharpen the seeding; ties and empty clusters keep
    # their previous center so the procedure stays deterministic.
    for _ in range(10):
        assign = np.argmin(
            ((x ** 2).sum(1)[:, None] - 2 * x @ centers.T + (centers ** 2).sum(1)), axis=1)
        new_centers = centers.copy()
        for i in range(k):
            members = x[assign == i]
            if len(members):
                new_centers[i] = members.mean(axis=0)
        if np.array_equal(new_centers, centers):
            break
        centers = new_centers
    return centers


def fit_gmm_points(x: np.ndarray, n_components: int, seed: int = 0, *,
                   mask: PropertyMask = FULL_MASK,
                   rel_tol: float = DEFAULT_REL_TOL,
                   max_iter: int = DEFAULT_MAX_ITER,
                   variance_floor: float = DEFAULT_VARIANCE_FLOOR) -> GmmModel:
    """EM fit of a diagonal GMM on an (n, d) point array.

    Deterministic under the seed. The log-likelihood is evaluated before
    every parameter update, so the recorded trace is non-decreasing; EM
    stops when the relative improvement drops below ``rel_tol`` or after
    ``max_iter`` iterations. Components that lose all responsibility mass
    are re-seeded from the highest-variance component.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected (n, d) points, got shape {x.shape}")
    n, d = x.shape
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if n < 10 * n_components:
        raise InsufficientDataError(
            f"need at least {10 * n_components} windows to fit {n_components} components, got {n}")

    rng = np.random.default_rng(seed)
    means = _kmeans_plus_plus(x, n_components, rng)
    assign = np.argmin(
        ((x ** 2).sum(1)[:, None] - 2 * x @ means.T + (means ** 2).sum(1)), axis=1)
    weights = np.full(n_components, 1.0 / n_components)
    variances = np.full((n_components, d), max(float(x.var(axis=0).mean()), variance_floor))
    counts = np.bincount(assign, minlength=n_components)
    for i in range(n_components):
        if counts[i]:
            weights[i] = counts[i] / n
            member_var = x[assign == i].var(axis=0)
            variances[i] = np.maximum(member_var, variance_floor)
    weights = np.maximum(weights, 1.0 / (10.0 * n))
    weights /= weights.sum()

    trace: list[float] = []
    converged = False
    for _ in range(max_iter):
        lp = _log_gauss_prob(x, weights, means, variances)
        per_point = _logsumexp(lp, axis=1)
        ll = float(per_point.sum())
        trace.append(ll)
        if len(trace) > 1:
            improvement = ll - trace[-2]
            if improvement < rel_tol * max(abs(trace[-2]), 1.0):
                converged = True
                break

        resp = np.exp(lp - per_point[:, None])
        mass = resp.sum(axis=0)
        degenerate = mass < _DEGENERATE_MASS
        if np.any(degenerate):
            donor = int(np.argmax(variances.sum(axis=1)))
            for i in np.flatnonzero(degenerate):
                log.warning("component %d lost all responsibility mass; re-seeding from %d", i, donor)
                means[i] = means[donor] + rng.normal(0.0, 1.0, size=d) * np.sqrt(variances[donor]) * 0.1
                variances[i] = variances[donor]
                mass[i] = mass[donor] / 2.0
                mass[donor] /= 2.0
        safe_mass = np.maximum(mass, _DEGENERATE_MASS)
        new_means = (resp.T @ x) / safe_mass[:, None]
        new_means[degenerate] = means[degenerate]
        sq = (resp.T @ (x ** 2)) / safe_mass[:, None]
        new_variances = np.maximum(sq - new_means ** 2, variance_floor)
        new_variances[degenerate] = variances[degenerate]

        weights = mass / mass.sum()
        means = new_means
        variances = new_variances

    return GmmModel(
        weights=weights,
        means=means,
        variances=variances,
        seed=seed,
        mask=mask,
        variance_floor=variance_floor,
        n_iterations=len(trace),
        converged=converged,
        log_likelihood_trace=tuple(trace),
        feature_means=tuple(float(v) for v in x.mean(axis=0)),
    )


def fit_gmm(holdout_syntax: Sequence[SyntaxMatrix], n_components: int, seed: int = 0, *,
            mask: PropertyMask = FULL_MASK,
            rel_tol: float = DEFAULT_REL_TOL,
            max_iter: int = DEFAULT_MAX_ITER,
            variance_floor: float = DEFAULT_VARIANCE_FLOOR) -> GmmModel:
    """Pool all windows of the holdout images and fit the mixture on them."""
    pools = [s.features(mask) for s in holdout_syntax if s.n]
    if not pools:
        raise InsufficientDataError("holdout contains no windows")
    x = np.concatenate(pools, axis=0)
    return fit_gmm_points(x, n_components, seed, mask=mask, rel_tol=rel_tol,
                          max_iter=max_iter, variance_floor=variance_floor)


# --- Fisher encoding ---------------------------------------------------------

def encode_fv(syntax: FeatureInput, model: GmmModel, *,
              average: bool = True, signed_sqrt: bool = True,
              l2_normalize: bool = True) -> FisherVector:
    """Encode a window set as the mean/deviation gradient of its log-density.

    The raw accumulation (all options off) per component k and dimension j is
    sum_w gamma_k(w) * (w_j - mu_kj) / var_kj for the mean block and
    sum_w gamma_k(w) * ((w_j - mu_kj)^2 / sigma_kj^3 - 1 / sigma_kj) for the
    deviation block, i.e. exactly the gradient of log-likelihood w.r.t.
    mu and sigma. Options apply in order: per-window averaging, signed
    square root, global L2 normalization. An empty set encodes to zeros.
    """
    x = _as_features(syntax, model)
    k, d = model.n_components, model.dim
    if x.shape[0] == 0:
        values = np.zeros(2 * k * d)
    else:
        resp = _responsibility_matrix(model, x)           # (n, K)
        sigma = np.sqrt(model.variances)                  # (K, d)
        diff = x[:, None, :] - model.means[None, :, :]    # (n, K, d)
        grad_mu = np.einsum("nk,nkd->kd", resp, diff / model.variances[None, :, :])
        grad_sigma = np.einsum(
            "nk,nkd->kd", resp,
            diff ** 2 / (sigma ** 3)[None, :, :] - (1.0 / sigma)[None, :, :])
        values = np.concatenate([grad_mu, grad_sigma], axis=1).reshape(-1)
        if average:
            values = values / x.shape[0]
        if signed_sqrt:
            values = np.sign(values) * np.sqrt(np.abs(values))
        if l2_normalize:
            norm = np.linalg.norm(values)
            if norm > 0:
                values = values / norm
    return FisherVector(
        values=values,
        n_components=k,
        dim=d,
        averaged=average,
        signed_sqrt=signed_sqrt,
        l2_normalized=l2_normalize,
    )
