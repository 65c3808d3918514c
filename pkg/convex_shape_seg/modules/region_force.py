"""
Purpose:
    Region force from foreground/background Gaussian mixtures.

        G_i(I(x)) = sum_k c_k N(I(x); mu_k, Sigma_k)
        p_0 = gamma_0 G_0 / (gamma_0 G_0 + gamma_1 G_1),  p_1 = 1 - p_0
        f_i = -ln max(p_i, p_floor),  f = w_1 f_1 - w_0 f_0

    Mixtures are fitted by EM seeded with k-means++. Densities are handled in
    log space so that well separated colors do not underflow.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp
from sklearn.cluster import kmeans_plusplus

from convex_shape_seg.modules.grid import BinaryField, ScalarField, distance_beyond_mask

logger = logging.getLogger(__name__)

EM_TOLERANCE = 1e-6
EM_MAX_ITERATIONS = 100
COVARIANCE_FLOOR_SCALE = 1e-4
DEFAULT_P_FLOOR = 1e-6
MIN_SAMPLES_PER_COMPONENT = 10


# ------------------ mixture model ------------------


@dataclass
class GaussianMixture:
    """
    Mixture weights c_k (K,), means mu_k (K, p) and covariances Sigma_k (K, p, p).
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    # mean per-sample log-likelihood after initialization and after every EM step
    log_likelihood_history: List[float] = field(default_factory=list, compare=False)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def n_channels(self) -> int:
        return self.means.shape[1]

    def component_log_prob(self, colors: np.ndarray) -> np.ndarray:
        """
        log c_k + log N(x; mu_k, Sigma_k) for every sample and component, shape (n, K).
        """
        colors = as_samples(colors, self.n_channels)
        out = np.empty((len(colors), self.n_components))
        for k in range(self.n_components):
            out[:, k] = _gaussian_log_pdf(colors, self.means[k], self.covariances[k])
        with np.errstate(divide="ignore"):
            return out + np.log(self.weights)

    def log_density(self, colors: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_log_prob(colors), axis=1)

    def density(self, colors: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(colors))


def as_samples(colors, n_channels: Optional[int] = None) -> np.ndarray:
    """
    Coerce colors to an (n, p) float array.
    """
    samples = np.asarray(colors, dtype=np.float64)
    if samples.ndim <= 1:
        channels = n_channels or 1
        samples = samples.reshape(-1, channels)
    return samples


def _gaussian_log_pdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    p = len(mean)
    chol = np.linalg.cholesky(cov)
    solved = solve_triangular(chol, (x - mean).T, lower=True)
    maha = np.sum(solved * solved, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (p * np.log(2.0 * np.pi) + log_det + maha)


def _floor_covariance(cov: np.ndarray, floor: float) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals.min() >= floor:
        return cov
    eigvals = np.maximum(eigvals, floor)
    return (eigvecs * eigvals) @ eigvecs.T


def _m_step(
    samples: np.ndarray, resp: np.ndarray, floor: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, p = samples.shape
    nk = resp.sum(axis=0)
    global_mean = samples.mean(axis=0)
    global_cov = np.atleast_2d(np.cov(samples.T, bias=True))

    weights = nk / n
    means = np.empty((len(nk), p))
    covs = np.empty((len(nk), p, p))
    for k, count in enumerate(nk):
        if count < 1e-10:
            # empty component: park it on the global statistics
            means[k] = global_mean
            covs[k] = _floor_covariance(global_cov, floor)
            continue
        means[k] = resp[:, k] @ samples / count
        diff = samples - means[k]
        cov = (resp[:, k, None] * diff).T @ diff / count
        covs[k] = _floor_covariance(0.5 * (cov + cov.T), floor)
    return weights, means, covs


def fit_gmm(
    samples,
    K: int,
    seed: int = 0,
    tol: float = EM_TOLERANCE,
    max_iter: int = EM_MAX_ITERATIONS,
) -> GaussianMixture:
    """
    EM fit of a K-component mixture.

    k-means++ picks the initial centers, a hard assignment to them gives the
    starting parameters, then E/M steps run until the mean log-likelihood gains
    less than `tol` or `max_iter` steps were made. Covariance eigenvalues are
    floored at 1e-4 * (mean channel variance + 1e-8).
    """
    X = as_samples(samples)
    n, p = X.shape
    if K < 1 or n < MIN_SAMPLES_PER_COMPONENT * K:
        raise ValueError(f"insufficient samples for K components ({n} samples, K={K})")

    floor = COVARIANCE_FLOOR_SCALE * (float(X.var(axis=0).mean()) + 1e-8)

    centers, _ = kmeans_plusplus(X, n_clusters=K, random_state=seed)
    distances = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((n, K))
    resp[np.arange(n), distances.argmin(axis=1)] = 1.0

    model = GaussianMixture(*_m_step(X, resp, floor))
    log_prob = model.component_log_prob(X)
    history = [float(logsumexp(log_prob, axis=1).mean())]

    for _ in range(max_iter):
        # E-step
        resp = np.exp(log_prob - logsumexp(log_prob, axis=1, keepdims=True))
        # M-step
        model = GaussianMixture(*_m_step(X, resp, floor))
        log_prob = model.component_log_prob(X)
        history.append(float(logsumexp(log_prob, axis=1).mean()))
        if history[-1] - history[-2] < tol:
            break
    else:
        logger.warning(f"EM stopped at the iteration cap ({max_iter}) for K={K}")

    model.log_likelihood_history = history
    logger.debug(f"fit_gmm(K={K}, n={n}): {len(history) - 1} EM steps, ll={history[-1]:.6f}")
    return model


def gmm_density(model: GaussianMixture, color) -> float:
    return float(model.density(as_samples(color, model.n_channels))[0])


# ------------------ posterior and force ------------------


def posterior_p0(G0_val: float, G1_val: float, gamma0: float = 1.0, gamma1: float = 1.0) -> float:
    """
    p0 = gamma0 G0 / (gamma0 G0 + gamma1 G1); an empty denominator is uninformative (0.5).
    """
    numerator = gamma0 * G0_val
    denominator = numerator + gamma1 * G1_val
    if denominator <= 0:
        logger.warning("zero posterior denominator, using p0 = 0.5")
        return 0.5
    return numerator / denominator


def posterior_field(
    log_g0: np.ndarray, log_g1: np.ndarray, gamma0: float = 1.0, gamma1: float = 1.0
) -> np.ndarray:
    """
    Vectorized posterior_p0 from log densities.
    """
    with np.errstate(divide="ignore"):
        a = np.log(gamma0) + log_g0
        b = np.log(gamma1) + log_g1
    log_den = np.logaddexp(a, b)
    p0 = np.full(np.shape(a), 0.5)
    informative = np.isfinite(log_den)
    p0[informative] = np.exp(a[informative] - log_den[informative])
    if not informative.all():
        logger.warning(
            f"zero posterior denominator at {np.count_nonzero(~informative)} pixels, using p0 = 0.5"
        )
    return p0


@dataclass(frozen=True)
class ForceField:
    """
    f = w1 * f1 - w0 * f0 together with its parts.
    """

    f: ScalarField
    f0: ScalarField
    f1: ScalarField
    p0: ScalarField
    w0: float
    w1: float
    gamma0: float
    gamma1: float

    @property
    def p1(self) -> ScalarField:
        return ScalarField(1.0 - self.p0.values)


def force_from_posterior(
    p0: np.ndarray, w0: float = 0.5, w1: float = 0.5, p_floor: float = DEFAULT_P_FLOOR
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    (f, f0, f1) from the foreground posterior.
    """
    if not 0 < p_floor < 0.5:
        raise ValueError(f"p_floor must lie in (0, 0.5), got {p_floor}")
    p0 = np.asarray(p0, dtype=np.float64)
    f0 = -np.log(np.maximum(p0, p_floor))
    f1 = -np.log(np.maximum(1.0 - p0, p_floor))
    return w1 * f1 - w0 * f0, f0, f1


def build_force(
    image: np.ndarray,
    fg_model: GaussianMixture,
    bg_model: GaussianMixture,
    w0: float = 0.5,
    w1: float = 0.5,
    gamma0: float = 1.0,
    gamma1: float = 1.0,
    p_floor: float = DEFAULT_P_FLOOR,
) -> ForceField:
    height, width, channels = image.shape
    colors = image.reshape(-1, channels)
    p0 = posterior_field(fg_model.log_density(colors), bg_model.log_density(colors), gamma0, gamma1)
    p0 = p0.reshape(height, width)
    f, f0, f1 = force_from_posterior(p0, w0, w1, p_floor)
    return ForceField(
        f=ScalarField(f),
        f0=ScalarField(f0),
        f1=ScalarField(f1),
        p0=ScalarField(p0),
        w0=w0,
        w1=w1,
        gamma0=gamma0,
        gamma1=gamma1,
    )


# ------------------ model initialization and refresh ------------------


def init_models(
    image: np.ndarray,
    R_ob_hull: BinaryField,
    s: float = 5.0,
    K0: int = 2,
    K1: int = 3,
    seed: int = 0,
) -> Tuple[GaussianMixture, GaussianMixture]:
    """
    Foreground model from the hull pixels, background model from the pixels
    farther than s from the hull.
    """
    channels = image.shape[2]
    fg_samples = image[R_ob_hull.object_mask].reshape(-1, channels)
    if len(fg_samples) == 0:
        raise ValueError("empty object region")
    bg_mask = distance_beyond_mask(R_ob_hull, s)
    if not bg_mask.any():
        raise ValueError(f"no background pixels farther than s={s} from the labels hull, use a smaller s")
    bg_samples = image[bg_mask].reshape(-1, channels)

    logger.info(f"init_models: {len(fg_samples)} foreground / {len(bg_samples)} background samples")
    fg_model = fit_gmm(fg_samples, K0, seed=seed)
    bg_model = fit_gmm(bg_samples, K1, seed=seed)
    return fg_model, bg_model


def refit_models(
    image: np.ndarray, u: BinaryField, K0: int = 2, K1: int = 3, seed: int = 0
) -> Optional[Tuple[GaussianMixture, GaussianMixture]]:
    """
    Refit both mixtures from the current partition {u = 0} / {u = 1}.
    Returns None when either region is too small for its component count.
    """
    channels = image.shape[2]
    fg_samples = image[u.object_mask].reshape(-1, channels)
    bg_samples = image[~u.object_mask].reshape(-1, channels)
    if (
        len(fg_samples) < MIN_SAMPLES_PER_COMPONENT * K0
        or len(bg_samples) < MIN_SAMPLES_PER_COMPONENT * K1
    ):
        logger.warning(
            f"skipping force refresh: {len(fg_samples)} object / {len(bg_samples)} background pixels"
        )
        return None
    return fit_gmm(fg_samples, K0, seed=seed), fit_gmm(bg_samples, K1, seed=seed)
