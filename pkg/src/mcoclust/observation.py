"""Conjugate block posteriors for Gaussian, Poisson and categorical data.

All posterior containers hold numpy arrays (or scalars) and every function
broadcasts, so the same code serves single-block unit checks and the
``(V, G, K)`` block grids used during fitting.

For each family the expected log-likelihood of a cell is linear in a small
feature map of the cell value::

    E_q[log p(x | theta)] = T(x) . phi(q) + base(x)

``T`` for Gaussian is ``(1, x, x**2)``, for Poisson ``(1, x)`` and for
categorical/multinomial the count vector. The :class:`BlockModel` classes
expose ``T``, ``base`` and ``phi`` so the fitter can reduce every
responsibility update to matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln

from .core import FeatureFamily, GaussianPrior, Kind, PoissonPrior, TruncationConfig

LOG_2PI = np.log(2.0 * np.pi)

# sigma^2 values in (-CLAMP_SLACK, 0] are rounding noise.
CLAMP_SLACK = 1e-9
CLAMP_VALUE = 1e-12


class DegenerateBlockError(ArithmeticError):
    pass


@dataclass
class WeightedSuffStats:
    """Responsibility-weighted sums over the observed cells of one block."""

    weight_sum: np.ndarray | float = 0.0
    weighted_sum: np.ndarray | float = 0.0
    weighted_sq_sum: np.ndarray | float = 0.0
    weighted_counts: np.ndarray | None = None

    def __add__(self, other):
        counts = None
        if self.weighted_counts is not None or other.weighted_counts is not None:
            counts = _or_zero(self.weighted_counts) + _or_zero(other.weighted_counts)
        return WeightedSuffStats(
            self.weight_sum + other.weight_sum,
            self.weighted_sum + other.weighted_sum,
            self.weighted_sq_sum + other.weighted_sq_sum,
            counts)


def _or_zero(a):
    return 0.0 if a is None else np.asarray(a, float)


def suff_stats(x, weights, mask=None, num_categories=None, kind=Kind.GAUSSIAN):
    """Accumulate weighted statistics of the cells ``x`` of a single block.

    ``weights`` are the products tau * eta of each cell. Masked cells (mask
    False) contribute nothing, whatever value they hold.
    """
    kind = Kind(kind)
    weights = np.asarray(weights, float)
    if mask is None:
        mask = np.ones(weights.shape, bool)
    w = np.where(mask, weights, 0.0)
    x = np.asarray(x, float)
    if kind is Kind.CATEGORICAL:
        xs = np.where(mask, x, 0).astype(int)
        counts = np.zeros(num_categories)
        np.add.at(counts, xs.ravel(), w.ravel())
        return WeightedSuffStats(w.sum(), 0.0, 0.0, counts)
    if kind is Kind.MULTINOMIAL:
        xs = np.where(mask[..., None], x, 0.0)
        counts = (w[..., None] * xs).reshape(-1, xs.shape[-1]).sum(axis=0)
        return WeightedSuffStats(w.sum(), 0.0, 0.0, counts)
    xs = np.where(mask, x, 0.0)
    return WeightedSuffStats(w.sum(), (w * xs).sum(), (w * xs * xs).sum())


# -- posteriors ---------------------------------------------------------------

@dataclass
class NormalGamma:
    """Precision ``s ~ Ga(gamma/2, gamma*sigma_sq/2)``, mean ``mu | s ~ N(mu, 1/(lambda s))``."""

    mu: np.ndarray | float
    lam: np.ndarray | float
    gamma: np.ndarray | float
    sigma_sq: np.ndarray | float

    @classmethod
    def from_prior(cls, prior: GaussianPrior):
        return cls(prior.mu0, prior.lambda0, prior.gamma0, prior.sigma0_sq)


@dataclass
class GammaPosterior:
    alpha: np.ndarray | float
    beta: np.ndarray | float

    @classmethod
    def from_prior(cls, prior: PoissonPrior):
        return cls(prior.alpha0, prior.beta0)


@dataclass
class DirichletPosterior:
    rho: np.ndarray

    @classmethod
    def uniform(cls, mass, num_categories):
        return cls(np.full(num_categories, float(mass)))


def gaussian_update(stats: WeightedSuffStats, prior: GaussianPrior) -> NormalGamma:
    w = np.asarray(stats.weight_sum, float)
    s1 = np.asarray(stats.weighted_sum, float)
    s2 = np.asarray(stats.weighted_sq_sum, float)
    lam = prior.lambda0 + w
    mu = (prior.lambda0 * prior.mu0 + s1) / lam
    gamma = prior.gamma0 + w
    resid = (prior.gamma0 * prior.sigma0_sq + prior.lambda0 * prior.mu0 ** 2
             + s2 - lam * mu * mu)
    sigma_sq = resid / gamma
    if np.any(sigma_sq <= -CLAMP_SLACK):
        raise DegenerateBlockError(
            f"negative posterior variance {np.min(sigma_sq):.3g}")
    sigma_sq = np.where(sigma_sq <= 0, CLAMP_VALUE, sigma_sq)
    if sigma_sq.ndim == 0:
        return NormalGamma(float(mu), float(lam), float(gamma), float(sigma_sq))
    return NormalGamma(mu, lam, gamma, sigma_sq)


def gaussian_expected_loglik(x, post: NormalGamma):
    x = np.asarray(x, float)
    return -0.5 * ((x - post.mu) ** 2 / post.sigma_sq + 1.0 / post.lam
                   + np.log(post.sigma_sq) + np.log(post.gamma / 2.0)
                   - digamma(post.gamma / 2.0) + LOG_2PI)


def poisson_update(stats: WeightedSuffStats, prior: PoissonPrior) -> GammaPosterior:
    return GammaPosterior(prior.alpha0 + np.asarray(stats.weighted_sum, float),
                          prior.beta0 + np.asarray(stats.weight_sum, float))


def poisson_expected_loglik(x, post: GammaPosterior):
    # E[log rate] under Ga(alpha, beta) is digamma(alpha) - log(beta).
    x = np.asarray(x, float)
    return (x * (digamma(post.alpha) - np.log(post.beta))
            - post.alpha / post.beta - gammaln(x + 1.0))


def categorical_update(stats: WeightedSuffStats, prior_mass: float) -> DirichletPosterior:
    return DirichletPosterior(prior_mass + np.asarray(stats.weighted_counts, float))


def dirichlet_expected_log_probs(post: DirichletPosterior):
    rho = np.asarray(post.rho, float)
    return digamma(rho) - digamma(rho.sum(axis=-1, keepdims=True))


def categorical_expected_loglik(x: int, post: DirichletPosterior):
    return dirichlet_expected_log_probs(post)[..., int(x)]


def log_multinomial_coef(counts):
    counts = np.asarray(counts, float)
    return gammaln(counts.sum(axis=-1) + 1.0) - gammaln(counts + 1.0).sum(axis=-1)


def multinomial_expected_loglik(counts, post: DirichletPosterior):
    counts = np.asarray(counts, float)
    return ((counts * dirichlet_expected_log_probs(post)).sum(axis=-1)
            + log_multinomial_coef(counts))


# -- KL divergences -----------------------------------------------------------

def kl_gamma(a, b, a0, b0):
    """KL(Ga(a, b) || Ga(a0, b0)), shape/rate parametrisation."""
    return ((a - a0) * digamma(a) - gammaln(a) + gammaln(a0)
            + a0 * (np.log(b) - np.log(b0)) + a * (b0 - b) / b)


def kl_beta(a, b, a0, b0):
    """KL(Beta(a, b) || Beta(a0, b0))."""
    ab = a + b
    return (gammaln(ab) - gammaln(a) - gammaln(b)
            - gammaln(a0 + b0) + gammaln(a0) + gammaln(b0)
            + (a - a0) * digamma(a) + (b - b0) * digamma(b)
            + (a0 - a + b0 - b) * digamma(ab))


def kl_dirichlet(rho, rho0):
    rho = np.asarray(rho, float)
    rho0 = np.broadcast_to(np.asarray(rho0, float), rho.shape)
    total = rho.sum(axis=-1)
    return (gammaln(total) - gammaln(rho).sum(axis=-1)
            - gammaln(rho0.sum(axis=-1)) + gammaln(rho0).sum(axis=-1)
            + ((rho - rho0) * (digamma(rho) - digamma(total)[..., None])).sum(axis=-1))


def kl_normal_gamma(post: NormalGamma, prior: GaussianPrior):
    a, b = post.gamma / 2.0, post.gamma * post.sigma_sq / 2.0
    a0, b0 = prior.gamma0 / 2.0, prior.gamma0 * prior.sigma0_sq / 2.0
    lam0 = prior.lambda0
    # E_q(s)[KL(N(mu, 1/(lam s)) || N(mu0, 1/(lam0 s)))], using E[s] = 1/sigma_sq.
    mean_part = 0.5 * (lam0 / post.lam + lam0 * (post.mu - prior.mu0) ** 2 / post.sigma_sq
                       - 1.0 + np.log(post.lam / lam0))
    return kl_gamma(a, b, a0, b0) + mean_part


# -- vectorised block models used by the fitter ---------------------------------

class BlockModel:
    """Linear-feature view of one family's observation model.

    ``features`` maps a ``(n, d)`` matrix (``(n, d, H)`` for multinomial) and
    its mask to ``T`` of shape ``(n, d, S)`` with masked cells zeroed.
    ``phi`` maps a posterior over blocks to ``(..., S)`` coefficients.
    """

    n_stats: int

    def features(self, x, mask):
        raise NotImplementedError

    def base(self, x, mask):
        """Sum over observed cells of the parameter-free part of the log-likelihood."""
        return 0.0

    def prior_posterior(self, shape):
        raise NotImplementedError

    def update(self, stats):
        raise NotImplementedError

    def phi(self, post):
        raise NotImplementedError

    def kl(self, post):
        raise NotImplementedError


class GaussianModel(BlockModel):
    n_stats = 3

    def __init__(self, prior: GaussianPrior):
        self.prior = prior

    def features(self, x, mask):
        xs = np.where(mask, x, 0.0)
        return np.stack([mask.astype(float), xs, xs * xs], axis=-1)

    def prior_posterior(self, shape):
        p = self.prior
        return NormalGamma(np.full(shape, p.mu0), np.full(shape, p.lambda0),
                           np.full(shape, p.gamma0), np.full(shape, p.sigma0_sq))

    def update(self, stats):
        return gaussian_update(
            WeightedSuffStats(stats[..., 0], stats[..., 1], stats[..., 2]), self.prior)

    def phi(self, post):
        inv = 1.0 / post.sigma_sq
        const = -0.5 * (post.mu ** 2 * inv + 1.0 / post.lam + np.log(post.sigma_sq)
                        + np.log(post.gamma / 2.0) - digamma(post.gamma / 2.0) + LOG_2PI)
        return np.stack([const, post.mu * inv, -0.5 * inv], axis=-1)

    def kl(self, post):
        return kl_normal_gamma(post, self.prior)


class PoissonModel(BlockModel):
    n_stats = 2

    def __init__(self, prior: PoissonPrior):
        self.prior = prior

    def features(self, x, mask):
        xs = np.where(mask, x, 0.0)
        return np.stack([mask.astype(float), xs], axis=-1)

    def base(self, x, mask):
        return float(-gammaln(np.where(mask, x, 0.0) + 1.0).sum())

    def prior_posterior(self, shape):
        return GammaPosterior(np.full(shape, self.prior.alpha0),
                              np.full(shape, self.prior.beta0))

    def update(self, stats):
        return poisson_update(WeightedSuffStats(stats[..., 0], stats[..., 1]), self.prior)

    def phi(self, post):
        return np.stack([-post.alpha / post.beta,
                         digamma(post.alpha) - np.log(post.beta)], axis=-1)

    def kl(self, post):
        return kl_gamma(post.alpha, post.beta, self.prior.alpha0, self.prior.beta0)


class DirichletModel(BlockModel):
    def __init__(self, num_categories: int, prior_mass: float, multinomial: bool):
        self.n_stats = num_categories
        self.prior_mass = prior_mass
        self.multinomial = multinomial

    def features(self, x, mask):
        if self.multinomial:
            return np.where(mask[..., None], x, 0.0)
        idx = np.where(mask, x, 0).astype(int)
        onehot = (idx[..., None] == np.arange(self.n_stats)).astype(float)
        return onehot * mask[..., None]

    def base(self, x, mask):
        if not self.multinomial:
            return 0.0
        return float(log_multinomial_coef(np.where(mask[..., None], x, 0.0)).sum())

    def prior_posterior(self, shape):
        return DirichletPosterior(np.full(tuple(shape) + (self.n_stats,), self.prior_mass))

    def update(self, stats):
        return categorical_update(WeightedSuffStats(weighted_counts=stats), self.prior_mass)

    def phi(self, post):
        return dirichlet_expected_log_probs(post)

    def kl(self, post):
        return kl_dirichlet(post.rho, self.prior_mass)


def block_model(family: FeatureFamily, config: TruncationConfig) -> BlockModel:
    if family.kind is Kind.GAUSSIAN:
        return GaussianModel(config.gaussian_prior)
    if family.kind is Kind.POISSON:
        return PoissonModel(config.poisson_prior)
    return DirichletModel(family.num_categories, config.dirichlet_prior_mass,
                          family.kind is Kind.MULTINOMIAL)
