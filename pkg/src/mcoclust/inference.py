"""Truncated stick-breaking variational Bayes EM for multiple co-clustering.

Shapes used throughout (``M`` families, family ``m`` has ``d_m`` features):

* ``tau[m]``            ``(d_m, V, G)``  feature -> (view, feature cluster)
* ``eta``               ``(V, n, K)``    object -> object cluster, per view
* ``view_sticks``       ``(V, 2)``       Beta parameters of the view sticks
* ``feature_sticks[m]`` ``(V, G, 2)``
* ``object_sticks``     ``(V, K, 2)``
* ``block_posteriors[m]`` posterior container over a ``(V, G, K)`` grid

The variational family is truncated at ``V``, ``G`` and ``K`` while the
model keeps infinitely many sticks, so the last stick of each level keeps
its prior concentration as the second Beta parameter.
"""

from __future__ import annotations

import enum
import logging
import weakref
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import digamma, entr

from .core import Assignments, Dataset, TruncationConfig
from .observation import block_model, kl_beta

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 500
DEFAULT_RESTARTS = 100


class NonFiniteElboError(FloatingPointError):
    def __init__(self, iteration, seed=None, detail="non-finite ELBO"):
        self.iteration = iteration
        self.seed = seed
        super().__init__(f"{detail} at iteration {iteration} (seed {seed})")


class AllRestartsFailedError(RuntimeError):
    def __init__(self, errors):
        self.errors = list(errors)
        lines = "; ".join(str(e) for e in self.errors[:5])
        super().__init__(f"all {len(self.errors)} restarts failed: {lines}")


class Mode(str, enum.Enum):
    FULL = "full"
    COCLUSTERING = "coclustering"
    RESTRICTED = "restricted"


def mode(config: TruncationConfig) -> Mode:
    """Name the degenerate model a truncation setting reduces to."""
    if config.V == 1:
        return Mode.COCLUSTERING
    if config.G == 1:
        return Mode.RESTRICTED
    return Mode.FULL


@dataclass
class VariationalState:
    tau: list
    eta: np.ndarray
    view_sticks: np.ndarray
    feature_sticks: list
    object_sticks: np.ndarray
    block_posteriors: list
    config: TruncationConfig


@dataclass
class ClusteringResult:
    assignments: Assignments
    elbo: float
    elbo_trace: list
    active_views: int
    active_object_clusters: list
    seed: int
    iterations: int
    converged: bool = False
    state: VariationalState | None = field(default=None, repr=False)

    @property
    def active_view_indices(self) -> list[int]:
        views = set(self.assignments.feature_views())
        return sorted(views)


# -- per-dataset precomputation -------------------------------------------------

class _Problem:
    """Feature maps of one dataset under one config, plus product caches.

    The caches key on array identity; states are updated functionally so an
    array is never mutated after it has been stored in a state.
    """

    def __init__(self, dataset: Dataset, config: TruncationConfig):
        self.n = dataset.n_objects
        self.models = [block_model(f, config) for f in dataset.families]
        self.T = []
        self.base = 0.0
        for model, x, mask in zip(self.models, dataset.matrices, dataset.masks):
            self.T.append(np.ascontiguousarray(model.features(x, mask)))
            self.base += model.base(x, mask)
        self._a = [None] * len(self.T)
        self._b = [None] * len(self.T)
        self._layouts = {}
        self._phi = [None] * len(self.T)

    def phi(self, m, post):
        cached = self._phi[m]
        if cached is not None and cached[0] is post:
            return cached[1]
        value = self.models[m].phi(post)
        self._phi[m] = (post, value)
        return value

    def eta_products(self, m, eta):
        """``A[v, k*S + s, j] = sum_i eta[v, i, k] T[i, j, s]``."""
        cached = self._a[m]
        if cached is not None and cached[0] is eta:
            return cached[1]
        T = self.T[m]
        n, d, S = T.shape
        V, _, K = eta.shape
        A = (eta.transpose(0, 2, 1) @ self._t_sd(m)).reshape(V, K * S, d)
        self._a[m] = (eta, A)
        return A

    def tau_products(self, m, tau):
        """``B[v, i, s*G + g] = sum_j T[i, j, s] tau[j, v, g]``."""
        cached = self._b[m]
        if cached is not None and cached[0] is tau:
            return cached[1]
        T = self.T[m]
        n, d, S = T.shape
        _, V, G = tau.shape
        B = self._t_ns(m) @ tau.reshape(d, V * G)
        B = B.reshape(n, S, V, G).transpose(2, 0, 1, 3).reshape(V, n, S * G)
        self._b[m] = (tau, B)
        return B

    def _t_sd(self, m):
        # T laid out as (n, S*d)
        if m not in self._layouts:
            T = self.T[m]
            n, d, S = T.shape
            self._layouts[m] = (np.ascontiguousarray(T.transpose(0, 2, 1)).reshape(n, S * d),
                                np.ascontiguousarray(T.transpose(0, 2, 1)).reshape(n * S, d))
        return self._layouts[m][0]

    def _t_ns(self, m):
        # T laid out as (n*S, d)
        self._t_sd(m)
        return self._layouts[m][1]

    def block_stats(self, m, tau, eta):
        """Weighted sufficient statistics ``(V, G, K, S)`` of family ``m``."""
        S = self.T[m].shape[2]
        V, _, K = eta.shape
        G = tau.shape[2]
        cached = self._b[m]
        if cached is not None and cached[0] is tau:
            stats = eta.transpose(0, 2, 1) @ cached[1]            # (V, K, S*G)
            return stats.reshape(V, K, S, G).transpose(0, 3, 1, 2)
        A = self.eta_products(m, eta)
        stats = A @ tau.transpose(1, 0, 2)                         # (V, K*S, G)
        return stats.reshape(V, K, S, G).transpose(0, 3, 1, 2)

    def feature_logits(self, m, phi, eta):
        """``sum_{k,s} phi[v, g, k, s] A[v, k, s, j]`` as ``(d, V, G)``."""
        V, G, K, S = phi.shape
        A = self.eta_products(m, eta)
        out = phi.reshape(V, G, K * S) @ A                         # (V, G, d)
        return out.transpose(2, 0, 1)

    def object_logits(self, m, phi, tau):
        """``sum_{g,s} B[v, i, s, g] phi[v, g, k, s]`` as ``(V, n, K)``."""
        V, G, K, S = phi.shape
        B = self.tau_products(m, tau)
        return B @ phi.transpose(0, 3, 1, 2).reshape(V, S * G, K)


_PROBLEMS = weakref.WeakKeyDictionary()


def _problem(dataset: Dataset, config: TruncationConfig) -> _Problem:
    per_config = _PROBLEMS.setdefault(dataset, {})
    if config not in per_config:
        per_config[config] = _Problem(dataset, config)
    return per_config[config]


# -- stick helpers ----------------------------------------------------------------

def stick_log_weights(sticks):
    """Expected log mixture weights of a truncated stick-breaking sequence.

    ``sticks[..., t, :]`` are the Beta parameters of stick ``t``; returns
    ``E[log w_t] + sum_{s<t} E[log(1 - w_s)]`` along the second-to-last axis.
    """
    a, b = sticks[..., 0], sticks[..., 1]
    dab = digamma(a + b)
    e_log_w = digamma(a) - dab
    e_log_rest = digamma(b) - dab
    before = np.cumsum(e_log_rest, axis=-1) - e_log_rest
    return e_log_w + before


def _stick_params(mass, concentration):
    """Beta parameters from the expected occupancy of each stick (last axis)."""
    tail = np.cumsum(mass[..., ::-1], axis=-1)[..., ::-1] - mass
    return np.stack([1.0 + mass, concentration + tail], axis=-1)


# -- operations -------------------------------------------------------------------

def init_state(dataset: Dataset, config: TruncationConfig, seed: int) -> VariationalState:
    """Random simplex responsibilities, then one pass of the other updates."""
    rng = np.random.default_rng(seed)
    V, G, K = config.V, config.G, config.K
    tau = [rng.dirichlet(np.ones(V * G), size=d).reshape(d, V, G)
           for d in dataset.n_features]
    eta = rng.dirichlet(np.ones(K), size=(V, dataset.n_objects))
    state = VariationalState(
        tau=tau, eta=eta,
        view_sticks=np.ones((V, 2)),
        feature_sticks=[np.ones((V, G, 2)) for _ in tau],
        object_sticks=np.ones((V, K, 2)),
        block_posteriors=[None] * len(tau),
        config=config)
    state = update_block_posteriors(state, dataset)
    state = update_view_sticks(state)
    state = update_feature_sticks(state)
    return update_object_sticks(state)


def update_view_sticks(state: VariationalState) -> VariationalState:
    mass = sum(t.sum(axis=(0, 2)) for t in state.tau)
    if np.isscalar(mass):
        mass = np.zeros(state.config.V)
    return replace(state, view_sticks=_stick_params(mass, state.config.alpha1))


def update_feature_sticks(state: VariationalState) -> VariationalState:
    sticks = [_stick_params(t.sum(axis=0), state.config.alpha2) for t in state.tau]
    return replace(state, feature_sticks=sticks)


def update_object_sticks(state: VariationalState) -> VariationalState:
    return replace(state, object_sticks=_stick_params(state.eta.sum(axis=1), state.config.beta))


def update_block_posteriors(state: VariationalState, dataset: Dataset) -> VariationalState:
    prob = _problem(dataset, state.config)
    posts = [model.update(prob.block_stats(m, state.tau[m], state.eta))
             for m, model in enumerate(prob.models)]
    return replace(state, block_posteriors=posts)


def _normalize_log(logits, axes):
    # max-shifted softmax over ``axes``
    out = np.exp(logits - logits.max(axis=axes, keepdims=True))
    return out / out.sum(axis=axes, keepdims=True)


def update_feature_responsibilities(state: VariationalState, dataset: Dataset) -> VariationalState:
    prob = _problem(dataset, state.config)
    view_prior = stick_log_weights(state.view_sticks)
    new_tau = []
    for m, model in enumerate(prob.models):
        phi = prob.phi(m, state.block_posteriors[m])
        logits = prob.feature_logits(m, phi, state.eta)
        logits = logits + view_prior[:, None] + stick_log_weights(state.feature_sticks[m])
        new_tau.append(_normalize_log(logits, (1, 2)))
    return replace(state, tau=new_tau)


def update_object_responsibilities(state: VariationalState, dataset: Dataset) -> VariationalState:
    prob = _problem(dataset, state.config)
    logits = np.broadcast_to(stick_log_weights(state.object_sticks)[:, None, :],
                             state.eta.shape).copy()
    for m, model in enumerate(prob.models):
        phi = prob.phi(m, state.block_posteriors[m])
        logits += prob.object_logits(m, phi, state.tau[m])
    return replace(state, eta=_normalize_log(logits, 2))


def elbo_terms(state: VariationalState, dataset: Dataset) -> dict:
    """The evidence lower bound split into its named parts."""
    cfg = state.config
    prob = _problem(dataset, cfg)
    data = prob.base
    kl_theta = 0.0
    prior_y = 0.0
    entropy_y = 0.0
    kl_feature_sticks = 0.0
    view_prior = stick_log_weights(state.view_sticks)
    for m, model in enumerate(prob.models):
        post = state.block_posteriors[m]
        stats = prob.block_stats(m, state.tau[m], state.eta)
        data += float(np.sum(prob.phi(m, post) * stats))
        kl_theta += float(np.sum(model.kl(post)))
        occupancy = state.tau[m].sum(axis=0)
        prior_y += float(np.sum(occupancy * (view_prior[:, None]
                                             + stick_log_weights(state.feature_sticks[m]))))
        entropy_y += float(entr(state.tau[m]).sum())
        fs = state.feature_sticks[m]
        kl_feature_sticks += float(kl_beta(fs[..., 0], fs[..., 1], 1.0, cfg.alpha2).sum())
    prior_z = float(np.sum(state.eta.sum(axis=1) * stick_log_weights(state.object_sticks)))
    vs, os_ = state.view_sticks, state.object_sticks
    return {
        "data": data,
        "prior_y": prior_y,
        "prior_z": prior_z,
        "kl_view_sticks": float(kl_beta(vs[:, 0], vs[:, 1], 1.0, cfg.alpha1).sum()),
        "kl_feature_sticks": kl_feature_sticks,
        "kl_object_sticks": float(kl_beta(os_[..., 0], os_[..., 1], 1.0, cfg.beta).sum()),
        "kl_theta": kl_theta,
        "entropy_y": entropy_y,
        "entropy_z": float(entr(state.eta).sum()),
    }


def compute_elbo(state: VariationalState, dataset: Dataset, config: TruncationConfig | None = None) -> float:
    if config is not None and config != state.config:
        state = replace(state, config=config)
    t = elbo_terms(state, dataset)
    return (t["data"] + t["prior_y"] + t["prior_z"] + t["entropy_y"] + t["entropy_z"]
            - t["kl_view_sticks"] - t["kl_feature_sticks"] - t["kl_object_sticks"]
            - t["kl_theta"])


UPDATE_ORDER = (
    ("block_posteriors", update_block_posteriors),
    ("view_sticks", lambda state, dataset: update_view_sticks(state)),
    ("feature_sticks", lambda state, dataset: update_feature_sticks(state)),
    ("object_sticks", lambda state, dataset: update_object_sticks(state)),
    ("feature_responsibilities", update_feature_responsibilities),
    ("object_responsibilities", update_object_responsibilities),
)


def sweep(state: VariationalState, dataset: Dataset) -> VariationalState:
    """One full round of coordinate updates, in ``UPDATE_ORDER``."""
    for _, op in UPDATE_ORDER:
        state = op(state, dataset)
    return state


def map_assignments(state: VariationalState) -> Assignments:
    """Hard memberships; ties go to the lowest index."""
    G = state.config.G
    features = []
    for t in state.tau:
        flat = t.reshape(t.shape[0], -1).argmax(axis=1)
        features.append([(int(f // G), int(f % G)) for f in flat])
    objects = [[int(k) for k in row] for row in state.eta.argmax(axis=2)]
    return Assignments(features, objects)


def _result(state, elbo, trace, seed, iterations, converged):
    assignments = map_assignments(state)
    views = set(assignments.feature_views())
    clusters = [len(set(row)) for row in assignments.object_assignment]
    return ClusteringResult(
        assignments=assignments, elbo=elbo, elbo_trace=trace,
        active_views=len(views), active_object_clusters=clusters,
        seed=seed, iterations=iterations, converged=converged, state=state)


def fit_single(dataset: Dataset, config: TruncationConfig, seed: int,
               tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> ClusteringResult:
    """Run VB-EM from one random start until the relative ELBO change is below ``tol``."""
    state = init_state(dataset, config, seed)
    trace = []
    converged = False
    for it in range(1, max_iters + 1):
        state = sweep(state, dataset)
        if not (all(np.isfinite(t).all() for t in state.tau) and np.isfinite(state.eta).all()):
            raise NonFiniteElboError(it, seed, "non-finite responsibilities")
        elbo = compute_elbo(state, dataset)
        if not np.isfinite(elbo):
            raise NonFiniteElboError(it, seed)
        trace.append(elbo)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol * abs(trace[-2]):
            converged = True
            break
    return _result(state, trace[-1], trace, seed, len(trace), converged)


def _fit_job(args):
    dataset, config, seed, tol, max_iters, keep_state = args
    try:
        res = fit_single(dataset, config, seed, tol, max_iters)
    except (NonFiniteElboError, ArithmeticError) as exc:
        return exc
    if not keep_state:
        res.state = None
    return res


def fit(dataset: Dataset, config: TruncationConfig, num_restarts: int = DEFAULT_RESTARTS,
        base_seed: int = 0, parallelism: int = 1, tol: float = DEFAULT_TOL,
        max_iters: int = DEFAULT_MAX_ITERS, keep_state: bool = False) -> ClusteringResult:
    """Best-ELBO result over ``num_restarts`` seeded runs.

    Seeds are ``base_seed .. base_seed + num_restarts - 1``; the winner is the
    highest ELBO with ties broken by the lower seed, so the outcome does not
    depend on ``parallelism``.
    """
    if num_restarts < 1:
        raise ValueError("num_restarts must be >= 1")
    jobs = [(dataset, config, base_seed + s, tol, max_iters, keep_state)
            for s in range(num_restarts)]
    if parallelism <= 1 or num_restarts == 1:
        outcomes = [_fit_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(_fit_job, jobs))
    results = [o for o in outcomes if isinstance(o, ClusteringResult)]
    errors = [o for o in outcomes if not isinstance(o, ClusteringResult)]
    for err in errors:
        log.warning("restart dropped: %s", err)
    if not results:
        raise AllRestartsFailedError(errors)
    return max(results, key=lambda r: (r.elbo, -r.seed))
