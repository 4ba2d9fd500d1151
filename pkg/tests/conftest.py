import numpy as np
import pytest

from mcoclust.core import Dataset, FeatureFamily, Kind, TruncationConfig
from mcoclust.observation import DirichletPosterior, GammaPosterior, NormalGamma
from mcoclust.synthgen import apply_missing

MIXED = (FeatureFamily(Kind.GAUSSIAN), FeatureFamily(Kind.POISSON),
         FeatureFamily(Kind.CATEGORICAL, 3))


def random_dataset(rng, n, d_per_family, missing=0.0, families=MIXED):
    """Mixed-type data with a little structure so updates have something to find."""
    z = rng.integers(2, size=n)
    matrices = []
    for fam, d in zip(families, d_per_family):
        shift = rng.integers(2, size=d)
        if fam.kind is Kind.GAUSSIAN:
            x = rng.normal(2.0 * z[:, None] * shift, 1.0, size=(n, d))
        elif fam.kind is Kind.POISSON:
            x = rng.poisson(1.0 + 3.0 * z[:, None] * shift, size=(n, d)).astype(float)
        elif fam.kind is Kind.CATEGORICAL:
            x = rng.integers(fam.num_categories, size=(n, d)).astype(float)
            x = np.where(rng.random((n, d)) < 0.5, (z[:, None] * shift) % fam.num_categories, x)
        else:
            p = rng.dirichlet(np.ones(fam.num_categories), size=(n, d))
            x = np.array([[rng.multinomial(3, p[i, j]) for j in range(d)] for i in range(n)], float)
        matrices.append(x)
    ds = Dataset(tuple(families), tuple(matrices), None)
    if missing:
        ds = apply_missing(ds, missing, int(rng.integers(2 ** 31)))
    return ds


def small_config(V=3, G=3, K=3, **kw):
    return TruncationConfig(V=V, G=G, K=K, **kw)


def block_at(post, v, g, k):
    """Scalar posterior of block (v, g, k) from a vectorised one."""
    if isinstance(post, NormalGamma):
        return NormalGamma(post.mu[v, g, k], post.lam[v, g, k], post.gamma[v, g, k],
                           post.sigma_sq[v, g, k])
    if isinstance(post, GammaPosterior):
        return GammaPosterior(post.alpha[v, g, k], post.beta[v, g, k])
    return DirichletPosterior(post.rho[v, g, k])


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    acceptance = __import__("sys").modules.get("test_acceptance")
    if acceptance is None:
        return
    terminalreporter.section("acceptance criteria")
    for number, name in acceptance.CRITERIA.items():
        if number in acceptance.VERDICTS:
            ok, detail = acceptance.VERDICTS[number]
            terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {name}: {detail}")
        else:
            terminalreporter.write_line(f"[----] {number}. {name}: not run or errored")
