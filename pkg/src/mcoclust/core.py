"""Data containers shared by the fitting, simulation and CLI layers.

A :class:`Dataset` holds one matrix per feature family. Gaussian, Poisson
and categorical matrices are ``(n, d)`` float arrays; multinomial matrices
are ``(n, d, H)`` count arrays. Every matrix carries a boolean mask of shape
``(n, d)``; cells whose mask is False are treated as missing and never enter
any computation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np


class Kind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    POISSON = "poisson"
    CATEGORICAL = "categorical"
    MULTINOMIAL = "multinomial"


@dataclass(frozen=True)
class FeatureFamily:
    """Distribution family of a group of features.

    ``num_categories`` is required for categorical and multinomial families
    and must be at least 2; it is ignored otherwise.
    """

    kind: Kind
    num_categories: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind in (Kind.CATEGORICAL, Kind.MULTINOMIAL):
            if self.num_categories is None or int(self.num_categories) < 2:
                raise ValueError(
                    f"{self.kind.value} family needs num_categories >= 2, "
                    f"got {self.num_categories}")
            object.__setattr__(self, "num_categories", int(self.num_categories))
        else:
            object.__setattr__(self, "num_categories", None)

    @classmethod
    def parse(cls, spec: str) -> "FeatureFamily":
        """Parse ``gaussian``, ``poisson``, ``categorical:H`` or ``multinomial:H``."""
        name, _, arg = spec.strip().lower().partition(":")
        kind = Kind(name)
        return cls(kind, int(arg) if arg else None)

    def __str__(self):
        if self.num_categories is None:
            return self.kind.value
        return f"{self.kind.value}:{self.num_categories}"

    @property
    def is_discrete(self) -> bool:
        return self.kind in (Kind.CATEGORICAL, Kind.MULTINOMIAL)


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    families: tuple[FeatureFamily, ...]
    matrices: tuple[np.ndarray, ...]
    masks: tuple[np.ndarray, ...]
    feature_names: tuple[tuple[str, ...], ...] = None
    object_ids: tuple[str, ...] = None

    def __post_init__(self):
        families = tuple(self.families)
        if len(self.matrices) != len(families):
            raise ValueError("one matrix per family is required")
        matrices = tuple(_frozen(x, float) for x in self.matrices)
        if self.masks is None:
            masks = tuple(_frozen(np.ones(x.shape[:2], bool), bool) for x in matrices)
        else:
            masks = tuple(_frozen(m, bool) for m in self.masks)
        n = matrices[0].shape[0] if matrices else 0
        names = self.feature_names
        if names is None:
            names = tuple(
                tuple(f"f{m}_{j}" for j in range(x.shape[1]))
                for m, x in enumerate(matrices))
        ids = self.object_ids
        if ids is None:
            ids = tuple(str(i) for i in range(n))
        object.__setattr__(self, "families", families)
        object.__setattr__(self, "matrices", matrices)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "feature_names", tuple(tuple(str(s) for s in f) for f in names))
        object.__setattr__(self, "object_ids", tuple(str(s) for s in ids))

    @property
    def n_objects(self) -> int:
        return len(self.object_ids)

    @property
    def n_features(self) -> tuple[int, ...]:
        return tuple(x.shape[1] for x in self.matrices)

    def with_masks(self, masks) -> "Dataset":
        return replace(self, masks=tuple(masks))

    def with_matrices(self, matrices) -> "Dataset":
        return replace(self, matrices=tuple(matrices))


@dataclass(frozen=True)
class GaussianPrior:
    mu0: float = 0.0
    lambda0: float = 1e-4
    gamma0: float = 1.0
    sigma0_sq: float = 1e-4


@dataclass(frozen=True)
class PoissonPrior:
    alpha0: float = 1.0
    beta0: float = 1.0


@dataclass(frozen=True)
class TruncationConfig:
    """Truncation levels, stick concentrations and observation priors."""

    V: int = 10
    G: int = 10
    K: int = 10
    alpha1: float = 1.0
    alpha2: float = 1.0
    beta: float = 1.0
    gaussian_prior: GaussianPrior = field(default_factory=GaussianPrior)
    poisson_prior: PoissonPrior = field(default_factory=PoissonPrior)
    dirichlet_prior_mass: float = 1.0

    def __post_init__(self):
        for name in ("V", "G", "K"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        positive = {
            "alpha1": self.alpha1, "alpha2": self.alpha2, "beta": self.beta,
            "lambda0": self.gaussian_prior.lambda0,
            "gamma0": self.gaussian_prior.gamma0,
            "sigma0_sq": self.gaussian_prior.sigma0_sq,
            "alpha0": self.poisson_prior.alpha0,
            "beta0": self.poisson_prior.beta0,
            "dirichlet_prior_mass": self.dirichlet_prior_mass,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")


@dataclass
class Assignments:
    """Hard memberships.

    ``feature_assignment[m][j]`` is the ``(view, feature_cluster)`` pair of
    feature ``j`` in family ``m``; ``object_assignment[v][i]`` is the object
    cluster of object ``i`` in view ``v``.
    """

    feature_assignment: list[list[tuple[int, int]]]
    object_assignment: list[list[int]]

    def feature_views(self) -> list[int]:
        return [v for fam in self.feature_assignment for v, _ in fam]


@dataclass(frozen=True)
class Violation:
    family: int
    reason: str
    feature: int | None = None
    cell: tuple[int, int] | None = None

    def __str__(self):
        where = f"family {self.family}"
        if self.cell is not None:
            where += f", cell {self.cell}"
        elif self.feature is not None:
            where += f", feature {self.feature}"
        return f"{where}: {self.reason}"


def validate(dataset: Dataset) -> list[Violation]:
    """Return every invariant violation found in ``dataset``; empty if valid."""
    out = []
    n = dataset.n_objects
    for m, (fam, x, mask) in enumerate(
            zip(dataset.families, dataset.matrices, dataset.masks)):
        if x.shape[0] != n:
            out.append(Violation(m, f"row count {x.shape[0]} != {n}"))
            continue
        if mask.shape != x.shape[:2]:
            out.append(Violation(m, f"mask shape {mask.shape} != {x.shape[:2]}"))
            continue
        if len(dataset.feature_names[m]) != x.shape[1]:
            out.append(Violation(m, "feature name count mismatch"))
        if fam.kind is Kind.MULTINOMIAL:
            if x.ndim != 3 or x.shape[2] != fam.num_categories:
                out.append(Violation(m, f"multinomial cells must be count vectors "
                                        f"of length {fam.num_categories}"))
                continue
        elif x.ndim != 2:
            out.append(Violation(m, "matrix must be two-dimensional"))
            continue

        for j in np.flatnonzero(~mask.any(axis=0)):
            out.append(Violation(m, "feature fully unobserved", feature=int(j)))

        if fam.kind is Kind.GAUSSIAN:
            bad = mask & ~np.isfinite(x)
            reasons = {0: "non-finite value"}
            codes = np.where(bad, 0, -1)
        elif fam.kind is Kind.POISSON:
            with np.errstate(invalid="ignore"):
                nonint = ~np.isfinite(x) | (np.floor(x) != x)
                codes = np.where(nonint, 1, np.where(x < 0, 0, -1))
            codes = np.where(mask, codes, -1)
            reasons = {0: "negative count", 1: "non-integer count"}
        elif fam.kind is Kind.CATEGORICAL:
            with np.errstate(invalid="ignore"):
                ok = np.isfinite(x) & (np.floor(x) == x) & (x >= 0) & (x < fam.num_categories)
            codes = np.where(mask & ~ok, 0, -1)
            reasons = {0: f"category outside 0..{fam.num_categories - 1}"}
        else:
            with np.errstate(invalid="ignore"):
                ok = (np.isfinite(x) & (np.floor(x) == x) & (x >= 0)).all(axis=2)
            codes = np.where(mask & ~ok, 0, -1)
            reasons = {0: "counts must be nonnegative integers"}
        for i, j in zip(*np.nonzero(codes >= 0)):
            out.append(Violation(m, reasons[int(codes[i, j])], feature=int(j),
                                 cell=(int(i), int(j))))
    return out


def standardize_gaussian(dataset: Dataset) -> Dataset:
    """Center and scale each Gaussian column using its observed entries only.

    Uses the population standard deviation (divide by the number of observed
    cells). Constant columns become all zeros. Masked cells are left as they
    were; other families pass through untouched.
    """
    matrices = []
    for fam, x, mask in zip(dataset.families, dataset.matrices, dataset.masks):
        if fam.kind is not Kind.GAUSSIAN:
            matrices.append(x)
            continue
        x = x.copy()
        for j in range(x.shape[1]):
            obs = mask[:, j]
            if not obs.any():
                continue
            col = x[obs, j]
            if np.ptp(col) == 0:
                x[obs, j] = 0.0
                continue
            # rescale before squaring so tiny or huge columns do not under/overflow
            z = col - col.mean()
            z = z / np.abs(z).max()
            x[obs, j] = z / z.std()
        matrices.append(x)
    return dataset.with_matrices(matrices)
