"""Synthetic multi-view datasets with known views and clusters.

Block parameter tables are stored as ``(G, K)`` arrays: row ``g`` is a
feature cluster and column ``k`` an object cluster. The published design
lists one ``(g=0, g=1)`` pair per object cluster, so ``(0, 5 ; 1, 4 ; 2, 3)``
becomes ``[[0, 1, 2], [5, 4, 3]]``. Categorical tables carry a trailing
category axis of probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Assignments, Dataset, FeatureFamily, Kind

GAUSSIAN = FeatureFamily(Kind.GAUSSIAN)
POISSON = FeatureFamily(Kind.POISSON)
BINARY = FeatureFamily(Kind.CATEGORICAL, 2)

_PREFIX = {Kind.GAUSSIAN: "gauss", Kind.POISSON: "pois",
           Kind.CATEGORICAL: "cat", Kind.MULTINOMIAL: "mult"}


@dataclass
class ViewSpec:
    n_object_clusters: int
    n_feature_clusters: int
    tables: list  # one parameter table per family

    def to_dict(self):
        return {"n_object_clusters": self.n_object_clusters,
                "n_feature_clusters": self.n_feature_clusters,
                "tables": [np.asarray(t).tolist() for t in self.tables]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["n_object_clusters"], d["n_feature_clusters"],
                   [np.asarray(t, float) for t in d["tables"]])


@dataclass
class Scenario:
    n_objects: int
    families: list
    n_features: list  # total features per family, split evenly over views
    views: list
    missing_ratio: float = 0.0
    seed: int = 0
    gaussian_sd: float = 1.0
    multinomial_trials: int = 1

    def __post_init__(self):
        if not 0 <= self.missing_ratio < 1:
            raise ValueError("missing_ratio must lie in [0, 1)")
        for view in self.views:
            for fam, table in zip(self.families, view.tables):
                shape = np.shape(table)[:2]
                if shape != (view.n_feature_clusters, view.n_object_clusters):
                    raise ValueError(f"{fam} table shape {shape} does not match "
                                     f"({view.n_feature_clusters}, {view.n_object_clusters})")

    def to_dict(self):
        return {"n_objects": self.n_objects,
                "families": [str(f) for f in self.families],
                "n_features": list(self.n_features),
                "views": [v.to_dict() for v in self.views],
                "missing_ratio": self.missing_ratio,
                "seed": self.seed,
                "gaussian_sd": self.gaussian_sd,
                "multinomial_trials": self.multinomial_trials}

    @classmethod
    def from_dict(cls, d):
        return cls(n_objects=d["n_objects"],
                   families=[FeatureFamily.parse(f) for f in d["families"]],
                   n_features=list(d["n_features"]),
                   views=[ViewSpec.from_dict(v) for v in d["views"]],
                   missing_ratio=d.get("missing_ratio", 0.0),
                   seed=d.get("seed", 0),
                   gaussian_sd=d.get("gaussian_sd", 1.0),
                   multinomial_trials=d.get("multinomial_trials", 1))


def _pairs(*groups):
    # each group lists the (g=0, g=1) values of one object cluster
    return np.array(groups, float).T


def _binary(success):
    return np.stack([1.0 - success, success], axis=-1)


DESIGN_GAUSSIAN_MEANS = [
    _pairs((0, 4), (1, 3)),
    _pairs((0, 5), (1, 4), (2, 3)),
    _pairs((0, 6), (1, 5), (2, 4), (3, 3)),
]
DESIGN_POISSON_RATES = [
    _pairs((1, 2), (2, 1)),
    _pairs((1, 3), (2, 2), (3, 1)),
    _pairs((1, 4), (2, 3), (3, 2), (4, 1)),
]
DESIGN_SUCCESS_PROBS = [
    _pairs((0.1, 0.9), (0.1, 0.9)),
    _pairs((0.1, 0.9), (0.5, 0.5), (0.9, 0.1)),
    _pairs((0.1, 0.9), (0.4, 0.6), (0.6, 0.4), (0.9, 0.1)),
]


def paper_scenario(n_objects: int, n_features: int, missing_ratio: float = 0.0,
                   seed: int = 0) -> Scenario:
    """Three views with 2, 3 and 4 object clusters and two feature clusters each.

    ``n_features`` is the count per view and per family (Gaussian, Poisson,
    binary categorical), so every family has ``3 * n_features`` columns.
    """
    views = [ViewSpec(K, 2, [DESIGN_GAUSSIAN_MEANS[v], DESIGN_POISSON_RATES[v],
                             _binary(DESIGN_SUCCESS_PROBS[v])])
             for v, K in enumerate((2, 3, 4))]
    return Scenario(n_objects=n_objects, families=[GAUSSIAN, POISSON, BINARY],
                    n_features=[3 * n_features] * 3, views=views,
                    missing_ratio=missing_ratio, seed=seed)


def split_evenly(total: int, parts: int) -> np.ndarray:
    """Part index of each of ``total`` items; earlier parts take the remainder."""
    sizes = np.full(parts, total // parts)
    sizes[: total % parts] += 1
    return np.repeat(np.arange(parts), sizes)


def generate(scenario: Scenario) -> tuple[Dataset, Assignments]:
    rng = np.random.default_rng(scenario.seed)
    n = scenario.n_objects
    n_views = len(scenario.views)

    feature_assignment = []
    for d in scenario.n_features:
        views = split_evenly(d, n_views)
        clusters = np.array([rng.integers(scenario.views[v].n_feature_clusters) for v in views])
        feature_assignment.append(list(zip(views.tolist(), clusters.tolist())))
    object_assignment = [rng.integers(view.n_object_clusters, size=n).tolist()
                         for view in scenario.views]

    matrices, names = [], []
    for m, fam in enumerate(scenario.families):
        d = scenario.n_features[m]
        H = fam.num_categories
        x = np.zeros((n, d, H)) if fam.kind is Kind.MULTINOMIAL else np.zeros((n, d))
        for j, (v, g) in enumerate(feature_assignment[m]):
            k = np.asarray(object_assignment[v])
            params = np.asarray(scenario.views[v].tables[m], float)[g][k]
            if fam.kind is Kind.GAUSSIAN:
                x[:, j] = rng.normal(params, scenario.gaussian_sd)
            elif fam.kind is Kind.POISSON:
                x[:, j] = rng.poisson(params)
            elif fam.kind is Kind.CATEGORICAL:
                u = rng.random(n)[:, None]
                x[:, j] = (u > np.cumsum(params, axis=1)[:, :-1]).sum(axis=1)
            else:
                x[:, j] = np.array([rng.multinomial(scenario.multinomial_trials, p) for p in params])
        matrices.append(x)
        names.append([f"{_PREFIX[fam.kind]}_{j:03d}" for j in range(d)])

    dataset = Dataset(tuple(scenario.families), tuple(matrices), None,
                      tuple(tuple(f) for f in names),
                      tuple(f"obj_{i:03d}" for i in range(n)))
    if scenario.missing_ratio > 0:
        dataset = apply_missing(dataset, scenario.missing_ratio,
                                int(rng.integers(2 ** 31)))
    return dataset, Assignments(feature_assignment, object_assignment)


def apply_missing(dataset: Dataset, ratio: float, seed: int) -> Dataset:
    """Mask ``floor(ratio * total_cells)`` uniformly chosen cells.

    A draw that would leave a feature with no observed cell is skipped and
    the next draw in the random order is used instead. Underlying values are
    kept; only the masks change.
    """
    if not 0 <= ratio < 1:
        raise ValueError("ratio must lie in [0, 1)")
    sizes = [x.shape[0] * x.shape[1] for x in dataset.matrices]
    total = sum(sizes)
    target = int(np.floor(ratio * total))
    if target == 0:
        return dataset
    masks = [m.copy() for m in dataset.masks]
    observed = [m.sum(axis=0) for m in masks]
    capacity = sum(int((o - 1).clip(min=0).sum()) for o in observed)
    if target > capacity:
        raise ValueError(f"cannot mask {target} cells without fully hiding a feature")

    offsets = np.cumsum([0] + sizes)
    rng = np.random.default_rng(seed)
    hidden = 0
    for cell in rng.permutation(total):
        if hidden == target:
            break
        m = int(np.searchsorted(offsets, cell, side="right") - 1)
        i, j = divmod(int(cell - offsets[m]), dataset.matrices[m].shape[1])
        if not masks[m][i, j] or observed[m][j] <= 1:
            continue
        masks[m][i, j] = False
        observed[m][j] -= 1
        hidden += 1
    return dataset.with_masks(masks)
