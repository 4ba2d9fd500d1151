"""Command-line entry point: ``fit``, ``simulate`` and ``evaluate``.

Exit codes: 0 success, 2 input error, 3 inference failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import inference
from .core import GaussianPrior, PoissonPrior, TruncationConfig, standardize_gaussian, validate
from .evaluation import adjusted_rand_index, match_views
from .io import (AssignmentTable, InputError, read_dataset, write_assignments, write_dataset,
                 write_json, write_schema, write_trace)
from .synthgen import generate, paper_scenario

log = logging.getLogger("mcoclust")

EXIT_OK, EXIT_INPUT, EXIT_INFERENCE = 0, 2, 3


@dataclass
class RunConfig:
    views: int = 10
    feature_clusters: int = 10
    object_clusters: int = 10
    alpha1: float = 1.0
    alpha2: float = 1.0
    beta: float = 1.0
    mu0: float = 0.0
    lambda0: float = 1e-4
    gamma0: float = 1.0
    sigma0_sq: float = 1e-4
    poisson_alpha0: float = 1.0
    poisson_beta0: float = 1.0
    dirichlet_mass: float = 1.0
    restarts: int = inference.DEFAULT_RESTARTS
    tol: float = inference.DEFAULT_TOL
    max_iters: int = inference.DEFAULT_MAX_ITERS
    seed: int = 0
    threads: int = 1
    standardize: bool = False

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"{path}: cannot read config: {exc}") from exc
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise InputError(f"{path}: unknown config keys {sorted(extra)}")
        return cls(**raw)

    def check(self):
        if min(self.views, self.feature_clusters, self.object_clusters) < 1:
            raise InputError("truncation levels must be >= 1")
        if self.restarts < 1 or self.max_iters < 1 or self.threads < 1:
            raise InputError("restarts, max-iters and threads must be >= 1")
        if not self.tol > 0:
            raise InputError("tol must be positive")

    def truncation(self) -> TruncationConfig:
        try:
            return TruncationConfig(
                V=self.views, G=self.feature_clusters, K=self.object_clusters,
                alpha1=self.alpha1, alpha2=self.alpha2, beta=self.beta,
                gaussian_prior=GaussianPrior(self.mu0, self.lambda0, self.gamma0, self.sigma0_sq),
                poisson_prior=PoissonPrior(self.poisson_alpha0, self.poisson_beta0),
                dirichlet_prior_mass=self.dirichlet_mass)
        except ValueError as exc:
            raise InputError(str(exc)) from exc


# flags that override RunConfig fields of the same name
_OVERRIDES = ("views", "feature_clusters", "object_clusters", "restarts", "tol",
              "max_iters", "seed", "threads", "sigma0_sq")


def cmd_fit(args) -> int:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    for name in _OVERRIDES:
        value = getattr(args, name)
        if value is not None:
            setattr(config, name, value)
    if args.standardize:
        config.standardize = True
    config.check()
    truncation = config.truncation()

    dataset = read_dataset(args.data, args.schema)
    problems = validate(dataset)
    if problems:
        for p in problems[:50]:
            log.error("invalid input: %s", p)
        raise InputError(f"{len(problems)} invalid cells/features in {args.data}")
    if config.standardize:
        dataset = standardize_gaussian(dataset)

    result = inference.fit(dataset, truncation, config.restarts, config.seed,
                           config.threads, config.tol, config.max_iters)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    active = result.active_view_indices
    write_assignments(dataset, result.assignments, out / "assignments.csv", views=active)
    write_json({
        "mode": inference.mode(truncation).value,
        "elbo": result.elbo,
        "active_views": result.active_views,
        "object_clusters": {str(v): result.active_object_clusters[v] for v in active},
        "seed": result.seed,
        "iterations": result.iterations,
        "converged": result.converged,
        # thread count is left out: it never changes the result
        "config": {k: v for k, v in asdict(config).items() if k != "threads"},
    }, out / "summary.json")
    write_trace(result.elbo_trace, out / "elbo_trace.csv")
    log.info("best ELBO %.6f from seed %d; %d active views",
             result.elbo, result.seed, result.active_views)
    return EXIT_OK


def replicate_seed(base_seed: int, replicate: int) -> int:
    return base_seed * 10007 + replicate


def cmd_simulate(args) -> int:
    if args.n < 2 or args.d < 1 or args.replicates < 1 or not 0 <= args.missing < 1:
        raise InputError("need n >= 2, d >= 1, replicates >= 1 and 0 <= missing < 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for r in range(args.replicates):
        scenario = paper_scenario(args.n, args.d, args.missing, replicate_seed(args.seed, r))
        dataset, truth = generate(scenario)
        if r == 0:
            write_schema(dataset, out / "schema.json")
        write_dataset(dataset, out / f"data_{r:03d}.csv")
        write_assignments(dataset, truth, out / f"truth_{r:03d}.csv")
        write_json(scenario.to_dict(), out / f"scenario_{r:03d}.json")
    return EXIT_OK


def evaluate_tables(truth: AssignmentTable, result: AssignmentTable) -> dict:
    if set(truth.features) != set(result.features):
        raise InputError("feature names differ between truth and result")
    names = list(truth.features)
    t_views = [truth.features[f][1] for f in names]
    y_views = [result.features[f][1] for f in names]

    def partitions(table, ids):
        parts = {}
        for v in sorted(table.objects):
            rows = table.objects[v]
            if set(rows) != set(ids):
                raise InputError(f"object ids of view {v} differ from the truth")
            parts[v] = [rows[i] for i in ids]
        return parts

    if not truth.objects or not result.objects:
        raise InputError("no object rows to compare")
    ids = list(next(iter(truth.objects.values())))
    true_parts = partitions(truth, ids)
    found_parts = partitions(result, ids)
    best, mean = match_views(list(true_parts.values()), list(found_parts.values()))
    return {
        "object_ari": {str(v): a for v, a in zip(true_parts, best)},
        "object_ari_mean": mean,
        "view_ari": adjusted_rand_index(t_views, y_views),
        "true_views": len(true_parts),
        "yielded_views": len(found_parts),
    }


def cmd_evaluate(args) -> int:
    metrics = evaluate_tables(AssignmentTable.read(args.truth), AssignmentTable.read(args.result))
    write_json(metrics, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcoclust", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the model to a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--config", help="JSON file with run settings; flags override it")
    p.add_argument("--views", type=int)
    p.add_argument("--feature-clusters", type=int)
    p.add_argument("--object-clusters", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--sigma0-sq", type=float, help="Gaussian prior variance scale")
    p.add_argument("--standardize", action="store_true",
                   help="standardize Gaussian columns over observed cells first")
    p.add_argument("--out", default="mcoclust_out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="write synthetic datasets with ground truth")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--d", type=int, default=50, help="features per view per family")
    p.add_argument("--missing", type=float, default=0.0)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="simulated")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="compare a fit against ground truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--result", required=True, help="assignments file or fit output directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except inference.AllRestartsFailedError as exc:
        log.error("%s", exc)
        return EXIT_INFERENCE


if __name__ == "__main__":
    sys.exit(main())
