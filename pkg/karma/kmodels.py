"""K-Models clustering: alternate loss-minimizing assignment and model refits."""

import logging
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import StrEnum
from typing import Any, TypeVar

import numpy as np

from karma.ar_fit import ArModel, LossKind, ar_loss, fit_ar
from karma.arma_fit import ArmaFitConfig, ArmaModel, arma_loss, fit_arma
from karma.constants import (
    DEFAULT_MAX_ITERS,
    DEFAULT_RESTARTS,
    KMODELS_LOSS_REL_TOL,
    MAX_PARTITION_DRAWS,
)
from karma.exceptions import (
    AssignmentError,
    ClusteringFailureError,
    InvalidArgumentError,
    KarmaError,
    TooShortSeriesError,
)
from karma.series import Dataset, TimeSeries, difference, make_rng

logger = logging.getLogger(__name__)

Model = ArModel | ArmaModel
R = TypeVar("R")

_NO_MODEL: dict[str, Any] = {"phi": None, "theta": None, "sigma2": None}


class FamilyKind(StrEnum):
    AR_L2 = "ar-l2"
    AR_L1 = "ar-l1"
    ARMA_CSS = "arma-css"


@dataclass(frozen=True)
class ModelFamily:
    """A model class together with the loss used to fit and to assign.

    Fitting and assignment go through :meth:`fit` and :meth:`loss`, which
    always evaluate the same criterion for a given kind. With
    ``arma_config.weight_by_length`` the loss of a series is its conditional
    sum of squares divided by its length, the quantity the fitter minimizes.

    Attributes:
        kind: AR with squared loss, AR with absolute loss, or ARMA with the
            conditional sum of squares.
        p: AR order.
        q: MA order; must be 0 for the AR kinds.
        d: Differencing passes applied to every series before clustering.
        arma_config: Fitter settings for ``ARMA_CSS``.
    """

    kind: FamilyKind
    p: int
    q: int = 0
    d: int = 0
    arma_config: ArmaFitConfig = field(default_factory=ArmaFitConfig)

    def __post_init__(self) -> None:
        if min(self.p, self.q, self.d) < 0:
            raise InvalidArgumentError(
                f"Orders must be non-negative, got p={self.p} q={self.q} d={self.d}"
            )
        if self.kind is FamilyKind.ARMA_CSS:
            if self.p + self.q < 1:
                raise InvalidArgumentError("An ARMA family needs p + q >= 1")
        else:
            if self.q != 0:
                raise InvalidArgumentError(f"{self.kind} families have no MA part")
            if self.p < 1:
                raise InvalidArgumentError(f"{self.kind} families need p >= 1")

    @classmethod
    def ar_l2(cls, p: int, d: int = 0) -> "ModelFamily":
        return cls(FamilyKind.AR_L2, p, 0, d)

    @classmethod
    def ar_l1(cls, p: int, d: int = 0) -> "ModelFamily":
        return cls(FamilyKind.AR_L1, p, 0, d)

    @classmethod
    def arma_css(
        cls, p: int, q: int, d: int = 0, config: ArmaFitConfig | None = None
    ) -> "ModelFamily":
        return cls(FamilyKind.ARMA_CSS, p, q, d, config or ArmaFitConfig())

    @property
    def min_length(self) -> int:
        """Shortest series (after differencing) the family can fit."""
        if self.kind is FamilyKind.ARMA_CSS:
            return 2 * max(self.p, self.q) + 1
        return self.p + 1

    @property
    def label(self) -> str:
        if self.kind is FamilyKind.ARMA_CSS:
            return f"ARMA_CSS({self.p},{self.q})"
        return f"{self.kind.name}({self.p})"

    def fit(self, cluster: Dataset) -> Model:
        if self.kind is FamilyKind.AR_L2:
            return fit_ar(cluster, self.p, LossKind.L2)
        if self.kind is FamilyKind.AR_L1:
            return fit_ar(cluster, self.p, LossKind.L1)
        return fit_arma(cluster, self.p, self.q, self.arma_config)

    def loss(self, series: TimeSeries, model: Model) -> float:
        if isinstance(model, ArmaModel):
            css = arma_loss(series, model)
            return css / series.T if self.arma_config.weight_by_length else css
        if self.kind is FamilyKind.AR_L1:
            return ar_loss(series, model, LossKind.L1)
        return ar_loss(series, model, LossKind.L2)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": str(self.kind), "p": self.p, "q": self.q, "d": self.d}


class InitKind(StrEnum):
    PROTOTYPE = "prototype"
    RANDOM_PARTITION = "partition"


@dataclass(frozen=True)
class InitMethod:
    kind: InitKind = InitKind.PROTOTYPE
    seed: int = 0


class VanishPolicy(StrEnum):
    DROP = "drop"
    REASSIGN_FARTHEST = "reassign"


@dataclass(frozen=True)
class KModelsConfig:
    """Settings of one clustering run or a best-of batch.

    Attributes:
        k: Number of clusters to start with.
        family: Model class and loss.
        init: Initialization scheme and base seed.
        max_iters: Cap on assign/update passes.
        restarts: Runs tried by :func:`best_of`, seeded ``seed, seed+1, ...``.
        vanish_policy: What to do with a cluster that receives no series.
        n_jobs: Threads used to refit clusters during the update step.
    """

    k: int
    family: ModelFamily
    init: InitMethod = field(default_factory=InitMethod)
    max_iters: int = DEFAULT_MAX_ITERS
    restarts: int = DEFAULT_RESTARTS
    vanish_policy: VanishPolicy = VanishPolicy.DROP
    n_jobs: int = 1

    def __post_init__(self) -> None:
        for name in ("k", "max_iters", "restarts", "n_jobs"):
            value = getattr(self, name)
            if value < 1:
                raise InvalidArgumentError(f"{name} must be positive, got {value}")

    def with_seed(self, seed: int) -> "KModelsConfig":
        return replace(self, init=replace(self.init, seed=seed))


@dataclass(frozen=True)
class Clustering:
    """Outcome of a K-Models run.

    ``models[i]`` is None exactly when ``i`` is in ``vanished``. Assignments
    follow dataset order.
    """

    assignments: dict[str, int]
    models: tuple[Model | None, ...]
    loss_trace: tuple[float, ...]
    n_iterations: int
    vanished: frozenset[int]
    converged: bool
    family: ModelFamily
    seed: int

    @property
    def k(self) -> int:
        return len(self.models)

    @property
    def live_clusters(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.k) if i not in self.vanished)

    @property
    def n_live(self) -> int:
        return len(self.live_clusters)

    @property
    def n_nonempty(self) -> int:
        return len(set(self.assignments.values()))

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1]

    def clusters(self) -> dict[int, tuple[str, ...]]:
        """Member ids of every live cluster, in dataset order."""
        members: dict[int, list[str]] = {i: [] for i in self.live_clusters}
        for sid, label in self.assignments.items():
            members[label].append(sid)
        return {i: tuple(ids) for i, ids in members.items()}

    def partition(self) -> list[set[str]]:
        """Non-empty clusters as sets of ids."""
        return [set(ids) for ids in self.clusters().values() if ids]

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family.to_dict(),
            "seed": self.seed,
            "assignments": dict(self.assignments),
            "clusters": [
                {
                    "index": i,
                    "size": sum(1 for a in self.assignments.values() if a == i),
                    **(m.to_dict() if m is not None else _NO_MODEL),
                }
                for i, m in enumerate(self.models)
            ],
            "loss_trace": list(self.loss_trace),
            "n_iterations": self.n_iterations,
            "vanished": sorted(self.vanished),
            "converged": self.converged,
        }


def _map(fn: Callable[[Any], R], items: Sequence[Any], n_jobs: int) -> list[R]:
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def prepare(dataset: Dataset, family: ModelFamily) -> Dataset:
    """Difference every series ``family.d`` times, keeping the ids."""
    if family.d == 0:
        return dataset
    return dataset.map(lambda s: TimeSeries(s.id, difference(s, family.d).values))


def _check_lengths(dataset: Dataset, family: ModelFamily) -> None:
    for series in dataset:
        if series.T < family.min_length:
            raise TooShortSeriesError(series.id, series.T, family.min_length)


def _safe_loss(family: ModelFamily, series: TimeSeries, model: Model) -> float:
    try:
        return family.loss(series, model)
    except KarmaError as exc:
        logger.debug("Loss of series '%s' is undefined: %s", series.id, exc)
        return float("inf")


def loss_matrix(
    dataset: Dataset, models: Sequence[Model | None], family: ModelFamily
) -> np.ndarray:
    """Per-series losses under every model; vanished models and failures are inf."""
    out = np.full((dataset.n, len(models)), np.inf)
    for j, series in enumerate(dataset):
        for i, model in enumerate(models):
            if model is not None:
                out[j, i] = _safe_loss(family, series, model)
    return out


def _assign_from(dataset: Dataset, losses: np.ndarray) -> dict[str, int]:
    assignments: dict[str, int] = {}
    for j, series in enumerate(dataset):
        row = losses[j]
        if not np.isfinite(row).any():
            raise AssignmentError(
                series.id, f"No live model can evaluate series '{series.id}'"
            )
        # argmin returns the first minimum: ties go to the lowest index
        assignments[series.id] = int(np.argmin(row))
    return assignments


def assign(
    dataset: Dataset, models: Sequence[Model | None], family: ModelFamily
) -> dict[str, int]:
    """Map every series to the live model with the smallest loss.

    Raises:
        InvalidArgumentError: If no model is live.
        AssignmentError: If every live model fails on some series.
    """
    if all(m is None for m in models):
        raise InvalidArgumentError("Assignment needs at least one live model")
    return _assign_from(dataset, loss_matrix(dataset, models, family))


def global_loss(
    dataset: Dataset,
    assignments: dict[str, int],
    models: Sequence[Model | None],
    family: ModelFamily,
) -> float:
    """Total loss of every series under the model of its cluster."""
    total = 0.0
    for series in dataset:
        model = models[assignments[series.id]]
        if model is None:
            raise InvalidArgumentError(
                f"Series '{series.id}' is assigned to a vanished cluster"
            )
        total += family.loss(series, model)
    return total


def _members(assignments: dict[str, int], k: int) -> list[list[str]]:
    members: list[list[str]] = [[] for _ in range(k)]
    for sid, label in assignments.items():
        members[label].append(sid)
    return members


def _try_fit(family: ModelFamily, cluster: Dataset) -> Model | None:
    try:
        return family.fit(cluster)
    except KarmaError as exc:
        logger.warning("Fit of a %d-series cluster failed: %s", cluster.n, exc)
        return None


def _random_partition(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    for _ in range(MAX_PARTITION_DRAWS):
        labels = rng.integers(0, k, size=n)
        if np.unique(labels).size == k:
            return labels
    logger.warning(
        "No random partition without empty clusters in %d draws, "
        "using a balanced shuffled partition",
        MAX_PARTITION_DRAWS,
    )
    return rng.permutation(np.arange(n) % k)


def initialize(dataset: Dataset, config: KModelsConfig) -> Clustering:
    """Draw the initial models and assignments of a run.

    Prototype initialization fits each of ``k`` distinct randomly drawn
    series on its own and assigns every series to its best prototype. Random
    partition initialization draws labels uniformly, redrawing while any
    cluster is empty, and fits one model per cell. The returned trace holds
    the initial global loss.

    ``dataset`` must already be differenced; see :func:`prepare`.

    Raises:
        InvalidArgumentError: If ``k`` exceeds the number of series.
        TooShortSeriesError: If a series is too short for the family.
        ClusteringFailureError: If no initial model could be fitted.
    """
    k, family = config.k, config.family
    if k > dataset.n:
        raise InvalidArgumentError(f"k={k} exceeds the {dataset.n} series available")
    _check_lengths(dataset, family)

    rng = make_rng(config.init.seed)
    if config.init.kind is InitKind.PROTOTYPE:
        picks = rng.choice(dataset.n, size=k, replace=False)
        prototypes = [Dataset((dataset[int(j)],)) for j in picks]
        models = _map(lambda c: _try_fit(family, c), prototypes, config.n_jobs)
        if all(m is None for m in models):
            raise ClusteringFailureError("No prototype model could be fitted")
        losses = loss_matrix(dataset, models, family)
        assignments = _assign_from(dataset, losses)
        initial = float(
            sum(losses[j, assignments[s.id]] for j, s in enumerate(dataset))
        )
    else:
        labels = _random_partition(rng, dataset.n, k)
        assignments = {
            s.id: int(label) for s, label in zip(dataset, labels, strict=True)
        }
        cells = [dataset.subset(ids) for ids in _members(assignments, k)]
        models = _map(lambda c: _try_fit(family, c), cells, config.n_jobs)
        if any(m is None for m in models):
            raise ClusteringFailureError("A random-partition cell could not be fitted")
        initial = global_loss(dataset, assignments, models, family)

    vanished = frozenset(i for i, m in enumerate(models) if m is None)
    return Clustering(
        assignments=assignments,
        models=tuple(models),
        loss_trace=(initial,),
        n_iterations=0,
        vanished=vanished,
        converged=False,
        family=family,
        seed=config.init.seed,
    )


def _reassign_farthest(
    assignments: dict[str, int],
    losses: np.ndarray,
    dataset: Dataset,
    empty: int,
) -> bool:
    """Move the worst-fitting series of a multi-member cluster into ``empty``."""
    sizes: dict[int, int] = {}
    for label in assignments.values():
        sizes[label] = sizes.get(label, 0) + 1
    best_j, best_loss = -1, -np.inf
    for j, series in enumerate(dataset):
        label = assignments[series.id]
        if sizes[label] >= 2 and losses[j, label] > best_loss:
            best_j, best_loss = j, losses[j, label]
    if best_j < 0:
        return False
    sid = dataset[best_j].id
    logger.info("Seeding empty cluster %d with series '%s'", empty, sid)
    assignments[sid] = empty
    return True


def run(dataset: Dataset, config: KModelsConfig) -> Clustering:
    """Run K-Models from one initialization until it settles.

    The loop stops when an assignment repeats the one the current models
    were fitted on, when the relative drop of the global loss is at most
    ``KMODELS_LOSS_REL_TOL``, or after ``config.max_iters`` passes. A refit
    replaces a cluster's model only when it does not raise that cluster's
    loss, so the loss trace never increases under the drop policy.

    Args:
        dataset: Series to cluster, before differencing.
        config: Run settings.

    Returns:
        The final clustering.

    Raises:
        InvalidArgumentError: For an invalid ``k`` or too-short series.
        AssignmentError: If some series cannot be evaluated by any model.
        ClusteringFailureError: If every cluster vanishes.
    """
    family = config.family
    data = prepare(dataset, family)
    state = initialize(data, config)
    k = config.k
    models: list[Model | None] = list(state.models)
    vanished = set(state.vanished)
    trace = list(state.loss_trace)
    assignments = state.assignments
    fitted_on = assignments if config.init.kind is InitKind.RANDOM_PARTITION else None
    converged = False

    for n_iter in range(1, config.max_iters + 1):
        losses = loss_matrix(data, models, family)
        new = _assign_from(data, losses)
        if fitted_on is not None and new == fitted_on:
            converged = True
            break

        members = _members(new, k)
        for i in range(k):
            if i in vanished or members[i]:
                continue
            if config.vanish_policy is VanishPolicy.REASSIGN_FARTHEST and (
                _reassign_farthest(new, losses, data, i)
            ):
                members = _members(new, k)
                continue
            logger.info("Cluster %d vanished at iteration %d", i, n_iter)
            models[i] = None
            vanished.add(i)

        live = [i for i in range(k) if i not in vanished]
        if not live:
            raise ClusteringFailureError("Every cluster vanished")

        index = {s.id: j for j, s in enumerate(data)}
        cells = [data.subset(members[i]) for i in live]
        refits = _map(lambda c: _try_fit(family, c), cells, config.n_jobs)

        total = 0.0
        for i, cell, refit in zip(live, cells, refits, strict=True):
            previous = sum(float(losses[index[s.id], i]) for s in cell)
            if refit is not None:
                candidate = sum(_safe_loss(family, s, refit) for s in cell)
                if candidate <= previous or not np.isfinite(previous):
                    models[i] = refit
                    previous = candidate
                else:
                    logger.debug(
                        "Refit of cluster %d raised its loss, keeping the model", i
                    )
            else:
                logger.warning("Keeping the previous model of cluster %d", i)
            total += previous

        if not np.isfinite(total):
            raise ClusteringFailureError(
                f"Global loss is not finite at iteration {n_iter}"
            )

        assignments = fitted_on = new
        last = trace[-1]
        trace.append(total)
        logger.debug(
            "Iteration %d: loss %.6g, %d live clusters", n_iter, total, len(live)
        )
        if last == 0.0 or (last - total) <= KMODELS_LOSS_REL_TOL * abs(last):
            converged = True
            break

    logger.info(
        "K-Models run (seed=%d) finished after %d iterations with loss %.6g "
        "and %d live clusters",
        config.init.seed,
        len(trace) - 1,
        trace[-1],
        k - len(vanished),
    )
    return Clustering(
        assignments=dict(assignments),
        models=tuple(models),
        loss_trace=tuple(trace),
        n_iterations=len(trace) - 1,
        vanished=frozenset(vanished),
        converged=converged,
        family=family,
        seed=config.init.seed,
    )


def best_of(dataset: Dataset, config: KModelsConfig) -> Clustering:
    """Run ``config.restarts`` seeds and keep the smallest final loss.

    Restarts use seeds ``seed, seed+1, ...``; ties keep the earliest seed.
    A restart that fails is logged and skipped.

    Raises:
        KarmaError: The last restart's error when every restart fails.
    """
    best: Clustering | None = None
    last_error: KarmaError | None = None
    for offset in range(config.restarts):
        seed = config.init.seed + offset
        try:
            result = run(dataset, config.with_seed(seed))
        except InvalidArgumentError:
            raise
        except KarmaError as exc:
            logger.warning("Restart with seed %d failed: %s", seed, exc)
            last_error = exc
            continue
        if best is None or result.final_loss < best.final_loss:
            best = result

    if best is None:
        assert last_error is not None
        raise last_error
    logger.info(
        "Best of %d restarts: seed %d with loss %.6g",
        config.restarts,
        best.seed,
        best.final_loss,
    )
    return best


def fit_singletons(
    dataset: Dataset, family: ModelFamily, n_jobs: int = 1
) -> dict[str, Model | None]:
    """Fit the family to every series on its own; failures map to None."""
    data = prepare(dataset, family)
    cells = [Dataset((s,)) for s in data]
    fits = _map(lambda c: _try_fit(family, c), cells, n_jobs)
    return {s.id: m for s, m in zip(data, fits, strict=True)}


def partition_of(labels: Iterable[tuple[str, int]]) -> list[set[str]]:
    """Group ``(id, label)`` pairs into a list of id sets ordered by label."""
    groups: dict[int, set[str]] = {}
    for sid, label in labels:
        groups.setdefault(label, set()).add(sid)
    return [groups[label] for label in sorted(groups)]
