"""Ground-truth generators, partition similarity and experiment runners."""

import logging
from collections.abc import Collection, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from karma.ar_fit import LossKind, ar_residuals, fit_ar
from karma.constants import (
    CALIBRATION_PHI,
    DEFAULT_LAGS,
    DEFAULT_MAX_ITERS,
    VANISHING_REPLICATIONS,
)
from karma.diagnostics import (
    cluster_group_test,
    cluster_report,
    q_group,
    residual_stats,
)
from karma.exceptions import InvalidArgumentError, InvalidModelError, KarmaError
from karma.kmodels import (
    InitKind,
    InitMethod,
    KModelsConfig,
    ModelFamily,
    VanishPolicy,
    best_of,
    partition_of,
    run,
)
from karma.series import Dataset, is_stationary, simulate_arma

logger = logging.getLogger(__name__)

Partition = Sequence[Collection[str]]


@dataclass(frozen=True)
class ClusterSpec:
    """One generating process and how many series to draw from it."""

    phi: tuple[float, ...]
    theta: tuple[float, ...] = ()
    count: int = 25
    T: int = 100

    def __post_init__(self) -> None:
        object.__setattr__(self, "phi", tuple(float(c) for c in self.phi))
        object.__setattr__(self, "theta", tuple(float(c) for c in self.theta))
        if self.count < 1:
            raise InvalidArgumentError(f"count must be positive, got {self.count}")
        if self.T < 1:
            raise InvalidArgumentError(f"T must be positive, got {self.T}")
        if not is_stationary(self.phi):
            raise InvalidModelError(f"AR coefficients {self.phi} are not stationary")

    def to_dict(self) -> dict[str, Any]:
        return {
            "phi": list(self.phi),
            "theta": list(self.theta),
            "count": self.count,
            "T": self.T,
        }


@dataclass(frozen=True)
class GroundTruthSpec:
    name: str
    clusters: tuple[ClusterSpec, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if not self.clusters:
            raise InvalidArgumentError(f"Spec '{self.name}' has no clusters")

    @property
    def p(self) -> int:
        return max(len(c.phi) for c in self.clusters)

    @property
    def q(self) -> int:
        return max(len(c.theta) for c in self.clusters)

    @property
    def k(self) -> int:
        return len(self.clusters)

    @property
    def n(self) -> int:
        return sum(c.count for c in self.clusters)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "seed": self.seed,
            "clusters": [c.to_dict() for c in self.clusters],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GroundTruthSpec":
        try:
            clusters = tuple(
                ClusterSpec(
                    phi=tuple(c["phi"]),
                    theta=tuple(c.get("theta", ())),
                    count=int(c["count"]),
                    T=int(c["T"]),
                )
                for c in data["clusters"]
            )
            return cls(str(data["name"]), clusters, int(data.get("seed", 0)))
        except (KeyError, TypeError) as exc:
            raise InvalidArgumentError(f"Malformed ground-truth spec: {exc}") from exc


def _ar2(pairs: Iterable[tuple[float, float]], T: int) -> tuple[ClusterSpec, ...]:
    return tuple(ClusterSpec((a, b), (), 25, T) for a, b in pairs)


def _arma11(pairs: Iterable[tuple[float, float]], T: int) -> tuple[ClusterSpec, ...]:
    return tuple(ClusterSpec((phi,), (theta,), 25, T) for phi, theta in pairs)


_TEN_AR2_PHI1 = (
    -0.097, -0.215, 0.419, -0.237, 0.273, 0.403, 0.281, 0.144, 0.105, 0.861
)  # fmt: skip
_TEN_AR2_PHI2 = (
    -0.945, -0.463, 0.206, 0.135, 0.640, -0.497, 0.500, 0.824, -0.550, -0.520
)  # fmt: skip

_RECOVERY_PAIRS = ((-0.4, -0.2), (0.4, 0.4))

# The four-cluster AR(2) length is not stated alongside its parameters;
# it follows the two-cluster design.
_BUILTIN: tuple[GroundTruthSpec, ...] = (
    GroundTruthSpec("2-AR(2)", _ar2([(0.7, 0.25), (-0.3, 0.2)], 100)),
    GroundTruthSpec(
        "4-AR(2)",
        _ar2([(0.7, 0.2), (-0.3, 0.2), (0.4, -0.2), (-0.2, -0.5)], 100),
    ),
    GroundTruthSpec(
        "10-AR(2)", _ar2(zip(_TEN_AR2_PHI1, _TEN_AR2_PHI2, strict=True), 1000)
    ),
    GroundTruthSpec("2-ARMA(1,1)", _arma11([(-0.4, 0.2), (-0.2, 0.4)], 1000)),
    GroundTruthSpec(
        "4-ARMA(1,1)",
        _arma11([(-0.4, 0.2), (-0.2, 0.4), (0.2, 0.4), (-0.2, -0.4)], 1000),
    ),
    GroundTruthSpec("recovery-ARMA(1,1)", _arma11(_RECOVERY_PAIRS, 200)),
    GroundTruthSpec(
        "outlier-ARMA(1,1)",
        _arma11(_RECOVERY_PAIRS, 200) + (ClusterSpec((0.2,), (-0.2,), 1, 200),),
    ),
)


def builtin_specs() -> tuple[GroundTruthSpec, ...]:
    """Return every named ground-truth design."""
    return _BUILTIN


def lookup(name: str) -> GroundTruthSpec:
    """Return the builtin spec called ``name``.

    Raises:
        InvalidArgumentError: If no builtin spec has that name.
    """
    for spec in _BUILTIN:
        if spec.name == name:
            return spec
    known = ", ".join(s.name for s in _BUILTIN)
    raise InvalidArgumentError(f"Unknown spec '{name}' (known: {known})")


def generate(
    spec: GroundTruthSpec, seed: int | None = None
) -> tuple[Dataset, dict[str, int]]:
    """Simulate a spec's series and return them with their generating labels.

    Every series draws its innovations from its own seed, derived from the
    spec seed (or ``seed``), so the output depends only on the seed.
    Series are named ``c<cluster>-<index>``.
    """
    base = spec.seed if seed is None else seed
    seeds = np.random.SeedSequence(base).generate_state(spec.n)
    series = []
    labels: dict[str, int] = {}
    pos = 0
    for ci, cluster in enumerate(spec.clusters):
        for j in range(cluster.count):
            sid = f"c{ci}-{j}"
            series.append(
                simulate_arma(
                    cluster.phi,
                    cluster.theta,
                    cluster.T,
                    int(seeds[pos]),
                    series_id=sid,
                )
            )
            labels[sid] = ci
            pos += 1
    return Dataset(tuple(series)), labels


def family_for(spec: GroundTruthSpec, loss: LossKind = LossKind.L2) -> ModelFamily:
    """The model family matching a spec's orders.

    Specs with an MA part map to ``ARMA_CSS``; pure AR specs use ``loss``.
    """
    if spec.q > 0:
        return ModelFamily.arma_css(spec.p, spec.q)
    if loss is LossKind.L1:
        return ModelFamily.ar_l1(spec.p)
    return ModelFamily.ar_l2(spec.p)


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    direction: tuple[str, str] = ("reference", "candidate")


def similarity(
    reference: Partition,
    candidate: Partition,
    direction: tuple[str, str] = ("reference", "candidate"),
) -> SimilarityScore:
    """Mean over reference cells of the best Dice overlap with a candidate cell.

    ``Sim(A, B) = (1/k) sum_i max_j 2|A_i & B_j| / (|A_i| + |B_j|)``. The
    measure is not symmetric; empty candidate cells are ignored.

    Raises:
        InvalidArgumentError: If the partitions cover different ids or the
            reference has an empty cell.
    """
    ref = [set(cell) for cell in reference]
    cand = [set(cell) for cell in candidate if cell]
    if not ref or any(not cell for cell in ref):
        raise InvalidArgumentError("Reference partition needs non-empty cells")
    ref_ids = set().union(*ref)
    cand_ids = set().union(*cand) if cand else set()
    if ref_ids != cand_ids:
        raise InvalidArgumentError(
            f"Partitions cover different ids: {len(ref_ids ^ cand_ids)} differ"
        )

    total = 0.0
    for a in ref:
        total += max(2.0 * len(a & b) / (len(a) + len(b)) for b in cand)
    return SimilarityScore(total / len(ref), direction)


def labels_partition(labels: Mapping[str, int]) -> list[set[str]]:
    return partition_of(labels.items())


def vanishing_study(
    spec: GroundTruthSpec,
    k_values: Sequence[int],
    init: InitKind = InitKind.PROTOTYPE,
    loss: LossKind = LossKind.L1,
    replications: int = VANISHING_REPLICATIONS,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> pd.DataFrame:
    """Average number of clusters left after single K-Models runs.

    Replication ``rep`` regenerates the spec with seed ``spec.seed + rep``
    and initializes with seed ``rep``; clusters that receive no series are
    dropped. Failed runs are counted, not averaged.

    Returns:
        One row per ``k`` with columns ``k``, ``mean_clusters``, ``runs`` and
        ``failures``.
    """
    if replications < 1:
        raise InvalidArgumentError(
            f"replications must be positive, got {replications}"
        )
    if any(k < 1 or k > spec.n for k in k_values):
        raise InvalidArgumentError(f"Every k must lie in 1..{spec.n}, got {k_values}")

    family = family_for(spec, loss)
    counts: dict[int, list[int]] = {k: [] for k in k_values}
    failures: dict[int, int] = dict.fromkeys(k_values, 0)
    for rep in range(replications):
        dataset, _ = generate(spec, spec.seed + rep)
        for k in k_values:
            config = KModelsConfig(
                k=k,
                family=family,
                init=InitMethod(init, rep),
                restarts=1,
                vanish_policy=VanishPolicy.DROP,
                max_iters=max_iters,
            )
            try:
                counts[k].append(run(dataset, config).n_live)
            except KarmaError as exc:
                logger.warning("Replication %d with k=%d failed: %s", rep, k, exc)
                failures[k] += 1
        logger.debug("Vanishing study replication %d done", rep)

    rows = [
        {
            "k": k,
            "mean_clusters": float(np.mean(counts[k])) if counts[k] else float("nan"),
            "runs": len(counts[k]),
            "failures": failures[k],
        }
        for k in k_values
    ]
    return pd.DataFrame(rows, columns=["k", "mean_clusters", "runs", "failures"])


@dataclass(frozen=True)
class CalibrationResult:
    """Monte-Carlo draws of the grouped statistics under a correct model."""

    n: int
    T: int
    m: int
    df: int
    q_r: np.ndarray = field(repr=False)
    q_pacf: np.ndarray = field(repr=False)
    p_r: np.ndarray = field(repr=False)
    p_pacf: np.ndarray = field(repr=False)

    def summary(self, alpha: float = 0.05) -> pd.DataFrame:
        """Mean, variance, quantiles and rejection rate of both statistics."""
        rows = []
        for name, values, p_values in (
            ("q_group_r", self.q_r, self.p_r),
            ("q_group_pacf", self.q_pacf, self.p_pacf),
        ):
            q05, q50, q95 = np.quantile(values, [0.05, 0.5, 0.95])
            variance = float(np.var(values, ddof=1)) if values.size > 1 else 0.0
            rows.append(
                {
                    "statistic": name,
                    "df": self.df,
                    "mean": float(np.mean(values)),
                    "variance": variance,
                    "q05": float(q05),
                    "median": float(q50),
                    "q95": float(q95),
                    "rejection_rate": float(np.mean(p_values < alpha)),
                }
            )
        return pd.DataFrame(rows)

    def to_frame(self) -> pd.DataFrame:
        """One row per replication with both statistics."""
        return pd.DataFrame(
            {
                "replication": np.arange(self.q_r.size),
                "Q_r": self.q_r,
                "Q_pacf": self.q_pacf,
            }
        )


def calibration_study(
    n: int = 10,
    T: int = 200,
    m: int = 15,
    replications: int = 2000,
    phi: float = CALIBRATION_PHI,
    seed: int = 0,
) -> CalibrationResult:
    """Sample the grouped statistics of correctly specified AR(1) clusters.

    Each replication simulates ``n`` AR(1) series, fits one shared AR(1) by
    conditional least squares and evaluates both grouped statistics with
    ``n * m - 1`` degrees of freedom.
    """
    if replications < 1:
        raise InvalidArgumentError(
            f"replications must be positive, got {replications}"
        )
    spec = GroundTruthSpec("calibration", (ClusterSpec((phi,), (), n, T),), seed)
    q_r = np.empty(replications)
    q_pacf = np.empty(replications)
    p_r = np.empty(replications)
    p_pacf = np.empty(replications)
    df = n * m - 1
    for rep in range(replications):
        dataset, _ = generate(spec, seed + rep)
        model = fit_ar(dataset, 1, LossKind.L2)
        stats = [residual_stats(s.id, ar_residuals(s, model), m) for s in dataset]
        group_r = q_group(stats, 1, 0, use_pacf=False)
        group_pacf = q_group(stats, 1, 0, use_pacf=True)
        q_r[rep], p_r[rep] = group_r.statistic, group_r.p_value
        q_pacf[rep], p_pacf[rep] = group_pacf.statistic, group_pacf.p_value
    logger.info(
        "Calibration (n=%d, T=%d, m=%d): mean Q_group %.3f against df %d",
        n,
        T,
        m,
        float(q_r.mean()),
        df,
    )
    return CalibrationResult(n, T, m, df, q_r, q_pacf, p_r, p_pacf)


def recovery_study(
    spec: GroundTruthSpec,
    dataset_seeds: Sequence[int],
    k: int | None = None,
    init: InitKind = InitKind.PROTOTYPE,
    loss: LossKind = LossKind.L2,
    restarts: int = 10,
) -> pd.DataFrame:
    """Similarity of best-of-restarts clusterings to the generating partition.

    Returns:
        One row per dataset seed with columns ``dataset_seed``,
        ``similarity``, ``final_loss`` and ``n_live``.
    """
    family = family_for(spec, loss)
    config = KModelsConfig(
        k=k or spec.k, family=family, init=InitMethod(init, 0), restarts=restarts
    )
    rows = []
    for dataset_seed in dataset_seeds:
        dataset, labels = generate(spec, dataset_seed)
        clustering = best_of(dataset, config)
        score = similarity(
            labels_partition(labels), clustering.partition(), ("truth", "k-models")
        )
        rows.append(
            {
                "dataset_seed": dataset_seed,
                "similarity": score.value,
                "final_loss": clustering.final_loss,
                "n_live": clustering.n_live,
            }
        )
        logger.info("Dataset seed %d: Sim = %.4f", dataset_seed, score.value)
    return pd.DataFrame(
        rows, columns=["dataset_seed", "similarity", "final_loss", "n_live"]
    )


@dataclass(frozen=True)
class OutlierOutcome:
    """How the planted series of the outlier design shows up in diagnostics.

    Attributes:
        seed: Dataset seed.
        planted_id: Id of the series drawn from the outlying process.
        planted_cluster: Cluster the planted series was assigned to.
        planted_is_worst: Whether the planted series has the largest
            individual Ljung-Box statistic of its cluster.
        contaminated_p: Grouped p-value of the planted series' cluster.
        clean_p: Smallest grouped p-value among the other clusters, or None
            when no other cluster is left.
        refit_p: Grouped p-value of the contaminated cluster after removing
            the planted series and refitting, or None when the planted series
            was alone.
    """

    seed: int
    planted_id: str
    planted_cluster: int
    planted_is_worst: bool
    contaminated_p: float
    clean_p: float | None
    refit_p: float | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "planted_id": self.planted_id,
            "planted_cluster": self.planted_cluster,
            "planted_is_worst": self.planted_is_worst,
            "contaminated_p": self.contaminated_p,
            "clean_p": self.clean_p,
            "refit_p": self.refit_p,
        }


def outlier_study(
    seed: int = 0, m: int = DEFAULT_LAGS, restarts: int = 10
) -> OutlierOutcome:
    """Cluster the outlier design and locate the planted series.

    The design holds two 25-series ARMA(1,1) clusters and one series from a
    third process. The data are clustered into two groups with the
    conditional sum of squares family, diagnosed at ``m`` lags, and the
    contaminated cluster is refitted without the planted series.
    """
    spec = lookup("outlier-ARMA(1,1)")
    dataset, _ = generate(spec, seed)
    planted = f"c{spec.k - 1}-0"
    family = family_for(spec)
    clustering = best_of(
        dataset,
        KModelsConfig(
            k=2, family=family, init=InitMethod(seed=seed), restarts=restarts
        ),
    )
    report = cluster_report(clustering, dataset, m)

    home = clustering.assignments[planted]
    contaminated = report.cluster(home)
    others = [c.q_group_r.p_value for c in report.clusters if c.index != home]

    rest = [sid for sid in clustering.clusters()[home] if sid != planted]
    refit_p: float | None = None
    if rest:
        remaining = dataset.subset(rest)
        refit_p = cluster_group_test(remaining, family.fit(remaining), m).p_value

    outcome = OutlierOutcome(
        seed=seed,
        planted_id=planted,
        planted_cluster=home,
        planted_is_worst=contaminated.worst_series == planted,
        contaminated_p=contaminated.q_group_r.p_value,
        clean_p=min(others) if others else None,
        refit_p=refit_p,
    )
    logger.info(
        "Outlier study seed %d: planted worst=%s, p=%.3g, refit p=%s",
        seed,
        outcome.planted_is_worst,
        outcome.contaminated_p,
        outcome.refit_p,
    )
    return outcome
