"""Schema of the JSON documents karma reads and writes."""

from typing import Any, TypedDict


class FamilyInfo(TypedDict):
    """Model family of a clustering run."""

    kind: str
    p: int
    q: int
    d: int


class ClusterInfo(TypedDict):
    """One cluster of a result; coefficients are None once it vanished."""

    index: int
    size: int
    phi: list[float] | None
    theta: list[float] | None
    sigma2: float | None


class SeriesFit(TypedDict):
    """Coefficients of a series fitted on its own, with its cluster."""

    id: str
    cluster: int
    phi: list[float] | None
    theta: list[float] | None


class ResultDocument(TypedDict):
    schema_version: int
    producer: str
    manifest: dict[str, Any]
    family: FamilyInfo
    seed: int
    assignments: dict[str, int]
    clusters: list[ClusterInfo]
    loss_trace: list[float]
    n_iterations: int
    vanished: list[int]
    converged: bool
    similarity: float | None
    diagnostics: dict[str, Any] | None
    series_fits: list[SeriesFit]


def scatter_row(fit: SeriesFit, p: int, q: int) -> dict[str, Any]:
    """Flatten a per-series fit into ``id, phi1..phip, theta1..thetaq, cluster``.

    Args:
        fit: Per-series fit from a result document.
        p: Number of AR columns to emit.
        q: Number of MA columns to emit.

    Returns:
        Dict with one key per output column; coefficients of a failed fit are
        None.
    """
    phi = fit["phi"] or []
    theta = fit["theta"] or []
    row: dict[str, Any] = {"id": fit["id"]}
    for i in range(p):
        row[f"phi{i + 1}"] = phi[i] if i < len(phi) else None
    for j in range(q):
        row[f"theta{j + 1}"] = theta[j] if j < len(theta) else None
    row["cluster"] = fit["cluster"]
    return row
