"""Run manifest: every setting of a ``karma cluster`` run in one document."""

import dataclasses
import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path
from typing import Any

from karma.ar_fit import LossKind
from karma.constants import (
    DEFAULT_FLAG_THRESHOLD,
    DEFAULT_LAGS,
    DEFAULT_MAX_ITERS,
    DEFAULT_RESTARTS,
)
from karma.exceptions import InvalidArgumentError, ParseError
from karma.kmodels import InitKind, InitMethod, KModelsConfig, ModelFamily, VanishPolicy

logger = logging.getLogger(__name__)


class InputFormat(StrEnum):
    WIDE = "wide"
    LONG = "long"


@dataclass(frozen=True)
class RunManifest:
    """Settings of a clustering run.

    Preprocessing runs rolling mean, log, differencing and centering in that
    order. Differencing happens once, before clustering, so the model family
    built from a manifest always has ``d = 0``.
    """

    input: str | None = None
    format: InputFormat = InputFormat.WIDE
    labels: str | None = None
    center: bool = False
    log: bool = False
    rolling_window: int = 1
    d: int = 0
    p: int = 1
    q: int = 0
    loss: LossKind = LossKind.L2
    k: int = 2
    init: InitKind = InitKind.PROTOTYPE
    restarts: int = DEFAULT_RESTARTS
    seed: int = 0
    lags: int = DEFAULT_LAGS
    threshold: float = DEFAULT_FLAG_THRESHOLD
    relaxed_lengths: bool = False
    max_iters: int = DEFAULT_MAX_ITERS
    vanish: VanishPolicy = VanishPolicy.DROP
    n_jobs: int = 1
    output: str | None = None

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "format", InputFormat(self.format))
            object.__setattr__(self, "loss", LossKind(self.loss))
            object.__setattr__(self, "init", InitKind(self.init))
            object.__setattr__(self, "vanish", VanishPolicy(self.vanish))
        except ValueError as exc:
            raise InvalidArgumentError(str(exc)) from exc

        if self.rolling_window < 1:
            raise InvalidArgumentError(
                f"rolling_window must be positive, got {self.rolling_window}"
            )
        if self.d < 0:
            raise InvalidArgumentError(f"d must be >= 0, got {self.d}")
        if self.q > 0 and self.loss is LossKind.L1:
            raise InvalidArgumentError("Absolute loss is only available for AR models")
        if not 0.0 < self.threshold < 1.0:
            raise InvalidArgumentError(
                f"threshold must lie in (0, 1), got {self.threshold}"
            )
        if self.lags < 1:
            raise InvalidArgumentError(f"lags must be positive, got {self.lags}")
        # Validates p, q, k, restarts, max_iters and n_jobs
        self.to_config()

    def family(self) -> ModelFamily:
        if self.q > 0:
            return ModelFamily.arma_css(self.p, self.q)
        if self.loss is LossKind.L1:
            return ModelFamily.ar_l1(self.p)
        return ModelFamily.ar_l2(self.p)

    def to_config(self) -> KModelsConfig:
        return KModelsConfig(
            k=self.k,
            family=self.family(),
            init=InitMethod(self.init, self.seed),
            max_iters=self.max_iters,
            restarts=self.restarts,
            vanish_policy=self.vanish,
            n_jobs=self.n_jobs,
        )

    def merge(self, overrides: Mapping[str, Any]) -> "RunManifest":
        """Return a copy with every non-None override applied."""
        changes = {key: value for key, value in overrides.items() if value is not None}
        unknown = set(changes) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise InvalidArgumentError(
                f"Unknown manifest fields: {', '.join(sorted(unknown))}"
            )
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        for key, value in data.items():
            if isinstance(value, StrEnum):
                data[key] = str(value)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunManifest":
        return cls().merge(data)

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        """Read a manifest from a JSON document.

        Raises:
            ParseError: If the file is not a JSON object.
            InvalidArgumentError: If a field is unknown or invalid.
        """
        logger.info("Loading run manifest from %s", path)
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.lineno, f"Invalid manifest JSON: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ParseError(0, f"Manifest {path} must hold a JSON object")
        return cls.from_dict(data)

    def save(self, path: Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, ensure_ascii=False, indent=4)
            f.write("\n")
