"""Time-series value objects, transforms and ARMA process simulation."""

import logging
from collections.abc import Callable, Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import ArrayLike, NDArray
from scipy.signal import lfilter

from karma.constants import BURN_IN_MIN, BURN_IN_PER_PARAM
from karma.exceptions import DomainError, InvalidArgumentError, InvalidModelError

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]


def as_float_array(values: ArrayLike) -> FloatArray:
    """Return a read-only one-dimensional float64 copy of ``values``."""
    arr = np.array(values, dtype=np.float64).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """An identified, immutable sequence of finite real observations."""

    id: str
    values: FloatArray

    def __post_init__(self) -> None:
        values = as_float_array(self.values)
        if values.size == 0:
            raise InvalidArgumentError(f"Series '{self.id}' has no observations")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise InvalidArgumentError(
                f"Series '{self.id}' has a non-finite value at index {bad}"
            )
        object.__setattr__(self, "values", values)

    @property
    def T(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.T

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.values, other.values)

    def with_values(self, values: ArrayLike, suffix: str = "") -> "TimeSeries":
        """Return a new series carrying this id (plus ``suffix``)."""
        return TimeSeries(f"{self.id}{suffix}", as_float_array(values))


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of series with unique ids and any lengths."""

    series: tuple[TimeSeries, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        series = tuple(self.series)
        if not series:
            raise InvalidArgumentError("A dataset needs at least one series")

        index: dict[str, int] = {}
        for pos, s in enumerate(series):
            if s.id in index:
                raise InvalidArgumentError(f"Duplicate series id '{s.id}'")
            index[s.id] = pos

        object.__setattr__(self, "series", series)
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_mapping(cls, data: dict[str, ArrayLike]) -> "Dataset":
        """Build a dataset from an ordered ``{id: values}`` mapping."""
        return cls(
            tuple(TimeSeries(sid, as_float_array(v)) for sid, v in data.items())
        )

    def __len__(self) -> int:
        return len(self.series)

    def __iter__(self) -> Iterator[TimeSeries]:
        return iter(self.series)

    def __getitem__(self, pos: int) -> TimeSeries:
        return self.series[pos]

    @property
    def n(self) -> int:
        return len(self.series)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.series)

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(s.T for s in self.series)

    def get(self, series_id: str) -> TimeSeries:
        """Return the series with ``series_id``.

        Raises:
            KeyError: If no series carries that id.
        """
        return self.series[self._index[series_id]]

    def subset(self, ids: Iterable[str]) -> "Dataset":
        """Return the series named by ``ids``, in dataset order."""
        wanted = set(ids)
        return Dataset(tuple(s for s in self.series if s.id in wanted))

    def map(self, fn: Callable[[TimeSeries], TimeSeries]) -> "Dataset":
        """Apply ``fn`` to every series."""
        return Dataset(tuple(fn(s) for s in self.series))


@dataclass(frozen=True)
class ArmaSpec:
    """ARIMA(p, d, q) orders."""

    p: int = 0
    d: int = 0
    q: int = 0

    def __post_init__(self) -> None:
        for name in ("p", "d", "q"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise InvalidArgumentError(
                    f"Order {name} must be a non-negative integer, got {value!r}"
                )

    @property
    def r(self) -> int:
        """Number of conditioning observations, max(p, q)."""
        return max(self.p, self.q)

    def require_fittable(self) -> None:
        """Raise unless at least one AR or MA term is present."""
        if self.p + self.q < 1:
            raise InvalidArgumentError("Model fitting needs p + q >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {"p": self.p, "d": self.d, "q": self.q}


def difference(series: TimeSeries, d: int) -> TimeSeries:
    """Apply ``d`` passes of adjacent differencing.

    The result has length ``T - d`` and keeps the id with a ``~d<d>`` suffix
    (no suffix when ``d`` is 0).

    Raises:
        InvalidArgumentError: If ``d`` is negative or not smaller than ``T``.
    """
    if d < 0:
        raise InvalidArgumentError(f"Differencing order must be >= 0, got {d}")
    if d >= series.T:
        raise InvalidArgumentError(
            f"Cannot difference series '{series.id}' of length {series.T} "
            f"{d} times"
        )
    if d == 0:
        return series
    return series.with_values(np.diff(series.values, n=d), suffix=f"~d{d}")


def rolling_mean(series: TimeSeries, window: int) -> TimeSeries:
    """Return the length ``T - window + 1`` series of windowed means.

    Raises:
        InvalidArgumentError: If ``window`` is not in ``1..T``.
    """
    if window < 1:
        raise InvalidArgumentError(f"Window must be positive, got {window}")
    if window > series.T:
        raise InvalidArgumentError(
            f"Window {window} exceeds length {series.T} of series '{series.id}'"
        )
    if window == 1:
        return series
    means = sliding_window_view(series.values, window).sum(axis=1) / window
    return series.with_values(means, suffix=f"~rm{window}")


def log_transform(series: TimeSeries) -> TimeSeries:
    """Return the elementwise natural logarithm.

    Raises:
        DomainError: At the first value that is not strictly positive.
    """
    non_positive = np.flatnonzero(series.values <= 0)
    if non_positive.size:
        index = int(non_positive[0])
        raise DomainError(
            index,
            f"Series '{series.id}' has non-positive value "
            f"{series.values[index]!r} at index {index}",
        )
    return series.with_values(np.log(series.values), suffix="~log")


def center(series: TimeSeries) -> TimeSeries:
    """Subtract the sample mean."""
    return series.with_values(series.values - series.values.mean(), suffix="~c")


def preprocess(
    dataset: Dataset,
    *,
    rolling_window: int | None = None,
    log: bool = False,
    d: int = 0,
    demean: bool = False,
) -> Dataset:
    """Run the rolling mean, log, difference and centering steps in order.

    Transformed series keep their original ids so that assignments can be
    traced back to input rows.
    """

    def _pipeline(s: TimeSeries) -> TimeSeries:
        out = s
        if rolling_window and rolling_window > 1:
            out = rolling_mean(out, rolling_window)
        if log:
            out = log_transform(out)
        if d:
            out = difference(out, d)
        if demean:
            out = center(out)
        return TimeSeries(s.id, out.values)

    return dataset.map(_pipeline)


def _polynomial_roots(coefs: Sequence[float], sign: float) -> FloatArray:
    """Roots of ``1 + sign * sum(c_i z^i)``."""
    poly = np.r_[1.0, sign * np.asarray(coefs, dtype=np.float64)]
    poly = np.trim_zeros(poly, trim="b")
    if poly.size <= 1:
        return np.empty(0)
    # np.roots expects the highest power first
    return np.roots(poly[::-1])


def is_stationary(phi: ArrayLike) -> bool:
    """Return True when all roots of ``1 - sum(phi_i z^i)`` lie outside |z| = 1."""
    roots = _polynomial_roots(np.atleast_1d(np.asarray(phi, dtype=np.float64)), -1.0)
    return bool(np.all(np.abs(roots) > 1.0))


def is_invertible(theta: ArrayLike) -> bool:
    """Return True when all roots of ``1 + sum(theta_j z^j)`` lie outside |z| = 1."""
    roots = _polynomial_roots(np.atleast_1d(np.asarray(theta, dtype=np.float64)), 1.0)
    return bool(np.all(np.abs(roots) > 1.0))


def make_rng(seed: int) -> np.random.Generator:
    """Return the PCG64 generator every random draw in karma goes through."""
    return np.random.Generator(np.random.PCG64(seed))


def innovations(seed: int, size: int, sigma: float = 1.0) -> FloatArray:
    """Return ``size`` Gaussian innovations with standard deviation ``sigma``.

    Draws come from numpy's PCG64 bit generator and ziggurat normal sampler,
    which produce identical streams on every platform for a given seed.
    """
    return sigma * make_rng(seed).standard_normal(size)


def burn_in(p: int, q: int) -> int:
    """Number of leading simulated points discarded before returning a path."""
    return max(BURN_IN_MIN, BURN_IN_PER_PARAM * (p + q))


def simulate_arma(
    phi: ArrayLike,
    theta: ArrayLike,
    T: int,
    noise_seed: int,
    sigma: float = 1.0,
    *,
    series_id: str = "sim",
) -> TimeSeries:
    """Simulate ``X_t = a_t + sum(phi_i X_{t-i}) + sum(theta_j a_{t-j})``.

    ``T + burn_in(p, q)`` points are generated from a zero start and the
    leading burn-in prefix is discarded.

    Raises:
        InvalidArgumentError: If ``T`` or ``sigma`` is not positive.
        InvalidModelError: If the AR polynomial has a root on or inside the
            unit circle.
    """
    phi_arr = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    theta_arr = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if T < 1:
        raise InvalidArgumentError(f"T must be positive, got {T}")
    if sigma <= 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    if not is_stationary(phi_arr):
        raise InvalidModelError(
            f"AR coefficients {phi_arr.tolist()} are not stationary"
        )

    n_burn = burn_in(phi_arr.size, theta_arr.size)
    noise = innovations(noise_seed, T + n_burn, sigma)
    if phi_arr.size == 0 and theta_arr.size == 0:
        path = noise
    else:
        path = lfilter(np.r_[1.0, theta_arr], np.r_[1.0, -phi_arr], noise)
    return TimeSeries(series_id, path[n_burn:])
