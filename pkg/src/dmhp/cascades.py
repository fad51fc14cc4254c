"""Cascade data model.

A cascade is the seed post at t=0 followed by its reshares, stored as
relative event times in seconds. Tied timestamps are kept as distinct
events and keep their input order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class InvalidCascadeError(ValueError):
    pass


class InvalidHorizonError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Cascade:
    """Ordered relative event times of one diffusion.

    ``observed_until`` marks a censoring horizon T; every event is
    strictly before it.
    """

    event_times: np.ndarray
    observed_until: float | None = None

    def __post_init__(self):
        times = np.array(self.event_times, dtype=np.float64).reshape(-1)
        if times.size == 0:
            raise InvalidCascadeError("cascade has no events")
        if times[0] != 0.0:
            raise InvalidCascadeError(f"first event must be at 0, got {times[0]!r}")
        if not np.all(np.isfinite(times)):
            raise InvalidCascadeError("event times must be finite")
        if np.any(np.diff(times) < 0):
            raise InvalidCascadeError("event times must be non-decreasing")
        if self.observed_until is not None:
            horizon = float(self.observed_until)
            if not horizon > 0:
                raise InvalidHorizonError(f"observed_until must be positive, got {horizon!r}")
            if times[-1] >= horizon:
                raise InvalidCascadeError("events must be strictly before observed_until")
            object.__setattr__(self, "observed_until", horizon)
        times.flags.writeable = False
        object.__setattr__(self, "event_times", times)

    @property
    def size(self) -> int:
        return int(self.event_times.size)

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other):
        if not isinstance(other, Cascade):
            return NotImplemented
        return (self.observed_until == other.observed_until
                and np.array_equal(self.event_times, other.event_times))

    def __hash__(self):
        return hash((self.event_times.tobytes(), self.observed_until))

    def __repr__(self):
        head = ", ".join(f"{t:g}" for t in self.event_times[:5])
        more = ", ..." if self.size > 5 else ""
        return f"Cascade([{head}{more}], n={self.size}, observed_until={self.observed_until})"


@dataclass(frozen=True)
class CascadeGroup:
    """All cascades about one item, together with its publisher."""

    item_id: str
    publisher_id: str
    cascades: tuple[Cascade, ...] = field(default_factory=tuple)

    def __post_init__(self):
        cascades = tuple(self.cascades)
        if not cascades:
            raise InvalidCascadeError(f"item {self.item_id!r} has no cascades")
        object.__setattr__(self, "cascades", cascades)

    @property
    def sizes(self) -> np.ndarray:
        return cascade_sizes(self.cascades)


def cascade_size(c: Cascade) -> int:
    """Number of events, i.e. the cascade popularity."""
    return c.size


def cascade_sizes(cascades: Iterable[Cascade]) -> np.ndarray:
    return np.fromiter((c.size for c in cascades), dtype=np.int64)


def truncate(c: Cascade, T: float) -> Cascade:
    """Keep the events strictly before ``T`` and mark ``T`` as the horizon."""
    T = float(T)
    if not T > 0:
        raise InvalidHorizonError(f"horizon must be positive, got {T!r}")
    keep = int(np.searchsorted(c.event_times, T, side="left"))
    return Cascade(c.event_times[:keep], observed_until=T)


def count_before(c: Cascade, T: float) -> int:
    return int(np.searchsorted(c.event_times, T, side="left"))


def group_by(records: Sequence[tuple[str, str, Cascade]]) -> list[CascadeGroup]:
    """Group ``(item_id, publisher_id, cascade)`` triples by item.

    Items keep first-appearance order.
    """
    order: dict[str, tuple[str, list[Cascade]]] = {}
    for item_id, publisher_id, cascade in records:
        entry = order.get(item_id)
        if entry is None:
            order[item_id] = (publisher_id, [cascade])
        else:
            if entry[0] != publisher_id:
                raise InvalidCascadeError(
                    f"item {item_id!r} appears under publishers {entry[0]!r} and {publisher_id!r}")
            entry[1].append(cascade)
    return [CascadeGroup(item, pub, tuple(cs)) for item, (pub, cs) in order.items()]
