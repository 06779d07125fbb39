"""Static fibre infrastructure: spans, connectors, multi-core links, regions.

Distances are floats in metres.  Anything that lands on the simulation
timeline is converted to integer picoseconds through :func:`round_trip_delay`
or :func:`one_way_delay`.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from fscdsim.errors import ConfigInvalid, OutOfRange
from fscdsim.sim_core import TICKS_PER_SECOND, check_ticks

C_VACUUM = 299_792_458.0  # m/s

DEFAULT_GROUP_INDEX = 1.468
DEFAULT_ATTENUATION_DB_KM = 0.2
DEFAULT_CONNECTOR_IL_DB = 0.3
DEFAULT_CONNECTOR_RL_DB = 45.0
DEFAULT_END_RL_DB = 14.7


@dataclass(frozen=True)
class FibreSegment:
    length: float
    attenuation: float = DEFAULT_ATTENUATION_DB_KM
    group_index: float = DEFAULT_GROUP_INDEX

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigInvalid(f"segment length must be > 0 m, got {self.length}")
        if self.attenuation < 0:
            raise ConfigInvalid(f"attenuation must be >= 0 dB/km, got {self.attenuation}")
        if not 1.0 < self.group_index < 2.0:
            raise ConfigInvalid(f"group index must lie in (1, 2), got {self.group_index}")

    @property
    def group_velocity(self) -> float:
        return C_VACUUM / self.group_index


@dataclass(frozen=True)
class ConnectorEvent:
    position: float
    insertion_loss: float = DEFAULT_CONNECTOR_IL_DB
    return_loss: float = DEFAULT_CONNECTOR_RL_DB

    def __post_init__(self):
        if self.position < 0:
            raise ConfigInvalid(f"connector position must be >= 0, got {self.position}")
        if self.insertion_loss < 0:
            raise ConfigInvalid("connector insertion loss must be >= 0 dB")
        if not self.return_loss > 0:
            raise ConfigInvalid("connector return loss must be > 0 dB")

    @property
    def reflectance(self) -> float:
        return -self.return_loss


@dataclass(frozen=True)
class FibrePath:
    segments: tuple[FibreSegment, ...]
    connectors: tuple[ConnectorEvent, ...] = ()
    end_reflectance: float = DEFAULT_END_RL_DB
    core_id: Optional[int] = None
    # cumulative segment boundaries, filled in __post_init__
    _edges: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "connectors", tuple(self.connectors))
        if not self.segments:
            raise ConfigInvalid("a fibre path needs at least one segment")
        if not self.end_reflectance > 0:
            raise ConfigInvalid("end return loss must be > 0 dB")
        edges = [0.0]
        for seg in self.segments:
            edges.append(edges[-1] + seg.length)
        object.__setattr__(self, "_edges", tuple(edges))
        last = -1.0
        for c in self.connectors:
            if c.position <= last:
                raise ConfigInvalid("connector positions must be strictly increasing")
            if c.position > self.length:
                raise ConfigInvalid(f"connector at {c.position} m lies beyond the fibre end")
            last = c.position

    @property
    def length(self) -> float:
        return self._edges[-1]

    def segment_at(self, distance: float) -> FibreSegment:
        i = bisect.bisect_right(self._edges, distance) - 1
        return self.segments[min(max(i, 0), len(self.segments) - 1)]

    def _check(self, distance: float) -> None:
        if not 0 <= distance <= self.length:
            raise OutOfRange(f"distance {distance} m outside [0, {self.length}] m")

    def optical_length(self, distance: float) -> float:
        """Integral of group index over [0, distance], in metres."""
        self._check(distance)
        total = 0.0
        for seg, start in zip(self.segments, self._edges):
            if distance <= start:
                break
            total += seg.group_index * (min(distance, start + seg.length) - start)
        return total

    def distance_at_optical_length(self, optical: float) -> float:
        """Inverse of :meth:`optical_length`; clamps to [0, length]."""
        if optical <= 0:
            return 0.0
        for seg, start in zip(self.segments, self._edges):
            span = seg.group_index * seg.length
            if optical <= span:
                return start + optical / seg.group_index
            optical -= span
        return self.length

    def reversed(self) -> "FibrePath":
        """The same fibre seen from its far end."""
        L = self.length
        conns = tuple(replace(c, position=L - c.position) for c in reversed(self.connectors)
                      if c.position > 0)
        return FibrePath(tuple(reversed(self.segments)), conns, self.end_reflectance, self.core_id)

    def concat(self, other: "FibrePath", core_id: Optional[int] = None) -> "FibrePath":
        """Splice ``other`` onto the far end of this path.

        The far-end reflection of ``self`` becomes a connector at the joint.
        """
        joint = ConnectorEvent(self.length, DEFAULT_CONNECTOR_IL_DB, DEFAULT_CONNECTOR_RL_DB)
        shifted = tuple(replace(c, position=c.position + self.length) for c in other.connectors)
        own = tuple(c for c in self.connectors if c.position < self.length)
        if other.connectors and other.connectors[0].position == 0:
            joint = shifted[0]
            shifted = shifted[1:]
        return FibrePath(self.segments + other.segments, own + (joint,) + shifted,
                         other.end_reflectance, core_id if core_id is not None else other.core_id)


def one_way_delay(path: FibrePath, distance: float) -> int:
    return check_ticks(round(path.optical_length(distance) / C_VACUUM * TICKS_PER_SECOND))


def round_trip_delay(path: FibrePath, distance: float) -> int:
    """Time of flight out to ``distance`` and back, in ticks."""
    return check_ticks(round(2.0 * path.optical_length(distance) / C_VACUUM * TICKS_PER_SECOND))


def distance_at_round_trip(path: FibrePath, delay: int) -> float:
    return path.distance_at_optical_length(delay / TICKS_PER_SECOND * C_VACUUM / 2.0)


def one_way_attenuation(path: FibrePath, distance: float) -> float:
    path._check(distance)
    loss = 0.0
    for seg, start in zip(path.segments, path._edges):
        if distance <= start:
            break
        loss += seg.attenuation * (min(distance, start + seg.length) - start) / 1000.0
    for c in path.connectors:
        if c.position < distance:
            loss += c.insertion_loss
    return loss


def reflective_events(path: FibrePath) -> list[tuple[float, float]]:
    """(position, reflectance dB) for every connector plus the fibre end."""
    events = [(c.position, c.reflectance) for c in path.connectors]
    events.append((path.length, -path.end_reflectance))
    events.sort(key=lambda e: e[0])
    return events


def multicore_link(cores: int, segments: Sequence[FibreSegment],
                   connectors: Sequence[ConnectorEvent] = (),
                   end_reflectance: float = DEFAULT_END_RL_DB) -> list[FibrePath]:
    """Independent per-core paths sharing one geometry (no crosstalk)."""
    if cores < 1:
        raise ConfigInvalid("a multi-core link needs at least one core")
    return [FibrePath(tuple(segments), tuple(connectors), end_reflectance, core_id=k)
            for k in range(cores)]


@dataclass(frozen=True)
class SensingRegion:
    region_id: str
    members: tuple[str, ...]
    # path id -> (start_m, end_m)
    spans: dict = field(default_factory=dict)


def check_region_membership(regions: Sequence[SensingRegion]) -> None:
    seen: dict[str, str] = {}
    for r in regions:
        for m in r.members:
            if m in seen:
                raise ConfigInvalid(f"FSCD {m!r} belongs to both {seen[m]!r} and {r.region_id!r}")
            seen[m] = r.region_id
