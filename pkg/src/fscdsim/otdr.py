"""OTDR interrogation: backscatter traces, gate shaping, feature detection.

Single-pulse model.  The Rayleigh backscatter level for a pulse of width
``tau`` is ``B = 10*log10(S * alpha_s * v_g * tau / 2)`` relative to the
launch power, and the baseline at distance ``z`` is
``P(z) = launch + B - 2*A(z)`` where ``A`` is the one-way loss.  Reflective
events add a one-bin rectangular spike with peak power
``launch + R - 2*A(z_event)``.  The receiver clips at ``saturation`` and
cannot see below ``noise_floor``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from fscdsim.errors import ConfigInvalid
from fscdsim.fibre_plant import (
    C_VACUUM,
    FibrePath,
    distance_at_round_trip,
    one_way_attenuation,
    reflective_events,
    round_trip_delay,
)
from fscdsim.sim_core import TICKS_PER_SECOND, check_ticks, ns, us

DB_PER_NEPER = 10.0 / math.log(10.0)

NOISELESS = math.inf


@dataclass(frozen=True)
class OtdrConfig:
    wavelength: float = 1550.0  # nm
    pulse_width: int = ns(100)
    pulse_period: int = us(200)
    launch_power: float = 10.0  # dBm
    num_averages: float = 4096
    bin_size: float = 10.0  # m
    noise_floor: float = -70.0  # dBm
    saturation: float = -32.0  # dBm, receiver clipping level
    rayleigh_coefficient: float = 0.15  # dB/km, scattering part of the loss
    capture_fraction: float = 0.02835  # gives ~ -50 dB backscatter for 100 ns

    def validate(self) -> None:
        if self.pulse_width <= 0:
            raise ConfigInvalid("pulse_width must be > 0")
        if self.pulse_period <= 0:
            raise ConfigInvalid("pulse_period must be > 0")
        if not self.bin_size > 0:
            raise ConfigInvalid("bin_size must be > 0 m")
        if not self.num_averages >= 1:
            raise ConfigInvalid("num_averages must be >= 1 (inf for a noiseless trace)")
        if not self.saturation > self.noise_floor:
            raise ConfigInvalid("saturation must lie above the noise floor")
        if not 0 < self.capture_fraction < 1 or self.rayleigh_coefficient <= 0:
            raise ConfigInvalid("backscatter constants must be positive")

    @property
    def noiseless(self) -> bool:
        return math.isinf(self.num_averages)


def backscatter_level(config: OtdrConfig, group_index: float) -> float:
    """Backscatter power relative to launch, in dB."""
    alpha_s = config.rayleigh_coefficient / DB_PER_NEPER / 1000.0  # 1/m
    v_g = C_VACUUM / group_index
    tau = config.pulse_width / TICKS_PER_SECOND
    return 10.0 * math.log10(config.capture_fraction * alpha_s * v_g * tau / 2.0)


@dataclass(frozen=True)
class GateTechnology:
    name: str
    response_time: int
    max_attenuation: float
    continuous: bool = False  # VOA-style settable attenuation

    def __post_init__(self):
        if self.response_time <= 0:
            raise ConfigInvalid(f"{self.name}: response_time must be > 0")
        if not self.max_attenuation > 0:
            raise ConfigInvalid(f"{self.name}: max_attenuation must be > 0 dB")


EO_SWITCH = GateTechnology("eo_switch", ns(290), 40.0)
MEMS_VOA = GateTechnology("mems_voa", ns(3_000_000), 40.0, continuous=True)


@dataclass(frozen=True)
class GateSchedule:
    """Piecewise-constant gate attenuation relative to a pulse launch.

    ``steps[k] = (start_ticks, attenuation_db)`` holds from its start up to
    the next start.  A bin arriving exactly on a transition sees the new value.
    """

    steps: tuple[tuple[int, float], ...] = ((0, 0.0),)
    technology: Optional[GateTechnology] = None

    def __post_init__(self):
        steps = tuple((check_ticks(t), float(a)) for t, a in self.steps)
        object.__setattr__(self, "steps", steps)
        if not steps or steps[0][0] != 0:
            raise ConfigInvalid("gate schedule must start at t=0")
        for (t0, _), (t1, _) in zip(steps, steps[1:]):
            if t1 <= t0:
                raise ConfigInvalid("gate schedule starts must be strictly increasing")
        if any(a < 0 or not math.isfinite(a) for _, a in steps):
            raise ConfigInvalid("gate attenuation must be finite and >= 0 dB")

    @classmethod
    def open(cls, technology=None) -> "GateSchedule":
        return cls(((0, 0.0),), technology)

    @classmethod
    def constant(cls, attenuation: float, technology=None) -> "GateSchedule":
        return cls(((0, attenuation),), technology)

    @classmethod
    def closed_from(cls, t: int, attenuation: float, technology=None) -> "GateSchedule":
        if t <= 0:
            return cls.constant(attenuation, technology)
        return cls(((0, 0.0), (t, attenuation)), technology)

    @classmethod
    def window(cls, start: int, end: int, attenuation: float, technology=None) -> "GateSchedule":
        if end <= start:
            return cls.open(technology)
        if start <= 0:
            return cls(((0, attenuation), (end, 0.0)), technology)
        return cls(((0, 0.0), (start, attenuation), (end, 0.0)), technology)

    def attenuation_at(self, t) -> np.ndarray:
        starts = np.array([s for s, _ in self.steps], dtype=np.int64)
        values = np.array([a for _, a in self.steps], dtype=float)
        idx = np.searchsorted(starts, np.asarray(t, dtype=np.int64), side="right") - 1
        return values[np.clip(idx, 0, None)]

    def is_open(self) -> bool:
        return all(a == 0.0 for _, a in self.steps)

    def simplified(self) -> "GateSchedule":
        merged: list[tuple[int, float]] = []
        for t, a in self.steps:
            if merged and merged[-1][1] == a:
                continue
            merged.append((t, a))
        return GateSchedule(tuple(merged), self.technology)


@dataclass
class OtdrTrace:
    distance: np.ndarray
    power: np.ndarray
    config: OtdrConfig
    path: FibrePath
    arrival: np.ndarray  # round-trip arrival time of each bin, ticks
    gates: tuple[GateSchedule, ...] = field(default=())

    @property
    def gate_schedule(self) -> Optional[GateSchedule]:
        return self.gates[-1] if self.gates else None

    def __len__(self) -> int:
        return len(self.power)

    def to_csv(self) -> str:
        return trace_csv(self)


def _bin_geometry(config: OtdrConfig, path: FibrePath):
    n = math.ceil(path.length / config.bin_size - 1e-9)
    centers = (np.arange(n) + 0.5) * config.bin_size
    eval_at = np.minimum(centers, path.length)
    arrival = np.array([round_trip_delay(path, float(z)) for z in eval_at], dtype=np.int64)
    return n, centers, eval_at, arrival


def raw_trace(config: OtdrConfig, path: FibrePath, rng: Optional[np.random.Generator] = None) -> OtdrTrace:
    """Backscatter trace for one interrogation of ``path`` with no gate applied."""
    config.validate()
    if not path.length > 0:
        raise ConfigInvalid("fibre path has zero length")
    if config.pulse_period <= round_trip_delay(path, path.length):
        raise ConfigInvalid("pulse_period shorter than the round trip over the whole fibre")
    if not config.noiseless and rng is None:
        raise ConfigInvalid("a noisy trace needs an RNG stream")

    n, centers, eval_at, arrival = _bin_geometry(config, path)
    loss = np.array([one_way_attenuation(path, float(z)) for z in eval_at])
    level = np.array([backscatter_level(config, path.segment_at(float(z)).group_index) for z in eval_at])
    baseline_db = config.launch_power + level - 2.0 * loss
    linear = 10.0 ** (baseline_db / 10.0)

    for position, reflectance in reflective_events(path):
        k = min(int(position // config.bin_size), n - 1)
        peak_db = config.launch_power + reflectance - 2.0 * one_way_attenuation(path, position)
        linear[k] += 10.0 ** (peak_db / 10.0)

    sat_lin = 10.0 ** (config.saturation / 10.0)
    floor_lin = 10.0 ** (config.noise_floor / 10.0)
    linear = np.minimum(linear, sat_lin)
    if not config.noiseless:
        linear = linear + rng.normal(0.0, floor_lin / math.sqrt(config.num_averages), n)
    with np.errstate(divide="ignore", invalid="ignore"):
        power = 10.0 * np.log10(np.maximum(linear, floor_lin))
    power = np.maximum(power, config.noise_floor)
    return OtdrTrace(centers, power, config, path, arrival)


def apply_gate(trace: OtdrTrace, schedule: GateSchedule) -> OtdrTrace:
    """Attenuate each bin by the gate value at its arrival time, then floor-clamp."""
    att = schedule.attenuation_at(trace.arrival)
    gated = np.where(att > 0.0, np.maximum(trace.power - att, trace.config.noise_floor), trace.power)
    return replace(trace, power=gated, gates=trace.gates + (schedule,))


def obscuring_window_to_distance(delay: int, duration: int, path: FibrePath) -> tuple[float, float]:
    if delay < 0 or duration < 0:
        raise ConfigInvalid("delay and duration must be >= 0")
    return (distance_at_round_trip(path, delay), distance_at_round_trip(path, delay + duration))


def section_to_window(z1: float, z2: float, path: FibrePath) -> tuple[int, int]:
    """(delay, duration) whose round-trip window covers [z1, z2]."""
    t1 = round_trip_delay(path, z1)
    return t1, round_trip_delay(path, z2) - t1


def leaked_length(response_time: int, path: FibrePath) -> float:
    """Fibre length whose backscatter returns before a gate closing at ``response_time``.

    Not clamped: a value above ``path.length`` means the whole fibre leaks.
    """
    if response_time < 0:
        raise ConfigInvalid("response_time must be >= 0")
    optical = response_time / TICKS_PER_SECOND * C_VACUUM / 2.0
    total = path.optical_length(path.length)
    if optical <= total:
        return path.distance_at_optical_length(optical)
    return path.length + (optical - total) / path.segments[-1].group_index


@dataclass(frozen=True)
class Feature:
    position: float
    kind: str  # "connector" | "fibre_end"
    magnitude: float  # dB above the higher neighbouring bin


def detect_features(trace: OtdrTrace, prominence: float = 3.0, floor_margin: float = 1.0) -> list[Feature]:
    p = trace.power
    n = len(p)
    if n == 0:
        return []
    left = np.concatenate(([-np.inf], p[:-1]))
    right = np.concatenate((p[1:], [-np.inf]))
    prom = p - np.maximum(left, right)
    above_floor = p > trace.config.noise_floor + floor_margin
    # quiet_after[i]: every bin after i sits at the noise floor
    at_floor = ~above_floor
    quiet_after = np.ones(n, dtype=bool)
    for i in range(n - 2, -1, -1):
        quiet_after[i] = quiet_after[i + 1] and at_floor[i + 1]

    features = []
    for i in np.flatnonzero((prom > prominence) & above_floor):
        kind = "fibre_end" if quiet_after[i] else "connector"
        features.append(Feature(float(trace.distance[i]), kind, float(prom[i])))
    return features


def trace_csv(trace: OtdrTrace) -> str:
    buf = io.StringIO()
    buf.write("distance_m,power_db\n")
    for z, p in zip(trace.distance, trace.power):
        buf.write(f"{z:.6f},{p:.6f}\n")
    return buf.getvalue()


def read_trace_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["distance_m", "power_db"]:
        raise ValueError("not an OTDR trace CSV")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]]).reshape(-1, 2)
    return data[:, 0], data[:, 1]


def baseline_slope(trace: OtdrTrace, exclude: Sequence[float] = ()) -> float:
    """Least-squares slope of the above-floor trace in dB/km, skipping reflective bins."""
    mask = trace.power > trace.config.noise_floor + 1.0
    for z in exclude:
        k = min(int(z // trace.config.bin_size), len(trace) - 1)
        mask[max(k - 1, 0):k + 2] = False
    slope, _ = np.polyfit(trace.distance[mask] / 1000.0, trace.power[mask], 1)
    return float(slope)
