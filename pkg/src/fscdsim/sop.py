"""State of polarization on the Poincare sphere.

Birefringence changes act on Stokes vectors as rotations in SO(3).  Rotation
sequences are stored as ``(n, 3, 3)`` arrays of per-sample *increments*;
:func:`propagate_sop` accumulates them, so sample ``k`` of a trace is
``C_scr[k] @ C_evt[k] @ s0`` with ``C[k] = R[k] @ ... @ R[0]``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.stats import rankdata

from fscdsim.errors import ConfigInvalid, LengthMismatch, TooFewSamples, TooShort
from fscdsim.sim_core import TICKS_PER_SECOND, check_ticks

UNIT_TOL = 1e-9


@dataclass(frozen=True)
class StokesVector:
    s1: float
    s2: float
    s3: float

    def __post_init__(self):
        norm = math.sqrt(self.s1**2 + self.s2**2 + self.s3**2)
        if abs(norm - 1.0) > UNIT_TOL:
            raise ConfigInvalid(f"Stokes vector norm {norm} is not 1")

    @classmethod
    def normalized(cls, s1: float, s2: float, s3: float) -> "StokesVector":
        v = np.array([s1, s2, s3], dtype=float)
        v /= np.linalg.norm(v)
        return cls(*map(float, v))

    @property
    def array(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3])


def _as_vec(s) -> np.ndarray:
    return s.array if isinstance(s, StokesVector) else np.asarray(s, dtype=float)


def axis_angle_matrices(axes: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rodrigues formula, vectorised over the leading axis."""
    axes = np.asarray(axes, dtype=float).reshape(-1, 3)
    angles = np.asarray(angles, dtype=float).reshape(-1)
    norms = np.linalg.norm(axes, axis=1, keepdims=True)
    k = np.divide(axes, norms, out=np.zeros_like(axes), where=norms > 0)
    kx, ky, kz = k[:, 0], k[:, 1], k[:, 2]
    zero = np.zeros_like(kx)
    K = np.stack([
        np.stack([zero, -kz, ky], axis=-1),
        np.stack([kz, zero, -kx], axis=-1),
        np.stack([-ky, kx, zero], axis=-1),
    ], axis=1)
    s = np.sin(angles)[:, None, None]
    c = (1.0 - np.cos(angles))[:, None, None]
    return np.eye(3)[None] + s * K + c * (K @ K)


def identity_sequence(n: int) -> np.ndarray:
    return np.broadcast_to(np.eye(3), (n, 3, 3)).copy()


def rotation_angles(mats: np.ndarray) -> np.ndarray:
    tr = np.trace(np.asarray(mats).reshape(-1, 3, 3), axis1=1, axis2=2)
    return np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))


@dataclass(frozen=True)
class Rotation3:
    matrix: np.ndarray = field(default_factory=lambda: np.eye(3))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Rotation3":
        return cls(axis_angle_matrices(np.asarray(axis)[None], np.array([angle]))[0])

    @classmethod
    def identity(cls) -> "Rotation3":
        return cls(np.eye(3))

    @property
    def angle(self) -> float:
        return float(rotation_angles(self.matrix)[0])

    def __matmul__(self, other: "Rotation3") -> "Rotation3":
        return Rotation3(self.matrix @ other.matrix)

    def apply(self, s):
        return self.matrix @ _as_vec(s)


def random_axes(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True)
class DisturbanceProfile:
    start: int  # ticks
    end: int
    band: tuple[float, float] = (1.0, 100.0)  # Hz
    peak_rate: float = 50.0  # rad/s
    components: int = 8

    def __post_init__(self):
        check_ticks(self.start)
        check_ticks(self.end)
        if self.end < self.start:
            raise ConfigInvalid("disturbance ends before it starts")
        lo, hi = self.band
        if not 0 < lo < hi:
            raise ConfigInvalid("disturbance band needs 0 < f_lo < f_hi")
        if self.peak_rate < 0:
            raise ConfigInvalid("peak rate must be >= 0")


@dataclass(frozen=True)
class ScramblerConfig:
    scrambling_rate: float = 10_000.0  # rotations/s
    activation_delay: int = 0  # ticks
    enabled: bool = False
    max_rate: float = 100_000.0  # transmission-penalty ceiling, rotations/s

    def __post_init__(self):
        if not self.scrambling_rate > 0:
            raise ConfigInvalid("scrambling_rate must be > 0")
        if self.activation_delay < 0:
            raise ConfigInvalid("activation_delay must be >= 0")
        if self.scrambling_rate > self.max_rate:
            raise ConfigInvalid(
                f"scrambling rate {self.scrambling_rate} exceeds the configured ceiling {self.max_rate}")


def sample_times(n: int, dt: int) -> np.ndarray:
    return np.arange(n, dtype=np.int64) * np.int64(dt)


def event_rotation_sequence(profile: DisturbanceProfile, dt: int, n: int,
                            rng: np.random.Generator) -> np.ndarray:
    """Band-limited random angular velocity, scaled so its peak magnitude is ``peak_rate``."""
    if dt <= 0:
        raise ConfigInvalid("dt must be > 0")
    seq = identity_sequence(n)
    t = sample_times(n, dt)
    inside = (t >= profile.start) & (t <= profile.end)
    # draw unconditionally so the stream position does not depend on the window
    freqs = rng.uniform(profile.band[0], profile.band[1], profile.components)
    phases = rng.uniform(0.0, 2.0 * math.pi, profile.components)
    amps = rng.normal(size=(profile.components, 3))
    if profile.peak_rate == 0 or not inside.any():
        return seq
    ts = t[inside] / TICKS_PER_SECOND
    omega = np.sin(2.0 * math.pi * np.outer(ts, freqs) + phases) @ amps
    mag = np.linalg.norm(omega, axis=1)
    omega *= profile.peak_rate / mag.max()
    dt_s = dt / TICKS_PER_SECOND
    seq[inside] = axis_angle_matrices(omega, np.linalg.norm(omega, axis=1) * dt_s)
    return seq


def scrambler_rotation_sequence(config: ScramblerConfig, dt: int, n: int, rng: np.random.Generator,
                                enabled_at: int = 0, disabled_at: Optional[int] = None) -> np.ndarray:
    """Random-axis steps whose mean angle is ``2*pi*scrambling_rate*dt``.

    Steps stay identity until ``activation_delay`` has elapsed after
    ``enabled_at``.
    """
    if dt <= 0:
        raise ConfigInvalid("dt must be > 0")
    axes = random_axes(rng, n)
    mean_angle = 2.0 * math.pi * config.scrambling_rate * dt / TICKS_PER_SECOND
    angles = rng.uniform(0.0, 2.0 * mean_angle, n)
    if not config.enabled:
        return identity_sequence(n)
    t = sample_times(n, dt)
    active = t >= enabled_at + config.activation_delay
    if disabled_at is not None:
        active &= t < disabled_at
    seq = identity_sequence(n)
    if active.any():
        seq[active] = axis_angle_matrices(axes[active], angles[active])
    return seq


@dataclass
class SopTrace:
    sampling_period: int  # ticks
    samples: np.ndarray  # (n, 3)
    labels: np.ndarray  # (n,) bool

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=bool)
        if len(self.labels) != len(self.samples):
            raise LengthMismatch("labels and samples differ in length")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return sample_times(len(self), self.sampling_period) / TICKS_PER_SECOND

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t_s,s1,s2,s3,event_flag\n")
        for t, (a, b, c), flag in zip(self.times, self.samples, self.labels):
            buf.write(f"{t:.6f},{a:.6f},{b:.6f},{c:.6f},{int(flag)}\n")
        return buf.getvalue()


def _cumulative(seq: np.ndarray) -> np.ndarray:
    out = np.empty_like(seq)
    acc = np.eye(3)
    for k in range(len(seq)):
        acc = seq[k] @ acc
        out[k] = acc
    return out


def propagate_sop(s0, event_seq: np.ndarray, scrambler_seq: np.ndarray, dt: int,
                  labels: Optional[Sequence[bool]] = None) -> SopTrace:
    event_seq = np.asarray(event_seq)
    scrambler_seq = np.asarray(scrambler_seq)
    if len(event_seq) != len(scrambler_seq):
        raise LengthMismatch(f"event sequence has {len(event_seq)} steps, scrambler {len(scrambler_seq)}")
    s0 = _as_vec(s0)
    total = _cumulative(scrambler_seq) @ _cumulative(event_seq)
    samples = total @ s0
    if labels is None:
        labels = np.zeros(len(samples), dtype=bool)
    return SopTrace(dt, samples, labels)


def event_labels(profile: Optional[DisturbanceProfile], dt: int, n: int) -> np.ndarray:
    if profile is None:
        return np.zeros(n, dtype=bool)
    t = sample_times(n, dt)
    return (t >= profile.start) & (t <= profile.end)


def angular_rate(trace: SopTrace) -> np.ndarray:
    """Angle between consecutive samples divided by the sampling period, rad/s."""
    if len(trace) < 2:
        raise TooShort("angular rate needs at least two samples")
    dots = np.einsum("ij,ij->i", trace.samples[:-1], trace.samples[1:])
    return np.arccos(np.clip(dots, -1.0, 1.0)) / (trace.sampling_period / TICKS_PER_SECOND)


def detect_disturbance(trace: SopTrace, threshold: float) -> list[tuple[int, int]]:
    """Maximal runs of samples (inclusive index pairs) entering with a rate above ``threshold``.

    The rate between samples ``j`` and ``j+1`` is attributed to sample ``j+1``.
    """
    if not threshold > 0:
        raise ConfigInvalid("threshold must be > 0")
    hot = angular_rate(trace) > threshold
    intervals = []
    start = None
    for j, h in enumerate(hot):
        if h and start is None:
            start = j + 1
        elif not h and start is not None:
            intervals.append((start, j))
            start = None
    if start is not None:
        intervals.append((start, len(hot)))
    return intervals


def overlaps_labels(interval: tuple[int, int], labels: np.ndarray) -> bool:
    a, b = interval
    return bool(np.asarray(labels)[a:b + 1].any())


def max_rate_score(trace: SopTrace) -> float:
    return float(angular_rate(trace).max())


def auc(positive: Sequence[float], negative: Sequence[float]) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg), ties counted half."""
    pos = np.asarray(positive, dtype=float)
    neg = np.asarray(negative, dtype=float)
    ranks = rankdata(np.concatenate([pos, neg]))
    n1, n0 = len(pos), len(neg)
    u = ranks[:n1].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


TraceOrScore = Union[SopTrace, float]


def distinguishability(traces_with_event: Sequence[TraceOrScore],
                       traces_without_event: Sequence[TraceOrScore], min_per_class: int = 20) -> float:
    """AUC of the max-angular-rate classifier separating event traces from quiet ones."""
    if len(traces_with_event) < min_per_class or len(traces_without_event) < min_per_class:
        raise TooFewSamples(f"need at least {min_per_class} traces per class")

    def score(x):
        return max_rate_score(x) if isinstance(x, SopTrace) else float(x)

    return auc([score(x) for x in traces_with_event], [score(x) for x in traces_without_event])
