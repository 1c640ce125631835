"""Asymmetric Mach-Zehnder interferometer and photodetection.

Detection is a doubly-stochastic Poisson process: the rate
``efficiency * |E|**2 + dark_rate`` is held constant over each field sample,
the number of events in a sample is Poisson distributed, and events are
placed uniformly inside it before quantization to the time-tagger
resolution.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .lightfield import FieldModel, FieldTrajectory, child_seed, iter_field

__all__ = [
    "InterferometerConfig",
    "DetectorConfig",
    "TimestampStream",
    "mzi_transform",
    "detect",
    "simulate_streams",
    "write_pts",
    "read_pts",
]

PTS_MAGIC = b"PTS1"
_HEADER = struct.Struct("<4sQQQ")


@dataclass(frozen=True)
class InterferometerConfig:
    delta: float = 900e-9
    splitting: float = 0.5
    visibility: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0.0 < self.splitting < 1.0:
            raise ValueError("splitting ratio must lie in (0, 1)")
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError("visibility must lie in [0, 1]")


@dataclass(frozen=True)
class DetectorConfig:
    efficiency: float = 1.0
    resolution: float = 2e-9
    dead_time: float = 0.0
    dark_rate: float = 0.0
    seed: int = 0
    jitter: float = 0.0  # rms Gaussian timing jitter (s), off by default

    def __post_init__(self):
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in (0, 1]")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if self.dead_time < 0:
            raise ValueError("dead time must be non-negative")
        if self.dark_rate < 0:
            raise ValueError("dark-count rate must be non-negative")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")

    @property
    def dead_ticks(self) -> int:
        return math.ceil(self.dead_time / self.resolution - 1e-9) if self.dead_time else 0


@dataclass
class TimestampStream:
    """Sorted event ticks of one detector channel."""

    channel: str
    ticks: np.ndarray
    resolution: float
    T: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.ticks = np.ascontiguousarray(self.ticks, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.ticks)

    @property
    def n_ticks(self) -> int:
        return math.ceil(self.T / self.resolution - 1e-9)

    @property
    def rate(self) -> float:
        return len(self.ticks) / self.T

    @property
    def times(self) -> np.ndarray:
        return self.ticks * self.resolution

    def validate(self) -> None:
        if len(self.ticks) and (self.ticks[0] < 0 or self.ticks[-1] >= self.n_ticks):
            raise ValueError("event ticks fall outside [0, T)")
        if np.any(np.diff(self.ticks) < 0):
            raise ValueError("event ticks are not sorted")


# ---------------------------------------------------------------------------
# interferometer
# ---------------------------------------------------------------------------

def _delay_samples(delta: float, dt: float) -> int:
    shift = int(round(delta / dt))
    if shift < 1:
        raise ValueError(f"delta={delta:g} s is shorter than half a sample (dt={dt:g} s)")
    return shift


def _combine(early: np.ndarray, late: np.ndarray, cfg: InterferometerConfig):
    s = math.sqrt(cfg.splitting)
    c = math.sqrt(1.0 - cfg.splitting)
    v = cfg.visibility
    return s * early + (v * c) * late, c * early - (v * s) * late


def mzi_transform(field_in: FieldTrajectory, cfg: InterferometerConfig):
    """Output fields (A, B) of the interferometer over the overlap window.

    E_A(t) = (E(t) + V E(t+delta)) / sqrt(2) and E_B(t) = (E(t) - V E(t+delta)) / sqrt(2)
    for a balanced splitter; ``delta`` is rounded to the sample grid.
    """
    shift = _delay_samples(cfg.delta, field_in.dt)
    if shift >= len(field_in.samples) - 1:
        raise ValueError("trajectory is shorter than the interferometer delay")
    e = field_in.samples
    a, b = _combine(e[:-shift], e[shift:], cfg)
    mk = lambda x: FieldTrajectory(field_in.dt, field_in.start, x, field_in.seed)
    return mk(a), mk(b)


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------

@njit(cache=True)
def _apply_dead_time(ticks, gap, last):
    keep = np.empty(len(ticks), dtype=np.bool_)
    for i in range(len(ticks)):
        if ticks[i] - last >= gap:
            keep[i] = True
            last = ticks[i]
        else:
            keep[i] = False
    return keep, last


class _Detector:
    """Incremental photodetector; feed intensity blocks in time order."""

    def __init__(self, cfg: DetectorConfig, dt: float, T: float):
        self.cfg = cfg
        self.dt = dt
        self.T = T
        self.n_samples = math.ceil(T / dt - 1e-9)
        self.n_ticks = math.ceil(T / cfg.resolution - 1e-9)
        self._count_rng = np.random.default_rng(child_seed(cfg.seed, 0))
        self._place_rng = np.random.default_rng(child_seed(cfg.seed, 1))
        self._jitter_rng = np.random.default_rng(child_seed(cfg.seed, 2))
        self._pos = 0
        self._last = np.iinfo(np.int64).min // 2
        self._blocks: list[np.ndarray] = []

    @property
    def done(self) -> bool:
        return self._pos >= self.n_samples

    def feed(self, intensity: np.ndarray) -> None:
        n = min(len(intensity), self.n_samples - self._pos)
        if n <= 0:
            return
        intensity = intensity[:n]
        if np.any(intensity < 0):
            raise ValueError("intensity samples must be non-negative")
        lam = (self.cfg.efficiency * self.dt) * intensity + self.cfg.dark_rate * self.dt
        counts = self._count_rng.poisson(lam)
        idx = np.repeat(np.arange(self._pos, self._pos + n, dtype=np.int64), counts)
        t = (idx + self._place_rng.random(len(idx))) * self.dt
        if self.cfg.jitter > 0:
            t = t + self.cfg.jitter * self._jitter_rng.standard_normal(len(t))
        ticks = np.floor(t / self.cfg.resolution).astype(np.int64)
        ticks.sort()
        if self.cfg.jitter == 0 and self.cfg.dead_ticks:
            keep, self._last = _apply_dead_time(ticks, self.cfg.dead_ticks, self._last)
            ticks = ticks[keep]
        self._blocks.append(ticks)
        self._pos += n

    def result(self, channel: str) -> TimestampStream:
        if not self.done:
            raise ValueError("intensity record is shorter than the integration time T")
        ticks = np.concatenate(self._blocks) if self._blocks else np.empty(0, np.int64)
        if self.cfg.jitter > 0:
            ticks.sort()
            if self.cfg.dead_ticks:
                keep, _ = _apply_dead_time(ticks, self.cfg.dead_ticks, self._last)
                ticks = ticks[keep]
        ticks = ticks[(ticks >= 0) & (ticks < self.n_ticks)]
        return TimestampStream(channel, ticks, self.cfg.resolution, self.T)


def detect(intensity: np.ndarray, dt: float, cfg: DetectorConfig, T: float | None = None,
           channel: str = "A") -> TimestampStream:
    """Photodetection events for a sampled intensity record starting at t=0."""
    intensity = np.asarray(intensity, dtype=float)
    if T is None:
        T = len(intensity) * dt
    if not T > 0:
        raise ValueError("integration time must be positive")
    if T > len(intensity) * dt * (1 + 1e-12):
        raise ValueError("integration time exceeds the intensity record")
    det = _Detector(cfg, dt, T)
    det.feed(intensity)
    return det.result(channel)


def simulate_streams(model: FieldModel, mzi: InterferometerConfig, det_a: DetectorConfig,
                     det_b: DetectorConfig, T: float, dt: float, seed: int,
                     chunk: int = 1 << 20) -> tuple[TimestampStream, TimestampStream]:
    """Record both interferometer outputs for a source of the given model.

    The model intensity is the photon flux entering the interferometer; the
    input coupler sends half of it into each arm, so each output carries half
    of the input flux on average.
    """
    if not T > 0:
        raise ValueError("integration time must be positive")
    shift = _delay_samples(mzi.delta, dt)
    source = iter_field(model, dt, seed, chunk)
    gen = _Detector(det_a, dt, T), _Detector(det_b, dt, T)
    amp = math.sqrt(0.5)
    tail = None
    while not gen[0].done:
        block = amp * next(source)
        if tail is None:
            while len(block) <= shift:
                block = np.concatenate((block, amp * next(source)))
        else:
            block = np.concatenate((tail, block))
        ea, eb = _combine(block[:-shift], block[shift:], mzi)
        tail = block[-shift:]
        gen[0].feed(ea.real**2 + ea.imag**2)
        gen[1].feed(eb.real**2 + eb.imag**2)
    return gen[0].result("A"), gen[1].result("B")


# ---------------------------------------------------------------------------
# PTS1 files
# ---------------------------------------------------------------------------

def _to_ps(seconds: float) -> int:
    return int(round(seconds * 1e12))


def write_pts(path, stream: TimestampStream) -> None:
    """Little-endian: magic, resolution [ps], T [ps], count, then uint64 ticks."""
    ticks = np.asarray(stream.ticks)
    if len(ticks) and ticks[0] < 0:
        raise ValueError("negative ticks cannot be stored")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(PTS_MAGIC, _to_ps(stream.resolution), _to_ps(stream.T), len(ticks)))
        fh.write(ticks.astype("<u8").tobytes())


def read_pts(path, channel: str | None = None) -> TimestampStream:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated PTS1 header")
        magic, res_ps, t_ps, count = _HEADER.unpack(head)
        if magic != PTS_MAGIC:
            raise ValueError(f"{path}: not a PTS1 file (magic {magic!r})")
        body = np.frombuffer(fh.read(), dtype="<u8")
    if len(body) != count:
        raise ValueError(f"{path}: header declares {count} events, found {len(body)}")
    if res_ps == 0:
        raise ValueError(f"{path}: zero resolution")
    if channel is None:
        channel = path.stem
    return TimestampStream(channel, body.astype(np.int64), res_ps * 1e-12, t_ps * 1e-12)
