"""Pair-time-difference histograms between timestamp streams.

Bins are centred on multiples of the bin width ``w`` and are left-closed,
so the histogram spans ``[-(K + 1/2) w, (K + 1/2) w)`` with ``K = floor(W / w)``.
All arithmetic is done on integer ticks (doubled to keep half-bin edges
integral), which makes the counts exact.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .optics import TimestampStream

__all__ = ["CorrelationHistogram", "cross_correlate", "autocorrelate", "pair_counts"]

log = logging.getLogger(__name__)


@njit(nogil=True, cache=True)
def _pair_hist(a, b, i0, i1, half2, w2, nbins, skip_self):
    """Histogram of 2*(b_j - a_i) for a[i0:i1] against all of b.

    A pair is counted when -half2 <= 2 (b - a) < half2; its bin index is
    (2 (b - a) + half2) // w2.
    """
    out = np.zeros(nbins, dtype=np.int64)
    nb = len(b)
    if i0 >= i1:
        return out
    # first j with 2 (b_j - a_i0) >= -half2
    lo, hi = 0, nb
    target = a[i0]
    while lo < hi:
        mid = (lo + hi) // 2
        if 2 * (b[mid] - target) < -half2:
            lo = mid + 1
        else:
            hi = mid
    j0 = lo
    for i in range(i0, i1):
        ai = a[i]
        while j0 < nb and 2 * (b[j0] - ai) < -half2:
            j0 += 1
        j = j0
        while j < nb:
            d2 = 2 * (b[j] - ai)
            if d2 >= half2:
                break
            if not (skip_self and j == i):
                out[(d2 + half2) // w2] += 1
            j += 1
    return out


@dataclass
class CorrelationHistogram:
    bin_width: float
    half_window: float
    centers: np.ndarray
    counts: np.ndarray
    rate_a: float
    rate_b: float
    T: float

    @property
    def norm(self) -> float:
        return self.rate_a * self.rate_b * self.T * self.bin_width

    @property
    def g(self) -> np.ndarray:
        return self.counts / self.norm

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.counts, 1)) / self.norm

    def __len__(self) -> int:
        return len(self.counts)

    def value_at(self, tau: float) -> float:
        i = int(np.argmin(np.abs(self.centers - tau)))
        return float(self.g[i])

    def write(self, path) -> None:
        """Comma-separated: one row per bin, preceded by a header of run constants."""
        header = (
            f"r_A={self.rate_a!r} r_B={self.rate_b!r} T={self.T!r} "
            f"w={self.bin_width!r} W={self.half_window!r}\n"
            "tau_s,count,g,sigma"
        )
        cols = np.column_stack((self.centers, self.counts, self.g, self.sigma))
        np.savetxt(path, cols, delimiter=",", header=header,
                   fmt=["%.12e", "%d", "%.12e", "%.12e"])

    @classmethod
    def read(cls, path) -> "CorrelationHistogram":
        path = Path(path)
        with open(path) as fh:
            first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing histogram header")
        try:
            meta = dict(item.split("=", 1) for item in first.lstrip("# ").split())
            vals = {k: float(meta[k]) for k in ("r_A", "r_B", "T", "w", "W")}
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}: malformed histogram header") from exc
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        return cls(
            bin_width=vals["w"],
            half_window=vals["W"],
            centers=data[:, 0],
            counts=data[:, 1].astype(np.int64),
            rate_a=vals["r_A"],
            rate_b=vals["r_B"],
            T=vals["T"],
        )


def _bin_layout(resolution: float, w: float, W: float) -> tuple[int, int]:
    w_ticks = w / resolution
    wt = int(round(w_ticks))
    if wt < 1:
        raise ValueError(f"bin width {w:g} s is below the timestamp resolution {resolution:g} s")
    if abs(w_ticks - wt) > 1e-6 * wt:
        raise ValueError("bin width must be an integer multiple of the timestamp resolution")
    if W < 10 * w * (1 - 1e-12):
        raise ValueError("window half-extent must be at least 10 bin widths")
    K = int(math.floor(W / w + 1e-9))
    return wt, K


def pair_counts(a: np.ndarray, b: np.ndarray, w_ticks: int, K: int,
                skip_self: bool = False, threads: int = 1, segments: int | None = None) -> np.ndarray:
    """Raw pair-difference counts over 2K+1 bins of ``w_ticks`` ticks.

    ``a`` is split into ``segments`` contiguous pieces (default: one per
    thread); the summed result does not depend on the split.
    """
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    nbins = 2 * K + 1
    half2 = nbins * w_ticks
    w2 = 2 * w_ticks
    threads = max(1, int(threads))
    segments = threads if segments is None else max(1, int(segments))
    edges = np.linspace(0, len(a), segments + 1).astype(np.int64)
    jobs = [(int(edges[k]), int(edges[k + 1])) for k in range(segments)]
    if threads == 1:
        parts = [_pair_hist(a, b, i0, i1, half2, w2, nbins, skip_self) for i0, i1 in jobs]
    else:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(
                lambda job: _pair_hist(a, b, job[0], job[1], half2, w2, nbins, skip_self), jobs))
    return np.sum(parts, axis=0, dtype=np.int64)


def _check_streams(a: TimestampStream, b: TimestampStream) -> None:
    if len(a) == 0 or len(b) == 0:
        raise ValueError("cannot correlate an empty stream")
    if abs(a.resolution - b.resolution) > 1e-12 * a.resolution:
        raise ValueError(
            f"timestamp resolutions differ ({a.resolution:g} s vs {b.resolution:g} s)"
        )


def _histogram(a: TimestampStream, b: TimestampStream, w: float, W: float,
               skip_self: bool, threads: int) -> CorrelationHistogram:
    wt, K = _bin_layout(a.resolution, w, W)
    T = a.T
    if abs(a.T - b.T) > 1e-9 * a.T:
        log.warning("integration times differ (%g s vs %g s); using the shorter", a.T, b.T)
        T = min(a.T, b.T)
    if W > T / 1000:
        log.warning("window %g s is not small against T=%g s; edge losses bias g", W, T)
    counts = pair_counts(a.ticks, b.ticks, wt, K, skip_self=skip_self, threads=threads)
    w_s = wt * a.resolution
    centers = np.arange(-K, K + 1) * w_s
    return CorrelationHistogram(
        bin_width=w_s,
        half_window=(K + 0.5) * w_s,
        centers=centers,
        counts=counts,
        rate_a=len(a) / T,
        rate_b=len(b) / T,
        T=T,
    )


def cross_correlate(a: TimestampStream, b: TimestampStream, w: float = 2e-9,
                    W: float = 2e-6, threads: int = 1) -> CorrelationHistogram:
    """Normalized histogram of t_b - t_a for all pairs within the window."""
    _check_streams(a, b)
    return _histogram(a, b, w, W, skip_self=False, threads=threads)


def autocorrelate(a: TimestampStream, w: float = 2e-9, W: float = 2e-6,
                  threads: int = 1) -> CorrelationHistogram:
    """Like ``cross_correlate(a, a)`` but without pairing an event with itself."""
    _check_streams(a, a)
    return _histogram(a, a, w, W, skip_self=True, threads=threads)
