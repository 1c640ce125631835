"""Stochastic light-field models and their closed-form correlation functions.

All fields are complex amplitudes scaled so that ``|E|**2`` is the
instantaneous photon rate (photons/s at unit detector efficiency).

Primitive models
----------------
``Coherent``  constant modulus, Wiener phase diffusion, g1(tau) = exp(-|tau|/tau_c)
``Chaotic``   complex Ornstein-Uhlenbeck (Gaussian) field with the same g1

Composite models
----------------
``Mixture``   sqrt(rho) E_coh + sqrt(1 - rho) E_unc with independent parts
``TwoMode``   two independent phase-diffusing modes with a relative detuning
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "Coherent",
    "Chaotic",
    "Mixture",
    "TwoMode",
    "FieldModel",
    "FieldTrajectory",
    "sample_trajectory",
    "iter_field",
    "analytic_g1",
    "analytic_g2",
    "analytic_g2x_mixture_zero",
    "analytic_g2x_curve",
    "uncorrelated_with_g2",
    "coherence_times",
    "mean_intensity",
]

_REL_TOL = 1e-12


def _check_positive(name: str, value: float) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class Coherent:
    """Phase-diffusing coherent light.

    ``detuning`` (Hz) shifts the carrier relative to the simulation frame;
    it only matters when several coherent modes are superposed.
    """

    intensity: float
    tau_c: float
    detuning: float = 0.0

    def __post_init__(self):
        _check_positive("intensity", self.intensity)
        _check_positive("tau_c", self.tau_c)


@dataclass(frozen=True)
class Chaotic:
    """Thermal (Gaussian) light with a Lorentzian spectrum."""

    intensity: float
    tau_c: float

    def __post_init__(self):
        _check_positive("intensity", self.intensity)
        _check_positive("tau_c", self.tau_c)


@dataclass(frozen=True)
class Mixture:
    """Coherent fraction ``rho`` of the power plus an uncorrelated remainder.

    Both components must carry the same mean intensity; the weights alone
    set the power split.
    """

    rho: float
    coherent: "FieldModel"
    uncorrelated: "FieldModel"

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho!r}")
        i_coh = mean_intensity(self.coherent)
        i_unc = mean_intensity(self.uncorrelated)
        if abs(i_coh - i_unc) > _REL_TOL * max(i_coh, i_unc):
            raise ValueError(
                "mixture components must have equal mean intensity "
                f"({i_coh!r} != {i_unc!r})"
            )

    @property
    def intensity(self) -> float:
        return mean_intensity(self.coherent)


@dataclass(frozen=True)
class TwoMode:
    """Two mutually incoherent laser modes sharing the total power."""

    intensity: float
    r_alpha: float
    tau_alpha: float
    tau_beta: float
    detuning: float = 10e6
    r_beta: float | None = None

    def __post_init__(self):
        _check_positive("intensity", self.intensity)
        _check_positive("tau_alpha", self.tau_alpha)
        _check_positive("tau_beta", self.tau_beta)
        if not 0.0 <= self.r_alpha <= 1.0:
            raise ValueError(f"r_alpha must lie in [0, 1], got {self.r_alpha!r}")
        if self.r_beta is None:
            object.__setattr__(self, "r_beta", 1.0 - self.r_alpha)
        if not 0.0 <= self.r_beta <= 1.0:
            raise ValueError(f"r_beta must lie in [0, 1], got {self.r_beta!r}")
        if abs(self.r_alpha + self.r_beta - 1.0) > _REL_TOL:
            raise ValueError("r_alpha + r_beta must equal 1")

    @property
    def modes(self) -> tuple[Coherent, Coherent]:
        return (
            Coherent(self.intensity, self.tau_alpha),
            Coherent(self.intensity, self.tau_beta, self.detuning),
        )


FieldModel = Union[Coherent, Chaotic, Mixture, TwoMode]


def mean_intensity(model: FieldModel) -> float:
    if isinstance(model, (Coherent, Chaotic, TwoMode)):
        return model.intensity
    if isinstance(model, Mixture):
        return model.intensity
    raise TypeError(f"unknown field model {model!r}")


def coherence_times(model: FieldModel) -> list[float]:
    """Every coherence time appearing anywhere in ``model``."""
    if isinstance(model, (Coherent, Chaotic)):
        return [model.tau_c]
    if isinstance(model, Mixture):
        return coherence_times(model.coherent) + coherence_times(model.uncorrelated)
    if isinstance(model, TwoMode):
        return [model.tau_alpha, model.tau_beta]
    raise TypeError(f"unknown field model {model!r}")


def uncorrelated_with_g2(g2_zero: float, intensity: float, tau_c: float) -> FieldModel:
    """Uncorrelated field with a prescribed g2(0) in [1, 2].

    Built as an independent coherent part with power fraction ``c`` plus
    thermal light, for which g2(0) = 2 - c**2.
    """
    if not 1.0 <= g2_zero <= 2.0:
        raise ValueError(f"g2_zero must lie in [1, 2], got {g2_zero!r}")
    if g2_zero == 2.0:
        return Chaotic(intensity, tau_c)
    if g2_zero == 1.0:
        return Coherent(intensity, tau_c)
    c = math.sqrt(2.0 - g2_zero)
    return Mixture(c, Coherent(intensity, tau_c), Chaotic(intensity, tau_c))


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class FieldTrajectory:
    dt: float
    start: float
    samples: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(self.samples) < 2:
            raise ValueError("a trajectory needs at least two samples")

    @property
    def duration(self) -> float:
        return len(self.samples) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.start + self.dt * np.arange(len(self.samples))

    @property
    def intensity(self) -> np.ndarray:
        return self.samples.real**2 + self.samples.imag**2


def child_seed(seed: int, index: int) -> int:
    """Decorrelated integer seed derived from ``seed``."""
    state = np.random.SeedSequence([int(seed), int(index)]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


class _CoherentSource:
    def __init__(self, model: Coherent, dt: float, seed: int):
        self._rng = np.random.default_rng(seed)
        self._amp = math.sqrt(model.intensity)
        self._sigma = math.sqrt(2.0 * dt / model.tau_c)
        self._drift = 2.0 * math.pi * model.detuning * dt
        self._phase = None

    def next(self, n: int) -> np.ndarray:
        if self._phase is None:
            first = self._rng.uniform(0.0, 2.0 * math.pi)
            steps = self._sigma * self._rng.standard_normal(n - 1) + self._drift
            phase = np.cumsum(np.concatenate(([first], steps)))
        else:
            steps = self._sigma * self._rng.standard_normal(n) + self._drift
            phase = np.cumsum(np.concatenate(([self._phase], steps)))[1:]
        self._phase = phase[-1]
        return self._amp * np.exp(1j * phase)


class _ChaoticSource:
    # exact OU update: x[k] = a x[k-1] + b xi[k]
    def __init__(self, model: Chaotic, dt: float, seed: int):
        self._rng = np.random.default_rng(seed)
        self._a = math.exp(-dt / model.tau_c)
        self._b = math.sqrt(model.intensity * (1.0 - self._a**2))
        self._scale0 = math.sqrt(model.intensity)
        self._last = None

    def _noise(self, n: int) -> np.ndarray:
        q = self._rng.standard_normal((n, 2)) * math.sqrt(0.5)
        return q[:, 0] + 1j * q[:, 1]

    def next(self, n: int) -> np.ndarray:
        xi = self._noise(n)
        if self._last is None:
            x0 = self._scale0 * xi[0]
            if n == 1:
                out = np.array([x0])
            else:
                rest, _ = lfilter([self._b], [1.0, -self._a], xi[1:], zi=[self._a * x0])
                out = np.concatenate(([x0], rest))
        else:
            out, _ = lfilter([self._b], [1.0, -self._a], xi, zi=[self._a * self._last])
        self._last = out[-1]
        return out


class _SumSource:
    def __init__(self, parts):
        self._parts = [(math.sqrt(w), src) for w, src in parts if w > 0.0]

    def next(self, n: int) -> np.ndarray:
        (amp, src), *rest = self._parts
        out = src.next(n) if amp == 1.0 else amp * src.next(n)
        for amp, src in rest:
            out = out + amp * src.next(n)
        return out


def _build_source(model: FieldModel, dt: float, seed: int):
    if isinstance(model, Coherent):
        return _CoherentSource(model, dt, seed)
    if isinstance(model, Chaotic):
        return _ChaoticSource(model, dt, seed)
    if isinstance(model, Mixture):
        return _SumSource([
            (model.rho, _build_source(model.coherent, dt, seed)),
            (1.0 - model.rho, _build_source(model.uncorrelated, dt, child_seed(seed, 1))),
        ])
    if isinstance(model, TwoMode):
        alpha, beta = model.modes
        return _SumSource([
            (model.r_alpha, _CoherentSource(alpha, dt, seed)),
            (model.r_beta, _CoherentSource(beta, dt, child_seed(seed, 1))),
        ])
    raise TypeError(f"unknown field model {model!r}")


def _check_resolution(model: FieldModel, dt: float) -> None:
    _check_positive("dt", dt)
    tau_min = min(coherence_times(model))
    if dt > tau_min / 20.0:
        raise ValueError(
            f"dt={dt:g} s is too coarse for the shortest coherence time "
            f"{tau_min:g} s (need dt <= tau/20)"
        )


def iter_field(model: FieldModel, dt: float, seed: int, chunk: int = 1 << 20) -> Iterator[np.ndarray]:
    """Endless stream of field samples in blocks of ``chunk``.

    The concatenated output does not depend on ``chunk``.
    """
    _check_resolution(model, dt)
    source = _build_source(model, dt, seed)
    while True:
        yield source.next(chunk)


def sample_trajectory(model: FieldModel, duration: float, dt: float, seed: int,
                      start: float = 0.0) -> FieldTrajectory:
    _check_positive("duration", duration)
    _check_resolution(model, dt)
    n = int(round(duration / dt))
    if n < 10:
        raise ValueError("duration must cover at least 10 samples")
    samples = _build_source(model, dt, seed).next(n)
    return FieldTrajectory(dt=dt, start=start, samples=samples, seed=seed)


# ---------------------------------------------------------------------------
# analytic correlation functions
# ---------------------------------------------------------------------------

def analytic_g1(model: FieldModel, tau):
    """Normalized first-order correlation <E*(t) E(t+tau)> / I."""
    if not isinstance(model, (Coherent, Chaotic)):
        raise TypeError("analytic_g1 is defined for Coherent and Chaotic models only")
    tau = np.asarray(tau, dtype=float)
    g1 = np.exp(-np.abs(tau) / model.tau_c).astype(complex)
    if isinstance(model, Coherent) and model.detuning:
        g1 = g1 * np.exp(2j * np.pi * model.detuning * tau)
    return g1 if g1.ndim else complex(g1)


def analytic_g2x_mixture_zero(rho: float, g2_unc_0: float) -> float:
    """Zero-delay interferometric correlation of a coherent/uncorrelated mixture."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho!r}")
    if not g2_unc_0 >= 0.0:
        raise ValueError(f"g2_unc_0 must be non-negative, got {g2_unc_0!r}")
    return 2.0 * rho - 1.5 * rho**2 + 0.5 * (1.0 - rho) ** 2 * g2_unc_0


def _primitives(model: FieldModel, weight: float = 1.0) -> list[tuple[float, FieldModel]]:
    """Flatten a model into (power weight, primitive) pairs."""
    if isinstance(model, (Coherent, Chaotic)):
        return [(weight, model)]
    if isinstance(model, Mixture):
        return (_primitives(model.coherent, weight * model.rho)
                + _primitives(model.uncorrelated, weight * (1.0 - model.rho)))
    if isinstance(model, TwoMode):
        alpha, beta = model.modes
        return [(weight * model.r_alpha, alpha), (weight * model.r_beta, beta)]
    raise TypeError(f"unknown field model {model!r}")


def _g1_between(model, x, y):
    # <E*(x) E(y)> / I
    return analytic_g1(model, y - x)


def _moment_primitive(model, a, b, c, d):
    """<E*(a) E*(b) E(c) E(d)> / I**2 for one primitive field."""
    if isinstance(model, Chaotic):
        # Gaussian moment theorem
        return (_g1_between(model, a, c) * _g1_between(model, b, d)
                + _g1_between(model, a, d) * _g1_between(model, b, c))
    t = (a, b, c, d)
    coef = (-1.0, -1.0, 1.0, 1.0)
    var = np.zeros(np.broadcast(a, b, c, d).shape)
    for i in range(4):
        for j in range(4):
            if i != j:
                var = var - coef[i] * coef[j] * np.abs(t[i] - t[j])
    out = np.exp(-0.5 * var / model.tau_c).astype(complex)
    if model.detuning:
        out = out * np.exp(2j * np.pi * model.detuning * (-a - b + c + d))
    return out


def _moment(parts, a, b, c, d):
    total = 0.0
    for k, (wk, mk) in enumerate(parts):
        total = total + wk**2 * _moment_primitive(mk, a, b, c, d)
        for l, (wl, ml) in enumerate(parts):
            if l == k:
                continue
            total = total + wk * wl * (
                _g1_between(mk, a, c) * _g1_between(ml, b, d)
                + _g1_between(mk, a, d) * _g1_between(ml, b, c)
            )
    return total


def analytic_g2(model: FieldModel, tau):
    """Normalized second-order correlation g2(tau) of ``model``."""
    tau = np.asarray(tau, dtype=float)
    zero = np.zeros_like(tau)
    return np.real(_moment(_primitives(model), zero, tau, tau, zero))


def analytic_g2x_curve(model: FieldModel, tau_grid, delta: float) -> np.ndarray:
    """g2X(tau) behind an asymmetric interferometer with delay ``delta``.

    Sums the six leading four-point terms; contributions carrying a net
    field correlation across ``delta`` are dropped, which requires
    ``delta`` well beyond every coherence time.
    """
    tau_max = max(coherence_times(model))
    if not delta > 10.0 * tau_max:
        raise ValueError(
            f"delta={delta:g} s must exceed 10x the longest coherence time ({tau_max:g} s)"
        )
    parts = _primitives(model)
    t2 = np.asarray(tau_grid, dtype=float)
    t1 = np.zeros_like(t2)
    d = delta
    terms = (
        _moment(parts, t1, t2, t2, t1)
        + _moment(parts, t1 + d, t2 + d, t2 + d, t1 + d)
        + _moment(parts, t1 + d, t2, t2, t1 + d)
        + _moment(parts, t1, t2 + d, t2 + d, t1)
        - _moment(parts, t1 + d, t2, t2 + d, t1)
        - _moment(parts, t1, t2 + d, t2, t1 + d)
    )
    return np.real(terms) / 4.0
