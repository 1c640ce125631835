"""Glue between scenario files and the simulate/correlate/analyze chain."""
from __future__ import annotations

import math

import numpy as np

from .config import SWEEP_AXES, ScenarioConfig
from .correlator import CorrelationHistogram, cross_correlate
from .inference import DipFit, FitError, NonPhysicalError, RhoBounds, fit_dip, propagate_bounds
from .optics import TimestampStream, simulate_streams

__all__ = ["simulate", "analyze", "result_record", "run_point", "sweep", "SWEEP_COLUMNS"]


def simulate(cfg: ScenarioConfig, seed: int | None = None) -> tuple[TimestampStream, TimestampStream]:
    if seed is not None:
        cfg = cfg.set("seed", int(seed))
    return simulate_streams(
        cfg.field_model(), cfg.interferometer(), cfg.detector("A"), cfg.detector("B"),
        cfg.duration, cfg.dt, cfg.seed,
    )


def analyze(h: CorrelationHistogram, delta: float | None = None, confidence: float = 0.9,
            method: str = "quadrature", seed: int | None = 0) -> tuple[DipFit, RhoBounds]:
    fit = fit_dip(h, delta=delta)
    bounds = propagate_bounds(fit, confidence, method=method, seed=seed)
    return fit, bounds


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


def result_record(fit: DipFit, bounds: RhoBounds | None) -> dict:
    rec = {
        "A": _finite(fit.A),
        "sigma_A": _finite(fit.sigma_A),
        "tau_c": _finite(fit.tau_c),
        "sigma_tau": _finite(fit.sigma_tau),
        "chi2_red": _finite(fit.chi2_red),
        "g2x0": _finite(fit.g2x0),
        "degenerate": fit.degenerate,
    }
    if bounds is not None:
        for name in ("upper", "lower"):
            b = getattr(bounds, name)
            rec[f"rho_{name}"] = {"mean": b.mean, "ci_lo": b.ci_lo, "ci_hi": b.ci_hi}
        rec.update(method=bounds.method, samples=bounds.samples,
                   confidence=bounds.confidence, seed=bounds.seed)
    return rec


def run_point(cfg: ScenarioConfig, threads: int = 1) -> tuple[CorrelationHistogram, DipFit, RhoBounds]:
    a, b = simulate(cfg)
    h = cross_correlate(a, b, cfg.bin_width, cfg.window, threads=threads)
    delta = cfg.interferometer().delta if cfg.get("fit.exclude_delta") else None
    fit, bounds = analyze(h, delta, cfg.confidence, cfg.get("fit.method"), cfg.seed)
    return h, fit, bounds


SWEEP_COLUMNS = ("value", "status", "A", "sigma_A", "tau_c", "g2x0",
                 "upper_mean", "upper_ci_lo", "upper_ci_hi",
                 "lower_mean", "lower_ci_lo", "lower_ci_hi")


def sweep(cfg: ScenarioConfig, axis: str, values, threads: int = 1) -> list[dict]:
    """One result row per axis value; failed points keep their status and NaN bounds."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose one of {', '.join(SWEEP_AXES)}")
    key = SWEEP_AXES[axis]
    if axis == "rho" and cfg.get("source.model") != "mixture":
        raise ValueError("a rho sweep needs source.model: mixture")
    if axis == "r_alpha" and cfg.get("source.model") != "two_mode":
        raise ValueError("an r_alpha sweep needs source.model: two_mode")
    rows = []
    for v in values:
        point = cfg.set(key, float(v))
        row = dict.fromkeys(SWEEP_COLUMNS, math.nan)
        row["value"] = float(v)
        a, b = simulate(point)
        h = cross_correlate(a, b, point.bin_width, point.window, threads=threads)
        delta = point.interferometer().delta if point.get("fit.exclude_delta") else None
        try:
            fit = fit_dip(h, delta=delta)
        except FitError:
            row["status"] = "fit-error"
            rows.append(row)
            continue
        row.update(A=fit.A, sigma_A=fit.sigma_A, tau_c=fit.tau_c, g2x0=fit.g2x0)
        try:
            bounds = propagate_bounds(fit, point.confidence, method=point.get("fit.method"),
                                      seed=point.seed)
        except NonPhysicalError:
            row["status"] = "non-physical"
            rows.append(row)
            continue
        row["status"] = "ok"
        for name in ("upper", "lower"):
            s = getattr(bounds, name)
            row[f"{name}_mean"], row[f"{name}_ci_lo"], row[f"{name}_ci_hi"] = s.mean, s.ci_lo, s.ci_hi
        rows.append(row)
    return rows
