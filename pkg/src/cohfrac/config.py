"""Scenario files: one YAML document per simulated measurement.

Every key has a default taken from a typical apparatus (900 ns delay,
2 ns time tagging, 2 ns bins, +-2 us histogram). Validation errors carry the
file name and line of the offending key.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .lightfield import (Chaotic, Coherent, FieldModel, Mixture, TwoMode, child_seed,
                         coherence_times, uncorrelated_with_g2)
from .optics import DetectorConfig, InterferometerConfig

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "DEFAULTS", "SWEEP_AXES"]

DEFAULTS = {
    "source": {
        "model": "coherent",
        "rate": 1.0e5,
        "tau_c": 300e-9,
        "rho": 1.0,
        "g2_unc": 2.0,
        "tau_unc": None,
        "r_alpha": 0.5,
        "tau_beta": None,
        "detuning": 10e6,
    },
    "interferometer": {"delta": 900e-9, "visibility": 1.0, "splitting": 0.5},
    "detector": {"efficiency": 1.0, "resolution": 2e-9, "dead_time": 0.0,
                 "dark_rate": 0.0, "jitter": 0.0},
    "detector_a": {},
    "detector_b": {},
    "duration": 10.0,
    "dt": 10e-9,
    "seed": 1,
    "correlator": {"bin_width": 2e-9, "window": 2e-6},
    "fit": {"exclude_delta": True, "confidence": 0.9, "method": "quadrature"},
}

MODELS = ("coherent", "chaotic", "mixture", "two_mode")
SWEEP_AXES = {"rho": "source.rho", "r_alpha": "source.r_alpha",
              "tau_c": "source.tau_c", "rate": "source.rate"}


class ConfigError(ValueError):
    pass


def _key_lines(node, prefix="", out=None) -> dict[str, int]:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            _key_lines(v, path, out)
    return out


@dataclass
class ScenarioConfig:
    data: dict
    source_name: str = "<config>"
    lines: dict = field(default_factory=dict, repr=False)

    # -- helpers -----------------------------------------------------------
    def _err(self, key: str, msg: str) -> ConfigError:
        line = self.lines.get(key)
        where = f"{self.source_name}:{line}" if line else self.source_name
        return ConfigError(f"{where}: {key}: {msg}")

    def get(self, key: str):
        node = self.data
        for part in key.split("."):
            node = node[part]
        return node

    def set(self, key: str, value) -> "ScenarioConfig":
        new = copy.deepcopy(self)
        node = new.data
        *head, last = key.split(".")
        for part in head:
            node = node[part]
        node[last] = value
        new.validate()
        return new

    def number(self, key: str, *, positive=False, nonneg=False, lo=None, hi=None) -> float:
        raw = self.get(key)
        try:
            val = float(raw)
        except (TypeError, ValueError):
            raise self._err(key, f"expected a number, got {raw!r}") from None
        if not math.isfinite(val):
            raise self._err(key, "must be finite")
        if positive and not val > 0:
            raise self._err(key, f"must be positive, got {val:g}")
        if nonneg and val < 0:
            raise self._err(key, f"must be non-negative, got {val:g}")
        if lo is not None and val < lo or hi is not None and val > hi:
            raise self._err(key, f"must lie in [{lo}, {hi}], got {val:g}")
        return val

    # -- derived objects ---------------------------------------------------
    @property
    def seed(self) -> int:
        return int(self.get("seed"))

    @property
    def duration(self) -> float:
        return self.number("duration", positive=True)

    @property
    def dt(self) -> float:
        return self.number("dt", positive=True)

    def field_model(self) -> FieldModel:
        kind = self.get("source.model")
        rate = self.number("source.rate", positive=True)
        tau = self.number("source.tau_c", positive=True)
        try:
            if kind == "coherent":
                return Coherent(rate, tau)
            if kind == "chaotic":
                return Chaotic(rate, tau)
            if kind == "mixture":
                rho = self.number("source.rho", lo=0.0, hi=1.0)
                g2 = self.number("source.g2_unc", lo=1.0, hi=2.0)
                tau_u = self.get("source.tau_unc")
                tau_u = tau if tau_u is None else self.number("source.tau_unc", positive=True)
                return Mixture(rho, Coherent(rate, tau), uncorrelated_with_g2(g2, rate, tau_u))
            if kind == "two_mode":
                r = self.number("source.r_alpha", lo=0.0, hi=1.0)
                tau_b = self.get("source.tau_beta")
                tau_b = tau if tau_b is None else self.number("source.tau_beta", positive=True)
                det = self.number("source.detuning")
                return TwoMode(rate, r, tau, tau_b, det)
        except ValueError as exc:
            raise self._err("source", str(exc)) from None
        raise self._err("source.model", f"unknown model {kind!r}; choose one of {', '.join(MODELS)}")

    def interferometer(self) -> InterferometerConfig:
        return InterferometerConfig(
            delta=self.number("interferometer.delta", positive=True),
            splitting=self.number("interferometer.splitting", lo=0.0, hi=1.0),
            visibility=self.number("interferometer.visibility", lo=0.0, hi=1.0),
        )

    def detector(self, channel: str) -> DetectorConfig:
        merged = dict(self.get("detector"))
        merged.update(self.get(f"detector_{channel.lower()}") or {})
        index = {"A": 10, "B": 11}[channel]
        try:
            return DetectorConfig(seed=child_seed(self.seed, index),
                                  **{k: float(v) for k, v in merged.items()})
        except (TypeError, ValueError) as exc:
            raise self._err(f"detector_{channel.lower()}", str(exc)) from None

    @property
    def bin_width(self) -> float:
        return self.number("correlator.bin_width", positive=True)

    @property
    def window(self) -> float:
        return self.number("correlator.window", positive=True)

    @property
    def confidence(self) -> float:
        c = self.number("fit.confidence")
        if not 0 < c < 1:
            raise self._err("fit.confidence", "must lie strictly between 0 and 1")
        return c

    def validate(self) -> None:
        model = self.field_model()
        mzi = self.interferometer()
        det = [self.detector(ch) for ch in "AB"]
        try:
            int(self.get("seed"))
        except (TypeError, ValueError):
            raise self._err("seed", "must be an integer") from None
        if self.duration <= mzi.delta:
            raise self._err("duration", "integration time must exceed the interferometer delay")
        if self.dt > min(coherence_times(model)) / 20:
            raise self._err("dt", "sample period must be at most 1/20 of the shortest coherence time")
        if self.bin_width < det[0].resolution * (1 - 1e-12):
            raise self._err("correlator.bin_width", "bin width below the timestamp resolution")
        if self.window < 10 * self.bin_width * (1 - 1e-12):
            raise self._err("correlator.window", "window must span at least 10 bins")
        if self.get("fit.method") not in ("quadrature", "monte-carlo"):
            raise self._err("fit.method", "must be 'quadrature' or 'monte-carlo'")
        self.confidence


def _merge(defaults: dict, given: dict, lines: dict, name: str, prefix: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in defaults:
            line = lines.get(path)
            where = f"{name}:{line}" if line else name
            raise ConfigError(f"{where}: unknown key {path!r}")
        if isinstance(defaults[key], dict) and defaults[key]:
            if not isinstance(value, dict):
                raise ConfigError(f"{name}:{lines.get(path, '?')}: {path}: expected a mapping")
            out[key] = _merge(defaults[key], value, lines, name, path)
        elif isinstance(defaults[key], dict):
            # per-channel detector overrides
            if not isinstance(value, dict):
                raise ConfigError(f"{name}:{lines.get(path, '?')}: {path}: expected a mapping")
            for sub in value:
                if sub not in DEFAULTS["detector"]:
                    raise ConfigError(
                        f"{name}:{lines.get(f'{path}.{sub}', '?')}: unknown key '{path}.{sub}'")
            out[key] = dict(value)
        else:
            out[key] = value
    return out


def parse_config(text: str, name: str = "<config>") -> ScenarioConfig:
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{name}{line}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: top level must be a mapping")
    lines = _key_lines(node) if node is not None else {}
    cfg = ScenarioConfig(_merge(DEFAULTS, raw, lines, name), name, lines)
    cfg.validate()
    return cfg


def load_config(path=None) -> ScenarioConfig:
    if path is None:
        cfg = ScenarioConfig(copy.deepcopy(DEFAULTS))
        cfg.validate()
        return cfg
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))
