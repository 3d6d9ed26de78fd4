"""Flat ``section.key = value`` run configuration with validated defaults."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .model import ExperimentParams
from .synth import SynthOptions


class ConfigError(ValueError):
    """Invalid configuration: unknown key, bad value, or failed validation."""


# config key -> ExperimentParams field
_PARAM_KEYS = {
    "optics.initial_squeezing_db": "initial_squeezing_db",
    "optics.eta_wg": "eta_wg",
    "optics.eta_s": "eta_s",
    "optics.tap_reflectivity": "tap_reflectivity",
    "optics.eta_t": "eta_t",
    "optics.eta_pd": "eta_pd",
    "optics.eta_el": "eta_el",
    "herald.rate_hz": "herald_rate_hz",
    "herald.dark_rate_hz": "dark_rate_hz",
    "herald.filter_gamma_over_pi_hz": "filter_gamma_over_pi_hz",
    "acquisition.hd_bandwidth_hz": "hd_bandwidth_hz",
    "acquisition.sample_rate_hz": "sample_rate_hz",
    "acquisition.trace_duration_s": "trace_duration_s",
    "acquisition.phase_ramp_rad_per_s": "phase_ramp_rad_per_s",
    "acquisition.n_traces": "n_traces",
    "model.fock_dim": "fock_dim",
}

_SYNTH_KEYS = {
    "synth.n_calibration": "n_calibration",
    "synth.raw_gain": "raw_gain",
    "synth.initial_phase_rad": "initial_phase_rad",
}

_DEFAULTS = ExperimentParams()
_SYNTH_DEFAULTS = SynthOptions()


def _knob_defaults() -> dict:
    return {
        # empty means dark_rate / herald_rate
        "herald.false_herald_fraction": None,
        "analysis.window_start_s": -250e-9,
        "analysis.window_end_s": 0.0,
        "analysis.decimation": 8,
        "analysis.guard_s": 150e-9,
        "analysis.phase_bins": 36,
        "analysis.bootstrap": 200,
        "analysis.theta0_rad": 0.0,
        "analysis.smoothing": 10,
        "tomo.dim": 20,
        "tomo.iterations": 200,
        "tomo.eta_correction": "none",
        "tomo.phase_bins": 64,
        "tomo.bin_width": 0.1 * 0.5**0.5,
        "tomo.bootstrap": 0,
        "report.grid_half_width": 5.0,
        "report.grid_points": 201,
        "report.projection": True,
        "report.projection_eta_wg": 0.97,
        "run.seed": _DEFAULTS.rng_seed,
        "run.out": "out",
    }


def default_values() -> dict:
    values = {key: getattr(_DEFAULTS, attr) for key, attr in _PARAM_KEYS.items()}
    values.update({key: getattr(_SYNTH_DEFAULTS, attr) for key, attr in _SYNTH_KEYS.items()})
    values.update(_knob_defaults())
    return values


def _coerce(key: str, raw: str, default):
    text = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return lowered in ("true", "1", "yes")
        if isinstance(default, int):
            as_float = float(text)
            if not as_float.is_integer():
                raise ValueError(text)
            return int(as_float)
        if isinstance(default, float) or default is None:
            if default is None and text == "":
                return None
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw.strip()!r} as {type(default).__name__}") from None


@dataclass
class RunConfig:
    """All run settings, keyed by their dotted config names."""

    values: dict = field(default_factory=default_values)

    def __post_init__(self):
        unknown = set(self.values) - set(default_values())
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        self.validate()

    def __getitem__(self, key: str):
        return self.values[key]

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "RunConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        defaults = default_values()
        values = dict(defaults)
        seen = set()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in defaults:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            if key in seen:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
            seen.add(key)
            values[key] = _coerce(key, raw, defaults[key])
        return cls(values)

    @classmethod
    def load(cls, path: Path | None) -> "RunConfig":
        if path is None:
            return cls()
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.parse(text, str(path))

    def override(self, **changes) -> "RunConfig":
        values = dict(self.values)
        values.update(changes)
        return RunConfig(values)

    def experiment_params(self) -> ExperimentParams:
        kwargs = {attr: self.values[key] for key, attr in _PARAM_KEYS.items()}
        fraction = self.values["herald.false_herald_fraction"]
        if fraction is None:
            rate, dark = kwargs["herald_rate_hz"], kwargs["dark_rate_hz"]
            fraction = min(1.0, dark / rate) if rate > 0 else 1.0
        kwargs["false_herald_fraction"] = fraction
        kwargs["rng_seed"] = self.values["run.seed"]
        try:
            return ExperimentParams(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def synth_options(self) -> SynthOptions:
        return dataclasses.replace(
            SynthOptions(), **{attr: self.values[key] for key, attr in _SYNTH_KEYS.items()}
        )

    def tomo_eta(self, params: ExperimentParams | None = None) -> float:
        params = params or self.experiment_params()
        return params.eta_hd if self.values["tomo.eta_correction"] == "hd" else 1.0

    def validate(self) -> None:
        v = self.values
        self.experiment_params()
        if v["synth.n_calibration"] < 100:
            raise ConfigError("synth.n_calibration must be at least 100")
        if v["synth.raw_gain"] <= 0:
            raise ConfigError("synth.raw_gain must be positive")
        if v["analysis.window_start_s"] >= v["analysis.window_end_s"]:
            raise ConfigError("analysis window must have start < end")
        for key in ("analysis.decimation", "analysis.phase_bins", "analysis.smoothing", "tomo.phase_bins",
                    "tomo.iterations", "report.grid_points"):
            if v[key] < 1:
                raise ConfigError(f"{key} must be positive")
        for key in ("analysis.bootstrap", "tomo.bootstrap", "run.seed"):
            if v[key] < 0:
                raise ConfigError(f"{key} must be non-negative")
        if v["analysis.guard_s"] < 0:
            raise ConfigError("analysis.guard_s must be non-negative")
        if v["tomo.dim"] < 2:
            raise ConfigError("tomo.dim must be at least 2")
        if v["tomo.eta_correction"] not in ("none", "hd"):
            raise ConfigError("tomo.eta_correction must be 'none' or 'hd'")
        if v["tomo.bin_width"] <= 0 or v["report.grid_half_width"] <= 0:
            raise ConfigError("bin and grid widths must be positive")
        if not 0.0 < v["report.projection_eta_wg"] <= 1.0:
            raise ConfigError("report.projection_eta_wg must be in (0, 1]")

    def to_text(self) -> str:
        lines = []
        for key in sorted(self.values):
            value = self.values[key]
            lines.append(f"{key} = {'' if value is None else value}")
        return "\n".join(lines) + "\n"

    def provenance(self) -> dict:
        """Every setting plus the derived efficiency products, for output JSON."""
        params = self.experiment_params()
        return {
            "config": dict(sorted(self.values.items())),
            "derived": {
                "eta_hd": params.eta_hd,
                "eta_tot": params.eta_tot,
                "false_herald_fraction": params.false_herald_fraction,
                "tap_excess_transmission": params.tap_excess_transmission,
            },
        }
