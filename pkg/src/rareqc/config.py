"""Experiment configuration: YAML in, validated pydantic models out.

Every default mirrors the constant the simulator is built around; unknown
keys are rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigInvalid


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CrystalConfig(_Section):
    profile: str = Field("flat", pattern="^(flat|gaussian)$")
    window: tuple[float, float] = (-50.0, 50.0)  # MHz around the pit
    n_classes: int = Field(10000, gt=0)
    alpha_max: float = Field(2.0, gt=0)  # unburned optical depth

    @model_validator(mode="after")
    def _window(self):
        if not self.window[0] < self.window[1]:
            raise ValueError("window must satisfy min < max")
        return self


class PumpingConfig(_Section):
    pit: tuple[float, float] = (-9.0, 9.0)  # MHz, 18 MHz pit
    rabi: float = Field(0.5, gt=0)
    scan_time: float = Field(20.0, gt=0)  # us per scan
    repetitions: int = Field(240, gt=0)
    optimal_iterations: int = Field(2, ge=0)
    peak_width: float = Field(0.5, gt=0)  # burnback peak, MHz
    peak_frequency: float | None = None  # default: pit low edge + 5.8 MHz
    resolution: float = Field(0.05, gt=0)  # spectrometer, MHz

    @model_validator(mode="after")
    def _pit(self):
        if not self.pit[0] < self.pit[1]:
            raise ValueError("pit must satisfy low < high")
        return self


class PulseConfig(_Section):
    peak_rabi: float = Field(1.5, gt=0)  # MHz
    width: float = Field(2.5, gt=0)  # beta, 1/us
    chirp_factor: float = Field(2 * math.pi / 2.5, gt=0)  # mu
    duration: float = Field(8.2, gt=0)  # us per transfer
    sample_rate: float = Field(200.0, gt=0)  # MHz
    reference_offset: float = Field(20.0, gt=0)  # beat reference below the carrier, MHz
    carrier: float = Field(40.0, gt=0)  # heterodyne carrier for beat tests, MHz


class DynamicsConfig(_Section):
    decoherence: bool = True
    optical_T1: float = Field(164.0, gt=0)  # us
    optical_T2: float = Field(100.0, gt=0)  # us
    hyperfine_T2: float = Field(500.0, gt=0)  # us
    hyperfine_T1: float = Field(90.0, gt=0)  # s
    span_linewidths: float = Field(100.0, gt=0)  # ensemble span for the sechyp test
    n_classes: int = Field(31, gt=0)
    rabi_scatter: float = Field(0.0, ge=0)


class GatesConfig(_Section):
    theta: float = math.pi / 2
    phi: float = 0.0
    grid: int = Field(8, gt=0)
    band_width: float = Field(0.004, gt=0)  # coherent qubit band, MHz
    n_classes: int = Field(3, gt=0)
    excited: int = Field(1, ge=0, le=2)


class OptctrlConfig(_Section):
    bandwidth: float = Field(2.0, gt=0)  # MHz
    amplitude_cap: float = Field(2.0, gt=0)  # MHz
    duration: float = Field(3.0, gt=0)  # us
    n_steps: int = Field(60, gt=0)
    target_fidelity: float = Field(0.999, gt=0, le=1)
    max_iterations: int = Field(300, ge=0)
    n_starts: int = Field(5, gt=0)
    study_bandwidths: tuple[float, ...] = (2.0, 4.0, 6.0, 9.2, 12.0, 16.0)


class ReadoutConfig(_Section):
    signal_mean: float = Field(100.0, ge=0)  # counts, qubit in |1>
    background_mean: float = Field(50.0, ge=0)  # counts, qubit in |0>
    window: float = Field(150.0, ge=0)  # us
    quantum_efficiency: float = Field(0.1, gt=0, le=1)
    collection_efficiency: float = Field(0.3, gt=0, le=1)
    n_samples: int = Field(100000, gt=0)
    shift_resolution: float = Field(3.0, gt=0)  # MHz
    chain_spacing: float = Field(5.0, gt=0)  # nm, planted chain
    chain_length: int = Field(3, gt=0)
    scaling_p: float = Field(0.01, gt=0, le=1)
    scaling_n: int = Field(5, ge=1)
    stark_field: float = Field(1.0e6, ge=0)  # V/cm
    stark_coefficient: float = Field(35.0, ge=0)  # kHz/(V/cm)


class ExperimentConfig(_Section):
    seed: int = 0
    output_dir: str = "out"
    crystal: CrystalConfig = CrystalConfig()
    pumping: PumpingConfig = PumpingConfig()
    pulse: PulseConfig = PulseConfig()
    dynamics: DynamicsConfig = DynamicsConfig()
    gates: GatesConfig = GatesConfig()
    optctrl: OptctrlConfig = OptctrlConfig()
    readout: ReadoutConfig = ReadoutConfig()

    def digest(self) -> str:
        """sha256 over every semantic field (the output directory is not one)."""
        body = self.model_dump(mode="json", exclude={"output_dir"})
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()

    def with_(self, **kw) -> "ExperimentConfig":
        return self.model_copy(update=kw)


def _diagnostics(err: ValidationError) -> dict[str, str]:
    out: dict[str, str] = {}
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        out[loc] = f"{out[loc]}; {e['msg']}" if loc in out else e["msg"]
    return out


def parse_config(data: dict | None) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data or {})
    except ValidationError as err:
        diags = _diagnostics(err)
        raise ConfigInvalid("invalid configuration: " + "; ".join(f"{k}: {v}" for k, v in diags.items()),
                            diags) from None


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    data: dict = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config {p}: {exc}", {str(p): str(exc)}) from None
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigInvalid(f"config {p} is not valid YAML: {exc}", {str(p): "not valid YAML"}) from None
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigInvalid("config must be a mapping", {"<root>": "not a mapping"})
        data = loaded or {}
    data = {**data, **(overrides or {})}
    return parse_config(data)
