"""Run configuration: one flat key-value text file, units in the key names.

The file is a plain list of ``key = value`` lines; ``#`` starts a comment
and blank lines are ignored. Every key carries its unit as a suffix
(``device.length_nm``, ``schedule.t_program_ns``), values are converted to
SI on load, and unknown or duplicate keys are hard errors, so a typo or a
unit mix-up fails loudly instead of simulating the wrong device.

    # strip geometry
    device.length_nm = 100.0
    device.width_nm  = 20.0
    montecarlo.trials = 200

Any key not present falls back to its default. `load_config` resolves the
file from an explicit path first, then the SPIN_ANN_CONFIG environment
variable, then pure defaults; `config_hash` fingerprints the resolved
values so emitted data files can record exactly what produced them.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

from .axon import DtcsParams
from .crossbar import ConductanceRange
from .device import (
    MaterialParams,
    MtjStack,
    NeuronDevice,
    NeuronGeometry,
    VelocityTable,
)
from .errors import ConfigError
from .network import PhaseSchedule

__all__ = [
    "ENV_CONFIG",
    "KeySpec",
    "KEY_SPECS",
    "default_values",
    "parse_config_text",
    "RunConfig",
    "load_config",
    "config_hash",
]

ENV_CONFIG = "SPIN_ANN_CONFIG"


@dataclass(frozen=True)
class KeySpec:
    """One configuration key: parsed type, SI scale, and unit note."""

    kind: type
    default: float | int | str
    scale: float = 1.0  # file value * scale = SI value
    doc: str = ""


KEY_SPECS: dict[str, KeySpec] = {
    # Free-layer strip geometry.
    "device.length_nm": KeySpec(float, 100.0, 1e-9, "strip length"),
    "device.width_nm": KeySpec(float, 20.0, 1e-9, "strip width"),
    "device.thickness_nm": KeySpec(float, 2.0, 1e-9, "strip thickness"),
    # Magnetic material.
    "material.damping": KeySpec(float, 0.02, 1.0, "Gilbert damping"),
    "material.k_u_j_per_m3": KeySpec(float, 350e3, 1.0, "uniaxial anisotropy"),
    "material.m_s_a_per_m": KeySpec(float, 680e3, 1.0, "saturation magnetization"),
    "material.a_ex_j_per_m": KeySpec(float, 1.1e-11, 1.0, "exchange stiffness"),
    "material.polarization": KeySpec(float, 0.6, 1.0, "spin polarization"),
    # Vertical MTJ stack.
    "mtj.ra_ap_ohm_um2": KeySpec(float, 5.0, 1.0, "antiparallel RA product"),
    "mtj.ra_dw_ohm_um2": KeySpec(float, 3.5, 1.0, "wall-segment RA product"),
    "mtj.ra_p_ohm_um2": KeySpec(float, 2.0, 1.0, "parallel RA product"),
    "mtj.r_ref_ohm": KeySpec(float, 2500.0, 1.0, "divider reference resistor"),
    "mtj.v_sense_v": KeySpec(float, 0.1, 1.0, "divider supply"),
    "mtj.i_crit_vertical_ua": KeySpec(float, 100.0, 1e-6, "vertical critical current"),
    # Wall-velocity calibration.
    "velocity.table_csv": KeySpec(str, "", 1.0, "anchor CSV; blank = packaged"),
    "velocity.j_depin_a_per_m2": KeySpec(float, 6e11, 1.0, "depinning density"),
    # Synapse conductance range.
    "crossbar.g_min_s": KeySpec(float, 3.125e-5, 1.0, "lowest on conductance"),
    "crossbar.g_max_s": KeySpec(float, 1e-3, 1.0, "highest conductance"),
    "crossbar.levels": KeySpec(int, 32, 1.0, "programmable levels"),
    # Axon current sources (per-layer k_beta is calibrated, not configured).
    "dtcs.v_dd_v": KeySpec(float, 1.0, 1.0, "supply"),
    "dtcs.v_t_v": KeySpec(float, 0.4, 1.0, "threshold"),
    "dtcs.delta_v_v": KeySpec(float, 0.05, 1.0, "source-rail offset"),
    # Clocked phase durations.
    "schedule.t_program_ns": KeySpec(float, 1.0, 1e-9, "program phase"),
    "schedule.t_sense_ns": KeySpec(float, 1.0, 1e-9, "sense phase"),
    "schedule.t_reset_ns": KeySpec(float, 1.0, 1e-9, "reset phase"),
    # Network operating point.
    "network.r_program_ohm": KeySpec(float, 300.0, 1.0, "lateral program path"),
    "network.i_program_ua": KeySpec(float, 40.0, 1e-6, "nominal program current"),
    "network.i_sense_ua": KeySpec(float, 25.0, 1e-6, "sense current"),
    "network.i_reset_ua": KeySpec(float, 50.0, 1e-6, "reset current"),
    "network.v_sense_v": KeySpec(float, 0.1, 1.0, "sense supply"),
    # Training and evaluation.
    "train.seed": KeySpec(int, 17, 1.0, "recognizer schedule seed"),
    "train.levels": KeySpec(int, 32, 1.0, "weight quantization levels"),
    "train.n_hidden": KeySpec(int, 5, 1.0, "hidden neurons"),
    "montecarlo.trials": KeySpec(int, 100, 1.0, "variation trials"),
    "montecarlo.sigma": KeySpec(float, 0.05, 1.0, "conductance sigma, fraction"),
    "montecarlo.seed": KeySpec(int, 0, 1.0, "trial seed root"),
    "sweep.points": KeySpec(int, 256, 1.0, "samples per sweep"),
    "out.dir": KeySpec(str, ".", 1.0, "output directory"),
}


def default_values() -> dict[str, float | int | str]:
    """All keys at their defaults, in file units."""
    return {key: spec.default for key, spec in KEY_SPECS.items()}


def parse_config_text(text: str, source: str = "config") -> dict[str, str]:
    """Parse ``key = value`` lines into a raw string mapping.

    Comments (#) and blank lines are skipped; a line without '=' or a
    repeated key is an error.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def _coerce(key: str, value: str) -> float | int | str:
    spec = KEY_SPECS[key]
    try:
        if spec.kind is int:
            return int(value)
        if spec.kind is float:
            return float(value)
    except ValueError:
        raise ConfigError(
            f"key {key!r}: cannot parse {value!r} as {spec.kind.__name__}"
        ) from None
    return value


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Resolved configuration; builders hand out the configured objects.

    `values` holds every key in file units (defaults filled in); the
    builder methods convert to SI and construct validated objects, so a
    bad value surfaces as a ConfigError no later than load_config.
    """

    values: dict[str, float | int | str]
    source: str = "defaults"

    def _si(self, key: str) -> float:
        spec = KEY_SPECS[key]
        return float(self.values[key]) * spec.scale

    def _int(self, key: str) -> int:
        return int(self.values[key])

    # -- device -------------------------------------------------------

    def material(self) -> MaterialParams:
        return MaterialParams(
            damping=self._si("material.damping"),
            k_u=self._si("material.k_u_j_per_m3"),
            m_s=self._si("material.m_s_a_per_m"),
            a_ex=self._si("material.a_ex_j_per_m"),
            polarization=self._si("material.polarization"),
        )

    def geometry(self) -> NeuronGeometry:
        return NeuronGeometry.from_material(
            self.material(),
            length=self._si("device.length_nm"),
            width=self._si("device.width_nm"),
            thickness=self._si("device.thickness_nm"),
        )

    def mtj(self) -> MtjStack:
        return MtjStack(
            ra_ap=self._si("mtj.ra_ap_ohm_um2"),
            ra_dw=self._si("mtj.ra_dw_ohm_um2"),
            ra_p=self._si("mtj.ra_p_ohm_um2"),
            r_ref=self._si("mtj.r_ref_ohm"),
            v_sense=self._si("mtj.v_sense_v"),
            i_crit_vertical=self._si("mtj.i_crit_vertical_ua"),
        )

    def velocity_table(self) -> VelocityTable:
        path = str(self.values["velocity.table_csv"])
        j_th = self._si("velocity.j_depin_a_per_m2")
        if not path:
            table = VelocityTable.default()
            return VelocityTable(table.anchors, j_th=j_th)
        return VelocityTable.from_csv(path, j_th=j_th)

    def device(self) -> NeuronDevice:
        return NeuronDevice(
            geometry=self.geometry(),
            material=self.material(),
            mtj=self.mtj(),
            velocity_table=self.velocity_table(),
        )

    # -- synapses, axons, clocking -------------------------------------

    def conductance_range(self) -> ConductanceRange:
        return ConductanceRange(
            g_min=self._si("crossbar.g_min_s"),
            g_max=self._si("crossbar.g_max_s"),
            levels=self._int("crossbar.levels"),
        )

    def dtcs_template(self) -> DtcsParams:
        return DtcsParams(
            v_dd=self._si("dtcs.v_dd_v"),
            v_t=self._si("dtcs.v_t_v"),
            delta_v=self._si("dtcs.delta_v_v"),
        )

    def schedule(self) -> PhaseSchedule:
        return PhaseSchedule(
            t_program=self._si("schedule.t_program_ns"),
            t_sense=self._si("schedule.t_sense_ns"),
            t_reset=self._si("schedule.t_reset_ns"),
        )

    # -- scalar accessors ----------------------------------------------

    @property
    def train_seed(self) -> int:
        return self._int("train.seed")

    @property
    def train_levels(self) -> int:
        return self._int("train.levels")

    @property
    def n_hidden(self) -> int:
        return self._int("train.n_hidden")

    @property
    def mc_trials(self) -> int:
        return self._int("montecarlo.trials")

    @property
    def mc_sigma(self) -> float:
        return self._si("montecarlo.sigma")

    @property
    def mc_seed(self) -> int:
        return self._int("montecarlo.seed")

    @property
    def sweep_points(self) -> int:
        return self._int("sweep.points")

    @property
    def out_dir(self) -> Path:
        return Path(str(self.values["out.dir"]))

    @property
    def r_program(self) -> float:
        return self._si("network.r_program_ohm")

    @property
    def i_program(self) -> float:
        return self._si("network.i_program_ua")

    @property
    def i_sense(self) -> float:
        return self._si("network.i_sense_ua")

    @property
    def i_reset(self) -> float:
        return self._si("network.i_reset_ua")

    @property
    def v_sense_supply(self) -> float:
        return self._si("network.v_sense_v")

    def items(self) -> list[tuple[str, str]]:
        """Canonical (key, value-string) pairs, sorted by key."""
        return [(key, _canonical(self.values[key]))
                for key in sorted(self.values)]


def _canonical(value: float | int | str) -> str:
    if isinstance(value, bool):
        raise ConfigError("boolean config values are not supported")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _validate(config: RunConfig) -> None:
    # Build every configured object once so range and unit errors surface
    # at load time, not mid-run.
    config.material()
    config.geometry()
    config.mtj()
    config.conductance_range()
    config.dtcs_template()
    config.schedule()
    table_path = str(config.values["velocity.table_csv"])
    if table_path and not Path(table_path).exists():
        raise ConfigError(f"velocity table not found: {table_path}")
    config.velocity_table()
    if config.mc_trials < 1:
        raise ConfigError("montecarlo.trials must be >= 1")
    if config.mc_sigma < 0.0:
        raise ConfigError("montecarlo.sigma must be >= 0")
    if config.sweep_points < 2:
        raise ConfigError("sweep.points must be >= 2")
    if config.n_hidden < 1:
        raise ConfigError("train.n_hidden must be >= 1")
    if config.train_levels < 2:
        raise ConfigError("train.levels must be >= 2")


def load_config(
    path: Path | str | None = None,
    env: dict[str, str] | None = None,
) -> RunConfig:
    """Resolve the configuration: explicit path, else $SPIN_ANN_CONFIG,
    else defaults."""
    environ = os.environ if env is None else env
    source = "defaults"
    if path is None:
        fallback = environ.get(ENV_CONFIG, "")
        if fallback:
            path = fallback
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        raw = parse_config_text(path.read_text(), source=str(path))
        source = str(path)
    else:
        raw = {}

    values = default_values()
    for key, text in raw.items():
        if key not in KEY_SPECS:
            raise ConfigError(f"{source}: unknown key {key!r}")
        values[key] = _coerce(key, text)

    config = RunConfig(values=values, source=source)
    _validate(config)
    return config


def config_hash(config: RunConfig) -> str:
    """Short fingerprint of the resolved values, for output provenance."""
    payload = "\n".join(f"{k} = {v}" for k, v in config.items())
    return hashlib.sha256(payload.encode()).hexdigest()[:12]
