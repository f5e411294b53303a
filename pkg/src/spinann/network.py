"""Hardware assembly: axon rows, crossbar synapses, spin-neuron columns.

A two-layer network is built from trained weights. Each layer maps its
weight matrix onto a differential crossbar, drives the rows from
current-source axons, and programs one spin neuron per column. A full
inference runs each layer through the clocked three-phase cycle (reset,
program, sense) and accumulates a per-component energy ledger.

Calibration ties the analog chain to the trainer's arithmetic: with row
currents I_i = I_unit * u_i and the equalized per-row conductance g_tr,
the column current is (I_unit * s / g_tr) * sum(w_ij * u_i) where s is
the weight-to-conductance scale; choosing I_unit = drive * g_tr / s
makes the programming current exactly drive * z_j, the trainer's net
input expressed as a current. The gate drive of each axon is
pre-distorted against its known resistive load so the calibrated row
current is actually delivered; the sensed voltages of one layer map
affinely onto the next layer's gate utilization (v_out_min -> 0,
v_out_max -> 1), which is the same normalization the training
activation uses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .axon import DtcsParams
from .crossbar import CrossbarArray, inject_variation, map_weights
from .device import neuron_energy
from .errors import ConfigError, DomainError, SpinAnnError, TieError
from .trainer import TrainResult, TransferKind

__all__ = [
    "NETWORK_SCHEMA",
    "PhaseSchedule",
    "PhaseScheduler",
    "LayerConfig",
    "Layer",
    "EnergyReport",
    "SpinAnnNetwork",
    "build_network",
    "readout",
    "neuron_count_energy",
    "save_network",
    "load_network",
]

NETWORK_SCHEMA = "spin-ann/1"

# Order of the clocked phases within one layer cycle.
PHASE_ORDER = ("reset", "program", "sense")


@dataclass(frozen=True)
class PhaseSchedule:
    """Durations of the three clocked phases, seconds."""

    t_program: float = 1e-9
    t_sense: float = 1e-9
    t_reset: float = 1e-9

    def __post_init__(self):
        if min(self.t_program, self.t_sense, self.t_reset) < 0.0:
            raise ConfigError("phase durations must be >= 0")

    def to_dict(self) -> dict:
        return {
            "t_program": self.t_program,
            "t_sense": self.t_sense,
            "t_reset": self.t_reset,
        }


class PhaseScheduler:
    """State machine enforcing the clocked phase cycle.

    Unused paths are floated between phases, so programming current must
    never flow during sense and vice versa; any out-of-order phase
    request is a hard error rather than a silent reordering.
    """

    def __init__(self) -> None:
        self._index = 0

    @property
    def expected(self) -> str:
        return PHASE_ORDER[self._index]

    def advance(self, phase: str) -> str:
        if phase not in PHASE_ORDER:
            raise SpinAnnError(f"unknown phase {phase!r}")
        if phase != self.expected:
            raise SpinAnnError(
                f"phase order violation: {phase!r} requested during "
                f"{self.expected!r} slot"
            )
        self._index = (self._index + 1) % len(PHASE_ORDER)
        return phase


@dataclass(frozen=True)
class LayerConfig:
    """Logical dimensions of one layer (bias row not counted)."""

    n_inputs: int
    n_neurons: int
    transfer: str = "stt_snn"

    def __post_init__(self):
        if self.n_inputs < 1 or self.n_neurons < 1:
            raise ConfigError("layer dimensions must be >= 1")


@dataclass(eq=False)
class Layer:
    """One assembled layer: crossbar, axon calibration, neuron count."""

    config: LayerConfig
    array: CrossbarArray
    axon_positive: DtcsParams
    axon_negative: DtcsParams
    i_unit: float
    g_tr: float


@dataclass(eq=False)
class EnergyReport:
    """Per-component energy ledger for one inference, joules."""

    neuron_program: float = 0.0
    neuron_sense: float = 0.0
    neuron_reset: float = 0.0
    crossbar_static: float = 0.0
    dtcs_static: float = 0.0

    @property
    def total(self) -> float:
        return (self.neuron_program + self.neuron_sense + self.neuron_reset
                + self.crossbar_static + self.dtcs_static)

    @property
    def neuron_subtotal(self) -> float:
        return self.neuron_program + self.neuron_sense + self.neuron_reset

    def to_dict(self) -> dict:
        return {
            "neuron_program": self.neuron_program,
            "neuron_sense": self.neuron_sense,
            "neuron_reset": self.neuron_reset,
            "crossbar_static": self.crossbar_static,
            "dtcs_static": self.dtcs_static,
            "total": self.total,
        }


@dataclass(eq=False)
class SpinAnnNetwork:
    """Feed-forward spin-neuron network mapped onto crossbars.

    forward() is deterministic: all randomness lives in construction
    (programming noise) and in with_variation() clones.
    """

    kind: TransferKind
    layers: list[Layer]
    schedule: PhaseSchedule = field(default_factory=PhaseSchedule)
    r_program: float = 300.0
    i_sense: float = 25e-6
    v_sense_supply: float = 0.100
    i_reset: float = 50e-6

    @property
    def n_features(self) -> int:
        return self.layers[0].config.n_inputs

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].config.n_neurons

    @property
    def n_neurons(self) -> int:
        return sum(layer.config.n_neurons for layer in self.layers)

    def forward(self, features) -> tuple[np.ndarray, EnergyReport]:
        """One full recognition: (output voltages in V, energy ledger)."""
        u = np.asarray(features, dtype=float).ravel()
        if u.size != self.n_features:
            raise DomainError(
                f"expected {self.n_features} features, got {u.size}"
            )
        if np.any(~np.isfinite(u)) or u.min() < -1e-9 or u.max() > 1 + 1e-9:
            raise DomainError("features must be finite and within [0, 1]")
        u = np.clip(u, 0.0, 1.0)

        sched = self.schedule
        energy = EnergyReport()
        activations = u
        for layer in self.layers:
            phases = PhaseScheduler()
            n_out = layer.config.n_neurons

            # Reset: every neuron's wall returns to the low-output end.
            phases.advance("reset")
            energy.neuron_reset += n_out * neuron_energy(
                0.0, 0.0, 0.0, 0.0, self.i_reset, sched.t_reset,
                self.r_program,
            ).reset

            # Program: axons drive the bars, columns program the walls.
            phases.advance("program")
            gate_u = np.append(activations, 1.0)
            i_rows = layer.i_unit * gate_u
            i_cols = layer.array.weighted_sum(i_rows, i_rows)
            energy.neuron_program += float(
                np.sum(i_cols ** 2) * self.r_program * sched.t_program
            )
            # Every input drives one row per bar; each equalized row
            # dissipates I^2/g_tr (the cell-wise sum of V^2 g).
            energy.crossbar_static += float(
                2.0 * np.sum(i_rows ** 2) / layer.g_tr * sched.t_program
            )
            energy.dtcs_static += float(
                2.0 * np.sum(np.abs(i_rows))
                * layer.axon_positive.delta_v * sched.t_program
            )

            # Sense: read dividers only; programming paths are floated.
            phases.advance("sense")
            energy.neuron_sense += n_out * neuron_energy(
                0.0, 0.0, self.i_sense, sched.t_sense, 0.0, 0.0,
                self.r_program, v_sense=self.v_sense_supply,
            ).sense

            # The sensed voltage, normalized to the output swing, is the
            # next layer's gate utilization (inter-layer level shift).
            activations = np.interp(
                i_cols, self.kind.i_nodes, self.kind.a_nodes
            )

        voltages = self.kind.v_min \
            + (self.kind.v_max - self.kind.v_min) * activations
        return voltages, energy

    def with_variation(self, sigma: float, seed: int) -> "SpinAnnNetwork":
        """Clone with lognormal-free Gaussian conductance variation.

        Perturbations always apply to the nominal conductances, so
        chained calls never accumulate variation on variation.
        """
        new_layers = []
        for idx, layer in enumerate(self.layers):
            layer_seed = int(
                np.random.SeedSequence([seed, idx]).generate_state(1)[0]
            )
            base = layer.array.nominal or layer.array
            varied = inject_variation(base, sigma, seed=layer_seed)
            new_layers.append(replace_layer_array(layer, varied))
        return SpinAnnNetwork(
            kind=self.kind, layers=new_layers, schedule=self.schedule,
            r_program=self.r_program, i_sense=self.i_sense,
            v_sense_supply=self.v_sense_supply, i_reset=self.i_reset,
        )

    def to_dict(self) -> dict:
        return {
            "schema": NETWORK_SCHEMA,
            "kind": self.kind.to_dict(),
            "schedule": self.schedule.to_dict(),
            "r_program": self.r_program,
            "i_sense": self.i_sense,
            "v_sense_supply": self.v_sense_supply,
            "i_reset": self.i_reset,
            "layers": [
                {
                    "n_inputs": layer.config.n_inputs,
                    "n_neurons": layer.config.n_neurons,
                    "transfer": layer.config.transfer,
                    "i_unit": layer.i_unit,
                    "g_tr": layer.g_tr,
                    "axon": {
                        "v_dd": layer.axon_positive.v_dd,
                        "v_t": layer.axon_positive.v_t,
                        "k_beta": layer.axon_positive.k_beta,
                        "delta_v": layer.axon_positive.delta_v,
                    },
                    "array": layer.array.to_dict(),
                }
                for layer in self.layers
            ],
        }


def replace_layer_array(layer: Layer, array: CrossbarArray) -> Layer:
    return Layer(
        config=layer.config, array=array,
        axon_positive=layer.axon_positive,
        axon_negative=layer.axon_negative,
        i_unit=layer.i_unit, g_tr=layer.g_tr,
    )


def _build_layer(weights: np.ndarray, kind: TransferKind,
                 template: DtcsParams, utilization: float,
                 quantize: bool, rng) -> Layer:
    array = map_weights(weights, rng=rng, quantize=quantize)
    g_tr_rows = np.concatenate([array.g_tr_plus, array.g_tr_minus])
    g_tr = float(g_tr_rows.max())
    spread = g_tr - float(g_tr_rows.min())
    if spread > 1e-6 * g_tr:
        raise ConfigError("crossbar rows are not conductance-equalized")
    scale = array.report.scale
    i_unit = kind.drive_current * g_tr / scale
    k_beta = i_unit / (
        (template.v_dd - template.v_t) * utilization * template.delta_v
    )
    positive = DtcsParams(
        v_dd=template.v_dd, v_t=template.v_t, k_beta=k_beta,
        delta_v=template.delta_v, polarity="positive",
    )
    negative = DtcsParams(
        v_dd=template.v_dd, v_t=template.v_t, k_beta=k_beta,
        delta_v=template.delta_v, polarity="negative",
    )
    n_inputs, n_neurons = weights.shape[0] - 1, weights.shape[1]
    return Layer(
        config=LayerConfig(n_inputs=n_inputs, n_neurons=n_neurons,
                           transfer=kind.tag),
        array=array, axon_positive=positive, axon_negative=negative,
        i_unit=i_unit, g_tr=g_tr,
    )


def build_network(
    result: TrainResult,
    *,
    quantize: bool = True,
    schedule: PhaseSchedule | None = None,
    dtcs_template: DtcsParams | None = None,
    utilization: float = 1.0,
    rng=None,
    r_program: float = 300.0,
    i_sense: float = 25e-6,
    v_sense_supply: float = 0.100,
    i_reset: float = 50e-6,
) -> SpinAnnNetwork:
    """Map a trained two-layer result onto crossbar hardware.

    quantize=False maps the exact float weights (ideal mode); the
    default snaps conductances onto the programmable levels. `rng`
    optionally adds write noise during mapping.
    """
    if result.kind.tag != "stt_snn":
        raise ConfigError("hardware neurons require the stt_snn transfer")
    if not (0.0 < utilization <= 1.0):
        raise ConfigError("utilization must be in (0, 1]")
    template = dtcs_template or DtcsParams()
    layers = [
        _build_layer(result.w1, result.kind, template, utilization,
                     quantize, rng),
        _build_layer(result.w2, result.kind, template, utilization,
                     quantize, rng),
    ]
    return SpinAnnNetwork(
        kind=result.kind, layers=layers,
        schedule=schedule or PhaseSchedule(),
        r_program=r_program, i_sense=i_sense,
        v_sense_supply=v_sense_supply, i_reset=i_reset,
    )


def readout(output_voltages, mode: str = "argmax",
            v_threshold: float | None = None):
    """Winner-take-all readout of the output neuron voltages.

    argmax mode returns (label, margin) where margin is the gap between
    the highest and second-highest voltage; an exact tie at the top is
    a TieError, never an arbitrary index choice. bits mode returns the
    inverter bank's view: one bit per neuron, 0 where the voltage
    exceeds the inverter threshold (the winner bit reads 0).
    """
    v = np.asarray(output_voltages, dtype=float).ravel()
    if v.size == 0:
        raise DomainError("empty voltage vector")
    if mode == "bits":
        if v_threshold is None:
            raise ConfigError("bits mode needs v_threshold")
        return np.where(v > v_threshold, 0, 1)
    if mode != "argmax":
        raise ConfigError(f"unknown readout mode {mode!r}")
    if v.size == 1:
        return 0, float(v[0])
    order = np.argsort(v)
    top, second = v[order[-1]], v[order[-2]]
    if top == second:
        raise TieError("winner voltage is not unique")
    return int(order[-1]), float(top - second)


def neuron_count_energy(
    network: SpinAnnNetwork,
    i_prog: float = 40e-6,
) -> EnergyReport:
    """Closed-form neuron energy at the nominal operating point.

    Multiplies the per-neuron phase energies (programming at `i_prog`
    through the lateral path, sensing and reset at the network's
    configured currents) by the total neuron count. Crossbar and axon
    terms are inference-dependent and stay zero here.
    """
    sched = network.schedule
    per = neuron_energy(
        i_prog, sched.t_program,
        network.i_sense, sched.t_sense,
        network.i_reset, sched.t_reset,
        network.r_program, v_sense=network.v_sense_supply,
    )
    n = network.n_neurons
    return EnergyReport(
        neuron_program=n * per.program,
        neuron_sense=n * per.sense,
        neuron_reset=n * per.reset,
    )


def save_network(path: Path | str, network: SpinAnnNetwork) -> None:
    Path(path).write_text(json.dumps(network.to_dict(), indent=2) + "\n")


def load_network(path: Path | str) -> SpinAnnNetwork:
    payload = json.loads(Path(path).read_text())
    if payload.get("schema") != NETWORK_SCHEMA:
        raise ConfigError(f"unsupported network schema {payload.get('schema')!r}")
    kind = TransferKind.from_dict(payload["kind"])
    layers = []
    for entry in payload["layers"]:
        axon = entry["axon"]
        positive = DtcsParams(v_dd=axon["v_dd"], v_t=axon["v_t"],
                              k_beta=axon["k_beta"], delta_v=axon["delta_v"],
                              polarity="positive")
        negative = DtcsParams(v_dd=axon["v_dd"], v_t=axon["v_t"],
                              k_beta=axon["k_beta"], delta_v=axon["delta_v"],
                              polarity="negative")
        layers.append(Layer(
            config=LayerConfig(n_inputs=entry["n_inputs"],
                               n_neurons=entry["n_neurons"],
                               transfer=entry["transfer"]),
            array=CrossbarArray.from_dict(entry["array"]),
            axon_positive=positive, axon_negative=negative,
            i_unit=entry["i_unit"], g_tr=entry["g_tr"],
        ))
    sched = payload["schedule"]
    return SpinAnnNetwork(
        kind=kind, layers=layers,
        schedule=PhaseSchedule(**sched),
        r_program=payload["r_program"], i_sense=payload["i_sense"],
        v_sense_supply=payload["v_sense_supply"],
        i_reset=payload["i_reset"],
    )
