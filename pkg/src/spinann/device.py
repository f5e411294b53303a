"""Compact behavioral model of a domain-wall spin-torque neuron.

The neuron is a magnetic nanostrip whose free layer holds a single domain
wall (DW). A lateral current pulse moves the wall; the wall position sets
the vertical resistance of the MTJ stack on top of the strip, which a
voltage divider converts to the neuron output voltage. Wall kinematics are
a 1-D position model driven by a measured velocity-vs-current-density
table; no micromagnetic integration is performed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, DisturbanceError, DomainError

# Fraction of the vertical critical current considered non-disturbing.
SENSE_SAFETY_FRACTION = 0.5


@dataclass(frozen=True)
class MaterialParams:
    """Magnetic material constants of the free layer.

    damping:       Gilbert damping coefficient, dimensionless, in (0, 1)
    k_u:           uniaxial anisotropy constant, J/m^3
    m_s:           saturation magnetization, A/m
    a_ex:          exchange stiffness, J/m
    polarization:  spin polarization, dimensionless, in (0, 1]
    """

    damping: float = 0.02
    k_u: float = 3.5e5
    m_s: float = 6.8e5
    a_ex: float = 1.1e-11
    polarization: float = 0.6

    def __post_init__(self):
        if not (0.0 < self.damping < 1.0):
            raise ConfigError(f"damping must be in (0,1), got {self.damping}")
        if not (0.0 < self.polarization <= 1.0):
            raise ConfigError(f"polarization must be in (0,1], got {self.polarization}")
        for name in ("k_u", "m_s", "a_ex"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive")

    @property
    def wall_length(self) -> float:
        """Equilibrium domain-wall length pi*sqrt(a_ex/k_u), m."""
        return math.pi * math.sqrt(self.a_ex / self.k_u)


@dataclass(frozen=True)
class NeuronGeometry:
    """Free-layer strip geometry. All lengths in meters.

    The wall midpoint can occupy [0.5*dw_length, length - 0.5*dw_length];
    outside that band one of the end segments would have negative area.
    """

    length: float = 100e-9
    width: float = 20e-9
    thickness: float = 2e-9
    dw_length: float = 17.612142597974271e-9

    def __post_init__(self):
        if self.width <= 0.0 or self.thickness <= 0.0:
            raise ConfigError("width and thickness must be positive")
        if not (0.0 < self.dw_length < self.length):
            raise ConfigError(
                f"need 0 < dw_length < length, got {self.dw_length} vs {self.length}"
            )

    @classmethod
    def from_material(
        cls,
        material: MaterialParams,
        length: float = 100e-9,
        width: float = 20e-9,
        thickness: float = 2e-9,
    ) -> "NeuronGeometry":
        """Geometry with the wall length derived from material constants."""
        return cls(length=length, width=width, thickness=thickness,
                   dw_length=material.wall_length)

    @property
    def x_min(self) -> float:
        return 0.5 * self.dw_length

    @property
    def x_max(self) -> float:
        return self.length - 0.5 * self.dw_length

    @property
    def cross_section(self) -> float:
        """Lateral current cross-section width*thickness, m^2."""
        return self.width * self.thickness


@dataclass(frozen=True)
class MtjStack:
    """MTJ stack and read-path parameters.

    ra_ap, ra_dw, ra_p: resistance-area products (ohm*um^2) of the
    anti-parallel, wall, and parallel segments. r_ref is the reference
    MTJ of the read divider; v_sense the total divider supply swing.
    """

    ra_ap: float = 5.0
    ra_dw: float = 3.5
    ra_p: float = 2.0
    r_ref: float = 2500.0
    v_sense: float = 0.100
    i_crit_vertical: float = 100e-6

    def __post_init__(self):
        if not (self.ra_ap > self.ra_dw > self.ra_p > 0.0):
            raise ConfigError("need ra_ap > ra_dw > ra_p > 0")
        if self.r_ref <= 0.0 or self.v_sense <= 0.0:
            raise ConfigError("r_ref and v_sense must be positive")
        if self.i_crit_vertical <= 0.0:
            raise ConfigError("i_crit_vertical must be positive")


# ohm*um^2 -> ohm*m^2
_RA_SI = 1e-12


def rational_coefficients(geom: NeuronGeometry, mtj: MtjStack) -> tuple[float, float, float]:
    """Coefficients (num, slope, offset) of the resistance law num/(slope*x + offset).

    Algebraically identical to the parallel combination of the three MTJ
    segments (anti-parallel left, wall, parallel right), so the vertical
    resistance is a rational function of the wall position x.
    """
    ra_ap = mtj.ra_ap * _RA_SI
    ra_dw = mtj.ra_dw * _RA_SI
    ra_p = mtj.ra_p * _RA_SI
    w, l, l_dw = geom.width, geom.length, geom.dw_length
    num = ra_ap * ra_p * ra_dw
    slope = (ra_ap - ra_p) * ra_dw * w
    offset = ra_p * ra_dw * w * l + (
        ra_ap * ra_p - 0.5 * ra_p * ra_dw - 0.5 * ra_ap * ra_dw
    ) * w * l_dw
    return num, slope, offset


def neuron_resistance(x: float, geom: NeuronGeometry, mtj: MtjStack) -> float:
    """Vertical MTJ resistance (ohm) at wall midpoint position x (m).

    A zero-area end segment (x at either travel limit) is an open circuit;
    the rational form covers that limit without special-casing.
    """
    if not (geom.x_min <= x <= geom.x_max):
        raise DomainError(
            f"wall position {x} outside [{geom.x_min}, {geom.x_max}]"
        )
    num, slope, offset = rational_coefficients(geom, mtj)
    return num / (slope * x + offset)


def read_voltage(resistance: float, mtj: MtjStack) -> float:
    """Divider output v_sense * r_ref / (r_ref + resistance), volts."""
    return mtj.v_sense * mtj.r_ref / (mtj.r_ref + resistance)


def output_voltage(x: float, geom: NeuronGeometry, mtj: MtjStack) -> float:
    """Neuron output voltage at wall position x; strictly increasing in x."""
    return read_voltage(neuron_resistance(x, geom, mtj), mtj)


class VelocityTable:
    """Piecewise-linear wall velocity vs lateral current density.

    Calibration data digitized from measured/simulated motion curves. The
    velocity is zero at and below the depinning density j_th, follows the
    anchors above it, and clamps at the last anchor (no extrapolation
    outside the measured regime).
    """

    def __init__(self, anchors, j_th: float = 6e11):
        anchors = [(float(j), float(v)) for j, v in anchors]
        if not anchors:
            raise ConfigError("velocity table is empty")
        js = [j for j, _ in anchors]
        vs = [v for _, v in anchors]
        if any(b <= a for a, b in zip(js, js[1:])):
            raise ConfigError("velocity anchors must be strictly increasing in j")
        if any(b < a for a, b in zip(vs, vs[1:])):
            raise ConfigError("velocity anchors must be nondecreasing in v")
        if j_th <= 0.0:
            raise ConfigError("j_th must be positive")
        # The table must pin v(j_th) = 0 so motion starts exactly at depinning.
        if j_th not in js:
            raise ConfigError("anchors must include (j_th, 0)")
        if vs[js.index(j_th)] != 0.0:
            raise ConfigError("anchor at j_th must have zero velocity")
        self.j_th = j_th
        self._j = np.array(js)
        self._v = np.array(vs)

    @property
    def anchors(self) -> list[tuple[float, float]]:
        return list(zip(self._j.tolist(), self._v.tolist()))

    @property
    def v_max(self) -> float:
        return float(self._v[-1])

    def velocity(self, j: float) -> float:
        """Wall velocity (m/s) at current-density magnitude j (A/m^2)."""
        if j < 0.0:
            raise DomainError("current density magnitude must be >= 0")
        if j <= self.j_th:
            return 0.0
        return float(np.interp(j, self._j, self._v))

    def density_for_velocity(self, v: float) -> float:
        """Smallest current density whose table velocity reaches v.

        Raises ConfigError if the table never reaches v.
        """
        if v <= 0.0:
            return self.j_th
        if v > self.v_max:
            raise ConfigError(
                f"table tops out at {self.v_max} m/s, below requested {v} m/s"
            )
        idx = int(np.searchsorted(self._v, v, side="left"))
        j_lo, j_hi = self._j[idx - 1], self._j[idx]
        v_lo, v_hi = self._v[idx - 1], self._v[idx]
        if v_hi == v_lo:
            return float(j_lo)
        return float(j_lo + (v - v_lo) * (j_hi - j_lo) / (v_hi - v_lo))

    @classmethod
    def from_csv(cls, path, j_th: float = 6e11) -> "VelocityTable":
        """Load anchors from a CSV with header ``j_per_m2,v_m_per_s``."""
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["j_per_m2", "v_m_per_s"]:
                raise ConfigError(
                    f"{path}: expected header j_per_m2,v_m_per_s, "
                    f"got {reader.fieldnames}"
                )
            anchors = [(float(row["j_per_m2"]), float(row["v_m_per_s"]))
                       for row in reader]
        return cls(anchors, j_th=j_th)

    @classmethod
    def default(cls) -> "VelocityTable":
        """The calibration table shipped with the package."""
        ref = resources.files("spinann.data").joinpath("velocity_fig4d.csv")
        with resources.as_file(ref) as path:
            return cls.from_csv(path)


def dw_velocity(j: float, table: VelocityTable) -> float:
    """Wall velocity (m/s) for current-density magnitude j (A/m^2)."""
    return table.velocity(j)


@dataclass
class NeuronState:
    """Mutable wall midpoint position of one neuron, meters."""

    x: float


@dataclass
class EnergyBreakdown:
    """Per-phase energy of one neuron cycle, joules."""

    program: float
    sense: float
    reset: float

    @property
    def total(self) -> float:
        return self.program + self.sense + self.reset


def neuron_energy(
    i_prog: float,
    t_prog: float,
    i_sense: float,
    t_sense: float,
    i_reset: float,
    t_reset: float,
    r_lateral: float,
    v_sense: float = 0.100,
) -> EnergyBreakdown:
    """Closed-form phase energies of one neuron cycle.

    Programming and reset dissipate I^2*R*t in the lateral strip path;
    sensing draws |I|*V*t from the divider supply.
    """
    if min(t_prog, t_sense, t_reset) < 0.0:
        raise DomainError("phase durations must be >= 0")
    return EnergyBreakdown(
        program=i_prog * i_prog * r_lateral * t_prog,
        sense=abs(i_sense) * v_sense * t_sense,
        reset=i_reset * i_reset * r_lateral * t_reset,
    )


class NeuronDevice:
    """One spin-torque neuron: parameters plus mutable wall position.

    Single-owner mutable state; concurrent use requires independent
    instances. The pure helpers (resistance, voltage, velocity) are
    reentrant.
    """

    def __init__(
        self,
        geometry: NeuronGeometry | None = None,
        material: MaterialParams | None = None,
        mtj: MtjStack | None = None,
        velocity_table: VelocityTable | None = None,
    ):
        self.material = material or MaterialParams()
        self.geometry = geometry or NeuronGeometry.from_material(self.material)
        self.mtj = mtj or MtjStack()
        self.velocity_table = velocity_table or VelocityTable.default()
        self.state = NeuronState(x=self.geometry.x_min)

    # -- derived operating points ------------------------------------

    @property
    def depinning_current(self) -> float:
        """Lateral current (A) at the depinning density; no motion below it."""
        return self.velocity_table.j_th * self.geometry.cross_section

    def saturation_current(self, t_prog: float = 1e-9) -> float:
        """Minimum current that walks the wall end to end within t_prog."""
        v_needed = (self.geometry.length - self.geometry.dw_length) / t_prog
        j = self.velocity_table.density_for_velocity(v_needed)
        return j * self.geometry.cross_section

    @property
    def v_out_min(self) -> float:
        return output_voltage(self.geometry.x_min, self.geometry, self.mtj)

    @property
    def v_out_max(self) -> float:
        return output_voltage(self.geometry.x_max, self.geometry, self.mtj)

    # -- state evolution ----------------------------------------------

    def resistance(self) -> float:
        return neuron_resistance(self.state.x, self.geometry, self.mtj)

    def apply_pulse(self, i: float, dt: float) -> float:
        """Move the wall under a lateral current pulse; returns the new x.

        Positive current (input port toward ground) advances the wall and
        raises the output voltage. Velocity is constant within a pulse, so
        a single kinematic step is exact. Position clamps at the travel
        limits.
        """
        if dt < 0.0:
            raise DomainError("pulse duration must be >= 0")
        j = abs(i) / self.geometry.cross_section
        step = self.velocity_table.velocity(j) * dt
        x = self.state.x + (step if i > 0.0 else -step)
        self.state.x = min(max(x, self.geometry.x_min), self.geometry.x_max)
        return self.state.x

    def reset(self, i: float = -50e-6, dt: float = 1e-9) -> float:
        """Drive the wall back to the minimum-output end; returns the new x.

        With the default -50 uA / 1 ns pulse the table velocity exceeds the
        full travel in one pulse, so the wall parks exactly at x_min.
        """
        return self.apply_pulse(i, dt)

    def sense(self, i_sense: float = 25e-6) -> float:
        """Non-destructive read of the output voltage.

        Refuses sense currents above half the vertical critical current:
        beyond that, vertical spin torque could move the wall, and this
        model treats read-disturb as a hard precondition rather than a
        drift term.
        """
        if abs(i_sense) > SENSE_SAFETY_FRACTION * self.mtj.i_crit_vertical:
            raise DisturbanceError(
                f"sense current {i_sense} exceeds "
                f"{SENSE_SAFETY_FRACTION:.0%} of the vertical critical current"
            )
        return output_voltage(self.state.x, self.geometry, self.mtj)

    def transfer(self, i_prog: float, t_prog: float = 1e-9) -> float:
        """Output voltage after reset -> program pulse -> sense.

        The soft-limiting neuron curve: flat at the minimum below the
        depinning current, saturated at the maximum once the pulse walks
        the wall end to end, monotone in between.
        """
        self.state.x = self.geometry.x_min
        self.apply_pulse(i_prog, t_prog)
        return self.sense()
