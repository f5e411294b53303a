"""Deep-triode current-source (DTCS) axon transistor model.

A PMOS biased deep in triode converts a gate voltage into a row current
that is linear in the overdrive: with a regulated source offset delta_v
across the device, I = k_beta * V_ov * delta_v. Driving a resistive
crossbar bar steals part of that offset (drain-source voltage becomes
delta_v - I/load_g), which bows the transfer at high overdrive; the
closed form below solves that self-consistency exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

IDEAL_LOAD = math.inf

# Transconductance giving a 1 uA full-scale row current at the default
# 0.6 V maximum overdrive and 50 mV source offset.
_DEFAULT_K_BETA = 1e-6 / (0.6 * 0.05)


@dataclass(frozen=True)
class DtcsParams:
    """Operating point of one current-source transistor.

    v_dd: supply rail, V.
    v_t: threshold voltage, V.
    k_beta: transconductance factor times device width, A/V^2.
    delta_v: regulated source bias offset across the device, V.
    polarity: which crossbar rail this source drives.
    """

    v_dd: float = 1.0
    v_t: float = 0.4
    k_beta: float = _DEFAULT_K_BETA
    delta_v: float = 0.050
    polarity: str = "positive"

    def __post_init__(self):
        if not (self.v_dd > self.v_t > 0.0):
            raise ConfigError("need v_dd > v_t > 0")
        if self.k_beta <= 0.0:
            raise ConfigError("k_beta must be positive")
        if self.delta_v <= 0.0:
            raise ConfigError("delta_v must be positive")
        if self.polarity not in ("positive", "negative"):
            raise ConfigError("polarity must be 'positive' or 'negative'")

    @property
    def v_ov_max(self) -> float:
        """Largest usable overdrive, reached at zero gate voltage."""
        return self.v_dd - self.v_t

    def max_current(self, load_g: float = IDEAL_LOAD) -> float:
        """Full-scale current at zero gate voltage into the given load."""
        return float(dtcs_current(0.0, self, load_g))


def overdrive(v_g, params: DtcsParams) -> np.ndarray:
    """Gate overdrive max(v_dd - v_t - v_g, 0); zero at or past cutoff."""
    return np.maximum(params.v_dd - params.v_t - np.asarray(v_g, float), 0.0)


def dtcs_current(v_g, params: DtcsParams, load_g: float = IDEAL_LOAD):
    """Drain current for gate voltage(s) v_g into a bar of total load_g.

    Solves I = k_beta * V_ov * (delta_v - I/load_g), whose closed form is

        I = k_beta * V_ov * delta_v / (1 + k_beta * V_ov / load_g).

    load_g = inf is the ideal current source (no bowing). Scalar in,
    scalar out; array in, array out.
    """
    if math.isnan(load_g) or load_g <= 0.0:
        raise DomainError("load_g must be positive (inf for ideal)")
    v_ov = overdrive(v_g, params)
    ideal = params.k_beta * v_ov * params.delta_v
    i = ideal / (1.0 + params.k_beta * v_ov / load_g)
    return i if isinstance(i, np.ndarray) and i.ndim else float(i)


def encode_input(feature, params: DtcsParams, utilization: float = 1.0):
    """Gate voltage encoding a feature in [0, 1] as a proportional current.

    v_g = (v_dd - v_t) * (1 - utilization * feature): a larger feature
    lowers the gate, raising the overdrive linearly, so the ideal current
    is proportional to the feature and tops out at the chosen fraction of
    the linear range.
    """
    if not (0.0 < utilization <= 1.0):
        raise ConfigError("utilization must be in (0, 1]")
    f = np.asarray(feature, dtype=float)
    if np.any((f < 0.0) | (f > 1.0)) or not np.all(np.isfinite(f)):
        raise DomainError("features must lie in [0, 1]")
    v_g = (params.v_dd - params.v_t) * (1.0 - utilization * f)
    return v_g if v_g.ndim else float(v_g)
