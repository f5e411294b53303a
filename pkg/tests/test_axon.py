"""Current-source transistor transfer and input-encoding tests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinann.axon import (
    IDEAL_LOAD,
    DtcsParams,
    dtcs_current,
    encode_input,
    overdrive,
)
from spinann.errors import ConfigError, DomainError


class TestIdealLaw:
    def test_linear_in_overdrive(self):
        p = DtcsParams()
        for v_g in (0.0, 0.1, 0.25, 0.4, 0.55):
            v_ov = p.v_dd - p.v_t - v_g
            assert dtcs_current(v_g, p) == pytest.approx(
                p.k_beta * v_ov * p.delta_v, rel=1e-14)

    def test_default_full_scale_is_one_microamp(self):
        p = DtcsParams()
        assert p.max_current() == pytest.approx(1e-6, rel=1e-12)

    def test_cutoff_gives_zero(self):
        p = DtcsParams()
        assert dtcs_current(p.v_dd - p.v_t, p) == 0.0
        assert dtcs_current(p.v_dd, p) == 0.0
        assert dtcs_current(2.0, p) == 0.0

    def test_array_input(self):
        p = DtcsParams()
        v_g = np.linspace(0.0, 0.8, 33)
        i = dtcs_current(v_g, p)
        assert i.shape == v_g.shape
        np.testing.assert_allclose(
            i, p.k_beta * overdrive(v_g, p) * p.delta_v, rtol=1e-14)


class TestLoadedBowing:
    def test_loaded_current_below_ideal_by_divider_factor(self):
        p = DtcsParams()
        load = 1e-3
        v_g = np.linspace(0.0, 0.55, 12)
        ideal = dtcs_current(v_g, p)
        loaded = dtcs_current(v_g, p, load)
        v_ov = overdrive(v_g, p)
        np.testing.assert_allclose(
            loaded, ideal / (1.0 + p.k_beta * v_ov / load), rtol=1e-14)

    def test_deviation_grows_with_overdrive(self):
        p = DtcsParams(k_beta=2e-2)  # heavy device to make the bowing visible
        load = 1e-3
        v_g = np.linspace(0.55, 0.0, 20)  # overdrive increasing
        ideal = dtcs_current(v_g, p)
        loaded = dtcs_current(v_g, p, load)
        rel_dev = 1.0 - loaded[ideal > 0] / ideal[ideal > 0]
        assert np.all(np.diff(rel_dev) > 0.0)

    def test_bounded_by_ideal(self):
        p = DtcsParams()
        v_g = np.linspace(-0.2, 0.8, 50)
        loaded = dtcs_current(v_g, p, 2e-4)
        ideal = dtcs_current(v_g, p)
        assert np.all(loaded >= 0.0)
        assert np.all(loaded <= ideal + 1e-24)

    @given(
        st.floats(min_value=0.5, max_value=2.0),
        st.floats(min_value=0.1, max_value=0.45),
        st.floats(min_value=1e-6, max_value=1e-1),
        st.floats(min_value=1e-3, max_value=0.2),
        st.floats(min_value=-0.5, max_value=1.0),
        st.floats(min_value=1e-5, max_value=1e-2),
    )
    @settings(max_examples=200, deadline=None)
    def test_self_consistent_triode_relation(self, v_dd, v_t_frac, k_beta,
                                             delta_v, v_g, load_g):
        v_t = v_dd * v_t_frac
        p = DtcsParams(v_dd=v_dd, v_t=v_t, k_beta=k_beta, delta_v=delta_v)
        i = dtcs_current(v_g, p, load_g)
        v_ov = float(overdrive(v_g, p))
        implicit = p.k_beta * v_ov * (p.delta_v - i / load_g)
        # Residual scaled by the ideal current: evaluating the implicit
        # form subtracts nearly equal voltages under heavy degeneration,
        # so the raw result is the wrong yardstick for roundoff.
        ideal = p.k_beta * v_ov * p.delta_v
        assert abs(i - implicit) <= 1e-12 * ideal + 1e-30

    def test_monotone_nonincreasing_in_gate(self):
        p = DtcsParams()
        v_g = np.linspace(-0.1, 0.9, 101)
        i = dtcs_current(v_g, p, 5e-4)
        assert np.all(np.diff(i) <= 0.0)

    def test_monotone_nondecreasing_in_load(self):
        p = DtcsParams()
        loads = [1e-5, 1e-4, 1e-3, 1e-2, IDEAL_LOAD]
        currents = [dtcs_current(0.1, p, g) for g in loads]
        assert all(b >= a for a, b in zip(currents, currents[1:]))

    def test_bad_load_rejected(self):
        p = DtcsParams()
        for load in (0.0, -1e-3, math.nan):
            with pytest.raises(DomainError):
                dtcs_current(0.1, p, load)


class TestEncodeInput:
    def test_zero_feature_zero_current(self):
        p = DtcsParams()
        v_g = encode_input(0.0, p)
        assert v_g == pytest.approx(p.v_dd - p.v_t)
        assert dtcs_current(v_g, p) == 0.0

    def test_full_feature_full_current(self):
        p = DtcsParams()
        assert encode_input(1.0, p, utilization=1.0) == pytest.approx(0.0,
                                                                      abs=1e-18)
        i = dtcs_current(encode_input(1.0, p), p)
        assert i == pytest.approx(p.max_current(), rel=1e-12)

    def test_half_feature_half_ideal_current(self):
        p = DtcsParams()
        i_half = dtcs_current(encode_input(0.5, p), p)
        i_full = dtcs_current(encode_input(1.0, p), p)
        assert i_half == pytest.approx(0.5 * i_full, rel=1e-12)

    def test_utilization_caps_the_range(self):
        p = DtcsParams()
        u = 0.6
        i = dtcs_current(encode_input(1.0, p, utilization=u), p)
        assert i == pytest.approx(u * p.max_current(), rel=1e-12)

    def test_proportionality_across_features(self):
        p = DtcsParams()
        f = np.linspace(0.0, 1.0, 21)
        i = dtcs_current(encode_input(f, p, utilization=0.8), p)
        np.testing.assert_allclose(i, f * i[-1], rtol=1e-12, atol=1e-24)

    def test_out_of_range_feature_rejected(self):
        p = DtcsParams()
        for f in (-0.01, 1.01, math.nan):
            with pytest.raises(DomainError):
                encode_input(f, p)

    def test_bad_utilization_rejected(self):
        p = DtcsParams()
        for u in (0.0, -0.5, 1.5):
            with pytest.raises(ConfigError):
                encode_input(0.5, p, utilization=u)


class TestParams:
    @pytest.mark.parametrize("kwargs", [
        {"v_dd": 0.3, "v_t": 0.4},
        {"v_t": 0.0},
        {"v_t": -0.1},
        {"k_beta": 0.0},
        {"delta_v": 0.0},
        {"polarity": "bipolar"},
    ])
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            DtcsParams(**kwargs)

    def test_polarity_tags(self):
        assert DtcsParams(polarity="negative").polarity == "negative"
        assert DtcsParams().polarity == "positive"

    def test_overdrive_ceiling(self):
        p = DtcsParams(v_dd=1.2, v_t=0.5)
        assert p.v_ov_max == pytest.approx(0.7)
