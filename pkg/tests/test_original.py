"""Tests for the repeater with depolarizing gates and imperfect detectors."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repeater_qkd.core_states import BellDiagonalState, DomainError, secret_fraction
from repeater_qkd.original import (
    DepolarizingGate,
    DetectorModel,
    OriginalParams,
    bell_diagonal_matrix,
    bell_weights,
    brute_force_two_pair_oracle,
    chain_evaluate,
    detection_gamma,
    distill_map,
    distill_success_closed_form,
    initial_success_probability,
    raw_key_rate,
    secret_key_rate_original,
    swap_map,
    swap_success_probability,
)
from repeater_qkd.rate_engine import a_factor, p_l0_recursion, rate_deterministic, transmittivity

PHI = BellDiagonalState(1.0, 0.0, 0.0, 0.0)
WERNER = BellDiagonalState(0.7, 0.1, 0.1, 0.1)

probs = st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4).filter(lambda w: sum(w) > 1e-3)


def _state(w):
    return BellDiagonalState.from_array(np.array(w) / sum(w), renormalize=True)


class TestDetection:
    def test_initial_success(self):
        assert initial_success_probability(0.0) == 1.0
        assert initial_success_probability(75.0) == pytest.approx(0.053088444423098846, rel=1e-12)
        assert initial_success_probability(150.0) == pytest.approx(0.002818382931264455, rel=1e-12)

    def test_gamma_trivial(self):
        assert detection_gamma(DetectorModel(1.0, 0.3)) == 1.0
        assert detection_gamma(DetectorModel(0.2, 0.0)) == 1.0

    def test_gamma_value(self):
        assert detection_gamma(DetectorModel(0.1, 1e-5)) == pytest.approx(0.100009 / 0.100018, rel=1e-12)

    def test_swap_success(self):
        assert swap_success_probability(DetectorModel(1.0, 0.0)) == 1.0
        assert swap_success_probability(DetectorModel(0.9, 0.0)) == pytest.approx(0.81)

    def test_detector_domain(self):
        with pytest.raises(DomainError):
            DetectorModel(0.0)
        with pytest.raises(DomainError):
            DetectorModel(0.5, 1.0)

    def test_dark_counts_negligible(self):
        # Per swap level the dark-count factor on the success probability stays below 1.03.
        for eta in (0.1, 0.5, 0.9):
            ratio = swap_success_probability(DetectorModel(eta, 1e-5)) / swap_success_probability(DetectorModel(eta))
            assert 1.0 / 1.03 < ratio < 1.03
            assert 1.0 - detection_gamma(DetectorModel(eta, 1e-5)) < 1e-3


class TestSwap:
    def test_pure(self):
        assert swap_map(PHI, PHI).as_array() == pytest.approx([1, 0, 0, 0])

    def test_werner(self):
        out = swap_map(WERNER, WERNER)
        assert out.as_array() == pytest.approx([0.52, 0.16, 0.16, 0.16], abs=1e-15)
        assert out.A == pytest.approx(0.7**2 + 0.3**2 / 3)

    def test_full_depolarization(self):
        out = swap_map(WERNER, PHI, DepolarizingGate(0.0), 0.9)
        assert out.as_array() == pytest.approx([0.25] * 4)

    def test_gamma_domain(self):
        with pytest.raises(DomainError):
            swap_map(PHI, PHI, DepolarizingGate(), 1.5)

    @settings(max_examples=40, deadline=None)
    @given(probs, probs, st.floats(0.0, 1.0), st.floats(0.5, 1.0))
    def test_matches_density_operator_oracle(self, w1, w2, p_G, gamma):
        left, right = _state(w1), _state(w2)
        fast = swap_map(left, right, DepolarizingGate(p_G), gamma).as_array()
        slow = brute_force_two_pair_oracle(left, right, DepolarizingGate(p_G), gamma).as_array()
        assert np.abs(fast - slow).max() < 1e-10

    @given(probs, probs, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_normalized(self, w1, w2, p_G, gamma):
        out = swap_map(_state(w1), _state(w2), DepolarizingGate(p_G), gamma)
        assert out.as_array().sum() == pytest.approx(1.0, abs=1e-12)

    @given(probs, probs)
    def test_symmetric_in_inputs(self, w1, w2):
        a = swap_map(_state(w1), _state(w2), DepolarizingGate(0.97), 0.9).as_array()
        b = swap_map(_state(w2), _state(w1), DepolarizingGate(0.97), 0.9).as_array()
        assert a == pytest.approx(b, abs=1e-14)


class TestOracle:
    def test_pure(self):
        assert brute_force_two_pair_oracle(PHI, PHI).as_array() == pytest.approx([1, 0, 0, 0], abs=1e-14)

    def test_depolarizing(self):
        out = brute_force_two_pair_oracle(WERNER, PHI, DepolarizingGate(0.0))
        assert out.as_array() == pytest.approx([0.25] * 4, abs=1e-14)

    def test_bell_roundtrip(self):
        w = np.array([0.4, 0.3, 0.2, 0.1])
        assert bell_weights(bell_diagonal_matrix(BellDiagonalState(*w))) == pytest.approx(w)


class TestDistill:
    def test_pure(self):
        out, p = distill_map(PHI)
        assert out.as_array() == pytest.approx([1, 0, 0, 0])
        assert p == 1.0

    def test_werner(self):
        out, p = distill_map(WERNER)
        assert p == pytest.approx(0.68)
        assert out.as_array() == pytest.approx([0.5 / 0.68, 0.14 / 0.68, 0.02 / 0.68, 0.02 / 0.68], abs=1e-15)

    def test_fixed_point(self):
        out, p = distill_map(BellDiagonalState(0.25, 0.25, 0.25, 0.25))
        assert out.as_array() == pytest.approx([0.25] * 4)
        assert p == pytest.approx(0.5)

    @given(probs, st.floats(0.0, 1.0))
    def test_success_closed_form(self, w, p_G):
        s = _state(w)
        _, p = distill_map(s, DepolarizingGate(p_G))
        assert p == pytest.approx(distill_success_closed_form(s, DepolarizingGate(p_G)), abs=1e-12)

    @given(probs, st.floats(0.0, 1.0))
    def test_normalized(self, w, p_G):
        out, p = distill_map(_state(w), DepolarizingGate(p_G))
        assert out.as_array().sum() == pytest.approx(1.0, abs=1e-12)
        assert 0.0 < p <= 1.0


class TestChain:
    @pytest.mark.parametrize("N", range(0, 5))
    def test_perfect(self, N):
        s, p_ds = chain_evaluate(1.0, DepolarizingGate(1.0), 1.0, N, 0)
        assert s.as_array() == pytest.approx([1, 0, 0, 0])
        assert p_ds == []

    def test_single_segment(self):
        s, _ = chain_evaluate(0.9, DepolarizingGate(1.0), 1.0, 0, 0)
        assert secret_fraction(s, "bb84") > 0
        assert s.B + s.D == pytest.approx(1 / 15)

    def test_threshold_state(self):
        s, _ = chain_evaluate(0.835, DepolarizingGate(1.0), 1.0, 0, 0)
        assert abs(secret_fraction(s, "bb84")) < 2e-3

    @given(st.integers(0, 4), st.integers(0, 3), st.floats(0.5, 1.0), st.floats(0.9, 1.0))
    def test_normalized_after_every_map(self, N, k, F0, p_G):
        s, p_ds = chain_evaluate(F0, DepolarizingGate(p_G), 0.99, N, k)
        assert s.as_array().sum() == pytest.approx(1.0, abs=1e-12)
        assert all(0.0 < p <= 1.0 for p in p_ds)


class TestRate:
    def test_ideal_is_deterministic(self):
        params = OriginalParams(1.0, 1.0, 600.0, 2, 0)
        bd = secret_key_rate_original(params)
        T0 = 2.0 * 150.0 / 2e5
        assert bd.r_secret_fraction == pytest.approx(1.0)
        assert bd.r_qkd == pytest.approx(rate_deterministic(T0, 2, transmittivity(150.0)))
        assert bd.meta["rate_model"] == "deterministic"

    def test_lossy_detectors_are_probabilistic(self):
        bd = secret_key_rate_original(OriginalParams(0.99, 1.0, 600.0, 2, 1, DetectorModel(0.9)))
        assert bd.meta["rate_model"] == "probabilistic"
        assert bd.p_click == pytest.approx(0.81)
        assert 2 / 3 <= bd.meta["a"] <= 1.0

    def test_raw_rate_single_segment(self):
        assert raw_key_rate(0.5, 0, 0, 0.2, [], DetectorModel(1.0)) == pytest.approx(0.2 / 0.5)

    def test_raw_rate_detector_scaling(self):
        # eta_d enters once per swap, per distillation round and in the final measurement.
        L0, N, k = 75.0, 2, 1
        T0, P0 = 2 * L0 / 2e5, transmittivity(L0)
        _, p_ds = chain_evaluate(0.9, DepolarizingGate(1.0), 1.0, N, k)
        r1 = raw_key_rate(T0, N, k, P0, p_ds, DetectorModel(1.0))
        r9 = raw_key_rate(T0, N, k, P0, p_ds, DetectorModel(0.9))
        a1 = a_factor(p_l0_recursion(P0, p_ds)[-1])
        a9 = a_factor(p_l0_recursion(P0, [0.81 * x for x in p_ds])[-1])
        assert r9 / r1 == pytest.approx(0.9 ** (2 * (N + k + 1)) * (a1 / a9) ** (N + k), rel=1e-12)
        assert r9 / r1 == pytest.approx(0.4305, rel=0.01)

    def test_rate_monotone_in_distance(self):
        rates = [secret_key_rate_original(OriginalParams(0.97, 1.0, L, 2, 1)).r_qkd for L in (200, 400, 800)]
        assert rates[0] > rates[1] > rates[2] > 0

    def test_no_key_below_threshold(self):
        assert secret_key_rate_original(OriginalParams(0.8, 1.0, 300.0, 0, 0)).r_qkd == 0.0

    def test_dark_counts_negligible_in_rate(self):
        base = secret_key_rate_original(OriginalParams(0.97, 1.0, 600.0, 3, 1, DetectorModel(0.9)))
        dark = secret_key_rate_original(OriginalParams(0.97, 1.0, 600.0, 3, 1, DetectorModel(0.9, 1e-5)))
        per_level = (dark.r_qkd / base.r_qkd) ** (1.0 / 3)
        assert 1.0 / 1.03 < per_level < 1.03
