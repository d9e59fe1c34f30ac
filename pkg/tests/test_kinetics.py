import numpy as np
import pytest

import opsinloop as ol
from opsinloop.errors import ContractError
from opsinloop.kinetics import GAIN_INDICES


class TestModelKind:
    def test_dimensions(self):
        assert ol.ModelKind.THREE_STATE.state_dim == 2
        assert ol.ModelKind.FOUR_STATE.state_dim == 3
        assert ol.ModelKind.SIX_STATE.state_dim == 5

    def test_param_counts(self):
        assert ol.ModelKind.THREE_STATE.param_count == 4
        assert ol.ModelKind.FOUR_STATE.param_count == 9
        assert ol.ModelKind.SIX_STATE.param_count == 11

    def test_complexity_orders_kinds(self):
        kinds = sorted(ol.ModelKind, key=lambda k: k.complexity)
        assert [k.label for k in kinds] == ["three", "four", "six"]

    def test_from_label(self):
        assert ol.ModelKind.from_label("six") is ol.ModelKind.SIX_STATE
        with pytest.raises(ContractError):
            ol.ModelKind.from_label("five")


class TestTableParams:
    def test_lengths_match_kind(self):
        for kind in ol.ModelKind:
            assert ol.table_params(kind).shape == (kind.param_count,)

    def test_three_state_values(self):
        np.testing.assert_allclose(ol.table_params(ol.ModelKind.THREE_STATE),
                                   [0.24, 0.053, 0.02, -0.533])

    def test_copies_are_independent(self):
        a = ol.table_params(ol.ModelKind.FOUR_STATE)
        a[0] = 99.0
        assert ol.table_params(ol.ModelKind.FOUR_STATE)[0] == 0.250


class TestRandomParameters:
    def test_ranges(self):
        rng = np.random.default_rng(0)
        for kind in ol.ModelKind:
            for _ in range(50):
                theta = ol.random_parameters(kind, rng)
                gains = set(GAIN_INDICES[kind])
                for i, v in enumerate(theta):
                    if i in gains:
                        assert -1.0 <= v <= -0.05
                    else:
                        assert 0.01 <= v <= 1.0

    def test_deterministic_per_rng_state(self):
        a = ol.random_parameters(ol.ModelKind.SIX_STATE, np.random.default_rng(5))
        b = ol.random_parameters(ol.ModelKind.SIX_STATE, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)


class TestDrift:
    def test_three_state_at_rest_under_unit_light(self):
        theta = ol.table_params(ol.ModelKind.THREE_STATE)
        d = ol.drift(ol.ModelKind.THREE_STATE, [0.0, 0.0], 1.0, theta)
        np.testing.assert_allclose(d, [0.24, 0.0])

    def test_three_state_hand_value(self):
        # x = (0.3, 0.2), u = 2: f1 = 0.24*2*0.5 - 0.053*0.3 = 0.2241
        #                         f2 = 0.053*0.3 - 0.02*2*0.2 = 0.0079
        theta = ol.table_params(ol.ModelKind.THREE_STATE)
        d = ol.drift(ol.ModelKind.THREE_STATE, [0.3, 0.2], 2.0, theta)
        np.testing.assert_allclose(d, [0.2241, 0.0079], rtol=1e-12)

    def test_rest_is_fixed_point_in_darkness(self):
        for kind in ol.ModelKind:
            d = ol.drift(kind, ol.rest_state(kind), 0.0, ol.table_params(kind))
            np.testing.assert_allclose(d, np.zeros(kind.state_dim), atol=1e-15)

    def test_full_drift_conserves_mass(self):
        rng = np.random.default_rng(1)
        for kind in ol.ModelKind:
            theta = ol.random_parameters(kind, rng)
            x = rng.dirichlet(np.ones(kind.n_states))
            d = ol.drift_full(kind, x, 3.7, theta)
            assert abs(d.sum()) < 1e-15
            np.testing.assert_allclose(
                d[:-1], ol.drift(kind, x[:-1], 3.7, theta), rtol=1e-12, atol=1e-15)

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ContractError):
            ol.drift(ol.ModelKind.THREE_STATE, [0.1, 0.1, 0.1], 1.0,
                     ol.table_params(ol.ModelKind.THREE_STATE))
        with pytest.raises(ContractError):
            ol.drift(ol.ModelKind.THREE_STATE, [0.1, 0.1], 1.0, [0.1, 0.2])


class TestObserve:
    def test_three_state_photocurrent(self):
        theta = ol.table_params(ol.ModelKind.THREE_STATE)
        assert ol.observe(ol.ModelKind.THREE_STATE, [0.5, 0.1], theta) == \
            pytest.approx(-0.2665, rel=1e-12)

    def test_six_state_uses_two_conducting_states(self):
        theta = ol.table_params(ol.ModelKind.SIX_STATE)
        # y = theta11 * x2 + theta10 * x3 = -0.186*0.2 + -0.825*0.3
        y = ol.observe(ol.ModelKind.SIX_STATE, [0.1, 0.2, 0.3, 0.05, 0.15], theta)
        assert y == pytest.approx(-0.2847, rel=1e-12)

    def test_rest_current_is_zero(self):
        for kind in ol.ModelKind:
            assert ol.observe(kind, ol.rest_state(kind), ol.table_params(kind)) == 0.0

    def test_gains_consistent_with_observe(self):
        rng = np.random.default_rng(2)
        for kind in ol.ModelKind:
            theta = ol.random_parameters(kind, rng)
            x = rng.uniform(0.0, 0.2, kind.state_dim)
            assert ol.observe(kind, x, theta) == pytest.approx(
                float(ol.observation_gains(kind, theta) @ x), rel=1e-14)


class TestModelInstance:
    def test_freezes_theta(self):
        inst = ol.table_instance(ol.ModelKind.THREE_STATE)
        with pytest.raises(ValueError):
            inst.theta[0] = 1.0

    def test_with_theta_returns_new_instance(self):
        inst = ol.table_instance(ol.ModelKind.THREE_STATE)
        other = inst.with_theta([0.1, 0.1, 0.1, -0.5])
        assert other is not inst
        assert inst.theta[0] == 0.24

    def test_rejects_wrong_arity(self):
        with pytest.raises(ContractError):
            ol.ModelInstance(ol.ModelKind.FOUR_STATE, [0.1, 0.2])
