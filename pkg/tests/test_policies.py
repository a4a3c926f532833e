import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ehopt.params import ConfigError, SystemParams
from ehopt.policies import (
    ClosedFormPolicy,
    CsiWaterFillingPolicy,
    DualState,
    GreedyPolicy,
    QueueWeightedWaterFillingPolicy,
    SystemState,
    TablePolicy,
    is_feasible,
    make_policy,
    power_closed_form,
    power_csi_wf,
    power_greedy,
    power_qwwf,
    update_multiplier,
)
from ehopt.priority import water_level

LARGE = SystemParams(tau=0.1, lambda_bar=1.84, alpha_bar=10.0, N_E=600.0)
LIMITED = SystemParams(tau=0.1, lambda_bar=0.36, alpha_bar=1.0, N_E=600.0)
SUFFICIENT = SystemParams(tau=0.1, lambda_bar=0.36, alpha_bar=6.0, N_E=600.0)
ALL = [LARGE, LIMITED, SUFFICIENT]

states = st.builds(SystemState, h2=st.floats(0.0, 50.0), Q=st.floats(0.0, 500.0),
                   E=st.floats(0.0, 600.0))


class TestClosedForm:
    def test_empty_battery(self):
        assert power_closed_form(SystemState(2.0, 5.0, 0.0), LARGE) == 0.0

    def test_level_below_inverse_gain(self):
        q, e = 0.0, 0.5
        w = water_level(q, e, LARGE)
        h2 = 0.9 / w
        assert power_closed_form(SystemState(h2, q, e), LARGE) == 0.0

    def test_formula(self):
        q, e, h2 = 0.02, 0.6, 3.0
        w = water_level(q, e, LARGE)
        expect = min(max(w - 1 / h2, 0.0), e / LARGE.tau)
        assert power_closed_form(SystemState(h2, q, e), LARGE) == pytest.approx(expect)

    @pytest.mark.parametrize("params", ALL)
    def test_above_threshold_spends_battery(self, params):
        pol = ClosedFormPolicy(params)
        e = 1.2 * pol.e_th
        for h2 in (1e-3, 0.5, 7.0):
            assert power_closed_form(SystemState(h2, 3.0, e), params) == e / params.tau

    def test_zero_channel(self):
        assert power_closed_form(SystemState(0.0, 3.0, 0.5), LARGE) == 0.0

    @settings(max_examples=300, deadline=None)
    @given(states)
    def test_class_matches_function(self, s):
        for params in ALL:
            pol = ClosedFormPolicy(params)
            assert pol.power(s.h2, s.Q, s.E) == pytest.approx(
                power_closed_form(s, params), rel=1e-12, abs=1e-12)

    def test_infeasible_parameters(self):
        with pytest.raises(ValueError):
            ClosedFormPolicy(LARGE.with_(lambda_bar=3.0))


class TestBaselines:
    def test_greedy_example(self):
        s = SystemState(1.0, 0.0, 100.0)
        assert power_greedy(s, LARGE, 0.5) == 9.5

    def test_greedy_battery_limited(self):
        s = SystemState(1.0, 0.0, 0.2)
        assert power_greedy(s, LARGE, 0.5) == pytest.approx(2.0)
        assert power_greedy(SystemState(1.0, 0.0, 0.0), LARGE) == 0.0

    @pytest.mark.parametrize("eps", [0.0, 10.0, 12.0])
    def test_greedy_epsilon_range(self, eps):
        with pytest.raises(ConfigError):
            power_greedy(SystemState(1.0, 0.0, 1.0), LARGE, eps)

    def test_csi_wf(self):
        d = DualState(gamma=0.25)
        assert power_csi_wf(SystemState(2.0, 0.0, 100.0), d, LARGE) == pytest.approx(3.5)
        assert power_csi_wf(SystemState(0.2, 0.0, 100.0), d, LARGE) == 0.0
        assert power_csi_wf(SystemState(2.0, 0.0, 0.1), d, LARGE) == pytest.approx(1.0)

    def test_csi_wf_zero_multiplier_spends_battery(self):
        d = DualState(gamma=0.0)
        assert power_csi_wf(SystemState(0.01, 0.0, 0.3), d, LARGE) == pytest.approx(3.0)

    def test_qwwf(self):
        d = DualState(gamma=0.5)
        assert power_qwwf(SystemState(1.0, 3.0, 100.0), d, LARGE) == pytest.approx(5.0)
        assert power_qwwf(SystemState(1.0, 0.0, 100.0), d, LARGE) == 0.0

    def test_multiplier_step(self):
        d = DualState(gamma=0.1, t=0, epsilon=0.5, a0=0.1)
        d1 = update_multiplier(d, p_used=12.0, alpha_bar=10.0)
        assert d1.gamma == pytest.approx(0.1 + 0.1 * 2.5)
        assert d1.t == 1
        d2 = update_multiplier(d1, p_used=0.0, alpha_bar=10.0)
        assert d2.gamma == pytest.approx(max(d1.gamma + 0.05 * (-9.5), 0.0))
        assert d2.gamma == 0.0

    def test_initial_dual(self):
        d = DualState.initial(10.0)
        assert d.gamma == pytest.approx(0.1) and d.epsilon == pytest.approx(0.5)

    def test_learning_stops_at_freeze(self):
        pol = CsiWaterFillingPolicy(LARGE)
        pol.observe(20.0)
        g = pol.dual.gamma
        assert g > 0.1
        pol.freeze()
        pol.observe(50.0)
        assert pol.dual.gamma == g

    def test_dual_learns_mean_power(self):
        rng = np.random.default_rng(0)
        pol = CsiWaterFillingPolicy(LARGE, a0=1.0)
        used = []
        for h in rng.standard_exponential(200_000):
            p = pol.power(h, 0.0, 2.0)
            pol.observe(p)
            used.append(p)
        # the multiplier targets alpha_bar - epsilon
        assert np.mean(used[-50_000:]) == pytest.approx(9.5, rel=0.05)


class TestFeasibility:
    @settings(max_examples=400, deadline=None)
    @given(states, st.floats(1e-3, 10.0))
    def test_every_policy_respects_battery(self, s, gamma):
        for params in ALL:
            pols = [make_policy(n, params) for n in ("closed_form", "greedy", "csi_wf", "qwwf")]
            for pol in pols[2:]:
                pol.dual = DualState(gamma=gamma)
            for pol in pols:
                p = pol.power(s.h2, s.Q, s.E)
                assert p >= 0.0
                assert is_feasible(p, s.E, params.tau), pol.name

    def test_is_feasible_tolerance(self):
        assert is_feasible(10.0, 1.0, 0.1)
        assert not is_feasible(10.0 * (1 + 1e-9), 1.0, 0.1)
        assert not is_feasible(-1.0, 1.0, 0.1)


class TestTablePolicy:
    def setup_method(self):
        self.q = np.linspace(0, 10, 6)
        self.e = np.linspace(0, 4, 5)
        self.edges = np.array([0.0, 1.0, np.inf])
        tab = np.zeros((2, 6, 5))
        tab[:, :, :] = self.e[None, None, :] / 0.1 * 0.5
        tab[1] *= 2.0
        self.pol = TablePolicy(tab, self.q, self.e, self.edges, 0.1)

    def test_lookup(self):
        assert self.pol.power(0.5, 3.0, 2.0) == pytest.approx(10.0)
        assert self.pol.power(1.5, 3.0, 2.0) == pytest.approx(20.0)

    def test_energy_rounds_down(self):
        # E = 2.9 maps to the grid level 2, so p tau stays below E
        p = self.pol.power(1.5, 3.0, 2.9)
        assert p == pytest.approx(20.0)
        assert is_feasible(p, 2.9, 0.1)

    def test_shape_mismatch(self):
        with pytest.raises(ConfigError):
            TablePolicy(np.zeros((3, 6, 5)), self.q, self.e, self.edges, 0.1)


class TestFactory:
    def test_names(self):
        assert isinstance(make_policy("greedy", LARGE), GreedyPolicy)
        assert isinstance(make_policy("qwwf", LARGE), QueueWeightedWaterFillingPolicy)

    def test_unknown(self):
        with pytest.raises(ConfigError):
            make_policy("oracle", LARGE)

    def test_table_needs_solution(self):
        with pytest.raises(ConfigError):
            make_policy("mdp_table", LARGE)
