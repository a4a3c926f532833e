import csv
import math

import numpy as np
import pytest

from ehopt.params import ConfigError, SystemParams
from ehopt.vcts import (
    ConstantPowerFluidPolicy,
    ThresholdFluidPolicy,
    VctsTrajectory,
    closed_form_fluid_policy,
    integrate_vcts,
    total_cost,
)

FIG2 = SystemParams(tau=0.1, lambda_bar=1.5, alpha_bar=10.0, N_E=600.0)


def fig2_run(dt=None, T=4000.0):
    pol = ThresholdFluidPolicy(3.5, 40.0, 8.0, FIG2.tau)
    return integrate_vcts(FIG2, pol, 5.0, 0.0, T, dt)


@pytest.fixture(scope="module")
def fig2():
    return fig2_run()


class TestTrivial:
    def test_zero_drift(self):
        p = FIG2.with_(lambda_bar=0.0)
        tr = integrate_vcts(p, ConstantPowerFluidPolicy(0.0, p.tau), 3.0, 1.0, 10.0)
        np.testing.assert_array_equal(tr.q, 3.0)
        assert np.all(tr.L == 0.0)

    def test_cost_of_zero_queue(self):
        t = np.linspace(0, 5, 11)
        z = np.zeros_like(t)
        assert total_cost(VctsTrajectory(t, z, z, z, z, z, z)) == 0.0

    def test_cost_of_ramp(self):
        t = np.linspace(0, 4, 41)
        q = 2.5 * t / 4
        z = np.zeros_like(t)
        assert total_cost(VctsTrajectory(t, q, z, z, z, z, z)) == pytest.approx(2.5 * 4 / 2)

    def test_dt_must_be_below_horizon(self):
        with pytest.raises(ConfigError):
            integrate_vcts(FIG2, ConstantPowerFluidPolicy(1.0, 0.1), 0.0, 0.0, 1.0, dt=1.0)

    def test_initial_state_checked(self):
        with pytest.raises(ConfigError):
            integrate_vcts(FIG2, ConstantPowerFluidPolicy(1.0, 0.1), 0.0, 601.0, 1.0)

    def test_last_step_lands_on_horizon(self):
        tr = integrate_vcts(FIG2, ConstantPowerFluidPolicy(1.0, 0.1), 0.0, 1.0, 1.05, dt=0.1)
        assert tr.times[-1] == pytest.approx(1.05)


class TestFig2:
    def test_invariants(self, fig2):
        assert np.all(fig2.q >= 0.0)
        assert np.all((fig2.e >= 0.0) & (fig2.e <= FIG2.N_E))
        assert fig2.L[0] == 0.0 and fig2.U[0] == 0.0
        assert np.all(np.diff(fig2.L) >= 0.0) and np.all(np.diff(fig2.U) >= 0.0)

    def test_complementarity_exact(self, fig2):
        assert np.sum(fig2.dL * fig2.q) == 0.0
        assert np.sum(fig2.dU * (FIG2.N_E - fig2.e)) == 0.0

    def test_ramp_then_cap(self, fig2):
        # battery first charges at alpha_bar * tau per unit time with the switch off
        k = np.searchsorted(fig2.times, 20.0)
        assert fig2.e[k] == pytest.approx(20.0 * FIG2.alpha_bar * FIG2.tau, rel=1e-9)
        assert fig2.U[-1] > 0.0
        first = np.argmax(fig2.dU > 0)
        assert np.all(np.diff(fig2.e[:first]) >= -1e-12)

    def test_step_halving(self, fig2):
        fine = fig2_run(dt=FIG2.tau / 20)
        c0, c1 = total_cost(fig2), total_cost(fine)
        assert abs(c1 - c0) / c0 < 0.02

    def test_csv(self, fig2, tmp_path):
        path = tmp_path / "traj.csv"
        fig2.to_csv(str(path))
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "q", "e", "L", "U"]
        assert len(rows) == fig2.times.size + 1
        assert float(rows[-1][2]) == fig2.e[-1]


class TestDynamics:
    def test_regime3_energy_settles(self):
        p = SystemParams(tau=0.1, lambda_bar=0.36, alpha_bar=6.0, N_E=600.0)
        tr = integrate_vcts(p, closed_form_fluid_policy(p), 2.0, 5.0, 20.0)
        assert tr.e[-1] == pytest.approx(p.alpha_bar * p.tau, rel=1e-2)

    def test_euler_order_one(self):
        # under p = e/tau the energy obeys e' = alpha tau - e exactly
        p = SystemParams(tau=0.1, lambda_bar=0.36, alpha_bar=6.0, N_E=600.0)
        errs = []
        for dt in (0.02, 0.01, 0.005):
            tr = integrate_vcts(p, closed_form_fluid_policy(p), 1.0, 3.0, 5.0, dt)
            exact = (3.0 - 0.6) * np.exp(-tr.times) + 0.6
            errs.append(np.max(np.abs(tr.e - exact)))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        np.testing.assert_allclose(ratios, 2.0, rtol=0.05)

    def test_reflection_only_at_boundary(self):
        p = SystemParams(tau=0.1, lambda_bar=0.5, alpha_bar=10.0, N_E=2.0)
        tr = integrate_vcts(p, ConstantPowerFluidPolicy(5.0, p.tau), 1.0, 1.0, 200.0)
        assert tr.L[-1] > 0.0 and tr.U[-1] > 0.0
        assert np.all(tr.q[tr.dL > 0] == 0.0)
        assert np.all(tr.e[tr.dU > 0] == p.N_E)

    def test_threshold_hysteresis(self):
        pol = ThresholdFluidPolicy(1.0, 5.0, 3.0, 0.1)
        assert pol(0.0, 3.0) == (0.0, 0.0)
        rate, power = pol(0.0, 6.0)
        assert power == 3.0 and rate > 0
        assert pol(0.0, 3.0)[1] == 3.0
        assert pol(0.0, 0.5) == (0.0, 0.0)
        with pytest.raises(ConfigError):
            ThresholdFluidPolicy(5.0, 1.0, 3.0, 0.1)

    def test_constant_power_capped_by_battery(self):
        pol = ConstantPowerFluidPolicy(8.0, 0.1)
        assert pol(0.0, 0.2)[1] == pytest.approx(2.0)
