import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.exceptions.lab import BoundsError, LedgerError
from app.schemas.bounds import LifespanModel
from app.schemas.ledger import COMPRESSIBLE_COLUMNS, RunLedger
from app.schemas.solver import StepperConfig
from app.services.bounds import BoundsServices
from app.services.compressible import CompressibleServices
from app.services.incompressible import IncompressibleServices
from app.services.initial_data import InitialDataServices
from app.services.littlewood_paley import LittlewoodPaleyServices
from app.services.spectral import SpectralServices

eps_strategy = st.floats(min_value=1e-12, max_value=0.3, allow_nan=False, allow_infinity=False)


def _model(kind: str, alpha: float) -> LifespanModel:
    return LifespanModel.from_profile(LittlewoodPaleyServices.closed_form_profile(kind, alpha, 8))


def _synthetic_ledger(eps: float, T: float = 1.0, samples: int = 21) -> RunLedger:
    """Compressible ledger whose acoustic columns scale like eps and eps^(1/4)."""
    ledger = RunLedger.compressible(f"eps={eps:g}")
    for t in np.linspace(0.0, T, samples):
        row = {column: 1.0 for column in COMPRESSIBLE_COLUMNS}
        row.update(
            t=float(t), acoustic_inf=eps * (1.0 + t), div_b0_inf1=eps * (1.0 + t), grad_c_b0_inf1=0.5 * eps,
            qv_c_inf=eps**0.25, grad_v_inf=0.5, grad_c_inf=0.5,
        )
        ledger.append(row)
    return ledger


class TestLifespan:
    @given(eps=eps_strategy)
    @settings(max_examples=30, deadline=None)
    def test_exp_profile_closed_form(self, eps):
        prediction = BoundsServices.lifespan_prediction(_model("exp", 1.0), eps)
        assert prediction.defined
        assert prediction.T == pytest.approx(math.log(math.log(1.0 / eps)), rel=1e-12, abs=1e-12)

    @given(eps=eps_strategy)
    @settings(max_examples=30, deadline=None)
    def test_power_profile_closed_form(self, eps):
        prediction = BoundsServices.lifespan_prediction(_model("power", 2.0), eps)
        expected = math.log(2.0 * math.log(math.log(1.0 / eps) + 2.0))
        assert prediction.T == pytest.approx(expected, rel=1e-12)

    def test_undefined_below_e(self):
        prediction = BoundsServices.lifespan_prediction(_model("exp", 1.0), 0.9)
        assert not prediction.defined
        assert prediction.T == 0.0
        assert math.isnan(prediction.ratio)

    def test_lifespan_grows_as_eps_shrinks(self):
        model = _model("exp", 1.0)
        lifespans = [BoundsServices.lifespan_prediction(model, e).T for e in (1e-2, 1e-4, 1e-8, 1e-12)]
        assert np.all(np.diff(lifespans) > 0)

    def test_phi_decreases_with_eps(self):
        model = _model("power", 2.0)
        phi = [BoundsServices.phi_of_eps(model, e) for e in (0.5, 0.1, 0.01)]
        assert np.all(np.diff(phi) < 0)

    def test_constant_c0_scales_lifespan(self):
        base = BoundsServices.lifespan_prediction(_model("exp", 1.0), 1e-6).T
        profile = LittlewoodPaleyServices.closed_form_profile("exp", 1.0, 8)
        scaled = BoundsServices.lifespan_prediction(LifespanModel.from_profile(profile, C0=2.0), 1e-6).T
        assert scaled == pytest.approx(base / 2.0)

    @pytest.mark.parametrize("eps, expected", [(2.0**-16, 2), (1e-8, 4), (0.5, 1)])
    def test_cutoff_N(self, eps, expected):
        assert BoundsServices.cutoff_N(eps) == expected

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.1, 2.0])
    def test_rejects_eps_outside_unit_interval(self, eps):
        with pytest.raises(BoundsError):
            BoundsServices.phi_of_eps(_model("exp", 1.0), eps)


class TestLedgerBounds:
    def test_acoustic_decay_on_scaling_ledgers(self):
        runs = [(eps, _synthetic_ledger(eps)) for eps in (0.2, 0.1, 0.05)]
        report = BoundsServices.check_acoustic_decay(runs, _model("exp", 1.0))
        assert report.passed
        assert [row[0] for row in report.rows] == [0.2, 0.1, 0.05]

    def test_acoustic_decay_requires_common_end_time(self):
        runs = [(0.2, _synthetic_ledger(0.2)), (0.1, _synthetic_ledger(0.1, T=0.5))]
        with pytest.raises(LedgerError):
            BoundsServices.check_acoustic_decay(runs, _model("exp", 1.0))

    def test_acoustic_decay_requires_common_grid(self):
        runs = [(0.2, _synthetic_ledger(0.2)), (0.1, _synthetic_ledger(0.1))]
        with pytest.raises(LedgerError):
            BoundsServices.check_acoustic_decay(runs, _model("exp", 1.0), grids=[32, 64])

    def test_acoustic_decay_fails_when_norms_grow(self):
        runs = [(0.2, _synthetic_ledger(0.1)), (0.1, _synthetic_ledger(0.2))]
        assert not BoundsServices.check_acoustic_decay(runs, _model("exp", 1.0)).passed

    def test_acoustic_decay_uses_b0_norm_of_div_and_grad_c(self):
        runs = [(eps, _synthetic_ledger(eps)) for eps in (0.2, 0.1)]
        report = BoundsServices.check_acoustic_decay(runs, _model("exp", 1.0))
        index = report.columns.index("acoustic_l1_b0")
        for (eps, ledger), row in zip(runs, report.rows):
            expected = max(ledger.final("div_b0_l1"), ledger.final("grad_c_b0_l1"))
            assert row[index] == pytest.approx(expected, rel=1e-12)
            assert row[index] == pytest.approx(1.5 * eps, rel=1e-12)

    def test_acoustic_decay_fails_when_only_b0_norm_grows(self):
        runs = [(eps, _synthetic_ledger(eps)) for eps in (0.2, 0.1)]
        loud = RunLedger.compressible("eps=0.1")
        index = COMPRESSIBLE_COLUMNS.index("grad_c_b0_inf1")
        for row in runs[1][1].rows:
            loud.append(dict(zip(COMPRESSIBLE_COLUMNS, row[:index] + (10.0,) + row[index + 1:])))
        model = _model("exp", 1.0)
        assert not BoundsServices.check_acoustic_decay([runs[0], (0.1, loud)], model).passed
        assert BoundsServices.check_acoustic_decay_linf([runs[0], (0.1, loud)], model).passed

    def test_acoustic_decay_stops_at_horizon(self):
        runs = [(eps, _synthetic_ledger(eps)) for eps in (0.2, 0.1, 0.05)]
        report = BoundsServices.check_acoustic_decay(runs, _model("exp", 1.0), horizon=0.5)
        T, flag, b0 = (report.columns.index(c) for c in ("T", "window_limited", "acoustic_l1_b0"))
        assert report.passed
        for eps, row in zip((0.2, 0.1, 0.05), report.rows):
            assert row[T] == pytest.approx(0.5)
            assert row[flag] == 1.0
            # int_0^0.5 eps (1 + t) dt
            assert row[b0] == pytest.approx(0.625 * eps, rel=1e-12)

    def test_acoustic_decay_horizon_matches_shorter_runs(self):
        model = _model("exp", 1.0)
        long = [(eps, _synthetic_ledger(eps)) for eps in (0.2, 0.1)]
        short = [(eps, _synthetic_ledger(eps, T=0.5, samples=11)) for eps in (0.2, 0.1)]
        cut = BoundsServices.check_acoustic_decay(long, model, horizon=0.5)
        direct = BoundsServices.check_acoustic_decay(short, model)
        for a, b in zip(cut.rows, direct.rows):
            assert a[:6] == pytest.approx(b[:6], rel=1e-12)
        assert [row[6] for row in direct.rows] == [0.0, 0.0]

    def test_horizon_aligns_runs_of_different_length(self):
        runs = [(0.2, _synthetic_ledger(0.2)), (0.1, _synthetic_ledger(0.1, T=0.5))]
        report = BoundsServices.check_acoustic_decay(runs, _model("exp", 1.0), horizon=0.4)
        assert [row[1] for row in report.rows] == pytest.approx([0.4, 0.4])

    def test_horizon_beyond_run_leaves_it_unflagged(self):
        runs = [(eps, _synthetic_ledger(eps)) for eps in (0.2, 0.1)]
        report = BoundsServices.check_acoustic_decay_linf(runs, _model("exp", 1.0), horizon=5.0)
        assert report.passed
        assert [row[4] for row in report.rows] == [0.0, 0.0]
        assert [row[1] for row in report.rows] == [1.0, 1.0]

    def test_strichartz_bound_on_scaling_ledgers(self):
        runs = [(eps, _synthetic_ledger(eps)) for eps in (0.2, 0.1, 0.05)]
        report = BoundsServices.check_strichartz_bound(runs)
        assert report.passed
        assert report.detail.startswith("holdout_ratio=0.5")

    def test_strichartz_bound_stops_at_horizon(self):
        runs = [(eps, _synthetic_ledger(eps)) for eps in (0.2, 0.1, 0.05)]
        report = BoundsServices.check_strichartz_bound(runs, horizon=0.25)
        for eps, row in zip((0.2, 0.1, 0.05), report.rows):
            assert row[1] == pytest.approx(0.25)
            assert row[-1] == 1.0
            # (int_0^0.25 eps dt)^(1/4)
            assert row[2] == pytest.approx((0.25 * eps) ** 0.25, rel=1e-12)

    def test_energy_bound_on_solver_run(self, small_state):
        ledger = CompressibleServices.run(small_state(), 0.1, StepperConfig()).ledger
        constant = BoundsServices.fit_energy_constant([ledger], "l2")
        assert BoundsServices.check_energy_bound(ledger, constant, 2.0, "l2").passed

    def test_hetero_energy_needs_profile(self, small_state):
        ledger = CompressibleServices.run(small_state(), 0.02, StepperConfig()).ledger
        with pytest.raises(LedgerError):
            BoundsServices.energy_sides(ledger, 1.0, "hetero")

    def test_gradient_split_on_its_calibration(self, small_state):
        ledger = CompressibleServices.run(small_state(), 0.05, StepperConfig()).ledger
        lhs, rhs = BoundsServices.gradient_split_sides(ledger)
        constant = float(np.max(lhs / rhs))
        assert BoundsServices.check_gradient_split(ledger, constant).passed

    def test_gradient_split_terms_are_finite(self, small_state):
        lhs, rhs = BoundsServices.gradient_split_terms(small_state().v)
        assert 0 < lhs < math.inf
        assert 0 < rhs < math.inf


class TestInitialConvergence:
    def test_frequency_split_holds_with_unit_constant(self, small_state):
        family = [small_state(eps=eps, spec="well-prepared-contrast").v for eps in (0.2, 0.1, 0.05)]
        v0 = SpectralServices.leray_P(family[-1])
        for N in (0, 1, 2):
            for lhs, rhs in BoundsServices.initial_convergence_bound(family, v0, N):
                assert lhs <= rhs


def _incompressible_ledger(growth, T: float = 1.0, samples: int = 21) -> RunLedger:
    ledger = RunLedger.incompressible("reference")
    for t in np.linspace(0.0, T, samples):
        ledger.append(
            {"t": float(t), "omega_inf": 1.0, "omega_l2": 1.0, "energy_l2": 1.0,
             "omega_b0_inf1": growth(t), "grad_v_inf": 1.0}
        )
    return ledger


class TestVishikGrowth:
    def test_linear_growth_fits_unit_constant(self):
        ledger = _incompressible_ledger(lambda t: 2.0 * (1.0 + t))
        assert BoundsServices.fit_vishik_constant([ledger]) == pytest.approx(1.0)
        assert BoundsServices.check_vishik_growth(ledger, 1.0).passed

    def test_exponential_growth_fails_holdout(self):
        ledger = _incompressible_ledger(lambda t: math.exp(5.0 * t))
        constant = BoundsServices.fit_vishik_constant([ledger.until(0.5)])
        report = BoundsServices.check_vishik_growth(ledger, constant)
        assert not report.passed
        assert report.columns == ("t", "omega_b0_inf1", "rhs")

    def test_incompressible_run_stays_under_fitted_bound(self, grid32):
        state = IncompressibleServices.from_velocity(InitialDataServices.vortex_pair(grid32, amplitude=0.5))
        ledger = IncompressibleServices.run_incompressible(state, 0.2).ledger
        constant = BoundsServices.fit_vishik_constant([ledger.until(0.1)])
        assert BoundsServices.check_vishik_growth(ledger, constant).passed

    def test_sides_on_compressible_ledger(self):
        lhs, rhs = BoundsServices.vishik_sides(_synthetic_ledger(0.1))
        # grad_v_inf = 0.5 on the synthetic ledger
        np.testing.assert_allclose(rhs, lhs[0] * (1.0 + 0.5 * np.linspace(0.0, 1.0, 21)), rtol=1e-12)
