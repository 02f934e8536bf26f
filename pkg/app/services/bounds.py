import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions.lab import BoundsError, LedgerError
from app.schemas.bounds import LifespanModel, LifespanPrediction
from app.schemas.fields import SpectralVectorField
from app.schemas.ledger import RunLedger
from app.schemas.littlewood_paley import BesovProfile
from app.schemas.reports import CheckReport
from app.schemas.solver import RunResult
from app.services.calibration import CalibrationServices
from app.services.incompressible import IncompressibleServices
from app.services.littlewood_paley import LittlewoodPaleyServices
from app.services.spectral import SpectralServices
from app.services.transport import TransportServices

logger = logging.getLogger(__name__)

VANISHING = 1e-14
ALIGN_TOLERANCE = 1e-9


def _check_eps(eps: float, operation: str) -> None:
    if not 0.0 < eps < 1.0:
        raise BoundsError(operation, f"eps must be in (0,1), got {eps}")


def _strictly_decreasing(values: Sequence[float]) -> bool:
    values = np.asarray(values, dtype=float)
    if np.all(np.abs(values) <= VANISHING):
        return True
    return bool(np.all(np.diff(values) < 0))


def _aligned_runs(
    ledgers: Sequence[Tuple[float, RunLedger]], horizon: Optional[float], operation: str
) -> List[Tuple[float, RunLedger, float]]:
    """(eps, ledger, window_limited) by decreasing eps, every ledger cut at horizon and ending together."""
    if not ledgers:
        raise LedgerError(operation, "no ledgers")
    runs = []
    for eps, ledger in sorted(ledgers, key=lambda item: -item[0]):
        ledger.require("t")
        limited = horizon is not None and ledger.final("t") > horizon + ALIGN_TOLERANCE
        runs.append((eps, ledger.until(horizon) if limited else ledger, float(limited)))
    ends = [ledger.final("t") for _, ledger, _ in runs]
    if max(ends) - min(ends) > ALIGN_TOLERANCE:
        raise LedgerError(operation, f"ledgers end at different times {ends}")
    if any(limited for _, _, limited in runs):
        logger.info(f"{operation}: ledgers cut at the wraparound horizon T={horizon:.4g}")
    return runs


def _decay_rate(model: LifespanModel, eps: np.ndarray, norms: np.ndarray) -> float:
    """eta in norms ~ Psi(log 1/eps)^{-eta}; nan when the sweep cannot resolve it."""
    psi = np.array([model.profile.evaluate(math.log(1.0 / e)) for e in eps])
    if len(eps) < 2 or np.ptp(np.log(psi)) <= 0 or not np.all(norms > 0):
        return math.nan
    return float(-np.polyfit(np.log(psi), np.log(norms), 1)[0])


def _verdict(name: str, passed: bool, detail: str) -> None:
    logger.info(f"{name}: {'PASS' if passed else 'FAIL'} ({detail})")


class BoundsServices:
    @staticmethod
    def phi_of_eps(model: LifespanModel, eps: float) -> float:
        """Psi(log eps^{-1/8})^{-beta}; natural log."""
        _check_eps(eps, "phi_of_eps")
        if not model.profile.diverges:
            logger.warning("phi_of_eps: profile does not diverge over its stored range; Phi is degenerate")
        return model.profile.evaluate(-math.log(eps) / 8.0) ** (-model.beta)

    @staticmethod
    def lifespan_prediction(model: LifespanModel, eps: float) -> LifespanPrediction:
        _check_eps(eps, "lifespan_prediction")
        psi = model.profile.evaluate(math.log(1.0 / eps))
        defined = psi >= math.e
        T = math.log(math.log(psi)) / model.C0 if defined else 0.0
        half_log = -0.5 * math.log(BoundsServices.phi_of_eps(model, eps))
        defined_phi = half_log >= 1.0
        T_phi = math.log(half_log) / model.C0 if defined_phi else 0.0
        if not defined:
            logger.warning(f"lifespan_prediction: log log Psi undefined at eps={eps:g} (Psi={psi:.4g})")
        return LifespanPrediction(eps=eps, T=T, defined=defined, T_phi=T_phi, defined_phi=defined_phi)

    @staticmethod
    def cutoff_N(eps: float) -> int:
        """ceil(log2(1/eps) / 8): base 2 matches the dyadic scale 2^N."""
        _check_eps(eps, "cutoff_N")
        return math.ceil(math.log2(1.0 / eps) / 8.0)

    @staticmethod
    def check_acoustic_decay(
        ledgers: Sequence[Tuple[float, RunLedger]],
        model: LifespanModel,
        margin: float = 2.0,
        grids: Optional[Sequence] = None,
        horizon: Optional[float] = None,
    ) -> CheckReport:
        """||(div v, grad c)||_{L1_T B0inf1} <= C0 Phi^{1/4} and ||(Qv, c)||_{L4_T Linf} <= C0 Phi.

        Both norms decrease with eps; C0 is fitted at the largest eps. Ledgers longer than
        horizon are cut there and flagged in window_limited.
        """
        if grids is not None and len(set(grids)) > 1:
            raise LedgerError("check_acoustic_decay", "ledgers come from different grids")
        runs = _aligned_runs(ledgers, horizon, "check_acoustic_decay")

        rows = []
        for eps, ledger, limited in runs:
            ledger.require("acoustic_inf", "qv_c_inf", "div_b0_inf1", "grad_c_b0_inf1")
            b0 = max(ledger.final("div_b0_l1"), ledger.final("grad_c_b0_l1"))
            l4 = SpectralServices.mixed_time_norm(ledger.times, ledger.column("qv_c_inf"), 4)
            phi = BoundsServices.phi_of_eps(model, eps)
            rows.append((eps, ledger.final("t"), b0, l4, ledger.final("acoustic_l1"), phi, limited))
        table = np.array(rows)
        eps, b0, l4, phi = table[:, 0], table[:, 2], table[:, 3], table[:, 5]

        monotone = _strictly_decreasing(b0) and _strictly_decreasing(l4)
        C0 = max(
            CalibrationServices.fit_linear_constant(b0[:1], phi[:1] ** 0.25),
            CalibrationServices.fit_linear_constant(l4[:1], phi[:1]),
        )
        holdout_ok, worst = True, 0.0
        if len(runs) > 1:
            ok1, w1 = CalibrationServices.check_holdout(b0[1:], phi[1:] ** 0.25, C0, margin)
            ok4, w4 = CalibrationServices.check_holdout(l4[1:], phi[1:], C0, margin)
            holdout_ok, worst = ok1 and ok4, max(w1, w4)

        passed = monotone and holdout_ok
        detail = (f"monotone={monotone} holdout_ratio={worst:.4g} eta={_decay_rate(model, eps, b0):.4g} "
                  f"T={table[0, 1]:.4g}")
        _verdict("acoustic_decay", passed, detail)
        return CheckReport(
            name="acoustic_decay",
            operation="bounds.check_acoustic_decay",
            passed=passed,
            constant=C0,
            margin=margin,
            detail=detail,
            columns=("eps", "T", "acoustic_l1_b0", "qv_c_l4_linf", "acoustic_l1_linf", "phi", "window_limited",
                     "bound_l1", "bound_l4"),
            rows=[tuple(r) + (margin * C0 * r[5] ** 0.25, margin * C0 * r[5]) for r in rows],
        )

    @staticmethod
    def check_acoustic_decay_linf(
        ledgers: Sequence[Tuple[float, RunLedger]],
        model: LifespanModel,
        margin: float = 2.0,
        horizon: Optional[float] = None,
    ) -> CheckReport:
        """||(div v, grad c)||_{L1_T Linf} <= C0 Phi^{1/4}; implied by the B0inf1 bound."""
        runs = _aligned_runs(ledgers, horizon, "check_acoustic_decay_linf")
        rows = []
        for eps, ledger, limited in runs:
            ledger.require("acoustic_inf")
            rows.append((eps, ledger.final("t"), ledger.final("acoustic_l1"), BoundsServices.phi_of_eps(model, eps),
                         limited))
        table = np.array(rows)
        l1, bound = table[:, 2], table[:, 3] ** 0.25
        monotone = _strictly_decreasing(l1)
        C0 = CalibrationServices.fit_linear_constant(l1[:1], bound[:1])
        holdout_ok, worst = CalibrationServices.check_holdout(l1[1:], bound[1:], C0, margin)
        passed = monotone and holdout_ok
        detail = f"monotone={monotone} holdout_ratio={worst:.4g} eta={_decay_rate(model, table[:, 0], l1):.4g}"
        _verdict("acoustic_decay_linf", passed, detail)
        return CheckReport(
            name="acoustic_decay_linf",
            operation="bounds.check_acoustic_decay",
            passed=passed,
            constant=C0,
            margin=margin,
            detail=detail,
            columns=("eps", "T", "acoustic_l1_linf", "phi", "window_limited", "bound_l1"),
            rows=[tuple(r) + (margin * C0 * r[3] ** 0.25,) for r in rows],
        )

    @staticmethod
    def limit_errors(
        run: RunResult, reference: RunResult, tilde_profile: Optional[BesovProfile] = None
    ) -> List[Tuple[float, float, float, float]]:
        """(t, ||w||_L2, ||w||_B221, ||w||_B221^tilde) at the aligned checkpoints, w = P v_eps - v."""
        if not run.checkpoints:
            raise LedgerError("check_incompressible_limit", f"run {run.ledger.run_id} kept no snapshots")
        out = []
        for t, state in run.checkpoints:
            ref = reference.at(t, ALIGN_TOLERANCE)
            if ref is None:
                raise LedgerError("check_incompressible_limit", f"no reference snapshot at t={t:.6g}")
            w = SpectralServices.leray_P(state.v) - IncompressibleServices.velocity_from_vorticity(ref.omega)
            hetero = (
                math.nan if tilde_profile is None
                else LittlewoodPaleyServices.besov_norm_hetero(w, 2, 2, 1, tilde_profile)
            )
            out.append((t, SpectralServices.lp_norm(w, 2), LittlewoodPaleyServices.besov_norm(w, 2, 2, 1), hetero))
        return out

    @staticmethod
    def check_incompressible_limit(
        runs: Sequence[Tuple[float, RunResult]],
        reference: RunResult,
        model: LifespanModel,
        margin: float = 2.0,
        tilde_profile: Optional[BesovProfile] = None,
    ) -> CheckReport:
        """w_eps = P v_eps - v decreases with eps and obeys the Gronwall rate with C0 fitted at the largest eps."""
        if tilde_profile is not None:
            stored = min(len(tilde_profile.values), len(model.profile.values)) - 2
            if tilde_profile.psi(stored) / model.profile.psi(stored) >= tilde_profile.psi(-1) / model.profile.psi(-1):
                logger.warning("check_incompressible_limit: tilde profile / profile does not decay over the stored range")

        runs = sorted(runs, key=lambda item: -item[0])
        series = [(eps, np.array(BoundsServices.limit_errors(run, reference, tilde_profile))) for eps, run in runs]
        sup_l2 = [float(s[:, 1].max()) for _, s in series]
        sup_b = [float(s[:, 2].max()) for _, s in series]
        monotone = _strictly_decreasing(sup_l2) and _strictly_decreasing(sup_b)

        def sides(constant: float, eps: float, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            phi = BoundsServices.phi_of_eps(model, eps) if eps < 1 else 1.0
            with np.errstate(over="ignore"):
                rhs = constant * np.exp(np.exp(constant * s[:, 0])) * (s[0, 1] + phi**0.25)
            return s[:, 1], rhs

        def worst(constant: float, members) -> float:
            return max(CalibrationServices.holdout_ratio(*sides(constant, e, s), 1.0, 1.0) for e, s in members)

        C0 = CalibrationServices.fit_monotone_constant(lambda c: worst(c, series[:1]))
        holdout = worst(margin * C0, series[1:]) if len(series) > 1 else 0.0
        passed = monotone and holdout <= 1.0
        detail = f"monotone={monotone} holdout_ratio={holdout:.4g} sup_l2={[round(v, 8) for v in sup_l2]}"
        _verdict("incompressible_limit", passed, detail)
        rows = []
        for eps, s in series:
            _, rhs = sides(margin * C0, eps, s)
            rows.extend((eps, *row, bound) for row, bound in zip(s.tolist(), rhs))
        return CheckReport(
            name="incompressible_limit",
            operation="bounds.check_incompressible_limit",
            passed=passed,
            constant=C0,
            margin=margin,
            detail=detail,
            columns=("eps", "t", "w_l2", "w_b221", "w_b221_tilde", "rate_bound"),
            rows=rows,
        )

    @staticmethod
    def gradient_split_terms(v: SpectralVectorField) -> Tuple[float, float]:
        """(||grad v||_inf, ||v||_L2 + ||div v||_B0inf1 + ||curl v||_B0inf1) for a static field."""
        grad = [SpectralServices.grad(v.x), SpectralServices.grad(v.y)]
        besov = LittlewoodPaleyServices.besov_norm
        return (
            SpectralServices.lp_norm(grad, np.inf),
            SpectralServices.lp_norm(v, 2)
            + besov(SpectralServices.div(v), 0, np.inf, 1)
            + besov(SpectralServices.curl2d(v), 0, np.inf, 1),
        )

    @staticmethod
    def gradient_split_sides(ledger: RunLedger) -> Tuple[np.ndarray, np.ndarray]:
        ledger.require("grad_v_inf", "v_l2", "div_b0_inf1", "omega_b0_inf1")
        rhs = ledger.column("v_l2") + ledger.column("div_b0_inf1") + ledger.column("omega_b0_inf1")
        return ledger.column("grad_v_inf"), rhs

    @staticmethod
    def check_gradient_split(ledger: RunLedger, constant: float, margin: float = 2.0) -> CheckReport:
        lhs, rhs = BoundsServices.gradient_split_sides(ledger)
        passed, worst = CalibrationServices.check_holdout(lhs, rhs, constant, margin)
        detail = f"run={ledger.run_id} max_ratio={worst:.4g}"
        _verdict("gradient_split", passed, detail)
        return CheckReport(
            name="gradient_split", operation="bounds.check_gradient_split", passed=passed,
            constant=constant, margin=margin, detail=detail,
            columns=("t", "grad_v_inf", "rhs"), rows=list(zip(ledger.times, lhs, rhs)),
        )

    @staticmethod
    def energy_sides(ledger: RunLedger, constant: float, kind: str = "l2") -> Tuple[np.ndarray, np.ndarray]:
        """l2: ||(v,c)(t)|| vs ||(v,c)(0)|| e^{C int ||div v||_inf}; hetero: C ||.||_{B^{2,Psi}} e^{C V_eps}."""
        if kind == "l2":
            ledger.require("energy_l2", "div_v_l1")
            lhs = ledger.column("energy_l2")
            exponent, prefactor = ledger.column("div_v_l1"), 1.0
        elif kind == "hetero":
            ledger.require("besov_hetero", "V_eps")
            lhs = ledger.column("besov_hetero")
            if np.any(np.isnan(lhs)):
                raise LedgerError("check_energy_bound", f"ledger {ledger.run_id} has no profile-weighted norm")
            exponent, prefactor = ledger.column("V_eps"), constant
        else:
            raise ValueError(f"unknown energy bound {kind}")
        with np.errstate(over="ignore"):
            return lhs, prefactor * lhs[0] * np.exp(constant * exponent)

    @staticmethod
    def fit_energy_constant(calibration: Sequence[RunLedger], kind: str = "l2") -> float:
        def worst(constant: float) -> float:
            return max(
                CalibrationServices.holdout_ratio(*BoundsServices.energy_sides(l, constant, kind), 1.0, 1.0)
                for l in calibration
            )

        return CalibrationServices.fit_monotone_constant(worst)

    @staticmethod
    def check_energy_bound(ledger: RunLedger, constant: float, margin: float = 2.0, kind: str = "l2") -> CheckReport:
        lhs, rhs = BoundsServices.energy_sides(ledger, margin * constant, kind)
        worst = CalibrationServices.holdout_ratio(lhs, rhs, 1.0, 1.0)
        passed = worst <= 1.0
        detail = f"run={ledger.run_id} kind={kind} max_ratio={worst:.4g}"
        _verdict(f"energy_bound_{kind}", passed, detail)
        return CheckReport(
            name=f"energy_bound_{kind}", operation="bounds.check_energy_bound", passed=passed,
            constant=constant, margin=margin, detail=detail,
            columns=("t", "lhs", "rhs"), rows=list(zip(ledger.times, lhs, rhs)),
        )

    @staticmethod
    def check_strichartz_bound(
        ledgers: Sequence[Tuple[float, RunLedger]],
        margin: float = 2.0,
        scaling_factor: Optional[float] = 4.0,
        horizon: Optional[float] = None,
    ) -> CheckReport:
        """||(Qv, c)||_{L^4_T L^inf} <= C0 eps^{1/4} (1 + T) e^{V_eps(T)}, C0 fitted at the largest eps."""
        runs = _aligned_runs(ledgers, horizon, "check_strichartz_bound")
        rows = []
        for eps, ledger, limited in runs:
            ledger.require("qv_c_inf", "V_eps")
            T = ledger.final("t")
            lhs = SpectralServices.mixed_time_norm(ledger.times, ledger.column("qv_c_inf"), 4)
            rhs = eps**0.25 * (1.0 + T) * math.exp(ledger.final("V_eps"))
            rows.append((eps, T, lhs, rhs, lhs / eps**0.25, limited))
        table = np.array(rows)
        C0 = CalibrationServices.fit_linear_constant(table[:1, 2], table[:1, 3])
        passed, worst = CalibrationServices.check_holdout(table[1:, 2], table[1:, 3], C0, margin)
        scaled = table[:, 4]
        spread = float(scaled.max() / scaled.min()) if scaled.min() > 0 else 1.0
        if scaling_factor is not None:
            passed = passed and spread <= scaling_factor
        detail = f"holdout_ratio={worst:.4g} scaled_spread={spread:.4g}"
        _verdict("strichartz_bound", passed, detail)
        return CheckReport(
            name="strichartz_bound", operation="bounds.check_strichartz_bound", passed=passed,
            constant=C0, margin=margin, detail=detail,
            columns=("eps", "T", "qv_c_l4_linf", "rhs", "scaled", "window_limited"), rows=[tuple(r) for r in rows],
        )

    @staticmethod
    def fit_vorticity_log_constant(calibration: Sequence[RunLedger]) -> float:
        return TransportServices.fit_log_constant(calibration, column="omega_b0_inf1")

    @staticmethod
    def check_vorticity_log_estimate(ledger: RunLedger, constant: float, margin: float = 2.0) -> CheckReport:
        """The logarithmic estimate applied to the compressible vorticity."""
        return TransportServices.check_log_estimate(
            ledger, constant, margin, column="omega_b0_inf1",
            name="vorticity_log_estimate", operation="bounds.check_vorticity_log_estimate",
        )

    @staticmethod
    def vishik_sides(ledger: RunLedger) -> Tuple[np.ndarray, np.ndarray]:
        """(||omega(t)||_B0inf1, ||omega(0)||_B0inf1 (1 + int_0^t ||grad v||_inf)); the bound is lhs <= C rhs."""
        ledger.require("omega_b0_inf1", "grad_v_l1")
        lhs = ledger.column("omega_b0_inf1")
        return lhs, lhs[0] * (1.0 + ledger.column("grad_v_l1"))

    @staticmethod
    def fit_vishik_constant(calibration: Sequence[RunLedger]) -> float:
        sides = [BoundsServices.vishik_sides(ledger) for ledger in calibration]
        return CalibrationServices.fit_linear_constant(
            np.concatenate([lhs for lhs, _ in sides]), np.concatenate([rhs for _, rhs in sides])
        )

    @staticmethod
    def check_vishik_growth(ledger: RunLedger, constant: float, margin: float = 2.0) -> CheckReport:
        """Linear growth of the incompressible vorticity in B0inf1 along int ||grad v||_inf."""
        lhs, rhs = BoundsServices.vishik_sides(ledger)
        passed, worst = CalibrationServices.check_holdout(lhs, rhs, constant, margin)
        detail = f"run={ledger.run_id} max_ratio={worst:.4g}"
        _verdict("vishik_growth", passed, detail)
        return CheckReport(
            name="vishik_growth", operation="bounds.check_vishik_growth", passed=passed,
            constant=constant, margin=margin, detail=detail,
            columns=("t", "omega_b0_inf1", "rhs"), rows=list(zip(ledger.times, lhs, rhs)),
        )

    @staticmethod
    def initial_convergence_bound(
        family: Sequence[SpectralVectorField], v0: SpectralVectorField, N: int
    ) -> List[Tuple[float, float]]:
        """(||P v0_eps - v0||_B221, 4^N ||P v0_eps - v0||_L2 + sum_{q>=N} 4^q (||D_q v0|| + sup ||D_q v0_eps||))."""
        block_norms = LittlewoodPaleyServices.block_norms
        q = np.arange(-1, len(block_norms(v0, 2)) - 1)
        tail = q >= N
        sup_blocks = np.max([block_norms(member, 2) for member in family], axis=0)
        tail_sum = float(np.sum((4.0 ** q * (block_norms(v0, 2) + sup_blocks))[tail]))
        out = []
        for member in family:
            w = SpectralServices.leray_P(member) - v0
            out.append(
                (LittlewoodPaleyServices.besov_norm(w, 2, 2, 1), 4.0**N * SpectralServices.lp_norm(w, 2) + tail_sum)
            )
        return out
