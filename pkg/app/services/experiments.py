import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from app.config import get_settings
from app.exceptions.lab import BlowupError, ConfigError, LabBaseException
from app.schemas.bounds import LifespanModel
from app.schemas.experiment import EXPERIMENTS, ExperimentConfig, parse_profile_spec
from app.schemas.fields import FlowState, Grid
from app.schemas.ledger import RunLedger
from app.schemas.littlewood_paley import BesovProfile
from app.schemas.reports import CheckReport, ExperimentOutcome
from app.schemas.solver import StepperConfig
from app.services.acoustic import AcousticServices
from app.services.bounds import BoundsServices
from app.services.calibration import CalibrationServices
from app.services.compressible import CompressibleServices
from app.services.incompressible import IncompressibleServices
from app.services.initial_data import InitialDataServices
from app.services.littlewood_paley import LittlewoodPaleyServices
from app.services.spectral import SpectralServices
from app.services.transport import TransportServices, velocity_catalog

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

VORTICITY_DRIFT = 0.05
LIMIT_REDUCTION = 0.25
MASS_TOLERANCE = 1e-8
MAX_PRINCIPLE_TOLERANCE = 1e-6


def oracle_tolerance(n: int) -> float:
    if n >= 512:
        return 2.5e-4
    if n >= 256:
        return 1e-3
    return 1e-2


def sweep(function: Callable, items: Sequence) -> List:
    """Map over sweep members on the configured thread pool; results keep the input order."""
    with ThreadPoolExecutor(max_workers=get_settings().threads) as pool:
        return list(pool.map(function, items))


def write_plot(path: Path, x: Iterable[float], y: Iterable[float], header: str) -> Path:
    np.savetxt(path, np.column_stack([list(x), list(y)]), delimiter=",", fmt="%.17g", header=header, comments="")
    return path


def property_report(name: str, operation: str, passed: bool, detail: str, constant: Optional[float] = None) -> CheckReport:
    logger.info(f"{name}: {'PASS' if passed else 'FAIL'} ({detail})")
    return CheckReport(name=name, operation=operation, passed=bool(passed), constant=constant, detail=detail)


def fit_and_hold(
    ledgers: Sequence[RunLedger],
    fit: Callable[[Sequence[RunLedger]], float],
    check: Callable[[RunLedger, float], CheckReport],
) -> List[CheckReport]:
    """Calibrate on the first ledger, assert on the rest (on the calibration run itself when alone)."""
    constant = fit(ledgers[:1])
    holdouts = ledgers[1:] or ledgers[:1]
    return [check(ledger, constant) for ledger in holdouts]


class RunDirectory:
    """Per-run output layout: ledgers/, reports/, plots/, snapshots/, summary.txt."""

    def __init__(self, root: Path):
        self.root = Path(root)
        for sub in ("ledgers", "reports", "plots", "snapshots"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    def ledger(self, ledger: RunLedger) -> Path:
        return ledger.to_csv(self.root / "ledgers" / f"{_slug(ledger.run_id)}.csv")

    def report(self, report: CheckReport, suffix: str = "") -> Optional[Path]:
        if not report.columns:
            return None
        return report.write_csv(self.root / "reports" / f"{_slug(report.name + suffix)}.csv")

    def plot(self, name: str) -> Path:
        return self.root / "plots" / f"{_slug(name)}.csv"

    def snapshots(self, label: str) -> Path:
        return self.root / "snapshots" / _slug(label)

    def profile(self, profile: BesovProfile) -> Path:
        return LittlewoodPaleyServices.write_profile(profile, self.root / "profile.txt")

    def sub(self, name: str) -> "RunDirectory":
        return RunDirectory(self.root / name)


def _slug(text: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_.=" else "_" for ch in text)


class ExperimentServices:
    @staticmethod
    def parse_config(text: str, experiment: Optional[str] = None) -> ExperimentConfig:
        """Flat key=value lines, '#' comments; the first offending line is reported."""
        values: Dict[str, str] = {}
        lines: Dict[str, int] = {}
        allowed = list(ExperimentConfig.model_fields)
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(number, f"expected key=value, got '{line}'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in allowed:
                raise ConfigError(number, f"unknown key '{key}'; allowed keys: {', '.join(allowed)}")
            if key in values:
                raise ConfigError(number, f"duplicate key '{key}' (first set at line {lines[key]})")
            values[key], lines[key] = value, number

        if experiment is not None:
            if "experiment" in values and values["experiment"] != experiment:
                raise ConfigError(
                    lines["experiment"], f"config is for '{values['experiment']}', command asks for '{experiment}'"
                )
            values["experiment"] = experiment
        if "experiment" not in values:
            raise ConfigError(0, "missing required key 'experiment'")
        if values["experiment"] not in EXPERIMENTS:
            raise ConfigError(
                lines.get("experiment", 0),
                f"unknown experiment '{values['experiment']}'; allowed: {', '.join(EXPERIMENTS)}",
            )

        try:
            return ExperimentConfig.model_validate(values)
        except ValidationError as e:
            error = e.errors()[0]
            key = str(error["loc"][0]) if error["loc"] else ""
            message = error["msg"].removeprefix("Value error, ")
            logger.error(f"Config validation failed for {key}: {message}")
            raise ConfigError(lines.get(key, 0), f"{key}: {message}")

    @staticmethod
    def load_config(path: Optional[Path], experiment: Optional[str] = None) -> ExperimentConfig:
        text = ""
        if path is not None:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except (OSError, UnicodeDecodeError) as e:
                logger.error(f"Cannot read config {path}: {str(e)}")
                raise ConfigError(0, f"cannot read {path}: {str(e)}")
        return ExperimentServices.parse_config(text, experiment)

    @staticmethod
    def initial_states(config: ExperimentConfig, grid: Optional[Grid] = None) -> Dict[float, FlowState]:
        grid = grid or config.grid
        return {
            eps: InitialDataServices.make_initial_data(
                config.initial, grid, eps, config.amplitude, config.seed, config.gamma_bar
            )
            for eps in config.eps
        }

    @staticmethod
    def build_profile(config: ExperimentConfig, states: Iterable[FlowState]) -> BesovProfile:
        states = list(states)
        kind, alpha = parse_profile_spec(config.profile)
        if kind == "from-data":
            return LittlewoodPaleyServices.find_profile_family([[s.v, s.c] for s in states], 2, 2, 1)
        q_max = LittlewoodPaleyServices.build_partition(states[0].grid).q_max
        return LittlewoodPaleyServices.closed_form_profile(kind, 1.0 if kind == "constant" else alpha, q_max)

    @staticmethod
    def stepper(config: ExperimentConfig, profile: Optional[BesovProfile] = None) -> StepperConfig:
        return StepperConfig(cfl=config.cfl, max_dt=config.max_dt, profile=profile)

    @staticmethod
    def checkpoint_times(config: ExperimentConfig) -> Tuple[float, ...]:
        count = int(math.floor(config.T / config.snapshot_interval + 1e-9))
        times = {round(k * config.snapshot_interval, 12) for k in range(count + 1)} | {config.T}
        return tuple(sorted(t for t in times if t <= config.T))

    @staticmethod
    def compressible_sweep(
        config: ExperimentConfig,
        out: RunDirectory,
        states: Dict[float, FlowState],
        stepper: StepperConfig,
        checkpoints: Sequence[float] = (),
    ):
        def one(eps: float):
            ledger = RunLedger.compressible(f"eps={eps:g}", config.config_hash)
            snapshot_dir = out.snapshots(f"eps={eps:g}") if config.snapshot_stride > 0 or checkpoints else None
            try:
                return CompressibleServices.run(
                    states[eps], config.T, stepper, ledger, checkpoints, snapshot_dir, config.snapshot_stride
                )
            finally:
                out.ledger(ledger)

        return sweep(one, list(config.eps))

    @staticmethod
    def acoustic_decay(config: ExperimentConfig, out: RunDirectory) -> List[CheckReport]:
        states = ExperimentServices.initial_states(config)
        profile = ExperimentServices.build_profile(config, states.values())
        out.profile(profile)
        model = LifespanModel.from_profile(profile)
        results = ExperimentServices.compressible_sweep(config, out, states, ExperimentServices.stepper(config, profile))
        runs = sorted(zip(config.eps, (r.ledger for r in results)), key=lambda item: -item[0])
        ledgers = [ledger for _, ledger in runs]
        margin = config.margin
        horizon = AcousticServices.acoustic_horizon(config.grid, config.eps, config.T)

        reports = [
            BoundsServices.check_acoustic_decay(runs, model, margin, horizon=horizon),
            BoundsServices.check_acoustic_decay_linf(runs, model, margin, horizon=horizon),
            BoundsServices.check_strichartz_bound(runs, margin, scaling_factor=4.0, horizon=horizon),
        ]
        reports += fit_and_hold(
            ledgers,
            lambda cal: BoundsServices.fit_energy_constant(cal, "l2"),
            lambda ledger, c: BoundsServices.check_energy_bound(ledger, c, margin, "l2"),
        )
        reports += fit_and_hold(
            ledgers,
            lambda cal: BoundsServices.fit_energy_constant(cal, "hetero"),
            lambda ledger, c: BoundsServices.check_energy_bound(ledger, c, margin, "hetero"),
        )
        reports += fit_and_hold(
            ledgers,
            lambda cal: CalibrationServices.fit_linear_constant(*BoundsServices.gradient_split_sides(cal[0])),
            lambda ledger, c: BoundsServices.check_gradient_split(ledger, c, margin),
        )
        reports += fit_and_hold(
            ledgers,
            BoundsServices.fit_vorticity_log_constant,
            lambda ledger, c: BoundsServices.check_vorticity_log_estimate(ledger, c, margin),
        )

        drifts = []
        for eps, ledger in runs:
            omega = ledger.column("omega_inf")
            drifts.append(float(np.max(np.abs(omega - omega[0])) / max(omega[0], 1e-300)))
        reports.append(
            property_report(
                "vorticity_control", "solver_compressible.run", max(drifts) <= VORTICITY_DRIFT,
                f"max_relative_drift={max(drifts):.4g} limit={VORTICITY_DRIFT}",
            )
        )

        table = reports[0]
        write_plot(out.plot("acoustic_l1_vs_eps"), [r[0] for r in table.rows], [r[2] for r in table.rows], "eps,acoustic_l1_b0")
        write_plot(out.plot("acoustic_l4_vs_eps"), [r[0] for r in table.rows], [r[3] for r in table.rows], "eps,qv_c_l4_linf")
        for eps, ledger in runs:
            write_plot(out.plot(f"acoustic_inf_eps={eps:g}"), ledger.times, ledger.column("acoustic_inf"), "t,acoustic_inf")
        return reports

    @staticmethod
    def incompressible_limit(config: ExperimentConfig, out: RunDirectory) -> List[CheckReport]:
        states = ExperimentServices.initial_states(config)
        profile = ExperimentServices.build_profile(config, states.values())
        out.profile(profile)
        model = LifespanModel.from_profile(profile)
        stepper = ExperimentServices.stepper(config, profile)
        checkpoints = ExperimentServices.checkpoint_times(config)

        reference_velocity = SpectralServices.leray_P(states[max(config.eps)].v)
        reference_ledger = RunLedger.incompressible("reference", config.config_hash)
        reference = IncompressibleServices.run_incompressible(
            IncompressibleServices.from_velocity(reference_velocity), config.T, stepper, reference_ledger,
            checkpoints, out.snapshots("reference"),
        )
        out.ledger(reference_ledger)
        results = ExperimentServices.compressible_sweep(config, out, states, stepper, checkpoints)
        runs = list(zip(config.eps, results))

        q_max = LittlewoodPaleyServices.build_partition(config.grid).q_max
        tilde = LittlewoodPaleyServices.closed_form_profile("constant", 1.0, q_max)
        limit = BoundsServices.check_incompressible_limit(runs, reference, model, config.margin, tilde)
        reports = [limit]

        # fitted on the first half of the reference run, held out on the whole of it
        constant = BoundsServices.fit_vishik_constant([reference_ledger.until(0.5 * config.T)])
        reports.append(BoundsServices.check_vishik_growth(reference_ledger, constant, config.margin))

        by_eps = sorted({row[0] for row in limit.rows}, reverse=True)
        sup_l2 = [max(row[2] for row in limit.rows if row[0] == eps) for eps in by_eps]
        reduction = sup_l2[-1] / sup_l2[0] if sup_l2[0] > 0 else 0.0
        reports.append(
            property_report(
                "limit_reduction", "bounds.check_incompressible_limit",
                len(by_eps) == 1 or reduction <= LIMIT_REDUCTION,
                f"smallest/largest={reduction:.4g} limit={LIMIT_REDUCTION}",
            )
        )

        family = [states[eps].v for eps in config.eps]
        worst = 0.0
        for eps in config.eps:
            if eps < 1.0:
                N = BoundsServices.cutoff_N(eps)
                for lhs, rhs in BoundsServices.initial_convergence_bound(family, reference_velocity, N):
                    worst = max(worst, lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf))
        reports.append(
            property_report(
                "initial_convergence", "bounds.initial_convergence_bound", worst <= 1.0,
                f"max_ratio={worst:.4g}", constant=1.0,
            )
        )
        write_plot(out.plot("limit_sup_l2_vs_eps"), by_eps, sup_l2, "eps,sup_w_l2")
        return reports

    @staticmethod
    def transport_log(config: ExperimentConfig, out: RunDirectory) -> List[CheckReport]:
        grid = config.grid
        L = grid.box_length
        f0 = InitialDataServices.transport_profile(grid)
        calibration = velocity_catalog("compressible", L, 0.5 * config.amplitude)
        holdouts = [
            velocity_catalog("shear", L, 0.5 * config.amplitude),
            velocity_catalog("superposition", L, 0.5 * config.amplitude),
            velocity_catalog("compressible", L, config.amplitude).model_copy(update={"name": "compressible-strong"}),
        ]
        velocities = [calibration] + holdouts

        def one(velocity):
            ledger = RunLedger.transport(f"transport-{velocity.name}", config.config_hash)
            run = TransportServices.solve_transport_spectral(f0, velocity, config.T, cfl=config.cfl, ledger=ledger)
            out.ledger(ledger)
            oracle = TransportServices.solve_transport_oracle(f0, velocity, config.T)
            return run, float(np.max(np.abs(SpectralServices.fft_inverse(run.final) - oracle)))

        results = sweep(one, velocities)
        tolerance = oracle_tolerance(grid.n)
        distances = {run.velocity.name: d for run, d in results}
        reports = [
            property_report(
                "oracle_equivalence", "transport_lab.solve_transport_oracle",
                max(distances.values()) <= tolerance,
                " ".join(f"{k}={v:.3g}" for k, v in distances.items()) + f" tolerance={tolerance:g}",
            )
        ]
        drift = 0.0
        for run, _ in results:
            mass = run.ledger.column("f_mass")
            drift = max(drift, float(np.max(np.abs(mass - mass[0])) / abs(mass[0])))
        reports.append(
            property_report("mass_conservation", "transport_lab.solve_transport_spectral",
                            drift <= MASS_TOLERANCE, f"max_relative_drift={drift:.3g}")
        )
        shear = next(run for run, _ in results if run.velocity.divergence_free)
        peak = shear.ledger.column("f_inf")
        reports.append(
            property_report("max_principle", "transport_lab.solve_transport_spectral",
                            abs(peak[-1] - peak[0]) <= MAX_PRINCIPLE_TOLERANCE,
                            f"velocity={shear.velocity.name} drift={abs(peak[-1] - peak[0]):.3g}")
        )

        constant = TransportServices.fit_log_constant([results[0][0].ledger])
        for run, distance in results[1:]:
            report = TransportServices.check_log_estimate(run.ledger, constant, config.margin)
            report = report.model_copy(update={"name": f"log_estimate_{run.velocity.name}"})
            reports.append(report)
            lhs, rhs, ratio = report.rows[-1][1:4]
            comparison = CheckReport(
                name=f"oracle_{run.velocity.name}", operation="transport_lab.solve_transport_oracle",
                passed=distance <= tolerance, detail="",
                columns=("t", "linf_distance", "b0_lhs", "rhs", "ratio"),
                rows=[(config.T, distance, lhs, rhs, ratio)],
            )
            out.report(comparison)
        return reports

    @staticmethod
    def strichartz_sweep(config: ExperimentConfig, out: RunDirectory) -> List[CheckReport]:
        grid = config.grid
        T = AcousticServices.acoustic_horizon(grid, config.eps, config.T)
        states = ExperimentServices.initial_states(config)
        reports = []
        for p, label in ((math.inf, "pinf"), (4.0, "p4")):
            def measure(eps):
                gamma = AcousticServices.make_acoustic(states[eps]).gamma_field
                return AcousticServices.measure_strichartz(gamma, eps, T, p)

            measurements = sweep(measure, sorted(config.eps, reverse=True))
            reports.append(AcousticServices.check_strichartz_scaling(measurements, 2.0, f"strichartz_scaling_{label}"))
            write_plot(out.plot(f"strichartz_{label}"), [m.eps for m in measurements],
                       [m.norm for m in measurements], "eps,norm")
        return reports

    @staticmethod
    def lifespan_table(config: ExperimentConfig, out: RunDirectory) -> List[CheckReport]:
        states = ExperimentServices.initial_states(config)
        profile = ExperimentServices.build_profile(config, states.values())
        out.profile(profile)
        model = LifespanModel.from_profile(profile)
        stepper = ExperimentServices.stepper(config, profile)

        def one(eps):
            ledger = RunLedger.compressible(f"lifespan-eps={eps:g}", config.config_hash)
            try:
                CompressibleServices.run(states[eps], config.T, stepper, ledger)
                return eps, config.T, False
            except BlowupError as e:
                logger.info(f"eps={eps:g}: numerical lifespan {e.time:.6g}")
                return eps, e.time, True
            finally:
                out.ledger(ledger)

        rows = []
        for eps, T_num, blew_up in sweep(one, sorted(config.eps, reverse=True)):
            if eps < 1.0:
                prediction = BoundsServices.lifespan_prediction(model, eps)
                rows.append((eps, T_num, float(blew_up), prediction.T, float(prediction.defined),
                             prediction.T_phi, float(BoundsServices.cutoff_N(eps))))
            else:
                rows.append((eps, T_num, float(blew_up), math.nan, 0.0, math.nan, 0.0))
        lifespans = [row[1] for row in rows]
        monotone = bool(np.all(np.diff(lifespans) >= 0))
        report = CheckReport(
            name="lifespan_table", operation="bounds.lifespan_prediction", passed=monotone,
            detail=f"T_num={[round(t, 6) for t in lifespans]} nondecreasing={monotone}",
            columns=("eps", "T_num", "blew_up", "T_pred", "defined", "T_phi", "cutoff_N"), rows=rows,
        )
        logger.info(f"lifespan_table: {'PASS' if monotone else 'FAIL'}")
        write_plot(out.plot("lifespan_vs_eps"), [r[0] for r in rows], lifespans, "eps,T_num")
        return [report]

    @staticmethod
    def run_experiment(config: ExperimentConfig, out_dir: Optional[Path] = None) -> ExperimentOutcome:
        from app.services.selftest import SelftestServices

        root = Path(out_dir or config.output_dir) / f"{config.experiment}-{config.config_hash}"
        logger.info(f"Experiment {config.experiment} -> {root}")
        runners = {
            "acoustic-decay": ExperimentServices.acoustic_decay,
            "incompressible-limit": ExperimentServices.incompressible_limit,
            "transport-log": ExperimentServices.transport_log,
            "strichartz-sweep": ExperimentServices.strichartz_sweep,
            "lifespan-table": ExperimentServices.lifespan_table,
            "selftest": SelftestServices.run,
        }
        reports: List[CheckReport] = []
        exit_code = EXIT_PASS
        try:
            out = RunDirectory(root)
            (root / "config.txt").write_text(config.canonical_text(), encoding="utf-8")
            reports = runners[config.experiment](config, out)
            for report in reports:
                out.report(report)
            if not all(r.passed for r in reports):
                exit_code = EXIT_ASSERTION
        except BlowupError as e:
            logger.error(f"Experiment {config.experiment} stopped: {e.message}")
            reports.append(property_report("blowup", "solver_compressible.run", False, e.message))
            exit_code = EXIT_RUNTIME
        except (LabBaseException, OSError) as e:
            logger.error(f"Experiment {config.experiment} failed: {str(e)}")
            reports.append(property_report("runtime_error", f"experiments_cli.{config.experiment}", False, str(e)))
            exit_code = EXIT_RUNTIME

        try:
            summary = "\n".join(r.summary_line() for r in reports) + "\n"
            (root / "summary.txt").write_text(summary, encoding="utf-8")
        except OSError as e:
            logger.error(f"Cannot write summary: {str(e)}")
            exit_code = EXIT_RUNTIME
        logger.info(f"Experiment {config.experiment} finished with exit code {exit_code}")
        return ExperimentOutcome(experiment=config.experiment, exit_code=exit_code, run_dir=str(root), reports=reports)
