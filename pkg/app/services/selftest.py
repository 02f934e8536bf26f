import logging
import math
from typing import List, Tuple

import numpy as np

from app.schemas.bounds import LifespanModel
from app.schemas.experiment import ExperimentConfig
from app.schemas.fields import FlowState, Grid, IncompressibleState, SpectralVectorField
from app.schemas.ledger import RunLedger
from app.schemas.reports import CheckReport
from app.schemas.solver import StepperConfig
from app.services.acoustic import AcousticServices, unit_wavevector
from app.services.bounds import BoundsServices
from app.services.calibration import CalibrationServices
from app.services.compressible import CompressibleServices
from app.services.experiments import ExperimentServices, RunDirectory, property_report
from app.services.incompressible import IncompressibleServices
from app.services.initial_data import InitialDataServices
from app.services.littlewood_paley import LittlewoodPaleyServices
from app.services.spectral import SpectralServices

logger = logging.getLogger(__name__)

FIELD_COUNT = 100
SHELL_FIELD_COUNT = 50
ROUND_OFF = 1e-12
SPLITTING_ORDER = (1.8, 2.2)
SPLITTING_STEPS = (0.01, 0.005, 0.0025)
REFERENCE_DRIFT = 0.005
ENERGY_DRIFT = 1e-6
DUHAMEL_STEPS = (0.005, 0.0025)
DUHAMEL_TIME = 0.05


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def _random_fields(grid: Grid, rng: np.random.Generator, count: int, slope: float = 0.5):
    return [InitialDataServices.random_scalar(grid, rng, rate=1.0, slope=slope) for _ in range(count)]


def _holdout(name: str, operation: str, pairs: List[Tuple[float, float]], margin: float) -> CheckReport:
    half = len(pairs) // 2
    lhs, rhs = np.array(pairs).T
    constant = CalibrationServices.fit_linear_constant(lhs[:half], rhs[:half])
    passed, worst = CalibrationServices.check_holdout(lhs[half:], rhs[half:], constant, margin)
    return CheckReport(
        name=name, operation=operation, passed=passed, constant=constant, margin=margin,
        detail=f"holdout_ratio={worst:.4g} samples={len(pairs)}",
    )


class SelftestServices:
    @staticmethod
    def spectral_checks(grid: Grid, rng: np.random.Generator) -> List[CheckReport]:
        roundtrip, parseval, idempotent, gradients = 0.0, 0.0, 0.0, 0.0
        for _ in range(FIELD_COUNT):
            values = rng.standard_normal((grid.n, grid.n))
            field = SpectralServices.fft_forward(values, grid)
            roundtrip = max(roundtrip, _relative(SpectralServices.fft_inverse(field), values))
            physical = np.mean(values**2)
            spectral = np.sum(np.abs(field.modes) ** 2)
            parseval = max(parseval, abs(physical - spectral) / physical)

            v = SpectralServices.from_physical(rng.standard_normal((2, grid.n, grid.n)), grid)
            pv = SpectralServices.leray_P(v)
            idempotent = max(idempotent, SpectralServices.lp_norm(SpectralServices.leray_P(pv) - pv) /
                             max(SpectralServices.lp_norm(pv), 1e-300))
            potential = SpectralServices.dealias(field)
            grad = SpectralServices.grad(potential)
            gradients = max(gradients, SpectralServices.lp_norm(SpectralServices.leray_P(grad)) /
                            max(SpectralServices.lp_norm(grad), 1e-300))
        op = "spectral_core"
        return [
            property_report("fft_roundtrip", f"{op}.fft_inverse", roundtrip <= ROUND_OFF, f"max_relative={roundtrip:.3g}"),
            property_report("parseval", f"{op}.fft_forward", parseval <= ROUND_OFF, f"max_relative={parseval:.3g}"),
            property_report("leray_idempotent", f"{op}.leray_P", idempotent <= ROUND_OFF, f"max_relative={idempotent:.3g}"),
            property_report("leray_gradients", f"{op}.leray_P", gradients <= ROUND_OFF, f"max_relative={gradients:.3g}"),
        ]

    @staticmethod
    def shell_checks(grid: Grid, rng: np.random.Generator, margin: float) -> List[CheckReport]:
        lp = LittlewoodPaleyServices
        partition = lp.build_partition(grid)
        inside = grid.wavenumbers.dealias_mask
        total = sum(partition.multiplier(q) for q in partition.shells)
        unity = float(np.max(np.abs(total[inside] - 1.0)))
        disjoint = all(
            not np.any(partition.multiplier(p) * partition.multiplier(q))
            for p in partition.shells for q in partition.shells if abs(p - q) >= 2
        )

        fields = _random_fields(grid, rng, SHELL_FIELD_COUNT)
        block_sum, low, high, reduction, profiles_valid = 0.0, math.inf, 0.0, 0.0, True
        alpha = 0.75
        exponential = lp.closed_form_profile("exp", alpha * math.log(2.0), partition.q_max)
        for field in fields:
            blocks = sum((lp.delta_q(field, q, partition) for q in partition.shells), field.scale(0.0))
            block_sum = max(block_sum, _relative(blocks.modes, field.modes))
            ratios = lp.bernstein_ratios(field).values()
            low, high = min([low, *ratios]), max([high, *ratios])
            weighted = lp.besov_norm_hetero(field, 1.0, 2, 1, exponential)
            plain = lp.besov_norm(field, 1.0 + alpha, 2, 1)
            reduction = max(reduction, abs(weighted - plain) / plain)
            try:
                lp.validate_profile(lp.find_profile(field, 2, 2, 1).values)
            except ValueError:
                profiles_valid = False

        sup_pairs = [term for f in fields for term in lp.bernstein_sup_terms(f)]
        op = "littlewood_paley"
        reports = [
            property_report("partition_of_unity", f"{op}.build_partition", unity <= ROUND_OFF, f"residual={unity:.3g}"),
            property_report("shell_disjointness", f"{op}.build_partition", disjoint, f"exact={disjoint}"),
            property_report("block_sum", f"{op}.delta_q", block_sum <= ROUND_OFF, f"max_relative={block_sum:.3g}"),
            property_report("bernstein_ratio", f"{op}.bernstein_ratios", 0.125 <= low and high <= 8.0,
                            f"range=[{low:.4g}, {high:.4g}]"),
            property_report("bernstein_sup", f"{op}.bernstein_sup_terms", all(a <= b for a, b in sup_pairs),
                            f"pairs={len(sup_pairs)}", constant=8.0),
            property_report("hetero_reduction", f"{op}.besov_norm_hetero", reduction <= ROUND_OFF,
                            f"max_relative={reduction:.3g}"),
            property_report("find_profile_valid", f"{op}.find_profile", profiles_valid, f"fields={len(fields)}"),
        ]

        pairs = list(zip(fields[::2], fields[1::2]))
        reports.append(_holdout("product_law", f"{op}.product_law_terms",
                                [lp.product_law_terms(u, v) for u, v in pairs], margin))
        reports.append(_holdout("interpolation", f"{op}.interpolation_terms",
                                [lp.interpolation_terms(f) for f in fields], margin))

        constants = []
        for n in (grid.n // 2, grid.n):
            coarse = Grid(n=n, box_length=grid.box_length)
            terms = [lp.embedding_terms(f) for f in _random_fields(coarse, rng, 10, slope=3.0)]
            constants.append(CalibrationServices.fit_linear_constant(*np.array(terms).T))
        stable = max(constants) / min(constants)
        reports.append(property_report("embedding_stability", f"{op}.embedding_terms", stable <= 2.0,
                                       f"constants={[round(c, 6) for c in constants]}", constant=max(constants)))
        return reports

    @staticmethod
    def acoustic_checks(config: ExperimentConfig, grid: Grid) -> List[CheckReport]:
        T, dt = 0.5, 0.01
        worst_step, worst_energy = 0.0, 0.0
        khat_x, khat_y, _ = unit_wavevector(grid)
        for eps in config.eps:
            state = InitialDataServices.make_initial_data(
                config.initial, grid, eps, config.amplitude, config.seed, config.gamma_bar
            )
            exact = AcousticServices.acoustic_exact_step(state, T)
            stepped = CompressibleServices.run(
                state, T, StepperConfig(nonlinear=False, fixed_dt=dt), RunLedger.compressible(f"linear-eps={eps:g}")
            ).final
            for a, b in ((stepped.v.x, exact.v.x), (stepped.v.y, exact.v.y), (stepped.c, exact.c)):
                worst_step = max(worst_step, _relative(a.modes, b.modes))

            def mode_energy(s: FlowState) -> np.ndarray:
                a = khat_x * s.v.x.modes + khat_y * s.v.y.modes
                return np.abs(a) ** 2 + np.abs(s.c.modes) ** 2

            before = mode_energy(state)
            worst_energy = max(worst_energy, float(np.max(np.abs(mode_energy(exact) - before)) / before.max()))
        op = "solver_compressible"
        return [
            property_report("linear_acoustics", f"{op}.step", worst_step <= ROUND_OFF, f"max_relative={worst_step:.3g}"),
            property_report("mode_energy", f"{op}.acoustic_exact_step", worst_energy <= 1e-13,
                            f"max_relative={worst_energy:.3g}"),
        ]

    @staticmethod
    def splitting_order(config: ExperimentConfig) -> CheckReport:
        grid = Grid(n=min(config.n, 64), box_length=config.box_length)
        state = InitialDataServices.make_initial_data(
            config.initial, grid, 0.1, config.amplitude, config.seed, config.gamma_bar
        )
        finals = []
        for dt in SPLITTING_STEPS:
            run = CompressibleServices.run(state, 0.5, StepperConfig(fixed_dt=dt), RunLedger.compressible(f"dt={dt}"))
            finals.append(run.final)

        def distance(a: FlowState, b: FlowState) -> float:
            return SpectralServices.lp_norm([a.v - b.v, a.c - b.c], 2)

        order = math.log2(distance(finals[0], finals[1]) / distance(finals[1], finals[2]))
        lower, upper = SPLITTING_ORDER
        return property_report("splitting_order", "solver_compressible.step", lower <= order <= upper,
                               f"order={order:.4g} range=[{lower}, {upper}]")

    @staticmethod
    def duhamel_consistency(config: ExperimentConfig) -> CheckReport:
        grid = Grid(n=min(config.n, 32), box_length=config.box_length)
        state = InitialDataServices.make_initial_data(
            config.initial, grid, 0.1, config.amplitude, config.seed, config.gamma_bar
        )
        defects = []
        for dt in DUHAMEL_STEPS:
            states, sources = CompressibleServices.duhamel_history(state, DUHAMEL_TIME, dt)
            defects.append((dt, AcousticServices.duhamel_defect(states, sources)))
        return AcousticServices.check_duhamel_consistency(defects)

    @staticmethod
    def lifespan_checks() -> List[CheckReport]:
        reports = []
        eps_grid = np.geomspace(0.5, 1e-12, 24)
        closed_form = 0.0
        for kind, alpha in (("exp", 1.0), ("power", 2.0)):
            model = LifespanModel.from_profile(LittlewoodPaleyServices.closed_form_profile(kind, alpha, 8))
            phi = [BoundsServices.phi_of_eps(model, e) for e in eps_grid]
            lifespans = [BoundsServices.lifespan_prediction(model, e).T for e in eps_grid]
            monotone = bool(np.all(np.diff(phi) <= 0) and np.all(np.diff(lifespans) >= 0))
            reports.append(property_report(f"lifespan_monotone_{kind}", "bounds.lifespan_prediction", monotone,
                                           f"profile={kind}:{alpha:g}"))
            for e in eps_grid[eps_grid < math.exp(-1)]:
                got = BoundsServices.lifespan_prediction(model, e).T
                if kind == "exp":
                    expected = math.log(math.log(1.0 / e))
                else:
                    expected = math.log(alpha * math.log(math.log(1.0 / e) + 2.0))
                closed_form = max(closed_form, abs(got - expected) / max(abs(expected), 1.0))
        reports.append(property_report("lifespan_closed_form", "bounds.lifespan_prediction", closed_form <= ROUND_OFF,
                                       f"max_relative={closed_form:.3g}"))
        return reports

    @staticmethod
    def reference_checks(config: ExperimentConfig, grid: Grid) -> List[CheckReport]:
        """Near-steady radial vortex over T=5."""
        x, y = grid.coordinates
        L = grid.box_length
        width = L / 16.0
        omega = np.exp(-((x - L / 2) ** 2 + (y - L / 2) ** 2) / (2.0 * width**2))
        omega = SpectralServices.from_physical(config.amplitude * (omega - omega.mean()), grid)
        run = IncompressibleServices.run_incompressible(
            IncompressibleState(omega=omega), 5.0, StepperConfig(cfl=config.cfl, max_dt=config.max_dt)
        )
        peak = run.ledger.column("omega_inf")
        energy = run.ledger.column("energy_l2")
        peak_drift = float(np.max(np.abs(peak - peak[0])) / peak[0])
        energy_drift = float(np.max(np.abs(energy - energy[0])) / energy[0])
        constant = BoundsServices.fit_vishik_constant([run.ledger.until(2.5)])
        op = "solver_incompressible.run_incompressible"
        return [
            property_report("reference_vorticity", op, peak_drift <= REFERENCE_DRIFT, f"relative_drift={peak_drift:.3g}"),
            property_report("reference_energy", op, energy_drift <= ENERGY_DRIFT, f"relative_drift={energy_drift:.3g}"),
            BoundsServices.check_vishik_growth(run.ledger, constant, config.margin),
        ]

    @staticmethod
    def determinism(config: ExperimentConfig) -> CheckReport:
        grid = Grid(n=32, box_length=config.box_length)
        state = InitialDataServices.make_initial_data(
            config.initial, grid, 0.1, config.amplitude, config.seed, config.gamma_bar
        )
        rows = [
            CompressibleServices.run(state, 0.05, StepperConfig(), RunLedger.compressible("determinism")).ledger.rows
            for _ in range(2)
        ]
        identical = bool(np.array_equal(np.array(rows[0]), np.array(rows[1]), equal_nan=True))
        return property_report("determinism", "experiments_cli.run_experiment", identical, f"identical={identical}")

    @staticmethod
    def gradient_split_static(grid: Grid, rng: np.random.Generator, margin: float) -> CheckReport:
        pairs = []
        for _ in range(SHELL_FIELD_COUNT):
            vx, vy = _random_fields(grid, rng, 2, slope=2.0)
            pairs.append(BoundsServices.gradient_split_terms(SpectralVectorField(x=vx, y=vy)))
        return _holdout("gradient_split_static", "bounds.check_gradient_split", pairs, margin)

    @staticmethod
    def run(config: ExperimentConfig, out: RunDirectory) -> List[CheckReport]:
        grid = config.grid
        rng = np.random.default_rng(config.seed)
        reports = SelftestServices.spectral_checks(grid, rng)
        reports += SelftestServices.shell_checks(grid, rng, config.margin)
        LittlewoodPaleyServices.write_partition_csv(LittlewoodPaleyServices.build_partition(grid), out.root / "partition.csv")
        reports.append(SelftestServices.gradient_split_static(grid, rng, config.margin))
        reports += SelftestServices.acoustic_checks(config, grid)
        reports.append(SelftestServices.splitting_order(config))
        reports.append(SelftestServices.duhamel_consistency(config))
        reports += SelftestServices.lifespan_checks()
        reports += SelftestServices.reference_checks(config, grid)
        reports.append(SelftestServices.determinism(config))

        for experiment in ("acoustic-decay", "incompressible-limit", "transport-log", "strichartz-sweep"):
            sub = config.model_copy(update={"experiment": experiment})
            runner = getattr(ExperimentServices, experiment.replace("-", "_"))
            reports += runner(sub, out.sub(experiment))
        lifespan = config.model_copy(
            update={"experiment": "lifespan-table", "eps": (1.0, 0.5, 0.25), "T": 4.0,
                    "amplitude": max(config.amplitude, 4.0)}
        )
        reports += ExperimentServices.lifespan_table(lifespan, out.sub("lifespan-table"))
        return reports
