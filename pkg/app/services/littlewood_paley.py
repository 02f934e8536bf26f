import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions.lab import PartitionError, ProfileError
from app.schemas.fields import Grid, SpectralScalarField
from app.schemas.littlewood_paley import BesovProfile, DyadicPartition
from app.services.spectral import SpectralServices, scalar_components

logger = logging.getLogger(__name__)

CHI_PLATEAU = 0.75
CHI_SUPPORT = 4.0 / 3.0
TINY = 1e-300


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""

    def bump(s):
        positive = s > 0
        return np.where(positive, np.exp(-1.0 / np.where(positive, s, 1.0)), 0.0)

    a = bump(t)
    b = bump(1.0 - t)
    return a / (a + b)


def chi_profile(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    values = 1.0 - _smooth_step((xi - CHI_PLATEAU) / (CHI_SUPPORT - CHI_PLATEAU))
    return np.where(values < TINY, 0.0, values)


def phi_profile(xi: np.ndarray) -> np.ndarray:
    values = chi_profile(np.asarray(xi) / 2.0) - chi_profile(xi)
    return np.where(np.abs(values) < TINY, 0.0, values)


def _sequence_norm(sequence: np.ndarray, r: float) -> float:
    if sequence.size == 0:
        return 0.0
    if np.isinf(r):
        return float(sequence.max())
    return float(np.sum(sequence**r) ** (1.0 / r))


class LittlewoodPaleyServices:
    @staticmethod
    @lru_cache(maxsize=16)
    def build_partition(grid: Grid, unit: Optional[float] = None) -> DyadicPartition:
        unit = grid.fundamental if unit is None else float(unit)
        cutoff = grid.k_max / unit
        if cutoff < CHI_PLATEAU:
            raise PartitionError(
                "build_partition",
                f"dealias cutoff {cutoff:.3g} (in dyadic units) hosts no shell q >= 0",
            )
        q_max = 0
        while CHI_PLATEAU * 2 ** (q_max + 1) <= cutoff:
            q_max += 1
        xi = grid.wavenumbers.k_abs / unit
        chi = chi_profile(xi)
        phi = tuple(phi_profile(xi / 2**q) for q in range(q_max + 1))
        for array in (xi, chi) + phi:
            array.flags.writeable = False
        logger.debug(f"Partition built: n={grid.n}, unit={unit:.4g}, q_max={q_max}")
        return DyadicPartition(grid=grid, unit=unit, xi=xi, chi=chi, phi=phi, q_max=q_max)

    @staticmethod
    def _check_shell(partition: DyadicPartition, q: int, upper: int, operation: str):
        if q < -1 or q > upper:
            raise PartitionError(operation, f"q={q} outside [-1, {upper}]")

    @staticmethod
    def delta_q(obj, q: int, partition: Optional[DyadicPartition] = None):
        """Dyadic block of a scalar or vector field."""
        components = scalar_components(obj)
        partition = partition or LittlewoodPaleyServices.build_partition(components[0].grid)
        LittlewoodPaleyServices._check_shell(partition, q, partition.q_max, "delta_q")
        multiplier = partition.multiplier(q)
        return _map_components(obj, lambda c: c.with_modes(c.modes * multiplier))

    @staticmethod
    def s_q(obj, q: int, partition: Optional[DyadicPartition] = None):
        """Low-frequency cut-off S_q = sum of the blocks below q."""
        components = scalar_components(obj)
        partition = partition or LittlewoodPaleyServices.build_partition(components[0].grid)
        LittlewoodPaleyServices._check_shell(partition, q, partition.q_max + 1, "s_q")
        multiplier = np.zeros_like(partition.chi)
        for p in range(-1, q):
            multiplier = multiplier + partition.multiplier(p)
        return _map_components(obj, lambda c: c.with_modes(c.modes * multiplier))

    @staticmethod
    def block_norms(obj, p: float, partition: Optional[DyadicPartition] = None) -> np.ndarray:
        """||Delta_q u||_{L^p} for q = -1..q_max, components combined pointwise."""
        components = scalar_components(obj)
        partition = partition or LittlewoodPaleyServices.build_partition(components[0].grid)
        grid = partition.grid
        norms = np.empty(partition.q_max + 2)
        for i, q in enumerate(partition.shells):
            multiplier = partition.multiplier(q)
            squares = 0.0
            for component in components:
                block = SpectralServices.fft_inverse(component.with_modes(component.modes * multiplier))
                squares = squares + np.abs(block) ** 2
            norms[i] = SpectralServices.lp_norm_samples(np.sqrt(squares), grid, p)
        return norms

    @staticmethod
    def besov_sequence(obj, s: float, p: float, partition: Optional[DyadicPartition] = None) -> np.ndarray:
        norms = LittlewoodPaleyServices.block_norms(obj, p, partition)
        q = np.arange(-1, norms.size - 1, dtype=float)
        return 2.0 ** (q * s) * norms

    @staticmethod
    def besov_norm(obj, s: float, p: float, r: float, partition: Optional[DyadicPartition] = None) -> float:
        sequence = LittlewoodPaleyServices.besov_sequence(obj, s, p, partition)
        return _sequence_norm(sequence, r)

    @staticmethod
    def besov_norm_hetero(
        obj, s: float, p: float, r: float, profile: BesovProfile,
        partition: Optional[DyadicPartition] = None,
    ) -> float:
        sequence = LittlewoodPaleyServices.besov_sequence(obj, s, p, partition)
        weights = profile.weights(sequence.size - 2)
        return _sequence_norm(weights * sequence, r)

    @staticmethod
    def homogeneous_besov_norm(
        obj, s: float, p: float, r: float, unit: Optional[float] = None
    ) -> float:
        """Norm built on phi(2^-q D) for every q reaching a nonzero grid wavenumber."""
        components = scalar_components(obj)
        partition = LittlewoodPaleyServices.build_partition(components[0].grid, unit)
        grid = partition.grid
        xi_min = grid.fundamental / partition.unit
        q_min = math.ceil(math.log2(xi_min * 3.0 / 8.0))
        terms = []
        for q in range(q_min, partition.q_max + 1):
            multiplier = partition.phi[q] if q >= 0 else phi_profile(partition.xi / 2.0**q)
            squares = 0.0
            for component in components:
                modes = component.modes * multiplier
                modes[0, 0] = 0.0
                squares = squares + np.abs(SpectralServices.fft_inverse(component.with_modes(modes))) ** 2
            terms.append(2.0 ** (q * s) * SpectralServices.lp_norm_samples(np.sqrt(squares), grid, p))
        return _sequence_norm(np.array(terms), r)

    @staticmethod
    def validate_profile(
        values: Sequence[float], kind: str = "data", parameter: Optional[float] = None,
        degenerate: bool = False, normalization: Optional[float] = None,
    ) -> BesovProfile:
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            raise ProfileError("no values given")
        if not np.all(np.isfinite(values)):
            raise ProfileError("values must be finite")
        if np.any(values <= 0):
            raise ProfileError("values must be positive")
        if np.any(np.diff(values) < 0):
            raise ProfileError("values must be nondecreasing")
        ratio_bound = float(np.max(values[1:] / values[:-1])) if values.size > 1 else 1.0
        q = np.arange(values.size) - 1
        if values.size > 1:
            growth = np.log(values[1:] / values[0]) / (q[1:] + 1)
            growth_exponent = float(max(0.0, growth.max()))
        else:
            growth_exponent = 0.0
        return BesovProfile(
            values=tuple(float(v) for v in values),
            ratio_bound=ratio_bound,
            growth_exponent=growth_exponent,
            diverges=bool(values[-1] > 10.0 * values[0]),
            kind=kind,
            parameter=parameter,
            degenerate=degenerate,
            normalization=normalization,
        )

    @staticmethod
    def closed_form_profile(kind: str, parameter: Optional[float], q_max: int) -> BesovProfile:
        """constant, power:a -> (q+2)^a, exp:a -> e^{a q}, stored on -1..q_max."""
        q = np.arange(-1, q_max + 1, dtype=float)
        if kind == "constant":
            level = 1.0 if parameter is None else parameter
            values = np.full(q.size, level)
        elif kind == "power":
            values = (q + 2.0) ** parameter
        elif kind == "exp":
            values = np.exp(parameter * q)
        else:
            raise ProfileError(f"unknown profile kind {kind}")
        return LittlewoodPaleyServices.validate_profile(values, kind=kind, parameter=parameter)

    @staticmethod
    def find_profile(obj, s: float, p: float, r: float = 1) -> BesovProfile:
        return LittlewoodPaleyServices.find_profile_family([obj], s, p, r)

    @staticmethod
    def find_profile_family(members: Sequence, s: float, p: float, r: float = 1) -> BesovProfile:
        """Unbounded class-U weight keeping the weighted norm within twice the plain one."""
        sequences = np.array([LittlewoodPaleyServices.besov_sequence(m, s, p) for m in members])
        powered = sequences.max(axis=0) ** r
        total = powered.sum()
        if total <= 0:
            logger.warning("find_profile: zero data, returning the constant profile")
            return LittlewoodPaleyServices.validate_profile(
                np.ones(powered.size), kind="data", degenerate=True, normalization=1.0
            )
        tails = np.cumsum(powered[::-1])[::-1]
        values = np.empty(powered.size)
        values[0] = 1.0
        for i in range(1, powered.size):
            cap = 2.0 * values[i - 1]
            candidate = math.sqrt(total / tails[i]) ** (1.0 / r) if tails[i] > 0 else cap
            values[i] = max(values[i - 1], min(candidate, cap))
        weighted = np.sum(values * powered)
        normalization = float((weighted / total) ** (1.0 / r))
        return LittlewoodPaleyServices.validate_profile(values, normalization=normalization)

    @staticmethod
    def bernstein_ratios(field, p: float = 2) -> Dict[int, float]:
        """||grad Delta_q u||_p / (unit 2^q ||Delta_q u||_p) for q = 0..q_max-1."""
        components = scalar_components(field)
        partition = LittlewoodPaleyServices.build_partition(components[0].grid)
        ratios = {}
        for q in range(0, partition.q_max):
            block = LittlewoodPaleyServices.delta_q(field, q, partition)
            size = SpectralServices.lp_norm(block, p)
            if size <= 1e-14:
                continue
            gradient = [SpectralServices.grad(c) for c in scalar_components(block)]
            ratios[q] = SpectralServices.lp_norm(gradient, p) / (partition.unit * 2**q * size)
        return ratios

    @staticmethod
    def bernstein_sup_terms(field: SpectralScalarField) -> List[Tuple[float, float]]:
        """(||Delta_q u||_inf, 8 2^q ||Delta_q u||_2) for each nonzero shell q >= 0."""
        partition = LittlewoodPaleyServices.build_partition(field.grid)
        terms = []
        for q in range(0, partition.q_max + 1):
            block = LittlewoodPaleyServices.delta_q(field, q, partition)
            l2 = SpectralServices.lp_norm(block, 2)
            if l2 > 1e-14:
                terms.append((SpectralServices.lp_norm(block, np.inf), 8.0 * 2.0**q * l2))
        return terms

    @staticmethod
    def embedding_terms(field) -> Tuple[float, float]:
        """(||u||_inf, ||u||_{B^{7/4}_{2,1}})"""
        return (
            SpectralServices.lp_norm(field, np.inf),
            LittlewoodPaleyServices.besov_norm(field, 1.75, 2, 1),
        )

    @staticmethod
    def product_law_terms(u: SpectralScalarField, v: SpectralScalarField, p: float = 4) -> Tuple[float, float]:
        """(||uv||_{B^0_{inf,1}}, ||u||_{B^{2/p}_{p,1}} ||v||_{B^0_{inf,1}})"""
        product = SpectralServices.multiply(u, v)
        return (
            LittlewoodPaleyServices.besov_norm(product, 0, np.inf, 1),
            LittlewoodPaleyServices.besov_norm(u, 2.0 / p, p, 1)
            * LittlewoodPaleyServices.besov_norm(v, 0, np.inf, 1),
        )

    @staticmethod
    def interpolation_terms(field) -> Tuple[float, float]:
        """(||f||_{B^{1/2}_{4,1}}, ||f||^{1/2}_{B^1_{2,1}} ||f||^{1/2}_{B^0_{inf,1}})"""
        return (
            LittlewoodPaleyServices.besov_norm(field, 0.5, 4, 1),
            math.sqrt(
                LittlewoodPaleyServices.besov_norm(field, 1, 2, 1)
                * LittlewoodPaleyServices.besov_norm(field, 0, np.inf, 1)
            ),
        )

    @staticmethod
    def write_profile(profile: BesovProfile, path: Path) -> Path:
        q = np.arange(-1, len(profile.values) - 1)
        np.savetxt(path, np.column_stack([q, profile.values]), fmt=["%d", "%.17g"], header="q psi")
        return Path(path)

    @staticmethod
    def read_profile(path: Path) -> BesovProfile:
        table = np.loadtxt(path, ndmin=2)
        return LittlewoodPaleyServices.validate_profile(table[:, 1])

    @staticmethod
    def write_partition_csv(partition: DyadicPartition, path: Path) -> Path:
        """One row per distinct grid wavenumber below the dealias cutoff."""
        grid = partition.grid
        inside = grid.wavenumbers.dealias_mask
        xi, first = np.unique(np.round(partition.xi[inside], 12), return_index=True)
        columns = [xi, xi * partition.unit, partition.chi[inside][first]]
        columns += [phi[inside][first] for phi in partition.phi]
        header = ",".join(["xi", "wavenumber", "chi"] + [f"phi_{q}" for q in range(partition.q_max + 1)])
        np.savetxt(path, np.column_stack(columns), delimiter=",", fmt="%.17g", header=header, comments="")
        return Path(path)


def _map_components(obj, transform):
    from app.schemas.fields import SpectralVectorField

    if isinstance(obj, SpectralScalarField):
        return transform(obj)
    if isinstance(obj, SpectralVectorField):
        return SpectralVectorField(x=transform(obj.x), y=transform(obj.y))
    return type(obj)(_map_components(item, transform) for item in obj)
