"""
Purpose:
    Binary segmentation under the convexity constraints C_{r_i}(u) >= 0.

    Each iteration
        1. picks the narrow band S(u^t) around the current boundary,
        2. linearizes the Lagrangian at (u^t, g^t) into a per-pixel cost F,
        3. thresholds F + theta (0.5 - u^t) inside the band, then re-imposes the labels,
        4. moves every multiplier by projected gradient ascent g <- max(0, g - tau C(u^t)).
    The region force is refitted every `refresh_period` iterations. The run
    stops once the relative variation over `variation_period` iterations drops
    below `tol` and every C_i(u) is non-negative up to the lattice slack 1/(2N_i).
    A disc of N_i pixels can not see notches shallower than that slack, so a
    result that passes is returned as its raster hull (`hull_rounding`).
"""

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from convex_shape_seg.modules import hull
from convex_shape_seg.modules.conv import (
    BACKGROUND_PAD,
    EDGE_PAD,
    ZERO_PAD,
    Kernel,
    convolve_values,
    make_disc_kernel,
    make_gaussian_kernel,
)
from convex_shape_seg.modules.convexity import (
    ConstraintField,
    constraint_values,
    convexity_score,
    raster_hull,
    violations_by_radius,
    within_slack,
)
from convex_shape_seg.modules.grid import BinaryField, PixelSet, ScalarField, relative_variation
from convex_shape_seg.modules.region_force import (
    ForceField,
    GaussianMixture,
    build_force,
    init_models,
    refit_models,
)
from convex_shape_seg.types import IterationRecord, RunReport

logger = logging.getLogger(__name__)

GradientForm = Literal["linearized", "exact"]

# config-file spellings of the usual symbols
CONFIG_ALIASES = {
    "lambda": "lam",
    "s": "margin",
    "epsilon": "tol",
    "eps": "tol",
    "T": "max_iter",
    "r0": "band_radius",
    "N0": "n_fg",
    "N1": "n_bg",
}

TRUE_STRINGS = {"1", "true", "yes", "on"}
FALSE_STRINGS = {"0", "false", "no", "off"}


# ------------------ configuration ------------------


@dataclass
class SolverConfig:
    """
    Parameters of the solver. Defaults are the published experiment settings.
    """

    radii: Tuple[float, ...] = (4.0, 9.0, 14.0, 19.0)
    lam: float = 0.1
    w0: float = 0.5
    w1: float = 0.5
    # multiplier step
    tau: float = 1.0
    # proximal weight
    theta: float = 1.0
    # band threshold, in disc pixels disagreeing with the center
    rho: float = 2.0
    band_radius: float = 3.0
    gaussian_size: int = 5
    gaussian_sigma: float = 0.5
    # background margin s for the first background fit
    margin: float = 5.0
    tol: float = 1e-3
    max_iter: int = 5000
    refresh_period: int = 50
    variation_period: int = 300
    n_fg: int = 2
    n_bg: int = 3
    gamma0: float = 1.0
    gamma1: float = 1.0
    p_floor: float = 1e-6
    seed: int = 0
    # "linearized": sum_i [0.5 g_i - b_i * (u + g_i u)]
    # "exact":      sum_i [0.5 g_i - g_i (b_i * u) - b_i * (g_i u)]
    gradient: GradientForm = "linearized"
    # scale the length term by sqrt(pi / sigma)
    length_prefactor: bool = False
    # False updates every pixel each iteration
    narrow_band: bool = True
    # use the 0.5 perimeter view inside C_i for the multiplier update
    ternary_multipliers: bool = True
    # answer with the raster hull of a result that passes every disc test within slack
    hull_rounding: bool = True
    debug_checks: bool = False

    def __post_init__(self):
        self.radii = tuple(sorted(float(r) for r in self.radii))
        if any(r < 1 for r in self.radii):
            raise ValueError("radius below mesh size")
        positive = {
            "tau": self.tau,
            "band_radius": self.band_radius,
            "gaussian_sigma": self.gaussian_sigma,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "refresh_period": self.refresh_period,
            "variation_period": self.variation_period,
            "n_fg": self.n_fg,
            "n_bg": self.n_bg,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        non_negative = {
            "lam": self.lam,
            "w0": self.w0,
            "w1": self.w1,
            "theta": self.theta,
            "rho": self.rho,
            "margin": self.margin,
            "gamma0": self.gamma0,
            "gamma1": self.gamma1,
        }
        for name, value in non_negative.items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")
        if self.gamma0 == 0 and self.gamma1 == 0:
            raise ValueError("gamma0 and gamma1 cannot both be zero")
        if self.gradient not in ("linearized", "exact"):
            raise ValueError(f"unknown gradient form '{self.gradient}'")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Optional[str]]) -> "SolverConfig":
        """
        Build a config from string key/values, e.g. the output of dotenv_values().
        """
        defaults = {f.name: f.default for f in dataclasses.fields(cls)}
        kwargs = {}
        for raw_key, raw_value in values.items():
            key = CONFIG_ALIASES.get(raw_key.strip(), raw_key.strip())
            if key not in defaults:
                raise ValueError(f"unknown config key '{raw_key}'")
            kwargs[key] = _parse_config_value(key, raw_value or "", defaults[key])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        config = dataclasses.asdict(self)
        config["radii"] = list(self.radii)
        return config


def _parse_config_value(key: str, raw: str, default):
    raw = raw.strip()
    if key == "radii":
        return tuple(float(r) for r in raw.replace(",", " ").split())
    if isinstance(default, bool):
        lowered = raw.lower()
        if lowered in TRUE_STRINGS:
            return True
        if lowered in FALSE_STRINGS:
            return False
        raise ValueError(f"config key '{key}' expects a boolean, got '{raw}'")
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ValueError(f"config key '{key}' expects a number, got '{raw}'")
    return raw


@dataclass(frozen=True)
class SolverKernels:
    discs: List[Kernel]
    band: Kernel
    gaussian: Kernel

    @classmethod
    def from_config(cls, config: SolverConfig) -> "SolverKernels":
        return cls(
            discs=[make_disc_kernel(r) for r in config.radii],
            band=make_disc_kernel(config.band_radius),
            gaussian=make_gaussian_kernel(config.gaussian_size, config.gaussian_sigma),
        )


def length_scale(config: SolverConfig) -> float:
    return math.sqrt(math.pi / config.gaussian_sigma) if config.length_prefactor else 1.0


# ------------------ state ------------------


@dataclass
class SolverState:
    u: BinaryField
    multipliers: List[ScalarField]
    force: ForceField
    # u = 0 is enforced on CH(R_ob), u = 1 on R_bg outside the hull
    object_lock: np.ndarray
    background_lock: np.ndarray
    fg_model: Optional[GaussianMixture] = None
    bg_model: Optional[GaussianMixture] = None
    t: int = 0
    rv_history: List[Tuple[int, float]] = field(default_factory=list)
    records: List[IterationRecord] = field(default_factory=list)


def initialize(
    image: np.ndarray, R_ob: PixelSet, R_bg: PixelSet, config: SolverConfig
) -> SolverState:
    """
    u^0 = indicator of CH(R_ob), g_i^0 = 0, force from the first mixture fits.
    """
    if image.ndim == 2:
        image = image[:, :, None]
    height, width = image.shape[:2]
    for name, labels in (("object", R_ob), ("background", R_bg)):
        if (labels.width, labels.height) != (width, height):
            raise ValueError(
                f"{name} labels are {labels.width}x{labels.height}, image is {width}x{height}"
            )
    if len(R_ob) == 0:
        raise ValueError("no object labels")

    hull_field = hull.rasterize_hull(hull.convex_hull(R_ob), width, height)
    object_lock = hull_field.object_mask
    # background labels inside the hull are dropped
    background_lock = R_bg.to_mask() & ~object_lock

    fg_model, bg_model = init_models(
        image, hull_field, config.margin, config.n_fg, config.n_bg, config.seed
    )
    force = build_force(
        image,
        fg_model,
        bg_model,
        config.w0,
        config.w1,
        config.gamma0,
        config.gamma1,
        config.p_floor,
    )
    u = BinaryField(np.where(background_lock, 1, hull_field.values).astype(np.uint8))
    multipliers = [ScalarField(np.zeros((height, width))) for _ in config.radii]
    logger.info(
        f"initialize: hull of {object_lock.sum()} pixels, {background_lock.sum()} background labels"
    )
    return SolverState(
        u=u,
        multipliers=multipliers,
        force=force,
        object_lock=object_lock,
        background_lock=background_lock,
        fg_model=fg_model,
        bg_model=bg_model,
    )


# ------------------ iteration pieces ------------------


def band_mask(u: BinaryField, kernel: Kernel, rho: float) -> np.ndarray:
    """
    |k * u - N u| >= rho with k the 0/1 disc stencil and N its count.
    """
    if rho < 0:
        raise ValueError(f"rho must be non-negative, got {rho}")
    strict = u.as_float()
    disc_conv = convolve_values(strict, kernel, EDGE_PAD)
    # u is binary, so the count difference is an integer
    statistic = np.rint(kernel.count * np.abs(disc_conv - strict))
    return statistic >= rho


def narrow_band(u: BinaryField, r0: float = 3.0, rho: float = 2.0) -> PixelSet:
    return PixelSet.from_mask(band_mask(u, make_disc_kernel(r0), rho))


def _disc_convolutions(u: BinaryField, kernels: Sequence[Kernel], ternary: bool = True) -> List[np.ndarray]:
    conv_input = u.ternary_view().values if ternary else u.as_float()
    return [convolve_values(conv_input, kernel, BACKGROUND_PAD) for kernel in kernels]


def linearized_cost(
    u: BinaryField,
    multipliers: Sequence[ScalarField],
    f: Union[ForceField, ScalarField],
    config: SolverConfig,
    kernels: Optional[SolverKernels] = None,
    disc_convs: Optional[Sequence[np.ndarray]] = None,
) -> ScalarField:
    """
    F = sum_i [0.5 g_i - b_i * (u + g_i u)] + f + lambda G_sigma * (1 - 2u)

    The perimeter-at-0.5 view of u goes into every b_i convolution, the strict
    u everywhere else. `disc_convs` may carry precomputed b_i * u.
    """
    kernels = kernels or SolverKernels.from_config(config)
    ternary = u.ternary_view().values
    strict = u.as_float()
    if disc_convs is None:
        disc_convs = [convolve_values(ternary, k, BACKGROUND_PAD) for k in kernels.discs]

    force = f.f if isinstance(f, ForceField) else f
    cost = force.values.copy()
    for kernel, g, b_u in zip(kernels.discs, multipliers, disc_convs):
        g = g.values
        b_gu = convolve_values(g * ternary, kernel, ZERO_PAD)
        if config.gradient == "exact":
            cost += 0.5 * g - g * b_u - b_gu
        else:
            cost += 0.5 * g - b_u - b_gu

    length = convolve_values(1.0 - 2.0 * strict, kernels.gaussian, EDGE_PAD)
    cost += config.lam * length_scale(config) * length
    return ScalarField(cost)


def threshold_update(
    u: BinaryField,
    band: np.ndarray,
    F: np.ndarray,
    theta: float,
    object_lock: np.ndarray,
    background_lock: np.ndarray,
) -> BinaryField:
    """
    Inside the band: 1 where F + theta (0.5 - u) <= 0, else 0, then the labels win.
    Outside the band u is kept.
    """
    strict = u.values
    proposal = (F + theta * (0.5 - strict) <= 0).astype(np.uint8)
    proposal[background_lock] = 1
    proposal[object_lock] = 0
    return BinaryField(np.where(band, proposal, strict).astype(np.uint8))


def update_u(
    state: SolverState, band: Union[PixelSet, np.ndarray], F: ScalarField, config: SolverConfig
) -> BinaryField:
    band = band.to_mask() if isinstance(band, PixelSet) else band
    return threshold_update(
        state.u, band, F.values, config.theta, state.object_lock, state.background_lock
    )


def update_multipliers(
    multipliers: Sequence[ScalarField],
    constraints: Sequence[Union[ConstraintField, ScalarField, np.ndarray]],
    tau: float,
) -> List[ScalarField]:
    """
    g_i <- max(0, g_i - tau C_i(u)) for every radius.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    updated = []
    for g, constraint in zip(multipliers, constraints):
        if isinstance(constraint, ConstraintField):
            constraint = constraint.values
        values = constraint.values if isinstance(constraint, ScalarField) else constraint
        updated.append(ScalarField(np.maximum(0.0, g.values - tau * values)))
    return updated


def round_to_hull(u: BinaryField, background_lock: np.ndarray) -> Optional[BinaryField]:
    """
    Raster hull of the object, or None when the hull would cover a background label.
    """
    if u.object_count == 0:
        return None
    rounded = raster_hull(u)
    if np.any(rounded.object_mask & background_lock):
        return None
    return rounded


def objective(
    u: BinaryField,
    f: Union[ForceField, ScalarField],
    config: SolverConfig,
    gaussian: Optional[Kernel] = None,
) -> float:
    """
    sum f u + lambda * sum u (G_sigma * (1 - u)), the energy the iteration decreases.
    """
    gaussian = gaussian or make_gaussian_kernel(config.gaussian_size, config.gaussian_sigma)
    force = f.f if isinstance(f, ForceField) else f
    strict = u.as_float()
    length = np.sum(strict * convolve_values(1.0 - strict, gaussian, EDGE_PAD))
    return float(np.sum(force.values * strict) + config.lam * length_scale(config) * length)


# ------------------ the loop ------------------


class ConvexSegmenter:
    """
    Runs the iteration for one image and one set of labels.
    `on_iteration` callbacks receive every IterationRecord as it is produced.
    """

    def __init__(
        self,
        image: np.ndarray,
        R_ob: PixelSet,
        R_bg: PixelSet,
        config: Optional[SolverConfig] = None,
        on_iteration: Optional[Callable[[IterationRecord], None]] = None,
    ):
        if image.ndim == 2:
            image = image[:, :, None]
        self.image = np.asarray(image, dtype=np.float64)
        self.R_ob = R_ob
        self.R_bg = R_bg
        self.config = config or SolverConfig()
        self.kernels = SolverKernels.from_config(self.config)
        self.on_iteration = on_iteration
        self.state: Optional[SolverState] = None
        self.snapshot: Optional[BinaryField] = None

    def initialize(self) -> SolverState:
        self.state = initialize(self.image, self.R_ob, self.R_bg, self.config)
        self.snapshot = self.state.u
        return self.state

    def step(self) -> IterationRecord:
        state = self.state
        config = self.config
        u = state.u

        disc_convs = _disc_convolutions(u, self.kernels.discs)
        if config.narrow_band:
            band = band_mask(u, self.kernels.band, config.rho)
        else:
            band = np.ones(u.shape, dtype=bool)

        F = linearized_cost(u, state.multipliers, state.force, config, self.kernels, disc_convs)
        new_u = update_u(state, band, F, config)

        if not config.ternary_multipliers:
            disc_convs = _disc_convolutions(u, self.kernels.discs, ternary=False)
        constraints = [constraint_values(u, b_u) for b_u in disc_convs]
        new_multipliers = update_multipliers(state.multipliers, constraints, config.tau)

        record = IterationRecord(
            t=state.t + 1,
            band_size=int(np.count_nonzero(band)),
            min_violation={r: float(c.min()) for r, c in zip(config.radii, constraints)},
            energy=objective(u, state.force, config, self.kernels.gaussian),
        )

        if config.debug_checks:
            self._check_invariants(u, new_u, band, new_multipliers)

        state.u = new_u
        state.multipliers = new_multipliers
        state.t += 1
        logger.debug(
            f"t={state.t} band={record.band_size} object={new_u.object_count} energy={record.energy:.4f}"
        )

        if state.t % config.refresh_period == 0:
            self.refresh_force()
        if state.t % config.variation_period == 0:
            record.rv = self.check_variation()

        state.records.append(record)
        if self.on_iteration:
            self.on_iteration(record)
        return record

    def _check_invariants(self, u_old, u_new, band, multipliers):
        state = self.state
        assert np.all(u_new.values[state.object_lock] == 0), "object labels violated"
        assert np.all(u_new.values[state.background_lock] == 1), "background labels violated"
        assert all(g.values.min() >= 0 for g in multipliers), "negative multiplier"
        assert np.array_equal(u_new.values[~band], u_old.values[~band]), "pixel changed outside the band"

    def refresh_force(self):
        state = self.state
        config = self.config
        models = refit_models(self.image, state.u, config.n_fg, config.n_bg, config.seed)
        if models is None:
            return
        state.fg_model, state.bg_model = models
        state.force = build_force(
            self.image,
            state.fg_model,
            state.bg_model,
            config.w0,
            config.w1,
            config.gamma0,
            config.gamma1,
            config.p_floor,
        )
        logger.info(f"t={state.t}: region force refreshed")

    def check_variation(self) -> float:
        state = self.state
        rv = relative_variation(self.snapshot, state.u)
        self.snapshot = state.u
        state.rv_history.append((state.t, rv))
        logger.info(f"t={state.t}: relative variation {rv:.6f}")
        return rv

    def constraints_hold(self) -> bool:
        violations = violations_by_radius(
            self.state.u, self.config.radii, ternary=self.config.ternary_multipliers
        )
        return within_slack(violations)

    def converged(self) -> bool:
        history = self.state.rv_history
        if not history or history[-1][0] != self.state.t or history[-1][1] >= self.config.tol:
            return False
        if not self.constraints_hold():
            logger.info(f"t={self.state.t}: stalled with violated constraints, continuing")
            return False
        return True

    def round_to_hull(self) -> int:
        """
        Replace u by its raster hull when the constraints hold. Returns the pixels added.
        """
        state = self.state
        if not self.config.radii or not self.constraints_hold():
            return 0
        rounded = round_to_hull(state.u, state.background_lock)
        if rounded is None:
            logger.warning("raster hull covers background labels, result left as is")
            return 0
        added = rounded.object_count - state.u.object_count
        state.u = rounded
        if added:
            logger.info(f"rounded to the raster hull, {added} pixels added")
        return added

    def run(self) -> Tuple[BinaryField, RunReport]:
        started = time.perf_counter()
        if self.state is None:
            self.initialize()
        state = self.state

        stop_reason = "max-iterations"
        while state.t < self.config.max_iter:
            self.step()
            if self.converged():
                stop_reason = "tolerance"
                break

        if stop_reason == "max-iterations":
            logger.warning(f"no convergence after {state.t} iterations")
        else:
            logger.info(f"converged after {state.t} iterations")

        rounded = self.round_to_hull() if self.config.hull_rounding else 0
        report = self.make_report(stop_reason, time.perf_counter() - started)
        report.rounded_pixels = rounded
        return state.u, report

    def make_report(self, stop_reason: str, seconds: float) -> RunReport:
        state = self.state
        u = state.u
        violations: Dict[float, float] = violations_by_radius(
            u, self.config.radii, ternary=self.config.ternary_multipliers
        )
        return RunReport(
            iterations=state.t,
            stop_reason=stop_reason,
            final_rv=state.rv_history[-1][1] if state.rv_history else None,
            min_violation=violations,
            convexity_score=convexity_score(u),
            seconds=seconds,
            rv_history=list(state.rv_history),
            radii=list(self.config.radii),
            final_energy=objective(u, state.force, self.config, self.kernels.gaussian),
            band_size=state.records[-1].band_size if state.records else 0,
            object_pixels=u.object_count,
        )


def run(
    image: np.ndarray,
    R_ob: PixelSet,
    R_bg: PixelSet,
    config: Optional[SolverConfig] = None,
    on_iteration: Optional[Callable[[IterationRecord], None]] = None,
) -> Tuple[BinaryField, RunReport]:
    return ConvexSegmenter(image, R_ob, R_bg, config, on_iteration).run()
