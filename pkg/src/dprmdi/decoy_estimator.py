"""Two-stage LP estimation of single-photon-class yields and error products.

Observed gains decompose over photon classes as

    Q^{a,b} = sum_i P_i^a Y_i^{a,b},      Y_i^{a,b} = sum_j P_j^b Y_{i,j}^{a,b},

and likewise for the error products W = Q E.  Quantities belonging to
different intensity settings of the same class may differ by at most
eps = sqrt(1 - F^2) where F is the inter-intensity fidelity, so stage 1
bounds Y_i^{mu,beta} for every Bob setting beta from the observed row of
gains, and stage 2 bounds Y_{i,j}^{mu,mu} from the stage-1 intervals.  Both
stages are small bounded-variable LPs solved for each index in both
directions.

The LP keeps one variable per photon class up to the point where the
remaining class probability mass is negligible (for a discrete N-phase
source that is all N classes), so the systems match the exact decomposition;
classes beyond the cutoff contribute a [0, tail-mass] slack.  Only classes
below the configured truncation index are reported.  Rows are rescaled to
order one and widened by a tiny cushion so that rounding in the observed
values can never produce a spuriously infeasible program.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .channel_model import SETTINGS, ObservedStats
from .fock_coherent import (
    CONTINUOUS,
    DEFAULT_SERIES_POLICY,
    SeriesPolicy,
    SourceConfig,
    class_probability,
    deviation_bound,
    fidelity_between_intensities,
)
from .lp_core import LinearProgram, LpStatus, Relation, Sense, solve

__all__ = [
    "Target",
    "EstimationConfig",
    "Interval",
    "YieldBounds",
    "compute_epsilon",
    "sources_for",
    "estimate_stage1",
    "estimate_stage2",
    "error_rate_upper",
    "estimate_yield_bounds",
]

logger = logging.getLogger(__name__)

# Classes beyond the point where the residual probability mass drops below
# this are folded into the tail slack.
CLASS_MASS_TOL = 1e-15
MAX_CLASSES = 64
# Relative band cushion absorbing double-precision rounding of the observed
# values; part of the estimation program, mirrored by any reimplementation.
FEASIBILITY_CUSHION = 1e-12

VACUOUS = (0.0, 1.0)


class Target(Enum):
    GAIN = "gain"
    ERROR_PRODUCT = "error_product"


class Interval(NamedTuple):
    lo: float
    hi: float


@dataclass(frozen=True)
class EstimationConfig:
    """Truncation index, decoy count, and estimation knobs."""

    truncation_k: int = 3
    num_decoys_m: int = 2
    epsilon_override: float | None = None
    series: SeriesPolicy = field(default_factory=SeriesPolicy)
    max_epsilon_doublings: int = 3

    def __post_init__(self) -> None:
        if self.truncation_k < 2:
            raise ValueError("truncation_k must be at least 2")
        if self.num_decoys_m < 1:
            raise ValueError("num_decoys_m must be at least 1")
        if self.epsilon_override is not None and self.epsilon_override < 0:
            raise ValueError("epsilon_override must be nonnegative")


@dataclass
class YieldBounds:
    """Certified intervals from both stages plus the derived bit-error bound."""

    yield_stage1: dict[tuple[int, str], Interval]
    yield_pairs: dict[tuple[int, int], Interval]
    error_product_stage1: dict[tuple[int, str], Interval]
    error_product_pairs: dict[tuple[int, int], Interval]
    e11_bit_upper: float
    diagnostics: list[str] = field(default_factory=list)

    @property
    def y11(self) -> Interval:
        return self.yield_pairs[(1, 1)]

    @property
    def v11(self) -> Interval:
        return self.error_product_pairs[(1, 1)]


def compute_epsilon(
    signal: SourceConfig,
    other: SourceConfig,
    policy: SeriesPolicy = DEFAULT_SERIES_POLICY,
) -> float:
    """Deviation bound eps = sqrt(1 - F^2) between two intensity settings."""
    return deviation_bound(fidelity_between_intensities(signal, other, policy))


def sources_for(n_phases: float, signal: float, decoy: float) -> dict[str, SourceConfig]:
    """Per-setting source configurations sharing one phase count."""
    return {
        "signal": SourceConfig(n_phases, signal),
        "decoy": SourceConfig(n_phases, decoy),
        "vacuum": SourceConfig(n_phases, 0.0),
    }


@lru_cache(maxsize=1 << 14)
def _class_table(
    n_phases: float,
    intensities: tuple[float, ...],
    k: int,
    cutoff: float,
    max_terms: int,
) -> tuple[tuple[tuple[float, ...], ...], tuple[float, ...]]:
    """Per-setting class probabilities up to a shared cutoff, plus tail masses."""
    policy = SeriesPolicy(cutoff, max_terms)
    cap = MAX_CLASSES if n_phases == CONTINUOUS else min(int(n_phases), MAX_CLASSES)
    configs = [SourceConfig(n_phases, mu) for mu in intensities]
    count = min(k, cap)
    while count < cap:
        if all(
            1.0 - math.fsum(class_probability(cfg, j, policy) for j in range(count)) < CLASS_MASS_TOL
            for cfg in configs
        ):
            break
        count += 1
    probs = tuple(
        tuple(class_probability(cfg, j, policy) for j in range(count)) for cfg in configs
    )
    tails = tuple(max(0.0, 1.0 - math.fsum(row)) for row in probs)
    return probs, tails


def _check_sources(sources: Mapping[str, SourceConfig]) -> float:
    missing = [s for s in SETTINGS if s not in sources]
    if missing:
        raise ValueError(f"sources missing settings: {missing}")
    phases = {sources[s].num_phases for s in SETTINGS}
    if len(phases) != 1:
        raise ValueError("all settings must share one number of phases")
    return next(iter(phases))


def _setting_data(sources: Mapping[str, SourceConfig], est: EstimationConfig):
    """(probability rows, tails, epsilons) per setting in canonical order."""
    n_phases = _check_sources(sources)
    intensities = tuple(sources[s].intensity for s in SETTINGS)
    probs, tails = _class_table(
        n_phases, intensities, est.truncation_k, est.series.relative_term_cutoff, est.series.max_terms
    )
    eps = []
    for name in SETTINGS:
        if name == "signal":
            eps.append(0.0)
        elif est.epsilon_override is not None:
            eps.append(est.epsilon_override)
        else:
            eps.append(compute_epsilon(sources["signal"], sources[name], est.series))
    return probs, tails, tuple(eps)


def _band_program(num_vars: int) -> LinearProgram:
    return LinearProgram(
        num_vars=num_vars,
        lower_bounds=np.zeros(num_vars),
        upper_bounds=np.ones(num_vars),
    )


def _add_band(lp: LinearProgram, coeffs: Sequence[float], value: float, lo_slack: float, hi_slack: float) -> None:
    """Add value - lo_slack <= coeffs . x <= value + hi_slack, rescaled to O(1)."""
    scale = 1.0 / value if value > 1e-250 else 1.0
    cushion = FEASIBILITY_CUSHION * max(1.0, abs(value) * scale)
    row = tuple(c * scale for c in coeffs)
    lp.add_constraint(row, Relation.LE, (value + hi_slack) * scale + cushion)
    lp.add_constraint(row, Relation.GE, (value - lo_slack) * scale - cushion)


def _solve_interval(lp: LinearProgram, index: int) -> Interval | None:
    """Min and max of one coordinate over the program, or None if infeasible."""
    objective = np.zeros(lp.num_vars)
    objective[index] = 1.0
    lp.objective = objective
    lp.sense = Sense.MIN
    lo = solve(lp)
    if lo.status is LpStatus.INFEASIBLE:
        return None
    lp.sense = Sense.MAX
    hi = solve(lp)
    if lo.status is not LpStatus.OPTIMAL or hi.status is not LpStatus.OPTIMAL:
        raise RuntimeError(f"unexpected LP status: {lo.status}, {hi.status}")
    return Interval(max(0.0, lo.objective_value), min(1.0, hi.objective_value))


def _banded_intervals(
    build_bands,
    num_vars: int,
    indices: Sequence[int],
    epsilons: Sequence[float],
    est: EstimationConfig,
    label: str,
    diagnostics: list[str] | None,
) -> dict[int, Interval]:
    """Solve min/max per index, widening epsilon on infeasibility per the fallback ladder."""
    if max(epsilons) >= 1.0:
        note = f"{label}: deviation bound >= 1, intervals are vacuous"
        logger.warning(note)
        if diagnostics is not None:
            diagnostics.append(note)
        return {i: Interval(*VACUOUS) for i in indices}
    for level in range(est.max_epsilon_doublings + 1):
        factor = 2.0**level
        lp = _band_program(num_vars)
        build_bands(lp, [e * factor for e in epsilons])
        results: dict[int, Interval] = {}
        for i in indices:
            interval = _solve_interval(lp, i)
            if interval is None:
                break
            results[i] = interval
        else:
            if level > 0:
                note = f"{label}: feasible only after widening epsilon x{int(factor)}"
                logger.warning(note)
                if diagnostics is not None:
                    diagnostics.append(note)
            return results
        if max(epsilons) == 0.0:
            break  # doubling zero cannot help
    note = f"{label}: infeasible at all widening levels, reporting vacuous intervals"
    logger.warning(note)
    if diagnostics is not None:
        diagnostics.append(note)
    return {i: Interval(*VACUOUS) for i in indices}


def estimate_stage1(
    stats: ObservedStats,
    sources: Mapping[str, SourceConfig],
    est: EstimationConfig,
    target: Target,
    indices: Sequence[int] | None = None,
    diagnostics: list[str] | None = None,
) -> dict[tuple[int, str], Interval]:
    """Intervals for Y_i^{mu,beta} (or W_i^{mu,beta}) for each Bob setting beta.

    For fixed beta the unknowns are the signal-setting class quantities; the
    row for Alice setting alpha constrains their P^alpha-weighted sum to the
    observed value within [-(eps+tail), +eps].
    """
    stats.validate()
    probs, tails, epsilons = _setting_data(sources, est)
    num_vars = len(probs[0])
    if indices is None:
        indices = range(min(est.truncation_k, num_vars))
    out: dict[tuple[int, str], Interval] = {}
    for beta in SETTINGS:
        values = [
            stats.gain(alpha, beta) if target is Target.GAIN else stats.error_product(alpha, beta)
            for alpha in SETTINGS
        ]

        def build(lp: LinearProgram, eps_row, values=values) -> None:
            for row, tail, eps, value in zip(probs, tails, eps_row, values):
                _add_band(lp, row, value, eps + tail, eps)

        label = f"stage1[{target.value}, bob={beta}]"
        solved = _banded_intervals(build, num_vars, list(indices), epsilons, est, label, diagnostics)
        for i, interval in solved.items():
            out[(i, beta)] = interval
    return out


def estimate_stage2(
    stage1: Mapping[tuple[int, str], Interval],
    sources: Mapping[str, SourceConfig],
    est: EstimationConfig,
    target: Target,
    alice_indices: Sequence[int] | None = None,
    bob_indices: Sequence[int] | None = None,
    diagnostics: list[str] | None = None,
) -> dict[tuple[int, int], Interval]:
    """Intervals for Y_{i,j}^{mu,mu} (or the error products) from stage-1 intervals.

    Stage-1 endpoints enter as two-sided inequality constraints; the row for
    Bob setting beta is additionally widened by its deviation bound and tail.
    """
    probs, tails, epsilons = _setting_data(sources, est)
    num_vars = len(probs[0])
    if alice_indices is None:
        alice_indices = sorted({i for i, _ in stage1.keys()})
    if bob_indices is None:
        bob_indices = range(min(est.truncation_k, num_vars))
    out: dict[tuple[int, int], Interval] = {}
    for i in alice_indices:
        bands = []
        for beta, row, tail, eps in zip(SETTINGS, probs, tails, epsilons):
            if (i, beta) not in stage1:
                raise ValueError(f"stage-1 interval missing for index {i}, setting {beta}")
            bands.append((row, tail, eps, stage1[(i, beta)]))

        def build(lp: LinearProgram, eps_row, bands=bands) -> None:
            for (row, tail, _, interval), eps in zip(bands, eps_row):
                lo, hi = interval
                scale = 1.0 / hi if hi > 1e-250 else 1.0
                cushion = FEASIBILITY_CUSHION * max(1.0, hi * scale)
                coeffs = tuple(c * scale for c in row)
                lp.add_constraint(coeffs, Relation.LE, (hi + eps) * scale + cushion)
                lp.add_constraint(coeffs, Relation.GE, (lo - eps - tail) * scale - cushion)

        label = f"stage2[{target.value}, alice_class={i}]"
        solved = _banded_intervals(build, num_vars, list(bob_indices), epsilons, est, label, diagnostics)
        for j, interval in solved.items():
            out[(i, j)] = interval
    return out


def error_rate_upper(bounds: YieldBounds) -> float:
    """Upper bound on the single-photon-pair bit error rate, 1 when vacuous."""
    y_lo = bounds.y11.lo
    v_hi = bounds.v11.hi
    if y_lo <= 0.0:
        if v_hi > 0.0:
            logger.warning("vacuous bit-error bound: single-photon yield lower bound is zero")
        return 0.0 if v_hi == 0.0 else 1.0
    return min(1.0, v_hi / y_lo)


def estimate_yield_bounds(
    stats: ObservedStats,
    sources: Mapping[str, SourceConfig],
    est: EstimationConfig,
    full: bool = True,
) -> YieldBounds:
    """Run both stages for both targets and assemble the derived bounds.

    With full=False only the (1, 1) entry is estimated, which is all the
    key-rate formula consumes; the values are identical to the full run.
    """
    diagnostics: list[str] = []
    indices = None if full else (1,)
    pair_indices = None if full else (1,)
    s1_gain = estimate_stage1(stats, sources, est, Target.GAIN, indices, diagnostics)
    s1_err = estimate_stage1(stats, sources, est, Target.ERROR_PRODUCT, indices, diagnostics)
    y_pairs = estimate_stage2(
        s1_gain, sources, est, Target.GAIN, pair_indices, pair_indices, diagnostics
    )
    v_pairs = estimate_stage2(
        s1_err, sources, est, Target.ERROR_PRODUCT, pair_indices, pair_indices, diagnostics
    )
    bounds = YieldBounds(
        yield_stage1=s1_gain,
        yield_pairs=y_pairs,
        error_product_stage1=s1_err,
        error_product_pairs=v_pairs,
        e11_bit_upper=1.0,
        diagnostics=diagnostics,
    )
    bounds.e11_bit_upper = error_rate_upper(bounds)
    return bounds
