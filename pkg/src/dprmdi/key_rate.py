"""Secure key rate assembly and intensity optimization.

The rate per pulse pair is

    R >= -Q_rect f H(E_rect) + P_1^2 Y_11^lo (1 - H(e_11^p,hi)),

where the phase-error bound converts the estimated bit-error bound through
the basis-dependence bias Delta = (1 - F_11) / (2 Y_11).  Contributions of
photon-class pairs other than (1, 1) carry no certified lower bound and are
conservatively dropped (bounded below by zero).  Intensities are chosen by
exhaustive search over a geometric grid; the landscape has clamp-induced
kinks, so no gradient method is used.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .channel_model import ChannelParams, IntensitySettings, simulate_stats
from .decoy_estimator import (
    EstimationConfig,
    Target,
    estimate_stage1,
    estimate_stage2,
    sources_for,
)
from .fock_coherent import SourceConfig, class_probability, fidelity_bound_xy

__all__ = [
    "KeyRateInputs",
    "KeyRateReport",
    "IntensityGrid",
    "OptimizationResult",
    "binary_entropy",
    "delta_bias",
    "phase_error_upper",
    "key_rate",
    "evaluate_point",
    "optimize_intensities",
    "any_positive_rate",
]

logger = logging.getLogger(__name__)


def binary_entropy(p: float) -> float:
    """Binary Shannon entropy in bits, with H(0) = H(1) = 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"entropy argument must lie in [0, 1], got {p!r}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def delta_bias(fidelity: float, y11: float) -> float:
    """Basis-dependence bias Delta = (1 - F) / (2 Y), clamped to the vacuous 1/2."""
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError(f"fidelity must lie in [0, 1], got {fidelity!r}")
    if y11 < 0.0:
        raise ValueError(f"yield must be nonnegative, got {y11!r}")
    if y11 == 0.0:
        if fidelity < 1.0:
            logger.warning("delta bias is vacuous: zero yield with imperfect fidelity")
        return 0.5 if fidelity < 1.0 else 0.0
    return min(0.5, (1.0 - fidelity) / (2.0 * y11))


def phase_error_upper(e_bit: float, delta: float) -> float:
    """Phase-error bound e_b + 4 D(1-D)(1-2 e_b) + 4 (1-2D) sqrt(D(1-D) e_b (1-e_b))."""
    if not 0.0 <= e_bit <= 0.5:
        raise ValueError(f"bit error must lie in [0, 0.5], got {e_bit!r}")
    if not 0.0 <= delta <= 0.5:
        raise ValueError(f"delta must lie in [0, 0.5], got {delta!r}")
    cross = math.sqrt(delta * (1.0 - delta) * e_bit * (1.0 - e_bit))
    value = e_bit + 4.0 * delta * (1.0 - delta) * (1.0 - 2.0 * e_bit) + 4.0 * (1.0 - 2.0 * delta) * cross
    return min(0.5, value)


@dataclass(frozen=True)
class KeyRateInputs:
    """Everything the modified key-rate formula consumes."""

    q_rect: float
    e_rect: float
    p_one: float
    y11_lower: float
    e11_bit_upper: float
    f11: float
    ec_efficiency: float
    signal_source: SourceConfig


@dataclass(frozen=True)
class KeyRateReport:
    """Key rate with its error-correction and privacy-amplification parts."""

    rate: float
    raw_rate: float
    ec_term: float
    pa_term: float
    delta: float
    phase_error: float


def key_rate(inputs: KeyRateInputs) -> KeyRateReport:
    """Evaluate the key-rate formula; negative raw rates are reported as zero."""
    ec_term = inputs.q_rect * inputs.ec_efficiency * binary_entropy(inputs.e_rect)
    delta = delta_bias(inputs.f11, inputs.y11_lower)
    e_bit = min(0.5, inputs.e11_bit_upper)
    phase_error = phase_error_upper(e_bit, delta)
    pa_term = inputs.p_one**2 * inputs.y11_lower * (1.0 - binary_entropy(phase_error))
    raw = pa_term - ec_term
    return KeyRateReport(
        rate=max(0.0, raw),
        raw_rate=raw,
        ec_term=ec_term,
        pa_term=pa_term,
        delta=delta,
        phase_error=phase_error,
    )


def _error_upper(y_lo: float, v_hi: float) -> float:
    if y_lo <= 0.0:
        return 0.0 if v_hi == 0.0 else 1.0
    return min(1.0, v_hi / y_lo)


def _pipeline(
    params: ChannelParams,
    n_phases: float,
    mu: float,
    nu: float,
    est: EstimationConfig,
    short_circuit: bool,
) -> tuple[KeyRateInputs | None, KeyRateReport | None, float]:
    """Channel stats -> estimation -> key rate at one intensity pair.

    With short_circuit=True the error-product estimation is skipped whenever
    even a perfect phase-error bound could not beat the error-correction
    cost; such points report rate 0 without inputs.
    """
    settings = IntensitySettings(mu, nu)
    stats = simulate_stats(params, settings, settings)
    sources = sources_for(n_phases, mu, nu)
    signal_cfg = sources["signal"]

    s1_gain = estimate_stage1(stats, sources, est, Target.GAIN, (1,))
    y11 = estimate_stage2(s1_gain, sources, est, Target.GAIN, (1,), (1,))[(1, 1)]

    q_rect = stats.gain("signal", "signal")
    e_rect = stats.error_rate("signal", "signal")
    ec_term = q_rect * params.ec_efficiency * binary_entropy(e_rect)
    p_one = class_probability(signal_cfg, 1, est.series)
    if short_circuit and p_one**2 * y11.lo <= ec_term:
        return None, None, 0.0

    s1_err = estimate_stage1(stats, sources, est, Target.ERROR_PRODUCT, (1,))
    v11 = estimate_stage2(s1_err, sources, est, Target.ERROR_PRODUCT, (1,), (1,))[(1, 1)]

    inputs = KeyRateInputs(
        q_rect=q_rect,
        e_rect=e_rect,
        p_one=p_one,
        y11_lower=y11.lo,
        e11_bit_upper=_error_upper(y11.lo, v11.hi),
        f11=fidelity_bound_xy(signal_cfg, 1, est.series),
        ec_efficiency=params.ec_efficiency,
        signal_source=signal_cfg,
    )
    report = key_rate(inputs)
    return inputs, report, report.rate


def evaluate_point(
    params: ChannelParams,
    n_phases: float,
    mu: float,
    nu: float,
    est: EstimationConfig | None = None,
) -> tuple[KeyRateInputs, KeyRateReport]:
    """Full pipeline evaluation at one intensity pair."""
    inputs, report, _ = _pipeline(params, n_phases, mu, nu, est or EstimationConfig(), False)
    assert inputs is not None and report is not None
    return inputs, report


def rate_with_bit_error(inputs: KeyRateInputs, e11_bit: float) -> KeyRateReport:
    """Re-evaluate the rate with the estimated bit-error bound replaced (noise hook)."""
    return key_rate(replace(inputs, e11_bit_upper=e11_bit))


@dataclass(frozen=True)
class IntensityGrid:
    """Geometric search grid: for each mu, nu runs geometrically up to (not including) mu."""

    mu_min: float = 0.01
    mu_max: float = 1.0
    nu_min: float = 0.001
    points: int = 40

    def __post_init__(self) -> None:
        if not 0.0 < self.nu_min < self.mu_min <= self.mu_max:
            raise ValueError("need 0 < nu_min < mu_min <= mu_max")
        if self.points < 1:
            raise ValueError("points must be positive")

    def pairs(self) -> list[tuple[float, float]]:
        mus = np.geomspace(self.mu_min, self.mu_max, self.points)
        out: list[tuple[float, float]] = []
        for mu in mus:
            nus = np.geomspace(self.nu_min, mu, self.points + 1)[:-1]
            out.extend((float(mu), float(nu)) for nu in nus)
        return out


@dataclass(frozen=True)
class OptimizationResult:
    mu: float
    nu: float
    inputs: KeyRateInputs
    report: KeyRateReport
    all_zero: bool


def _resolve_threads(threads: int | None) -> int:
    if threads is None or threads == 0:
        return os.cpu_count() or 1
    if threads < 0:
        raise ValueError("threads must be nonnegative")
    return threads


def _chunk(seq: list, size: int) -> list[list]:
    return [seq[i : i + size] for i in range(0, len(seq), size)]


def _scan_chunk(args) -> list[float]:
    params, n_phases, est, pairs = args
    return [_pipeline(params, n_phases, mu, nu, est, True)[2] for mu, nu in pairs]


def _any_positive_chunk(args) -> bool:
    params, n_phases, est, pairs = args
    return any(_pipeline(params, n_phases, mu, nu, est, True)[2] > 0.0 for mu, nu in pairs)


def _fork_pool(threads: int):
    import multiprocessing

    return multiprocessing.get_context("fork").Pool(threads)


def optimize_intensities(
    params: ChannelParams,
    n_phases: float,
    grid: IntensityGrid | None = None,
    est: EstimationConfig | None = None,
    threads: int | None = 1,
) -> OptimizationResult:
    """Exhaustive grid search for the rate-maximizing (mu, nu).

    Ties, including the all-zero grid, resolve to the lexicographically
    smallest pair; the result is independent of the thread count.
    """
    grid = grid or IntensityGrid()
    est = est or EstimationConfig()
    pairs = grid.pairs()
    if not pairs:
        raise ValueError("empty intensity grid")
    threads = _resolve_threads(threads)

    if threads > 1 and len(pairs) > 64:
        chunks = _chunk(pairs, max(16, len(pairs) // (threads * 8)))
        with _fork_pool(threads) as pool:
            rate_chunks = pool.map(_scan_chunk, [(params, n_phases, est, c) for c in chunks])
        rates = [r for chunk in rate_chunks for r in chunk]
    else:
        rates = _scan_chunk((params, n_phases, est, pairs))

    best_idx = 0
    for idx, rate in enumerate(rates):
        if rate > rates[best_idx]:
            best_idx = idx
    all_zero = rates[best_idx] <= 0.0
    if all_zero:
        best_idx = 0  # lexicographically smallest pair
        logger.info("no intensity pair achieves a positive rate; reporting the first grid point")
    mu, nu = pairs[best_idx]
    inputs, report = evaluate_point(params, n_phases, mu, nu, est)
    return OptimizationResult(mu=mu, nu=nu, inputs=inputs, report=report, all_zero=all_zero)


def any_positive_rate(
    params: ChannelParams,
    n_phases: float,
    grid: IntensityGrid | None = None,
    est: EstimationConfig | None = None,
    threads: int | None = 1,
) -> bool:
    """Whether any grid point yields a positive rate; stops at the first hit."""
    grid = grid or IntensityGrid()
    est = est or EstimationConfig()
    pairs = grid.pairs()
    threads = _resolve_threads(threads)

    if threads > 1 and len(pairs) > 64:
        chunks = _chunk(pairs, max(16, len(pairs) // (threads * 8)))
        with _fork_pool(threads) as pool:
            for hit in pool.imap(_any_positive_chunk, [(params, n_phases, est, c) for c in chunks]):
                if hit:
                    pool.terminate()
                    return True
        return False
    for mu, nu in pairs:
        if _pipeline(params, n_phases, mu, nu, est, True)[2] > 0.0:
            return True
    return False
