"""Symmetric-link channel simulation producing observed gains and error rates.

The model mirrors what a real MDI setup would measure for every pair of
intensity settings: for Alice at intensity m and Bob at intensity n over a
link of transmittance eta,

    Q  = (Y0 + 1 - e^(-eta m)) (Y0 + 1 - e^(-eta n))
    EQ = Y0 (Y0 + 2 - e^(-eta m) - e^(-eta n)) / 2 + e_d (1 - e^(-eta m)) (1 - e^(-eta n))

with dark-count rate Y0 and misalignment e_d.  Both parties share one set of
channel parameters; the same statistics are used for the rectilinear and the
diagonal basis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

__all__ = [
    "SETTINGS",
    "ChannelParams",
    "IntensitySettings",
    "PairStats",
    "ObservedStats",
    "transmittance",
    "simulate_stats",
]

#: Intensity-setting names, in canonical order.
SETTINGS = ("signal", "decoy", "vacuum")

STATS_CSV_COLUMNS = ("alice_setting", "bob_setting", "gain", "error_rate")


@dataclass(frozen=True)
class ChannelParams:
    """Link and post-processing parameters (defaults are the standard fiber set)."""

    distance_km: float = 0.0
    fiber_loss_db_per_km: float = 0.2
    other_loss: float = 0.045
    misalignment: float = 0.033
    dark_count: float = 1.7e-6
    ec_efficiency: float = 1.16

    def __post_init__(self) -> None:
        if self.distance_km < 0:
            raise ValueError("distance_km must be nonnegative")
        if self.fiber_loss_db_per_km < 0:
            raise ValueError("fiber_loss_db_per_km must be nonnegative")
        if not 0 < self.other_loss <= 1:
            raise ValueError("other_loss must lie in (0, 1]")
        if not 0 <= self.misalignment <= 1:
            raise ValueError("misalignment must lie in [0, 1]")
        if self.dark_count < 0:
            raise ValueError("dark_count must be nonnegative")
        if self.ec_efficiency < 1:
            raise ValueError("ec_efficiency must be at least 1")


@dataclass(frozen=True)
class IntensitySettings:
    """Signal and decoy mean photon numbers; the third setting is vacuum."""

    signal: float
    decoy: float

    def __post_init__(self) -> None:
        if not self.signal > self.decoy >= 0:
            raise ValueError(f"need signal > decoy >= 0, got {self.signal!r}, {self.decoy!r}")

    @property
    def vacuum(self) -> float:
        return 0.0

    def intensity(self, setting: str) -> float:
        if setting not in SETTINGS:
            raise ValueError(f"unknown setting {setting!r}")
        return {"signal": self.signal, "decoy": self.decoy, "vacuum": 0.0}[setting]


class PairStats(NamedTuple):
    gain: float
    error_rate: float
    flagged: bool = False


@dataclass
class ObservedStats:
    """Gain and error rate for each of the nine (alice, bob) setting pairs."""

    entries: dict[tuple[str, str], PairStats] = field(default_factory=dict)

    def validate(self) -> None:
        missing = [(a, b) for a in SETTINGS for b in SETTINGS if (a, b) not in self.entries]
        if missing:
            raise ValueError(f"missing setting pairs: {missing}")
        for key, stat in self.entries.items():
            if key[0] not in SETTINGS or key[1] not in SETTINGS:
                raise ValueError(f"unknown setting pair {key!r}")
            if not 0.0 <= stat.gain <= 1.0:
                raise ValueError(f"gain out of range for {key}: {stat.gain!r}")
            if not 0.0 <= stat.error_rate <= 0.5:
                raise ValueError(f"error rate out of range for {key}: {stat.error_rate!r}")

    def gain(self, alice: str, bob: str) -> float:
        return self.entries[(alice, bob)].gain

    def error_rate(self, alice: str, bob: str) -> float:
        return self.entries[(alice, bob)].error_rate

    def error_product(self, alice: str, bob: str) -> float:
        stat = self.entries[(alice, bob)]
        return stat.gain * stat.error_rate

    def rows(self) -> Iterable[tuple[str, str, float, float]]:
        for a in SETTINGS:
            for b in SETTINGS:
                stat = self.entries[(a, b)]
                yield a, b, stat.gain, stat.error_rate

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(STATS_CSV_COLUMNS)
            for a, b, gain, error in self.rows():
                writer.writerow([a, b, repr(gain), repr(error)])

    @classmethod
    def from_csv(cls, path) -> "ObservedStats":
        """Load measured statistics; errors name the offending CSV line."""
        entries: dict[tuple[str, str], PairStats] = {}
        with open(path, newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != list(STATS_CSV_COLUMNS):
                raise ValueError(
                    f"{path}: expected header {','.join(STATS_CSV_COLUMNS)}, got {header!r}"
                )
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 4:
                    raise ValueError(f"{path}: line {lineno}: expected 4 columns, got {len(row)}")
                alice, bob = row[0].strip(), row[1].strip()
                if alice not in SETTINGS or bob not in SETTINGS:
                    raise ValueError(f"{path}: line {lineno}: unknown setting pair ({alice}, {bob})")
                try:
                    gain = float(row[2])
                    error = float(row[3])
                except ValueError as exc:
                    raise ValueError(f"{path}: line {lineno}: {exc}") from None
                entries[(alice, bob)] = PairStats(gain, error)
        stats = cls(entries)
        stats.validate()
        return stats


def transmittance(params: ChannelParams) -> float:
    """Total transmittance eta = 10^(-alpha1 L / 10) * eta1."""
    return 10.0 ** (-params.fiber_loss_db_per_km * params.distance_km / 10.0) * params.other_loss


def _pair_stats(eta: float, m: float, n: float, y0: float, e_d: float) -> PairStats:
    am = 1.0 - math.exp(-eta * m)
    an = 1.0 - math.exp(-eta * n)
    gain = (y0 + am) * (y0 + an)
    flagged = False
    if gain > 1.0:  # possible only when Y0 > 0 and eta*m is huge
        gain = 1.0
        flagged = True
    error_gain = y0 * (y0 + am + an) / 2.0 + e_d * am * an
    if gain <= 0.0:
        # Only reachable with Y0 = 0 and a vacuum setting: no clicks at all.
        return PairStats(0.0, 0.5, flagged=True)
    error = error_gain / gain
    if error > 0.5:
        # Dark counts land on random outcomes; past 0.5 the entry carries no
        # extra information, so clamp and flag.
        return PairStats(gain, 0.5, flagged=True)
    return PairStats(gain, error, flagged=flagged)


def simulate_stats(
    params: ChannelParams, alice: IntensitySettings, bob: IntensitySettings
) -> ObservedStats:
    """Observed statistics for all nine setting pairs under the simulation model."""
    eta = transmittance(params)
    y0 = params.dark_count
    e_d = params.misalignment
    entries = {
        (a, b): _pair_stats(eta, alice.intensity(a), bob.intensity(b), y0, e_d)
        for a in SETTINGS
        for b in SETTINGS
    }
    stats = ObservedStats(entries)
    stats.validate()
    return stats
