"""Current/voltage log analysis: average draw, power, battery life, FLOPS per watt.

Logs are CSV rows of ``timestamp_s,current_a,voltage_v`` with an optional
header line. Averages are time-weighted with a zero-order hold: each sample
holds until the next timestamp, and the final sample is weighted by the mean
sampling interval. A uniformly sampled log therefore averages to the plain
arithmetic mean.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass
from typing import Sequence, TextIO

from .errors import FormatError, InputError

LOG_HEADER = ("timestamp_s", "current_a", "voltage_v")


@dataclass(frozen=True)
class PowerSample:
    timestamp_s: float
    current_a: float
    voltage_v: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.timestamp_s, self.current_a, self.voltage_v)):
            raise FormatError("power sample fields must be finite")
        if self.current_a < 0:
            raise FormatError(f"current must be >= 0 A, got {self.current_a}")
        if self.voltage_v <= 0:
            raise FormatError(f"voltage must be > 0 V, got {self.voltage_v}")


@dataclass(frozen=True)
class BatterySpec:
    voltage_v: float
    capacity_ah: float

    def __post_init__(self):
        if not (self.voltage_v > 0 and self.capacity_ah > 0):
            raise InputError("battery voltage and capacity must both be positive")

    @classmethod
    def parse(cls, text: str) -> BatterySpec:
        """``"14.8:3.85"`` -> 14.8 V, 3.85 Ah."""
        try:
            v, c = text.split(":")
            return cls(float(v), float(c))
        except ValueError:
            raise InputError(f"battery must be VOLTS:AMP_HOURS, got {text!r}") from None

    @property
    def energy_wh(self) -> float:
        return self.voltage_v * self.capacity_ah


def _weights(samples: Sequence[PowerSample]) -> list[float]:
    t = [s.timestamp_s for s in samples]
    n = len(t)
    if n == 1 or t[-1] == t[0]:
        return [1.0] * n
    gaps = [b - a for a, b in zip(t, t[1:])]
    return gaps + [(t[-1] - t[0]) / (n - 1)]


def _weighted_mean(values: Sequence[float], weights: Sequence[float]) -> float:
    # Offsetting by the first value makes a constant series come back exact.
    ref = values[0]
    return ref + math.fsum(w * (v - ref) for v, w in zip(values, weights)) / math.fsum(weights)


def average_current(log: Sequence[PowerSample]) -> float:
    if not log:
        raise InputError("power log is empty")
    return _weighted_mean([s.current_a for s in log], _weights(log))


def average_power(log: Sequence[PowerSample]) -> float:
    """Time-weighted mean of the instantaneous V*I product."""
    if not log:
        raise InputError("power log is empty")
    return _weighted_mean([s.voltage_v * s.current_a for s in log], _weights(log))


def current_sd(log: Sequence[PowerSample]) -> float:
    """Sample standard deviation of the current readings (0 for one sample)."""
    if not log:
        raise InputError("power log is empty")
    if len(log) == 1:
        return 0.0
    return statistics.stdev(s.current_a for s in log)


def power(voltage_v: float, current_a: float) -> float:
    if not voltage_v > 0:
        raise InputError(f"voltage must be positive, got {voltage_v}")
    return voltage_v * current_a


def battery_life_minutes(battery: BatterySpec, avg_power_w: float) -> float:
    """Runtime at constant power draw: stored energy / power, in minutes.

    Assumes the load draws more current as the pack voltage sags so that
    power stays constant; no discharge curve is modelled.
    """
    if not avg_power_w > 0:
        raise InputError(f"average power must be positive, got {avg_power_w}")
    return battery.voltage_v * battery.capacity_ah / avg_power_w * 60


def flops_per_watt(flops: float, power_w: float) -> float:
    if not power_w > 0:
        raise InputError(f"power must be positive, got {power_w}")
    return flops / power_w


def _parse_rows(rows, source: str) -> list[PowerSample]:
    samples: list[PowerSample] = []
    for lineno, row in rows:
        if not row or all(not f.strip() for f in row):
            continue
        if lineno == 1 and tuple(f.strip() for f in row) == LOG_HEADER:
            continue
        if len(row) != 3:
            raise FormatError(f"{source}: row {lineno}: expected 3 columns, got {len(row)}")
        try:
            t, i, v = (float(f) for f in row)
        except ValueError:
            raise FormatError(f"{source}: row {lineno}: non-numeric field in {row!r}") from None
        try:
            sample = PowerSample(t, i, v)
        except FormatError as exc:
            raise FormatError(f"{source}: row {lineno}: {exc}") from None
        if samples and sample.timestamp_s < samples[-1].timestamp_s:
            raise FormatError(f"{source}: row {lineno}: timestamp decreases")
        samples.append(sample)
    if not samples:
        raise InputError(f"{source}: power log has no samples")
    return samples


def read_power_log(fh: TextIO, source: str = "<log>") -> list[PowerSample]:
    return _parse_rows(((i + 1, row) for i, row in enumerate(csv.reader(fh))), source)


def parse_power_log(path) -> list[PowerSample]:
    with open(path, newline="") as fh:
        return read_power_log(fh, str(path))


def write_power_log(samples: Sequence[PowerSample], fh: TextIO) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(LOG_HEADER)
    for s in samples:
        writer.writerow((repr(s.timestamp_s), repr(s.current_a), repr(s.voltage_v)))


def power_report(log: Sequence[PowerSample], battery: BatterySpec | None = None,
                 supply_voltage: float | None = None, flops: float | None = None,
                 efficiency_power_w: float | None = None) -> dict:
    """Summary figures for one log.

    With ``supply_voltage`` the power is supply voltage times average
    current; otherwise the logged voltages are used sample by sample.
    Efficiency is computed against ``efficiency_power_w`` when given, else
    against the average power, and the report names which one it used.
    """
    avg_i = average_current(log)
    if supply_voltage is not None:
        p = power(supply_voltage, avg_i)
        basis = f"supply voltage {supply_voltage} V x average current"
    else:
        p = average_power(log)
        basis = "time-weighted mean of logged V*I"
    report = {
        "samples": len(log),
        "duration_s": log[-1].timestamp_s - log[0].timestamp_s,
        "average_current_a": avg_i,
        "current_sd_a": current_sd(log),
        "peak_current_a": max(s.current_a for s in log),
        "power_w": p,
        "power_basis": basis,
    }
    if battery is not None:
        report["battery"] = {"voltage_v": battery.voltage_v, "capacity_ah": battery.capacity_ah}
        report["battery_life_min"] = battery_life_minutes(battery, p) if p > 0 else None
    if flops is not None:
        eff_p = efficiency_power_w if efficiency_power_w is not None else p
        report["efficiency"] = {
            "flops": flops,
            "power_w": eff_p,
            "power_source": "explicit" if efficiency_power_w is not None else "average power",
            "gflops_per_w": flops_per_watt(flops, eff_p) / 1e9,
        }
    return report
