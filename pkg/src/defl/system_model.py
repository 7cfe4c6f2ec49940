"""Compute and uplink latency of edge devices.

Per-device times follow a GPU clock model and a Shannon-rate uplink. Fleet
times are straggler-bound: a synchronous round waits for the slowest device,
so fleet compute and communication times are maxima over devices. Downlink
time is taken as zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Sequence

from .errors import EmptyFleetError, InvalidBatchError, InvalidClockModelError, InvalidLinkError


@dataclass(frozen=True)
class GpuClockModel:
    """Static/core/memory decomposition of GPU execution speed.

    Attributes:
        a_s: Static term (seconds per cycle).
        a_c: Core-frequency coefficient.
        f_c: Core frequency (Hz).
        a_M: Memory-frequency coefficient.
        f_M: Memory frequency (Hz).
    """

    a_s: float
    a_c: float
    f_c: float
    a_M: float
    f_M: float

    def __post_init__(self) -> None:
        if not (self.f_c > 0 and self.f_M > 0):
            raise InvalidClockModelError("core and memory frequencies must be positive")
        if min(self.a_s, self.a_c, self.a_M) < 0:
            raise InvalidClockModelError("clock coefficients must be non-negative")


def effective_frequency(clock: GpuClockModel) -> float:
    """Effective device frequency ``1 / (a_s + a_c/f_c + a_M/f_M)`` in Hz."""
    denom = clock.a_s + clock.a_c / clock.f_c + clock.a_M / clock.f_M
    if not math.isfinite(denom) or denom <= 0:
        raise InvalidClockModelError(f"clock model denominator must be positive and finite, got {denom!r}")
    freq = 1.0 / denom
    if not math.isfinite(freq):
        raise InvalidClockModelError("effective frequency overflows")
    return freq


@dataclass(frozen=True)
class DeviceProfile:
    """One edge device.

    Exactly one of ``frequency`` (Hz) or ``clock`` must be given.
    ``cycles_per_sample`` is the work for one sample in one local step;
    use :func:`cycles_per_sample` to build it from a cycles-per-bit figure.
    """

    id: Hashable
    cycles_per_sample: float
    samples: int
    tx_power: float
    channel_gain: float
    frequency: float | None = None
    clock: GpuClockModel | None = None

    def __post_init__(self) -> None:
        if (self.frequency is None) == (self.clock is None):
            raise ValueError(f"device {self.id!r}: give exactly one of frequency or clock")
        if self.frequency is not None and not (self.frequency > 0 and math.isfinite(self.frequency)):
            raise ValueError(f"device {self.id!r}: frequency must be positive")
        if not self.cycles_per_sample > 0:
            raise ValueError(f"device {self.id!r}: cycles per sample must be positive")
        if self.samples < 1:
            raise ValueError(f"device {self.id!r}: dataset size must be at least 1")
        if not self.tx_power > 0:
            raise ValueError(f"device {self.id!r}: transmit power must be positive")
        if not self.channel_gain > 0:
            raise ValueError(f"device {self.id!r}: channel gain must be positive")

    @property
    def effective_frequency(self) -> float:
        if self.clock is not None:
            return effective_frequency(self.clock)
        return float(self.frequency)

    @property
    def seconds_per_sample(self) -> float:
        """Ratio ``G_m / f_m``: compute seconds per sample per local step."""
        return self.cycles_per_sample / self.effective_frequency


@dataclass(frozen=True)
class WirelessSystem:
    """Shared uplink: bandwidth (Hz), linear noise power (W), update size (bits)."""

    bandwidth: float
    noise_power: float
    update_bits: float

    def __post_init__(self) -> None:
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not self.noise_power > 0:
            raise ValueError("noise power must be positive")
        if not self.update_bits > 0:
            raise ValueError("update size must be positive")


@dataclass(frozen=True)
class Fleet:
    devices: tuple[DeviceProfile, ...]
    system: WirelessSystem

    def __post_init__(self) -> None:
        object.__setattr__(self, "devices", tuple(self.devices))
        if not self.devices:
            raise EmptyFleetError("fleet must contain at least one device")
        ids = [d.id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise ValueError("device ids must be unique")

    def __len__(self) -> int:
        return len(self.devices)

    @property
    def ratios(self) -> list[float]:
        return [d.seconds_per_sample for d in self.devices]


def noise_power_from_density(dbm_per_hz: float, bandwidth: float) -> float:
    """Linear noise power in watts for a density in dBm/Hz over ``bandwidth`` Hz.

    >>> round(noise_power_from_density(-174.0, 1.0) * 1e21, 4)
    3.9811
    """
    return 10.0 ** ((dbm_per_hz - 30.0) / 10.0) * bandwidth


def cycles_per_sample(cycles_per_bit: float, bits_per_sample: float) -> float:
    return cycles_per_bit * bits_per_sample


def _check_batch(b: int) -> None:
    if isinstance(b, bool) or int(b) != b or b < 1:
        raise InvalidBatchError(f"batch size must be an integer >= 1, got {b!r}")


def local_step_time(device: DeviceProfile, b: int) -> float:
    """Seconds for one mini-batch SGD iteration of ``b`` samples on ``device``."""
    _check_batch(b)
    return device.cycles_per_sample * b / device.effective_frequency


def _nonempty(devices: Sequence[DeviceProfile]) -> None:
    if len(devices) == 0:
        raise EmptyFleetError("fleet must contain at least one device")


def fleet_compute_time(fleet: Fleet | Sequence[DeviceProfile], b: int) -> float:
    devices = fleet.devices if isinstance(fleet, Fleet) else fleet
    _nonempty(devices)
    return max(local_step_time(d, b) for d in devices)


def uplink_time(device: DeviceProfile, system: WirelessSystem) -> float:
    """Seconds to upload one model update at the Shannon rate of the device's link."""
    snr = device.tx_power * device.channel_gain / system.noise_power
    if not snr > 0 or not math.isfinite(snr):
        raise InvalidLinkError(f"device {device.id!r}: SNR must be positive and finite, got {snr!r}")
    rate = system.bandwidth * math.log2(1.0 + snr)
    if not rate > 0:
        raise InvalidLinkError(f"device {device.id!r}: link rate underflows to zero")
    return system.update_bits / rate


def fleet_comm_time(fleet: Fleet) -> float:
    _nonempty(fleet.devices)
    return max(uplink_time(d, fleet.system) for d in fleet.devices)


def bottleneck_device(fleet: Fleet | Sequence[DeviceProfile]) -> tuple[int, Hashable, float]:
    """Return ``(index, id, G_m/f_m)`` of the slowest device per sample.

    Ties go to the lowest index.
    """
    devices = fleet.devices if isinstance(fleet, Fleet) else fleet
    _nonempty(devices)
    best = 0
    best_ratio = devices[0].seconds_per_sample
    for i, d in enumerate(devices[1:], start=1):
        r = d.seconds_per_sample
        if r > best_ratio:
            best, best_ratio = i, r
    return best, devices[best].id, best_ratio
