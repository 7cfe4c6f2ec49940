import math

import mpmath
import pytest
from hypothesis import given, strategies as st

from defl.errors import EmptyFleetError, InvalidBatchError, InvalidClockModelError, InvalidLinkError
from defl.system_model import (
    DeviceProfile,
    Fleet,
    GpuClockModel,
    WirelessSystem,
    bottleneck_device,
    cycles_per_sample,
    effective_frequency,
    fleet_comm_time,
    fleet_compute_time,
    local_step_time,
    noise_power_from_density,
    uplink_time,
)

mpmath.mp.dps = 50


def device(G=3e7, f=2e9, p=1.0, h=1.0, id="d", clock=None, D=100):
    if clock is not None:
        return DeviceProfile(id, G, D, p, h, clock=clock)
    return DeviceProfile(id, G, D, p, h, frequency=f)


def link(snr, s=1e6, B=2e7):
    """Unit noise power, so the device's p*h is the SNR."""
    return WirelessSystem(bandwidth=B, noise_power=1.0, update_bits=s), device(p=snr, h=1.0)


def test_effective_frequency_core_only():
    assert effective_frequency(GpuClockModel(0, 1, 2e9, 0, 1)) == pytest.approx(2e9, rel=1e-15)


def test_effective_frequency_mixed_terms():
    expected = 1 / (mpmath.mpf("1e-10") + mpmath.mpf("0.5") / mpmath.mpf("5e9") + mpmath.mpf("0.5") / mpmath.mpf("5e9"))
    got = effective_frequency(GpuClockModel(1e-10, 0.5, 5e9, 0.5, 5e9))
    assert got == pytest.approx(float(expected), rel=1e-12)


def test_effective_frequency_zero_denominator():
    with pytest.raises(InvalidClockModelError):
        effective_frequency(GpuClockModel(0, 0, 1e9, 0, 1e9))


def test_local_step_time_examples():
    assert local_step_time(device(G=2e9, f=2e9), 1) == 1.0
    assert local_step_time(device(), 32) == pytest.approx(0.48, rel=1e-12)
    with pytest.raises(InvalidBatchError):
        local_step_time(device(), 0)


def test_clock_and_direct_frequency_paths_agree():
    clock = GpuClockModel(0, 1, 2e9, 0, 1)
    assert local_step_time(device(clock=clock), 32) == pytest.approx(local_step_time(device(f=2e9), 32), rel=1e-15)


def test_fleet_compute_time_is_max():
    sys_ = WirelessSystem(2e7, 1.0, 1e6)
    devs = [device(G=0.48e9 / 32 * 2, id=0), device(G=0.30e9 / 32 * 2, id=1), device(G=0.10e9 / 32 * 2, id=2)]
    fleet = Fleet(devs, sys_)
    assert fleet_compute_time(fleet, 32) == pytest.approx(0.48, rel=1e-12)
    single = Fleet([device(G=2e9)], sys_)
    assert fleet_compute_time(single, 1) == 1.0
    twins = Fleet([device(id=0), device(id=1)], sys_)
    assert fleet_compute_time(twins, 8) == local_step_time(device(), 8)
    with pytest.raises(EmptyFleetError):
        fleet_compute_time([], 1)


def test_uplink_time_examples():
    sys_, dev = link(1.0)
    assert uplink_time(dev, sys_) == 0.05
    sys_, dev = link(1023.0)
    assert uplink_time(dev, sys_) == pytest.approx(5e-3, rel=1e-12)


def test_uplink_time_rejects_dead_link():
    sys_ = WirelessSystem(2e7, 1e300, 1e6)
    with pytest.raises(InvalidLinkError):
        uplink_time(device(p=1e-300, h=1e-300), sys_)


def test_noise_conversion_matches_arbitrary_precision():
    expected = mpmath.power(10, (mpmath.mpf(-174) - 30) / 10) * mpmath.mpf("2e7")
    assert noise_power_from_density(-174.0, 2e7) == pytest.approx(float(expected), rel=1e-12)


def test_cycles_per_sample():
    assert cycles_per_sample(30, 6272) == 188160


def test_fleet_comm_time_is_max():
    sys_ = WirelessSystem(2e7, 1.0, 1e6)
    a, b = device(p=1023.0, id="a"), device(p=2 ** 25 - 1.0, id="b")
    fleet = Fleet([a, b], sys_)
    assert fleet_comm_time(fleet) == uplink_time(a, sys_) == pytest.approx(5e-3, rel=1e-12)
    assert uplink_time(b, sys_) == pytest.approx(2e-3, rel=1e-12)
    assert fleet_comm_time(Fleet([a], sys_)) == uplink_time(a, sys_)


def test_bottleneck_device():
    sys_ = WirelessSystem(1, 1, 1)
    fleet = Fleet([device(G=15e-3 * 2e9, id=0), device(G=20e-3 * 2e9, id=1), device(G=5e-3 * 2e9, id=2)], sys_)
    assert bottleneck_device(fleet)[:2] == (1, 1)
    assert bottleneck_device(Fleet([device(id=i) for i in range(3)], sys_))[0] == 0
    assert bottleneck_device(Fleet([device()], sys_))[0] == 0


def test_fleet_invariants():
    sys_ = WirelessSystem(1, 1, 1)
    with pytest.raises(ValueError):
        Fleet([device(id=1), device(id=1)], sys_)
    with pytest.raises(EmptyFleetError):
        Fleet([], sys_)
    with pytest.raises(ValueError, match="bandwidth must be positive"):
        WirelessSystem(0, 1, 1)


pos = st.floats(1e-3, 1e3)
freq = st.floats(1e6, 1e10)


@given(a_s=st.floats(0, 1e-9), a_c=pos, f_c=freq, a_M=pos, f_M=freq, k=st.floats(1.0, 10.0))
def test_effective_frequency_monotone(a_s, a_c, f_c, a_M, f_M, k):
    base = effective_frequency(GpuClockModel(a_s, a_c, f_c, a_M, f_M))
    assert effective_frequency(GpuClockModel(a_s, a_c, f_c * k, a_M, f_M)) >= base
    assert effective_frequency(GpuClockModel(a_s, a_c, f_c, a_M, f_M * k)) >= base
    assert effective_frequency(GpuClockModel(a_s, a_c * k, f_c, a_M, f_M)) <= base
    assert effective_frequency(GpuClockModel(a_s, a_c, f_c, a_M * k, f_M)) <= base
    assert effective_frequency(GpuClockModel(a_s * k + 1e-12, a_c, f_c, a_M, f_M)) <= base


@given(G=st.floats(1.0, 1e9), f=freq, b=st.integers(1, 4096))
def test_step_time_linear_in_batch_and_inverse_in_frequency(G, f, b):
    d = device(G=G, f=f)
    assert local_step_time(d, 2 * b) == 2 * local_step_time(d, b)
    assert local_step_time(device(G=G, f=2 * f), b) == local_step_time(d, b) / 2


@given(snr=st.floats(1e-3, 1e6), s=st.floats(1e3, 1e9), B=st.floats(1e3, 1e9), k=st.floats(1.01, 10))
def test_uplink_time_monotone(snr, s, B, k):
    sys_ = WirelessSystem(B, 1.0, s)
    t = uplink_time(device(p=snr), sys_)
    assert uplink_time(device(p=snr), WirelessSystem(B * k, 1.0, s)) < t
    assert uplink_time(device(p=snr * k), sys_) < t
    assert uplink_time(device(p=snr, h=k), sys_) < t
    assert uplink_time(device(p=snr), WirelessSystem(B, 1.0, s * k)) > t
    assert uplink_time(device(p=snr), WirelessSystem(B, k, s)) > t


@given(st.lists(st.tuples(st.floats(1e3, 1e9), st.floats(1e-3, 1e3)), min_size=1, max_size=8), st.integers(1, 64))
def test_fleet_times_attain_a_device_value(specs, b):
    sys_ = WirelessSystem(2e7, 1e-3, 1e6)
    fleet = Fleet([device(G=G, p=p, id=i) for i, (G, p) in enumerate(specs)], sys_)
    per_cp = [local_step_time(d, b) for d in fleet.devices]
    per_cm = [uplink_time(d, sys_) for d in fleet.devices]
    assert fleet_compute_time(fleet, b) in per_cp and all(fleet_compute_time(fleet, b) >= t for t in per_cp)
    assert fleet_comm_time(fleet) in per_cm and all(fleet_comm_time(fleet) >= t for t in per_cm)
