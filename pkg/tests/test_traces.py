import numpy as np
import pytest

from wislam import traces
from wislam.bearing import BearingMeasurement, bearing_sigma
from wislam.channel import ArrayGeometry, CsiPacket, PathComponent, default_wavelength, subcarrier_freqs, synth_channel
from wislam.errors import DataError
from wislam.geometry import Pose, Tangent6


def test_trajectory_round_trip(tmp_path, rng):
    samples = [(float(t), Pose(rng.standard_normal(3), rng.standard_normal(4))) for t in np.cumsum(rng.random(20))]
    p = tmp_path / "traj.csv"
    traces.write_trajectory(p, samples)
    back = traces.read_trajectory(p)
    assert [t for t, _ in back] == [t for t, _ in samples]
    assert all(a == b for (_, a), (_, b) in zip(back, samples))


def test_odometry_round_trip(tmp_path, rng):
    times = np.cumsum(rng.random(10))
    zs = [Tangent6(rng.standard_normal(3), rng.standard_normal(3) * 0.1) for _ in times]
    p = tmp_path / "odom.csv"
    traces.write_odometry(p, times, zs)
    t2, z2 = traces.read_odometry(p)
    assert np.array_equal(times, t2) and z2 == zs


def test_csi_round_trip(tmp_path, rng):
    lam = default_wavelength()
    f = subcarrier_freqs()
    geom = ArrayGeometry.square(0.375 * lam)
    pk = []
    for k in range(5):
        H = synth_channel([PathComponent(rng.uniform(-3, 3), 5.0)], geom, f, lam, rng.uniform(0, 6), 0.05, rng)
        pk.append(CsiPacket(0.1 * k, f"ap{k % 2}", -40.0 - rng.random(), H, lam, f))
    p = tmp_path / "csi.jsonl"
    traces.write_csi(p, pk)
    back = traces.read_csi(p)
    for a, b in zip(pk, back):
        assert a.timestamp == b.timestamp and a.ap_id == b.ap_id and a.rssi == b.rssi
        assert np.array_equal(a.H, b.H) and np.array_equal(a.freqs, b.freqs) and a.wavelength == b.wavelength


def test_bearings_rssi_aps_round_trip(tmp_path, rng):
    ms = [BearingMeasurement(float(t), "ap0", float(th), bearing_sigma(0.0873)) for t, th in rng.random((6, 2))]
    traces.write_bearings(tmp_path / "b.csv", ms)
    back = traces.read_bearings(tmp_path / "b.csv")
    assert [(m.timestamp, m.theta, m.sigma_std) for m in back] == [(m.timestamp, m.theta, m.sigma_std) for m in ms]
    rs = [(0.1, "a", -50.123456789), (0.2, "b", -61.0)]
    traces.write_rssi(tmp_path / "r.csv", rs)
    assert traces.read_rssi(tmp_path / "r.csv") == rs
    aps = {"b": np.array([1.0 / 3, 2.0, 0.5]), "a": np.array([-4.0, 1e-17, 0.0])}
    traces.write_aps(tmp_path / "a.csv", aps)
    back = traces.read_aps(tmp_path / "a.csv")
    assert sorted(back) == ["a", "b"] and all(np.array_equal(back[k], aps[k]) for k in aps)


def test_rewrite_is_byte_identical(tmp_path, rng):
    samples = [(0.1 * k, Pose(rng.standard_normal(3), rng.standard_normal(4))) for k in range(5)]
    traces.write_trajectory(tmp_path / "a.csv", samples)
    traces.write_trajectory(tmp_path / "b.csv", traces.read_trajectory(tmp_path / "a.csv"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_bad_inputs(tmp_path):
    with pytest.raises(DataError):
        traces.read_trajectory(tmp_path / "missing.csv")
    (tmp_path / "x.csv").write_text("t,a,b\n1,2,3\n")
    with pytest.raises(DataError):
        traces.read_bearings(tmp_path / "x.csv")
    (tmp_path / "y.csv").write_text("t,ap_id,theta_rad,sigma\n1,a,abc,0.1\n")
    with pytest.raises(DataError):
        traces.read_bearings(tmp_path / "y.csv")
    (tmp_path / "c.jsonl").write_text('{"t": 1}\n')
    with pytest.raises(DataError):
        traces.read_csi(tmp_path / "c.jsonl")
