import numpy as np
import pytest

from wislam.bearing import BearingWindow, pcab_bearing
from wislam.errors import DataError
from wislam.geometry import yaw_of
from wislam.scenario import Scenario, load_scenario
from wislam.sim import Trajectory, _ap_packets, corrupt_odometry, dead_reckon, generate_csi_stream, generate_truth, true_azimuth


def scn(**kw):
    base = {"waypoints": [[0, 0], [10, 0]], "speed": 1.0, "odom_rate": 10.0, "csi_rate": 10.0,
            "aps": [{"id": "a", "position": [5.0, 3.0], "height": 0.0}]}
    base.update(kw)
    return Scenario(base)


def test_two_waypoints_row_count():
    truth = generate_truth(scn())
    assert len(truth) == 101
    assert np.allclose(truth[-1][1].t, [10, 0, 0])
    assert truth[-1][0] == pytest.approx(10.0)


def test_straight_segment_identity_headings():
    for _, p in generate_truth(scn()):
        assert np.allclose(p.q, [0, 0, 0, 1])


def test_closed_square_returns_to_start():
    truth = generate_truth(scn(waypoints=[[0, 0], [4, 0], [4, 3], [0, 3], [0, 0]]))
    assert np.linalg.norm(truth[-1][1].t - truth[0][1].t) < 1e-9


def test_turns_are_in_place():
    tr = Trajectory([[0, 0], [2, 0], [2, 2]], 1.0, np.deg2rad(45.0))
    assert tr.duration == pytest.approx(4.0 + 2.0)
    mid = tr.at(3.0)
    assert np.allclose(mid.t, [2, 0, 0]) and yaw_of(mid.q) == pytest.approx(np.pi / 4)


def test_degenerate_waypoints():
    with pytest.raises(DataError):
        Trajectory([[0, 0], [0, 0]], 1.0, 1.0)
    with pytest.raises(DataError):
        Trajectory([[0, 0]], 1.0, 1.0)


def test_zero_noise_dead_reckoning_reproduces_truth():
    truth = generate_truth(scn(waypoints=[[0, 0], [4, 0], [4, 3], [0, 3], [0, 0]]))
    odom = corrupt_odometry(truth, {}, 0)
    for (_, a), b in zip(truth, dead_reckon(truth[0][1], odom)):
        assert np.linalg.norm(a.t - b.t) < 1e-9
        assert min(np.linalg.norm(a.q - b.q), np.linalg.norm(a.q + b.q)) < 1e-9


def test_yaw_bias_closed_form():
    s = scn(waypoints=[[0, 0], [100, 0]], speed=10.0)
    truth = generate_truth(s)
    assert len(truth) == 101
    b = 0.002
    odom = corrupt_odometry(truth, {"yaw_bias": b}, 0)
    end = dead_reckon(truth[0][1], odom)[-1]
    assert yaw_of(end.q) == pytest.approx(100 * b * 0.1, abs=1e-6)


def test_odometry_noise_reproducible():
    truth = generate_truth(scn())
    noise = {"sigma_t": 0.01, "sigma_r_deg": 0.2, "yaw_bias": 0.001}
    a = corrupt_odometry(truth, noise, 42)
    b = corrupt_odometry(truth, noise, 42)
    c = corrupt_odometry(truth, noise, 43)
    assert a == b
    assert a != c


def test_noiseless_packets_recover_azimuth():
    s = scn(waypoints=[[0, 0], [4, 0], [4, 3], [0, 3]], csi_rate=2.0)
    traj = Trajectory(s.waypoints, s.speed, s.turn_rate)
    for p in generate_csi_stream(s):
        truth = true_azimuth(traj.at(p.timestamp), s.aps[0].xyz)
        if abs(truth) > np.deg2rad(159):
            continue
        est = pcab_bearing(BearingWindow.of([p], horizon=0.0), s.array).theta
        assert abs(est - truth) <= np.deg2rad(1.0) + 1e-12


def test_stationary_packets_equal_up_to_global_phase():
    s = scn()
    traj = Trajectory(s.waypoints, s.speed, s.turn_rate)
    pk = _ap_packets(s, traj, 0, np.full(5, 3.0))  # five packets from one pose
    H0 = pk[0].H
    for p in pk[1:]:
        ph = np.vdot(H0.ravel(), p.H.ravel())
        ph /= abs(ph)
        assert np.allclose(p.H, H0 * ph, atol=1e-12)


def test_rssi_peaks_at_closest_approach():
    s = scn()
    pk = generate_csi_stream(s)
    k = int(np.argmax([p.rssi for p in pk]))
    assert pk[k].timestamp == pytest.approx(5.0)


def test_csi_stream_deterministic_and_ordered():
    s = load_scenario("desk_outlier")
    a = generate_csi_stream(s)
    b = generate_csi_stream(s)
    assert [p.timestamp for p in a] == sorted(p.timestamp for p in a)
    assert all(np.array_equal(x.H, y.H) and x.rssi == y.rssi for x, y in zip(a, b))
    assert len(a) == len(b) == len(generate_truth(s)) * len(s.aps)


def test_builtin_scenarios_load():
    for name in ("lab25x30", "lab25x30_noiseless", "desk_noiseless", "desk_noisy", "desk_outlier"):
        s = load_scenario(name)
        assert s.name == name and len(s.aps) >= 2


def test_bad_config():
    with pytest.raises(DataError):
        load_scenario("no_such_scenario")
    with pytest.raises(DataError):
        scn(speed=0.0)
    with pytest.raises(DataError):
        scn(aps=[{"id": "a", "position": [0, 0]}, {"id": "a", "position": [1, 1]}])
