import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bipedssm.metrics import (
    align_curves,
    curve_bands,
    curve_stats,
    energy_report,
    final_slice,
    foot_trace,
    read_csv,
    read_jsonl,
    record_power,
    reward_decomposition,
    samples_to_threshold,
    torque_series,
    torque_stats,
    write_csv,
    write_jsonl,
    write_summary,
)


def log_from(tau, omega=None, dt=0.025, root=None):
    tau = np.atleast_2d(np.asarray(tau, float))
    omega = np.zeros_like(tau) if omega is None else np.broadcast_to(omega, tau.shape)
    out = []
    for k, (t, w) in enumerate(zip(tau, omega)):
        rec = {"torque": t.tolist(), "joint_velocity": list(w), "dt": dt, "time": k * dt,
               "joint_names": [f"j{i}" for i in range(len(t))]}
        if root is not None:
            rec["root"] = list(root[k])
        out.append(rec)
    return out


def test_torque_examples(rng):
    s = torque_stats(log_from(np.full((20, 1), 5.0)))
    assert (s.mean[0], s.std[0], s.peak[0]) == (5.0, 0.0, 5.0)
    alt = torque_stats(log_from(5.0 * (-1.0) ** np.arange(21)[:, None]))
    assert alt.mean[0] == 5.0 and alt.peak[0] == 5.0
    tau = rng.normal(size=(200, 6)) * 30
    s = torque_stats(log_from(tau))
    for j in range(6):
        col = [abs(v) for v in tau[:, j]]
        m = sum(col) / len(col)
        sd = math.sqrt(sum((c - m) ** 2 for c in col) / len(col))
        assert abs(s.mean[j] - m) < 1e-10 and abs(s.std[j] - sd) < 1e-10
        assert s.peak[j] == max(col)
    assert s.total_mean == pytest.approx(s.mean.mean()) and s.total_peak == s.peak.max()
    assert np.all(s.peak >= s.mean) and np.all(s.mean >= 0)
    rows = s.rows()
    assert rows[-1]["joint"] == "total" and len(rows) == 7
    with pytest.raises(ValueError):
        torque_stats([])


def test_energy_examples():
    zero = energy_report(log_from(np.zeros((40, 3)), 1.0), 62.0)
    assert zero.energy == 0.0 and zero.average_power == 0.0
    const = energy_report(log_from(np.full((40, 1), 10.0), 2.0), 62.0)
    assert const.average_power == pytest.approx(20.0, abs=1e-12)
    assert const.energy == pytest.approx(20.0, abs=1e-12)
    assert const.duration == pytest.approx(1.0)
    assert const.power_per_mass * 62.0 == pytest.approx(const.average_power, abs=1e-9)
    assert const.energy_per_meter is None  # no root motion recorded
    root = np.zeros((40, 3))
    standing = energy_report(log_from(np.full((40, 1), 10.0), 2.0, root=root + [0.01, 0, 0]),
                             62.0)
    assert standing.energy_per_meter is None
    root[:, 0] = np.linspace(0, 2.0, 40)
    walk = energy_report(log_from(np.full((40, 1), 10.0), 2.0, root=root), 62.0)
    assert walk.distance == pytest.approx(2.0) and walk.energy_per_meter == pytest.approx(10.0)
    with pytest.raises(ValueError):
        energy_report(log_from(np.zeros((3, 1)), dt=0.0), 62.0)
    with pytest.raises(ValueError):
        energy_report([], 62.0)


def test_record_power_prefers_simulator_value():
    rec = log_from([[2.0, -3.0]], [1.0, 1.0])[0]
    assert record_power(rec) == 5.0
    rec["power"] = 7.5
    assert record_power(rec) == 7.5


@given(st.floats(0, 10), st.integers(0, 1000))
def test_scale_law(c, seed):
    rng = np.random.default_rng(seed)
    tau, omega = rng.normal(size=(30, 4)), rng.normal(size=(30, 4))
    base = log_from(tau, omega)
    scaled = log_from(c * tau, omega)
    a, b = torque_stats(base), torque_stats(scaled)
    np.testing.assert_allclose(b.mean, c * a.mean, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(b.peak, c * a.peak, rtol=1e-12, atol=1e-12)
    ea, eb = energy_report(base, 62.0), energy_report(scaled, 62.0)
    assert eb.energy == pytest.approx(c * ea.energy, rel=1e-12, abs=1e-12)
    assert eb.average_power == pytest.approx(c * ea.average_power, rel=1e-12, abs=1e-12)


@given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 1000))
def test_energy_additivity(n1, n2, seed):
    rng = np.random.default_rng(seed)
    log = log_from(rng.normal(size=(n1 + n2, 3)), rng.normal(size=(n1 + n2, 3)))
    for r in log[::2]:
        r["energy"] = float(rng.uniform(0, 5))  # mix recorded and derived energies
    whole = energy_report(log, 62.0).energy
    parts = energy_report(log[:n1], 62.0).energy + energy_report(log[n1:], 62.0).energy
    assert abs(whole - parts) < 1e-9


def test_reward_decomposition():
    log = [{"reward": {"w_step": 0.4, "total": 0.8}}, {"reward": {"w_step": 0.2, "total": 0.6}}]
    assert reward_decomposition(log) == pytest.approx({"w_step": 0.3, "total": 0.7})
    with pytest.raises(ValueError):
        reward_decomposition([{}])


def test_curve_examples():
    x = np.arange(1, 11) * 1e5
    s = curve_stats(x, np.full((1, 10), 3.0))
    assert (s.deviation, s.late_variance, s.peak, s.final) == (0.0, 0.0, 3.0, 3.0)
    step = np.where(x >= 1e6, 300.0, 100.0)
    assert curve_stats(x, step[None], thresholds=[240]).samples_to_threshold[240.0] == 1e6
    assert curve_stats(x, step[None], thresholds=[400]).samples_to_threshold[400.0] is None
    a = np.linspace(0, 1, 10)
    b = a + np.linspace(0.5, 2, 10)
    two = curve_stats(x, np.stack([a, b]))
    hand = np.mean([abs(bi - ai) / 2 for ai, bi in zip(a, b)])
    assert abs(two.deviation - hand) < 1e-10
    assert final_slice(10) == slice(9, 10) and final_slice(25) == slice(22, 25)
    assert two.final == pytest.approx((a[-1] + b[-1]) / 2)
    with pytest.raises(ValueError):
        curve_stats(x, np.zeros((2, 9)))


@given(st.lists(st.floats(-100, 500), min_size=1, max_size=40), st.floats(-100, 500),
       st.floats(0, 200))
def test_threshold_monotone(values, t, dt):
    x = np.arange(len(values)) * 100.0
    lo = samples_to_threshold(x, values, t)
    hi = samples_to_threshold(x, values, t + dt)
    lo = math.inf if lo is None else lo
    hi = math.inf if hi is None else hi
    assert hi >= lo


def test_align_and_bands():
    t1 = {"samples": np.array([10.0, 20, 30]), "mean_return": np.array([1.0, 2, 3])}
    t2 = {"samples": np.array([12.0, 22]), "mean_return": np.array([3.0, 4])}
    axis, curves = align_curves([t1, t2], "mean_return")
    np.testing.assert_allclose(axis, [11, 21])
    bands = curve_bands(axis, curves)
    np.testing.assert_allclose(bands["mean"], [2, 3])
    np.testing.assert_allclose(bands["std"], [1, 1])


def test_file_round_trips(tmp_path):
    recs = [{"a": 1, "b": [1.0, 2.0]}, {"a": 2, "b": [3.0, 4.0]}]
    write_jsonl(tmp_path / "x.jsonl", recs)
    assert read_jsonl(tmp_path / "x.jsonl") == recs
    write_csv(tmp_path / "c.csv", {"x": [0.1, 0.2], "y": [1, 2]})
    back = read_csv(tmp_path / "c.csv")
    np.testing.assert_array_equal(back["x"], [0.1, 0.2])
    with pytest.raises(ValueError):
        write_csv(tmp_path / "bad.csv", {"x": [1], "y": [1, 2]})
    write_summary(tmp_path / "s.csv", {"energy": 1.5, "jpm": None})
    assert (tmp_path / "s.csv").read_text().splitlines() == ["metric,value", "energy,1.5", "jpm,"]


def test_foot_trace_and_torque_series():
    log = log_from(np.ones((4, 2)))
    for r in log:
        r["feet"] = [[0.0, -0.06, 0.0], [0.1, 0.06, 0.0]]
        r["root"] = [0.05, 0.0, 0.8]
    tr = foot_trace(log)
    assert len(tr["left_x"]) == 4 and tr["left_y"][0] == 0.06
    ts = torque_series(log)
    assert set(ts) == {"time", "j0", "j1"}
