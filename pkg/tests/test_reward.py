import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from auvdock.reward import (
    CollisionMonitor,
    RewardConfig,
    detect_collision,
    r_angle,
    r_dist,
    r_mission,
    r_smooth,
    total_reward,
)

CFG = RewardConfig()


def gamma_oracle(jumps, gamma_set=1.0, penalty=10.0):
    """Hand simulation of the doubling / halving-to-floor threshold recurrence."""
    g, pens, trace = gamma_set, [], []
    for j in jumps:
        if j > g:
            pens.append(-penalty)
            g = 2 * g
        else:
            pens.append(0.0)
            if g > gamma_set:
                g = max(gamma_set, g / 2)
        trace.append(g)
    return pens, trace


def run_monitor(accs, cfg=CFG):
    mon = CollisionMonitor.initial(cfg)
    pens, trace = [], []
    for a in accs:
        p, mon = detect_collision(a, mon, cfg)
        pens.append(p)
        trace.append(mon.gamma)
    return pens, trace


def jumps_to_accs(jumps):
    """Acceleration sequence (along x) whose successive difference norms are ``jumps``."""
    acc, out = 0.0, []
    for k, j in enumerate(jumps):
        acc += j if k % 2 == 0 else -j
        out.append([acc, 0.0, 0.0])
    return out


def test_r_dist_examples():
    assert r_dist([0, 0, 0]) == 0.0
    assert r_dist([1, 2, 2], (1, 1, 0.5)) == -4.0
    assert r_dist([-1, -2, -2], (1, 1, 0.5)) == -4.0


def test_r_angle_examples():
    assert r_angle(0.0) == 0.0
    assert r_angle(math.pi) == pytest.approx(-0.99813, abs=1e-5)
    assert r_angle(0.5) == pytest.approx(-0.63212, abs=1e-5)


def test_r_smooth_examples():
    z = np.zeros(6)
    assert r_smooth(z, z) == pytest.approx(-0.1 / 6, abs=1e-15)
    a = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    assert r_smooth(a, z) == pytest.approx(-6.724, abs=1e-3)
    b = np.array([0.5, -0.5, 0.0, 0.0, 0.0, 0.0])
    assert r_smooth(b, z) == pytest.approx(-0.0453, abs=1e-4)


def test_r_mission_examples():
    assert r_mission(True, False, CFG) == 500.0
    assert r_mission(False, True, CFG) == -10.0
    assert r_mission(False, False, CFG) == 0.0
    with pytest.raises(ValueError):
        r_mission(True, True, CFG)


def test_collision_examples():
    p, m = detect_collision([0.5, 0, 0], CollisionMonitor(1.0), CFG)
    assert (p, m.gamma) == (0.0, 1.0)
    p, m = detect_collision([1.5, 0, 0], CollisionMonitor(1.0), CFG)
    assert (p, m.gamma) == (-10.0, 2.0)
    np.testing.assert_array_equal(m.prev_acc, [1.5, 0, 0])


def test_collision_sequence_follows_recurrence():
    pens, trace = run_monitor(jumps_to_accs([1.5, 1.5, 0, 0, 0]))
    assert pens == [-10.0, 0.0, 0.0, 0.0, 0.0]
    # the second 1.5 jump is below the doubled threshold, which then decays straight back to the floor
    assert trace == [2.0, 1.0, 1.0, 1.0, 1.0]


def test_randomized_sequences_match_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        jumps = list(rng.choice([0.0, 0.3, 0.9, 1.2, 1.9, 2.5, 4.5, 9.0], size=int(rng.integers(5, 40))))
        assert run_monitor(jumps_to_accs(jumps)) == gamma_oracle(jumps)


@given(st.integers(0, 8), st.integers(0, 12))
def test_threshold_returns_to_floor_in_j_steps(j, extra):
    g = 2.0**j
    mon = CollisionMonitor(g, np.zeros(3))
    for k in range(j + extra):
        _, mon = detect_collision(np.zeros(3), mon, CFG)
        assert mon.gamma >= CFG.collision_threshold
        if k == j - 1:
            assert mon.gamma == CFG.collision_threshold
    assert mon.gamma == CFG.collision_threshold


@given(st.floats(1.0001, 2.0), st.floats(0.0, 0.5), st.integers(3, 30))
def test_spike_then_ring_penalized_once(spike, ring, n):
    accs = [[0.0, 0, 0], [spike, 0, 0]] + [[ring * (-0.6) ** k, 0, 0] for k in range(n)]
    pens, _ = run_monitor(accs)
    assert pens.count(-10.0) == 1


def test_total_reward_is_sum_of_breakdown():
    rng = np.random.default_rng(2)
    mon = CollisionMonitor.initial(CFG)
    prev = np.zeros(6)
    for _ in range(200):
        a = rng.uniform(-1, 1, 6)
        tot, bd, mon = total_reward(rng.normal(0, 3, 3), rng.uniform(-3, 3), a, prev, rng.normal(0, 1, 3),
                                    mon, False, bool(rng.random() < 0.1), CFG)
        assert tot == bd.dist + bd.angle + bd.smooth + bd.collision + bd.mission
        assert bd.gamma == mon.gamma
        prev = a


def test_total_reward_at_dock():
    z = np.zeros(3)
    tot, bd, _ = total_reward(z, 0.0, np.zeros(6), np.zeros(6), z, CollisionMonitor.initial(CFG), True, False, CFG)
    assert tot == pytest.approx(500 - 0.1 / 6, abs=1e-12)
    assert bd.as_row()["r_mission"] == 500


def test_total_reward_zero_state_mid_episode():
    z = np.zeros(3)
    tot, _, _ = total_reward(z, 0.0, np.zeros(6), np.zeros(6), z, CollisionMonitor.initial(CFG), False, False, CFG)
    assert tot == pytest.approx(-0.1 / 6, abs=1e-15)


def test_typical_spawn_distance_gives_strongly_negative_return():
    # hovering at the mean spawn offset (|U(-6,6)|, |U(-3,3)|, pin 0.6 m + |U(0,1.4)| above the seat)
    # with a mean yaw error of pi/2 for a 60 s episode at 5 Hz: order -1e2 .. -1e3
    per_step = r_dist([3.0, 1.5, 0.6 + 0.7]) + r_angle(math.pi / 2) - 0.1 / 6
    assert -3000 < 300 * per_step < -300


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_r_angle_bounds_and_monotonicity(a, b):
    assert -1 < r_angle(a) <= 0
    if abs(a) <= abs(b):
        assert r_angle(a) >= r_angle(b)


@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6), st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_r_smooth_bounded_by_floor(a, b):
    assert r_smooth(a, b) <= -0.1 / 6


def test_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(collision_penalty=-1)
    with pytest.raises(ValueError):
        RewardConfig(collision_threshold=0)
