import numpy as np
import pytest

from switchopt.errors import ChainPropertyViolation, MissingReset
from switchopt.gradients import (
    insert_mode,
    insertion_fd,
    insertion_gradient,
    insertion_scan,
    split_schedule,
)
from switchopt.model import (
    AffineReset,
    CostSpec,
    HybridSystemSpec,
    ModeSpec,
    QuadraticCost,
    SwitchingSchedule,
    identity_resets,
)
from switchopt.scenarios import build_scenario


def unstable(cost=None, resets=None):
    modes = tuple(ModeSpec([[a]]) for a in (1.0, -2.0, -5.0))
    return HybridSystemSpec(modes, resets or identity_resets(3),
                            cost or CostSpec(QuadraticCost(1.0)), 1.0, [1.0])


EMPTY = SwitchingSchedule((), 1.0)


def test_split_schedule():
    modes, sched, k = split_schedule((0, 1), SwitchingSchedule((0.5,), 1.0), 0.2)
    assert modes == (0, 0, 1) and sched.times == (0.2, 0.5) and k == 1
    modes, sched, k = split_schedule((0, 1), SwitchingSchedule((0.5,), 1.0), 0.5)
    assert modes == (0, 1) and k == 1
    modes, sched, k = split_schedule((0, 1, 2), SwitchingSchedule((0.5, 0.5), 1.0), 0.5)
    assert k == 2
    assert split_schedule((0,), EMPTY, 0.0)[2] == 0
    with pytest.raises(ValueError):
        split_schedule((0,), EMPTY, 1.5)


def test_insert_mode_layout():
    modes, sched = insert_mode((0, 0, 1), SwitchingSchedule((0.2, 0.5), 1.0), 1, 2)
    assert modes == (0, 2, 0, 1) and sched.times == (0.2, 0.2, 0.5)
    modes, sched = insert_mode((0,), EMPTY, 0, 2, dwell=0.1)
    assert modes == (2, 0) and sched.times == (0.1,)


@pytest.mark.parametrize("t", [0.0, 0.2, 0.4, 0.6, 0.8])
def test_stable_insertion_matches_one_sided_fd(t):
    s = unstable()
    modes, sched, k = split_schedule((0,), EMPTY, t)
    g = insertion_gradient(s, modes, sched, k, 2)
    fd = insertion_fd(s, modes, sched, k, 2, h=1e-5)
    assert g < 0
    assert abs(g - fd) <= 1e-3 * abs(fd)


@pytest.mark.parametrize("t", [0.0, 0.3, 0.7])
def test_ambient_insertion_is_zero(t):
    s = unstable()
    modes, sched, k = split_schedule((0,), EMPTY, t)
    assert abs(insertion_gradient(s, modes, sched, k, 0)) <= 1e-10


def test_constant_transition_cost_has_no_gradient():
    base = unstable()
    cost = CostSpec(QuadraticCost(1.0), {(0, 2): QuadraticCost(constant=0.3),
                                         (2, 0): QuadraticCost(constant=0.2)})
    priced = unstable(cost=cost)
    modes, sched, k = split_schedule((0,), EMPTY, 0.4)
    g0 = insertion_gradient(base, modes, sched, k, 2)
    g1 = insertion_gradient(priced, modes, sched, k, 2)
    assert g1 == pytest.approx(g0, rel=1e-12, abs=1e-14)


def test_scaled_transition_matches_fd():
    resets = {(i, j): AffineReset([[2.0 if j == 2 else (0.5 if i == 2 else 1.0)]])
              for i in range(3) for j in range(3) if i != j}
    resets[(1, 2)] = AffineReset([[2.0]])
    s = unstable(resets=resets)
    modes, sched, k = split_schedule((0,), EMPTY, 0.3)
    g = insertion_gradient(s, modes, sched, k, 2)
    fd = insertion_fd(s, modes, sched, k, 2, h=1e-5)
    assert abs(g - fd) <= 1e-3 * abs(fd)


def test_chain_violation_and_missing_reset():
    resets = dict(identity_resets(3))
    resets[(0, 2)] = AffineReset([[2.0]])
    s = unstable(resets=resets)
    modes, sched, k = split_schedule((0,), EMPTY, 0.4)
    with pytest.raises(ChainPropertyViolation):
        insertion_gradient(s, modes, sched, k, 2)
    del resets[(0, 2)]
    s = unstable(resets=resets)
    with pytest.raises(MissingReset):
        insertion_gradient(s, modes, sched, k, 2)
    scan = insertion_scan(s, (0,), EMPTY, [0.4], [1, 2])
    assert [e.feasible for e in scan] == [True, False]
    assert scan.entries[1].reason == "MissingReset" and np.isnan(scan.entries[1].value)


def test_scan_sorted_and_delegates():
    s = unstable()
    scan = insertion_scan(s, (0, 1), SwitchingSchedule((0.5,), 1.0), [0.0, 0.25, 0.5, 1.0],
                          [1, 2])
    values = [e.value for e in scan if e.feasible]
    assert values == sorted(values)
    assert [e.feasible for e in scan][-2:] == [False, False]
    assert scan.best().mode == 2
    single = insertion_scan(s, (0, 1), SwitchingSchedule((0.5,), 1.0), [0.5], [2])
    direct = insertion_gradient(s, (0, 1), SwitchingSchedule((0.5,), 1.0), 1, 2)
    assert len(single) == 1 and single.entries[0].value == direct


def test_scan_ambient_only():
    s = unstable()
    scan = insertion_scan(s, (0,), EMPTY, [0.0, 0.5], [0])
    assert all(e.feasible and abs(e.value) <= 1e-10 for e in scan)
    assert len(insertion_scan(s, (0,), EMPTY, [0.0, 0.5], [0], skip_ambient=True)) == 0


def test_transport_diffusion_scan():
    sc = build_scenario("transport-diffusion", times=(0.8,))
    grid = np.linspace(0.0, 1.0, 9)
    scan = insertion_scan(sc.system, sc.modes, sc.schedule, grid, [1])
    before = [e for e in scan if e.feasible and e.time < 0.8]
    assert len(before) == 7
    for e in before:
        assert e.value < 0
        m2, s2, k = split_schedule(sc.modes, sc.schedule, e.time)
        fd = insertion_fd(sc.system, m2, s2, k, 1, h=1e-5)
        assert abs(e.value - fd) <= 1e-3 * abs(fd)
