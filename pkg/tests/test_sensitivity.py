import numpy as np
import pytest
from oracles import scalar_two_mode_gradient

from switchopt.forward import eval_trajectory, solve_forward
from switchopt.model import (
    AffineReset,
    CostSpec,
    HybridSystemSpec,
    LinearNonlinearity,
    ModeSpec,
    QuadraticCost,
    SwitchingSchedule,
    identity_resets,
)
from switchopt.scenarios import build_scenario
from switchopt.sensitivity import fd_gradient, seed_variation, solve_variational


def scalar(rates, resets=None, T=1.0):
    modes = tuple(ModeSpec([[a]]) for a in rates)
    return HybridSystemSpec(modes, resets or identity_resets(len(modes)),
                            CostSpec(QuadraticCost(1.0)), T, [1.0])


def test_seed_identical_modes_is_zero():
    s = HybridSystemSpec((ModeSpec([[0.7]]), ModeSpec([[0.7]])), identity_resets(2),
                         CostSpec(), 1.0, [1.0])
    traj = solve_forward(s, (0, 1), SwitchingSchedule((0.5,), 1.0))
    assert seed_variation(s, traj, 1)[0] == 0.0


def test_seed_scalar_identity_reset():
    s = scalar([1.0, -2.0])
    traj = solve_forward(s, (0, 1), SwitchingSchedule((0.5,), 1.0))
    assert seed_variation(s, traj, 1)[0] == pytest.approx(3.0 * traj.left_limits[1][0], rel=1e-15)


def test_seed_single_rate_scaled_reset_is_zero():
    s = HybridSystemSpec((ModeSpec([[0.7]]), ModeSpec([[0.7]])),
                         {(0, 1): AffineReset([[3.0]]), (1, 0): AffineReset([[1 / 3]])},
                         CostSpec(), 1.0, [1.0])
    traj = solve_forward(s, (0, 1), SwitchingSchedule((0.5,), 1.0))
    assert seed_variation(s, traj, 1)[0] == pytest.approx(0.0, abs=1e-14)


def test_seed_index_checked():
    s = scalar([1.0, -2.0])
    traj = solve_forward(s, (0, 1), SwitchingSchedule((0.5,), 1.0))
    with pytest.raises(IndexError):
        seed_variation(s, traj, 0)


def test_zero_seed_stays_zero():
    s = scalar([1.0, -2.0], {(0, 1): AffineReset([[2.0]]), (1, 0): AffineReset([[1.0]])})
    traj = solve_forward(s, (0, 1, 0), SwitchingSchedule((0.3, 0.6), 1.0))
    var = solve_variational(s, traj, 1, seed=np.zeros(1))
    assert all(np.all(p.values == 0.0) for p in var.pieces)


def test_variational_closed_form():
    s = scalar([1.0, -2.0])
    traj = solve_forward(s, (0, 1), SwitchingSchedule((0.5,), 1.0))
    var = solve_variational(s, traj, 1)
    assert var.final[0] == pytest.approx(3.0 * np.exp(-0.5), rel=1e-10)
    assert var.final[0] == pytest.approx(1.819592, abs=1e-6)


def test_variational_jumps_after_k():
    s = scalar([1.0, -2.0], {(0, 1): AffineReset([[2.0]]), (1, 0): AffineReset([[0.5]])})
    traj = solve_forward(s, (0, 1, 0), SwitchingSchedule((0.3, 0.6), 1.0))
    var = solve_variational(s, traj, 1)
    assert len(var.pieces) == 2
    assert var.plus(2)[0] == pytest.approx(0.5 * var.minus(2)[0], rel=1e-15)


def test_superposition():
    sc = build_scenario("ode-planar")
    traj = solve_forward(sc.system, sc.modes, sc.schedule)
    base = solve_variational(sc.system, traj, 2)
    scaled = solve_variational(sc.system, traj, 2, seed=-3.5 * base.seed)
    for p, q in zip(base.pieces, scaled.pieces):
        np.testing.assert_allclose(q.values, -3.5 * p.values, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("name,k", [("ode-planar", 1), ("ode-planar", 2), ("scalar-linear", 1)])
def test_state_finite_difference(name, k):
    sc = build_scenario(name)
    s, modes, sched = sc.system, sc.modes, sc.schedule
    T = sched.horizon
    h = 1e-5 * T
    traj = solve_forward(s, modes, sched)
    var = solve_variational(s, traj, k)
    times = list(sched.times)
    up, down = list(times), list(times)
    up[k - 1] += h
    down[k - 1] -= h
    tu = solve_forward(s, modes, SwitchingSchedule(tuple(up), T))
    td = solve_forward(s, modes, SwitchingSchedule(tuple(down), T))
    full = sched.full
    for n in range(k, sched.N + 1):
        lo, hi = full[n], full[n + 1]
        for frac in (0.25, 0.5, 0.75):
            t = lo + frac * (hi - lo)
            fd = (eval_trajectory(tu, t) - eval_trajectory(td, t)) / (2 * h)
            zk = var.pieces[n - k](t)
            assert np.linalg.norm(fd - zk) <= 1e-3 * max(np.linalg.norm(zk), 1e-8)


def test_fd_flat_objective():
    s = HybridSystemSpec((ModeSpec([[-0.4]]), ModeSpec([[-0.4]])), identity_resets(2),
                         CostSpec(QuadraticCost(1.0)), 1.0, [1.0])
    r = fd_gradient(s, (0, 1), SwitchingSchedule((0.5,), 1.0), 1)
    assert abs(r.value) <= 1e-8
    assert r.scheme == "central"


def test_fd_scalar_baseline():
    s = scalar([1.0, -2.0])
    r = fd_gradient(s, (0, 1), SwitchingSchedule((0.5,), 1.0), 1, h=1e-5)
    assert r.value > 0
    assert r.reliable
    assert r.value == pytest.approx(scalar_two_mode_gradient(1.0, -2.0, 0.5, 1.0), rel=1e-6)
    assert r.value == pytest.approx(1.7628018, abs=1e-6)


def test_fd_boundary_is_one_sided():
    s = scalar([1.0, -2.0])
    r = fd_gradient(s, (0, 1), SwitchingSchedule((0.0,), 1.0), 1)
    assert r.scheme == "forward" and r.one_sided
    assert r.value == pytest.approx(scalar_two_mode_gradient(1.0, -2.0, 0.0, 1.0), rel=1e-6)
    r = fd_gradient(s, (0, 1), SwitchingSchedule((1.0,), 1.0), 1)
    assert r.scheme == "backward"


def test_fd_clips_near_neighbour():
    s = scalar([1.0, -2.0, 1.0])
    r = fd_gradient(s, (0, 1, 2), SwitchingSchedule((0.5, 0.5 + 4e-6), 1.0), 2)
    assert r.clipped and r.scheme == "central" and r.step == pytest.approx(4e-6)


def test_fd_pinned():
    s = scalar([1.0, -2.0, 0.5])
    r = fd_gradient(s, (0, 1, 2), SwitchingSchedule((0.0, 0.0), 1.0), 1)
    assert r.scheme == "pinned" and np.isnan(r.value) and not r.reliable


def test_fd_forcing_nonlinearity():
    modes = (ModeSpec([[0.5]], LinearNonlinearity([[0.0]], offset=[0.3], forcing=[0.2],
                                                  frequency=3.0)),
             ModeSpec([[-1.0]]))
    s = HybridSystemSpec(modes, identity_resets(2), CostSpec(QuadraticCost(1.0)), 1.0, [1.0])
    traj = solve_forward(s, (0, 1), SwitchingSchedule((0.4,), 1.0))
    var = solve_variational(s, traj, 1)
    assert np.isfinite(var.final[0])
