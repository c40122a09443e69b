import numpy as np
import pytest
from oracles import scalar_two_mode_final

from switchopt.errors import BlowUp, NonFiniteState, OutOfDomain, ScheduleMismatch
from switchopt.forward import (
    cost_breakdown,
    eval_trajectory,
    evaluate_cost,
    reduced_cost,
    solve_forward,
    step_segment,
)
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
from switchopt.steppers import SolverOptions, mesh


def scalar_system(rates, resets=None, cost=None, T=1.0, z0=1.0):
    modes = tuple(ModeSpec([[a]]) for a in rates)
    if resets is None:
        resets = identity_resets(len(modes))
    return HybridSystemSpec(modes, resets, cost or CostSpec(QuadraticCost(1.0)), T, [z0])


def test_zero_field_keeps_state():
    seg = step_segment(ModeSpec(np.zeros((2, 2))), [1.0, 2.0], 0.0, 1.0)
    np.testing.assert_array_equal(seg.values[-1], [1.0, 2.0])
    np.testing.assert_array_equal(seg(0.37), [1.0, 2.0])


def test_scalar_decay_endpoint():
    seg = step_segment(ModeSpec([[-1.0]]), [1.0], 0.0, 1.0)
    assert seg.end[0] == pytest.approx(np.exp(-1.0), abs=1e-12)


def test_degenerate_segment():
    seg = step_segment(ModeSpec([[-1.0]]), [3.0], 0.5, 0.5)
    assert seg.degenerate
    assert seg.start[0] == 3.0


def test_mesh_equal_steps_and_count():
    knots = mesh(0.2, 0.9, 0.1)
    assert len(knots) == 8
    assert knots[0] == 0.2 and knots[-1] == 0.9
    np.testing.assert_allclose(np.diff(knots), 0.1, rtol=1e-12)
    assert len(mesh(0.0, 1.0, 0.3)) == 5


def _endpoint_error(mode, h, stepper, exact):
    seg = step_segment(mode, [1.0], 0.0, 1.0, SolverOptions(h_max=h, stepper=stepper))
    return abs(seg.end[0] - exact)


def test_rk4_order():
    mode = ModeSpec([[-1.0]], LinearNonlinearity([[0.3]]))
    exact = np.exp(-0.7)
    e1 = _endpoint_error(mode, 0.1, "rk4", exact)
    e2 = _endpoint_error(mode, 0.05, "rk4", exact)
    assert e1 / e2 >= 2**4 / 1.5


def test_exponential_stepper_order():
    mode = ModeSpec([[-1.0]], LinearNonlinearity([[0.3]]))
    exact = np.exp(-0.7)
    e1 = _endpoint_error(mode, 0.1, "expm", exact)
    e2 = _endpoint_error(mode, 0.05, "expm", exact)
    assert e1 / e2 >= 2**2 / 1.5


def test_exponential_stepper_exact_for_linear_modes():
    A = np.array([[-50.0, 3.0], [0.0, -200.0]])
    seg = step_segment(ModeSpec(A), [1.0, 1.0], 0.0, 0.1, SolverOptions(h_max=0.05))
    from scipy.linalg import expm

    np.testing.assert_allclose(seg.end, expm(0.1 * A) @ [1.0, 1.0], rtol=1e-12, atol=1e-15)
    assert seg.method == "expm"


def test_dense_derivatives_match_vector_field():
    mode = ModeSpec([[-0.5, 1.0], [-1.0, -0.5]])
    seg = step_segment(mode, [1.0, 0.0], 0.0, 1.0)
    for i in (0, 10, len(seg.knots) - 1):
        np.testing.assert_allclose(seg.derivatives[i], mode.rhs(seg.knots[i], seg.values[i]),
                                   atol=1e-14)


def test_single_mode_matches_step_segment():
    s = scalar_system([-0.7])
    traj = solve_forward(s, (0,), SwitchingSchedule((), 1.0))
    seg = step_segment(s.modes[0], [1.0], 0.0, 1.0, h_max=1e-3)
    np.testing.assert_array_equal(traj.final_state, seg.end)


def test_two_mode_closed_form_with_reset():
    s = scalar_system([1.0, -2.0], {(0, 1): AffineReset([[2.0]]), (1, 0): AffineReset([[0.5]])})
    traj = solve_forward(s, (0, 1), SwitchingSchedule((0.5,), 1.0))
    expected = scalar_two_mode_final(1.0, -2.0, 0.5, 1.0, reset=2.0)
    assert expected == pytest.approx(2.0 * np.exp(-0.5))
    assert traj.final_state[0] == pytest.approx(expected, rel=1e-11)
    assert traj.final_state[0] == pytest.approx(1.213061, abs=1e-6)


def test_resets_are_applied_exactly():
    s = scalar_system([1.0, -2.0], {(0, 1): AffineReset([[2.0]], [0.1]),
                                    (1, 0): AffineReset([[0.5]])})
    traj = solve_forward(s, (0, 1, 0, 1), SwitchingSchedule((0.2, 0.5, 0.7), 1.0))
    for n in range(1, 4):
        g = s.reset(traj.modes[n - 1], traj.modes[n])
        np.testing.assert_array_equal(traj.right_values[n], g(traj.left_limits[n]))


def test_coincident_times_compose_resets():
    resets = {(0, 1): AffineReset([[2.0]]), (1, 2): AffineReset([[1.0]], [1.0]),
              (0, 2): AffineReset([[5.0]]), (1, 0): AffineReset([[1.0]]),
              (2, 0): AffineReset([[1.0]]), (2, 1): AffineReset([[1.0]])}
    s = scalar_system([0.3, -1.0, 0.5], resets)
    traj = solve_forward(s, (0, 1, 2), SwitchingSchedule((0.4, 0.4), 1.0))
    zm = traj.left_limits[1]
    np.testing.assert_array_equal(traj.right_values[2], 2.0 * zm + 1.0)
    assert traj.pieces[1].degenerate
    assert len(traj.segments) == 2


def test_eval_trajectory_sides():
    s = scalar_system([1.0, -2.0], {(0, 1): AffineReset([[2.0]]), (1, 0): AffineReset([[1.0]])})
    traj = solve_forward(s, (0, 1), SwitchingSchedule((0.5,), 1.0))
    np.testing.assert_array_equal(eval_trajectory(traj, 0.5, "left"), traj.left_limits[1])
    np.testing.assert_array_equal(eval_trajectory(traj, 0.5, "right"), traj.right_values[1])
    inner = eval_trajectory(traj, 0.3, "left")
    np.testing.assert_array_equal(inner, eval_trajectory(traj, 0.3, "right"))
    assert inner[0] == pytest.approx(np.exp(0.3), rel=1e-10)
    assert eval_trajectory(traj, 0.5 + 1e-7)[0] == pytest.approx(traj.right_values[1][0],
                                                                 rel=1e-6)
    with pytest.raises(OutOfDomain):
        eval_trajectory(traj, 1.5)


def test_cost_examples():
    s = HybridSystemSpec((ModeSpec([[-1.0]]),), {}, CostSpec(), 1.0, [1.0])
    assert reduced_cost(s, (0,), SwitchingSchedule((), 1.0)) == 0.0
    s = scalar_system([-1.0])
    J = reduced_cost(s, (0,), SwitchingSchedule((), 1.0))
    assert J == pytest.approx((1 - np.exp(-2)) / 4, rel=1e-10)
    assert J == pytest.approx(0.216166, abs=1e-6)
    c = 0.37
    s = scalar_system([1.0, -1.0], cost=CostSpec(switching={(0, 1): QuadraticCost(constant=c)}))
    assert reduced_cost(s, (0, 1), SwitchingSchedule((0.3,), 1.0)) == pytest.approx(c)


def test_cost_breakdown_parts():
    cost = CostSpec(QuadraticCost(1.0), {(0, 1): QuadraticCost(constant=0.2, time_slope=1.0)},
                    QuadraticCost(3.0))
    s = scalar_system([0.5, -0.5], cost=cost)
    traj = solve_forward(s, (0, 1), SwitchingSchedule((0.4,), 1.0))
    b = cost_breakdown(s, traj)
    assert b.switching == (pytest.approx(0.6),)
    assert b.terminal == pytest.approx(1.5 * traj.final_state[0] ** 2)
    assert b.total == pytest.approx(evaluate_cost(s, traj))


def test_odd_interval_counts_use_exact_quadrature():
    s = scalar_system([-1.0])
    J = reduced_cost(s, (0,), SwitchingSchedule((), 1.0), SolverOptions(h_max=1 / 7))
    assert J == pytest.approx((1 - np.exp(-2)) / 4, rel=1e-4)


def test_degenerate_limit_continuity():
    s = scalar_system([1.0, -2.0, 0.5], cost=CostSpec(QuadraticCost(1.0)))
    base = reduced_cost(s, (0, 1, 2), SwitchingSchedule((0.4, 0.4), 1.0))
    gaps = [abs(reduced_cost(s, (0, 1, 2), SwitchingSchedule((0.4, 0.4 + d), 1.0)) - base)
            for d in (1e-3, 1e-4, 1e-5)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_blowup_detected_with_segment_index():
    s = scalar_system([0.0, 40.0])
    with pytest.raises(BlowUp) as info:
        solve_forward(s, (0, 1), SwitchingSchedule((0.1,), 1.0))
    assert info.value.segment == 1
    assert info.value.time is not None


def test_non_finite_state_detected():
    with pytest.raises(NonFiniteState):
        from switchopt.steppers import integrate

        integrate(np.zeros((1, 1)), lambda t, y: np.array([np.nan]), np.array([1.0]),
                  np.linspace(0, 1, 3), "rk4")


def test_schedule_mode_mismatch():
    s = scalar_system([1.0, -1.0])
    with pytest.raises(ScheduleMismatch):
        solve_forward(s, (0, 1), SwitchingSchedule((), 1.0))
    with pytest.raises(ScheduleMismatch):
        solve_forward(s, (0, 1), SwitchingSchedule((0.5,), 2.0))
