"""Integrator accuracy, exact restartability, and failure modes."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from randssm.errors import (DimensionMismatch, LengthMismatch,
                            NewtonDivergence)
from randssm.forcing import (FilterConfig, NoiseRealization, draw_increments,
                             filter_path)
from randssm.integrate import (IntegratorConfig, Trajectory, cocycle_check,
                               coupled_advancer, coupled_implicit_integrate,
                               newmark_advancer, newmark_integrate,
                               reduced_advancer, rk4_reduced_integrate,
                               write_trajectory_csv)
from randssm.manifold import compute_autonomous_ssm
from randssm.models import make_model
from randssm.polynomial import PolynomialMap
from randssm.reduced import RandomReducedModel
from randssm.spectral import compute_spectrum, slow_subspace
from randssm.systems import MechanicalSystem, FirstOrderSystem


def duffing_system():
    return make_model("duffing").system


def duffing_reference(T, q0=1.0, v0=0.0):
    def rhs(t, y):
        return [y[1], -0.2 * y[1] - y[0] - 0.5 * y[0] ** 3]

    sol = solve_ivp(rhs, (0.0, T), [q0, v0], rtol=1e-12, atol=1e-14,
                    dense_output=True)
    return sol


def test_average_acceleration_conserves_energy():
    # undamped linear oscillator: the gamma=1/2, beta=1/4 scheme conserves
    # the discrete energy exactly, so any drift is pure roundoff
    k = (2.0 * np.pi) ** 2  # period 1
    sys = MechanicalSystem(M=np.eye(1), C=np.zeros((1, 1)),
                           K=k * np.eye(1),
                           nonlinearity=PolynomialMap.zero(2, 1))
    cfg = IntegratorConfig(dt=0.01)
    n_steps = 10_000  # 100 periods
    traj = newmark_integrate(sys, np.zeros((n_steps, 1)),
                             np.array([1.0]), np.array([0.0]), cfg)
    q = traj.column("q0")
    v = traj.column("v0")
    energy = 0.5 * v ** 2 + 0.5 * k * q ** 2
    drift = np.max(np.abs(energy - energy[0])) / energy[0]
    assert drift < 1e-9


def test_static_limit_holds_equilibrium():
    sys = duffing_system()
    g = 0.3
    # equilibrium of k q + kappa q^3 = g
    q_star = np.roots([0.5, 0.0, 1.0, -g])
    q_star = float(q_star[np.isreal(q_star)].real[0])
    cfg = IntegratorConfig(dt=0.05)
    force = np.full((200, 1), g)
    traj = newmark_integrate(sys, force, np.array([q_star]),
                             np.array([0.0]), cfg)
    assert np.max(np.abs(traj.column("q0") - q_star)) < 1e-10
    assert np.max(np.abs(traj.column("v0"))) < 1e-10


def test_newmark_tracks_adaptive_reference():
    sys = duffing_system()
    T = 10.0
    cfg = IntegratorConfig(dt=1e-3)
    traj = newmark_integrate(sys, np.zeros((10_000, 1)),
                             np.array([1.0]), np.array([0.0]), cfg)
    sol = duffing_reference(T)
    err = abs(traj.column("q0")[-1] - sol.sol(T)[0])
    assert err < 5e-6


def test_newmark_second_order_convergence():
    sys = duffing_system()
    T = 2.0
    sol = duffing_reference(T)
    ref = sol.sol(T)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        n = int(round(T / dt))
        cfg = IntegratorConfig(dt=dt)
        traj = newmark_integrate(sys, np.zeros((n, 1)),
                                 np.array([1.0]), np.array([0.0]), cfg)
        errs.append(np.hypot(traj.column("q0")[-1] - ref[0],
                             traj.column("v0")[-1] - ref[1]))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def rotation_block(rate, freq):
    return np.array([[rate, -freq], [freq, rate]])


def linear_two_pair_system():
    A = np.zeros((4, 4))
    A[:2, :2] = rotation_block(-0.1, 2.0)
    A[2:, 2:] = rotation_block(-1.0, 10.0)
    return FirstOrderSystem(mech=None, dim=4, A=A,
                            F=PolynomialMap.zero(4, 4))


def test_rk4_matches_matrix_exponential():
    # autonomous linear flow: RK4 against the exact propagator
    fos = linear_two_pair_system()
    spec = compute_spectrum(fos.A)
    sub = slow_subspace(spec, 1)
    expansion = compute_autonomous_ssm(fos, sub, order=3)
    T_slow = 2.0 * np.pi / 2.0
    dt = T_slow / 400.0
    T = 4000 * dt  # ten slow periods
    noise = NoiseRealization(dt=dt, samples=np.zeros(4001),
                             declared_bound=0.0, method="psd")
    model = RandomReducedModel(expansion, noise, np.zeros(4), epsilon=0.0)
    xi0 = np.array([0.3, -0.2])
    traj = rk4_reduced_integrate(model, xi0, T, dt)
    exact = expm(sub.AE * T) @ xi0
    err = np.linalg.norm(traj.states[-1] - exact)
    assert err < 1e-8


def test_rk4_grid_guards():
    fos = linear_two_pair_system()
    spec = compute_spectrum(fos.A)
    sub = slow_subspace(spec, 1)
    expansion = compute_autonomous_ssm(fos, sub, order=3)
    noise = NoiseRealization(dt=0.1, samples=np.zeros(50),
                             declared_bound=0.0, method="psd")
    model = RandomReducedModel(expansion, noise, np.zeros(4), epsilon=0.0)
    with pytest.raises(ValueError, match="integer number of steps"):
        rk4_reduced_integrate(model, np.zeros(2), T=1.05, dt=0.1)
    with pytest.raises(ValueError, match="noise grid"):
        rk4_reduced_integrate(model, np.zeros(2), T=0.9, dt=0.03)
    with pytest.raises(DimensionMismatch):
        rk4_reduced_integrate(model, np.zeros(3), T=1.0, dt=0.1)


def test_rk4_h1_columns(quarter_car_ssm):
    fos, sub, expansion = quarter_car_ssm
    rng = np.random.default_rng(4)
    samples = rng.uniform(-1.0, 1.0, 11)
    noise = NoiseRealization(dt=0.1, samples=samples, declared_bound=1.0,
                             method="psd")
    g = rng.standard_normal(sub.dim)
    model = RandomReducedModel(expansion, noise, g, epsilon=0.3,
                               include_h1=True, fos=fos)
    traj = rk4_reduced_integrate(model, np.zeros(sub.d), T=1.0, dt=0.1)
    assert traj.labels == ("xi0", "xi1", "w0", "w1", "w2", "w3")
    assert traj.states.shape == (11, 6)
    assert_allclose(traj.states[0, 2:], 0.0)
    # the correction state must move once the forcing has fast content
    assert np.max(np.abs(traj.states[-1, 2:])) > 0.0


def test_cocycle_defect_is_zero_full(quarter_car_fos):
    sys = make_model("quarter-car").system
    shape = np.array([1.0, 0.0])
    cfg = IntegratorConfig(dt=0.01)
    advance = newmark_advancer(sys, shape, epsilon=1.2, cfg=cfg)
    rng = np.random.default_rng(8)
    samples = rng.uniform(-1.0, 1.0, 60)
    q0 = np.array([0.01, -0.02])
    v0 = np.zeros(2)
    a0 = np.zeros(2)
    for i_split in (1, 17, 30, 59):
        assert cocycle_check(advance, (q0, v0, a0), samples, i_split) == 0.0


def test_cocycle_defect_is_zero_coupled():
    sys = make_model("quarter-car").system
    shape = np.array([1.0, 0.0])
    cfg = IntegratorConfig(dt=0.01)
    fcfg = FilterConfig(m=5.0, c=100.0, k=20.0)
    advance = coupled_advancer(sys, fcfg, cfg, shape=shape, epsilon=0.8,
                               reflect=True)
    rng = np.random.default_rng(12)
    inc = draw_increments(fcfg, 60, 0.01, rng)
    state0 = (np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2))
    for i_split in (5, 30, 55):
        assert cocycle_check(advance, state0, inc, i_split) == 0.0


def test_cocycle_defect_is_zero_reduced(quarter_car_ssm):
    fos, sub, expansion = quarter_car_ssm
    rng = np.random.default_rng(15)
    gxi = sub.VE_L @ rng.standard_normal(sub.dim)
    advance = reduced_advancer(expansion, gxi, epsilon=0.5, dt=0.01)
    samples = rng.uniform(-1.0, 1.0, 80)
    xi0 = np.array([0.02, -0.01])
    for i_split in (3, 40, 77):
        assert cocycle_check(advance, xi0, samples, i_split) == 0.0


def test_cocycle_check_split_bounds(quarter_car_ssm):
    _, sub, expansion = quarter_car_ssm
    advance = reduced_advancer(expansion, np.zeros(sub.d), epsilon=0.0,
                               dt=0.01)
    samples = np.zeros(4)
    with pytest.raises(ValueError):
        cocycle_check(advance, np.zeros(sub.d), samples, 5)
    assert cocycle_check(advance, np.zeros(sub.d), samples, 0) == 0.0
    assert cocycle_check(advance, np.zeros(sub.d), samples, 4) == 0.0


def test_newton_divergence_reports_location():
    sys = make_model("quarter-car").system
    cfg = IntegratorConfig(dt=0.01, max_newton_iter=1, newton_tol=1e-14)
    force = np.zeros((10, 2))
    force[:, 0] = 5e4  # large enough that one iteration cannot finish
    with pytest.raises(NewtonDivergence) as info:
        newmark_integrate(sys, force, np.zeros(2), np.zeros(2), cfg)
    assert info.value.step_index == 0
    assert info.value.member == 0


def test_coupled_run_splits_exactly():
    sys = make_model("quarter-car").system
    fcfg = FilterConfig(m=5.0, c=100.0, k=20.0)
    cfg = IntegratorConfig(dt=0.01)
    shape = np.array([1.0, 0.0])
    rng = np.random.default_rng(21)
    inc = draw_increments(fcfg, 50, 0.01, rng)
    whole = coupled_implicit_integrate(sys, fcfg, inc, np.zeros(2),
                                       np.zeros(2), cfg, shape=shape,
                                       epsilon=0.9, reflect=True)
    first = coupled_implicit_integrate(sys, fcfg, inc[:20], np.zeros(2),
                                       np.zeros(2), cfg, shape=shape,
                                       epsilon=0.9, reflect=True)
    second = coupled_implicit_integrate(
        sys, fcfg, inc[20:], first.states[-1, :2], first.states[-1, 2:4],
        cfg, shape=shape, epsilon=0.9, reflect=True,
        filter_state0=first.metadata["final_filter_state"],
        a0=first.metadata["final_acceleration"])
    glued = np.concatenate([first.states[:-1], second.states])
    assert np.array_equal(glued, whole.states)
    assert whole.labels == ("q0", "q1", "v0", "v1", "theta")
    # the theta column is the reflected filter output driving the force
    outputs = filter_path(fcfg, inc, 0.01, reflect=True)
    assert np.array_equal(whole.column("theta"), outputs)


def test_trajectory_validation_and_csv(tmp_path):
    times = np.array([0.0, 0.1, 0.2])
    states = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    traj = Trajectory(times, states, ("q0", "v0"), {"scheme": "test"})
    assert traj.dt == pytest.approx(0.1)
    assert_allclose(traj.column("v0"), [2.0, 4.0, 6.0])
    with pytest.raises(KeyError):
        traj.column("nope")
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.1, 0.35]), states, ("q0", "v0"))
    with pytest.raises(LengthMismatch):
        Trajectory(times, states, ("q0",))
    with pytest.raises(LengthMismatch):
        Trajectory(times[:2], states, ("q0", "v0"))

    out = tmp_path / "traj.csv"
    write_trajectory_csv(out, traj)
    lines = out.read_text().splitlines()
    assert lines[0] == "t,q0,v0"
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert_allclose(data[:, 0], times)
    assert_allclose(data[:, 1:], states)
