import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mrigark.integrators import (
    InnerSolverConfig,
    InnerSolverError,
    NewtonConfig,
    NewtonError,
    PartitionedSystem,
    StepFailure,
    StepStats,
    dirk_step,
    fd_jacobian,
    inner_solve,
    integrate,
    ipc_step,
    newton_solve_stage,
    spc_step,
)
from mrigark.methods import BASE_TABLEAUS, available_methods, registry_lookup
from mrigark.problems import KprConfig, gray_scott, gray_scott_initial, GrayScottConfig, kpr
from mrigark.stability import scalar_R
from mrigark.tableaux import ButcherTableau

SPC = [n for n in available_methods() if n.startswith("SPC")]
IPC = [n for n in available_methods() if n.startswith("IPC")]
TIGHT = InnerSolverConfig(abs_tol=1e-13, rel_tol=1e-13)
zero = lambda t, y: np.zeros_like(y)


def step(s, sys, t, y, H, cfg=TIGHT, newton=None):
    fn = spc_step if s.family == "SPC" else ipc_step
    return fn(s, sys, t, y, H, cfg, newton, embedded=False)


def smooth_system(seed, d=3):
    """Random nonlinear, non-autonomous right-hand side."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, (d, d)) - 2 * np.eye(d)
    b = rng.uniform(-1, 1, (d, d))
    c = rng.uniform(-1, 1, d)
    f = lambda t, y: a @ y + 0.3 * np.sin(b @ y) + math.cos(t) * c
    return f, rng.uniform(-1, 1, d)


def dahlquist(lf, ls):
    return PartitionedSystem(1, lambda t, y: lf * y, lambda t, y: ls * y)


# -- Newton ------------------------------------------------------------------------------------


def test_newton_linear_residual_one_iteration():
    c = np.array([1.0, -2.0, 3.0])
    stats = StepStats()
    y = newton_solve_stage(lambda y: y - c, np.zeros(3), lambda r: r, stats=stats)
    np.testing.assert_allclose(y, c)
    assert stats.newton_iterations == 1


def test_newton_scalar_stage_closed_form():
    # Y = y + h lam a Y with y = 1, h lam a = -0.5
    y = newton_solve_stage(lambda Y: Y - 1.0 + 0.5 * Y, np.array([1.0]), lambda r: r / 1.5)
    assert y[0] == pytest.approx(2 / 3, abs=1e-14)


def test_newton_reports_non_convergence():
    with pytest.raises(NewtonError) as info:
        newton_solve_stage(lambda y: y**2 + 1.0, np.array([0.5]), lambda r: r / 10.0, max_iter=5)
    assert info.value.residual > 0
    assert "did not converge" in str(info.value)


def test_newton_kpr_first_stage():
    sys = kpr()
    s = registry_lookup("SPC-SDIRK2(1)2")
    y0 = sys.exact_solution(0.0)
    h = 0.01 * s.base.a[0, 0]
    f = sys.rhs
    m = np.eye(2) - h * sys.jac(0.0, y0)
    stats = StepStats()
    resid = lambda Y: Y - y0 - h * f(s.base.c[0] * 0.01, Y)
    Y = newton_solve_stage(resid, y0, lambda r: np.linalg.solve(m, r), tol=1e-12, stats=stats)
    assert np.max(np.abs(resid(Y))) < 1e-12
    assert stats.newton_iterations <= 6


def test_fd_jacobian_matches_analytic():
    sys = kpr()
    y = np.array([1.7, 1.4])
    np.testing.assert_allclose(fd_jacobian(sys.rhs, 0.3, y), sys.jac(0.3, y), atol=1e-6)


# -- inner solver ------------------------------------------------------------------------------


@pytest.mark.parametrize("mode", ["adaptive", "fixed", "implicit"])
def test_inner_zero_rhs(mode):
    v0 = np.array([1.0, -2.0])
    res = inner_solve(zero, v0, 3.0, InnerSolverConfig(mode=mode))
    np.testing.assert_array_equal(res.v, v0)


def test_inner_zero_length():
    res = inner_solve(lambda t, v: -v, np.array([2.0]), 0.0)
    assert res.v[0] == 2.0 and res.steps == 0
    with pytest.raises(ValueError):
        inner_solve(lambda t, v: -v, np.array([2.0]), -1.0)


def test_inner_exponential_decay():
    res = inner_solve(lambda t, v: -v, np.array([1.0]), 1.0)
    assert abs(res.v[0] - math.exp(-1)) < 1e-9


def test_inner_fixed_mode_fifth_order():
    errs = []
    for n in (4, 8):
        res = inner_solve(lambda t, v: -v, np.array([1.0]), 1.0, InnerSolverConfig(mode="fixed", substeps=n))
        assert res.steps == n
        errs.append(abs(res.v[0] - math.exp(-1)))
    assert 4.5 < math.log2(errs[0] / errs[1]) < 5.5


def test_inner_implicit_mode_fourth_order():
    cfg = lambda n: InnerSolverConfig(mode="implicit", substeps=n)
    rhs = lambda t, v: -v + math.sin(t)
    exact = oracles._ode(rhs, np.array([1.0]), 2.0)
    errs = [abs(inner_solve(rhs, np.array([1.0]), 2.0, cfg(n)).v[0] - exact[0]) for n in (8, 16)]
    assert 3.5 < math.log2(errs[0] / errs[1]) < 4.6


def test_inner_implicit_unknown_method():
    with pytest.raises(ValueError, match="available"):
        inner_solve(lambda t, v: -v, np.array([1.0]), 1.0, InnerSolverConfig(mode="implicit", implicit_method="X"))


def test_inner_non_finite_rhs():
    with pytest.raises(InnerSolverError):
        inner_solve(lambda t, v: np.full_like(v, np.nan), np.array([1.0]), 1.0)


def test_inner_step_size_underflow():
    # finite at the start, then non-finite beyond theta = 0.5: the step shrinks until it underflows
    rhs = lambda t, v: -v if t < 0.5 else np.full_like(v, np.inf)
    with pytest.raises(InnerSolverError) as info:
        inner_solve(rhs, np.array([1.0]), 1.0)
    assert 0.0 < info.value.theta <= 0.5


@given(st.integers(0, 10_000), st.floats(0.1, 3.0))
@settings(max_examples=15)
def test_inner_matches_solve_ivp(seed, length):
    f, v0 = smooth_system(seed)
    ours = inner_solve(f, v0, length, InnerSolverConfig(abs_tol=1e-12, rel_tol=1e-12)).v
    np.testing.assert_allclose(ours, oracles._ode(f, v0, length), atol=1e-10)


def test_inner_corrector_dahlquist_matches_stability_function():
    """Hand-built SPC-SDIRK2(1)2 corrector: v' = lf v + sum_j gamma_j(theta/H) ls Y_j."""
    s = registry_lookup("SPC-SDIRK2(1)2")
    lf, ls, H = -2.0, -1.0, 0.1
    z = (lf + ls) * H
    a = s.base.a
    y1 = 1.0 / (1 - z * a[0, 0])
    y2 = (1.0 + z * a[1, 0] * y1) / (1 - z * a[1, 1])
    g = s.gamma.coeffs[:, 0, :]
    rhs = lambda th, v: lf * v + ls * oracles.poly_at(g, th / H) @ np.array([y1, y2])
    v = inner_solve(rhs, np.array([1.0]), H, TIGHT).v[0]
    assert abs(v - scalar_R(s, lf * H, ls * H)) < 1e-9


def test_inner_config_validation():
    with pytest.raises(ValueError):
        InnerSolverConfig(mode="bogus")
    with pytest.raises(ValueError):
        InnerSolverConfig(abs_tol=0.0)
    with pytest.raises(ValueError):
        InnerSolverConfig(substeps=0)


# -- single-rate DIRK ----------------------------------------------------------------------------


def test_dirk_dahlquist_matches_rational_function():
    t = BASE_TABLEAUS["SDIRK2(1)2"]
    y = dirk_step(t, lambda t_, y_: -y_, 0.0, np.array([1.0]), 0.1).y_next[0]
    assert abs(y - oracles.rk_stability_det(t.a, t.b, -0.1).real) < 1e-12


def test_dirk_zero_step_and_constant_rhs():
    t = BASE_TABLEAUS["ESDIRK4(3)6"]
    y = np.array([0.5, 2.0])
    np.testing.assert_array_equal(dirk_step(t, lambda *_: np.ones(2), 0.0, y, 0.0).y_next, y)
    for name, tab in BASE_TABLEAUS.items():
        out = dirk_step(tab, lambda *_: np.ones(2), 0.0, y, 0.37).y_next
        np.testing.assert_allclose(out, y + 0.37, atol=1e-14)


def test_dirk_rejects_fully_implicit():
    gauss = ButcherTableau(a=[[0.25, 0.25 - math.sqrt(3) / 6], [0.25 + math.sqrt(3) / 6, 0.25]],
                           b=[0.5, 0.5], c=[0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6])
    with pytest.raises(ValueError, match="fully implicit"):
        dirk_step(gauss, lambda t, y: -y, 0.0, np.array([1.0]), 0.1)


def test_dirk_explicit_tableau():
    heun = ButcherTableau(a=[[0, 0], [1, 0]], b=[0.5, 0.5], c=[0, 1])
    y = dirk_step(heun, lambda t, y: -y, 0.0, np.array([1.0]), 0.1).y_next[0]
    assert y == pytest.approx(1 - 0.1 + 0.005, abs=1e-15)


@given(st.integers(0, 10_000), st.sampled_from(list(BASE_TABLEAUS)))
@settings(max_examples=12)
def test_dirk_matches_coupled_oracle(seed, name):
    f, y = smooth_system(seed)
    tab = BASE_TABLEAUS[name]
    ours = dirk_step(tab, f, 0.2, y, 0.3, newton=NewtonConfig(tol=1e-14)).y_next
    ref, _ = oracles.rk_step(tab.a, tab.b, tab.c, f, 0.2, y, 0.3)
    np.testing.assert_allclose(ours, ref, atol=1e-11)


def test_dirk_embedded_solution():
    heun_euler = ButcherTableau(a=[[0, 0], [1, 0]], b=[0.5, 0.5], c=[0, 1], b_hat=[1.0, 0.0])
    res = dirk_step(heun_euler, lambda t, y: -y, 0.0, np.array([1.0]), 0.2)
    assert res.y_embedded[0] == pytest.approx(0.8, abs=1e-15)
    assert res.embedded_error == pytest.approx(0.02, abs=1e-15)
    assert dirk_step(heun_euler, lambda t, y: -y, 0.0, np.array([1.0]), 0.2, embedded=False).y_embedded is None


# -- multirate steps ---------------------------------------------------------------------------------


@given(st.integers(0, 10_000), st.sampled_from(available_methods()), st.floats(0.05, 0.5))
@settings(max_examples=30)
def test_degeneration_to_base_method(seed, name, H):
    f, y = smooth_system(seed)
    s = registry_lookup(name)
    sys = PartitionedSystem(y.size, zero, f)
    ours = step(s, sys, 0.1, y, H, InnerSolverConfig()).y_next
    base = dirk_step(s.base, f, 0.1, y, H).y_next
    np.testing.assert_allclose(ours, base, atol=1e-10)
    ref, _ = oracles.rk_step(s.base.a, s.base.b, s.base.c, f, 0.1, y, H)
    np.testing.assert_allclose(ours, ref, atol=1e-10)


@pytest.mark.parametrize("name", SPC)
def test_spc_without_slow_part_is_pure_fast_solve(name):
    f, y = smooth_system(7)
    s = registry_lookup(name)
    sys = PartitionedSystem(y.size, f, zero)
    ours = spc_step(s, sys, 0.0, y, 0.4, embedded=False).y_next
    direct = inner_solve(f, y, 0.4).v
    np.testing.assert_allclose(ours, direct, atol=1e-14)


@pytest.mark.parametrize("name", available_methods())
def test_step_matches_oracle_on_kpr(name):
    """Nonlinear, non-autonomous, component-partitioned step against the defining equations."""
    sys = kpr()
    s = registry_lookup(name)
    t, H = 0.3, 0.05
    y = sys.exact_solution(t) * np.array([1.01, 0.99])
    ours = step(s, sys, t, y, H, newton=NewtonConfig(tol=1e-14)).y_next
    ref_fn = oracles.spc_step if s.family == "SPC" else oracles.ipc_step
    ref = ref_fn(s, sys.fast_rhs, sys.slow_rhs, t, y, H)
    np.testing.assert_allclose(ours, ref, atol=1e-10)


@given(st.integers(0, 10_000), st.sampled_from(available_methods()))
@settings(max_examples=10)
def test_step_matches_oracle_on_additive_split(seed, name):
    f, y = smooth_system(seed)
    rng = np.random.default_rng(seed + 1)
    lam = -rng.uniform(2, 8, y.size)
    fast = lambda t, v: lam * v + 0.5 * np.sin(v)
    s = registry_lookup(name)
    sys = PartitionedSystem(y.size, fast, f)
    ours = step(s, sys, 0.0, y, 0.2, newton=NewtonConfig(tol=1e-14)).y_next
    ref_fn = oracles.spc_step if s.family == "SPC" else oracles.ipc_step
    np.testing.assert_allclose(ours, ref_fn(s, fast, f, 0.0, y, 0.2), atol=1e-10)


@given(st.floats(-5, 0), st.floats(-5, 0), st.sampled_from(available_methods()))
@settings(max_examples=50)
def test_dahlquist_split_matches_stability_function(zf, zs, name):
    s = registry_lookup(name)
    cfg = InnerSolverConfig(abs_tol=1e-10, rel_tol=1e-10)
    y = step(s, dahlquist(zf, zs), 0.0, np.array([1.0]), 1.0, cfg).y_next[0]
    assert abs(y - scalar_R(s, zf, zs)) < 1e-9


def test_spc_dahlquist_example():
    s = registry_lookup("SPC-SDIRK2(1)2")
    y = spc_step(s, dahlquist(-10.0, -1.0), 0.0, np.array([1.0]), 0.1, TIGHT).y_next[0]
    assert abs(y - scalar_R(s, -1.0, -0.1)) < 1e-10


def test_ipc_repeated_abscissa_skips_inner_solve():
    s = registry_lookup("IPC-SDIRK3(2)5")
    cfg = InnerSolverConfig(mode="fixed", substeps=7)
    res = ipc_step(s, dahlquist(-1.0, -0.5), 0.0, np.array([1.0]), 0.1, cfg, embedded=False)
    assert np.count_nonzero(s.delta_c) == 3
    assert res.stats.inner_steps == 7 * 3


@pytest.mark.parametrize("name", ["SPC-SDIRK2(1)2", "IPC-SDIRK3(2)5"])
def test_embedded_solution_is_close(name):
    s = registry_lookup(name)
    sys = kpr()
    y = sys.exact_solution(0.0)
    res = step(s, sys, 0.0, y, 0.01)
    fn = spc_step if s.family == "SPC" else ipc_step
    res = fn(s, sys, 0.0, y, 0.01, TIGHT, embedded=True)
    assert res.y_embedded is not None
    assert 0 < res.embedded_error < 1e-3


def test_component_partition_matches_additive_form():
    """The masked corrector (slow components in closed form) equals a full-state solve."""
    sys = kpr()
    unmasked = PartitionedSystem(2, sys.fast_rhs, sys.slow_rhs, fast_jac=sys.fast_jac, slow_jac=sys.slow_jac)
    y = sys.exact_solution(0.0)
    for name in ("SPC-SDIRK3(2)4", "IPC-SDIRK4(3)6"):
        s = registry_lookup(name)
        a = step(s, sys, 0.0, y, 0.1).y_next
        b = step(s, unmasked, 0.0, y, 0.1).y_next
        np.testing.assert_allclose(a, b, atol=1e-11)


def test_mask_shape_validation():
    with pytest.raises(ValueError):
        PartitionedSystem(3, zero, zero, fast_mask=[True, False])


# -- driver -------------------------------------------------------------------------------------------


def test_integrate_empty_span():
    sys = kpr()
    res = integrate("SPC-SDIRK2(1)2", sys, (1.0, 1.0), np.array([2.0, 1.5]), 0.1)
    np.testing.assert_array_equal(res.y_final, [2.0, 1.5])
    assert res.stats.newton_iterations == 0


def test_integrate_shortens_last_step():
    res = integrate(BASE_TABLEAUS["SDIRK2(1)2"], PartitionedSystem(1, zero, lambda t, y: np.ones(1)),
                    (0.0, 1.0), np.zeros(1), 0.3)
    np.testing.assert_allclose(res.t, [0.0, 0.3, 0.6, 0.9, 1.0])
    assert res.y_final[0] == pytest.approx(1.0, abs=1e-14)
    assert len(res.embedded_errors) == 4


def test_integrate_rejects_bad_H():
    with pytest.raises(ValueError):
        integrate("SPC-SDIRK2(1)2", kpr(), (0, 1), np.array([2.0, 1.7]), 0.0)


def test_integrate_reports_failing_step():
    def slow(t, y):
        return -y if t < 0.25 else np.full_like(y, np.nan)

    with pytest.raises(StepFailure) as info:
        integrate("SPC-SDIRK2(1)2", PartitionedSystem(1, zero, slow), (0.0, 1.0), np.ones(1), 0.1)
    assert info.value.step == 2
    assert info.value.t == pytest.approx(0.2)


def test_integrate_accepts_names_and_objects():
    sys = kpr()
    y0 = sys.exact_solution(0.0)
    a = integrate("IPC-SDIRK2(1)2", sys, (0, 0.5), y0, 0.1).y_final
    b = integrate(registry_lookup("IPC-SDIRK2(1)2"), sys, (0, 0.5), y0, 0.1).y_final
    np.testing.assert_array_equal(a, b)
    c = integrate("SDIRK2(1)2", sys, (0, 0.5), y0, 0.1).y_final
    np.testing.assert_array_equal(c, integrate(BASE_TABLEAUS["SDIRK2(1)2"], sys, (0, 0.5), y0, 0.1).y_final)


def test_integrate_is_deterministic():
    sys = kpr()
    y0 = sys.exact_solution(0.0)
    r1 = integrate("SPC-SDIRK3(2)4", sys, (0, 1), y0, 0.05)
    r2 = integrate("SPC-SDIRK3(2)4", sys, (0, 1), y0, 0.05)
    np.testing.assert_array_equal(r1.y, r2.y)
    assert r1.stats == r2.stats
    assert all(v >= 0 for v in r1.stats.to_dict().values())


def test_kpr_second_order_error_ratio():
    sys = kpr()
    cfg = KprConfig()
    T = cfg.t_final
    y0 = sys.exact_solution(0.0)
    errs = []
    for n in (800, 1600):
        y = integrate("SPC-SDIRK2(1)2", sys, (0, T), y0, T / n, store=False, embedded=False).y_final
        errs.append(np.linalg.norm(y - sys.exact_solution(T)))
    assert 3.4 < errs[0] / errs[1] < 4.6


def test_gray_scott_stays_bounded():
    cfg = GrayScottConfig(n=16)
    sys = gray_scott(cfg)
    res = integrate("SPC-SDIRK2(1)2", sys, (0.0, 30.0), gray_scott_initial(cfg), 0.3, store=True,
                    embedded=False)
    assert len(res.t) == 101
    assert np.all(res.y >= 0.0) and np.all(res.y <= 1.5)
