import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gammareg.errors import InvalidInputError, MethodMismatchError, UnsupportedError
from gammareg.gamma_space import (StepFunction, TimeGrid, apply_multiplier, fourier,
                                  frequency_lattice, gamma_bound_estimate, gamma_norm,
                                  gamma_norm_gram, gamma_norm_hilbert, gamma_norm_mc,
                                  gamma_norm_sqfn, gamma_s_norm, hardy_check, indicator,
                                  integrate, inverse_fourier, refine, restrict, uniform_grid)
from gammareg.space_model import SpaceModel

E1 = np.array([1.0, 0.0, 0.0])


def random_step(seed, n=4, N=8, q=2.0, t0=0.0):
    g = np.random.default_rng(seed)
    knots = np.concatenate([[t0], t0 + np.cumsum(g.uniform(0.1, 1.0, N))])
    return StepFunction(TimeGrid(knots), g.standard_normal((N, n)), SpaceModel(n, q))


# grids

def test_grid_must_increase():
    with pytest.raises(InvalidInputError):
        TimeGrid([0.0, 1.0, 1.0])


def test_dt_over_t_needs_positive_start():
    with pytest.raises(InvalidInputError):
        TimeGrid([0.0, 1.0], "dt_over_t")
    g = TimeGrid([1.0, math.e], "dt_over_t")
    assert g.measures()[0] == pytest.approx(1.0)


def test_power_weight_measure():
    g = TimeGrid([1.0, 2.0], "power(2)")
    assert g.measures()[0] == pytest.approx(7.0 / 3.0)
    assert TimeGrid(g.knots, g.weight) == g


def test_value_count_checked():
    with pytest.raises(InvalidInputError):
        StepFunction(uniform_grid(1.0, 3), np.ones((2, 2)))


# exact Hilbert norm

def test_unit_indicator():
    assert gamma_norm_hilbert(indicator(0, 1, E1)).value == 1.0


def test_long_indicator():
    assert gamma_norm_hilbert(indicator(0, 4, E1)).value == pytest.approx(2.0)


def test_hilbert_matches_loop_oracle():
    f = random_step(3)
    total = 0.0
    for i in range(f.grid.n_intervals):
        total += (f.grid.knots[i + 1] - f.grid.knots[i]) * float(np.dot(f.values[i], f.values[i]))
    assert gamma_norm_hilbert(f).value == pytest.approx(math.sqrt(total), rel=1e-13)


def test_hilbert_refuses_other_q():
    with pytest.raises(MethodMismatchError):
        gamma_norm_hilbert(random_step(0, q=1.0))


# Monte Carlo

def test_mc_zero_function():
    f = StepFunction(uniform_grid(1, 2), np.zeros((2, 3)))
    est = gamma_norm_mc(f, 256)
    assert est.value == 0.0 and est.stderr == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_mc_agrees_with_exact(seed):
    f = random_step(seed)
    est = gamma_norm_mc(f, 4096, seed)
    assert est.stderr > 0
    assert abs(est.value - gamma_norm_hilbert(f).value) <= 3 * est.stderr


def test_mc_l1_two_steps():
    f = StepFunction(uniform_grid(2.0, 2), np.eye(2), SpaceModel(2, 1.0))
    exact = math.sqrt(2 + 4 / math.pi)
    # independent oracle: plain numpy Monte Carlo from a different generator
    z = np.random.default_rng(987654).standard_normal((2_000_000, 2))
    oracle = math.sqrt(np.mean(np.sum(np.abs(z), axis=1) ** 2))
    assert oracle == pytest.approx(exact, rel=2e-3)
    est = gamma_norm_mc(f, 65536, 1)
    assert abs(est.value - exact) <= 4 * est.stderr
    # (2 + 4/pi)^(1/2) = 1.8092096...
    assert exact == pytest.approx(1.80921, abs=1e-5)


def test_mc_needs_two_samples():
    with pytest.raises(InvalidInputError):
        gamma_norm_mc(indicator(0, 1, E1), 1)


def test_mc_reproducible_and_prefix_stable():
    f = random_step(1, q=3.0)
    a = gamma_norm_mc(f, 640, 5)
    b = gamma_norm_mc(f, 640, 5)
    assert a == b


# square function

def test_sqfn_hilbert_equals_exact():
    f = random_step(2)
    assert gamma_norm_sqfn(f).value == pytest.approx(gamma_norm_hilbert(f).value, rel=1e-14)


def test_sqfn_l1_two_steps():
    f = StepFunction(uniform_grid(2.0, 2), np.eye(2), SpaceModel(2, 1.0))
    assert gamma_norm_sqfn(f).value == pytest.approx(2.0)


@pytest.mark.parametrize("q", [1.0, 1.5, 3.0, 6.0])
def test_sqfn_single_step(q):
    assert gamma_norm_sqfn(indicator(0, 1, E1, SpaceModel(3, q))).value == pytest.approx(1.0)


def test_sqfn_refuses_linf():
    with pytest.raises(UnsupportedError):
        gamma_norm_sqfn(indicator(0, 1, E1, SpaceModel(3, math.inf)))


@pytest.mark.parametrize("q", [1.0, 1.5, 3.0, 4.0])
@pytest.mark.parametrize("seed", range(3))
def test_khintchine_bracket(q, seed):
    # ratio MC / sqfn from Gaussian moments: [sqrt(2/pi), 1] for q = 1, up to 3^(1/4) for q <= 4
    f = random_step(seed, n=5, q=q)
    r = gamma_norm_mc(f, 8192, seed).value / gamma_norm_sqfn(f).value
    lo = math.sqrt(2 / math.pi)
    hi = 1.0 if q == 1.0 else 3 ** 0.25
    assert lo * 0.98 <= r <= hi * 1.02


# multipliers, restriction, integration

def test_identity_multiplier():
    f = random_step(0)
    assert np.array_equal(apply_multiplier(np.eye(4), f).values, f.values)


def test_sign_multiplier_preserves_norm():
    f = random_step(4)
    signs = np.random.default_rng(0).choice([-1.0, 1.0], size=(8, 4))
    M = np.stack([np.diag(s) for s in signs])
    assert gamma_norm(apply_multiplier(M, f)).value == pytest.approx(gamma_norm(f).value, rel=1e-14)


def test_integrate_indicator():
    assert np.allclose(integrate(indicator(0, 1, E1), [(0, 1)]), E1)


def test_restrict_empty():
    f = random_step(0)
    assert not np.any(restrict(f, []).values)


def test_exhaustion():
    f = random_step(5)
    T = f.grid.knots[-1]
    errs = [gamma_norm(restrict(f, [(T / n, T - T / n)]) - refine(f, [T / n, T - T / n])).value
            for n in (4, 16, 64, 256, 1024, 4096)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 0.05 * errs[0]


def test_restrict_bad_interval():
    with pytest.raises(InvalidInputError):
        restrict(random_step(0), [(1.0, 0.5)])


# Fourier

def test_fourier_at_zero_and_closed_form():
    f = indicator(0, 1, [1.0])
    lat = frequency_lattice(f.grid, 40)
    fh = fourier(f, lat)
    xi = lat.midpoints
    exact = np.where(xi == 0, 1.0, (1 - np.exp(-1j * xi)) / (1j * np.where(xi == 0, 1, xi)))
    assert np.allclose(fh.values[:, 0], exact, atol=1e-13)
    zero = fourier(f, TimeGrid([-0.5, 0.5], domain="frequency"))
    assert zero.values[0, 0] == pytest.approx(1.0)


def test_plancherel():
    f = random_step(6, n=2, N=6)
    fh = fourier(f, frequency_lattice(f.grid, 4000))
    ratio = gamma_norm(fh).value / gamma_norm(f).value
    assert ratio == pytest.approx(math.sqrt(2 * math.pi), rel=2e-3)


def test_fourier_round_trip():
    f = random_step(7, n=3, N=5)
    back = inverse_fourier(fourier(f, frequency_lattice(f.grid, 600)), f.grid)
    assert np.allclose(back.values, f.values, atol=1e-8)


def test_gamma_s_zero_equals_norm():
    f = random_step(8, n=2, N=6)
    lat = frequency_lattice(f.grid, 4000)
    assert gamma_s_norm(f, 0, lat).value == pytest.approx(gamma_norm(f).value, rel=2e-3)


def test_gamma_s_sobolev_bump():
    g = uniform_grid(16.0, 1600)
    f = StepFunction(g, np.exp(-(g.midpoints - 8) ** 2 / 2)[:, None])
    lat = frequency_lattice(g, 100)
    # H^1 norm of exp(-t^2/2): int f^2 = sqrt(pi), int f'^2 = sqrt(pi)/2
    assert gamma_s_norm(f, 1, lat).value == pytest.approx(math.sqrt(1.5 * math.sqrt(math.pi)),
                                                          rel=1e-5)
    assert gamma_s_norm(f, 1, lat).value >= gamma_s_norm(f, 0, lat).value


def test_gamma_s_range():
    with pytest.raises(InvalidInputError):
        gamma_s_norm(random_step(0), 3.0)


# Hardy

def test_hardy_zero():
    f = StepFunction(uniform_grid(1, 2), np.zeros((2, 1)))
    assert hardy_check(f, 0.5) == (0.0, 0.0)


def test_hardy_scalar_example():
    lhs, rhs = hardy_check(indicator(0, 1, [1.0]), 0.5)
    assert lhs == pytest.approx(math.sqrt(2), abs=1e-6)
    assert rhs == pytest.approx(2.0, abs=1e-6)


def hardy_quadrature(f, alpha):
    # direct quadrature of the left side on a fine log grid plus the tail
    s = np.logspace(-9, math.log10(f.grid.knots[-1]), 200001)
    k = f.grid.knots
    cum = np.concatenate([[0.0], np.cumsum(f.values[:, 0] * np.diff(k))])
    F = np.interp(s, k, cum)
    g = s ** (-2 * alpha - 1) * F ** 2 * s
    body = np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(np.log(s)))
    tail = cum[-1] ** 2 * k[-1] ** (-2 * alpha) / (2 * alpha)
    return math.sqrt(body + tail)


@pytest.mark.parametrize("alpha", [0.25, 0.5])
def test_hardy_against_quadrature(alpha):
    f = random_step(9, n=1, N=6)
    lhs, _ = hardy_check(f, alpha)
    assert lhs == pytest.approx(hardy_quadrature(f, alpha), rel=1e-4)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0, 1.5])
@pytest.mark.parametrize("q", [2.0, 1.5])
def test_hardy_inequality(alpha, q):
    for seed in range(5):
        f = random_step(seed, n=3, N=6, q=q, t0=0.2)
        lhs, rhs = hardy_check(f, alpha, 2048, seed)
        assert lhs <= rhs * (1 + 1e-3)


def test_hardy_alpha_positive():
    with pytest.raises(InvalidInputError):
        hardy_check(indicator(0, 1, [1.0]), 0.0)


# gamma-bounds

def test_gamma_bound_identity():
    assert gamma_bound_estimate([np.eye(3)]).value == pytest.approx(1.0)


def test_gamma_bound_coordinate_projections():
    v = gamma_bound_estimate([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]).value
    assert v <= 1.0 + 1e-12 and v >= 0.99


def test_gamma_bound_scaled_family():
    A0 = np.array([[1.0, 2.0], [0.0, 1.0]])
    v = gamma_bound_estimate([c * A0 for c in np.linspace(0, 1, 9)]).value
    assert v == pytest.approx(np.linalg.norm(A0, 2), rel=1e-8)


def test_gram_route_matches_mc():
    f = random_step(10, q=3.0)
    a = gamma_norm_gram(f.gram().real, f.target, 8192, 0)
    b = gamma_norm_mc(f, 8192, 1)
    assert abs(a.value - b.value) <= 3 * math.hypot(a.stderr, b.stderr)


# properties

values = st.integers(1, 6).flatmap(lambda N: st.tuples(
    st.lists(st.floats(0.05, 2.0), min_size=N, max_size=N),
    st.lists(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=2),
             min_size=N, max_size=N)))


def build(data):
    widths, vals = data
    return StepFunction(TimeGrid(np.concatenate([[0.0], np.cumsum(widths)])), np.array(vals))


@settings(max_examples=50, deadline=None)
@given(values, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_indicator_multiplier_contracts(data, a, b):
    f = build(data)
    T = f.grid.knots[-1]
    lo, hi = sorted([a * T, b * T])
    if hi - lo < 1e-9:
        return
    assert gamma_norm(restrict(f, [(lo, hi)])).value <= gamma_norm(f).value * (1 + 1e-12)


@settings(max_examples=50, deadline=None)
@given(values, st.floats(-3, 3))
def test_ideal_property_scalar(data, c):
    f = build(data)
    M = np.array([[c, 0.0], [0.0, -c]])
    assert gamma_norm(apply_multiplier(M, f)).value <= abs(c) * gamma_norm(f).value * (1 + 1e-12) + 1e-12


@settings(max_examples=40, deadline=None)
@given(values, st.lists(st.floats(0.0, 1.0), max_size=4))
def test_refine_preserves_norm(data, pts):
    f = build(data)
    T = f.grid.knots[-1]
    g = refine(f, [p * T for p in pts])
    assert gamma_norm(g).value == pytest.approx(gamma_norm(f).value, rel=1e-12, abs=1e-300)
    assert np.allclose(integrate(g), integrate(f))
