import math

import numpy as np
import pytest
import scipy.special

from gammareg.errors import InvalidConfigError, InvalidInputError, SpecViolationError
from gammareg.heat_lab import (TABLE_COLUMNS, NoisePreset, SpectralField, borderline_field,
                               deterministic_run, exponent_table, lipschitz_check,
                               measure_sqfn_norm, mode_growth_rate, simulate,
                               spectral_heat_step, trace_row)

TIMES = np.r_[0.0, np.logspace(-9, 0, 289)]


def cosine(K=21, M=64):
    return SpectralField.from_modes({1: 0.5}, K, M)


def smooth(K=21, M=64):
    return SpectralField.from_modes({1: 0.5, 3: 0.2j, 5: 0.05}, K, M)


@pytest.fixture(scope="module")
def borderline_runs():
    return [deterministic_run(borderline_field(K, 3 * K + 1), TIMES) for K in (128, 256, 512)]


def test_from_modes_values():
    x = np.arange(64) * 2 * math.pi / 64
    assert np.allclose(cosine().values(), np.cos(x), atol=1e-14)


def test_spectral_derivatives():
    x = np.arange(64) * 2 * math.pi / 64
    f = SpectralField.from_values(np.exp(np.sin(x)), 21)
    d1 = f.derivative(1)[0]
    d2 = f.derivative(2)[0]
    assert np.allclose(d1, np.cos(x) * np.exp(np.sin(x)), atol=1e-8)
    assert np.allclose(d2, (np.cos(x) ** 2 - np.sin(x)) * np.exp(np.sin(x)), atol=1e-7)


def test_two_dimensional_field():
    f = SpectralField.from_modes({(1, 2): 0.5}, 5, 16, d=2)
    x = np.arange(16) * 2 * math.pi / 16
    X, Y = np.meshgrid(x, x, indexing="ij")
    assert np.allclose(f.values(), np.cos(X + 2 * Y), atol=1e-13)
    assert f.reality_defect() == 0.0


def test_dealias_rule():
    with pytest.raises(InvalidConfigError):
        SpectralField(np.zeros(64), 22)
    with pytest.raises(InvalidConfigError):
        SpectralField(np.zeros((8, 8, 8)), 2, d=3)


def test_hsq_norm_plain_l2():
    # ||cos||_{L^2(0, 2 pi)} = sqrt(pi)
    assert float(cosine().hsq_norm()) == pytest.approx(math.sqrt(math.pi), rel=1e-12)
    assert float(cosine().hsq_norm(s=2.0)) == pytest.approx(2 * math.sqrt(math.pi), rel=1e-12)


def test_zero_noise_is_heat_flow():
    run = simulate(smooth(), NoisePreset(b=0.0), 1.0, 10, 2, 0)
    exact = deterministic_run(smooth(), run.times)
    assert np.abs(run.coeffs[0] - exact.coeffs[0]).max() <= 1e-13
    assert np.array_equal(run.coeffs[0], run.coeffs[1])


def test_mean_is_conserved():
    u0 = SpectralField.from_values(1.0 + np.cos(np.arange(64) * 2 * math.pi / 64), 21)
    run = simulate(u0, NoisePreset(b=1.2), 1.0, 8, 16, 4)
    assert np.allclose(run.coeffs[:, :, 0], 1.0, atol=1e-14)
    assert max(run.field(j).reality_defect() for j in (0, -1)) <= 1e-12


@pytest.mark.parametrize("b", [1.0, 1.3, 1.5, 1.8])
def test_mode_growth_sign(b):
    run = simulate(cosine(), NoisePreset(b=b), 1.0, 11, 512, 1)
    rate, se = mode_growth_rate(run, 1)
    want = b * b - 2
    assert abs(rate - want) <= 3 * se + 0.01
    assert math.copysign(1, rate) == math.copysign(1, want)
    assert run.growth_flag == (b * b >= 2)


@pytest.mark.parametrize("b", [1.0, 1.6])
def test_exact_step_growth(b):
    run = simulate(cosine(), NoisePreset(b=b), 1.0, 6, 4, 1, method="exact")
    rate, _ = mode_growth_rate(run, 1)
    assert rate == pytest.approx(b * b - 2, abs=1e-9)


def test_exact_step_needs_constant_b():
    noise = NoisePreset(b=lambda x: np.sin(x))
    with pytest.raises(InvalidInputError):
        spectral_heat_step(SpectralField(np.zeros((2, 64)), 21), noise, 0.1, np.zeros(2), "exact")


def test_growth_warning_emitted_once():
    f = SpectralField(np.broadcast_to(cosine().coeffs, (2, 64)).copy(), 21)
    with pytest.warns(RuntimeWarning):
        f = spectral_heat_step(f, NoisePreset(b=1.5), 0.01, np.zeros(2))
    assert f.growth_flag


def test_noise_presets():
    with pytest.raises(InvalidConfigError):
        NoisePreset(kind="white")
    with pytest.raises(InvalidConfigError):
        NoisePreset(kind="sequence", g=[])
    assert NoisePreset(b=[1.0, 0.5]).parabolic(2) is True
    assert NoisePreset(b=lambda x: x).parabolic(1) is None
    with pytest.raises(InvalidConfigError):
        NoisePreset(b=[1.0, 0.5]).b_vector(1)


def test_sequence_noise_runs():
    g = [lambda u, Du: 0.3 * np.sin(u), lambda u, Du: 0.2 * Du[0]]
    noise = NoisePreset(kind="sequence", g=g, L_g1=0.3, L_g2=0.2)
    assert noise.check_sequence() <= 1.0 + 1e-12
    run = simulate(smooth(), noise, 0.5, 7, 8, 2)
    assert np.all(np.isfinite(run.coeffs))


def test_nemytskii_sin_margins():
    margins = lipschitz_check(lambda u, Du, D2u: np.sin(u), 1.0, 0.0, 0.0, pairs=20)
    assert margins.min() >= 0.0


def test_nemytskii_gradient_terms():
    f = lambda u, Du, D2u: 0.5 * np.sin(Du[0]) + 0.3 * np.tanh(D2u[0])
    assert lipschitz_check(f, 0.0, 0.5, 0.3, pairs=20).min() >= 0.0


def test_nemytskii_violation_raises():
    with pytest.raises(SpecViolationError):
        lipschitz_check(lambda u, Du, D2u: 3.0 * u, 1.0, 0.0, 0.0, pairs=5)


@pytest.mark.parametrize("q", [1.5, 2.0, 4.0])
def test_sqfn_cosine_oracle(q):
    # D u = -sin(x) e^-t, so the norm is ((1 - e^-2T)/2)^(1/2) (int |sin|^q)^(1/q)
    run = deterministic_run(cosine(), np.linspace(0.0, 1.0, 4097))
    got = measure_sqfn_norm(run, 1, q)["median"]
    want = math.sqrt((1 - math.exp(-2)) / 2) * (2 * scipy.special.beta((q + 1) / 2, 0.5)) ** (1 / q)
    assert got == pytest.approx(want, rel=1e-3)


@pytest.mark.parametrize("q", [1.5, 2.0, 4.0])
def test_sqfn_refinement_stable(q):
    meds = [measure_sqfn_norm(simulate(smooth(), NoisePreset(b=1.0), 1.0, L, 64, 3), 1, q)["median"]
            for L in (9, 10)]
    assert abs(meds[1] - meds[0]) <= 0.05 * meds[1]


def test_exponent_table_rows(borderline_runs):
    rows = exponent_table(borderline_runs)
    assert [r["theta"] for r in rows] == [0.6, 0.7, 0.8, 0.9, 1.0]
    for r in rows:
        assert set(TABLE_COLUMNS) <= set(r)
        assert abs(r["time_exp_measured"] - (r["theta"] - 0.5)) <= 0.05
        assert abs(r["space_exp_measured"] - 2 * r["theta"]) <= 0.05
        assert r["r2"] >= 0.95 and not r["inconclusive"]


def test_exponent_table_needs_three_runs(borderline_runs):
    with pytest.raises(InvalidConfigError):
        exponent_table(borderline_runs[:2])


def test_exponent_table_theta_range(borderline_runs):
    with pytest.raises(InvalidInputError):
        exponent_table(borderline_runs, thetas=(0.5,))


def test_trace_row(borderline_runs):
    row = trace_row(borderline_runs)
    assert row["finite"]
    assert row["max_relative_change"] <= 1e-3
