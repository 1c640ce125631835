import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cohfrac.lightfield import (Chaotic, Coherent, Mixture, TwoMode, analytic_g1, analytic_g2,
                                analytic_g2x_curve, analytic_g2x_mixture_zero, child_seed,
                                iter_field, mean_intensity, sample_trajectory,
                                uncorrelated_with_g2)
from cohfrac.optics import InterferometerConfig, mzi_transform

from conftest import block_mean_sigma

TAU = 300e-9
DT = 10e-9


def lag_product(e, k):
    """Samples of E*(t) E(t + k dt)."""
    return np.conj(e[: len(e) - k]) * e[k:] if k else np.abs(e) ** 2


# -- models ------------------------------------------------------------------

def test_models_reject_bad_parameters():
    with pytest.raises(ValueError):
        Coherent(0.0, TAU)
    with pytest.raises(ValueError):
        Chaotic(1.0, -TAU)
    with pytest.raises(ValueError):
        Mixture(1.2, Coherent(1.0, TAU), Chaotic(1.0, TAU))
    with pytest.raises(ValueError):
        Mixture(0.5, Coherent(1.0, TAU), Chaotic(2.0, TAU))
    with pytest.raises(ValueError):
        TwoMode(1.0, 0.3, TAU, TAU, r_beta=0.6)


def test_uncorrelated_with_g2_endpoints():
    assert isinstance(uncorrelated_with_g2(2.0, 1.0, TAU), Chaotic)
    assert isinstance(uncorrelated_with_g2(1.0, 1.0, TAU), Coherent)
    m = uncorrelated_with_g2(1.5, 1.0, TAU)
    assert analytic_g2(m, 0.0) == pytest.approx(1.5, abs=1e-12)


def test_sample_trajectory_rejects_coarse_sampling():
    with pytest.raises(ValueError):
        sample_trajectory(Coherent(1.0, TAU), 1e-4, TAU / 10, seed=0)
    with pytest.raises(ValueError):
        sample_trajectory(Coherent(1.0, TAU), 5 * DT, DT, seed=0)


# -- trajectories ------------------------------------------------------------

def test_same_seed_same_trajectory():
    m = Mixture(0.4, Coherent(3.0, TAU), Chaotic(3.0, TAU))
    a = sample_trajectory(m, 1e-4, DT, seed=11)
    b = sample_trajectory(m, 1e-4, DT, seed=11)
    c = sample_trajectory(m, 1e-4, DT, seed=12)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


@pytest.mark.parametrize("model", [
    Coherent(1.0, TAU),
    Chaotic(1.0, TAU),
    TwoMode(1.0, 0.3, TAU, 2 * TAU, detuning=5e6),
    Mixture(0.6, Coherent(1.0, TAU), Chaotic(1.0, TAU)),
])
def test_blocks_do_not_depend_on_chunk_size(model):
    n = 5000
    whole = next(iter_field(model, DT, 5, chunk=n))
    gen = iter_field(model, DT, 5, chunk=333)
    pieces = np.concatenate([next(gen) for _ in range(16)])[:n]
    np.testing.assert_allclose(pieces, whole, rtol=0, atol=1e-12)


def test_coherent_modulus_is_constant():
    e = sample_trajectory(Coherent(1.0, TAU), 1e-3, DT, seed=1).samples
    assert np.max(np.abs(np.abs(e) - np.abs(e[0]))) < 1e-12
    e = sample_trajectory(Coherent(4e7, TAU), 1e-4, DT, seed=1).samples
    assert np.max(np.abs(np.abs(e) ** 2 / 4e7 - 1)) < 1e-12


def test_mixture_with_rho_one_is_the_coherent_part():
    coh = Coherent(2.0, TAU)
    a = sample_trajectory(Mixture(1.0, coh, Chaotic(2.0, TAU)), 1e-4, DT, seed=9)
    b = sample_trajectory(coh, 1e-4, DT, seed=9)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_two_mode_mean_intensity():
    m = TwoMode(5.0, 0.3, TAU, TAU, detuning=10e6)
    I = sample_trajectory(m, 0.02, DT, seed=3).intensity
    mean, err = block_mean_sigma(I)
    assert mean_intensity(m) == 5.0
    assert abs(mean - 5.0) < 5 * err


@pytest.mark.parametrize("model", [Coherent(1.0, TAU), Chaotic(1.0, TAU)])
def test_g1_matches_numerical_autocorrelation(model):
    # e^-1 at tau = tau_c, and the full curve at a few more lags
    e = sample_trajectory(model, 0.05, DT, seed=4).samples
    norm = np.mean(np.abs(e) ** 2)
    assert analytic_g1(model, TAU) == pytest.approx(math.exp(-1), abs=1e-15)
    for k in (0, 15, 30, 60):
        val, err = block_mean_sigma(lag_product(e, k).real / norm)
        assert abs(val - analytic_g1(model, k * DT)) < 5 * err + 1e-12


def test_chaotic_satisfies_siegert_relation():
    e = sample_trajectory(Chaotic(1.0, TAU), 0.05, DT, seed=6).samples
    I = np.abs(e) ** 2
    m = I.mean()
    for k in (0, 15, 30, 90):
        val, err = block_mean_sigma(I[: len(I) - k] * I[k:] / m**2)
        expected = 1 + analytic_g1(Chaotic(1.0, TAU), k * DT) ** 2
        assert abs(val - expected) < 5 * err
    assert analytic_g2(Chaotic(1.0, TAU), 0.0) == pytest.approx(2.0)


def test_analytic_g1_rejects_composite_models():
    with pytest.raises(TypeError):
        analytic_g1(TwoMode(1.0, 0.5, TAU, TAU), 0.0)


def test_child_seed_is_deterministic_and_distinct():
    assert child_seed(3, 1) == child_seed(3, 1)
    assert len({child_seed(3, k) for k in range(50)}) == 50


# -- mixture formula ---------------------------------------------------------

@pytest.mark.parametrize("rho, g, expected", [
    (1.0, 2.0, 0.5),
    (1.0, 1.0, 0.5),
    (0.0, 2.0, 1.0),
    (0.0, 1.3, 0.65),
    (0.7, 2.0, 0.755),
    (0.5, 1.0, 0.75),
])
def test_mixture_zero_examples(rho, g, expected):
    assert analytic_g2x_mixture_zero(rho, g) == pytest.approx(expected, abs=1e-12)


@given(st.floats(0.0, 3.0))
def test_mixture_zero_endpoints(g):
    assert analytic_g2x_mixture_zero(1.0, g) == pytest.approx(0.5, abs=1e-12)
    assert analytic_g2x_mixture_zero(0.0, g) == pytest.approx(g / 2, abs=1e-12)


def test_mixture_zero_rejects_bad_input():
    with pytest.raises(ValueError):
        analytic_g2x_mixture_zero(1.5, 2.0)
    with pytest.raises(ValueError):
        analytic_g2x_mixture_zero(0.5, -1.0)


@pytest.mark.parametrize("rho", [0.0, 0.3, 0.7, 1.0])
@pytest.mark.parametrize("g", [1.0, 1.5, 2.0])
def test_curve_at_zero_equals_mixture_formula(rho, g):
    model = Mixture(rho, Coherent(1.0, TAU), uncorrelated_with_g2(g, 1.0, TAU))
    val = analytic_g2x_curve(model, [0.0], delta=4e-6)[0]
    assert val == pytest.approx(analytic_g2x_mixture_zero(rho, g), abs=1e-12)


def test_curve_coherent_shape():
    # the dip is 1 - exp(-2|tau|/tau_c)/2 with this phase model
    tau = np.linspace(-1e-6, 1e-6, 41)
    curve = analytic_g2x_curve(Coherent(1.0, TAU), tau, delta=1e-4)
    np.testing.assert_allclose(curve, 1 - 0.5 * np.exp(-2 * np.abs(tau) / TAU), atol=1e-12)


def test_curve_two_mode_detuning_cancels():
    tau = np.linspace(0, 1e-6, 11)
    a = analytic_g2x_curve(TwoMode(1.0, 0.5, TAU, TAU, detuning=0.0), tau, delta=1e-4)
    b = analytic_g2x_curve(TwoMode(1.0, 0.5, TAU, TAU, detuning=37e6), tau, delta=1e-4)
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(a, 1 - 0.25 * np.exp(-2 * tau / TAU), atol=1e-12)


def test_curve_needs_separated_delay():
    with pytest.raises(ValueError):
        analytic_g2x_curve(Coherent(1.0, TAU), [0.0], delta=2e-6)


@pytest.mark.slow
@pytest.mark.parametrize("model", [
    Mixture(0.5, Coherent(1.0, 100e-9), Chaotic(1.0, 100e-9)),
    TwoMode(1.0, 0.7, 100e-9, 150e-9, detuning=3e6),
])
def test_curve_matches_simulated_fields(model):
    # intensity cross-correlation of the two simulated interferometer outputs
    dt, delta = 5e-9, 1.6e-6
    traj = sample_trajectory(model, 0.02, dt, seed=21)
    ea, eb = mzi_transform(traj, InterferometerConfig(delta))
    ia, ib = ea.intensity, eb.intensity
    norm = ia.mean() * ib.mean()
    for k in (0, 10, 40):
        prod = ia[: len(ia) - k] * ib[k:] / norm
        val, err = block_mean_sigma(prod)
        expected = analytic_g2x_curve(model, [k * dt], delta=delta)[0]
        assert abs(val - expected) < 5 * err
