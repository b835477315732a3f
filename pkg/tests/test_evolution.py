"""Tests for Krylov-space evolution and spread-complexity observables.

The cross-representation oracle evolves the same state in the original basis
with scipy's expm and projects onto the Krylov vectors; the Krylov-side
amplitudes must reproduce it.
"""
import json

import numpy as np
import pytest
from scipy.linalg import expm

from spreadq import DomainError, LanczosCoefficients, NumericalError
from spreadq.evolution import (
    KrylovAmplitudes,
    LongTimeAverages,
    SpreadComplexitySeries,
    default_time_grid,
    evolve_amplitudes,
    long_time_average,
    spread_complexity,
    write_sidecar,
)
from spreadq.matrix_lanczos import lanczos_tridiagonalize


def two_level():
    return LanczosCoefficients(a=np.zeros(2), b=np.ones(1), physical=True)


def gaussian_lc(sigma0, K):
    n = np.arange(1, K)
    return LanczosCoefficients(a=np.zeros(K), b=sigma0 * np.sqrt(n),
                               physical=True)


def test_two_level_analytic_solution():
    t = np.linspace(0.0, 6.0, 121)
    amp = evolve_amplitudes(two_level(), t)
    np.testing.assert_allclose(amp.phi[:, 0], np.cos(t), atol=1e-14)
    np.testing.assert_allclose(amp.phi[:, 1], -1j * np.sin(t), atol=1e-14)
    series = spread_complexity(amp)
    np.testing.assert_allclose(series.C, np.sin(t) ** 2, atol=1e-14)
    np.testing.assert_allclose(series.F, np.cos(t) ** 2, atol=1e-14)


def test_initial_conditions():
    lc = gaussian_lc(1.0, 12)
    amp = evolve_amplitudes(lc, np.array([0.0, 0.5, 1.0]))
    np.testing.assert_allclose(amp.phi[0, 0], 1.0, atol=1e-12)
    np.testing.assert_allclose(amp.phi[0, 1:], 0.0, atol=1e-12)
    series = spread_complexity(amp)
    assert series.C[0] == pytest.approx(0.0, abs=1e-12)
    assert series.F[0] == pytest.approx(1.0, abs=1e-12)


def test_unitarity_on_long_grid():
    lc = gaussian_lc(2.0, 40)
    amp = evolve_amplitudes(lc, np.geomspace(1e-3, 1e3, 400))
    norms = np.sum(np.abs(amp.phi) ** 2, axis=1)
    assert np.max(np.abs(norms - 1.0)) < 1e-10


def test_matches_full_space_evolution():
    gen = np.random.Generator(np.random.Philox(key=np.array(
        [99, 0], dtype=np.uint64)))
    raw = gen.standard_normal((8, 8))
    ham = (raw + raw.T) / 2
    psi0 = np.zeros(8)
    psi0[0] = 1.0
    lc, basis = lanczos_tridiagonalize(ham, psi0, 8, return_basis=True)
    times = np.linspace(0.0, 12.0, 60)
    amp = evolve_amplitudes(lc, times)
    for i, t in enumerate(times):
        evolved = expm(-1j * ham * t) @ psi0
        projected = basis.conj() @ evolved
        np.testing.assert_allclose(amp.phi[i], projected, atol=1e-9)
        assert abs(abs(evolved[0]) ** 2 - abs(amp.phi[i, 0]) ** 2) < 1e-9


def test_gaussian_early_time_quadratic():
    sigma0 = 1.3
    lc = gaussian_lc(sigma0, 60)
    b1 = lc.b[0]
    t_probe = 0.05 / b1
    amp = evolve_amplitudes(lc, np.array([t_probe]))
    series = spread_complexity(amp)
    assert series.C[0] == pytest.approx(b1 ** 2 * t_probe ** 2, rel=0.01)


def test_early_time_universality_across_models():
    # C(t)/(b1 t)^2 -> 1 for any physical coefficient set
    sets = [
        gaussian_lc(0.5, 30),
        LanczosCoefficients(a=np.zeros(20), b=np.ones(19), physical=True),
        LanczosCoefficients(a=np.linspace(-1, 1, 10),
                            b=np.linspace(2.0, 0.5, 9), physical=True),
    ]
    for lc in sets:
        t_probe = 0.01 / lc.b[0]
        series = spread_complexity(evolve_amplitudes(lc, np.array([t_probe])))
        ratio = series.C[0] / (lc.b[0] * t_probe) ** 2
        assert ratio == pytest.approx(1.0, rel=0.01)


def test_two_level_long_time_average():
    avg = long_time_average(two_level())
    assert avg.f_bar == pytest.approx(0.5, rel=1e-12)
    assert avg.c_bar == pytest.approx(0.5, rel=1e-12)


def test_single_level_average_trivial():
    lc = LanczosCoefficients(a=np.array([0.7]), b=np.zeros(0), physical=True)
    avg = long_time_average(lc)
    assert avg.f_bar == 1.0
    assert avg.c_bar == 0.0
    amp = evolve_amplitudes(lc, np.linspace(0, 5, 11))
    np.testing.assert_allclose(np.abs(amp.phi[:, 0]), 1.0, atol=1e-14)


def test_degenerate_levels_merged():
    # b2 ~ 1e-13 makes an almost-degenerate pair around 0; physically the
    # state stays put, so F_bar must be 1, not the naive dephased 1/2
    lc = LanczosCoefficients(a=np.zeros(2), b=np.array([1e-13]),
                             physical=True)
    avg = long_time_average(lc)
    assert avg.f_bar == pytest.approx(1.0, abs=1e-12)
    assert avg.c_bar == pytest.approx(0.0, abs=1e-12)


def test_time_average_converges_to_long_time_average():
    gen = np.random.Generator(np.random.Philox(key=np.array(
        [7, 0], dtype=np.uint64)))
    raw = gen.standard_normal((9, 9))
    ham = (raw + raw.T) / 2
    psi0 = np.zeros(9)
    psi0[0] = 1.0
    lc = lanczos_tridiagonalize(ham, psi0, 9)
    avg = long_time_average(lc)
    times = np.linspace(200.0, 400.0, 4001)
    series = spread_complexity(evolve_amplitudes(lc, times))
    assert np.mean(series.C) == pytest.approx(avg.c_bar, rel=0.02)
    assert np.mean(series.F) == pytest.approx(avg.f_bar, rel=0.05)


def test_formal_coefficients_rejected():
    lc = LanczosCoefficients(a=np.zeros(3), b=np.array([1.0, -1.0]),
                             physical=False)
    with pytest.raises(DomainError):
        evolve_amplitudes(lc, np.array([0.0, 1.0]))
    with pytest.raises(DomainError):
        long_time_average(lc)


def test_time_grid_validation():
    lc = two_level()
    with pytest.raises(DomainError):
        evolve_amplitudes(lc, np.array([0.0, np.inf]))
    with pytest.raises(DomainError):
        evolve_amplitudes(lc, np.array([1.0, 0.5]))
    with pytest.raises(DomainError):
        evolve_amplitudes(lc, np.array([]))


def test_spread_complexity_integrity_check():
    amp = evolve_amplitudes(two_level(), np.linspace(0, 1, 5))
    amp.phi = amp.phi * 1.001
    with pytest.raises(NumericalError):
        spread_complexity(amp)


def test_krylov_amplitudes_validation():
    with pytest.raises(NumericalError):
        KrylovAmplitudes(times=np.array([0.0]),
                         phi=np.array([[0.5, 0.5]], dtype=complex))
    with pytest.raises(NumericalError):
        # normalized but wrong t=0 row
        KrylovAmplitudes(times=np.array([0.0]),
                         phi=np.array([[0.0, 1.0]], dtype=complex))
    with pytest.raises(DomainError):
        KrylovAmplitudes(times=np.array([0.0, 1.0]),
                         phi=np.ones((1, 2), dtype=complex))


def test_series_validation_and_bounds():
    with pytest.raises(DomainError):
        SpreadComplexitySeries(times=np.array([0.0]), C=np.array([-0.5]),
                               F=np.array([1.0]))
    with pytest.raises(DomainError):
        SpreadComplexitySeries(times=np.array([0.0]), C=np.array([0.0]),
                               F=np.array([1.5]))
    series = SpreadComplexitySeries(times=np.array([0.0]),
                                    C=np.array([-1e-14]),
                                    F=np.array([1.0 + 1e-14]))
    assert series.C[0] == 0.0
    assert series.F[0] == 1.0


def test_default_time_grid_shape():
    grid = default_time_grid(2.0)
    assert grid.size == 600
    assert grid[0] == pytest.approx(0.005, rel=1e-12)
    assert grid[-1] == pytest.approx(500.0, rel=1e-12)
    assert np.all(np.diff(grid) > 0)
    with pytest.raises(DomainError):
        default_time_grid(0.0)


def test_series_csv_and_sidecar(tmp_path):
    lc = two_level()
    series = spread_complexity(evolve_amplitudes(lc, np.linspace(0, 2, 5)))
    csv_path = tmp_path / "series.csv"
    series.to_csv(csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "t,C,F"
    assert len(lines) == 6
    back = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    np.testing.assert_allclose(back[:, 1], series.C, atol=1e-16)

    side_path = tmp_path / "series.json"
    write_sidecar(long_time_average(lc), lc.K, side_path)
    data = json.loads(side_path.read_text())
    assert data["K"] == 2
    assert data["C_bar"] == pytest.approx(0.5, rel=1e-12)
    assert data["F_bar"] == pytest.approx(0.5, rel=1e-12)
