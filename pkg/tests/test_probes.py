import math

import numpy as np
import pytest
from scipy.constants import c, h

from dptomo import fock, probes, tmd

NO_AP = tmd.DetectorConfig(afterpulse_prob=0.0)


def test_calibration_zero_power():
    assert probes.calibrated_mean_photon(probes.AttenuationChain(0.0, 1e6, 1550e-9, (0.5,))) == 0


def test_calibration_one_photon_per_pulse():
    lam, rate = 1550e-9, 1e6
    chain = probes.AttenuationChain(h * c / lam * rate, rate, lam, (1.0, 1.0))
    assert probes.calibrated_mean_photon(chain) == pytest.approx(1.0, rel=1e-12)


def test_calibration_picowatt_example():
    chain = probes.AttenuationChain(1e-12, 1e6, 1550e-9, (1e-3,))
    # 1e-18 J pulses, 1e-3 transmission, photon energy h c / 1550 nm
    assert probes.calibrated_mean_photon(chain) == pytest.approx(1e-21 / (h * c / 1550e-9), rel=1e-12)
    assert probes.calibrated_mean_photon(chain) == pytest.approx(7.8e-3, rel=0.01)


def test_calibration_order_independent():
    a = probes.AttenuationChain(3e-9, 1e6, 1550e-9, (0.1, 0.5, 0.02))
    b = probes.AttenuationChain(3e-9, 1e6, 1550e-9, (0.02, 0.1, 0.5))
    assert probes.calibrated_mean_photon(a) == pytest.approx(probes.calibrated_mean_photon(b), rel=1e-14)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(measured_power=-1.0, repetition_rate=1e6, wavelength=1e-6),
        dict(measured_power=1.0, repetition_rate=0.0, wavelength=1e-6),
        dict(measured_power=1.0, repetition_rate=1e6, wavelength=-1e-6),
        dict(measured_power=1.0, repetition_rate=1e6, wavelength=1e-6, transmittances=(0.0,)),
        dict(measured_power=1.0, repetition_rate=1e6, wavelength=1e-6, transmittances=(1.5,)),
    ],
)
def test_chain_validation(kwargs):
    with pytest.raises(ValueError):
        probes.AttenuationChain(**kwargs)


def test_default_grid():
    grid = probes.generate_probe_grid(2.0, (16, 16))
    assert len(grid) == 256 >= 235
    assert all(p.max_amplitude <= 2.0 + 1e-12 for p in grid)
    assert any(p.mu_signal == 0 and p.mu_idler == 0 for p in grid)
    assert len({p.id for p in grid}) == 256


def test_grid_single_vacuum_probe():
    grid = probes.generate_probe_grid(2.0, (1, 1))
    assert len(grid) == 1 and grid[0].mu_signal == 0 and grid[0].mu_idler == 0


@pytest.mark.parametrize("alpha", [0.5, 1.3, 2.0])
def test_log_grid_respects_threshold(alpha):
    grid = probes.generate_probe_grid(alpha, (5, 7), spacing="log")
    assert len(grid) == 35
    assert max(p.max_amplitude for p in grid) == pytest.approx(alpha)


def test_grid_rejects_bad_threshold():
    with pytest.raises(ValueError):
        probes.generate_probe_grid(0.0)


def test_zero_click_probability_closed_form():
    for mu_s, mu_i in [(0.0, 0.3), (1.2, 0.4), (4.0, 4.0)]:
        P = fock.poisson_product(mu_s, mu_i, 40)
        p0 = tmd.exact_pattern_distribution(P, NO_AP)[0]
        assert p0 == pytest.approx(math.exp(-0.22 * (mu_s + mu_i)), abs=1e-10)


def test_efficiency_exact_library():
    grid = [p for p in probes.generate_probe_grid(2.0, (6, 6)) if p.mu_signal + p.mu_idler >= 0.1]
    lib = probes.simulate_library(grid, NO_AP, exact=True)
    eta, std = probes.estimate_efficiency(lib)
    assert eta == pytest.approx(0.22, abs=1e-10)
    assert std < 1e-10


def test_efficiency_needs_two_intensities():
    lib = probes.simulate_library([probes.CoherentProbe(0, 0.0, 0.0)], NO_AP, exact=True)
    with pytest.raises(probes.InsufficientDataError):
        probes.estimate_efficiency(lib)


def test_efficiency_excludes_probes_without_zero_clicks():
    grid = [probes.CoherentProbe(0, 0.5, 0.5), probes.CoherentProbe(1, 1.0, 1.0), probes.CoherentProbe(2, 2.0, 0.0)]
    lib = probes.simulate_library(grid, NO_AP, exact=True)
    lib.frequencies[2] = 0.0
    lib.frequencies[2, 1] = 1.0
    with pytest.warns(UserWarning):
        eta, _ = probes.estimate_efficiency(lib)
    assert eta == pytest.approx(0.22, abs=1e-10)


def test_efficiency_sampled_small_library():
    grid = probes.generate_probe_grid(2.0, (4, 4))
    lib = probes.simulate_library(grid, tmd.DetectorConfig(), 400_000, seed=3)
    eta, std = probes.estimate_efficiency(lib)
    assert abs(eta - 0.22) < 0.01
    assert std < 0.01


def test_library_rejects_duplicates():
    grid = [probes.CoherentProbe(0, 1.0, 1.0), probes.CoherentProbe(1, 1.0, 1.0)]
    f = np.zeros((2, tmd.N_JOINT))
    f[:, 0] = 1
    with pytest.raises(ValueError):
        probes.PatternLibrary(grid, f, np.zeros(2))
    grid = [probes.CoherentProbe(0, 1.0, 1.0), probes.CoherentProbe(0, 2.0, 1.0)]
    with pytest.raises(ValueError):
        probes.PatternLibrary(grid, f, np.zeros(2))


def test_library_rejects_unnormalized_rows():
    f = np.zeros((1, tmd.N_JOINT))
    f[0, 0] = 0.5
    with pytest.raises(ValueError):
        probes.PatternLibrary([probes.CoherentProbe(0, 1.0, 1.0)], f, np.zeros(1))


def test_probe_matrix_rank():
    lib = probes.simulate_library(probes.generate_probe_grid(2.0, (16, 16)), NO_AP, exact=True)
    d = 4
    s = lib.probe_singular_values(d)
    # 256 probes span the full d^2-dimensional space
    assert lib.numerical_rank(d) == d * d
    assert s[d * d - 1] > 1e-10


def test_sampled_library_counts():
    grid = probes.generate_probe_grid(1.0, (2, 2))
    lib = probes.simulate_library(grid, tmd.DetectorConfig(), 10_000, seed=1)
    np.testing.assert_array_equal(lib.counts().sum(axis=1), 10_000)
    again = probes.simulate_library(grid, tmd.DetectorConfig(), 10_000, seed=1)
    np.testing.assert_array_equal(lib.frequencies, again.frequencies)


def test_mu_scale_error_shifts_efficiency_estimate():
    grid = [p for p in probes.generate_probe_grid(2.0, (5, 5)) if p.mu_signal + p.mu_idler > 0]
    lib = probes.simulate_library(grid, NO_AP, exact=True, mu_scale_error=1.05)
    eta, _ = probes.estimate_efficiency(lib)
    # a common intensity error is absorbed into the apparent efficiency
    assert eta == pytest.approx(0.22 * 1.05, rel=1e-9)


def test_sampling_cutoff_covers_tail():
    for mu in (0.1, 1.0, 4.0):
        d = probes.sampling_cutoff(mu)
        assert 1 - fock.poisson(mu, d).sum() < 1e-12
