import math

import numpy as np
import pytest

from dptomo import fock, herald, tmd

from oracles import enumerate_single_mode, herald_single_probability, herald_single_probability_enumerated, heralded_parity_oracle

NO_AP = tmd.DetectorConfig(afterpulse_prob=0.0)


def test_single_povm_examples():
    E = herald.herald_povm("single", NO_AP, 6).weights
    assert E[0] == 0
    assert E[1] == pytest.approx(0.22, abs=1e-15)


def test_double_povm_two_photons_perfect_detector():
    E = herald.herald_povm("double", NO_AP.replace(efficiency=1.0), 4).weights
    assert E[2] == pytest.approx(0.5, abs=1e-15)
    assert E[0] == 0 and E[1] == 0


def test_single_povm_matches_oracles():
    E = herald.herald_povm("single", NO_AP, 12).weights
    for m in range(5):
        assert herald_single_probability(m, 0.22) == pytest.approx(herald_single_probability_enumerated(m, 0.22), abs=1e-15)
    np.testing.assert_allclose(E, [herald_single_probability(m, 0.22) for m in range(12)], atol=1e-14)


def test_double_povm_matches_enumeration():
    cfg = NO_AP.replace(efficiency=0.6)
    table = herald.herald_masks("double", cfg)
    E = herald.herald_povm("double", cfg, 6).weights
    for m in range(6):
        assert E[m] == pytest.approx(enumerate_single_mode(m, (0.125,) * 8, 0.6)[table].sum(), abs=1e-14)


def test_herald_masks_disjoint():
    s = herald.herald_masks("single", NO_AP)
    d = herald.herald_masks("double", NO_AP)
    assert not np.any(s & d)
    assert s.sum() == 8
    assert d.sum() == 16


def test_double_excludes_same_detector():
    a = NO_AP.detector_mask(tmd.SIGNAL, tmd.DETECTOR_A)
    first_two_a = [b for b in range(8) if a >> b & 1][:2]
    mask = (1 << first_two_a[0]) | (1 << first_two_a[1])
    assert not herald.herald_masks("double", NO_AP)[mask]


@pytest.mark.parametrize("kind", herald.KINDS)
def test_exact_povm_agrees_with_monte_carlo(kind):
    E = herald.herald_povm(kind, NO_AP, 6)
    mc = herald.herald_povm_monte_carlo(kind, NO_AP, 6, n_events=1_000_000, seed=2)
    assert mc.estimated
    sigma = np.maximum(mc.std, 1e-12)
    assert np.all(np.abs(mc.weights - E.weights) <= 3 * sigma + 1e-12)


def test_exact_povm_rejects_afterpulsing():
    with pytest.raises(tmd.UnsupportedConfigurationError):
        herald.herald_povm("single", tmd.DetectorConfig(), 4)


def test_monte_carlo_povm_with_afterpulsing_runs():
    mc = herald.herald_povm_monte_carlo("single", tmd.DetectorConfig(), 4, n_events=50_000)
    assert mc.weights[0] == 0
    assert np.all(mc.weights >= 0)


def test_identity_povm_gives_marginal():
    rng = np.random.default_rng(0)
    P = rng.dirichlet(np.ones(25)).reshape(5, 5)
    np.testing.assert_allclose(herald.post_measurement_idler(P, np.ones(5)), P.sum(axis=0), atol=1e-15)


def test_projective_herald_on_correlated_state():
    P = fock.pdc_distribution(0.5, 6)
    E = np.zeros(6)
    E[1] = 1
    out = herald.post_measurement_idler(P, E)
    np.testing.assert_allclose(out, np.eye(6)[1], atol=1e-15)


def test_zero_herald_probability():
    P = np.zeros((4, 4))
    P[0, 0] = 1
    with pytest.raises(ValueError):
        herald.post_measurement_idler(P, herald.herald_povm("single", NO_AP, 4))


def test_post_measurement_is_distribution():
    P = fock.apply_loss(fock.pdc_distribution(1.34, 10), 0.75)
    out = herald.post_measurement_idler(P, herald.herald_povm("double", NO_AP, 10))
    assert np.all(out >= 0)
    assert abs(out.sum() - 1) < 1e-12


def test_heralded_parity_against_fock_sum_oracle():
    for mean_n in (0.11, 0.76):
        for coupling in ((0.75, 0.75), (0.75, 1.0)):
            got = herald.theory_heralded_idler(mean_n, "single", NO_AP, 60, coupling)
            assert fock.wigner_at_origin(got) == pytest.approx(heralded_parity_oracle(mean_n, 0.22, coupling, n_max=40), abs=1e-9)


def test_herald_select_examples():
    h = np.zeros(65536, dtype=np.int64)
    h[tmd.joint_index(0b111, 3)] = 10
    idler, count = herald.herald_select(h, "single", NO_AP)
    assert count == 0 and idler.sum() == 0

    h = np.zeros(65536, dtype=np.int64)
    # bin 1 on detector A and bin 2 on detector B
    h[tmd.joint_index(0b11, 0b1010)] = 7
    idler, count = herald.herald_select(h, "double", NO_AP)
    assert count == 7 and idler[0b1010] == 7

    h = np.zeros(65536, dtype=np.int64)
    h[tmd.joint_index(0b101, 0)] = 5  # both clicks on detector A
    assert herald.herald_select(h, "double", NO_AP)[1] == 0


def test_select_partitions_events():
    rng = np.random.default_rng(3)
    h = rng.integers(0, 5, 65536)
    _, n_single = herald.herald_select(h, "single", NO_AP)
    _, n_double = herald.herald_select(h, "double", NO_AP)
    assert n_single + n_double <= h.sum()


def test_reconstruction_ensemble_heralding():
    P = fock.apply_loss(fock.pdc_distribution(0.76, 8), 0.75)
    out = herald.simulate_heralding_from_reconstruction([P, P, P], "single", NO_AP)
    assert np.ptp(np.array(out), axis=0).max() == 0
    direct = herald.post_measurement_idler(P, herald.herald_povm("single", NO_AP, 8))
    np.testing.assert_array_equal(herald.simulate_heralding_from_reconstruction([P], "single", NO_AP)[0], direct)


def test_reconstruction_ensemble_drops_vacuum_member():
    P = fock.apply_loss(fock.pdc_distribution(0.76, 8), 0.75)
    vac = np.zeros((8, 8))
    vac[0, 0] = 1
    with pytest.warns(UserWarning):
        out = herald.simulate_heralding_from_reconstruction([P, vac], "single", NO_AP)
    assert len(out) == 1


def test_single_photon_fraction_increases_with_lower_intensity():
    lo = herald.theory_heralded_idler(0.11, "single", NO_AP, 8)
    hi = herald.theory_heralded_idler(1.34, "single", NO_AP, 8)
    assert lo[1] > hi[1]
    assert fock.wigner_at_origin(lo) < 0
    assert math.isclose(lo.sum(), 1, abs_tol=1e-6)
