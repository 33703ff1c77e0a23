"""Coherent probe states, their calibration, and the measured pattern library."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.constants import h as PLANCK

from . import fock, tmd


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class CoherentProbe:
    id: int
    mu_signal: float
    mu_idler: float
    calibration_relative_error: float = 0.0

    def __post_init__(self):
        if self.mu_signal < 0 or self.mu_idler < 0:
            raise ValueError("probe mean photon numbers must be nonnegative")

    @property
    def max_amplitude(self):
        return math.sqrt(max(self.mu_signal, self.mu_idler))

    def fock(self, d):
        """Truncated two-mode photon statistics, renormalized over the cutoff."""
        return fock.normalized(fock.poisson_product(self.mu_signal, self.mu_idler, d))


@dataclass(frozen=True)
class AttenuationChain:
    """Reference power and the transmittances between the power meter and the TMD fiber."""

    measured_power: float
    repetition_rate: float
    wavelength: float
    transmittances: tuple = ()

    def __post_init__(self):
        if self.measured_power < 0:
            raise ValueError("measured power must be nonnegative")
        if self.repetition_rate <= 0 or self.wavelength <= 0:
            raise ValueError("repetition rate and wavelength must be positive")
        if any(not 0 < t <= 1 for t in self.transmittances):
            raise ValueError("transmittances must lie in (0, 1]")


def calibrated_mean_photon(chain):
    """Mean photon number per pulse at the end of the attenuation chain."""
    pulse_energy = chain.measured_power / chain.repetition_rate
    photon_energy = PLANCK * SPEED_OF_LIGHT / chain.wavelength
    return pulse_energy * math.prod(chain.transmittances) / photon_energy


def generate_probe_grid(alpha_max=2.0, counts=(16, 16), spacing="linear"):
    """Cartesian grid of two-mode coherent probes with amplitudes up to ``alpha_max``.

    Each mode's mean photon numbers run from 0 to ``alpha_max**2``; with
    ``spacing="log"`` the nonzero values are geometrically spaced over two
    decades. The vacuum probe is always included.
    """
    if alpha_max <= 0:
        raise ValueError("alpha_max must be positive")
    mu_max = alpha_max**2

    def axis(k):
        if k < 1:
            raise ValueError("grid sizes must be >= 1")
        if k == 1:
            return np.zeros(1)
        if spacing == "linear":
            return np.linspace(0.0, mu_max, k)
        if spacing == "log":
            return np.concatenate([[0.0], np.geomspace(mu_max / 100, mu_max, k - 1)])
        raise ValueError(f"unknown spacing {spacing!r}")

    mus, mui = axis(counts[0]), axis(counts[1])
    probes = []
    for a in mus:
        for b in mui:
            probes.append(CoherentProbe(len(probes), float(a), float(b)))
    return probes


def sampling_cutoff(mu, tail=1e-12):
    """Photon-number cutoff leaving a Poisson tail mass below ``tail``."""
    from scipy.stats import poisson

    return int(poisson.isf(tail, mu)) + 2 if mu > 0 else 1


@dataclass
class PatternLibrary:
    """Probes and the TMD response (joint pattern frequencies) to each of them.

    ``frequencies[k]`` is the 65536-long response to ``probes[k]``;
    ``events[k]`` is the number of recorded events behind it (0 for exact,
    noise-free responses).
    """

    probes: list
    frequencies: np.ndarray
    events: np.ndarray
    config: tmd.DetectorConfig | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.events = np.asarray(self.events, dtype=np.int64)
        ids = [p.id for p in self.probes]
        if len(set(ids)) != len(ids):
            raise ValueError("probe ids must be unique")
        keys = [(p.mu_signal, p.mu_idler) for p in self.probes]
        if len(set(keys)) != len(keys):
            raise ValueError("library contains duplicate probes")
        if self.frequencies.shape != (len(self.probes), tmd.N_JOINT):
            raise ValueError("need one 65536-pattern response per probe")
        if np.any(self.frequencies < 0):
            raise ValueError("negative pattern frequency")
        if not np.allclose(self.frequencies.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("pattern frequencies must sum to 1")

    def __len__(self):
        return len(self.probes)

    @property
    def ids(self):
        return [p.id for p in self.probes]

    def counts(self):
        return np.rint(self.frequencies * self.events[:, None]).astype(np.int64)

    def subset(self, indices):
        indices = list(indices)
        return PatternLibrary(
            [self.probes[i] for i in indices],
            self.frequencies[indices],
            self.events[indices],
            self.config,
            dict(self.metadata),
        )

    def probe_fock_matrix(self, d):
        return np.array([p.fock(d).ravel() for p in self.probes])

    def probe_singular_values(self, d):
        """Singular values of the M x d^2 probe matrix (linear-independence diagnostic)."""
        return np.linalg.svd(self.probe_fock_matrix(d), compute_uv=False)

    def numerical_rank(self, d, rtol=1e-10):
        s = self.probe_singular_values(d)
        return int(np.sum(s > rtol * s[0])) if s.size else 0


def simulate_library(probes, cfg, n_events=4_200_000, seed=0, exact=False, mu_scale_error=1.0):
    """Generate the pattern library for ``probes`` on a simulated TMD.

    With ``exact=True`` the afterpulse-free response probabilities are used
    directly. ``mu_scale_error`` multiplies every true probe intensity while
    the nominal values stay in the library, modelling a common calibration
    error.
    """
    freqs = np.empty((len(probes), tmd.N_JOINT))
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    seeds = seed.spawn(len(probes))
    for k, p in enumerate(probes):
        mu_s, mu_i = p.mu_signal * mu_scale_error, p.mu_idler * mu_scale_error
        dk = max(sampling_cutoff(mu_s), sampling_cutoff(mu_i))
        P = fock.poisson_product(mu_s, mu_i, dk)
        if exact:
            freqs[k] = tmd.exact_pattern_distribution(P, cfg)
            freqs[k] /= freqs[k].sum()
        else:
            freqs[k] = tmd.sample_patterns(P, cfg, n_events, seeds[k]) / n_events
    events = np.zeros(len(probes), dtype=np.int64) if exact else np.full(len(probes), n_events)
    return PatternLibrary(list(probes), freqs, events, cfg)


def estimate_efficiency(library):
    """Detector efficiency from the no-click frequency of each probe.

    Under the linear model ``-ln f0 = eta * (mu_signal + mu_idler)``; the slope
    is fitted by least squares through the origin. Returns ``(eta, std)``.
    """
    mu = np.array([p.mu_signal + p.mu_idler for p in library.probes])
    f0 = library.frequencies[:, 0]
    usable = mu > 0
    if np.any(usable & (f0 <= 0)):
        warnings.warn("excluding probes with no zero-click events", stacklevel=2)
        usable &= f0 > 0
    if len(np.unique(mu[usable])) < 2:
        raise InsufficientDataError("need at least two probes with distinct nonzero intensity")
    x, y = mu[usable], -np.log(f0[usable])
    sxx = np.dot(x, x)
    eta = np.dot(x, y) / sxx
    resid = y - eta * x
    std = math.sqrt(np.dot(resid, resid) / (len(x) - 1) / sxx)
    return float(eta), std
