"""Heralding the idler on signal-mode click events."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import fock, tmd

SINGLE = "single"
DOUBLE = "double"
KINDS = (SINGLE, DOUBLE)


def herald_masks(kind, cfg):
    """Boolean table over the 256 signal masks: does the herald fire?

    ``single``: exactly one click across all signal gates.
    ``double``: exactly one click on detector A's signal gates and exactly one
    on detector B's; two clicks on the same detector are discarded.
    """
    masks = np.arange(tmd.N_SINGLE)
    if kind == SINGLE:
        return tmd.POPCOUNT[masks] == 1
    if kind == DOUBLE:
        a = cfg.detector_mask(tmd.SIGNAL, tmd.DETECTOR_A)
        b = cfg.detector_mask(tmd.SIGNAL, tmd.DETECTOR_B)
        return (tmd.POPCOUNT[masks & a] == 1) & (tmd.POPCOUNT[masks & b] == 1)
    raise ValueError(f"unknown herald kind {kind!r}")


@dataclass(frozen=True)
class HeraldPovm:
    kind: str
    weights: np.ndarray
    std: np.ndarray | None = None

    @property
    def estimated(self):
        """True when the weights are a Monte Carlo estimate."""
        return self.std is not None


def herald_povm(kind, cfg, d):
    """Diagonal POVM ``E[m]``: herald probability given ``m`` signal photons."""
    if cfg.has_afterpulsing:
        raise tmd.UnsupportedConfigurationError(
            "exact herald POVM needs an afterpulse-free detector; use herald_povm_monte_carlo()"
        )
    A_s, _ = tmd.mode_responses(cfg, d)
    return HeraldPovm(kind, A_s[herald_masks(kind, cfg)].sum(axis=0))


def herald_povm_monte_carlo(kind, cfg, d, n_events=1_000_000, seed=0):
    """Sampled herald POVM (with binomial standard errors) for any detector model."""
    table = herald_masks(kind, cfg)
    E = np.empty(d)
    seeds = np.random.SeedSequence(seed).spawn(d)
    for m in range(d):
        P = np.zeros((d, d))
        P[m, 0] = 1.0
        h = tmd.sample_patterns(P, cfg, n_events, seeds[m])
        sig, _ = tmd.marginalize(h)
        E[m] = sig[table].sum() / n_events
    return HeraldPovm(kind, E, np.sqrt(E * (1 - E) / n_events))


def post_measurement_idler(P, povm):
    """Idler distribution conditioned on the herald: ``sum_m E_m P_mn`` normalized."""
    P = np.asarray(P, dtype=float)
    E = np.asarray(getattr(povm, "weights", povm), dtype=float)
    if E.shape[0] != P.shape[0]:
        raise ValueError("POVM and distribution cutoffs differ")
    unnorm = E @ P
    total = unnorm.sum()
    if total <= 0:
        raise ValueError("herald has zero probability for this state")
    return unnorm / total


def herald_select(h, kind, cfg):
    """Idler pattern histogram of the events whose signal pattern fires the herald.

    Returns ``(idler_histogram, herald_count)``; the histogram has 256 entries.
    """
    H = np.asarray(h).reshape(tmd.N_SINGLE, tmd.N_SINGLE)
    selected = H[herald_masks(kind, cfg)].sum(axis=0)
    return selected, selected.sum()


def simulate_heralding_from_reconstruction(members, kind, cfg, d=None):
    """Heralded idler states computed from each two-mode reconstruction."""
    out = []
    for k, P in enumerate(members):
        P = np.asarray(P, dtype=float)
        povm = herald_povm(kind, cfg, P.shape[0] if d is None else d)
        try:
            out.append(post_measurement_idler(P[: len(povm.weights), : len(povm.weights)], povm))
        except ValueError:
            warnings.warn(f"member {k} has zero herald probability; dropped", stacklevel=2)
    return out


def theory_heralded_idler(mean_n, kind, cfg, d, coupling=(0.75, 1.0), work_cutoff=60):
    """Heralded idler state predicted for a lossy twin-beam source.

    The source is thermal with perfect photon-number correlation; ``coupling``
    gives the transmission of each arm up to the TMD input. The herald POVM is
    evaluated on a large cutoff and the idler truncated to ``d`` afterwards.
    """
    P = fock.apply_loss(fock.pdc_distribution(mean_n, work_cutoff), coupling)
    Pi = post_measurement_idler(P, herald_povm(kind, cfg.without_afterpulsing(), work_cutoff))
    return Pi[:d]
