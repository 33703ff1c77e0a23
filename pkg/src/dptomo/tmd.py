"""Two-mode time-multiplexed click detector (TMD).

Each mode is split into 8 time bins. A single-mode click pattern is an 8-bit
mask, bit ``b`` set meaning a click in bin ``b + 1``; the joint pattern index
is ``signal_mask * 256 + idler_mask``. The 16 gates are read out by two
gated detectors, A and B.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
from scipy.special import comb

BINS = 8
N_SINGLE = 1 << BINS
N_JOINT = N_SINGLE * N_SINGLE
SIGNAL, IDLER = 0, 1
DETECTOR_A, DETECTOR_B = 0, 1

POPCOUNT = np.array([bin(k).count("1") for k in range(N_SINGLE)], dtype=np.int64)


class UnsupportedConfigurationError(ValueError):
    """Raised when an exact computation is requested for an afterpulsing detector."""


def _default_gate_detector():
    # alternate bins between the two detectors: A gets odd bins 1,3,5,7
    return ((0, 1) * 4, (0, 1) * 4)


def _default_gate_time():
    # all signal gates, then all idler gates
    return (tuple(range(BINS)), tuple(range(BINS, 2 * BINS)))


@dataclass(frozen=True)
class DetectorConfig:
    """Parameters of the two-mode TMD.

    ``bin_probabilities[mode][b]`` is the splitting-tree weight of bin ``b``;
    ``gate_detector[mode][b]`` is 0 for detector A and 1 for B;
    ``gate_time[mode][b]`` is the position of that gate in the global readout
    order (a permutation of 0..15).
    Afterpulses fire with probability ``afterpulse_prob * afterpulse_decay**(k - 1)``
    where ``k`` counts gates of the same detector since its most recent click.
    """

    bin_probabilities: tuple = ((1 / BINS,) * BINS, (1 / BINS,) * BINS)
    efficiency: float = 0.22
    dark_count_prob: float = 0.0
    afterpulse_prob: float = 0.03
    afterpulse_decay: float = 0.5
    gate_detector: tuple = field(default_factory=_default_gate_detector)
    gate_time: tuple = field(default_factory=_default_gate_time)

    def __post_init__(self):
        bp = tuple(tuple(float(v) for v in row) for row in self.bin_probabilities)
        object.__setattr__(self, "bin_probabilities", bp)
        object.__setattr__(
            self, "gate_detector", tuple(tuple(int(v) for v in r) for r in self.gate_detector)
        )
        object.__setattr__(
            self, "gate_time", tuple(tuple(int(v) for v in r) for r in self.gate_time)
        )
        if len(bp) != 2 or any(len(row) != BINS for row in bp):
            raise ValueError("bin_probabilities must be two rows of 8 weights")
        for row in bp:
            if min(row) < 0 or abs(sum(row) - 1) > 1e-12:
                raise ValueError(f"bin probabilities {row} must be >= 0 and sum to 1")
        for name in ("efficiency", "dark_count_prob", "afterpulse_prob", "afterpulse_decay"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name}={v} outside [0, 1]")
        det = np.asarray(self.gate_detector)
        if det.shape != (2, BINS) or not np.isin(det, (0, 1)).all():
            raise ValueError("gate_detector must be 2x8 entries of 0 (A) or 1 (B)")
        t = np.asarray(self.gate_time)
        if t.shape != (2, BINS) or sorted(t.ravel()) != list(range(2 * BINS)):
            raise ValueError("gate_time must be a permutation of the 16 gates")

    @property
    def has_afterpulsing(self):
        return self.afterpulse_prob > 0

    def without_afterpulsing(self):
        return self.replace(afterpulse_prob=0.0)

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return DetectorConfig(**d)

    def detector_mask(self, mode, detector):
        """8-bit mask of the bins of ``mode`` read out by ``detector``."""
        return sum(1 << b for b in range(BINS) if self.gate_detector[mode][b] == detector)

    def config_hash(self):
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


def _require_exact(cfg):
    if cfg.has_afterpulsing:
        raise UnsupportedConfigurationError(
            "exact click statistics are afterpulse-free; use sample_patterns() "
            "or cfg.without_afterpulsing()"
        )


def _mobius(g):
    """Invert a subset-sum (zeta) transform along axis 0 over 8-bit masks."""
    g = np.array(g, dtype=float, copy=True)
    masks = np.arange(N_SINGLE)
    for b in range(BINS):
        upper = masks[(masks >> b) & 1 == 1]
        g[upper] -= g[upper ^ (1 << b)]
    return g


def single_mode_response(bin_probabilities, efficiency, dark_count_prob, d):
    """Click-pattern probabilities ``A[mask, k]`` for ``k`` photons in one mode.

    Every photon independently lands in bin ``b`` and is detected with
    probability ``efficiency * bin_probabilities[b]``. The probability that no
    gate outside the set ``T`` clicks is ``(1 - eta + eta * q(T))**k`` times the
    dark-count survival of the gates outside ``T``; the exact-pattern
    probabilities follow by inclusion-exclusion over subsets.
    """
    q = efficiency * np.asarray(bin_probabilities, dtype=float)
    masks = np.arange(N_SINGLE)
    bits = (masks[:, None] >> np.arange(BINS)) & 1
    q_in = bits @ q
    stay_dark = (1.0 - dark_count_prob) ** (BINS - POPCOUNT)
    base = (1.0 - efficiency) + q_in
    g = np.power(base[:, None], np.arange(d)[None, :]) * stay_dark[:, None]
    # cancellation leaves round-off of order 1e-17 around true zeros
    return np.clip(_mobius(g), 0.0, 1.0)


def mode_responses(cfg, d):
    """Signal and idler single-mode response matrices, each ``(256, d)``."""
    _require_exact(cfg)
    return tuple(
        single_mode_response(cfg.bin_probabilities[mode], cfg.efficiency, cfg.dark_count_prob, d)
        for mode in (SIGNAL, IDLER)
    )


def exact_pattern_distribution(P, cfg):
    """Joint click-pattern probabilities (length 65536) for a two-mode input ``P``.

    Without afterpulsing the two modes are read out independently, so
    ``p[alpha, beta] = sum_mn A_s[alpha, m] P[m, n] A_i[beta, n]``.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("expected a square two-mode distribution")
    if np.any(P < 0):
        raise ValueError("distribution has negative entries")
    A_s, A_i = mode_responses(cfg, P.shape[0])
    return (A_s @ P @ A_i.T).ravel()


def build_response_matrix(cfg, d):
    """Measurement matrix ``C[pattern, m*d + n]`` of the afterpulse-free TMD."""
    A_s, A_i = mode_responses(cfg, d)
    # C[(alpha, beta), (m, n)] = A_s[alpha, m] A_i[beta, n]
    C = np.einsum("am,bn->abmn", A_s, A_i)
    return C.reshape(N_JOINT, d * d)


def split_index(joint):
    """Signal and idler masks of joint pattern indices."""
    joint = np.asarray(joint)
    return joint >> BINS, joint & (N_SINGLE - 1)


def joint_index(signal_mask, idler_mask):
    return (np.asarray(signal_mask) << BINS) | np.asarray(idler_mask)


def marginalize(h):
    """Signal (sum over idler) and idler (sum over signal) histograms."""
    H = np.asarray(h).reshape(N_SINGLE, N_SINGLE)
    return H.sum(axis=1), H.sum(axis=0)


def reduce_to_click_classes(h):
    """Sum a 256-pattern single-mode histogram into 9 click-count classes."""
    h = np.asarray(h)
    if h.shape[-1] != N_SINGLE:
        raise ValueError("expected a single-mode histogram over 256 patterns")
    out = np.zeros(h.shape[:-1] + (BINS + 1,), dtype=np.result_type(h, float))
    for k in range(BINS + 1):
        out[..., k] = h[..., POPCOUNT == k].sum(axis=-1)
    return out


def class_sizes():
    return np.array([comb(BINS, k, exact=True) for k in range(BINS + 1)])


def _gate_schedule(cfg):
    """Gates in readout order as (mode, bin, detector) rows."""
    rows = []
    for mode in (SIGNAL, IDLER):
        for b in range(BINS):
            rows.append((cfg.gate_time[mode][b], mode, b, cfg.gate_detector[mode][b]))
    rows.sort()
    return np.array([r[1:] for r in rows], dtype=np.int64)


# The event kernel draws one uniform variate and reuses it across decisions:
# after a branch of width w starting at a is taken, (u - a) / w is again
# uniform and independent of the branch. A fresh draw is taken once the
# accumulated width drops below _MIN_WIDTH, keeping ~22 bits of resolution.
_MIN_WIDTH = 2.0**-30


@numba.njit(cache=True, inline="always")
def _choose(u, width, cdf, inv, row, n):
    """Pick j with cdf[row, j-1] <= u < cdf[row, j]; return (j, recycled u, width).

    ``inv[row, j]`` holds the reciprocal width of branch j.
    """
    j = 0
    while j < n - 1 and u >= cdf[row, j]:
        j += 1
    lo = cdf[row, j - 1] if j > 0 else 0.0
    u = (u - lo) * inv[row, j]
    if u >= 1.0:
        u = 0.9999999999999999
    width *= cdf[row, j] - lo
    if width < _MIN_WIDTH:
        u = np.random.random()
        width = 1.0
    return j, u, width


@numba.njit(cache=True)
def _inverse_widths(cdf):
    w = np.empty_like(cdf)
    w[:, 0] = cdf[:, 0]
    w[:, 1:] = cdf[:, 1:] - cdf[:, :-1]
    out = np.zeros_like(cdf)
    for r in range(cdf.shape[0]):
        for j in range(cdf.shape[1]):
            if w[r, j] > 0:
                out[r, j] = 1.0 / w[r, j]
    return out


@numba.njit(cache=True, inline="always")
def _bernoulli(u, width, p):
    """Return (event fired, recycled u, width) for an event of probability p."""
    if u < p:
        fired = True
        u = u / p
        width *= p
    else:
        fired = False
        u = (u - p) / (1.0 - p)
        width *= 1.0 - p
    if u >= 1.0:
        u = 0.9999999999999999
    if width < _MIN_WIDTH:
        u = np.random.random()
        width = 1.0
    return fired, u, width


@numba.njit(cache=True, inline="always")
def _place_photons(k, u, width, detected_cdf, detected_inv, bin_cdf, bin_inv):
    j, u, width = _choose(u, width, detected_cdf, detected_inv, k, k + 1)
    mk = 0
    for _ in range(j):
        b, u, width = _choose(u, width, bin_cdf, bin_inv, 0, 8)
        mk |= 1 << b
    return mk, u, width


@numba.njit(cache=True)
def _simulate_events(cell_counts, d, detected_cdf, bin_cdf_s, bin_cdf_i, dark, ap_table, schedule, seed):
    detected_inv = _inverse_widths(detected_cdf)
    bin_inv_s = _inverse_widths(bin_cdf_s)
    bin_inv_i = _inverse_widths(bin_cdf_i)
    np.random.seed(seed)
    hist = np.zeros(65536, dtype=np.int64)
    n_gates = schedule.shape[0]
    use_ap = ap_table[1] > 0.0
    u = np.random.random()
    width = 1.0
    for cell in range(cell_counts.shape[0]):
        c = cell_counts[cell]
        if c == 0:
            continue
        m = cell // d
        n = cell % d
        for _ in range(c):
            ms = 0
            mi = 0
            if m > 0:
                ms, u, width = _place_photons(m, u, width, detected_cdf, detected_inv, bin_cdf_s, bin_inv_s)
            if n > 0:
                mi, u, width = _place_photons(n, u, width, detected_cdf, detected_inv, bin_cdf_i, bin_inv_i)
            if dark > 0.0 or (use_ap and (ms | mi) != 0):
                since_a = 0
                since_b = 0
                for g in range(n_gates):
                    mode = schedule[g, 0]
                    bit = 1 << schedule[g, 1]
                    det = schedule[g, 2]
                    since = since_a if det == 0 else since_b
                    if mode == 0:
                        click = (ms & bit) != 0
                    else:
                        click = (mi & bit) != 0
                    if not click and dark > 0.0:
                        click, u, width = _bernoulli(u, width, dark)
                    if not click and since > 0 and use_ap:
                        click, u, width = _bernoulli(u, width, ap_table[since])
                    if click:
                        if mode == 0:
                            ms |= bit
                        else:
                            mi |= bit
                        since = 1
                    elif since > 0:
                        since += 1
                    if det == 0:
                        since_a = since
                    else:
                        since_b = since
            hist[ms * 256 + mi] += 1
    return hist


def _binomial_cdfs(eta, d):
    """Row k: CDF of the number of detected photons out of k."""
    from scipy.stats import binom

    out = np.ones((d, d + 1))
    for k in range(d):
        out[k, : k + 1] = binom.cdf(np.arange(k + 1), k, eta)
        out[k, k] = 1.0
    return out


def sample_patterns(P, cfg, n_events, seed):
    """Monte Carlo joint click histogram (counts, length 65536).

    Photon numbers are drawn from ``P`` (renormalized over its cutoff); each
    photon is detected with the detector efficiency and lands in a bin drawn
    from the splitting weights. Gates are then read out in time order, with
    dark counts and afterpulses that depend on the gate distance to the same
    detector's most recent click. Deterministic for a fixed seed.
    """
    P = np.asarray(P, dtype=float)
    if n_events < 1:
        raise ValueError("need at least one event")
    d = P.shape[0]
    rng = np.random.default_rng(seed)
    flat = np.clip(P.ravel(), 0, None)
    cell_counts = rng.multinomial(int(n_events), flat / flat.sum())
    bin_cdf_s, bin_cdf_i = (np.cumsum(cfg.bin_probabilities[mode])[None, :] for mode in (SIGNAL, IDLER))
    bin_cdf_s[0, -1] = bin_cdf_i[0, -1] = 1.0
    # ap_table[k]: afterpulse probability k gates after the detector's last click
    k = np.arange(2 * BINS + 1)
    ap_table = np.where(k > 0, cfg.afterpulse_prob * cfg.afterpulse_decay ** np.clip(k - 1, 0, None), 0.0)
    inner_seed = int(rng.integers(0, 2**31 - 1))
    return _simulate_events(
        cell_counts.astype(np.int64),
        d,
        _binomial_cdfs(cfg.efficiency, d),
        bin_cdf_s,
        bin_cdf_i,
        float(cfg.dark_count_prob),
        ap_table,
        _gate_schedule(cfg),
        inner_seed,
    )
