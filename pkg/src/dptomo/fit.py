"""Data-pattern tomography: fit click data as a signed mixture of probe patterns.

The unknown photon statistics are written as ``P = sum_k x_k P_k`` over the
probe states, and the weights ``x`` are chosen to minimise
``|f - sum_k x_k f_k|^2`` subject to ``P >= 0`` and ``sum(P) = 1``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import fock, herald, tmd
from .probes import InsufficientDataError

log = logging.getLogger(__name__)

VIEWS = (
    "joint",
    "marginal-signal",
    "marginal-idler",
    "class-signal",
    "class-idler",
    "heralded-single",
    "heralded-double",
)


class InfeasibleProblemError(ValueError):
    pass


def _fock_mode(view):
    """Which probe factor the view reconstructs: 'joint', 'signal' or 'idler'."""
    if view == "joint":
        return "joint"
    if view.endswith("signal"):
        return "signal"
    return "idler"


def reduce_view(h, view, cfg=None):
    """Apply a view's reduction to joint histograms ``h`` (..., 65536).

    Returns the reduced (unnormalized) histograms; for heralded views the
    second value is the herald count per histogram, otherwise the total.
    """
    h = np.asarray(h, dtype=float)
    total = h.sum(axis=-1)
    if view == "joint":
        return h, total
    H = h.reshape(h.shape[:-1] + (tmd.N_SINGLE, tmd.N_SINGLE))
    if view in ("marginal-signal", "class-signal"):
        out = H.sum(axis=-1)
    elif view in ("marginal-idler", "class-idler"):
        out = H.sum(axis=-2)
    elif view.startswith("heralded-"):
        if cfg is None:
            raise ValueError("heralded views need the detector configuration")
        kind = view.split("-", 1)[1]
        out = H[..., herald.herald_masks(kind, cfg), :].sum(axis=-2)
        return out, out.sum(axis=-1)
    else:
        raise ValueError(f"unknown view {view!r}; expected one of {VIEWS}")
    if view.startswith("class-"):
        out = tmd.reduce_to_click_classes(out)
    return out, total


def view_probe_fock(probe, view, d):
    """Probe photon statistics in the view's Fock space, renormalized on the cutoff."""
    mode = _fock_mode(view)
    if mode == "joint":
        return probe.fock(d).ravel()
    mu = probe.mu_signal if mode == "signal" else probe.mu_idler
    return fock.normalized(fock.poisson(mu, d))


@dataclass
class FitProblem:
    data: np.ndarray
    patterns: np.ndarray
    probe_fock: np.ndarray
    d: int
    view: str = "joint"
    probe_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        self.patterns = np.atleast_2d(np.asarray(self.patterns, dtype=float))
        self.probe_fock = np.atleast_2d(np.asarray(self.probe_fock, dtype=float))
        if self.patterns.shape[1] != self.data.shape[0]:
            raise ValueError("patterns and data have different lengths")
        if self.patterns.shape[0] != self.probe_fock.shape[0]:
            raise ValueError("need one Fock vector per pattern")
        if not self.probe_ids:
            self.probe_ids = list(range(self.patterns.shape[0]))

    @property
    def n_probes(self):
        return self.patterns.shape[0]

    @property
    def reconstruction_shape(self):
        return (self.d, self.d) if self.probe_fock.shape[1] == self.d * self.d else (self.d,)

    def subset(self, indices):
        indices = list(indices)
        return FitProblem(
            self.data,
            self.patterns[indices],
            self.probe_fock[indices],
            self.d,
            self.view,
            [self.probe_ids[i] for i in indices],
        )

    def pattern_singular_values(self):
        return np.linalg.svd(self.patterns, compute_uv=False)


def default_cutoff(view):
    return 8 if view == "joint" else 12


def assemble(library, data, view="joint", d=None, cfg=None):
    """Reduce data and probe patterns identically and pair them with probe Fock vectors.

    ``data`` is a joint histogram (counts or frequencies). For heralded views
    the probes go through the same signal-click selection as the data;
    probes that can never fire the herald are left out.
    """
    if len(library) == 0:
        raise InsufficientDataError("empty pattern library")
    if view not in VIEWS:
        raise ValueError(f"unknown view {view!r}; expected one of {VIEWS}")
    cfg = cfg or library.config
    d = d or default_cutoff(view)
    f, n_data = reduce_view(data, view, cfg)
    if n_data <= 0:
        raise InsufficientDataError(f"no data events qualify for view {view!r}")
    f = f / n_data
    F, n_pat = reduce_view(library.frequencies, view, cfg)
    keep = n_pat > 0
    if not keep.any():
        raise InsufficientDataError("no probe response qualifies for this view")
    F = F[keep] / n_pat[keep, None]
    probes = [p for p, k in zip(library.probes, keep) if k]
    G = np.array([view_probe_fock(p, view, d) for p in probes])
    return FitProblem(f, F, G, d, view, [p.id for p in probes])


@dataclass
class FitResult:
    weights: np.ndarray
    P: np.ndarray
    residual: float
    converged: bool
    iterations: int
    kkt_residual: float
    objective_trace: list
    view: str = "joint"
    probe_ids: list = field(default_factory=list)

    @property
    def d(self):
        return self.P.shape[0]


def _independent_rows(rows, tol=1e-10):
    """Greedy selection of linearly independent rows (indices)."""
    chosen = []
    basis = np.zeros((0, rows.shape[1]))
    for j, r in enumerate(rows):
        resid = r - basis.T @ (basis @ r) if len(basis) else r
        nr = np.linalg.norm(resid)
        if nr > tol * max(np.linalg.norm(r), 1e-300):
            basis = np.vstack([basis, resid / nr])
            chosen.append(j)
    return chosen


def solve(problem, tolerance=1e-8, max_iterations=None, rcond=1e-12):
    """Solve the constrained least-squares fit with a primal active-set method.

    Starts from the uniform probe mixture (always feasible) and moves along
    Newton directions of the equality-constrained subproblem, adding blocking
    positivity constraints and releasing constraints with negative
    multipliers. ``kkt_residual`` on the result combines relative stationarity,
    dual feasibility and primal feasibility.

    ``rcond`` truncates the step solve to the numerically determined part of
    the pattern matrix; directions below it only fit round-off and let the
    weights grow without bound.
    """
    if problem.n_probes == 0:
        raise InfeasibleProblemError("no probes")
    A = problem.patterns.T
    b = problem.data
    rows = (b != 0) | (A != 0).any(axis=1)
    A, b = A[rows], b[rows]
    # objective is invariant under common rescaling of data and patterns
    scale = np.linalg.norm(A, axis=0).max()
    if scale == 0:
        raise InfeasibleProblemError("all patterns vanish")
    A, b = A / scale, b / scale
    Q, R = np.linalg.qr(A, mode="reduced")
    c = Q.T @ b
    const = max(b @ b - c @ c, 0.0)
    G = problem.probe_fock.T
    M = problem.n_probes
    ones = np.ones(M)
    grad_scale = max(np.linalg.norm(R.T @ c), np.finfo(float).tiny)
    if max_iterations is None:
        max_iterations = 50 * (M + G.shape[0])

    def objective(x):
        r = R @ x - c
        return 0.5 * (r @ r + const)

    x = ones / M
    Gx = G @ x
    tight = np.flatnonzero(Gx <= 1e-14)
    # row 0 of the stack is the normalization constraint
    independent = _independent_rows(np.vstack([ones, G[tight]]))
    active = [int(tight[j - 1]) for j in independent if j > 0]
    trace = [objective(x)]
    converged = False
    it = 0
    # constraints whose release was immediately undone by a zero-length step;
    # they stay in the working set until the iterate moves again
    locked = set()
    released = set()
    lam_tol = 0.1 * tolerance * grad_scale
    for it in range(1, max_iterations + 1):
        C = np.vstack([ones, G[active]]) if active else ones[None, :]
        Z = scipy.linalg.null_space(C)
        grad = R.T @ (R @ x - c)
        p = np.zeros(M)
        if Z.shape[1]:
            reduced_grad = Z.T @ grad
            if np.linalg.norm(reduced_grad) > 1e-13 * grad_scale:
                z = np.linalg.lstsq(R @ Z, -(R @ x - c), rcond=rcond)[0]
                p = Z @ z
                if objective(x + p) >= objective(x) - 1e-16 * max(trace[-1], 1e-300):
                    p[:] = 0.0
        if not p.any():
            lam = np.linalg.lstsq(C.T, grad, rcond=None)[0][1:]
            candidates = [k for k in np.argsort(lam) if lam[k] < -lam_tol and active[k] not in locked]
            if not candidates:
                # a locked constraint with a negative multiplier is a stall; the
                # final KKT check decides whether the point is good enough
                converged = True
                break
            dropped = active.pop(int(candidates[0]))
            released.add(dropped)
            log.debug("iter %d: release constraint %d", it, dropped)
            trace.append(trace[-1])
            continue
        Gp = G @ p
        Gx = G @ x
        inactive = np.ones(G.shape[0], dtype=bool)
        inactive[active] = False
        blocking = inactive & (Gp < -1e-15 * np.abs(Gp).max())
        alpha, hit = 1.0, None
        if blocking.any():
            idx = np.flatnonzero(blocking)
            ratios = np.clip(Gx[idx], 0, None) / -Gp[idx]
            k = int(np.argmin(ratios))
            if ratios[k] < 1.0:
                alpha, hit = ratios[k], int(idx[k])
        if alpha > 0.0:
            locked.clear()
            released.clear()
        elif hit in released:
            locked.add(hit)
        x = x + alpha * p
        if hit is not None:
            active.append(hit)
            log.debug("iter %d: step %.3g blocked by constraint %d", it, alpha, hit)
        trace.append(objective(x))

    # null-space steps drift off the working set by round-off; pull back
    C = np.vstack([ones, G[active]]) if active else ones[None, :]
    target = np.zeros(C.shape[0])
    target[0] = 1.0
    pulled = x - np.linalg.lstsq(C, C @ x - target, rcond=None)[0]
    # the pull-back can perturb ill-conditioned multipliers; keep the better point
    kkt = _kkt_residual(x, R, c, G, active, grad_scale)
    kkt_pulled = _kkt_residual(pulled, R, c, G, active, grad_scale)
    if kkt_pulled <= kkt:
        x, kkt = pulled, kkt_pulled
    converged = converged and kkt <= tolerance
    if not converged:
        warnings.warn(f"active-set solver stopped after {it} iterations, kkt {kkt:.3g}", stacklevel=2)
    P = G @ x
    # P = G x cancels large signed weights; its round-off grows with sum |G||x|
    floor = max(1e-12, 64 * np.finfo(float).eps * (np.abs(G) @ np.abs(x)).max())
    if P.min() < -floor:
        warnings.warn(f"reconstruction has negative entries down to {P.min():.3g}", stacklevel=2)
        converged = False
    P = np.clip(P, 0, None)
    P = P / P.sum()
    full_resid = problem.patterns.T @ x - problem.data
    return FitResult(
        weights=x,
        P=P.reshape(problem.reconstruction_shape),
        residual=float(full_resid @ full_resid),
        converged=converged,
        iterations=it,
        kkt_residual=kkt,
        objective_trace=trace,
        view=problem.view,
        probe_ids=list(problem.probe_ids),
    )


def _kkt_residual(x, R, c, G, active, grad_scale):
    M = x.shape[0]
    grad = R.T @ (R @ x - c)
    C = np.vstack([np.ones(M), G[active]]) if active else np.ones((1, M))
    mult = np.linalg.lstsq(C.T, grad, rcond=None)[0]
    stationarity = np.linalg.norm(grad - C.T @ mult) / grad_scale
    dual = max(0.0, -mult[1:].min()) / grad_scale if len(active) else 0.0
    Gx = G @ x
    primal = max(0.0, -Gx.min(), abs(Gx.sum() - 1.0))
    return float(max(stationarity, dual, primal))


def cross_validate(library, holdout_fraction=0.2, repetitions=10, view="joint", d=None, seed=0, cfg=None):
    """Reconstruct held-out probes from the remaining ones.

    Each repetition holds out a random fraction of the probes, fits every
    held-out probe's own response with the retained patterns and compares the
    result with the probe's known photon statistics. Returns a summary dict
    with the per-repetition means and their mean and standard deviation.
    """
    if not 0 < holdout_fraction < 1:
        raise ValueError("holdout_fraction must lie in (0, 1)")
    n = len(library)
    n_out = max(1, int(round(holdout_fraction * n)))
    if n - n_out < 2:
        raise ValueError("holdout leaves fewer than two probes")
    cfg = cfg or library.config
    rng = np.random.default_rng(seed)
    fids, errs = [], []
    for _ in range(repetitions):
        perm = rng.permutation(n)
        out, kept = perm[:n_out], np.sort(perm[n_out:])
        kept_lib = library.subset(kept)
        rep_fid, rep_err = [], []
        for j in out:
            try:
                prob = assemble(kept_lib, library.frequencies[j], view, d, cfg)
            except InsufficientDataError:
                continue
            res = solve(prob)
            truth = view_probe_fock(library.probes[j], view, d).reshape(res.P.shape)
            rep_fid.append(fock.fidelity(res.P, truth))
            rep_err.append(np.abs(res.P - truth).max())
        if rep_fid:
            fids.append(np.mean(rep_fid))
            errs.append(np.mean(rep_err))
    fids, errs = np.array(fids), np.array(errs)
    return {
        "fidelity_mean": float(fids.mean()),
        "fidelity_std": float(fids.std()),
        "max_error_mean": float(errs.mean()),
        "max_error_std": float(errs.std()),
        "repetitions": len(fids),
    }
